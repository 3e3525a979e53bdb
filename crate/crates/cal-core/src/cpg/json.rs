use super::{Cpg, CpgEdge, CpgNode, EdgeKind, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// CPG export document, version 1. Field order is fixed, so exports are
/// byte-identical across runs. Third-party exports conforming to the same
/// schema import losslessly; unknown node kinds map to UNKNOWN.
#[derive(Debug, Serialize, Deserialize)]
struct CpgDoc {
    version: u32,
    source_path: String,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: u64,
    kind: String,
    code: String,
    line: Option<u32>,
    type_full_name: Option<String>,
    name: Option<String>,
    method: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    src: u64,
    dst: u64,
    kind: String,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema error in {field}: {message}")]
    Invalid { field: String, message: String },
}

impl SchemaError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError::Invalid { field: field.into(), message: message.into() }
    }
}

/// Serialize a graph to the CPG JSON format. Deterministic bytes.
pub fn export_cpg(cpg: &Cpg) -> String {
    let doc = CpgDoc {
        version: 1,
        source_path: cpg.source_path.clone(),
        nodes: cpg
            .nodes
            .iter()
            .map(|n| NodeDoc {
                id: n.id as u64,
                kind: n.kind.as_str().to_string(),
                code: n.code.clone(),
                line: n.line,
                type_full_name: n.type_full_name.clone(),
                name: n.name.clone(),
                method: n.enclosing_method.map(|m| m as u64),
            })
            .collect(),
        edges: cpg
            .edges
            .iter()
            .map(|e| EdgeDoc {
                src: e.src as u64,
                dst: e.dst as u64,
                kind: e.kind.as_str().to_string(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("cpg serialization cannot fail")
}

/// Parse a CPG JSON document. Unknown node kinds become UNKNOWN; dangling
/// node references are schema errors naming the offending field.
pub fn import_external_cpg(document: &str) -> Result<Cpg, SchemaError> {
    let doc: CpgDoc = serde_json::from_str(document)
        .map_err(|e| SchemaError::new("document", e.to_string()))?;
    if doc.version != 1 {
        return Err(SchemaError::new("version", format!("unsupported version {}", doc.version)));
    }
    let ids: BTreeSet<u64> = doc.nodes.iter().map(|n| n.id).collect();
    if ids.len() != doc.nodes.len() {
        return Err(SchemaError::new("nodes.id", "duplicate node ids"));
    }
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.iter().enumerate() {
        if let Some(m) = n.method {
            if !ids.contains(&m) {
                return Err(SchemaError::new(
                    format!("nodes[{i}].method"),
                    format!("references nonexistent node {m}"),
                ));
            }
        }
        nodes.push(CpgNode {
            id: n.id as usize,
            kind: NodeKind::parse_lossy(&n.kind),
            code: n.code.clone(),
            line: n.line,
            type_full_name: n.type_full_name.clone(),
            name: n.name.clone(),
            enclosing_method: n.method.map(|m| m as usize),
        });
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.iter().enumerate() {
        let kind = EdgeKind::parse(&e.kind).ok_or_else(|| {
            SchemaError::new(format!("edges[{i}].kind"), format!("unknown edge kind {:?}", e.kind))
        })?;
        for (field, v) in [("src", e.src), ("dst", e.dst)] {
            if !ids.contains(&v) {
                return Err(SchemaError::new(
                    format!("edges[{i}].{field}"),
                    format!("references nonexistent node {v}"),
                ));
            }
        }
        edges.push(CpgEdge { src: e.src as usize, dst: e.dst as usize, kind });
    }
    let mut methods = BTreeMap::new();
    for n in &nodes {
        if n.kind == NodeKind::Method {
            if let Some(name) = &n.name {
                methods.entry(name.clone()).or_insert(n.id);
            }
        }
    }
    Ok(Cpg { nodes, edges, methods, source_path: doc.source_path })
}
