//! Unified code property graph: AST, control-flow, data/control dependence
//! and call layers over one node set, plus canonical hashing for corpus
//! dedup and a JSON interop format.

mod build;
mod callgraph;
mod hash;
mod json;

pub use build::build_cpg;
pub use callgraph::{build_call_graph, CallGraph};
pub use hash::{canonical_hash, corpus_digests, corpus_digests_seq, dedup};
pub use json::{export_cpg, import_external_cpg, SchemaError};

use std::collections::BTreeMap;

/// CPG node kinds. External imports with unrecognized kinds map to `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Method,
    MethodParameter,
    MethodReturn,
    Call,
    Identifier,
    Literal,
    ControlStructure,
    TypeDecl,
    Local,
    Global,
    Block,
    Return,
    Operator,
    Unknown,
}

impl NodeKind {
    pub const ALL: [NodeKind; 14] = [
        NodeKind::Method,
        NodeKind::MethodParameter,
        NodeKind::MethodReturn,
        NodeKind::Call,
        NodeKind::Identifier,
        NodeKind::Literal,
        NodeKind::ControlStructure,
        NodeKind::TypeDecl,
        NodeKind::Local,
        NodeKind::Global,
        NodeKind::Block,
        NodeKind::Return,
        NodeKind::Operator,
        NodeKind::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Method => "METHOD",
            NodeKind::MethodParameter => "METHOD_PARAMETER",
            NodeKind::MethodReturn => "METHOD_RETURN",
            NodeKind::Call => "CALL",
            NodeKind::Identifier => "IDENTIFIER",
            NodeKind::Literal => "LITERAL",
            NodeKind::ControlStructure => "CONTROL_STRUCTURE",
            NodeKind::TypeDecl => "TYPE_DECL",
            NodeKind::Local => "LOCAL",
            NodeKind::Global => "GLOBAL",
            NodeKind::Block => "BLOCK",
            NodeKind::Return => "RETURN",
            NodeKind::Operator => "OPERATOR",
            NodeKind::Unknown => "UNKNOWN",
        }
    }

    /// Index into the fixed kind enumeration (one-hot feature position).
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    /// Parse a kind string; anything unrecognized becomes `Unknown`.
    pub fn parse_lossy(s: &str) -> NodeKind {
        Self::ALL.iter().copied().find(|k| k.as_str() == s).unwrap_or(NodeKind::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Ast,
    Cfg,
    Ddg,
    Cdg,
    Call,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 5] =
        [EdgeKind::Ast, EdgeKind::Cfg, EdgeKind::Ddg, EdgeKind::Cdg, EdgeKind::Call];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Ast => "AST",
            EdgeKind::Cfg => "CFG",
            EdgeKind::Ddg => "DDG",
            EdgeKind::Cdg => "CDG",
            EdgeKind::Call => "CALL",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|k| *k == self).unwrap()
    }

    pub fn parse(s: &str) -> Option<EdgeKind> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

/// One CPG node. `line` may be absent (filled later by the line-assignment
/// cascade); `type_full_name` carries the declared datatype text when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpgNode {
    pub id: usize,
    pub kind: NodeKind,
    pub code: String,
    pub line: Option<u32>,
    pub type_full_name: Option<String>,
    pub name: Option<String>,
    pub enclosing_method: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpgEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// The unified graph. Pipeline-built graphs have `id == position` in `nodes`;
/// imported graphs may not, so algorithms index through [`Cpg::id_index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpg {
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
    /// Defined method name -> METHOD node id.
    pub methods: BTreeMap<String, usize>,
    pub source_path: String,
}

impl Cpg {
    /// Map from node id to position in `nodes`.
    pub fn id_index(&self) -> BTreeMap<usize, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    pub fn node_by_id(&self, id: usize) -> Option<&CpgNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Name of the method enclosing a node, if any.
    pub fn method_name_of(&self, node: &CpgNode) -> Option<&str> {
        let mid = node.enclosing_method?;
        self.node_by_id(mid).and_then(|m| m.name.as_deref())
    }
}
