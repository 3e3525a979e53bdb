use super::{Cpg, NodeKind};
use std::collections::{BTreeMap, BTreeSet};

/// Method-level call structure. Keys are exactly the defined methods of the
/// graph; callees without a local definition land in `external_callees`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    pub adjacency: BTreeMap<String, BTreeSet<String>>,
    pub external_callees: BTreeMap<String, BTreeSet<String>>,
}

impl CallGraph {
    /// Methods that call `callee` locally.
    pub fn callers_of<'a>(&'a self, callee: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.adjacency
            .iter()
            .filter(move |(_, cs)| cs.contains(callee))
            .map(|(c, _)| c.as_str())
    }
}

pub fn build_call_graph(cpg: &Cpg) -> CallGraph {
    let mut cg = CallGraph::default();
    for name in cpg.methods.keys() {
        cg.adjacency.insert(name.clone(), BTreeSet::new());
        cg.external_callees.insert(name.clone(), BTreeSet::new());
    }
    for node in cpg.nodes.iter().filter(|n| n.kind == NodeKind::Call) {
        let Some(callee) = node.name.clone() else { continue };
        let Some(caller) = cpg.method_name_of(node).map(str::to_owned) else { continue };
        if cpg.methods.contains_key(&callee) {
            cg.adjacency.get_mut(&caller).unwrap().insert(callee);
        } else {
            cg.external_callees.get_mut(&caller).unwrap().insert(callee);
        }
    }
    cg
}
