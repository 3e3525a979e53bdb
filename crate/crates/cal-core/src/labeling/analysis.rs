//! Seed discovery, snowballing and global-variable taint over a CPG and its
//! call graph, composed into the `label` oracle.

use super::{CryptoProfile, LabelSet};
use crate::cpg::{CallGraph, Cpg, CpgNode, EdgeKind, NodeKind};
use std::collections::{BTreeMap, BTreeSet};

/// A sink call: the enclosing function and the CALL node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CryptoSeed {
    pub function: String,
    pub call_node: usize,
}

/// Functions calling a crypto sink (exclusions filtered) form the initial
/// sensitive set.
pub fn find_crypto_seeds(
    cpg: &Cpg,
    _call_graph: &CallGraph,
    profile: &CryptoProfile,
) -> Vec<CryptoSeed> {
    let mut seeds = Vec::new();
    for node in cpg.nodes.iter().filter(|n| n.kind == NodeKind::Call) {
        let Some(callee) = node.name.as_deref() else { continue };
        if !profile.is_sink(callee) {
            continue;
        }
        let Some(function) = cpg.method_name_of(node) else { continue };
        seeds.push(CryptoSeed { function: function.to_string(), call_node: node.id });
    }
    seeds
}

/// Per-call-site facts needed by the snowballing rules.
struct CallSiteInfo {
    caller: String,
    callee: String,
    /// Any argument carries variable data (an identifier).
    passes_data: bool,
    /// Some argument identifier is reached by a dataflow edge, or names a
    /// global: the caller's own data flows into the call.
    caller_data_flows_in: bool,
}

struct Analysis {
    calls: Vec<CallSiteInfo>,
    globals: BTreeSet<String>,
    /// function -> global names it reads or writes (shadowing respected)
    global_accesses: BTreeMap<String, BTreeSet<String>>,
    /// function -> global names it writes
    global_writes: BTreeMap<String, BTreeSet<String>>,
    /// globals passed as arguments to seed sink calls
    globals_into_sinks: BTreeSet<String>,
}

impl Analysis {
    fn new(cpg: &Cpg, profile: &CryptoProfile) -> Analysis {
        let index = cpg.id_index();
        // AST children per node, in edge insertion order
        let mut ast_children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut ddg_targets: BTreeSet<usize> = BTreeSet::new();
        for e in &cpg.edges {
            match e.kind {
                EdgeKind::Ast => ast_children.entry(e.src).or_default().push(e.dst),
                EdgeKind::Ddg => {
                    ddg_targets.insert(e.dst);
                }
                _ => {}
            }
        }
        let globals: BTreeSet<String> = cpg
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Global)
            .filter_map(|n| n.name.clone())
            .collect();

        let subtree = |root: usize| -> Vec<&CpgNode> {
            let mut out = Vec::new();
            let mut stack = vec![root];
            while let Some(id) = stack.pop() {
                if let Some(&pos) = index.get(&id) {
                    out.push(&cpg.nodes[pos]);
                }
                stack.extend(ast_children.get(&id).into_iter().flatten().copied());
            }
            out
        };

        let mut calls = Vec::new();
        let mut globals_into_sinks = BTreeSet::new();
        for node in cpg.nodes.iter().filter(|n| n.kind == NodeKind::Call) {
            let (Some(callee), Some(caller)) =
                (node.name.clone(), cpg.method_name_of(node).map(str::to_owned))
            else {
                continue;
            };
            let idents: Vec<&CpgNode> = subtree(node.id)
                .into_iter()
                .filter(|n| n.kind == NodeKind::Identifier && n.id != node.id)
                .collect();
            let passes_data = !idents.is_empty();
            let caller_data_flows_in = idents.iter().any(|n| {
                ddg_targets.contains(&n.id)
                    || n.name.as_deref().map_or(false, |name| globals.contains(name))
            });
            if profile.is_sink(&callee) {
                for n in &idents {
                    if let Some(name) = n.name.as_deref() {
                        if globals.contains(name) {
                            globals_into_sinks.insert(name.to_string());
                        }
                    }
                }
            }
            calls.push(CallSiteInfo { caller, callee, passes_data, caller_data_flows_in });
        }

        // per-function global accesses and writes, respecting shadowing
        let mut global_accesses: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut global_writes: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for name in cpg.methods.keys() {
            global_accesses.insert(name.clone(), BTreeSet::new());
            global_writes.insert(name.clone(), BTreeSet::new());
        }
        let mut shadowed: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for n in &cpg.nodes {
            if matches!(n.kind, NodeKind::Local | NodeKind::MethodParameter) {
                if let (Some(m), Some(v)) = (cpg.method_name_of(n), n.name.as_deref()) {
                    shadowed.entry(m.to_string()).or_default().insert(v.to_string());
                }
            }
        }
        let first_ident_of = |id: usize| -> Option<&CpgNode> {
            // descend first AST children to the written identifier
            let mut cur = id;
            loop {
                let children = ast_children.get(&cur)?;
                let &first = children.first()?;
                let pos = *index.get(&first)?;
                let n = &cpg.nodes[pos];
                if n.kind == NodeKind::Identifier {
                    return Some(n);
                }
                cur = first;
            }
        };
        for n in &cpg.nodes {
            let Some(method) = cpg.method_name_of(n).map(str::to_owned) else { continue };
            let shadow = shadowed.get(&method);
            let is_shadowed =
                |v: &str| shadow.map_or(false, |s| s.contains(v));
            if n.kind == NodeKind::Identifier {
                if let Some(v) = n.name.as_deref() {
                    if globals.contains(v) && !is_shadowed(v) {
                        global_accesses.get_mut(&method).unwrap().insert(v.to_string());
                    }
                }
            }
            if n.kind == NodeKind::Operator && n.name.as_deref().map_or(false, |o| o.contains('=') && !matches!(o, "==" | "!=" | "<=" | ">=")) {
                if let Some(target) = first_ident_of(n.id) {
                    if let Some(v) = target.name.as_deref() {
                        if globals.contains(v) && !is_shadowed(v) {
                            global_writes.get_mut(&method).unwrap().insert(v.to_string());
                            global_accesses.get_mut(&method).unwrap().insert(v.to_string());
                        }
                    }
                }
            }
        }

        Analysis { calls, globals, global_accesses, global_writes, globals_into_sinks }
    }
}

/// Expand the seed set to a fixpoint.
///
/// Backward: a locally defined callee of a sensitive function becomes
/// sensitive when the call passes variable data and the callee is not on the
/// exclusion list. Forward: a caller of a sensitive function becomes
/// sensitive when dataflow inside the caller reaches the call's arguments
/// (or an argument is a global). Monotone over a finite lattice, so this
/// terminates.
pub fn snowball(
    call_graph: &CallGraph,
    cpg: &Cpg,
    seeds: &BTreeSet<String>,
    profile: &CryptoProfile,
) -> BTreeSet<String> {
    let analysis = Analysis::new(cpg, profile);
    snowball_with(&analysis, call_graph, seeds, profile)
}

fn snowball_with(
    analysis: &Analysis,
    call_graph: &CallGraph,
    seeds: &BTreeSet<String>,
    profile: &CryptoProfile,
) -> BTreeSet<String> {
    let defined: BTreeSet<&String> = call_graph.adjacency.keys().collect();
    let mut sensitive = seeds.clone();
    loop {
        let mut grew = false;
        for call in &analysis.calls {
            if !defined.contains(&call.callee) {
                continue;
            }
            // backward: sensitive caller marks data-receiving callees
            if sensitive.contains(&call.caller)
                && !sensitive.contains(&call.callee)
                && call.passes_data
                && !profile.is_excluded(&call.callee)
            {
                sensitive.insert(call.callee.clone());
                grew = true;
            }
            // forward: callers feeding data into sensitive callees
            if sensitive.contains(&call.callee)
                && !sensitive.contains(&call.caller)
                && call.caller_data_flows_in
            {
                sensitive.insert(call.caller.clone());
                grew = true;
            }
        }
        if !grew {
            return sensitive;
        }
    }
}

/// Taint globals written by sensitive functions (or passed into sinks) and
/// mark every function touching a tainted global. Iterates together with
/// snowballing to a joint fixpoint.
pub fn global_var_taint(
    cpg: &Cpg,
    sensitive: &BTreeSet<String>,
    profile: &CryptoProfile,
) -> BTreeSet<String> {
    let analysis = Analysis::new(cpg, profile);
    global_taint_with(&analysis, sensitive)
}

fn global_taint_with(analysis: &Analysis, sensitive: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = sensitive.clone();
    if analysis.globals.is_empty() {
        return out;
    }
    loop {
        let mut tainted: BTreeSet<String> = analysis.globals_into_sinks.clone();
        for (f, writes) in &analysis.global_writes {
            if out.contains(f) {
                tainted.extend(writes.iter().cloned());
            }
        }
        let mut grew = false;
        for (f, accesses) in &analysis.global_accesses {
            if !out.contains(f) && accesses.iter().any(|g| tainted.contains(g)) {
                out.insert(f.clone());
                grew = true;
            }
        }
        if !grew {
            return out;
        }
    }
}

/// Full labeling: seeds, snowballing and global taint to a joint fixpoint,
/// expanded to nodes and lines. Graphs with no seeds (or no remaining benign
/// function) are flagged ineligible.
pub fn label(cpg: &Cpg, profile: &CryptoProfile) -> LabelSet {
    let call_graph = crate::cpg::build_call_graph(cpg);
    let analysis = Analysis::new(cpg, profile);
    let seeds: BTreeSet<String> =
        find_crypto_seeds(cpg, &call_graph, profile).into_iter().map(|s| s.function).collect();
    if seeds.is_empty() {
        return LabelSet { ineligible: true, ..LabelSet::default() };
    }
    let mut sensitive = seeds;
    loop {
        let after_snowball = snowball_with(&analysis, &call_graph, &sensitive, profile);
        let after_taint = global_taint_with(&analysis, &after_snowball);
        if after_taint == sensitive {
            break;
        }
        sensitive = after_taint;
    }

    let mut set = LabelSet {
        ineligible: sensitive.len() == cpg.methods.len(),
        sensitive_functions: sensitive,
        ..LabelSet::default()
    };
    set.sensitive_nodes = set.nodes_for(cpg);
    let mut lines = BTreeSet::new();
    for n in &cpg.nodes {
        if set.sensitive_nodes.contains(&n.id) {
            if let Some(l) = n.line {
                lines.insert(l);
            }
        }
    }
    if !lines.is_empty() {
        set.sensitive_lines.insert(cpg.source_path.clone(), lines);
    }
    set
}
