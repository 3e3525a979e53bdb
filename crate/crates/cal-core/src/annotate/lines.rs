//! Line-number completion, a three-stage cascade per node: keep the line it
//! has; for method-affiliated kinds copy the enclosing METHOD's line; else a
//! breadth-first search over both edge directions finds the hop-nearest node
//! that has a line (smaller line wins a distance tie).

use super::AnnotateError;
use crate::cpg::{Cpg, NodeKind};
use std::collections::{BTreeMap, VecDeque};

pub fn assign_line_numbers(cpg: &Cpg) -> Result<Cpg, AnnotateError> {
    let mut out = cpg.clone();
    let index = cpg.id_index();
    let n = cpg.nodes.len();

    // undirected adjacency over all edge kinds, by position
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for e in &cpg.edges {
        let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) else { continue };
        if s != d {
            adj[s].push(d as u32);
            adj[d].push(s as u32);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    // stage 2: method-affiliated nodes inherit the enclosing METHOD's line
    let method_line: BTreeMap<usize, u32> = cpg
        .nodes
        .iter()
        .filter(|m| m.kind == NodeKind::Method)
        .filter_map(|m| m.line.map(|l| (m.id, l)))
        .collect();
    for pos in 0..n {
        let node = &out.nodes[pos];
        if node.line.is_some() {
            continue;
        }
        let affiliated = matches!(
            node.kind,
            NodeKind::MethodParameter | NodeKind::MethodReturn | NodeKind::Local
        );
        if !affiliated {
            continue;
        }
        let line = match node.enclosing_method.and_then(|m| method_line.get(&m)) {
            Some(&l) => Some(l),
            // no recorded enclosing method: search for the nearest METHOD
            None => nearest_line(&adj, pos, |p| {
                (cpg.nodes[p].kind == NodeKind::Method).then_some(cpg.nodes[p].line).flatten()
            }),
        };
        if let Some(l) = line {
            out.nodes[pos].line = Some(l);
        }
    }

    // stage 3: proximity over all edges, from a frozen snapshot of stage-2
    // results so assignment order cannot matter
    let snapshot: Vec<Option<u32>> = out.nodes.iter().map(|nd| nd.line).collect();
    for pos in 0..n {
        if out.nodes[pos].line.is_some() {
            continue;
        }
        match nearest_line(&adj, pos, |p| snapshot[p]) {
            Some(l) => out.nodes[pos].line = Some(l),
            None => return Err(AnnotateError::UnreachableNode { node: out.nodes[pos].id }),
        }
    }
    Ok(out)
}

/// BFS from `start`; among the nodes at the smallest hop distance that carry
/// a line, return the smallest line.
fn nearest_line(
    adj: &[Vec<u32>],
    start: usize,
    line_of: impl Fn(usize) -> Option<u32>,
) -> Option<u32> {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut frontier = vec![start as u32];
    while !frontier.is_empty() {
        let mut best: Option<u32> = None;
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &adj[v as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    if let Some(l) = line_of(w as usize) {
                        best = Some(best.map_or(l, |b| b.min(l)));
                    }
                    next.push(w);
                }
            }
        }
        if best.is_some() {
            return best;
        }
        frontier = next;
    }
    let _ = VecDeque::<u32>::new();
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{build_cpg, CpgEdge, CpgNode, EdgeKind};
    use crate::frontend::{parse, tokenize};
    use std::collections::BTreeMap;

    fn bare_node(id: usize, line: Option<u32>) -> CpgNode {
        CpgNode {
            id,
            kind: NodeKind::Unknown,
            code: format!("n{id}"),
            line,
            type_full_name: None,
            name: None,
            enclosing_method: None,
        }
    }

    fn chain_graph(lines: &[Option<u32>], edges: &[(usize, usize)]) -> Cpg {
        Cpg {
            nodes: lines.iter().enumerate().map(|(i, &l)| bare_node(i, l)).collect(),
            edges: edges
                .iter()
                .map(|&(s, d)| CpgEdge { src: s, dst: d, kind: EdgeKind::Ast })
                .collect(),
            methods: BTreeMap::new(),
            source_path: "t.c".into(),
        }
    }

    #[test]
    fn method_return_inherits_method_line() {
        let src = "\n\nint f() { return 0; }";
        let cpg = build_cpg(&parse(tokenize(src).unwrap()).unwrap(), "t.c");
        let completed = assign_line_numbers(&cpg).unwrap();
        let ret = completed.nodes.iter().find(|n| n.kind == NodeKind::MethodReturn).unwrap();
        assert_eq!(ret.line, Some(3));
    }

    #[test]
    fn proximity_picks_hop_nearest() {
        // node 0 lineless; 1 hop to line 5, 2 hops to line 9
        let g = chain_graph(&[None, Some(5), Some(9)], &[(0, 1), (1, 2)]);
        let completed = assign_line_numbers(&g).unwrap();
        assert_eq!(completed.nodes[0].line, Some(5));
    }

    #[test]
    fn equidistant_tie_takes_smaller_line() {
        let g = chain_graph(&[None, Some(9), Some(5)], &[(0, 1), (0, 2)]);
        let completed = assign_line_numbers(&g).unwrap();
        assert_eq!(completed.nodes[0].line, Some(5));
    }

    #[test]
    fn unreachable_lineless_node_is_an_error() {
        let g = chain_graph(&[None, Some(4)], &[]);
        let err = assign_line_numbers(&g).unwrap_err();
        assert!(matches!(err, AnnotateError::UnreachableNode { node: 0 }));
    }

    #[test]
    fn cascade_is_total_and_idempotent_on_pipeline_graphs() {
        let src = "int g;\nvoid f(int a){ if(a) { int b = a; g = b; } }\nint main(){ f(2); return 0; }";
        let cpg = build_cpg(&parse(tokenize(src).unwrap()).unwrap(), "t.c");
        let once = assign_line_numbers(&cpg).unwrap();
        assert!(once.nodes.iter().all(|n| n.line.is_some()));
        let twice = assign_line_numbers(&once).unwrap();
        assert_eq!(once, twice);
    }
}
