use super::{Cpg, EdgeKind};
use crate::par;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// SHA-256 digest of the canonical form of a graph, as lowercase hex.
///
/// Nodes are sorted by (kind, code, line, type_full_name) with ties broken by
/// the node's original id (pre-order position for pipeline-built graphs), and
/// ids are replaced by canonical ranks; edges are sorted by (src rank, dst
/// rank, kind). Insertion order therefore never affects the digest, while any
/// attribute change does.
pub fn canonical_hash(cpg: &Cpg) -> String {
    let mut order: Vec<usize> = (0..cpg.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        let na = &cpg.nodes[a];
        let nb = &cpg.nodes[b];
        (na.kind, &na.code, na.line, &na.type_full_name, na.id).cmp(&(
            nb.kind,
            &nb.code,
            nb.line,
            &nb.type_full_name,
            nb.id,
        ))
    });
    let mut rank: BTreeMap<usize, u64> = BTreeMap::new();
    for (r, &pos) in order.iter().enumerate() {
        rank.insert(cpg.nodes[pos].id, r as u64);
    }

    let mut hasher = Sha256::new();
    let put_str = |h: &mut Sha256, s: &str| {
        h.update((s.len() as u32).to_le_bytes());
        h.update(s.as_bytes());
    };
    for &pos in &order {
        let n = &cpg.nodes[pos];
        put_str(&mut hasher, n.kind.as_str());
        put_str(&mut hasher, &n.code);
        hasher.update(match n.line {
            Some(l) => (l as i64).to_le_bytes(),
            None => (-1i64).to_le_bytes(),
        });
        put_str(&mut hasher, n.type_full_name.as_deref().unwrap_or(""));
        put_str(&mut hasher, n.name.as_deref().unwrap_or(""));
        hasher.update(match n.enclosing_method.and_then(|m| rank.get(&m)) {
            Some(&r) => (r as i64).to_le_bytes(),
            None => (-1i64).to_le_bytes(),
        });
    }

    let mut edges: Vec<(u64, u64, EdgeKind)> = cpg
        .edges
        .iter()
        .map(|e| (rank[&e.src], rank[&e.dst], e.kind))
        .collect();
    edges.sort_unstable();
    for (s, d, k) in edges {
        hasher.update(s.to_le_bytes());
        hasher.update(d.to_le_bytes());
        hasher.update([k.index() as u8]);
    }

    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Digest every graph of a corpus, in order.
pub fn corpus_digests(corpus: &[Cpg]) -> Vec<String> {
    par::map_ref_ordered(corpus, canonical_hash)
}

/// Sequential twin of [`corpus_digests`] (bench baseline; identical output).
pub fn corpus_digests_seq(corpus: &[Cpg]) -> Vec<String> {
    corpus.iter().map(canonical_hash).collect()
}

/// Keep the first graph of each digest class, in input order.
pub fn dedup(corpus: Vec<Cpg>) -> (Vec<Cpg>, usize) {
    let digests = corpus_digests(&corpus);
    let input = corpus.len();
    let mut seen = std::collections::BTreeSet::new();
    let kept: Vec<Cpg> = corpus
        .into_iter()
        .zip(digests)
        .filter(|(_, d)| seen.insert(d.clone()))
        .map(|(g, _)| g)
        .collect();
    let removed = input - kept.len();
    (kept, removed)
}
