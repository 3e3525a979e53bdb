//! Degree, closeness and betweenness centrality on the undirected simple
//! projection, each normalized into [0, 1].
//!
//! Betweenness is Brandes' algorithm; beyond [`PIVOT_THRESHOLD`] nodes it
//! switches to a scaled 256-pivot estimator. Per-source contributions are
//! reduced in source order, so the parallel path is bit-identical to the
//! sequential one.

use super::{undirected_adjacency, Matrix};
use crate::cpg::Cpg;
use crate::par;
use std::collections::VecDeque;

const PIVOT_THRESHOLD: usize = 5000;
const PIVOT_COUNT: usize = 256;

/// Per-node [degree, closeness, betweenness] block.
pub fn graph_metrics(cpg: &Cpg) -> Matrix {
    let adj = undirected_adjacency(cpg);
    let (deg, clo, bet) = centralities(&adj);
    let mut m = Matrix::zeros(adj.len(), 3);
    for i in 0..adj.len() {
        m.set(i, 0, deg[i] as f32);
        m.set(i, 1, clo[i] as f32);
        m.set(i, 2, bet[i] as f32);
    }
    m
}

/// Normalized (degree, closeness, betweenness) for an undirected adjacency.
pub fn centralities(adj: &[Vec<u32>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = adj.len();
    let degree = degree_centrality(adj);
    let chunks: Vec<Vec<usize>> = (0..n).collect::<Vec<_>>().chunks(32).map(<[usize]>::to_vec).collect();
    let mut closeness = Vec::with_capacity(n);
    for chunk in chunks {
        let part = par::map_ordered(chunk, |v| closeness_of(adj, v));
        closeness.extend(part);
    }
    let betweenness = betweenness_brandes(adj, true);
    (degree, closeness, betweenness)
}

/// Sequential twin of [`centralities`] (bench baseline; identical output).
pub fn centralities_seq(adj: &[Vec<u32>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = adj.len();
    let degree = degree_centrality(adj);
    let closeness: Vec<f64> = (0..n).map(|v| closeness_of(adj, v)).collect();
    let betweenness = betweenness_brandes(adj, false);
    (degree, closeness, betweenness)
}

fn degree_centrality(adj: &[Vec<u32>]) -> Vec<f64> {
    let n = adj.len();
    if n < 2 {
        return vec![0.0; n];
    }
    adj.iter().map(|a| a.len() as f64 / (n - 1) as f64).collect()
}

/// (reachable - 1) / sum of distances within v's component; 0 for isolated.
fn closeness_of(adj: &[Vec<u32>], v: usize) -> f64 {
    let mut dist = vec![u32::MAX; adj.len()];
    dist[v] = 0;
    let mut q = VecDeque::from([v as u32]);
    let mut reachable = 0u64;
    let mut total = 0u64;
    while let Some(u) = q.pop_front() {
        for &w in &adj[u as usize] {
            if dist[w as usize] == u32::MAX {
                dist[w as usize] = dist[u as usize] + 1;
                reachable += 1;
                total += dist[w as usize] as u64;
                q.push_back(w);
            }
        }
    }
    if reachable == 0 {
        0.0
    } else {
        reachable as f64 / total as f64
    }
}

fn betweenness_brandes(adj: &[Vec<u32>], parallel: bool) -> Vec<f64> {
    let n = adj.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let (sources, scale) = if n > PIVOT_THRESHOLD {
        (pick_pivots(n), n as f64 / PIVOT_COUNT as f64)
    } else {
        ((0..n).collect(), 1.0)
    };

    let mut betweenness = vec![0.0f64; n];
    // chunked so parallel runs reduce in source order with bounded memory
    for chunk in sources.chunks(32) {
        let parts: Vec<Vec<f64>> = if parallel {
            par::map_ordered(chunk.to_vec(), |s| brandes_from(adj, s))
        } else {
            chunk.iter().map(|&s| brandes_from(adj, s)).collect()
        };
        for part in parts {
            for (b, p) in betweenness.iter_mut().zip(part) {
                *b += p;
            }
        }
    }
    // undirected: each pair counted twice, normalize by (n-1)(n-2)/2
    let norm = scale / ((n - 1) as f64 * (n - 2) as f64);
    for b in &mut betweenness {
        *b *= norm;
    }
    betweenness
}

/// Single-source dependency accumulation (one Brandes iteration).
fn brandes_from(adj: &[Vec<u32>], s: usize) -> Vec<f64> {
    let n = adj.len();
    let mut stack: Vec<u32> = Vec::new();
    let mut pred: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i32; n];
    sigma[s] = 1.0;
    dist[s] = 0;
    let mut q = VecDeque::from([s as u32]);
    while let Some(v) = q.pop_front() {
        stack.push(v);
        for &w in &adj[v as usize] {
            if dist[w as usize] < 0 {
                dist[w as usize] = dist[v as usize] + 1;
                q.push_back(w);
            }
            if dist[w as usize] == dist[v as usize] + 1 {
                sigma[w as usize] += sigma[v as usize];
                pred[w as usize].push(v);
            }
        }
    }
    let mut delta = vec![0.0f64; n];
    let mut out = vec![0.0f64; n];
    while let Some(w) = stack.pop() {
        for &v in &pred[w as usize] {
            delta[v as usize] +=
                sigma[v as usize] / sigma[w as usize] * (1.0 + delta[w as usize]);
        }
        if w as usize != s {
            out[w as usize] += delta[w as usize];
        }
    }
    out
}

/// Deterministic pivot choice (fixed internal stream, independent of callers).
fn pick_pivots(n: usize) -> Vec<usize> {
    let mut state = super::mix_seed(0xb7, n as u64);
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < PIVOT_COUNT.min(n) {
        state = super::mix_seed(state, 0x5eed);
        picked.insert((state % n as u64) as usize);
    }
    picked.into_iter().collect()
}
