//! Skip-gram with negative sampling, trained from scratch. Used for both walk
//! corpora (node ids as tokens) and textual corpora (code/datatype tokens).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SkipgramError {
    #[error("empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SkipgramConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate, decayed linearly over all processed tokens.
    pub learning_rate: f32,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig { window: 5, negatives: 5, epochs: 5, learning_rate: 0.025 }
    }
}

/// Trained token embeddings. Index 0 is reserved for out-of-vocabulary
/// lookups and stays a zero vector; all other rows are finite.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbeddingTable {
    /// Tokens in index order; position 0 is the OOV sentinel.
    pub tokens: Vec<String>,
    pub index: BTreeMap<String, usize>,
    pub dim: usize,
    /// |V| x dim row-major input vectors.
    pub vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn vocab_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Vector for a token; unknown tokens get the OOV zero row.
    pub fn vector(&self, token: &str) -> &[f32] {
        let i = self.index.get(token).copied().unwrap_or(0);
        self.row(i)
    }

    pub fn cosine(&self, a: &str, b: &str) -> f32 {
        let (va, vb) = (self.vector(a), self.vector(b));
        let dot: f32 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na: f32 = va.iter().map(|x| x * x).sum::<f32>().sqrt();
        let nb: f32 = vb.iter().map(|x| x * x).sum::<f32>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Train skip-gram embeddings over token sequences (min count 1).
/// Deterministic under a fixed seed.
pub fn train_skipgram(
    corpus: &[Vec<String>],
    dim: usize,
    cfg: &SkipgramConfig,
    seed: u64,
) -> Result<EmbeddingTable, SkipgramError> {
    let total_tokens: usize = corpus.iter().map(Vec::len).sum();
    if total_tokens == 0 {
        return Err(SkipgramError::EmptyCorpus);
    }

    // vocabulary in first-seen order, index 0 reserved for OOV
    let mut tokens: Vec<String> = vec!["<oov>".to_string()];
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut counts: Vec<u64> = vec![0];
    let mut sequences: Vec<Vec<u32>> = Vec::with_capacity(corpus.len());
    for seq in corpus {
        let mut ids = Vec::with_capacity(seq.len());
        for t in seq {
            let id = *index.entry(t.clone()).or_insert_with(|| {
                tokens.push(t.clone());
                counts.push(0);
                tokens.len() - 1
            });
            counts[id] += 1;
            ids.push(id as u32);
        }
        sequences.push(ids);
    }
    let vocab = tokens.len();

    // unigram^0.75 cumulative table for negative sampling
    let mut cum: Vec<f64> = Vec::with_capacity(vocab - 1);
    let mut acc = 0.0f64;
    for &c in &counts[1..] {
        acc += (c as f64).powf(0.75);
        cum.push(acc);
    }
    let draw_negative = |r: f64| -> usize {
        let target = r * acc;
        // binary search for the first cumulative value above target
        let mut lo = 0usize;
        let mut hi = cum.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cum[mid] <= target {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo.min(cum.len() - 1) + 1
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = vec![0.0f32; vocab * dim];
    let mut output = vec![0.0f32; vocab * dim];
    let bound = 0.5 / dim as f32;
    for v in input.iter_mut().skip(dim) {
        *v = rng.gen_range(-bound..bound);
    }

    let lr0 = cfg.learning_rate;
    let min_lr = lr0 * 1e-4;
    let total_updates = (cfg.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0f32; dim];

    for _epoch in 0..cfg.epochs {
        for seq in &sequences {
            for (i, &center) in seq.iter().enumerate() {
                let lr = (lr0 as f64 * (1.0 - processed as f64 / total_updates)).max(min_lr as f64)
                    as f32;
                processed += 1;
                if cfg.window == 0 {
                    continue;
                }
                let b = rng.gen_range(1..=cfg.window);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(seq.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let ctx = seq[j] as usize;
                    let c = center as usize;
                    grad.fill(0.0);
                    let wv = c * dim;
                    // positive sample, then negatives from the unigram table
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0f32)
                        } else {
                            let cand = draw_negative(rng.gen::<f64>());
                            if cand == ctx {
                                continue;
                            }
                            (cand, 0.0f32)
                        };
                        let ov = target * dim;
                        let dot = dot4(&input[wv..wv + dim], &output[ov..ov + dim]);
                        let f = 1.0 / (1.0 + (-dot).exp());
                        let g = (label - f) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[ov + d];
                            output[ov + d] += g * input[wv + d];
                        }
                    }
                    for d in 0..dim {
                        input[wv + d] += grad[d];
                    }
                }
            }
        }
    }
    // OOV row stays zero
    for v in input.iter_mut().take(dim) {
        *v = 0.0;
    }
    Ok(EmbeddingTable { tokens, index, dim, vectors: input })
}

/// Four fixed-order accumulator lanes; deterministic and vectorizable.
#[inline]
fn dot4(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 4];
    let blocks = a.len() / 4;
    for i in 0..blocks {
        let off = i * 4;
        for l in 0..4 {
            acc[l] += a[off + l] * b[off + l];
        }
    }
    let mut tail = 0.0f32;
    for i in blocks * 4..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}
