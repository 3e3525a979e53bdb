//! Corpus manifest: file paths (relative to the manifest's directory),
//! digests, and the 80/20 trainval/holdout split assignment.

use crate::CliError;
use cal_core::features::mix_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Trainval,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: String,
    pub cpg: String,
    pub labels: String,
    pub digest: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::user(format!("malformed manifest {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::internal(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

/// Seeded 80/20 split by graph count (+-1): round(0.2 n) entries become the
/// hold-out set.
pub fn assign_split(n: usize, seed: u64) -> Vec<Split> {
    let holdout_n = (n as f64 * 0.2).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5911f7));
    order.shuffle(&mut rng);
    let mut out = vec![Split::Trainval; n];
    for &i in order.iter().take(holdout_n) {
        out[i] = Split::Holdout;
    }
    out
}
