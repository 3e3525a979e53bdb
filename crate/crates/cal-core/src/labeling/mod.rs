//! Rule-based identification of security-sensitive functions: crypto sink
//! calls seed the set, snowballing follows calls and dataflow outward, and
//! global-variable taint closes the loop. The same rules generate ground
//! truth for the synthetic C corpus.

mod analysis;
mod profile;
mod synth;

pub use analysis::{find_crypto_seeds, global_var_taint, label, snowball, CryptoSeed};
pub use profile::{CryptoProfile, ProfileError};
pub use synth::{synth_corpus, ConfigError, SynthConfig};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Ground-truth sensitivity at function, node and line granularity. Labels
/// are function-granular: every node of a sensitive function is sensitive,
/// and the sensitive lines are those nodes' lines.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet {
    pub sensitive_functions: BTreeSet<String>,
    pub sensitive_nodes: BTreeSet<usize>,
    /// File -> sensitive line numbers.
    pub sensitive_lines: BTreeMap<String, BTreeSet<u32>>,
    /// Set when the graph has no crypto seeds at all or no benign function
    /// remains (no usable mix of classes).
    pub ineligible: bool,
}

#[derive(Serialize, Deserialize)]
struct LabelSetDoc {
    functions: Vec<String>,
    lines: BTreeMap<String, Vec<u32>>,
    ineligible: bool,
}

impl LabelSet {
    pub fn to_json(&self) -> String {
        let doc = LabelSetDoc {
            functions: self.sensitive_functions.iter().cloned().collect(),
            lines: self
                .sensitive_lines
                .iter()
                .map(|(f, ls)| (f.clone(), ls.iter().copied().collect()))
                .collect(),
            ineligible: self.ineligible,
        };
        serde_json::to_string(&doc).expect("label serialization cannot fail")
    }

    /// Parse the JSON form; node-level labels are reconstructed against a
    /// graph via [`LabelSet::nodes_for`].
    pub fn from_json(s: &str) -> Result<LabelSet, serde_json::Error> {
        let doc: LabelSetDoc = serde_json::from_str(s)?;
        Ok(LabelSet {
            sensitive_functions: doc.functions.into_iter().collect(),
            sensitive_nodes: BTreeSet::new(),
            sensitive_lines: doc
                .lines
                .into_iter()
                .map(|(f, ls)| (f, ls.into_iter().collect()))
                .collect(),
            ineligible: doc.ineligible,
        })
    }

    /// Node ids of a graph that fall inside this label set's functions.
    pub fn nodes_for(&self, cpg: &crate::cpg::Cpg) -> BTreeSet<usize> {
        cpg.nodes
            .iter()
            .filter(|n| {
                cpg.method_name_of(n).map_or(false, |m| self.sensitive_functions.contains(m))
            })
            .map(|n| n.id)
            .collect()
    }
}
