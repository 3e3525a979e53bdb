//! Static analysis and learned classification of security-sensitive C code.
//!
//! The pipeline: parse a pragmatic C subset into an AST (`frontend`), build a
//! unified code property graph merging AST, control-flow and dependence layers
//! (`cpg`), derive per-node feature vectors from node kinds, biased random
//! walks, code text and centrality metrics (`features`), classify nodes with a
//! from-scratch gated graph network (`nn`), and map node probabilities back to
//! lines and functions (`annotate`). The `labeling` module is the rule-based
//! oracle (crypto sinks + dataflow snowballing) that produces ground truth and
//! doubles as the synthetic-corpus generator.
//!
//! With the default `parallel` feature, corpus-level loops (hashing, walks,
//! centrality sources) run on rayon. Every parallel path reduces in a fixed
//! order, so outputs are bit-identical to the sequential fallback.

pub mod annotate;
pub mod cpg;
pub mod features;
pub mod frontend;
pub mod labeling;
pub mod nn;

pub(crate) mod par;
