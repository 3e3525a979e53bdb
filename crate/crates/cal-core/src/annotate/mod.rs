//! From node probabilities to annotations: line-number completion, node ->
//! line -> function aggregation, evaluation metrics, and report rendering.

mod aggregate;
mod lines;
mod metrics;
mod report;

pub use aggregate::{aggregate, build_report, FunctionPrediction, LinePrediction};
pub use lines::assign_line_numbers;
pub use metrics::{confusion, identification_rate, metrics, ConfusionMatrix, Metrics};
pub use report::{render_report, AnnotationReport, LineRecord, ReportFormat};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("node {node} has no path to any node with a line number")]
    UnreachableNode { node: usize },
    #[error("empty population")]
    EmptyPopulation,
    #[error("identification rate over a zero total")]
    ZeroTotal,
    #[error("probability vector has {got} entries for {expected} nodes")]
    LengthMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Granularity {
    Node,
    Line,
    Function,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Node => "node",
            Granularity::Line => "line",
            Granularity::Function => "function",
        }
    }
}

/// Aggregated evaluation result at one granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub granularity: Granularity,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// identified / total over the truly sensitive items.
    pub identification_rate: f64,
    pub total_sensitive: u64,
    pub identified_sensitive: u64,
    pub missed_sensitive: u64,
}
