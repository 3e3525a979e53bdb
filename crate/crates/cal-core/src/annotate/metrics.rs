use super::AnnotateError;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Set arithmetic over a finite population.
pub fn confusion<K: Ord>(
    predicted: &BTreeSet<K>,
    truth: &BTreeSet<K>,
    population: &BTreeSet<K>,
) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for item in population {
        match (predicted.contains(item), truth.contains(item)) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    cm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio was 0/0 and reported as 0.
    pub undefined: bool,
}

/// Accuracy, precision, recall and F1 from a confusion matrix. Ratios with a
/// zero denominator come back as 0 with the `undefined` flag set.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, AnnotateError> {
    if cm.total() == 0 {
        return Err(AnnotateError::EmptyPopulation);
    }
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let mut undefined = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            undefined = true;
            0.0
        } else {
            num / den
        }
    };
    let accuracy = (tp + tn) / cm.total() as f64;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(Metrics { accuracy, precision, recall, f1, undefined })
}

/// Fraction of truly sensitive items the tool identified.
pub fn identification_rate(identified: u64, total: u64) -> Result<f64, AnnotateError> {
    if total == 0 {
        return Err(AnnotateError::ZeroTotal);
    }
    debug_assert!(identified <= total);
    Ok(identified as f64 / total as f64)
}
