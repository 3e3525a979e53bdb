use super::scalar::Scalar;
use super::tape::Tape;
use super::tensor::Tensor;
use super::NnError;

const CLIP: f64 = 1e-7;

/// Weighted binary cross-entropy on the tape:
/// mean over nodes of -[w*y*ln(p) + (1-y)*ln(1-p)], probabilities clipped to
/// [1e-7, 1-1e-7]. `probs` must be an (n, 1) value on the tape.
pub fn weighted_bce_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    probs: usize,
    labels: &[T],
    pos_weight: f64,
) -> Result<usize, NnError> {
    let n = labels.len();
    if n == 0 {
        return Err(NnError::EmptyBatch);
    }
    if tape.value(probs).len() != n {
        return Err(NnError::Shape(format!(
            "probs has {} entries for {} labels",
            tape.value(probs).len(),
            n
        )));
    }
    let w = T::from_f64(pos_weight);
    let wy: Vec<T> = labels.iter().map(|&y| w * y).collect();
    let one_minus_y: Vec<T> = labels.iter().map(|&y| T::ONE - y).collect();
    let wy = tape.leaf(Tensor::from_vec(n, 1, wy), false);
    let omy = tape.leaf(Tensor::from_vec(n, 1, one_minus_y), false);

    let pc = tape.clamp(probs, CLIP, 1.0 - CLIP);
    let ln_p = tape.ln(pc);
    let pos = tape.mul(ln_p, wy);
    let one_minus_p = tape.affine(pc, -1.0, 1.0);
    let ln_q = tape.ln(one_minus_p);
    let neg = tape.mul(ln_q, omy);
    let total = tape.add(pos, neg);
    let sum = tape.sum_all(total);
    Ok(tape.affine(sum, -1.0 / n as f64, 0.0))
}

/// Reference value computation (no tape), for oracles and tests.
pub fn weighted_bce_value(probs: &[f64], labels: &[f64], pos_weight: f64) -> f64 {
    assert_eq!(probs.len(), labels.len());
    let n = probs.len() as f64;
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(CLIP, 1.0 - CLIP);
        total += pos_weight * y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    -total / n
}
