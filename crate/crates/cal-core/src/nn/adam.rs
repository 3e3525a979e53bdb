use super::model::{is_buffer, ModelParams};
use super::scalar::Scalar;
use super::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates per parameter.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState { m: BTreeMap::new(), v: BTreeMap::new(), t: 0 }
    }
}

/// One Adam step with decoupled weight decay: `p -= lr*wd*p` is applied
/// before the moment update. Buffers (running statistics) are never touched;
/// a parameter with no recorded gradient gets a zero gradient.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
    cfg: &AdamConfig,
) {
    state.t += 1;
    let t = state.t as f64;
    let bias1 = 1.0 - cfg.beta1.powf(t);
    let bias2 = 1.0 - cfg.beta2.powf(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let lr_t = T::from_f64(lr);
    let wd = T::from_f64(weight_decay);
    let eps = T::from_f64(cfg.eps);
    let inv_bias1 = T::from_f64(1.0 / bias1);
    let inv_bias2 = T::from_f64(1.0 / bias2);

    let names: Vec<String> = params
        .tensors
        .keys()
        .filter(|n| !is_buffer(n))
        .cloned()
        .collect();
    for name in names {
        let p = params.tensors.get_mut(&name).unwrap();
        let zero;
        let g = match grads.get(&name) {
            Some(g) => g,
            None => {
                zero = Tensor::zeros(p.rows, p.cols);
                &zero
            }
        };
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.rows, p.cols));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.rows, p.cols));
        for ((pi, &gi), (mi, vi)) in
            p.data.iter_mut().zip(&g.data).zip(m.data.iter_mut().zip(v.data.iter_mut()))
        {
            // decoupled decay first
            *pi -= lr_t * wd * *pi;
            *mi = b1 * *mi + ob1 * gi;
            *vi = b2 * *vi + ob2 * gi * gi;
            let mhat = *mi * inv_bias1;
            let vhat = *vi * inv_bias2;
            *pi -= lr_t * mhat / (vhat.sqrt() + eps);
        }
    }
}
