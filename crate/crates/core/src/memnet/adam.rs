use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MemNetError;

/// Moment estimates for a fixed list of matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl AdamState {
    /// Zero moments shaped like `shapes`.
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a Array2<f64>>) -> Self {
        let m: Vec<Array2<f64>> = shapes.into_iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, v: m.clone(), m }
    }
}

/// One bias-corrected Adam update. A non-finite gradient leaves both the
/// parameters and the state untouched.
pub fn adam_step(state: &mut AdamState, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>], lr: f64) -> Result<(), MemNetError> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(MemNetError::Dimension { what: "optimizer tensors", expected: state.m.len(), found: params.len().min(grads.len()) });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.raw_dim() != g.raw_dim() || p.raw_dim() != m.raw_dim() {
            return Err(MemNetError::Dimension { what: "optimizer tensor shape", expected: m.len(), found: g.len() });
        }
    }
    if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(MemNetError::NonFiniteGradient);
    }

    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        ndarray::Zip::from(&mut **p).and(*g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        });
    }
    Ok(())
}
