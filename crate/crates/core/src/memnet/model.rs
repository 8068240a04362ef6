use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sparsemax::{sparsemax, sparsemax_backward};
use super::{MemNetError, MemNetInstance};

/// Hop matrices `R_1..R_h` and the output matrix `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemNetParams {
    pub hops: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl MemNetParams {
    /// `R_t` = identity plus uniform noise in ±0.01; `C` Glorot-uniform.
    pub fn init(dim: usize, hops: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hop_mats = (0..hops)
            .map(|_| Array2::from_shape_fn((dim, dim), |(i, j)| (i == j) as u8 as f64 + rng.random_range(-0.01..=0.01)))
            .collect();
        let limit = (6.0 / (2 * dim) as f64).sqrt();
        let output = Array2::from_shape_fn((dim, dim), |_| rng.random_range(-limit..=limit));
        MemNetParams { hops: hop_mats, output }
    }

    pub fn dim(&self) -> usize {
        self.output.nrows()
    }

    pub fn n_hops(&self) -> usize {
        self.hops.len()
    }

    pub fn is_finite(&self) -> bool {
        self.hops.iter().chain(std::iter::once(&self.output)).all(|m| m.iter().all(|x| x.is_finite()))
    }

    fn check(&self, inst: &MemNetInstance) -> Result<(), MemNetError> {
        let d = self.dim();
        let dims = [
            ("output matrix columns", self.output.ncols()),
            ("query", inst.query.len()),
            ("key width", inst.keys.ncols()),
            ("value width", inst.values.ncols()),
            ("candidate width", inst.candidates.ncols()),
        ];
        for (what, found) in dims {
            if found != d {
                return Err(MemNetError::Dimension { what, expected: d, found });
            }
        }
        for r in &self.hops {
            if r.dim() != (d, d) {
                return Err(MemNetError::Dimension { what: "hop matrix", expected: d, found: r.nrows().max(r.ncols()) });
            }
        }
        if inst.values.nrows() != inst.keys.nrows() {
            return Err(MemNetError::Dimension { what: "value slots", expected: inst.keys.nrows(), found: inst.values.nrows() });
        }
        if inst.keys.nrows() == 0 {
            return Err(MemNetError::Instance("no memory slots".into()));
        }
        if inst.candidates.nrows() == 0 {
            return Err(MemNetError::Instance("no candidates".into()));
        }
        if self.hops.is_empty() {
            return Err(MemNetError::Instance("model has no hops".into()));
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `q_1 .. q_{h+1}`.
    pub queries: Vec<Array1<f64>>,
    /// `R_t^T q_t`, so that slot scores are `keys · projected`.
    pub projected: Vec<Array1<f64>>,
    pub scores: Vec<Array1<f64>>,
    pub attention: Vec<Array1<f64>>,
    pub outputs: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    // NaN-propagating max, unlike f64::max
    let max = xs.clone().fold(f64::NEG_INFINITY, |m, x| if x > m || x.is_nan() { x } else { m });
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn forward(params: &MemNetParams, inst: &MemNetInstance) -> Result<ForwardTrace, MemNetError> {
    params.check(inst)?;
    let h = params.n_hops();
    let mut queries = Vec::with_capacity(h + 1);
    let mut projected = Vec::with_capacity(h);
    let mut scores = Vec::with_capacity(h);
    let mut attention = Vec::with_capacity(h);
    let mut outputs = Vec::with_capacity(h);

    queries.push(inst.query.clone());
    for r in &params.hops {
        let q = queries.last().expect("seeded above");
        let u = r.t().dot(q);
        let s = inst.keys.dot(&u);
        let a = sparsemax(s.view());
        let o = inst.values.t().dot(&a);
        queries.push(q + &o);
        projected.push(u);
        scores.push(s);
        attention.push(a);
        outputs.push(o);
    }

    let w = params.output.t().dot(outputs.last().expect("at least one hop"));
    let logits = inst.candidates.dot(&w);
    let lse = log_sum_exp(logits.iter().copied());
    let probs = logits.mapv(|l| (l - lse).exp());
    Ok(ForwardTrace { queries, projected, scores, attention, outputs, logits, probs })
}

/// `-ln sum_{j in gold} p_j`, computed from the logits.
pub fn nll_loss(trace: &ForwardTrace, gold: &[usize]) -> f64 {
    let all = log_sum_exp(trace.logits.iter().copied());
    let gold_lse = log_sum_exp(gold.iter().map(|&j| trace.logits[j]));
    let loss = all - gold_lse;
    // rounding can leave a tiny negative when every candidate is gold
    if loss < 0.0 { 0.0 } else { loss }
}

/// Gradients of the loss for one instance, with respect to the parameters
/// and to every encoded vector of the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MemNetGrads {
    pub loss: f64,
    pub hops: Vec<Array2<f64>>,
    pub output: Array2<f64>,
    pub query: Array1<f64>,
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
    pub candidates: Array2<f64>,
}

impl MemNetGrads {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.hops.iter().chain([&self.output, &self.keys, &self.values, &self.candidates]).all(|m| m.iter().all(|x| x.is_finite()))
            && self.query.iter().all(|x| x.is_finite())
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Reverse-mode pass through the hops.
pub fn gradients(params: &MemNetParams, inst: &MemNetInstance, gold: &[usize]) -> Result<MemNetGrads, MemNetError> {
    if gold.is_empty() || gold.iter().any(|&g| g >= inst.n_candidates()) {
        return Err(MemNetError::Instance("gold indices must be a nonempty subset of the candidates".into()));
    }
    let trace = forward(params, inst)?;
    let loss = nll_loss(&trace, gold);
    let h = params.n_hops();

    // dL/dlogit_j = p_j - [j in gold] * p_j / P(gold)
    let gold_lse = log_sum_exp(gold.iter().map(|&j| trace.logits[j]));
    let mut d_logits = trace.probs.clone();
    for &j in gold {
        d_logits[j] -= (trace.logits[j] - gold_lse).exp();
    }

    let o_last = &trace.outputs[h - 1];
    let w = params.output.t().dot(o_last);
    let d_candidates = outer(&d_logits, &w);
    let d_w = inst.candidates.t().dot(&d_logits);
    let d_output = outer(o_last, &d_w);
    let d_o_last = params.output.dot(&d_w);

    let mut d_hops = vec![Array2::zeros(params.hops[0].raw_dim()); h];
    let mut d_keys = Array2::zeros(inst.keys.raw_dim());
    let mut d_values = Array2::zeros(inst.values.raw_dim());
    // gradient flowing into q_{t+1}; q_{h+1} is unused by the loss
    let mut d_next = Array1::zeros(inst.dim());

    for t in (0..h).rev() {
        let mut d_o = d_next.clone();
        if t == h - 1 {
            d_o += &d_o_last;
        }
        let mut d_q = d_next;

        let d_a = inst.values.dot(&d_o);
        d_values += &outer(&trace.attention[t], &d_o);

        let d_s = sparsemax_backward(trace.attention[t].view(), d_a.view());
        let k_ds = inst.keys.t().dot(&d_s);
        d_q += &params.hops[t].dot(&k_ds);
        d_hops[t] = outer(&trace.queries[t], &k_ds);
        d_keys += &outer(&d_s, &trace.projected[t]);

        d_next = d_q;
    }

    Ok(MemNetGrads {
        loss,
        hops: d_hops,
        output: d_output,
        query: d_next,
        keys: d_keys,
        values: d_values,
        candidates: d_candidates,
    })
}

/// Candidates by descending probability, ties to the lower index.
pub fn predict(params: &MemNetParams, inst: &MemNetInstance) -> Result<Vec<(usize, f64)>, MemNetError> {
    let trace = forward(params, inst)?;
    let mut ranked: Vec<(usize, f64)> = trace.probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}
