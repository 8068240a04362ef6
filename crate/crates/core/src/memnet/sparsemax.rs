use ndarray::{Array1, ArrayView1};

/// Euclidean projection of `z` onto the probability simplex.
///
/// Sort descending, take the largest support size `k` with
/// `1 + k * z_(k) > sum_{j<=k} z_(j)`, set `tau = (sum_{j<=k} z_(j) - 1) / k`
/// and clip `z - tau` at zero.
pub fn sparsemax(z: ArrayView1<'_, f64>) -> Array1<f64> {
    assert!(!z.is_empty(), "sparsemax of an empty vector");
    let mut sorted = z.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut support = 0usize;
    let mut support_sum = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let k = (i + 1) as f64;
        if 1.0 + k * v > cum {
            support = i + 1;
            support_sum = cum;
        }
    }
    let tau = (support_sum - 1.0) / support as f64;
    z.mapv(|v| (v - tau).max(0.0))
}

/// Vector-Jacobian product of sparsemax at output `p`:
/// `out_i = g_i - mean_{j in S} g_j` on the support `S`, zero elsewhere.
pub fn sparsemax_backward(p: ArrayView1<'_, f64>, g: ArrayView1<'_, f64>) -> Array1<f64> {
    let (sum, count) = p
        .iter()
        .zip(g.iter())
        .filter(|(p, _)| **p > 0.0)
        .fold((0.0, 0usize), |(s, c), (_, g)| (s + g, c + 1));
    let mean = if count > 0 { sum / count as f64 } else { 0.0 };
    Array1::from_iter(p.iter().zip(g.iter()).map(|(&p, &g)| if p > 0.0 { g - mean } else { 0.0 }))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    /// Independent projection: bisection on the threshold until
    /// sum(max(z - tau, 0)) = 1.
    pub fn project_by_bisection(z: &[f64]) -> Vec<f64> {
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (max - 1.0, max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mass: f64 = z.iter().map(|&v| (v - mid).max(0.0)).sum();
            if mass > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        z.iter().map(|&v| (v - tau).max(0.0)).collect()
    }

    #[test]
    fn symmetric_input() {
        assert_eq!(sparsemax(array![0.0, 0.0].view()), array![0.5, 0.5]);
    }

    #[test]
    fn large_gap_is_one_hot() {
        assert_eq!(sparsemax(array![10.0, 0.0].view()), array![1.0, 0.0]);
    }

    #[test]
    fn three_way_value() {
        let z = [0.5, 0.2, -0.1];
        let oracle = project_by_bisection(&z);
        let expect = [19.0 / 30.0, 10.0 / 30.0, 1.0 / 30.0];
        let got = sparsemax(ndarray::ArrayView1::from(&z[..]));
        for i in 0..3 {
            assert!((oracle[i] - expect[i]).abs() < 1e-12);
            assert!((got[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_slot() {
        assert_eq!(sparsemax(array![-42.0].view()), array![1.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let z = array![0.3, 0.1, -0.2, 0.25, -3.0];
        let g = array![1.0, -2.0, 0.5, 3.0, 7.0];
        let analytic = sparsemax_backward(sparsemax(z.view()).view(), g.view());
        let h = 1e-6;
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd = (sparsemax(zp.view()).dot(&g) - sparsemax(zm.view()).dot(&g)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-7, "{i}: {fd} vs {}", analytic[i]);
        }
        assert_eq!(analytic[4], 0.0);
    }

    proptest! {
        #[test]
        fn simplex_and_shift_invariance(z in prop::collection::vec(-5.0f64..5.0, 1..50), c in -100.0f64..100.0) {
            let z = Array1::from(z);
            let p = sparsemax(z.view());
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.sum() - 1.0).abs() < 1e-9);
            let shifted = sparsemax(z.mapv(|v| v + c).view());
            for (a, b) in p.iter().zip(shifted.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let oracle = project_by_bisection(z.as_slice().unwrap());
            for (a, b) in p.iter().zip(oracle.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
