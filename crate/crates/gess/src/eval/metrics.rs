//! Matching accuracy metrics: MMA over 1-10 px thresholds and the
//! normalized area under the pooled-error empirical CDF.

pub const MMA_THRESHOLDS: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// MMA@t = (#errors <= t) / #errors per threshold; an empty error list
/// yields 0 at every threshold.
pub fn mma(errors: &[f64]) -> [f64; 10] {
    let mut out = [0.0; 10];
    if errors.is_empty() {
        return out;
    }
    let n = errors.len() as f64;
    for (i, &t) in MMA_THRESHOLDS.iter().enumerate() {
        out[i] = errors.iter().filter(|&&e| e <= t).count() as f64 / n;
    }
    out
}

/// AUC@t = (1/t) * integral_0^t F(e) de where F is the empirical CDF of
/// all pooled matched errors, integrated exactly as a step function. An
/// empty pool yields 0.
pub fn auc(errors_per_pair: &[Vec<f64>], t: f64) -> f64 {
    let mut pooled: Vec<f64> = errors_per_pair.iter().flatten().cloned().collect();
    if pooled.is_empty() {
        return 0.0;
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pooled.len() as f64;
    // integral of the step CDF: each error e_i contributes (t - e_i)/n for e_i < t
    let mut area = 0.0;
    for &e in &pooled {
        if e < t {
            area += (t - e.max(0.0)) / n;
        }
    }
    area / t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mma_perfect_counted_empty() {
        assert_eq!(mma(&[0.0, 0.0, 0.0]), [1.0; 10]);
        let v = mma(&[0.5, 2.5, 7.5]);
        assert!((v[0] - 1.0 / 3.0).abs() <= 1e-12);
        assert!((v[2] - 2.0 / 3.0).abs() <= 1e-12);
        assert_eq!(v[9], 1.0);
        assert_eq!(mma(&[]), [0.0; 10]);
    }

    #[test]
    fn mma_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..20 {
            let errors: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..12.0)).collect();
            let v = mma(&errors);
            for w in v.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn auc_limits() {
        assert_eq!(auc(&[vec![0.0, 0.0]], 5.0), 1.0);
        // single error at t/2: CDF is 0 until t/2, 1 after -> area t/2, AUC 0.5
        assert!((auc(&[vec![2.5]], 5.0) - 0.5).abs() <= 1e-12);
        assert_eq!(auc(&[], 5.0), 0.0);
        assert_eq!(auc(&[vec![]], 5.0), 0.0);
    }

    #[test]
    fn auc_matches_riemann_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let errors: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..8.0)).collect();
        let t = 5.0;
        let got = auc(&[errors.clone()], t);

        // 1e5-point Riemann sum over the empirical CDF
        let steps = 100_000;
        let mut sum = 0.0;
        for i in 0..steps {
            let e = (i as f64 + 0.5) * t / steps as f64;
            let f = errors.iter().filter(|&&x| x <= e).count() as f64 / errors.len() as f64;
            sum += f;
        }
        let want = sum / steps as f64;
        assert!((got - want).abs() <= 1e-4, "{got} vs {want}");
    }

    #[test]
    fn auc_bounded_by_cdf_at_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..20 {
            let errors: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
            let t = rng.random_range(1.0..9.0);
            let a = auc(&[errors.clone()], t);
            let f_t = errors.iter().filter(|&&e| e <= t).count() as f64 / errors.len() as f64;
            assert!(a >= 0.0 && a <= f_t + 1e-12 && f_t <= 1.0);
        }
    }
}
