use cvqkd::estimation::{self, PointEstimates};
use cvqkd::params::SystemParams;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Two-sided normal tail 2·∫_z^∞ φ(t) dt by composite Simpson.
fn two_sided_tail(z: f64) -> f64 {
    let (a, b) = (z, z + 14.0);
    let n = 200_000;
    let h = (b - a) / n as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(a) + phi(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * phi(a + k as f64 * h);
    }
    2.0 * s * h / 3.0
}

/// Inverts the tail by bisection, independently of any inverse-erf routine.
fn z_oracle(eps: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if two_sided_tail(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn z_matches_quadrature_oracle() {
    for eps in [1e-10, 1e-6, 0.01, 0.3173, 0.9] {
        let oracle = z_oracle(eps);
        let z = estimation::z_of_epsilon(eps).unwrap();
        assert!(
            (z - oracle).abs() < 1e-6 * oracle.max(1e-3),
            "eps={eps}: {z} vs {oracle}"
        );
    }
    assert!((estimation::z_of_epsilon(1e-10).unwrap() - 6.467).abs() < 0.01);
}

fn table_truth() -> PointEstimates {
    estimation::ideal_point(&SystemParams::default())
}

#[test]
fn finite_size_chain_at_one_million() {
    let z = z_oracle(1e-10);
    let p = table_truth();
    let m = 1e6;
    let t_min = p.t_hat - z * (p.sigma2_hat / (m * 2.778)).sqrt();
    let s_max = p.sigma2_hat + z * p.sigma2_hat * 2f64.sqrt() / m.sqrt();
    let d0 = z * 1.013 * 2f64.sqrt() / m.sqrt();
    let w = estimation::finite_size_estimates(&p, 2.778, 0.296, m, 1.013, m, 1e-10).unwrap();
    assert!((w.t_min - t_min).abs() < 1e-9);
    assert!((w.sigma2_max - s_max).abs() < 1e-9);
    assert!((w.delta_sigma2_0 - d0).abs() < 1e-9);
    assert!((w.t_min - 0.29996).abs() < 1e-4);
    assert!((w.sigma2_max - 1.03589).abs() < 1e-4);
    assert!((w.xi_bq_fs - 0.03216).abs() < 1e-4);
    assert!((2.0 * w.xi_bq_fs - 0.06431).abs() < 1e-4);
    assert!((w.t_channel_min - 0.60796).abs() < 1e-4);
}

#[test]
fn worst_case_gaps_scale_as_inverse_sqrt_m() {
    let p = table_truth();
    let gaps: Vec<(f64, f64)> = [1e4, 1e6, 1e8]
        .iter()
        .map(|&m| {
            let (t_min, s_max) = estimation::worst_case(&p, 2.778, m, 1e-10).unwrap();
            assert!(t_min <= p.t_hat && s_max >= p.sigma2_hat);
            (p.t_hat - t_min, s_max - p.sigma2_hat)
        })
        .collect();
    for w in gaps.windows(2) {
        assert!((w[0].0 / w[1].0 - 10.0).abs() < 1e-9);
        assert!((w[0].1 / w[1].1 - 10.0).abs() < 1e-9);
    }
}

fn synthetic_pairs(m: usize, seed: u64) -> (Vec<Complex64>, Vec<Complex64>) {
    let p = SystemParams::default();
    let t = (p.eta * p.t_channel / 2.0).sqrt();
    let sd_b = (p.xi_bq + p.v_elec + 1.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Normal::new(0.0, p.va.sqrt()).unwrap();
    let n = Normal::new(0.0, sd_b).unwrap();
    let alice: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(a.sample(&mut rng), a.sample(&mut rng)))
        .collect();
    let bob = alice
        .iter()
        .map(|x| x * t + Complex64::new(n.sample(&mut rng), n.sample(&mut rng)))
        .collect();
    (alice, bob)
}

#[test]
fn synthetic_table_point_recovered() {
    let (alice, bob) = synthetic_pairs(1_000_000, 1);
    let est = estimation::fit_point(&alice, &bob, 0.296, 0.013).unwrap();
    assert!((est.t_hat - 0.30389).abs() < 3.0 * est.t_standard_error());
    assert!((est.xi_bq_hat - 0.0135).abs() < 3.0 * est.sigma2_standard_error());
}

#[test]
fn permuted_pairs_lose_correlation() {
    let (alice, mut bob) = synthetic_pairs(100_000, 2);
    bob.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let est = estimation::fit_point(&alice, &bob, 0.296, 0.013).unwrap();
    let se = (1.283 / (2.0 * 100_000.0 * 2.778f64)).sqrt();
    assert!(est.t_hat.abs() < 3.0 * se, "{}", est.t_hat);
}

#[test]
fn estimators_unbiased_and_error_shrinks_as_inverse_sqrt_m() {
    let t_true = (0.296f64 * 0.624 / 2.0).sqrt();
    let runs = 200;
    let mut log_m = Vec::new();
    let mut log_err = Vec::new();
    for (k, m) in [1_000usize, 10_000, 100_000].into_iter().enumerate() {
        let mut t_hats = Vec::with_capacity(runs);
        let mut xi_hats = Vec::with_capacity(runs);
        for r in 0..runs {
            let (alice, bob) = synthetic_pairs(m, 1000 * k as u64 + r as u64);
            let est = estimation::fit_point(&alice, &bob, 0.296, 0.013).unwrap();
            t_hats.push(est.t_hat);
            xi_hats.push(est.xi_bq_hat);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let mu = mean(v);
            (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let (t_mean, t_sd) = (mean(&t_hats), sd(&t_hats));
        let (xi_mean, xi_sd) = (mean(&xi_hats), sd(&xi_hats));
        let n = (runs as f64).sqrt();
        assert!((t_mean - t_true).abs() < 3.0 * t_sd / n, "m={m}: t bias");
        assert!((xi_mean - 0.0135).abs() < 3.0 * xi_sd / n, "m={m}: xi bias");
        log_m.push((m as f64).ln());
        log_err.push(t_sd.ln());
    }
    let mx = log_m.iter().sum::<f64>() / 3.0;
    let my = log_err.iter().sum::<f64>() / 3.0;
    let slope = log_m
        .iter()
        .zip(&log_err)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / log_m.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
}
