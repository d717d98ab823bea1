use kpzlab::mollifier::{build_profile, v_kernel, MollifierProfile};
use kpzlab::theory::{
    cov_prediction, height_shift, make_scale_set, second_moment_oracle, sigma_gamma_sq, wick_moment, BETA_CRITICAL,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

/// `E exp(c int_0^tau V(|D_r|) dr)` for a planar Brownian motion `D` with
/// variance 2 per unit time, started at distance `d0`, by direct simulation.
/// Steps are fine near the support of `V` and grow with the distance to it.
fn brownian_functional(p: &MollifierProfile, c: f64, tau: f64, d0: f64, paths: u64, seed: u64) -> (f64, f64) {
    let fine = 0.002;
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (mut x, mut y, mut s, mut acc) = (d0, 0.0f64, 0.0, 0.0);
            let mut v_prev = v_kernel(p, d0);
            while s < tau {
                let gap = (x * x + y * y).sqrt() - 2.0;
                // stay more than eight standard deviations clear of the support
                let h = if gap > 0.0 { (gap * gap / 128.0).max(fine) } else { fine }.min(tau - s);
                let sd = (2.0 * h).sqrt();
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                x += sd * a;
                y += sd * b;
                s += h;
                let v = v_kernel(p, (x * x + y * y).sqrt());
                acc += 0.5 * h * (v + v_prev);
                v_prev = v;
            }
            (c * acc).exp()
        })
        .collect();
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn second_moment_oracle_agrees_with_direct_monte_carlo() {
    let p = build_profile("standard-bump", 256).unwrap();
    let eps = 0.05;
    let t = 0.5;
    let scale = make_scale_set(1.0, 0.0, eps, p.l2_norm_sq).unwrap();
    let oracle = second_moment_oracle(&scale, t, 0.0, &p, 1e-4).unwrap();
    let tau = t / (eps * eps);
    let (mc, se) = brownian_functional(&p, scale.beta_eps * scale.beta_eps, tau, 0.0, 100_000, 17);
    let z = (mc - oracle.value) / (se * se + oracle.error_estimate.powi(2)).sqrt();
    assert!(z.abs() < 4.0, "oracle {} mc {mc} +- {se} (z {z})", oracle.value);
}

#[test]
fn oracle_at_a_separation() {
    let p = build_profile("standard-bump", 256).unwrap();
    let eps = 0.1;
    let scale = make_scale_set(1.0, 0.0, eps, p.l2_norm_sq).unwrap();
    let sep = 0.1;
    let oracle = second_moment_oracle(&scale, 0.2, sep, &p, 1e-4).unwrap();
    let (mc, se) = brownian_functional(&p, scale.beta_eps * scale.beta_eps, 0.2 / (eps * eps), sep / eps, 40_000, 3);
    let z = (mc - oracle.value) / (se * se + oracle.error_estimate.powi(2)).sqrt();
    assert!(z.abs() < 4.0, "oracle {} mc {mc} +- {se}", oracle.value);
    assert!(oracle.value > 1.0);
}

#[test]
fn pinned_limit_values() {
    // log((2 pi - beta^2 gamma) / (2 pi - beta^2)) by hand at beta = 1
    let tau = 2.0 * std::f64::consts::PI;
    assert!((sigma_gamma_sq(1.0, 0.5).unwrap() - ((tau - 0.5) / (tau - 1.0)).ln()).abs() < 1e-15);
    assert!((sigma_gamma_sq(1.0, 0.5).unwrap() - 0.0904).abs() < 1e-4);
    assert!((height_shift(1.0).unwrap() + 0.0867).abs() < 1e-4);
    assert!((sigma_gamma_sq(1.0, 0.0).unwrap() - 0.1733).abs() < 1e-4);
    for (z, v) in [(0.25, 0.1327), (0.5, 0.0904), (0.75, 0.0462)] {
        assert!((cov_prediction(1.0, z).unwrap() - v).abs() < 1e-4);
    }
    assert_eq!(sigma_gamma_sq(1.0, 1.0).unwrap(), 0.0);
    assert!(sigma_gamma_sq(BETA_CRITICAL, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wick_odd_moments_vanish_and_even_are_double_factorials(k in 1u32..6, s in 0.01f64..4.0) {
        prop_assert_eq!(wick_moment(2 * k + 1, s).unwrap(), 0.0);
        let df: f64 = (1..2 * k).step_by(2).map(|j| j as f64).product();
        let w = wick_moment(2 * k, s).unwrap();
        prop_assert!((w - df * s.powi(k as i32)).abs() <= 1e-12 * w.abs());
    }

    #[test]
    fn oracle_decreases_with_separation(a in 0.0f64..0.6, b in 0.0f64..0.6) {
        let p = build_profile("standard-bump", 256).unwrap();
        let scale = make_scale_set(1.0, 0.0, 0.2, p.l2_norm_sq).unwrap();
        let (near, far) = (a.min(b), a.max(b));
        let x = second_moment_oracle(&scale, 0.05, near, &p, 1e-5).unwrap();
        let y = second_moment_oracle(&scale, 0.05, far, &p, 1e-5).unwrap();
        prop_assert!(y.value >= 1.0);
        prop_assert!(x.value >= y.value - x.error_estimate - y.error_estimate);
    }
}
