use kpzlab::averaging::{local_average, pairing_direct, pairing_weights, TestFunction};
use kpzlab::config::ExperimentConfig;
use kpzlab::deterministic::solve_hbar_torus;
use kpzlab::ensemble::avg_name;
use kpzlab::experiments::{
    epsilon_sweep, field_pairing, local_prediction, pairing_prediction, profile_of, run_replicas, trend_report,
    AnyEnsemble,
};
use kpzlab::grid::{min_image, GridSpec};
use kpzlab::mollifier::build_profile;
use kpzlab::theory::height_shift;
use proptest::prelude::*;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

const SMALL: &str = "beta = 1.0\neps = 0.25\nt = 0.05\nreplicas = 8\nseed = 9\ngrid.n = 64\ngrid.side_len = 4.0\n";

#[test]
fn quadratic_disc_average_matches_a_full_scan() {
    let g = GridSpec::with_steps(8.0, 128, 0.5, 1);
    let h: Vec<f64> = (0..g.len())
        .map(|i| {
            let p = g.node(i % g.n, i / g.n);
            0.3 * (p[0] - 2.0).powi(2) - 0.7 * (p[1] - 5.0) * (p[0] - 1.0) + 0.1 * p[1]
        })
        .collect();
    for center in [[4.0, 4.0], [0.03, 7.9], [2.71, 6.02]] {
        let radius = 10.0 * g.dx();
        let (mut sum, mut count) = (0.0, 0usize);
        for iy in 0..g.n {
            for ix in 0..g.n {
                let p = g.node(ix, iy);
                let d = min_image(p[0] - center[0], 8.0).hypot(min_image(p[1] - center[1], 8.0));
                if d <= radius {
                    sum += h[iy * g.n + ix];
                    count += 1;
                }
            }
        }
        let scan = sum / count as f64;
        let fast = local_average(&h, center, radius, &g).unwrap();
        assert!((fast - scan).abs() < 1e-12, "{center:?}: {fast} vs {scan}");
    }
}

#[test]
fn constant_and_affine_fields() {
    let g = GridSpec::with_steps(8.0, 128, 0.5, 1);
    let c = vec![-0.4; g.len()];
    assert!((local_average(&c, [3.3, 1.2], 0.7, &g).unwrap() + 0.4).abs() < 1e-14);
    let center = [4.0, 4.0];
    let (a, b) = ([0.8, -1.3], 0.25);
    let h: Vec<f64> = (0..g.len())
        .map(|i| {
            let p = g.node(i % g.n, i / g.n);
            a[0] * (p[0] - center[0]) + a[1] * (p[1] - center[1]) + b
        })
        .collect();
    let v = local_average(&h, center, 0.5, &g).unwrap();
    assert!((v - b).abs() < a[0].hypot(a[1]) * g.dx(), "{v}");
    assert!(local_average(&h, [4.01, 4.01], 1e-4, &g).is_err());
}

#[test]
fn dipole_pairing_kills_constants() {
    let p = build_profile("standard-bump", 256).unwrap();
    let g = GridSpec::with_steps(4.0, 64, 0.5, 1);
    let dip = TestFunction::Dipole { center: [2.0, 2.0], radius: 0.6 };
    let gv = dip.sample(&p, &g);
    let h = vec![1.7; g.len()];
    let w = pairing_weights(&gv, &g, 0.3).unwrap();
    let fast: f64 = h.iter().zip(&w).map(|(a, b)| a * b).sum();
    assert!(fast.abs() < 1e-12, "{fast}");
    assert!(pairing_direct(&h, &gv, &g, 0.3).unwrap().abs() < 1e-12);
}

#[test]
fn pairing_weights_match_direct_sum() {
    let p = build_profile("standard-bump", 256).unwrap();
    let g = GridSpec::with_steps(4.0, 64, 0.5, 1);
    let bump = TestFunction::Bump { center: [1.7, 2.2], radius: 0.5 };
    let gv = bump.sample(&p, &g);
    let h: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 101) as f64 / 101.0).sin()).collect();
    let w = pairing_weights(&gv, &g, 0.25).unwrap();
    let fast: f64 = h.iter().zip(&w).map(|(a, b)| a * b).sum();
    let direct = pairing_direct(&h, &gv, &g, 0.25).unwrap();
    assert!((fast - direct).abs() < 1e-10, "{fast} vs {direct}");
}

#[test]
fn weak_disorder_samples_sit_on_the_deterministic_prediction() {
    let c = cfg(&format!(
        "{SMALL}beta = 0.001\ngamma = 0.0\nh0.kind = \"gaussian_bump\"\nh0.amplitude = 0.5\nh0.s0 = 1.0\n"
    )
    .replacen("beta = 1.0\n", "", 1));
    let s = run_replicas(&c).unwrap();
    assert_eq!(s.values.len(), 8);
    assert!(s.prediction.sigma_gamma_sq < 1e-6);
    for v in &s.values {
        assert!((v - s.prediction.predicted_mean).abs() < 1e-2, "{v} vs {:?}", s.prediction);
    }
}

#[test]
fn weak_disorder_pairing_matches_the_deterministic_integral() {
    let c = cfg(&format!(
        "{SMALL}beta = 0.001\ngamma = 0.0\nnoise = \"zero\"\nh0.kind = \"gaussian_bump\"\nh0.amplitude = 0.5\nh0.s0 = 1.0\ng.radius = 0.4\n"
    )
    .replacen("beta = 1.0\n", "", 1));
    let s = field_pairing(&c).unwrap();
    // the prediction itself against an independent quadrature of hbar g
    let p = profile_of(&c).unwrap();
    let g = c.test_function().unwrap().unwrap();
    let m = 400;
    let h = 0.8 / m as f64;
    let mut integral = 0.0;
    for j in 0..m {
        for i in 0..m {
            let x = [1.6 + (i as f64 + 0.5) * h, 1.6 + (j as f64 + 0.5) * h];
            let gx = g.eval(&p, x, 4.0);
            if gx != 0.0 {
                integral += solve_hbar_torus(&c.initial_condition().unwrap(), 0.05, x, 4.0).unwrap() * gx * h * h;
            }
        }
    }
    let pred = pairing_prediction(&c, &g, &p).unwrap();
    assert!((pred.deterministic_part - integral).abs() < 1e-3, "{pred:?} vs {integral}");
    assert!(s.values.iter().all(|v| *v == s.values[0]));
    assert!((s.values[0] - integral).abs() < 1e-2, "{} vs {integral}", s.values[0]);
}

#[test]
fn zero_noise_sweep_shows_pure_bias() {
    let c = cfg("beta = 1.0\ngamma = 0.5\neps = [0.25, 0.2, 0.125]\nt = 0.05\nreplicas = 8\nnoise = \"zero\"\n\
                 grid.n = 128\ngrid.side_len = 4.0\n");
    let (report, sets) = epsilon_sweep(&c).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.var_trend.is_some());
    let sigma = report.prediction_var;
    for (row, set) in report.rows.iter().zip(sets.iter().filter(|s| s.statistic_id == avg_name(0.5))) {
        // flat data and no noise: h stays zero, so the gaps are the prediction itself
        assert!(set.values.iter().all(|v| v.abs() < 1e-12));
        assert!((row.var_gap - sigma).abs() < 1e-12);
        assert!((row.mean_gap - height_shift(1.0).unwrap().abs()).abs() < 1e-12);
    }
}

#[test]
fn single_scale_report_has_no_verdict() {
    let c = cfg(SMALL);
    let (report, _) = epsilon_sweep(&c).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.var_trend.is_none() && report.mean_trend.is_none() && report.ks_trend.is_none());
    let s = run_replicas(&c).unwrap();
    assert_eq!(trend_report(&[s], 0.0).unwrap().rows.len(), 1);
}

#[test]
fn unit_radius_prediction_is_degenerate() {
    let c = cfg("beta = 1.0\ngamma = 1.0\neps = 0.07\nreplicas = 100\nh0.kind = \"gaussian_bump\"\nh0.amplitude = 1.0\nh0.s0 = 1.0\n");
    let p = local_prediction(&c, 1.0, 0.07).unwrap();
    assert_eq!(p.sigma_gamma_sq, 0.0);
    // disc average of log(1 + exp(-r^2 / 3) / 1.5) over the unit disc, in polar form
    let m = 2000;
    let mut acc = 0.0;
    for k in 0..m {
        let r = (k as f64 + 0.5) / m as f64;
        acc += (1.0 + (-r * r / 3.0).exp() / 1.5).ln() * 2.0 * r / m as f64;
    }
    assert!((p.deterministic_part - acc).abs() < 1e-6, "{} vs {acc}", p.deterministic_part);
    assert!((p.predicted_mean - p.deterministic_part - height_shift(1.0).unwrap()).abs() < 1e-12);
}

#[test]
fn replica_order_does_not_change_values() {
    let c = cfg(SMALL);
    let p = profile_of(&c).unwrap();
    let ens = AnyEnsemble::build(&c, &p).unwrap();
    let a = ens.run(&[0, 1, 2, 3], &|_| {}).unwrap();
    let b = ens.run(&[3, 1, 0, 2], &|_| {}).unwrap();
    for r in &a {
        let twin = b.iter().find(|x| x.replica == r.replica).unwrap();
        assert_eq!(twin.values, r.values);
        assert_eq!(twin.seed, r.seed);
    }
}

#[test]
fn invalid_configs_are_reported_together() {
    let c = cfg("beta = 1.0\neps = 0.07\nreplicas = 0\ngrid.n = 64\n");
    let err = run_replicas(&c).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("replicas"), "{text}");
    let c = cfg("beta = 1.0\neps = [0.1, 0.07]\nreplicas = 4\n");
    assert!(epsilon_sweep(&c).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn disc_average_is_translation_covariant(sx in 0usize..64, sy in 0usize..64, r in 0.05f64..0.9) {
        let g = GridSpec::with_steps(4.0, 64, 0.5, 1);
        let h: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 613) as f64).collect();
        let mut shifted = vec![0.0; g.len()];
        for iy in 0..64 {
            for ix in 0..64 {
                shifted[((iy + sy) % 64) * 64 + (ix + sx) % 64] = h[iy * 64 + ix];
            }
        }
        let c = g.node(10, 20);
        let moved = g.node((10 + sx) % 64, (20 + sy) % 64);
        let a = local_average(&h, c, r, &g).unwrap();
        let b = local_average(&shifted, moved, r, &g).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }
}
