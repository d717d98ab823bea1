use kpzlab::grid::GridSpec;
use kpzlab::mollifier::{build_profile, v_kernel, MollifierProfile};
use kpzlab::noise::{mollify_slab, sample_noise_slab, NoiseSlab};
use proptest::prelude::*;

fn profile() -> MollifierProfile {
    build_profile("standard-bump", 256).unwrap()
}

fn bump(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Midpoint rule for `int f` over `[-1, 1]^2` with `m` cells per side.
fn midpoint(m: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 2.0 / m as f64;
    let mut acc = 0.0;
    for j in 0..m {
        let y = -1.0 + (j as f64 + 0.5) * h;
        for i in 0..m {
            acc += f(-1.0 + (i as f64 + 0.5) * h, y);
        }
    }
    acc * h * h
}

#[test]
fn l2_norm_matches_richardson_quadrature() {
    let p = profile();
    let norm = |m| {
        let mass = midpoint(m, bump);
        midpoint(m, |x, y| bump(x, y).powi(2)) / (mass * mass)
    };
    let (coarse, fine) = (norm(1000), norm(2000));
    let extrapolated = (4.0 * fine - coarse) / 3.0;
    assert!(((fine - coarse) / fine).abs() < 1e-6);
    assert!(((p.l2_norm_sq - extrapolated) / extrapolated).abs() < 1e-6, "{} vs {extrapolated}", p.l2_norm_sq);
}

#[test]
fn v_integrates_to_one_and_matches_direct_convolution() {
    let p = profile();
    // composite Simpson on [0, 2]
    let m = 4000;
    let h = 2.0 / m as f64;
    let mut acc = 0.0;
    for k in 0..=m {
        let r = k as f64 * h;
        let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * v_kernel(&p, r) * 2.0 * std::f64::consts::PI * r;
    }
    assert!((acc * h / 3.0 - 1.0).abs() < 1e-6, "{}", acc * h / 3.0);

    let c = p.normalization;
    for r in [0.3, 0.9, 1.6] {
        let direct = midpoint(1200, |x, y| c * c * bump(x, y) * bump(x - r, y));
        assert!((v_kernel(&p, r) - direct).abs() < 1e-6, "r = {r}: {} vs {direct}", v_kernel(&p, r));
    }
    assert_eq!(v_kernel(&p, 2.5), 0.0);
}

#[test]
fn white_slab_moments_on_a_large_grid() {
    let g = GridSpec::with_steps(8.0, 512, 0.5, 800);
    let s = sample_noise_slab::<f64>(42, 0, 17, &g);
    let target = g.dt * g.dx() * g.dx();
    let n = s.values.len() as f64;
    let mean = s.values.iter().sum::<f64>() / n;
    let var = s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 5.0 * (target / n).sqrt());
    // chi-square: sd of the sample variance is target sqrt(2 / (n - 1))
    assert!((var - target).abs() < 5.0 * target * (2.0 / (n - 1.0)).sqrt());
}

#[test]
fn unit_mass_input_gives_ones() {
    let p = profile();
    let g = GridSpec::with_steps(2.0, 64, 0.1, 10);
    let dx2 = g.dx() * g.dx();
    let slab = NoiseSlab { values: vec![dx2; g.len()], step_index: 0, replica_id: 0 };
    let out = mollify_slab(&slab, &p, 0.25, &g).unwrap();
    assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-4));
}

#[test]
fn mollified_variance_and_covariance_follow_v() {
    let p = profile();
    let eps = 0.25;
    let g = GridSpec::with_steps(2.0, 64, 0.1, 1000);
    let n = g.n;
    let lags = [0usize, 4, 8]; // 0, eps/2, eps in cells
    let slabs = 1000;
    let mut per_slab = vec![Vec::with_capacity(slabs); lags.len()];
    for k in 0..slabs {
        let s = sample_noise_slab::<f64>(9, 0, k as u64, &g);
        let m = mollify_slab(&s, &p, eps, &g).unwrap();
        for (li, &lag) in lags.iter().enumerate() {
            let mut acc = 0.0;
            for iy in 0..n {
                for ix in 0..n {
                    acc += m.values[iy * n + ix] * m.values[iy * n + (ix + lag) % n];
                }
            }
            per_slab[li].push(acc / (n * n) as f64);
        }
    }
    for (li, &lag) in lags.iter().enumerate() {
        let h = lag as f64 * g.dx();
        let target = g.dt / (eps * eps) * v_kernel(&p, h / eps);
        let xs = &per_slab[li];
        let mean = xs.iter().sum::<f64>() / slabs as f64;
        let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (slabs as f64 - 1.0)).sqrt();
        let se = sd / (slabs as f64).sqrt();
        assert!((mean - target).abs() < 4.0 * se, "lag {lag}: {mean} vs {target} (se {se})");
    }
}

fn small_grid() -> GridSpec {
    GridSpec::with_steps(1.0, 32, 0.1, 10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mollification_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s1 in 0u64..1000, s2 in 0u64..1000) {
        let p = profile();
        let g = small_grid();
        let w1 = sample_noise_slab::<f64>(s1, 0, 0, &g);
        let w2 = sample_noise_slab::<f64>(s2, 1, 0, &g);
        let combo = NoiseSlab {
            values: w1.values.iter().zip(&w2.values).map(|(x, y)| a * x + b * y).collect(),
            step_index: 0,
            replica_id: 0,
        };
        let m1 = mollify_slab(&w1, &p, 0.125, &g).unwrap();
        let m2 = mollify_slab(&w2, &p, 0.125, &g).unwrap();
        let mc = mollify_slab(&combo, &p, 0.125, &g).unwrap();
        let scale = m1.values.iter().chain(&m2.values).fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..g.len() {
            prop_assert!((mc.values[i] - a * m1.values[i] - b * m2.values[i]).abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn mollification_commutes_with_shifts(kx in 0usize..32, ky in 0usize..32, seed in 0u64..1000) {
        let p = profile();
        let g = small_grid();
        let n = g.n;
        let w = sample_noise_slab::<f64>(seed, 0, 3, &g);
        let mut shifted = w.clone();
        for iy in 0..n {
            for ix in 0..n {
                shifted.values[((iy + ky) % n) * n + (ix + kx) % n] = w.values[iy * n + ix];
            }
        }
        let a = mollify_slab(&w, &p, 0.125, &g).unwrap();
        let b = mollify_slab(&shifted, &p, 0.125, &g).unwrap();
        for iy in 0..n {
            for ix in 0..n {
                let d = b.values[((iy + ky) % n) * n + (ix + kx) % n] - a.values[iy * n + ix];
                prop_assert!(d.abs() < 1e-13);
            }
        }
    }
}
