use crate::report::write_json;
use crate::{AcceptanceFailure, RunArgs};
use anyhow::{bail, Result};
use kpzlab::experiments::{profile_of, validate};
use kpzlab::grid::{coupled_step_counts, GridSpec};
use kpzlab::polymer::{
    bridge_markov_check, decomposition_ratio, estimate_psi, window_steps, FrozenEnvironment, PathEnsembleSpec,
    RatioEstimator,
};
use kpzlab::theory::make_scale_set;
use kpzlab::KpzError;
use serde::Serialize;

#[derive(Serialize)]
struct Line {
    check: &'static str,
    polymer: f64,
    polymer_se: f64,
    reference: f64,
    reference_se: f64,
    z: f64,
    pass: Option<bool>,
}

pub fn run(args: &RunArgs) -> Result<()> {
    let (cfg, out) = args.load()?;
    let eps = cfg.eps_values();
    if eps.len() != 1 {
        bail!(KpzError::Config(vec!["polymer-check takes exactly one eps value".into()]));
    }
    validate(&cfg)?;
    let eps = eps[0];
    let profile = profile_of(&cfg)?;
    let steps = cfg.grid.steps.unwrap_or_else(|| coupled_step_counts(&[eps], cfg.t)[0]);
    let grid = GridSpec::with_steps(cfg.grid.side_len, cfg.grid.n, cfg.t, steps);
    let scale = make_scale_set(cfg.beta, cfg.gamma, eps, profile.l2_norm_sq)?;
    let env = FrozenEnvironment::<f64>::keyed(&profile, &grid, &scale, cfg.seed, args.replica, steps, cfg.noise)?;
    let h0 = cfg.initial_condition()?;
    let x = cfg.center();
    let spec = PathEnsembleSpec { m_paths: cfg.polymer.paths, seed: cfg.polymer.seed, bridge: None };
    let k = cfg.slack.se_multiple;
    let mut lines = Vec::new();
    let mut line = |check, polymer: f64, polymer_se: f64, reference: f64, reference_se: f64, judged: bool| {
        let z = (polymer - reference) / (polymer_se.powi(2) + reference_se.powi(2)).sqrt();
        lines.push(Line { check, polymer, polymer_se, reference, reference_se, z, pass: judged.then_some(z.abs() < k) });
    };

    eprintln!("kpzlab: lattice solve and {} time-reversed paths", spec.m_paths);
    let lattice = env.lattice_value(&h0, steps, x)?;
    let fk = estimate_psi(x, cfg.t, &h0, &env, &spec, true)?;
    if let Some(w) = &fk.warning {
        eprintln!("kpzlab: {w}");
    }
    line("feynman_kac", fk.mean, fk.se, lattice, 0.0, true);

    let window = window_steps(&scale, cfg.t, grid.dt).min(steps);
    eprintln!("kpzlab: bridge Markov check over {window} steps");
    let stored = env.stored_prefix(window)?;
    let m = bridge_markov_check(x, window as f64 * grid.dt, &stored, &spec, cfg.polymer.bridge_paths, cfg.polymer.bridge_stride)?;
    line("bridge_markov", m.free.mean, m.free.se, m.mixed, m.mixed_se, true);

    let paths = decomposition_ratio(x, cfg.t, &h0, &env, &spec, RatioEstimator::CommonPaths)?;
    let lat = decomposition_ratio(x, cfg.t, &h0, &env, &spec, RatioEstimator::Lattice)?;
    line("ratio_numerator", paths.numerator.mean, paths.numerator.se, lat.numerator.mean, 0.0, false);
    line("ratio_denominator", paths.denominator.mean, paths.denominator.se, lat.denominator.mean, 0.0, false);

    println!("check,polymer,polymer_se,reference,reference_se,z,verdict");
    for l in &lines {
        let verdict = match l.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "-",
        };
        println!("{},{:.6},{:.2e},{:.6},{:.2e},{:.2},{verdict}", l.check, l.polymer, l.polymer_se, l.reference, l.reference_se, l.z);
    }
    println!("log ratio: paths {:.6}, lattice {:.6}, target time {:.6}", paths.ratio.ln(), lat.ratio.ln(), lat.target_time);
    std::fs::create_dir_all(&out)?;
    write_json(
        &out.join("polymer_check.json"),
        &serde_json::json!({
            "eps": eps,
            "replica": args.replica,
            "config_hash": cfg.hash(),
            "se_multiple": k,
            "checks": lines,
            "bridge_points": m.points,
            "log_ratio_paths": paths.ratio.ln(),
            "log_ratio_lattice": lat.ratio.ln(),
            "window_steps": lat.window_steps,
            "target_time": lat.target_time,
        }),
    )?;
    let failed: Vec<&str> = lines.iter().filter(|l| l.pass == Some(false)).map(|l| l.check).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AcceptanceFailure(format!("{} outside {k} combined SE", failed.join(", "))).into())
    }
}
