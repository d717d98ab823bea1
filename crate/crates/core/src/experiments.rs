//! Sample sets built from replica ensembles: disc averages, test-function
//! pairings and epsilon sweeps.

use crate::averaging::TestFunction;
use crate::config::{ExperimentConfig, Precision};
use crate::deterministic::{ball_average_of, solve_hbar_torus};
use crate::ensemble::{avg_name, Ensemble, LevelSpec, ProbeSpec, ReplicaRecord, SweepPlan};
use crate::error::{KpzError, Result};
use crate::grid::GridSpec;
use crate::initial::InitialCondition;
use crate::mollifier::{build_profile, MollifierProfile};
use crate::spectral::Spectral2d;
use crate::stats::{mean_variance, moment_report, moments, trend_test, MomentReport, TrendVerdict};
use crate::theory::{height_shift, make_scale_set, predicted_limit_law, LimitPrediction};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const PAIRING_ID: &str = "pairing";

/// Per-replica values of one statistic at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub statistic_id: String,
    pub eps: f64,
    pub replica_ids: Vec<u64>,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub prediction: LimitPrediction,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    statistic_id: String,
    eps: f64,
    config_hash: String,
    prediction: LimitPrediction,
    config: Option<ExperimentConfig>,
    generator: String,
}

impl SampleSet {
    pub fn file_stem(&self) -> String {
        format!("{}_eps{}", self.statistic_id, self.eps)
    }

    /// Write `<stem>.csv` (replica_id, value, seed) and `<stem>.json`.
    pub fn write(&self, dir: &Path, config: Option<&ExperimentConfig>) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.file_stem()));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
        writeln!(f, "replica_id,value,seed")?;
        for ((r, v), s) in self.replica_ids.iter().zip(&self.values).zip(&self.seeds) {
            writeln!(f, "{r},{v:e},{s}")?;
        }
        f.flush()?;
        let side = Sidecar {
            statistic_id: self.statistic_id.clone(),
            eps: self.eps,
            config_hash: self.config_hash.clone(),
            prediction: self.prediction,
            config: config.cloned(),
            generator: format!("kpzlab {}", env!("CARGO_PKG_VERSION")),
        };
        let json = serde_json::to_string_pretty(&side).map_err(|e| KpzError::Parse(e.to_string()))?;
        std::fs::write(dir.join(format!("{}.json", self.file_stem())), json)?;
        Ok(csv)
    }

    /// Read back a set written by [`SampleSet::write`]; `csv` names the data file.
    pub fn read(csv: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json"))?)
            .map_err(|e| KpzError::Parse(e.to_string()))?;
        let text = std::fs::read_to_string(csv)?;
        let (mut replica_ids, mut values, mut seeds) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate().skip(1) {
            let bad = || KpzError::Parse(format!("{}:{}: malformed row", csv.display(), i + 1));
            let mut it = line.split(',');
            replica_ids.push(it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?);
            values.push(it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?);
            seeds.push(it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?);
        }
        Ok(SampleSet {
            statistic_id: side.statistic_id,
            eps: side.eps,
            replica_ids,
            values,
            seeds,
            config_hash: side.config_hash,
            prediction: side.prediction,
        })
    }

    /// Moments, with the KS distance when the prediction is not a point mass.
    pub fn report(&self) -> Result<MomentReport> {
        let p = &self.prediction;
        if p.is_degenerate() {
            moments(&self.values)
        } else {
            moment_report(&self.values, p.predicted_mean, p.sigma_gamma_sq)
        }
    }
}

/// Validate a config, collecting every problem.
pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let mut problems = cfg.violations();
    // the grid checks need a usable horizon, scale list and initial condition
    let gridable = cfg.t > 0.0
        && !cfg.eps_values().is_empty()
        && (0.0..=1.0).contains(&cfg.gamma)
        && cfg.initial_condition().is_ok();
    if gridable {
        if let Err(e) = build_ensemble_check(cfg) {
            match e {
                KpzError::Config(v) => problems.extend(v.into_iter().filter(|p| !problems.contains(p)).collect::<Vec<_>>()),
                other => return Err(other),
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(KpzError::Config(problems))
    }
}

fn build_ensemble_check(cfg: &ExperimentConfig) -> Result<()> {
    let h0 = cfg.initial_condition()?;
    let eps = cfg.eps_values();
    let steps = single_steps(cfg)?;
    for (i, &e) in eps.iter().enumerate() {
        let scale = make_scale_set(cfg.beta, cfg.gamma, e, 1.0)?;
        let count = steps.as_ref().map(|s| s[i]).unwrap_or_else(|| crate::grid::coupled_step_counts(&eps, cfg.t)[i]);
        let grid = GridSpec::with_steps(cfg.grid.side_len, cfg.grid.n, cfg.t, count);
        let v = grid.violations(&scale);
        if !v.is_empty() {
            return Err(KpzError::Config(v));
        }
        let u = h0.sample(&grid, cfg.lipschitz_max());
        if let Err(e) = u {
            return Err(KpzError::Config(vec![e.to_string()]));
        }
    }
    Ok(())
}

fn single_steps(cfg: &ExperimentConfig) -> Result<Option<Vec<usize>>> {
    match cfg.grid.steps {
        None => Ok(None),
        Some(s) if cfg.eps_values().len() == 1 => Ok(Some(vec![s])),
        Some(_) => Err(KpzError::Config(vec!["grid.steps applies to single-eps runs only".into()])),
    }
}

pub fn profile_of(cfg: &ExperimentConfig) -> Result<MollifierProfile> {
    build_profile(&cfg.profile.kind, cfg.profile.resolution)
}

pub fn sweep_plan(cfg: &ExperimentConfig) -> Result<SweepPlan> {
    Ok(SweepPlan {
        beta: cfg.beta,
        t: cfg.t,
        side_len: cfg.grid.side_len,
        n: cfg.grid.n,
        seed: cfg.seed,
        h0: cfg.initial_condition()?,
        noise: cfg.noise,
        levels: cfg.eps_values().into_iter().map(|eps| LevelSpec { eps, replicas: cfg.replicas }).collect(),
        steps: single_steps(cfg)?,
    })
}

/// Probes for the configured statistics: the disc average at `gamma`, the
/// `gamma = 0` point value, and the pairing when `g` is set.
pub fn probe_spec(cfg: &ExperimentConfig) -> Result<ProbeSpec> {
    let mut gammas = vec![cfg.gamma];
    if cfg.gamma != 0.0 {
        gammas.push(0.0);
    }
    Ok(ProbeSpec {
        center: cfg.center(),
        local_gammas: gammas,
        pairing: cfg.test_function()?.map(|g| (cfg.gamma, g)),
        pooled: None,
        ratio: None,
    })
}

/// A precision-erased ensemble.
pub enum AnyEnsemble {
    F32(Ensemble<f32>),
    F64(Ensemble<f64>),
}

impl AnyEnsemble {
    pub fn build(cfg: &ExperimentConfig, profile: &MollifierProfile) -> Result<Self> {
        validate(cfg)?;
        let (plan, probes) = (sweep_plan(cfg)?, probe_spec(cfg)?);
        Ok(match cfg.precision {
            Precision::F32 => AnyEnsemble::F32(Ensemble::new(plan, probes, profile)?),
            Precision::F64 => AnyEnsemble::F64(Ensemble::new(plan, probes, profile)?),
        })
    }

    pub fn names(&self) -> &[String] {
        match self {
            AnyEnsemble::F32(e) => e.names(),
            AnyEnsemble::F64(e) => e.names(),
        }
    }

    pub fn run(&self, replicas: &[u64], on_record: &(dyn Fn(&ReplicaRecord) + Sync)) -> Result<Vec<ReplicaRecord>> {
        match self {
            AnyEnsemble::F32(e) => e.run(replicas, on_record),
            AnyEnsemble::F64(e) => e.run(replicas, on_record),
        }
    }
}

/// Prediction for the disc average: point value of `hbar` for `gamma < 1`,
/// unit-disc average for `gamma = 1`.
pub fn local_prediction(cfg: &ExperimentConfig, gamma: f64, eps: f64) -> Result<LimitPrediction> {
    let h0 = cfg.initial_condition()?;
    let l = cfg.grid.side_len;
    let det = if gamma < 1.0 {
        solve_hbar_torus(&h0, cfg.t, cfg.center(), l)?
    } else {
        ball_average_of(|p| solve_hbar_torus(&h0, cfg.t, p, l), cfg.center(), 1.0)?
    };
    let scale = make_scale_set(cfg.beta, gamma, eps, 1.0)?;
    predicted_limit_law(&scale, det)
}

/// `hbar(t, .)` at the grid nodes.
pub fn hbar_field(h0: &InitialCondition, t: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    match h0 {
        InitialCondition::Tabulated(_) => {
            // per-point quadrature is too slow for a whole field: heat-flow
            // the sampled exponential spectrally instead
            let spectral = Spectral2d::<f64>::new(grid.n);
            let mut u: Vec<f64> = h0.sample(grid, f64::INFINITY)?.iter().map(|h| h.exp()).collect();
            let mult = spectral.multiplier(grid.side_len, |kx, ky| (-0.5 * (kx * kx + ky * ky) * t).exp());
            let mut w = spectral.work();
            spectral.apply_multiplier(&mut u, &mult, &mut w);
            Ok(u.iter().map(|v| v.ln()).collect())
        }
        _ => {
            let mut out = Vec::with_capacity(grid.len());
            for iy in 0..grid.n {
                for ix in 0..grid.n {
                    out.push(solve_hbar_torus(h0, t, grid.node(ix, iy), grid.side_len)?);
                }
            }
            Ok(out)
        }
    }
}

/// Prediction for the pairing: the Riemann sum of `(hbar + shift) g dx^2`.
pub fn pairing_prediction(
    cfg: &ExperimentConfig,
    g: &TestFunction,
    profile: &MollifierProfile,
) -> Result<LimitPrediction> {
    let h0 = cfg.initial_condition()?;
    let grid = GridSpec::with_steps(cfg.grid.side_len, cfg.grid.n, cfg.t, 1);
    let gv = g.sample(profile, &grid);
    let hbar = hbar_field(&h0, cfg.t, &grid)?;
    let dx2 = grid.dx() * grid.dx();
    let det: f64 = hbar.iter().zip(&gv).map(|(h, g)| h * g).sum::<f64>() * dx2;
    let mass: f64 = gv.iter().sum::<f64>() * dx2;
    let shift = height_shift(cfg.beta)? * mass;
    Ok(LimitPrediction { sigma_gamma_sq: 0.0, height_shift: shift, deterministic_part: det, predicted_mean: det + shift })
}

/// Split ensemble records into one sample set per (statistic, eps).
pub fn assemble(
    cfg: &ExperimentConfig,
    names: &[String],
    records: &[ReplicaRecord],
    profile: &MollifierProfile,
) -> Result<Vec<SampleSet>> {
    let hash = cfg.hash();
    let g = cfg.test_function()?;
    let pair_pred = match &g {
        Some(g) => Some(pairing_prediction(cfg, g, profile)?),
        None => None,
    };
    let mut out = Vec::new();
    for eps in cfg.eps_values() {
        let recs: Vec<&ReplicaRecord> = records.iter().filter(|r| r.eps == eps).collect();
        let mut stats = vec![(avg_name(cfg.gamma), local_prediction(cfg, cfg.gamma, eps)?)];
        if cfg.gamma != 0.0 {
            stats.push((avg_name(0.0), local_prediction(cfg, 0.0, eps)?));
        }
        if let Some(p) = pair_pred {
            stats.push((PAIRING_ID.to_string(), p));
        }
        for (id, prediction) in stats {
            let k = names.iter().position(|n| *n == id).ok_or_else(|| KpzError::domain(format!("no probe {id}")))?;
            out.push(SampleSet {
                statistic_id: id,
                eps,
                replica_ids: recs.iter().map(|r| r.replica).collect(),
                values: recs.iter().map(|r| r.values[k]).collect(),
                seeds: recs.iter().map(|r| r.seed).collect(),
                config_hash: hash.clone(),
                prediction,
            });
        }
    }
    Ok(out)
}

/// Run every configured replica and return all sample sets.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<SampleSet>> {
    let profile = profile_of(cfg)?;
    let ens = AnyEnsemble::build(cfg, &profile)?;
    let ids: Vec<u64> = (0..cfg.replicas).collect();
    let records = ens.run(&ids, &|_| {})?;
    assemble(cfg, ens.names(), &records, &profile)
}

fn single_eps(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.eps_values().len() != 1 {
        return Err(KpzError::Config(vec!["this operation takes exactly one eps value".into()]));
    }
    Ok(())
}

/// Disc averages of `h` at the center with radius `eps^(1 - gamma)`.
pub fn run_replicas(cfg: &ExperimentConfig) -> Result<SampleSet> {
    single_eps(cfg)?;
    let id = avg_name(cfg.gamma);
    run_all(cfg)?.into_iter().find(|s| s.statistic_id == id).ok_or_else(|| KpzError::domain("missing statistic"))
}

/// Pairings of the disc-averaged field with the configured test function.
pub fn field_pairing(cfg: &ExperimentConfig) -> Result<SampleSet> {
    single_eps(cfg)?;
    if cfg.g.is_none() {
        return Err(KpzError::Config(vec!["field pairing needs a test function (g.*)".into()]));
    }
    run_all(cfg)?.into_iter().find(|s| s.statistic_id == PAIRING_ID).ok_or_else(|| KpzError::domain("missing statistic"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub report: MomentReport,
    pub var_gap: f64,
    pub mean_gap: f64,
    pub ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub statistic_id: String,
    pub prediction_var: f64,
    pub rows: Vec<SweepRow>,
    /// Verdicts on `var_gap`, `mean_gap` and `ks`; absent for a single scale.
    pub var_trend: Option<TrendVerdict>,
    pub mean_trend: Option<TrendVerdict>,
    pub ks_trend: Option<TrendVerdict>,
}

impl TrendReport {
    pub fn holds(&self) -> bool {
        [self.var_trend, self.mean_trend, self.ks_trend].iter().flatten().all(|v| v.holds())
    }
}

/// Discrepancy rows of one statistic across the sweep.
pub fn trend_report(sets: &[SampleSet], slack: f64) -> Result<TrendReport> {
    let first = sets.first().ok_or(KpzError::TooFewSamples { need: 1, got: 0 })?;
    let mut rows = Vec::new();
    for s in sets {
        let report = s.report()?;
        let (mean, var) = mean_variance(&s.values)?;
        rows.push(SweepRow {
            eps: s.eps,
            var_gap: (var - s.prediction.sigma_gamma_sq).abs(),
            mean_gap: (mean - s.prediction.predicted_mean).abs(),
            ks: report.ks_distance,
            report,
        });
    }
    let verdict = |v: Vec<f64>| -> Result<Option<TrendVerdict>> {
        if v.len() < 2 {
            Ok(None)
        } else {
            trend_test(&v, slack).map(Some)
        }
    };
    let ks: Option<Vec<f64>> = rows.iter().map(|r| r.ks).collect();
    Ok(TrendReport {
        statistic_id: first.statistic_id.clone(),
        prediction_var: first.prediction.sigma_gamma_sq,
        var_trend: verdict(rows.iter().map(|r| r.var_gap).collect())?,
        mean_trend: verdict(rows.iter().map(|r| r.mean_gap).collect())?,
        ks_trend: match ks {
            Some(k) => verdict(k)?,
            None => None,
        },
        rows,
    })
}

/// Check the sweep list: one value, or at least three strictly decreasing.
pub fn sweep_violations(eps: &[f64]) -> Vec<String> {
    let mut out = Vec::new();
    if eps.len() == 2 {
        out.push("an eps sweep needs one value or at least three".into());
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        out.push(format!("eps values must be strictly decreasing, got {eps:?}"));
    }
    out
}

/// Run the sweep and report trends of the disc-average statistic.
pub fn epsilon_sweep(cfg: &ExperimentConfig) -> Result<(TrendReport, Vec<SampleSet>)> {
    let v = sweep_violations(&cfg.eps_values());
    if !v.is_empty() {
        return Err(KpzError::Config(v));
    }
    let sets = run_all(cfg)?;
    let id = avg_name(cfg.gamma);
    let ours: Vec<SampleSet> = sets.iter().filter(|s| s.statistic_id == id).cloned().collect();
    Ok((trend_report(&ours, cfg.slack.trend)?, sets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "beta = 1.0\neps = 0.25\nt = 0.05\nreplicas = 8\nseed = 5\ngrid.n = 64\ngrid.side_len = 4.0\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn deterministic_and_written() {
        let cfg = small("");
        let a = run_replicas(&cfg).unwrap();
        let b = run_replicas(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 8);
        let dir = tempfile::tempdir().unwrap();
        let csv = a.write(dir.path(), Some(&cfg)).unwrap();
        let back = SampleSet::read(&csv).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn sweep_lists() {
        assert!(sweep_violations(&[0.1]).is_empty());
        assert!(sweep_violations(&[0.1, 0.07, 0.05]).is_empty());
        assert_eq!(sweep_violations(&[0.1, 0.07]).len(), 1);
        assert_eq!(sweep_violations(&[0.05, 0.07, 0.1]).len(), 1);
    }

    #[test]
    fn zero_replicas_rejected() {
        let cfg = small("").clone();
        let cfg = ExperimentConfig { replicas: 0, ..cfg };
        assert!(matches!(validate(&cfg), Err(KpzError::Config(_))));
    }
}
