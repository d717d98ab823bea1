use crate::AcceptanceFailure;
use anyhow::{Context, Result};
use clap::Args;
use kpzlab::config::SlackConfig;
use kpzlab::experiments::SampleSet;
use kpzlab::stats::{mean_variance, MomentReport};
use kpzlab::theory::LimitPrediction;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct ReportArgs {
    /// Directory written by `simulate` or `sweep`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Relative variance band; defaults to the value in each sidecar's config.
    #[arg(long)]
    variance_rel: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SetReport {
    pub statistic_id: String,
    pub eps: f64,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Absent below eight samples.
    pub moments: Option<MomentReport>,
    pub prediction: LimitPrediction,
    /// `|var / sigma^2 - 1| <= variance_rel`; absent for point-mass predictions.
    pub variance_in_band: Option<bool>,
    /// KS distance under the 1% critical value; absent for point-mass predictions.
    pub ks_below_critical: Option<bool>,
}

impl SetReport {
    pub fn passed(&self) -> bool {
        self.variance_in_band != Some(false) && self.ks_below_critical != Some(false)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub sets: Vec<SetReport>,
}

impl Report {
    pub fn print(&self) {
        println!("statistic,eps,n,mean,variance,predicted_mean,predicted_var,ks,checks");
        for s in &self.sets {
            let ks = s.moments.as_ref().and_then(|m| m.ks_distance).map(|k| format!("{k:.4}")).unwrap_or_default();
            let checks = match (s.variance_in_band, s.ks_below_critical) {
                (None, None) => "-",
                _ if s.passed() => "pass",
                _ => "FAIL",
            };
            println!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{ks},{checks}",
                s.statistic_id,
                s.eps,
                s.n,
                s.mean,
                s.variance,
                s.prediction.predicted_mean,
                s.prediction.sigma_gamma_sq
            );
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn set_report(s: &SampleSet, variance_rel: f64) -> Result<SetReport> {
    let (mean, variance) = mean_variance(&s.values)?;
    let moments = if s.values.len() >= 8 { Some(s.report()?) } else { None };
    let p = s.prediction;
    let (band, ks) = if p.is_degenerate() {
        (None, None)
    } else {
        let band = (variance / p.sigma_gamma_sq - 1.0).abs() <= variance_rel;
        let ks = moments.as_ref().and_then(|m| m.ks_distance.map(|d| d < m.ks_threshold_at_1pct));
        (Some(band), ks)
    };
    Ok(SetReport {
        statistic_id: s.statistic_id.clone(),
        eps: s.eps,
        n: s.values.len(),
        mean,
        variance,
        moments,
        prediction: p,
        variance_in_band: band,
        ks_below_critical: ks,
    })
}

pub fn build_report(sets: &[SampleSet], slack: &SlackConfig) -> Result<Report> {
    Ok(Report { sets: sets.iter().map(|s| set_report(s, slack.variance_rel)).collect::<Result<_>>()? })
}

#[derive(Deserialize)]
struct SidecarSlack {
    config: Option<kpzlab::config::ExperimentConfig>,
}

pub fn run(a: &ReportArgs) -> Result<()> {
    let mut csvs: Vec<PathBuf> = std::fs::read_dir(&a.out_dir)
        .with_context(|| format!("reading {}", a.out_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.with_extension("json").exists())
        .filter(|p| !matches!(p.file_name().and_then(|n| n.to_str()), Some("checkpoint.csv" | "trend.csv")))
        .collect();
    csvs.sort();
    let mut sets = Vec::new();
    for csv in &csvs {
        let s = SampleSet::read(csv)?;
        let side: SidecarSlack = serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json"))?)?;
        let rel = a
            .variance_rel
            .or(side.config.map(|c| c.slack.variance_rel))
            .unwrap_or_else(|| SlackConfig::default().variance_rel);
        sets.push(set_report(&s, rel)?);
    }
    if sets.is_empty() {
        anyhow::bail!(kpzlab::KpzError::Config(vec![format!("no sample sets in {}", a.out_dir.display())]));
    }
    let report = Report { sets };
    report.print();
    write_json(&a.out_dir.join("report.json"), &report)?;
    let failed: Vec<String> =
        report.sets.iter().filter(|s| !s.passed()).map(|s| format!("{} at eps {}", s.statistic_id, s.eps)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AcceptanceFailure(failed.join(", ")).into())
    }
}
