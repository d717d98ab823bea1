//! Replica runs with an append-only checkpoint, shared by `simulate` and `sweep`.

use crate::report::{build_report, write_json};
use crate::{AcceptanceFailure, RunArgs};
use anyhow::{bail, Context, Result};
use kpzlab::config::{hex_digest, ExperimentConfig};
use kpzlab::ensemble::{avg_name, ReplicaRecord};
use kpzlab::experiments::{assemble, profile_of, sweep_violations, trend_report, AnyEnsemble, SampleSet};
use kpzlab::KpzError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

const CHECKPOINT: &str = "checkpoint.csv";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub code_version: String,
    pub profile: String,
    pub precision: String,
    pub statistics: Vec<String>,
    /// Noise seed of each replica.
    pub seeds: BTreeMap<u64, u64>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// SHA-256 of each output file.
    pub digests: BTreeMap<String, String>,
    /// SHA-256 over the config hash and the output digests.
    pub run_digest: Option<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    write_json(&dir.join(MANIFEST), m)
}

/// Records already in the checkpoint, keyed by (level, replica).
fn read_checkpoint(path: &Path, names: &[String]) -> Result<BTreeMap<(usize, u64), ReplicaRecord>> {
    let mut out = BTreeMap::new();
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let expected = checkpoint_header(names);
    if header != expected {
        bail!(KpzError::Config(vec![format!("{} has header `{header}`, expected `{expected}`", path.display())]));
    }
    for (i, line) in lines.enumerate() {
        let line = line?;
        let cells: Vec<&str> = line.split(',').collect();
        // a torn final line from an interrupted run is dropped
        if cells.len() != 4 + names.len() {
            continue;
        }
        let bad = || KpzError::Parse(format!("{}:{}: malformed row", path.display(), i + 2));
        let level: usize = cells[0].parse().map_err(|_| bad())?;
        let eps: f64 = cells[1].parse().map_err(|_| bad())?;
        let replica: u64 = cells[2].parse().map_err(|_| bad())?;
        let seed: u64 = cells[3].parse().map_err(|_| bad())?;
        let values = cells[4..].iter().map(|c| c.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
        out.entry((level, replica)).or_insert(ReplicaRecord { level, eps, replica, seed, values });
    }
    Ok(out)
}

fn checkpoint_header(names: &[String]) -> String {
    format!("level,eps,replica,seed,{}", names.join(","))
}

fn record_line(r: &ReplicaRecord) -> String {
    let vals: Vec<String> = r.values.iter().map(|v| format!("{v:e}")).collect();
    format!("{},{},{},{},{}", r.level, r.eps, r.replica, r.seed, vals.join(","))
}

pub struct RunOutput {
    pub cfg: ExperimentConfig,
    pub sets: Vec<SampleSet>,
    pub manifest: RunManifest,
}

/// Run (or finish) every replica of the configuration into `out`.
fn execute(args: &RunArgs) -> Result<RunOutput> {
    let (cfg, out) = args.load()?;
    let profile = profile_of(&cfg)?;
    let ens = AnyEnsemble::build(&cfg, &profile)?;
    let names = ens.names().to_vec();
    let levels = cfg.eps_values().len();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join(CHECKPOINT);

    let (mut done, mut manifest) = if args.resume && ckpt.exists() {
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST))?)
            .context("reading the manifest of the interrupted run")?;
        if m.config_hash != cfg.hash() {
            bail!(KpzError::Config(vec![format!(
                "{} was written by a different configuration (hash {}, now {})",
                out.display(),
                m.config_hash,
                cfg.hash()
            )]));
        }
        (read_checkpoint(&ckpt, &names)?, m)
    } else {
        if ckpt.exists() {
            bail!(KpzError::Config(vec![format!(
                "{} already holds a checkpoint; pass --resume or choose another --out-dir",
                out.display()
            )]));
        }
        let mut f = File::create(&ckpt)?;
        writeln!(f, "{}", checkpoint_header(&names))?;
        let m = RunManifest {
            config: cfg.clone(),
            config_hash: cfg.hash(),
            code_version: format!("kpzlab {}", env!("CARGO_PKG_VERSION")),
            profile: format!("{}@{}", cfg.profile.kind, cfg.profile.resolution),
            precision: format!("{:?}", cfg.precision).to_lowercase(),
            statistics: names.clone(),
            seeds: BTreeMap::new(),
            started_unix: now(),
            finished_unix: None,
            digests: BTreeMap::new(),
            run_digest: None,
        };
        write_manifest(&out, &m)?;
        (BTreeMap::new(), m)
    };

    // a replica counts as done only when every level was recorded
    let todo: Vec<u64> =
        (0..cfg.replicas).filter(|r| (0..levels).any(|l| !done.contains_key(&(l, *r)))).collect();
    if !todo.is_empty() {
        eprintln!("kpzlab: {} replicas to run ({} already checkpointed)", todo.len(), cfg.replicas as usize - todo.len());
        let sink = Mutex::new(OpenOptions::new().append(true).open(&ckpt)?);
        let write_err = Mutex::new(None::<std::io::Error>);
        let on_record = |r: &ReplicaRecord| {
            let mut f = sink.lock().expect("checkpoint lock");
            if let Err(e) = writeln!(f, "{}", record_line(r)).and_then(|_| f.flush()) {
                write_err.lock().expect("error lock").get_or_insert(e);
            }
        };
        let fresh = ens.run(&todo, &on_record)?;
        if let Some(e) = write_err.into_inner().expect("error lock") {
            return Err(e).context("writing the checkpoint");
        }
        for r in fresh {
            done.entry((r.level, r.replica)).or_insert(r);
        }
    }

    let records: Vec<ReplicaRecord> = done.into_values().filter(|r| r.replica < cfg.replicas).collect();
    manifest.seeds = records.iter().map(|r| (r.replica, r.seed)).collect();
    let sets = assemble(&cfg, &names, &records, &profile)?;
    for s in &sets {
        let csv = s.write(&out, Some(&cfg))?;
        for p in [csv.clone(), csv.with_extension("json")] {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            manifest.digests.insert(name, hex_digest(&std::fs::read(&p)?));
        }
    }
    Ok(RunOutput { cfg, sets, manifest })
}

fn finish(out: &Path, mut m: RunManifest) -> Result<()> {
    for extra in ["report.json", "trend.json", "trend.csv"] {
        let p = out.join(extra);
        if p.exists() {
            m.digests.insert(extra.into(), hex_digest(&std::fs::read(&p)?));
        }
    }
    let mut acc = m.config_hash.clone();
    for (k, v) in &m.digests {
        acc.push_str(&format!("\n{k} {v}"));
    }
    m.run_digest = Some(hex_digest(acc.as_bytes()));
    m.finished_unix = Some(now());
    write_manifest(out, &m)
}

pub fn simulate(args: &RunArgs) -> Result<()> {
    let (cfg, _) = args.load()?;
    if cfg.eps_values().len() != 1 {
        bail!(KpzError::Config(vec!["simulate takes exactly one eps value; use `sweep` for a list".into()]));
    }
    let run = execute(args)?;
    let out = Path::new(&run.cfg.out_dir).to_path_buf();
    let report = build_report(&run.sets, &run.cfg.slack)?;
    write_json(&out.join("report.json"), &report)?;
    report.print();
    finish(&out, run.manifest)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn sweep(args: &RunArgs) -> Result<()> {
    let (cfg, _) = args.load()?;
    let v = sweep_violations(&cfg.eps_values());
    if !v.is_empty() {
        bail!(KpzError::Config(v));
    }
    let run = execute(args)?;
    let out = Path::new(&run.cfg.out_dir).to_path_buf();
    let mut ids: Vec<String> = Vec::new();
    for s in &run.sets {
        if !ids.contains(&s.statistic_id) {
            ids.push(s.statistic_id.clone());
        }
    }
    let mut trends = Vec::new();
    let mut csv = String::from("statistic_id,eps,n,mean,mean_se,variance,variance_se,prediction_var,var_gap,mean_gap,ks\n");
    for id in &ids {
        let ours: Vec<SampleSet> = run.sets.iter().filter(|s| &s.statistic_id == id).cloned().collect();
        let t = trend_report(&ours, run.cfg.slack.trend)?;
        for r in &t.rows {
            csv.push_str(&format!(
                "{id},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.eps,
                r.report.n,
                r.report.mean.value,
                r.report.mean.se,
                r.report.variance.value,
                r.report.variance.se,
                t.prediction_var,
                r.var_gap,
                r.mean_gap,
                r.ks.map(|k| format!("{k:e}")).unwrap_or_default()
            ));
        }
        trends.push(t);
    }
    std::fs::write(out.join("trend.csv"), csv)?;
    write_json(&out.join("trend.json"), &trends)?;
    let report = build_report(&run.sets, &run.cfg.slack)?;
    write_json(&out.join("report.json"), &report)?;
    finish(&out, run.manifest)?;

    let main = avg_name(run.cfg.gamma);
    for t in &trends {
        let verdict = |v: &Option<kpzlab::stats::TrendVerdict>| match v {
            None => "n/a".to_string(),
            Some(v) => format!("{v:?}"),
        };
        println!(
            "{}: var {} mean {} ks {}",
            t.statistic_id,
            verdict(&t.var_trend),
            verdict(&t.mean_trend),
            verdict(&t.ks_trend)
        );
    }
    println!("wrote {}", out.display());
    match trends.iter().find(|t| t.statistic_id == main) {
        Some(t) if !t.holds() => Err(AcceptanceFailure(format!("trend of {main} is not non-increasing")).into()),
        _ => Ok(()),
    }
}
