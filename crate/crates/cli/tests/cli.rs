use std::path::Path;
use std::process::{Command, Output};

fn kpzlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpzlab")).args(args).env("KPZLAB_WORKERS", "2").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY: &str = "beta = 1.0\ngamma = 0.5\neps = 0.25\nt = 0.05\nreplicas = 12\nseed = 4\n\
                    grid.n = 64\ngrid.side_len = 4.0\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn sample_csv(dir: &Path) -> Vec<u8> {
    std::fs::read(dir.join("avg_gamma_0.5_eps0.25.csv")).unwrap()
}

#[test]
fn oracle_values_and_regime_exit() {
    let o = kpzlab(&["oracle", "--beta", "1", "--gamma", "0.5"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("sigma_gamma_sq,0.5,0.0904254284"), "{}", stdout(&o));
    let o = kpzlab(&["oracle", "--beta", "1", "--gamma", "1", "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let s = rows.as_array().unwrap().iter().find(|r| r["quantity"] == "sigma_gamma_sq").unwrap();
    assert_eq!(s["value"], 0.0);
    let o = kpzlab(&["oracle", "--beta", "2.6"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invalid_config_exits_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("replicas = 12", "replicas = 0").replace("t = 0.05", "t = -1.0"));
    let o = kpzlab(&["simulate", "--config", &cfg, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("replicas") && err.contains("t = -1"), "{err}");
    let bad = write_config(dir.path(), "beta = 1.0\neps = 0.1\nreplicas = 3\nbogus = 2\n");
    assert_eq!(code(&kpzlab(&["simulate", "--config", &bad])), 2);
}

#[test]
fn simulate_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for d in [&a, &b] {
        let o = kpzlab(&["simulate", "--config", &cfg, "--out-dir", d.to_str().unwrap()]);
        assert!(code(&o) == 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(sample_csv(&a), sample_csv(&b));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_object().unwrap().len(), 12);
    assert!(manifest["digests"]["avg_gamma_0.5_eps0.25.csv"].is_string());
    assert!(manifest["run_digest"].is_string());
    assert!(a.join("report.json").exists());

    // rerunning into a used directory needs --resume
    assert_eq!(code(&kpzlab(&["simulate", "--config", &cfg, "--out-dir", a.to_str().unwrap()])), 2);

    // interrupt: keep the header and five records, plus a torn line
    std::fs::create_dir_all(&c).unwrap();
    std::fs::copy(a.join("manifest.json"), c.join("manifest.json")).unwrap();
    let ckpt = std::fs::read_to_string(a.join("checkpoint.csv")).unwrap();
    let mut kept: String = ckpt.lines().take(6).map(|l| format!("{l}\n")).collect();
    kept.push_str("3,0.25,");
    std::fs::write(c.join("checkpoint.csv"), kept).unwrap();
    let o = kpzlab(&["simulate", "--config", &cfg, "--out-dir", c.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("7 replicas to run"));
    assert_eq!(sample_csv(&a), sample_csv(&c));

    // a different seed is a different run
    let o = kpzlab(&["simulate", "--config", &cfg, "--out-dir", c.to_str().unwrap(), "--resume", "--seed", "99"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let flat = write_config(dir.path(), &TINY.replace("beta = 1.0", "beta = 0.0"));
    let out = dir.path().join("flat");
    assert_eq!(code(&kpzlab(&["simulate", "--config", &flat, "--out-dir", out.to_str().unwrap()])), 0);
    // beta = 0 predicts point masses, so there is nothing to fail
    let o = kpzlab(&["report", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("noisy");
    assert_eq!(code(&kpzlab(&["simulate", "--config", &cfg, "--out-dir", out.to_str().unwrap()])), 0);
    let o = kpzlab(&["report", "--out-dir", out.to_str().unwrap(), "--variance-rel", "0"]);
    assert_eq!(code(&o), 5);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn sweep_writes_trends() {
    let dir = tempfile::tempdir().unwrap();
    let two = write_config(dir.path(), &TINY.replace("eps = 0.25", "eps = [0.25, 0.2]"));
    assert_eq!(code(&kpzlab(&["sweep", "--config", &two])), 2);
    let three = write_config(
        dir.path(),
        &TINY.replace("eps = 0.25", "eps = [0.25, 0.2, 0.125]").replace("grid.n = 64", "grid.n = 128"),
    );
    let out = dir.path().join("s");
    let o = kpzlab(&["sweep", "--config", &three, "--out-dir", out.to_str().unwrap()]);
    assert!([0, 5].contains(&code(&o)), "{}", String::from_utf8_lossy(&o.stderr));
    let trend = std::fs::read_to_string(out.join("trend.csv")).unwrap();
    assert_eq!(trend.lines().filter(|l| l.starts_with("avg_gamma_0.5,")).count(), 3);
    assert!(stdout(&o).contains("avg_gamma_0.5: var"));
}

#[test]
fn polymer_check_passes_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "beta = 1.0\ngamma = 0.0\neps = 0.125\nt = 0.1\nreplicas = 1\nseed = 12\ngrid.n = 64\ngrid.side_len = 2.0\n\
         polymer.paths = 20000\npolymer.seed = 3\npolymer.bridge_paths = 50\n",
    );
    let out = dir.path().join("p");
    let o = kpzlab(&["polymer-check", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--replica", "2"]);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("feynman_kac") && text.contains("bridge_markov"));
    assert!(out.join("polymer_check.json").exists());
}
