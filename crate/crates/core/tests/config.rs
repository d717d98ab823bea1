use kpzlab::config::{ExperimentConfig, Precision};
use kpzlab::experiments::validate;
use kpzlab::initial::InitialCondition;
use kpzlab::noise::NoiseMode;

#[test]
fn tabulated_file_resolves_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let n = 8;
    let rows: Vec<String> = (0..n)
        .map(|iy| (0..n).map(|ix| format!("{}", 0.01 * (ix + 2 * iy) as f64)).collect::<Vec<_>>().join(","))
        .collect();
    std::fs::write(dir.path().join("h0.csv"), format!("# heights\n{}\n", rows.join("\n"))).unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        "beta = 0.5\neps = 0.1\nreplicas = 10\nprecision = \"f32\"\nnoise = \"zero\"\nh0.kind = \"tabulated\"\nh0.file = \"h0.csv\"\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.precision, Precision::F32);
    assert_eq!(cfg.noise, NoiseMode::Zero);
    let InitialCondition::Tabulated(t) = cfg.initial_condition().unwrap() else { panic!("not tabulated") };
    assert_eq!(t.n, n);
    assert!((t.at_node(3, 2) - 0.07).abs() < 1e-15);
}

#[test]
fn hash_tracks_content_but_not_the_output_directory() {
    let base = "beta = 1.0\neps = 0.07\nreplicas = 400\n";
    let a = ExperimentConfig::from_toml_str(base).unwrap();
    let b = ExperimentConfig::from_toml_str(&format!("{base}out_dir = \"elsewhere\"\n")).unwrap();
    let c = ExperimentConfig::from_toml_str(&format!("{base}seed = 1\n")).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn grid_problems_are_all_listed() {
    // dx = 0.25 is too coarse for eps = 0.07, and the test function does not fit
    let cfg = ExperimentConfig::from_toml_str(
        "beta = 1.0\neps = 0.07\nreplicas = 4\ngrid.n = 32\ngrid.side_len = 8.0\ng.radius = 1.9\n",
    )
    .unwrap();
    let err = validate(&cfg).unwrap_err().to_string();
    assert!(err.contains("dx") && err.contains("test function radius"), "{err}");
    let cfg = ExperimentConfig::from_toml_str("beta = 1.0\neps = 0.07\nreplicas = 4\nh0.kind = \"sine\"\ng.kind = \"box\"\n").unwrap();
    assert_eq!(cfg.violations().len(), 2, "{:?}", cfg.violations());
}

#[test]
fn supercritical_beta_is_a_regime_error() {
    let cfg = ExperimentConfig::from_toml_str("beta = 3.0\neps = 0.07\nreplicas = 4\n").unwrap();
    let err = validate(&cfg).unwrap_err();
    assert_eq!(err.class(), kpzlab::ErrorClass::Regime);
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            validate(&cfg).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
