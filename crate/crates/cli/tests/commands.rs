use ospc_cli::{commands, RunConfig};
use ospc_core::data::{generate_synthetic, load_csv, CsvSchema, DgpSpec};
use ospc_core::diagnostics::ReportRow;
use ospc_core::seed;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_ospc");
const STUB: &str = env!("CARGO_BIN_EXE_ppd-stub");

fn config(body: &str, out: &Path) -> RunConfig {
    RunConfig { out: out.to_path_buf(), ..RunConfig::from_toml(body).unwrap() }
}

fn rows(path: &Path) -> Vec<ReportRow> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

const FAST: &str = "[copula]\ndraws = 8\nsteps = 20\ngrid_size = 65\n";

#[test]
fn generate_writes_dataset_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("seed = 5\nreplicates = 2\n[dataset]\nsource = \"synthetic\"\nn = [50]\n", dir.path());
    let out = commands::cmd_generate(&cfg).unwrap();
    assert_eq!(out.files.len(), 4);
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.files[1]).unwrap()).unwrap();
    assert_eq!(sidecar["true_ate"], 5.0);
    let schema = CsvSchema { standardize: false, ..CsvSchema::new("a", "y") };
    let back = load_csv(&out.files[0], &schema).unwrap();
    let task_seed = seed::derive_seed(seed::derive_seed(5, 50), 0);
    let spec = DgpSpec::new(50, 25, seed::derive_labeled(task_seed, "data"));
    let (orig, _) = generate_synthetic(&spec).unwrap();
    assert_eq!(back.covariates(), orig.covariates());
    assert_eq!(back.treatments(), orig.treatments());
    assert_eq!(back.outcomes(), orig.outcomes());
}

#[test]
fn aiptw_only_has_no_posterior_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("estimators = [\"aiptw\"]\nreplicates = 2\n[dataset]\nsource = \"synthetic\"\nn = [120]\n", dir.path());
    let out = commands::cmd_estimate(&cfg).unwrap();
    assert!(out.failures.is_empty());
    let r = rows(&out.files[0]);
    assert_eq!(r.len(), 2);
    for row in &r {
        assert_eq!(row.estimator, "aiptw");
        assert!(row.estimate.is_some() && row.variance.is_some());
        assert!(row.variant.is_none() && row.r2.is_none() && row.var_a.is_none());
        assert_eq!(row.config_hash, cfg.hash());
    }
}

#[test]
fn grid_gives_one_row_per_size_and_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("estimators = [\"ospc\"]\nreplicates = 2\n[dataset]\nsource = \"synthetic\"\nn = [100, 150, 200]\n{FAST}");
    let out = commands::cmd_estimate(&config(&body, dir.path())).unwrap();
    let r = rows(&out.files[0]);
    assert_eq!(r.len(), 6);
    let sizes: Vec<usize> = r.iter().map(|x| x.n).collect();
    assert_eq!(sizes, vec![100, 100, 150, 150, 200, 200]);
    assert!(r.iter().all(|x| x.variant.as_deref() == Some("smooth") && x.var_c == x.variance));
}

#[test]
fn cross_fitted_aiptw() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("estimators = [\"aiptw\"]\nfolds = 3\n[dataset]\nsource = \"synthetic\"\nn = [150]\n", dir.path());
    let r = rows(&commands::cmd_estimate(&cfg).unwrap().files[0]);
    assert_eq!(r.len(), 1);
    assert!(r[0].variance.unwrap() > 0.0);
}

#[test]
fn failed_replicates_are_rows() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "replicates = 10\nestimators = [\"ospc\"]\n[dataset]\nsource = \"synthetic\"\nn = [80]\n[backend]\nkind = \"external\"\ncommand = [{STUB:?}]\ntimeout_ms = 2000\nenv = {{ PPD_STUB_FAULT = \"non_monotone\" }}\n{FAST}"
    );
    let out = commands::cmd_calibration_study(&config(&body, dir.path())).unwrap();
    assert_eq!(out.failures.len(), 10);
    let r = rows(&out.files[0]);
    let reps: Vec<_> = r.iter().filter(|x| !x.status.starts_with("summary")).collect();
    assert_eq!(reps.len(), 10);
    assert!(reps.iter().all(|x| x.status == "failed" && x.error.as_deref().unwrap().contains("protocol violation")));
}

#[test]
fn calibration_summary_with_one_failure() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("replicates = 10\nnuisance = \"oracle\"\nestimators = [\"ospc\"]\n[dataset]\nsource = \"synthetic\"\nn = [100]\n[copula]\ndraws = 50\n");
    let mut cfg = config(&body, dir.path());
    let r = rows(&commands::cmd_calibration_study(&cfg).unwrap().files[0]);
    assert_eq!(r.len(), 11);
    let summary = r.last().unwrap();
    assert_eq!(summary.status, "summary");
    assert_eq!(summary.replicate, 10);
    assert!(summary.ks.unwrap() > 0.0 && summary.tv.is_some());

    // n = 12 leaves too few control units in some test splits
    cfg.dataset = ospc_cli::DatasetConfig::Synthetic {
        n: vec![12],
        d_x: 25,
        noise_sd: 1.0,
        propensity: Default::default(),
    };
    let out = commands::cmd_calibration_study(&cfg).unwrap();
    let r = rows(&out.files[0]);
    let failed = r.iter().filter(|x| x.status == "failed").count();
    assert_eq!(failed, out.failures.len());
    let summary = r.last().unwrap();
    assert!(summary.status.starts_with("summary"));
    assert_eq!(summary.replicate, 10 - failed);
}

#[test]
fn prior_bias_histogram_counts_every_draw() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("prior_bias_draws = 30\n[dataset]\nsource = \"synthetic\"\nn = [200]\n", dir.path());
    let out = commands::cmd_prior_bias(&cfg).unwrap();
    let mut hist = csv::Reader::from_path(&out.files[1]).unwrap();
    let total: usize = hist.records().map(|r| r.unwrap()[2].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 30);
}

fn run_bin(cmd: &str, cfg: &Path, out: &Path, workers: usize) -> std::process::Output {
    Command::new(BIN)
        .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", &workers.to_string()])
        .output()
        .unwrap()
}

#[test]
fn binary_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("seed = 9\nreplicates = 3\nvariants = [\"x_independent\", \"smooth\"]\n[dataset]\nsource = \"synthetic\"\nn = [100]\n{FAST}"),
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (k, w) in [1, 8, 1].into_iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let res = run_bin("estimate", &cfg, &out, w);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(std::fs::read(out.join("estimate.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn binary_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sed = 1\n[dataset]\nsource = \"synthetic\"\nn = [10]\n").unwrap();
    let res = run_bin("estimate", &cfg, dir.path(), 1);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("sed"));
    let res = Command::new(BIN).arg("estimate").output().unwrap();
    assert!(!res.status.success());
}

#[test]
fn binary_exit_code_reflects_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fail.toml");
    std::fs::write(
        &cfg,
        format!("estimators = [\"aiptw\"]\n[dataset]\nsource = \"synthetic\"\nn = [60]\n[backend]\nkind = \"external\"\ncommand = [{STUB:?}]\nenv = {{ PPD_STUB_FAULT = \"exit_after:2\" }}\n"),
    )
    .unwrap();
    let res = run_bin("estimate", &cfg, &dir.path().join("o"), 1);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("1 failure"));
}
