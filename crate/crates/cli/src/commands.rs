use crate::config::{DatasetConfig, RunConfig};
use crate::pipeline::{self, PipelineError, ReplicateOutput, Task};
use ospc_core::data::{self, CausalDataset, DataError};
use ospc_core::diagnostics::{self, ReportRow};
use ospc_core::ppd::{self, BackendConfig, PpdError};
use ospc_core::seed;
use rayon::prelude::*;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Diagnostics(#[from] diagnostics::DiagnosticsError),
    #[error("{0}")]
    Usage(String),
}

/// Files written and the failures that make the exit status nonzero.
#[derive(Clone, Debug, Default)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CommandError> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CommandError> {
    let csv_err = |source| CommandError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_report(path: &Path, rows: &[ReportRow]) -> Result<(), CommandError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    diagnostics::write_report(std::io::BufWriter::new(file), rows)?;
    Ok(())
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool")
}

/// Runs every task on `cfg.workers` threads; results keep task order.
pub fn run_tasks(cfg: &RunConfig) -> Vec<(Task, Result<ReplicateOutput, PipelineError>)> {
    let tasks = pipeline::tasks(cfg);
    let inner = (cfg.workers / tasks.len().max(1)).max(1);
    pool(cfg.workers).install(|| tasks.par_iter().map(|t| (*t, pipeline::run_replicate(cfg, t, inner))).collect())
}

fn collect(cfg: &RunConfig, results: &[(Task, Result<ReplicateOutput, PipelineError>)]) -> (Vec<ReportRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (task, res) in results {
        match res {
            Ok(out) => rows.extend(out.rows.iter().cloned()),
            Err(e) => {
                failures.push(format!("n={:?} replicate={} seed={}: {}: {e}", task.n, task.replicate, task.seed, e.code()));
                rows.push(pipeline::failed_row(cfg, task, e));
            }
        }
    }
    (rows, failures)
}

/// Writes one synthetic dataset and its oracle sidecar per task.
pub fn cmd_generate(cfg: &RunConfig) -> Result<CommandOutcome, CommandError> {
    if !matches!(cfg.dataset, DatasetConfig::Synthetic { .. }) {
        return Err(CommandError::Usage("generate needs a synthetic dataset config".into()));
    }
    let dir = cfg.out.join("data");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let tasks = pipeline::tasks(cfg);
    let results: Vec<Result<Vec<PathBuf>, CommandError>> = pool(cfg.workers).install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let n = t.n.expect("synthetic");
                let spec = pipeline::dgp_spec(cfg, n, seed::derive_labeled(t.seed, "data")).expect("synthetic");
                let (d, oracle) = data::generate_synthetic(&spec)?;
                let stem = dir.join(format!("synthetic_n{n}_r{}", t.replicate));
                let csv_path = stem.with_extension("csv");
                data::write_csv(&d, &csv_path)?;
                let sidecar = serde_json::json!({
                    "true_ate": oracle.true_ate,
                    "noise_sd": oracle.noise_sd,
                    "propensity": oracle.propensity,
                    "spec": spec,
                    "config_hash": cfg.hash(),
                });
                let json_path = stem.with_extension("oracle.json");
                let text = serde_json::to_string_pretty(&sidecar).expect("json") + "\n";
                fs::write(&json_path, text).map_err(io_err(&json_path))?;
                Ok(vec![csv_path, json_path])
            })
            .collect()
    });
    let mut outcome = CommandOutcome::default();
    for r in results {
        outcome.files.extend(r?);
    }
    Ok(outcome)
}

/// Runs every replicate and writes `estimate.csv`.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<CommandOutcome, CommandError> {
    prepare_out(cfg)?;
    let (rows, failures) = collect(cfg, &run_tasks(cfg));
    let path = cfg.out.join("estimate.csv");
    write_report(&path, &rows)?;
    Ok(CommandOutcome { files: vec![path], failures })
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Per-replicate rows followed by one summary row per (n, estimator,
/// variant): KS of the PITs to uniform and the median TV. Written to
/// `calibration.csv`.
pub fn cmd_calibration_study(cfg: &RunConfig) -> Result<CommandOutcome, CommandError> {
    prepare_out(cfg)?;
    let (mut rows, failures) = collect(cfg, &run_tasks(cfg));
    let mut groups: Vec<(usize, String, Option<String>)> = Vec::new();
    for r in rows.iter().filter(|r| r.status == "ok") {
        let key = (r.n, r.estimator.clone(), r.variant.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut summaries = Vec::new();
    for (n, estimator, variant) in groups {
        let members: Vec<&ReportRow> =
            rows.iter().filter(|r| r.status == "ok" && r.n == n && r.estimator == estimator && r.variant == variant).collect();
        let pits: Vec<f64> = members.iter().filter_map(|r| r.pit).collect();
        let mut tvs: Vec<f64> = members.iter().filter_map(|r| r.tv).collect();
        let (ks, status) = match diagnostics::ks_to_uniform(&pits) {
            Ok(rep) => (Some(rep.ks), "summary".to_string()),
            Err(e) => (None, format!("summary: {e}")),
        };
        let first = members[0];
        summaries.push(ReportRow {
            dataset: first.dataset.clone(),
            n,
            d_x: first.d_x,
            estimator,
            variant,
            rho: first.rho,
            tv: median(&mut tvs),
            ks,
            seed: cfg.seed,
            replicate: pits.len(),
            status,
            true_ate: first.true_ate,
            reference: first.reference.clone(),
            config_hash: first.config_hash.clone(),
            ..Default::default()
        });
    }
    rows.extend(summaries);
    let path = cfg.out.join("calibration.csv");
    write_report(&path, &rows)?;
    Ok(CommandOutcome { files: vec![path], failures })
}

#[derive(Serialize)]
struct PriorBiasRow {
    draw: usize,
    seed: u64,
    delta: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct HistogramRow {
    bin_low: f64,
    bin_high: f64,
    count: usize,
    config_hash: String,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Confounding degree Δ over `prior_bias_draws` datasets, with a histogram.
pub fn cmd_prior_bias(cfg: &RunConfig) -> Result<CommandOutcome, CommandError> {
    let DatasetConfig::Synthetic { n, .. } = &cfg.dataset else {
        return Err(CommandError::Usage("prior-bias needs a synthetic dataset config".into()));
    };
    prepare_out(cfg)?;
    let spec = pipeline::dgp_spec(cfg, n[0], cfg.seed).expect("synthetic");
    let deltas = pool(cfg.workers).install(|| data::prior_bias_harness(&spec, cfg.prior_bias_draws))?;
    let hash = cfg.hash();
    let rows: Vec<PriorBiasRow> = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| PriorBiasRow { draw: i, seed: seed::derive_seed(cfg.seed, i as u64), delta, config_hash: hash.clone() })
        .collect();
    let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut counts = [0usize; HISTOGRAM_BINS];
    for d in &deltas {
        counts[(((d - lo) / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let hist: Vec<HistogramRow> = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| HistogramRow {
            bin_low: lo + k as f64 * width,
            bin_high: lo + (k + 1) as f64 * width,
            count,
            config_hash: hash.clone(),
        })
        .collect();
    let (p1, p2) = (cfg.out.join("prior_bias.csv"), cfg.out.join("prior_bias_hist.csv"));
    write_rows(&p1, &rows)?;
    write_rows(&p2, &hist)?;
    Ok(CommandOutcome { files: vec![p1, p2], failures: vec![] })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

pub const ROUND_TRIP_TOLERANCE: f64 = 1e-6;

fn protocol_checks(cfg: &RunConfig, checks: &mut Vec<CheckRow>) -> Result<(), PpdError> {
    let BackendConfig::External(ext) = &cfg.backend else {
        return Err(PpdError::Config("protocol-check needs backend.kind = \"external\"".into()));
    };
    let mut push = |check: &str, passed: bool, detail: String| checks.push(CheckRow { check: check.into(), passed, detail });
    let env: Vec<(String, String)> = ext.env.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut s = ppd::external_handshake(&ext.command, &env, Duration::from_millis(ext.timeout_ms))?;
    push("handshake", s.version() == ppd::protocol::PROTOCOL_VERSION, format!("version {}", s.version()));

    let data = check_dataset(cfg)?;
    s.fit(&data)?;
    push("fit", true, format!("{} rows", data.n()));

    let grid: Vec<f64> = (0..41).map(|k| -10.0 + 0.5 * k as f64).collect();
    let probes: Vec<usize> = (0..5).map(|k| k * data.n() / 5).collect();
    let mut first = Vec::new();
    for &i in &probes {
        for arm in [false, true] {
            first.push(s.query_cdf(data.x(i), arm, &grid)?);
        }
    }
    push("monotone_cdf", true, format!("{} queries on a {}-point grid", first.len(), grid.len()));
    let probs = probes.iter().map(|&i| s.query_prob(data.x(i))).collect::<Result<Vec<_>, _>>()?;
    push("propensity_range", probs.iter().all(|p| *p > 0.0 && *p < 1.0), format!("{} queries", probs.len()));

    let mut worst = 0.0f64;
    let mut k = 0;
    for &i in &probes {
        for arm in [false, true] {
            let again = s.query_cdf(data.x(i), arm, &grid)?;
            worst = first[k].iter().zip(&again).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            k += 1;
        }
    }
    push("round_trip", worst <= ROUND_TRIP_TOLERANCE, format!("max deviation {worst:e} (tolerance {ROUND_TRIP_TOLERANCE:e})"));

    let g0 = s.generation();
    s.absorb(data.x(0), data.treatments()[0], Some(data.outcomes()[0]))?;
    s.absorb(data.x(0), data.treatments()[0], None)?;
    let after = s.query_cdf(data.x(0), true, &grid)?;
    push("absorb", s.generation() == g0 + 2 && after.len() == grid.len(), format!("generation {}", s.generation()));
    s.close()?;
    push("bye", true, "clean exit".into());
    Ok(())
}

fn check_dataset(cfg: &RunConfig) -> Result<CausalDataset, PpdError> {
    let spec = match pipeline::dgp_spec(cfg, 200, seed::derive_labeled(cfg.seed, "protocol-check")) {
        Some(s) => s,
        None => ospc_core::data::DgpSpec::new(200, ospc_core::data::MIN_DIM, seed::derive_labeled(cfg.seed, "protocol-check")),
    };
    data::generate_synthetic(&spec).map(|(d, _)| d).map_err(|e| PpdError::Config(e.to_string()))
}

/// Handshake, monotone-CDF, round-trip and absorb checks against the external
/// client of `backend`, written to `protocol_check.csv`.
pub fn cmd_protocol_check(cfg: &RunConfig) -> Result<CommandOutcome, CommandError> {
    prepare_out(cfg)?;
    let mut checks = Vec::new();
    if let Err(e) = protocol_checks(cfg, &mut checks) {
        checks.push(CheckRow { check: "session".into(), passed: false, detail: e.to_string() });
    }
    let failures = checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.check, c.detail)).collect();
    let path = cfg.out.join("protocol_check.csv");
    write_rows(&path, &checks)?;
    Ok(CommandOutcome { files: vec![path], failures })
}
