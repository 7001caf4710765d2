use super::protocol::{Request, Response, Row, PROTOCOL_VERSION};
use super::{uniform_grid, GridLaw, OutcomePpd, PpdError, PropensityPpd, GRID_HI, GRID_LO};
use crate::data::CausalDataset;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Resolution of the CDF grid used for means and quantiles.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_resolution() -> usize {
    513
}

/// One live child process speaking the protocol.
#[derive(Debug)]
pub struct ExternalSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
    generation: u64,
    version: String,
}

/// Spawns `command`, exchanges `hello`, and checks the version.
pub fn external_handshake(command: &[String], env: &[(String, String)], timeout: Duration) -> Result<ExternalSession, PpdError> {
    let (prog, args) = command.split_first().ok_or_else(|| PpdError::Config("empty external command".into()))?;
    let mut child = Command::new(prog)
        .args(args)
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| PpdError::Spawn { command: command.join(" "), source })?;
    let stdout = child.stdout.take().expect("piped stdout");
    let stdin = child.stdin.take();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    let mut session = ExternalSession { child, stdin, lines: rx, timeout, next_id: 0, generation: 0, version: String::new() };
    let id = session.fresh_id();
    match session.request(&Request::Hello { id, version: PROTOCOL_VERSION.into() })? {
        Response::Hello { version, .. } if version == PROTOCOL_VERSION => {
            session.version = version;
            Ok(session)
        }
        Response::Hello { version, .. } => Err(PpdError::VersionMismatch { expected: PROTOCOL_VERSION.into(), found: version }),
        other => Err(PpdError::Protocol(format!("expected hello, got {other:?}"))),
    }
}

impl ExternalSession {
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    /// Sends one request and waits for the matching response.
    pub fn request(&mut self, req: &Request) -> Result<Response, PpdError> {
        let mut line = serde_json::to_string(req).expect("requests serialize");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or_else(|| PpdError::Transport("session closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| PpdError::Transport(format!("write failed: {e}")))?;
        let raw = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => return Err(PpdError::Transport(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(PpdError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(PpdError::Transport("client closed its output".into())),
        };
        let resp: Response =
            serde_json::from_str(&raw).map_err(|e| PpdError::Protocol(format!("malformed response `{}`: {e}", raw.trim())))?;
        if resp.id() != Some(req.id()) {
            return Err(PpdError::Protocol(format!("response id {:?} does not match request id {}", resp.id(), req.id())));
        }
        if let Response::Error { code, message, .. } = resp {
            return Err(PpdError::Remote { code, message });
        }
        Ok(resp)
    }

    fn expect_ok(&mut self, req: &Request) -> Result<(), PpdError> {
        match self.request(req)? {
            Response::Ok { .. } => Ok(()),
            other => Err(PpdError::Protocol(format!("expected ok, got {other:?}"))),
        }
    }

    fn expect_values(&mut self, req: &Request, len: usize) -> Result<Vec<f64>, PpdError> {
        match self.request(req)? {
            Response::Values { values, .. } if values.len() == len && values.iter().all(|v| v.is_finite()) => Ok(values),
            Response::Values { values, .. } => {
                Err(PpdError::Protocol(format!("expected {len} finite values, got {}", values.len())))
            }
            other => Err(PpdError::Protocol(format!("expected values, got {other:?}"))),
        }
    }

    pub fn fit(&mut self, data: &CausalDataset) -> Result<(), PpdError> {
        let rows = (0..data.n())
            .map(|i| Row { x: data.x(i).to_vec(), a: data.treatments()[i] as u8, y: data.outcomes()[i] })
            .collect();
        let id = self.fresh_id();
        self.expect_ok(&Request::Fit { id, rows })
    }

    /// CDF values on `grid`, checked for range and monotonicity (1e-6 slack).
    pub fn query_cdf(&mut self, x: &[f64], arm: bool, grid: &[f64]) -> Result<Vec<f64>, PpdError> {
        let id = self.fresh_id();
        let mut v = self.expect_values(&Request::QueryCdf { id, x: x.to_vec(), a: arm as u8, y_grid: grid.to_vec() }, grid.len())?;
        if let Some(bad) = v.iter().find(|c| !(-1e-6..=1.0 + 1e-6).contains(*c)) {
            return Err(PpdError::Protocol(format!("cdf value {bad} outside [0,1]")));
        }
        for k in 1..v.len() {
            if grid[k] >= grid[k - 1] && v[k] < v[k - 1] - 1e-6 {
                return Err(PpdError::Protocol(format!("cdf decreases between y={} and y={}", grid[k - 1], grid[k])));
            }
        }
        v.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
        Ok(v)
    }

    pub fn query_prob(&mut self, x: &[f64]) -> Result<f64, PpdError> {
        let id = self.fresh_id();
        let p = self.expect_values(&Request::QueryProb { id, x: x.to_vec() }, 1)?[0];
        if !(p > 0.0 && p < 1.0) {
            return Err(PpdError::Protocol(format!("propensity {p} not strictly inside (0,1)")));
        }
        Ok(p)
    }

    pub fn absorb(&mut self, x: &[f64], arm: bool, y: Option<f64>) -> Result<u64, PpdError> {
        let id = self.fresh_id();
        self.expect_ok(&Request::Absorb { id, x: x.to_vec(), a: arm as u8, y })?;
        self.generation += 1;
        Ok(self.generation)
    }

    /// Sends `bye` and waits for the process to exit.
    pub fn close(mut self) -> Result<(), PpdError> {
        let id = self.fresh_id();
        let r = self.expect_ok(&Request::Bye { id });
        self.stdin = None;
        let _ = self.child.wait();
        r
    }
}

impl Drop for ExternalSession {
    fn drop(&mut self) {
        self.stdin = None;
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}

fn spawn_fitted(config: &ExternalConfig, data: &CausalDataset) -> Result<ExternalSession, PpdError> {
    let env: Vec<(String, String)> = config.env.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut s = external_handshake(&config.command, &env, Duration::from_millis(config.timeout_ms))?;
    s.fit(data)?;
    Ok(s)
}

fn lock(s: &Mutex<ExternalSession>) -> std::sync::MutexGuard<'_, ExternalSession> {
    s.lock().unwrap_or_else(|e| e.into_inner())
}

/// Outcome PPD served by a child process. Absorbs advance the shared session,
/// so only the newest handle may be queried.
#[derive(Debug, Clone)]
pub struct ExternalOutcome {
    session: Arc<Mutex<ExternalSession>>,
    generation: u64,
    /// Per-arm value range used for integration grids.
    ranges: [(f64, f64); 2],
    resolution: usize,
}

impl ExternalOutcome {
    pub fn fit(config: &ExternalConfig, data: &CausalDataset) -> Result<Self, PpdError> {
        if config.resolution < 3 {
            return Err(PpdError::Config("resolution must be at least 3".into()));
        }
        let mut ranges = [(0.0, 0.0); 2];
        for (a, r) in ranges.iter_mut().enumerate() {
            let ys: Vec<f64> = data.arm_indices(a == 1).iter().map(|&i| data.outcomes()[i]).collect();
            if ys.is_empty() {
                return Err(PpdError::EmptyArm { arm: a as u8 });
            }
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = (hi - lo).max(1.0);
            *r = (lo - pad, hi + pad);
        }
        let session = spawn_fitted(config, data)?;
        Ok(Self { session: Arc::new(Mutex::new(session)), generation: 0, ranges, resolution: config.resolution })
    }

    fn with_session<T>(&self, f: impl FnOnce(&mut ExternalSession) -> Result<T, PpdError>) -> Result<T, PpdError> {
        let mut s = lock(&self.session);
        if s.generation != self.generation {
            return Err(PpdError::Stale { handle: self.generation, current: s.generation });
        }
        f(&mut s)
    }

    fn coarse(&self, x: &[f64], arm: bool) -> Result<(Vec<f64>, Vec<f64>), PpdError> {
        let (lo, hi) = self.ranges[arm as usize];
        let grid = uniform_grid(lo, hi, self.resolution)?;
        let cdf = self.with_session(|s| s.query_cdf(x, arm, &grid))?;
        Ok((grid, cdf))
    }

    fn interpolate_quantile(grid: &[f64], cdf: &[f64], p: f64) -> Result<f64, PpdError> {
        let k = cdf.partition_point(|&c| c < p);
        if k == 0 || k == cdf.len() {
            return Err(PpdError::Numerical(format!("quantile {p} outside the served grid")));
        }
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let t = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.5 };
        Ok(grid[k - 1] + t * (grid[k] - grid[k - 1]))
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

impl OutcomePpd for ExternalOutcome {
    fn predictive_cdf(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        Ok(self.with_session(|s| s.query_cdf(x, arm, &[y]))?[0])
    }

    fn predictive_density(&self, y: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        let (lo, hi) = self.ranges[arm as usize];
        let h = (hi - lo) * 1e-4;
        let c = self.with_session(|s| s.query_cdf(x, arm, &[y - h, y + h]))?;
        Ok(((c[1] - c[0]) / (2.0 * h)).max(0.0))
    }

    fn posterior_mean(&self, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        let (grid, cdf) = self.coarse(x, arm)?;
        // E[Y] = lo + ∫ (1 − F) − ∫ F below lo, tails beyond the range ignored
        let h = grid[1] - grid[0];
        let tail: f64 = cdf.windows(2).map(|w| 1.0 - 0.5 * (w[0] + w[1])).sum::<f64>() * h;
        Ok(grid[0] + tail)
    }

    fn predictive_quantile(&self, p: f64, x: &[f64], arm: bool) -> Result<f64, PpdError> {
        let (grid, cdf) = self.coarse(x, arm)?;
        Self::interpolate_quantile(&grid, &cdf, p)
    }

    /// Served CDF on the quantile grid; the density is its finite-difference
    /// derivative.
    fn grid_law(&self, x: &[f64], arm: bool, grid_size: usize) -> Result<GridLaw, PpdError> {
        let (coarse, ccdf) = self.coarse(x, arm)?;
        let lo = Self::interpolate_quantile(&coarse, &ccdf, GRID_LO)?;
        let hi = Self::interpolate_quantile(&coarse, &ccdf, GRID_HI)?;
        let y_grid = uniform_grid(lo, hi, grid_size)?;
        let cdf = self.with_session(|s| s.query_cdf(x, arm, &y_grid))?;
        let g = y_grid.len();
        let density = (0..g)
            .map(|k| {
                let (a, b) = (k.saturating_sub(1), (k + 1).min(g - 1));
                ((cdf[b] - cdf[a]) / (y_grid[b] - y_grid[a])).max(0.0)
            })
            .collect();
        Ok(GridLaw { y_grid, density })
    }

    fn absorb(&self, x: &[f64], arm: bool, y: f64) -> Result<Box<dyn OutcomePpd>, PpdError> {
        let generation = self.with_session(|s| s.absorb(x, arm, Some(y)))?;
        Ok(Box::new(Self { generation, ..self.clone() }))
    }
}

/// Propensity PPD served by a child process.
#[derive(Debug, Clone)]
pub struct ExternalPropensity {
    session: Arc<Mutex<ExternalSession>>,
    generation: u64,
}

impl ExternalPropensity {
    pub fn fit(config: &ExternalConfig, data: &CausalDataset) -> Result<Self, PpdError> {
        Ok(Self { session: Arc::new(Mutex::new(spawn_fitted(config, data)?)), generation: 0 })
    }

    fn with_session<T>(&self, f: impl FnOnce(&mut ExternalSession) -> Result<T, PpdError>) -> Result<T, PpdError> {
        let mut s = lock(&self.session);
        if s.generation != self.generation {
            return Err(PpdError::Stale { handle: self.generation, current: s.generation });
        }
        f(&mut s)
    }
}

impl PropensityPpd for ExternalPropensity {
    fn predictive_prob(&self, x: &[f64]) -> Result<f64, PpdError> {
        self.with_session(|s| s.query_prob(x))
    }

    fn absorb(&self, x: &[f64], arm: bool) -> Result<Box<dyn PropensityPpd>, PpdError> {
        let generation = self.with_session(|s| s.absorb(x, arm, None))?;
        Ok(Box::new(Self { generation, session: Arc::clone(&self.session) }))
    }
}
