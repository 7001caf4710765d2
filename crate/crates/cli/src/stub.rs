//! Minimal external PPD speaking the line protocol, used to exercise the host
//! side. Outcomes are per-arm Gaussians with running moments; the propensity
//! is the smoothed treated fraction. Covariates are ignored.

use ospc_core::normal;
use ospc_core::ppd::protocol::{Request, Response, PROTOCOL_VERSION};
use std::io::{BufRead, Write};

/// Misbehaviours selected through `PPD_STUB_FAULT`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Answers with id + 1.
    WrongId,
    BadVersion,
    /// Exits without answering the k-th request.
    ExitAfter(usize),
    /// Returns a decreasing CDF.
    NonMonotone,
    /// Stops answering after the handshake.
    Hang,
}

impl Fault {
    pub fn parse(s: &str) -> Fault {
        match s.trim() {
            "wrong_id" => Fault::WrongId,
            "bad_version" => Fault::BadVersion,
            "non_monotone" => Fault::NonMonotone,
            "hang" => Fault::Hang,
            s => match s.strip_prefix("exit_after:").and_then(|k| k.parse().ok()) {
                Some(k) => Fault::ExitAfter(k),
                None => Fault::None,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, y: f64) {
        self.n += 1.0;
        let d = y - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (y - self.mean);
    }

    /// Predictive sd with a unit-variance pseudo-observation.
    fn sd(&self) -> f64 {
        ((self.m2 + 1.0) / self.n).sqrt()
    }
}

#[derive(Debug, Default)]
struct Model {
    arms: [Moments; 2],
    treated: f64,
    total: f64,
}

impl Model {
    fn cdf(&self, a: u8, y: f64) -> f64 {
        let m = &self.arms[(a != 0) as usize];
        normal::cdf((y - m.mean) / m.sd())
    }

    fn prob(&self) -> f64 {
        (self.treated + 1.0) / (self.total + 2.0)
    }

    fn absorb(&mut self, a: u8, y: Option<f64>) {
        if let Some(y) = y {
            self.arms[(a != 0) as usize].push(y);
        } else {
            self.total += 1.0;
            self.treated += (a != 0) as u8 as f64;
        }
    }
}

fn error(id: Option<u64>, code: &str, message: impl Into<String>) -> Response {
    Response::Error { id, code: code.into(), message: message.into() }
}

/// Runs the event loop until `bye` or end of input; returns the exit status.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W, fault: Fault) -> i32 {
    let mut model: Option<Model> = None;
    let mut handled = 0usize;
    for line in input.lines() {
        let Ok(line) = line else { return 1 };
        if line.trim().is_empty() {
            continue;
        }
        handled += 1;
        if fault == Fault::ExitAfter(handled) {
            return 3;
        }
        if fault == Fault::Hang && handled > 1 {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line).ok().and_then(|v| v.get("id")?.as_u64());
                if write(&mut output, &error(id, "malformed", e.to_string())).is_err() {
                    return 1;
                }
                continue;
            }
        };
        let id = req.id() + (fault == Fault::WrongId) as u64;
        let mut bye = false;
        let resp = match req {
            Request::Hello { .. } => {
                let version = if fault == Fault::BadVersion { "0" } else { PROTOCOL_VERSION };
                Response::Hello { id, version: version.into() }
            }
            Request::Fit { rows, .. } => {
                let mut m = Model::default();
                for r in &rows {
                    m.absorb(r.a, Some(r.y));
                    m.absorb(r.a, None);
                }
                if m.arms.iter().any(|a| a.n == 0.0) {
                    error(Some(id), "empty_arm", "both arms need rows")
                } else {
                    model = Some(m);
                    Response::Ok { id }
                }
            }
            Request::QueryCdf { a, y_grid, .. } => match &model {
                None => error(Some(id), "not_fitted", "query before fit"),
                Some(m) => {
                    let mut values: Vec<f64> = y_grid.iter().map(|&y| m.cdf(a, y)).collect();
                    if fault == Fault::NonMonotone {
                        values.reverse();
                    }
                    Response::Values { id, values }
                }
            },
            Request::QueryProb { .. } => match &model {
                None => error(Some(id), "not_fitted", "query before fit"),
                Some(m) => Response::Values { id, values: vec![m.prob()] },
            },
            Request::Absorb { a, y, .. } => match &mut model {
                None => error(Some(id), "not_fitted", "absorb before fit"),
                Some(m) => {
                    m.absorb(a, y);
                    Response::Ok { id }
                }
            },
            Request::Bye { .. } => {
                bye = true;
                Response::Ok { id }
            }
        };
        if write(&mut output, &resp).is_err() {
            return 1;
        }
        if bye {
            return 0;
        }
    }
    0
}

fn write<W: Write>(out: &mut W, resp: &Response) -> std::io::Result<()> {
    let mut line = serde_json::to_string(resp).expect("responses serialize");
    line.push('\n');
    out.write_all(line.as_bytes())?;
    out.flush()
}
