//! Line-delimited JSON records exchanged with an external PPD process. Every
//! request carries an `id` that the response must echo.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub x: Vec<f64>,
    pub a: u8,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello { id: u64, version: String },
    Fit { id: u64, rows: Vec<Row> },
    QueryCdf { id: u64, x: Vec<f64>, a: u8, y_grid: Vec<f64> },
    QueryProb { id: u64, x: Vec<f64> },
    /// Outcome absorbs carry `y`; propensity absorbs omit it.
    Absorb {
        id: u64,
        x: Vec<f64>,
        a: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<f64>,
    },
    Bye { id: u64 },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Hello { id, .. }
            | Request::Fit { id, .. }
            | Request::QueryCdf { id, .. }
            | Request::QueryProb { id, .. }
            | Request::Absorb { id, .. }
            | Request::Bye { id } => *id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Response {
    Hello { id: u64, version: String },
    Values { id: u64, values: Vec<f64> },
    Ok { id: u64 },
    Error {
        #[serde(default)]
        id: Option<u64>,
        code: String,
        #[serde(default)]
        message: String,
    },
}

impl Response {
    pub fn id(&self) -> Option<u64> {
        match self {
            Response::Hello { id, .. } | Response::Values { id, .. } | Response::Ok { id } => Some(*id),
            Response::Error { id, .. } => *id,
        }
    }
}
