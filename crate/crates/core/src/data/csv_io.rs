use super::{CausalDataset, CovariateMatrix, DataError, Standardization};
use std::path::Path;

/// Column roles for [`load_csv`].
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub treatment: String,
    pub outcome: String,
    /// `None` uses every other column.
    pub covariates: Option<Vec<String>>,
    pub standardize: bool,
}

impl CsvSchema {
    pub fn new(treatment: &str, outcome: &str) -> Self {
        Self { treatment: treatment.into(), outcome: outcome.into(), covariates: None, standardize: true }
    }
}

fn parse_num(raw: &str, row: usize, column: &str) -> Result<f64, DataError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumeric { row, column: column.to_string(), value: raw.to_string() }),
    }
}

/// Reads a comma-separated file with a header row. Rows are numbered from 1
/// (the first data row) in errors.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<CausalDataset, DataError> {
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.into()));
    let t_col = find(&schema.treatment)?;
    let y_col = find(&schema.outcome)?;
    let cov_cols: Vec<usize> = match &schema.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_, _>>()?,
        None => (0..headers.len()).filter(|&j| j != t_col && j != y_col).collect(),
    };
    if cov_cols.is_empty() {
        return Err(DataError::NoCovariates);
    }

    let mut treatments = Vec::new();
    let mut outcomes = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = r + 1;
        let cell = |j: usize| rec.get(j).unwrap_or("");
        let t_raw = cell(t_col);
        let a = match t_raw.trim().parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => return Err(DataError::NonBinaryTreatment { row, value: t_raw.to_string() }),
        };
        treatments.push(a);
        outcomes.push(parse_num(cell(y_col), row, &headers[y_col])?);
        for (c, &j) in cov_cols.iter().enumerate() {
            columns[c].push(parse_num(cell(j), row, &headers[j])?);
        }
    }
    let n = outcomes.len();

    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut names = Vec::new();
    for (c, &j) in cov_cols.iter().enumerate() {
        let col = &columns[c];
        let (m, s) = if schema.standardize {
            if n < 2 {
                return Err(DataError::TooFewUnits { needed: 2, found: n });
            }
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (m, v.sqrt())
        } else {
            (0.0, 1.0)
        };
        let constant = col.iter().all(|&v| v == col[0]);
        if constant || !(s > 0.0) {
            warnings.push(format!("dropped constant covariate column `{}`", headers[j]));
            continue;
        }
        kept.push(c);
        means.push(m);
        stds.push(s);
        names.push(headers[j].clone());
    }
    if kept.is_empty() {
        return Err(DataError::NoCovariates);
    }
    let d = kept.len();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for (k, &c) in kept.iter().enumerate() {
            let v = columns[c][i];
            values.push(if schema.standardize { (v - means[k]) / stds[k] } else { v });
        }
    }
    let x = CovariateMatrix::new(n, d, values)?;
    CausalDataset::with_metadata(x, treatments, outcomes, Standardization { means, stds }, names, warnings)
}

/// Writes covariates (as stored), then `a`, then `y`. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_csv(dataset: &CausalDataset, path: &Path) -> Result<(), DataError> {
    let csv_err = |source| DataError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<&str> = dataset.column_names().iter().map(String::as_str).collect();
    header.extend(["a", "y"]);
    w.write_record(&header).map_err(csv_err)?;
    let mut buf = Vec::with_capacity(header.len());
    for i in 0..dataset.n() {
        buf.clear();
        buf.extend(dataset.x(i).iter().map(|v| format!("{v:?}")));
        buf.push(if dataset.treatments()[i] { "1".into() } else { "0".into() });
        buf.push(format!("{:?}", dataset.outcomes()[i]));
        w.write_record(&buf).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataError::Io { path: path.to_path_buf(), source: e })
}
