//! File formats.
//!
//! Series are long-format CSV, `t,row,col,value`, with optional transition
//! rows `t,__s__,,value`. Numbers are written as `{:.16e}` (17 significant
//! digits), which round-trips every `f64`. Fits and summaries are JSON.
//! Every writer goes through a temporary file and a rename, so an
//! interrupted run never leaves a truncated output behind.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{Estimator, McResultRow};
use crate::series::MatrixSeries;
use crate::tensor::RealMatrix;

pub const TRANSITION_LABEL: &str = "__s__";
const SERIES_HEADER: [&str; 4] = ["t", "row", "col", "value"];
const MC_HEADER: [&str; 11] = [
    "replication",
    "estimator",
    "seed",
    "frob_regime1",
    "frob_regime2",
    "c_hat",
    "gamma_hat",
    "seconds",
    "converged",
    "max_rel_increase",
    "error",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::InvalidInput(format!("CSV encoding failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("CSV encoding failed: {e}")))
}

pub fn series_to_csv(series: &MatrixSeries) -> Result<Vec<u8>> {
    let (m, n) = series.dims();
    let mut rows = Vec::with_capacity(series.len() * (m * n + 1));
    for (t, frame) in series.frames().iter().enumerate() {
        let tt = (t + 1).to_string();
        for i in 0..m {
            for j in 0..n {
                rows.push(vec![
                    tt.clone(),
                    series.row_labels()[i].clone(),
                    series.col_labels()[j].clone(),
                    fmt_f64(frame[(i, j)]),
                ]);
            }
        }
        if let Some(s) = series.transition() {
            rows.push(vec![tt, TRANSITION_LABEL.into(), String::new(), fmt_f64(s[t])]);
        }
    }
    csv_bytes(&SERIES_HEADER, rows)
}

pub fn write_series(series: &MatrixSeries, path: &Path) -> Result<()> {
    write_atomic(path, &series_to_csv(series)?)
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn index_of(labels: &mut Vec<String>, label: &str) -> usize {
    match labels.iter().position(|l| l == label) {
        Some(i) => i,
        None => {
            labels.push(label.to_string());
            labels.len() - 1
        }
    }
}

/// Reads a long-format series. Row and column orders follow first
/// appearance. Missing, duplicate or non-numeric cells and gaps in `t` are
/// rejected with the offending line.
pub fn read_series(path: &Path) -> Result<MatrixSeries> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_slice());
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != SERIES_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("header must be `{}`", SERIES_HEADER.join(",")),
        ));
    }

    let mut row_labels: Vec<String> = Vec::new();
    let mut col_labels: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize, usize), (f64, u64)> = HashMap::new();
    let mut s_vals: HashMap<usize, (f64, u64)> = HashMap::new();
    let mut first_line: Vec<u64> = Vec::new();
    let mut max_t = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let t: usize = rec[0]
            .trim()
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| parse_err(path, line, format!("t must be an integer >= 1, got `{}`", &rec[0])))?;
        let value: f64 = rec[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("value `{}` is not a number", &rec[3])))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, format!("value `{}` is not finite", &rec[3])));
        }
        if first_line.len() < t {
            first_line.resize(t, 0);
        }
        if first_line[t - 1] == 0 {
            first_line[t - 1] = line;
        }
        max_t = max_t.max(t);
        if &rec[1] == TRANSITION_LABEL {
            if !rec[2].is_empty() {
                return Err(parse_err(path, line, "transition rows must have an empty col field"));
            }
            if let Some((_, prev)) = s_vals.insert(t, (value, line)) {
                return Err(parse_err(
                    path,
                    line,
                    format!("duplicate transition value for t={t} (first on line {prev})"),
                ));
            }
            continue;
        }
        let i = index_of(&mut row_labels, &rec[1]);
        let j = index_of(&mut col_labels, &rec[2]);
        if let Some((_, prev)) = cells.insert((t, i, j), (value, line)) {
            return Err(parse_err(
                path,
                line,
                format!(
                    "duplicate cell (t={t}, {}, {}) (first on line {prev})",
                    &rec[1], &rec[2]
                ),
            ));
        }
    }
    if max_t == 0 || row_labels.is_empty() {
        return Err(parse_err(path, 1, "file contains no observations"));
    }
    if let Some(t) = first_line.iter().position(|&l| l == 0) {
        return Err(parse_err(
            path,
            0,
            format!("t values are not contiguous: t={} is missing", t + 1),
        ));
    }
    let (m, n) = (row_labels.len(), col_labels.len());
    let mut frames = Vec::with_capacity(max_t);
    for t in 1..=max_t {
        let mut f = RealMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let (v, _) = cells.get(&(t, i, j)).ok_or_else(|| {
                    parse_err(
                        path,
                        first_line[t - 1],
                        format!("missing cell (t={t}, {}, {})", row_labels[i], col_labels[j]),
                    )
                })?;
                f[(i, j)] = *v;
            }
        }
        frames.push(f);
    }
    let transition = if s_vals.is_empty() {
        None
    } else {
        let mut s = Vec::with_capacity(max_t);
        for t in 1..=max_t {
            let (v, _) = s_vals
                .get(&t)
                .ok_or_else(|| parse_err(path, first_line[t - 1], format!("missing transition value for t={t}")))?;
            s.push(*v);
        }
        Some(s)
    };
    MatrixSeries::with_labels(frames, transition, row_labels, col_labels)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out =
        serde_json::to_vec_pretty(value).map_err(|e| Error::InvalidInput(format!("JSON encoding failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

/// Matrix as `row,col,value` CSV.
pub fn matrix_to_csv(mat: &RealMatrix, row_labels: &[String], col_labels: &[String]) -> Result<Vec<u8>> {
    let mut rows = Vec::with_capacity(mat.len());
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            rows.push(vec![row_labels[i].clone(), col_labels[j].clone(), fmt_f64(mat[(i, j)])]);
        }
    }
    csv_bytes(&["row", "col", "value"], rows)
}

pub fn mc_rows_to_csv(rows: &[McResultRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &MC_HEADER,
        rows.iter().map(|r| {
            vec![
                r.replication.to_string(),
                r.estimator.to_string(),
                r.seed.to_string(),
                fmt_opt(r.frob_regime1),
                fmt_opt(r.frob_regime2),
                fmt_opt(r.c_hat),
                fmt_opt(r.gamma_hat),
                fmt_f64(r.seconds),
                r.converged.to_string(),
                fmt_opt(r.max_rel_increase),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_mc(rows: &[McResultRow], path: &Path) -> Result<()> {
    write_atomic(path, &mc_rows_to_csv(rows)?)
}

pub fn read_mc(path: &Path) -> Result<Vec<McResultRow>> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_slice());
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != MC_HEADER {
        return Err(parse_err(path, 1, "unexpected Monte Carlo CSV header"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |k: usize| -> Result<Option<f64>> {
            if rec[k].is_empty() {
                return Ok(None);
            }
            rec[k]
                .parse()
                .map(Some)
                .map_err(|_| parse_err(path, line, format!("{} `{}` is not a number", MC_HEADER[k], &rec[k])))
        };
        let int = |k: usize| -> Result<u64> {
            rec[k]
                .parse()
                .map_err(|_| parse_err(path, line, format!("{} `{}` is not an integer", MC_HEADER[k], &rec[k])))
        };
        out.push(McResultRow {
            replication: int(0)? as usize,
            estimator: rec[1]
                .parse::<Estimator>()
                .map_err(|e| parse_err(path, line, e.to_string()))?,
            seed: int(2)?,
            frob_regime1: num(3)?,
            frob_regime2: num(4)?,
            c_hat: num(5)?,
            gamma_hat: num(6)?,
            seconds: num(7)?.unwrap_or(0.0),
            converged: rec[8]
                .parse()
                .map_err(|_| parse_err(path, line, format!("converged `{}` is not a boolean", &rec[8])))?,
            max_rel_increase: num(9)?,
            error: (!rec[10].is_empty()).then(|| rec[10].to_string()),
        });
    }
    Ok(out)
}
