//! CSV ingestion and atomic artifact writes.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use tvlik::Dataset;

use crate::error::{CliError, CliResult, ErrorKind};

/// A dataset together with the `t` key of every row, as read.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub keys: Vec<String>,
    pub data: Dataset,
}

/// What the reader should demand of the input columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Columns {
    pub dim: usize,
    /// Observations must be nonnegative integers.
    pub counts: bool,
    /// Read the `x` column; it is ignored otherwise, even when present.
    pub covariate: bool,
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

/// Reads `t,y[,x]` (or `t,y1..yd`). Rows are numbered from 1 in errors.
pub fn read_dataset(path: &Path, cols: Columns) -> CliResult<Table> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if column(&headers, "t") != Some(0) {
        return Err(CliError::data(format!("{}: first column must be 't'", path.display())));
    }
    let y_names: Vec<String> = if cols.dim == 1 {
        vec!["y".into()]
    } else {
        (1..=cols.dim).map(|i| format!("y{i}")).collect()
    };
    let mut y_idx = Vec::with_capacity(cols.dim);
    for name in &y_names {
        let idx = column(&headers, name).ok_or_else(|| {
            CliError::new(
                ErrorKind::ModelDataMismatch,
                format!("{}: missing column '{name}' required by the model", path.display()),
            )
        })?;
        y_idx.push(idx);
    }
    let x_idx = column(&headers, "x");
    if cols.covariate && x_idx.is_none() {
        return Err(CliError::new(
            ErrorKind::ModelDataMismatch,
            format!("{}: the model needs a covariate column 'x'", path.display()),
        ));
    }

    let mut keys = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut bad = Vec::new();
    let mut bad_counts = Vec::new();
    let mut bad_x = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        keys.push(rec.get(0).unwrap_or("").to_string());
        for &j in &y_idx {
            match rec.get(j).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()) {
                Some(v) => {
                    if cols.counts && (v < 0.0 || v.fract() != 0.0) {
                        bad_counts.push(row);
                    }
                    y.push(v);
                }
                None => {
                    bad.push(row);
                    y.push(f64::NAN);
                }
            }
        }
        if cols.covariate {
            let cell = x_idx.and_then(|j| rec.get(j)).unwrap_or("");
            match cell.parse::<f64>().ok().filter(|v| v.is_finite()) {
                Some(v) => x.push(v),
                None => {
                    bad_x.push(row);
                    x.push(f64::NAN);
                }
            }
        }
    }
    if !bad.is_empty() {
        return Err(CliError::data(format!("{}: unparseable observations", path.display())).with_rows(bad));
    }
    if !bad_counts.is_empty() {
        return Err(
            CliError::data(format!("{}: counts must be nonnegative integers", path.display())).with_rows(bad_counts)
        );
    }
    if !bad_x.is_empty() {
        return Err(CliError::data(format!("{}: missing or unparseable covariate", path.display())).with_rows(bad_x));
    }
    if keys.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    let mut data = Dataset::multivariate(cols.dim, y).map_err(|e| CliError::data(e.to_string()))?;
    if cols.covariate {
        data = data.with_covariate(x).map_err(|e| CliError::data(e.to_string()))?;
    }
    Ok(Table { keys, data })
}

/// Reads a two-column covariate file `t,<name>`.
pub fn read_covariate(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || column(&headers, "t") != Some(0) {
        return Err(CliError::data(format!("{}: expected columns 't,<covariate>'", path.display())));
    }
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        match rec.get(1).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()) {
            Some(v) => out.push((rec.get(0).unwrap_or("").to_string(), v)),
            None => bad.push(i + 1),
        }
    }
    if !bad.is_empty() {
        return Err(CliError::data(format!("{}: unparseable covariate", path.display())).with_rows(bad));
    }
    Ok(out)
}

/// Covariate values aligned with `keys`; rows without a match are an error.
pub fn align_covariate(keys: &[String], cov: &[(String, f64)]) -> CliResult<Vec<f64>> {
    let lookup: HashMap<&str, f64> = cov.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut missing = Vec::new();
    let x: Vec<f64> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| {
            lookup.get(k.as_str()).copied().unwrap_or_else(|| {
                missing.push(i + 1);
                f64::NAN
            })
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::data("covariate has no value for some count dates").with_rows(missing));
    }
    Ok(x)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// CSV bytes with a leading `# ...` comment line.
pub fn csv_bytes(comment: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# {comment}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::from(e.error))?;
    Ok(())
}
