//! CSV datasets and interval tables. Comma separated, header required,
//! numbers written in shortest round-trip form.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rtl_core::estimator::Dataset;
use rtl_core::inference::ConfidenceInterval;
use rtl_core::linalg::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files;

/// Which columns hold the response, primary covariates and confounders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub y: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

impl ColumnRoles {
    /// `y, x1..xd, z1..zq`.
    pub fn generic(d: usize, q: usize) -> Self {
        ColumnRoles {
            y: "y".into(),
            x: (1..=d).map(|j| format!("x{j}")).collect(),
            z: (1..=q).map(|j| format!("z{j}")).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::config("roles", m));
        if self.y.is_empty() {
            return bad("y column name is empty".into());
        }
        if self.x.is_empty() && self.z.is_empty() {
            return bad("at least one x or z column is required".into());
        }
        let mut seen = HashSet::new();
        for c in self.columns() {
            if !seen.insert(c) {
                return bad(format!("column {c:?} is assigned more than one role"));
            }
        }
        Ok(())
    }

    /// `y`, then `x`, then `z`.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.y.as_str())
            .chain(self.x.iter().map(String::as_str))
            .chain(self.z.iter().map(String::as_str))
    }
}

/// Reads a dataset; `origin` names the source in errors.
pub fn read_dataset<R: Read>(reader: R, roles: &ColumnRoles, domain_id: &str, origin: &Path) -> Result<Dataset> {
    roles.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", origin.display())))?
        .clone();
    if headers.is_empty() {
        return Err(CliError::EmptyFile(origin.to_path_buf()));
    }
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let idx: Vec<(usize, &str)> = roles.columns().map(|c| position(c).map(|i| (i, c))).collect::<Result<_>>()?;
    let (d, q) = (roles.x.len(), roles.z.len());
    let (mut y, mut xs, mut zs) = (Vec::new(), Vec::new(), Vec::new());
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| CliError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (k, &(i, name)) in idx.iter().enumerate() {
            let cell = record.get(i).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| CliError::Parse {
                row,
                column: name.to_string(),
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("{cell:?} is not finite"),
                });
            }
            match k {
                0 => y.push(v),
                k if k <= d => xs.push(v),
                _ => zs.push(v),
            }
        }
    }
    if y.is_empty() {
        return Err(CliError::EmptyFile(origin.to_path_buf()));
    }
    let n = y.len();
    let x = Matrix::from_vec(n, d, xs)?;
    let z = Matrix::from_vec(n, q, zs)?;
    Ok(Dataset::new(y, x, z, domain_id)?)
}

/// Loads a dataset whose domain id is the file stem.
pub fn load_csv(path: &Path, roles: &ColumnRoles) -> Result<Dataset> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_dataset(files::open(path)?, roles, &id, path)
}

/// Writes `data` with the role names as header, in `y, x…, z…` order.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset, roles: &ColumnRoles) -> Result<()> {
    if roles.x.len() != data.d() || roles.z.len() != data.q() {
        return Err(CliError::Data(format!(
            "roles name {} x and {} z columns but the dataset has d={} and q={}",
            roles.x.len(),
            roles.z.len(),
            data.d(),
            data.q()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(roles.columns()).map_err(csv_error)?;
    let mut buf = Vec::with_capacity(1 + data.d() + data.q());
    for i in 0..data.n() {
        buf.clear();
        buf.push(data.y[i].to_string());
        buf.extend(data.x.row(i).iter().map(f64::to_string));
        buf.extend(data.z.row(i).iter().map(f64::to_string));
        w.write_record(&buf).map_err(csv_error)?;
    }
    w.flush().map_err(|e| CliError::io("csv output", e))
}

/// Atomic [`write_dataset`] to a file.
pub fn export_csv(path: &Path, data: &Dataset, roles: &ColumnRoles) -> Result<()> {
    files::write_atomic(path, |w| write_dataset(w, data, roles))
}

/// Interval table with header `name,estimate,se,lower,upper,level`.
pub fn write_intervals<W: Write>(writer: W, rows: &[(String, ConfidenceInterval)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "estimate", "se", "lower", "upper", "level"])
        .map_err(csv_error)?;
    for (name, ci) in rows {
        w.write_record([
            name.clone(),
            ci.estimate.to_string(),
            ci.se.to_string(),
            ci.lower.to_string(),
            ci.upper.to_string(),
            ci.level.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| CliError::io("csv output", e))
}

/// Serializes records with `serde` field names as the header.
pub fn write_records<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush().map_err(|e| CliError::io("csv output", e))
}

fn csv_error(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io("csv output", io),
        other => CliError::Data(format!("{other:?}")),
    }
}
