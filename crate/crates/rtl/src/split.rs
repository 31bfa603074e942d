//! Seeded train/validation/test partitions.

use std::path::Path;

use rtl_core::estimator::Dataset;
use rtl_core::rng::{Purpose, SeedStream};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files;

/// Fractions of rows for each part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

const FRACTION_SUM_TOLERANCE: f64 = 1e-9;

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(CliError::InvalidFractions(format!(
                "fractions must be positive, got ({}, {}, {})",
                self.train, self.val, self.test
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > FRACTION_SUM_TOLERANCE {
            return Err(CliError::InvalidFractions(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, val, test)` row counts for `n` rows: train and test take the
    /// floor of their share and validation takes the remainder.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        if n < 3 {
            return Err(CliError::Data(format!("splitting needs at least 3 rows, got {n}")));
        }
        // The guard keeps products such as 0.3·10 = 3.0000000000000004 and
        // 0.29·100 = 28.999999999999996 on their intended integer.
        let share = |f: f64| (f * n as f64 + FRACTION_SUM_TOLERANCE).floor() as usize;
        let train = share(self.train);
        let test = share(self.test);
        let val = n - train - test;
        if train == 0 || val == 0 || test == 0 {
            return Err(CliError::InvalidFractions(format!(
                "{n} rows give an empty part: ({train}, {val}, {test})"
            )));
        }
        Ok((train, val, test))
    }

    /// Row indices of each part after a seeded permutation.
    pub fn indices(&self, n: usize) -> Result<[Vec<usize>; 3]> {
        let (train, val, _) = self.sizes(n)?;
        let perm = SeedStream::new(self.seed).purpose(Purpose::Split).permutation(n);
        let (a, rest) = perm.split_at(train);
        let (b, c) = rest.split_at(val);
        Ok([a.to_vec(), b.to_vec(), c.to_vec()])
    }
}

/// `(train, val, test)` datasets; disjoint and together exhaustive.
pub fn split_dataset(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let [a, b, c] = spec.indices(data.n())?;
    Ok((data.select_rows(&a), data.select_rows(&b), data.select_rows(&c)))
}

/// Splits a CSV file row-wise, keeping every column, into `train.csv`,
/// `val.csv` and `test.csv` under `out_dir`.
pub fn split_csv_file(input: &Path, spec: &SplitSpec, out_dir: &Path) -> Result<[usize; 3]> {
    spec.validate()?;
    let mut rdr = csv::Reader::from_reader(files::open(input)?);
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?
        .clone();
    let records = rdr
        .records()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| CliError::Parse {
                row: i + 1,
                column: String::new(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(CliError::EmptyFile(input.to_path_buf()));
    }
    let parts = spec.indices(records.len())?;
    files::ensure_dir(out_dir)?;
    for (name, idx) in ["train.csv", "val.csv", "test.csv"].iter().zip(&parts) {
        let path = out_dir.join(name);
        files::write_atomic(&path, |w| {
            let mut wr = csv::Writer::from_writer(w);
            let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
            wr.write_record(&header).map_err(io)?;
            for &i in idx {
                wr.write_record(&records[i]).map_err(io)?;
            }
            wr.flush().map_err(|e| CliError::io(&path, e))
        })?;
    }
    Ok([parts[0].len(), parts[1].len(), parts[2].len()])
}
