//! Sample storage, CSV exchange and uniform input designs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// Non-negative integer codes stored as floats.
    Categorical,
}

/// `n` samples by `d` variables, with per-column names and kinds.
///
/// Immutable once built; every constructor validates that continuous
/// columns are finite and categorical columns hold non-negative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
}

fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

impl DataMatrix {
    /// Continuous matrix with names `x1..xd`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let d = values.ncols();
        Self::with_metadata(values, default_names(d), vec![ColumnKind::Continuous; d])
    }

    pub fn with_names(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        let d = values.ncols();
        Self::with_metadata(values, names, vec![ColumnKind::Continuous; d])
    }

    pub fn with_metadata(
        values: Array2<f64>,
        names: Vec<String>,
        kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::Empty(format!("{n}x{d} matrix")));
        }
        if names.len() != d {
            return Err(Error::SizeMismatch(names.len(), d));
        }
        if kinds.len() != d {
            return Err(Error::SizeMismatch(kinds.len(), d));
        }
        for ((row, col), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            if kinds[col] == ColumnKind::Categorical && (v < 0.0 || v.fract() != 0.0) {
                return Err(Error::KindMismatch(format!(
                    "categorical column {col} holds non-code value {v} at row {row}"
                )));
            }
        }
        Ok(DataMatrix {
            values,
            names,
            kinds,
        })
    }

    /// One continuous column.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        let arr = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Self::new(arr)
    }

    /// Continuous matrix from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::RaggedRows {
                    row: i + 1,
                    found: r.len(),
                    expected: d,
                });
            }
            flat.extend_from_slice(r);
        }
        let arr = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Self::new(arr)
    }

    /// One categorical column of label codes.
    pub fn categorical(codes: &[usize], name: &str) -> Result<Self> {
        let arr = Array2::from_shape_fn((codes.len(), 1), |(i, _)| codes[i] as f64);
        Self::with_metadata(arr, vec![name.to_string()], vec![ColumnKind::Categorical])
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn is_categorical(&self, j: usize) -> bool {
        self.kinds[j] == ColumnKind::Categorical
    }

    /// Number of samples carrying each label of a categorical column.
    pub fn level_counts(&self, j: usize) -> Result<BTreeMap<u64, usize>> {
        if !self.is_categorical(j) {
            return Err(Error::KindMismatch(format!(
                "column {} is continuous",
                self.names[j]
            )));
        }
        let mut counts = BTreeMap::new();
        for &v in self.values.column(j) {
            *counts.entry(v as u64).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Copy of the selected columns, in selector order.
    pub fn select(&self, cols: &ColumnSelector) -> Result<DataMatrix> {
        cols.check(self.ncols())?;
        let values = self.values.select(Axis(1), cols.indices());
        Ok(DataMatrix {
            values,
            names: cols.indices().iter().map(|&j| self.names[j].clone()).collect(),
            kinds: cols.indices().iter().map(|&j| self.kinds[j]).collect(),
        })
    }

    /// Copy of the given rows (repeats allowed, as in bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        if rows.is_empty() {
            return Err(Error::Empty("row selection".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::InvalidSelector(format!(
                "row {bad} out of range for {} rows",
                self.nrows()
            )));
        }
        Ok(DataMatrix {
            values: self.values.select(Axis(0), rows),
            names: self.names.clone(),
            kinds: self.kinds.clone(),
        })
    }

    /// Columns of `self` followed by columns of `other`.
    pub fn hstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.nrows() != other.nrows() {
            return Err(Error::SizeMismatch(self.nrows(), other.nrows()));
        }
        let values = ndarray::concatenate(Axis(1), &[self.values.view(), other.values.view()])
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut kinds = self.kinds.clone();
        kinds.extend(other.kinds.iter().copied());
        Ok(DataMatrix {
            values,
            names,
            kinds,
        })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.ncols() != other.ncols() {
            return Err(Error::SizeMismatch(self.ncols(), other.ncols()));
        }
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(DataMatrix {
            values,
            names: self.names.clone(),
            kinds: self.kinds.clone(),
        })
    }

    /// Same data with new column names.
    pub fn renamed(mut self, names: Vec<String>) -> Result<DataMatrix> {
        if names.len() != self.ncols() {
            return Err(Error::SizeMismatch(names.len(), self.ncols()));
        }
        self.names = names;
        Ok(self)
    }

    /// Row-major copy of the values, one `Vec` per sample.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.outer_iter().map(|r| r.to_vec()).collect()
    }
}

/// Ordered subset of column positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnSelector(Vec<usize>);

impl ColumnSelector {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidSelector("empty selector".into()));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSelector(format!(
                "duplicate indices in {indices:?}"
            )));
        }
        Ok(ColumnSelector(indices))
    }

    pub fn single(j: usize) -> Self {
        ColumnSelector(vec![j])
    }

    pub fn all(d: usize) -> Self {
        ColumnSelector((0..d).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Columns of a `d`-column matrix that are not in this selector.
    pub fn complement(&self, d: usize) -> Vec<usize> {
        (0..d).filter(|j| !self.0.contains(j)).collect()
    }

    pub fn check(&self, d: usize) -> Result<()> {
        match self.0.iter().find(|&&j| j >= d) {
            Some(&j) => Err(Error::InvalidSelector(format!(
                "column {j} out of range for {d} columns"
            ))),
            None => Ok(()),
        }
    }
}

/// Reads a comma-separated numeric file.
///
/// Rows and columns in error reports are 1-based line and cell numbers of
/// the file. Without a header, columns are named `x1..xd`.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    parse_csv(&text, has_header)
}

pub(crate) fn parse_csv(text: &str, has_header: bool) -> Result<DataMatrix> {
    let mut names: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut flat = Vec::new();
    let mut nrows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if has_header && names.is_none() {
            width = Some(cells.len());
            names = Some(cells.iter().map(|c| c.trim().to_string()).collect());
            continue;
        }
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(Error::RaggedRows {
                row,
                found: cells.len(),
                expected,
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row,
                col: c + 1,
                text: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row,
                    col: c + 1,
                    text: cell.to_string(),
                });
            }
            flat.push(v);
        }
        nrows += 1;
    }
    let d = width.unwrap_or(0);
    if nrows == 0 {
        return Err(Error::Empty("csv has no data rows".into()));
    }
    let values = Array2::from_shape_vec((nrows, d), flat)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let names = names.unwrap_or_else(|| default_names(d));
    DataMatrix::with_names(values, names)
}

/// Writes `data` with a header row. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_csv(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_csv_string(data))?;
    Ok(())
}

pub fn to_csv_string(data: &DataMatrix) -> String {
    let mut out = data.names().join(",");
    out.push('\n');
    for row in data.values.outer_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// `n` independent draws, uniform on the box `[lows, highs)`.
pub fn sample_uniform(lows: &[f64], highs: &[f64], n: usize, seed: RngSeed) -> Result<DataMatrix> {
    check_bounds(lows, highs)?;
    if n == 0 {
        return Err(Error::Empty("sample size n = 0".into()));
    }
    let p = lows.len();
    let mut rng = seed.rng();
    let values = Array2::from_shape_fn((n, p), |(_, j)| {
        let u: f64 = rng.random();
        lows[j] + (highs[j] - lows[j]) * u
    });
    DataMatrix::new(values)
}

pub(crate) fn check_bounds(lows: &[f64], highs: &[f64]) -> Result<()> {
    if lows.len() != highs.len() {
        return Err(Error::SizeMismatch(lows.len(), highs.len()));
    }
    if lows.is_empty() {
        return Err(Error::Empty("no input bounds".into()));
    }
    for (index, (&low, &high)) in lows.iter().zip(highs).enumerate() {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidBounds { index, low, high });
        }
    }
    Ok(())
}
