//! Kernels, semi-metrics, Gram and distance matrices, and double centering.
//!
//! Both the distance-covariance and the HSIC estimators are built on the
//! same algebra: an `n x n` matrix of pairwise quantities is double
//! centered (`HGH`, with `H = I - 11'/n`) and then paired entrywise with a
//! second matrix.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSelector, DataMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median of the strictly positive pairwise distances.
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-|x - x'|^2 / (2 s^2))`
    Gaussian,
    /// `exp(-|x - x'|_1 / s)`
    Laplace,
    /// `(|z| + |z'| - |z - z'|) / 2`, the kernel generating the Euclidean metric.
    DistanceInduced,
    /// `delta(y, y') / n_y` on a single categorical column.
    Categorical,
    /// Gaussian kernel applied to a semi-metric between samples.
    SemimetricGaussian,
}

/// Declarative kernel description, resolved against data by [`gram`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
    pub semimetric: Option<SemiMetricSpec>,
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        bandwidth: Bandwidth,
        semimetric: Option<SemiMetricSpec>,
    ) -> Result<Self> {
        if let Bandwidth::Fixed(s) = bandwidth {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidBandwidth(s));
            }
        }
        if (family == KernelFamily::SemimetricGaussian) != semimetric.is_some() {
            return Err(Error::KindMismatch(
                "a semi-metric is required by, and only by, the semimetric_gaussian family".into(),
            ));
        }
        Ok(KernelSpec {
            family,
            bandwidth,
            semimetric,
        })
    }

    pub fn gaussian() -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::MedianHeuristic,
            semimetric: None,
        }
    }

    pub fn gaussian_with(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, Bandwidth::Fixed(sigma), None)
    }

    pub fn laplace() -> Self {
        KernelSpec {
            family: KernelFamily::Laplace,
            bandwidth: Bandwidth::MedianHeuristic,
            semimetric: None,
        }
    }

    pub fn distance_induced() -> Self {
        KernelSpec {
            family: KernelFamily::DistanceInduced,
            bandwidth: Bandwidth::MedianHeuristic,
            semimetric: None,
        }
    }

    pub fn categorical() -> Self {
        KernelSpec {
            family: KernelFamily::Categorical,
            bandwidth: Bandwidth::MedianHeuristic,
            semimetric: None,
        }
    }

    /// Gaussian kernel on distances between the first `m` principal
    /// component scores. The basis is fitted on the data the kernel is
    /// applied to.
    pub fn pca_gaussian(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidComponents("m must be at least 1".into()));
        }
        Ok(KernelSpec {
            family: KernelFamily::SemimetricGaussian,
            bandwidth: Bandwidth::MedianHeuristic,
            semimetric: Some(SemiMetricSpec::unfitted(m)),
        })
    }

    /// Same kernel with an explicit bandwidth (where applicable).
    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Result<Self> {
        self.bandwidth = bandwidth;
        Self::new(self.family, self.bandwidth, self.semimetric)
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemiMetricKind {
    Pca,
}

/// Principal-component semi-metric: `D(y, y')` is the Euclidean distance
/// between the projection scores of `y` and `y'` on `m` loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiMetricSpec {
    pub kind: SemiMetricKind,
    pub num_components: usize,
    /// Set when fewer positive-variance directions than requested exist and
    /// the fit fell back to `num_components`.
    pub requested_components: Option<usize>,
    pub fitted_basis: Option<PcaBasis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `m` orthonormal loading vectors of length `q`.
    pub loadings: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl SemiMetricSpec {
    pub fn unfitted(m: usize) -> Self {
        SemiMetricSpec {
            kind: SemiMetricKind::Pca,
            num_components: m,
            requested_components: None,
            fitted_basis: None,
        }
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.requested_components.is_some()
    }

    /// Returns this spec if already fitted, otherwise a copy fitted on `data`.
    pub fn resolve(&self, data: &DataMatrix) -> Result<SemiMetricSpec> {
        match &self.fitted_basis {
            Some(_) => Ok(self.clone()),
            None => fit_pca_semimetric(data, self.num_components),
        }
    }

    /// Projection scores, one row per sample.
    pub fn scores(&self, data: &DataMatrix) -> Result<Array2<f64>> {
        let basis = self.fitted_basis.as_ref().ok_or_else(|| {
            Error::InvalidComponents("semi-metric used before fitting".into())
        })?;
        let q = basis.mean.len();
        if data.ncols() != q {
            return Err(Error::DimMismatch {
                expected: q,
                found: data.ncols(),
            });
        }
        let n = data.nrows();
        let m = basis.loadings.len();
        let vals = data.values();
        Ok(Array2::from_shape_fn((n, m), |(i, c)| {
            basis.loadings[c]
                .iter()
                .zip(vals.row(i).iter().zip(&basis.mean))
                .map(|(l, (v, mu))| l * (v - mu))
                .sum()
        }))
    }

    pub fn distances(&self, data: &DataMatrix) -> Result<DistanceMatrix> {
        let scores = self.scores(data)?;
        Ok(DistanceMatrix {
            entries: euclidean_distances(scores.view(), 1.0),
        })
    }
}

/// `n x n` symmetric matrix of kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Array2<f64>,
    centered: bool,
}

impl GramMatrix {
    /// Wraps a square symmetric matrix as an uncentered Gram matrix.
    pub fn from_raw(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::SizeMismatch(r, c));
        }
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in 0..i {
                if (entries[[i, j]] - entries[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "gram matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(GramMatrix {
            entries,
            centered: false,
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// `HGH`.
    pub fn center(&self) -> GramMatrix {
        GramMatrix {
            entries: double_center(self.entries.view()),
            centered: true,
        }
    }

    /// Frobenius norm of the entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entries divided by the Frobenius norm; all-zero matrices are returned unchanged.
    pub fn normalized(&self) -> GramMatrix {
        let norm = self.frobenius_norm();
        if norm > 0.0 {
            GramMatrix {
                entries: &self.entries / norm,
                centered: self.centered,
            }
        } else {
            self.clone()
        }
    }
}

/// `HGH` as a free function.
pub fn center(g: &GramMatrix) -> GramMatrix {
    g.center()
}

/// Nonnegative symmetric matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    entries: Array2<f64>,
}

impl DistanceMatrix {
    pub fn from_raw(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::SizeMismatch(r, c));
        }
        for i in 0..r {
            if entries[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = entries[[i, j]];
                if v < 0.0 || v != entries[[j, i]] || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "distance matrix entry ({i}, {j}) invalid"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { entries })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// `A_ij = a_ij - mean_i. - mean_.j + mean_..`
    pub fn double_centered(&self) -> Array2<f64> {
        double_center(self.entries.view())
    }

    /// Entrywise power `a_ij^alpha`.
    pub fn powf(&self, alpha: f64) -> DistanceMatrix {
        DistanceMatrix {
            entries: self.entries.mapv(|v| if v == 0.0 { 0.0 } else { v.powf(alpha) }),
        }
    }
}

/// Subtracts row and column means and adds back the grand mean.
pub fn double_center(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = m.nrows() as f64;
    let row_means = m.sum_axis(Axis(1)) / n;
    let col_means = m.sum_axis(Axis(0)) / n;
    let grand = row_means.sum() / n;
    let mut out = m.to_owned();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = *v - row_means[i] - col_means[j] + grand;
    }
    out
}

/// `|x_i - x_j|_2^power` over the rows of `x`.
pub(crate) fn euclidean_distances(x: ArrayView2<'_, f64>, power: f64) -> Array2<f64> {
    let n = x.nrows();
    let rows = x.as_standard_layout();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let ri = rows.row(i);
        for j in 0..i {
            let rj = rows.row(j);
            let sq: f64 = ri.iter().zip(rj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let d = if power == 2.0 {
                sq
            } else if power == 1.0 {
                sq.sqrt()
            } else {
                sq.sqrt().powf(power)
            };
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

fn l1_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let d: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b).abs()).sum();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// `|X_i - X_j|_2^alpha` on the selected columns, `alpha` in `(0, 2]`.
pub fn pairwise_distances(
    data: &DataMatrix,
    cols: &ColumnSelector,
    alpha: f64,
) -> Result<DistanceMatrix> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::BadAlpha(alpha));
    }
    let sub = data.select(cols)?;
    Ok(DistanceMatrix {
        entries: euclidean_distances(sub.values(), alpha),
    })
}

/// Median of the strictly positive entries above the diagonal.
fn median_positive(d: &Array2<f64>) -> Result<f64> {
    let n = d.nrows();
    let mut vals: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in 0..i {
            let v = d[[i, j]];
            if v > 0.0 {
                vals.push(v);
            }
        }
    }
    if vals.is_empty() {
        return Err(Error::ZeroBandwidth);
    }
    let len = vals.len();
    let mid = len / 2;
    let (_, &mut upper, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
    if len % 2 == 1 {
        Ok(upper)
    } else {
        let lower = vals[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(0.5 * (lower + upper))
    }
}

/// Median of the strictly positive pairwise Euclidean distances.
pub fn median_heuristic(data: &DataMatrix, cols: &ColumnSelector) -> Result<f64> {
    if data.nrows() < 2 {
        return Err(Error::Empty("median heuristic needs at least 2 samples".into()));
    }
    let sub = data.select(cols)?;
    median_positive(&euclidean_distances(sub.values(), 1.0))
}

/// Median of the strictly positive entries of a distance matrix.
pub fn median_of_distances(d: &DistanceMatrix) -> Result<f64> {
    median_positive(&d.entries)
}

/// Gram matrix of `spec` on the selected columns (uncentered).
pub fn gram(spec: &KernelSpec, data: &DataMatrix, cols: &ColumnSelector) -> Result<GramMatrix> {
    let sub = data.select(cols)?;
    gram_of(spec, &sub)
}

/// Gram matrix of `spec` over all columns of `data`.
pub fn gram_of(spec: &KernelSpec, data: &DataMatrix) -> Result<GramMatrix> {
    let x = data.values();
    let entries = match spec.family {
        KernelFamily::Gaussian => {
            let d = euclidean_distances(x, 1.0);
            let sigma = match spec.bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::MedianHeuristic => median_positive(&d)?,
            };
            let denom = 2.0 * sigma * sigma;
            d.mapv(|v| (-v * v / denom).exp())
        }
        KernelFamily::Laplace => {
            let sigma = match spec.bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::MedianHeuristic => median_positive(&euclidean_distances(x, 1.0))?,
            };
            l1_distances(x).mapv(|d| (-d / sigma).exp())
        }
        KernelFamily::DistanceInduced => {
            let d = euclidean_distances(x, 1.0);
            let norms: Array1<f64> = x
                .outer_iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            Array2::from_shape_fn(d.dim(), |(i, j)| 0.5 * (norms[i] + norms[j] - d[[i, j]]))
        }
        KernelFamily::Categorical => {
            if data.ncols() != 1 || !data.is_categorical(0) {
                return Err(Error::KindMismatch(
                    "categorical kernel needs a single categorical column".into(),
                ));
            }
            let labels: Vec<u64> = x.column(0).iter().map(|&v| v as u64).collect();
            let mut counts: HashMap<u64, usize> = HashMap::new();
            for &l in &labels {
                *counts.entry(l).or_insert(0) += 1;
            }
            let n = labels.len();
            Array2::from_shape_fn((n, n), |(i, j)| {
                if labels[i] == labels[j] {
                    1.0 / counts[&labels[i]] as f64
                } else {
                    0.0
                }
            })
        }
        KernelFamily::SemimetricGaussian => {
            let sm = spec.semimetric.as_ref().ok_or_else(|| {
                Error::KindMismatch("semimetric_gaussian kernel without a semi-metric".into())
            })?;
            let dist = sm.resolve(data)?.distances(data)?;
            let sigma = match spec.bandwidth {
                Bandwidth::Fixed(s) => s,
                Bandwidth::MedianHeuristic => median_positive(&dist.entries)?,
            };
            let denom = 2.0 * sigma * sigma;
            dist.entries.mapv(|d| (-d * d / denom).exp())
        }
    };
    Ok(GramMatrix {
        entries,
        centered: false,
    })
}

/// Fits the `m`-component PCA semi-metric on output samples (rows).
///
/// Uses the `q x q` sample covariance when `q <= n` and the `n x n` dual
/// Gram form otherwise. Each loading is signed so that its largest-magnitude
/// entry is positive. When fewer than `m` directions carry positive
/// variance, the fit keeps the available ones and records the request in
/// `requested_components`.
pub fn fit_pca_semimetric(outputs: &DataMatrix, m: usize) -> Result<SemiMetricSpec> {
    let (n, q) = (outputs.nrows(), outputs.ncols());
    if m == 0 {
        return Err(Error::InvalidComponents("m must be at least 1".into()));
    }
    if n < 2 || m > (n - 1).min(q) {
        return Err(Error::InvalidComponents(format!(
            "m = {m} exceeds min(n - 1, q) = {}",
            (n.max(1) - 1).min(q)
        )));
    }
    let vals = outputs.values();
    let mean: Vec<f64> = (0..q).map(|j| vals.column(j).sum() / n as f64).collect();
    let xc = DMatrix::from_fn(n, q, |i, j| vals[[i, j]] - mean[j]);
    let denom = (n - 1) as f64;

    let mut pairs: Vec<(f64, Vec<f64>)> = if q <= n {
        let cov = (xc.transpose() * &xc) / denom;
        let eig = SymmetricEigen::new(cov);
        (0..q)
            .map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect()))
            .collect()
    } else {
        let k = (&xc * xc.transpose()) / denom;
        let eig = SymmetricEigen::new(k);
        (0..n)
            .map(|c| {
                let lambda = eig.eigenvalues[c];
                let u = eig.eigenvectors.column(c);
                let v = xc.transpose() * u;
                let norm = v.norm();
                let v: Vec<f64> = if norm > 0.0 {
                    v.iter().map(|x| x / norm).collect()
                } else {
                    vec![0.0; q]
                };
                (lambda, v)
            })
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = pairs.first().map_or(0.0, |p| p.0).max(0.0);
    let tol = 1e-12 * top.max(f64::MIN_POSITIVE) * q.max(n) as f64;
    let available = pairs.iter().filter(|p| p.0 > tol).count();
    let kept = m.min(available);
    if kept == 0 {
        return Err(Error::DegenerateSample("outputs have zero variance".into()));
    }
    let mut loadings = Vec::with_capacity(kept);
    let mut eigenvalues = Vec::with_capacity(kept);
    for (lambda, mut v) in pairs.into_iter().take(kept) {
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        loadings.push(v);
        eigenvalues.push(lambda);
    }
    Ok(SemiMetricSpec {
        kind: SemiMetricKind::Pca,
        num_components: kept,
        requested_components: (kept < m).then_some(m),
        fitted_basis: Some(PcaBasis {
            mean,
            loadings,
            eigenvalues,
        }),
    })
}
