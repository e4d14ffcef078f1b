//! Distance covariance and distance correlation.
//!
//! `V2_n(X, Y) = (1/n^2) sum_ij A_ij B_ij`, where `A` and `B` are the double
//! centered pairwise distance matrices of the two samples. The optional
//! `alpha` exponent gives the `|x - x'|^alpha` family; supplying a
//! semi-metric replaces the Euclidean distance of that side (the
//! metric-space generalization). The sensitivity index of an input (or
//! group of inputs) is `R_n(X^u, Y)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSelector, DataMatrix};
use crate::error::{Error, Result};
use crate::kernels::{euclidean_distances, DistanceMatrix, SemiMetricSpec};

/// Products of the self-covariances at or below this are treated as zero.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcovConfig {
    /// Exponent on the distances, in `(0, 2)`.
    pub alpha: f64,
    pub metric_x: Option<SemiMetricSpec>,
    pub metric_y: Option<SemiMetricSpec>,
}

impl Default for DcovConfig {
    fn default() -> Self {
        DcovConfig {
            alpha: 1.0,
            metric_x: None,
            metric_y: None,
        }
    }
}

impl DcovConfig {
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        let cfg = DcovConfig {
            alpha,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::BadAlpha(self.alpha));
        }
        Ok(())
    }
}

/// Distance matrix of a sample block under the configured exponent and
/// optional semi-metric.
pub fn block_distances(
    data: &DataMatrix,
    alpha: f64,
    metric: Option<&SemiMetricSpec>,
) -> Result<DistanceMatrix> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::BadAlpha(alpha));
    }
    let base = match metric {
        Some(sm) => sm.resolve(data)?.distances(data)?,
        None => DistanceMatrix::from_raw(euclidean_distances(data.values(), 1.0))?,
    };
    Ok(if alpha == 1.0 { base } else { base.powf(alpha) })
}

/// Clamps tiny negative round-off to zero.
pub(crate) fn clamp_round_off(v: f64, scale: f64) -> f64 {
    if v < 0.0 && v >= -1e-12 * scale.max(1.0) {
        0.0
    } else {
        v
    }
}

pub(crate) fn centered_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / (n * n)
}

fn centered_scale(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows() as f64;
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    na * nb / (n * n)
}

/// Empirical squared distance covariance from two distance matrices.
pub fn dcov2(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::SizeMismatch(a.n(), b.n()));
    }
    if a.n() < 2 {
        return Err(Error::Empty("dcov2 needs n >= 2".into()));
    }
    let ca = a.double_centered();
    let cb = b.double_centered();
    Ok(clamp_round_off(centered_inner(&ca, &cb), centered_scale(&ca, &cb)))
}

/// `R` from the three squared covariances, 0 on a degenerate denominator.
pub fn dcor_from_parts(vxy: f64, vxx: f64, vyy: f64) -> f64 {
    let denom = vxx * vyy;
    if !(denom > DEGENERATE_DENOMINATOR) {
        return 0.0;
    }
    let r2 = vxy / denom.sqrt();
    r2.clamp(0.0, 1.0).sqrt()
}

/// Centered distance matrices and self-covariance of one side, reusable
/// across many pairings.
#[derive(Debug, Clone)]
pub(crate) struct CenteredDistances {
    pub centered: Array2<f64>,
    pub self_dcov2: f64,
}

impl CenteredDistances {
    pub fn new(d: &DistanceMatrix) -> Self {
        let centered = d.double_centered();
        let scale = centered.iter().map(|v| v * v).sum::<f64>() / (d.n() * d.n()) as f64;
        let self_dcov2 = clamp_round_off(centered_inner(&centered, &centered), scale);
        CenteredDistances {
            centered,
            self_dcov2,
        }
    }

    pub fn dcor_with(&self, other: &CenteredDistances) -> f64 {
        let vxy = clamp_round_off(
            centered_inner(&self.centered, &other.centered),
            centered_scale(&self.centered, &other.centered),
        );
        dcor_from_parts(vxy, self.self_dcov2, other.self_dcov2)
    }
}

/// Distance correlation `R_n(X, Y)` in `[0, 1]`.
pub fn dcor(x: &DataMatrix, y: &DataMatrix, cfg: &DcovConfig) -> Result<f64> {
    cfg.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
    }
    if x.nrows() < 2 {
        return Err(Error::Empty("dcor needs n >= 2".into()));
    }
    let a = CenteredDistances::new(&block_distances(x, cfg.alpha, cfg.metric_x.as_ref())?);
    let b = CenteredDistances::new(&block_distances(y, cfg.alpha, cfg.metric_y.as_ref())?);
    Ok(a.dcor_with(&b))
}

/// Distance-correlation index of each input column or group against the
/// output block `outputs`. The output distances are computed once.
pub fn dcor_index(
    data: &DataMatrix,
    inputs: &[ColumnSelector],
    outputs: &ColumnSelector,
    cfg: &DcovConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let y = data.select(outputs)?;
    let b = CenteredDistances::new(&block_distances(&y, cfg.alpha, cfg.metric_y.as_ref())?);
    inputs
        .iter()
        .map(|sel| {
            let x = data.select(sel)?;
            let a = CenteredDistances::new(&block_distances(&x, cfg.alpha, cfg.metric_x.as_ref())?);
            Ok(a.dcor_with(&b))
        })
        .collect()
}

/// Pick-and-freeze distance correlation `R(Y, Y_{X^k})` between paired
/// output samples.
pub fn dcor_pick_freeze(y: &DataMatrix, y_frozen: &DataMatrix) -> Result<f64> {
    if y.ncols() != y_frozen.ncols() {
        return Err(Error::DimMismatch {
            expected: y.ncols(),
            found: y_frozen.ncols(),
        });
    }
    dcor(y, y_frozen, &DcovConfig::default())
}
