//! Csiszár f-divergence indices from a kernel density ratio, and the
//! Kraskov k-nearest-neighbour mutual information estimator.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Smallest ratio value handed to `f`.
pub const RATIO_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FChoice {
    KlNegLog,
    KlTlogt,
    Hellinger,
    TotalVariation,
    PearsonChi2,
    NeymanChi2,
}

impl FChoice {
    pub const ALL: [FChoice; 6] = [
        FChoice::KlNegLog,
        FChoice::KlTlogt,
        FChoice::Hellinger,
        FChoice::TotalVariation,
        FChoice::PearsonChi2,
        FChoice::NeymanChi2,
    ];

    /// Convex generator with `f(1) = 0`.
    pub fn f(self, t: f64) -> f64 {
        match self {
            FChoice::KlNegLog => -t.ln(),
            FChoice::KlTlogt => t * t.ln(),
            FChoice::Hellinger => (t.sqrt() - 1.0).powi(2),
            FChoice::TotalVariation => (t - 1.0).abs(),
            FChoice::PearsonChi2 => (t - 1.0).powi(2),
            FChoice::NeymanChi2 => (1.0 - t * t) / t,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FChoice::KlNegLog => "kl_neg_log",
            FChoice::KlTlogt => "kl_tlogt",
            FChoice::Hellinger => "hellinger",
            FChoice::TotalVariation => "total_variation",
            FChoice::PearsonChi2 => "pearson_chi2",
            FChoice::NeymanChi2 => "neyman_chi2",
        }
    }

    pub fn from_name(s: &str) -> Option<FChoice> {
        FChoice::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for FChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type RatioFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Estimated density ratio `r(x, y) = p_XY / (p_X p_Y)`, floored.
#[derive(Clone)]
pub struct RatioEstimate {
    evaluator: Arc<RatioFn>,
    floor: f64,
}

impl fmt::Debug for RatioEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RatioEstimate").field("floor", &self.floor).finish_non_exhaustive()
    }
}

impl RatioEstimate {
    pub fn new(evaluator: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("ratio floor must be positive, got {floor}")));
        }
        Ok(RatioEstimate {
            evaluator: Arc::new(evaluator),
            floor,
        })
    }

    /// The independence ratio `r = 1`.
    pub fn independent() -> Self {
        RatioEstimate {
            evaluator: Arc::new(|_, _| 1.0),
            floor: RATIO_FLOOR,
        }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r = (self.evaluator)(x, y);
        if r.is_nan() {
            self.floor
        } else {
            r.max(self.floor)
        }
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    crate::stats::std_dev(v)
}

/// Normal-reference bandwidth for a `d`-dimensional product Gaussian KDE.
pub fn silverman_bandwidth(sd: f64, n: usize, d: usize) -> f64 {
    let d = d as f64;
    sd * (4.0 / ((d + 2.0) * n as f64)).powf(1.0 / (d + 4.0))
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Ratio of Gaussian kernel density estimates, joint over product of marginals.
pub fn kde_ratio(xs: &[f64], ys: &[f64]) -> Result<RatioEstimate> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 10 {
        return Err(Error::DegenerateSample(format!("density ratio needs n >= 10, got {n}")));
    }
    let (sx, sy) = (sample_sd(xs), sample_sd(ys));
    if !(sx > 0.0) {
        return Err(Error::DegenerateSample("x has zero variance".into()));
    }
    if !(sy > 0.0) {
        return Err(Error::DegenerateSample("y has zero variance".into()));
    }
    let (hx1, hy1) = (silverman_bandwidth(sx, n, 1), silverman_bandwidth(sy, n, 1));
    let (hx2, hy2) = (silverman_bandwidth(sx, n, 2), silverman_bandwidth(sy, n, 2));
    let xs = xs.to_vec();
    let ys = ys.to_vec();
    let nf = n as f64;
    let evaluator = move |x: f64, y: f64| {
        let (mut px, mut py, mut pxy) = (0.0, 0.0, 0.0);
        for (xi, yi) in xs.iter().zip(&ys) {
            let (dx1, dy1) = ((x - xi) / hx1, (y - yi) / hy1);
            let (dx2, dy2) = ((x - xi) / hx2, (y - yi) / hy2);
            px += (-0.5 * dx1 * dx1).exp();
            py += (-0.5 * dy1 * dy1).exp();
            pxy += (-0.5 * (dx2 * dx2 + dy2 * dy2)).exp();
        }
        let px = px * INV_SQRT_2PI / (nf * hx1);
        let py = py * INV_SQRT_2PI / (nf * hy1);
        let pxy = pxy * INV_SQRT_2PI * INV_SQRT_2PI / (nf * hx2 * hy2);
        pxy / (px * py)
    };
    RatioEstimate::new(evaluator, RATIO_FLOOR)
}

/// Unclamped plug-in mean of `f(1 / r(X_i, Y_i))`.
pub fn fdiv_raw(ratio: &RatioEstimate, xs: &[f64], ys: &[f64], choice: FChoice) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(Error::Empty("f-divergence on empty sample".into()));
    }
    let s: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| choice.f(1.0 / ratio.eval(x, y)))
        .sum();
    Ok(s / xs.len() as f64)
}

/// f-divergence index from a given ratio, clamped at 0.
pub fn fdiv_index_with(ratio: &RatioEstimate, xs: &[f64], ys: &[f64], choice: FChoice) -> Result<f64> {
    Ok(fdiv_raw(ratio, xs, ys, choice)?.max(0.0))
}

/// f-divergence index with a KDE density ratio.
pub fn fdiv_index(xs: &[f64], ys: &[f64], choice: FChoice) -> Result<f64> {
    fdiv_index_with(&kde_ratio(xs, ys)?, xs, ys, choice)
}

/// All six indices from one ratio fit, in `FChoice::ALL` order.
pub fn fdiv_all(xs: &[f64], ys: &[f64]) -> Result<Vec<(FChoice, f64)>> {
    let ratio = kde_ratio(xs, ys)?;
    let inv: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| 1.0 / ratio.eval(x, y)).collect();
    let n = inv.len() as f64;
    Ok(FChoice::ALL
        .iter()
        .map(|&c| (c, (inv.iter().map(|&t| c.f(t)).sum::<f64>() / n).max(0.0)))
        .collect())
}

/// Squared-loss mutual information: the Neyman choice applied to `1 / r`.
pub fn smi_index(xs: &[f64], ys: &[f64]) -> Result<f64> {
    fdiv_index(xs, ys, FChoice::NeymanChi2)
}

/// Jitter amplitude relative to a coordinate's range.
const JITTER: f64 = 1e-10;

fn has_ties(col: &[f64]) -> bool {
    let mut s = col.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

fn jittered_columns(data: &DataMatrix, seed: RngSeed, offset: u64) -> Vec<Vec<f64>> {
    (0..data.ncols())
        .map(|j| {
            let mut col = data.column_vec(j);
            if has_ties(&col) {
                let (lo, hi) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                let scale = if hi > lo { JITTER * (hi - lo) } else { JITTER };
                let mut rng = seed.derive(offset + j as u64).rng();
                for v in &mut col {
                    *v += scale * rng.random::<f64>();
                }
            }
            col
        })
        .collect()
}

fn max_norm_distances(cols: &[Vec<f64>], i: usize, out: &mut [f64]) {
    out.fill(0.0);
    for c in cols {
        let ci = c[i];
        for (o, v) in out.iter_mut().zip(c) {
            *o = o.max((v - ci).abs());
        }
    }
}

/// Maximum total dimension accepted by the multivariate estimator.
pub const KSG_MAX_DIM: usize = 3;

/// Kraskov (algorithm 1) mutual information between two blocks, max-norm
/// neighbourhoods, strict neighbour counts. May be slightly negative.
pub fn ksg_mi_blocks(x: &DataMatrix, y: &DataMatrix, k: usize, seed: RngSeed) -> Result<f64> {
    let n = x.nrows();
    if n != y.nrows() {
        return Err(Error::SizeMismatch(n, y.nrows()));
    }
    if k == 0 || k >= n {
        return Err(Error::BadK { k, n });
    }
    if x.ncols() + y.ncols() > KSG_MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "k-NN mutual information supports at most {KSG_MAX_DIM} total dimensions, got {}",
            x.ncols() + y.ncols()
        )));
    }
    let xc = jittered_columns(x, seed, 0);
    let yc = jittered_columns(y, seed, 1 << 16);
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        max_norm_distances(&xc, i, &mut dx);
        max_norm_distances(&yc, i, &mut dy);
        for j in 0..n {
            dz[j] = dx[j].max(dy[j]);
        }
        dz[i] = f64::INFINITY;
        let mut tmp = dz.clone();
        let (_, eps, _) = tmp.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let nx = (0..n).filter(|&j| j != i && dx[j] < eps).count();
        let ny = (0..n).filter(|&j| j != i && dy[j] < eps).count();
        acc += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    Ok(digamma(k as f64) + digamma(n as f64) - acc / n as f64)
}

/// Kraskov mutual information between two scalar samples.
pub fn ksg_mi(xs: &[f64], ys: &[f64], k: usize) -> Result<f64> {
    ksg_mi_seeded(xs, ys, k, RngSeed(0))
}

/// As `ksg_mi`, with the tie-breaking jitter drawn from `seed`.
pub fn ksg_mi_seeded(xs: &[f64], ys: &[f64], k: usize, seed: RngSeed) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch(xs.len(), ys.len()));
    }
    ksg_mi_blocks(&DataMatrix::from_column(xs)?, &DataMatrix::from_column(ys)?, k, seed)
}
