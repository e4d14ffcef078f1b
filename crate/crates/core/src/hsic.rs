//! Hilbert-Schmidt independence criterion and the kernel distance
//! correlation built on it.
//!
//! `HSIC_n(X, Y) = (1/n^2) Tr(K_X H K_Y H)`, computed as the entrywise inner
//! product of the two centered Gram matrices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSelector, DataMatrix};
use crate::dcor::{centered_inner, clamp_round_off, DEGENERATE_DENOMINATOR};
use crate::error::{Error, Result};
use crate::kernels::{gram_of, Bandwidth, GramMatrix, KernelFamily, KernelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct HsicConfig {
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
}

impl HsicConfig {
    pub fn new(kernel_x: KernelSpec, kernel_y: KernelSpec) -> Self {
        HsicConfig { kernel_x, kernel_y }
    }

    /// Gaussian on the inputs, `kernel_y` on the outputs.
    pub fn with_output_kernel(kernel_y: KernelSpec) -> Self {
        HsicConfig {
            kernel_x: KernelSpec::gaussian(),
            kernel_y,
        }
    }
}

/// A centered Gram matrix with its self-HSIC, reusable across pairings.
#[derive(Debug, Clone)]
pub struct CenteredGram {
    centered: Array2<f64>,
    self_hsic: f64,
}

impl CenteredGram {
    pub fn new(g: &GramMatrix) -> Self {
        let centered = if g.is_centered() {
            g.entries().to_owned()
        } else {
            g.center().into_entries()
        };
        let n2 = (centered.nrows() * centered.nrows()) as f64;
        let scale = centered.iter().map(|v| v * v).sum::<f64>() / n2;
        let self_hsic = clamp_round_off(centered_inner(&centered, &centered), scale);
        CenteredGram { centered, self_hsic }
    }

    pub fn from_data(spec: &KernelSpec, data: &DataMatrix) -> Result<Self> {
        Ok(Self::new(&gram_of(spec, data)?))
    }

    pub fn n(&self) -> usize {
        self.centered.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.centered
    }

    pub fn self_hsic(&self) -> f64 {
        self.self_hsic
    }

    pub fn hsic_with(&self, other: &CenteredGram) -> f64 {
        let raw = centered_inner(&self.centered, &other.centered);
        let n2 = (self.n() * self.n()) as f64;
        let scale = self.centered.iter().map(|v| v * v).sum::<f64>().sqrt()
            * other.centered.iter().map(|v| v * v).sum::<f64>().sqrt()
            / n2;
        clamp_round_off(raw, scale)
    }

    pub fn normalized_with(&self, other: &CenteredGram) -> f64 {
        normalized(self.hsic_with(other), self.self_hsic, other.self_hsic)
    }
}

/// `R` from HSIC values, 0 when either self-HSIC is degenerate.
pub fn normalized(hxy: f64, hxx: f64, hyy: f64) -> f64 {
    if !(hxx > DEGENERATE_DENOMINATOR && hyy > DEGENERATE_DENOMINATOR) {
        return 0.0;
    }
    (hxy / (hxx * hyy).sqrt()).clamp(0.0, 1.0).sqrt()
}

/// `(1/n^2) Tr(K_X H K_Y H)` from two Gram matrices.
pub fn hsic_from_grams(kx: &GramMatrix, ky: &GramMatrix) -> Result<f64> {
    if kx.n() != ky.n() {
        return Err(Error::SizeMismatch(kx.n(), ky.n()));
    }
    Ok(CenteredGram::new(kx).hsic_with(&CenteredGram::new(ky)))
}

fn check_pair(x: &DataMatrix, y: &DataMatrix) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
    }
    if x.nrows() < 2 {
        return Err(Error::Empty("hsic needs n >= 2".into()));
    }
    Ok(())
}

/// Biased empirical HSIC.
pub fn hsic(x: &DataMatrix, y: &DataMatrix, cfg: &HsicConfig) -> Result<f64> {
    check_pair(x, y)?;
    hsic_from_grams(&gram_of(&cfg.kernel_x, x)?, &gram_of(&cfg.kernel_y, y)?)
}

/// Kernel distance correlation `R(X, Y)` in `[0, 1]`.
pub fn hsic_r(x: &DataMatrix, y: &DataMatrix, cfg: &HsicConfig) -> Result<f64> {
    check_pair(x, y)?;
    let gx = CenteredGram::from_data(&cfg.kernel_x, x)?;
    let gy = CenteredGram::from_data(&cfg.kernel_y, y)?;
    Ok(gx.normalized_with(&gy))
}

/// HSIC index of each input column or group against the output block.
pub fn hsic_index(
    data: &DataMatrix,
    inputs: &[ColumnSelector],
    outputs: &ColumnSelector,
    cfg: &HsicConfig,
) -> Result<Vec<f64>> {
    let gy = CenteredGram::from_data(&cfg.kernel_y, &data.select(outputs)?)?;
    inputs
        .iter()
        .map(|sel| {
            let gx = CenteredGram::from_data(&cfg.kernel_x, &data.select(sel)?)?;
            Ok(gx.normalized_with(&gy))
        })
        .collect()
}

/// Resolves data-dependent parts of `kernel` (bandwidth, PCA basis) on the
/// pooled sample so both sides of a pick-and-freeze pair share one kernel.
pub(crate) fn pooled_kernel(kernel: &KernelSpec, pooled: &DataMatrix) -> Result<KernelSpec> {
    let mut k = kernel.clone();
    if let Some(sm) = &k.semimetric {
        k.semimetric = Some(sm.resolve(pooled)?);
    }
    let needs_bandwidth = matches!(
        k.family,
        KernelFamily::Gaussian | KernelFamily::Laplace | KernelFamily::SemimetricGaussian
    );
    if needs_bandwidth && k.bandwidth == Bandwidth::MedianHeuristic {
        let sigma = match &k.semimetric {
            Some(sm) => {
                let d = sm.distances(pooled)?;
                crate::kernels::median_of_distances(&d)?
            }
            None => crate::kernels::median_heuristic(pooled, &ColumnSelector::all(pooled.ncols()))?,
        };
        k.bandwidth = Bandwidth::Fixed(sigma);
    }
    Ok(k)
}

/// Pick-and-freeze kernel index `R(Y, Y_{X^k})` with one kernel on both
/// sides.
pub fn hsic_pick_freeze(y: &DataMatrix, y_frozen: &DataMatrix, kernel_y: &KernelSpec) -> Result<f64> {
    check_pair(y, y_frozen)?;
    if y.ncols() != y_frozen.ncols() {
        return Err(Error::DimMismatch {
            expected: y.ncols(),
            found: y_frozen.ncols(),
        });
    }
    let k = if kernel_y.family == KernelFamily::Categorical {
        kernel_y.clone()
    } else {
        pooled_kernel(kernel_y, &y.vstack(y_frozen)?)?
    };
    let g1 = CenteredGram::from_data(&k, y)?;
    let g2 = CenteredGram::from_data(&k, y_frozen)?;
    Ok(g1.normalized_with(&g2))
}
