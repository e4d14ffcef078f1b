//! Nonnegative HSIC Lasso by cyclic coordinate descent.
//!
//! Minimizes `1/2 HSIC(Y,Y) - sum_k a_k HSIC(X^k,Y) + 1/2 sum_kl a_k a_l
//! HSIC(X^k,X^l) + lambda sum_k a_k` over `a >= 0`, where every centered
//! Gram matrix is first scaled to unit Frobenius norm.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSelector, DataMatrix};
use crate::error::{Error, Result};
use crate::kernels::{gram_of, KernelSpec};

pub const MAX_SWEEPS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-8;

/// Rule for the penalty weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    /// `c * max_k HSIC(X^k, Y)`.
    Relative(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Relative(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsicLassoSolution {
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest coordinate change in the final sweep.
    pub final_change: f64,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
}

impl HsicLassoSolution {
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&k| self.alpha[k] > threshold).collect()
    }
}

/// Quadratic data of the problem: `q[k][l] = HSIC(X^k, X^l)`,
/// `r[k] = HSIC(X^k, Y)`, `yy = HSIC(Y, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsicLassoProblem {
    pub q: Array2<f64>,
    pub r: Vec<f64>,
    pub yy: f64,
}

fn normalized_centered(spec: &KernelSpec, data: &DataMatrix) -> Result<Array2<f64>> {
    Ok(gram_of(spec, data)?.center().normalized().into_entries())
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() / (n * n)
}

impl HsicLassoProblem {
    pub fn new(q: Array2<f64>, r: Vec<f64>, yy: f64) -> Result<Self> {
        let p = r.len();
        if q.dim() != (p, p) {
            return Err(Error::DimMismatch {
                expected: p,
                found: q.nrows(),
            });
        }
        Ok(HsicLassoProblem { q, r, yy })
    }

    /// Builds the problem from per-input Gram matrices of `kernel_x` and the
    /// output Gram matrix of `kernel_y`.
    pub fn from_data(x: &DataMatrix, y: &DataMatrix, kernel_x: &KernelSpec, kernel_y: &KernelSpec) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
        }
        let ky = normalized_centered(kernel_y, y)?;
        let kx = (0..x.ncols())
            .into_par_iter()
            .map(|k| normalized_centered(kernel_x, &x.select(&ColumnSelector::single(k))?))
            .collect::<Result<Vec<_>>>()?;
        let p = kx.len();
        let mut q = Array2::zeros((p, p));
        for k in 0..p {
            for l in k..p {
                let v = inner(&kx[k], &kx[l]);
                q[[k, l]] = v;
                q[[l, k]] = v;
            }
        }
        let r = kx.iter().map(|g| inner(g, &ky)).collect();
        HsicLassoProblem::new(q, r, inner(&ky, &ky))
    }

    pub fn p(&self) -> usize {
        self.r.len()
    }

    pub fn lambda(&self, rule: LambdaRule) -> Result<f64> {
        let lambda = match rule {
            LambdaRule::Fixed(v) => v,
            LambdaRule::Relative(c) => c * self.r.iter().cloned().fold(0.0, f64::max),
        };
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(lambda)
    }

    pub fn objective(&self, alpha: &[f64], lambda: f64) -> f64 {
        let p = self.p();
        let mut quad = 0.0;
        for k in 0..p {
            for l in 0..p {
                quad += alpha[k] * alpha[l] * self.q[[k, l]];
            }
        }
        let lin: f64 = alpha.iter().zip(&self.r).map(|(a, r)| a * r).sum();
        let l1: f64 = alpha.iter().sum();
        0.5 * self.yy - lin + 0.5 * quad + lambda * l1
    }

    /// Partial derivative of the smooth part plus `lambda`.
    pub fn gradient(&self, alpha: &[f64], lambda: f64) -> Vec<f64> {
        (0..self.p())
            .map(|k| {
                let qa: f64 = (0..self.p()).map(|l| self.q[[k, l]] * alpha[l]).sum();
                qa - self.r[k] + lambda
            })
            .collect()
    }

    /// Largest violation of the nonnegative-lasso optimality conditions.
    pub fn kkt_residual(&self, alpha: &[f64], lambda: f64) -> f64 {
        self.gradient(alpha, lambda)
            .iter()
            .zip(alpha)
            .map(|(&g, &a)| if a > 0.0 { g.abs() } else { (-g).max(0.0) })
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, lambda: f64) -> Result<HsicLassoSolution> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let p = self.p();
        let mut alpha = vec![0.0; p];
        let mut trace = Vec::new();
        let mut previous = self.objective(&alpha, lambda);
        let (mut iterations, mut converged, mut final_change) = (0, false, 0.0);
        while iterations < MAX_SWEEPS {
            iterations += 1;
            let mut max_change: f64 = 0.0;
            for k in 0..p {
                let qkk = self.q[[k, k]];
                if !(qkk > 0.0) {
                    // A constant input has a zero Gram matrix and no effect.
                    alpha[k] = 0.0;
                    continue;
                }
                let cross: f64 = (0..p).filter(|&l| l != k).map(|l| self.q[[k, l]] * alpha[l]).sum();
                let updated = ((self.r[k] - cross - lambda) / qkk).max(0.0);
                max_change = max_change.max((updated - alpha[k]).abs());
                alpha[k] = updated;
            }
            let obj = self.objective(&alpha, lambda);
            debug_assert!(
                obj <= previous + 1e-12 * previous.abs().max(1e-12),
                "objective increased from {previous} to {obj}"
            );
            previous = obj;
            trace.push(obj);
            final_change = max_change;
            if max_change <= TOLERANCE {
                converged = true;
                break;
            }
        }
        Ok(HsicLassoSolution {
            objective: self.objective(&alpha, lambda),
            alpha,
            lambda,
            iterations,
            converged,
            final_change,
            objective_trace: trace,
        })
    }
}

/// HSIC Lasso on inputs `x` against outputs `y`.
pub fn hsic_lasso(
    x: &DataMatrix,
    y: &DataMatrix,
    lambda: LambdaRule,
    kernel_x: &KernelSpec,
    kernel_y: &KernelSpec,
) -> Result<HsicLassoSolution> {
    let problem = HsicLassoProblem::from_data(x, y, kernel_x, kernel_y)?;
    problem.solve(problem.lambda(lambda)?)
}
