//! Permutation null distributions for dependence statistics.
//!
//! Rows of `y` are permuted while `x` stays fixed. For the quadratic
//! statistics the centered `x` matrix is computed once and each permutation
//! costs one `O(n^2)` pass over the raw `y` matrix.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::dcor::{block_distances, CenteredDistances, DcovConfig, DEGENERATE_DENOMINATOR};
use crate::error::{Error, Result};
use crate::fdiv::ksg_mi_blocks;
use crate::hsic::{pooled_kernel, CenteredGram, HsicConfig};
use crate::kernels::{gram_of, KernelFamily, KernelSpec};
use crate::rng::RngSeed;
use crate::stats::quantile_sorted;

/// Null quantile levels reported with every test.
pub const NULL_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// A dependence statistic between two blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    Dcov2(DcovConfig),
    Dcor(DcovConfig),
    Hsic(HsicConfig),
    HsicR(HsicConfig),
    /// `x` and `y` are the paired outputs `Y` and `Y_{X^k}`.
    HsicPickFreeze { kernel: KernelSpec },
    /// `x` and `y` are the paired outputs `Y` and `Y_{X^k}`.
    DcorPickFreeze,
    KsgMi { k: usize, seed: RngSeed },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullQuantile {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationNull {
    pub observed: f64,
    pub num_permutations: usize,
    /// One value per permutation, in permutation-index order.
    pub statistics: Vec<f64>,
    pub quantiles: Vec<NullQuantile>,
    pub p_value: f64,
}

impl PermutationNull {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|q| (q.level - level).abs() < 1e-12)
            .map(|q| q.value)
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value <= level
    }
}

/// Quadratic statistic `s * sum_ij C_ij M[pi_i, pi_j]` with normalization.
struct Quadratic {
    centered_x: Array2<f64>,
    raw_y: Array2<f64>,
    scale: f64,
    /// `sqrt(self_x * self_y)` for normalized statistics, which report the
    /// square root of the ratio.
    norm: Option<f64>,
    degenerate: bool,
}

impl Quadratic {
    fn eval(&self, perm: &[usize]) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let n = perm.len();
        let mut acc = 0.0;
        for i in 0..n {
            let row = self.raw_y.row(perm[i]);
            let c = self.centered_x.row(i);
            for j in 0..n {
                acc += c[j] * row[perm[j]];
            }
        }
        let v = (acc * self.scale).max(0.0);
        match self.norm {
            Some(d) => (v / d).clamp(0.0, 1.0).sqrt(),
            None => v,
        }
    }
}

enum Prepared {
    Quadratic(Quadratic),
    Ksg {
        x: DataMatrix,
        y: DataMatrix,
        k: usize,
        seed: RngSeed,
    },
}

impl Prepared {
    fn eval(&self, perm: &[usize]) -> Result<f64> {
        match self {
            Prepared::Quadratic(q) => Ok(q.eval(perm)),
            Prepared::Ksg { x, y, k, seed } => ksg_mi_blocks(x, &y.select_rows(perm)?, *k, *seed),
        }
    }
}

/// `normalize` carries the two self-dependence values and whether their
/// denominator is degenerate.
fn quadratic(
    centered_x: Array2<f64>,
    raw_y: Array2<f64>,
    normalize: Option<(f64, f64, bool)>,
) -> Quadratic {
    let n = centered_x.nrows();
    let (norm, degenerate) = match normalize {
        Some((sx, sy, degenerate)) => (Some((sx * sy).sqrt()), degenerate),
        None => (None, false),
    };
    Quadratic {
        centered_x,
        raw_y,
        scale: 1.0 / (n * n) as f64,
        norm,
        degenerate,
    }
}

fn dcor_norm(a: &CenteredDistances, b: &CenteredDistances) -> (f64, f64, bool) {
    let (sx, sy) = (a.self_dcov2, b.self_dcov2);
    (sx, sy, !(sx * sy > DEGENERATE_DENOMINATOR))
}

fn hsic_norm(a: &CenteredGram, b: &CenteredGram) -> (f64, f64, bool) {
    let (sx, sy) = (a.self_hsic(), b.self_hsic());
    (sx, sy, !(sx > DEGENERATE_DENOMINATOR && sy > DEGENERATE_DENOMINATOR))
}

fn prepare(stat: &Statistic, x: &DataMatrix, y: &DataMatrix) -> Result<Prepared> {
    Ok(match stat {
        Statistic::Dcov2(cfg) | Statistic::Dcor(cfg) => {
            cfg.validate()?;
            let a = block_distances(x, cfg.alpha, cfg.metric_x.as_ref())?;
            let b = block_distances(y, cfg.alpha, cfg.metric_y.as_ref())?;
            let normalize = if matches!(stat, Statistic::Dcor(_)) {
                Some(dcor_norm(&CenteredDistances::new(&a), &CenteredDistances::new(&b)))
            } else {
                None
            };
            Prepared::Quadratic(quadratic(a.double_centered(), b.entries().to_owned(), normalize))
        }
        Statistic::DcorPickFreeze => {
            let a = block_distances(x, 1.0, None)?;
            let b = block_distances(y, 1.0, None)?;
            let normalize = Some(dcor_norm(&CenteredDistances::new(&a), &CenteredDistances::new(&b)));
            Prepared::Quadratic(quadratic(a.double_centered(), b.entries().to_owned(), normalize))
        }
        Statistic::Hsic(cfg) | Statistic::HsicR(cfg) => {
            let gx = CenteredGram::from_data(&cfg.kernel_x, x)?;
            let ky = gram_of(&cfg.kernel_y, y)?;
            let normalize = if matches!(stat, Statistic::HsicR(_)) {
                Some(hsic_norm(&gx, &CenteredGram::new(&ky)))
            } else {
                None
            };
            Prepared::Quadratic(quadratic(gx.entries().clone(), ky.into_entries(), normalize))
        }
        Statistic::HsicPickFreeze { kernel } => {
            let k = if kernel.family == KernelFamily::Categorical {
                kernel.clone()
            } else {
                pooled_kernel(kernel, &x.vstack(y)?)?
            };
            let gx = CenteredGram::from_data(&k, x)?;
            let ky = gram_of(&k, y)?;
            let normalize = Some(hsic_norm(&gx, &CenteredGram::new(&ky)));
            Prepared::Quadratic(quadratic(gx.entries().clone(), ky.into_entries(), normalize))
        }
        Statistic::KsgMi { k, seed } => Prepared::Ksg {
            x: x.clone(),
            y: y.clone(),
            k: *k,
            seed: *seed,
        },
    })
}

/// The statistic on the unpermuted sample.
pub fn statistic_value(stat: &Statistic, x: &DataMatrix, y: &DataMatrix) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
    }
    let id: Vec<usize> = (0..x.nrows()).collect();
    prepare(stat, x, y)?.eval(&id)
}

/// Permutation `b` of `0..n`; a pure function of `(seed, b)`.
pub fn permutation(n: usize, seed: RngSeed, b: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut seed.derive(b).rng());
    p
}

/// Null distribution of `stat` over `num_permutations` row permutations of `y`.
pub fn permutation_test(
    stat: &Statistic,
    x: &DataMatrix,
    y: &DataMatrix,
    num_permutations: usize,
    seed: RngSeed,
) -> Result<PermutationNull> {
    if num_permutations == 0 {
        return Err(Error::BadB);
    }
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
    }
    let n = x.nrows();
    let prepared = prepare(stat, x, y)?;
    let id: Vec<usize> = (0..n).collect();
    let observed = prepared.eval(&id)?;
    let statistics = (0..num_permutations as u64)
        .into_par_iter()
        .map(|b| prepared.eval(&permutation(n, seed, b)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(observed, statistics))
}

/// Quantiles and `(1 + #{null >= observed}) / (B + 1)` p-value.
pub fn summarize(observed: f64, statistics: Vec<f64>) -> PermutationNull {
    let mut sorted = statistics.clone();
    sorted.sort_by(f64::total_cmp);
    let exceed = statistics.iter().filter(|&&s| s >= observed).count();
    let b = statistics.len();
    PermutationNull {
        observed,
        num_permutations: b,
        quantiles: NULL_LEVELS
            .iter()
            .map(|&level| NullQuantile {
                level,
                value: quantile_sorted(&sorted, level),
            })
            .collect(),
        p_value: (1 + exceed) as f64 / (b + 1) as f64,
        statistics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_uniform;
    use crate::dcor::{dcor, dcov2};
    use crate::hsic::{hsic, hsic_pick_freeze, hsic_r};
    use rand::Rng;

    fn pair(n: usize, seed: u64) -> (DataMatrix, DataMatrix) {
        let x = sample_uniform(&[-1.0], &[1.0], n, RngSeed(seed)).unwrap();
        let mut rng = RngSeed(seed).derive(7).rng();
        let y: Vec<f64> = x
            .column(0)
            .iter()
            .map(|v| v * v + 0.1 * rng.random::<f64>())
            .collect();
        (x, DataMatrix::from_column(&y).unwrap())
    }

    #[test]
    fn zero_permutations_rejected() {
        let (x, y) = pair(10, 1);
        assert!(matches!(
            permutation_test(&Statistic::Hsic(HsicConfig::default()), &x, &y, 0, RngSeed(1)),
            Err(Error::BadB)
        ));
    }

    #[test]
    fn fast_path_matches_direct_recomputation() {
        let (x, y) = pair(30, 2);
        let perm = permutation(30, RngSeed(5), 3);
        let yp = y.select_rows(&perm).unwrap();
        let cfg = HsicConfig::default();
        let dc = DcovConfig::default();
        let cases: Vec<(Statistic, f64)> = vec![
            (Statistic::Hsic(cfg.clone()), hsic(&x, &yp, &cfg).unwrap()),
            (Statistic::HsicR(cfg.clone()), hsic_r(&x, &yp, &cfg).unwrap()),
            (Statistic::Dcor(dc.clone()), dcor(&x, &yp, &dc).unwrap()),
            (
                Statistic::Dcov2(dc.clone()),
                dcov2(
                    &block_distances(&x, 1.0, None).unwrap(),
                    &block_distances(&yp, 1.0, None).unwrap(),
                )
                .unwrap(),
            ),
            (
                Statistic::HsicPickFreeze {
                    kernel: KernelSpec::gaussian(),
                },
                hsic_pick_freeze(&x, &yp, &KernelSpec::gaussian()).unwrap(),
            ),
        ];
        for (stat, direct) in cases {
            let fast = prepare(&stat, &x, &y).unwrap().eval(&perm).unwrap();
            assert!((fast - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{stat:?}: {fast} vs {direct}");
        }
    }

    #[test]
    fn p_value_convention() {
        let null = summarize(2.0, vec![1.0, 2.0, 3.0, 0.5]);
        assert_eq!(null.p_value, 3.0 / 5.0);
        assert_eq!(null.num_permutations, 4);
        assert!(null.quantile(0.95).is_some());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (x, y) = pair(40, 3);
        let stat = Statistic::HsicR(HsicConfig::default());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| permutation_test(&stat, &x, &y, 50, RngSeed(9)).unwrap());
        let b = four.install(|| permutation_test(&stat, &x, &y, 50, RngSeed(9)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn detects_quadratic_dependence() {
        let (x, y) = pair(100, 4);
        let null = permutation_test(&Statistic::Hsic(HsicConfig::default()), &x, &y, 199, RngSeed(4)).unwrap();
        assert!(null.rejects(0.05));
        assert_eq!(null.p_value, 1.0 / 200.0);
    }

    #[test]
    fn ksg_permutation_runs() {
        let (x, y) = pair(60, 5);
        let null = permutation_test(&Statistic::KsgMi { k: 4, seed: RngSeed(0) }, &x, &y, 20, RngSeed(1)).unwrap();
        assert_eq!(null.statistics.len(), 20);
        assert!(null.observed > null.quantile(0.99).unwrap());
    }
}
