//! Dependence-based input screening: max-relevance ranking, mRMR forward
//! selection, the iterative HSIC scheme, and bootstrap selection
//! probabilities.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSelector, DataMatrix};
use crate::dcor::{block_distances, CenteredDistances};
use crate::error::{Error, Result};
use crate::fdiv::ksg_mi_blocks;
use crate::hsic::{CenteredGram, HsicConfig};
use crate::kernels::KernelSpec;
use crate::lasso::{HsicLassoProblem, LambdaRule};
use crate::permutation::{permutation_test, Statistic};
use crate::rng::RngSeed;

/// Coefficients above this count as selected by the lasso.
pub const SELECTION_THRESHOLD: f64 = 1e-8;

/// Dependence measure `D` used for relevance and redundancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Dcor,
    /// Normalized HSIC; redundancy uses `kernel_x` on both inputs.
    Hsic(HsicConfig),
    KsgMi { k: usize, seed: RngSeed },
}

impl Measure {
    pub fn hsic() -> Self {
        Measure::Hsic(HsicConfig::default())
    }
}

/// Precomputed per-column representations for one measure.
enum Blocks {
    Dcor(Vec<CenteredDistances>),
    Hsic(Vec<CenteredGram>),
    Ksg(Vec<DataMatrix>),
}

struct Prepared {
    inputs: Blocks,
    output: Blocks,
    ksg: Option<(usize, RngSeed)>,
}

fn column(x: &DataMatrix, k: usize) -> Result<DataMatrix> {
    x.select(&ColumnSelector::single(k))
}

impl Prepared {
    fn new(x: &DataMatrix, y: &DataMatrix, measure: &Measure) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
        }
        let cols: Vec<usize> = (0..x.ncols()).collect();
        Ok(match measure {
            Measure::Dcor => {
                let dist = |d: &DataMatrix| block_distances(d, 1.0, None).map(|m| CenteredDistances::new(&m));
                Prepared {
                    inputs: Blocks::Dcor(
                        cols.par_iter().map(|&k| dist(&column(x, k)?)).collect::<Result<_>>()?,
                    ),
                    output: Blocks::Dcor(vec![dist(y)?]),
                    ksg: None,
                }
            }
            Measure::Hsic(cfg) => Prepared {
                inputs: Blocks::Hsic(
                    cols.par_iter()
                        .map(|&k| CenteredGram::from_data(&cfg.kernel_x, &column(x, k)?))
                        .collect::<Result<_>>()?,
                ),
                output: Blocks::Hsic(vec![CenteredGram::from_data(&cfg.kernel_y, y)?]),
                ksg: None,
            },
            Measure::KsgMi { k, seed } => Prepared {
                inputs: Blocks::Ksg(cols.iter().map(|&k| column(x, k)).collect::<Result<_>>()?),
                output: Blocks::Ksg(vec![y.clone()]),
                ksg: Some((*k, *seed)),
            },
        })
    }

    fn pair(&self, a: &Blocks, i: usize, b: &Blocks, j: usize) -> Result<f64> {
        match (a, b) {
            (Blocks::Dcor(a), Blocks::Dcor(b)) => Ok(a[i].dcor_with(&b[j])),
            (Blocks::Hsic(a), Blocks::Hsic(b)) => Ok(a[i].normalized_with(&b[j])),
            (Blocks::Ksg(a), Blocks::Ksg(b)) => {
                let (k, seed) = self.ksg.expect("ksg parameters");
                ksg_mi_blocks(&a[i], &b[j], k, seed)
            }
            _ => unreachable!("blocks of one measure"),
        }
    }

    fn relevance(&self) -> Result<Vec<f64>> {
        let p = match &self.inputs {
            Blocks::Dcor(v) => v.len(),
            Blocks::Hsic(v) => v.len(),
            Blocks::Ksg(v) => v.len(),
        };
        (0..p)
            .into_par_iter()
            .map(|k| self.pair(&self.inputs, k, &self.output, 0))
            .collect()
    }

    fn redundancy(&self, i: usize, j: usize) -> Result<f64> {
        self.pair(&self.inputs, i, &self.inputs, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stabilized,
    MaxSize,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    /// Selected inputs in selection order.
    pub selected: Vec<usize>,
    /// Score of each selection step (or of each ranked input).
    pub scores: Vec<f64>,
    /// Marginal relevance of every input, when computed.
    pub relevance: Option<Vec<f64>>,
    pub selection_probabilities: Option<Vec<f64>>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub notes: Vec<String>,
}

impl ScreeningResult {
    pub fn selector(&self) -> Result<ColumnSelector> {
        ColumnSelector::new(self.selected.clone())
    }
}

/// Indices sorted by descending score, ties by ascending index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// All inputs ranked by marginal dependence with the output.
pub fn max_relevance_rank(x: &DataMatrix, y: &DataMatrix, measure: &Measure) -> Result<ScreeningResult> {
    let relevance = Prepared::new(x, y, measure)?.relevance()?;
    let selected = rank_descending(&relevance);
    Ok(ScreeningResult {
        scores: selected.iter().map(|&k| relevance[k]).collect(),
        selected,
        relevance: Some(relevance),
        selection_probabilities: None,
        stop_reason: StopReason::MaxSize,
        iterations: 1,
        notes: Vec::new(),
    })
}

/// mRMR value of a subset: mean relevance minus mean pairwise redundancy
/// (diagonal included).
pub fn mrmr_objective(relevance: &[f64], redundancy: impl Fn(usize, usize) -> f64, subset: &[usize]) -> f64 {
    let m = subset.len() as f64;
    let rel: f64 = subset.iter().map(|&k| relevance[k]).sum();
    let red: f64 = subset
        .iter()
        .flat_map(|&i| subset.iter().map(move |&j| (i, j)))
        .map(|(i, j)| redundancy(i, j))
        .sum();
    rel / m - red / (m * m)
}

/// Greedy mRMR: each step adds the input maximizing relevance minus mean
/// redundancy with the inputs already selected. Ties go to the lower index.
pub fn mrmr_forward(x: &DataMatrix, y: &DataMatrix, measure: &Measure, m: usize) -> Result<ScreeningResult> {
    let p = x.ncols();
    if m == 0 || m > p {
        return Err(Error::BadM { m, p });
    }
    let prep = Prepared::new(x, y, measure)?;
    let relevance = prep.relevance()?;
    let mut selected: Vec<usize> = Vec::with_capacity(m);
    let mut scores = Vec::with_capacity(m);
    // Running sum of redundancy with the selected set.
    let mut red_sum = vec![0.0; p];
    while selected.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for k in (0..p).filter(|k| !selected.contains(k)) {
            let penalty = if selected.is_empty() {
                0.0
            } else {
                red_sum[k] / selected.len() as f64
            };
            let score = relevance[k] - penalty;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        let (k, score) = best.expect("candidate available while |selected| < m <= p");
        selected.push(k);
        scores.push(score);
        let updates: Vec<(usize, f64)> = (0..p)
            .into_par_iter()
            .filter(|j| !selected.contains(j))
            .map(|j| prep.redundancy(j, k).map(|r| (j, r)))
            .collect::<Result<_>>()?;
        for (j, r) in updates {
            red_sum[j] += r;
        }
    }
    Ok(ScreeningResult {
        selected,
        scores,
        relevance: Some(relevance),
        selection_probabilities: None,
        stop_reason: StopReason::MaxSize,
        iterations: m,
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Keep inputs whose marginal permutation p-value is at most `level`.
    PermutationQuantile { level: f64, permutations: usize, seed: RngSeed },
    /// Keep the top `ceil(q p)` inputs by marginal normalized HSIC.
    TopFraction { q: f64 },
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdPolicy::PermutationQuantile { level, permutations, .. } => {
                if !(level > 0.0 && level < 1.0) {
                    return Err(Error::InvalidParameter(format!("level must be in (0, 1), got {level}")));
                }
                if permutations == 0 {
                    return Err(Error::BadB);
                }
            }
            ThresholdPolicy::TopFraction { q } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(Error::InvalidParameter(format!("fraction must be in (0, 1], got {q}")));
                }
            }
        }
        Ok(())
    }
}

/// Iterative HSIC screening.
///
/// Step 1 keeps inputs whose marginal normalized HSIC passes `policy`.
/// Step 2 adds every `k` outside `u` with `R(Y, (X^u, X^k)) > R(Y, X^u)`,
/// where `R` is the normalized HSIC under a Gaussian median-heuristic
/// kernel on the joint block and the output kernel of `cfg`. Raw HSIC is
/// not comparable across block sizes: it shrinks as the median bandwidth
/// grows. Step 2 repeats until `u` stops growing or reaches `max_size`;
/// when more candidates qualify than fit, the largest joint values win.
pub fn iterative_hsic_screen(
    x: &DataMatrix,
    y: &DataMatrix,
    cfg: &HsicConfig,
    policy: ThresholdPolicy,
    max_size: usize,
) -> Result<ScreeningResult> {
    policy.validate()?;
    let p = x.ncols();
    if max_size == 0 || max_size > p {
        return Err(Error::BadM { m: max_size, p });
    }
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
    }
    let gy = CenteredGram::from_data(&cfg.kernel_y, y)?;
    let block_hsic = |cols: &[usize]| -> Result<f64> {
        let sel = ColumnSelector::new(cols.to_vec())?;
        Ok(CenteredGram::from_data(&KernelSpec::gaussian(), &x.select(&sel)?)?.normalized_with(&gy))
    };

    let marginal: Vec<f64> = (0..p).into_par_iter().map(|k| block_hsic(&[k])).collect::<Result<_>>()?;
    let mut selected: Vec<usize> = match policy {
        ThresholdPolicy::PermutationQuantile {
            level,
            permutations,
            seed,
        } => {
            let stat = Statistic::Hsic(HsicConfig::new(KernelSpec::gaussian(), cfg.kernel_y.clone()));
            let pvals: Vec<f64> = (0..p)
                .map(|k| Ok(permutation_test(&stat, &column(x, k)?, y, permutations, seed.derive(k as u64))?.p_value))
                .collect::<Result<_>>()?;
            rank_descending(&marginal).into_iter().filter(|&k| pvals[k] <= level).collect()
        }
        ThresholdPolicy::TopFraction { q } => {
            let count = ((q * p as f64).ceil() as usize).clamp(1, p);
            rank_descending(&marginal).into_iter().take(count).collect()
        }
    };
    let mut notes = Vec::new();
    let mut scores = Vec::new();
    if selected.is_empty() {
        notes.push("no input passed the marginal threshold".into());
        return Ok(ScreeningResult {
            selected,
            scores,
            relevance: Some(marginal),
            selection_probabilities: None,
            stop_reason: StopReason::Threshold,
            iterations: 1,
            notes,
        });
    }
    selected.truncate(max_size);
    let mut iterations = 1;
    let stop_reason = loop {
        let current = block_hsic(&selected)?;
        scores.push(current);
        if selected.len() >= max_size {
            break StopReason::MaxSize;
        }
        iterations += 1;
        let candidates: Vec<usize> = (0..p).filter(|k| !selected.contains(k)).collect();
        let joint: Vec<f64> = candidates
            .par_iter()
            .map(|&k| {
                let mut cols = selected.clone();
                cols.push(k);
                block_hsic(&cols)
            })
            .collect::<Result<_>>()?;
        let order = rank_descending(&joint);
        let room = max_size - selected.len();
        let added: Vec<usize> = order
            .into_iter()
            .filter(|&i| joint[i] > current)
            .take(room)
            .map(|i| candidates[i])
            .collect();
        if added.is_empty() {
            break StopReason::Stabilized;
        }
        selected.extend(added);
    };
    Ok(ScreeningResult {
        selected,
        scores,
        relevance: Some(marginal),
        selection_probabilities: None,
        stop_reason,
        iterations,
        notes,
    })
}

/// Screening procedure run on each bootstrap resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScreeningMethod {
    MaxRelevance { measure: Measure, m: usize },
    Mrmr { measure: Measure, m: usize },
    IterativeHsic { cfg: HsicConfig, policy: ThresholdPolicy, max_size: usize },
    HsicLasso { lambda: LambdaRule, kernel_x: KernelSpec, kernel_y: KernelSpec },
}

impl ScreeningMethod {
    /// Inputs selected on one sample.
    pub fn select(&self, x: &DataMatrix, y: &DataMatrix) -> Result<Vec<usize>> {
        match self {
            ScreeningMethod::MaxRelevance { measure, m } => {
                let r = max_relevance_rank(x, y, measure)?;
                if *m == 0 || *m > x.ncols() {
                    return Err(Error::BadM { m: *m, p: x.ncols() });
                }
                Ok(r.selected[..*m].to_vec())
            }
            ScreeningMethod::Mrmr { measure, m } => Ok(mrmr_forward(x, y, measure, *m)?.selected),
            ScreeningMethod::IterativeHsic { cfg, policy, max_size } => {
                Ok(iterative_hsic_screen(x, y, cfg, *policy, *max_size)?.selected)
            }
            ScreeningMethod::HsicLasso {
                lambda,
                kernel_x,
                kernel_y,
            } => {
                let problem = HsicLassoProblem::from_data(x, y, kernel_x, kernel_y)?;
                Ok(problem.solve(problem.lambda(*lambda)?)?.support(SELECTION_THRESHOLD))
            }
        }
    }
}

/// Rows drawn with replacement for bootstrap resample `b`.
pub fn bootstrap_rows(n: usize, seed: RngSeed, b: u64) -> Vec<usize> {
    let mut rng = seed.derive(b).rng();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fraction of `num_resamples` bootstrap resamples in which each input is
/// selected by `method`.
pub fn bootstrap_selection(
    x: &DataMatrix,
    y: &DataMatrix,
    method: &ScreeningMethod,
    num_resamples: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    if num_resamples == 0 {
        return Err(Error::BadB);
    }
    if x.nrows() != y.nrows() {
        return Err(Error::SizeMismatch(x.nrows(), y.nrows()));
    }
    let n = x.nrows();
    let selections: Vec<Vec<usize>> = (0..num_resamples as u64)
        .into_par_iter()
        .map(|b| {
            let rows = bootstrap_rows(n, seed, b);
            method.select(&x.select_rows(&rows)?, &y.select_rows(&rows)?)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; x.ncols()];
    for s in &selections {
        for &k in s {
            counts[k] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / num_resamples as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_uniform;
    use ndarray::Array2;

    fn additive(n: usize, seed: u64) -> (DataMatrix, DataMatrix) {
        let x = sample_uniform(&[0.0; 3], &[1.0; 3], n, RngSeed(seed)).unwrap();
        let mut v = x.values().to_owned();
        let c0 = v.column(0).to_owned();
        v.column_mut(2).assign(&c0);
        let x = DataMatrix::new(v).unwrap();
        let y: Vec<f64> = (0..n).map(|i| x.values()[[i, 0]] + x.values()[[i, 1]]).collect();
        (x, DataMatrix::from_column(&y).unwrap())
    }

    fn noise_inputs(n: usize, p: usize, seed: u64) -> (DataMatrix, DataMatrix) {
        let x = sample_uniform(&vec![0.0; p], &vec![1.0; p], n, RngSeed(seed)).unwrap();
        let y = sample_uniform(&[0.0], &[1.0], n, RngSeed(seed).derive(1)).unwrap();
        (x, y)
    }

    #[test]
    fn duplicate_column_equal_scores() {
        let (x, y) = additive(80, 1);
        for m in [Measure::Dcor, Measure::hsic()] {
            let r = max_relevance_rank(&x, &y, &m).unwrap().relevance.unwrap();
            assert!((r[0] - r[2]).abs() <= 1e-10);
        }
    }

    #[test]
    fn first_step_is_max_relevance() {
        let (x, y) = noise_inputs(60, 5, 2);
        let m = Measure::Dcor;
        let rank = max_relevance_rank(&x, &y, &m).unwrap();
        let greedy = mrmr_forward(&x, &y, &m, 1).unwrap();
        assert_eq!(greedy.selected[0], rank.selected[0]);
    }

    #[test]
    fn copy_penalized_last() {
        let (x, y) = additive(200, 3);
        for m in [Measure::Dcor, Measure::hsic()] {
            let r = mrmr_forward(&x, &y, &m, 3).unwrap();
            assert!(r.selected[0] == 0 || r.selected[0] == 2, "{:?}", r.selected);
            assert_eq!(r.selected[1], 1);
        }
    }

    #[test]
    fn greedy_within_top_two_subsets() {
        let (x, y) = noise_inputs(80, 4, 4);
        let yv: Vec<f64> = (0..80)
            .map(|i| x.values()[[i, 0]] + 0.5 * x.values()[[i, 1]] + 0.1 * y.values()[[i, 0]])
            .collect();
        let y = DataMatrix::from_column(&yv).unwrap();
        let measure = Measure::Dcor;
        let greedy = mrmr_forward(&x, &y, &measure, 2).unwrap();
        let prep = Prepared::new(&x, &y, &measure).unwrap();
        let rel = prep.relevance().unwrap();
        let red = |i: usize, j: usize| prep.redundancy(i, j).unwrap();
        let mut all = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                all.push(mrmr_objective(&rel, red, &[i, j]));
            }
        }
        all.sort_by(|a, b| b.total_cmp(a));
        let g = mrmr_objective(&rel, red, &greedy.selected);
        assert!(g >= all[1] - 1e-12);
    }

    #[test]
    fn equal_scores_select_by_index() {
        let n = 30;
        let x = DataMatrix::new(Array2::from_shape_fn((n, 4), |(i, _)| i as f64)).unwrap();
        let y = DataMatrix::from_column(&(0..n).map(|i| (i * i) as f64).collect::<Vec<_>>()).unwrap();
        let r = mrmr_forward(&x, &y, &Measure::Dcor, 4).unwrap();
        assert_eq!(r.selected, vec![0, 1, 2, 3]);
        assert_eq!(max_relevance_rank(&x, &y, &Measure::Dcor).unwrap().selected, vec![0, 1, 2, 3]);
    }

    #[test]
    fn bad_m() {
        let (x, y) = noise_inputs(20, 3, 5);
        assert!(matches!(mrmr_forward(&x, &y, &Measure::Dcor, 0), Err(Error::BadM { .. })));
        assert!(matches!(mrmr_forward(&x, &y, &Measure::Dcor, 4), Err(Error::BadM { .. })));
    }

    #[test]
    fn iterative_scheme_finds_interaction_and_terminates() {
        let n = 150;
        let x = sample_uniform(&[-1.0; 6], &[1.0; 6], n, RngSeed(6)).unwrap();
        let yv: Vec<f64> = (0..n)
            .map(|i| x.values()[[i, 0]] + x.values()[[i, 1]] * x.values()[[i, 2]])
            .collect();
        let y = DataMatrix::from_column(&yv).unwrap();
        let policy = ThresholdPolicy::PermutationQuantile {
            level: 0.05,
            permutations: 99,
            seed: RngSeed(1),
        };
        let r = iterative_hsic_screen(&x, &y, &HsicConfig::default(), policy, 6).unwrap();
        assert!(r.selected.contains(&0));
        assert!(r.iterations <= 6 + 1);
        let mut sorted = r.selected.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), r.selected.len());
    }

    #[test]
    fn iterative_scheme_respects_max_size() {
        let (x, y) = noise_inputs(40, 6, 7);
        let r = iterative_hsic_screen(&x, &y, &HsicConfig::default(), ThresholdPolicy::TopFraction { q: 0.5 }, 2).unwrap();
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r.stop_reason, StopReason::MaxSize);
    }

    #[test]
    fn bootstrap_single_resample_is_binary_and_deterministic() {
        let (x, y) = additive(50, 8);
        let method = ScreeningMethod::HsicLasso {
            lambda: LambdaRule::default(),
            kernel_x: KernelSpec::gaussian(),
            kernel_y: KernelSpec::gaussian(),
        };
        let a = bootstrap_selection(&x, &y, &method, 1, RngSeed(3)).unwrap();
        assert!(a.iter().all(|&v| v == 0.0 || v == 1.0));
        let b = bootstrap_selection(&x, &y, &method, 10, RngSeed(3)).unwrap();
        let c = bootstrap_selection(&x, &y, &method, 10, RngSeed(3)).unwrap();
        assert_eq!(b, c);
        assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(bootstrap_selection(&x, &y, &method, 0, RngSeed(3)), Err(Error::BadB)));
    }
}
