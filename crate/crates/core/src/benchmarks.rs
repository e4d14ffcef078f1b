//! Analytical test functions, the level-set transform, a synthetic map
//! model with functional output, and reference Sobol indices.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Slopes of the active Linkletter inputs.
fn linkletter_coefficient(i: usize) -> f64 {
    if i < 8 {
        0.2 / f64::powi(2.0, i as i32)
    } else {
        0.0
    }
}

/// Default Sobol-Levitan coefficients: 1 for the first eight inputs, 0.01 after.
pub fn default_soblev_b() -> Vec<f64> {
    (0..20).map(|i| if i < 8 { 1.0 } else { 0.01 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Benchmark {
    /// Linear, 10 inputs, slopes halving over the first eight.
    LinkletterEta1,
    /// 10 inputs, first three dominant, weak pairwise interactions.
    LoeppkyEta2,
    /// Ishigami with `a = 5`, `b = 0.1` on `[-pi, pi]^3`.
    IshigamiEta3,
    /// 30 inputs, the first `k` active.
    MorrisEta4 { k: usize },
    /// `exp(sum b_i X_i) - prod (e^{b_i} - 1)/b_i`.
    SoblevEta5 { b: Vec<f64> },
    /// `grid x grid` map of a Gaussian bump driven by the first three inputs.
    SyntheticMap { grid: usize, inputs: usize },
}

impl Benchmark {
    pub const NAMES: [&'static str; 6] = [
        "linkletter_eta1",
        "loeppky_eta2",
        "ishigami_eta3",
        "morris_eta4",
        "soblev_eta5",
        "synthetic_map",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::LinkletterEta1 => "linkletter_eta1",
            Benchmark::LoeppkyEta2 => "loeppky_eta2",
            Benchmark::IshigamiEta3 => "ishigami_eta3",
            Benchmark::MorrisEta4 { .. } => "morris_eta4",
            Benchmark::SoblevEta5 { .. } => "soblev_eta5",
            Benchmark::SyntheticMap { .. } => "synthetic_map",
        }
    }

    pub fn morris(k: usize) -> Result<Self> {
        let b = Benchmark::MorrisEta4 { k };
        b.validate()?;
        Ok(b)
    }

    pub fn soblev_default() -> Self {
        Benchmark::SoblevEta5 { b: default_soblev_b() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Benchmark::MorrisEta4 { k } if !(1..=10).contains(k) => Err(Error::InvalidParameter(format!(
                "morris_eta4 needs 1 <= k <= 10, got {k}"
            ))),
            Benchmark::SoblevEta5 { b } if b.len() != 20 => Err(Error::InvalidParameter(format!(
                "soblev_eta5 needs 20 coefficients, got {}",
                b.len()
            ))),
            Benchmark::SoblevEta5 { b } if b.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidParameter("soblev_eta5 coefficients must be finite".into()))
            }
            Benchmark::SyntheticMap { grid, .. } if *grid == 0 => {
                Err(Error::InvalidParameter("synthetic_map grid must be >= 1".into()))
            }
            Benchmark::SyntheticMap { inputs, .. } if *inputs < 3 => Err(Error::InvalidParameter(format!(
                "synthetic_map needs at least 3 inputs, got {inputs}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Benchmark::LinkletterEta1 | Benchmark::LoeppkyEta2 => 10,
            Benchmark::IshigamiEta3 => 3,
            Benchmark::MorrisEta4 { .. } => 30,
            Benchmark::SoblevEta5 { b } => b.len(),
            Benchmark::SyntheticMap { inputs, .. } => *inputs,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Benchmark::SyntheticMap { grid, .. } => grid * grid,
            _ => 1,
        }
    }

    /// Lower and upper bounds of the uniform input box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.input_dim();
        match self {
            Benchmark::IshigamiEta3 => (vec![-PI; p], vec![PI; p]),
            _ => (vec![0.0; p], vec![1.0; p]),
        }
    }

    /// Scalar model on one input row. Not defined for the map model.
    fn scalar(&self, x: &[f64]) -> f64 {
        match self {
            Benchmark::LinkletterEta1 => x.iter().enumerate().map(|(i, v)| linkletter_coefficient(i) * v).sum(),
            Benchmark::LoeppkyEta2 => {
                6.0 * x[0] + 4.0 * x[1] + 5.5 * x[2] + 3.0 * x[0] * x[1] + 2.2 * x[0] * x[2] + 1.4 * x[1] * x[2]
                    + x[3]
                    + 0.5 * x[4]
                    + 0.2 * x[5]
                    + 0.1 * x[6]
            }
            Benchmark::IshigamiEta3 => ishigami(x, 5.0, 0.1),
            Benchmark::MorrisEta4 { k } => {
                let (alpha, beta) = morris_coefficients(*k);
                let active = &x[..*k];
                let linear: f64 = active.iter().sum();
                let mut pairs = 0.0;
                for i in 0..*k {
                    for j in i + 1..*k {
                        pairs += active[i] * active[j];
                    }
                }
                alpha * linear + beta * pairs
            }
            Benchmark::SoblevEta5 { b } => {
                let s: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
                s.exp() - soblev_mean(b)
            }
            Benchmark::SyntheticMap { .. } => unreachable!("map output is not scalar"),
        }
    }
}

/// `sin x1 + a sin^2 x2 + b x3^4 sin x1`.
pub fn ishigami(x: &[f64], a: f64, b: f64) -> f64 {
    x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
}

/// `(alpha, beta)` of the Morris function for `k` active inputs.
pub fn morris_coefficients(k: usize) -> (f64, f64) {
    let r = (0.1 * (k as f64 - 1.0)).sqrt();
    (12f64.sqrt() - 6.0 * r, 12f64.sqrt() * r)
}

/// `prod (e^{b_i} - 1) / b_i` with the factor taken as 1 for `|b_i| < 1e-12`.
pub fn soblev_mean(b: &[f64]) -> f64 {
    b.iter()
        .map(|&bi| if bi.abs() < 1e-12 { 1.0 } else { bi.exp_m1() / bi })
        .product()
}

/// Benchmark with an optional level-set reduction `Z = 1{Y > t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub benchmark: Benchmark,
    pub level_set: Option<f64>,
}

impl BenchmarkSpec {
    pub fn new(benchmark: Benchmark) -> Self {
        BenchmarkSpec {
            benchmark,
            level_set: None,
        }
    }

    pub fn with_level_set(benchmark: Benchmark, threshold: f64) -> Self {
        BenchmarkSpec {
            benchmark,
            level_set: Some(threshold),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        if let Some(t) = self.level_set {
            if !t.is_finite() {
                return Err(Error::InvalidParameter(format!("level-set threshold must be finite, got {t}")));
            }
            if self.benchmark.output_dim() != 1 {
                return Err(Error::InvalidParameter("level sets need a scalar benchmark".into()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.benchmark.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.benchmark.output_dim()
    }

    pub fn is_categorical(&self) -> bool {
        self.level_set.is_some()
    }
}

/// Evaluates `spec` on each row of `x`.
pub fn eval_benchmark(spec: &BenchmarkSpec, x: &DataMatrix) -> Result<DataMatrix> {
    spec.validate()?;
    let p = spec.input_dim();
    if x.ncols() != p {
        return Err(Error::DimMismatch {
            expected: p,
            found: x.ncols(),
        });
    }
    if let Benchmark::SyntheticMap { grid, .. } = spec.benchmark {
        return synthetic_map(x, grid);
    }
    let y: Vec<f64> = x
        .values()
        .outer_iter()
        .map(|row| spec.benchmark.scalar(row.as_slice().expect("row-major storage")))
        .collect();
    match spec.level_set {
        Some(t) => level_set_transform(&y, t),
        None => DataMatrix::with_names(
            Array2::from_shape_vec((y.len(), 1), y).expect("n x 1 shape"),
            vec!["y".into()],
        ),
    }
}

/// Scalar outputs of a scalar benchmark without the level-set reduction.
pub fn eval_scalar(benchmark: &Benchmark, x: &DataMatrix) -> Result<Vec<f64>> {
    let y = eval_benchmark(&BenchmarkSpec::new(benchmark.clone()), x)?;
    if y.ncols() != 1 {
        return Err(Error::InvalidParameter(format!("{} has vector output", benchmark.name())));
    }
    Ok(y.column_vec(0))
}

/// `Z = 1{y > t}` as a categorical column.
pub fn level_set_transform(y: &[f64], t: f64) -> Result<DataMatrix> {
    let codes: Vec<usize> = y.iter().map(|&v| usize::from(v > t)).collect();
    DataMatrix::categorical(&codes, "z")
}

/// Bump amplitude, centre and width as functions of the first three inputs.
fn bump_parameters(x: &[f64]) -> (f64, f64, f64, f64) {
    let amplitude = 0.5 + x[0];
    let cx = 0.25 + 0.5 * x[1];
    let cy = 0.25 + 0.5 * x[2];
    let width = 0.1 + 0.1 * x[0];
    (amplitude, cx, cy, width)
}

/// Gaussian bump sampled at the pixel centres of a `grid x grid` map on the
/// unit square, row-major. Inputs beyond the third are inert.
pub fn synthetic_map(x: &DataMatrix, grid: usize) -> Result<DataMatrix> {
    if x.ncols() < 3 {
        return Err(Error::DimMismatch {
            expected: 3,
            found: x.ncols(),
        });
    }
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be >= 1".into()));
    }
    let g = grid as f64;
    let n = x.nrows();
    let q = grid * grid;
    let vals = x.values();
    let out = Array2::from_shape_fn((n, q), |(i, c)| {
        let row = vals.row(i);
        let (a, cx, cy, w) = bump_parameters(&[row[0], row[1], row[2]]);
        let sx = ((c % grid) as f64 + 0.5) / g;
        let sy = ((c / grid) as f64 + 0.5) / g;
        let d2 = (sx - cx).powi(2) + (sy - cy).powi(2);
        a * (-d2 / (2.0 * w * w)).exp()
    });
    let names = (0..q).map(|c| format!("pixel{}", c + 1)).collect();
    DataMatrix::with_names(out, names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    OracleMonteCarlo { outer: usize, inner: usize, seed: RngSeed },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceIndices {
    pub benchmark: String,
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub provenance: Provenance,
}

/// Seed of the stored Monte Carlo references.
pub const ORACLE_SEED: RngSeed = RngSeed(0x5EED_0F_0AC1E);
/// Outer and inner sample sizes of the nested Monte Carlo references.
pub const ORACLE_SIZE: (usize, usize) = (1000, 1000);

/// Linkletter first-order (= total) indices from the closed form.
pub fn linkletter_reference() -> Vec<f64> {
    (0..10)
        .map(|i| {
            if i < 8 {
                0.75 * 0.25f64.powi(i) / (1.0 - 0.25f64.powi(10))
            } else {
                0.0
            }
        })
        .collect()
}

/// Reference first-order and total Sobol indices for `spec`.
pub fn analytical_reference(spec: &BenchmarkSpec) -> Result<ReferenceIndices> {
    spec.validate()?;
    let name = spec.benchmark.name().to_string();
    match &spec.benchmark {
        Benchmark::LinkletterEta1 if spec.level_set.is_none() => {
            let s = linkletter_reference();
            Ok(ReferenceIndices {
                benchmark: name,
                first_order: s.clone(),
                total: s,
                provenance: Provenance::ClosedForm,
            })
        }
        Benchmark::SoblevEta5 { b } if *b != default_soblev_b() => Err(Error::NoReference(
            "soblev_eta5 references exist only for the default coefficients".into(),
        )),
        Benchmark::SyntheticMap { .. } => Err(Error::NoReference("synthetic_map has vector output".into())),
        _ => {
            let (outer, inner) = ORACLE_SIZE;
            let (first_order, total) = nested_monte_carlo(spec, outer, inner, ORACLE_SEED)?;
            Ok(ReferenceIndices {
                benchmark: name,
                first_order,
                total,
                provenance: Provenance::OracleMonteCarlo {
                    outer,
                    inner,
                    seed: ORACLE_SEED,
                },
            })
        }
    }
}

fn scalar_of(spec: &BenchmarkSpec, x: &[f64]) -> f64 {
    let y = spec.benchmark.scalar(x);
    match spec.level_set {
        Some(t) => f64::from(u8::from(y > t)),
        None => y,
    }
}

/// Nested Monte Carlo estimates of `(S_k, ST_k)` for every input.
///
/// Each of `outer` points draws a fresh block of `inner` input rows. For
/// `S_k`, `X^k` is held at the outer value while the block supplies the
/// others; the between-group variance is bias-corrected by the mean
/// within-group variance over `inner`. For `ST_k`, everything but `X^k` is
/// held and `X^k` comes from the block. Blocks are shared across inputs.
pub fn nested_monte_carlo(
    spec: &BenchmarkSpec,
    outer: usize,
    inner: usize,
    seed: RngSeed,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.output_dim() != 1 {
        return Err(Error::NoReference("nested Monte Carlo needs scalar output".into()));
    }
    if outer < 2 || inner < 2 {
        return Err(Error::InvalidParameter("nested Monte Carlo needs outer, inner >= 2".into()));
    }
    let p = spec.input_dim();
    let (lows, highs) = spec.benchmark.bounds();
    let outer_x = crate::data::sample_uniform(&lows, &highs, outer, seed.derive(0))?;
    let ov = outer_x.values();
    let m = inner as f64;
    let mean_var = |s: f64, s2: f64| {
        let mu = s / m;
        (mu, (s2 - m * mu * mu) / (m - 1.0))
    };

    // Per outer point: (group mean for S_k, group variance for S_k, group
    // variance for ST_k) for each k, and the block's raw output moments.
    let groups: Vec<(Vec<(f64, f64, f64)>, f64, f64)> = (0..outer)
        .into_par_iter()
        .map(|o| {
            let block = crate::data::sample_uniform(&lows, &highs, inner, seed.derive(1).derive(o as u64))?;
            let bv = block.values();
            let mut row = vec![0.0; p];
            let (mut s, mut s2) = (0.0, 0.0);
            for i in 0..inner {
                let y = scalar_of(spec, bv.row(i).as_slice().expect("row-major storage"));
                s += y;
                s2 += y * y;
            }
            let per_k = (0..p)
                .map(|k| {
                    let (mut a, mut a2, mut t, mut t2) = (0.0, 0.0, 0.0, 0.0);
                    for i in 0..inner {
                        for j in 0..p {
                            row[j] = if j == k { ov[[o, j]] } else { bv[[i, j]] };
                        }
                        let y = scalar_of(spec, &row);
                        a += y;
                        a2 += y * y;
                        for j in 0..p {
                            row[j] = if j == k { bv[[i, j]] } else { ov[[o, j]] };
                        }
                        let y = scalar_of(spec, &row);
                        t += y;
                        t2 += y * y;
                    }
                    let (mu, var) = mean_var(a, a2);
                    (mu, var, mean_var(t, t2).1)
                })
                .collect();
            Ok((per_k, s, s2))
        })
        .collect::<Result<_>>()?;

    let total_n = (outer * inner) as f64;
    let (s, s2) = groups.iter().fold((0.0, 0.0), |(a, b), g| (a + g.1, b + g.2));
    let total_var = (s2 - s * s / total_n) / (total_n - 1.0);
    if !(total_var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((0..p)
        .map(|k| {
            let means: Vec<f64> = groups.iter().map(|g| g.0[k].0).collect();
            let within = groups.iter().map(|g| g.0[k].1).sum::<f64>() / outer as f64;
            let total = groups.iter().map(|g| g.0[k].2).sum::<f64>() / outer as f64;
            let between = crate::stats::std_dev(&means).powi(2);
            ((between - within / m) / total_var, total / total_var)
        })
        .unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample_uniform;

    fn row(v: &[f64]) -> DataMatrix {
        DataMatrix::from_rows(&[v.to_vec()]).unwrap()
    }

    /// Closed-form Ishigami variances for `a`, `b`.
    fn ishigami_exact(a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
        let pi4 = PI.powi(4);
        let pi8 = PI.powi(8);
        let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
        let v = v1 + v2 + v13;
        ([v1 / v, v2 / v, 0.0], [(v1 + v13) / v, v2 / v, v13 / v])
    }

    #[test]
    fn ishigami_point_value() {
        let y = eval_benchmark(&BenchmarkSpec::new(Benchmark::IshigamiEta3), &row(&[PI / 2.0, 0.0, 0.0])).unwrap();
        assert!((y.values()[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linkletter_origin_is_zero() {
        let y = eval_benchmark(&BenchmarkSpec::new(Benchmark::LinkletterEta1), &row(&[0.0; 10])).unwrap();
        assert_eq!(y.values()[[0, 0]], 0.0);
    }

    #[test]
    fn morris_coefficients_k5() {
        let (a, b) = morris_coefficients(5);
        assert!((a - (-0.3306)).abs() < 1e-4, "{a}");
        assert!((b - 2.1909).abs() < 1e-4, "{b}");
    }

    #[test]
    fn morris_hand_value() {
        // k = 2: alpha (x1 + x2) + beta x1 x2.
        let (a, b) = morris_coefficients(2);
        let mut x = vec![0.0; 30];
        x[0] = 0.5;
        x[1] = 0.25;
        x[2] = 0.9;
        let y = eval_scalar(&Benchmark::MorrisEta4 { k: 2 }, &row(&x)).unwrap()[0];
        assert!((y - (a * 0.75 + b * 0.125)).abs() < 1e-14);
    }

    #[test]
    fn soblev_zero_coefficient_limit() {
        assert_eq!(soblev_mean(&[0.0, 0.0]), 1.0);
        assert!((soblev_mean(&[1.0]) - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        let mut b = vec![0.0; 20];
        b[0] = 1.0;
        let x = row(&[0.0; 20]);
        let y = eval_scalar(&Benchmark::SoblevEta5 { b }, &x).unwrap()[0];
        assert!((y - (1.0 - (std::f64::consts::E - 1.0))).abs() < 1e-14);
    }

    #[test]
    fn level_set_is_strict() {
        let z = level_set_transform(&[9.0, 10.0, 11.0], 10.0).unwrap();
        assert_eq!(z.column_vec(0), vec![0.0, 0.0, 1.0]);
        assert!(z.is_categorical(0));
        let zeros = level_set_transform(&[1.0, 2.0], 10.0).unwrap();
        assert!(zeros.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ishigami_level_set_non_degenerate() {
        let x = sample_uniform(&[-PI; 3], &[PI; 3], 200, RngSeed(3)).unwrap();
        let z = eval_benchmark(&BenchmarkSpec::with_level_set(Benchmark::IshigamiEta3, 10.0), &x).unwrap();
        let frac = z.column(0).sum() / 200.0;
        assert!(frac > 0.0 && frac < 0.5, "{frac}");
        assert!(z.column(0).iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            eval_benchmark(&BenchmarkSpec::new(Benchmark::IshigamiEta3), &row(&[0.0; 4])),
            Err(Error::DimMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn parameter_validation() {
        assert!(Benchmark::morris(0).is_err());
        assert!(Benchmark::morris(11).is_err());
        assert!(Benchmark::SoblevEta5 { b: vec![1.0; 3] }.validate().is_err());
    }

    #[test]
    fn linkletter_monotone_in_active_inputs() {
        let x = sample_uniform(&[0.0; 10], &[0.9; 10], 50, RngSeed(4)).unwrap();
        let spec = BenchmarkSpec::new(Benchmark::LinkletterEta1);
        let base = eval_benchmark(&spec, &x).unwrap();
        for k in 0..8 {
            let mut v = x.values().to_owned();
            v.column_mut(k).mapv_inplace(|a| a + 0.05);
            let bumped = eval_benchmark(&spec, &DataMatrix::new(v).unwrap()).unwrap();
            for i in 0..50 {
                assert!(bumped.values()[[i, 0]] > base.values()[[i, 0]]);
            }
        }
    }

    #[test]
    fn morris_inert_inputs_exchangeable() {
        let x = sample_uniform(&[0.0; 30], &[1.0; 30], 40, RngSeed(5)).unwrap();
        let spec = BenchmarkSpec::new(Benchmark::MorrisEta4 { k: 5 });
        let a = eval_benchmark(&spec, &x).unwrap();
        let mut v = x.values().to_owned();
        let (c12, c25) = (v.column(12).to_owned(), v.column(25).to_owned());
        v.column_mut(12).assign(&c25);
        v.column_mut(25).assign(&c12);
        let b = eval_benchmark(&spec, &DataMatrix::new(v).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_map_properties() {
        let r = [0.3, 0.6, 0.2, 0.9];
        let x = DataMatrix::from_rows(&[r.to_vec(), r.to_vec()]).unwrap();
        let spec = BenchmarkSpec::new(Benchmark::SyntheticMap { grid: 8, inputs: 4 });
        let m = eval_benchmark(&spec, &x).unwrap();
        assert_eq!(m.ncols(), 64);
        assert_eq!(m.row(0), m.row(1));
        let one = synthetic_map(&x, 1).unwrap();
        let (a, cx, cy, w) = bump_parameters(&r[..3]);
        let expected = a * (-((0.5 - cx).powi(2) + (0.5 - cy).powi(2)) / (2.0 * w * w)).exp();
        assert_eq!(one.ncols(), 1);
        assert_eq!(one.values()[[0, 0]], expected);
        let mut inert = r;
        inert[3] = 0.1;
        let m2 = synthetic_map(&DataMatrix::from_rows(&[inert.to_vec()]).unwrap(), 8).unwrap();
        assert_eq!(m2.row(0), m.row(0));
    }

    #[test]
    fn linkletter_reference_values() {
        let s = linkletter_reference();
        assert!((s[0] - 0.75).abs() < 1e-4);
        assert!((s[1] - 0.1875).abs() < 1e-4);
        assert!((s[2] - 0.0469).abs() < 1e-4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-3);
        assert_eq!(&s[8..], &[0.0, 0.0]);
    }

    #[test]
    fn linkletter_formula_confirmed_by_oracle() {
        let spec = BenchmarkSpec::new(Benchmark::LinkletterEta1);
        let (first, total) = nested_monte_carlo(&spec, 1000, 1000, RngSeed(11)).unwrap();
        let exact = linkletter_reference();
        for k in 0..10 {
            assert!((first[k] - exact[k]).abs() < 0.02, "S{k}: {} vs {}", first[k], exact[k]);
            assert!((total[k] - exact[k]).abs() < 0.02, "ST{k}: {} vs {}", total[k], exact[k]);
        }
    }

    #[test]
    fn ishigami_oracle_matches_closed_form() {
        let r = analytical_reference(&BenchmarkSpec::new(Benchmark::IshigamiEta3)).unwrap();
        let (s, st) = ishigami_exact(5.0, 0.1);
        for k in 0..3 {
            assert!((r.first_order[k] - s[k]).abs() < 0.03, "S{k}: {} vs {}", r.first_order[k], s[k]);
            assert!((r.total[k] - st[k]).abs() < 0.03, "ST{k}: {} vs {}", r.total[k], st[k]);
        }
        assert!(matches!(r.provenance, Provenance::OracleMonteCarlo { .. }));
        assert!(r.first_order[2] < 0.03 && r.total[2] > 0.2);
    }

    #[test]
    fn loeppky_first_three_dominate() {
        let r = analytical_reference(&BenchmarkSpec::new(Benchmark::LoeppkyEta2)).unwrap();
        let min_top = r.first_order[..3].iter().cloned().fold(f64::INFINITY, f64::min);
        let max_rest = r.first_order[3..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min_top > max_rest);
    }

    #[test]
    fn references_unavailable() {
        let b = vec![0.5; 20];
        assert!(matches!(
            analytical_reference(&BenchmarkSpec::new(Benchmark::SoblevEta5 { b })),
            Err(Error::NoReference(_))
        ));
        assert!(matches!(
            analytical_reference(&BenchmarkSpec::new(Benchmark::SyntheticMap { grid: 4, inputs: 5 })),
            Err(Error::NoReference(_))
        ));
    }
}
