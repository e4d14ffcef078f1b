//! Config-driven experiments: sample designs or CSV data, index families
//! over replicates, optional permutation nulls and screening, and the
//! report files.
//!
//! Replicate `r` draws everything from `seed.derive(r)`, so a replicate's
//! numbers do not depend on the other replicates or on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Spanned, Table, Value};

use crate::benchmarks::{eval_benchmark, eval_scalar, Benchmark, BenchmarkSpec};
use crate::data::{load_csv, sample_uniform, ColumnSelector, DataMatrix};
use crate::dcor::{dcor_index, dcor_pick_freeze, DcovConfig};
use crate::error::Error;
use crate::fdiv::{fdiv_index, ksg_mi_blocks, FChoice, KSG_MAX_DIM};
use crate::hsic::{hsic_index, hsic_pick_freeze, HsicConfig};
use crate::kernels::{Bandwidth, KernelFamily, KernelSpec};
use crate::lasso::LambdaRule;
use crate::permutation::{permutation_test, Statistic};
use crate::screening::{bootstrap_selection, Measure, ScreeningMethod, ThresholdPolicy};
use crate::sobol::{build_pick_freeze, first_order_pf, total_effect_pf, PickFreezeDesign};
use crate::stats::{quantile, Summary};
use crate::RngSeed;

pub const INDEX_NAMES: [&str; 8] = [
    "sobol_first_pf",
    "sobol_total_pf",
    "fdiv",
    "mi_ksg",
    "dcor",
    "dcor_pf",
    "hsic",
    "hsic_pf",
];
pub const SCREENING_METHODS: [&str; 4] = ["max_relevance", "mrmr", "iterative_hsic", "hsic_lasso"];
pub const KERNEL_NAMES: [&str; 5] = ["gaussian", "laplace", "distance_induced", "categorical", "pca_gaussian"];
pub const MEASURE_NAMES: [&str; 3] = ["dcor", "hsic", "mi_ksg"];
pub const DEFAULT_PERMUTATIONS: usize = 199;
pub const DEFAULT_LEVEL: f64 = 0.05;
pub const DEFAULT_KSG_K: usize = 4;
pub const SCHEMA_VERSION: u32 = 1;

/// Benchmark name aliases accepted in configs.
const BENCHMARK_ALIASES: [(&str, &str); 5] = [
    ("linkletter", "linkletter_eta1"),
    ("loeppky", "loeppky_eta2"),
    ("ishigami", "ishigami_eta3"),
    ("morris", "morris_eta4"),
    ("soblev", "soblev_eta5"),
];

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "index", rename_all = "snake_case")]
pub enum IndexSpec {
    SobolFirstPf,
    SobolTotalPf,
    Fdiv { choice: FChoice },
    MiKsg { k: usize },
    Dcor { alpha: f64 },
    DcorPf,
    Hsic { kernel_x: KernelSpec, kernel_y: KernelSpec },
    HsicPf { kernel: KernelSpec },
}

impl IndexSpec {
    pub fn name(&self) -> &'static str {
        match self {
            IndexSpec::SobolFirstPf => "sobol_first_pf",
            IndexSpec::SobolTotalPf => "sobol_total_pf",
            IndexSpec::Fdiv { .. } => "fdiv",
            IndexSpec::MiKsg { .. } => "mi_ksg",
            IndexSpec::Dcor { .. } => "dcor",
            IndexSpec::DcorPf => "dcor_pf",
            IndexSpec::Hsic { .. } => "hsic",
            IndexSpec::HsicPf { .. } => "hsic_pf",
        }
    }

    /// Report label; unique within a config.
    pub fn label(&self) -> String {
        match self {
            IndexSpec::Fdiv { choice } => format!("fdiv_{choice}"),
            other => other.name().to_string(),
        }
    }

    pub fn is_pick_freeze(&self) -> bool {
        matches!(
            self,
            IndexSpec::SobolFirstPf | IndexSpec::SobolTotalPf | IndexSpec::DcorPf | IndexSpec::HsicPf { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Benchmark(BenchmarkSpec),
    /// Paths as written in the config, resolved against its directory.
    Csv {
        inputs_path: PathBuf,
        outputs_path: PathBuf,
        header: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermutationSpec {
    pub permutations: usize,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Permutation { level: f64, permutations: usize },
    TopFraction { q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ScreeningSpec {
    MaxRelevance { measure: Measure, m: usize },
    Mrmr { measure: Measure, m: usize },
    IterativeHsic { hsic: HsicConfig, threshold: ThresholdRule, max_size: usize },
    HsicLasso { lambda: LambdaRule, kernel_x: KernelSpec, kernel_y: KernelSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningConfig {
    #[serde(flatten)]
    pub spec: ScreeningSpec,
    /// Bootstrap resamples per replicate for selection probabilities.
    pub bootstrap: Option<usize>,
}

/// Fully resolved experiment. Serializes to the canonical config echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub source: Source,
    pub n: usize,
    pub replicates: usize,
    pub seed: RngSeed,
    pub indices: Vec<IndexSpec>,
    pub screening: Option<ScreeningConfig>,
    pub permutation: Option<PermutationSpec>,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(ConfigError),
    #[error("{context}: {source}")]
    Runtime { context: String, source: Error },
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// Process exit code: 2 for config errors, 3 for everything at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        ExperimentError::Config(e)
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    source: Spanned<RawSource>,
    n: Spanned<i64>,
    replicates: Option<Spanned<i64>>,
    seed: Option<u64>,
    indices: Spanned<Vec<Spanned<Value>>>,
    screening: Option<Spanned<Table>>,
    permutation: Option<Spanned<RawPermutation>>,
    output_dir: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    benchmark: Option<String>,
    k: Option<usize>,
    b: Option<Vec<f64>>,
    grid: Option<usize>,
    inputs: Option<usize>,
    level_set: Option<f64>,
    inputs_path: Option<PathBuf>,
    outputs_path: Option<PathBuf>,
    header: Option<bool>,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPermutation {
    permutations: Option<i64>,
    level: Option<f64>,
}

/// Maps byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, span: Range<usize>) -> Option<usize> {
        let end = span.start.min(self.0.len());
        Some(self.0[..end].matches('\n').count() + 1)
    }

    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.at(span),
            message: message.into(),
        }
    }
}

fn list(names: &[&str]) -> String {
    names.join(", ")
}

fn as_count(v: &Value, key: &str) -> std::result::Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(format!("`{key}` must be a non-negative integer")),
    }
}

fn as_real(v: &Value, key: &str) -> std::result::Result<f64, String> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        _ => Err(format!("`{key}` must be a number")),
    }
}

fn as_str<'v>(v: &'v Value, key: &str) -> std::result::Result<&'v str, String> {
    v.as_str().ok_or_else(|| format!("`{key}` must be a string"))
}

fn check_keys(table: &Table, allowed: &[&str], context: &str) -> std::result::Result<(), String> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(format!("unknown key `{key}` in {context}; valid keys: {}", list(allowed)));
        }
    }
    Ok(())
}

fn parse_kernel(v: &Value, key: &str) -> std::result::Result<KernelSpec, String> {
    let (family, bandwidth, components) = match v {
        Value::String(s) => (s.as_str(), None, None),
        Value::Table(t) => {
            check_keys(t, &["family", "bandwidth", "components"], &format!("kernel `{key}`"))?;
            let family = as_str(t.get("family").ok_or_else(|| format!("kernel `{key}` needs `family`"))?, "family")?;
            (family, t.get("bandwidth"), t.get("components"))
        }
        _ => return Err(format!("`{key}` must be a kernel name or table")),
    };
    let mut spec = match family {
        "gaussian" => KernelSpec::gaussian(),
        "laplace" => KernelSpec::laplace(),
        "distance_induced" => KernelSpec::distance_induced(),
        "categorical" => KernelSpec::categorical(),
        "pca_gaussian" => {
            let m = components.ok_or_else(|| format!("kernel `{key}`: pca_gaussian needs `components`"))?;
            KernelSpec::pca_gaussian(as_count(m, "components")?).map_err(|e| e.to_string())?
        }
        other => {
            return Err(format!(
                "unknown kernel family `{other}` in `{key}`; valid families: {}",
                list(&KERNEL_NAMES)
            ))
        }
    };
    if components.is_some() && family != "pca_gaussian" {
        return Err(format!("kernel `{key}`: `components` only applies to pca_gaussian"));
    }
    if let Some(bw) = bandwidth {
        let b = match bw {
            Value::String(s) if s == "median" => Bandwidth::MedianHeuristic,
            other => Bandwidth::Fixed(as_real(other, "bandwidth").map_err(|_| {
                format!("kernel `{key}`: `bandwidth` must be a positive number or \"median\"")
            })?),
        };
        if !matches!(spec.family, KernelFamily::Gaussian | KernelFamily::Laplace | KernelFamily::SemimetricGaussian) {
            return Err(format!("kernel `{key}`: {family} takes no bandwidth"));
        }
        spec = spec.with_bandwidth(b).map_err(|e| format!("kernel `{key}`: {e}"))?;
    }
    Ok(spec)
}

struct Context {
    categorical_output: bool,
    output_dim: usize,
}

impl Context {
    fn default_output_kernel(&self) -> KernelSpec {
        if self.categorical_output {
            KernelSpec::categorical()
        } else {
            KernelSpec::gaussian()
        }
    }

    fn check_output_kernel(&self, k: &KernelSpec, key: &str) -> std::result::Result<(), String> {
        if k.family == KernelFamily::Categorical && !self.categorical_output {
            return Err(format!("`{key}`: the categorical kernel needs a categorical (level-set) output"));
        }
        Ok(())
    }

    fn check_input_kernel(&self, k: &KernelSpec, key: &str) -> std::result::Result<(), String> {
        match k.family {
            KernelFamily::Categorical | KernelFamily::SemimetricGaussian => {
                Err(format!("`{key}`: {:?} kernels apply to outputs only", k.family).to_lowercase())
            }
            _ => Ok(()),
        }
    }

    fn continuous_scalar(&self, what: &str) -> std::result::Result<(), String> {
        if self.categorical_output || self.output_dim != 1 {
            return Err(format!("{what} needs a continuous scalar output"));
        }
        Ok(())
    }
}

fn parse_index(v: &Value, ctx: &Context) -> std::result::Result<IndexSpec, String> {
    let empty = Table::new();
    let (name, table) = match v {
        Value::String(s) => (s.as_str(), &empty),
        Value::Table(t) => (
            as_str(t.get("index").ok_or("index table needs an `index` key")?, "index")?,
            t,
        ),
        _ => return Err("index entries must be names or tables".into()),
    };
    let allowed: &[&str] = match name {
        "sobol_first_pf" | "sobol_total_pf" | "dcor_pf" => &["index"],
        "fdiv" => &["index", "choice"],
        "mi_ksg" => &["index", "k"],
        "dcor" => &["index", "alpha"],
        "hsic" => &["index", "kernel_x", "kernel_y"],
        "hsic_pf" => &["index", "kernel"],
        other => return Err(format!("unknown index `{other}`; valid indices: {}", list(&INDEX_NAMES))),
    };
    check_keys(table, allowed, &format!("index `{name}`"))?;
    let spec = match name {
        "sobol_first_pf" => IndexSpec::SobolFirstPf,
        "sobol_total_pf" => IndexSpec::SobolTotalPf,
        "dcor_pf" => IndexSpec::DcorPf,
        "fdiv" => {
            let choice = match table.get("choice") {
                None => FChoice::KlNegLog,
                Some(c) => {
                    let c = as_str(c, "choice")?;
                    FChoice::from_name(c).ok_or_else(|| {
                        let names: Vec<&str> = FChoice::ALL.iter().map(|c| c.name()).collect();
                        format!("unknown f-divergence `{c}`; valid choices: {}", list(&names))
                    })?
                }
            };
            IndexSpec::Fdiv { choice }
        }
        "mi_ksg" => {
            let k = table.get("k").map(|v| as_count(v, "k")).transpose()?.unwrap_or(DEFAULT_KSG_K);
            if k == 0 {
                return Err("`k` must be at least 1".into());
            }
            IndexSpec::MiKsg { k }
        }
        "dcor" => {
            let alpha = table.get("alpha").map(|v| as_real(v, "alpha")).transpose()?.unwrap_or(1.0);
            DcovConfig::with_alpha(alpha).map_err(|e| e.to_string())?;
            IndexSpec::Dcor { alpha }
        }
        "hsic" => {
            let kernel_x = table
                .get("kernel_x")
                .map(|v| parse_kernel(v, "kernel_x"))
                .transpose()?
                .unwrap_or_else(KernelSpec::gaussian);
            let kernel_y = table
                .get("kernel_y")
                .map(|v| parse_kernel(v, "kernel_y"))
                .transpose()?
                .unwrap_or_else(|| ctx.default_output_kernel());
            ctx.check_input_kernel(&kernel_x, "kernel_x")?;
            ctx.check_output_kernel(&kernel_y, "kernel_y")?;
            IndexSpec::Hsic { kernel_x, kernel_y }
        }
        "hsic_pf" => {
            let kernel = table
                .get("kernel")
                .map(|v| parse_kernel(v, "kernel"))
                .transpose()?
                .unwrap_or_else(|| ctx.default_output_kernel());
            ctx.check_output_kernel(&kernel, "kernel")?;
            IndexSpec::HsicPf { kernel }
        }
        _ => unreachable!("names checked above"),
    };
    match &spec {
        IndexSpec::SobolFirstPf | IndexSpec::SobolTotalPf => ctx.continuous_scalar("sobol indices")?,
        IndexSpec::Fdiv { .. } => ctx.continuous_scalar("fdiv")?,
        IndexSpec::MiKsg { .. } => {
            if ctx.categorical_output {
                return Err("mi_ksg needs a continuous output".into());
            }
            if 1 + ctx.output_dim > KSG_MAX_DIM {
                return Err(format!(
                    "mi_ksg supports at most {KSG_MAX_DIM} total dimensions; the output has {}",
                    ctx.output_dim
                ));
            }
        }
        _ => {}
    }
    Ok(spec)
}

fn parse_measure(t: &Table, ctx: &Context) -> std::result::Result<Measure, String> {
    let name = t.get("measure").map(|v| as_str(v, "measure")).transpose()?.unwrap_or("hsic");
    match name {
        "dcor" => Ok(Measure::Dcor),
        "hsic" => {
            let kx = t.get("kernel_x").map(|v| parse_kernel(v, "kernel_x")).transpose()?.unwrap_or_default();
            let ky = t
                .get("kernel_y")
                .map(|v| parse_kernel(v, "kernel_y"))
                .transpose()?
                .unwrap_or_else(|| ctx.default_output_kernel());
            ctx.check_input_kernel(&kx, "kernel_x")?;
            ctx.check_output_kernel(&ky, "kernel_y")?;
            Ok(Measure::Hsic(HsicConfig::new(kx, ky)))
        }
        "mi_ksg" => {
            if ctx.categorical_output || 1 + ctx.output_dim > KSG_MAX_DIM {
                return Err("mi_ksg screening needs a continuous output of at most 2 columns".into());
            }
            let k = t.get("k").map(|v| as_count(v, "k")).transpose()?.unwrap_or(DEFAULT_KSG_K);
            if k == 0 {
                return Err("`k` must be at least 1".into());
            }
            // The seed is replaced per replicate by the runner.
            Ok(Measure::KsgMi { k, seed: RngSeed(0) })
        }
        other => Err(format!("unknown measure `{other}`; valid measures: {}", list(&MEASURE_NAMES))),
    }
}

fn parse_screening(t: &Table, p: usize, ctx: &Context) -> std::result::Result<ScreeningConfig, String> {
    let method = as_str(t.get("method").ok_or("screening needs a `method`")?, "method")?;
    let allowed: &[&str] = match method {
        "max_relevance" | "mrmr" => &["method", "measure", "m", "k", "kernel_x", "kernel_y", "bootstrap"],
        "iterative_hsic" => &[
            "method", "threshold", "level", "permutations", "fraction", "max_size", "kernel_y", "bootstrap",
        ],
        "hsic_lasso" => &["method", "lambda", "lambda_fixed", "kernel_x", "kernel_y", "bootstrap"],
        other => {
            return Err(format!(
                "unknown screening method `{other}`; valid methods: {}",
                list(&SCREENING_METHODS)
            ))
        }
    };
    check_keys(t, allowed, &format!("screening method `{method}`"))?;
    let count = |key: &str| t.get(key).map(|v| as_count(v, key)).transpose();
    let real = |key: &str| t.get(key).map(|v| as_real(v, key)).transpose();
    let check_m = |m: usize| {
        if m == 0 || m > p {
            Err(format!("`m` must be in 1..={p}, got {m}"))
        } else {
            Ok(m)
        }
    };
    let spec = match method {
        "max_relevance" => ScreeningSpec::MaxRelevance {
            measure: parse_measure(t, ctx)?,
            m: check_m(count("m")?.unwrap_or(p))?,
        },
        "mrmr" => ScreeningSpec::Mrmr {
            measure: parse_measure(t, ctx)?,
            m: check_m(count("m")?.ok_or("mrmr needs `m`")?)?,
        },
        "iterative_hsic" => {
            let rule = t.get("threshold").map(|v| as_str(v, "threshold")).transpose()?.unwrap_or("permutation");
            let threshold = match rule {
                "permutation" => {
                    if t.contains_key("fraction") {
                        return Err("`fraction` only applies to threshold = \"top_fraction\"".into());
                    }
                    ThresholdRule::Permutation {
                        level: real("level")?.unwrap_or(DEFAULT_LEVEL),
                        permutations: count("permutations")?.unwrap_or(DEFAULT_PERMUTATIONS),
                    }
                }
                "top_fraction" => {
                    if t.contains_key("level") || t.contains_key("permutations") {
                        return Err("`level` and `permutations` only apply to threshold = \"permutation\"".into());
                    }
                    ThresholdRule::TopFraction {
                        q: real("fraction")?.ok_or("threshold = \"top_fraction\" needs `fraction`")?,
                    }
                }
                other => {
                    return Err(format!(
                        "unknown threshold `{other}`; valid thresholds: permutation, top_fraction"
                    ))
                }
            };
            threshold_policy(&threshold, RngSeed(0)).validate().map_err(|e| e.to_string())?;
            let ky = t
                .get("kernel_y")
                .map(|v| parse_kernel(v, "kernel_y"))
                .transpose()?
                .unwrap_or_else(|| ctx.default_output_kernel());
            ctx.check_output_kernel(&ky, "kernel_y")?;
            let max_size = count("max_size")?.unwrap_or(p);
            if max_size == 0 || max_size > p {
                return Err(format!("`max_size` must be in 1..={p}, got {max_size}"));
            }
            ScreeningSpec::IterativeHsic {
                hsic: HsicConfig::with_output_kernel(ky),
                threshold,
                max_size,
            }
        }
        "hsic_lasso" => {
            let lambda = match (real("lambda")?, real("lambda_fixed")?) {
                (Some(_), Some(_)) => return Err("give either `lambda` or `lambda_fixed`, not both".into()),
                (Some(c), None) => LambdaRule::Relative(c),
                (None, Some(v)) => LambdaRule::Fixed(v),
                (None, None) => LambdaRule::default(),
            };
            let (LambdaRule::Relative(v) | LambdaRule::Fixed(v)) = lambda;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("lambda must be a finite number >= 0, got {v}"));
            }
            let kx = t.get("kernel_x").map(|v| parse_kernel(v, "kernel_x")).transpose()?.unwrap_or_default();
            let ky = t
                .get("kernel_y")
                .map(|v| parse_kernel(v, "kernel_y"))
                .transpose()?
                .unwrap_or_else(|| ctx.default_output_kernel());
            ctx.check_input_kernel(&kx, "kernel_x")?;
            ctx.check_output_kernel(&ky, "kernel_y")?;
            ScreeningSpec::HsicLasso {
                lambda,
                kernel_x: kx,
                kernel_y: ky,
            }
        }
        _ => unreachable!("methods checked above"),
    };
    let bootstrap = count("bootstrap")?;
    if bootstrap == Some(0) {
        return Err("`bootstrap` must be at least 1".into());
    }
    Ok(ScreeningConfig { spec, bootstrap })
}

fn threshold_policy(rule: &ThresholdRule, seed: RngSeed) -> ThresholdPolicy {
    match *rule {
        ThresholdRule::Permutation { level, permutations } => ThresholdPolicy::PermutationQuantile {
            level,
            permutations,
            seed,
        },
        ThresholdRule::TopFraction { q } => ThresholdPolicy::TopFraction { q },
    }
}

fn resolve_benchmark(raw: &RawSource, name: &str) -> std::result::Result<BenchmarkSpec, String> {
    let canonical = BENCHMARK_ALIASES
        .iter()
        .find(|(alias, _)| *alias == name)
        .map(|(_, full)| *full)
        .unwrap_or(name);
    let unused = |keys: &[(&str, bool)]| -> std::result::Result<(), String> {
        match keys.iter().find(|(_, present)| *present) {
            Some((key, _)) => Err(format!("`{key}` does not apply to benchmark {canonical}")),
            None => Ok(()),
        }
    };
    let benchmark = match canonical {
        "linkletter_eta1" | "loeppky_eta2" | "ishigami_eta3" => {
            unused(&[("k", raw.k.is_some()), ("b", raw.b.is_some()), ("grid", raw.grid.is_some()), ("inputs", raw.inputs.is_some())])?;
            match canonical {
                "linkletter_eta1" => Benchmark::LinkletterEta1,
                "loeppky_eta2" => Benchmark::LoeppkyEta2,
                _ => Benchmark::IshigamiEta3,
            }
        }
        "morris_eta4" => {
            unused(&[("b", raw.b.is_some()), ("grid", raw.grid.is_some()), ("inputs", raw.inputs.is_some())])?;
            Benchmark::MorrisEta4 {
                k: raw.k.ok_or("morris_eta4 needs `k` (1..=10)")?,
            }
        }
        "soblev_eta5" => {
            unused(&[("k", raw.k.is_some()), ("grid", raw.grid.is_some()), ("inputs", raw.inputs.is_some())])?;
            match &raw.b {
                Some(b) => Benchmark::SoblevEta5 { b: b.clone() },
                None => Benchmark::soblev_default(),
            }
        }
        "synthetic_map" => {
            unused(&[("k", raw.k.is_some()), ("b", raw.b.is_some())])?;
            Benchmark::SyntheticMap {
                grid: raw.grid.ok_or("synthetic_map needs `grid`")?,
                inputs: raw.inputs.unwrap_or(3),
            }
        }
        other => {
            let mut names: Vec<&str> = Benchmark::NAMES.to_vec();
            names.extend(BENCHMARK_ALIASES.iter().map(|(a, _)| *a));
            return Err(format!("unknown benchmark `{other}`; valid names: {}", list(&names)));
        }
    };
    let spec = BenchmarkSpec {
        benchmark,
        level_set: raw.level_set,
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Shape information about the data a config will run on.
struct Shape {
    p: usize,
    rows: Option<usize>,
    ctx: Context,
}

fn load_pair(base: &Path, inputs: &Path, outputs: &Path, header: bool) -> std::result::Result<(DataMatrix, DataMatrix), String> {
    let (ip, op) = (base.join(inputs), base.join(outputs));
    let x = load_csv(&ip, header).map_err(|e| format!("{}: {e}", inputs.display()))?;
    let y = load_csv(&op, header).map_err(|e| format!("{}: {e}", outputs.display()))?;
    if x.nrows() != y.nrows() {
        return Err(format!(
            "row count mismatch: {} has {} rows but {} has {} rows",
            inputs.display(),
            x.nrows(),
            outputs.display(),
            y.nrows()
        ));
    }
    Ok((x, y))
}

impl ExperimentConfig {
    /// Parses a config whose relative CSV paths are resolved against the
    /// current directory.
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, ConfigError> {
        Self::from_toml_str_in(text, Path::new("."))
    }

    /// Reads and validates a config file.
    pub fn from_path(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_toml_str_in(&text, base)
    }

    pub fn from_toml_str_in(text: &str, base_dir: &Path) -> std::result::Result<Self, ConfigError> {
        let lines = Lines(text);
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().and_then(|s| lines.at(s)),
            message: e.message().trim().to_string(),
        })?;

        let source_span = raw.source.span();
        let rs = raw.source.into_inner();
        let (source, shape) = match (&rs.benchmark, &rs.inputs_path, &rs.outputs_path) {
            (Some(name), None, None) => {
                if rs.header.is_some() {
                    return Err(lines.err(source_span, "`header` only applies to csv sources"));
                }
                let spec = resolve_benchmark(&rs, name).map_err(|m| lines.err(source_span.clone(), m))?;
                let shape = Shape {
                    p: spec.input_dim(),
                    rows: None,
                    ctx: Context {
                        categorical_output: spec.is_categorical(),
                        output_dim: spec.output_dim(),
                    },
                };
                (Source::Benchmark(spec), shape)
            }
            (None, Some(inputs), Some(outputs)) => {
                if rs.k.is_some() || rs.b.is_some() || rs.grid.is_some() || rs.inputs.is_some() || rs.level_set.is_some() {
                    return Err(lines.err(source_span, "benchmark parameters do not apply to csv sources"));
                }
                let header = rs.header.unwrap_or(true);
                let (x, y) = load_pair(base_dir, inputs, outputs, header).map_err(|m| lines.err(source_span.clone(), m))?;
                let shape = Shape {
                    p: x.ncols(),
                    rows: Some(x.nrows()),
                    ctx: Context {
                        categorical_output: false,
                        output_dim: y.ncols(),
                    },
                };
                (
                    Source::Csv {
                        inputs_path: inputs.clone(),
                        outputs_path: outputs.clone(),
                        header,
                    },
                    shape,
                )
            }
            (Some(_), _, _) => {
                return Err(lines.err(source_span, "give either `benchmark` or `inputs_path` + `outputs_path`, not both"))
            }
            _ => {
                return Err(lines.err(
                    source_span,
                    "source needs `benchmark`, or both `inputs_path` and `outputs_path`",
                ))
            }
        };

        let n_span = raw.n.span();
        let n = *raw.n.get_ref();
        if n < 2 {
            return Err(lines.err(n_span, format!("`n` must be at least 2, got {n}")));
        }
        let n = n as usize;
        if let Some(rows) = shape.rows {
            if n > rows {
                return Err(lines.err(n_span, format!("`n` = {n} exceeds the {rows} rows of the csv source")));
            }
        }
        let replicates = match &raw.replicates {
            None => 1,
            Some(r) if *r.get_ref() >= 1 => *r.get_ref() as usize,
            Some(r) => return Err(lines.err(r.span(), format!("`replicates` must be at least 1, got {}", r.get_ref()))),
        };

        let indices_span = raw.indices.span();
        let mut indices = Vec::new();
        for entry in raw.indices.get_ref() {
            let spec = parse_index(entry.get_ref(), &shape.ctx).map_err(|m| lines.err(entry.span(), m))?;
            if spec.is_pick_freeze() && !matches!(source, Source::Benchmark(_)) {
                return Err(lines.err(
                    entry.span(),
                    format!("{}: pick-and-freeze requires benchmark source", spec.name()),
                ));
            }
            if indices.iter().any(|s: &IndexSpec| s.label() == spec.label()) {
                return Err(lines.err(entry.span(), format!("index `{}` listed twice", spec.label())));
            }
            if let IndexSpec::MiKsg { k } = spec {
                if k >= n {
                    return Err(lines.err(entry.span(), format!("mi_ksg needs k < n, got k = {k}, n = {n}")));
                }
            }
            if matches!(spec, IndexSpec::Fdiv { .. }) && n < 10 {
                return Err(lines.err(entry.span(), "fdiv needs n >= 10"));
            }
            indices.push(spec);
        }
        if indices.is_empty() && raw.screening.is_none() {
            return Err(lines.err(indices_span, "`indices` is empty and no screening is configured"));
        }

        let screening = match &raw.screening {
            None => None,
            Some(t) => Some(parse_screening(t.get_ref(), shape.p, &shape.ctx).map_err(|m| lines.err(t.span(), m))?),
        };

        let permutation = match raw.permutation {
            None => None,
            Some(p) => {
                let span = p.span();
                let p = p.into_inner();
                let permutations = p.permutations.unwrap_or(DEFAULT_PERMUTATIONS as i64);
                let level = p.level.unwrap_or(DEFAULT_LEVEL);
                if permutations < 1 {
                    return Err(lines.err(span, format!("`permutations` must be at least 1, got {permutations}")));
                }
                if !(level > 0.0 && level < 1.0) {
                    return Err(lines.err(span, format!("`level` must be in (0, 1), got {level}")));
                }
                Some(PermutationSpec {
                    permutations: permutations as usize,
                    level,
                })
            }
        };

        Ok(ExperimentConfig {
            source,
            n,
            replicates,
            seed: RngSeed(raw.seed.unwrap_or(0)),
            indices,
            screening,
            permutation,
            output_dir: raw.output_dir,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        to_json(self, false)
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

// ---------------------------------------------------------------- JSON

/// Writes floats with 17 significant digits; delegates layout otherwise.
struct Digits17<F>(F);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl<F: serde_json::ser::Formatter> serde_json::ser::Formatter for Digits17<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        end_object_key(),
        begin_object_value(),
        end_object_value(),
    );
}

/// `value` with 17 significant digits in scientific notation.
pub fn fmt17(value: f64) -> String {
    if value == 0.0 {
        // Keeps the sign-free zero stable across platforms.
        return "0.0000000000000000e0".into();
    }
    format!("{value:.16e}")
}

fn to_json<T: Serialize>(value: &T, pretty: bool) -> String {
    let mut buf = Vec::new();
    let result = if pretty {
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(serde_json::ser::PrettyFormatter::new()));
        value.serialize(&mut ser)
    } else {
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(serde_json::ser::CompactFormatter));
        value.serialize(&mut ser)
    };
    result.expect("report types serialize infallibly");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputReport {
    pub input: String,
    #[serde(flatten)]
    pub summary: Summary,
    /// One value per replicate, in replicate order.
    pub values: Vec<f64>,
    /// Permutation null quantile at `1 - level`, per replicate.
    pub null_quantile: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
    /// Fraction of replicates with `p <= level`.
    pub rejection_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    pub label: String,
    pub spec: IndexSpec,
    pub inputs: Vec<InputReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningReplicate {
    /// Zero-based input positions in selection order.
    pub selected: Vec<usize>,
    pub selection_probabilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningReport {
    pub replicates: Vec<ScreeningReplicate>,
    /// Per input, fraction of replicates selecting it.
    pub selection_rate: Vec<f64>,
    /// Per input, mean bootstrap selection probability over replicates.
    pub mean_selection_probability: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub seed: u64,
    pub n: usize,
    pub replicates: usize,
    pub config_hash: String,
    pub version: String,
    /// Always the last field, so reproducibility checks can drop one line.
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Results {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub input_names: Vec<String>,
    pub indices: Vec<IndexReport>,
    pub screening: Option<ScreeningReport>,
    pub notes: Vec<String>,
    pub metadata: Metadata,
}

impl Results {
    pub fn to_json(&self) -> String {
        to_json(self, true)
    }
}

// ---------------------------------------------------------------- runner

/// Replicate seed streams.
const STREAM_SAMPLE: u64 = 0;
const STREAM_NULL: u64 = 2;
const STREAM_KSG: u64 = 3;
const STREAM_SCREEN: u64 = 4;
const STREAM_BOOTSTRAP: u64 = 5;

enum Data {
    Benchmark(BenchmarkSpec),
    Csv(DataMatrix, DataMatrix),
}

struct Sample {
    x: DataMatrix,
    y: DataMatrix,
    /// Outputs of the frozen designs and, for totals, the complements.
    frozen: Vec<DataMatrix>,
    complements: Vec<DataMatrix>,
    y_scalar: Option<Vec<f64>>,
    frozen_scalar: Vec<Vec<f64>>,
    complement_scalar: Vec<Vec<f64>>,
}

struct IndexValues {
    values: Vec<f64>,
    nulls: Option<Vec<(f64, f64)>>,
}

struct ReplicateOutput {
    indices: Vec<IndexValues>,
    screening: Option<ScreeningReplicate>,
}

fn runtime(context: impl Into<String>) -> impl FnOnce(Error) -> ExperimentError {
    let context = context.into();
    move |source| ExperimentError::Runtime { context, source }
}

fn draw_sample(cfg: &ExperimentConfig, data: &Data, seed: RngSeed) -> Result<Sample, Error> {
    let needs = |f: fn(&IndexSpec) -> bool| cfg.indices.iter().any(f);
    match data {
        Data::Csv(x, y) => {
            let mut rows = sample_indices(&mut seed.derive(STREAM_SAMPLE).rng(), x.nrows(), cfg.n).into_vec();
            rows.sort_unstable();
            Ok(Sample {
                x: x.select_rows(&rows)?,
                y: y.select_rows(&rows)?,
                frozen: Vec::new(),
                complements: Vec::new(),
                y_scalar: None,
                frozen_scalar: Vec::new(),
                complement_scalar: Vec::new(),
            })
        }
        Data::Benchmark(spec) => {
            let (lows, highs) = spec.benchmark.bounds();
            // The design's base sample is the replicate's sample.
            let design: Option<PickFreezeDesign> = if needs(IndexSpec::is_pick_freeze) {
                Some(build_pick_freeze(&lows, &highs, cfg.n, seed)?)
            } else {
                None
            };
            let x = match &design {
                Some(d) => d.x_base.clone(),
                None => sample_uniform(&lows, &highs, cfg.n, seed.derive(STREAM_SAMPLE))?,
            };
            let y = eval_benchmark(spec, &x)?;
            let mut s = Sample {
                x,
                y,
                frozen: Vec::new(),
                complements: Vec::new(),
                y_scalar: None,
                frozen_scalar: Vec::new(),
                complement_scalar: Vec::new(),
            };
            let Some(d) = design else { return Ok(s) };
            if needs(|i| matches!(i, IndexSpec::DcorPf | IndexSpec::HsicPf { .. })) {
                s.frozen = d.x_frozen.iter().map(|xf| eval_benchmark(spec, xf)).collect::<Result<_, _>>()?;
            }
            if needs(|i| matches!(i, IndexSpec::SobolFirstPf | IndexSpec::SobolTotalPf)) {
                s.y_scalar = Some(eval_scalar(&spec.benchmark, &d.x_base)?);
            }
            if needs(|i| matches!(i, IndexSpec::SobolFirstPf)) {
                s.frozen_scalar = d.x_frozen.iter().map(|xf| eval_scalar(&spec.benchmark, xf)).collect::<Result<_, _>>()?;
            }
            if needs(|i| matches!(i, IndexSpec::SobolTotalPf)) {
                s.complement_scalar = (0..d.p())
                    .map(|k| eval_scalar(&spec.benchmark, &d.complement(k)?))
                    .collect::<Result<_, _>>()?;
            }
            s.complements = Vec::new();
            Ok(s)
        }
    }
}

/// Index `spec` of input `k` on sample `s`.
fn index_value(spec: &IndexSpec, s: &Sample, k: usize, seed: RngSeed) -> Result<f64, Error> {
    let xk = || s.x.select(&ColumnSelector::single(k));
    match spec {
        IndexSpec::Dcor { alpha } => {
            let p = s.x.ncols();
            let data = s.x.hstack(&s.y)?;
            let out = ColumnSelector::new((p..p + s.y.ncols()).collect())?;
            Ok(dcor_index(&data, &[ColumnSelector::single(k)], &out, &DcovConfig::with_alpha(*alpha)?)?[0])
        }
        IndexSpec::Hsic { kernel_x, kernel_y } => {
            let p = s.x.ncols();
            let data = s.x.hstack(&s.y)?;
            let out = ColumnSelector::new((p..p + s.y.ncols()).collect())?;
            let cfg = HsicConfig::new(kernel_x.clone(), kernel_y.clone());
            Ok(hsic_index(&data, &[ColumnSelector::single(k)], &out, &cfg)?[0])
        }
        IndexSpec::Fdiv { choice } => fdiv_index(&s.x.column_vec(k), &s.y.column_vec(0), *choice),
        IndexSpec::MiKsg { k: neighbors } => {
            ksg_mi_blocks(&xk()?, &s.y, *neighbors, seed.derive(STREAM_KSG).derive(k as u64))
        }
        IndexSpec::SobolFirstPf => first_order_pf(s.y_scalar.as_ref().expect("scalar outputs drawn"), &s.frozen_scalar[k]),
        IndexSpec::SobolTotalPf => {
            total_effect_pf(s.y_scalar.as_ref().expect("scalar outputs drawn"), &s.complement_scalar[k])
        }
        IndexSpec::DcorPf => dcor_pick_freeze(&s.y, &s.frozen[k]),
        IndexSpec::HsicPf { kernel } => hsic_pick_freeze(&s.y, &s.frozen[k], kernel),
    }
}

/// Permutation statistic matching an index, with its two blocks for input `k`.
fn null_statistic(spec: &IndexSpec, s: &Sample, k: usize, seed: RngSeed) -> Result<Option<(Statistic, DataMatrix, DataMatrix)>, Error> {
    let xk = || s.x.select(&ColumnSelector::single(k));
    Ok(match spec {
        IndexSpec::Dcor { alpha } => Some((Statistic::Dcor(DcovConfig::with_alpha(*alpha)?), xk()?, s.y.clone())),
        IndexSpec::Hsic { kernel_x, kernel_y } => Some((
            Statistic::HsicR(HsicConfig::new(kernel_x.clone(), kernel_y.clone())),
            xk()?,
            s.y.clone(),
        )),
        IndexSpec::MiKsg { k: neighbors } => Some((
            Statistic::KsgMi {
                k: *neighbors,
                seed: seed.derive(STREAM_KSG).derive(k as u64),
            },
            xk()?,
            s.y.clone(),
        )),
        IndexSpec::DcorPf => Some((Statistic::DcorPickFreeze, s.y.clone(), s.frozen[k].clone())),
        IndexSpec::HsicPf { kernel } => Some((
            Statistic::HsicPickFreeze { kernel: kernel.clone() },
            s.y.clone(),
            s.frozen[k].clone(),
        )),
        IndexSpec::SobolFirstPf | IndexSpec::SobolTotalPf | IndexSpec::Fdiv { .. } => None,
    })
}

fn has_null(spec: &IndexSpec) -> bool {
    !matches!(spec, IndexSpec::SobolFirstPf | IndexSpec::SobolTotalPf | IndexSpec::Fdiv { .. })
}

fn screening_method(spec: &ScreeningSpec, seed: RngSeed) -> ScreeningMethod {
    let measure = |m: &Measure| match m {
        Measure::KsgMi { k, .. } => Measure::KsgMi { k: *k, seed },
        other => other.clone(),
    };
    match spec {
        ScreeningSpec::MaxRelevance { measure: m, m: size } => ScreeningMethod::MaxRelevance {
            measure: measure(m),
            m: *size,
        },
        ScreeningSpec::Mrmr { measure: m, m: size } => ScreeningMethod::Mrmr {
            measure: measure(m),
            m: *size,
        },
        ScreeningSpec::IterativeHsic { hsic, threshold, max_size } => ScreeningMethod::IterativeHsic {
            cfg: hsic.clone(),
            policy: threshold_policy(threshold, seed),
            max_size: *max_size,
        },
        ScreeningSpec::HsicLasso {
            lambda,
            kernel_x,
            kernel_y,
        } => ScreeningMethod::HsicLasso {
            lambda: *lambda,
            kernel_x: kernel_x.clone(),
            kernel_y: kernel_y.clone(),
        },
    }
}

fn run_replicate(cfg: &ExperimentConfig, data: &Data, r: usize, names: &[String]) -> Result<ReplicateOutput, ExperimentError> {
    let seed = cfg.seed.derive(r as u64);
    let sample = draw_sample(cfg, data, seed).map_err(runtime(format!("replicate {r}: drawing the sample")))?;
    let mut indices = Vec::with_capacity(cfg.indices.len());
    for (i, spec) in cfg.indices.iter().enumerate() {
        let label = spec.label();
        let values = (0..names.len())
            .into_par_iter()
            .map(|k| {
                let context = || format!("replicate {r}, index {label}, input {}", names[k]);
                let v = index_value(spec, &sample, k, seed).map_err(runtime(context()))?;
                if !v.is_finite() {
                    return Err(ExperimentError::Runtime {
                        context: context(),
                        source: Error::DegenerateSample(format!("non-finite value {v}")),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>, ExperimentError>>()?;
        let nulls = match cfg.permutation {
            Some(perm) if has_null(spec) => Some(
                (0..values.len())
                    .map(|k| {
                        let ctx = || format!("replicate {r}, index {label}, input {}: permutation null", names[k]);
                        let (stat, a, b) = null_statistic(spec, &sample, k, seed)
                            .map_err(runtime(ctx()))?
                            .expect("index has a null");
                        let null_seed = seed.derive(STREAM_NULL).derive(i as u64).derive(k as u64);
                        let null = permutation_test(&stat, &a, &b, perm.permutations, null_seed).map_err(runtime(ctx()))?;
                        Ok((quantile(&null.statistics, 1.0 - perm.level), null.p_value))
                    })
                    .collect::<Result<Vec<_>, ExperimentError>>()?,
            ),
            _ => None,
        };
        indices.push(IndexValues { values, nulls });
    }
    let screening = match &cfg.screening {
        None => None,
        Some(sc) => {
            let method = screening_method(&sc.spec, seed.derive(STREAM_SCREEN));
            let ctx = format!("replicate {r}, screening");
            let selected = method.select(&sample.x, &sample.y).map_err(runtime(ctx.clone()))?;
            let selection_probabilities = match sc.bootstrap {
                Some(b) => Some(
                    bootstrap_selection(&sample.x, &sample.y, &method, b, seed.derive(STREAM_BOOTSTRAP))
                        .map_err(runtime(ctx))?,
                ),
                None => None,
            };
            Some(ScreeningReplicate {
                selected,
                selection_probabilities,
            })
        }
    };
    Ok(ReplicateOutput { indices, screening })
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Data, Vec<String>), ExperimentError> {
    match &cfg.source {
        Source::Benchmark(spec) => {
            let (lows, highs) = spec.benchmark.bounds();
            let probe = sample_uniform(&lows, &highs, 1, RngSeed(0)).map_err(runtime("building the design"))?;
            Ok((Data::Benchmark(spec.clone()), probe.names().to_vec()))
        }
        Source::Csv {
            inputs_path,
            outputs_path,
            header,
        } => {
            let (x, y) = load_pair(&cfg.base_dir, inputs_path, outputs_path, *header).map_err(|message| {
                ExperimentError::Config(ConfigError { line: None, message })
            })?;
            let names = x.names().to_vec();
            Ok((Data::Csv(x, y), names))
        }
    }
}

/// Runs every replicate and assembles the report. Writes nothing.
pub fn compute(cfg: &ExperimentConfig) -> Result<Results, ExperimentError> {
    let start = Instant::now();
    let (data, names) = load_data(cfg)?;
    let outputs: Vec<ReplicateOutput> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, &data, r, &names))
        .collect::<Result<_, _>>()?;

    let indices = cfg
        .indices
        .iter()
        .enumerate()
        .map(|(i, spec)| IndexReport {
            label: spec.label(),
            spec: spec.clone(),
            inputs: names
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let values: Vec<f64> = outputs.iter().map(|o| o.indices[i].values[k]).collect();
                    let nulls: Option<Vec<(f64, f64)>> =
                        outputs.iter().map(|o| o.indices[i].nulls.as_ref().map(|v| v[k])).collect();
                    let level = cfg.permutation.map(|p| p.level).unwrap_or(DEFAULT_LEVEL);
                    InputReport {
                        input: name.clone(),
                        summary: Summary::of(&values),
                        values,
                        rejection_rate: nulls.as_ref().map(|v| {
                            v.iter().filter(|(_, pv)| *pv <= level).count() as f64 / v.len() as f64
                        }),
                        null_quantile: nulls.as_ref().map(|v| v.iter().map(|q| q.0).collect()),
                        p_values: nulls.as_ref().map(|v| v.iter().map(|q| q.1).collect()),
                    }
                })
                .collect(),
        })
        .collect();

    let screening = cfg.screening.as_ref().map(|sc| {
        let replicates: Vec<ScreeningReplicate> = outputs.iter().map(|o| o.screening.clone().expect("screening ran")).collect();
        let count = replicates.len() as f64;
        let selection_rate = (0..names.len())
            .map(|k| replicates.iter().filter(|s| s.selected.contains(&k)).count() as f64 / count)
            .collect();
        let mean_selection_probability = sc.bootstrap.map(|_| {
            (0..names.len())
                .map(|k| {
                    replicates
                        .iter()
                        .map(|s| s.selection_probabilities.as_ref().expect("bootstrap ran")[k])
                        .sum::<f64>()
                        / count
                })
                .collect()
        });
        ScreeningReport {
            replicates,
            selection_rate,
            mean_selection_probability,
        }
    });

    let mut notes = Vec::new();
    if cfg.permutation.is_some() {
        for spec in cfg.indices.iter().filter(|s| !has_null(s)) {
            notes.push(format!("no permutation null is computed for {}", spec.label()));
        }
    }
    Ok(Results {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        input_names: names,
        indices,
        screening,
        notes,
        metadata: Metadata {
            seed: cfg.seed.0,
            n: cfg.n,
            replicates: cfg.replicates,
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_line(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

/// Writes results.json, resolved_config.json, tables/*.csv and plotdata/*.csv.
pub fn write_report(results: &Results, out: &Path) -> Result<(), ExperimentError> {
    for dir in [out.to_path_buf(), out.join("tables"), out.join("plotdata")] {
        fs::create_dir_all(&dir).map_err(|source| ExperimentError::Output { path: dir.clone(), source })?;
    }
    write_file(&out.join("results.json"), &(results.to_json() + "\n"))?;
    write_file(&out.join("resolved_config.json"), &(to_json(&results.config, true) + "\n"))?;

    for index in &results.indices {
        let with_null = index.inputs.first().is_some_and(|i| i.rejection_rate.is_some());
        let mut header = vec!["input", "mean", "std_dev", "min", "q1", "median", "q3", "max", "whisker_low", "whisker_high"];
        if with_null {
            header.extend(["median_null_quantile", "rejection_rate"]);
        }
        let mut table = csv_line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        let mut box_data = csv_line(&["input", "whisker_low", "q1", "median", "q3", "whisker_high"].map(String::from));
        let mut values = csv_line(&["input", "replicate", "value"].map(String::from));
        for row in &index.inputs {
            let s = &row.summary;
            let mut cells = vec![row.input.clone()];
            cells.extend([s.mean, s.std_dev, s.min, s.q1, s.median, s.q3, s.max, s.whisker_low, s.whisker_high].map(fmt17));
            if let (Some(q), Some(rate)) = (&row.null_quantile, row.rejection_rate) {
                cells.push(fmt17(crate::stats::median(q)));
                cells.push(fmt17(rate));
            }
            table += &csv_line(&cells);
            let mut b = vec![row.input.clone()];
            b.extend([s.whisker_low, s.q1, s.median, s.q3, s.whisker_high].map(fmt17));
            box_data += &csv_line(&b);
            for (r, v) in row.values.iter().enumerate() {
                values += &csv_line(&[row.input.clone(), r.to_string(), fmt17(*v)]);
            }
        }
        write_file(&out.join("tables").join(format!("{}.csv", index.label)), &table)?;
        write_file(&out.join("plotdata").join(format!("{}_box.csv", index.label)), &box_data)?;
        write_file(&out.join("plotdata").join(format!("{}_values.csv", index.label)), &values)?;
    }

    if let Some(sc) = &results.screening {
        let mut table = csv_line(&["input", "selection_rate", "mean_selection_probability"].map(String::from));
        for (k, name) in results.input_names.iter().enumerate() {
            let mean = sc.mean_selection_probability.as_ref().map(|m| fmt17(m[k])).unwrap_or_default();
            table += &csv_line(&[name.clone(), fmt17(sc.selection_rate[k]), mean]);
        }
        write_file(&out.join("tables").join("screening.csv"), &table)?;
        let mut plot = csv_line(&["replicate", "input", "selected", "selection_probability"].map(String::from));
        for (r, rep) in sc.replicates.iter().enumerate() {
            for (k, name) in results.input_names.iter().enumerate() {
                let prob = rep.selection_probabilities.as_ref().map(|p| fmt17(p[k])).unwrap_or_default();
                let selected = if rep.selected.contains(&k) { "1" } else { "0" };
                plot += &csv_line(&[r.to_string(), name.clone(), selected.into(), prob]);
            }
        }
        write_file(&out.join("plotdata").join("screening.csv"), &plot)?;
    }
    Ok(())
}

/// Computes the experiment on the global thread pool and writes the report.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Results, ExperimentError> {
    let results = compute(cfg)?;
    write_report(&results, out)?;
    Ok(results)
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_in_pool(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<Results, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Runtime {
            context: "starting the worker pool".into(),
            source: Error::InvalidParameter(e.to_string()),
        })?;
    pool.install(|| run_experiment(cfg, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> std::result::Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml_str(text)
    }

    const MINIMAL: &str = "n = 200\nindices = [\"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n";

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.replicates, 1);
        assert_eq!(cfg.seed, RngSeed(0));
        assert_eq!(cfg.indices, vec![IndexSpec::Dcor { alpha: 1.0 }]);
        assert_eq!(cfg.source, Source::Benchmark(BenchmarkSpec::new(Benchmark::IshigamiEta3)));
    }

    #[test]
    fn permutation_defaults() {
        let cfg = parse(&format!("{MINIMAL}[permutation]\n")).unwrap();
        assert_eq!(
            cfg.permutation,
            Some(PermutationSpec {
                permutations: 199,
                level: 0.05
            })
        );
    }

    #[test]
    fn hsic_output_kernel_follows_output_kind() {
        let cfg = parse("n = 50\nindices = [\"hsic\", \"hsic_pf\"]\n[source]\nbenchmark = \"ishigami\"\nlevel_set = 10.0\n").unwrap();
        assert_eq!(
            cfg.indices[0],
            IndexSpec::Hsic {
                kernel_x: KernelSpec::gaussian(),
                kernel_y: KernelSpec::categorical()
            }
        );
        assert_eq!(cfg.indices[1], IndexSpec::HsicPf { kernel: KernelSpec::categorical() });
    }

    #[test]
    fn unknown_index_lists_valid_names() {
        let e = parse("n = 10\nindices = [\"dcor\", \"pearson\"]\n[source]\nbenchmark = \"ishigami\"\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        for name in INDEX_NAMES {
            assert!(e.message.contains(name), "{e}");
        }
    }

    #[test]
    fn unknown_field_is_reported_with_line() {
        let e = parse("n = 10\nindices = [\"dcor\"]\nrepeats = 3\n[source]\nbenchmark = \"ishigami\"\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("repeats"), "{e}");
    }

    #[test]
    fn pick_freeze_requires_benchmark() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.csv"), "a,b\n1,2\n3,4\n5,7\n").unwrap();
        fs::write(dir.path().join("y.csv"), "y\n1\n2\n3\n").unwrap();
        let text = "n = 3\nindices = [\"dcor_pf\"]\n[source]\ninputs_path = \"x.csv\"\noutputs_path = \"y.csv\"\n";
        let e = ExperimentConfig::from_toml_str_in(text, dir.path()).unwrap_err();
        assert!(e.message.contains("pick-and-freeze requires benchmark source"), "{e}");
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn csv_row_mismatch_names_both_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.csv"), "a\n1\n2\n3\n").unwrap();
        fs::write(dir.path().join("y.csv"), "y\n1\n2\n").unwrap();
        let text = "n = 2\nindices = [\"dcor\"]\n[source]\ninputs_path = \"x.csv\"\noutputs_path = \"y.csv\"\n";
        let e = ExperimentConfig::from_toml_str_in(text, dir.path()).unwrap_err();
        assert!(e.message.contains("x.csv") && e.message.contains("y.csv"), "{e}");
    }

    #[test]
    fn invalid_values_rejected() {
        for (text, needle) in [
            ("n = 1\nindices = [\"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n", "at least 2"),
            ("n = 10\nreplicates = 0\nindices = [\"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n", "replicates"),
            ("n = 10\nindices = [\"dcor\", \"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n", "twice"),
            ("n = 10\nindices = [{index = \"dcor\", alpha = 2.5}]\n[source]\nbenchmark = \"ishigami\"\n", "alpha"),
            ("n = 10\nindices = [\"dcor\"]\n[source]\nbenchmark = \"morris\"\n", "needs `k`"),
            ("n = 10\nindices = [\"dcor\"]\n[source]\nbenchmark = \"nope\"\n", "ishigami_eta3"),
            ("n = 10\nindices = [\"sobol_first_pf\"]\n[source]\nbenchmark = \"ishigami\"\nlevel_set = 1.0\n", "continuous"),
            ("n = 10\nindices = [{index = \"fdiv\", choice = \"renyi\"}]\n[source]\nbenchmark = \"ishigami\"\n", "hellinger"),
            ("n = 10\nindices = [\"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n[permutation]\nlevel = 1.5\n", "level"),
            ("n = 10\nindices = [\"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n[screening]\nmethod = \"lasso\"\n", "hsic_lasso"),
            ("n = 10\nindices = [\"dcor\"]\n[source]\nbenchmark = \"ishigami\"\n[screening]\nmethod = \"mrmr\"\nm = 9\n", "1..=3"),
            ("n = 10\nindices = [{index = \"hsic\", kernel_y = \"categorical\"}]\n[source]\nbenchmark = \"ishigami\"\n", "categorical"),
        ] {
            let e = parse(text).unwrap_err();
            assert!(e.message.contains(needle), "{text:?}: {e}");
            assert!(e.line.is_some(), "{text:?}: {e}");
        }
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = parse(MINIMAL).unwrap();
        let b = parse(&format!("output_dir = \"elsewhere\"\n{MINIMAL}")).unwrap();
        let c = parse(&format!("seed = 3\n{MINIMAL}")).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn floats_have_17_significant_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(-2.5), "-2.5000000000000000e0");
        for v in [0.1, 1.0 / 3.0, -7.25e-300, 123456.789] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
        let json = to_json(&vec![0.1f64], false);
        assert_eq!(json, "[1.0000000000000001e-1]");
    }

    #[test]
    fn replicate_values_do_not_depend_on_replicate_count() {
        let text = |reps: usize| {
            format!("n = 40\nreplicates = {reps}\nseed = 5\nindices = [\"dcor\", \"sobol_first_pf\", \"hsic_pf\"]\n[source]\nbenchmark = \"ishigami\"\n")
        };
        let small = compute(&parse(&text(2)).unwrap()).unwrap();
        let large = compute(&parse(&text(5)).unwrap()).unwrap();
        for (a, b) in small.indices.iter().zip(&large.indices) {
            for (ia, ib) in a.inputs.iter().zip(&b.inputs) {
                assert_eq!(ia.values[..], ib.values[..2]);
            }
        }
    }

    #[test]
    fn report_files_written() {
        let text = "n = 30\nreplicates = 3\nindices = [\"dcor\", \"hsic\", \"mi_ksg\", \"fdiv\", \"sobol_total_pf\"]\n\
                    [source]\nbenchmark = \"ishigami\"\n[permutation]\npermutations = 9\n\
                    [screening]\nmethod = \"mrmr\"\nm = 2\nbootstrap = 3\n";
        let cfg = parse(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let results = run_experiment(&cfg, dir.path()).unwrap();
        for f in [
            "results.json",
            "resolved_config.json",
            "tables/dcor.csv",
            "tables/fdiv_kl_neg_log.csv",
            "tables/screening.csv",
            "plotdata/hsic_box.csv",
            "plotdata/mi_ksg_values.csv",
            "plotdata/screening.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let dcor = &results.indices[0];
        assert_eq!(dcor.inputs.len(), 3);
        assert_eq!(dcor.inputs[0].values.len(), 3);
        assert_eq!(dcor.inputs[0].null_quantile.as_ref().unwrap().len(), 3);
        assert!(results.indices[3].inputs[0].null_quantile.is_none());
        assert_eq!(results.notes.len(), 2);
        let sc = results.screening.as_ref().unwrap();
        assert!(sc.replicates.iter().all(|r| r.selected.len() == 2));
        let table = fs::read_to_string(dir.path().join("tables/dcor.csv")).unwrap();
        assert_eq!(table.lines().count(), 4);
        let json = fs::read_to_string(dir.path().join("results.json")).unwrap();
        let last_field = json.lines().rev().find(|l| l.contains(':')).unwrap();
        assert!(last_field.contains("wall_time_seconds"), "{last_field}");
    }

    #[test]
    fn csv_source_subsamples_rows() {
        let dir = tempfile::tempdir().unwrap();
        let x = sample_uniform(&[0.0, 0.0], &[1.0, 1.0], 60, RngSeed(1)).unwrap();
        let y: Vec<f64> = (0..60).map(|i| x.values()[[i, 0]] * 3.0).collect();
        crate::data::write_csv(&x, dir.path().join("x.csv")).unwrap();
        crate::data::write_csv(&DataMatrix::from_column(&y).unwrap(), dir.path().join("y.csv")).unwrap();
        let text = "n = 40\nreplicates = 4\nindices = [\"dcor\"]\n[source]\ninputs_path = \"x.csv\"\noutputs_path = \"y.csv\"\n";
        let cfg = ExperimentConfig::from_toml_str_in(text, dir.path()).unwrap();
        let res = compute(&cfg).unwrap();
        let x1 = &res.indices[0].inputs[0];
        assert!(x1.values.iter().all(|&v| v > 0.99));
        assert!(res.indices[0].inputs[1].summary.median < 0.5);
        assert_ne!(x1.values[0], x1.values[1]);
    }
}
