//! Dependence-measure sensitivity analysis for computer-model outputs.

pub mod data;
pub mod dcor;
pub mod error;
pub mod hsic;
pub mod kernels;
pub mod rng;

pub use data::{ColumnKind, ColumnSelector, DataMatrix};
pub use error::{Error, Result};
pub use rng::RngSeed;
pub mod fdiv;
pub mod stats;
pub mod permutation;
pub mod benchmarks;
pub mod sobol;
pub mod lasso;
pub mod screening;
pub mod experiment;
