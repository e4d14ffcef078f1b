//! Pick-and-freeze estimators of first-order and total Sobol indices.

use crate::data::{check_bounds, sample_uniform, DataMatrix};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Base design plus, for each input `k`, a copy sharing column `k` with the
/// base and redrawing every other column.
#[derive(Debug, Clone, PartialEq)]
pub struct PickFreezeDesign {
    pub x_base: DataMatrix,
    pub x_frozen: Vec<DataMatrix>,
    pub seed: RngSeed,
    lows: Vec<f64>,
    highs: Vec<f64>,
}

fn splice(base: &DataMatrix, fresh: &DataMatrix, keep: impl Fn(usize) -> bool) -> Result<DataMatrix> {
    let mut v = fresh.values().to_owned();
    for j in 0..base.ncols() {
        if keep(j) {
            v.column_mut(j).assign(&base.column(j));
        }
    }
    DataMatrix::with_names(v, base.names().to_vec())
}

impl PickFreezeDesign {
    pub fn n(&self) -> usize {
        self.x_base.nrows()
    }

    pub fn p(&self) -> usize {
        self.x_base.ncols()
    }

    /// Design sharing every column except `k` with the base; column `k`
    /// redrawn. Used for total effects.
    pub fn complement(&self, k: usize) -> Result<DataMatrix> {
        if k >= self.p() {
            return Err(Error::InvalidSelector(format!("input {k} out of range for p = {}", self.p())));
        }
        let fresh = sample_uniform(&self.lows, &self.highs, self.n(), self.seed.derive(2).derive(k as u64))?;
        splice(&self.x_base, &fresh, |j| j != k)
    }
}

/// Pick-and-freeze design on the box `[lows, highs)`.
pub fn build_pick_freeze(lows: &[f64], highs: &[f64], n: usize, seed: RngSeed) -> Result<PickFreezeDesign> {
    check_bounds(lows, highs)?;
    let x_base = sample_uniform(lows, highs, n, seed.derive(0))?;
    let x_frozen = (0..lows.len())
        .map(|k| {
            let fresh = sample_uniform(lows, highs, n, seed.derive(1).derive(k as u64))?;
            splice(&x_base, &fresh, |j| j == k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PickFreezeDesign {
        x_base,
        x_frozen,
        seed,
        lows: lows.to_vec(),
        highs: highs.to_vec(),
    })
}

/// Pooled-mean moments of a pick-and-freeze pair: `(cov, var)`.
fn pooled_moments(y: &[f64], yf: &[f64]) -> Result<(f64, f64)> {
    if y.len() != yf.len() {
        return Err(Error::SizeMismatch(y.len(), yf.len()));
    }
    if y.len() < 2 {
        return Err(Error::Empty("pick-and-freeze needs n >= 2".into()));
    }
    let n = y.len() as f64;
    let m = (y.iter().sum::<f64>() + yf.iter().sum::<f64>()) / (2.0 * n);
    let (mut cov, mut var) = (0.0, 0.0);
    for (&a, &b) in y.iter().zip(yf) {
        let (da, db) = (a - m, b - m);
        cov += da * db;
        var += 0.5 * (da * da + db * db);
    }
    Ok((cov / n, var / n))
}

/// Covariance `Cov(Y, Y_{X^k})` with the pooled mean.
pub fn pick_freeze_covariance(y: &[f64], y_frozen: &[f64]) -> Result<f64> {
    Ok(pooled_moments(y, y_frozen)?.0)
}

/// First-order index `Cov(Y, Y_{X^k}) / Var(Y)`; not clamped.
pub fn first_order_pf(y: &[f64], y_frozen: &[f64]) -> Result<f64> {
    let (cov, var) = pooled_moments(y, y_frozen)?;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(cov / var)
}

/// Total effect `1 - Cov(Y, Y_{X^{-k}}) / Var(Y)` from the complement design.
pub fn total_effect_pf(y: &[f64], y_frozen_all_but_k: &[f64]) -> Result<f64> {
    Ok(1.0 - first_order_pf(y, y_frozen_all_but_k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (crate::stats::mean(a), crate::stats::mean(b));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn single_input_frozen_equals_base() {
        let d = build_pick_freeze(&[0.0], &[1.0], 20, RngSeed(1)).unwrap();
        assert_eq!(d.x_frozen[0], d.x_base);
    }

    #[test]
    fn frozen_column_copied_others_redrawn() {
        let d = build_pick_freeze(&[0.0; 4], &[1.0; 4], 1000, RngSeed(2)).unwrap();
        for k in 0..4 {
            let f = &d.x_frozen[k];
            assert_eq!(f.column(k), d.x_base.column(k));
            for j in (0..4).filter(|&j| j != k) {
                let differ = (0..1000).filter(|&i| f.values()[[i, j]] != d.x_base.values()[[i, j]]).count();
                assert!(differ >= 990);
                assert!(pearson(&f.column_vec(j), &d.x_base.column_vec(j)).abs() <= 0.1);
            }
            let c = d.complement(k).unwrap();
            for j in 0..4 {
                if j == k {
                    assert!(pearson(&c.column_vec(j), &d.x_base.column_vec(j)).abs() <= 0.1);
                } else {
                    assert_eq!(c.column(j), d.x_base.column(j));
                }
            }
        }
    }

    #[test]
    fn design_is_deterministic() {
        let a = build_pick_freeze(&[0.0; 3], &[1.0; 3], 10, RngSeed(3)).unwrap();
        let b = build_pick_freeze(&[0.0; 3], &[1.0; 3], 10, RngSeed(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.complement(1).unwrap(), b.complement(1).unwrap());
    }

    #[test]
    fn invalid_bounds() {
        assert!(matches!(
            build_pick_freeze(&[1.0], &[0.0], 5, RngSeed(0)),
            Err(Error::InvalidBounds { .. })
        ));
    }

    #[test]
    fn constant_output_has_zero_variance() {
        assert!(matches!(first_order_pf(&[2.0; 5], &[2.0; 5]), Err(Error::ZeroVariance)));
        assert!(matches!(total_effect_pf(&[2.0; 5], &[2.0; 5]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn independent_pair_within_clt_band() {
        let n = 10_000;
        let a = sample_uniform(&[0.0], &[1.0], n, RngSeed(5)).unwrap().column_vec(0);
        let b = sample_uniform(&[0.0], &[1.0], n, RngSeed(6)).unwrap().column_vec(0);
        assert!(first_order_pf(&a, &b).unwrap().abs() <= 3.0 / (n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn self_pair_is_one(v in proptest::collection::vec(-1e3f64..1e3, 2..60)) {
            prop_assume!(v.iter().any(|x| *x != v[0]));
            prop_assert!((first_order_pf(&v, &v).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}
