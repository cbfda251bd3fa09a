//! Critic feature matrices `Φ` (row `s` is `φ(s)ᵀ`).

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::mdp::seeded_rng;

pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CriticFeatures {
    matrix: DMatrix<f64>,
    /// Relative tolerance on `σ_min / σ_max` for the rank certificate.
    pub rank_tol: f64,
    /// Require `‖φ(s)‖ ≤ 1` for every state.
    pub norm_bounded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `σ_min / σ_max`.
    pub ratio: f64,
    pub full_column_rank: bool,
    /// `None` unless the norm-bound flag is set.
    pub norm_bound_ok: Option<bool>,
}

impl CriticFeatures {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.nrows() == 0 {
            return Err(Error::Features("empty feature matrix".into()));
        }
        if matrix.ncols() > matrix.nrows() {
            return Err(Error::Features(format!(
                "m = {} exceeds n = {}",
                matrix.ncols(),
                matrix.nrows()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Features("non-finite feature entry".into()));
        }
        Ok(CriticFeatures {
            matrix,
            rank_tol: DEFAULT_RANK_TOL,
            norm_bounded: false,
        })
    }

    pub fn with_norm_bound(mut self, flag: bool) -> Self {
        self.norm_bounded = flag;
        self
    }

    /// `Φ = I_n`.
    pub fn tabular(n: usize) -> Self {
        CriticFeatures::new(DMatrix::identity(n, n))
            .expect("identity features")
            .with_norm_bound(true)
    }

    /// Gaussian `n × m` columns, orthonormalized (rows then have norm ≤ 1).
    pub fn orthonormal_gaussian(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m > n {
            return Err(Error::Features(format!("m = {m} exceeds n = {n}")));
        }
        let mut rng = seeded_rng(seed);
        let g = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        Ok(CriticFeatures::new(q.columns(0, m).into_owned())?.with_norm_bound(true))
    }

    /// Two columns `(1, s/(n−1))/√2`: spans constants and a linear ramp
    /// only, so generic value functions fall outside it.
    pub fn affine_ramp(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Features("affine ramp needs n ≥ 2".into()));
        }
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let m = DMatrix::from_fn(n, 2, |s, j| {
            if j == 0 {
                c
            } else {
                c * s as f64 / (n - 1) as f64
            }
        });
        Ok(CriticFeatures::new(m)?.with_norm_bound(true))
    }

    /// Appends one column, e.g. a value function to close the span.
    pub fn with_column(&self, col: &DVector<f64>) -> Result<Self> {
        let m = self.matrix.clone().insert_column(self.dim(), 0.0);
        let mut m = m;
        m.set_column(self.dim(), col);
        let mut out = CriticFeatures::new(m)?;
        out.rank_tol = self.rank_tol;
        Ok(out)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// `φ(s)` as a vector.
    pub fn phi(&self, s: usize) -> DVector<f64> {
        self.matrix.row(s).transpose()
    }

    /// `φ(s)ᵀω` without dimension checks; hot-loop form.
    #[inline]
    pub(crate) fn dot(&self, s: usize, omega: &DVector<f64>) -> f64 {
        self.matrix.row(s).iter().zip(omega.iter()).map(|(a, b)| a * b).sum()
    }

    /// `V_ω(s) = φ(s)ᵀω`.
    pub fn value_of(&self, omega: &DVector<f64>, s: usize) -> Result<f64> {
        if omega.len() != self.dim() {
            return Err(Error::Dimension {
                what: "omega",
                expected: self.dim(),
                got: omega.len(),
            });
        }
        if s >= self.n_states() {
            return Err(Error::OutOfRange {
                what: "state",
                index: s,
                limit: self.n_states(),
            });
        }
        Ok(self.dot(s, omega))
    }

    /// Full-column-rank certificate from singular values.
    pub fn check_rank(&self) -> RankReport {
        let sv = singular_values(&self.matrix);
        let sigma_max = sv.first().copied().unwrap_or(0.0);
        let sigma_min = sv.last().copied().unwrap_or(0.0);
        let cut = self.rank_tol * sigma_max;
        let rank = sv.iter().filter(|v| **v > cut).count();
        let ratio = if sigma_max > 0.0 { sigma_min / sigma_max } else { 0.0 };
        let norm_bound_ok = self.norm_bounded.then(|| {
            self.matrix
                .row_iter()
                .all(|r| r.norm() <= 1.0 + 1e-12)
        });
        RankReport {
            rank,
            sigma_min,
            sigma_max,
            ratio,
            full_column_rank: rank == self.dim() && sigma_min > cut,
            norm_bound_ok,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_full_rank() {
        let r = CriticFeatures::tabular(4).check_rank();
        assert!(r.full_column_rank);
        assert_eq!(r.rank, 4);
        assert!((r.ratio - 1.0).abs() < 1e-15);
        assert_eq!(r.norm_bound_ok, Some(true));
    }

    #[test]
    fn duplicated_column_fails() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.5, 0.5]);
        let r = CriticFeatures::new(m).unwrap().check_rank();
        assert!(!r.full_column_rank);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn too_many_columns_rejected() {
        assert!(CriticFeatures::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn value_of_zero_and_identity() {
        let f = CriticFeatures::tabular(3);
        let v = DVector::from_vec(vec![1.5, -2.0, 4.0]);
        for s in 0..3 {
            assert_eq!(f.value_of(&DVector::zeros(3), s).unwrap(), 0.0);
            assert_eq!(f.value_of(&v, s).unwrap(), v[s]);
        }
        assert!(f.value_of(&DVector::zeros(2), 0).is_err());
    }

    #[test]
    fn orthonormal_rows_are_bounded() {
        let f = CriticFeatures::orthonormal_gaussian(8, 3, 5).unwrap();
        let r = f.check_rank();
        assert!(r.full_column_rank);
        assert!((r.ratio - 1.0).abs() < 1e-12);
        assert_eq!(r.norm_bound_ok, Some(true));
    }

    #[test]
    fn ramp_has_rank_two() {
        let r = CriticFeatures::affine_ramp(5).unwrap().check_rank();
        assert!(r.full_column_rank);
        assert_eq!(r.rank, 2);
    }
}
