//! Small dense linear-algebra helpers over `nalgebra`.
//!
//! Every instance handled by this crate is desk-sized (tens of states), so
//! dense LU with partial pivoting and dense eigensolvers are used throughout.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition numbers above this threshold attach a warning to oracle output.
pub const COND_WARN: f64 = 1e12;

/// Result of a checked linear solve.
#[derive(Debug, Clone)]
pub struct Solved {
    pub x: DVector<f64>,
    /// 1-norm condition number estimate of the system matrix.
    pub cond: f64,
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(Error::Singular {
            context,
            cond: f64::INFINITY,
        })
}

/// Solves `a x = b` and reports the 1-norm condition number of `a`.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<Solved> {
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::Singular {
        context,
        cond: f64::INFINITY,
    })?;
    let cond = norm_1(a) * norm_1(&inv);
    let x = lu.solve(b).ok_or(Error::Singular { context, cond })?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular { context, cond });
    }
    Ok(Solved { x, cond })
}

/// Matrix 1-norm (max absolute column sum).
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Full (complex) spectrum of a general square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.complex_eigenvalues().iter().copied().collect()
}

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Weighted squared norm `Σ w_i v_i²`.
pub fn weighted_sq_norm(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter().zip(w.iter()).map(|(x, wi)| wi * x * x).sum()
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_identity() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = solve_checked(&a, &b, "test").unwrap();
        assert_eq!(s.x, b);
        assert!((s.cond - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_checked(&a, &b, "t"), Err(Error::Singular { .. })));
    }

    #[test]
    fn rotation_spectrum_is_imaginary() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&a);
        assert_eq!(ev.len(), 2);
        for z in ev {
            assert!(z.re.abs() < 1e-12);
            assert!((z.im.abs() - 1.0).abs() < 1e-12);
        }
    }
}
