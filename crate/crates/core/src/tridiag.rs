//! Thomas elimination for the implicit diffusion matrix `I - dt nu A^n`.
//!
//! The Neumann corner rows (`-2c` off-diagonals in the first and last row) keep
//! the matrix tridiagonal, so plain elimination applies. For dt, nu > 0 the
//! matrix is strictly diagonally dominant and no pivoting is needed.

use crate::error::{Error, Result};

/// Solve `T x = rhs`, where row i of `T` is `(lower[i], diag[i], upper[i])`.
/// `lower[0]` and `upper[m-1]` are ignored.
pub fn solve_tridiagonal_corner(
    diag: &[f64],
    upper: &[f64],
    lower: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let fac = TridiagonalFactor::new(diag, upper, lower)?;
    let mut x = rhs.to_vec();
    fac.solve_in_place(&mut x);
    Ok(x)
}

/// Forward-elimination coefficients of a tridiagonal matrix, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    /// Modified super-diagonal c'_i.
    upper_mod: Vec<f64>,
    /// Reciprocal pivots 1 / (b_i - a_i c'_{i-1}).
    inv_pivot: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(diag: &[f64], upper: &[f64], lower: &[f64]) -> Result<Self> {
        let m = diag.len();
        if upper.len() != m || lower.len() != m {
            return Err(Error::param(
                "tridiagonal",
                "diagonal, upper and lower bands must have equal length",
            ));
        }
        let mut upper_mod = vec![0.0; m];
        let mut inv_pivot = vec![0.0; m];
        let mut prev = 0.0;
        for i in 0..m {
            let a = if i == 0 { 0.0 } else { lower[i] };
            let pivot = diag[i] - a * prev;
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::ZeroPivot(i));
            }
            inv_pivot[i] = 1.0 / pivot;
            prev = if i + 1 < m { upper[i] / pivot } else { 0.0 };
            upper_mod[i] = prev;
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper_mod,
            inv_pivot,
        })
    }

    /// `I - dt nu A^n` on n + 1 nodes, given `c = dt nu n^2`.
    pub fn implicit_diffusion(n: usize, c: f64) -> Result<Self> {
        let m = n + 1;
        let mut diag = vec![1.0 + 2.0 * c; m];
        let mut upper = vec![-c; m];
        let mut lower = vec![-c; m];
        upper[0] = -2.0 * c;
        lower[n] = -2.0 * c;
        lower[0] = 0.0;
        upper[n] = 0.0;
        if n == 0 {
            diag[0] = 1.0;
        }
        Self::new(&diag, &upper, &lower)
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let m = self.inv_pivot.len();
        debug_assert_eq!(x.len(), m);
        let mut prev = 0.0;
        for i in 0..m {
            let a = if i == 0 { 0.0 } else { self.lower[i] };
            let v = (x[i] - a * prev) * self.inv_pivot[i];
            x[i] = v;
            prev = v;
        }
        for i in (0..m.saturating_sub(1)).rev() {
            x[i] -= self.upper_mod[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let m = 5;
        let rhs = vec![1.0, -2.0, 3.5, 0.0, 7.0];
        let x = solve_tridiagonal_corner(&vec![1.0; m], &vec![0.0; m], &vec![0.0; m], &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let err = solve_tridiagonal_corner(&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(err.unwrap_err(), Error::ZeroPivot(0));
    }

    #[test]
    fn implicit_diffusion_preserves_constants() {
        let fac = TridiagonalFactor::implicit_diffusion(16, 3.7).unwrap();
        let mut x = vec![2.5; 17];
        fac.solve_in_place(&mut x);
        for v in x {
            assert!((v - 2.5).abs() < 1e-14);
        }
    }
}
