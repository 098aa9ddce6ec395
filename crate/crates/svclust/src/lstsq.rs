//! Rank-revealing least squares via column-pivoted Householder QR.
//!
//! One factorization supports everything the estimators need: coefficient
//! solves, residual projection y − X(X'X)⁻¹X'y (two thin-Q products, reused
//! thousands of times inside the bootstrap), (X'X)⁻¹, and leverage values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::Real;

/// A factored full-column-rank design matrix.
pub struct LeastSquares<T: Real> {
    /// Thin orthonormal factor, N × k.
    q: DMatrix<T>,
    /// Upper triangular factor of the column-permuted design, k × k.
    r: DMatrix<T>,
    /// `inv_perm[a] = j` when permuted column `a` is original column `j`.
    inv_perm: Vec<usize>,
    n: usize,
    k: usize,
}

impl<T: Real> LeastSquares<T> {
    /// Factor `x`, failing with the offending column if it is rank deficient.
    ///
    /// Rank tolerance is eps · max(N, k) · ‖X‖, with ‖X‖ read off the largest
    /// pivoted column norm, so fixed-effect dummy blocks are handled
    /// deterministically.
    pub fn new(x: &DMatrix<T>) -> Result<Self> {
        let (n, k) = x.shape();
        if k == 0 || n < k {
            return Err(Error::InvalidData(format!(
                "cannot factor a {n}×{k} design: need N >= k >= 1"
            )));
        }
        let qr = x.clone().col_piv_qr();
        let q = qr.q();
        let r = qr.r();
        let p = qr.p();

        // Recover the permutation: inv_permute_rows matches the ordering the
        // solver applies to recover coefficients in original column order.
        let mut idx = DVector::<usize>::from_iterator(k, 0..k);
        p.inv_permute_rows(&mut idx);
        let inv_perm: Vec<usize> = idx.iter().copied().collect();

        let norm = r[(0, 0)].abs();
        let tol = T::default_epsilon() * T::of(n.max(k) as f64) * norm;
        for a in 0..k {
            if r[(a, a)].abs() <= tol {
                // Position `a` of the pivoted system is original column
                // sigma(a); invert the stored inverse permutation.
                let mut sigma = vec![0usize; k];
                for (pos, &orig) in inv_perm.iter().enumerate() {
                    sigma[orig] = pos;
                }
                let column = sigma.iter().position(|&s| s == a).unwrap_or(a);
                return Err(Error::RankDeficient { column });
            }
        }

        Ok(Self { q, r, inv_perm, n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Least-squares coefficients for outcome `y`.
    pub fn solve(&self, y: &DVector<T>) -> DVector<T> {
        let mut gamma = self.q.tr_mul(y);
        self.r.solve_upper_triangular_mut(&mut gamma);
        let mut beta = DVector::zeros(self.k);
        for a in 0..self.k {
            beta[self.inv_perm[a]] = gamma[a];
        }
        beta
    }

    /// Residuals y − X β̂ without forming β̂.
    pub fn residualize(&self, y: &DVector<T>) -> DVector<T> {
        let mut out = y.clone();
        let mut coeff = DVector::zeros(self.k);
        self.residualize_into(y, &mut coeff, &mut out);
        out
    }

    /// Allocation-free residual projection for hot loops.
    ///
    /// `coeff` must have length k and `out` length N; `out` may not alias `y`.
    pub fn residualize_into(&self, y: &DVector<T>, coeff: &mut DVector<T>, out: &mut DVector<T>) {
        coeff.gemv_tr(T::one(), &self.q, y, T::zero());
        out.copy_from(y);
        out.gemv(-T::one(), &self.q, coeff, T::one());
    }

    /// (X'X)⁻¹ from the triangular factor.
    pub fn xtx_inv(&self) -> DMatrix<T> {
        let mut rinv = DMatrix::identity(self.k, self.k);
        for j in 0..self.k {
            let mut col = rinv.column_mut(j);
            self.r.solve_upper_triangular_mut(&mut col);
        }
        let m = &rinv * rinv.transpose();
        let mut out = DMatrix::zeros(self.k, self.k);
        for a in 0..self.k {
            for b in 0..self.k {
                out[(self.inv_perm[a], self.inv_perm[b])] = m[(a, b)];
            }
        }
        out
    }

    /// Diagonal of the hat matrix X(X'X)⁻¹X' (row norms of thin Q).
    pub fn leverage(&self) -> DVector<T> {
        DVector::from_fn(self.n, |i, _| self.q.row(i).norm_squared())
    }
}
