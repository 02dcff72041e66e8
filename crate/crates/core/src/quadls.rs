//! Quadratic least-squares closure.
//!
//! The quadratic form `aᵀ C a` is folded into a linear map acting on the
//! vector of pairwise products `ã`, whose block `i` is `a_i (a_1, …, a_i)`.
//! Off-diagonal products appear once; any symmetric factor is absorbed into
//! the fitted operator columns.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{lstsq, DenseMatrix};

/// Number of pairwise products for `r` reduced coefficients.
#[inline]
pub const fn quad_dim(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Pairwise products `ã(a)` of a reduced coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCoeffVector {
    values: Vec<f64>,
    r: usize,
}

impl QuadCoeffVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Writes the pairwise products of `a` into `out` (length `r(r+1)/2`).
#[inline]
pub(crate) fn pairwise_products_into(a: &[f64], out: &mut [f64]) {
    let mut k = 0;
    for i in 0..a.len() {
        for j in 0..=i {
            out[k] = a[i] * a[j];
            k += 1;
        }
    }
}

pub fn pairwise_products(a: &[f64]) -> Result<QuadCoeffVector> {
    if a.is_empty() {
        return Err(invalid!("pairwise_products needs at least one coefficient"));
    }
    let mut values = alloc::vec![0.0; quad_dim(a.len())];
    pairwise_products_into(a, &mut values);
    Ok(QuadCoeffVector { values, r: a.len() })
}

/// The discrete operator `Ĉ`, one row per degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadOperatorLs {
    matrix: DenseMatrix,
    r: usize,
}

impl QuadOperatorLs {
    pub fn from_matrix(matrix: DenseMatrix, r: usize) -> Result<Self> {
        if matrix.cols() != quad_dim(r) {
            return Err(invalid!(
                "operator has {} columns, r = {} needs {}",
                matrix.cols(),
                r,
                quad_dim(r)
            ));
        }
        Ok(Self { matrix, r })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `τ = Ĉ ã(a)`.
    pub fn eval(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.r {
            return Err(invalid!("{} coefficients for an operator with r = {}", a.len(), self.r));
        }
        let q = pairwise_products(a)?;
        self.matrix.matvec(q.values())
    }
}

/// Correction `Ĉ ã(a)` predicted by a fitted operator.
pub fn eval_correction_ls(op: &QuadOperatorLs, a: &[f64]) -> Result<Vec<f64>> {
    op.eval(a)
}

/// Fits `Ĉ` minimizing `Σ_j ‖τ_j − Ĉ ã_j‖²`.
///
/// `corrections` has one row per snapshot. The whole stacked system
/// `Ã Ĉᵀ ≈ T` is solved with a single factorization of `Ã`.
pub fn fit_quad_ls(corrections: &DenseMatrix, quad_coeffs: &[QuadCoeffVector]) -> Result<QuadOperatorLs> {
    if corrections.rows() != quad_coeffs.len() {
        return Err(invalid!(
            "{} corrections but {} coefficient vectors",
            corrections.rows(),
            quad_coeffs.len()
        ));
    }
    let r = quad_coeffs
        .first()
        .map(|q| q.r)
        .ok_or_else(|| invalid!("fit_quad_ls needs at least one snapshot"))?;
    if quad_coeffs.iter().any(|q| q.r != r) {
        return Err(invalid!("coefficient vectors disagree on r"));
    }
    let rows: Vec<&[f64]> = quad_coeffs.iter().map(|q| q.values()).collect();
    let a_tilde = DenseMatrix::from_rows(&rows)?;
    let c_t = lstsq(&a_tilde, corrections)?;
    QuadOperatorLs::from_matrix(c_t.transpose(), r)
}
