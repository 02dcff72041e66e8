//! Dense row-major matrices, thin SVD by one-sided Jacobi rotations, and
//! minimum-norm least squares.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{invalid, Error, Result};
use crate::math::{dot, norm2, sqrt};

/// Maximum number of Jacobi sweeps before reporting non-convergence.
pub const SVD_MAX_SWEEPS: usize = 60;
/// Relative orthogonality threshold between column pairs.
pub const SVD_TOLERANCE: f64 = 1e-14;
/// Singular values below `LSTSQ_CUTOFF * s_max` are treated as zero.
pub const LSTSQ_CUTOFF: f64 = 1e-12;

/// A dense matrix of finite `f64` values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, checking the length and that
    /// every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix whose rows are the given slices.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid!("row {} has length {}, expected {}", i, r.len(), cols));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Builds a matrix whose columns are the given slices.
    pub fn from_columns<C: AsRef<[f64]>>(cols: &[C]) -> Result<Self> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(invalid!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(invalid!(
                "vector of length {} does not match {} columns",
                x.len(),
                self.cols
            ));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Transposed matrix-vector product `selfᵀ * y`.
    pub fn matvec_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(invalid!(
                "vector of length {} does not match {} rows",
                y.len(),
                self.rows
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Keeps the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        let n = n.min(self.cols);
        Self::from_fn(self.rows, n, |i, j| self[(i, j)])
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(invalid!("shape mismatch in subtraction"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// `U` is `m x k`, `V` is `n x k` with `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// Rebuilds `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, k) = self.u.shape();
        let n = self.v.rows();
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..k).map(|l| self.u[(i, l)] * self.s[l] * self.v[(j, l)]).sum()
        })
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Singular values come out sorted non-increasing. Each column of `U` has its
/// largest-magnitude entry non-negative (lowest index wins ties); the matching
/// column of `V` is flipped with it. Columns of `U` belonging to numerically
/// zero singular values are completed to an orthonormal set.
pub fn thin_svd(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(invalid!("thin_svd needs a non-empty matrix, got {}x{}", m, n));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("thin_svd input has non-finite entries"));
    }
    if m >= n {
        let (scaled, s, v) = jacobi_tall(a)?;
        let (mut u, s, mut v) = sort_and_normalize(scaled, s, v);
        fix_signs(&mut u, &mut v);
        Ok(Svd { u, s, v })
    } else {
        // Aᵀ = W Vᵀ diag-scaled: the rotated columns are A's right factor.
        let (scaled, s, ut) = jacobi_tall(&a.transpose())?;
        let (mut v, s, mut u) = sort_and_normalize(scaled, s, ut);
        fix_signs(&mut u, &mut v);
        Ok(Svd { u, s, v })
    }
}

/// One-sided Jacobi on a matrix with `rows >= cols`. Returns `(U, s, V)`
/// unsorted.
fn jacobi_tall(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    // Row j of `work` is column j of A, row j of `vt` is column j of V.
    let mut work = a.transpose().data;
    let mut vt = DenseMatrix::identity(n).data;
    let norm = a.frobenius_norm();
    let floor = (SVD_TOLERANCE * norm) * (SVD_TOLERANCE * norm);

    let mut converged = false;
    for _sweep in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = &work[p * m..(p + 1) * m];
                    let cq = &work[q * m..(q + 1) * m];
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma.abs() <= floor || gamma.abs() <= SVD_TOLERANCE * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate_rows(&mut work, m, p, q, c, s);
                rotate_rows(&mut vt, n, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi SVD did not converge within {} sweeps",
            SVD_MAX_SWEEPS
        )));
    }

    let s: Vec<f64> = (0..n).map(|j| norm2(&work[j * m..(j + 1) * m])).collect();
    let u = DenseMatrix { rows: n, cols: m, data: work }.transpose();
    let v = DenseMatrix { rows: n, cols: n, data: vt }.transpose();
    Ok((u, s, v))
}

#[inline]
fn rotate_rows(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * len);
    let rp = &mut head[p * len..(p + 1) * len];
    let rq = &mut tail[..len];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Sorts raw Jacobi output by decreasing singular value and normalizes the
/// rotated columns `scaled = X diag(s)`; numerically null columns are
/// replaced by an orthonormal completion. Returns `(X, s, other)`.
fn sort_and_normalize(scaled: DenseMatrix, s: Vec<f64>, other: DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let m = scaled.rows();
    let n = other.rows();
    let k = s.len();

    let mut order: Vec<usize> = (0..k).collect();
    // Stable: equal singular values keep their index order.
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(core::cmp::Ordering::Equal));

    let s_max = order.first().map_or(0.0, |&i| s[i]);
    let small = s_max * (m.max(n) as f64) * f64::EPSILON;

    let mut x_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut o_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut s_sorted = Vec::with_capacity(k);
    let mut next_canonical = 0usize;
    for &j in &order {
        let mut xc = scaled.column(j);
        let sj = s[j];
        if sj > small && sj > 0.0 {
            for x in xc.iter_mut() {
                *x /= sj;
            }
        } else {
            xc = complete_basis(&x_cols, m, &mut next_canonical, &xc, sj);
        }
        x_cols.push(xc);
        o_cols.push(other.column(j));
        s_sorted.push(sj);
    }
    let x = DenseMatrix::from_fn(m, k, |i, l| x_cols[l][i]);
    let o = DenseMatrix::from_fn(n, k, |i, l| o_cols[l][i]);
    (x, s_sorted, o)
}

/// Flips column pairs so the largest-magnitude entry of each `u` column
/// (lowest index on ties) is non-negative.
fn fix_signs(u: &mut DenseMatrix, v: &mut DenseMatrix) {
    for l in 0..u.cols() {
        let mut best = 0usize;
        for i in 0..u.rows() {
            if u[(i, l)].abs() > u[(best, l)].abs() {
                best = i;
            }
        }
        if u[(best, l)] < 0.0 {
            for i in 0..u.rows() {
                u[(i, l)] = -u[(i, l)];
            }
            for i in 0..v.rows() {
                v[(i, l)] = -v[(i, l)];
            }
        }
    }
}

fn complete_basis(
    existing: &[Vec<f64>],
    m: usize,
    next_canonical: &mut usize,
    candidate: &[f64],
    norm: f64,
) -> Vec<f64> {
    let mut tries: Vec<Vec<f64>> = Vec::new();
    if norm > 0.0 {
        tries.push(candidate.iter().map(|x| x / norm).collect());
    }
    loop {
        let trial = if let Some(t) = tries.pop() {
            t
        } else {
            let mut e = vec![0.0; m];
            e[*next_canonical % m] = 1.0;
            *next_canonical += 1;
            e
        };
        let mut w = trial;
        // Two passes of Gram-Schmidt.
        for _ in 0..2 {
            for b in existing {
                let c = dot(&w, b);
                for (x, y) in w.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let nw = norm2(&w);
        if nw > 0.5 {
            w.iter_mut().for_each(|x| *x /= nw);
            return w;
        }
        if *next_canonical > 2 * m + existing.len() {
            // Unreachable when existing.len() < m; keeps the loop finite.
            w.iter_mut().for_each(|x| *x = 0.0);
            return w;
        }
    }
}

/// Minimum-norm least squares: the `X` minimizing `‖A X − B‖_F`, computed
/// through the SVD pseudoinverse with relative cutoff [`LSTSQ_CUTOFF`].
pub fn lstsq(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != b.rows() {
        return Err(invalid!(
            "lstsq row mismatch: A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ));
    }
    let svd = thin_svd(a)?;
    let k = svd.s.len();
    let s_max = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = LSTSQ_CUTOFF * s_max;
    let nb = b.cols();

    // Y = S⁺ Uᵀ B  (k x nb)
    let mut y = DenseMatrix::zeros(k, nb);
    for i in 0..a.rows() {
        let brow = b.row(i);
        for l in 0..k {
            let ul = svd.u[(i, l)];
            if ul == 0.0 {
                continue;
            }
            for (o, &bv) in y.row_mut(l).iter_mut().zip(brow) {
                *o += ul * bv;
            }
        }
    }
    for l in 0..k {
        let sl = svd.s[l];
        let inv = if sl > cutoff && sl > 0.0 { 1.0 / sl } else { 0.0 };
        y.row_mut(l).iter_mut().for_each(|x| *x *= inv);
    }
    svd.v.matmul(&y)
}

/// Solves the square system `A X = B` by LU factorization with partial
/// pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(invalid!("lu_solve needs a square matrix, got {}x{}", n, a.cols()));
    }
    if b.rows() != n {
        return Err(invalid!("lu_solve right-hand side has {} rows, expected {}", b.rows(), n));
    }
    let nb = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::NumericalFailure("singular system (zero matrix)".into()));
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if lu[(r, col)].abs() > lu[(piv, col)].abs() {
                piv = r;
            }
        }
        if lu[(piv, col)].abs() <= scale * 1e-15 {
            return Err(Error::NumericalFailure(format!(
                "singular system: pivot {} is {:e}",
                col,
                lu[(piv, col)]
            )));
        }
        if piv != col {
            for j in 0..n {
                lu.data.swap(piv * n + j, col * n + j);
            }
            for j in 0..nb {
                x.data.swap(piv * nb + j, col * nb + j);
            }
        }
        let d = lu[(col, col)];
        for r in col + 1..n {
            let f = lu[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            lu[(r, col)] = f;
            for j in col + 1..n {
                let v = lu[(col, j)];
                lu[(r, j)] -= f * v;
            }
            for j in 0..nb {
                let v = x[(col, j)];
                x[(r, j)] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[(col, col)];
        for j in 0..nb {
            let mut acc = x[(col, j)];
            for k in col + 1..n {
                acc -= lu[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / d;
        }
    }
    Ok(x)
}
