//! Snapshot sets, POD bases and the RBF map from parameters to reduced
//! coefficients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{lu_solve, thin_svd, DenseMatrix};
use crate::math::{ln, sqrt};

/// Parameterized field samples on a fixed point cloud.
///
/// `fields` has one row per parameter vector; each row is the snapshot
/// flattened point-major: point 0 components, then point 1 components, ...
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    points: DenseMatrix,
    params: DenseMatrix,
    fields: DenseMatrix,
    d_field: usize,
}

impl SnapshotSet {
    pub fn new(
        points: DenseMatrix,
        params: DenseMatrix,
        fields: DenseMatrix,
        d_field: usize,
    ) -> Result<Self> {
        if d_field == 0 {
            return Err(invalid!("d_field must be at least 1"));
        }
        if params.rows() != fields.rows() {
            return Err(invalid!(
                "{} parameter vectors but {} snapshots",
                params.rows(),
                fields.rows()
            ));
        }
        if fields.cols() != points.rows() * d_field {
            return Err(invalid!(
                "snapshots have {} values, expected {} points x {} components",
                fields.cols(),
                points.rows(),
                d_field
            ));
        }
        for i in 0..params.rows() {
            for j in 0..i {
                if params.row(i) == params.row(j) {
                    return Err(invalid!("duplicate parameter vector at rows {} and {}", j, i));
                }
            }
        }
        Ok(Self {
            points,
            params,
            fields,
            d_field,
        })
    }

    pub fn points(&self) -> &DenseMatrix {
        &self.points
    }

    pub fn params(&self) -> &DenseMatrix {
        &self.params
    }

    /// Snapshot matrix in row-per-snapshot layout.
    pub fn fields(&self) -> &DenseMatrix {
        &self.fields
    }

    pub fn snapshot(&self, j: usize) -> &[f64] {
        self.fields.row(j)
    }

    pub fn param(&self, j: usize) -> &[f64] {
        self.params.row(j)
    }

    pub fn len(&self) -> usize {
        self.params.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.params.rows() == 0
    }

    pub fn n_dof(&self) -> usize {
        self.points.rows()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn d_field(&self) -> usize {
        self.d_field
    }

    pub fn d_mu(&self) -> usize {
        self.params.cols()
    }

    /// The subset of snapshots with the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            points: self.points.clone(),
            params: self.params.select_rows(indices),
            fields: self.fields.select_rows(indices),
            d_field: self.d_field,
        }
    }
}

/// Stacks the snapshots as columns: an `(N_dof·d_field) x N_μ` matrix.
pub fn assemble_snapshot_matrix(set: &SnapshotSet) -> Result<DenseMatrix> {
    if set.is_empty() {
        return Err(invalid!("cannot assemble an empty snapshot set"));
    }
    Ok(set.fields.transpose())
}

/// Coordinates and component count the modes are sampled on.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldLayout {
    pub points: DenseMatrix,
    pub d_field: usize,
}

/// Truncated POD basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DenseMatrix,
    singular_values: Vec<f64>,
    spectrum: Vec<f64>,
    layout: Option<FieldLayout>,
}

/// Truncated SVD of the snapshot matrix: the first `r` left singular vectors.
pub fn compute_pod(snapshots: &DenseMatrix, r: usize) -> Result<PodBasis> {
    let max_r = snapshots.rows().min(snapshots.cols());
    if r == 0 || r > max_r {
        return Err(invalid!("r = {} outside 1..={}", r, max_r));
    }
    let svd = thin_svd(snapshots)?;
    Ok(PodBasis {
        modes: svd.u.leading_columns(r),
        singular_values: svd.s[..r].to_vec(),
        spectrum: svd.s,
        layout: None,
    })
}

impl PodBasis {
    /// POD of a snapshot set, remembering the points the modes live on.
    pub fn from_snapshots(set: &SnapshotSet, r: usize) -> Result<Self> {
        let s = assemble_snapshot_matrix(set)?;
        let mut basis = compute_pod(&s, r)?;
        basis.layout = Some(FieldLayout {
            points: set.points().clone(),
            d_field: set.d_field(),
        });
        Ok(basis)
    }

    /// Builds a basis from explicit orthonormal modes.
    pub fn from_modes(modes: DenseMatrix, singular_values: Vec<f64>, layout: Option<FieldLayout>) -> Result<Self> {
        if singular_values.len() != modes.cols() {
            return Err(invalid!("{} singular values for {} modes", singular_values.len(), modes.cols()));
        }
        if let Some(l) = &layout {
            if l.points.rows() * l.d_field != modes.rows() {
                return Err(invalid!("layout does not match mode length {}", modes.rows()));
            }
        }
        Ok(Self {
            spectrum: singular_values.clone(),
            modes,
            singular_values,
            layout,
        })
    }

    pub fn modes(&self) -> &DenseMatrix {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// All singular values of the snapshot matrix, not only the retained ones.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn r(&self) -> usize {
        self.modes.cols()
    }

    pub fn len(&self) -> usize {
        self.modes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.rows() == 0
    }

    pub fn layout(&self) -> Option<&FieldLayout> {
        self.layout.as_ref()
    }

    /// Fraction of snapshot energy captured by the retained modes.
    pub fn retained_energy(&self) -> f64 {
        let total: f64 = self.spectrum.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 1.0;
        }
        self.singular_values.iter().map(|s| s * s).sum::<f64>() / total
    }

    /// Reduced coefficients `a = Φ_rᵀ u`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.len() {
            return Err(invalid!("field has length {}, basis expects {}", u.len(), self.len()));
        }
        self.modes.matvec_transpose(u)
    }

    /// Field `ũ = Φ_r a`.
    pub fn reconstruct(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.r() {
            return Err(invalid!("{} coefficients for r = {}", a.len(), self.r()));
        }
        self.modes.matvec(a)
    }

    /// Mode values at each mesh node: row `i` holds `φ_m(i, c)` at index
    /// `m * d_field + c`.
    pub fn mode_values_at_nodes(&self) -> Result<DenseMatrix> {
        let layout = self
            .layout
            .as_ref()
            .ok_or_else(|| invalid!("basis has no point layout"))?;
        let d_field = layout.d_field;
        let n = layout.points.rows();
        let r = self.r();
        Ok(DenseMatrix::from_fn(n, r * d_field, |i, k| {
            let (m, c) = (k / d_field, k % d_field);
            self.modes[(i * d_field + c, m)]
        }))
    }
}

/// Exact correction `τ = u − ũ`.
pub fn exact_correction(u: &[f64], u_tilde: &[f64]) -> Result<Vec<f64>> {
    if u.len() != u_tilde.len() {
        return Err(invalid!("length mismatch: {} vs {}", u.len(), u_tilde.len()));
    }
    Ok(u.iter().zip(u_tilde).map(|(a, b)| a - b).collect())
}

/// Radial kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// `φ(d) = d`
    Linear,
    /// `φ(d) = d² log d`, with value 0 at `d = 0`
    ThinPlateSpline,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::ThinPlateSpline => "thin_plate_spline",
        }
    }

    #[inline]
    fn apply(self, d: f64) -> f64 {
        match self {
            KernelKind::Linear => d,
            KernelKind::ThinPlateSpline => {
                if d == 0.0 {
                    0.0
                } else {
                    d * d * ln(d)
                }
            }
        }
    }
}

pub fn kernel_eval(kind: KernelKind, dist: f64) -> Result<f64> {
    if !(dist >= 0.0) {
        return Err(invalid!("kernel distance must be non-negative, got {}", dist));
    }
    Ok(kind.apply(dist))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `a(μ) = Σ_i ω_i φ(‖μ − μ_i‖)` with one weight vector per center.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfInterpolant {
    kernel: KernelKind,
    centers: DenseMatrix,
    weights: DenseMatrix,
}

impl RbfInterpolant {
    pub fn from_parts(kernel: KernelKind, centers: DenseMatrix, weights: DenseMatrix) -> Result<Self> {
        if centers.rows() != weights.rows() {
            return Err(invalid!("{} centers but {} weight vectors", centers.rows(), weights.rows()));
        }
        Ok(Self { kernel, centers, weights })
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    pub fn centers(&self) -> &DenseMatrix {
        &self.centers
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn eval(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.centers.cols() {
            return Err(invalid!(
                "parameter has dimension {}, centers have {}",
                mu.len(),
                self.centers.cols()
            ));
        }
        if self.centers.rows() == 1 {
            // Single center: the stored weight row is the constant value.
            return Ok(self.weights.row(0).to_vec());
        }
        let mut out = vec![0.0; self.weights.cols()];
        for i in 0..self.centers.rows() {
            let phi = self.kernel.apply(distance(mu, self.centers.row(i)));
            for (o, w) in out.iter_mut().zip(self.weights.row(i)) {
                *o += phi * w;
            }
        }
        Ok(out)
    }
}

/// Fits RBF weights so the interpolant reproduces `values` at `centers`.
///
/// `centers` is `N x d_μ`, `values` is `N x r`. A jitter of
/// `1e-12 · max|K_ij|` is added to the kernel diagonal (both supported
/// kernels vanish at zero distance, so the diagonal itself is empty).
pub fn rbf_fit(centers: &DenseMatrix, values: &DenseMatrix, kind: KernelKind) -> Result<RbfInterpolant> {
    let n = centers.rows();
    if n == 0 {
        return Err(invalid!("rbf_fit needs at least one center"));
    }
    if values.rows() != n {
        return Err(invalid!("{} centers but {} value vectors", n, values.rows()));
    }
    for i in 0..n {
        for j in 0..i {
            if centers.row(i) == centers.row(j) {
                return Err(invalid!("duplicate RBF centers at rows {} and {}", j, i));
            }
        }
    }
    if n == 1 {
        // φ(0) = 0 for both kernels, so the 1x1 kernel matrix is singular.
        // A single center degenerates to the constant interpolant.
        return Ok(RbfInterpolant {
            kernel: kind,
            centers: centers.clone(),
            weights: values.clone(),
        });
    }
    let k = DenseMatrix::from_fn(n, n, |i, j| kind.apply(distance(centers.row(i), centers.row(j))));
    let scale = k.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut kj = k.clone();
    for i in 0..n {
        kj[(i, i)] += 1e-12 * scale;
    }
    let solve = |rhs: &DenseMatrix| {
        lu_solve(&kj, rhs).map_err(|e| match e {
            Error::NumericalFailure(msg) => Error::NumericalFailure(alloc::format!("RBF kernel matrix: {}", msg)),
            other => other,
        })
    };
    let mut weights = solve(values)?;
    // The jitter shifts the solution by roughly jitter·‖ω‖; on badly
    // conditioned kernels that is visible at the centers, so refine against
    // the unregularized system while the residual keeps shrinking.
    let mut res = residual(&k, &weights, values)?;
    let mut res_norm = res.frobenius_norm();
    for _ in 0..8 {
        if !(res_norm > 0.0) {
            break;
        }
        let delta = solve(&res)?;
        let mut next = weights.clone();
        for (w, d) in next.as_mut_slice().iter_mut().zip(delta.as_slice()) {
            *w += d;
        }
        let next_res = residual(&k, &next, values)?;
        let next_norm = next_res.frobenius_norm();
        if !(next_norm < res_norm) {
            break;
        }
        weights = next;
        res = next_res;
        res_norm = next_norm;
    }
    // The unregularized solve, when it succeeds, is sometimes better still.
    if res_norm > 0.0 {
        if let Ok(plain) = lu_solve(&k, values) {
            if plain.as_slice().iter().all(|v| v.is_finite()) && residual(&k, &plain, values)?.frobenius_norm() < res_norm {
                weights = plain;
            }
        }
    }
    Ok(RbfInterpolant {
        kernel: kind,
        centers: centers.clone(),
        weights,
    })
}

fn residual(k: &DenseMatrix, w: &DenseMatrix, values: &DenseMatrix) -> Result<DenseMatrix> {
    values.sub(&k.matmul(w)?)
}

/// Evaluates the interpolant at `mu_star`.
pub fn rbf_eval(interp: &RbfInterpolant, mu_star: &[f64]) -> Result<Vec<f64>> {
    interp.eval(mu_star)
}
