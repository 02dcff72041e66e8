//! Synthetic parametric fields with a known correction structure.
//!
//! Fields are `u(x; μ) = Σ_k g_k(μ) ψ_k(x)` on a regular grid over `[0, 1]²`,
//! where the `ψ_k` are smooth tensor-product cosines orthonormalized on the
//! grid. Two coefficient families are available:
//!
//! - [`SyntheticKind::ExactQuadratic`]: the first `r` coefficients are odd
//!   functions of the centred parameter `s ∈ [−1, 1]` and the remaining ones
//!   are fixed random quadratic forms of them. On a parameter sample that is
//!   symmetric in `s` (the default equispaced sweep) the POD subspace of
//!   dimension `r` is exactly `span(ψ_1..ψ_r)`, so the exact correction is a
//!   quadratic function of the reduced coefficients. The price of the odd
//!   construction is that the field vanishes at the centre `s = 0`.
//! - [`SyntheticKind::GenericNonlinear`]: `g_1 = 1 + t`, `g_k = sin(kπt + π/4)/k`
//!   for `k ≥ 2`, with `t ∈ [0, 1]` the normalized parameter. The residual
//!   coupling is not quadratic.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;
use crate::math::{cos, dot, sin, sqrt};
use crate::pod::SnapshotSet;
use crate::quadls::quad_dim;

/// Scale of the random quadratic-form coefficients.
const QUADRATIC_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyntheticKind {
    ExactQuadratic,
    GenericNonlinear,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::ExactQuadratic => "exact_quadratic",
            SyntheticKind::GenericNonlinear => "generic_nonlinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub nx: usize,
    pub ny: usize,
    /// Number of latent spatial fields `K`.
    pub modes: usize,
    /// Dimension of the linear part for `ExactQuadratic`.
    pub r: usize,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub n_mu: usize,
    /// Components per grid point.
    pub d_field: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, nx: usize, ny: usize, modes: usize, r: usize, n_mu: usize) -> Self {
        Self {
            kind,
            nx,
            ny,
            modes,
            r,
            mu_lo: 0.0,
            mu_hi: 1.0,
            n_mu,
            d_field: 2,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(invalid!("grid must be at least 4x4, got {}x{}", self.nx, self.ny));
        }
        if self.modes == 0 {
            return Err(invalid!("need at least one latent mode"));
        }
        if self.modes > self.nx * self.ny {
            return Err(invalid!("{} modes exceed {} grid points", self.modes, self.nx * self.ny));
        }
        if self.kind == SyntheticKind::ExactQuadratic && (self.r == 0 || self.r > self.modes) {
            return Err(invalid!("ExactQuadratic needs 1 <= r <= K, got r = {}, K = {}", self.r, self.modes));
        }
        if self.d_field == 0 {
            return Err(invalid!("d_field must be at least 1"));
        }
        if self.n_mu == 0 {
            return Err(invalid!("n_mu must be at least 1"));
        }
        if !(self.mu_lo.is_finite() && self.mu_hi.is_finite() && self.mu_hi > self.mu_lo) {
            return Err(invalid!("invalid parameter range [{}, {}]", self.mu_lo, self.mu_hi));
        }
        Ok(())
    }
}

/// Precomputed spatial fields and coefficient maps for one spec.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    spec: SyntheticSpec,
    points: DenseMatrix,
    /// Row `k` is `ψ_k` flattened point-major.
    fields: DenseMatrix,
    /// `(K − r) x r(r+1)/2` coefficients of the quadratic forms.
    quadratic: DenseMatrix,
}

impl SyntheticGenerator {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let points = grid_points(spec.nx, spec.ny);
        let fields = spatial_fields(&points, spec.modes, spec.d_field);
        let quadratic = match spec.kind {
            SyntheticKind::ExactQuadratic => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                DenseMatrix::from_fn(spec.modes - spec.r, quad_dim(spec.r), |_, _| {
                    QUADRATIC_SCALE * rng.gen_range(-1.0..1.0)
                })
            }
            SyntheticKind::GenericNonlinear => DenseMatrix::zeros(0, 0),
        };
        Ok(Self {
            spec: spec.clone(),
            points,
            fields,
            quadratic,
        })
    }

    pub fn points(&self) -> &DenseMatrix {
        &self.points
    }

    /// The orthonormal latent fields, one per row.
    pub fn latent_fields(&self) -> &DenseMatrix {
        &self.fields
    }

    /// Centred sample positions `s_j ∈ [−1, 1]`, exactly symmetric about 0.
    fn centred_samples(&self) -> Vec<f64> {
        let n = self.spec.n_mu;
        (0..n)
            .map(|j| {
                if n == 1 {
                    0.0
                } else {
                    (2.0 * j as f64 - (n - 1) as f64) / (n - 1) as f64
                }
            })
            .collect()
    }

    /// Equispaced parameters covering `[μ_lo, μ_hi]`.
    pub fn default_params(&self) -> Vec<f64> {
        self.centred_samples().into_iter().map(|s| self.mu_from_centred(s)).collect()
    }

    fn mu_from_centred(&self, s: f64) -> f64 {
        let half = 0.5 * (self.spec.mu_hi - self.spec.mu_lo);
        let mid = 0.5 * (self.spec.mu_hi + self.spec.mu_lo);
        mid + half * s
    }

    fn centred(&self, mu: f64) -> f64 {
        let half = 0.5 * (self.spec.mu_hi - self.spec.mu_lo);
        let mid = 0.5 * (self.spec.mu_hi + self.spec.mu_lo);
        (mu - mid) / half
    }

    /// Latent coefficients `g(μ)`.
    pub fn coefficients(&self, mu: f64) -> Vec<f64> {
        self.coefficients_centred(self.centred(mu))
    }

    fn coefficients_centred(&self, s: f64) -> Vec<f64> {
        let k_total = self.spec.modes;
        match self.spec.kind {
            SyntheticKind::ExactQuadratic => {
                let r = self.spec.r;
                let mut g = Vec::with_capacity(k_total);
                for k in 1..=r {
                    g.push(sin(0.9 * k as f64 * PI * s));
                }
                let mut prods = vec![0.0; quad_dim(r)];
                crate::quadls::pairwise_products_into(&g, &mut prods);
                for m in 0..k_total - r {
                    g.push(dot(self.quadratic.row(m), &prods));
                }
                g
            }
            SyntheticKind::GenericNonlinear => {
                let t = 0.5 * (s + 1.0);
                (1..=k_total)
                    .map(|k| {
                        if k == 1 {
                            1.0 + t
                        } else {
                            sin(k as f64 * PI * t + PI / 4.0) / k as f64
                        }
                    })
                    .collect()
            }
        }
    }

    fn combine(&self, g: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.fields.cols()];
        for (k, gk) in g.iter().enumerate() {
            for (o, p) in u.iter_mut().zip(self.fields.row(k)) {
                *o += gk * p;
            }
        }
        u
    }

    pub fn snapshot(&self, mu: f64) -> Vec<f64> {
        self.combine(&self.coefficients(mu))
    }

    /// Snapshots at the given parameter values.
    pub fn generate_at(&self, params: &[f64]) -> Result<SnapshotSet> {
        self.warn_centre(params.iter().map(|&mu| self.centred(mu)));
        let rows: Vec<Vec<f64>> = params.iter().map(|&mu| self.snapshot(mu)).collect();
        self.assemble(params.to_vec(), rows)
    }

    /// Snapshots on the default equispaced sweep. Coefficients are evaluated
    /// at the exact centred positions so the sample stays symmetric.
    pub fn generate(&self) -> Result<SnapshotSet> {
        let samples = self.centred_samples();
        self.warn_centre(samples.iter().copied());
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|&s| self.combine(&self.coefficients_centred(s)))
            .collect();
        let params = samples.iter().map(|&s| self.mu_from_centred(s)).collect();
        self.assemble(params, rows)
    }

    /// ExactQuadratic fields vanish at the centre of the range (all odd
    /// coefficients are zero there), which makes relative errors undefined.
    fn warn_centre(&self, s: impl Iterator<Item = f64>) {
        if self.spec.kind == SyntheticKind::ExactQuadratic && s.into_iter().any(|s| s.abs() < 1e-12) {
            log::warn!("the ExactQuadratic field is identically zero at the centre of the parameter range");
        }
    }

    fn assemble(&self, params: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<SnapshotSet> {
        let fields = DenseMatrix::from_rows(&rows)?;
        let params = DenseMatrix::new(params.len(), 1, params)?;
        SnapshotSet::new(self.points.clone(), params, fields, self.spec.d_field)
    }
}

/// Builds the snapshot set described by `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SnapshotSet> {
    SyntheticGenerator::new(spec)?.generate()
}

/// Grid points on `[0, 1]²`, x varying fastest.
pub fn grid_points(nx: usize, ny: usize) -> DenseMatrix {
    let hx = 1.0 / (nx.max(2) - 1) as f64;
    let hy = 1.0 / (ny.max(2) - 1) as f64;
    DenseMatrix::from_fn(nx * ny, 2, |i, c| {
        if c == 0 {
            (i % nx) as f64 * hx
        } else {
            (i / nx) as f64 * hy
        }
    })
}

/// Frequency pairs ordered by total frequency.
fn frequency_pairs(count: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut total = 0;
    while out.len() < count {
        for m in (0..=total).rev() {
            out.push((m, total - m));
            if out.len() == count {
                break;
            }
        }
        total += 1;
    }
    out
}

fn spatial_fields(points: &DenseMatrix, count: usize, d_field: usize) -> DenseMatrix {
    let n = points.rows();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    for (m, q) in frequency_pairs(count) {
        let mut v = vec![0.0; n * d_field];
        for i in 0..n {
            let x = points[(i, 0)];
            let y = points[(i, 1)];
            for c in 0..d_field {
                v[i * d_field + c] = match c {
                    0 => cos(m as f64 * PI * x) * cos(q as f64 * PI * y),
                    1 => cos(q as f64 * PI * x) * cos(m as f64 * PI * y),
                    _ => sin((m + c) as f64 * PI * x / 2.0) * cos(q as f64 * PI * y),
                };
            }
        }
        // Modified Gram-Schmidt, two passes.
        for _ in 0..2 {
            for prev in &rows {
                let c = dot(&v, prev);
                for (a, b) in v.iter_mut().zip(prev) {
                    *a -= c * b;
                }
            }
        }
        let nv = sqrt(dot(&v, &v));
        v.iter_mut().for_each(|a| *a /= nv);
        rows.push(v);
    }
    DenseMatrix::from_rows(&rows).expect("fields are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_pairs_order() {
        assert_eq!(frequency_pairs(4), vec![(0, 0), (1, 0), (0, 1), (2, 0)]);
    }

    #[test]
    fn latent_fields_are_orthonormal() {
        let mut spec = SyntheticSpec::new(SyntheticKind::GenericNonlinear, 12, 9, 8, 3, 5);
        spec.d_field = 2;
        let gen = SyntheticGenerator::new(&spec).unwrap();
        let f = gen.latent_fields();
        let gram = f.matmul(&f.transpose()).unwrap();
        let defect = gram.sub(&DenseMatrix::identity(8)).unwrap().frobenius_norm();
        assert!(defect < 1e-10, "defect {}", defect);
    }

    #[test]
    fn deterministic() {
        let spec = SyntheticSpec::new(SyntheticKind::ExactQuadratic, 6, 6, 5, 3, 7);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn symmetric_default_params() {
        let mut spec = SyntheticSpec::new(SyntheticKind::ExactQuadratic, 6, 6, 5, 3, 8);
        spec.mu_lo = 1.0;
        spec.mu_hi = 80.0;
        let gen = SyntheticGenerator::new(&spec).unwrap();
        let p = gen.default_params();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[7], 80.0);
        let set = gen.generate().unwrap();
        // Odd linear part, even quadratic part.
        let g0 = gen.coefficients(p[0]);
        let g7 = gen.coefficients(p[7]);
        for k in 0..3 {
            assert!((g0[k] + g7[k]).abs() < 1e-15);
        }
        for k in 3..5 {
            assert!((g0[k] - g7[k]).abs() < 1e-15);
        }
        assert!(set.fields().as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SyntheticSpec::new(SyntheticKind::ExactQuadratic, 3, 6, 5, 3, 7);
        assert!(generate_synthetic(&spec).is_err());
        spec.nx = 6;
        spec.r = 6;
        assert!(generate_synthetic(&spec).is_err());
        spec.r = 3;
        spec.mu_hi = spec.mu_lo;
        assert!(generate_synthetic(&spec).is_err());
    }
}
