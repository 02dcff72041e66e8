use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::math::dot;
use crate::neural::mlp::Activation;
use crate::neural::model::{CorrectionModel, OperatorNet};
use crate::pod::{exact_correction, PodBasis, SnapshotSet};
use crate::quadls::{pairwise_products_into, quad_dim};

/// Targets with a squared norm below this are left out of the loss.
pub const DEGENERATE_NORM2: f64 = 1e-30;

/// `(1/N) Σ ‖τᵢ − τ̂ᵢ‖² / ‖τᵢ‖²` over the rows (snapshots) of `exact`.
///
/// Rows whose target is numerically zero are skipped with a warning, and
/// `N` counts only the rows kept. If no row survives the result is
/// [`Error::DegenerateTarget`].
pub fn relative_loss(pred: &DenseMatrix, exact: &DenseMatrix) -> Result<f64> {
    if pred.shape() != exact.shape() {
        return Err(invalid!("prediction shape {:?} vs target shape {:?}", pred.shape(), exact.shape()));
    }
    let mut sum = 0.0;
    let mut kept = 0usize;
    for j in 0..exact.rows() {
        let t = exact.row(j);
        let n2 = dot(t, t);
        if n2 < DEGENERATE_NORM2 {
            log::warn!("snapshot {} has a zero correction and is left out of the loss", j);
            continue;
        }
        let e2: f64 = pred.row(j).iter().zip(t).map(|(p, q)| (p - q) * (p - q)).sum();
        sum += e2 / n2;
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::DegenerateTarget { count: exact.rows() });
    }
    Ok(sum / kept as f64)
}

/// Training data for a correction model, all sampled on the same points.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionData {
    /// Raw mode values at each point, `n_pts × r·d_field`.
    pub mode_values: DenseMatrix,
    /// `n_pts × d`.
    pub points: DenseMatrix,
    /// `n_snap × d_μ`.
    pub params: DenseMatrix,
    /// Reduced coefficients, `n_snap × r`.
    pub coefficients: DenseMatrix,
    /// Exact corrections at the points, `n_snap × n_pts·d_field`, point-major.
    pub corrections: DenseMatrix,
}

impl CorrectionData {
    pub fn new(
        mode_values: DenseMatrix,
        points: DenseMatrix,
        params: DenseMatrix,
        coefficients: DenseMatrix,
        corrections: DenseMatrix,
    ) -> Result<Self> {
        let n_pts = points.rows();
        let n_snap = coefficients.rows();
        if n_pts == 0 || n_snap == 0 {
            return Err(invalid!("training data needs at least one point and one snapshot"));
        }
        if mode_values.rows() != n_pts {
            return Err(invalid!("{} mode rows for {} points", mode_values.rows(), n_pts));
        }
        if params.rows() != n_snap || corrections.rows() != n_snap {
            return Err(invalid!(
                "snapshot counts disagree: {} coefficients, {} params, {} corrections",
                n_snap,
                params.rows(),
                corrections.rows()
            ));
        }
        if corrections.cols() % n_pts != 0 {
            return Err(invalid!("{} correction columns for {} points", corrections.cols(), n_pts));
        }
        Ok(Self {
            mode_values,
            points,
            params,
            coefficients,
            corrections,
        })
    }

    /// Projects every snapshot of `set` onto `basis` and keeps the exact
    /// corrections at `nodes` (all mesh nodes when `None`).
    pub fn from_snapshots(set: &SnapshotSet, basis: &PodBasis, nodes: Option<&[usize]>) -> Result<Self> {
        let layout = basis.layout().ok_or_else(|| invalid!("basis has no point layout"))?;
        if layout.points.rows() != set.n_dof() || layout.d_field != set.d_field() {
            return Err(invalid!("snapshot set does not live on the basis mesh"));
        }
        let all: Vec<usize>;
        let nodes = match nodes {
            Some(n) => n,
            None => {
                all = (0..set.n_dof()).collect();
                &all
            }
        };
        if nodes.iter().any(|&i| i >= set.n_dof()) {
            return Err(invalid!("node index out of range"));
        }
        let d_field = set.d_field();
        let r = basis.r();
        let mut coeffs = Vec::with_capacity(set.len() * r);
        let mut corr = Vec::with_capacity(set.len() * nodes.len() * d_field);
        for j in 0..set.len() {
            let u = set.snapshot(j);
            let a = basis.project(u)?;
            let tau = exact_correction(u, &basis.reconstruct(&a)?)?;
            for &i in nodes {
                corr.extend_from_slice(&tau[i * d_field..(i + 1) * d_field]);
            }
            coeffs.extend_from_slice(&a);
        }
        Self::new(
            basis.mode_values_at_nodes()?.select_rows(nodes),
            layout.points.select_rows(nodes),
            set.params().clone(),
            DenseMatrix::new(set.len(), r, coeffs)?,
            DenseMatrix::new(set.len(), nodes.len() * d_field, corr)?,
        )
    }

    pub fn n_points(&self) -> usize {
        self.points.rows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn d_field(&self) -> usize {
        self.corrections.cols() / self.points.rows()
    }
}

/// Network inputs in normalized form plus precomputed loss weights.
/// Snapshots with degenerate targets are dropped here, once.
pub(crate) struct Prepared {
    n_pts: usize,
    n_snap: usize,
    mode_feat: Vec<f64>,
    coord_feat: Vec<f64>,
    param_feat: Vec<f64>,
    /// Pairwise products, `n_snap × S`.
    quad: Vec<f64>,
    targets: Vec<f64>,
    /// `1 / ‖τ_j‖²`.
    weights: Vec<f64>,
}

pub(crate) fn prepare(net: &OperatorNet, data: &CorrectionData) -> Result<Prepared> {
    if data.coefficients.cols() != net.r() {
        return Err(invalid!("data has r = {}, model has r = {}", data.coefficients.cols(), net.r()));
    }
    if data.d_field() != net.d_field() {
        return Err(invalid!("data has d_field = {}, model has {}", data.d_field(), net.d_field()));
    }
    let n_pts = data.n_points();
    let s = quad_dim(net.r());
    let mut keep = Vec::new();
    let mut weights = Vec::new();
    for j in 0..data.n_snapshots() {
        let t = data.corrections.row(j);
        let n2 = dot(t, t);
        if n2 < DEGENERATE_NORM2 {
            log::warn!("snapshot {} has a zero correction and is left out of training", j);
        } else {
            keep.push(j);
            weights.push(1.0 / n2);
        }
    }
    if keep.is_empty() {
        return Err(Error::DegenerateTarget {
            count: data.n_snapshots(),
        });
    }
    let mut quad = vec![0.0; keep.len() * s];
    let mut targets = Vec::with_capacity(keep.len() * data.corrections.cols());
    for (k, &j) in keep.iter().enumerate() {
        pairwise_products_into(data.coefficients.row(j), &mut quad[k * s..(k + 1) * s]);
        targets.extend_from_slice(data.corrections.row(j));
    }
    let param_feat = if net.d_mu() > 0 {
        net.param_features(&data.params.select_rows(&keep))?
    } else {
        Vec::new()
    };
    Ok(Prepared {
        n_pts,
        n_snap: keep.len(),
        mode_feat: net.mode_features(&data.mode_values)?,
        coord_feat: net.coord_features(&data.points)?,
        param_feat,
        quad,
        targets,
        weights,
    })
}

#[inline]
fn latent_row<'a>(out: Option<&'a [f64]>, ones: &'a [f64], j: usize, p: usize) -> &'a [f64] {
    match out {
        Some(o) => &o[j * p..(j + 1) * p],
        None => ones,
    }
}

/// Loss and, if `grad` is given, its gradient (overwritten, flat parameter
/// order). `generic` forces the path that runs the combiner per pair.
pub(crate) fn evaluate(net: &OperatorNet, prep: &Prepared, grad: Option<&mut [f64]>, generic: bool) -> f64 {
    let n_pts = prep.n_pts;
    let n_snap = prep.n_snap;
    let p = net.latent_dim();
    let s = quad_dim(net.r());
    let nf = net.d_field();

    let bt = net.branch.forward_batch(&prep.mode_feat, n_pts);
    let tt = net.trunk.forward_batch(&prep.coord_feat, n_pts);
    let pt = net.param_branch.as_ref().map(|m| m.forward_batch(&prep.param_feat, n_snap));
    let b = bt.output();
    let t = tt.output();
    let h: Vec<f64> = b.iter().zip(t).map(|(x, y)| x * y).collect();
    let ones = vec![1.0; p];
    let p_out = pt.as_ref().map(|tape| tape.output());
    let pv = |j: usize| latent_row(p_out, &ones, j, p);

    let want_grad = grad.is_some();
    let mut dh = if want_grad { vec![0.0; n_pts * p] } else { Vec::new() };
    let mut dp = if want_grad && pt.is_some() { vec![0.0; n_snap * p] } else { Vec::new() };
    let n_comb = net.combiner.param_count();
    let mut g_comb = vec![0.0; if want_grad { n_comb } else { 0 }];
    let scale = 1.0 / n_snap as f64;
    let mut loss = 0.0;

    let fast = !generic && net.combiner.n_layers() == 1 && net.combiner.output_activation() == Activation::Identity;
    if fast {
        // Linear combiner: τ̂_jif = Σ_q A_j[f][q] H_iq + β_jf with
        // A_j[f][q] = P_jq Σ_s ã_js W[fS+s][q], β_jf = Σ_s ã_js c[fS+s].
        let w = &net.combiner.weights()[0];
        let c0 = &net.combiner.biases()[0];
        let mut wa = vec![0.0; nf * p];
        let mut a = vec![0.0; nf * p];
        let mut beta = vec![0.0; nf];
        let mut da = vec![0.0; nf * p];
        let mut dbeta = vec![0.0; nf];
        for j in 0..n_snap {
            let q = &prep.quad[j * s..(j + 1) * s];
            let pj = pv(j);
            wa.iter_mut().for_each(|v| *v = 0.0);
            for f in 0..nf {
                let war = &mut wa[f * p..(f + 1) * p];
                let mut bsum = 0.0;
                for (k, &qk) in q.iter().enumerate() {
                    for (x, wv) in war.iter_mut().zip(w.row(f * s + k)) {
                        *x += qk * wv;
                    }
                    bsum += qk * c0[f * s + k];
                }
                beta[f] = bsum;
                for (qq, (av, x)) in a[f * p..(f + 1) * p].iter_mut().zip(war.iter()).enumerate() {
                    *av = x * pj[qq];
                }
            }
            let target = &prep.targets[j * n_pts * nf..(j + 1) * n_pts * nf];
            let wj = prep.weights[j];
            let mut lj = 0.0;
            if want_grad {
                da.iter_mut().for_each(|v| *v = 0.0);
                dbeta.iter_mut().for_each(|v| *v = 0.0);
            }
            for i in 0..n_pts {
                let hi = &h[i * p..(i + 1) * p];
                for f in 0..nf {
                    let af = &a[f * p..(f + 1) * p];
                    let e = beta[f] + dot(af, hi) - target[i * nf + f];
                    lj += e * e;
                    if want_grad {
                        let g = 2.0 * wj * scale * e;
                        dbeta[f] += g;
                        for (d, hv) in da[f * p..(f + 1) * p].iter_mut().zip(hi) {
                            *d += g * hv;
                        }
                        for (d, av) in dh[i * p..(i + 1) * p].iter_mut().zip(af) {
                            *d += g * av;
                        }
                    }
                }
            }
            loss += wj * lj;
            if want_grad {
                let (gw, gc) = g_comb.split_at_mut(w.as_slice().len());
                for f in 0..nf {
                    let daf = &da[f * p..(f + 1) * p];
                    if !dp.is_empty() {
                        let war = &wa[f * p..(f + 1) * p];
                        for (qq, d) in dp[j * p..(j + 1) * p].iter_mut().enumerate() {
                            *d += daf[qq] * war[qq];
                        }
                    }
                    for (k, &qk) in q.iter().enumerate() {
                        let row = &mut gw[(f * s + k) * p..(f * s + k + 1) * p];
                        for (qq, g) in row.iter_mut().enumerate() {
                            *g += qk * daf[qq] * pj[qq];
                        }
                        gc[f * s + k] += qk * dbeta[f];
                    }
                }
            }
        }
    } else {
        let n_pairs = n_snap * n_pts;
        let mut z = vec![0.0; n_pairs * p];
        for j in 0..n_snap {
            let pj = pv(j);
            for i in 0..n_pts {
                let zr = &mut z[(j * n_pts + i) * p..(j * n_pts + i + 1) * p];
                for (qq, zv) in zr.iter_mut().enumerate() {
                    *zv = h[i * p + qq] * pj[qq];
                }
            }
        }
        let ct = net.combiner.forward_batch(&z, n_pairs);
        let c = ct.output();
        let width = s * nf;
        let mut dc = if want_grad { vec![0.0; n_pairs * width] } else { Vec::new() };
        for j in 0..n_snap {
            let q = &prep.quad[j * s..(j + 1) * s];
            let target = &prep.targets[j * n_pts * nf..(j + 1) * n_pts * nf];
            let wj = prep.weights[j];
            let mut lj = 0.0;
            for i in 0..n_pts {
                let row = (j * n_pts + i) * width;
                for f in 0..nf {
                    let block = &c[row + f * s..row + (f + 1) * s];
                    let e = dot(block, q) - target[i * nf + f];
                    lj += e * e;
                    if want_grad {
                        let g = 2.0 * wj * scale * e;
                        for (d, qk) in dc[row + f * s..row + (f + 1) * s].iter_mut().zip(q) {
                            *d = g * qk;
                        }
                    }
                }
            }
            loss += wj * lj;
        }
        if want_grad {
            let dz = net
                .combiner
                .backward_batch(&ct, dc, &mut g_comb, true)
                .expect("input gradient requested");
            for j in 0..n_snap {
                let pj = pv(j);
                for i in 0..n_pts {
                    let dzr = &dz[(j * n_pts + i) * p..(j * n_pts + i + 1) * p];
                    for qq in 0..p {
                        dh[i * p + qq] += dzr[qq] * pj[qq];
                        if !dp.is_empty() {
                            dp[j * p + qq] += dzr[qq] * h[i * p + qq];
                        }
                    }
                }
            }
        }
    }
    let loss = loss * scale;

    if let Some(grad) = grad {
        grad.iter_mut().for_each(|v| *v = 0.0);
        let db: Vec<f64> = dh.iter().zip(t).map(|(d, y)| d * y).collect();
        let dt: Vec<f64> = dh.iter().zip(b).map(|(d, x)| d * x).collect();
        let mut off = 0;
        let nb = net.branch.param_count();
        net.branch.backward_batch(&bt, db, &mut grad[off..off + nb], false);
        off += nb;
        if let (Some(pb), Some(tape)) = (&net.param_branch, &pt) {
            let np = pb.param_count();
            pb.backward_batch(tape, dp, &mut grad[off..off + np], false);
            off += np;
        }
        let ntr = net.trunk.param_count();
        net.trunk.backward_batch(&tt, dt, &mut grad[off..off + ntr], false);
        off += ntr;
        grad[off..off + n_comb].copy_from_slice(&g_comb);
    }
    loss
}

/// Training loss of `model` on `data`.
pub fn training_loss<M: CorrectionModel + ?Sized>(model: &M, data: &CorrectionData) -> Result<f64> {
    let prep = prepare(model.net(), data)?;
    Ok(evaluate(model.net(), &prep, None, false))
}

/// Loss and its exact gradient with respect to every parameter, in
/// [`OperatorNet::params`] order.
pub fn gradients<M: CorrectionModel + ?Sized>(model: &M, data: &CorrectionData) -> Result<(f64, Vec<f64>)> {
    let net = model.net();
    let prep = prepare(net, data)?;
    let mut g = vec![0.0; net.param_count()];
    let loss = evaluate(net, &prep, Some(&mut g), false);
    Ok((loss, g))
}
