use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;
use crate::math::sqrt;
use crate::neural::mlp::{Activation, Mlp};
use crate::pod::PodBasis;
use crate::quadls::{pairwise_products_into, quad_dim};

/// What the branch network sees of the modes at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeInput {
    /// All `r · d_field` mode components, flattened mode-major.
    #[default]
    Components,
    /// One value per mode: the Euclidean norm over field components.
    Magnitude,
}

impl ModeInput {
    pub(crate) fn tag(self) -> u8 {
        match self {
            ModeInput::Components => 0,
            ModeInput::Magnitude => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModeInput::Components),
            1 => Some(ModeInput::Magnitude),
            _ => None,
        }
    }

    pub fn features(self, r: usize, d_field: usize) -> usize {
        match self {
            ModeInput::Components => r * d_field,
            ModeInput::Magnitude => r,
        }
    }
}

/// Affine input scalings fixed at construction time.
///
/// Coordinates and parameters go to `[-1, 1]` over the box they were fitted
/// on; mode features are divided by the per-mode max-abs value.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub coord_lo: Vec<f64>,
    pub coord_hi: Vec<f64>,
    pub param_lo: Vec<f64>,
    pub param_hi: Vec<f64>,
    pub mode_scale: Vec<f64>,
}

fn bounds(m: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; m.cols()];
    let mut hi = vec![f64::NEG_INFINITY; m.cols()];
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    (lo, hi)
}

#[inline]
fn to_unit(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w > 0.0 {
        2.0 * (x - lo) / w - 1.0
    } else {
        x - lo
    }
}

impl Normalizer {
    /// `mode_values` has one row per node, `r · d_field` columns.
    pub fn fit(
        points: &DenseMatrix,
        mode_values: &DenseMatrix,
        d_field: usize,
        params: Option<&DenseMatrix>,
        mode_input: ModeInput,
    ) -> Result<Self> {
        if points.rows() == 0 || points.rows() != mode_values.rows() {
            return Err(invalid!("{} points but {} mode rows", points.rows(), mode_values.rows()));
        }
        if d_field == 0 || mode_values.cols() % d_field != 0 {
            return Err(invalid!("{} mode columns do not split into d_field = {}", mode_values.cols(), d_field));
        }
        let r = mode_values.cols() / d_field;
        let mut mode_scale = vec![0.0f64; r];
        for i in 0..mode_values.rows() {
            let row = mode_values.row(i);
            for (m, scale) in mode_scale.iter_mut().enumerate() {
                let comps = &row[m * d_field..(m + 1) * d_field];
                let v = match mode_input {
                    ModeInput::Components => comps.iter().fold(0.0f64, |acc, c| acc.max(c.abs())),
                    ModeInput::Magnitude => sqrt(comps.iter().map(|c| c * c).sum()),
                };
                *scale = scale.max(v);
            }
        }
        mode_scale.iter_mut().filter(|s| **s == 0.0).for_each(|s| *s = 1.0);
        let (coord_lo, coord_hi) = bounds(points);
        let (param_lo, param_hi) = match params {
            Some(p) if p.rows() > 0 => bounds(p),
            Some(_) => return Err(invalid!("parameter normalizer needs at least one parameter")),
            None => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            coord_lo,
            coord_hi,
            param_lo,
            param_hi,
            mode_scale,
        })
    }

    pub fn coords_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = to_unit(x[k], self.coord_lo[k], self.coord_hi[k]);
        }
    }

    pub fn params_into(&self, mu: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = to_unit(mu[k], self.param_lo[k], self.param_hi[k]);
        }
    }

    /// Scaled branch features from raw mode values at one point.
    pub fn modes_into(&self, raw: &[f64], d_field: usize, input: ModeInput, out: &mut [f64]) {
        for (m, scale) in self.mode_scale.iter().enumerate() {
            let comps = &raw[m * d_field..(m + 1) * d_field];
            match input {
                ModeInput::Components => {
                    for (c, v) in comps.iter().enumerate() {
                        out[m * d_field + c] = v / scale;
                    }
                }
                ModeInput::Magnitude => out[m] = sqrt(comps.iter().map(|c| c * c).sum()) / scale,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNetConfig {
    /// Hidden layers of each branch / trunk network.
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Latent width `p`; defaults to `r(r+1)/2`.
    pub latent_dim: Option<usize>,
    pub mode_input: ModeInput,
    /// Apply tanh to the combiner output.
    pub output_tanh: bool,
}

impl Default for QuadNetConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 7,
            hidden_width: 20,
            latent_dim: None,
            mode_input: ModeInput::Components,
            output_tanh: false,
        }
    }
}

/// The operator network shared by both correction models:
/// `combiner(branch(modes) ⊙ trunk(x) [⊙ param_branch(μ)])`.
///
/// The combiner emits `S · d_field` values, one block of `S = r(r+1)/2`
/// per field component.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNet {
    pub(crate) r: usize,
    pub(crate) d: usize,
    pub(crate) d_field: usize,
    pub(crate) d_mu: usize,
    pub(crate) mode_input: ModeInput,
    pub(crate) branch: Mlp,
    pub(crate) param_branch: Option<Mlp>,
    pub(crate) trunk: Mlp,
    pub(crate) combiner: Mlp,
    pub(crate) normalizer: Normalizer,
}

fn hidden_sizes(input: usize, cfg: &QuadNetConfig, output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(core::iter::repeat(cfg.hidden_width).take(cfg.hidden_layers));
    s.push(output);
    s
}

impl OperatorNet {
    fn build(
        cfg: &QuadNetConfig,
        r: usize,
        d_field: usize,
        points: &DenseMatrix,
        mode_values: &DenseMatrix,
        params: Option<&DenseMatrix>,
        seed: u64,
    ) -> Result<Self> {
        if r == 0 || d_field == 0 {
            return Err(invalid!("r and d_field must be positive"));
        }
        if mode_values.cols() != r * d_field {
            return Err(invalid!(
                "mode values have {} columns, expected r·d_field = {}",
                mode_values.cols(),
                r * d_field
            ));
        }
        if cfg.hidden_layers > 0 && cfg.hidden_width == 0 {
            return Err(invalid!("hidden width must be positive"));
        }
        let p = cfg.latent_dim.unwrap_or(quad_dim(r));
        if p == 0 {
            return Err(invalid!("latent dimension must be positive"));
        }
        let d = points.cols();
        let normalizer = Normalizer::fit(points, mode_values, d_field, params, cfg.mode_input)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch = Mlp::with_rng(&hidden_sizes(cfg.mode_input.features(r, d_field), cfg, p), &mut rng)?;
        let (d_mu, param_branch) = match params {
            Some(pm) => (pm.cols(), Some(Mlp::with_rng(&hidden_sizes(pm.cols(), cfg, p), &mut rng)?)),
            None => (0, None),
        };
        let trunk = Mlp::with_rng(&hidden_sizes(d, cfg, p), &mut rng)?;
        let mut combiner = Mlp::with_rng(&[p, quad_dim(r) * d_field], &mut rng)?;
        if cfg.output_tanh {
            combiner.set_output_activation(Activation::Tanh);
        }
        Ok(Self {
            r,
            d,
            d_field,
            d_mu,
            mode_input: cfg.mode_input,
            branch,
            param_branch,
            trunk,
            combiner,
            normalizer,
        })
    }

    /// Reassembles a network from its parts, checking every shape.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        r: usize,
        d_field: usize,
        mode_input: ModeInput,
        branch: Mlp,
        param_branch: Option<Mlp>,
        trunk: Mlp,
        combiner: Mlp,
        normalizer: Normalizer,
    ) -> Result<Self> {
        let p = branch.output_dim();
        if r == 0 || d_field == 0 {
            return Err(invalid!("r and d_field must be positive"));
        }
        if branch.input_dim() != mode_input.features(r, d_field) {
            return Err(invalid!("branch input {} does not match the mode features", branch.input_dim()));
        }
        if trunk.output_dim() != p || param_branch.as_ref().is_some_and(|m| m.output_dim() != p) {
            return Err(invalid!("sub-network outputs must share the latent dimension {}", p));
        }
        if combiner.input_dim() != p || combiner.output_dim() != quad_dim(r) * d_field {
            return Err(invalid!("combiner must map {} → {}", p, quad_dim(r) * d_field));
        }
        let d = trunk.input_dim();
        let d_mu = param_branch.as_ref().map_or(0, |m| m.input_dim());
        if normalizer.coord_lo.len() != d
            || normalizer.coord_hi.len() != d
            || normalizer.param_lo.len() != d_mu
            || normalizer.param_hi.len() != d_mu
            || normalizer.mode_scale.len() != r
        {
            return Err(invalid!("normalizer constants do not match the network dimensions"));
        }
        Ok(Self {
            r,
            d,
            d_field,
            d_mu,
            mode_input,
            branch,
            param_branch,
            trunk,
            combiner,
            normalizer,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn d_field(&self) -> usize {
        self.d_field
    }

    pub fn d_mu(&self) -> usize {
        self.d_mu
    }

    pub fn latent_dim(&self) -> usize {
        self.branch.output_dim()
    }

    pub fn quad_dim(&self) -> usize {
        quad_dim(self.r)
    }

    pub fn mode_input(&self) -> ModeInput {
        self.mode_input
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn branch(&self) -> &Mlp {
        &self.branch
    }

    pub fn branch_mut(&mut self) -> &mut Mlp {
        &mut self.branch
    }

    pub fn param_branch(&self) -> Option<&Mlp> {
        self.param_branch.as_ref()
    }

    pub fn param_branch_mut(&mut self) -> Option<&mut Mlp> {
        self.param_branch.as_mut()
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn combiner(&self) -> &Mlp {
        &self.combiner
    }

    pub fn combiner_mut(&mut self) -> &mut Mlp {
        &mut self.combiner
    }

    pub(crate) fn nets(&self) -> impl Iterator<Item = &Mlp> {
        core::iter::once(&self.branch)
            .chain(self.param_branch.as_ref())
            .chain([&self.trunk, &self.combiner])
    }

    pub fn param_count(&self) -> usize {
        self.nets().map(Mlp::param_count).sum()
    }

    /// Flat parameters: branch, parameter branch, trunk, combiner.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in self.nets() {
            net.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(invalid!("{} parameters for a network with {}", flat.len(), self.param_count()));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("parameters must be finite"));
        }
        let mut k = self.branch.read_params(flat);
        if let Some(pb) = self.param_branch.as_mut() {
            k += pb.read_params(&flat[k..]);
        }
        k += self.trunk.read_params(&flat[k..]);
        self.combiner.read_params(&flat[k..]);
        Ok(())
    }

    pub(crate) fn mode_features(&self, mode_values: &DenseMatrix) -> Result<Vec<f64>> {
        if mode_values.cols() != self.r * self.d_field {
            return Err(invalid!(
                "mode values have {} columns, model expects {}",
                mode_values.cols(),
                self.r * self.d_field
            ));
        }
        let width = self.mode_input.features(self.r, self.d_field);
        let mut out = vec![0.0; mode_values.rows() * width];
        for (i, chunk) in out.chunks_exact_mut(width).enumerate() {
            self.normalizer
                .modes_into(mode_values.row(i), self.d_field, self.mode_input, chunk);
        }
        Ok(out)
    }

    pub(crate) fn coord_features(&self, points: &DenseMatrix) -> Result<Vec<f64>> {
        if points.cols() != self.d {
            return Err(invalid!("points have dimension {}, model expects {}", points.cols(), self.d));
        }
        let mut out = vec![0.0; points.rows() * self.d];
        for (i, chunk) in out.chunks_exact_mut(self.d).enumerate() {
            self.normalizer.coords_into(points.row(i), chunk);
        }
        Ok(out)
    }

    pub(crate) fn param_features(&self, params: &DenseMatrix) -> Result<Vec<f64>> {
        if params.cols() != self.d_mu {
            return Err(invalid!("parameters have dimension {}, model expects {}", params.cols(), self.d_mu));
        }
        let mut out = vec![0.0; params.rows() * self.d_mu];
        if self.d_mu > 0 {
            for (j, chunk) in out.chunks_exact_mut(self.d_mu).enumerate() {
                self.normalizer.params_into(params.row(j), chunk);
            }
        }
        Ok(out)
    }

    /// Operator rows at each point: `n × (S · d_field)`. Each row depends
    /// only on its own point, so subsets of points give identical rows.
    pub fn operator_rows(&self, mode_values: &DenseMatrix, points: &DenseMatrix, mu: Option<&[f64]>) -> Result<DenseMatrix> {
        let n = points.rows();
        if mode_values.rows() != n {
            return Err(invalid!("{} mode rows for {} points", mode_values.rows(), n));
        }
        let p = self.latent_dim();
        let mf = self.mode_features(mode_values)?;
        let cf = self.coord_features(points)?;
        let bt = self.branch.forward_batch(&mf, n);
        let tt = self.trunk.forward_batch(&cf, n);
        let mut h: Vec<f64> = bt.output().iter().zip(tt.output()).map(|(b, t)| b * t).collect();
        if let Some(pb) = &self.param_branch {
            let mu = mu.ok_or_else(|| invalid!("this model needs a parameter value"))?;
            if mu.len() != self.d_mu {
                return Err(invalid!("parameter has dimension {}, model expects {}", mu.len(), self.d_mu));
            }
            let mut pf = vec![0.0; self.d_mu];
            self.normalizer.params_into(mu, &mut pf);
            let pv = pb.forward_batch(&pf, 1);
            for row in h.chunks_exact_mut(p) {
                for (hv, pq) in row.iter_mut().zip(pv.output()) {
                    *hv *= pq;
                }
            }
        }
        let out = self.combiner.forward_batch(&h, n);
        DenseMatrix::new(n, self.combiner.output_dim(), out.output().to_vec())
    }

    fn single_row(&self, modes_at_x: &[f64], x: &[f64], mu: Option<&[f64]>) -> Result<Vec<f64>> {
        if modes_at_x.len() != self.r * self.d_field {
            return Err(invalid!(
                "{} mode values, model expects {}",
                modes_at_x.len(),
                self.r * self.d_field
            ));
        }
        if x.len() != self.d {
            return Err(invalid!("point has dimension {}, model expects {}", x.len(), self.d));
        }
        let m = DenseMatrix::new(1, modes_at_x.len(), modes_at_x.to_vec())?;
        let pt = DenseMatrix::new(1, x.len(), x.to_vec())?;
        Ok(self.operator_rows(&m, &pt, mu)?.into_vec())
    }

    /// Correction at each point, `i * d_field + c` layout.
    pub fn correction(&self, mode_values: &DenseMatrix, points: &DenseMatrix, a: &[f64], mu: Option<&[f64]>) -> Result<Vec<f64>> {
        if a.len() != self.r {
            return Err(invalid!("{} coefficients for a model with r = {}", a.len(), self.r));
        }
        let s = quad_dim(self.r);
        let mut q = vec![0.0; s];
        pairwise_products_into(a, &mut q);
        let rows = self.operator_rows(mode_values, points, mu)?;
        let mut out = vec![0.0; points.rows() * self.d_field];
        for i in 0..points.rows() {
            let row = rows.row(i);
            for c in 0..self.d_field {
                let block = &row[c * s..(c + 1) * s];
                out[i * self.d_field + c] = block.iter().zip(&q).map(|(x, y)| x * y).sum();
            }
        }
        Ok(out)
    }
}

/// Common interface of the two trainable correction models.
pub trait CorrectionModel {
    fn net(&self) -> &OperatorNet;
    fn net_mut(&mut self) -> &mut OperatorNet;
    /// Whether evaluations need a parameter value.
    fn uses_parameter(&self) -> bool {
        self.net().d_mu > 0
    }
}

/// DeepONet-style correction: operator continuous in space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadNetModel {
    net: OperatorNet,
}

/// MIONet-style correction: operator continuous in space and parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadNetMuModel {
    net: OperatorNet,
}

impl QuadNetModel {
    /// `mode_values` are the modes at `points` (one row per point), used
    /// together with `points` to fix the input normalizers.
    pub fn new(cfg: &QuadNetConfig, r: usize, d_field: usize, points: &DenseMatrix, mode_values: &DenseMatrix, seed: u64) -> Result<Self> {
        Ok(Self {
            net: OperatorNet::build(cfg, r, d_field, points, mode_values, None, seed)?,
        })
    }

    pub fn from_net(net: OperatorNet) -> Result<Self> {
        if net.param_branch.is_some() {
            return Err(invalid!("a QuadNet has no parameter branch"));
        }
        Ok(Self { net })
    }
}

impl QuadNetMuModel {
    /// As [`QuadNetModel::new`]; `params` (training parameters, one per row)
    /// fix the parameter scaling.
    pub fn new(
        cfg: &QuadNetConfig,
        r: usize,
        d_field: usize,
        points: &DenseMatrix,
        mode_values: &DenseMatrix,
        params: &DenseMatrix,
        seed: u64,
    ) -> Result<Self> {
        if params.cols() == 0 {
            return Err(invalid!("parameters must have at least one component"));
        }
        Ok(Self {
            net: OperatorNet::build(cfg, r, d_field, points, mode_values, Some(params), seed)?,
        })
    }

    pub fn from_net(net: OperatorNet) -> Result<Self> {
        if net.param_branch.is_none() {
            return Err(invalid!("a QuadNet-μ needs a parameter branch"));
        }
        Ok(Self { net })
    }
}

impl CorrectionModel for QuadNetModel {
    fn net(&self) -> &OperatorNet {
        &self.net
    }

    fn net_mut(&mut self) -> &mut OperatorNet {
        &mut self.net
    }
}

impl CorrectionModel for QuadNetMuModel {
    fn net(&self) -> &OperatorNet {
        &self.net
    }

    fn net_mut(&mut self) -> &mut OperatorNet {
        &mut self.net
    }
}

/// Operator row at one point (length `S · d_field`).
pub fn quadnet_eval(model: &QuadNetModel, modes_at_x: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    model.net.single_row(modes_at_x, x, None)
}

pub fn quadnet_mu_eval(model: &QuadNetMuModel, modes_at_x: &[f64], x: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    model.net.single_row(modes_at_x, x, Some(mu))
}

/// Correction field on the mesh the basis was computed on. `mu` is ignored
/// by models without a parameter branch.
pub fn predict_correction<M: CorrectionModel + ?Sized>(model: &M, basis: &PodBasis, a: &[f64], mu: Option<&[f64]>) -> Result<Vec<f64>> {
    let net = model.net();
    check_basis(net, basis)?;
    let layout = basis.layout().ok_or_else(|| invalid!("basis has no point layout"))?;
    net.correction(&basis.mode_values_at_nodes()?, &layout.points, a, mu)
}

/// Correction at arbitrary points given the mode values there.
pub fn predict_correction_at<M: CorrectionModel + ?Sized>(
    model: &M,
    mode_values: &DenseMatrix,
    points: &DenseMatrix,
    a: &[f64],
    mu: Option<&[f64]>,
) -> Result<Vec<f64>> {
    model.net().correction(mode_values, points, a, mu)
}

fn check_basis(net: &OperatorNet, basis: &PodBasis) -> Result<()> {
    if basis.r() != net.r {
        return Err(invalid!("basis has r = {}, model has r = {}", basis.r(), net.r));
    }
    if let Some(l) = basis.layout() {
        if l.d_field != net.d_field {
            return Err(invalid!("basis has d_field = {}, model has {}", l.d_field, net.d_field));
        }
    }
    Ok(())
}
