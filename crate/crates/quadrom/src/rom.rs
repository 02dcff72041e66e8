//! The four reduced-order models on a common POD-RBF backbone.

use quadrom_core::interp::{interpolate_nodal, ModeInterp};
use quadrom_core::metrics::relative_error;
use quadrom_core::neural::{
    predict_correction, predict_correction_at, train, AnyCorrectionModel, CorrectionData, QuadNetConfig, QuadNetModel,
    QuadNetMuModel, TrainConfig, TrainReport,
};
use quadrom_core::pod::{exact_correction, rbf_eval, rbf_fit, KernelKind, PodBasis, RbfInterpolant, SnapshotSet};
use quadrom_core::quadls::{fit_quad_ls, pairwise_products, QuadOperatorLs};
use quadrom_core::DenseMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    PodRbf,
    QuadLs,
    QuadNet,
    QuadNetMu,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::PodRbf, ModelKind::QuadLs, ModelKind::QuadNet, ModelKind::QuadNetMu];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PodRbf => "pod_rbf",
            ModelKind::QuadLs => "quad_ls",
            ModelKind::QuadNet => "quadnet",
            ModelKind::QuadNetMu => "quadnet_mu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::QuadNet | ModelKind::QuadNetMu)
    }
}

/// POD basis of the training snapshots plus the RBF map `μ → a(μ)`.
#[derive(Debug, Clone)]
pub struct RomBase {
    pub basis: PodBasis,
    pub rbf: RbfInterpolant,
    pub train: SnapshotSet,
}

impl RomBase {
    pub fn fit(train: &SnapshotSet, r: usize, kernel: KernelKind) -> Result<Self> {
        let basis = PodBasis::from_snapshots(train, r)?;
        let mut coeffs = Vec::with_capacity(train.len() * r);
        for j in 0..train.len() {
            coeffs.extend(basis.project(train.snapshot(j))?);
        }
        let coeffs = DenseMatrix::new(train.len(), r, coeffs)?;
        let rbf = rbf_fit(train.params(), &coeffs, kernel)?;
        Ok(Self {
            basis,
            rbf,
            train: train.clone(),
        })
    }

    pub fn r(&self) -> usize {
        self.basis.r()
    }

    pub fn coefficients(&self, mu: &[f64]) -> Result<Vec<f64>> {
        Ok(rbf_eval(&self.rbf, mu)?)
    }

    /// Projected training coefficients and exact corrections at `nodes`.
    pub fn training_data(&self, nodes: Option<&[usize]>) -> Result<CorrectionData> {
        Ok(CorrectionData::from_snapshots(&self.train, &self.basis, nodes)?)
    }

    pub fn fit_quad_ls(&self) -> Result<QuadOperatorLs> {
        let data = self.training_data(None)?;
        let q = (0..data.n_snapshots())
            .map(|j| pairwise_products(data.coefficients.row(j)))
            .collect::<quadrom_core::Result<Vec<_>>>()?;
        Ok(fit_quad_ls(&data.corrections, &q)?)
    }

    fn mesh_points(&self) -> &DenseMatrix {
        self.train.points()
    }
}

/// A correction term added to the POD-RBF reconstruction.
#[derive(Debug, Clone)]
pub enum Corrector {
    None,
    Ls(QuadOperatorLs),
    Net(AnyCorrectionModel),
}

/// Reduced field, correction and their sum, on the full mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub coefficients: Vec<f64>,
    pub reduced: Vec<f64>,
    pub correction: Vec<f64>,
    pub corrected: Vec<f64>,
}

impl Corrector {
    pub fn correction(&self, base: &RomBase, a: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Corrector::None => vec![0.0; base.basis.len()],
            Corrector::Ls(op) => op.eval(a)?,
            Corrector::Net(m) => predict_correction(m, &base.basis, a, Some(mu))?,
        })
    }

    pub fn predict(&self, base: &RomBase, mu: &[f64]) -> Result<Prediction> {
        let a = base.coefficients(mu)?;
        let reduced = base.basis.reconstruct(&a)?;
        let correction = self.correction(base, &a, mu)?;
        let corrected = reduced.iter().zip(&correction).map(|(u, t)| u + t).collect();
        Ok(Prediction {
            coefficients: a,
            reduced,
            correction,
            corrected,
        })
    }

    /// Prediction at arbitrary points, with mode values transferred from
    /// the mesh by `interp`. Quad-LS has no spatial representation and is
    /// only available on the mesh.
    pub fn predict_at(&self, base: &RomBase, mu: &[f64], points: &DenseMatrix, interp: ModeInterp) -> Result<Prediction> {
        let d_field = base.train.d_field();
        let modes = interpolate_nodal(base.mesh_points(), &base.basis.mode_values_at_nodes()?, points, interp)?;
        let a = base.coefficients(mu)?;
        let n = points.rows();
        let r = base.r();
        let mut reduced = vec![0.0; n * d_field];
        for i in 0..n {
            let row = modes.row(i);
            for c in 0..d_field {
                reduced[i * d_field + c] = (0..r).map(|m| a[m] * row[m * d_field + c]).sum();
            }
        }
        let correction = match self {
            Corrector::None => vec![0.0; n * d_field],
            Corrector::Ls(_) => {
                return Err(Error::Config("the least-squares closure is defined on mesh nodes only".into()));
            }
            Corrector::Net(m) => predict_correction_at(m, &modes, points, &a, Some(mu))?,
        };
        let corrected = reduced.iter().zip(&correction).map(|(u, t)| u + t).collect();
        Ok(Prediction {
            coefficients: a,
            reduced,
            correction,
            corrected,
        })
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Trained to `min_loss`, or nothing to train.
    Ok,
    NotConverged,
    Diverged,
    /// Not attempted (sweep cell outside its valid range).
    Skipped,
    /// Every training correction is zero; there is nothing to learn.
    Degenerate,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::NotConverged => "not_converged",
            Status::Diverged => "diverged",
            Status::Skipped => "skipped",
            Status::Degenerate => "degenerate_target",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub seed: u64,
    pub status: Status,
    pub best_loss: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Best attempt's model; `None` when every attempt diverged.
    pub model: Option<AnyCorrectionModel>,
    pub report: Option<TrainReport>,
    pub status: Status,
    pub attempts: Vec<Attempt>,
}

/// Builds and trains a QuadNet or QuadNet-μ model on `data`.
///
/// Input scalings are fitted on the full mesh so that partial-data models
/// see the same coordinates box at evaluation time. An attempt that does
/// not reach `min_loss` or diverges is retried with the next seeds, up to
/// `retries` extra times; the attempt with the lowest loss is kept.
pub fn train_network(
    kind: ModelKind,
    base: &RomBase,
    data: &CorrectionData,
    net: &QuadNetConfig,
    cfg: &TrainConfig,
    retries: usize,
) -> Result<Trained> {
    let layout_points = base.mesh_points();
    let modes = base.basis.mode_values_at_nodes()?;
    let d_field = base.train.d_field();
    let mut best: Option<(AnyCorrectionModel, TrainReport)> = None;
    let mut attempts = Vec::new();
    for k in 0..=retries as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let mut model = match kind {
            ModelKind::QuadNet => AnyCorrectionModel::QuadNet(QuadNetModel::new(net, base.r(), d_field, layout_points, &modes, seed)?),
            ModelKind::QuadNetMu => AnyCorrectionModel::QuadNetMu(QuadNetMuModel::new(
                net,
                base.r(),
                d_field,
                layout_points,
                &modes,
                &data.params,
                seed,
            )?),
            _ => return Err(Error::Config(format!("{} is not a network model", kind.name()))),
        };
        match train(&mut model, data, cfg) {
            Ok(rep) => {
                let status = if rep.converged { Status::Ok } else { Status::NotConverged };
                log::info!(
                    "{} seed {}: {} after {} epochs, best loss {:.4e}",
                    kind.name(),
                    seed,
                    status.name(),
                    rep.epochs(),
                    rep.best_loss
                );
                attempts.push(Attempt {
                    seed,
                    status,
                    best_loss: rep.best_loss,
                    epochs: rep.epochs(),
                });
                if best.as_ref().is_none_or(|(_, b)| rep.best_loss < b.best_loss) {
                    best = Some((model, rep));
                }
                if status == Status::Ok {
                    break;
                }
            }
            Err(quadrom_core::Error::TrainingDiverged { epoch, history }) => {
                log::warn!("{} seed {} diverged at epoch {}", kind.name(), seed, epoch);
                attempts.push(Attempt {
                    seed,
                    status: Status::Diverged,
                    best_loss: f64::NAN,
                    epochs: history.len().saturating_sub(1),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let status = match &best {
        None => Status::Diverged,
        Some((_, rep)) if rep.converged => Status::Ok,
        Some(_) => Status::NotConverged,
    };
    let (model, report) = match best {
        Some((m, r)) => (Some(m), Some(r)),
        None => (None, None),
    };
    Ok(Trained {
        model,
        report,
        status,
        attempts,
    })
}

/// Relative error of the corrected prediction for each snapshot of `test`.
pub fn test_errors(base: &RomBase, corrector: &Corrector, test: &SnapshotSet) -> Result<Vec<f64>> {
    (0..test.len())
        .map(|j| {
            let p = corrector.predict(base, test.param(j))?;
            Ok(relative_error(test.snapshot(j), &p.corrected)?)
        })
        .collect()
}

/// Exact correction of `u` with respect to `basis`.
pub fn exact_correction_of(basis: &PodBasis, u: &[f64]) -> Result<Vec<f64>> {
    let a = basis.project(u)?;
    Ok(exact_correction(u, &basis.reconstruct(&a)?)?)
}
