//! Small MLP engine with reverse-mode gradients and Adam, and the QuadNet
//! correction models built on it.
//!
//! Both models evaluate, at a point `x`, a row of the quadratic operator
//! from the POD modes at `x`, the coordinates and (for QuadNet-μ) the
//! parameter. The correction there is that row dotted with the pairwise
//! products of the reduced coefficients.

mod adam;
mod checkpoint;
mod loss;
mod mlp;
mod model;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, AnyCorrectionModel, CHECKPOINT_VERSION};
pub use loss::{gradients, relative_loss, training_loss, CorrectionData, DEGENERATE_NORM2};
pub use mlp::{mlp_forward, mlp_init, Activation, Mlp, Tape};
pub use model::{
    predict_correction, predict_correction_at, quadnet_eval, quadnet_mu_eval, CorrectionModel, ModeInput, Normalizer,
    OperatorNet, QuadNetConfig, QuadNetModel, QuadNetMuModel,
};
pub use train::{train, LrSchedule, TrainConfig, TrainReport};
