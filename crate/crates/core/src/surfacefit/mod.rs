//! Runtime fitting of a smooth elevation surface `g(x, y) -> z` to a single scan.
//!
//! The surface is a small SiLU MLP. Points below it are penalized quadratically and
//! points above it by a Huber penalty, so the fit settles on the lowest continuous
//! surface and largely ignores objects standing on it. Optimization is full-batch
//! AdamW with a reduce-on-plateau learning rate and early stopping on the exponential
//! moving average of the loss.

mod fit;
mod loss;
mod mlp;
mod optim;

pub use fit::{
    fit_elevation, loss_and_grad, mean_loss, residuals, FitStats, MIN_FIT_POINTS,
};
pub use loss::{asymmetric_loss, asymmetric_loss_derivative, huber, LossConfig};
pub use mlp::{silu, ElevationModel, ModelConfig};
pub use optim::{AdamW, EmaEarlyStop, OptimConfig, PlateauScheduler, Precision, StopSignal};
