//! Patchwise temperature-field reconstruction.
//!
//! A convolutional encoder-decoder maps the sparse sensor image to the whole
//! field; a small fully connected regressor maps the reading vector to the
//! cells next to the heat sink, where the field is steepest, and its output
//! replaces the convolutional estimate there.

pub mod checkpoint;
pub mod error;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod nn;
pub mod optim;
pub mod patch;
pub mod train;
pub mod unet;

pub use checkpoint::{Checkpoint, ModelKind};
pub use error::{Error, Result};
pub use loss::{field_loss, gradient_loss, patch_loss, total_loss};
pub use mlp::{Mlp, MlpConfig, NnBaselineConfig};
pub use model::{NnBaselineModel, ReconModel};
pub use patch::{stitch, PatchSpec};
pub use train::{train_nn_baseline, train_patch_mlp, train_unet, LossHistory, TrainConfig, Trained};
pub use unet::{UNet, UNetConfig};
