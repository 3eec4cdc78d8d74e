//! A small, dependency-light convolutional network framework sized for
//! 32x32 single-channel glyph classification on a CPU.
//!
//! Networks are described by [`NetworkSpec`] (usually parsed from an
//! architecture string with [`parse_arch`]) and carry their weights in a
//! [`ParamSet`]. The same code runs on `f32` for training and on `f64` for
//! gradient checking.

pub mod io;
pub mod net;
pub mod optim;
pub mod params;
pub mod spec;
pub mod tensor;
pub mod train;

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use net::{forward, loss, loss_and_grad, Mode};
pub use optim::{adam_step, sgd_momentum_step, AdamState, Optimizer, OptimizerKind, SgdState};
pub use params::{Init, LayerParams, ParamSet};
pub use spec::{parse_arch, parse_arch_with, preset, LayerSpec, NetworkSpec, Shape, PRESETS};
pub use tensor::{Real, Tensor};
pub use train::{
    argmax, evaluate, predict, train, train_with, EpochRecord, History, LabeledSet, Model,
    Predictor, StopReason, TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("architecture parse error: {0}")]
    Parse(String),
    #[error("invalid network: {0}")]
    Spec(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model load error: {0}")]
    Load(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
