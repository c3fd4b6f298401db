//! Minimal tensor engine for the two CNN classifiers: layer forward/backward
//! passes, parameter sets, Adam and the checkpoint container.

pub mod checkpoint;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, StoredTensor};
pub use ops::{Activation, Padding};
pub use optim::{Adam, AdamConfig};
pub use params::{init_params, Init, Param, ParamSet, ParamSpec};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called before a forward pass was recorded")]
    NoForward,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}

/// Numeric mode selected by the `SSC_PRECISION` environment variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn from_env() -> Result<Precision, String> {
        match std::env::var("SSC_PRECISION") {
            Err(_) => Ok(Precision::F32),
            Ok(v) => match v.trim() {
                "32" | "" => Ok(Precision::F32),
                "64" => Ok(Precision::F64),
                other => Err(format!("SSC_PRECISION must be 32 or 64, got {other:?}")),
            },
        }
    }
}
