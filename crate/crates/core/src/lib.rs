//! The Sonnet forecaster: joint embedding, learnable wavelet atoms, coherence
//! attention, a unitary Koopman operator and a convolutional decoder, plus the
//! data, metric and training machinery around them.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod koopman;
pub mod metrics;
pub mod model;
pub mod mvca;
pub mod trainer;
pub mod wavelet;

pub use error::{Error, Result};
pub use model::{Ablation, ModelConfig, SonnetModel};
pub use trainer::{train, TrainConfig, TrainHistory};
