//! Learned correction on top of the model-based filter.
//!
//! Two trained components: a ViT autoencoder compressing depth images into a
//! latent vector, and a stacked GRU that consumes a sliding window of filter
//! output, depth latent, leg odometry, IMU accelerations, and contact forces
//! to emit a corrected trunk state plus a learned estimate of its own error.
//! All forward passes and gradients are written out analytically; training
//! is plain (decoupled-)Adam over named tensors.

pub mod augment;
pub mod checkpoint;
pub mod error;
pub mod features;
pub mod gru;
pub mod normalizer;
pub mod optim;
pub mod pipeline;
pub mod tensor;
pub mod vit;

pub use error::NnError;
pub use features::{FeatureExtractor, InputMask, TrajectoryFeatures};
pub use gru::{GruConfig, GruParams, GruTrainConfig};
pub use normalizer::Normalizer;
pub use pipeline::{EstimatorPipeline, PipelineEstimate};
pub use vit::{VitConfig, VitParams, VitTrainConfig};
