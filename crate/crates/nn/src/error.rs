use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    /// Dimensions of an input disagree with the model configuration.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The training loss became non-finite.
    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    /// Supervised training needs ground truth on every frame.
    #[error("frame {frame} of trajectory {trajectory} lacks ground truth")]
    MissingTruth { trajectory: usize, frame: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Bad magic/version/tensor table in a checkpoint file.
    #[error("checkpoint format error: {0}")]
    Format(String),

    /// A checkpoint does not match the requested configuration.
    #[error("checkpoint/config mismatch: {0}")]
    ConfigMismatch(String),

    #[error(transparent)]
    Core(#[from] optistate_core::CoreError),
}
