use thiserror::Error;

/// Exit codes: 0 ok, 2 usage/config, 3 numerical divergence, 4 I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<optistate_sim::SimError> for CliError {
    fn from(e: optistate_sim::SimError) -> Self {
        match e {
            optistate_sim::SimError::Config(m) => CliError::Config(m),
            optistate_sim::SimError::Io(io) => CliError::Io(io.to_string()),
            optistate_sim::SimError::Format(m) => CliError::Io(format!("dataset format: {m}")),
            optistate_sim::SimError::Simulation { t, source } => {
                CliError::Numerical(format!("simulation failed at t = {t:.3}s: {source}"))
            }
        }
    }
}

impl From<optistate_nn::NnError> for CliError {
    fn from(e: optistate_nn::NnError) -> Self {
        use optistate_nn::NnError::*;
        match e {
            Shape(m) => CliError::Config(format!("shape: {m}")),
            ConfigMismatch(m) => CliError::Config(format!("checkpoint/config mismatch: {m}")),
            MissingTruth { trajectory, frame } => CliError::Config(format!(
                "trajectory {trajectory} frame {frame} lacks ground truth"
            )),
            Diverged { step, loss } => {
                CliError::Numerical(format!("training diverged at step {step} (loss {loss})"))
            }
            Io(io) => CliError::Io(io.to_string()),
            Format(m) => CliError::Io(format!("checkpoint format: {m}")),
            Core(c) => CliError::Numerical(c.to_string()),
        }
    }
}

impl From<optistate_core::CoreError> for CliError {
    fn from(e: optistate_core::CoreError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
