use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// A configuration field is missing, unparseable, or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Bad magic, version, truncation, or channel mismatch in a dataset file.
    #[error("dataset format error: {0}")]
    Format(String),

    /// The closed-loop simulation failed (allocator infeasible, IK out of
    /// workspace, ...); indicates an inconsistent config.
    #[error("simulation failed at t = {t:.3}s: {source}")]
    Simulation {
        t: f64,
        source: optistate_core::CoreError,
    },
}
