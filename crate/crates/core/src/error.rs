use thiserror::Error;

/// Errors surfaced by the core model and filter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// Pitch is within ~1e-6 rad of ±π/2; Euler angles are degenerate and the
    /// caller must choose a fallback.
    #[error("gimbal lock: pitch within 1e-6 rad of ±π/2")]
    GimbalLock,

    /// World-frame inertia tensor is not invertible (bad configuration).
    #[error("singular world-frame inertia tensor (|det| = {determinant:.3e})")]
    SingularInertia { determinant: f64 },

    /// An odometry measurement was requested with no feet in contact.
    #[error("no feet in contact: odometry undefined")]
    NoContact,

    /// The innovation covariance cannot be inverted reliably.
    #[error("innovation covariance singular (condition = {condition:.3e})")]
    InnovationSingular { condition: f64 },

    /// The force allocator cannot reach the commanded acceleration within
    /// constraints; the reference is inconsistent with the contact state.
    #[error("force allocation infeasible: residual {residual:.3e} exceeds {limit:.3e}")]
    Infeasible { residual: f64, limit: f64 },

    /// A vector or matrix argument has the wrong dimensions.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// Parameters violate a documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
