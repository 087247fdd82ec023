use thiserror::Error;

/// Errors raised across the analysis and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("angle undefined at target")]
    AngleUndefined,

    #[error("failed thruster index {0} out of range 1..={1}")]
    ThrusterIndex(usize, usize),

    #[error("empty set")]
    EmptySet,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is not Hurwitz (max real part {0:.3e})")]
    NotHurwitz(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("steering failed: endpoint miss {position_m:.3e} m / {velocity_mps:.3e} m/s")]
    SteeringFailed { position_m: f64, velocity_mps: f64 },

    #[error("keep-out sphere violated at t = {t_s:.1} s (distance {distance_m:.3} m)")]
    KosViolation { t_s: f64, distance_m: f64 },

    #[error("tracking infeasible at this (L, tau): {0}")]
    TrackingInfeasible(String),

    #[error("buffer underrun: {0}")]
    BufferUnderrun(String),

    #[error("budget exceeds P_Tc: {0}")]
    BudgetExceedsSet(String),

    #[error("stabilization horizon exceeds cap of {0} s")]
    HorizonCap(f64),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
