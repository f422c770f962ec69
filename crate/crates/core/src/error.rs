use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GarzError {
    #[error("invalid interval [{a}, {b}]: lower end exceeds upper end")]
    InvalidInterval { a: f64, b: f64 },

    #[error("unknown kernel name `{0}` (expected const, lin, lin2, conc or conv)")]
    UnknownKernel(String),

    #[error("kernel reach must be positive, got {0}")]
    NonPositiveReach(f64),

    #[error("infeasible control speed {vbar}: exceeds marker {omega}")]
    InfeasibleControl { vbar: f64, omega: f64 },

    #[error("equilibrium density is zero for vbar = {vbar}, omega = {omega}; no finite gap exists")]
    ZeroEquilibriumDensity { vbar: f64, omega: f64 },

    #[error("inadmissible velocity model: sup of d(v)/d(rho) is {0}, must be negative")]
    InadmissibleVelocity(f64),

    #[error("positions are not strictly increasing at index {index}")]
    CorruptedState { index: usize },

    #[error("density profile has zero total mass")]
    ZeroMass,

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("step size underflow at t = {t}: h = {h}")]
    StepSizeUnderflow { t: f64, h: f64, state: Vec<f64> },

    #[error("negative density {value} in cell {cell} at t = {t}; CFL condition violated")]
    NegativeDensity { t: f64, cell: usize, value: f64 },

    #[error("window mass {mass} is below threshold {threshold}")]
    InsufficientWindowMass { mass: f64, threshold: f64 },

    #[error("mismatched physics between trajectories: {0}")]
    MismatchedPhysics(String),

    #[error("unknown theorem id `{0}`")]
    UnknownTheorem(String),

    #[error("time {0} is not a sample of the trajectory")]
    MissingSample(f64),
}

pub type Result<T> = std::result::Result<T, GarzError>;
