use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("momentum map singular: |D31| = {0:e}")]
    SingularMomentumMap(f64),
    #[error("impact constraint rank deficient")]
    SingularImpact,
    #[error("state not on the impact guard: p2 = {p2:e}, p2_dot = {p2_dot:e}")]
    NotOnGuard { p2: f64, p2_dot: f64 },
    #[error("post-impact swing foot moves into the ground: p2_dot = {0:e}")]
    PenetrationImpact(f64),
    #[error("q_N = {q:.6} outside gait domain [{lo:.6}, {hi:.6}]")]
    OutOfRange { q: f64, lo: f64, hi: f64 },
    #[error("boundary constraints infeasible: {0}")]
    InfeasibleBoundary(String),
    #[error("quadrature did not reach tolerance (estimate {0:e})")]
    QuadratureFailure(f64),
    #[error("no periodic gait: {0}")]
    NoPeriodicGait(String),
    #[error("decoupling matrix singular (condition {0:e})")]
    SingularDecoupling(f64),
    #[error("q_N velocity reversed at t = {t:.4} (dq_N = {dq_n:e})")]
    SpeedReversal { t: f64, dq_n: f64 },
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("robot fell over at t = {t:.4} (q_N = {q_n:.4})")]
    FellOver { t: f64, q_n: f64 },
    #[error("step {step} exceeded {limit} s")]
    StallTimeout { step: usize, limit: f64 },
    #[error("perturbation factor {factor} for `{key}` outside (0.5, 2.0)")]
    OutOfBounds { key: String, factor: f64 },
    #[error("degenerate gains: |alpha1 - alpha2| = {0:e}")]
    DegenerateGains(f64),
    #[error("no return to the impact surface: {0}")]
    NoReturn(String),
    #[error("gait file: {0}")]
    GaitFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
