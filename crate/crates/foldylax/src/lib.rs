//! Time-domain multiple scattering by a cluster of small resonant bubbles.
//!
//! The bubble amplitudes obey a delayed, coupled system of oscillators
//!
//! ```text
//! ω_M² Y_m'' + Y_m + Σ_{j≠m} q_mj Y_j''(t − τ_mj) = F_m(t)
//! ```
//!
//! which is solved here three independent ways: a Neumann series of
//! convolution operators ([`kernel`]), a frequency-domain direct solve on a
//! Bromwich line ([`laplace`]) and a method-of-steps integrator
//! ([`dde_oracle`]). [`paths`] handles the weighted-path expansion of the
//! atomic part of the kernel, [`field`] the scattered field and ε-scaling.

pub mod cluster;
pub mod conv;
pub mod dde_oracle;
pub mod field;
pub mod kernel;
pub mod laplace;
pub mod paths;
pub mod signal;

pub use cluster::{BubbleCluster, CouplingData, MaterialParams, OmegaMode};
pub use signal::{CausalSignal, PulseSpec, TimeGrid};

/// Point in space, metres.
pub type Vec3 = [f64; 3];

pub(crate) fn dist(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("bubbles {i} and {j} have coincident centers")]
    CoincidentCenters { i: usize, j: usize },
    #[error("omega mode FromLambdaDB needs Lambda_dB on the cluster")]
    MissingLambda,
    #[error("coupling derivation needs identical bubbles: {0}")]
    Heterogeneous(String),
    #[error("point coincides with the source")]
    CoincidentSource,
    #[error("source lies inside bubble {0}")]
    SourceInsideBubble(usize),
    #[error("observation point lies inside bubble {0}")]
    ObservationInsideBubble(usize),
    #[error("observation too close to the cluster: d_min = {d_min:.3e} m below threshold {threshold:.3e} m")]
    ObservationTooClose { d_min: f64, threshold: f64 },
    #[error("signals live on different time grids")]
    GridMismatch,
    #[error("derivative order {r} does not fit a grid of {n} samples")]
    OrderTooLarge { r: usize, n: usize },
    #[error("empty frequency band [{lo}, {hi}]")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("band edge {hi:.4e} rad/s exceeds the grid Nyquist frequency {nyquist:.4e} rad/s")]
    BandAboveNyquist { hi: f64, nyquist: f64 },
    #[error("frequency samples are not conjugate symmetric (mismatch {mismatch:.3e})")]
    NotConjugateSymmetric { mismatch: f64 },
    #[error("frequency grid is not laid out for this time grid")]
    FrequencyLayout,
    #[error("s = {sigma} + i{omega} lies within 1e-8 of a pole of the rational factor")]
    PoleProximity { sigma: f64, omega: f64 },
    #[error("I + T is singular at omega = {omega:.6e} (condition estimate {condition:.3e})")]
    SingularSystem { omega: f64, condition: f64 },
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("need terms up to order {needed}, solution holds {available}")]
    OrderUnavailable { needed: usize, available: usize },
    #[error("path enumeration exceeded the budget of {budget} paths")]
    PathBudgetExceeded { budget: usize },
    #[error("empty path list")]
    EmptyPaths,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("time step {dt:.3e} s is not below the smallest delay {tau_min:.3e} s")]
    StepTooLarge { dt: f64, tau_min: f64 },
    #[error("delay integration diverged at t = {t:.6e} s (|Y| = {magnitude:.3e}, limit {limit:.3e})")]
    DdeDivergence { t: f64, magnitude: f64, limit: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
