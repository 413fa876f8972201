use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A force or diagnostic was requested at the central singularity.
    #[error("position at the central singularity (r = {r:e})")]
    Singularity { r: f64 },

    #[error("invalid orbit: {0}")]
    InvalidOrbit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mesh stencil touched the lattice node holding the central mass.
    #[error("mesh stencil touches the singular node ({i}, {j})")]
    SingularStencil { i: i64, j: i64 },

    #[error("collision: r = {r:e} below collision radius {radius:e} at t = {t}")]
    Collision { t: f64, r: f64, radius: f64 },

    #[error("step size underflow at t = {t}: h = {h:e} < h_min = {h_min:e}")]
    StepSizeUnderflow { t: f64, h: f64, h_min: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("t = {t} outside the solution span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("no sign change of the radial velocity in [{start}, {end}]")]
    NoSignChange { start: f64, end: f64 },

    #[error("bracket [{start}, {end}] contains {count} sign changes")]
    MultipleSignChanges { start: f64, end: f64, count: usize },

    #[error("no local minimum of the radial distance in the trajectory")]
    NoMinimum,

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("need at least {needed} events, got {got}")]
    InsufficientEvents { needed: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("wall-clock budget of {0} s exceeded")]
    Timeout(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
