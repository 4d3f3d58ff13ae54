use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("black hole must be subextremal: |spin| = {spin} is not below mass = {mass}")]
    Subextremal { mass: f64, spin: f64 },

    #[error("invalid spacetime parameter: {0}")]
    InvalidParameter(String),

    #[error("expected four distinct real horizon roots, found {found}")]
    RootCount { found: usize },

    #[error("point outside the Boyer-Lindquist chart: {0}")]
    Chart(String),

    #[error("no spherical photon orbit at r = {r}: {reason}")]
    NoPhotonOrbit { r: f64, reason: String },

    #[error("step size underflow at s = {time} (h = {step:e})")]
    StepUnderflow {
        time: f64,
        step: f64,
        last_state: Vec<f64>,
    },

    #[error("non-finite state encountered at s = {time}")]
    NonFinite { time: f64 },

    #[error("invalid integrator configuration: {0}")]
    IntegratorConfig(String),

    #[error("system is not certified normally hyperbolic (r_star = {r_star}, mu_max = {mu_max})")]
    NotNormallyHyperbolic { r_star: u32, mu_max: f64 },

    #[error("degenerate normal hyperbolicity report: nu_min = {nu_min} is not positive")]
    DegenerateReport { nu_min: f64 },

    #[error("unsupported fixture for analytic pressure: {0}")]
    UnsupportedFixture(String),

    #[error("invalid estimator input: {0}")]
    Estimator(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error stems from invalid user input rather than a numerical failure.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Subextremal { .. }
                | Error::InvalidParameter(_)
                | Error::RootCount { .. }
                | Error::Chart(_)
                | Error::NoPhotonOrbit { .. }
                | Error::IntegratorConfig(_)
                | Error::UnsupportedFixture(_)
                | Error::Estimator(_)
        )
    }
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

pub type Result<T> = std::result::Result<T, Error>;
