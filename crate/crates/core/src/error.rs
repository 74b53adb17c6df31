use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {requested} unsupported (maximum {max})")]
    UnsupportedOrder { requested: usize, max: usize },

    #[error("frequency outside the cone aperture: {0}")]
    Aperture(String),

    #[error("newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("quadrature accuracy target unmet at xi = {xi:?}: estimated error {estimate:e}")]
    QuadratureAccuracy { xi: Vec<f64>, estimate: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable snake-case tag for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::UnsupportedOrder { .. } => "unsupported_order",
            Error::Aperture(_) => "aperture",
            Error::Convergence { .. } => "convergence",
            Error::QuadratureAccuracy { .. } => "quadrature_accuracy",
            Error::Configuration(_) => "configuration",
            Error::Grid(_) => "grid",
            Error::Resolution(_) => "resolution",
            Error::Geometry(_) => "geometry",
            Error::Io(_) => "io",
        }
    }
}
