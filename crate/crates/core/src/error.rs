use thiserror::Error;

/// Errors raised by the solvers, evaluators and simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),

    #[error("invalid band: {0}")]
    InvalidBand(String),

    /// γ = 0 has no Merton fraction; the κ-based expansion applies instead.
    #[error("risk-neutral case (gamma = 0): use the risk-neutral boundary expansion")]
    RiskNeutral,

    /// A parameter combination excluded by the closed forms (π* = 1, γ = 1/2, 2γπ* = 1, ...).
    #[error("singular parameter case: {0}")]
    Singular(String),

    /// The spread is too large for the small-ε regime: the solver output is not a valid band.
    #[error("epsilon too large for asymptotic regime: {0}")]
    Regime(String),

    #[error("no convergence after {iterations} iterations: {message} (last iterate {last:?}, residuals {residuals:?})")]
    Convergence {
        message: String,
        iterations: usize,
        last: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("simulation scheme error: {0}")]
    Scheme(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn convergence(
        message: impl Into<String>,
        iterations: usize,
        last: &[f64],
        residuals: &[f64],
    ) -> Self {
        Error::Convergence {
            message: message.into(),
            iterations,
            last: last.to_vec(),
            residuals: residuals.to_vec(),
        }
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::InvalidBand(_)
                | Error::RiskNeutral
                | Error::Singular(_)
                | Error::Domain(_)
        )
    }
}
