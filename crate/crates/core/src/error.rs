use thiserror::Error;

#[derive(Debug, Error)]
pub enum SppError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("evaluation at a pole of the susceptibility (omega = {omega})")]
    Pole { omega: f64 },

    #[error("no decaying solution: 0 lies in the essential spectrum at omega = {omega}")]
    NoDecay { omega: f64 },

    #[error("width condition is singular at omega = {omega}")]
    Singular { omega: f64 },

    #[error("no root of the width condition in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("width is not real at omega = {omega} (imaginary part {im:e})")]
    NonRealWidth { omega: f64, im: f64 },

    #[error("matching conditions violated: relative residual {residual:e}")]
    Matching { residual: f64 },

    #[error("Floquet multipliers are marginal (|rho| = 1)")]
    Marginal,

    #[error("decaying Floquet solution vanishes at the interface")]
    DegenerateQuotient,

    #[error("singular pivot in banded factorization at row {row}")]
    SingularMatrix { row: usize },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },

    #[error("fixed-point iteration diverged (contraction ratio {ratio:.3})")]
    Divergence { ratio: f64 },

    #[error("eigenvalue is not simple: <phi0, phi0*> = {overlap:e}")]
    NotSimple { overlap: f64 },

    #[error("eigenvalue drifted off the real axis: Im mu = {im:e}")]
    NonRealDrift { im: f64 },

    #[error("grid does not support this operation: {0}")]
    Grid(String),

    #[error("no nontrivial branch: {0}")]
    NoBranch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SppError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SppError {
    SppError::InvalidParameter { name, reason: reason.into() }
}
