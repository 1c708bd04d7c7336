//! Library error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("dimension mismatch: {what}")]
    Dimension { what: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("operator is not positive semi-definite (lambda_min = {lambda_min:.3e})")]
    NotPsd { lambda_min: f64 },

    #[error("block {block}: singular subproblem system (condition estimate {condition:.3e})")]
    SingularSubproblem { block: usize, condition: f64 },

    #[error("singular linear system (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("block {block}: proximal term is not eta*I - sigma*A A^* with eta >= sigma*lambda_max(A A^*): {detail}")]
    IncompatibleProximalTerm { block: usize, detail: String },

    #[error("block {block}: subproblem optimality residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    SubproblemInexact { block: usize, residual: f64, tol: f64 },

    #[error("invalid configuration: {what}")]
    Config { what: String },

    #[error("Sigma_2 is not positive definite (lambda_min = {lambda_min:.3e}); the certificate requires a strongly convex second block")]
    Sigma2NotPositiveDefinite { lambda_min: f64 },

    #[error("{op} requires a zero second coupling operator, but A_2^* != 0")]
    SecondBlockNotVacuous { op: &'static str },

    #[error("known solution fails the KKT check: residual {residual:.3e} exceeds 1e-9")]
    KnownSolutionInvalid { residual: f64 },

    #[error("descent inequality violated at iteration {k}: slack {slack:.3e} below -{tol:.3e}")]
    DescentViolation { k: usize, slack: f64, tol: f64 },

    #[error("diagnostics records carry different alpha values ({left} vs {right})")]
    AlphaMismatch { left: f64, right: f64 },

    #[error("diagnostics record at k={k} lacks the Lyapunov fields required here")]
    MissingLyapunov { k: usize },

    #[error("generator failed after {attempts} attempts: {what}")]
    DegenerateDraw { attempts: usize, what: String },

    #[error("reference solver did not reach tolerance {tol:.3e} within {max_iter} iterations (kkt = {kkt:.3e})")]
    ReferenceNoConvergence { tol: f64, max_iter: usize, kkt: f64 },

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
