//! A solver library for 3-block separable convex minimization
//!
//! ```text
//!   min  theta_1(x_1) + theta_2(x_2) + theta_3(x_3)
//!   s.t. A_1^* x_1 + A_2^* x_2 + A_3^* x_3 = c
//! ```
//!
//! via a semi-proximal ADMM whose block subproblems carry proximal terms
//! `1/2||x_i - x_i^k||^2_{T_i}`, together with:
//!
//! * a convergence-certificate checker ([`certify`]) that assembles the
//!   weighting operators `M` and `H`, verifies the three positive-definiteness
//!   margins, evaluates the Schur-complement reductions of the `tau = 1`
//!   regime, and solves for the penalty threshold and the minimal scalar
//!   third proximal term;
//! * runtime diagnostics ([`solver`]) recording the Lyapunov quantities and
//!   (optionally) asserting the per-iteration descent inequality;
//! * a model zoo ([`zoo`]) with the Chen-He-Ye-Yuan divergence counterexample,
//!   seeded random instances with constructed optima, dual-form conic QP
//!   builders, and an independent reference solver.
//!
//! Everything is dense and intended for desk-scale verification work
//! (dimensions up to a couple of thousand).

pub mod certify;
pub mod cone;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod zoo;

pub use cone::ConeSpec;
pub use error::Error;
pub use linalg::{LinOp, SymOp, Vector};
pub use model::{
    apply_adjoint_sum, linearize_proximal_term, residual, solve_block_subproblem, BlockFunction,
    BlockKind, KnownSolution, Problem, ProxOracle,
};
pub use solver::{
    check_descent_inequality, compute_diagnostics, kkt_residual, run, run_from, spadmm_step,
    Decimation, DiagnosticsRecord, Engine, IterateState, SolveResult, SolveStatus, SolverConfig,
};
