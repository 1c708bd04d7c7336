//! Data model for 3-block separable problems
//!
//! ```text
//!   min  theta_1(x_1) + theta_2(x_2) + theta_3(x_3)
//!   s.t. A_1^* x_1 + A_2^* x_2 + A_3^* x_3 = c
//! ```
//!
//! together with the per-block subproblem solvers the splitting iteration
//! needs. Blocks are function oracles: a quadratic with an exact linear-system
//! solve, or a prox-friendly function (cone indicator, indicator plus linear
//! term, separable prox) whose subproblem collapses to a single prox step
//! once the semi-proximal term is the linearizing `eta*I - sigma*A A^*`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::Error;
use crate::linalg::{lambda_max_psd, LinOp, SymOp, Vector};

/// Named separable prox oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProxOracle {
    /// `theta(x) = weight * ||x||_1`, prox = soft threshold.
    L1 { weight: f64 },
}

impl ProxOracle {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            ProxOracle::L1 { weight } => {
                if !weight.is_finite() || *weight < 0.0 {
                    return Err(Error::Config {
                        what: format!("l1 oracle weight must be finite and >= 0, got {weight}"),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            ProxOracle::L1 { weight } => weight * x.as_slice().iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// `argmin theta(y) + (eta/2) ||y - center||^2`.
    pub fn prox(&self, center: &Vector, eta: f64) -> Vector {
        match self {
            ProxOracle::L1 { weight } => {
                let t = weight / eta;
                Vector::from_dvector(center.as_dvector().map(|v| {
                    if v > t {
                        v - t
                    } else if v < -t {
                        v + t
                    } else {
                        0.0
                    }
                }))
                .expect("finite")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum BlockKind {
    /// `theta(x) = 1/2 <x, Q x> + <q, x>`
    Quadratic { hessian: SymOp, linear: Vector },
    /// `theta(x) = delta_cone(x)`
    Indicator { cone: ConeSpec },
    /// `theta(x) = <g, x> + delta_cone(x)`
    LinearPlusIndicator { linear: Vector, cone: ConeSpec },
    /// Separable prox oracle.
    Separable { oracle: ProxOracle, dim: usize },
}

/// A convex block: the function oracle plus its declared strong-convexity
/// operator `Sigma`. Quadratic blocks declare `Sigma = Q` automatically;
/// prox-based blocks default to `Sigma = 0` and may be overridden with a
/// user-certified lower bound (the library cannot verify it for general
/// oracles).
#[derive(Debug, Clone)]
pub struct BlockFunction {
    kind: BlockKind,
    sigma_op: SymOp,
}

impl BlockFunction {
    pub fn quadratic(hessian: SymOp, linear: Vector) -> Result<Self, Error> {
        if hessian.dim() != linear.len() {
            return Err(Error::Dimension {
                what: format!("quadratic block: Q is {0}x{0} but q has length {1}", hessian.dim(), linear.len()),
            });
        }
        let psd = SymOp::new_psd(hessian.matrix().clone())?;
        Ok(Self {
            sigma_op: psd.clone(),
            kind: BlockKind::Quadratic { hessian: psd, linear },
        })
    }

    pub fn indicator(cone: ConeSpec) -> Result<Self, Error> {
        cone.validate()?;
        let n = cone.dim();
        Ok(Self {
            kind: BlockKind::Indicator { cone },
            sigma_op: SymOp::zeros(n),
        })
    }

    pub fn linear_plus_indicator(linear: Vector, cone: ConeSpec) -> Result<Self, Error> {
        cone.validate()?;
        if cone.dim() != linear.len() {
            return Err(Error::Dimension {
                what: format!("linear term length {} vs cone dimension {}", linear.len(), cone.dim()),
            });
        }
        let n = cone.dim();
        Ok(Self {
            kind: BlockKind::LinearPlusIndicator { linear, cone },
            sigma_op: SymOp::zeros(n),
        })
    }

    pub fn separable(oracle: ProxOracle, dim: usize) -> Result<Self, Error> {
        oracle.validate()?;
        Ok(Self {
            kind: BlockKind::Separable { oracle, dim },
            sigma_op: SymOp::zeros(dim),
        })
    }

    /// Override the declared strong-convexity operator. The bound is trusted,
    /// not verified, for non-quadratic oracles.
    pub fn with_sigma(mut self, sigma: SymOp) -> Result<Self, Error> {
        if sigma.dim() != self.dim() {
            return Err(Error::Dimension {
                what: format!("Sigma dim {} vs block dim {}", sigma.dim(), self.dim()),
            });
        }
        let psd = SymOp::new_psd(sigma.matrix().clone())?;
        self.sigma_op = psd;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            BlockKind::Quadratic { linear, .. } => linear.len(),
            BlockKind::Indicator { cone } => cone.dim(),
            BlockKind::LinearPlusIndicator { cone, .. } => cone.dim(),
            BlockKind::Separable { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> &BlockKind {
        &self.kind
    }

    pub fn sigma(&self) -> &SymOp {
        &self.sigma_op
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, BlockKind::Quadratic { .. })
    }

    /// Finite part of the block value (indicator terms contribute zero;
    /// feasibility is checked separately via [`BlockFunction::cone_distance`]).
    pub fn value(&self, x: &Vector) -> f64 {
        match &self.kind {
            BlockKind::Quadratic { hessian, linear } => {
                0.5 * hessian.quad_form(x.as_dvector()) + linear.dot(x)
            }
            BlockKind::Indicator { .. } => 0.0,
            BlockKind::LinearPlusIndicator { linear, .. } => linear.dot(x),
            BlockKind::Separable { oracle, .. } => oracle.value(x),
        }
    }

    /// Distance to the block's constraint set (zero for unconstrained kinds).
    pub fn cone_distance(&self, x: &Vector) -> f64 {
        match &self.kind {
            BlockKind::Indicator { cone } | BlockKind::LinearPlusIndicator { cone, .. } => cone.distance(x),
            _ => 0.0,
        }
    }

    /// Per-block dual residual for the KKT map: quadratic blocks use the
    /// gradient inclusion directly, prox blocks the natural (fixed-point) map
    /// with unit step, both in the normalized form used for termination.
    pub fn dual_residual(&self, x: &Vector, az: &Vector) -> f64 {
        match &self.kind {
            BlockKind::Quadratic { hessian, linear } => {
                let grad = hessian.apply(x).expect("dims checked") .as_dvector()
                    + linear.as_dvector()
                    + az.as_dvector();
                grad.norm() / (1.0 + linear.norm())
            }
            BlockKind::Indicator { cone } => {
                let arg = Vector::from_dvector(x.as_dvector() - az.as_dvector()).expect("finite");
                let proj = cone.project(&arg);
                (x.as_dvector() - proj.as_dvector()).norm() / (1.0 + x.norm())
            }
            BlockKind::LinearPlusIndicator { linear, cone } => {
                let arg = Vector::from_dvector(x.as_dvector() - az.as_dvector() - linear.as_dvector())
                    .expect("finite");
                let proj = cone.project(&arg);
                (x.as_dvector() - proj.as_dvector()).norm() / (1.0 + x.norm())
            }
            BlockKind::Separable { oracle, .. } => {
                let arg = Vector::from_dvector(x.as_dvector() - az.as_dvector()).expect("finite");
                let prox = oracle.prox(&arg, 1.0);
                (x.as_dvector() - prox.as_dvector()).norm() / (1.0 + x.norm())
            }
        }
    }

    /// `argmin theta(y) + (eta/2)||y - center||^2` for prox-based kinds.
    pub fn prox(&self, center: &Vector, eta: f64) -> Result<Vector, Error> {
        match &self.kind {
            BlockKind::Quadratic { .. } => Err(Error::Config {
                what: "prox called on a quadratic block".into(),
            }),
            BlockKind::Indicator { cone } => Ok(cone.project(center)),
            BlockKind::LinearPlusIndicator { linear, cone } => {
                let shifted =
                    Vector::from_dvector(center.as_dvector() - linear.as_dvector() / eta).expect("finite");
                Ok(cone.project(&shifted))
            }
            BlockKind::Separable { oracle, .. } => Ok(oracle.prox(center, eta)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnownSolution {
    pub x: [Vector; 3],
    pub z: Vector,
}

/// A 3-block problem instance. Construction validates the dimension contract
/// and, when a reference optimum is attached, its KKT residual.
#[derive(Debug, Clone)]
pub struct Problem {
    blocks: [BlockFunction; 3],
    ops: [LinOp; 3],
    c: Vector,
    known_solution: Option<KnownSolution>,
}

impl Problem {
    pub fn new(blocks: [BlockFunction; 3], ops: [LinOp; 3], c: Vector) -> Result<Self, Error> {
        let m = c.len();
        for (i, op) in ops.iter().enumerate() {
            if op.rows() != m {
                return Err(Error::Dimension {
                    what: format!("ops[{i}] has {} rows but c has length {m}", op.rows()),
                });
            }
            if op.cols() != blocks[i].dim() {
                return Err(Error::Dimension {
                    what: format!(
                        "ops[{i}] has {} columns but block {i} has dimension {}",
                        op.cols(),
                        blocks[i].dim()
                    ),
                });
            }
        }
        Ok(Self {
            blocks,
            ops,
            c,
            known_solution: None,
        })
    }

    pub fn with_known_solution(mut self, sol: KnownSolution) -> Result<Self, Error> {
        for i in 0..3 {
            if sol.x[i].len() != self.blocks[i].dim() {
                return Err(Error::Dimension {
                    what: format!("known solution x{} has length {}", i + 1, sol.x[i].len()),
                });
            }
        }
        if sol.z.len() != self.c.len() {
            return Err(Error::Dimension {
                what: format!("known solution z has length {}", sol.z.len()),
            });
        }
        let kkt = self.kkt_residual([&sol.x[0], &sol.x[1], &sol.x[2]], &sol.z)?;
        if kkt > 1e-9 {
            return Err(Error::KnownSolutionInvalid { residual: kkt });
        }
        self.known_solution = Some(sol);
        Ok(self)
    }

    pub fn block(&self, i: usize) -> &BlockFunction {
        &self.blocks[i]
    }

    pub fn op(&self, i: usize) -> &LinOp {
        &self.ops[i]
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn constraint_dim(&self) -> usize {
        self.c.len()
    }

    pub fn block_dims(&self) -> [usize; 3] {
        [self.blocks[0].dim(), self.blocks[1].dim(), self.blocks[2].dim()]
    }

    pub fn known_solution(&self) -> Option<&KnownSolution> {
        self.known_solution.as_ref()
    }

    /// `A^* x = A_1^* x_1 + A_2^* x_2 + A_3^* x_3`.
    pub fn apply_adjoint_sum(&self, x: [&Vector; 3]) -> Result<Vector, Error> {
        let mut acc = DVector::zeros(self.c.len());
        for i in 0..3 {
            if x[i].len() != self.blocks[i].dim() {
                return Err(Error::Dimension {
                    what: format!("block {} vector has length {}, expected {}", i + 1, x[i].len(), self.blocks[i].dim()),
                });
            }
            acc += self.ops[i].apply(x[i])?.as_dvector();
        }
        Vector::from_dvector(acc)
    }

    /// `r = A^* x - c`.
    pub fn residual(&self, x: [&Vector; 3]) -> Result<Vector, Error> {
        let ax = self.apply_adjoint_sum(x)?;
        Vector::from_dvector(ax.as_dvector() - self.c.as_dvector())
    }

    /// Finite part of the objective.
    pub fn objective(&self, x: [&Vector; 3]) -> f64 {
        (0..3).map(|i| self.blocks[i].value(x[i])).sum()
    }

    /// Max of feasibility distances to the block constraint sets.
    pub fn cone_violation(&self, x: [&Vector; 3]) -> f64 {
        (0..3).fold(0.0f64, |m, i| m.max(self.blocks[i].cone_distance(x[i])))
    }

    /// Combined KKT residual: the max of the relative primal residual
    /// `||A^* x - c|| / (1 + ||c||)` and the per-block dual residuals.
    pub fn kkt_residual(&self, x: [&Vector; 3], z: &Vector) -> Result<f64, Error> {
        if z.len() != self.c.len() {
            return Err(Error::Dimension {
                what: format!("z has length {}, expected {}", z.len(), self.c.len()),
            });
        }
        let r = self.residual(x)?;
        let mut worst = r.norm() / (1.0 + self.c.norm());
        for i in 0..3 {
            let az = self.ops[i].adjoint(z)?;
            worst = worst.max(self.blocks[i].dual_residual(x[i], &az));
        }
        Ok(worst)
    }
}

/// `A_1^* x_1 + A_2^* x_2 + A_3^* x_3` (free-function form).
pub fn apply_adjoint_sum(problem: &Problem, x: [&Vector; 3]) -> Result<Vector, Error> {
    problem.apply_adjoint_sum(x)
}

/// `A^* x - c` (free-function form).
pub fn residual(problem: &Problem, x: [&Vector; 3]) -> Result<Vector, Error> {
    problem.residual(x)
}

/// `T = eta*I - sigma*A A^*` with `eta = safeguard * sigma * lambda_max(A A^*)`,
/// the proximal term that collapses a coupled prox-block subproblem to a
/// single prox evaluation. PSD by construction for `safeguard >= 1`.
pub fn linearize_proximal_term(a: &LinOp, sigma: f64, safeguard: f64) -> Result<SymOp, Error> {
    if sigma <= 0.0 || sigma.is_nan() {
        return Err(Error::Config {
            what: format!("sigma must be positive, got {sigma}"),
        });
    }
    if safeguard < 1.0 {
        return Err(Error::Config {
            what: format!("safeguard must be >= 1, got {safeguard}"),
        });
    }
    let gram = a.gram();
    let eta = safeguard * sigma * lambda_max_psd(gram.matrix());
    let t = SymOp::identity_scaled(a.cols(), eta).matrix() - sigma * gram.matrix();
    // eta - sigma*lambda_max can sit a hair below zero from the power
    // iteration estimate; the PSD constructor tolerance absorbs that.
    SymOp::new_psd(t)
}

/// Relative tolerance on the subproblem optimality residual.
const SUBPROBLEM_TOL: f64 = 1e-10;

/// How a block subproblem gets solved, with whatever can be precomputed for
/// fixed `(sigma, T)` factored out. A quadratic block factors
/// `Q + sigma*A A^* + T` once; a prox block records the scalar `eta` of its
/// linearizing proximal term.
#[derive(Debug)]
pub enum BlockSolver {
    Quadratic {
        /// Cholesky (or LU fallback) of `Q + sigma*A A^* + T`, kept as the
        /// factorized matrix plus the pieces needed for the residual check.
        factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        system: nalgebra::DMatrix<f64>,
    },
    QuadraticLu {
        factor: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        system: nalgebra::DMatrix<f64>,
    },
    Prox {
        eta: f64,
    },
}

impl BlockSolver {
    /// Prepare the solver for one block under fixed `(sigma, T)`.
    pub fn prepare(
        block_index: usize,
        block: &BlockFunction,
        a: &LinOp,
        t: &SymOp,
        sigma: f64,
    ) -> Result<Self, Error> {
        if t.dim() != block.dim() {
            return Err(Error::Dimension {
                what: format!("T for block {} has dim {}, block dim {}", block_index + 1, t.dim(), block.dim()),
            });
        }
        if a.cols() != block.dim() {
            return Err(Error::Dimension {
                what: format!("operator for block {} has {} columns, block dim {}", block_index + 1, a.cols(), block.dim()),
            });
        }
        match block.kind() {
            BlockKind::Quadratic { hessian, .. } => {
                let system = hessian.matrix() + sigma * a.gram().matrix() + t.matrix();
                if let Some(chol) = system.clone().cholesky() {
                    Ok(BlockSolver::Quadratic { factor: chol, system })
                } else {
                    let lu = system.clone().lu();
                    match lu.determinant() {
                        d if d.abs() > 0.0 && d.is_finite() => {
                            Ok(BlockSolver::QuadraticLu { factor: lu, system })
                        }
                        _ => {
                            let sys = SymOp::new(system).expect("symmetric by construction");
                            let (lo, hi) = sys.eig_bounds();
                            Err(Error::SingularSubproblem {
                                block: block_index + 1,
                                condition: if lo.abs() == 0.0 { f64::INFINITY } else { hi.abs() / lo.abs() },
                            })
                        }
                    }
                }
            }
            _ => {
                // Prox blocks require the linearized term: T + sigma*A A^*
                // must be eta*I with eta >= sigma * lambda_max(A A^*).
                let gram = a.gram();
                let combined = SymOp::new(t.matrix() + sigma * gram.matrix()).expect("symmetric");
                let eta = combined.as_scalar_identity(1e-10).ok_or_else(|| {
                    Error::IncompatibleProximalTerm {
                        block: block_index + 1,
                        detail: "T + sigma*A A^* is not a multiple of the identity".into(),
                    }
                })?;
                let lam = lambda_max_psd(gram.matrix());
                if eta < sigma * lam * (1.0 - 1e-9) || eta <= 0.0 {
                    return Err(Error::IncompatibleProximalTerm {
                        block: block_index + 1,
                        detail: format!("eta = {eta:.6e} below sigma*lambda_max(A A^*) = {:.6e}", sigma * lam),
                    });
                }
                Ok(BlockSolver::Prox { eta })
            }
        }
    }

    /// Exact minimizer of
    /// `theta(x) + <z, A^* x + offset> + (sigma/2)||A^* x + offset||^2 + 1/2||x - x_prev||^2_T`
    /// where `offset` already folds in `-c` (it is `sum_{j != i} A_j^* x_j - c`).
    pub fn solve(
        &self,
        block_index: usize,
        block: &BlockFunction,
        a: &LinOp,
        t: &SymOp,
        sigma: f64,
        z: &Vector,
        offset: &Vector,
        x_prev: &Vector,
    ) -> Result<Vector, Error> {
        if z.len() != a.rows() || offset.len() != a.rows() {
            return Err(Error::Dimension {
                what: format!("block {}: z/offset length vs constraint dim {}", block_index + 1, a.rows()),
            });
        }
        if x_prev.len() != block.dim() {
            return Err(Error::Dimension {
                what: format!("block {}: x_prev length {} vs block dim {}", block_index + 1, x_prev.len(), block.dim()),
            });
        }
        match (self, block.kind()) {
            (BlockSolver::Quadratic { factor, system }, BlockKind::Quadratic { linear, .. }) => {
                let rhs = quad_rhs(a, t, sigma, z, offset, x_prev, linear)?;
                let x = factor.solve(&rhs);
                verify_quad(block_index, system, &x, &rhs)?;
                Vector::from_dvector(x)
            }
            (BlockSolver::QuadraticLu { factor, system }, BlockKind::Quadratic { linear, .. }) => {
                let rhs = quad_rhs(a, t, sigma, z, offset, x_prev, linear)?;
                let x = factor.solve(&rhs).ok_or(Error::SingularSubproblem {
                    block: block_index + 1,
                    condition: f64::INFINITY,
                })?;
                verify_quad(block_index, system, &x, &rhs)?;
                Vector::from_dvector(x)
            }
            (BlockSolver::Prox { eta }, _) => {
                // With T = eta*I - sigma*A A^* the subproblem reduces to
                //   min theta(x) + (eta/2)||x - p||^2,
                //   p = x_prev - (1/eta) * A(z + sigma*(A^* x_prev + offset)).
                let inner = Vector::from_dvector(
                    z.as_dvector() + sigma * (a.apply(x_prev)?.as_dvector() + offset.as_dvector()),
                )?;
                let pull = a.adjoint(&inner)?;
                let center = Vector::from_dvector(x_prev.as_dvector() - pull.as_dvector() / *eta)?;
                let x = block.prox(&center, *eta)?;
                // Projection outputs must be fixed points of their projection.
                let dist = block.cone_distance(&x);
                if dist > 1e-12 * (1.0 + x.norm()) {
                    return Err(Error::SubproblemInexact {
                        block: block_index + 1,
                        residual: dist,
                        tol: 1e-12 * (1.0 + x.norm()),
                    });
                }
                Ok(x)
            }
            _ => Err(Error::Config {
                what: format!("block {}: solver kind does not match block kind", block_index + 1),
            }),
        }
    }
}

fn quad_rhs(
    a: &LinOp,
    t: &SymOp,
    sigma: f64,
    z: &Vector,
    offset: &Vector,
    x_prev: &Vector,
    linear: &Vector,
) -> Result<DVector<f64>, Error> {
    let pulled = Vector::from_dvector(z.as_dvector() + sigma * offset.as_dvector())?;
    let az = a.adjoint(&pulled)?;
    Ok(-linear.as_dvector() - az.as_dvector() + t.matrix() * x_prev.as_dvector())
}

fn verify_quad(
    block_index: usize,
    system: &nalgebra::DMatrix<f64>,
    x: &DVector<f64>,
    rhs: &DVector<f64>,
) -> Result<(), Error> {
    let res = (system * x - rhs).norm();
    let tol = SUBPROBLEM_TOL * (1.0 + rhs.norm());
    if res > tol {
        return Err(Error::SubproblemInexact {
            block: block_index + 1,
            residual: res,
            tol,
        });
    }
    Ok(())
}

/// One-shot subproblem solve (factors the system on the fly; the solver
/// engine keeps per-block [`BlockSolver`]s instead, refactorizing only when
/// `sigma` or `T` changes).
#[allow(clippy::too_many_arguments)]
pub fn solve_block_subproblem(
    block: &BlockFunction,
    a: &LinOp,
    t: &SymOp,
    sigma: f64,
    z: &Vector,
    offset: &Vector,
    x_prev: &Vector,
) -> Result<Vector, Error> {
    if sigma <= 0.0 || sigma.is_nan() {
        return Err(Error::Config {
            what: format!("sigma must be positive, got {sigma}"),
        });
    }
    let solver = BlockSolver::prepare(0, block, a, t, sigma)?;
    solver.solve(0, block, a, t, sigma, z, offset, x_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    pub(crate) fn chyy() -> Problem {
        crate::zoo::counterexample_chyy().problem
    }

    #[test]
    fn adjoint_sum_examples() {
        let p = chyy();
        let zero = Vector::zeros(1);
        let out = p
            .apply_adjoint_sum([&zero, &zero, &zero])
            .unwrap();
        assert_eq!(out.to_vec(), vec![0.0, 0.0, 0.0]);

        let one = Vector::ones(1);
        let out = p.apply_adjoint_sum([&one, &one, &one]).unwrap();
        assert_eq!(out.to_vec(), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn adjoint_sum_dimension_error_names_block() {
        let p = chyy();
        let bad = Vector::zeros(2);
        let ok = Vector::zeros(1);
        let err = p.apply_adjoint_sum([&ok, &bad, &ok]).unwrap_err();
        assert!(err.to_string().contains("block 2"), "{err}");
    }

    #[test]
    fn residual_examples() {
        let p = chyy();
        let zero = Vector::zeros(1);
        let one = Vector::ones(1);
        // feasible point (the optimum)
        let r = p.residual([&zero, &zero, &zero]).unwrap();
        assert!(r.norm() <= 1e-12);
        // x = (1,0,0): first column of the coupling matrix, c = 0
        let r = p.residual([&one, &zero, &zero]).unwrap();
        assert_eq!(r.to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn residual_negates_c() {
        // x = 0, c = (1,2,3) -> r = -c
        let blocks = [
            BlockFunction::quadratic(SymOp::identity_scaled(1, 1.0), Vector::zeros(1)).unwrap(),
            BlockFunction::quadratic(SymOp::identity_scaled(1, 1.0), Vector::zeros(1)).unwrap(),
            BlockFunction::quadratic(SymOp::identity_scaled(1, 1.0), Vector::zeros(1)).unwrap(),
        ];
        let ops = [
            LinOp::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap(),
            LinOp::from_rows(&[vec![0.0], vec![1.0], vec![0.0]]).unwrap(),
            LinOp::from_rows(&[vec![0.0], vec![0.0], vec![1.0]]).unwrap(),
        ];
        let p = Problem::new(ops.clone().map(|_| blocks[0].clone()), ops, Vector::new(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let zero = Vector::zeros(1);
        let r = p.residual([&zero, &zero, &zero]).unwrap();
        assert_eq!(r.to_vec(), vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn subproblem_unconstrained_minimum() {
        // Q = I, q = 0, A^* = I, T = 0, sigma = 1, z = 0, offset = 0 -> x = 0
        let n = 2;
        let block = BlockFunction::quadratic(SymOp::identity_scaled(n, 1.0), Vector::zeros(n)).unwrap();
        let a = LinOp::new(DMatrix::identity(n, n)).unwrap();
        let x = solve_block_subproblem(
            &block,
            &a,
            &SymOp::zeros(n),
            1.0,
            &Vector::zeros(n),
            &Vector::zeros(n),
            &Vector::ones(n),
        )
        .unwrap();
        assert!(x.norm() <= 1e-14);
    }

    #[test]
    fn subproblem_orthant_projection() {
        // Arrange inputs so the prox center is (-1, 2); expect (0, 2).
        // A^* = I, sigma = 1 => eta = 1, T = 0; center = x_prev - (z + sigma*(x_prev + offset)).
        // With x_prev = 0, z = 0: center = -offset. Take offset = (1, -2).
        let n = 2;
        let block = BlockFunction::indicator(ConeSpec::Orthant { dim: n }).unwrap();
        let a = LinOp::new(DMatrix::identity(n, n)).unwrap();
        let t = linearize_proximal_term(&a, 1.0, 1.0).unwrap();
        let x = solve_block_subproblem(
            &block,
            &a,
            &t,
            1.0,
            &Vector::zeros(n),
            &Vector::new(vec![1.0, -2.0]).unwrap(),
            &Vector::zeros(n),
        )
        .unwrap();
        assert_eq!(x.to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn subproblem_chyy_block1() {
        // theta_1(x) = x^2/20, A_1^* = (1,1,1), sigma = 1, T = 0, z = 0.
        // offset = 0: minimizer of x^2/20 + (3/2)x^2 -> 0.
        // offset = -(1,1,1) (c shifted): (31/10)x = 3 -> x = 30/31.
        let p = chyy();
        let x = solve_block_subproblem(
            p.block(0),
            p.op(0),
            &SymOp::zeros(1),
            1.0,
            &Vector::zeros(3),
            &Vector::zeros(3),
            &Vector::zeros(1),
        )
        .unwrap();
        assert_eq!(x.to_vec(), vec![0.0]);

        let x = solve_block_subproblem(
            p.block(0),
            p.op(0),
            &SymOp::zeros(1),
            1.0,
            &Vector::zeros(3),
            &Vector::new(vec![-1.0, -1.0, -1.0]).unwrap(),
            &Vector::zeros(1),
        )
        .unwrap();
        assert_relative_eq!(x[0], 30.0 / 31.0, epsilon = 1e-14);
    }

    #[test]
    fn subproblem_rejects_incompatible_t_for_prox_block() {
        let n = 2;
        let block = BlockFunction::indicator(ConeSpec::Orthant { dim: n }).unwrap();
        let a = LinOp::new(DMatrix::identity(n, n)).unwrap();
        // T = 0 with sigma = 1 gives T + sigma*AA^* = I = eta*I with eta = 1
        // = sigma*lambda_max, which is allowed; a genuinely wrong T is not.
        let bad_t = SymOp::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])).unwrap();
        let err = solve_block_subproblem(
            &block,
            &a,
            &bad_t,
            1.0,
            &Vector::zeros(n),
            &Vector::zeros(n),
            &Vector::zeros(n),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IncompatibleProximalTerm { .. }));
    }

    #[test]
    fn linearize_examples() {
        let p = chyy();
        // chyy block 1: A A^* = 3 (1x1), sigma = 1, safeguard = 1 -> T = 0.
        let t = linearize_proximal_term(p.op(0), 1.0, 1.0).unwrap();
        assert!(t.matrix()[(0, 0)].abs() <= 1e-12);

        // A = 0 -> T = 0
        let t = linearize_proximal_term(&LinOp::zeros(3, 2), 1.0, 1.0).unwrap();
        assert!(t.is_zero());

        // sigma = 2, AA^* = diag(1,4), safeguard = 1.01 -> T = diag(6.08, 0.08)
        let a = LinOp::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let t = linearize_proximal_term(&a, 2.0, 1.01).unwrap();
        assert_relative_eq!(t.matrix()[(0, 0)], 6.08, epsilon = 1e-10);
        assert_relative_eq!(t.matrix()[(1, 1)], 0.08, epsilon = 1e-10);
        assert!(t.lambda_min() >= -1e-10 * t.spectral_norm());
    }

    #[test]
    fn quadratic_strong_convexity_certificate() {
        // <x - y, grad(x) - grad(y)> >= ||x - y||^2_Sigma with Sigma = Q, exactly.
        let mut gen = crate::zoo::SplitMix64::new(42);
        for _ in 0..20 {
            let q_raw = gen.matrix(3, 3);
            let q = SymOp::new(q_raw.transpose() * &q_raw).unwrap();
            let block = BlockFunction::quadratic(q.clone(), Vector::zeros(3)).unwrap();
            let x = gen.dvector(3);
            let y = gen.dvector(3);
            let gx = q.matrix() * &x;
            let gy = q.matrix() * &y;
            let lhs = (&x - &y).dot(&(gx - gy));
            let rhs = block.sigma().quad_form(&(&x - &y));
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn separable_l1_prox() {
        let block = BlockFunction::separable(ProxOracle::L1 { weight: 1.0 }, 3).unwrap();
        let center = Vector::new(vec![2.0, -0.25, -3.0]).unwrap();
        let x = block.prox(&center, 2.0).unwrap();
        assert_eq!(x.to_vec(), vec![1.5, 0.0, -2.5]);
    }

    #[test]
    fn subproblem_gradient_optimality_random() {
        // the returned quadratic minimizer satisfies the stationarity system
        let mut gen = crate::zoo::SplitMix64::new(7);
        for _ in 0..20 {
            let n = 3;
            let m = 4;
            let q_raw = gen.matrix(n, n);
            let q = SymOp::new(q_raw.transpose() * &q_raw + DMatrix::identity(n, n)).unwrap();
            let lin = Vector::from_dvector(gen.dvector(n)).unwrap();
            let block = BlockFunction::quadratic(q.clone(), lin.clone()).unwrap();
            let a = LinOp::new(gen.matrix(m, n)).unwrap();
            let t = SymOp::identity_scaled(n, 0.5);
            let sigma = 0.7;
            let z = Vector::from_dvector(gen.dvector(m)).unwrap();
            let offset = Vector::from_dvector(gen.dvector(m)).unwrap();
            let x_prev = Vector::from_dvector(gen.dvector(n)).unwrap();
            let x = solve_block_subproblem(&block, &a, &t, sigma, &z, &offset, &x_prev).unwrap();
            // gradient of the subproblem objective at x
            let ax = a.apply(&x).unwrap();
            let grad = q.matrix() * x.as_dvector()
                + lin.as_dvector()
                + a.adjoint(&Vector::from_dvector(z.as_dvector() + sigma * (ax.as_dvector() + offset.as_dvector())).unwrap())
                    .unwrap()
                    .as_dvector()
                + t.matrix() * (x.as_dvector() - x_prev.as_dvector());
            assert!(grad.norm() <= 1e-10 * (1.0 + lin.norm() + z.norm() + offset.norm()) * 10.0);
        }
    }
}
