//! Canonical test problems: the Chen-He-Ye-Yuan counterexample, seeded random
//! 3-block instances with constructed optima, the dual-form conic QP builder,
//! and a deliberately independent reference solver used as the oracle in
//! tests.

use nalgebra::{DMatrix, DVector};

use crate::certify::{alpha_search, default_alpha_grid, sigma_threshold};
use crate::cone::ConeSpec;
use crate::error::Error;
use crate::linalg::{lambda_max_psd, LinOp, SymOp, Vector};
use crate::model::{BlockFunction, BlockKind, KnownSolution, Problem};
use crate::solver::SolverConfig;

/// SplitMix64: the repo's portable seeded generator. Fixtures depend on this
/// exact algorithm, so it is spelled out rather than delegated to a crate:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// output = z ^ (z >> 31)
/// ```
///
/// Doubles come from the top 53 bits: `(u >> 11) * 2^-53` in `[0, 1)`, and
/// `next_symmetric` maps that to `[-1, 1)`. Matrices are filled row-major.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Row-major dense matrix with entries in `[-1, 1)`.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| self.next_symmetric()).collect();
        DMatrix::from_row_iterator(rows, cols, data)
    }

    pub fn dvector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| self.next_symmetric()))
    }
}

/// Suggested certified parameters for a zoo problem.
#[derive(Debug, Clone)]
pub struct CertificateHint {
    pub sigma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub t: [SymOp; 3],
}

impl CertificateHint {
    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.sigma, self.tau, self.t.clone());
        cfg.alpha = self.alpha;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct ZooProblem {
    pub problem: Problem,
    pub name: String,
    pub certificate_hint: CertificateHint,
    /// Suggested starting point; `None` means the zero start.
    pub start: Option<([Vector; 3], Vector)>,
}

/// The Chen-He-Ye-Yuan counterexample:
///
/// ```text
///   min  x1^2/20 + x2^2/20 + x3^2/20
///   s.t. [1 1 1; 1 1 2; 1 2 2] (x1, x2, x3)^T = 0
/// ```
///
/// so `Sigma_i = 1/10`, the couplings are the columns `(1,1,1)`, `(1,1,2)`,
/// `(1,2,2)`, and the optimum is the origin. The directly extended 3-block
/// iteration with `tau = sigma = 1` diverges on it; the suggested parameters
/// (`sigma = 0.01`) sit below the certified penalty threshold.
pub fn counterexample_chyy() -> ZooProblem {
    let q = SymOp::identity_scaled(1, 0.1);
    let blocks = [
        BlockFunction::quadratic(q.clone(), Vector::zeros(1)).expect("valid"),
        BlockFunction::quadratic(q.clone(), Vector::zeros(1)).expect("valid"),
        BlockFunction::quadratic(q, Vector::zeros(1)).expect("valid"),
    ];
    let ops = [
        LinOp::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).expect("valid"),
        LinOp::from_rows(&[vec![1.0], vec![1.0], vec![2.0]]).expect("valid"),
        LinOp::from_rows(&[vec![1.0], vec![2.0], vec![2.0]]).expect("valid"),
    ];
    let problem = Problem::new(blocks, ops, Vector::zeros(3))
        .expect("valid")
        .with_known_solution(KnownSolution {
            x: [Vector::zeros(1), Vector::zeros(1), Vector::zeros(1)],
            z: Vector::zeros(3),
        })
        .expect("origin is the optimum");
    ZooProblem {
        problem,
        name: "chyy".into(),
        certificate_hint: CertificateHint {
            sigma: 0.01,
            tau: 1.0,
            alpha: 1.0,
            t: [SymOp::zeros(1), SymOp::zeros(1), SymOp::zeros(1)],
        },
        start: Some(([Vector::ones(1), Vector::ones(1), Vector::ones(1)], Vector::zeros(3))),
    }
}

/// The counterexample with every coupling multiplied by `scale` (the
/// objective is unchanged). Used to cross-check the threshold solvers against
/// re-derived scalar conditions.
pub fn scaled_chyy(scale: f64) -> Problem {
    let base = counterexample_chyy().problem;
    let q = SymOp::identity_scaled(1, 0.1);
    let blocks = [
        BlockFunction::quadratic(q.clone(), Vector::zeros(1)).expect("valid"),
        BlockFunction::quadratic(q.clone(), Vector::zeros(1)).expect("valid"),
        BlockFunction::quadratic(q, Vector::zeros(1)).expect("valid"),
    ];
    let ops = [
        LinOp::new(scale * base.op(0).matrix()).expect("valid"),
        LinOp::new(scale * base.op(1).matrix()).expect("valid"),
        LinOp::new(scale * base.op(2).matrix()).expect("valid"),
    ];
    Problem::new(blocks, ops, Vector::zeros(3)).expect("valid")
}

/// A seeded instance with a vacuous second coupling (`A_2^* = 0`), used by
/// the two-block reduction checks. Block 2 stays strongly convex. With
/// `strongly_convex_third` unset the third block gets a singular Hessian and
/// a zero coupling, so its certificate condition genuinely fails.
pub fn vacuous_second_block(seed: u64, strongly_convex_third: bool) -> Problem {
    let mut gen = SplitMix64::new(seed);
    let (n1, n2, n3, m) = (2, 2, 2, 3);
    let spd = |gen: &mut SplitMix64, n: usize, ridge: f64| {
        let g = gen.matrix(n, n);
        SymOp::new(g.transpose() * &g + DMatrix::from_diagonal_element(n, n, ridge)).expect("spd")
    };
    let q1 = spd(&mut gen, n1, 0.1);
    let q2 = spd(&mut gen, n2, 0.1);
    let q3 = if strongly_convex_third {
        spd(&mut gen, n3, 0.1)
    } else {
        let g = gen.matrix(n3, n3);
        // PSD singular: rank-one Gram
        let col = g.column(0).clone_owned();
        SymOp::new(&col * col.transpose()).expect("psd")
    };
    let a1 = LinOp::new(gen.matrix(m, n1)).expect("finite");
    let a2 = LinOp::zeros(m, n2);
    let a3 = if strongly_convex_third {
        LinOp::new(gen.matrix(m, n3)).expect("finite")
    } else {
        LinOp::zeros(m, n3)
    };
    let blocks = [
        BlockFunction::quadratic(q1, Vector::zeros(n1)).expect("valid"),
        BlockFunction::quadratic(q2, Vector::zeros(n2)).expect("valid"),
        BlockFunction::quadratic(q3, Vector::zeros(n3)).expect("valid"),
    ];
    Problem::new(blocks, [a1, a2, a3], Vector::zeros(m)).expect("valid")
}

/// Quadratic instance for certificate property tests (only the operators and
/// strong-convexity data matter there; linear terms stay zero).
#[cfg(test)]
pub(crate) fn random_quadratic_problem(gen: &mut SplitMix64, n: [usize; 3], m: usize) -> Problem {
    let spd = |gen: &mut SplitMix64, d: usize| {
        let g = gen.matrix(d, d);
        SymOp::new(g.transpose() * &g + DMatrix::from_diagonal_element(d, d, 0.1)).expect("spd")
    };
    let blocks = [
        BlockFunction::quadratic(spd(gen, n[0]), Vector::zeros(n[0])).expect("valid"),
        BlockFunction::quadratic(spd(gen, n[1]), Vector::zeros(n[1])).expect("valid"),
        BlockFunction::quadratic(spd(gen, n[2]), Vector::zeros(n[2])).expect("valid"),
    ];
    let ops = [
        LinOp::new(gen.matrix(m, n[0])).expect("finite"),
        LinOp::new(gen.matrix(m, n[1])).expect("finite"),
        LinOp::new(gen.matrix(m, n[2])).expect("finite"),
    ];
    Problem::new(blocks, ops, Vector::zeros(m)).expect("valid")
}

/// Per-block kind request for the random generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomBlockKind {
    Quadratic,
    /// Nonnegative orthant indicator with a linear term chosen so the
    /// constructed optimum sits in the cone interior.
    Orthant,
}

/// Deterministic random instance with a constructed optimum `(x_bar, z_bar)`:
/// operators and `z_bar` are drawn from the seeded stream, `c = A^* x_bar`,
/// and the linear terms are chosen so the KKT conditions hold exactly
/// (`q_i = -(Q_i x_bar_i + A_i z_bar)` for quadratic blocks, `g_i = -A_i z_bar`
/// with interior `x_bar_i` for orthant blocks). Degenerate draws are retried
/// from the same stream up to 10 times.
pub fn random_three_block(
    seed: u64,
    dims: (usize, usize, usize, usize),
    kinds: [RandomBlockKind; 3],
) -> Result<ZooProblem, Error> {
    let (n1, n2, n3, m) = dims;
    let n = [n1, n2, n3];
    if kinds[1] != RandomBlockKind::Quadratic {
        return Err(Error::Config {
            what: "block 2 must be quadratic (the certificate needs Sigma_2 > 0)".into(),
        });
    }
    if m > n1 + n2 + n3 {
        return Err(Error::Config {
            what: format!("m = {m} exceeds total block dimension {}", n1 + n2 + n3),
        });
    }
    let mut gen = SplitMix64::new(seed);
    let mut last_issue = String::new();
    for _attempt in 0..10 {
        match draw_instance(&mut gen, n, m, kinds) {
            Ok((problem, hint)) => {
                return Ok(ZooProblem {
                    problem,
                    name: format!("random-{seed}"),
                    certificate_hint: hint,
                    start: None,
                })
            }
            Err(issue) => last_issue = issue,
        }
    }
    Err(Error::DegenerateDraw {
        attempts: 10,
        what: last_issue,
    })
}

fn draw_instance(
    gen: &mut SplitMix64,
    n: [usize; 3],
    m: usize,
    kinds: [RandomBlockKind; 3],
) -> Result<(Problem, CertificateHint), String> {
    let ops: Vec<LinOp> = (0..3)
        .map(|i| LinOp::new(gen.matrix(m, n[i])).expect("finite"))
        .collect();

    // Injectivity where the certificate needs the Gram term to carry the
    // block (orthant blocks declare Sigma = 0).
    for i in [0usize, 2] {
        if kinds[i] == RandomBlockKind::Orthant {
            let g = ops[i].gram();
            let (lo, hi) = g.eig_bounds();
            if lo <= 1e-8 * hi.max(1.0) {
                return Err(format!("A_{}^* not injective", i + 1));
            }
        }
    }

    let mut hessians: Vec<Option<SymOp>> = vec![None; 3];
    for i in 0..3 {
        if kinds[i] == RandomBlockKind::Quadratic {
            let g = gen.matrix(n[i], n[i]);
            let q = g.transpose() * &g + DMatrix::from_diagonal_element(n[i], n[i], 0.1);
            hessians[i] = Some(SymOp::new(q).expect("spd"));
        }
    }

    let xbar: Vec<Vector> = (0..3)
        .map(|i| match kinds[i] {
            RandomBlockKind::Quadratic => Vector::from_dvector(gen.dvector(n[i])).expect("finite"),
            RandomBlockKind::Orthant => Vector::from_dvector(DVector::from_iterator(
                n[i],
                (0..n[i]).map(|_| 0.5 + gen.next_f64()),
            ))
            .expect("finite"),
        })
        .collect();
    let zbar = Vector::from_dvector(gen.dvector(m)).expect("finite");

    // c accumulated exactly as the residual computation will accumulate it
    let mut c = DVector::zeros(m);
    for i in 0..3 {
        c += ops[i].apply(&xbar[i]).expect("dims").as_dvector();
    }
    let c = Vector::from_dvector(c).expect("finite");

    let mut blocks = Vec::with_capacity(3);
    for i in 0..3 {
        let az = ops[i].adjoint(&zbar).expect("dims");
        match kinds[i] {
            RandomBlockKind::Quadratic => {
                let q = hessians[i].clone().expect("set above");
                let lin = Vector::from_dvector(
                    -(q.matrix() * xbar[i].as_dvector()) - az.as_dvector(),
                )
                .expect("finite");
                blocks.push(BlockFunction::quadratic(q, lin).expect("valid"));
            }
            RandomBlockKind::Orthant => {
                let lin = Vector::from_dvector(-az.as_dvector().clone()).expect("finite");
                blocks.push(
                    BlockFunction::linear_plus_indicator(lin, ConeSpec::Orthant { dim: n[i] })
                        .expect("valid"),
                );
            }
        }
    }
    let blocks: [BlockFunction; 3] = blocks.try_into().expect("three");
    let ops: [LinOp; 3] = ops.try_into().expect("three");

    let problem = Problem::new(blocks, ops, c)
        .map_err(|e| e.to_string())?
        .with_known_solution(KnownSolution {
            x: [xbar[0].clone(), xbar[1].clone(), xbar[2].clone()],
            z: zbar,
        })
        .map_err(|e| format!("constructed optimum rejected: {e}"))?;

    let hint = certified_hint(&problem).map_err(|e| format!("no certified hint: {e}"))?;
    Ok((problem, hint))
}

/// Certified parameters for a problem: `sigma` at half the `tau = 1`,
/// `T_2 = T_3 = 0` threshold (the certificate is monotone in PSD proximal
/// terms, so it survives the linearized T the prox blocks need), `alpha` by
/// grid search.
fn certified_hint(problem: &Problem) -> Result<CertificateHint, Error> {
    let th = sigma_threshold(problem, 0.5)?;
    let sigma = if th.feasible && th.value.is_finite() {
        0.5 * th.value
    } else if th.value.is_infinite() {
        1.0
    } else {
        return Err(Error::Config {
            what: "Schur conditions infeasible at every sigma".into(),
        });
    };
    hint_at_sigma(problem, sigma)
}

fn hint_at_sigma(problem: &Problem, sigma: f64) -> Result<CertificateHint, Error> {
    let t = default_proximal_terms(problem, sigma)?;
    let report = alpha_search(problem, sigma, 1.0, &t, &default_alpha_grid())?;
    if !report.passes {
        return Err(Error::Config {
            what: format!("certificate fails at sigma = {sigma}"),
        });
    }
    Ok(CertificateHint {
        sigma,
        tau: 1.0,
        alpha: report.alpha_used,
        t,
    })
}

fn default_proximal_terms(problem: &Problem, sigma: f64) -> Result<[SymOp; 3], Error> {
    let mut t = Vec::with_capacity(3);
    for i in 0..3 {
        if problem.block(i).is_quadratic() {
            t.push(SymOp::zeros(problem.block(i).dim()));
        } else {
            t.push(crate::model::linearize_proximal_term(problem.op(i), sigma, 1.0)?);
        }
    }
    Ok(t.try_into().expect("three"))
}

/// Data of the dual-form conic quadratic program
///
/// ```text
///   min  delta_{R^m_+}(y) - <b, y> + 1/2||Xi||^2 + delta_{K^*}(S)
///   s.t. Amap^* y + L^* Xi + S = C
/// ```
///
/// `amap` holds the matrix of `Amap: X -> R^m` (m x dim X) and `l` the matrix
/// of `L: X -> Xi-space` (p x dim X), so `Q = L^* L`. The cone must be
/// self-dual here (orthant or PSD).
#[derive(Debug, Clone)]
pub struct QsdpDualSpec {
    pub l: LinOp,
    pub amap: LinOp,
    pub b: Vector,
    pub c: Vector,
    pub cone: ConeSpec,
}

/// Assemble the 3-block form: `y` against `Amap^*`, the strongly convex `Xi`
/// block against `L^*`, and the slack `S` against the identity. The first and
/// third blocks are prox-only and need the linearized proximal terms.
pub fn build_qsdp_dual(spec: &QsdpDualSpec) -> Result<ZooProblem, Error> {
    let dx = spec.c.len();
    if spec.amap.cols() != dx || spec.l.cols() != dx {
        return Err(Error::Dimension {
            what: format!(
                "amap ({}x{}) and l ({}x{}) must have {} columns",
                spec.amap.rows(),
                spec.amap.cols(),
                spec.l.rows(),
                spec.l.cols(),
                dx
            ),
        });
    }
    if spec.b.len() != spec.amap.rows() {
        return Err(Error::Dimension {
            what: format!("b has length {}, amap has {} rows", spec.b.len(), spec.amap.rows()),
        });
    }
    if spec.cone.dim() != dx {
        return Err(Error::Dimension {
            what: format!("cone dimension {} vs constraint dimension {dx}", spec.cone.dim()),
        });
    }
    if matches!(spec.cone, ConeSpec::Box { .. }) {
        return Err(Error::Config {
            what: "box is not a self-dual cone; the slack block needs orthant or psd".into(),
        });
    }
    let m = spec.amap.rows();
    let p = spec.l.rows();

    let neg_b = Vector::from_dvector(-spec.b.as_dvector().clone())?;
    let blocks = [
        BlockFunction::linear_plus_indicator(neg_b, ConeSpec::Orthant { dim: m })?,
        BlockFunction::quadratic(SymOp::identity_scaled(p, 1.0), Vector::zeros(p))?,
        BlockFunction::indicator(spec.cone.clone())?,
    ];
    let ops = [
        LinOp::new(spec.amap.matrix().transpose())?,
        LinOp::new(spec.l.matrix().transpose())?,
        LinOp::new(DMatrix::identity(dx, dx))?,
    ];
    let problem = Problem::new(blocks, ops, spec.c.clone())?;

    // Probe a descending penalty ladder for a certified setting.
    let mut hint = None;
    for &sigma in &[1.0, 0.5, 0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.0025, 0.001] {
        if let Ok(h) = hint_at_sigma(&problem, sigma) {
            hint = Some(h);
            break;
        }
    }
    let hint = hint.ok_or(Error::Config {
        what: "no certified sigma found on the probe ladder".into(),
    })?;

    Ok(ZooProblem {
        problem,
        name: "qsdp-dual".into(),
        certificate_hint: hint,
        start: None,
    })
}

/// Fixed orthant-cone demo instance (m = 2 constraints, X = R^2, seed 7).
/// Draw order: amap row-major, then l row-major scaled by 1/sqrt(dim X),
/// then b, then C.
pub fn qsdp_demo_orthant() -> ZooProblem {
    let mut zp = build_qsdp_dual(&qsdp_spec(7, 2, ConeSpec::Orthant { dim: 2 })).expect("valid demo");
    zp.name = "qsdp-demo".into();
    zp
}

/// Fixed PSD-cone demo instance (order 5 matrices, m = 2 constraints, seed 11).
pub fn qsdp_demo_psd() -> ZooProblem {
    let mut zp = build_qsdp_dual(&qsdp_spec(11, 2, ConeSpec::Psd { order: 5 })).expect("valid demo");
    zp.name = "qsdp-demo-psd".into();
    zp
}

fn qsdp_spec(seed: u64, m: usize, cone: ConeSpec) -> QsdpDualSpec {
    let dx = cone.dim();
    let mut gen = SplitMix64::new(seed);
    let amap = LinOp::new(gen.matrix(m, dx)).expect("finite");
    let scale = 1.0 / (dx as f64).sqrt();
    let l = LinOp::new(gen.matrix(dx, dx) * scale).expect("finite");
    let b = Vector::from_dvector(gen.dvector(m)).expect("finite");
    let c = Vector::from_dvector(gen.dvector(dx)).expect("finite");
    QsdpDualSpec { l, amap, b, c, cone }
}

/// High-accuracy reference solution by a deliberately different route than
/// the 3-block sweep: all-quadratic equality-constrained problems solve the
/// KKT linear system directly; anything else runs a 2-block splitting with
/// groups `(x_1)` and `(x_2, x_3)`, each group subproblem solved by its own
/// inner solve (direct for all-quadratic groups, proximal gradient to
/// `tol/100` otherwise).
pub fn reference_solve(problem: &Problem, tol: f64) -> Result<([Vector; 3], Vector), Error> {
    if (0..3).all(|i| problem.block(i).is_quadratic()) {
        return kkt_direct(problem, tol);
    }
    two_block_reference(problem, tol)
}

fn kkt_direct(problem: &Problem, tol: f64) -> Result<([Vector; 3], Vector), Error> {
    let dims = problem.block_dims();
    let n: usize = dims.iter().sum();
    let m = problem.constraint_dim();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    let mut row = 0;
    for i in 0..3 {
        let (q, lin) = match problem.block(i).kind() {
            BlockKind::Quadratic { hessian, linear } => (hessian, linear),
            _ => unreachable!("kkt_direct only sees quadratic blocks"),
        };
        kkt.view_mut((row, row), (dims[i], dims[i])).copy_from(q.matrix());
        // A_i = M_i^T: stationarity couples x_i with z through M_i^T
        kkt.view_mut((row, n), (dims[i], m))
            .copy_from(&problem.op(i).matrix().transpose());
        kkt.view_mut((n, row), (m, dims[i])).copy_from(problem.op(i).matrix());
        rhs.rows_mut(row, dims[i]).copy_from(&(-lin.as_dvector()));
        row += dims[i];
    }
    rhs.rows_mut(n, m).copy_from(problem.c().as_dvector());

    let solution = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .or_else(|| {
            kkt.clone()
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .ok()
                .filter(|s| s.iter().all(|v| v.is_finite()))
        })
        .ok_or(Error::SingularSystem {
            condition: f64::INFINITY,
        })?;

    let mut xs = Vec::with_capacity(3);
    let mut row = 0;
    for &d in &dims {
        xs.push(Vector::from_dvector(solution.rows(row, d).clone_owned())?);
        row += d;
    }
    let z = Vector::from_dvector(solution.rows(n, m).clone_owned())?;
    let x: [Vector; 3] = xs.try_into().expect("three");
    let kkt_res = problem.kkt_residual([&x[0], &x[1], &x[2]], &z)?;
    if kkt_res > tol.max(1e-9) {
        return Err(Error::ReferenceNoConvergence {
            tol,
            max_iter: 1,
            kkt: kkt_res,
        });
    }
    Ok((x, z))
}

/// Inner solver for one group of blocks: minimize
/// `sum_i theta_i(x_i) + (sigma/2) || sum_i A_i^* x_i + v ||^2` over the group.
struct GroupSolver {
    indices: Vec<usize>,
    dims: Vec<usize>,
    all_quadratic: bool,
    /// Direct route: factorization of the joint stationarity system.
    direct: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// Proximal-gradient route: Lipschitz constant of the smooth part.
    lipschitz: f64,
    sigma: f64,
}

impl GroupSolver {
    fn new(problem: &Problem, indices: Vec<usize>, sigma: f64) -> Result<Self, Error> {
        let dims: Vec<usize> = indices.iter().map(|&i| problem.block(i).dim()).collect();
        let total: usize = dims.iter().sum();
        let all_quadratic = indices.iter().all(|&i| problem.block(i).is_quadratic());

        // Joint smooth Hessian: blockdiag(Q_i for quadratic blocks) + sigma * Gram.
        let mut hess = DMatrix::zeros(total, total);
        let mut off = 0;
        for (pos, &i) in indices.iter().enumerate() {
            if let BlockKind::Quadratic { hessian, .. } = problem.block(i).kind() {
                hess.view_mut((off, off), (dims[pos], dims[pos]))
                    .copy_from(hessian.matrix());
            }
            off += dims[pos];
        }
        let mut stacked = DMatrix::zeros(problem.constraint_dim(), total);
        let mut off = 0;
        for (pos, &i) in indices.iter().enumerate() {
            stacked
                .view_mut((0, off), (problem.constraint_dim(), dims[pos]))
                .copy_from(problem.op(i).matrix());
            off += dims[pos];
        }
        let gram = stacked.tr_mul(&stacked);
        hess += sigma * &gram;

        let direct = if all_quadratic {
            Some(hess.clone().lu())
        } else {
            None
        };
        let lipschitz = lambda_max_psd(&hess).max(1e-12);
        Ok(Self {
            indices,
            dims,
            all_quadratic,
            direct,
            lipschitz,
            sigma,
        })
    }

    /// `v` is the fixed part of the coupling image (other group + z/sigma - c).
    fn solve(
        &self,
        problem: &Problem,
        v: &DVector<f64>,
        xs: &mut [Vector; 3],
        inner_tol: f64,
    ) -> Result<(), Error> {
        if self.all_quadratic {
            let total: usize = self.dims.iter().sum();
            let mut rhs = DVector::zeros(total);
            let mut off = 0;
            for (pos, &i) in self.indices.iter().enumerate() {
                let lin = match problem.block(i).kind() {
                    BlockKind::Quadratic { linear, .. } => linear,
                    _ => unreachable!(),
                };
                let pulled = problem.op(i).matrix().tr_mul(v);
                rhs.rows_mut(off, self.dims[pos])
                    .copy_from(&(-lin.as_dvector() - self.sigma * pulled));
                off += self.dims[pos];
            }
            let sol = self
                .direct
                .as_ref()
                .expect("direct factor for all-quadratic group")
                .solve(&rhs)
                .ok_or(Error::SingularSystem {
                    condition: f64::INFINITY,
                })?;
            let mut off = 0;
            for (pos, &i) in self.indices.iter().enumerate() {
                xs[i] = Vector::from_dvector(sol.rows(off, self.dims[pos]).clone_owned())?;
                off += self.dims[pos];
            }
            return Ok(());
        }

        // Proximal gradient with step 1/L on
        //   f(w) = sum_{quadratic} theta_i + (sigma/2)||A_g^* w + v||^2,
        //   prox over the non-smooth blocks.
        let step = 1.0 / self.lipschitz;
        for _ in 0..200_000 {
            let mut image = v.clone();
            for &i in &self.indices {
                image += problem.op(i).apply(&xs[i])?.as_dvector();
            }
            let mut max_move = 0.0f64;
            let mut scale = 1.0f64;
            for &i in &self.indices {
                let pulled = problem.op(i).matrix().tr_mul(&image);
                let mut grad = self.sigma * pulled;
                if let BlockKind::Quadratic { hessian, linear } = problem.block(i).kind() {
                    grad += hessian.matrix() * xs[i].as_dvector() + linear.as_dvector();
                }
                let center = Vector::from_dvector(xs[i].as_dvector() - step * grad)?;
                let next = if problem.block(i).is_quadratic() {
                    center
                } else {
                    problem.block(i).prox(&center, self.lipschitz)?
                };
                max_move = max_move.max((next.as_dvector() - xs[i].as_dvector()).norm());
                scale = scale.max(next.norm());
                xs[i] = next;
            }
            if max_move <= inner_tol * scale {
                return Ok(());
            }
        }
        Err(Error::ReferenceNoConvergence {
            tol: inner_tol,
            max_iter: 200_000,
            kkt: f64::NAN,
        })
    }
}

fn two_block_reference(problem: &Problem, tol: f64) -> Result<([Vector; 3], Vector), Error> {
    let sigma = 1.0;
    let dims = problem.block_dims();
    let mut xs = [
        Vector::zeros(dims[0]),
        Vector::zeros(dims[1]),
        Vector::zeros(dims[2]),
    ];
    let mut z = Vector::zeros(problem.constraint_dim());
    let g1 = GroupSolver::new(problem, vec![0], sigma)?;
    let g2 = GroupSolver::new(problem, vec![1, 2], sigma)?;
    let inner_tol = tol / 100.0;
    let max_iter = 1_000_000;
    let mut kkt = f64::INFINITY;
    for _ in 0..max_iter {
        // v for group 1: images of blocks 2, 3 plus multiplier offset
        let v1 = problem.op(1).apply(&xs[1])?.as_dvector()
            + problem.op(2).apply(&xs[2])?.as_dvector()
            - problem.c().as_dvector()
            + z.as_dvector() / sigma;
        g1.solve(problem, &v1, &mut xs, inner_tol)?;

        let v2 = problem.op(0).apply(&xs[0])?.as_dvector() - problem.c().as_dvector()
            + z.as_dvector() / sigma;
        g2.solve(problem, &v2, &mut xs, inner_tol)?;

        let r = problem.residual([&xs[0], &xs[1], &xs[2]])?;
        z = Vector::from_dvector(z.as_dvector() + sigma * r.as_dvector())?;
        kkt = problem.kkt_residual([&xs[0], &xs[1], &xs[2]], &z)?;
        if kkt <= tol {
            return Ok((xs, z));
        }
    }
    Err(Error::ReferenceNoConvergence {
        tol,
        max_iter,
        kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 0 of the published SplitMix64 algorithm.
        let mut gen = SplitMix64::new(0);
        assert_eq!(gen.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(gen.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(gen.next_u64(), 0x06C4_5D18_8009_454F);
        let mut gen = SplitMix64::new(1234567);
        let v = gen.next_f64();
        assert!((0.0..1.0).contains(&v));
    }

    #[test]
    fn chyy_matches_published_data() {
        let zp = counterexample_chyy();
        let p = &zp.problem;
        for i in 0..3 {
            assert_eq!(p.block(i).sigma().matrix()[(0, 0)], 0.1);
        }
        assert_eq!(p.op(1).gram().matrix()[(0, 0)], 6.0);
        assert_eq!(p.op(2).gram().matrix()[(0, 0)], 9.0);
        assert_eq!(p.op(1).cross_gram(p.op(2)).unwrap()[(0, 0)], 7.0);
        // x = 0 feasible with objective 0
        let zero = Vector::zeros(1);
        assert_eq!(p.objective([&zero, &zero, &zero]), 0.0);
        assert!(p.residual([&zero, &zero, &zero]).unwrap().norm() == 0.0);
    }

    #[test]
    fn random_generator_is_deterministic() {
        let kinds = [RandomBlockKind::Quadratic; 3];
        let a = random_three_block(5, (3, 2, 2, 4), kinds).unwrap();
        let b = random_three_block(5, (3, 2, 2, 4), kinds).unwrap();
        for i in 0..3 {
            assert_eq!(a.problem.op(i).matrix(), b.problem.op(i).matrix());
        }
        assert_eq!(a.problem.c().as_slice(), b.problem.c().as_slice());
        assert_eq!(a.certificate_hint.sigma, b.certificate_hint.sigma);
    }

    #[test]
    fn random_known_solution_is_exact() {
        for seed in 1..=5 {
            let zp = random_three_block(seed, (3, 2, 2, 4), [RandomBlockKind::Quadratic; 3]).unwrap();
            let sol = zp.problem.known_solution().unwrap();
            let kkt = zp
                .problem
                .kkt_residual([&sol.x[0], &sol.x[1], &sol.x[2]], &sol.z)
                .unwrap();
            assert!(kkt <= 1e-10, "seed {seed}: kkt {kkt}");
        }
    }

    #[test]
    fn random_mixed_kinds_keep_interior_optimum() {
        let kinds = [
            RandomBlockKind::Orthant,
            RandomBlockKind::Quadratic,
            RandomBlockKind::Quadratic,
        ];
        let zp = random_three_block(3, (2, 3, 2, 4), kinds).unwrap();
        let sol = zp.problem.known_solution().unwrap();
        assert!(sol.x[0].as_slice().iter().all(|&v| v >= 0.5));
    }

    #[test]
    fn degenerate_draws_error_after_retries() {
        // block 1 demands an injective 4x5 coupling, which no draw provides
        let kinds = [
            RandomBlockKind::Orthant,
            RandomBlockKind::Quadratic,
            RandomBlockKind::Quadratic,
        ];
        let err = random_three_block(1, (5, 2, 2, 4), kinds).unwrap_err();
        assert!(matches!(err, crate::error::Error::DegenerateDraw { attempts: 10, .. }), "{err}");
    }

    #[test]
    fn random_rejects_non_quadratic_second_block() {
        let kinds = [
            RandomBlockKind::Quadratic,
            RandomBlockKind::Orthant,
            RandomBlockKind::Quadratic,
        ];
        assert!(random_three_block(1, (2, 2, 2, 3), kinds).is_err());
    }

    #[test]
    fn reference_solves_chyy_exactly() {
        let p = counterexample_chyy().problem;
        let (x, z) = reference_solve(&p, 1e-10).unwrap();
        for v in x.iter() {
            assert!(v.inf_norm() <= 1e-12);
        }
        assert!(z.inf_norm() <= 1e-12);
    }

    #[test]
    fn reference_matches_constructed_optimum() {
        let zp = random_three_block(1, (3, 2, 2, 4), [RandomBlockKind::Quadratic; 3]).unwrap();
        let (x, _z) = reference_solve(&zp.problem, 1e-11).unwrap();
        let sol = zp.problem.known_solution().unwrap();
        for i in 0..3 {
            assert_relative_eq!(
                (x[i].as_dvector() - sol.x[i].as_dvector()).norm(),
                0.0,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn qsdp_dual_shape() {
        let zp = qsdp_demo_orthant();
        let p = &zp.problem;
        // Sigma_2 = identity on the Xi block
        assert_eq!(p.block(1).sigma().matrix(), &DMatrix::<f64>::identity(2, 2));
        assert!(matches!(p.block(0).kind(), BlockKind::LinearPlusIndicator { .. }));
        assert!(matches!(p.block(2).kind(), BlockKind::Indicator { .. }));
        assert_eq!(p.op(2).matrix(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn qsdp_zero_data_has_zero_solution() {
        // b = 0, C = 0: the origin is feasible and objective-minimal.
        let spec = QsdpDualSpec {
            l: LinOp::new(DMatrix::identity(2, 2)).unwrap(),
            amap: LinOp::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.5])).unwrap(),
            b: Vector::zeros(1),
            c: Vector::zeros(2),
            cone: ConeSpec::Orthant { dim: 2 },
        };
        let zp = build_qsdp_dual(&spec).unwrap();
        let (x, _z) = reference_solve(&zp.problem, 1e-10).unwrap();
        for v in x.iter() {
            assert!(v.inf_norm() <= 1e-9);
        }
    }

    #[test]
    fn qsdp_rejects_box_cone() {
        let spec = QsdpDualSpec {
            l: LinOp::new(DMatrix::identity(1, 1)).unwrap(),
            amap: LinOp::new(DMatrix::identity(1, 1)).unwrap(),
            b: Vector::zeros(1),
            c: Vector::zeros(1),
            cone: ConeSpec::Box {
                lower: vec![0.0],
                upper: vec![1.0],
            },
        };
        assert!(build_qsdp_dual(&spec).is_err());
    }

    #[test]
    fn seeded_hints_pass_certificate() {
        for seed in 1..=20u64 {
            let zp = random_three_block(seed, (3, 2, 2, 4), [RandomBlockKind::Quadratic; 3]).unwrap();
            let hint = &zp.certificate_hint;
            let report = alpha_search(
                &zp.problem,
                hint.sigma,
                hint.tau,
                &hint.t,
                &default_alpha_grid(),
            )
            .unwrap();
            assert!(report.passes, "seed {seed}");
        }
    }
}
