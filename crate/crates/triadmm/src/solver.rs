//! The 3-block semi-proximal ADMM iteration with step length `tau`:
//!
//! ```text
//!   x_1^{k+1} = argmin L_sigma(x_1, x_2^k, x_3^k; z^k) + 1/2||x_1 - x_1^k||^2_{T_1}
//!   x_2^{k+1} = argmin L_sigma(x_1^{k+1}, x_2, x_3^k; z^k) + 1/2||x_2 - x_2^k||^2_{T_2}
//!   x_3^{k+1} = argmin L_sigma(x_1^{k+1}, x_2^{k+1}, x_3; z^k) + 1/2||x_3 - x_3^k||^2_{T_3}
//!   z^{k+1}   = z^k + tau*sigma*(A^* x^{k+1} - c)
//! ```
//!
//! plus the per-iteration diagnostics used to monitor the certificate's
//! Lyapunov decrease: with a reference optimum available the solver records
//! `phi_bar_k`, `xi_k`, `s_k`, `t_k` and asserts (optionally) the descent
//! inequality
//!
//! ```text
//!   lyap_k - lyap_{k+1} >= t_{k+1} + min(tau, 1+tau-tau^2)*sigma/tau*||r^{k+1}||^2,
//!   lyap_k = phi_bar_k + max(1-tau, 1-1/tau)*sigma*||r^k||^2 + xi_k.
//! ```

use nalgebra::DVector;

use crate::certify::{build_h, build_m, CertificateConfig};
use crate::error::Error;
use crate::linalg::{spd_inverse, SymOp, Vector};
use crate::model::{BlockSolver, Problem};

/// Step lengths at or beyond `(1+sqrt(5))/2` fall outside the convergence
/// theory; the solver runs them but flags the configuration.
pub const TAU_LIMIT: f64 = 1.618033988749895;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decimation {
    /// Record every iteration up to 1000, then every 10th (the final state is
    /// always recorded).
    Auto,
    /// Record every n-th iteration (1 = all).
    Every(usize),
}

impl Decimation {
    fn keeps(&self, k: usize) -> bool {
        match self {
            Decimation::Auto => k <= 1000 || k.is_multiple_of(10),
            Decimation::Every(n) => k.is_multiple_of(*n.max(&1)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub sigma: f64,
    pub tau: f64,
    pub t: [SymOp; 3],
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub divergence_norm: f64,
    pub assert_descent: bool,
    /// Weighting parameter for the diagnostics only; the iterates never
    /// depend on it.
    pub alpha: f64,
    pub decimation: Decimation,
}

impl SolverConfig {
    pub fn new(sigma: f64, tau: f64, t: [SymOp; 3]) -> Self {
        Self {
            sigma,
            tau,
            t,
            tol_kkt: 1e-8,
            max_iter: 100_000,
            divergence_norm: 1e8,
            assert_descent: false,
            alpha: 1.0,
            decimation: Decimation::Auto,
        }
    }

    /// Zero proximal terms for quadratic blocks, the linearizing
    /// `eta*I - sigma*A A^*` for prox blocks.
    pub fn with_default_t(problem: &Problem, sigma: f64, tau: f64) -> Result<Self, Error> {
        let mut t = Vec::with_capacity(3);
        for i in 0..3 {
            if problem.block(i).is_quadratic() {
                t.push(SymOp::zeros(problem.block(i).dim()));
            } else {
                t.push(crate::model::linearize_proximal_term(problem.op(i), sigma, 1.0)?);
            }
        }
        let t: [SymOp; 3] = t.try_into().expect("three blocks");
        Ok(Self::new(sigma, tau, t))
    }

    pub fn validate(&self, problem: &Problem) -> Result<(), Error> {
        if self.sigma <= 0.0 || self.sigma.is_nan() {
            return Err(Error::Config {
                what: format!("sigma must be positive, got {}", self.sigma),
            });
        }
        if self.tau <= 0.0 || self.tau.is_nan() {
            return Err(Error::Config {
                what: format!("tau must be positive, got {}", self.tau),
            });
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config {
                what: format!("alpha must lie in (0, 1], got {}", self.alpha),
            });
        }
        let dims = problem.block_dims();
        for i in 0..3 {
            if self.t[i].dim() != dims[i] {
                return Err(Error::Dimension {
                    what: format!("T{} has dim {}, block dim {}", i + 1, self.t[i].dim(), dims[i]),
                });
            }
            SymOp::new_psd(self.t[i].matrix().clone())?;
        }
        Ok(())
    }

    /// True when `tau` sits outside the theory's `(0, (1+sqrt(5))/2)` range.
    pub fn tau_out_of_range(&self) -> bool {
        self.tau >= TAU_LIMIT
    }
}

#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub x1: Vector,
    pub x2: Vector,
    pub x3: Vector,
    pub z: Vector,
    /// `A^* x^k - c`
    pub r: Vector,
    /// `x_2^k - x_2^{k-1}` and `x_3^k - x_3^{k-1}` (absent at k = 0).
    pub prev_dx2: Option<Vector>,
    pub prev_dx3: Option<Vector>,
}

impl IterateState {
    pub fn initial(problem: &Problem, x: [Vector; 3], z: Vector) -> Result<Self, Error> {
        let r = problem.residual([&x[0], &x[1], &x[2]])?;
        if z.len() != problem.constraint_dim() {
            return Err(Error::Dimension {
                what: format!("z has length {}, expected {}", z.len(), problem.constraint_dim()),
            });
        }
        let [x1, x2, x3] = x;
        Ok(Self {
            k: 0,
            x1,
            x2,
            x3,
            z,
            r,
            prev_dx2: None,
            prev_dx3: None,
        })
    }

    pub fn zeros(problem: &Problem) -> Self {
        let [n1, n2, n3] = problem.block_dims();
        Self::initial(
            problem,
            [Vector::zeros(n1), Vector::zeros(n2), Vector::zeros(n3)],
            Vector::zeros(problem.constraint_dim()),
        )
        .expect("zero start is always dimensionally consistent")
    }

    pub fn x(&self) -> [&Vector; 3] {
        [&self.x1, &self.x2, &self.x3]
    }

    pub fn max_norm(&self) -> f64 {
        self.x1
            .norm()
            .max(self.x2.norm())
            .max(self.x3.norm())
            .max(self.z.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub k: usize,
    pub r_norm: f64,
    pub kkt: f64,
    /// `z~^k = z^{k-1} + sigma*(A^* x^k - c)` (absent at k = 0).
    pub tilde_z: Option<Vector>,
    pub phi_bar: Option<f64>,
    pub xi: Option<f64>,
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub lyapunov: Option<f64>,
    /// Descent slack against the previous recorded iterate, when the records
    /// are consecutive and carry Lyapunov values.
    pub slack: Option<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub iterations: usize,
    pub state: IterateState,
    pub trace: Vec<DiagnosticsRecord>,
    pub tau_warning: bool,
}

/// Precomputed weighting operators for the Lyapunov diagnostics. Requires a
/// known solution and `Sigma_2 > 0`; without them the trace carries only the
/// residual norms and KKT values.
struct DiagnosticWeights {
    m: SymOp,
    h: SymOp,
    sigma1_t1: SymOp,
    half_sigma1_t1: SymOp,
    /// `T_2` (the xi weight on block 2)
    w_xi2: SymOp,
    /// `T_3 + (sigma^2/alpha) * penalty`
    w_xi3: SymOp,
    /// `(1-alpha)/2 * Sigma_2 + T_2`
    w_s2: SymOp,
    /// `1/2 * Sigma_3 + T_3 - sigma^2/(2 alpha) * penalty`
    w_s3: SymOp,
}

impl DiagnosticWeights {
    fn assemble(problem: &Problem, config: &SolverConfig, alpha: f64) -> Option<Self> {
        problem.known_solution()?;
        let n2 = problem.block(1).dim();
        if n2 > 0 && spd_inverse(problem.block(1).sigma().matrix()).is_none() {
            return None;
        }
        let cfg = CertificateConfig {
            alpha,
            sigma: config.sigma,
            tau: config.tau,
            t: config.t.clone(),
        };
        let m = build_m(problem, &cfg).ok()?;
        let h = build_h(problem, &cfg).ok()?;
        let sigma2_inv = if n2 > 0 {
            spd_inverse(problem.block(1).sigma().matrix())?
        } else {
            nalgebra::DMatrix::zeros(0, 0)
        };
        let cross = problem.op(1).cross_gram(problem.op(2)).ok()?;
        let penalty = if n2 > 0 {
            cross.transpose() * sigma2_inv * cross
        } else {
            let n3 = problem.block(2).dim();
            nalgebra::DMatrix::zeros(n3, n3)
        };
        let s2 = config.sigma * config.sigma;
        let sigma1_t1 = SymOp::new(problem.block(0).sigma().matrix() + config.t[0].matrix()).ok()?;
        let half_sigma1_t1 =
            SymOp::new(0.5 * problem.block(0).sigma().matrix() + config.t[0].matrix()).ok()?;
        let w_xi2 = config.t[1].clone();
        let w_xi3 = SymOp::new(config.t[2].matrix() + (s2 / alpha) * &penalty).ok()?;
        let w_s2 = SymOp::new(
            0.5 * (1.0 - alpha) * problem.block(1).sigma().matrix() + config.t[1].matrix(),
        )
        .ok()?;
        let w_s3 = SymOp::new(
            0.5 * problem.block(2).sigma().matrix() + config.t[2].matrix()
                - (s2 / (2.0 * alpha)) * &penalty,
        )
        .ok()?;
        Some(Self {
            m,
            h,
            sigma1_t1,
            half_sigma1_t1,
            w_xi2,
            w_xi3,
            w_s2,
            w_s3,
        })
    }
}

/// One solver instance: the per-block subproblem solvers factored for the
/// fixed `(sigma, T)` of its configuration. Runs are strictly sequential;
/// distinct engines are independent.
pub struct Engine<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    blocks: [BlockSolver; 3],
    weights: Option<DiagnosticWeights>,
}

impl<'a> Engine<'a> {
    pub fn new(problem: &'a Problem, config: &'a SolverConfig) -> Result<Self, Error> {
        config.validate(problem)?;
        let mut solvers = Vec::with_capacity(3);
        for i in 0..3 {
            solvers.push(BlockSolver::prepare(
                i,
                problem.block(i),
                problem.op(i),
                &config.t[i],
                config.sigma,
            )?);
        }
        let blocks: [BlockSolver; 3] = solvers.try_into().expect("three blocks");
        let weights = DiagnosticWeights::assemble(problem, config, config.alpha);
        Ok(Self {
            problem,
            config,
            blocks,
            weights,
        })
    }

    pub fn has_lyapunov_diagnostics(&self) -> bool {
        self.weights.is_some()
    }

    /// One Gauss-Seidel sweep plus the multiplier update.
    pub fn step(&self, state: &IterateState) -> Result<IterateState, Error> {
        let p = self.problem;
        let sigma = self.config.sigma;
        let c = p.c().as_dvector();

        let a1x1 = p.op(0).apply(&state.x1)?;
        let a2x2 = p.op(1).apply(&state.x2)?;
        let a3x3 = p.op(2).apply(&state.x3)?;

        // x1: offset = A_2^* x_2^k + A_3^* x_3^k - c
        let off1 = Vector::from_dvector(a2x2.as_dvector() + a3x3.as_dvector() - c)?;
        let x1 = self.blocks[0].solve(0, p.block(0), p.op(0), &self.config.t[0], sigma, &state.z, &off1, &state.x1)?;
        let a1x1_new = p.op(0).apply(&x1)?;

        // x2: offset = A_1^* x_1^{k+1} + A_3^* x_3^k - c
        let off2 = Vector::from_dvector(a1x1_new.as_dvector() + a3x3.as_dvector() - c)?;
        let x2 = self.blocks[1].solve(1, p.block(1), p.op(1), &self.config.t[1], sigma, &state.z, &off2, &state.x2)?;
        let a2x2_new = p.op(1).apply(&x2)?;

        // x3: offset = A_1^* x_1^{k+1} + A_2^* x_2^{k+1} - c
        let off3 = Vector::from_dvector(a1x1_new.as_dvector() + a2x2_new.as_dvector() - c)?;
        let x3 = self.blocks[2].solve(2, p.block(2), p.op(2), &self.config.t[2], sigma, &state.z, &off3, &state.x3)?;
        let a3x3_new = p.op(2).apply(&x3)?;

        let r = Vector::from_dvector(a1x1_new.as_dvector() + a2x2_new.as_dvector() + a3x3_new.as_dvector() - c)?;
        let z = Vector::from_dvector(state.z.as_dvector() + self.config.tau * sigma * r.as_dvector())?;

        let prev_dx2 = Vector::from_dvector(x2.as_dvector() - state.x2.as_dvector())?;
        let prev_dx3 = Vector::from_dvector(x3.as_dvector() - state.x3.as_dvector())?;
        let _ = &a1x1; // first-block image of the old iterate is not reused

        Ok(IterateState {
            k: state.k + 1,
            x1,
            x2,
            x3,
            z,
            r,
            prev_dx2: Some(prev_dx2),
            prev_dx3: Some(prev_dx3),
        })
    }

    /// Diagnostics record for the state `next` produced from `prev` (record
    /// index `next.k`). Lyapunov fields are filled when a known solution and
    /// `Sigma_2 > 0` are available.
    pub fn diagnostics(&self, prev: &IterateState, next: &IterateState) -> Result<DiagnosticsRecord, Error> {
        debug_assert_eq!(prev.k + 1, next.k);
        let p = self.problem;
        let sigma = self.config.sigma;
        let tau = self.config.tau;
        let alpha = self.config.alpha;
        let kkt = p.kkt_residual(next.x(), &next.z)?;
        let tilde_z = Vector::from_dvector(prev.z.as_dvector() + sigma * next.r.as_dvector())?;

        let mut rec = DiagnosticsRecord {
            k: next.k,
            r_norm: next.r.norm(),
            kkt,
            tilde_z: Some(tilde_z),
            phi_bar: None,
            xi: None,
            s: None,
            t: None,
            lyapunov: None,
            slack: None,
            alpha,
        };

        if let (Some(w), Some(sol)) = (&self.weights, p.known_solution()) {
            let dx1 = next.x1.as_dvector() - prev.x1.as_dvector();
            let dx2 = next.x2.as_dvector() - prev.x2.as_dvector();
            let dx3 = next.x3.as_dvector() - prev.x3.as_dvector();

            let xi = w.w_xi2.quad_form(&dx2) + w.w_xi3.quad_form(&dx3);
            let mixed = p.op(0).apply(&next.x1)?.as_dvector()
                + p.op(1).apply(&prev.x2)?.as_dvector()
                + p.op(2).apply(&prev.x3)?.as_dvector()
                - p.c().as_dvector();
            let s = w.half_sigma1_t1.quad_form(&dx1)
                + w.w_s2.quad_form(&dx2)
                + w.w_s3.quad_form(&dx3)
                + sigma * mixed.norm_squared();
            let du = stack(&dx2, &dx3);
            let t = w.half_sigma1_t1.quad_form(&dx1) + w.h.quad_form(&du);

            let ze = next.z.as_dvector() - sol.z.as_dvector();
            let x1e = next.x1.as_dvector() - sol.x[0].as_dvector();
            let ue = stack(
                &(next.x2.as_dvector() - sol.x[1].as_dvector()),
                &(next.x3.as_dvector() - sol.x[2].as_dvector()),
            );
            let phi_bar = ze.norm_squared() / (sigma * tau) + w.sigma1_t1.quad_form(&x1e) + w.m.quad_form(&ue);
            let lyapunov = phi_bar + (1.0 - tau).max(1.0 - 1.0 / tau) * sigma * rec.r_norm * rec.r_norm + xi;

            rec.phi_bar = Some(phi_bar);
            rec.xi = Some(xi);
            rec.s = Some(s);
            rec.t = Some(t);
            rec.lyapunov = Some(lyapunov);
        }
        Ok(rec)
    }

    /// Record for a starting state (`phi_bar` only; xi/s/t need a previous
    /// step).
    pub fn initial_record(&self, state: &IterateState) -> Result<DiagnosticsRecord, Error> {
        let p = self.problem;
        let kkt = p.kkt_residual(state.x(), &state.z)?;
        let mut rec = DiagnosticsRecord {
            k: state.k,
            r_norm: state.r.norm(),
            kkt,
            tilde_z: None,
            phi_bar: None,
            xi: None,
            s: None,
            t: None,
            lyapunov: None,
            slack: None,
            alpha: self.config.alpha,
        };
        if let (Some(w), Some(sol)) = (&self.weights, p.known_solution()) {
            let ze = state.z.as_dvector() - sol.z.as_dvector();
            let x1e = state.x1.as_dvector() - sol.x[0].as_dvector();
            let ue = stack(
                &(state.x2.as_dvector() - sol.x[1].as_dvector()),
                &(state.x3.as_dvector() - sol.x[2].as_dvector()),
            );
            rec.phi_bar = Some(
                ze.norm_squared() / (self.config.sigma * self.config.tau)
                    + w.sigma1_t1.quad_form(&x1e)
                    + w.m.quad_form(&ue),
            );
        }
        Ok(rec)
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// One iteration as a standalone operation (prepares a transient engine; use
/// [`Engine`] directly for repeated stepping).
pub fn spadmm_step(
    state: &IterateState,
    config: &SolverConfig,
    problem: &Problem,
) -> Result<IterateState, Error> {
    Engine::new(problem, config)?.step(state)
}

/// Combined KKT residual at `(x, z)`.
pub fn kkt_residual(problem: &Problem, x: [&Vector; 3], z: &Vector) -> Result<f64, Error> {
    problem.kkt_residual(x, z)
}

/// Diagnostics for the transition `prev -> next` with an explicit alpha.
pub fn compute_diagnostics(
    prev: &IterateState,
    next: &IterateState,
    problem: &Problem,
    config: &SolverConfig,
    alpha: f64,
) -> Result<DiagnosticsRecord, Error> {
    let mut cfg = config.clone();
    cfg.alpha = alpha;
    Engine::new(problem, &cfg)?.diagnostics(prev, next)
}

/// Slack of the descent inequality between two consecutive records:
/// `(lyap_k - lyap_{k+1}) - (t_{k+1} + min(tau, 1+tau-tau^2)*sigma/tau*||r^{k+1}||^2)`.
/// Nonnegative (up to roundoff) whenever the certificate's assumptions hold.
pub fn check_descent_inequality(
    rec_k: &DiagnosticsRecord,
    rec_k1: &DiagnosticsRecord,
    config: &SolverConfig,
) -> Result<f64, Error> {
    if rec_k.alpha != rec_k1.alpha {
        return Err(Error::AlphaMismatch {
            left: rec_k.alpha,
            right: rec_k1.alpha,
        });
    }
    let lyap_k = rec_k.lyapunov.ok_or(Error::MissingLyapunov { k: rec_k.k })?;
    let lyap_k1 = rec_k1.lyapunov.ok_or(Error::MissingLyapunov { k: rec_k1.k })?;
    let t_k1 = rec_k1.t.ok_or(Error::MissingLyapunov { k: rec_k1.k })?;
    let tau = config.tau;
    let coeff = f64::min(tau, 1.0 + tau - tau * tau) * config.sigma / tau;
    Ok((lyap_k - lyap_k1) - (t_k1 + coeff * rec_k1.r_norm * rec_k1.r_norm))
}

/// Run from the zero start. See [`run_from`] for custom starting points.
pub fn run(problem: &Problem, config: &SolverConfig) -> Result<SolveResult, Error> {
    let start = IterateState::zeros(problem);
    run_from(problem, config, start)
}

/// Iterate until the KKT residual reaches `tol_kkt` (Converged), an iterate
/// norm exceeds `divergence_norm` (Diverged), or `max_iter` (MaxIter).
pub fn run_from(
    problem: &Problem,
    config: &SolverConfig,
    start: IterateState,
) -> Result<SolveResult, Error> {
    let engine = Engine::new(problem, config)?;
    let mut trace = Vec::new();
    let mut state = start;

    let rec0 = engine.initial_record(&state)?;
    let mut status = if rec0.kkt <= config.tol_kkt {
        Some(SolveStatus::Converged)
    } else {
        None
    };
    let mut last_recorded: Option<(usize, Option<f64>)> = Some((rec0.k, rec0.lyapunov));
    trace.push(rec0);

    if status.is_none() {
        for _ in 0..config.max_iter {
            let next = match engine.step(&state) {
                Ok(n) => n,
                Err(Error::NonFinite { .. }) => {
                    // Overflow amounts to divergence past any finite threshold.
                    status = Some(SolveStatus::Diverged);
                    break;
                }
                Err(e) => return Err(e),
            };

            let diverged = next.max_norm() > config.divergence_norm;
            let keep = config.decimation.keeps(next.k) || diverged;
            let mut rec = None;
            if keep {
                let mut r = engine.diagnostics(&state, &next)?;
                // Slack only spans consecutive recorded pairs.
                if let Some((prev_k, Some(prev_lyap))) = last_recorded {
                    if prev_k + 1 == r.k && r.lyapunov.is_some() {
                        let t_k1 = r.t.expect("present with lyapunov");
                        let coeff =
                            f64::min(config.tau, 1.0 + config.tau - config.tau * config.tau)
                                * config.sigma
                                / config.tau;
                        let slack = (prev_lyap - r.lyapunov.unwrap())
                            - (t_k1 + coeff * r.r_norm * r.r_norm);
                        r.slack = Some(slack);
                        if config.assert_descent && prev_k >= 1 {
                            let tol = 1e-10 * (1.0 + prev_lyap);
                            if slack < -tol {
                                return Err(Error::DescentViolation {
                                    k: r.k,
                                    slack,
                                    tol,
                                });
                            }
                        }
                    }
                }
                last_recorded = Some((r.k, r.lyapunov));
                rec = Some(r);
            }

            let kkt = match &rec {
                Some(r) => r.kkt,
                None => problem.kkt_residual([&next.x1, &next.x2, &next.x3], &next.z)?,
            };
            if let Some(r) = rec {
                trace.push(r);
            }
            state = next;

            if diverged {
                status = Some(SolveStatus::Diverged);
                break;
            }
            if kkt <= config.tol_kkt {
                status = Some(SolveStatus::Converged);
                break;
            }
        }
    }

    let status = status.unwrap_or(SolveStatus::MaxIter);
    // Make sure the final state is in the trace even when decimated away.
    if trace.last().map(|r| r.k) != Some(state.k) {
        if state.k > 0 {
            // The previous state is gone; recompute a standalone record.
            let rec = final_record(&engine, problem, config, &state)?;
            trace.push(rec);
        }
    }

    Ok(SolveResult {
        status,
        iterations: state.k,
        state,
        trace,
        tau_warning: config.tau_out_of_range(),
    })
}

fn final_record(
    engine: &Engine,
    problem: &Problem,
    config: &SolverConfig,
    state: &IterateState,
) -> Result<DiagnosticsRecord, Error> {
    let _ = (problem, config);
    let mut rec = engine.initial_record(state)?;
    rec.k = state.k;
    Ok(rec)
}
