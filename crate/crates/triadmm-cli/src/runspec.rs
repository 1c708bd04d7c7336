//! Run specifications: config parsing with defaults, the named presets, the
//! single-run experiment driver, and the parameter sweep.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use triadmm::certify::{
    check_sufficient_condition, min_t3, sigma_threshold, CertificateConfig, CertificateReport,
};
use triadmm::io::{self, ReportDoc};
use triadmm::solver::TAU_LIMIT;
use triadmm::zoo;
use triadmm::{
    linearize_proximal_term, run_from, Decimation, IterateState, Problem, SolveStatus,
    SolverConfig, SymOp, Vector,
};

pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_TOL_KKT: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_TRACE: &str = "trace.csv";
pub const DEFAULT_REPORT: &str = "report.json";

pub const PRESET_NAMES: &[&str] = &[
    "chyy",
    "chyy-divergent",
    "chyy-small-sigma",
    "chyy-large-t3",
    "chyy-tau-1.6",
    "qsdp-demo",
    "qsdp-demo-psd",
    "random-qp:<seed>",
];

#[derive(Debug)]
pub struct CliError(pub String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

impl From<triadmm::Error> for CliError {
    fn from(e: triadmm::Error) -> Self {
        CliError(e.to_string())
    }
}

fn err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError(format!("{path}: {msg}"))
}

/// Raw JSON config. Every field is optional; a problem source (`preset` or
/// `problem`) is required.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<TSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<TSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t3: Option<TSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_kkt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assert_descent: Option<bool>,
    /// Record every n-th iteration; absent = automatic thinning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrids>,
}

/// Proximal term: a scalar means that multiple of the identity; a nested
/// array is a full matrix; the string "linearized" forces the prox-friendly
/// `eta*I - sigma*A A^*`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Named(String),
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrids {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t3: Option<Vec<f64>>,
}

/// A fully resolved run: problem, solver configuration, starting point, and
/// output paths, plus any validation warnings.
pub struct RunSpec {
    pub name: String,
    pub problem: Problem,
    pub config: SolverConfig,
    pub start: Option<([Vector; 3], Vector)>,
    pub trace_path: PathBuf,
    pub report_path: PathBuf,
    pub sweep: Option<SweepGrids>,
    pub warnings: Vec<String>,
    /// T requests kept for re-resolution at swept sigma values.
    t_requests: [Option<TSpec>; 3],
}

pub fn parse_config(path: &Path) -> Result<RunSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    let raw: RawConfig = serde_json::from_str(&text).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    resolve(raw)
}

/// Resolve a raw config against its problem source and the documented
/// defaults (sigma = 1, tau = 1, T = linearized-as-needed, tol = 1e-8,
/// max_iter = 1e5, alpha = 1).
pub fn resolve(raw: RawConfig) -> Result<RunSpec, CliError> {
    let mut warnings = Vec::new();

    let (name, problem, base, start) = match (&raw.preset, &raw.problem) {
        (Some(p), None) => preset_parts(p)?,
        (None, Some(path)) => {
            let problem = io::load_problem(path)?;
            (
                path.display().to_string(),
                problem,
                RawConfig::default(),
                None,
            )
        }
        (Some(_), Some(_)) => {
            return Err(err("preset", "config sets both `preset` and `problem`; pick one"))
        }
        (None, None) => {
            return Err(err("preset", "config needs a problem source: `preset` or `problem`"))
        }
    };

    // explicit fields override the preset's parameters
    let sigma = raw.sigma.or(base.sigma).unwrap_or(DEFAULT_SIGMA);
    let tau = raw.tau.or(base.tau).unwrap_or(DEFAULT_TAU);
    if sigma <= 0.0 || sigma.is_nan() {
        return Err(err("sigma", format!("must be positive, got {sigma}")));
    }
    if tau <= 0.0 || tau.is_nan() {
        return Err(err("tau", format!("must be positive, got {tau}")));
    }
    if tau >= TAU_LIMIT {
        warnings.push(format!(
            "tau = {tau} lies outside (0, (1+sqrt(5))/2) ~ (0, {TAU_LIMIT:.6}); no convergence claim applies"
        ));
    }
    let alpha = raw.alpha.or(base.alpha).unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(err("alpha", format!("must lie in (0, 1], got {alpha}")));
    }

    let t_requests = [
        raw.t1.clone().or(base.t1.clone()),
        raw.t2.clone().or(base.t2.clone()),
        raw.t3.clone().or(base.t3.clone()),
    ];
    let t = resolve_t(&problem, &t_requests, sigma)?;

    let mut config = SolverConfig::new(sigma, tau, t);
    config.tol_kkt = raw.tol_kkt.or(base.tol_kkt).unwrap_or(DEFAULT_TOL_KKT);
    config.max_iter = raw.max_iter.or(base.max_iter).unwrap_or(DEFAULT_MAX_ITER);
    if let Some(d) = raw.divergence_norm.or(base.divergence_norm) {
        config.divergence_norm = d;
    }
    config.assert_descent = raw.assert_descent.or(base.assert_descent).unwrap_or(false);
    config.alpha = alpha;
    if let Some(n) = raw.trace_every {
        if n == 0 {
            return Err(err("trace_every", "must be at least 1"));
        }
        config.decimation = Decimation::Every(n);
    }

    if let Some(sweep) = &raw.sweep {
        validate_grid(&sweep.sigma, "sweep.sigma", true)?;
        validate_grid(&sweep.tau, "sweep.tau", true)?;
        validate_grid(&sweep.t3, "sweep.t3", false)?;
    }

    Ok(RunSpec {
        name,
        problem,
        config,
        start,
        trace_path: raw.trace.unwrap_or_else(|| DEFAULT_TRACE.into()),
        report_path: raw.report.unwrap_or_else(|| DEFAULT_REPORT.into()),
        sweep: raw.sweep,
        warnings,
        t_requests,
    })
}

fn validate_grid(grid: &Option<Vec<f64>>, path: &str, positive: bool) -> Result<(), CliError> {
    if let Some(g) = grid {
        if g.is_empty() {
            return Err(err(path, "grid must be nonempty"));
        }
        for (i, v) in g.iter().enumerate() {
            if !v.is_finite() {
                return Err(err(&format!("{path}[{i}]"), "grid value is not finite"));
            }
            if positive && *v <= 0.0 {
                return Err(err(&format!("{path}[{i}]"), "grid value must be positive"));
            }
            if !positive && *v < 0.0 {
                return Err(err(&format!("{path}[{i}]"), "grid value must be nonnegative"));
            }
        }
    }
    Ok(())
}

fn resolve_t(
    problem: &Problem,
    requests: &[Option<TSpec>; 3],
    sigma: f64,
) -> Result<[SymOp; 3], CliError> {
    let mut out = Vec::with_capacity(3);
    for i in 0..3 {
        let dim = problem.block(i).dim();
        let field = format!("t{}", i + 1);
        let op = match &requests[i] {
            None => default_t(problem, i, sigma)?,
            Some(TSpec::Named(name)) if name == "linearized" => {
                linearize_proximal_term(problem.op(i), sigma, 1.0).map_err(|e| err(&field, e))?
            }
            Some(TSpec::Named(other)) => {
                return Err(err(&field, format!("unknown name {other:?} (expected \"linearized\")")))
            }
            Some(TSpec::Scalar(s)) => {
                if !s.is_finite() || *s < 0.0 {
                    return Err(err(&field, format!("scalar proximal term must be >= 0, got {s}")));
                }
                SymOp::identity_scaled(dim, *s)
            }
            Some(TSpec::Matrix(rows)) => {
                let sym = SymOp::from_rows(rows).map_err(|e| err(&field, e))?;
                SymOp::new_psd(sym.matrix().clone()).map_err(|e| err(&field, e))?
            }
        };
        if op.dim() != dim {
            return Err(err(&field, format!("dimension {} does not match block dimension {dim}", op.dim())));
        }
        out.push(op);
    }
    Ok(out.try_into().expect("three"))
}

fn default_t(problem: &Problem, i: usize, sigma: f64) -> Result<SymOp, CliError> {
    if problem.block(i).is_quadratic() {
        Ok(SymOp::zeros(problem.block(i).dim()))
    } else {
        linearize_proximal_term(problem.op(i), sigma, 1.0).map_err(|e| err(&format!("t{}", i + 1), e))
    }
}

/// The documented presets. Chyy variants start from `x = (1,1,1)`, `z = 0`
/// (the origin is already the optimum, so a zero start would show nothing);
/// the conic demos and random instances start at zero and carry their
/// certified parameter hints.
pub fn preset_parts(name: &str) -> Result<(String, Problem, RawConfig, Option<([Vector; 3], Vector)>), CliError> {
    let mut base = RawConfig::default();
    let zero_t = || Some(TSpec::Scalar(0.0));
    if let Some(seed_str) = name.strip_prefix("random-qp:") {
        let seed: u64 = match std::env::var("TRIADMM_SEED") {
            Ok(v) => v
                .parse()
                .map_err(|_| CliError(format!("TRIADMM_SEED must be an integer, got {v:?}")))?,
            Err(_) => seed_str
                .parse()
                .map_err(|_| CliError(format!("random-qp seed must be an integer, got {seed_str:?}")))?,
        };
        let zp = zoo::random_three_block(seed, (3, 2, 2, 4), [zoo::RandomBlockKind::Quadratic; 3])?;
        base.sigma = Some(zp.certificate_hint.sigma);
        base.tau = Some(zp.certificate_hint.tau);
        base.alpha = Some(zp.certificate_hint.alpha);
        base.t1 = zero_t();
        base.t2 = zero_t();
        base.t3 = zero_t();
        return Ok((format!("random-qp:{seed}"), zp.problem, base, None));
    }
    match name {
        "chyy" => {
            let zp = zoo::counterexample_chyy();
            Ok((name.into(), zp.problem, base, zp.start))
        }
        "chyy-divergent" => {
            let zp = zoo::counterexample_chyy();
            base.sigma = Some(1.0);
            base.tau = Some(1.0);
            base.t1 = zero_t();
            base.t2 = zero_t();
            base.t3 = zero_t();
            Ok((name.into(), zp.problem, base, zp.start))
        }
        "chyy-small-sigma" => {
            let zp = zoo::counterexample_chyy();
            base.sigma = Some(0.01);
            base.tau = Some(1.0);
            base.t1 = zero_t();
            base.t2 = zero_t();
            base.t3 = zero_t();
            Ok((name.into(), zp.problem, base, zp.start))
        }
        "chyy-large-t3" => {
            let zp = zoo::counterexample_chyy();
            base.sigma = Some(1.0);
            base.tau = Some(1.0);
            base.t1 = zero_t();
            base.t2 = zero_t();
            base.t3 = Some(TSpec::Scalar(1224.0));
            base.max_iter = Some(1_000_000);
            Ok((name.into(), zp.problem, base, zp.start))
        }
        "chyy-tau-1.6" => {
            let zp = zoo::counterexample_chyy();
            base.sigma = Some(0.01);
            base.tau = Some(1.6);
            base.t1 = zero_t();
            base.t2 = zero_t();
            base.t3 = zero_t();
            Ok((name.into(), zp.problem, base, zp.start))
        }
        "qsdp-demo" => {
            let zp = zoo::qsdp_demo_orthant();
            base.sigma = Some(zp.certificate_hint.sigma);
            base.tau = Some(zp.certificate_hint.tau);
            base.alpha = Some(zp.certificate_hint.alpha);
            Ok((name.into(), zp.problem, base, zp.start))
        }
        "qsdp-demo-psd" => {
            let zp = zoo::qsdp_demo_psd();
            base.sigma = Some(zp.certificate_hint.sigma);
            base.tau = Some(zp.certificate_hint.tau);
            base.alpha = Some(zp.certificate_hint.alpha);
            Ok((name.into(), zp.problem, base, zp.start))
        }
        other => Err(CliError(format!(
            "unknown preset {other:?}; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// Resolved spec for one preset name with defaults filled.
pub fn preset(name: &str) -> Result<RunSpec, CliError> {
    resolve(RawConfig {
        preset: Some(name.into()),
        ..RawConfig::default()
    })
}

fn certificate(spec: &RunSpec) -> Result<CertificateReport, triadmm::Error> {
    check_sufficient_condition(
        &spec.problem,
        &CertificateConfig {
            alpha: spec.config.alpha,
            sigma: spec.config.sigma,
            tau: spec.config.tau,
            t: spec.config.t.clone(),
        },
    )
}

fn report_doc(spec: &RunSpec, report: &CertificateReport) -> ReportDoc {
    let mut doc = ReportDoc::from_report(report);
    // Threshold extras apply in the tau = 1, T2 = 0, scalar-T3 regime.
    if spec.config.tau == 1.0 && spec.config.t[1].is_zero() {
        if let Ok(th) = sigma_threshold(&spec.problem, spec.config.alpha) {
            if th.feasible {
                doc.sigma_threshold = Some(th.value);
            }
        }
        if let Ok(t3) = min_t3(&spec.problem, spec.config.sigma, spec.config.alpha) {
            doc.min_t3 = Some(t3);
        }
    }
    doc
}

/// Certificate first, then (unless `certify_only`) the solve; writes the
/// report JSON and trace CSV. Exit status: 0 Converged, 2 Diverged,
/// 3 MaxIter.
pub fn run_experiment(spec: &RunSpec, certify_only: bool) -> Result<i32, CliError> {
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let report = certificate(spec)?;
    let doc = report_doc(spec, &report);
    let json = serde_json::to_string_pretty(&doc).expect("report serializes");
    println!("certificate ({}):", spec.name);
    println!("{json}");
    std::fs::write(&spec.report_path, json).map_err(|e| CliError(format!("{}: {e}", spec.report_path.display())))?;

    if certify_only {
        return Ok(0);
    }

    let start = match &spec.start {
        Some((x, z)) => IterateState::initial(&spec.problem, x.clone(), z.clone())?,
        None => IterateState::zeros(&spec.problem),
    };
    let result = run_from(&spec.problem, &spec.config, start)?;
    let final_kkt = result.trace.last().map(|r| r.kkt).unwrap_or(f64::NAN);
    println!(
        "solve: {:?} after {} iterations, final kkt {final_kkt:.3e}, final ||r|| {:.3e}",
        result.status,
        result.iterations,
        result.state.r.norm()
    );
    let csv = io::trace_csv_string(&result.trace)?;
    std::fs::write(&spec.trace_path, csv).map_err(|e| CliError(format!("{}: {e}", spec.trace_path.display())))?;
    println!("trace -> {}", spec.trace_path.display());
    println!("report -> {}", spec.report_path.display());

    Ok(match result.status {
        SolveStatus::Converged => 0,
        SolveStatus::Diverged => 2,
        SolveStatus::MaxIter => 3,
    })
}

/// One row per grid point in lexicographic (sigma, tau, t3) order:
/// parameters, certificate outcome, solve status, iterations, final KKT.
/// Per-point failures are recorded in-row and the sweep continues.
pub fn sweep(spec: &RunSpec, out: Option<&Path>) -> Result<i32, CliError> {
    let grids = spec.sweep.clone().ok_or(CliError("config has no `sweep` section".into()))?;
    let sigmas = grids.sigma.unwrap_or_else(|| vec![spec.config.sigma]);
    let taus = grids.tau.unwrap_or_else(|| vec![spec.config.tau]);
    let t3s: Vec<Option<f64>> = match grids.t3 {
        Some(v) => v.into_iter().map(Some).collect(),
        None => vec![None],
    };

    let mut csv = String::from("sigma,tau,t3,cert_passes,status,iterations,final_kkt\n");
    for &sigma in &sigmas {
        for &tau in &taus {
            for &t3 in &t3s {
                let row = sweep_point(spec, sigma, tau, t3);
                let t3_str = t3.map(|v| format!("{v:e}")).unwrap_or_default();
                match row {
                    Ok((cert, status, iters, kkt)) => {
                        let _ = writeln!(csv, "{sigma:e},{tau:e},{t3_str},{cert},{status},{iters},{kkt:e}");
                    }
                    Err(e) => {
                        let msg = e.to_string().replace(',', ";");
                        let _ = writeln!(csv, "{sigma:e},{tau:e},{t3_str},,error: {msg},,");
                    }
                }
            }
        }
    }
    match out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
            println!("sweep -> {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn sweep_point(
    spec: &RunSpec,
    sigma: f64,
    tau: f64,
    t3: Option<f64>,
) -> Result<(bool, String, usize, f64), CliError> {
    // Re-resolve proximal terms at this sigma; a t3 grid value overrides the
    // third block's term with t3*I.
    let mut requests = spec.t_requests.clone();
    if let Some(v) = t3 {
        requests[2] = Some(TSpec::Scalar(v));
    }
    let t = resolve_t(&spec.problem, &requests, sigma)?;
    let mut config = spec.config.clone();
    config.sigma = sigma;
    config.tau = tau;
    config.t = t;

    let report = check_sufficient_condition(
        &spec.problem,
        &CertificateConfig {
            alpha: config.alpha,
            sigma,
            tau,
            t: config.t.clone(),
        },
    )?;

    let start = match &spec.start {
        Some((x, z)) => IterateState::initial(&spec.problem, x.clone(), z.clone())?,
        None => IterateState::zeros(&spec.problem),
    };
    let result = run_from(&spec.problem, &config, start)?;
    let final_kkt = result.trace.last().map(|r| r.kkt).unwrap_or(f64::NAN);
    let status = match result.status {
        SolveStatus::Converged => "Converged",
        SolveStatus::Diverged => "Diverged",
        SolveStatus::MaxIter => "MaxIter",
    };
    Ok((report.passes, status.to_string(), result.iterations, final_kkt))
}

/// The resolved spec as JSON (for `preset --show`).
pub fn describe(spec: &RunSpec) -> String {
    let t_desc: Vec<serde_json::Value> = (0..3)
        .map(|i| {
            let t = &spec.config.t[i];
            match t.as_scalar_identity(1e-12) {
                Some(s) => serde_json::json!({ "scalar": s }),
                None => serde_json::json!({ "dim": t.dim() }),
            }
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "name": spec.name,
        "sigma": spec.config.sigma,
        "tau": spec.config.tau,
        "alpha": spec.config.alpha,
        "t": t_desc,
        "tol_kkt": spec.config.tol_kkt,
        "max_iter": spec.config.max_iter,
        "divergence_norm": spec.config.divergence_norm,
        "start": spec.start.as_ref().map(|(x, z)| serde_json::json!({
            "x1": x[0].to_vec(), "x2": x[1].to_vec(), "x3": x[2].to_vec(), "z": z.to_vec(),
        })),
        "warnings": spec.warnings,
        "trace": spec.trace_path,
        "report": spec.report_path,
    }))
    .expect("spec serializes")
}
