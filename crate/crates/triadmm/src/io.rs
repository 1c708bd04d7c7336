//! Serialization: the JSON problem document, certificate report JSON, and
//! the CSV trace format.
//!
//! Problem documents look like
//!
//! ```json
//! {
//!   "blocks": [
//!     {"kind": "quadratic", "Q": [[0.1]], "q": [0.0]},
//!     {"kind": "indicator", "cone": {"type": "orthant", "dim": 2}},
//!     {"kind": "linear_plus_indicator", "q": [1.0], "cone": {"type": "psd", "order": 5}}
//!   ],
//!   "ops": [[[1.0], [1.0], [1.0]], ...],
//!   "c": [0.0, 0.0, 0.0],
//!   "known_solution": {"x1": [...], "x2": [...], "x3": [...], "z": [...]}
//! }
//! ```
//!
//! with matrices as row-major nested arrays of finite doubles, `sigma` as an
//! optional per-block strong-convexity override, and `oracle` naming the prox
//! oracle of a separable block. Validation errors cite the JSON path of the
//! offending field (for example `ops[1][2]`).

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::certify::CertificateReport;
use crate::cone::ConeSpec;
use crate::error::Error;
use crate::linalg::{LinOp, SymOp, Vector};
use crate::model::{BlockFunction, KnownSolution, Problem, ProxOracle};
use crate::solver::DiagnosticsRecord;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub blocks: Vec<BlockDoc>,
    pub ops: Vec<Vec<Vec<f64>>>,
    pub c: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known_solution: Option<KnownSolutionDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockDoc {
    pub kind: String,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<ProxOracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Optional certified strong-convexity override.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnownSolutionDoc {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub z: Vec<f64>,
}

fn schema_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn matrix_from_doc(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, Error> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(schema_err(
                format!("{path}[{i}]"),
                format!("row has length {}, expected {ncols}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(schema_err(format!("{path}[{i}][{j}]"), "entry is not finite"));
            }
        }
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn vector_from_doc(entries: &[f64], path: &str) -> Result<Vector, Error> {
    for (i, v) in entries.iter().enumerate() {
        if !v.is_finite() {
            return Err(schema_err(format!("{path}[{i}]"), "entry is not finite"));
        }
    }
    Vector::new(entries.to_vec())
}

pub fn problem_from_doc(doc: &ProblemDoc) -> Result<Problem, Error> {
    if doc.blocks.len() != 3 {
        return Err(schema_err("blocks", format!("expected 3 blocks, found {}", doc.blocks.len())));
    }
    if doc.ops.len() != 3 {
        return Err(schema_err("ops", format!("expected 3 operators, found {}", doc.ops.len())));
    }
    let mut blocks = Vec::with_capacity(3);
    for (i, b) in doc.blocks.iter().enumerate() {
        let path = format!("blocks[{i}]");
        let block = match b.kind.as_str() {
            "quadratic" => {
                let qm = b
                    .q_matrix
                    .as_ref()
                    .ok_or_else(|| schema_err(format!("{path}.Q"), "quadratic block needs Q"))?;
                let q = matrix_from_doc(qm, &format!("{path}.Q"))?;
                let dim = q.nrows();
                let lin = match &b.q {
                    Some(v) => vector_from_doc(v, &format!("{path}.q"))?,
                    None => Vector::zeros(dim),
                };
                let sym = SymOp::new(q).map_err(|e| schema_err(format!("{path}.Q"), e.to_string()))?;
                BlockFunction::quadratic(sym, lin)
                    .map_err(|e| schema_err(path.clone(), e.to_string()))?
            }
            "indicator" => {
                let cone = b
                    .cone
                    .clone()
                    .ok_or_else(|| schema_err(format!("{path}.cone"), "indicator block needs a cone"))?;
                BlockFunction::indicator(cone).map_err(|e| schema_err(path.clone(), e.to_string()))?
            }
            "linear_plus_indicator" => {
                let cone = b.cone.clone().ok_or_else(|| {
                    schema_err(format!("{path}.cone"), "linear_plus_indicator block needs a cone")
                })?;
                let lin = match &b.q {
                    Some(v) => vector_from_doc(v, &format!("{path}.q"))?,
                    None => Vector::zeros(cone.dim()),
                };
                BlockFunction::linear_plus_indicator(lin, cone)
                    .map_err(|e| schema_err(path.clone(), e.to_string()))?
            }
            "separable" => {
                let oracle = b.oracle.clone().ok_or_else(|| {
                    schema_err(format!("{path}.oracle"), "separable block needs a prox oracle")
                })?;
                let dim = b
                    .dim
                    .ok_or_else(|| schema_err(format!("{path}.dim"), "separable block needs a dimension"))?;
                BlockFunction::separable(oracle, dim)
                    .map_err(|e| schema_err(path.clone(), e.to_string()))?
            }
            other => {
                return Err(schema_err(
                    format!("{path}.kind"),
                    format!("unknown kind {other:?} (expected quadratic | indicator | linear_plus_indicator | separable)"),
                ))
            }
        };
        let block = match &b.sigma {
            Some(s) => {
                let sym = SymOp::new(matrix_from_doc(s, &format!("{path}.sigma"))?)
                    .map_err(|e| schema_err(format!("{path}.sigma"), e.to_string()))?;
                block
                    .with_sigma(sym)
                    .map_err(|e| schema_err(format!("{path}.sigma"), e.to_string()))?
            }
            None => block,
        };
        blocks.push(block);
    }

    let mut ops = Vec::with_capacity(3);
    for (i, rows) in doc.ops.iter().enumerate() {
        let mat = matrix_from_doc(rows, &format!("ops[{i}]"))?;
        ops.push(LinOp::new(mat).map_err(|e| schema_err(format!("ops[{i}]"), e.to_string()))?);
    }

    let c = vector_from_doc(&doc.c, "c")?;
    let blocks: [BlockFunction; 3] = blocks.try_into().expect("three blocks");
    let ops: [LinOp; 3] = ops.try_into().expect("three ops");
    let problem = Problem::new(blocks, ops, c).map_err(|e| schema_err("ops", e.to_string()))?;

    match &doc.known_solution {
        Some(ks) => {
            let sol = KnownSolution {
                x: [
                    vector_from_doc(&ks.x1, "known_solution.x1")?,
                    vector_from_doc(&ks.x2, "known_solution.x2")?,
                    vector_from_doc(&ks.x3, "known_solution.x3")?,
                ],
                z: vector_from_doc(&ks.z, "known_solution.z")?,
            };
            problem
                .with_known_solution(sol)
                .map_err(|e| schema_err("known_solution", e.to_string()))
        }
        None => Ok(problem),
    }
}

fn matrix_to_doc(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn problem_to_doc(problem: &Problem) -> ProblemDoc {
    let blocks = (0..3)
        .map(|i| {
            let b = problem.block(i);
            match b.kind() {
                crate::model::BlockKind::Quadratic { hessian, linear } => BlockDoc {
                    kind: "quadratic".into(),
                    q_matrix: Some(matrix_to_doc(hessian.matrix())),
                    q: Some(linear.to_vec()),
                    cone: None,
                    oracle: None,
                    dim: None,
                    sigma: None,
                },
                crate::model::BlockKind::Indicator { cone } => BlockDoc {
                    kind: "indicator".into(),
                    q_matrix: None,
                    q: None,
                    cone: Some(cone.clone()),
                    oracle: None,
                    dim: None,
                    sigma: sigma_override(b),
                },
                crate::model::BlockKind::LinearPlusIndicator { linear, cone } => BlockDoc {
                    kind: "linear_plus_indicator".into(),
                    q_matrix: None,
                    q: Some(linear.to_vec()),
                    cone: Some(cone.clone()),
                    oracle: None,
                    dim: None,
                    sigma: sigma_override(b),
                },
                crate::model::BlockKind::Separable { oracle, dim } => BlockDoc {
                    kind: "separable".into(),
                    q_matrix: None,
                    q: None,
                    cone: None,
                    oracle: Some(oracle.clone()),
                    dim: Some(*dim),
                    sigma: sigma_override(b),
                },
            }
        })
        .collect();
    let ops = (0..3).map(|i| matrix_to_doc(problem.op(i).matrix())).collect();
    let known_solution = problem.known_solution().map(|s| KnownSolutionDoc {
        x1: s.x[0].to_vec(),
        x2: s.x[1].to_vec(),
        x3: s.x[2].to_vec(),
        z: s.z.to_vec(),
    });
    ProblemDoc {
        blocks,
        ops,
        c: problem.c().to_vec(),
        known_solution,
    }
}

fn sigma_override(b: &BlockFunction) -> Option<Vec<Vec<f64>>> {
    if b.sigma().is_zero() {
        None
    } else {
        Some(matrix_to_doc(b.sigma().matrix()))
    }
}

pub fn problem_to_json(problem: &Problem) -> Result<String, Error> {
    Ok(serde_json::to_string_pretty(&problem_to_doc(problem))?)
}

pub fn problem_from_json(json: &str) -> Result<Problem, Error> {
    let doc: ProblemDoc = serde_json::from_str(json)?;
    problem_from_doc(&doc)
}

pub fn load_problem(path: &std::path::Path) -> Result<Problem, Error> {
    let text = std::fs::read_to_string(path)?;
    problem_from_json(&text)
}

/// Report JSON: `{passes, alpha, margins: {cond1, H, M}, schur?,
/// sigma_threshold?, min_t3?}`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportDoc {
    pub passes: bool,
    pub alpha: f64,
    pub margins: MarginsDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schur: Option<SchurDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_t3: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginsDoc {
    pub cond1: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchurDoc {
    pub c1: bool,
    pub c2: bool,
}

impl ReportDoc {
    pub fn from_report(report: &CertificateReport) -> Self {
        Self {
            passes: report.passes,
            alpha: report.alpha_used,
            margins: MarginsDoc {
                cond1: report.cond1_margin,
                h: report.h_margin,
                m: report.m_margin,
            },
            schur: report.schur.as_ref().map(|s| SchurDoc { c1: s.c1, c2: s.c2 }),
            sigma_threshold: None,
            min_t3: None,
        }
    }
}

/// CSV trace: `k,r_norm,kkt,phi_bar,xi,s,t,lyapunov,slack`, one row per
/// recorded iteration, empty fields where a quantity is unavailable, numbers
/// in round-trip scientific notation.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[DiagnosticsRecord]) -> Result<(), Error> {
    writeln!(w, "k,r_norm,kkt,phi_bar,xi,s,t,lyapunov,slack")?;
    for rec in trace {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:e},{:e},{},{},{},{},{},{}",
            rec.k,
            rec.r_norm,
            rec.kkt,
            opt(rec.phi_bar),
            opt(rec.xi),
            opt(rec.s),
            opt(rec.t),
            opt(rec.lyapunov),
            opt(rec.slack),
        )?;
    }
    Ok(())
}

pub fn trace_csv_string(trace: &[DiagnosticsRecord]) -> Result<String, Error> {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace)?;
    Ok(String::from_utf8(buf).expect("csv is ascii"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn chyy_round_trips() {
        let p = zoo::counterexample_chyy().problem;
        let json = problem_to_json(&p).unwrap();
        let p2 = problem_from_json(&json).unwrap();
        let json2 = problem_to_json(&p2).unwrap();
        assert_eq!(json, json2);
        assert!(p2.known_solution().is_some());
    }

    #[test]
    fn ragged_matrix_cites_path() {
        let doc = r#"{
            "blocks": [
                {"kind": "quadratic", "Q": [[0.1]]},
                {"kind": "quadratic", "Q": [[0.1]]},
                {"kind": "quadratic", "Q": [[0.1]]}
            ],
            "ops": [
                [[1.0],[1.0],[1.0]],
                [[1.0],[1.0],[2.0, 9.0]],
                [[1.0],[2.0],[2.0]]
            ],
            "c": [0.0, 0.0, 0.0]
        }"#;
        let err = problem_from_json(doc).unwrap_err();
        assert!(err.to_string().contains("ops[1][2]"), "{err}");
    }

    #[test]
    fn non_finite_entry_cites_path() {
        let doc = ProblemDoc {
            blocks: vec![
                BlockDoc {
                    kind: "quadratic".into(),
                    q_matrix: Some(vec![vec![0.1]]),
                    q: None,
                    cone: None,
                    oracle: None,
                    dim: None,
                    sigma: None,
                };
                3
            ],
            ops: vec![vec![vec![1.0]; 3]; 3],
            c: vec![0.0, 0.0, f64::NAN],
            known_solution: None,
        };
        // NaN does not survive serde_json; validate the doc directly.
        let err = problem_from_doc(&doc).unwrap_err();
        assert!(err.to_string().contains("c[2]"), "{err}");
    }

    #[test]
    fn bad_known_solution_rejected() {
        let p = zoo::counterexample_chyy().problem;
        let mut doc = problem_to_doc(&p);
        doc.known_solution = Some(KnownSolutionDoc {
            x1: vec![1.0],
            x2: vec![1.0],
            x3: vec![1.0],
            z: vec![0.0, 0.0, 0.0],
        });
        let err = problem_from_doc(&doc).unwrap_err();
        assert!(err.to_string().contains("known_solution"), "{err}");
    }

    #[test]
    fn trace_csv_format() {
        let rec = DiagnosticsRecord {
            k: 3,
            r_norm: 0.5,
            kkt: 1e-3,
            tilde_z: None,
            phi_bar: Some(2.0),
            xi: None,
            s: None,
            t: None,
            lyapunov: None,
            slack: None,
            alpha: 1.0,
        };
        let csv = trace_csv_string(&[rec]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,r_norm,kkt,phi_bar,xi,s,t,lyapunov,slack");
        assert_eq!(lines.next().unwrap(), "3,5e-1,1e-3,2e0,,,,,");
    }

    #[test]
    fn serialization_is_deterministic() {
        let kinds = [zoo::RandomBlockKind::Quadratic; 3];
        let a = zoo::random_three_block(9, (2, 2, 2, 3), kinds).unwrap();
        let b = zoo::random_three_block(9, (2, 2, 2, 3), kinds).unwrap();
        assert_eq!(
            problem_to_json(&a.problem).unwrap(),
            problem_to_json(&b.problem).unwrap()
        );
    }
}
