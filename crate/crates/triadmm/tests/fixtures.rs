//! The committed fixtures must match regeneration byte-for-byte (generator
//! determinism) and their recorded reference solutions must stay reproducible.

use std::path::PathBuf;

use triadmm::{io, zoo};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn serialized_problems_are_byte_stable() {
    for zp in [zoo::counterexample_chyy(), zoo::qsdp_demo_orthant(), zoo::qsdp_demo_psd()] {
        let path = fixtures_dir().join(format!("{}.json", zp.name.replace('-', "_")));
        let committed = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {path:?}"));
        let regenerated = io::problem_to_json(&zp.problem).unwrap();
        assert_eq!(committed, regenerated, "fixture {path:?} drifted");
    }
}

#[test]
fn reference_solutions_reproduce() {
    let path = fixtures_dir().join("reference_solutions.json");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    for zp in [zoo::counterexample_chyy(), zoo::qsdp_demo_orthant(), zoo::qsdp_demo_psd()] {
        let entry = &doc[&zp.name];
        let frozen_obj = entry["objective"].as_f64().expect("objective recorded");
        let tol = entry["tol"].as_f64().expect("tol recorded");
        let (x, z) = zoo::reference_solve(&zp.problem, tol).unwrap();
        let obj = zp.problem.objective([&x[0], &x[1], &x[2]]);
        assert!(
            (obj - frozen_obj).abs() <= 1e-8 * (1.0 + frozen_obj.abs()),
            "{}: {obj} vs frozen {frozen_obj}",
            zp.name
        );
        let kkt = zp.problem.kkt_residual([&x[0], &x[1], &x[2]], &z).unwrap();
        assert!(kkt <= tol, "{}: kkt {kkt}", zp.name);
    }
}
