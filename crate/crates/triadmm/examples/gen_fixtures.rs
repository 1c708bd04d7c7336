//! Regenerates the committed fixture files under `fixtures/`: serialized zoo
//! problems plus reference solutions. Run from the crate directory:
//!
//! ```text
//! cargo run --release --example gen_fixtures
//! ```

use std::fs;
use std::path::Path;

use triadmm::io;
use triadmm::zoo;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).expect("fixtures dir");

    let mut solutions = serde_json::Map::new();
    for zp in [zoo::counterexample_chyy(), zoo::qsdp_demo_orthant(), zoo::qsdp_demo_psd()] {
        let file = dir.join(format!("{}.json", zp.name.replace('-', "_")));
        fs::write(&file, io::problem_to_json(&zp.problem).expect("serialize")).expect("write");
        println!("wrote {}", file.display());

        let tol = 1e-10;
        let (x, z) = zoo::reference_solve(&zp.problem, tol).expect("reference solve");
        let obj = zp.problem.objective([&x[0], &x[1], &x[2]]);
        let kkt = zp.problem.kkt_residual([&x[0], &x[1], &x[2]], &z).expect("kkt");
        solutions.insert(
            zp.name.clone(),
            serde_json::json!({
                "objective": obj,
                "kkt": kkt,
                "tol": tol,
                "x1": x[0].to_vec(),
                "x2": x[1].to_vec(),
                "x3": x[2].to_vec(),
                "z": z.to_vec(),
            }),
        );
        println!("  reference objective {obj:.12e} (kkt {kkt:.2e})");
    }
    let file = dir.join("reference_solutions.json");
    fs::write(
        &file,
        serde_json::to_string_pretty(&serde_json::Value::Object(solutions)).expect("serialize"),
    )
    .expect("write");
    println!("wrote {}", file.display());
}
