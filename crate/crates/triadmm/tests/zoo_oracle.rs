//! Solver-vs-oracle agreement across the zoo: on every instance whose
//! certificate passes, `run` and `reference_solve` land on the same objective
//! to `max(10*tol, 1e-7)`.

use triadmm::zoo::{self, RandomBlockKind};
use triadmm::{run_from, IterateState, SolveStatus};

fn check(zp: &zoo::ZooProblem, tol: f64) {
    let mut cfg = zp.certificate_hint.solver_config();
    cfg.tol_kkt = tol;
    cfg.max_iter = 200_000;
    let start = match &zp.start {
        Some((x, z)) => IterateState::initial(&zp.problem, x.clone(), z.clone()).unwrap(),
        None => IterateState::zeros(&zp.problem),
    };
    let res = run_from(&zp.problem, &cfg, start).unwrap();
    assert_eq!(res.status, SolveStatus::Converged, "{}", zp.name);
    let solver_obj = zp.problem.objective(res.state.x());

    let (x, _z) = zoo::reference_solve(&zp.problem, tol).unwrap();
    let oracle_obj = zp.problem.objective([&x[0], &x[1], &x[2]]);
    let bound = (10.0 * tol).max(1e-7);
    assert!(
        (solver_obj - oracle_obj).abs() <= bound,
        "{}: solver {solver_obj} vs oracle {oracle_obj}",
        zp.name
    );
}

#[test]
fn chyy_and_random_instances_agree_with_oracle() {
    check(&zoo::counterexample_chyy(), 1e-9);
    for seed in [1u64, 7, 13] {
        let zp = zoo::random_three_block(seed, (3, 2, 2, 4), [RandomBlockKind::Quadratic; 3]).unwrap();
        check(&zp, 1e-9);
    }
    let mixed = zoo::random_three_block(
        4,
        (2, 3, 2, 4),
        [RandomBlockKind::Orthant, RandomBlockKind::Quadratic, RandomBlockKind::Quadratic],
    )
    .unwrap();
    check(&mixed, 1e-9);
}

#[test]
fn qsdp_demos_agree_with_oracle() {
    check(&zoo::qsdp_demo_orthant(), 1e-9);
    check(&zoo::qsdp_demo_psd(), 1e-9);
}
