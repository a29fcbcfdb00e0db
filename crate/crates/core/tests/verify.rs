mod common;

use std::time::Instant;

use common::*;
use nlsmod::config::VerifyOptions;
use nlsmod::rhp::{EngineOptions, RhpSolution};
use nlsmod::scattering::ScatteringData;
use nlsmod::verify::{run_suite, Status};

fn status_of(r: &nlsmod::verify::VerifyReport, name: &str) -> Status {
    r.checks.iter().find(|c| c.name == name).unwrap().status
}

#[test]
fn converged_fixture_passes_every_check() {
    let start = Instant::now();
    let out = f1_solved();
    let r = run_suite(&out.solution, &VerifyOptions::default()).unwrap();
    for c in &r.checks {
        assert_eq!(c.status, Status::Pass, "{c:?}");
    }
    assert_eq!(r.checks.len(), 8);
    assert!(r.all_passed);
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn detuned_fixture_fails_the_stationarity_check() {
    let out = f1_solved();
    let bps = shifted(out.solution.bps(), c(1e-3, 1e-3));
    let sol = RhpSolution::solve(&bps, &f1_data(), F1_X, F1_T, &EngineOptions::default()).unwrap();
    let r = run_suite(&sol, &VerifyOptions::default()).unwrap();
    assert_eq!(status_of(&r, "theorem_dh_dalpha"), Status::Fail);
    assert_eq!(status_of(&r, "modulation_residual"), Status::Fail);
    // properties that hold off the solution manifold still pass
    assert_eq!(status_of(&r, "jump_conditions"), Status::Pass);
    assert_eq!(status_of(&r, "wronskian"), Status::Pass);
    assert_eq!(status_of(&r, "segment_reduction"), Status::Pass);
    assert!(!r.all_passed);
}

#[test]
fn zero_data_skips_relative_checks_and_passes() {
    let sol = RhpSolution::solve(
        &f1_alphas(),
        &ScatteringData::zero(),
        0.0,
        0.0,
        &EngineOptions::default(),
    )
    .unwrap();
    let r = run_suite(&sol, &VerifyOptions::default()).unwrap();
    assert!(r.all_passed, "{:?}", r.checks);
    assert_eq!(status_of(&r, "c_cross_check"), Status::Skipped);
    assert_eq!(status_of(&r, "lemma_dk_dalpha"), Status::Skipped);
    assert!(r
        .checks
        .iter()
        .filter(|c| c.status == Status::Skipped)
        .all(|c| c.reason.is_some()));
}
