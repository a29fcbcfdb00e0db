//! The verification suite run by `verify`.

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use serde::Serialize;

use crate::config::{RunConfig, VerifyOptions};
use crate::error::{Error, Result};
use crate::evolution::constants_rates;
use crate::modulation::{far_test_points, lemma_derka_check, theorem_dhda_check};
use crate::quadrature::segment_reduction_check;
use crate::rhp::RhpSolution;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    /// Worst measured value; passes when below `tolerance`.
    pub value: Option<f64>,
    pub tolerance: f64,
    /// Per-item values (per branchpoint, arc or test point).
    pub items: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Check {
    fn measured(name: &'static str, items: Vec<f64>, tolerance: f64) -> Self {
        let value = items.iter().copied().fold(0.0, f64::max);
        let ok = items.iter().all(|v| v.is_finite()) && value < tolerance;
        Check {
            name,
            status: if ok { Status::Pass } else { Status::Fail },
            value: Some(value),
            tolerance,
            items,
            reason: None,
        }
    }

    fn skipped(name: &'static str, tolerance: f64, reason: impl Into<String>) -> Self {
        Check {
            name,
            status: Status::Skipped,
            value: None,
            tolerance,
            items: vec![],
            reason: Some(reason.into()),
        }
    }

    fn from_result(name: &'static str, tolerance: f64, r: Result<Vec<f64>>) -> Self {
        match r {
            Ok(items) => Self::measured(name, items, tolerance),
            Err(Error::Degenerate(m)) => Self::skipped(name, tolerance, format!("degenerate: {m}")),
            Err(e) => Check {
                name,
                status: Status::Fail,
                value: None,
                tolerance,
                items: vec![],
                reason: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub alphas: Vec<C>,
    pub x: f64,
    pub t: f64,
    pub d: C,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub all_passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

/// Runs every check on the solution as given.
pub fn run_suite(sol: &RhpSolution, opts: &VerifyOptions) -> Result<VerifyReport> {
    let n = sol.genus_param();
    let upper: Vec<usize> = (0..=2 * n).map(|j| 2 * j).collect();
    let mut checks = Vec::new();

    checks.push(Check::from_result(
        "modulation_residual",
        opts.residual_tol,
        sol.modulation_residual()
            .map(|r| r.iter().map(|v| v.norm()).collect()),
    ));

    checks.push(Check::from_result(
        "jump_conditions",
        opts.jump_tol,
        sol.jump_check(opts.jump_samples)
            .map(|j| j.main.iter().chain(&j.comp).copied().collect()),
    ));

    checks.push(Check::from_result(
        "growth_at_infinity",
        opts.growth_tol,
        sol.growth_coefficients(),
    ));

    // relative checks are meaningless when K vanishes identically
    let cs = sol.c_values(&upper)?;
    let k_vanishes = cs.iter().all(|v| v.norm() == 0.0);

    if k_vanishes {
        checks.push(Check::skipped(
            "c_cross_check",
            opts.cj_tol,
            "K vanishes identically (zero data)",
        ));
        checks.push(Check::skipped(
            "lemma_dk_dalpha",
            opts.lemma_tol,
            "K vanishes identically (zero data)",
        ));
    } else {
        if !sol.sd.schwarz_symmetric {
            checks.push(Check::skipped(
                "c_cross_check",
                opts.cj_tol,
                "f0 is not Schwarz-symmetric; the f' route assumes K vanishes at the conjugate branchpoints",
            ));
        } else {
            checks.push(Check::from_result(
                "c_cross_check",
                opts.cj_tol,
                sol.c_values_alt(&upper)
                    .map(|alt| cs.iter().zip(&alt).map(|(a, b)| rel(*a, *b)).collect()),
            ));
        }
        let z = far_test_points(sol)[0];
        checks.push(Check::from_result(
            "lemma_dk_dalpha",
            opts.lemma_tol,
            upper
                .iter()
                .map(|&i| lemma_derka_check(sol, i, z, opts.lemma_step).map(|r| r.rel_deviation))
                .collect(),
        ));
    }

    checks.push(Check::from_result(
        "theorem_dh_dalpha",
        opts.theorem_tol,
        upper
            .iter()
            .map(|&i| theorem_dhda_check(sol, i, opts.theorem_step).map(|r| r.max_abs))
            .collect(),
    ));

    if n == 1 {
        checks.push(Check::from_result(
            "wronskian",
            opts.wronskian_tol,
            constants_rates(sol).map(|r| {
                let expected = C::new(-8.0 * PI * PI, 0.0) / sol.d;
                vec![rel(r.wronskian(), expected)]
            }),
        ));
    } else {
        checks.push(Check::skipped(
            "wronskian",
            opts.wronskian_tol,
            "identity is stated for N = 1",
        ));
    }

    if n == 0 {
        checks.push(Check::skipped(
            "segment_reduction",
            opts.segment_tol,
            "no main or complementary loops",
        ));
    } else {
        let arcs = &sol.cs.arcs;
        let centres: Vec<C> = arcs.main_arcs[1..]
            .iter()
            .chain(&arcs.comp_arcs)
            .flatten()
            .map(|p| {
                let k = (p.points.len() - 1) / 2;
                if p.points.len() % 2 == 1 {
                    p.points[k]
                } else {
                    0.5 * (p.points[k] + p.points[k + 1])
                }
            })
            .collect();
        checks.push(Check::from_result(
            "segment_reduction",
            opts.segment_tol,
            centres
                .iter()
                .map(|&z| {
                    segment_reduction_check(&sol.cs, z, &sol.opts.quad).map(|r| r.discrepancy)
                })
                .collect(),
        ));
    }

    let count = |s: Status| checks.iter().filter(|c| c.status == s).count();
    let (passed, failed, skipped) = (
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Skipped),
    );
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        alphas: sol.bps().all().to_vec(),
        x: sol.x,
        t: sol.t,
        d: sol.d,
        passed,
        failed,
        skipped,
        all_passed: failed == 0,
        checks,
        config: None,
    })
}
