mod common;

use std::f64::consts::PI;

use common::*;
use nlsmod::evolution::*;
use nlsmod::modulation::{eval_cj, newton_solve, NewtonOptions};
use nlsmod::rhp::{EngineOptions, RhpSolution};
use nlsmod::scattering::ScatteringData;
use nlsmod::Complex64 as C;

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn solve_at(sol: &RhpSolution, x: f64, t: f64) -> RhpSolution {
    RhpSolution::solve(sol.bps(), &sol.sd, x, t, &sol.opts).unwrap()
}

#[test]
fn k_derivatives_match_finite_differences() {
    let out = f1_solved();
    let sol = &out.solution;
    let zs = sol.standard_region_points(5).unwrap();
    let kx = dk_dx(sol, &zs).unwrap();
    let kt = dk_dt(sol, &zs).unwrap();
    let h = 1e-5;
    let k = |x: f64, t: f64| solve_at(sol, x, t).eval_k_many(&zs).unwrap();
    let (xp, xm) = (k(F1_X + h, F1_T), k(F1_X - h, F1_T));
    let (tp, tm) = (k(F1_X, F1_T + h), k(F1_X, F1_T - h));
    for i in 0..zs.len() {
        assert!(rel((xp[i] - xm[i]) / (2.0 * h), kx[i]) < 1e-6);
        assert!(rel((tp[i] - tm[i]) / (2.0 * h), kt[i]) < 1e-6);
    }
}

#[test]
fn determinant_forms_agree() {
    let out = f1_solved();
    let sol = &out.solution;
    let zs = sol.standard_region_points(5).unwrap();
    let kx = dk_dx(sol, &zs).unwrap();
    let kt = dk_dt(sol, &zs).unwrap();
    let ex = explicit_genus_one(sol, &zs).unwrap();
    let s = sol.bps().sum();
    for i in 0..zs.len() {
        assert!(rel(ex[i].0, kx[i]) < 1e-9);
        assert!(rel(ex[i].1, kt[i]) < 1e-9);
        assert!((kt[i] - s * kx[i] - ex[i].2).norm() < 1e-9 * (1.0 + ex[i].2.norm()));
    }
}

#[test]
fn velocities_ignore_f_and_respect_symmetry() {
    let out = f1_solved();
    let sol = &out.solution;
    let v = velocities(sol).unwrap();
    let ex = velocities_explicit(sol).unwrap();
    for (a, b) in v.iter().zip(ex.iter()) {
        assert!(rel(*a, *b) < 1e-8);
    }
    for f0 in ["0", "z^3"] {
        let other = RhpSolution::solve(
            sol.bps(),
            &ScatteringData::parse(f0).unwrap(),
            F1_X,
            F1_T,
            &sol.opts,
        )
        .unwrap();
        let w = velocities(&other).unwrap();
        for (a, b) in v.iter().zip(w.iter()) {
            assert!((a - b).norm() < 1e-10, "{f0}: {a} {b}");
        }
    }
    let lower = velocities_at(sol, &[1, 3, 5]).unwrap();
    for (a, b) in v.iter().zip(lower.iter()) {
        assert!((a.conj() - b).norm() < 1e-9);
    }
}

#[test]
fn alpha_rates_match_resolved_neighbours() {
    let out = f1_solved();
    let sol = &out.solution;
    let r = alpha_rates(sol).unwrap();
    assert!(r.consistency < 1e-9);
    let fd = rates_by_resolve(sol, Axis::X, 1e-4, &NewtonOptions::default()).unwrap();
    for (a, b) in fd.alphas.iter().zip(r.x.iter()) {
        assert!(rel(*a, *b) < 1e-4);
    }
    let fdt = rates_by_resolve(sol, Axis::T, 1e-4, &NewtonOptions::default()).unwrap();
    for (a, b) in fdt.alphas.iter().zip(r.t.iter()) {
        assert!(rel(*a, *b) < 1e-4);
    }
    let zero =
        RhpSolution::solve(sol.bps(), &ScatteringData::zero(), F1_X, F1_T, &sol.opts).unwrap();
    assert!(alpha_rates(&zero).is_err());
}

#[test]
fn constant_rates_wronskian_and_realness() {
    let out = f1_solved();
    let sol = &out.solution;
    let cr = constants_rates(sol).unwrap();
    let ce = constants_rates_explicit(sol).unwrap();
    let pairs = [
        (cr.w_x[0], ce.w_x[0]),
        (cr.omega_x[0], ce.omega_x[0]),
        (cr.w_t[0], ce.w_t[0]),
        (cr.omega_t[0], ce.omega_t[0]),
    ];
    for (a, b) in pairs {
        assert!(rel(a, b) < 1e-9);
        assert!(a.im.abs() < 1e-8);
    }
    let expect = C::new(-8.0 * PI * PI, 0.0) / sol.d;
    assert!(rel(cr.wronskian(), expect) < 1e-8);
    let fd = rates_by_resolve(sol, Axis::X, 1e-4, &NewtonOptions::default()).unwrap();
    assert!(rel(fd.w[0], cr.w_x[0]) < 1e-4);
    assert!(rel(fd.omega[0], cr.omega_x[0]) < 1e-4);
    let fdt = rates_by_resolve(sol, Axis::T, 1e-4, &NewtonOptions::default()).unwrap();
    assert!(rel(fdt.w[0], cr.w_t[0]) < 1e-4);
    assert!(rel(fdt.omega[0], cr.omega_t[0]) < 1e-4);
}

fn resolve(sol: &RhpSolution, x: f64) -> RhpSolution {
    let out = newton_solve(
        sol.bps(),
        &sol.sd,
        x,
        sol.t,
        &sol.opts,
        &NewtonOptions::default(),
    )
    .unwrap();
    assert!(out.report.converged);
    out.solution
}

#[test]
fn total_x_derivative_of_h_is_the_partial() {
    let out = f1_solved();
    let sol = &out.solution;
    let zs = sol.standard_region_points(5).unwrap();
    let h = 1e-4;
    let hp: Vec<C> = resolve(sol, F1_X + h)
        .eval_points(&zs)
        .unwrap()
        .iter()
        .map(|p| p.h)
        .collect();
    let hm: Vec<C> = resolve(sol, F1_X - h)
        .eval_points(&zs)
        .unwrap()
        .iter()
        .map(|p| p.h)
        .collect();
    let kx = dk_dx(sol, &zs).unwrap();
    let pts = sol.eval_points(&zs).unwrap();
    for i in 0..zs.len() {
        let total = (hp[i] - hm[i]) / (2.0 * h);
        let partial = pts[i].r / sol.d * kx[i];
        assert!(rel(total, partial) < 1e-4, "{total} {partial}");
    }
}

#[test]
fn local_expansion_of_h_rate_near_a_branchpoint() {
    let out = f1_solved();
    let sol = &out.solution;
    let a = sol.bps().alpha(2);
    let cr = constants_rates(sol).unwrap();
    let ax = alpha_rates(sol).unwrap().x[1];
    let c2 = eval_cj(sol).unwrap()[1];
    let target = -1.5 * c2 * ax;
    let h = 1e-4;
    let (sp, sm) = (resolve(sol, F1_X + h), resolve(sol, F1_X - h));
    let q = |d: f64| {
        let z = a + c(0.0, d);
        let total = (sp.eval_h(z).unwrap() - sm.eval_h(z).unwrap()) / (2.0 * h);
        let local = sol.h_local_constant(z).unwrap();
        let ratio = (sol.w[0] - local) / sol.omega[0];
        let r = sol.eval_points(&[z]).unwrap()[0].r;
        (total - (cr.w_x[0] - cr.omega_x[0] * ratio)) / r
    };
    let fit = (10.0 * q(1e-3) - q(1e-2)) / 9.0;
    assert!(rel(fit, target) < 0.05, "{fit} {target}");
}

#[test]
fn zero_length_sweep_returns_the_start() {
    let out = f1_solved();
    let sweep = Sweep {
        axis: Axis::X,
        from: F1_X,
        to: F1_X,
        step: 1e-2,
    };
    let tr = evolve(
        out.solution.bps(),
        &f1_data(),
        F1_X,
        F1_T,
        &sweep,
        &EngineOptions::default(),
        &NewtonOptions::default(),
        &EvolveOptions::default(),
    )
    .unwrap();
    assert_eq!(tr.points.len(), 1);
    assert!(!tr.truncated);
    for (a, b) in tr.points[0]
        .alphas
        .iter()
        .zip(out.report.final_alphas.iter())
    {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn sweep_matches_direct_solve_and_reverses() {
    let sd = f1_data();
    let opts = EngineOptions::default();
    let nw = NewtonOptions::default();
    let evo = EvolveOptions::default();
    let fwd = evolve(
        &f1_alphas(),
        &sd,
        F1_X,
        F1_T,
        &Sweep {
            axis: Axis::X,
            from: 0.3,
            to: 0.35,
            step: 1e-2,
        },
        &opts,
        &nw,
        &evo,
    )
    .unwrap();
    assert!(!fwd.truncated, "{:?}", fwd.stop_reason);
    let last = fwd.points.last().unwrap();
    assert_eq!(last.x, 0.35);
    assert!(fwd.points.windows(2).all(|w| w[1].x > w[0].x));
    for p in &fwd.points {
        assert!(p.residual < 1e-10);
        assert!(p.wronskian_defect.unwrap() < 1e-7);
    }
    let guess =
        nlsmod::geometry::BranchpointSet::from_upper(&fwd.points[fwd.points.len() - 2].alphas)
            .unwrap();
    let direct = newton_solve(&guess, &sd, 0.35, F1_T, &opts, &nw).unwrap();
    for (a, b) in last.alphas.iter().zip(direct.report.final_alphas.iter()) {
        assert!((a - b).norm() < 1e-8);
    }
    let end = nlsmod::geometry::BranchpointSet::from_upper(&last.alphas).unwrap();
    let back = evolve(
        &end,
        &sd,
        F1_X,
        F1_T,
        &Sweep {
            axis: Axis::X,
            from: 0.35,
            to: 0.3,
            step: 1e-2,
        },
        &opts,
        &nw,
        &evo,
    )
    .unwrap();
    assert!(back.points.windows(2).all(|w| w[1].x < w[0].x));
    for (a, b) in back
        .points
        .last()
        .unwrap()
        .alphas
        .iter()
        .zip(f1_alphas().upper().iter())
    {
        assert!((a - b).norm() < 1e-8);
    }
}

#[test]
fn trajectory_csv_layout() {
    let out = f1_solved();
    let tr = evolve(
        out.solution.bps(),
        &f1_data(),
        F1_X,
        F1_T,
        &Sweep {
            axis: Axis::T,
            from: 0.1,
            to: 0.11,
            step: 1e-2,
        },
        &EngineOptions::default(),
        &NewtonOptions::default(),
        &EvolveOptions::default(),
    )
    .unwrap();
    let csv = tr.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,t,alpha0_re,alpha0_im,alpha2_re,alpha2_im,alpha4_re,alpha4_im,W1_re,W1_im,Omega1_re,Omega1_im,residual,abs_D");
    assert_eq!(lines.len(), 1 + tr.points.len());
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 14));
    let t_last: f64 = lines
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(t_last, 0.11);
}
