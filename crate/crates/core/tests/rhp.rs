mod common;

use std::f64::consts::PI;

use common::*;
use nlsmod::geometry::BranchpointSet;
use nlsmod::rhp::{EngineOptions, RhpSolution};
use nlsmod::scattering::ScatteringData;
use nlsmod::{Complex64 as C, Error};

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn cube() -> ScatteringData {
    ScatteringData::parse("z^3").unwrap()
}

fn f_cube(z: C) -> C {
    z * z * z - F1_X * z - 2.0 * F1_T * z * z
}

fn solve(sd: &ScatteringData) -> RhpSolution {
    RhpSolution::solve(&f1_alphas(), sd, F1_X, F1_T, &EngineOptions::default()).unwrap()
}

const NODES: usize = 1 << 17;

/// Genus-one reference built from ellipses around the straight F1 arcs and a
/// circle around everything, independent of the engine's contours.
struct Oracle {
    alphas: Vec<C>,
    /// (curve, starting R) per component: main upper/lower, comp upper/lower.
    main: Vec<(Curve, C)>,
    comp: Vec<(Curve, C)>,
    big: (Curve, C),
    w: C,
    omega: C,
    d: C,
}

impl Oracle {
    fn new(f: fn(C) -> C) -> Self {
        let al = f1_alphas().all().to_vec();
        let far = 60.0;
        let main_piece = |a: C, b: C, up: bool| {
            let e = ellipse(a, b, PI / 2.0);
            let s = (e.z)(PI / 2.0);
            let anchor = if up { s + c(0.0, far) } else { s - c(0.0, far) };
            let r0 = radical_along(&al, &[anchor, s], 4000);
            (e, r0)
        };
        let comp_piece = |a: C, b: C| {
            let e = ellipse(a, b, -PI / 2.0);
            let s = (e.z)(-PI / 2.0);
            let r0 = radical_along(&al, &[c(far, 0.0), c(s.re, 0.0), s], 4000);
            (e, r0)
        };
        let main = vec![
            main_piece(al[2], al[4], true),
            main_piece(al[5], al[3], false),
        ];
        let comp = vec![comp_piece(al[0], al[2]), comp_piece(al[3], al[1])];
        let bc = circle(c(1.0, 0.0), 1.75, PI / 2.0);
        let top = (bc.z)(PI / 2.0);
        let r_top = radical_along(&al, &[top + c(0.0, far), top], 4000);
        let mut o = Oracle {
            alphas: al,
            main,
            comp,
            big: (bc, r_top),
            w: c(0.0, 0.0),
            omega: c(0.0, 0.0),
            d: c(0.0, 0.0),
        };
        let one = |_: C| c(1.0, 0.0);
        let id = |z: C| z;
        let m = o.row(0, &[&one, &id]);
        let cc = o.row(1, &[&one, &id]);
        let fz = move |z: C| f(z);
        let fz1 = move |z: C| f(z) * z;
        let big = o.all(&[&fz, &fz1]);
        // M^T u = -F with M rows (m, c), columns k = 0, 1
        let d = m[0] * cc[1] - m[1] * cc[0];
        let (f0, f1) = (-big[0], -big[1]);
        o.w = (cc[1] * f0 - cc[0] * f1) / d;
        o.omega = (-m[1] * f0 + m[0] * f1) / d;
        o.d = d;
        o
    }

    /// sigma-weighted integrals over row 0 (main, clockwise) or 1 (comp).
    fn row(&self, r: usize, phis: &[&dyn Fn(C) -> C]) -> Vec<C> {
        let (parts, sigma) = if r == 0 {
            (&self.main, -1.0)
        } else {
            (&self.comp, 1.0)
        };
        let mut out = vec![c(0.0, 0.0); phis.len()];
        for (curve, r0) in parts {
            let v = trapezoid_loop(&self.alphas, curve, *r0, NODES, phis);
            for (o, x) in out.iter_mut().zip(v) {
                *o += sigma * x;
            }
        }
        out
    }

    fn all(&self, phis: &[&dyn Fn(C) -> C]) -> Vec<C> {
        trapezoid_loop(&self.alphas, &self.big.0, self.big.1, NODES, phis)
            .into_iter()
            .map(|v| -v)
            .collect()
    }

    fn b_at(&self, z: C, f: fn(C) -> C) -> C {
        let k = move |s: C| 1.0 / (s - z);
        let kf = move |s: C| f(s) / (s - z);
        self.all(&[&kf])[0] + self.w * self.row(0, &[&k])[0] + self.omega * self.row(1, &[&k])[0]
    }
}

#[test]
fn constants_and_determinant_match_trapezoid_reference() {
    let o = Oracle::new(f_cube);
    let sol = solve(&cube());
    assert!(rel(sol.w[0], o.w) < 1e-8, "{} {}", sol.w[0], o.w);
    assert!(
        rel(sol.omega[0], o.omega) < 1e-8,
        "{} {}",
        sol.omega[0],
        o.omega
    );
    assert!(rel(sol.d, o.d) < 1e-10, "{} {}", sol.d, o.d);
    assert!(sol.realness_defect < 1e-8);
}

#[test]
fn g_outside_all_loops_matches_reference() {
    let o = Oracle::new(f_cube);
    let sol = solve(&cube());
    let z = c(0.5, 2.0);
    let r = radical_along(&o.alphas, &[z + c(0.0, 60.0), z], 4000);
    let g_ref = r * o.b_at(z, f_cube) / c(0.0, 4.0 * PI);
    let g = sol.eval_g(z).unwrap();
    assert!(
        (g - g_ref).norm() < 1e-9 * (1.0 + g_ref.norm()),
        "{g} {g_ref}"
    );
}

#[test]
fn residual_matches_b_form_reference() {
    let o = Oracle::new(f_cube);
    let sol = solve(&cube());
    let res = sol.modulation_residual().unwrap();
    for (j, k) in res.iter().enumerate() {
        let a = o.alphas[2 * j];
        let k_ref = o.d * o.b_at(a, f_cube) / c(0.0, 2.0 * PI);
        assert!(rel(*k, k_ref) < 1e-7, "{j}: {k} {k_ref}");
        assert!(k.norm() > 1e-6);
    }
}

#[test]
fn zero_data_gives_zero_everywhere() {
    let sol = RhpSolution::solve(
        &f1_alphas(),
        &ScatteringData::zero(),
        0.0,
        0.0,
        &EngineOptions::default(),
    )
    .unwrap();
    let mut zs = sol.standard_region_points(4).unwrap();
    zs.push(c(0.5, 2.0));
    for p in sol.eval_points(&zs).unwrap() {
        assert_eq!(p.k, c(0.0, 0.0));
        assert_eq!(p.g, c(0.0, 0.0));
        assert_eq!(p.h, c(0.0, 0.0));
    }
    let j = sol.jump_check(3).unwrap();
    assert_eq!(j.max, 0.0);
}

/// Points near the arcs at the given offsets (in margins), both sides.
fn near_arc_points(sol: &RhpSolution, offset: f64, count: usize) -> Vec<C> {
    let arcs = &sol.cs.arcs;
    let mut out = Vec::new();
    let pieces: Vec<_> = arcs
        .main_arcs
        .iter()
        .chain(arcs.comp_arcs.iter())
        .flatten()
        .collect();
    for k in 0..count {
        let p = pieces[k % pieces.len()];
        let s = 0.15 + 0.7 * ((k as f64 * 0.754877666).fract());
        let i = ((p.points.len() - 1) as f64 * s) as usize;
        let (a, b) = (p.points[i], p.points[i + 1]);
        let z = a + (b - a) * 0.5;
        let n = c(0.0, 1.0) * (b - a) / (b - a).norm();
        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
        out.push(z + n * (side * offset * sol.cs.margin));
    }
    out
}

#[test]
fn determinant_and_g_routes_agree_in_every_location_class() {
    let sol = solve(&cube());
    let mut classes: std::collections::BTreeMap<String, Vec<C>> = Default::default();
    let mut candidates = near_arc_points(&sol, 0.5, 60);
    candidates.extend(sol.standard_region_points(10).unwrap());
    candidates.extend((0..10).map(|k| C::from_polar(3.0 + 0.1 * k as f64, 0.4 + 0.6 * k as f64)));
    for z in candidates {
        let Ok(loc) = sol.cs.point_location(z) else {
            continue;
        };
        let key = format!("{loc:?}");
        let e = classes.entry(key).or_default();
        if e.len() < 10 {
            e.push(z);
        }
    }
    assert!(classes.len() >= 4, "{:?}", classes.keys());
    for zs in classes.values() {
        for p in sol.eval_points(zs).unwrap() {
            let f = f_cube(p.z);
            let alt = 2.0 * p.g - f;
            assert!(
                (p.h - alt).norm() < 1e-8 * (1.0 + p.h.norm()),
                "{} {} {}",
                p.z,
                p.h,
                alt
            );
        }
    }
}

#[test]
fn standard_region_h_is_r_k_over_d() {
    let sol = solve(&cube());
    let zs = sol.standard_region_points(5).unwrap();
    for p in sol.eval_points(&zs).unwrap() {
        let lhs = p.r * p.k / sol.d;
        let rhs = 2.0 * p.g - f_cube(p.z);
        assert!(rel(lhs, rhs) < 1e-8);
    }
}

#[test]
fn constants_are_linear_in_f() {
    let a = solve(&ScatteringData::parse("z^3").unwrap());
    let b = solve(&ScatteringData::parse("0.3*z^5 - z^4").unwrap());
    let ab = RhpSolution::solve(
        &f1_alphas(),
        &ScatteringData::parse("z^3 + 0.3*z^5 - z^4").unwrap(),
        2.0 * F1_X,
        2.0 * F1_T,
        &EngineOptions::default(),
    )
    .unwrap();
    assert!((a.w[0] + b.w[0] - ab.w[0]).norm() < 1e-10);
    assert!((a.omega[0] + b.omega[0] - ab.omega[0]).norm() < 1e-10);
}

#[test]
fn determinant_is_independent_of_loop_margin() {
    let d1 = RhpSolution::solve(
        &f1_alphas(),
        &cube(),
        F1_X,
        F1_T,
        &EngineOptions::default().with_margin(0.1),
    )
    .unwrap();
    let d2 = RhpSolution::solve(
        &f1_alphas(),
        &cube(),
        F1_X,
        F1_T,
        &EngineOptions::default().with_margin(0.2),
    )
    .unwrap();
    assert!(rel(d1.d, d2.d) < 1e-10);
    assert!((d1.w[0] - d2.w[0]).norm() < 1e-9);
}

#[test]
fn near_collision_is_flagged() {
    let up = f1_alphas().upper();
    let bps = BranchpointSet::from_upper(&[up[0], up[1], up[1] + c(1e-6, 0.0)]).unwrap();
    let r = RhpSolution::solve(&bps, &cube(), F1_X, F1_T, &EngineOptions::default());
    assert!(matches!(r, Err(Error::Degenerate(_))), "{r:?}");
    // at a resolvable separation the system is still well conditioned
    let bps = BranchpointSet::from_upper(&[up[0], up[1], up[1] + c(1e-3, 0.0)]).unwrap();
    let sol = RhpSolution::solve(&bps, &cube(), F1_X, F1_T, &EngineOptions::default()).unwrap();
    assert!(sol.moment_matrix_cond < 1e3);
}

#[test]
fn g_is_analytic_at_infinity() {
    let sol = solve(&cube());
    let growth = sol.growth_coefficients().unwrap();
    assert_eq!(growth.len(), 2);
    assert!(growth.iter().all(|v| *v < 1e-6), "{growth:?}");
    // g = g_inf + a/z + O(1/z^2): z (g(z) - g(2z)) settles to a/2
    let tight = RhpSolution {
        opts: EngineOptions {
            quad: nlsmod::quadrature::QuadOptions {
                tol: 0.0,
                ..Default::default()
            },
            ..Default::default()
        },
        ..sol.clone()
    };
    let scaled_gap = |r: f64| {
        let z = C::from_polar(r, 0.3);
        z * (tight.eval_g(z).unwrap() - tight.eval_g(2.0 * z).unwrap())
    };
    let (a3, a4) = (scaled_gap(1e3), scaled_gap(1e4));
    assert!((a3 - a4).norm() < 5e-2 * a4.norm(), "{a3} {a4}");
}

#[test]
fn jump_conditions_hold_and_detect_corruption() {
    let sol = solve(&cube());
    let j = sol.jump_check(4).unwrap();
    assert!(j.max < 1e-6, "{j:?}");
    let bad = sol.with_constants(vec![sol.w[0] + 0.1], sol.omega.clone());
    let jb = bad.jump_check_against(&sol.w, &sol.omega, 4).unwrap();
    assert!((jb.main[1] - 0.1).abs() < 1e-6, "{jb:?}");
}

#[test]
fn h_is_schwarz_symmetric() {
    let sol = solve(&cube());
    let mut zs = sol.standard_region_points(4).unwrap();
    zs.extend(near_arc_points(&sol, 0.5, 4));
    zs.push(c(0.5, 2.0));
    let conj: Vec<C> = zs.iter().map(|z| z.conj()).collect();
    let a = sol.eval_points(&zs).unwrap();
    let b = sol.eval_points(&conj).unwrap();
    for (p, q) in a.iter().zip(b.iter()) {
        assert!((p.h.conj() - q.h).norm() < 1e-9 * (1.0 + p.h.norm()));
    }
}

#[test]
fn h_jumps_by_imaginary_part_of_f_on_the_real_axis() {
    let sd = ScatteringData::parse("log(z - 5)").unwrap();
    assert!(sd.schwarz_symmetric);
    let sol = solve(&sd);
    for xr in [3.0, 4.0, -3.0] {
        let eps = 1e-7;
        let up = sol.eval_h(c(xr, eps)).unwrap();
        let dn = sol.eval_h(c(xr, -eps)).unwrap();
        let f_up = sd.eval_f(c(xr, eps), F1_X, F1_T).unwrap();
        let expect = c(0.0, -2.0 * f_up.im);
        assert!(
            (up - dn - expect).norm() < 1e-5,
            "{xr}: {} {}",
            up - dn,
            expect
        );
    }
}

fn slope(sol: &RhpSolution, i: usize) -> f64 {
    let a = sol.bps().alpha(i);
    let u = c(0.0, 1.0);
    let ds = [1e-5, 1e-4, 1e-3, 1e-2];
    let pts: Vec<(f64, f64)> = ds
        .iter()
        .map(|d| {
            let p = &sol.eval_points(&[a + u * *d]).unwrap()[0];
            (d.ln(), (p.r * p.k / sol.d).norm().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn local_exponent_distinguishes_solutions() {
    let solved = f1_solved();
    let unsolved = solve(&cube());
    for i in [0, 2, 4] {
        let s = slope(&solved.solution, i);
        assert!((s - 1.5).abs() < 0.05, "{i}: {s}");
        let u = slope(&unsolved, i);
        assert!((u - 0.5).abs() < 0.05, "{i}: {u}");
    }
}
