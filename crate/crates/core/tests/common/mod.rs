//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nlsmod::geometry::BranchpointSet;
use nlsmod::modulation::{newton_solve, NewtonOptions, NewtonOutcome};
use nlsmod::rhp::EngineOptions;
use nlsmod::scattering::ScatteringData;
use nlsmod::Complex64 as C;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub const F1_X: f64 = 0.3;
pub const F1_T: f64 = 0.1;

/// Coefficients of z^3..z^8 found by an independent prototype for which the
/// F1 branchpoints solve the modulation equations at x = 0.3, t = 0.1.
pub const F1_REFERENCE_COEFFS: [f64; 6] = [
    0.54964194,
    -0.80368821,
    0.84332058,
    -0.58277687,
    0.21849532,
    -0.03338601,
];

pub fn f1_alphas() -> BranchpointSet {
    BranchpointSet::from_upper(&[c(0.0, 1.0), c(1.0, 0.8), c(2.0, 0.6)]).unwrap()
}

pub fn f1_data() -> ScatteringData {
    let coef = nlsmod::modulation::design_polynomial_f0(
        &f1_alphas(),
        F1_X,
        F1_T,
        &EngineOptions::default(),
    )
    .unwrap();
    ScatteringData::polynomial(3, &coef)
}

pub fn f1_solved() -> NewtonOutcome {
    newton_solve(
        &f1_alphas(),
        &f1_data(),
        F1_X,
        F1_T,
        &EngineOptions::default(),
        &NewtonOptions::default(),
    )
    .unwrap()
}

pub fn shifted(bps: &BranchpointSet, d: C) -> BranchpointSet {
    let up: Vec<C> = bps.upper().iter().map(|a| a + d).collect();
    BranchpointSet::from_upper(&up).unwrap()
}

/// Square root of prod (z - a) by direct multiplication, with the sign fixed
/// by continuity from a far anchor where R ~ z^(2N+1) along the ray from
/// `anchor` to z.
pub fn radical_by_continuation(alphas: &[C], anchor: C, z: C, steps: usize) -> C {
    let prod = |w: C| alphas.iter().fold(c(1.0, 0.0), |acc, a| acc * (w - a));
    let deg = alphas.len() as i32 / 2;
    let mut r = anchor.powi(deg) * (prod(anchor) / anchor.powi(2 * deg)).sqrt();
    for k in 1..=steps {
        let w = anchor + (z - anchor) * (k as f64 / steps as f64);
        let cand = prod(w).sqrt();
        r = if (cand - r).norm() <= (cand + r).norm() {
            cand
        } else {
            -cand
        };
    }
    r
}

/// Trapezoid rule on a circle with n nodes; exponentially accurate for
/// integrands analytic in an annulus around it.
pub fn trapezoid_circle(centre: C, radius: f64, n: usize, f: impl Fn(C) -> C) -> C {
    let mut acc = c(0.0, 0.0);
    for k in 0..n {
        let th = 2.0 * PI * k as f64 / n as f64;
        let e = C::from_polar(1.0, th);
        acc += f(centre + radius * e) * c(0.0, radius) * e;
    }
    acc * (2.0 * PI / n as f64)
}

/// Trapezoid rule for the loop integral of phi(z)/R(z) on a circle that
/// encloses every branchpoint; R is continued node to node from the anchor.
pub fn trapezoid_over_radical(
    alphas: &[C],
    centre: C,
    radius: f64,
    n: usize,
    phi: impl Fn(C) -> C,
) -> C {
    let prod = |w: C| alphas.iter().fold(c(1.0, 0.0), |acc, a| acc * (w - a));
    let start = centre + radius;
    let mut r = radical_by_continuation(alphas, centre + c(radius * 50.0, 0.0), start, 2000);
    let mut acc = c(0.0, 0.0);
    for k in 0..n {
        let e = C::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
        let z = centre + radius * e;
        let cand = prod(z).sqrt();
        r = if (cand - r).norm() <= (cand + r).norm() {
            cand
        } else {
            -cand
        };
        acc += phi(z) / r * c(0.0, radius) * e;
    }
    acc * (2.0 * PI / n as f64)
}

/// Winding number of a closed polyline about z by summing argument increments.
pub fn winding_by_argument(points: &[C], z: C) -> i64 {
    let mut total = 0.0;
    for i in 0..points.len() {
        let a = points[i] - z;
        let b = points[(i + 1) % points.len()] - z;
        total += (b / a).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

/// Planar R at the last waypoint, continued from the first (taken far away,
/// where R ~ z^(2N+1)) along straight legs that must avoid the arcs.
pub fn radical_along(alphas: &[C], waypoints: &[C], steps_per_leg: usize) -> C {
    let mut r = radical_by_continuation(alphas, waypoints[0], waypoints[0], 1);
    for w in waypoints.windows(2) {
        let prod = |z: C| alphas.iter().fold(c(1.0, 0.0), |acc, a| acc * (z - a));
        for k in 1..=steps_per_leg {
            let z = w[0] + (w[1] - w[0]) * (k as f64 / steps_per_leg as f64);
            let cand = prod(z).sqrt();
            r = if (cand - r).norm() <= (cand + r).norm() {
                cand
            } else {
                -cand
            };
        }
    }
    r
}

/// A closed CCW curve z(theta) with derivative, starting at theta0.
pub struct Curve {
    pub z: Box<dyn Fn(f64) -> C>,
    pub dz: Box<dyn Fn(f64) -> C>,
    pub theta0: f64,
}

/// Ellipse around the segment [a, b] with semi-axes 1.2 L and 0.4 L.
pub fn ellipse(a: C, b: C, theta0: f64) -> Curve {
    let m = (a + b) / 2.0;
    let l = (b - a).norm() / 2.0;
    let u = (b - a) / (2.0 * l);
    let (ax, bx) = (1.2 * l, 0.4 * l);
    Curve {
        z: Box::new(move |th| m + u * c(ax * th.cos(), bx * th.sin())),
        dz: Box::new(move |th| u * c(-ax * th.sin(), bx * th.cos())),
        theta0,
    }
}

pub fn circle(centre: C, radius: f64, theta0: f64) -> Curve {
    Curve {
        z: Box::new(move |th| centre + C::from_polar(radius, th)),
        dz: Box::new(move |th| C::from_polar(radius, th) * c(0.0, 1.0)),
        theta0,
    }
}

/// Trapezoid rule for the integral of each phi_k(z)/R(z) around the curve,
/// with R continued node to node from r0 at the start.
pub fn trapezoid_loop(
    alphas: &[C],
    curve: &Curve,
    r0: C,
    n: usize,
    phis: &[&dyn Fn(C) -> C],
) -> Vec<C> {
    let prod = |z: C| alphas.iter().fold(c(1.0, 0.0), |acc, a| acc * (z - a));
    let mut r = r0;
    let mut acc = vec![c(0.0, 0.0); phis.len()];
    for k in 0..n {
        let th = curve.theta0 + 2.0 * PI * k as f64 / n as f64;
        let z = (curve.z)(th);
        let cand = prod(z).sqrt();
        r = if (cand - r).norm() <= (cand + r).norm() {
            cand
        } else {
            -cand
        };
        let w = (curve.dz)(th) / r;
        for (a, phi) in acc.iter_mut().zip(phis) {
            *a += phi(z) * w;
        }
    }
    acc.iter().map(|v| v * (2.0 * PI / n as f64)).collect()
}
