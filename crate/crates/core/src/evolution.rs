//! x and t dependence: derivatives of K, characteristic velocities, branchpoint
//! and constant rates, and RK4 sweeps with Newton re-projection.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BranchpointSet;
use crate::modulation::{eval_cj, newton_solve, shift_upper, NewtonOptions};
use crate::rhp::{EngineOptions, Kernel, LoopId, RhpSolution};
use crate::scattering::ScatteringData;

fn upper_alphas(sol: &RhpSolution) -> (Vec<usize>, Vec<C>) {
    let idx: Vec<usize> = (0..=2 * sol.genus_param()).map(|j| 2 * j).collect();
    let zs = idx.iter().map(|&i| sol.bps().alpha(i)).collect();
    (idx, zs)
}

/// dK/dx at each z: K with f replaced by -zeta.
pub fn dk_dx(sol: &RhpSolution, zs: &[C]) -> Result<Vec<C>> {
    Ok(sol.k_monomial(1, zs)?.into_iter().map(|v| -v).collect())
}

/// dK/dt at each z: K with f replaced by -2 zeta^2.
pub fn dk_dt(sol: &RhpSolution, zs: &[C]) -> Result<Vec<C>> {
    Ok(sol
        .k_monomial(2, zs)?
        .into_iter()
        .map(|v| -2.0 * v)
        .collect())
}

/// Genus-one determinant forms: (dK/dx, dK/dt, 2 det(M1, C)) where C is the
/// Cauchy column at z and M0, M1 the first two moment columns.
pub fn explicit_genus_one(sol: &RhpSolution, zs: &[C]) -> Result<Vec<(C, C, C)>> {
    if sol.genus_param() != 1 {
        return Err(Error::Invalid(
            "explicit determinant forms need N = 1".into(),
        ));
    }
    let m = &sol.moments;
    let e1 = 0.5 * sol.bps().sum();
    let cols = sol.cauchy_columns(zs)?;
    Ok(cols
        .iter()
        .map(|(c, _)| {
            let det = |a: [C; 2], b: [C; 2]| a[0] * b[1] - a[1] * b[0];
            let cc = [c[0], c[1]];
            let m0 = [m[(0, 0)], m[(1, 0)]];
            let m1 = [m[(0, 1)], m[(1, 1)]];
            let kx = det(cc, m0);
            let shifted = [m1[0] - e1 * m0[0], m1[1] - e1 * m0[1]];
            (kx, 2.0 * det(shifted, cc), 2.0 * det(m1, cc))
        })
        .collect())
}

/// v_j = dK/dt(alpha_2j) / dK/dx(alpha_2j).
pub fn velocities(sol: &RhpSolution) -> Result<Vec<C>> {
    velocities_at(sol, &upper_alphas(sol).0)
}

/// dK/dt / dK/dx at the given branchpoint indices.
pub fn velocities_at(sol: &RhpSolution, idx: &[usize]) -> Result<Vec<C>> {
    for &i in idx {
        sol.check_placement(i)?;
    }
    let zs: Vec<C> = idx.iter().map(|&i| sol.bps().alpha(i)).collect();
    let kx = dk_dx(sol, &zs)?;
    let kt = dk_dt(sol, &zs)?;
    kx.iter()
        .zip(kt.iter())
        .zip(idx)
        .map(|((x, t), i)| {
            if x.norm() < 1e-14 {
                Err(Error::Degenerate(format!("dK/dx vanishes at alpha_{i}")))
            } else {
                Ok(t / x)
            }
        })
        .collect()
}

/// Genus-one velocity formula: sum alpha - 2 det(C, M1)/det(C, M0) at alpha_2j.
pub fn velocities_explicit(sol: &RhpSolution) -> Result<Vec<C>> {
    let (_, zs) = upper_alphas(sol);
    let s = sol.bps().sum();
    Ok(explicit_genus_one(sol, &zs)?
        .into_iter()
        .map(|(kx, _, m1c)| s + m1c / kx)
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaRates {
    pub x: Vec<C>,
    pub t: Vec<C>,
    pub velocities: Vec<C>,
    /// max |t-rate - v x-rate|.
    pub consistency: f64,
}

/// Branchpoint rates -dK/d(x|t)(alpha_2j) / ((3/2) c_j D).
pub fn alpha_rates(sol: &RhpSolution) -> Result<AlphaRates> {
    let (_, zs) = upper_alphas(sol);
    let c = eval_cj(sol)?;
    let denom: Vec<C> = c.iter().map(|c| 1.5 * c * sol.d).collect();
    if let Some(j) = denom.iter().position(|v| v.norm() < 1e-14) {
        return Err(Error::Degenerate(format!("c_{} D vanishes", 2 * j)));
    }
    let v = velocities(sol)?;
    let kx = dk_dx(sol, &zs)?;
    let kt = dk_dt(sol, &zs)?;
    let x: Vec<C> = kx.iter().zip(denom.iter()).map(|(k, d)| -k / d).collect();
    let t: Vec<C> = kt.iter().zip(denom.iter()).map(|(k, d)| -k / d).collect();
    let consistency = (0..x.len())
        .map(|j| (t[j] - v[j] * x[j]).norm())
        .fold(0.0, f64::max);
    Ok(AlphaRates {
        x,
        t,
        velocities: v,
        consistency,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantRates {
    pub w_x: Vec<C>,
    pub omega_x: Vec<C>,
    pub w_t: Vec<C>,
    pub omega_t: Vec<C>,
}

impl ConstantRates {
    /// Omega_x W_t - Omega_t W_x for the first pair.
    pub fn wronskian(&self) -> C {
        self.omega_x[0] * self.w_t[0] - self.omega_t[0] * self.w_x[0]
    }
}

/// Rates of W, Omega along the solution manifold. Since the constants are
/// stationary in the branchpoints at a solution, these are the responses of
/// the moment system to f -> -zeta and f -> -2 zeta^2.
pub fn constants_rates(sol: &RhpSolution) -> Result<ConstantRates> {
    let n = sol.genus_param();
    if n == 0 {
        return Ok(ConstantRates {
            w_x: vec![],
            omega_x: vec![],
            w_t: vec![],
            omega_t: vec![],
        });
    }
    let rows = 2 * n;
    let ks: Vec<Kernel> = (1..=rows as i32 + 1).map(Kernel::pow).collect();
    let p = sol.integrals().run(LoopId::All, &ks)?;
    let mt = sol.moments.transpose().lu();
    let respond = |rhs: Vec<C>| -> Result<Vec<C>> {
        mt.solve(&DVector::from_vec(rhs))
            .map(|v| v.iter().copied().collect())
            .ok_or(Error::IllConditioned {
                cond: f64::INFINITY,
            })
    };
    // F_k for f = -zeta is -P_{k+1}; the system is M^T u = -F
    let ux = respond((0..rows).map(|k| p[k]).collect())?;
    let ut = respond((0..rows).map(|k| 2.0 * p[k + 1]).collect())?;
    Ok(ConstantRates {
        w_x: ux[..n].to_vec(),
        omega_x: ux[n..].to_vec(),
        w_t: ut[..n].to_vec(),
        omega_t: ut[n..].to_vec(),
    })
}

/// Genus-one closed forms of the constant rates from the moment matrix.
pub fn constants_rates_explicit(sol: &RhpSolution) -> Result<ConstantRates> {
    if sol.genus_param() != 1 {
        return Err(Error::Invalid(
            "closed-form constant rates need N = 1".into(),
        ));
    }
    let m = &sol.moments;
    let e1 = 0.5 * sol.bps().sum();
    let tpi = C::new(0.0, 2.0 * PI);
    let d = sol.d;
    Ok(ConstantRates {
        w_x: vec![tpi * m[(1, 0)] / d],
        omega_x: vec![-tpi * m[(0, 0)] / d],
        w_t: vec![-2.0 * tpi * (m[(1, 1)] - e1 * m[(1, 0)]) / d],
        omega_t: vec![2.0 * tpi * (m[(0, 1)] - e1 * m[(0, 0)]) / d],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub from: f64,
    pub to: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    1e-2
}

/// Thresholds for stop-and-mark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub min_step: f64,
    pub min_abs_d: f64,
    pub min_abs_c: f64,
    pub min_separation: f64,
    pub min_imag: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            min_step: 1e-5,
            min_abs_d: 1e-8,
            min_abs_c: 1e-8,
            min_separation: 1e-6,
            min_imag: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub t: f64,
    pub alphas: Vec<C>,
    pub w: Vec<C>,
    pub omega: Vec<C>,
    pub residual: f64,
    pub abs_d: f64,
    pub min_abs_c: f64,
    /// Relative defect of the Wronskian identity (genus one only).
    pub wronskian_defect: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub axis: Axis,
    pub points: Vec<TrajectoryPoint>,
    pub truncated: bool,
    pub stop_reason: Option<String>,
}

fn max_norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn point_of(sol: &RhpSolution) -> Result<TrajectoryPoint> {
    let c = eval_cj(sol)?;
    let wronskian_defect = if sol.genus_param() == 1 {
        let expect = C::new(-8.0 * PI * PI, 0.0) / sol.d;
        let got = constants_rates(sol)?.wronskian();
        Some((got - expect).norm() / expect.norm())
    } else {
        None
    };
    Ok(TrajectoryPoint {
        x: sol.x,
        t: sol.t,
        alphas: sol.bps().upper(),
        w: sol.w.clone(),
        omega: sol.omega.clone(),
        residual: max_norm(&sol.modulation_residual()?),
        abs_d: sol.d.norm(),
        min_abs_c: c.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min),
        wronskian_defect,
    })
}

fn degeneracy(p: &TrajectoryPoint, bps: &BranchpointSet, o: &EvolveOptions) -> Option<String> {
    if p.abs_d < o.min_abs_d {
        return Some(format!("|D| = {:e} collapsed", p.abs_d));
    }
    if p.min_abs_c < o.min_abs_c {
        return Some(format!("min |c_j| = {:e} collapsed", p.min_abs_c));
    }
    if bps.min_distance() < o.min_separation {
        return Some("branchpoints collide".into());
    }
    if let Some(a) = p.alphas.iter().find(|a| a.im < o.min_imag) {
        return Some(format!("branchpoint {a} reached the real axis"));
    }
    None
}

fn at(axis: Axis, base: (f64, f64), s: f64) -> (f64, f64) {
    match axis {
        Axis::X => (s, base.1),
        Axis::T => (base.0, s),
    }
}

/// Upper-branchpoint rates along the sweep axis at (x, t), no convergence assumed.
fn rates(
    bps: &BranchpointSet,
    sd: &ScatteringData,
    xt: (f64, f64),
    axis: Axis,
    opts: &EngineOptions,
) -> Result<Vec<C>> {
    let sol = RhpSolution::solve(bps, sd, xt.0, xt.1, opts)?;
    let r = alpha_rates(&sol)?;
    Ok(match axis {
        Axis::X => r.x,
        Axis::T => r.t,
    })
}

fn rk4_step(
    bps: &BranchpointSet,
    sd: &ScatteringData,
    xt0: (f64, f64),
    s0: f64,
    h: f64,
    axis: Axis,
    opts: &EngineOptions,
) -> Result<BranchpointSet> {
    let scale = |v: &[C], f: f64| -> Vec<C> { v.iter().map(|a| a * f).collect() };
    let k1 = rates(bps, sd, at(axis, xt0, s0), axis, opts)?;
    let b2 = shift_upper(bps, &scale(&k1, h / 2.0))?;
    let k2 = rates(&b2, sd, at(axis, xt0, s0 + h / 2.0), axis, opts)?;
    let b3 = shift_upper(bps, &scale(&k2, h / 2.0))?;
    let k3 = rates(&b3, sd, at(axis, xt0, s0 + h / 2.0), axis, opts)?;
    let b4 = shift_upper(bps, &scale(&k3, h))?;
    let k4 = rates(&b4, sd, at(axis, xt0, s0 + h), axis, opts)?;
    let step: Vec<C> = (0..k1.len())
        .map(|j| (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0))
        .collect();
    shift_upper(bps, &step)
}

/// RK4 sweep with Newton re-projection after every step. The step is halved
/// when a step or its projection fails; below `min_step`, or on a degeneracy
/// flag, the trajectory stops and is marked truncated.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    initial: &BranchpointSet,
    sd: &ScatteringData,
    x: f64,
    t: f64,
    sweep: &Sweep,
    opts: &EngineOptions,
    newton: &NewtonOptions,
    evo: &EvolveOptions,
) -> Result<Trajectory> {
    if sweep.step.is_nan() || sweep.step <= 0.0 || !sweep.from.is_finite() || !sweep.to.is_finite()
    {
        return Err(Error::Invalid(
            "sweep needs finite bounds and a positive step".into(),
        ));
    }
    let base = (x, t);
    let start = at(sweep.axis, base, sweep.from);
    let first = newton_solve(initial, sd, start.0, start.1, opts, newton)?;
    if !first.report.converged {
        return Err(Error::NonConvergence {
            iterations: first.report.iterations,
            residual: *first.report.residual_history.last().unwrap(),
        });
    }
    let p0 = point_of(&first.solution)?;
    if let Some(reason) = degeneracy(&p0, first.solution.bps(), evo) {
        return Err(Error::Degenerate(format!("at the sweep start: {reason}")));
    }
    let mut traj = Trajectory {
        schema_version: crate::SCHEMA_VERSION,
        axis: sweep.axis,
        points: vec![p0],
        truncated: false,
        stop_reason: None,
    };
    let dir = (sweep.to - sweep.from).signum();
    let mut s = sweep.from;
    let mut bps = first.solution.bps().clone();
    let mut h = sweep.step;
    let span = (sweep.to - sweep.from).abs();
    let eps = 1e-12 * (1.0 + span);
    while (sweep.to - s) * dir > eps {
        let hh = h.min((sweep.to - s).abs());
        let next_s = if hh == (sweep.to - s).abs() {
            sweep.to
        } else {
            s + dir * hh
        };
        let xt = at(sweep.axis, base, next_s);
        let attempt = rk4_step(
            &bps,
            sd,
            at(sweep.axis, base, s),
            s,
            next_s - s,
            sweep.axis,
            opts,
        )
        .and_then(|guess| newton_solve(&guess, sd, xt.0, xt.1, opts, newton));
        match attempt {
            Ok(out) if out.report.converged => {
                let p = point_of(&out.solution)?;
                let flag = degeneracy(&p, out.solution.bps(), evo);
                traj.points.push(p);
                s = next_s;
                bps = out.solution.bps().clone();
                if let Some(reason) = flag {
                    traj.truncated = true;
                    traj.stop_reason = Some(reason);
                    break;
                }
            }
            other => {
                let why = match other {
                    Err(e) => e.to_string(),
                    Ok(out) => out.report.message,
                };
                log::debug!("step {hh:e} rejected at {s}: {why}");
                h = hh / 2.0;
                if h < evo.min_step {
                    traj.truncated = true;
                    traj.stop_reason = Some(format!("step fell below {:e}: {why}", evo.min_step));
                    break;
                }
            }
        }
    }
    Ok(traj)
}

impl Trajectory {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["x".to_string(), "t".to_string()];
        let Some(first) = self.points.first() else {
            return cols.join(",");
        };
        for j in 0..first.alphas.len() {
            cols.push(format!("alpha{}_re", 2 * j));
            cols.push(format!("alpha{}_im", 2 * j));
        }
        for j in 1..=first.w.len() {
            cols.push(format!("W{j}_re"));
            cols.push(format!("W{j}_im"));
        }
        for j in 1..=first.omega.len() {
            cols.push(format!("Omega{j}_re"));
            cols.push(format!("Omega{j}_im"));
        }
        cols.push("residual".into());
        cols.push("abs_D".into());
        cols.join(",")
    }

    /// CSV with one row per point, numbers to 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for p in &self.points {
            let mut v = vec![p.x, p.t];
            for a in p.alphas.iter().chain(p.w.iter()).chain(p.omega.iter()) {
                v.push(a.re);
                v.push(a.im);
            }
            v.push(p.residual);
            v.push(p.abs_d);
            let row: Vec<String> = v.iter().map(|x| crate::report::fmt_f64(*x)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Rates along the manifold by re-solving at x +- h (central differences).
#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifferenceRates {
    pub alphas: Vec<C>,
    pub w: Vec<C>,
    pub omega: Vec<C>,
}

pub fn rates_by_resolve(
    sol: &RhpSolution,
    axis: Axis,
    h: f64,
    newton: &NewtonOptions,
) -> Result<FiniteDifferenceRates> {
    let solve_at = |s: f64| -> Result<RhpSolution> {
        let (x, t) = match axis {
            Axis::X => (sol.x + s, sol.t),
            Axis::T => (sol.x, sol.t + s),
        };
        let out = newton_solve(sol.bps(), &sol.sd, x, t, &sol.opts, newton)?;
        if !out.report.converged {
            return Err(Error::NonConvergence {
                iterations: out.report.iterations,
                residual: *out.report.residual_history.last().unwrap(),
            });
        }
        Ok(out.solution)
    };
    let p = solve_at(h)?;
    let m = solve_at(-h)?;
    let diff = |a: &[C], b: &[C]| -> Vec<C> {
        a.iter().zip(b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    Ok(FiniteDifferenceRates {
        alphas: diff(&p.bps().upper(), &m.bps().upper()),
        w: diff(&p.w, &m.w),
        omega: diff(&p.omega, &m.omega),
    })
}
