//! Newton solve of K(alpha_2j) = 0 with the diagonal Jacobian (3/2) c_j D,
//! plus numerical checks of the derivative lemma and of dh/dalpha = 0.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BranchpointSet;
use crate::rhp::{EngineOptions, RhpSolution};
use crate::scattering::ScatteringData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    /// Absolute tolerance on max |K(alpha_2j)|.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    pub schema_version: u32,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_alphas: Vec<C>,
    pub c_values: Vec<C>,
    /// Largest relative gap between the two c_j formulas at the final point.
    pub c_cross_check: f64,
    pub d: C,
    pub moment_matrix_cond: f64,
    pub w: Vec<C>,
    pub omega: Vec<C>,
    pub converged: bool,
    pub message: String,
}

/// Report plus the solution at the final iterate.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub report: NewtonReport,
    pub solution: RhpSolution,
}

fn max_norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn upper_indices(n: usize) -> Vec<usize> {
    (0..=2 * n).map(|j| 2 * j).collect()
}

/// c_j at alpha_{2j}, j = 0..=2N.
pub fn eval_cj(sol: &RhpSolution) -> Result<Vec<C>> {
    sol.c_values(&upper_indices(sol.genus_param()))
}

/// The same coefficients from B'(alpha)/(2 pi i).
pub fn eval_cj_alt(sol: &RhpSolution) -> Result<Vec<C>> {
    sol.c_values_alt(&upper_indices(sol.genus_param()))
}

/// (3/2) c_j D for each upper branchpoint.
pub fn jacobian_diagonal(sol: &RhpSolution) -> Result<Vec<C>> {
    let c = eval_cj(sol)?;
    let diag: Vec<C> = c.iter().map(|c| 1.5 * c * sol.d).collect();
    if let Some(j) = diag.iter().position(|v| v.norm() < 1e-14) {
        return Err(Error::Degenerate(format!(
            "Jacobian entry {j} vanishes (c_j D = {})",
            diag[j] / 1.5
        )));
    }
    Ok(diag)
}

/// Moves every upper branchpoint by the given steps; partners follow
/// as conjugates when the set is Schwarz-symmetric, else stay put.
pub fn shift_upper(bps: &BranchpointSet, steps: &[C]) -> Result<BranchpointSet> {
    let schwarz = bps.is_schwarz();
    let mut all = bps.all().to_vec();
    for (j, s) in steps.iter().enumerate() {
        all[2 * j] += s;
        if schwarz {
            all[2 * j + 1] = all[2 * j].conj();
        }
    }
    BranchpointSet::from_all(all)
}

fn residual(sol: &RhpSolution) -> Result<Vec<C>> {
    sol.modulation_residual()
}

fn finish(
    sol: RhpSolution,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    message: String,
) -> Result<NewtonOutcome> {
    let c_values = eval_cj(&sol)?;
    let c_cross_check = if converged {
        let alt = eval_cj_alt(&sol)?;
        c_values
            .iter()
            .zip(alt.iter())
            .map(|(a, b)| (a - b).norm() / a.norm().max(1e-300))
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    let report = NewtonReport {
        schema_version: crate::SCHEMA_VERSION,
        iterations,
        residual_history: history,
        final_alphas: sol.bps().upper(),
        c_values,
        c_cross_check,
        d: sol.d,
        moment_matrix_cond: sol.moment_matrix_cond,
        w: sol.w.clone(),
        omega: sol.omega.clone(),
        converged,
        message,
    };
    Ok(NewtonOutcome {
        report,
        solution: sol,
    })
}

/// Damped Newton on the modulation equations. Contours are rebuilt at every
/// trial point. Running out of iterations or of step halvings is reported
/// with `converged = false`; a vanishing Jacobian entry is an error.
pub fn newton_solve(
    guess: &BranchpointSet,
    sd: &ScatteringData,
    x: f64,
    t: f64,
    opts: &EngineOptions,
    newton: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let mut sol = RhpSolution::solve(guess, sd, x, t, opts)?;
    let mut res = residual(&sol)?;
    let mut history = vec![max_norm(&res)];
    let mut it = 0;
    loop {
        let current = *history.last().unwrap();
        if current < newton.tol {
            return finish(sol, history, it, true, "converged".into());
        }
        if it == newton.max_iter {
            return finish(
                sol,
                history,
                it,
                false,
                format!("no convergence in {it} iterations"),
            );
        }
        let jac = jacobian_diagonal(&sol)?;
        let step: Vec<C> = res.iter().zip(jac.iter()).map(|(k, j)| -k / j).collect();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=newton.max_halvings {
            let scaled: Vec<C> = step.iter().map(|s| s * lambda).collect();
            let trial = shift_upper(sol.bps(), &scaled).and_then(|b| {
                let s = RhpSolution::solve(&b, sd, x, t, opts)?;
                let r = residual(&s)?;
                Ok((s, r))
            });
            match trial {
                Ok((s, r)) if max_norm(&r) < current => {
                    accepted = Some((s, r));
                    break;
                }
                Ok(_) => {}
                Err(e) => log::debug!("newton trial rejected: {e}"),
            }
            lambda *= 0.5;
        }
        it += 1;
        match accepted {
            Some((s, r)) => {
                log::debug!("newton iteration {it}: residual {:e}", max_norm(&r));
                sol = s;
                res = r;
                history.push(max_norm(&res));
            }
            None => {
                return finish(sol, history, it, false, "step halving exhausted".into());
            }
        }
    }
}

/// Real coefficients a_k of f0 = sum a_k z^k, k = 2N+1 ..= 6N+2, for which
/// the given Schwarz-symmetric branchpoints solve the modulation equations
/// at (x, t).
pub fn design_polynomial_f0(
    bps: &BranchpointSet,
    x: f64,
    t: f64,
    opts: &EngineOptions,
) -> Result<Vec<f64>> {
    if !bps.is_schwarz() {
        return Err(Error::Invalid(
            "design needs a Schwarz-symmetric set".into(),
        ));
    }
    let n = bps.genus_param();
    let base = RhpSolution::solve(bps, &ScatteringData::zero(), 0.0, 0.0, opts)?;
    let idx = upper_indices(n);
    for &i in &idx {
        base.check_placement(i)?;
    }
    let zs: Vec<C> = idx.iter().map(|&i| bps.alpha(i)).collect();
    let k1 = base.k_monomial(1, &zs)?;
    let k2 = base.k_monomial(2, &zs)?;
    let powers: Vec<i32> = ((2 * n + 1) as i32..=(6 * n + 2) as i32).collect();
    let cols: Vec<Vec<C>> = powers
        .iter()
        .map(|p| base.k_monomial(*p, &zs))
        .collect::<Result<_>>()?;
    let m = powers.len();
    let a = DMatrix::from_fn(m, m, |r, c| {
        let v = cols[c][r / 2];
        if r % 2 == 0 {
            v.re
        } else {
            v.im
        }
    });
    let fixed: Vec<C> = (0..zs.len())
        .map(|j| -x * k1[j] - 2.0 * t * k2[j])
        .collect();
    let b = DVector::from_fn(m, |r, _| {
        let v = -fixed[r / 2];
        if r % 2 == 0 {
            v.re
        } else {
            v.im
        }
    });
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("design system is singular".into()))?;
    Ok(sol.iter().copied().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub finite_difference: C,
    pub predicted: C,
    pub rel_deviation: f64,
}

/// Fixed loop offset so that finite differences compare the same contours.
fn frozen(sol: &RhpSolution) -> EngineOptions {
    sol.opts.clone().with_margin(sol.cs.margin)
}

fn k_at(bps: &BranchpointSet, sol: &RhpSolution, z: C, opts: &EngineOptions) -> Result<C> {
    let cs = Arc::new(opts.contours(bps, &sol.sd)?);
    let s = RhpSolution::solve_on(cs, &sol.sd, sol.x, sol.t, opts)?;
    s.eval_k(z)
}

/// Central difference of K(z) in alpha_i against (K/D)[D/(2(z - alpha)) + dD/dalpha].
pub fn lemma_derka_check(sol: &RhpSolution, i: usize, z: C, step: f64) -> Result<LemmaReport> {
    let opts = frozen(sol);
    let a = sol.bps().alpha(i);
    let hp = sol.bps().with_alpha(i, a + step)?;
    let hm = sol.bps().with_alpha(i, a - step)?;
    let fd = (k_at(&hp, sol, z, &opts)? - k_at(&hm, sol, z, &opts)?) / (2.0 * step);
    let k = sol.eval_k(z)?;
    let predicted = k / sol.d * (sol.d / (2.0 * (z - a)) + sol.d_derivative(i)?);
    let denom = fd.norm().max(predicted.norm());
    let rel_deviation = if denom == 0.0 {
        0.0
    } else {
        (fd - predicted).norm() / denom
    };
    Ok(LemmaReport {
        finite_difference: fd,
        predicted,
        rel_deviation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub points: Vec<C>,
    pub derivatives: Vec<C>,
    pub max_abs: f64,
}

/// Five points well outside the outer loop.
pub fn far_test_points(sol: &RhpSolution) -> Vec<C> {
    let all = sol.bps().all();
    let centre: C = all.iter().sum::<C>() / all.len() as f64;
    let radius =
        all.iter().map(|a| (a - centre).norm()).fold(0.0, f64::max) + 3.0 * sol.cs.margin + 1.0;
    (0..5)
        .map(|k| centre + C::from_polar(radius, 0.3 + 2.0 * std::f64::consts::PI * k as f64 / 5.0))
        .collect()
}

/// Central difference of h at five far points in alpha_i, constants re-solved.
pub fn theorem_dhda_check(sol: &RhpSolution, i: usize, step: f64) -> Result<TheoremReport> {
    let opts = frozen(sol);
    let points = far_test_points(sol);
    let a = sol.bps().alpha(i);
    let h_at = |b: BranchpointSet| -> Result<Vec<C>> {
        let s = RhpSolution::solve(&b, &sol.sd, sol.x, sol.t, &opts)?;
        Ok(s.eval_points(&points)?.iter().map(|p| p.h).collect())
    };
    let hp = h_at(sol.bps().with_alpha(i, a + step)?)?;
    let hm = h_at(sol.bps().with_alpha(i, a - step)?)?;
    let derivatives: Vec<C> = hp
        .iter()
        .zip(hm.iter())
        .map(|(p, m)| (p - m) / (2.0 * step))
        .collect();
    let max_abs = max_norm(&derivatives);
    Ok(TheoremReport {
        points,
        derivatives,
        max_abs,
    })
}
