//! Moment system, determinants D and K, and the g/h evaluators.
//!
//! Loop orientations: the outer loop and the main-arc loops are traversed
//! clockwise, the complementary loops counterclockwise with the sheet equal
//! to planar R on the right of their arcs. Geometry stores every loop
//! counterclockwise, so the first two carry a factor -1.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ArcSystem, BranchpointSet, ContourSystem, CustomArc, Location};
use crate::par;
use crate::quadrature::{integrate_loop, QuadOptions};
use crate::scattering::ScatteringData;

/// Relative branchpoint separation below which a configuration is degenerate.
pub const MIN_SEPARATION: f64 = 1e-5;

const TWO_PI_I: C = C {
    re: 0.0,
    im: 2.0 * PI,
};

/// Contour and quadrature settings shared by every solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EngineOptions {
    pub quad: QuadOptions,
    /// Loop offset; defaults to 0.15 times the smallest branchpoint distance.
    pub margin: Option<f64>,
    pub custom_arcs: Vec<CustomArc>,
}

impl EngineOptions {
    pub fn contours(&self, bps: &BranchpointSet, sd: &ScatteringData) -> Result<ContourSystem> {
        let arcs = ArcSystem::build(bps, &self.custom_arcs, &sd.singularities)?;
        let margin = self
            .margin
            .unwrap_or_else(|| crate::geometry::default_margin(bps));
        ContourSystem::build(arcs, margin, &sd.singularities)
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Weight {
    One,
    F,
    FPrime,
}

/// weight(zeta) * zeta^pow / (zeta - a)^order
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Kernel {
    weight: Weight,
    pow: i32,
    pole: Option<(C, i32)>,
}

impl Kernel {
    pub(crate) fn pow(k: i32) -> Self {
        Kernel {
            weight: Weight::One,
            pow: k,
            pole: None,
        }
    }
    pub(crate) fn f_pow(k: i32) -> Self {
        Kernel {
            weight: Weight::F,
            pow: k,
            pole: None,
        }
    }
    pub(crate) fn cauchy(a: C, order: i32) -> Self {
        Kernel {
            weight: Weight::One,
            pow: 0,
            pole: Some((a, order)),
        }
    }
    pub(crate) fn pow_cauchy(k: i32, a: C, order: i32) -> Self {
        Kernel {
            weight: Weight::One,
            pow: k,
            pole: Some((a, order)),
        }
    }
    pub(crate) fn f_cauchy(a: C, order: i32) -> Self {
        Kernel {
            weight: Weight::F,
            pow: 0,
            pole: Some((a, order)),
        }
    }
    pub(crate) fn fprime_cauchy(a: C) -> Self {
        Kernel {
            weight: Weight::FPrime,
            pow: 0,
            pole: Some((a, 1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LoopId {
    All,
    /// Rows 0..N are main loops 1..N, rows N..2N complementary loops 1..N.
    Row(usize),
}

#[derive(Debug, Clone)]
pub struct RhpSolution {
    pub cs: Arc<ContourSystem>,
    pub sd: ScatteringData,
    pub x: f64,
    pub t: f64,
    pub opts: EngineOptions,
    /// moments[r][k]: sigma_r times the loop integral of zeta^k / R.
    pub moments: DMatrix<C>,
    /// f_moments[k]: outer-loop integral of zeta^k f / R (with orientation).
    pub f_moments: Vec<C>,
    pub w: Vec<C>,
    pub omega: Vec<C>,
    pub d: C,
    pub moment_matrix_cond: f64,
    /// Largest imaginary part among the constants.
    pub realness_defect: f64,
}

/// Values at one evaluation point.
#[derive(Debug, Clone, Serialize)]
pub struct PointValues {
    pub z: C,
    pub location: Location,
    pub r: C,
    pub k: C,
    pub g: C,
    pub h: C,
}

fn weight_value(
    sd: &ScatteringData,
    x: f64,
    t: f64,
    w: Weight,
    z: C,
    cache: &mut [Option<C>; 2],
) -> Result<C> {
    match w {
        Weight::One => Ok(C::new(1.0, 0.0)),
        Weight::F => {
            if cache[0].is_none() {
                cache[0] = Some(sd.eval_f(z, x, t)?);
            }
            Ok(cache[0].unwrap())
        }
        Weight::FPrime => {
            if cache[1].is_none() {
                cache[1] = Some(sd.eval_f_prime(z, x, t)?);
            }
            Ok(cache[1].unwrap())
        }
    }
}

/// Far poles are rescaled so the absolute tolerance stays meaningful.
fn pole_scale(a: C, order: i32, scale: f64) -> f64 {
    (a.norm() / scale).max(1.0).powi(order)
}

pub(crate) struct Integrals<'a> {
    pub cs: &'a ContourSystem,
    pub sd: &'a ScatteringData,
    pub x: f64,
    pub t: f64,
    pub quad: QuadOptions,
}

impl Integrals<'_> {
    fn sigma(&self, id: LoopId) -> f64 {
        let n = self.cs.bps().genus_param();
        match id {
            LoopId::All => -1.0,
            LoopId::Row(r) if r < n => -1.0,
            LoopId::Row(_) => 1.0,
        }
    }

    fn lp(&self, id: LoopId) -> &crate::geometry::Loop {
        let n = self.cs.bps().genus_param();
        match id {
            LoopId::All => &self.cs.loop_all,
            LoopId::Row(r) if r < n => &self.cs.loops_m[r],
            LoopId::Row(r) => &self.cs.loops_c[r - n],
        }
    }

    /// Oriented integrals of each kernel over one loop.
    pub fn run(&self, id: LoopId, kernels: &[Kernel]) -> Result<Vec<C>> {
        let scale = self.cs.bps().scale();
        let scales: Vec<f64> = kernels
            .iter()
            .map(|k| k.pole.map_or(1.0, |(a, o)| pole_scale(a, o, scale)))
            .collect();
        let phi = |z: C, out: &mut [C]| -> Result<()> {
            let mut cache = [None, None];
            for (i, k) in kernels.iter().enumerate() {
                let mut v = weight_value(self.sd, self.x, self.t, k.weight, z, &mut cache)?;
                if k.pow != 0 {
                    v *= crate::expr::ipow(z, k.pow);
                }
                if let Some((a, order)) = k.pole {
                    v *= scales[i] * crate::expr::ipow(z - a, -order);
                }
                out[i] = v;
            }
            Ok(())
        };
        let r = integrate_loop(self.lp(id), kernels.len(), &phi, &self.quad)?;
        let s = self.sigma(id);
        Ok(r.values
            .into_iter()
            .zip(scales)
            .map(|(v, sc)| v * s / sc)
            .collect())
    }

    /// Runs several loop jobs, in parallel when enabled.
    pub fn run_many(&self, jobs: &[(LoopId, Vec<Kernel>)]) -> Result<Vec<Vec<C>>> {
        par::try_map(jobs, |(id, ks)| self.run(*id, ks))
    }
}

/// Condition number of the row-equilibrated matrix.
fn condition(m: &DMatrix<C>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let mut eq = m.clone();
    for mut row in eq.row_iter_mut() {
        let s = row.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            row /= C::new(s, 0.0);
        }
    }
    let sv = eq.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn det(m: DMatrix<C>) -> C {
    if m.nrows() == 0 {
        return C::new(1.0, 0.0);
    }
    m.lu().determinant()
}

impl RhpSolution {
    /// Solves the moment system for W, Omega at fixed branchpoints.
    pub fn solve(
        bps: &BranchpointSet,
        sd: &ScatteringData,
        x: f64,
        t: f64,
        opts: &EngineOptions,
    ) -> Result<Self> {
        let sep = bps.min_distance();
        if sep < MIN_SEPARATION * bps.scale() {
            // the moment matrix stays well conditioned here; the collapse
            // shows up as a genus drop the loops cannot resolve
            return Err(Error::Degenerate(format!(
                "branchpoints nearly coincide (distance {sep:e})"
            )));
        }
        let cs = Arc::new(opts.contours(bps, sd)?);
        Self::solve_on(cs, sd, x, t, opts)
    }

    pub fn solve_on(
        cs: Arc<ContourSystem>,
        sd: &ScatteringData,
        x: f64,
        t: f64,
        opts: &EngineOptions,
    ) -> Result<Self> {
        let n = cs.bps().genus_param();
        let ints = Integrals {
            cs: &cs,
            sd,
            x,
            t,
            quad: opts.quad,
        };
        let rows = 2 * n;
        let mut jobs: Vec<(LoopId, Vec<Kernel>)> = (0..rows)
            .map(|r| (LoopId::Row(r), (0..rows as i32).map(Kernel::pow).collect()))
            .collect();
        jobs.push((LoopId::All, (0..rows as i32).map(Kernel::f_pow).collect()));
        let out = if rows == 0 {
            vec![vec![]]
        } else {
            ints.run_many(&jobs)?
        };
        let moments = DMatrix::from_fn(rows, rows, |r, k| out[r][k]);
        let f_moments = out[rows].clone();
        let cond = condition(&moments);
        let (w, omega, d) = if rows == 0 {
            (vec![], vec![], C::new(1.0, 0.0))
        } else {
            let d = det(moments.clone());
            if cond.is_nan() || cond >= 1e12 {
                return Err(Error::IllConditioned { cond });
            }
            let rhs = nalgebra::DVector::from_iterator(rows, f_moments.iter().map(|v| -v));
            let u = moments
                .transpose()
                .lu()
                .solve(&rhs)
                .ok_or(Error::IllConditioned {
                    cond: f64::INFINITY,
                })?;
            (
                u.iter().take(n).copied().collect(),
                u.iter().skip(n).copied().collect(),
                d,
            )
        };
        if d.norm() <= 1e-12 * cs.bps().scale() {
            return Err(Error::Degenerate(format!(
                "moment determinant D = {d} vanishes"
            )));
        }
        let realness_defect = w
            .iter()
            .chain(omega.iter())
            .map(|v: &C| v.im.abs())
            .fold(0.0, f64::max);
        if sd.schwarz_symmetric && cs.is_schwarz() && realness_defect > 1e-8 {
            log::warn!("constants are not real (max |Im| = {realness_defect:e})");
        }
        Ok(RhpSolution {
            cs,
            sd: sd.clone(),
            x,
            t,
            opts: opts.clone(),
            moments,
            f_moments,
            w,
            omega,
            d,
            moment_matrix_cond: cond,
            realness_defect,
        })
    }

    pub fn bps(&self) -> &BranchpointSet {
        self.cs.bps()
    }

    pub fn genus_param(&self) -> usize {
        self.bps().genus_param()
    }

    pub(crate) fn integrals(&self) -> Integrals<'_> {
        Integrals {
            cs: &self.cs,
            sd: &self.sd,
            x: self.x,
            t: self.t,
            quad: self.opts.quad,
        }
    }

    /// W_1..W_N followed by Omega_1..Omega_N.
    pub fn constants(&self) -> Vec<C> {
        self.w.iter().chain(self.omega.iter()).copied().collect()
    }

    /// Copy with replaced constants (for perturbation experiments).
    pub fn with_constants(&self, w: Vec<C>, omega: Vec<C>) -> Self {
        let mut s = self.clone();
        s.w = w;
        s.omega = omega;
        s
    }

    pub fn eval_d(&self) -> C {
        self.d
    }

    fn guard(&self, z: C) -> Result<()> {
        if self.cs.loop_distance(z) <= 10.0 * f64::EPSILON * (1.0 + z.norm()) {
            return Err(Error::OnContour { z });
        }
        Ok(())
    }

    /// Cauchy columns at each z: (C_r(z) for every row, outer f-column).
    pub(crate) fn cauchy_columns(&self, zs: &[C]) -> Result<Vec<(Vec<C>, C)>> {
        for z in zs {
            self.guard(*z)?;
        }
        let rows = 2 * self.genus_param();
        let mut jobs: Vec<(LoopId, Vec<Kernel>)> = (0..rows)
            .map(|r| {
                (
                    LoopId::Row(r),
                    zs.iter().map(|z| Kernel::cauchy(*z, 1)).collect(),
                )
            })
            .collect();
        jobs.push((
            LoopId::All,
            zs.iter().map(|z| Kernel::f_cauchy(*z, 1)).collect(),
        ));
        let out = self.integrals().run_many(&jobs)?;
        Ok((0..zs.len())
            .map(|i| ((0..rows).map(|r| out[r][i]).collect(), out[rows][i]))
            .collect())
    }

    /// Bordered determinant [[M | col], [last_row | corner]] / (2 pi i).
    pub(crate) fn bordered(&self, col: &[C], last_row: &[C], corner: C) -> C {
        let rows = 2 * self.genus_param();
        let m = DMatrix::from_fn(rows + 1, rows + 1, |r, k| {
            if r < rows && k < rows {
                self.moments[(r, k)]
            } else if r < rows {
                col[r]
            } else if k < rows {
                last_row[k]
            } else {
                corner
            }
        });
        det(m) / TWO_PI_I
    }

    fn b_actual(&self, cols: &(Vec<C>, C)) -> C {
        let u = self.constants();
        cols.1 + u.iter().zip(cols.0.iter()).map(|(a, b)| a * b).sum::<C>()
    }

    /// K(z): the determinant built from the loop integrals, without any
    /// residue bookkeeping.
    pub fn eval_k(&self, z: C) -> Result<C> {
        Ok(self.eval_k_many(&[z])?[0])
    }

    pub fn eval_k_many(&self, zs: &[C]) -> Result<Vec<C>> {
        let cols = self.cauchy_columns(zs)?;
        Ok(cols
            .iter()
            .map(|c| self.bordered(&c.0, &self.f_moments, c.1))
            .collect())
    }

    /// R/S inside the complementary loop containing z, per loop.
    fn comp_ratios(&self, z: C, loc: &Location, r: C) -> Result<Vec<C>> {
        let mut out = Vec::with_capacity(loc.inside_loop_c.len());
        for (i, inside) in loc.inside_loop_c.iter().enumerate() {
            if *inside {
                let lp = &self.cs.loops_c[i];
                let ci = lp
                    .component_containing(z)?
                    .expect("inside flag implies a component");
                let s = lp.components[ci].sheet_r(&self.cs.arcs, z)?;
                out.push(r / s);
            } else {
                out.push(C::new(0.0, 0.0));
            }
        }
        Ok(out)
    }

    /// g, h, K and R at a batch of points off the contours and cuts.
    pub fn eval_points(&self, zs: &[C]) -> Result<Vec<PointValues>> {
        let cols = self.cauchy_columns(zs)?;
        let mut out = Vec::with_capacity(zs.len());
        for (z, col) in zs.iter().zip(cols.iter()) {
            let z = *z;
            let loc = self.cs.point_location(z)?;
            let r = self.cs.radical_r(z)?;
            let b = self.b_actual(col);
            let k = self.bordered(&col.0, &self.f_moments, col.1);
            let ratios = self.comp_ratios(z, &loc, r)?;
            let f = self.sd.eval_f(z, self.x, self.t)?;
            let mut g = r * b / (2.0 * TWO_PI_I);
            let mut h = r * k / self.d;
            if loc.inside_loop_all {
                g += 0.5 * f;
            } else {
                h -= f;
            }
            for (i, inside) in loc.inside_loop_m.iter().enumerate() {
                if *inside {
                    g += 0.5 * self.w[i];
                    h += self.w[i];
                }
            }
            for (i, ratio) in ratios.iter().enumerate() {
                if loc.inside_loop_c[i] {
                    g -= 0.5 * self.omega[i] * ratio;
                    h -= self.omega[i] * ratio;
                }
            }
            out.push(PointValues {
                z,
                location: loc,
                r,
                k,
                g,
                h,
            });
        }
        Ok(out)
    }

    pub fn eval_g(&self, z: C) -> Result<C> {
        Ok(self.eval_points(&[z])?[0].g)
    }

    pub fn eval_h(&self, z: C) -> Result<C> {
        Ok(self.eval_points(&[z])?[0].h)
    }

    /// The constant that h approaches at z inside the loops near a branchpoint:
    /// the residue terms W_i and -Omega_i R/S, plus f bookkeeping.
    pub fn h_local_constant(&self, z: C) -> Result<C> {
        let p = &self.eval_points(&[z])?[0];
        Ok(p.h - p.r * p.k / self.d)
    }

    /// Which loops must contain alpha_i: the loops of the arcs ending there.
    fn expected_location(&self, i: usize) -> Location {
        let n = self.genus_param();
        let arcs = &self.cs.arcs;
        Location {
            inside_loop_all: true,
            inside_loop_m: (1..=n)
                .map(|k| arcs.main_arcs[k].iter().any(|p| p.from == i || p.to == i))
                .collect(),
            inside_loop_c: (1..=n)
                .map(|k| {
                    arcs.comp_arcs[k - 1]
                        .iter()
                        .any(|p| p.from == i || p.to == i)
                })
                .collect(),
        }
    }

    /// Checks that alpha_i sits inside exactly its adjacent loops.
    pub fn check_placement(&self, i: usize) -> Result<()> {
        let a = self.bps().alpha(i);
        let loc = self.cs.point_location(a)?;
        let want = self.expected_location(i);
        if loc != want {
            return Err(Error::Placement(format!(
                "alpha_{i} = {a} is not inside exactly its adjacent loops"
            )));
        }
        Ok(())
    }

    /// K evaluated at the given branchpoint indices.
    pub fn k_at_branchpoints(&self, idx: &[usize]) -> Result<Vec<C>> {
        for &i in idx {
            self.check_placement(i)?;
        }
        let zs: Vec<C> = idx.iter().map(|&i| self.bps().alpha(i)).collect();
        self.eval_k_many(&zs)
    }

    /// K(alpha_{2j}) for j = 0..=2N.
    pub fn modulation_residual(&self) -> Result<Vec<C>> {
        let idx: Vec<usize> = (0..=2 * self.genus_param()).map(|j| 2 * j).collect();
        self.k_at_branchpoints(&idx)
    }

    /// c_j from the f' integral: (1/(3 pi i)) times the outer-loop integral
    /// of f'/((zeta - alpha_i) R), for branchpoint indices `idx`.
    pub fn c_values(&self, idx: &[usize]) -> Result<Vec<C>> {
        let ks: Vec<Kernel> = idx
            .iter()
            .map(|&i| Kernel::fprime_cauchy(self.bps().alpha(i)))
            .collect();
        let v = self.integrals().run(LoopId::All, &ks)?;
        Ok(v.into_iter().map(|x| x / C::new(0.0, 3.0 * PI)).collect())
    }

    /// c_j from the second-order pole integrals: B'(alpha_i)/(2 pi i).
    pub fn c_values_alt(&self, idx: &[usize]) -> Result<Vec<C>> {
        let rows = 2 * self.genus_param();
        let alphas: Vec<C> = idx.iter().map(|&i| self.bps().alpha(i)).collect();
        let mut jobs: Vec<(LoopId, Vec<Kernel>)> = (0..rows)
            .map(|r| {
                (
                    LoopId::Row(r),
                    alphas.iter().map(|a| Kernel::cauchy(*a, 2)).collect(),
                )
            })
            .collect();
        jobs.push((
            LoopId::All,
            alphas.iter().map(|a| Kernel::f_cauchy(*a, 2)).collect(),
        ));
        let out = self.integrals().run_many(&jobs)?;
        let u = self.constants();
        Ok((0..alphas.len())
            .map(|i| {
                let b = out[rows][i] + (0..rows).map(|r| u[r] * out[r][i]).sum::<C>();
                b / TWO_PI_I
            })
            .collect())
    }

    /// Partial derivative of D with respect to branchpoint alpha_i, loops held fixed.
    pub fn d_derivative(&self, i: usize) -> Result<C> {
        let rows = 2 * self.genus_param();
        if rows == 0 {
            return Ok(C::new(0.0, 0.0));
        }
        let a = self.bps().alpha(i);
        let jobs: Vec<(LoopId, Vec<Kernel>)> = (0..rows)
            .map(|r| {
                (
                    LoopId::Row(r),
                    (0..rows as i32)
                        .map(|k| Kernel::pow_cauchy(k, a, 1))
                        .collect(),
                )
            })
            .collect();
        let out = self.integrals().run_many(&jobs)?;
        let dm = DMatrix::from_fn(rows, rows, |r, k| 0.5 * out[r][k]);
        let inv = self
            .moments
            .clone()
            .try_inverse()
            .ok_or(Error::IllConditioned {
                cond: f64::INFINITY,
            })?;
        Ok(self.d * (inv * dm).trace())
    }

    /// Coefficient magnitudes of z^1..z^{2N} in the large-z expansion of g,
    /// fitted from samples at radii between 1e3 and 1e5.
    pub fn growth_coefficients(&self) -> Result<Vec<f64>> {
        let n = self.genus_param();
        let unknowns = 2 * n + 2;
        let dir = C::from_polar(1.0, 0.3);
        let radii: Vec<f64> = (0..unknowns)
            .map(|j| 1e3 * 100f64.powf(j as f64 / (unknowns - 1) as f64))
            .collect();
        let zs: Vec<C> = radii.iter().map(|r| dir * r).collect();
        let tight = RhpSolution {
            opts: EngineOptions {
                quad: QuadOptions {
                    tol: 0.0,
                    ..self.opts.quad
                },
                ..self.opts.clone()
            },
            ..self.clone()
        };
        let g: Vec<C> = tight.eval_points(&zs)?.iter().map(|p| p.g).collect();
        // columns z^{2N} ... z^{-1}, scaled by 1e4^p for conditioning
        let powers: Vec<i32> = (-1..=(2 * n) as i32).rev().collect();
        let sc = 1e4_f64;
        let a = DMatrix::from_fn(unknowns, unknowns, |j, c| {
            crate::expr::ipow(zs[j] / sc, powers[c])
        });
        let b = nalgebra::DVector::from_vec(g);
        let coef = a
            .lu()
            .solve(&b)
            .ok_or(Error::Invalid("singular fit".into()))?;
        Ok(powers
            .iter()
            .zip(coef.iter())
            .filter(|(p, _)| **p >= 1)
            .map(|(p, c)| c.norm() / sc.powi(*p))
            .collect())
    }
}

impl RhpSolution {
    /// K at each z with f replaced by zeta^p (K is linear in f).
    pub fn k_monomial(&self, p: i32, zs: &[C]) -> Result<Vec<C>> {
        for z in zs {
            self.guard(*z)?;
        }
        let rows = 2 * self.genus_param();
        let mut jobs: Vec<(LoopId, Vec<Kernel>)> = (0..rows)
            .map(|r| {
                (
                    LoopId::Row(r),
                    zs.iter().map(|z| Kernel::cauchy(*z, 1)).collect(),
                )
            })
            .collect();
        let mut last: Vec<Kernel> = (0..rows as i32).map(|k| Kernel::pow(k + p)).collect();
        last.extend(zs.iter().map(|z| Kernel::pow_cauchy(p, *z, 1)));
        jobs.push((LoopId::All, last));
        let out = self.integrals().run_many(&jobs)?;
        let row = &out[rows][..rows];
        Ok((0..zs.len())
            .map(|i| {
                let col: Vec<C> = (0..rows).map(|r| out[r][i]).collect();
                self.bordered(&col, row, out[rows][rows + i])
            })
            .collect())
    }
}

impl RhpSolution {
    /// Points in the standard region (inside the outer loop, outside all
    /// inner loops): offsets of 1.5 margins from the arcs, alternating sides.
    pub fn standard_region_points(&self, count: usize) -> Result<Vec<C>> {
        let arcs = &self.cs.arcs;
        let pieces: Vec<&crate::geometry::ArcPiece> = arcs
            .main_arcs
            .iter()
            .chain(arcs.comp_arcs.iter())
            .flatten()
            .collect();
        let mut out = Vec::new();
        let mut k = 0usize;
        while out.len() < count && k < 50 * count.max(1) {
            let piece = pieces[k % pieces.len()];
            let s = 0.2 + 0.6 * ((k / pieces.len()) as f64 * 0.618_033_988_75).fract();
            let (z, tan) = polyline_at(&piece.points, s);
            let side = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
            let w = z + C::i() * tan * (side * 1.5 * self.cs.margin);
            if self
                .cs
                .point_location(w)
                .map(|l| l.is_standard())
                .unwrap_or(false)
            {
                out.push(w);
            }
            k += 1;
        }
        if out.len() < count {
            return Err(Error::Geometry("standard region too thin to sample".into()));
        }
        Ok(out)
    }
}

/// Point and unit tangent at arc-length fraction s of a polyline.
pub(crate) fn polyline_at(points: &[C], s: f64) -> (C, C) {
    let lens: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = lens.iter().sum();
    let mut target = s * total;
    for (i, l) in lens.iter().enumerate() {
        if target <= *l || i + 1 == lens.len() {
            let d = points[i + 1] - points[i];
            return (points[i] + d * (target / l).min(1.0), d / *l);
        }
        target -= l;
    }
    unreachable!("polyline has at least one segment")
}

/// Largest jump-condition violations per arc.
#[derive(Debug, Clone, Serialize)]
pub struct JumpReport {
    /// Main arcs 0..=N: max |g_+ + g_- - f - W_k|.
    pub main: Vec<f64>,
    /// Complementary arcs 1..=N: max |g_+ - g_- - Omega_k|.
    pub comp: Vec<f64>,
    pub max: f64,
}

impl RhpSolution {
    /// Boundary values of g on both sides of an arc point, by Richardson
    /// extrapolation from offsets delta and 2 delta along the normal.
    pub fn boundary_values(&self, z: C, tangent: C) -> Result<(C, C)> {
        let n = C::i() * tangent;
        let delta = 1e-4 * self.cs.margin;
        let zs = [
            z + delta * n,
            z + 2.0 * delta * n,
            z - delta * n,
            z - 2.0 * delta * n,
        ];
        let g: Vec<C> = self.eval_points(&zs)?.iter().map(|p| p.g).collect();
        Ok((2.0 * g[0] - g[1], 2.0 * g[2] - g[3]))
    }

    /// Jump conditions checked against the given constants (normally the
    /// solution's own).
    pub fn jump_check_against(&self, w: &[C], omega: &[C], samples: usize) -> Result<JumpReport> {
        let arcs = &self.cs.arcs;
        // middle half of each piece, away from the loops of neighbouring pieces
        let fracs: Vec<f64> = (0..samples)
            .map(|q| 0.25 + 0.5 * (q as f64 + 0.5) / samples as f64)
            .collect();
        let clear = |z: C| self.cs.loop_distance(z) >= 0.5 * self.cs.margin;
        let mut main = Vec::new();
        for (k, pieces) in arcs.main_arcs.iter().enumerate() {
            let wk = if k == 0 { C::new(0.0, 0.0) } else { w[k - 1] };
            let mut worst: f64 = 0.0;
            for piece in pieces {
                for s in &fracs {
                    let (z, tan) = polyline_at(&piece.points, *s);
                    if !clear(z) {
                        continue;
                    }
                    let (gp, gm) = self.boundary_values(z, tan)?;
                    let f = self.sd.eval_f(z, self.x, self.t)?;
                    worst = worst.max((gp + gm - f - wk).norm());
                }
            }
            main.push(worst);
        }
        let mut comp = Vec::new();
        for (k, pieces) in arcs.comp_arcs.iter().enumerate() {
            let mut worst: f64 = 0.0;
            for piece in pieces {
                for s in &fracs {
                    let (z, tan) = polyline_at(&piece.points, *s);
                    if !clear(z) {
                        continue;
                    }
                    let (gp, gm) = self.boundary_values(z, tan)?;
                    worst = worst.max((gp - gm - omega[k]).norm());
                }
            }
            comp.push(worst);
        }
        let max = main.iter().chain(comp.iter()).cloned().fold(0.0, f64::max);
        Ok(JumpReport { main, comp, max })
    }

    pub fn jump_check(&self, samples: usize) -> Result<JumpReport> {
        self.jump_check_against(&self.w, &self.omega, samples)
    }
}
