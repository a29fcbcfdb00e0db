//! Adaptive Gauss-Kronrod (7/15) contour integration and the loop integrals
//! built on it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArcSystem, Continuation, ContourSystem, Loop, Path, Segment};
use crate::scattering::ScatteringData;

// Kronrod abscissae (descending) and weights; Gauss-7 weights for the odd
// Kronrod nodes and the centre.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639,
    0.949107912342758525,
    0.864864423359769073,
    0.741531185599394440,
    0.586087235467691130,
    0.405845151377397167,
    0.207784955007898468,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529225,
    0.063092092629978553,
    0.104790010322250184,
    0.140653259715525919,
    0.169004726639267903,
    0.190350578064785410,
    0.204432940075298892,
    0.209482141084727828,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693,
    0.279705391489276668,
    0.381830050505118945,
    0.417959183673469388,
];

const NODES: usize = 15;

fn node_x(j: usize) -> f64 {
    if j < 7 {
        -XGK[j]
    } else {
        XGK[14 - j]
    }
}

fn kronrod_w(j: usize) -> f64 {
    if j <= 7 {
        WGK[j]
    } else {
        WGK[14 - j]
    }
}

fn gauss_w(j: usize) -> f64 {
    let m = if j <= 7 { j } else { 14 - j };
    if m % 2 == 1 {
        WG[(m - 1) / 2]
    } else if m == 7 {
        WG[3]
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadOptions {
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            tol: 1e-11,
            max_evals: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralResult {
    pub value: C,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VecIntegral {
    pub values: Vec<C>,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// Nodes of one panel: points and measure factors (dzeta/ds times the
/// half-width, divided by R when integrating on a sheet).
struct PanelNodes {
    z: [C; NODES],
    q: [C; NODES],
}

/// Something that can be cut into panels: pieces parameterised by s in [0, 1].
trait Source: Sync {
    fn pieces(&self) -> usize;
    fn breaks(&self, piece: usize) -> Vec<f64>;
    fn nodes(&self, piece: usize, s0: f64, s1: f64) -> Arc<PanelNodes>;
}

fn panel_nodes(seg: &Segment, s0: f64, s1: f64, r: impl Fn(C) -> C) -> PanelNodes {
    let half = 0.5 * (s1 - s0);
    let mid = 0.5 * (s1 + s0);
    let mut z = [C::new(0.0, 0.0); NODES];
    let mut q = [C::new(0.0, 0.0); NODES];
    for j in 0..NODES {
        let s = mid + half * node_x(j);
        z[j] = seg.point(s);
        q[j] = seg.tangent(s) * half / r(z[j]);
    }
    PanelNodes { z, q }
}

struct PlainPath<'a>(&'a Path);

impl Source for PlainPath<'_> {
    fn pieces(&self) -> usize {
        self.0.segments.len()
    }
    fn breaks(&self, piece: usize) -> Vec<f64> {
        self.0.segments[piece].real_crossings()
    }
    fn nodes(&self, piece: usize, s0: f64, s1: f64) -> Arc<PanelNodes> {
        Arc::new(panel_nodes(&self.0.segments[piece], s0, s1, |_| {
            C::new(1.0, 0.0)
        }))
    }
}

type CacheKey = (u64, u32, u64, u64);

const CACHE_LIMIT: usize = 400_000;

fn node_cache() -> &'static RwLock<HashMap<CacheKey, Arc<PanelNodes>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<PanelNodes>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Number of panels currently held in the shared R-node cache.
pub fn cache_len() -> usize {
    node_cache().read().map(|c| c.len()).unwrap_or(0)
}

struct Sheeted<'a>(&'a Continuation);

impl Source for Sheeted<'_> {
    fn pieces(&self) -> usize {
        self.0.path().segments.len()
    }
    fn breaks(&self, piece: usize) -> Vec<f64> {
        self.0.path().segments[piece].real_crossings()
    }
    fn nodes(&self, piece: usize, s0: f64, s1: f64) -> Arc<PanelNodes> {
        let key = (self.0.hash(), piece as u32, s0.to_bits(), s1.to_bits());
        if let Some(hit) = node_cache().read().ok().and_then(|c| c.get(&key).cloned()) {
            return hit;
        }
        let seg = &self.0.path().segments[piece];
        let fresh = Arc::new(panel_nodes(seg, s0, s1, |z| self.0.r_at(piece, z)));
        if let Ok(mut cache) = node_cache().write() {
            if cache.len() >= CACHE_LIMIT {
                cache.clear();
            }
            cache.insert(key, fresh.clone());
        }
        fresh
    }
}

struct Panel {
    piece: usize,
    s0: f64,
    s1: f64,
    value: Vec<C>,
    err: f64,
}

#[derive(PartialEq)]
struct Worst(f64, usize);

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

fn eval_panel<F>(
    src: &dyn Source,
    n: usize,
    f: &F,
    piece: usize,
    s0: f64,
    s1: f64,
    buf: &mut [C],
) -> Result<Panel>
where
    F: Fn(C, &mut [C]) -> Result<()> + ?Sized,
{
    let nodes = src.nodes(piece, s0, s1);
    let mut k = vec![C::new(0.0, 0.0); n];
    let mut g = vec![C::new(0.0, 0.0); n];
    for j in 0..NODES {
        f(nodes.z[j], buf)?;
        let (wk, wg) = (kronrod_w(j), gauss_w(j));
        for c in 0..n {
            let v = buf[c] * nodes.q[j];
            k[c] += v * wk;
            if wg != 0.0 {
                g[c] += v * wg;
            }
        }
    }
    let mut err = 0.0_f64;
    for c in 0..n {
        if !(k[c].re.is_finite() && k[c].im.is_finite()) {
            return Err(Error::Eval("non-finite integrand on contour".into()));
        }
        err = err.max((k[c] - g[c]).norm());
    }
    Ok(Panel {
        piece,
        s0,
        s1,
        value: k,
        err,
    })
}

fn adaptive<F>(src: &dyn Source, n: usize, f: &F, opts: &QuadOptions) -> Result<VecIntegral>
where
    F: Fn(C, &mut [C]) -> Result<()> + ?Sized,
{
    let mut buf = vec![C::new(0.0, 0.0); n];
    let mut panels: Vec<Panel> = Vec::new();
    for p in 0..src.pieces() {
        let mut cuts = vec![0.0];
        cuts.extend(src.breaks(p));
        cuts.push(1.0);
        for w in cuts.windows(2) {
            panels.push(eval_panel(src, n, f, p, w[0], w[1], &mut buf)?);
        }
    }
    let mut evals = panels.len() * NODES;
    let mut heap: BinaryHeap<Worst> = panels
        .iter()
        .enumerate()
        .map(|(i, p)| Worst(p.err, i))
        .collect();
    let mut total: f64 = panels.iter().map(|p| p.err).sum();
    let magnitude = |panels: &[Panel]| -> f64 {
        panels
            .iter()
            .map(|p| p.value.iter().map(|v| v.norm()).fold(0.0, f64::max))
            .sum()
    };
    let mut floor = 64.0 * f64::EPSILON * magnitude(&panels);
    let mut steps = 0usize;
    while total > opts.tol.max(floor) {
        if evals >= opts.max_evals {
            return Err(Error::Quadrature {
                evaluations: evals,
                estimate: total,
            });
        }
        let Some(Worst(err, idx)) = heap.pop() else {
            break;
        };
        let (piece, s0, s1) = (panels[idx].piece, panels[idx].s0, panels[idx].s1);
        let sm = 0.5 * (s0 + s1);
        if sm <= s0 || sm >= s1 {
            // panel can no longer be split; accept it as is
            total -= err;
            continue;
        }
        let left = eval_panel(src, n, f, piece, s0, sm, &mut buf)?;
        let right = eval_panel(src, n, f, piece, sm, s1, &mut buf)?;
        evals += 2 * NODES;
        total += left.err + right.err - err;
        heap.push(Worst(right.err, panels.len()));
        panels.push(right);
        heap.push(Worst(left.err, idx));
        panels[idx] = left;
        steps += 1;
        if steps.is_multiple_of(64) {
            total = heap.iter().map(|w| w.0).sum();
            floor = 64.0 * f64::EPSILON * magnitude(&panels);
        }
    }
    panels.sort_by(|a, b| (a.piece, a.s0).partial_cmp(&(b.piece, b.s0)).unwrap());
    let mut values = vec![C::new(0.0, 0.0); n];
    let mut err = 0.0;
    for p in &panels {
        for (v, pv) in values.iter_mut().zip(&p.value) {
            *v += pv;
        }
        err += p.err;
    }
    Ok(VecIntegral {
        values,
        abs_error_estimate: err,
        evaluations: evals,
    })
}

/// Integral of `f(zeta) dzeta` along a path.
pub fn integrate_path(
    f: impl Fn(C) -> C + Sync,
    path: &Path,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let g = |z: C, out: &mut [C]| -> Result<()> {
        out[0] = f(z);
        Ok(())
    };
    let r = adaptive(&PlainPath(path), 1, &g, opts)?;
    Ok(IntegralResult {
        value: r.values[0],
        abs_error_estimate: r.abs_error_estimate,
        evaluations: r.evaluations,
    })
}

/// Vector integral of `phi(zeta) dzeta / R(zeta)` along a path whose R values
/// come from the given continuation.
pub fn integrate_sheet<F>(
    cont: &Continuation,
    n: usize,
    phi: &F,
    opts: &QuadOptions,
) -> Result<VecIntegral>
where
    F: Fn(C, &mut [C]) -> Result<()> + Sync + ?Sized,
{
    adaptive(&Sheeted(cont), n, phi, opts)
}

/// Sum over the loop's counterclockwise components of the integral of phi/S.
pub fn integrate_loop<F>(lp: &Loop, n: usize, phi: &F, opts: &QuadOptions) -> Result<VecIntegral>
where
    F: Fn(C, &mut [C]) -> Result<()> + Sync + ?Sized,
{
    let mut acc = VecIntegral {
        values: vec![C::new(0.0, 0.0); n],
        abs_error_estimate: 0.0,
        evaluations: 0,
    };
    for comp in &lp.components {
        let r = integrate_sheet(comp.continuation(), n, phi, opts)?;
        for (a, v) in acc.values.iter_mut().zip(r.values) {
            *a += v;
        }
        acc.abs_error_estimate += r.abs_error_estimate;
        acc.evaluations += r.evaluations;
    }
    Ok(acc)
}

/// Integral of a complex function of a real variable over [a, b].
pub fn integrate_interval(
    f: impl Fn(f64) -> C + Sync,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let seg = Path::new(
        vec![Segment::Line {
            a: C::new(a, 0.0),
            b: C::new(b, 0.0),
        }],
        false,
    )?;
    integrate_path(|z| f(z.re), &seg, opts)
}

fn sheet_for(arcs: &ArcSystem, path: &Path) -> Result<Continuation> {
    Continuation::new(&arcs.bps, path, arcs.radical_r(path.start())?)
}

fn refuse_near(path: &Path, z: C) -> Result<()> {
    if path.distance_to(z) <= 10.0 * f64::EPSILON * (1.0 + z.norm()) {
        return Err(Error::OnContour { z });
    }
    Ok(())
}

/// Integral of zeta^k / R along a path, R continued from its planar value at the start.
pub fn loop_moment(
    arcs: &ArcSystem,
    path: &Path,
    k: i32,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let cont = sheet_for(arcs, path)?;
    let r = integrate_sheet(
        &cont,
        1,
        &|z: C, o: &mut [C]| {
            o[0] = z.powi(k);
            Ok(())
        },
        opts,
    )?;
    Ok(single(r))
}

/// Integral of 1/((zeta - z) R) along a path.
pub fn loop_cauchy(
    arcs: &ArcSystem,
    path: &Path,
    z: C,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    refuse_near(path, z)?;
    let cont = sheet_for(arcs, path)?;
    let r = integrate_sheet(
        &cont,
        1,
        &|s: C, o: &mut [C]| {
            o[0] = 1.0 / (s - z);
            Ok(())
        },
        opts,
    )?;
    Ok(single(r))
}

/// Integral of zeta^k f / R along a path.
pub fn loop_f_moment(
    arcs: &ArcSystem,
    sd: &ScatteringData,
    x: f64,
    t: f64,
    path: &Path,
    k: i32,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    let cont = sheet_for(arcs, path)?;
    let r = integrate_sheet(
        &cont,
        1,
        &|s: C, o: &mut [C]| {
            o[0] = s.powi(k) * sd.eval_f(s, x, t)?;
            Ok(())
        },
        opts,
    )?;
    Ok(single(r))
}

/// Integral of f / ((zeta - z) R) along a path.
pub fn loop_f_cauchy(
    arcs: &ArcSystem,
    sd: &ScatteringData,
    x: f64,
    t: f64,
    path: &Path,
    z: C,
    opts: &QuadOptions,
) -> Result<IntegralResult> {
    refuse_near(path, z)?;
    let cont = sheet_for(arcs, path)?;
    let r = integrate_sheet(
        &cont,
        1,
        &|s: C, o: &mut [C]| {
            o[0] = sd.eval_f(s, x, t)? / (s - z);
            Ok(())
        },
        opts,
    )?;
    Ok(single(r))
}

fn single(r: VecIntegral) -> IntegralResult {
    IntegralResult {
        value: r.values[0],
        abs_error_estimate: r.abs_error_estimate,
        evaluations: r.evaluations,
    }
}

/// Principal-value integral of F(zeta)/(zeta - z) along a polyline, with z
/// on segment `hit` (or off the polyline when `hit` is None). F may have
/// inverse square-root endpoint singularities; each segment is mapped with
/// zeta = mid - half cos(theta).
pub fn polyline_pv(
    points: &[C],
    z: C,
    hit: Option<usize>,
    big_f: &(dyn Fn(C) -> Result<C> + Sync),
    fz: C,
    opts: &QuadOptions,
) -> Result<C> {
    let mut total = C::new(0.0, 0.0);
    for (k, w) in points.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let on = hit == Some(k);
        let err = std::sync::Mutex::new(None);
        let r = integrate_interval(
            |th| {
                let zeta = mid - half * th.cos();
                let dz = half * th.sin();
                match big_f(zeta) {
                    Ok(v) => {
                        if on {
                            if (zeta - z).norm() == 0.0 {
                                C::new(0.0, 0.0)
                            } else {
                                (v - fz) / (zeta - z) * dz
                            }
                        } else {
                            v / (zeta - z) * dz
                        }
                    }
                    Err(e) => {
                        *err.lock().unwrap() = Some(e);
                        C::new(0.0, 0.0)
                    }
                }
            },
            0.0,
            PI,
            opts,
        )?;
        if let Some(e) = err.into_inner().unwrap() {
            return Err(e);
        }
        total += r.value;
        if on {
            total += fz * ((b - z) / (z - a)).ln();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    Main,
    Comp,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentReduction {
    pub kind: ArcKind,
    /// Index into the main (excluding the loopless central piece) or
    /// complementary loop list.
    pub arc: usize,
    pub piece: usize,
    pub z: C,
    pub loop_value: C,
    pub segment_value: C,
    pub discrepancy: f64,
}

/// Collapses the small loop containing `z` onto the arc piece it surrounds:
/// the counterclockwise loop integral of 1/((zeta - z) R) equals
/// -2 times the integral along the piece using the left boundary value, plus
/// the residue at z when z is off the piece.
pub fn segment_reduction_check(
    cs: &ContourSystem,
    z: C,
    opts: &QuadOptions,
) -> Result<SegmentReduction> {
    let mut found = None;
    for (kind, loops, arcs) in [
        (ArcKind::Main, &cs.loops_m, &cs.arcs.main_arcs[1..]),
        (ArcKind::Comp, &cs.loops_c, &cs.arcs.comp_arcs[..]),
    ] {
        for (i, lp) in loops.iter().enumerate() {
            if let Some(j) = lp.component_containing(z)? {
                found = Some((kind, i, j, &lp.components[j], &arcs[i][j]));
            }
        }
    }
    let (kind, arc, piece, comp, ap) = found
        .ok_or_else(|| Error::Invalid(format!("{z} is not inside a main or complementary loop")))?;

    let phi = |zeta: C, out: &mut [C]| -> Result<()> {
        out[0] = 1.0 / (zeta - z);
        Ok(())
    };
    let loop_value = integrate_sheet(comp.continuation(), 1, &phi, opts)?.values[0];

    let tol = 1e-12 * cs.bps().scale();
    let hit = ap.points.windows(2).position(|w| {
        let d = w[1] - w[0];
        let s = ((z - w[0]) * d.conj()).re / d.norm_sqr();
        (0.0..=1.0).contains(&s) && (w[0] + s * d - z).norm() <= tol
    });
    let arcs = &cs.arcs;
    let big_f = |zeta: C| -> Result<C> { Ok(1.0 / comp.sheet_boundary(arcs, zeta, 1.0)?) };
    let (fz, residue) = match hit {
        Some(_) => (big_f(z)?, C::new(0.0, 0.0)),
        None => (C::new(0.0, 0.0), 2.0 * PI * C::i() / comp.sheet_r(arcs, z)?),
    };
    let pv = polyline_pv(&ap.points, z, hit, &big_f, fz, opts)?;
    let segment_value = -2.0 * pv + residue;
    Ok(SegmentReduction {
        kind,
        arc,
        piece,
        z,
        loop_value,
        segment_value,
        discrepancy: (loop_value - segment_value).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BranchpointSet;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn kronrod_weights_integrate_polynomials() {
        let sk: f64 = (0..NODES).map(kronrod_w).sum();
        let sg: f64 = (0..NODES).map(gauss_w).sum();
        assert!((sk - 2.0).abs() < 1e-15);
        assert!((sg - 2.0).abs() < 1e-15);
        let x12: f64 = (0..NODES).map(|j| kronrod_w(j) * node_x(j).powi(12)).sum();
        assert!((x12 - 2.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn residue_and_entire_integrands() {
        let circle = Path::circle(c(0.2, 0.1), 1.5);
        let opts = QuadOptions::default();
        let z0 = c(0.5, -0.3);
        let r = integrate_path(|z| 1.0 / (z - z0), &circle, &opts).unwrap();
        assert!((r.value - c(0.0, 2.0 * PI)).norm() < 1e-12);
        assert!(r.abs_error_estimate >= 0.0 && r.evaluations > 0);
        let r = integrate_path(|z| z * z, &circle, &opts).unwrap();
        assert!(r.value.norm() < 1e-12);
        let seg = Path::polyline(&[c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let r = integrate_path(|z| z.exp(), &seg, &opts).unwrap();
        assert!((r.value - (std::f64::consts::E - 1.0)).norm() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let circle = Path::circle(c(0.0, 0.0), 1.0);
        let opts = QuadOptions {
            tol: 1e-30,
            max_evals: 200,
        };
        let r = integrate_path(|z| (z * 40.0).exp(), &circle, &opts);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn big_circle_moments() {
        let bps = BranchpointSet::from_upper(&[c(0.0, 1.0), c(1.0, 0.8), c(2.0, 0.6)]).unwrap();
        let arcs = ArcSystem::build(&bps, &[], &[]).unwrap();
        let circle = Path::circle(c(0.0, 0.0), 100.0);
        let opts = QuadOptions::default();
        let m0 = loop_moment(&arcs, &circle, 0, &opts).unwrap().value;
        let m2 = loop_moment(&arcs, &circle, 2, &opts).unwrap().value;
        assert!(m0.norm() < 1e-10);
        assert!((m2 - c(0.0, 2.0 * PI)).norm() < 1e-9);
    }

    #[test]
    fn pv_of_constant_matches_log() {
        let opts = QuadOptions::default();
        let pts = [c(-1.0, 0.0), c(1.0, 0.0)];
        let one = |_: C| Ok(C::new(1.0, 0.0));
        let v = polyline_pv(&pts, c(0.2, 0.0), Some(0), &one, C::new(1.0, 0.0), &opts).unwrap();
        assert!((v - (0.8_f64 / 1.2).ln()).norm() < 1e-13);
    }
}
