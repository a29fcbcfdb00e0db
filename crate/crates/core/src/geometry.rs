//! Branchpoints, branch cuts, loop contours and the radical R(z).
//!
//! Indexing follows the usual convention: `all()[2k]` are the upper points
//! alpha_{2k}, `all()[2k+1]` their partners (conjugates for Schwarz sets).
//! Main pieces: alpha_1 -> alpha_0, alpha_{4k-2} -> alpha_{4k},
//! alpha_{4k+1} -> alpha_{4k-1}. Complementary pieces: alpha_{4k-4} ->
//! alpha_{4k-2}, alpha_{4k-1} -> alpha_{4k-3}.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::Singularity;

const I: C = C { re: 0.0, im: 1.0 };
/// Largest opening angle of a single arc segment.
const MAX_ARC_ANGLE: f64 = PI / 8.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchpointSet {
    n: usize,
    all: Vec<C>,
}

impl BranchpointSet {
    /// Builds the set from alpha_0, alpha_2, ..., alpha_{4N} with implied conjugates.
    pub fn from_upper(upper: &[C]) -> Result<Self> {
        if upper.len().is_multiple_of(2) {
            return Err(Error::Branchpoints(format!(
                "expected an odd number 2N+1 of upper branchpoints, got {}",
                upper.len()
            )));
        }
        let all = upper.iter().flat_map(|&a| [a, a.conj()]).collect();
        Self::from_all(all)
    }

    /// Builds the set from all 4N+2 points; the odd partners need not be conjugates.
    pub fn from_all(all: Vec<C>) -> Result<Self> {
        if all.len() < 2 || !(all.len() - 2).is_multiple_of(4) {
            return Err(Error::Branchpoints(format!(
                "expected 4N+2 branchpoints, got {}",
                all.len()
            )));
        }
        for (i, a) in all.iter().enumerate() {
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::Branchpoints(format!("alpha_{i} is not finite")));
            }
            let ok = if i % 2 == 0 { a.im > 0.0 } else { a.im < 0.0 };
            if !ok {
                return Err(Error::Branchpoints(format!(
                    "alpha_{i} = {a} is in the wrong half-plane"
                )));
            }
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if (all[i] - all[j]).norm() <= 1e-10 {
                    return Err(Error::Branchpoints(format!(
                        "alpha_{i} and alpha_{j} coincide"
                    )));
                }
            }
        }
        Ok(BranchpointSet {
            n: (all.len() - 2) / 4,
            all,
        })
    }

    pub fn genus_param(&self) -> usize {
        self.n
    }

    pub fn all(&self) -> &[C] {
        &self.all
    }

    pub fn alpha(&self, i: usize) -> C {
        self.all[i]
    }

    pub fn upper(&self) -> Vec<C> {
        self.all.iter().step_by(2).copied().collect()
    }

    /// Moves a single branchpoint, leaving its partner in place.
    pub fn with_alpha(&self, i: usize, value: C) -> Result<Self> {
        let mut all = self.all.clone();
        all[i] = value;
        Self::from_all(all)
    }

    /// Moves alpha_{2j} together with its conjugate partner.
    pub fn with_upper(&self, j: usize, value: C) -> Result<Self> {
        let mut all = self.all.clone();
        all[2 * j] = value;
        all[2 * j + 1] = value.conj();
        Self::from_all(all)
    }

    pub fn is_schwarz(&self) -> bool {
        self.all
            .chunks(2)
            .all(|p| (p[1] - p[0].conj()).norm() <= 1e-14 * (1.0 + p[0].norm()))
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.all.len() {
            for j in i + 1..self.all.len() {
                best = best.min((self.all[i] - self.all[j]).norm());
            }
        }
        best
    }

    /// max |alpha|, never below 1.
    pub fn scale(&self) -> f64 {
        self.all.iter().fold(1.0_f64, |m, a| m.max(a.norm()))
    }

    pub fn sum(&self) -> C {
        self.all.iter().sum()
    }

    fn hash_into(&self, h: &mut impl Hasher) {
        for a in &self.all {
            a.re.to_bits().hash(h);
            a.im.to_bits().hash(h);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Line {
        a: C,
        b: C,
    },
    /// Points center + radius * exp(i theta), theta from theta0 to theta1.
    Arc {
        center: C,
        radius: f64,
        theta0: f64,
        theta1: f64,
    },
}

fn cis(theta: f64) -> C {
    C::new(theta.cos(), theta.sin())
}

fn wrap_angle(t: f64) -> f64 {
    let mut t = t % (2.0 * PI);
    if t < 0.0 {
        t += 2.0 * PI;
    }
    t
}

fn dist_point_line(z: C, a: C, b: C) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let s = ((z - a) * d.conj()).re / len2;
    let s = s.clamp(0.0, 1.0);
    (z - (a + d * s)).norm()
}

fn cross(a: C, b: C) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Closed-segment intersection test.
fn segments_intersect(p1: C, p2: C, q1: C, q2: C) -> bool {
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let eps = 1e-14 * (1.0 + p1.norm() + p2.norm() + q1.norm() + q2.norm());
    (d1.abs() <= eps && dist_point_line(p1, q1, q2) <= eps)
        || (d2.abs() <= eps && dist_point_line(p2, q1, q2) <= eps)
        || (d3.abs() <= eps && dist_point_line(q1, p1, p2) <= eps)
        || (d4.abs() <= eps && dist_point_line(q2, p1, p2) <= eps)
}

impl Segment {
    pub fn start(&self) -> C {
        self.point(0.0)
    }

    pub fn end(&self) -> C {
        self.point(1.0)
    }

    pub fn point(&self, s: f64) -> C {
        match *self {
            Segment::Line { a, b } => {
                if s == 1.0 {
                    b
                } else {
                    a + (b - a) * s
                }
            }
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => center + radius * cis(theta0 + (theta1 - theta0) * s),
        }
    }

    /// d(point)/ds.
    pub fn tangent(&self, s: f64) -> C {
        match *self {
            Segment::Line { a, b } => b - a,
            Segment::Arc {
                radius,
                theta0,
                theta1,
                ..
            } => I * (theta1 - theta0) * radius * cis(theta0 + (theta1 - theta0) * s),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { a, b } => (b - a).norm(),
            Segment::Arc {
                radius,
                theta0,
                theta1,
                ..
            } => radius * (theta1 - theta0).abs(),
        }
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { a, b } => Segment::Line { a: b, b: a },
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => Segment::Arc {
                center,
                radius,
                theta0: theta1,
                theta1: theta0,
            },
        }
    }

    /// Splits at parameter s into two segments.
    pub fn split(&self, s: f64) -> (Segment, Segment) {
        match *self {
            Segment::Line { a, b } => {
                let m = self.point(s);
                (Segment::Line { a, b: m }, Segment::Line { a: m, b })
            }
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let tm = theta0 + (theta1 - theta0) * s;
                (
                    Segment::Arc {
                        center,
                        radius,
                        theta0,
                        theta1: tm,
                    },
                    Segment::Arc {
                        center,
                        radius,
                        theta0: tm,
                        theta1,
                    },
                )
            }
        }
    }

    fn arc_contains_angle(theta0: f64, theta1: f64, phi: f64) -> bool {
        let span = theta1 - theta0;
        let off = if span >= 0.0 {
            wrap_angle(phi - theta0)
        } else {
            wrap_angle(theta0 - phi)
        };
        off <= span.abs()
    }

    pub fn distance_to(&self, z: C) -> f64 {
        match *self {
            Segment::Line { a, b } => dist_point_line(z, a, b),
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let w = z - center;
                if w.norm() > 0.0 && Self::arc_contains_angle(theta0, theta1, w.arg()) {
                    (w.norm() - radius).abs()
                } else {
                    (z - self.start()).norm().min((z - self.end()).norm())
                }
            }
        }
    }

    /// True if `z` lies in the region bounded by the arc and its chord.
    fn in_circular_segment(&self, z: C) -> bool {
        match *self {
            Segment::Line { .. } => false,
            Segment::Arc { center, radius, .. } => {
                if (z - center).norm() > radius {
                    return false;
                }
                let (a, b) = (self.start(), self.end());
                let mid = self.point(0.5);
                cross(b - a, z - a) * cross(b - a, mid - a) >= 0.0
            }
        }
    }

    /// Change of arg(zeta - z) along the segment.
    fn winding_angle(&self, z: C) -> f64 {
        let (a, b) = (self.start(), self.end());
        let chord = ((b - z) / (a - z)).arg();
        match *self {
            Segment::Line { .. } => chord,
            Segment::Arc { theta0, theta1, .. } => {
                if self.in_circular_segment(z) {
                    chord + 2.0 * PI * (theta1 - theta0).signum()
                } else {
                    chord
                }
            }
        }
    }

    /// Parameters in (0, 1) where the segment crosses the real axis.
    pub fn real_crossings(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match *self {
            Segment::Line { a, b } => {
                if (a.im < 0.0 && b.im > 0.0) || (a.im > 0.0 && b.im < 0.0) {
                    out.push(a.im / (a.im - b.im));
                }
            }
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                // center.im + radius sin(theta) = 0
                let v = -center.im / radius;
                if v.abs() < 1.0 {
                    let base = v.asin();
                    for root in [base, PI - base] {
                        for shift in [-4.0, -2.0, 0.0, 2.0, 4.0] {
                            let th = root + shift * PI;
                            let s = (th - theta0) / (theta1 - theta0);
                            if s > 1e-12 && s < 1.0 - 1e-12 {
                                out.push(s);
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    fn chunks(&self) -> Vec<(C, C)> {
        match self {
            Segment::Line { a, b } => vec![(*a, *b)],
            Segment::Arc { .. } => (0..4)
                .map(|q| (self.point(q as f64 / 4.0), self.point((q + 1) as f64 / 4.0)))
                .collect(),
        }
    }

    fn hash_into(&self, h: &mut impl Hasher) {
        let nums: [f64; 4] = match *self {
            Segment::Line { a, b } => [a.re, a.im, b.re, b.im],
            Segment::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => [center.re + 7.0 * radius, center.im, theta0, theta1],
        };
        matches!(self, Segment::Arc { .. }).hash(h);
        for v in nums {
            v.to_bits().hash(h);
        }
    }
}

fn arc_pieces(center: C, radius: f64, theta0: f64, sweep: f64) -> Vec<Segment> {
    let n = ((sweep.abs() / MAX_ARC_ANGLE).ceil() as usize).max(1);
    (0..n)
        .map(|q| Segment::Arc {
            center,
            radius,
            theta0: theta0 + sweep * q as f64 / n as f64,
            theta1: theta0 + sweep * (q + 1) as f64 / n as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub segments: Vec<Segment>,
    pub closed: bool,
}

impl Path {
    pub fn new(segments: Vec<Segment>, closed: bool) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Geometry("empty path".into()));
        }
        for w in segments.windows(2) {
            let gap = (w[0].end() - w[1].start()).norm();
            if gap > 1e-14 * (1.0 + w[0].end().norm()) * 100.0 {
                return Err(Error::Geometry(format!(
                    "path segments do not join (gap {gap:e})"
                )));
            }
        }
        if closed {
            let gap = (segments[segments.len() - 1].end() - segments[0].start()).norm();
            if gap > 1e-12 * (1.0 + segments[0].start().norm()) {
                return Err(Error::Geometry(format!(
                    "closed path does not close (gap {gap:e})"
                )));
            }
        }
        Ok(Path { segments, closed })
    }

    pub fn polyline(points: &[C]) -> Result<Self> {
        let segs = points
            .windows(2)
            .map(|w| Segment::Line { a: w[0], b: w[1] })
            .collect();
        Self::new(segs, false)
    }

    /// Counterclockwise circle split into short arcs.
    pub fn circle(center: C, radius: f64) -> Self {
        Path {
            segments: arc_pieces(center, radius, 0.0, 2.0 * PI),
            closed: true,
        }
    }

    pub fn reversed(&self) -> Path {
        Path {
            segments: self.segments.iter().rev().map(|s| s.reversed()).collect(),
            closed: self.closed,
        }
    }

    pub fn start(&self) -> C {
        self.segments[0].start()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    pub fn distance_to(&self, z: C) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(z))
            .fold(f64::INFINITY, f64::min)
    }

    /// Winding number of a closed path about `z`.
    pub fn winding_number(&self, z: C) -> Result<i32> {
        if !self.closed {
            return Err(Error::Geometry("winding number of an open path".into()));
        }
        if self.distance_to(z) <= 1e-12 * (1.0 + z.norm()) {
            return Err(Error::OnContour { z });
        }
        let total: f64 = self.segments.iter().map(|s| s.winding_angle(z)).sum();
        Ok((total / (2.0 * PI)).round() as i32)
    }

    pub fn signed_area(&self) -> f64 {
        // Green's theorem on a fine polygonal approximation.
        let mut area = 0.0;
        for seg in &self.segments {
            let n = match seg {
                Segment::Line { .. } => 1,
                Segment::Arc { .. } => 16,
            };
            for q in 0..n {
                let a = seg.point(q as f64 / n as f64);
                let b = seg.point((q + 1) as f64 / n as f64);
                area += 0.5 * cross(a, b);
            }
        }
        area
    }

    /// Points spaced uniformly in arclength, including the start point.
    pub fn sample(&self, count: usize) -> Vec<C> {
        let total = self.length();
        let mut out = Vec::with_capacity(count);
        let mut seg = 0;
        let mut before = 0.0;
        for q in 0..count {
            let denom = if self.closed {
                count
            } else {
                count.saturating_sub(1).max(1)
            };
            let target = total * q as f64 / denom as f64;
            while seg + 1 < self.segments.len() && before + self.segments[seg].length() < target {
                before += self.segments[seg].length();
                seg += 1;
            }
            let len = self.segments[seg].length();
            let s = if len > 0.0 {
                ((target - before) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push(self.segments[seg].point(s));
        }
        out
    }

    /// Polyline approximation for export.
    pub fn to_polyline(&self, per_arc: usize) -> Vec<C> {
        let mut pts = vec![self.start()];
        for seg in &self.segments {
            let n = match seg {
                Segment::Line { .. } => 1,
                Segment::Arc { .. } => per_arc.max(1),
            };
            for q in 1..=n {
                pts.push(seg.point(q as f64 / n as f64));
            }
        }
        pts
    }

    fn chunks(&self) -> Vec<(usize, C, C)> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.chunks().into_iter().map(move |(a, b)| (i, a, b)))
            .collect()
    }

    /// True if two non-adjacent segments of a closed path meet.
    fn self_intersects(&self) -> bool {
        let ch = self.chunks();
        let n = self.segments.len();
        for p in 0..ch.len() {
            for q in p + 1..ch.len() {
                let (i, a1, b1) = ch[p];
                let (j, a2, b2) = ch[q];
                let adjacent =
                    i == j || j == i + 1 || (self.closed && i == 0 && j == n - 1) || q == p + 1;
                if adjacent {
                    continue;
                }
                if segments_intersect(a1, b1, a2, b2) {
                    return true;
                }
            }
        }
        false
    }

    /// True if the ray `p + s d`, s >= 0, meets the path.
    fn meets_ray(&self, p: C, d: C, reach: f64) -> bool {
        let far = p + d * reach;
        self.chunks()
            .iter()
            .any(|&(_, a, b)| segments_intersect(a, b, p, far))
    }

    /// Splits arcs until no branchpoint lies between an arc and its chord.
    fn refined_for(&self, alphas: &[C]) -> Result<Path> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut stack: Vec<(Segment, usize)> =
            self.segments.iter().rev().map(|s| (*s, 0)).collect();
        while let Some((seg, depth)) = stack.pop() {
            for a in alphas {
                if seg.distance_to(*a) <= 1e-12 * (1.0 + a.norm()) {
                    return Err(Error::Geometry(format!(
                        "path passes through branchpoint {a}"
                    )));
                }
            }
            if alphas.iter().any(|a| seg.in_circular_segment(*a)) {
                if depth > 40 {
                    return Err(Error::Geometry(
                        "cannot separate arc from branchpoint".into(),
                    ));
                }
                let (l, r) = seg.split(0.5);
                stack.push((r, depth + 1));
                stack.push((l, depth + 1));
            } else {
                out.push(seg);
            }
        }
        Ok(Path {
            segments: out,
            closed: self.closed,
        })
    }

    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in &self.segments {
            s.hash_into(&mut h);
        }
        self.closed.hash(&mut h);
        h.finish()
    }
}

/// sum_i Log((z - a_i)/(w - a_i)).
fn log_ratio_sum(alphas: &[C], z: C, w: C) -> C {
    alphas.iter().map(|a| ((z - a) / (w - a)).ln()).sum()
}

/// sqrt((z - p_0)(z - p_last)) with its cut exactly on the polyline and
/// behaving like z at infinity.
pub fn cut_factor(points: &[C], z: C) -> C {
    let mut acc = C::new(0.0, 0.0);
    for w in points.windows(2) {
        acc += ((z - w[1]) / (z - w[0])).ln();
    }
    (z - points[0]) * (0.5 * acc).exp()
}

/// Boundary value of `cut_factor` at a point of segment `seg`; side +1 is the
/// left of the polyline's orientation.
fn cut_factor_boundary(points: &[C], z: C, seg: usize, side: f64) -> C {
    let mut acc = C::new(0.0, 0.0);
    for (k, w) in points.windows(2).enumerate() {
        let r = (z - w[1]) / (z - w[0]);
        acc += if k == seg {
            C::new(r.norm().ln(), side * PI)
        } else {
            r.ln()
        };
    }
    (z - points[0]) * (0.5 * acc).exp()
}

/// Analytic continuation of R along a path, stored as R at each segment start.
#[derive(Debug, Clone)]
pub struct Continuation {
    alphas: Vec<C>,
    path: Path,
    starts: Vec<C>,
    r_starts: Vec<C>,
    hash: u64,
}

impl Continuation {
    /// `r0` is the value of R at the path start.
    pub fn new(bps: &BranchpointSet, path: &Path, r0: C) -> Result<Self> {
        let alphas = bps.all().to_vec();
        let path = path.refined_for(&alphas)?;
        let mut starts = Vec::with_capacity(path.segments.len());
        let mut r_starts = Vec::with_capacity(path.segments.len());
        let mut r = r0;
        let mut prev = path.start();
        for seg in &path.segments {
            let s = seg.start();
            if s != prev {
                r *= (0.5 * log_ratio_sum(&alphas, s, prev)).exp();
            }
            starts.push(s);
            r_starts.push(r);
            let e = seg.end();
            r *= (0.5 * log_ratio_sum(&alphas, e, s)).exp();
            prev = e;
        }
        let mut h = DefaultHasher::new();
        path.content_hash().hash(&mut h);
        bps.hash_into(&mut h);
        r0.re.to_bits().hash(&mut h);
        r0.im.to_bits().hash(&mut h);
        let hash = h.finish();
        Ok(Continuation {
            alphas,
            path,
            starts,
            r_starts,
            hash,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// R at a point of segment `seg`.
    pub fn r_at(&self, seg: usize, z: C) -> C {
        self.r_starts[seg] * (0.5 * log_ratio_sum(&self.alphas, z, self.starts[seg])).exp()
    }

    /// Value reached after traversing the whole path.
    pub fn end_value(&self) -> C {
        let last = self.path.segments.len() - 1;
        self.r_at(last, self.path.segments[last].end())
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }
}

/// An oriented cut or complementary piece: a polyline from alpha_from to alpha_to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcPiece {
    pub from: usize,
    pub to: usize,
    pub points: Vec<C>,
}

impl ArcPiece {
    pub fn path(&self) -> Path {
        Path::polyline(&self.points).expect("arc polyline")
    }

    pub fn distance_to(&self, z: C) -> f64 {
        self.points
            .windows(2)
            .map(|w| dist_point_line(z, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Midpoint of the longest segment.
    fn midpoint(&self) -> (usize, C) {
        let mut best = 0;
        for k in 1..self.points.len() - 1 {
            if (self.points[k + 1] - self.points[k]).norm()
                > (self.points[best + 1] - self.points[best]).norm()
            {
                best = k;
            }
        }
        (best, 0.5 * (self.points[best] + self.points[best + 1]))
    }
}

/// Interior vertices of a user-supplied arc shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomArc {
    /// "main" or "comp".
    pub kind: String,
    /// Arc number k (main 0..=N, comp 1..=N).
    pub index: usize,
    /// Upper-half-plane interior points in traversal order; the lower piece is
    /// the Schwarz reflection. For main arc 0 these run from the real axis up
    /// towards alpha_0.
    pub via: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArcSystem {
    pub bps: BranchpointSet,
    /// main_arcs[0] has one piece, the others two (upper, lower).
    pub main_arcs: Vec<Vec<ArcPiece>>,
    pub comp_arcs: Vec<Vec<ArcPiece>>,
}

fn upper_piece(a: C, via: &[C], b: C) -> Vec<C> {
    let mut pts = vec![a];
    pts.extend_from_slice(via);
    pts.push(b);
    pts
}

impl ArcSystem {
    pub fn build(bps: &BranchpointSet, custom: &[CustomArc], sing: &[Singularity]) -> Result<Self> {
        let n = bps.genus_param();
        let al = bps.all();
        let via_for = |kind: &str, k: usize| -> Vec<C> {
            custom
                .iter()
                .find(|c| c.kind == kind && c.index == k)
                .map(|c| c.via.iter().map(|p| C::new(p[0], p[1])).collect())
                .unwrap_or_default()
        };
        for c in custom {
            let valid = match c.kind.as_str() {
                "main" => c.index <= n,
                "comp" => c.index >= 1 && c.index <= n,
                _ => false,
            };
            if !valid {
                return Err(Error::Geometry(format!(
                    "custom arc '{}' {} does not exist for N = {n}",
                    c.kind, c.index
                )));
            }
            let lowest = if c.kind == "main" && c.index == 0 {
                0.0
            } else {
                1e-300
            };
            if c.via.iter().any(|p| p[1] < lowest) {
                return Err(Error::Geometry(
                    "custom arc points must lie in the upper half-plane".into(),
                ));
            }
        }
        let lower = |pts: &[C]| -> Vec<C> { pts.iter().map(|p| p.conj()).collect() };

        let v0 = via_for("main", 0);
        let mut m0 = vec![al[1]];
        let mut lower_half: Vec<C> = v0.iter().rev().map(|p| p.conj()).collect();
        if let (Some(l), Some(u)) = (lower_half.last(), v0.first()) {
            if (l - u).norm() == 0.0 {
                lower_half.pop();
            }
        }
        m0.extend(lower_half);
        m0.extend(v0.iter().copied());
        m0.push(al[0]);
        let mut main_arcs = vec![vec![ArcPiece {
            from: 1,
            to: 0,
            points: m0,
        }]];
        let mut comp_arcs = Vec::with_capacity(n);
        for k in 1..=n {
            let v = via_for("main", k);
            let up = upper_piece(al[4 * k - 2], &v, al[4 * k]);
            // lower piece runs alpha_{4k+1} -> alpha_{4k-1}: reflection of the upper one reversed
            let mut lo = lower(&up);
            lo.reverse();
            lo[0] = al[4 * k + 1];
            let last = lo.len() - 1;
            lo[last] = al[4 * k - 1];
            main_arcs.push(vec![
                ArcPiece {
                    from: 4 * k - 2,
                    to: 4 * k,
                    points: up,
                },
                ArcPiece {
                    from: 4 * k + 1,
                    to: 4 * k - 1,
                    points: lo,
                },
            ]);
            let v = via_for("comp", k);
            let up = upper_piece(al[4 * k - 4], &v, al[4 * k - 2]);
            let mut lo = lower(&up);
            lo.reverse();
            lo[0] = al[4 * k - 1];
            let last = lo.len() - 1;
            lo[last] = al[4 * k - 3];
            comp_arcs.push(vec![
                ArcPiece {
                    from: 4 * k - 4,
                    to: 4 * k - 2,
                    points: up,
                },
                ArcPiece {
                    from: 4 * k - 1,
                    to: 4 * k - 3,
                    points: lo,
                },
            ]);
        }
        let sys = ArcSystem {
            bps: bps.clone(),
            main_arcs,
            comp_arcs,
        };
        sys.validate(sing)?;
        Ok(sys)
    }

    pub fn main_pieces(&self) -> impl Iterator<Item = &ArcPiece> {
        self.main_arcs.iter().flatten()
    }

    pub fn comp_pieces(&self) -> impl Iterator<Item = &ArcPiece> {
        self.comp_arcs.iter().flatten()
    }

    fn validate(&self, sing: &[Singularity]) -> Result<()> {
        let pieces: Vec<&ArcPiece> = self.main_pieces().chain(self.comp_pieces()).collect();
        let scale = self.bps.scale();
        for (i, p) in pieces.iter().enumerate() {
            for q in pieces.iter().skip(i + 1) {
                let shared: Vec<C> = [p.from, p.to]
                    .iter()
                    .filter(|e| **e == q.from || **e == q.to)
                    .map(|e| self.bps.alpha(*e))
                    .collect();
                for w in p.points.windows(2) {
                    for v in q.points.windows(2) {
                        if !segments_intersect(w[0], w[1], v[0], v[1]) {
                            continue;
                        }
                        let touching = shared.iter().any(|s| {
                            let at_w = *s == w[0] || *s == w[1];
                            let at_v = *s == v[0] || *s == v[1];
                            at_w && at_v && {
                                // only the shared endpoint may be common
                                let dw = if *s == w[0] { w[1] - w[0] } else { w[0] - w[1] };
                                let dv = if *s == v[0] { v[1] - v[0] } else { v[0] - v[1] };
                                cross(dw, dv).abs() > 1e-12 * dw.norm() * dv.norm()
                                    || (dw * dv.conj()).re < 0.0
                            }
                        });
                        if !touching {
                            return Err(Error::Geometry(format!(
                                "arcs alpha_{}->alpha_{} and alpha_{}->alpha_{} intersect",
                                p.from, p.to, q.from, q.to
                            )));
                        }
                    }
                }
            }
            for a in 0..self.bps.all().len() {
                if a != p.from && a != p.to && p.distance_to(self.bps.alpha(a)) <= 1e-10 * scale {
                    return Err(Error::Geometry(format!(
                        "arc alpha_{}->alpha_{} passes through alpha_{a}",
                        p.from, p.to
                    )));
                }
            }
            for s in sing {
                if p.distance_to(s.point) <= 1e-8 * scale {
                    return Err(Error::Geometry(format!(
                        "arc alpha_{}->alpha_{} hits the singularity {}",
                        p.from, p.to, s.point
                    )));
                }
            }
        }
        Ok(())
    }

    fn on_cut(&self, z: C) -> bool {
        let tol = 1e-12 * self.bps.scale();
        self.main_pieces().any(|p| p.distance_to(z) <= tol)
    }

    /// R(z), single-valued off the main arcs, R ~ z^(2N+1) at infinity.
    pub fn radical_r(&self, z: C) -> Result<C> {
        if self.on_cut(z) {
            return Err(Error::OnContour { z });
        }
        Ok(self
            .main_pieces()
            .map(|p| cut_factor(&p.points, z))
            .product())
    }

    /// Boundary value of R on a main arc; side +1 is the left of the arc's
    /// orientation.
    pub fn radical_boundary(&self, z: C, side: f64) -> Result<C> {
        let tol = 1e-12 * self.bps.scale();
        let mut hit = None;
        for (pi, p) in self.main_pieces().enumerate() {
            for (k, w) in p.points.windows(2).enumerate() {
                if dist_point_line(z, w[0], w[1]) <= tol {
                    hit = Some((pi, k));
                }
            }
        }
        let (hp, hk) = hit.ok_or_else(|| Error::Invalid(format!("{z} is not on a main arc")))?;
        Ok(self
            .main_pieces()
            .enumerate()
            .map(|(pi, p)| {
                if pi == hp {
                    cut_factor_boundary(&p.points, z, hk, side)
                } else {
                    cut_factor(&p.points, z)
                }
            })
            .product())
    }

    /// The whole arc chain alpha_{4N+1} ... alpha_1 -> alpha_0 -> ... alpha_{4N}.
    fn chain(&self) -> Vec<C> {
        let n = self.bps.genus_param();
        let mut pieces: Vec<&ArcPiece> = Vec::new();
        for k in (1..=n).rev() {
            pieces.push(&self.main_arcs[k][1]);
            pieces.push(&self.comp_arcs[k - 1][1]);
        }
        pieces.push(&self.main_arcs[0][0]);
        for k in 1..=n {
            pieces.push(&self.comp_arcs[k - 1][0]);
            pieces.push(&self.main_arcs[k][0]);
        }
        let mut pts = vec![pieces[0].points[0]];
        for p in pieces {
            pts.extend_from_slice(&p.points[1..]);
        }
        pts
    }

    /// Main piece ending at branchpoint `idx` (the adjacent cut of a
    /// complementary endpoint).
    fn main_piece_at(&self, idx: usize) -> &ArcPiece {
        self.main_pieces()
            .find(|p| p.from == idx || p.to == idx)
            .expect("every branchpoint ends a main piece")
    }
}

/// Closed counterclockwise offset curve at distance `d` around a polyline.
fn offset_loop(q: &[C], d: f64) -> Result<Vec<Segment>> {
    fn right_side(q: &[C], d: f64, out: &mut Vec<Segment>) -> Result<()> {
        let dirs: Vec<C> = q
            .windows(2)
            .map(|w| (w[1] - w[0]) / (w[1] - w[0]).norm())
            .collect();
        let normal = |u: C| -I * u;
        let mut cur = q[0] + normal(dirs[0]) * d;
        for k in 0..dirs.len() {
            let nk = normal(dirs[k]);
            let end = q[k + 1] + nk * d;
            if k + 1 < dirs.len() {
                let v = q[k + 1];
                let turn = (dirs[k + 1] / dirs[k]).arg();
                if turn > 1e-12 {
                    out.push(Segment::Line { a: cur, b: end });
                    out.extend(arc_pieces(v, d, nk.arg(), turn));
                    cur = v + normal(dirs[k + 1]) * d;
                } else if turn < -1e-12 {
                    let nn = normal(dirs[k + 1]);
                    let c = 1.0 + turn.cos();
                    if c < 0.1 {
                        return Err(Error::Geometry(
                            "arc polyline turns too sharply for an offset loop".into(),
                        ));
                    }
                    let m = v + (nk + nn) * (d / c);
                    out.push(Segment::Line { a: cur, b: m });
                    cur = m;
                } else {
                    out.push(Segment::Line { a: cur, b: end });
                    cur = end;
                }
            } else {
                out.push(Segment::Line { a: cur, b: end });
            }
        }
        Ok(())
    }
    let mut segs = Vec::new();
    let last_dir = (q[q.len() - 1] - q[q.len() - 2]) / (q[q.len() - 1] - q[q.len() - 2]).norm();
    let first_dir = (q[1] - q[0]) / (q[1] - q[0]).norm();
    right_side(q, d, &mut segs)?;
    segs.extend(arc_pieces(q[q.len() - 1], d, (-I * last_dir).arg(), PI));
    let rev: Vec<C> = q.iter().rev().copied().collect();
    right_side(&rev, d, &mut segs)?;
    segs.extend(arc_pieces(q[0], d, (I * first_dir).arg(), PI));
    // snap joints so consecutive segments meet exactly
    for i in 0..segs.len() {
        let next = segs[(i + 1) % segs.len()].start();
        if let Segment::Line { ref mut b, .. } = segs[i] {
            *b = next;
        }
    }
    Ok(segs)
}

/// Rotates a closed segment list so that it starts at `p`, which must lie on a line segment.
fn start_at(mut segs: Vec<Segment>, p: C) -> Result<Vec<Segment>> {
    let idx = segs
        .iter()
        .position(|s| {
            matches!(s, Segment::Line { .. }) && s.distance_to(p) <= 1e-12 * (1.0 + p.norm())
        })
        .ok_or_else(|| Error::Geometry("loop start point not on a straight side".into()))?;
    let Segment::Line { a, b } = segs[idx] else {
        unreachable!()
    };
    let mut out = Vec::with_capacity(segs.len() + 1);
    out.push(Segment::Line { a: p, b });
    out.extend_from_slice(&segs[idx + 1..]);
    out.extend_from_slice(&segs[..idx]);
    out.push(Segment::Line { a, b: p });
    segs.clear();
    Ok(out)
}

#[derive(Debug, Clone)]
enum Sheet {
    Planar,
    /// Inside a complementary loop the sheet has its cut on the complementary
    /// piece only: S = c0 * s_c(z) * Q(z) * prod_{other main pieces} s_P(z).
    Complementary {
        comp: Vec<C>,
        others: Vec<Vec<C>>,
        far: [C; 2],
        p0: C,
        c0: C,
    },
}

/// One closed counterclockwise component of a loop, with its R sheet.
#[derive(Debug, Clone)]
pub struct LoopComponent {
    pub path: Path,
    pub start_r: C,
    sheet: Sheet,
    continuation: Continuation,
}

impl LoopComponent {
    pub fn continuation(&self) -> &Continuation {
        &self.continuation
    }

    /// R continued from the loop into its interior (or planar R for loops that
    /// do not cross a cut).
    pub fn sheet_r(&self, arcs: &ArcSystem, z: C) -> Result<C> {
        match &self.sheet {
            Sheet::Planar => arcs.radical_r(z),
            Sheet::Complementary {
                comp,
                others,
                far,
                p0,
                c0,
            } => {
                let q = (0.5
                    * (((z - far[0]) / (p0 - far[0])).ln() + ((z - far[1]) / (p0 - far[1])).ln()))
                .exp();
                let mut v = *c0 * cut_factor(comp, z) * q;
                for o in others {
                    v *= cut_factor(o, z);
                }
                Ok(v)
            }
        }
    }

    /// Boundary value of the sheet on the cut it carries (the main piece for
    /// planar sheets, the complementary piece otherwise); side +1 is the left
    /// of the piece's orientation.
    pub fn sheet_boundary(&self, arcs: &ArcSystem, z: C, side: f64) -> Result<C> {
        match &self.sheet {
            Sheet::Planar => arcs.radical_boundary(z, side),
            Sheet::Complementary {
                comp,
                others,
                far,
                p0,
                c0,
            } => {
                let tol = 1e-12 * arcs.bps.scale();
                let seg = comp
                    .windows(2)
                    .position(|w| dist_point_line(z, w[0], w[1]) <= tol)
                    .ok_or_else(|| {
                        Error::Invalid(format!("{z} is not on the complementary piece"))
                    })?;
                let q = (0.5
                    * (((z - far[0]) / (p0 - far[0])).ln() + ((z - far[1]) / (p0 - far[1])).ln()))
                .exp();
                let mut v = *c0 * cut_factor_boundary(comp, z, seg, side) * q;
                for o in others {
                    v *= cut_factor(o, z);
                }
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loop {
    pub components: Vec<LoopComponent>,
}

impl Loop {
    pub fn contains(&self, z: C) -> Result<bool> {
        Ok(self.component_containing(z)?.is_some())
    }

    pub fn component_containing(&self, z: C) -> Result<Option<usize>> {
        for (i, c) in self.components.iter().enumerate() {
            if c.path.winding_number(z)? != 0 {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn distance_to(&self, z: C) -> f64 {
        self.components
            .iter()
            .map(|c| c.path.distance_to(z))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Location {
    pub inside_loop_all: bool,
    pub inside_loop_m: Vec<bool>,
    pub inside_loop_c: Vec<bool>,
}

impl Location {
    pub fn is_standard(&self) -> bool {
        self.inside_loop_all
            && !self.inside_loop_m.iter().any(|b| *b)
            && !self.inside_loop_c.iter().any(|b| *b)
    }

    pub fn is_outside(&self) -> bool {
        !self.inside_loop_all
            && !self.inside_loop_m.iter().any(|b| *b)
            && !self.inside_loop_c.iter().any(|b| *b)
    }
}

#[derive(Debug, Clone)]
pub struct ContourSystem {
    pub arcs: ArcSystem,
    pub loops_m: Vec<Loop>,
    pub loops_c: Vec<Loop>,
    pub loop_all: Loop,
    pub margin: f64,
}

/// Default loop offset: 0.15 times the smallest branchpoint distance.
pub fn default_margin(bps: &BranchpointSet) -> f64 {
    0.15 * bps.min_distance()
}

impl ContourSystem {
    pub fn build(arcs: ArcSystem, margin: f64, sing: &[Singularity]) -> Result<Self> {
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::Geometry(format!(
                "margin must be positive, got {margin}"
            )));
        }
        let bps = arcs.bps.clone();
        let planar = |path: Path| -> Result<LoopComponent> {
            let start_r = arcs.radical_r(path.start())?;
            let continuation = Continuation::new(&bps, &path, start_r)?;
            Ok(LoopComponent {
                path: continuation.path().clone(),
                start_r,
                sheet: Sheet::Planar,
                continuation,
            })
        };
        let mut loops_m = Vec::new();
        for arc in arcs.main_arcs.iter().skip(1) {
            let comps = arc
                .iter()
                .map(|p| planar(Path::new(offset_loop(&p.points, margin)?, true)?))
                .collect::<Result<Vec<_>>>()?;
            loops_m.push(Loop { components: comps });
        }
        let mut loops_c = Vec::new();
        for arc in &arcs.comp_arcs {
            let mut comps = Vec::new();
            for p in arc {
                let (k, mid) = p.midpoint();
                let dir = p.points[k + 1] - p.points[k];
                let p0 = mid - I * dir / dir.norm() * margin;
                let segs = start_at(offset_loop(&p.points, margin)?, p0)?;
                let path = Path::new(segs, true)?;
                let start_r = arcs.radical_r(p0)?;
                let continuation = Continuation::new(&bps, &path, start_r)?;
                let pa = arcs.main_piece_at(p.from);
                let pb = arcs.main_piece_at(p.to);
                let far_of = |piece: &ArcPiece, idx: usize| {
                    if piece.from == idx {
                        bps.alpha(piece.to)
                    } else {
                        bps.alpha(piece.from)
                    }
                };
                let others: Vec<Vec<C>> = arcs
                    .main_pieces()
                    .filter(|m| !std::ptr::eq(*m, pa) && !std::ptr::eq(*m, pb))
                    .map(|m| m.points.clone())
                    .collect();
                let far = [far_of(pa, p.from), far_of(pb, p.to)];
                let mut sheet = Sheet::Complementary {
                    comp: p.points.clone(),
                    others,
                    far,
                    p0,
                    c0: C::new(1.0, 0.0),
                };
                let mut comp = LoopComponent {
                    path: continuation.path().clone(),
                    start_r,
                    sheet: sheet.clone(),
                    continuation,
                };
                let raw = comp.sheet_r(&arcs, p0)?;
                if let Sheet::Complementary { ref mut c0, .. } = sheet {
                    *c0 = start_r / raw;
                }
                comp.sheet = sheet;
                comps.push(comp);
            }
            loops_c.push(Loop { components: comps });
        }
        let chain = arcs.chain();
        let loop_all = Loop {
            components: vec![planar(Path::new(
                offset_loop(&chain, 2.0 * margin)?,
                true,
            )?)?],
        };
        let cs = ContourSystem {
            arcs,
            loops_m,
            loops_c,
            loop_all,
            margin,
        };
        cs.validate(sing)?;
        Ok(cs)
    }

    /// Straight arcs with the default margin.
    pub fn standard(bps: &BranchpointSet) -> Result<Self> {
        let arcs = ArcSystem::build(bps, &[], &[])?;
        Self::build(arcs, default_margin(bps), &[])
    }

    pub fn bps(&self) -> &BranchpointSet {
        &self.arcs.bps
    }

    fn all_loops(&self) -> Vec<(String, &Loop, Vec<usize>)> {
        let n = self.bps().genus_param();
        let mut out = Vec::new();
        for k in 1..=n {
            out.push((
                format!("main loop {k}"),
                &self.loops_m[k - 1],
                self.arcs.main_arcs[k]
                    .iter()
                    .flat_map(|p| [p.from, p.to])
                    .collect(),
            ));
            out.push((
                format!("complementary loop {k}"),
                &self.loops_c[k - 1],
                self.arcs.comp_arcs[k - 1]
                    .iter()
                    .flat_map(|p| [p.from, p.to])
                    .collect(),
            ));
        }
        out.push((
            "outer loop".into(),
            &self.loop_all,
            (0..self.bps().all().len()).collect(),
        ));
        out
    }

    fn validate(&self, sing: &[Singularity]) -> Result<()> {
        let bps = self.bps();
        let reach = 1e3 * bps.scale();
        for (name, lp, own) in self.all_loops() {
            for (ci, comp) in lp.components.iter().enumerate() {
                if comp.path.self_intersects() {
                    return Err(Error::Geometry(format!(
                        "{name} intersects itself; margin too large"
                    )));
                }
                for (i, a) in bps.all().iter().enumerate() {
                    let w = comp.path.winding_number(*a).map_err(|_| {
                        Error::Geometry(format!(
                            "{name} passes through alpha_{i}; margin too large"
                        ))
                    })?;
                    let expected = if lp.components.len() == 1 {
                        own.contains(&i)
                    } else {
                        own[2 * ci..2 * ci + 2].contains(&i)
                    };
                    if w != i32::from(expected) {
                        return Err(Error::Geometry(format!(
                            "{name} has winding {w} about alpha_{i}; margin too large"
                        )));
                    }
                }
                let closure = comp.continuation.end_value();
                if (closure - comp.start_r).norm() > 1e-8 * comp.start_r.norm() {
                    return Err(Error::Geometry(format!(
                        "{name}: R does not return to its start value"
                    )));
                }
                for s in sing {
                    if comp.path.distance_to(s.point) < 0.5 * self.margin {
                        return Err(Error::Geometry(format!(
                            "{name} passes within margin/2 of the singularity {}",
                            s.point
                        )));
                    }
                    if let Some(d) = s.ray {
                        if !s.is_real_axis_ray() && comp.path.meets_ray(s.point, d, reach) {
                            return Err(Error::Geometry(format!(
                                "{name} crosses the branch cut of f0 starting at {}",
                                s.point
                            )));
                        }
                    }
                }
                if let Sheet::Complementary { .. } = comp.sheet {
                    for (k, seg) in comp.path.segments.iter().enumerate() {
                        let z = seg.point(0.5);
                        let cont = comp.continuation.r_at(k, z);
                        let direct = comp.sheet_r(&self.arcs, z)?;
                        if (cont - direct).norm() > 1e-8 * cont.norm() {
                            return Err(Error::Geometry(format!(
                                "{name}: interior sheet does not match the continued radical"
                            )));
                        }
                    }
                }
            }
        }
        for p in self.arcs.main_pieces().chain(self.arcs.comp_pieces()) {
            for s in sing {
                if p.distance_to(s.point) < 0.5 * self.margin {
                    return Err(Error::Geometry(format!(
                        "arc alpha_{}->alpha_{} passes within margin/2 of the singularity {}",
                        p.from, p.to, s.point
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn loop_distance(&self, z: C) -> f64 {
        self.loops_m
            .iter()
            .chain(self.loops_c.iter())
            .chain(std::iter::once(&self.loop_all))
            .map(|l| l.distance_to(z))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn point_location(&self, z: C) -> Result<Location> {
        Ok(Location {
            inside_loop_all: self.loop_all.contains(z)?,
            inside_loop_m: self
                .loops_m
                .iter()
                .map(|l| l.contains(z))
                .collect::<Result<_>>()?,
            inside_loop_c: self
                .loops_c
                .iter()
                .map(|l| l.contains(z))
                .collect::<Result<_>>()?,
        })
    }

    pub fn radical_r(&self, z: C) -> Result<C> {
        self.arcs.radical_r(z)
    }

    /// Whether every arc and loop is invariant under reflection in the real axis.
    pub fn is_schwarz(&self) -> bool {
        if !self.bps().is_schwarz() {
            return false;
        }
        self.arcs
            .main_arcs
            .iter()
            .skip(1)
            .chain(self.arcs.comp_arcs.iter())
            .all(|pair| {
                pair[0]
                    .points
                    .iter()
                    .zip(pair[1].points.iter().rev())
                    .all(|(u, l)| (u.conj() - l).norm() <= 1e-14 * (1.0 + u.norm()))
            })
    }
}

/// R(z) for the default straight cuts.
pub fn radical_r(bps: &BranchpointSet, z: C) -> Result<C> {
    ArcSystem::build(bps, &[], &[])?.radical_r(z)
}

/// R sampled along a path by continuation from planar R at its first point.
pub fn radical_on_path(arcs: &ArcSystem, path: &Path, samples: usize) -> Result<Vec<(C, C)>> {
    let cont = Continuation::new(&arcs.bps, path, arcs.radical_r(path.start())?)?;
    let refined = cont.path();
    let total = refined.length();
    let count = samples.max(2);
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut before = 0.0;
    let denom = if path.closed { count } else { count - 1 };
    for q in 0..count {
        let target = total * q as f64 / denom as f64;
        while seg + 1 < refined.segments.len() && before + refined.segments[seg].length() < target {
            before += refined.segments[seg].length();
            seg += 1;
        }
        let len = refined.segments[seg].length();
        let s = if len > 0.0 {
            ((target - before) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let z = refined.segments[seg].point(s);
        out.push((z, cont.r_at(seg, z)));
    }
    Ok(out)
}
