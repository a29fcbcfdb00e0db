//! g, h and K on a rectangular z-grid.

use num_complex::Complex64 as C;
use serde::Serialize;

use crate::config::GridSpec;
use crate::error::{Error, Result};
use crate::par;
use crate::report::fmt_f64;
use crate::rhp::RhpSolution;
use crate::SCHEMA_VERSION;

/// Grid points closer than this to a loop, an arc or a branchpoint are skipped.
pub const CONTOUR_CLEARANCE: f64 = 1e-6;

const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    OnContour,
    Singular,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub z: C,
    pub status: RowStatus,
    pub g: Option<C>,
    pub h: Option<C>,
    pub k: Option<C>,
    pub in_loop_all: bool,
    /// 1-based index of the main / complementary loop containing z, 0 if none.
    pub in_loop_m: usize,
    pub in_loop_c: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub schema_version: u32,
    pub rows: Vec<SampleRow>,
}

/// Row-major grid, real part fastest.
pub fn grid_points(g: &GridSpec) -> Vec<C> {
    let axis = |r: [f64; 2], n: usize, k: usize| {
        if n == 1 {
            r[0]
        } else {
            r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(g.nx * g.ny);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.push(C::new(axis(g.re, g.nx, i), axis(g.im, g.ny, j)));
        }
    }
    out
}

fn on_contour(sol: &RhpSolution, z: C) -> bool {
    let cs = &sol.cs;
    let tol = CONTOUR_CLEARANCE;
    cs.loop_distance(z) < tol
        || cs.bps().all().iter().any(|a| (z - a).norm() < tol)
        || cs
            .arcs
            .main_arcs
            .iter()
            .chain(&cs.arcs.comp_arcs)
            .flatten()
            .any(|p| p.distance_to(z) < tol)
}

fn skipped(z: C, status: RowStatus) -> SampleRow {
    SampleRow {
        z,
        status,
        g: None,
        h: None,
        k: None,
        in_loop_all: false,
        in_loop_m: 0,
        in_loop_c: 0,
    }
}

fn flag(v: &[bool]) -> usize {
    v.iter().position(|b| *b).map_or(0, |i| i + 1)
}

fn eval_chunk(sol: &RhpSolution, zs: &[C]) -> Result<Vec<SampleRow>> {
    let mut rows: Vec<Option<SampleRow>> = zs
        .iter()
        .map(|&z| on_contour(sol, z).then(|| skipped(z, RowStatus::OnContour)))
        .collect();
    // points where f itself cannot be evaluated
    for (row, z) in rows.iter_mut().zip(zs) {
        if row.is_none() && sol.sd.eval_f(*z, sol.x, sol.t).is_err() {
            *row = Some(skipped(*z, RowStatus::Singular));
        }
    }
    let live: Vec<C> = zs
        .iter()
        .zip(&rows)
        .filter(|(_, r)| r.is_none())
        .map(|(z, _)| *z)
        .collect();
    let vals = sol.eval_points(&live)?;
    let mut it = vals.into_iter();
    Ok(rows
        .into_iter()
        .map(|r| {
            r.unwrap_or_else(|| {
                let v = it.next().expect("one value per live point");
                SampleRow {
                    z: v.z,
                    status: RowStatus::Ok,
                    g: Some(v.g),
                    h: Some(v.h),
                    k: Some(v.k),
                    in_loop_all: v.location.inside_loop_all,
                    in_loop_m: flag(&v.location.inside_loop_m),
                    in_loop_c: flag(&v.location.inside_loop_c),
                }
            })
        })
        .collect())
}

/// Evaluates every grid point; chunks run in parallel and are reassembled in
/// grid order.
pub fn sample_grid(sol: &RhpSolution, grid: &GridSpec) -> Result<SampleReport> {
    let pts = grid_points(grid);
    if pts.is_empty() {
        return Err(Error::Invalid("empty grid".into()));
    }
    let chunks: Vec<&[C]> = pts.chunks(CHUNK).collect();
    let rows = par::try_map(&chunks, |c| eval_chunk(sol, c))?
        .into_iter()
        .flatten()
        .collect();
    Ok(SampleReport {
        schema_version: SCHEMA_VERSION,
        rows,
    })
}

pub const CSV_HEADER: &str =
    "re_z,im_z,status,g_re,g_im,h_re,h_im,k_re,k_im,in_loop_all,in_loop_m,in_loop_c";

impl SampleReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let status = match r.status {
                RowStatus::Ok => "ok",
                RowStatus::OnContour => "on_contour",
                RowStatus::Singular => "singular",
            };
            let mut cols = vec![fmt_f64(r.z.re), fmt_f64(r.z.im), status.to_string()];
            for v in [r.g, r.h, r.k] {
                match v {
                    Some(v) => {
                        cols.push(fmt_f64(v.re));
                        cols.push(fmt_f64(v.im));
                    }
                    None => cols.extend([String::new(), String::new()]),
                }
            }
            cols.push((r.in_loop_all as u8).to_string());
            cols.push(r.in_loop_m.to_string());
            cols.push(r.in_loop_c.to_string());
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }
}
