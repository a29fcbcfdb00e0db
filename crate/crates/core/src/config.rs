//! TOML run configuration shared by every subcommand.
//!
//! Complex numbers are written as `[re, im]`. Errors carry the line of the
//! offending key.

use std::path::Path as FsPath;

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EvolveOptions, Sweep};
use crate::geometry::{BranchpointSet, CustomArc};
use crate::modulation::NewtonOptions;
use crate::quadrature::QuadOptions;
use crate::rhp::EngineOptions;
use crate::scattering::{ScatteringData, Singularity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SingularitySpec {
    Point([f64; 2]),
    Ray { point: [f64; 2], ray: [f64; 2] },
}

impl SingularitySpec {
    fn to_singularity(&self) -> Singularity {
        match self {
            SingularitySpec::Point(p) => Singularity::point(C::new(p[0], p[1])),
            SingularitySpec::Ray { point, ray } => {
                let d = C::new(ray[0], ray[1]);
                Singularity {
                    point: C::new(point[0], point[1]),
                    ray: Some(d / d.norm()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub margin: Option<f64>,
    pub custom_arcs: Vec<CustomArc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: Option<Format>,
    pub path: Option<String>,
}

/// Rectangular z-grid for `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Run Newton before sampling instead of using the given branchpoints.
    #[serde(default)]
    pub solve_first: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    /// Run Newton first; by default the suite checks the configuration as given.
    pub solve_first: bool,
    pub residual_tol: f64,
    pub jump_samples: usize,
    pub jump_tol: f64,
    pub growth_tol: f64,
    pub lemma_step: f64,
    pub lemma_tol: f64,
    pub theorem_step: f64,
    pub theorem_tol: f64,
    pub cj_tol: f64,
    pub wronskian_tol: f64,
    pub segment_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            solve_first: false,
            residual_tol: 1e-10,
            jump_samples: 8,
            jump_tol: 1e-6,
            growth_tol: 1e-6,
            lemma_step: 1e-6,
            lemma_tol: 1e-5,
            theorem_step: 1e-6,
            theorem_tol: 1e-5,
            cj_tol: 1e-7,
            wronskian_tol: 1e-7,
            segment_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub f0: String,
    #[serde(default)]
    pub singularities: Vec<SingularitySpec>,
    /// N; optional, checked against the branchpoint count when given.
    #[serde(default)]
    pub genus_param: Option<usize>,
    /// Either the 2N+1 upper branchpoints alpha_0, alpha_2, ... (conjugates
    /// implied) or all 4N+2 in index order.
    pub initial_alphas: Vec<[f64; 2]>,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub quad: QuadOptions,
    #[serde(default)]
    pub newton: NewtonOptions,
    #[serde(default)]
    pub evolve: EvolveOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub sample: Option<GridSpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// 1-based line of the first `key = ...` assignment, if present.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

fn at(text: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    match line_of(text, key) {
        Some(l) => Error::Config(format!("line {l}: {key}: {msg}")),
        None => Error::Config(format!("{key}: {msg}")),
    }
}

impl RunConfig {
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; every module input is built once here so that a
    /// config that loads cannot fail later on a malformed value.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    fn validate(&self, text: &str) -> Result<()> {
        if let Err(e) = ScatteringData::parse(&self.f0) {
            return Err(at(text, "f0", e));
        }
        if let Err(e) = self.branchpoints() {
            return Err(at(text, "initial_alphas", e));
        }
        for (key, v) in [("x", self.x), ("t", self.t)] {
            if !v.is_finite() {
                return Err(at(text, key, "must be finite"));
            }
        }
        if let Some(m) = self.geometry.margin {
            if !(m.is_finite() && m > 0.0) {
                return Err(at(text, "margin", "must be positive"));
            }
        }
        if self.quad.tol.is_nan() || self.quad.tol <= 0.0 || self.quad.max_evals == 0 {
            return Err(at(
                text,
                "tol",
                "quad.tol and quad.max_evals must be positive",
            ));
        }
        if self.newton.tol.is_nan() || self.newton.tol <= 0.0 {
            return Err(at(text, "tol", "newton.tol must be positive"));
        }
        if let Some(s) = &self.sweep {
            if !(s.step > 0.0 && s.from.is_finite() && s.to.is_finite()) {
                return Err(at(
                    text,
                    "step",
                    "sweep needs finite bounds and a positive step",
                ));
            }
        }
        if let Some(g) = &self.sample {
            if g.nx == 0 || g.ny == 0 || g.re.iter().chain(&g.im).any(|v| !v.is_finite()) {
                return Err(at(text, "nx", "grid needs finite bounds and nx, ny >= 1"));
            }
        }
        for s in &self.singularities {
            if let SingularitySpec::Ray { ray, .. } = s {
                if ray[0] == 0.0 && ray[1] == 0.0 {
                    return Err(at(text, "singularities", "ray direction must be nonzero"));
                }
            }
        }
        Ok(())
    }

    pub fn branchpoints(&self) -> Result<BranchpointSet> {
        let pts: Vec<C> = self
            .initial_alphas
            .iter()
            .map(|p| C::new(p[0], p[1]))
            .collect();
        let bps = if pts.len() % 2 == 1 {
            BranchpointSet::from_upper(&pts)?
        } else {
            BranchpointSet::from_all(pts)?
        };
        if let Some(n) = self.genus_param {
            if n != bps.genus_param() {
                return Err(Error::Config(format!(
                    "genus_param = {n} but {} branchpoints imply N = {}",
                    self.initial_alphas.len(),
                    bps.genus_param()
                )));
            }
        }
        Ok(bps)
    }

    pub fn scattering(&self) -> Result<ScatteringData> {
        let extra: Vec<Singularity> = self
            .singularities
            .iter()
            .map(|s| s.to_singularity())
            .collect();
        Ok(ScatteringData::parse(&self.f0)?.with_singularities(&extra))
    }

    pub fn engine(&self) -> EngineOptions {
        EngineOptions {
            quad: self.quad,
            margin: self.geometry.margin,
            custom_arcs: self.geometry.custom_arcs.clone(),
        }
    }

    /// Same config with other branchpoints (used to echo solved values).
    pub fn with_alphas(&self, bps: &BranchpointSet) -> Self {
        let mut c = self.clone();
        c.initial_alphas = bps.upper().iter().map(|a| [a.re, a.im]).collect();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const F1: &str = r#"
f0 = "z^3"
initial_alphas = [[0, 1], [1, 0.8], [2, 0.6]]
x = 0.3
t = 0.1
"#;

    #[test]
    fn minimal_config_loads_with_defaults() {
        let cfg = RunConfig::parse(F1).unwrap();
        assert_eq!(cfg.branchpoints().unwrap().genus_param(), 1);
        assert_eq!(cfg.newton, NewtonOptions::default());
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn bad_expression_reports_line_and_position() {
        let text = F1.replace("z^3", "z^^3");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("position"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = format!("{F1}\n[quad]\ntoll = 1e-9\n");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("toll") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn genus_mismatch_is_rejected() {
        let text = format!("genus_param = 2\n{F1}");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn json_echo_round_trips() {
        let text = format!("{F1}\nsingularities = [[5, 0], {{ point = [6, 0], ray = [1, 0] }}]\n[sweep]\naxis = \"x\"\nfrom = 0.3\nto = 0.35\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
