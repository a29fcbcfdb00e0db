//! Scattering data f(z; x, t) = f0(z) - x z - 2 t z^2.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr};

/// A point where f0 is not analytic, optionally the start of a branch-cut ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub point: Complex64,
    /// Unit direction of the cut ray starting at `point`, if any.
    pub ray: Option<Complex64>,
}

impl Singularity {
    pub fn point(p: Complex64) -> Self {
        Singularity {
            point: p,
            ray: None,
        }
    }

    /// True when the ray is a piece of the real axis. Such cuts are the
    /// Schwarz-reflection jumps the loop integrals are allowed to cross.
    pub fn is_real_axis_ray(&self) -> bool {
        match self.ray {
            Some(d) => self.point.im.abs() < 1e-14 && d.im.abs() < 1e-14,
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringData {
    text: String,
    f0: Expr,
    df0: Expr,
    pub singularities: Vec<Singularity>,
    pub schwarz_symmetric: bool,
}

const SCHWARZ_PROBES: [(f64, f64); 8] = [
    (0.3, 0.7),
    (-1.1, 0.4),
    (2.2, 1.3),
    (-0.6, 2.5),
    (1.7, 0.05),
    (0.0, 1.0),
    (-2.9, 0.9),
    (0.45, 3.1),
];

fn schwarz_holds(f0: &Expr) -> bool {
    SCHWARZ_PROBES.iter().all(|&(re, im)| {
        let z = Complex64::new(re, im);
        match (f0.eval(z), f0.eval(z.conj())) {
            (Ok(a), Ok(b)) => (b - a.conj()).norm() <= 1e-12 * (1.0 + a.norm()),
            _ => true,
        }
    })
}

impl ScatteringData {
    /// Parses f0. Singularities that can be read off the expression structurally
    /// are recorded; the Schwarz flag is set when reflection symmetry holds at
    /// a fixed set of probe points.
    pub fn parse(text: &str) -> Result<Self> {
        let f0 = expr::parse(text)?;
        let df0 = f0.derivative();
        let singularities = f0
            .structural_singularities()
            .into_iter()
            .map(|(point, ray)| Singularity { point, ray })
            .collect();
        let schwarz_symmetric = schwarz_holds(&f0);
        Ok(ScatteringData {
            text: text.to_string(),
            f0,
            df0,
            singularities,
            schwarz_symmetric,
        })
    }

    pub fn zero() -> Self {
        Self::parse("0").expect("literal parses")
    }

    /// f0 = sum_k coeffs[k] z^(first_power + k).
    pub fn polynomial(first_power: u32, coeffs: &[f64]) -> Self {
        let mut text = String::new();
        for (k, c) in coeffs.iter().enumerate() {
            if k > 0 {
                text.push_str(" + ");
            }
            text.push_str(&format!("({c:?})*z^{}", first_power as usize + k));
        }
        if text.is_empty() {
            text.push('0');
        }
        Self::parse(&text).expect("generated polynomial parses")
    }

    /// Adds user-declared singularities.
    pub fn with_singularities(mut self, extra: &[Singularity]) -> Self {
        self.singularities.extend_from_slice(extra);
        self
    }

    /// Asserts Schwarz symmetry; fails if sampling contradicts it.
    pub fn assert_schwarz(mut self) -> Result<Self> {
        if !schwarz_holds(&self.f0) {
            return Err(Error::Invalid(format!(
                "f0 = {} is not Schwarz-symmetric",
                self.text
            )));
        }
        self.schwarz_symmetric = true;
        Ok(self)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn expr(&self) -> &Expr {
        &self.f0
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.f0, Expr::Const(c) if c == Complex64::new(0.0, 0.0))
    }

    fn guard(&self, z: Complex64) -> Result<()> {
        for s in &self.singularities {
            if (z - s.point).norm() <= 1e-12 * (1.0 + s.point.norm()) {
                return Err(Error::Singular { z });
            }
        }
        Ok(())
    }

    pub fn eval_f0(&self, z: Complex64) -> Result<Complex64> {
        self.guard(z)?;
        self.f0.eval(z)
    }

    pub fn eval_f(&self, z: Complex64, x: f64, t: f64) -> Result<Complex64> {
        Ok(self.eval_f0(z)? - x * z - 2.0 * t * z * z)
    }

    pub fn eval_f_prime(&self, z: Complex64, x: f64, t: f64) -> Result<Complex64> {
        self.guard(z)?;
        Ok(self.df0.eval(z)? - x - 4.0 * t * z)
    }
}
