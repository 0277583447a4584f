//! Built-in problem data. Every fixture is a tensor-style construction in d
//! dimensions; the stochastic studies use d = 1.

use crate::error::{LabError, Result};
use lattrans::lattice::{GridFunction, GridSpec};
use lattrans::transport::{build_coefficients, SchemeCoefficients};
use std::fmt;
use std::str::FromStr;

/// C^∞ step: 0 for u ≤ 0, 1 for u ≥ 1.
pub fn smooth_step(u: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    f(u) / (f(u) + f(1.0 - u))
}

/// Compactly supported bump on (−r, r) with peak 1 at the origin.
pub fn bump(x: f64, r: f64) -> f64 {
    let s = x / r;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fixture {
    /// V^j = ½ sin x_j, truncated smoothly to |x| ≤ 5; σ = 1 + 0.1 cos x_1.
    Smooth,
    /// V^j = sign(x_j) min(|x_j|, 1)^a, cut off smoothly beyond |x_j| = 1; σ ≡ 1.
    /// div V behaves like |x|^{a−1} near the origin.
    Rough { a: f64 },
    /// V ≡ 0 and constant σ.
    Const { sigma: f64 },
}

pub const ROUGH_EXPONENT: f64 = 0.6;
const U0_WIDTH: f64 = 0.5;
const PHI_RADIUS: f64 = 1.5;

impl Fixture {
    pub fn name(&self) -> &'static str {
        match self {
            Fixture::Smooth => "smooth",
            Fixture::Rough { .. } => "rough",
            Fixture::Const { .. } => "const",
        }
    }

    /// Half-width of the computational box.
    pub fn half_width(&self) -> f64 {
        match self {
            Fixture::Rough { .. } => 4.0,
            _ => 6.0,
        }
    }

    fn velocity_1d(&self, x: f64) -> f64 {
        match *self {
            Fixture::Smooth => 0.5 * x.sin() * smooth_step(5.0 - x.abs()),
            Fixture::Rough { a } => x.signum() * x.abs().min(1.0).powf(a) * smooth_step(2.0 - x.abs()),
            Fixture::Const { .. } => 0.0,
        }
    }

    pub fn velocity(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let cut: f64 = (0..x.len()).filter(|&k| k != j).map(|k| smooth_step(5.0 - x[k].abs())).product();
                self.velocity_1d(x[j]) * cut
            })
            .collect()
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        match *self {
            Fixture::Smooth => 1.0 + 0.1 * x[0].cos(),
            Fixture::Rough { .. } => 1.0,
            Fixture::Const { sigma } => sigma,
        }
    }

    /// Gaussian bump of width 0.5.
    pub fn initial(&self, x: &[f64]) -> f64 {
        (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * U0_WIDTH * U0_WIDTH)).exp()
    }

    /// Test function for weak pairings, centred at `centre` in every direction.
    pub fn test_function(x: &[f64], centre: f64) -> f64 {
        x.iter().map(|&v| bump(v - centre, PHI_RADIUS)).product()
    }

    pub fn build(&self, dim: usize, dx: f64) -> Result<(SchemeCoefficients, GridFunction)> {
        self.build_on(&GridSpec::covering(dim, self.half_width(), dx)?)
    }

    pub fn build_on(&self, spec: &GridSpec) -> Result<(SchemeCoefficients, GridFunction)> {
        Ok(build_coefficients(|x| self.velocity(x), |x| self.sigma(x), |x| self.initial(x), spec)?)
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fixture::Smooth => write!(f, "smooth"),
            Fixture::Rough { a } => write!(f, "rough:{a}"),
            Fixture::Const { sigma } => write!(f, "const:{sigma}"),
        }
    }
}

/// `smooth`, `rough[:a]` (default a = 0.6) or `const[:σ]` (default σ = 1).
impl FromStr for Fixture {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a.parse().map_err(|_| LabError::Config(format!("bad fixture parameter {a:?}"))),
            }
        };
        match name {
            "smooth" if arg.is_none() => Ok(Fixture::Smooth),
            "rough" => {
                let a = num(ROUGH_EXPONENT)?;
                if !(a > 0.0 && a <= 1.0) {
                    return Err(LabError::Config(format!("rough exponent must lie in (0, 1], got {a}")));
                }
                Ok(Fixture::Rough { a })
            }
            "const" => {
                let sigma = num(1.0)?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(LabError::Config(format!("σ must be positive, got {sigma}")));
                }
                Ok(Fixture::Const { sigma })
            }
            _ => Err(LabError::Config(format!("unknown fixture {s:?} (expected smooth, rough[:a], const[:σ])"))),
        }
    }
}
