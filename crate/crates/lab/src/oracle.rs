//! Deterministic reference for the mean and the energy density.
//!
//! Taking expectations in the scheme removes the martingale part, so the mean
//! evolves under the drift operator A alone. The continuum energy density
//! E = E[u²] obeys the same advection–diffusion equation, so both are
//! computed by implicit Euler method of lines with A assembled on a fine
//! lattice.

use crate::error::{LabError, Result};
use lattrans::lattice::{Boundary, GridFunction, GridSpec};
use lattrans::linsolve::{bicgstab, Tridiagonal};
use lattrans::transport::{drift, SchemeCoefficients};

/// Cell-steps an oracle run may take before it is refused.
pub const WORK_BUDGET: f64 = 4e9;

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub mean: GridFunction,
    pub energy: GridFunction,
    pub dt: f64,
    pub steps: usize,
}

enum ImplicitSolver {
    Banded(Tridiagonal),
    Iterative { diag: Vec<f64> },
}

/// I − Δt·A, factored once.
struct ImplicitStep<'a> {
    coeffs: &'a SchemeCoefficients,
    dt: f64,
    solver: ImplicitSolver,
}

/// Colour of a cell such that α and α ± e_j always differ.
fn colour(alpha: &[i64]) -> usize {
    alpha.iter().rev().fold(0, |acc, &a| 3 * acc + a.rem_euclid(3) as usize)
}

impl<'a> ImplicitStep<'a> {
    fn new(coeffs: &'a SchemeCoefficients, dt: f64) -> Result<Self> {
        let spec = coeffs.spec();
        let d = spec.dim();
        let colours: Vec<usize> = (0..spec.len()).map(|i| colour(&spec.alpha(i))).collect();
        // A applied to each colour class recovers every stencil entry.
        let probes: Vec<GridFunction> = (0..3usize.pow(d as u32))
            .map(|c| {
                let p = GridFunction::new(spec.clone(), colours.iter().map(|&k| f64::from(u8::from(k == c))).collect());
                p.map(|p| drift(coeffs, &p))
            })
            .collect::<lattrans::Result<_>>()?;
        let n = spec.len();
        let diag: Vec<f64> = (0..n).map(|i| 1.0 - dt * probes[colours[i]].values()[i]).collect();
        let solver = if d == 1 && spec.boundary() == Boundary::ZeroExterior {
            let sub: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { -dt * probes[colours[i - 1]].values()[i] }).collect();
            let sup: Vec<f64> =
                (0..n).map(|i| if i + 1 == n { 0.0 } else { -dt * probes[colours[i + 1]].values()[i] }).collect();
            ImplicitSolver::Banded(Tridiagonal::factor(sub, &diag, &sup)?)
        } else {
            ImplicitSolver::Iterative { diag }
        };
        Ok(ImplicitStep { coeffs, dt, solver })
    }

    fn apply(&self, u: &mut [f64]) -> Result<()> {
        match &self.solver {
            ImplicitSolver::Banded(t) => t.solve(u),
            ImplicitSolver::Iterative { diag } => {
                let spec = self.coeffs.spec().clone();
                let matvec = |x: &[f64], out: &mut [f64]| {
                    let g = GridFunction::new(spec.clone(), x.to_vec()).expect("iterate stays finite");
                    let a = drift(self.coeffs, &g);
                    for ((o, xi), ai) in out.iter_mut().zip(x).zip(a.values()) {
                        *o = xi - self.dt * ai;
                    }
                };
                let rhs = u.to_vec();
                bicgstab(matvec, diag, &rhs, u, 1e-13, 10_000)?;
            }
        }
        Ok(())
    }
}

/// Evolves u0 and u0² to T with implicit Euler. `dt` defaults to Δx².
pub fn mean_energy_oracle(
    coeffs: &SchemeCoefficients,
    u0: &GridFunction,
    horizon: f64,
    dt: Option<f64>,
) -> Result<OracleSolution> {
    let spec = coeffs.spec();
    spec.ensure_same(u0.spec())?;
    let dt = dt.unwrap_or(spec.dx() * spec.dx());
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(LabError::Config(format!("need T > 0 and Δt > 0, got {horizon} and {dt}")));
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let estimate = steps as f64 * spec.len() as f64 * if spec.dim() == 1 { 1.0 } else { 50.0 };
    if estimate > WORK_BUDGET {
        return Err(LabError::Budget { estimate, limit: WORK_BUDGET });
    }
    let dt = horizon / steps as f64;
    let step = ImplicitStep::new(coeffs, dt)?;
    let mut m = u0.values().to_vec();
    let mut e: Vec<f64> = m.iter().map(|v| v * v).collect();
    for _ in 0..steps {
        step.apply(&mut m)?;
        step.apply(&mut e)?;
    }
    Ok(OracleSolution {
        mean: GridFunction::new(spec.clone(), m)?,
        energy: GridFunction::new(spec.clone(), e)?,
        dt,
        steps,
    })
}

/// Cell averages of a field given on the lattice with half the spacing:
/// coarse cell α covers fine cell 2α and half of each of 2α ± e_j.
pub fn restrict_to_coarse(fine: &GridFunction, coarse: &GridSpec) -> Result<GridFunction> {
    let d = coarse.dim();
    if (fine.spec().dx() * 2.0 - coarse.dx()).abs() > 1e-12 * coarse.dx() || fine.spec().dim() != d {
        return Err(LabError::Config("restriction needs a lattice with exactly half the spacing".into()));
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .collect();
    Ok(GridFunction::from_index_fn(coarse, |alpha| {
        let mut fa = vec![0i64; d];
        offsets
            .iter()
            .map(|off| {
                let mut w = 1.0;
                for j in 0..d {
                    fa[j] = 2 * alpha[j] + off[j];
                    w *= if off[j] == 0 { 0.5 } else { 0.25 };
                }
                w * fine.get(&fa)
            })
            .sum()
    }))
}
