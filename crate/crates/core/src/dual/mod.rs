//! Backward dual problem
//!
//!   ∂_t φ + ½Σ_j c^j ∇_+^j∇_−^j φ − Z φ = 0 on [0, T),   φ(T) ≡ 1,
//!
//! solved in forward time τ = T − t. The terminal value is constant on the
//! whole lattice, so the box only carries the deviation w = φ − 1, which
//! decays away from the support of Z and is extended by zero; φ itself is
//! extended by its far-field value 1.


use crate::error::{Error, Result};
use crate::lattice::{
    at, average_plus, conjugate_exponent, dual_upwind_one, lp_norm, GridFunction, GridSpec, NeighborTable, TimeKernel,
    TimeMesh, TimeSeries, VectorGridFunction,
};
use crate::parametrix::VariableCoefficients;
use crate::quadrature::TimeQuadrature;
use crate::linsolve::{bicgstab, Tridiagonal};
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct DualProblem {
    coeffs: VariableCoefficients,
    reaction: GridFunction,
    horizon: f64,
}

impl DualProblem {
    pub fn new(coeffs: VariableCoefficients, reaction: GridFunction, horizon: f64) -> Result<Self> {
        coeffs.spec().ensure_same(reaction.spec())?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(DualProblem { coeffs, reaction, horizon })
    }

    /// The dual of the transport scheme: c^j = σ □_+^j σ and Z = −D'_V(1).
    pub fn for_scheme(sigma: &GridFunction, v: &VectorGridFunction, horizon: f64) -> Result<Self> {
        let (coeffs, z) = dual_coefficients(sigma, v)?;
        DualProblem::new(coeffs, z, horizon)
    }

    pub fn spec(&self) -> &GridSpec {
        self.coeffs.spec()
    }
    pub fn coeffs(&self) -> &VariableCoefficients {
        &self.coeffs
    }
    pub fn reaction(&self) -> &GridFunction {
        &self.reaction
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// dw/dτ = ½Σc∇_+∇_−w − Z(w + 1).
    fn rhs(&self, w: &[f64], nb: &NeighborTable, out: &mut [f64]) {
        let spec = self.spec();
        let inv = 0.5 / (spec.dx() * spec.dx());
        let z = self.reaction.values();
        for (i, o) in out.iter_mut().enumerate() {
            *o = -z[i] * (w[i] + 1.0);
        }
        for (j, cj) in self.coeffs.components().iter().enumerate() {
            let (p, m, c) = (nb.plus(j), nb.minus(j), cj.values());
            for (i, o) in out.iter_mut().enumerate() {
                *o += inv * c[i] * (at(w, p[i]) - 2.0 * w[i] + at(w, m[i]));
            }
        }
    }
}

pub fn dual_coefficients(sigma: &GridFunction, v: &VectorGridFunction) -> Result<(VariableCoefficients, GridFunction)> {
    sigma.spec().ensure_same(v.spec())?;
    let c = (0..sigma.spec().dim()).map(|j| sigma.mul(&average_plus(sigma, j))).collect();
    Ok((VariableCoefficients::new(c)?, dual_upwind_one(v).scale(-1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DualStepper {
    #[default]
    ImplicitEuler,
    CrankNicolson,
    ExplicitEuler,
}

impl DualStepper {
    fn theta(self) -> f64 {
        match self {
            DualStepper::ImplicitEuler => 1.0,
            DualStepper::CrankNicolson => 0.5,
            DualStepper::ExplicitEuler => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DualStepper::ImplicitEuler => "implicit-euler",
            DualStepper::CrankNicolson => "crank-nicolson",
            DualStepper::ExplicitEuler => "explicit-euler",
        }
    }
}

impl std::str::FromStr for DualStepper {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit-euler" | "implicit" => Ok(DualStepper::ImplicitEuler),
            "crank-nicolson" | "cn" => Ok(DualStepper::CrankNicolson),
            "explicit-euler" | "explicit" => Ok(DualStepper::ExplicitEuler),
            _ => Err(Error::InvalidArgument(format!("unknown dual stepper {s:?}"))),
        }
    }
}

/// Δx²/(2d max c): the explicit-step threshold.
pub fn explicit_step_bound(problem: &DualProblem) -> f64 {
    let spec = problem.spec();
    spec.dx() * spec.dx() / (2.0 * spec.dim() as f64 * problem.coeffs.max())
}

/// θ-scheme for the forward-time deviation w: (I + θΔτB)w⁺ = (I − (1−θ)ΔτB)w − ΔτZ,
/// B = Z − ½Σc∇_+∇_−.
struct ThetaSystem<'a> {
    problem: &'a DualProblem,
    nb: NeighborTable,
    theta: f64,
    dt: f64,
    diag: Vec<f64>,
    tri: Option<Tridiagonal>,
}

impl<'a> ThetaSystem<'a> {
    fn new(problem: &'a DualProblem, dt: f64, theta: f64) -> Result<Self> {
        let spec = problem.spec();
        let nb = NeighborTable::new(spec);
        let inv = 1.0 / (spec.dx() * spec.dx());
        let z = problem.reaction.values();
        let csum: Vec<f64> = (0..spec.len()).map(|i| problem.coeffs.components().iter().map(|c| c.values()[i]).sum()).collect();
        let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
        if theta > 0.0 && 1.0 + theta * dt * zmin <= 0.0 {
            return Err(Error::StepTooLarge { dt, bound: 1.0 / (theta * -zmin) });
        }
        let diag: Vec<f64> = (0..spec.len()).map(|i| 1.0 + theta * dt * (z[i] + inv * csum[i])).collect();
        let tri = if theta > 0.0 && spec.dim() == 1 && spec.boundary() == crate::lattice::Boundary::ZeroExterior {
            let c = problem.coeffs.component(0).values();
            let off: Vec<f64> = c.iter().map(|ci| -theta * dt * 0.5 * inv * ci).collect();
            let mut sub = off.clone();
            sub[0] = 0.0;
            let mut sup = off;
            *sup.last_mut().unwrap() = 0.0;
            Some(Tridiagonal::factor(sub, &diag, &sup)?)
        } else {
            None
        };
        Ok(ThetaSystem { problem, nb, theta, dt, diag, tri })
    }

    fn step(&self, w: &mut Vec<f64>, scratch: &mut [f64]) -> Result<()> {
        // scratch ← rhs(w) = −Bw − Z
        self.problem.rhs(w, &self.nb, scratch);
        if self.theta == 0.0 {
            for (wi, r) in w.iter_mut().zip(scratch.iter()) {
                *wi += self.dt * r;
            }
            return Ok(());
        }
        // (I + θΔτB)w⁺ = w + Δτ[(1−θ)(−Bw) − Z] = w + Δτ[(1−θ)rhs(w) − θZ]
        let z = self.problem.reaction.values();
        let mut b: Vec<f64> =
            (0..w.len()).map(|i| w[i] + self.dt * ((1.0 - self.theta) * scratch[i] - self.theta * z[i])).collect();
        if let Some(tri) = &self.tri {
            tri.solve(&mut b);
            *w = b;
            return Ok(());
        }
        let spec = self.problem.spec();
        let inv = 0.5 / (spec.dx() * spec.dx());
        let td = self.theta * self.dt;
        let matvec = |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = self.diag[i] * x[i];
            }
            for (j, cj) in self.problem.coeffs.components().iter().enumerate() {
                let (p, m, c) = (self.nb.plus(j), self.nb.minus(j), cj.values());
                for i in 0..x.len() {
                    out[i] -= td * inv * c[i] * (at(x, p[i]) + at(x, m[i]));
                }
            }
        };
        let mut x = w.clone();
        bicgstab(matvec, &self.diag, &b, &mut x, 1e-14, 20 * w.len().max(50))?;
        *w = x;
        Ok(())
    }
}

/// φ on the physical mesh t_k = kΔt, recording every step.
pub fn solve_dual_ode(problem: &DualProblem, dt: f64, stepper: DualStepper) -> Result<TimeSeries> {
    solve_dual_ode_sampled(problem, dt, stepper, 1)
}

/// As [`solve_dual_ode`], recording every `every`-th step. The number of steps
/// is T/Δt rounded to the nearest multiple of `every`.
pub fn solve_dual_ode_sampled(problem: &DualProblem, dt: f64, stepper: DualStepper, every: usize) -> Result<TimeSeries> {
    if !(dt > 0.0) || every == 0 {
        return Err(Error::InvalidArgument(format!("need Δt > 0 and every ≥ 1, got {dt}, {every}")));
    }
    let t = problem.horizon;
    let records = ((t / dt / every as f64).round() as usize).max(1);
    let steps = records * every;
    let dt = t / steps as f64;
    if stepper == DualStepper::ExplicitEuler {
        let bound = explicit_step_bound(problem);
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, bound });
        }
    }
    let sys = ThetaSystem::new(problem, dt, stepper.theta())?;
    let n = problem.spec().len();
    let mut w = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut frames = Vec::with_capacity(records + 1);
    frames.push(w.clone());
    for s in 1..=steps {
        sys.step(&mut w, &mut scratch)?;
        if s % every == 0 {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NotConverged(format!("dual solution blew up at step {s}")));
            }
            frames.push(w.clone());
        }
    }
    to_physical_time(problem.spec(), TimeMesh::new(t, records)?, frames)
}

/// Frames in forward time τ_k → φ = 1 + w on the physical mesh (reversed).
fn to_physical_time(spec: &GridSpec, mesh: TimeMesh, frames: Vec<Vec<f64>>) -> Result<TimeSeries> {
    let phi = frames
        .into_iter()
        .rev()
        .map(|w| GridFunction::new(spec.clone(), w.into_iter().map(|v| 1.0 + v).collect()))
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(spec.clone(), mesh, phi)
}

#[derive(Clone, Copy, Debug)]
pub struct DuhamelConfig {
    /// Stop when successive Picard iterates differ by less than this in sup norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of times the subinterval length may be halved.
    pub max_splits: usize,
    pub quadrature: TimeQuadrature,
    /// Exponent for ‖Z‖_{L^p}; must exceed d.
    pub p: f64,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        DuhamelConfig { tol: 1e-12, max_iter: 200, max_splits: 8, quadrature: TimeQuadrature::Gregory, p: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubintervalStats {
    /// Forward-time start τ and length in frames.
    pub start: f64,
    pub frames: usize,
    /// ‖Z‖_{L^p} times the discrete L¹_t L^∞_α L^{p'}_β norm of Γ on the subinterval.
    pub contraction_ratio: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct DuhamelSolution {
    pub phi: TimeSeries,
    pub subintervals: Vec<SubintervalStats>,
}

/// Picard iteration of w(τ) = Γ(τ−τ₀)w(τ₀) − ∫_{τ₀}^τ Γ(τ−s) Z(w(s)+1) ds on
/// successive subintervals, each short enough for the iteration to contract.
/// Γ must be assembled for the problem's coefficients; its mesh step sets
/// the time step and T must be a whole number of steps.
pub fn solve_dual_duhamel(problem: &DualProblem, gamma: &TimeKernel, cfg: &DuhamelConfig) -> Result<DuhamelSolution> {
    let spec = problem.spec();
    spec.ensure_same(gamma.spec())?;
    let d = spec.dim() as f64;
    if !(cfg.p > d) {
        return Err(Error::InvalidArgument(format!("reaction exponent p = {} must exceed d = {d}", cfg.p)));
    }
    let h = gamma.mesh().h();
    let total = (problem.horizon / h).round() as usize;
    if total == 0 || (total as f64 * h - problem.horizon).abs() > 1e-9 * problem.horizon {
        return Err(Error::Mismatch(format!("horizon {} is not a multiple of the kernel step {h}", problem.horizon)));
    }
    let z_norm = lp_norm(&problem.reaction, cfg.p)?;
    let q = conjugate_exponent(cfg.p);
    let gnorm: Vec<f64> = gamma.frames().par_iter().map(|g| g.mixed_norm(f64::INFINITY, q)).collect::<Result<_>>()?;

    let ratio_for = |len: usize| -> f64 {
        (1..=len)
            .map(|j| {
                cfg.quadrature.weights(j).iter().enumerate().map(|(i, w)| w.abs() * h * gnorm[j - i]).sum::<f64>()
            })
            .fold(0.0, f64::max)
            * z_norm
    };
    let mut len = gamma.mesh().steps().min(total);
    let mut ratio = ratio_for(len);
    let mut splits = 0;
    while ratio >= 1.0 {
        if splits == cfg.max_splits || len == 1 {
            return Err(Error::NoContraction { m_max: splits, ratio });
        }
        len = len.div_ceil(2);
        ratio = ratio_for(len);
        splits += 1;
    }

    let z = problem.reaction.values();
    let n = spec.len();
    let mut frames: Vec<Vec<f64>> = vec![vec![0.0; n]];
    let mut stats = vec![];
    let mut k0 = 0;
    while k0 < total {
        let l = len.min(total - k0);
        let w0 = GridFunction::new(spec.clone(), frames[k0].clone())?;
        let free: Vec<Vec<f64>> = (1..=l).into_par_iter().map(|j| gamma.frame(j).apply(&w0).into_values()).collect();
        let mut cur: Vec<Vec<f64>> = (0..=l).map(|_| frames[k0].clone()).collect();
        let mut iterations = 0;
        loop {
            iterations += 1;
            let g: Vec<GridFunction> = cur
                .iter()
                .map(|w| GridFunction::new(spec.clone(), w.iter().zip(z).map(|(wi, zi)| zi * (wi + 1.0)).collect()))
                .collect::<Result<_>>()?;
            let next: Vec<Vec<f64>> = (1..=l)
                .into_par_iter()
                .map(|j| {
                    let mut acc = free[j - 1].clone();
                    for (i, w) in cfg.quadrature.weights(j).iter().enumerate() {
                        if *w != 0.0 {
                            let contrib = gamma.frame(j - i).apply(&g[i]);
                            for (a, c) in acc.iter_mut().zip(contrib.values()) {
                                *a -= w * h * c;
                            }
                        }
                    }
                    acc
                })
                .collect();
            let diff = next
                .iter()
                .zip(&cur[1..])
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            for (j, v) in next.into_iter().enumerate() {
                cur[j + 1] = v;
            }
            if diff < cfg.tol {
                break;
            }
            if iterations >= cfg.max_iter || !diff.is_finite() {
                return Err(Error::NotConverged(format!(
                    "Picard iteration on [{}, {}] stalled at {diff:e}",
                    k0 as f64 * h,
                    (k0 + l) as f64 * h
                )));
            }
        }
        frames.extend(cur.into_iter().skip(1));
        stats.push(SubintervalStats { start: k0 as f64 * h, frames: l, contraction_ratio: ratio_for(l), iterations });
        k0 += l;
    }
    Ok(DuhamelSolution { phi: to_physical_time(spec, TimeMesh::new(problem.horizon, total)?, frames)?, subintervals: stats })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualDiagnostics {
    pub min_value: f64,
    pub sup_norm: f64,
    /// (sup |∇_+^j φ|, sup |∇_−^j φ|) per direction, over all frames.
    pub sup_grad: Vec<(f64, f64)>,
}

impl DualDiagnostics {
    pub fn max_grad(&self) -> f64 {
        self.sup_grad.iter().map(|(a, b)| a.max(*b)).fold(0.0, f64::max)
    }
}

/// Scans every frame. Differences treat φ as 1 outside the box.
pub fn dual_diagnostics(phi: &TimeSeries) -> DualDiagnostics {
    let spec = phi.spec();
    let nb = NeighborTable::new(spec);
    let inv = 1.0 / spec.dx();
    let mut min_value = f64::INFINITY;
    let mut sup_norm = 0.0f64;
    let mut sup_grad = vec![(0.0f64, 0.0f64); spec.dim()];
    for f in phi.frames() {
        let w: Vec<f64> = f.values().iter().map(|v| v - 1.0).collect();
        min_value = min_value.min(f.min());
        sup_norm = sup_norm.max(f.max_abs());
        for (j, g) in sup_grad.iter_mut().enumerate() {
            for i in 0..w.len() {
                g.0 = g.0.max(((at(&w, nb.plus(j)[i]) - w[i]) * inv).abs());
                g.1 = g.1.max(((w[i] - at(&w, nb.minus(j)[i])) * inv).abs());
            }
        }
    }
    DualDiagnostics { min_value, sup_norm, sup_grad }
}
