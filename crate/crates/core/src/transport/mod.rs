//! The semi-discrete stochastic transport scheme
//!
//!   du = −D_V u dt + ½σ Σ_j ∇_+^j(□_−^jσ ∇_−^j u) dt − S ∇_0 u · dW,
//!
//! its Euler–Maruyama discretisation, reproducible Brownian increments and
//! the two pointwise energy defects ℰ^σ, ℰ^V whose sign drives L² stability.

mod noise;

pub use noise::{BrownianDriver, PathNoise};

use crate::dual::{dual_coefficients, DualProblem};
use crate::error::{Error, Result};
use crate::lattice::{
    at, average_minus, average_plus, backward_diff, central_diff, dual_upwind_one, forward_diff, project, second_diff,
    upwind_apply, GridFunction, GridSpec, NeighborTable, VectorGridFunction, DEFAULT_PROJECTION_ORDER,
};
use crate::parametrix::VariableCoefficients;
use rayon::prelude::*;

/// Transport discretisation used in the drift.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum DriftScheme {
    #[default]
    Upwind,
    /// V·∇_0 u − (μΔx/2)Σ∇_+∇_−u with μ ≥ ‖V‖_∞.
    LaxFriedrichs { mu: f64 },
}

#[derive(Clone, Debug)]
pub struct SchemeCoefficients {
    spec: GridSpec,
    v: VectorGridFunction,
    sigma: GridFunction,
    s: Vec<GridFunction>,
    // □_−^j σ, cached for the stepper.
    box_minus: Vec<GridFunction>,
    dual_c: VariableCoefficients,
    z: GridFunction,
    drift_scheme: DriftScheme,
}

impl SchemeCoefficients {
    /// From cell values of V and σ. Rejects σ ≤ 0 anywhere on the box.
    pub fn new(v: VectorGridFunction, sigma: GridFunction) -> Result<Self> {
        let spec = sigma.spec().clone();
        spec.ensure_same(v.spec())?;
        let smin = sigma.min();
        if !(smin > 0.0) {
            return Err(Error::InvalidArgument(format!("σ must be bounded below by σ₀ > 0, min is {smin}")));
        }
        let mut s = Vec::with_capacity(spec.dim());
        let mut box_minus = Vec::with_capacity(spec.dim());
        for j in 0..spec.dim() {
            let bp = average_plus(&sigma, j);
            let bm = average_minus(&sigma, j);
            let sj = sigma.zip_with(&bp.zip_with(&bm, |p, m| p * m / (0.5 * (p + m))), |a, hm| (a * hm).sqrt());
            if let Some(bad) = sj.values().iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidArgument(format!("S^{j} is not positive and finite at cell {:?}", spec.alpha(bad))));
            }
            s.push(sj);
            box_minus.push(bm);
        }
        let (dual_c, z) = dual_coefficients(&sigma, &v)?;
        Ok(SchemeCoefficients { spec, v, sigma, s, box_minus, dual_c, z, drift_scheme: DriftScheme::Upwind })
    }

    pub fn with_drift_scheme(mut self, scheme: DriftScheme) -> Result<Self> {
        if let DriftScheme::LaxFriedrichs { mu } = scheme {
            let vmax = self.v.max_abs();
            if !(mu >= vmax) {
                return Err(Error::InvalidArgument(format!("Lax–Friedrichs needs μ ≥ ‖V‖_∞ = {vmax}, got {mu}")));
            }
        }
        self.drift_scheme = scheme;
        Ok(self)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn velocity(&self) -> &VectorGridFunction {
        &self.v
    }
    pub fn sigma(&self) -> &GridFunction {
        &self.sigma
    }
    /// Diagonal of S_α, one field per direction.
    pub fn s(&self) -> &[GridFunction] {
        &self.s
    }
    /// c^j = σ □_+^j σ, the dual diffusion coefficients.
    pub fn dual_coefficients(&self) -> &VariableCoefficients {
        &self.dual_c
    }
    /// Z = −D'_V(1).
    pub fn reaction(&self) -> &GridFunction {
        &self.z
    }
    pub fn drift_scheme(&self) -> DriftScheme {
        self.drift_scheme
    }

    pub fn dual_problem(&self, horizon: f64) -> Result<DualProblem> {
        DualProblem::new(self.dual_c.clone(), self.z.clone(), horizon)
    }

    /// min(Δx²/(2d‖σ‖²_∞), Δx/(2d‖V‖_∞)).
    pub fn step_bound(&self) -> f64 {
        let dx = self.spec.dx();
        let d = self.spec.dim() as f64;
        let smax = self.sigma.max_abs();
        let vmax = self.v.max_abs();
        let parabolic = dx * dx / (2.0 * d * smax * smax);
        let advective = if vmax > 0.0 { dx / (2.0 * d * vmax) } else { f64::INFINITY };
        parabolic.min(advective)
    }
}

/// Cell averages of V, σ and u⁰ on `spec`.
pub fn build_coefficients(
    v: impl Fn(&[f64]) -> Vec<f64>,
    sigma: impl Fn(&[f64]) -> f64,
    u0: impl Fn(&[f64]) -> f64,
    spec: &GridSpec,
) -> Result<(SchemeCoefficients, GridFunction)> {
    let order = DEFAULT_PROJECTION_ORDER;
    let vs = (0..spec.dim()).map(|j| project(|x| v(x)[j], spec, order)).collect::<Result<Vec<_>>>()?;
    let coeffs = SchemeCoefficients::new(VectorGridFunction::new(vs)?, project(sigma, spec, order)?)?;
    Ok((coeffs, project(u0, spec, order)?))
}

/// −D_V u + ½σ Σ_j ∇_+^j(□_−^jσ ∇_−^j u), composed from the lattice operators.
pub fn drift(coeffs: &SchemeCoefficients, u: &GridFunction) -> GridFunction {
    coeffs.spec.ensure_same(u.spec()).expect("coefficients and field on different lattices");
    let mut out = match coeffs.drift_scheme {
        DriftScheme::Upwind => upwind_apply(&coeffs.v, u).scale(-1.0),
        DriftScheme::LaxFriedrichs { mu } => {
            let mut acc = GridFunction::zeros(&coeffs.spec);
            for j in 0..coeffs.spec.dim() {
                let adv = central_diff(u, j).mul(coeffs.v.component(j));
                let visc = second_diff(u, j).scale(0.5 * mu * coeffs.spec.dx());
                acc = acc.sub(&adv).add(&visc);
            }
            acc
        }
    };
    for j in 0..coeffs.spec.dim() {
        let flux = backward_diff(u, j).mul(&coeffs.box_minus[j]);
        out = out.add(&forward_diff(&flux, j).mul(&coeffs.sigma).scale(0.5));
    }
    out
}

/// Component j: −S^j ∇_0^j u.
pub fn diffusion(coeffs: &SchemeCoefficients, u: &GridFunction) -> Vec<GridFunction> {
    coeffs.spec.ensure_same(u.spec()).expect("coefficients and field on different lattices");
    (0..coeffs.spec.dim()).map(|j| central_diff(u, j).mul(&coeffs.s[j]).scale(-1.0)).collect()
}

/// Slice-level drift and diffusion, identical in value to [`drift`] and
/// [`diffusion`] but allocation-free inside a path.
pub struct Stepper<'a> {
    coeffs: &'a SchemeCoefficients,
    nb: NeighborTable,
    flux: Vec<f64>,
    incr: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(coeffs: &'a SchemeCoefficients) -> Self {
        let n = coeffs.spec.len();
        Stepper { coeffs, nb: NeighborTable::new(&coeffs.spec), flux: vec![0.0; n], incr: vec![0.0; n] }
    }

    /// u ← u + drift(u)Δt + Σ_j diffusion_j(u)ΔW^j. Returns false if any value
    /// became non-finite.
    pub fn step(&mut self, u: &mut [f64], dt: f64, dw: &[f64]) -> bool {
        let c = self.coeffs;
        let dx = c.spec.dx();
        let inv = 1.0 / dx;
        let sig = c.sigma.values();
        let n = u.len();
        self.incr.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..c.spec.dim() {
            let (p, m) = (self.nb.plus(j), self.nb.minus(j));
            let vj = c.v.component(j).values();
            let bm = c.box_minus[j].values();
            let sj = c.s[j].values();
            for i in 0..n {
                self.flux[i] = bm[i] * (u[i] - at(u, m[i])) * inv;
            }
            for i in 0..n {
                let (up, dn) = (at(u, p[i]), at(u, m[i]));
                let transport = match c.drift_scheme {
                    DriftScheme::Upwind => {
                        let vp = vj[i].max(0.0);
                        let vm = (-vj[i]).max(0.0);
                        (vp * (u[i] - dn) - vm * (up - u[i])) * inv
                    }
                    DriftScheme::LaxFriedrichs { mu } => {
                        vj[i] * (up - dn) * 0.5 * inv - 0.5 * mu * dx * (up - 2.0 * u[i] + dn) * inv * inv
                    }
                };
                let noise_drift = 0.5 * sig[i] * (at(&self.flux, p[i]) - self.flux[i]) * inv;
                let martingale = -sj[i] * (up - dn) * 0.5 * inv;
                self.incr[i] += (noise_drift - transport) * dt + martingale * dw[j];
            }
        }
        let mut finite = true;
        for (ui, d) in u.iter_mut().zip(&self.incr) {
            *ui += d;
            finite &= ui.is_finite();
        }
        finite
    }
}

/// One Euler–Maruyama step on a field value.
pub fn em_step(coeffs: &SchemeCoefficients, u: &GridFunction, dt: f64, dw: &[f64]) -> Result<GridFunction> {
    if dw.len() != coeffs.spec.dim() {
        return Err(Error::Mismatch(format!("{} Wiener increments in dimension {}", dw.len(), coeffs.spec.dim())));
    }
    let mut next = drift(coeffs, u).scale(dt).add(u);
    for (b, w) in diffusion(coeffs, u).iter().zip(dw) {
        next = next.add(&b.scale(*w));
    }
    if next.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NotConverged("Euler–Maruyama step produced non-finite values".into()));
    }
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct PathState {
    pub u: GridFunction,
    /// Time index n of u = u^n.
    pub step: usize,
    pub diverged: bool,
    /// (t, ‖u(t)‖₂²) at every step, when requested.
    pub trace: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathConfig {
    pub horizon: f64,
    /// Requested step; the actual step is T divided by the rounded-up step count.
    pub dt: f64,
    pub seed: u64,
    pub record_trace: bool,
    /// Each increment is the sum of this many increments of a driver with
    /// step Δt/k. Runs at different Δt whose ratios divide these counts then
    /// see the same Brownian path at common times, which couples the levels
    /// of a refinement study.
    pub noise_substeps: usize,
}

impl PathConfig {
    pub fn new(horizon: f64, dt: f64, seed: u64) -> Self {
        PathConfig { horizon, dt, seed, record_trace: false, noise_substeps: 1 }
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
    pub fn effective_dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
}

fn check_path_config(coeffs: &SchemeCoefficients, cfg: &PathConfig) -> Result<()> {
    if !(cfg.horizon > 0.0 && cfg.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("need T > 0 and Δt > 0, got {} and {}", cfg.horizon, cfg.dt)));
    }
    if cfg.noise_substeps == 0 {
        return Err(Error::InvalidArgument("noise_substeps must be at least 1".into()));
    }
    let bound = coeffs.step_bound();
    let dt = cfg.effective_dt();
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, bound });
    }
    Ok(())
}

/// Runs path `path_id` of the driver keyed by `cfg.seed` up to T. A path that
/// produces non-finite values stops there with `diverged` set.
pub fn simulate_path(coeffs: &SchemeCoefficients, u0: &GridFunction, cfg: &PathConfig, path_id: u64) -> Result<PathState> {
    coeffs.spec.ensure_same(u0.spec())?;
    check_path_config(coeffs, cfg)?;
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    let sub = cfg.noise_substeps;
    let driver = BrownianDriver::new(cfg.seed, coeffs.spec.dim(), dt / sub as f64, steps * sub)?;
    let mut noise = driver.path(path_id);
    let mut part = vec![0.0; coeffs.spec.dim()];
    let mut stepper = Stepper::new(coeffs);
    let mut u = u0.values().to_vec();
    let vol = coeffs.spec.cell_volume();
    let energy = |u: &[f64]| vol * u.iter().map(|x| x * x).sum::<f64>();
    let mut trace = if cfg.record_trace { vec![(0.0, energy(&u))] } else { vec![] };
    let mut dw = vec![0.0; coeffs.spec.dim()];
    for n in 0..steps {
        noise.next_into(&mut dw);
        for _ in 1..sub {
            noise.next_into(&mut part);
            dw.iter_mut().zip(&part).for_each(|(w, p)| *w += p);
        }
        if !stepper.step(&mut u, dt, &dw) {
            let u = GridFunction::new(coeffs.spec.clone(), u.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect())?;
            return Ok(PathState { u, step: n + 1, diverged: true, trace });
        }
        if cfg.record_trace {
            trace.push(((n + 1) as f64 * dt, energy(&u)));
        }
    }
    Ok(PathState { u: GridFunction::new(coeffs.spec.clone(), u)?, step: steps, diverged: false, trace })
}

/// Sample mean and standard error of a per-path observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub diverged: usize,
}

impl McEstimate {
    /// From per-path values in path order; the summation order is fixed.
    pub fn from_samples(values: &[f64], diverged: usize) -> Self {
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let var = if n > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            f64::NAN
        };
        McEstimate { mean, stderr: (var / n as f64).sqrt(), paths: n, diverged }
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Runs paths 0..paths in parallel and evaluates `observables` on each final
/// state. Results are identical for any thread count. Diverged paths are
/// counted and excluded from the estimates.
pub fn monte_carlo(
    coeffs: &SchemeCoefficients,
    u0: &GridFunction,
    cfg: &PathConfig,
    paths: usize,
    observables: &(dyn Fn(&GridFunction) -> Vec<f64> + Sync),
) -> Result<Vec<McEstimate>> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    check_path_config(coeffs, cfg)?;
    let per_path: Vec<Option<Vec<f64>>> = (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let cfg = PathConfig { record_trace: false, ..*cfg };
            simulate_path(coeffs, u0, &cfg, id).map(|s| if s.diverged { None } else { Some(observables(&s.u)) })
        })
        .collect::<Result<_>>()?;
    let diverged = per_path.iter().filter(|p| p.is_none()).count();
    let ok: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let k = ok.first().map_or(0, |v| v.len());
    Ok((0..k)
        .map(|i| {
            let col: Vec<f64> = ok.iter().map(|v| v[i]).collect();
            McEstimate::from_samples(&col, diverged)
        })
        .collect())
}

/// ℰ^σ_α = −(σ_α/2)Σ_j[□_+σ(∇_+u)² + □_−σ(∇_−u)² − 4 □_+σ□_−σ/(□_+σ + □_−σ) (∇_0u)²] ≤ 0.
pub fn energy_error_sigma(coeffs: &SchemeCoefficients, u: &GridFunction) -> GridFunction {
    let sigma = &coeffs.sigma;
    let mut acc = GridFunction::zeros(&coeffs.spec);
    for j in 0..coeffs.spec.dim() {
        let bp = average_plus(sigma, j);
        let bm = average_minus(sigma, j);
        let fp = forward_diff(u, j);
        let fm = backward_diff(u, j);
        let c0 = central_diff(u, j);
        let vals = (0..u.len())
            .map(|i| {
                let (p, m) = (bp.values()[i], bm.values()[i]);
                p * fp.values()[i].powi(2) + m * fm.values()[i].powi(2) - 4.0 * p * m / (p + m) * c0.values()[i].powi(2)
            })
            .collect();
        acc = acc.add(&GridFunction::new(coeffs.spec.clone(), vals).expect("finite"));
    }
    acc.mul(sigma).scale(-0.5)
}

/// The defining form of ℰ^σ: uσΣ∇_+(□_−σ∇_−u) − ½σΣ∇_+(□_−σ∇_−u²) + |S∇_0u|².
pub fn energy_error_sigma_defining(coeffs: &SchemeCoefficients, u: &GridFunction) -> GridFunction {
    let sigma = &coeffs.sigma;
    let u2 = u.mul(u);
    let mut acc = GridFunction::zeros(&coeffs.spec);
    for j in 0..coeffs.spec.dim() {
        let bm = &coeffs.box_minus[j];
        let a = forward_diff(&backward_diff(u, j).mul(bm), j).mul(u);
        let b = forward_diff(&backward_diff(&u2, j).mul(bm), j).scale(0.5);
        let s = central_diff(u, j).mul(&coeffs.s[j]);
        acc = acc.add(&a.sub(&b).mul(sigma)).add(&s.mul(&s));
    }
    acc
}

/// ℰ^V = D_V(u²) − 2u D_V u ≤ 0.
pub fn energy_error_upwind(v: &VectorGridFunction, u: &GridFunction) -> GridFunction {
    upwind_apply(v, &u.mul(u)).sub(&upwind_apply(v, u).mul(u).scale(2.0))
}

/// The divergence surrogate −Z = D'_V(1), for reporting.
pub fn discrete_divergence(v: &VectorGridFunction) -> GridFunction {
    dual_upwind_one(v)
}
