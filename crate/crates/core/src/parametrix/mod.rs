//! Fundamental solution Γ of ∂_t φ = ½Σ_j c_α^j ∇_+^j∇_−^j φ with variable
//! coefficients, built by freezing the coefficients at the source point,
//! measuring the freezing error K and summing the Neumann series
//! Φ = Σ_m K^{(m)}.
//!
//! Kernels are oriented (α = field point, β = source); differences act on α.
//! All Volterra time integrals use the quadrature in [`ParametrixConfig`].

use crate::error::{Error, Result};
use crate::heat_kernel::scaled_bessel_sequence;
use crate::lattice::{
    conjugate_exponent, lp_norm_slice, convolve2, convolve2_time, GridFunction, GridSpec, Kernel2, TimeKernel, TimeMesh,
    TimeSeries,
};
use crate::quadrature::TimeQuadrature;
use ndarray::Array2;
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct VariableCoefficients {
    spec: GridSpec,
    c: Vec<GridFunction>,
    epsilon: f64,
    lipschitz_bound: f64,
}

impl VariableCoefficients {
    /// Validates positivity and records ε = min c and the largest Lipschitz
    /// quotient |c_α^j − c_β^j|/|x_α − x_β| over all pairs of cells.
    pub fn new(c: Vec<GridFunction>) -> Result<Self> {
        let spec = c.first().ok_or_else(|| Error::InvalidArgument("no coefficient components".into()))?.spec().clone();
        if c.len() != spec.dim() {
            return Err(Error::Mismatch(format!("{} coefficient components in dimension {}", c.len(), spec.dim())));
        }
        for g in &c {
            spec.ensure_same(g.spec())?;
        }
        let epsilon = c.iter().map(|g| g.min()).fold(f64::INFINITY, f64::min);
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("coefficients must be bounded below by ε > 0, min is {epsilon}")));
        }
        let lipschitz_bound = c.iter().map(lipschitz_quotient).fold(0.0, f64::max);
        Ok(VariableCoefficients { spec, c, epsilon, lipschitz_bound })
    }

    pub fn constant(spec: &GridSpec, c: &[f64]) -> Result<Self> {
        if c.len() != spec.dim() {
            return Err(Error::Mismatch(format!("{} constants in dimension {}", c.len(), spec.dim())));
        }
        VariableCoefficients::new(c.iter().map(|&v| GridFunction::constant(spec, v)).collect())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn component(&self, j: usize) -> &GridFunction {
        &self.c[j]
    }
    pub fn components(&self) -> &[GridFunction] {
        &self.c
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }
    pub fn max(&self) -> f64 {
        self.c.iter().map(|g| g.max()).fold(0.0, f64::max)
    }
    pub fn is_constant(&self) -> bool {
        self.c.iter().all(|g| g.values().iter().all(|v| *v == g.values()[0]))
    }

    /// ½Σ_j c_α^j ∇_+^j∇_−^j f.
    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let mut out = GridFunction::zeros(&self.spec);
        for (j, cj) in self.c.iter().enumerate() {
            out = out.add(&crate::lattice::second_diff(f, j).mul(cj));
        }
        out.scale(0.5)
    }

    /// ½Σ_j c_α^j ∇_+^j∇_−^j acting on the α index of a kernel.
    pub fn apply_alpha(&self, k: &Kernel2) -> Kernel2 {
        let mut out = Kernel2::zeros(&self.spec);
        for (j, cj) in self.c.iter().enumerate() {
            out = out.add(&k.second_diff_alpha(j).scale_rows(cj));
        }
        out.scale(0.5)
    }
}

fn lipschitz_quotient(g: &GridFunction) -> f64 {
    let spec = g.spec();
    let v = g.values();
    let xs: Vec<Vec<f64>> = (0..spec.len()).map(|i| spec.x(i)).collect();
    (0..spec.len())
        .into_par_iter()
        .map(|a| {
            let mut m = 0.0f64;
            for b in (a + 1)..spec.len() {
                let dist = xs[a].iter().zip(&xs[b]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                m = m.max((v[a] - v[b]).abs() / dist);
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParametrixConfig {
    /// Time mesh intervals per assembled interval.
    pub frames: usize,
    pub quadrature: TimeQuadrature,
    /// Stop once an increment's L¹_t L^∞_α L^{p'}_β norm drops below this.
    pub tol: f64,
    pub m_max: usize,
    /// Integrability exponent p > d; norms are taken in L^{p'}_β.
    pub p: f64,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        ParametrixConfig { frames: 64, quadrature: TimeQuadrature::Gregory, tol: 1e-8, m_max: 60, p: 2.0 }
    }
}

impl ParametrixConfig {
    pub fn p_conjugate(&self) -> f64 {
        conjugate_exponent(self.p)
    }
}

/// Per-direction profile factors for one source β: for each j the values
/// e^{−r}I_k(r), k = 0..=reach, with r = c_β^j t/Δx².
fn frozen_profiles(coeffs: &VariableCoefficients, beta: usize, t: f64, reach: usize) -> Vec<Vec<f64>> {
    let dx = coeffs.spec.dx();
    (0..coeffs.spec.dim())
        .map(|j| {
            let r = coeffs.c[j].values()[beta] * t / (dx * dx);
            scaled_bessel_sequence(reach, r).expect("frozen kernel arguments are valid")
        })
        .collect()
}

fn assemble_by_columns(spec: &GridSpec, column: impl Fn(usize) -> Vec<f64> + Sync + Send) -> Kernel2 {
    let n = spec.len();
    let cols: Vec<Vec<f64>> = (0..n).into_par_iter().map(column).collect();
    let mut e = Array2::zeros((n, n));
    for (b, col) in cols.into_iter().enumerate() {
        e.column_mut(b).assign(&ndarray::Array1::from(col));
    }
    Kernel2::new(spec.clone(), e).expect("assembled kernel is finite")
}

/// a_{α−β,β}(t): column β is the constant-coefficient kernel of ½c_β∇_+·∇_−,
/// i.e. the Bessel product with r^j = c_β^j t/Δx², translated to β and
/// evaluated on the full lattice.
pub fn frozen_kernel(coeffs: &VariableCoefficients, t: f64) -> Result<Kernel2> {
    check_time(t)?;
    let spec = &coeffs.spec;
    let d = spec.dim();
    let reach = 2 * spec.radius();
    let inv_vol = 1.0 / spec.cell_volume();
    Ok(assemble_by_columns(spec, |b| {
        let prof = frozen_profiles(coeffs, b, t, reach);
        let beta = spec.alpha(b);
        let mut alpha = vec![0i64; d];
        (0..spec.len())
            .map(|a| {
                spec.alpha_into(a, &mut alpha);
                let mut v = inv_vol;
                for j in 0..d {
                    v *= prof[j][(alpha[j] - beta[j]).unsigned_abs() as usize];
                }
                v
            })
            .collect()
    }))
}

/// K_{α,β}(t) = ½Σ_j (c_α^j − c_β^j) ∇_+^j∇_−^j a_{α−β,β}(t), the
/// second difference taken on the full-lattice kernel.
///
/// The lattice kernel is finite at t = 0 (its entries are O(Δx^{−d−1})), so
/// t = 0 is accepted and the time mesh can start there.
pub fn assemble_k(coeffs: &VariableCoefficients, t: f64) -> Result<Kernel2> {
    check_time(t)?;
    let spec = &coeffs.spec;
    let d = spec.dim();
    let reach = 2 * spec.radius() + 1;
    let inv_vol = 1.0 / spec.cell_volume();
    let inv_dx2 = 1.0 / (spec.dx() * spec.dx());
    Ok(assemble_by_columns(spec, |b| {
        let prof = frozen_profiles(coeffs, b, t, reach);
        let beta = spec.alpha(b);
        let mut alpha = vec![0i64; d];
        let at = |j: usize, k: i64| prof[j][k.unsigned_abs() as usize];
        (0..spec.len())
            .map(|a| {
                spec.alpha_into(a, &mut alpha);
                let mut total = 0.0;
                for j in 0..d {
                    let dc = coeffs.c[j].values()[a] - coeffs.c[j].values()[b];
                    if dc == 0.0 {
                        continue;
                    }
                    let mut v = inv_vol;
                    for i in 0..d {
                        let k = alpha[i] - beta[i];
                        v *= if i == j { (at(i, k + 1) - 2.0 * at(i, k) + at(i, k - 1)) * inv_dx2 } else { at(i, k) };
                    }
                    total += 0.5 * dc * v;
                }
                total
            })
            .collect()
    }))
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be finite and ≥ 0, got {t}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct NeumannSeries {
    pub k: TimeKernel,
    pub phi: TimeKernel,
    pub m_used: usize,
    /// Last measured ‖K^{(m)}‖/‖K^{(m−1)}‖.
    pub contraction_ratio: f64,
    /// ‖K^{(m)}‖_{L¹_t L^∞_α L^{p'}_β} for m = 1..=m_used.
    pub increments: Vec<f64>,
}

/// K frames on the mesh.
pub fn assemble_k_frames(coeffs: &VariableCoefficients, mesh: TimeMesh) -> Result<TimeKernel> {
    let frames = (0..=mesh.steps()).map(|k| assemble_k(coeffs, mesh.time(k))).collect::<Result<_>>()?;
    TimeKernel::new(coeffs.spec.clone(), mesh, frames)
}

/// Φ = Σ_{m≥1} K^{(m)}, K^{(m)} = K ⊛ K^{(m−1)}, summed until an increment is
/// below `cfg.tol`.
pub fn neumann_phi(coeffs: &VariableCoefficients, mesh: TimeMesh, cfg: &ParametrixConfig) -> Result<NeumannSeries> {
    let k = assemble_k_frames(coeffs, mesh)?;
    neumann_from_k(k, cfg)
}

pub fn neumann_from_k(k: TimeKernel, cfg: &ParametrixConfig) -> Result<NeumannSeries> {
    let q = cfg.p_conjugate();
    let mut term = k.clone();
    let mut phi = k.clone();
    let mut increments = vec![term.l1_time_norm(f64::INFINITY, q)?];
    let mut ratio = 0.0;
    if increments[0] == 0.0 {
        return Ok(NeumannSeries { k, phi, m_used: 1, contraction_ratio: 0.0, increments });
    }
    for m in 2..=cfg.m_max {
        term = convolve2_time(&k, &term, cfg.quadrature)?;
        let norm = term.l1_time_norm(f64::INFINITY, q)?;
        ratio = norm / increments[m - 2];
        increments.push(norm);
        phi = phi.add(&term);
        if !norm.is_finite() {
            break;
        }
        if norm < cfg.tol {
            return Ok(NeumannSeries { k, phi, m_used: m, contraction_ratio: ratio, increments });
        }
    }
    Err(Error::NoContraction { m_max: cfg.m_max, ratio })
}

/// Φ − K − K ⊛ Φ under the same time quadrature.
pub fn phi_fixed_point_residual(series: &NeumannSeries, cfg: &ParametrixConfig) -> Result<TimeKernel> {
    let kphi = convolve2_time(&series.k, &series.phi, cfg.quadrature)?;
    Ok(series.phi.sub(&series.k).sub(&kphi))
}

#[derive(Clone, Debug)]
pub struct GammaAssembly {
    pub gamma: TimeKernel,
    pub neumann: NeumannSeries,
}

/// Γ = F + F ⊛ Φ with F_{α,β}(t) = a_{α−β,β}(t) on `mesh`.
pub fn assemble_gamma(coeffs: &VariableCoefficients, mesh: TimeMesh, cfg: &ParametrixConfig) -> Result<GammaAssembly> {
    let neumann = neumann_phi(coeffs, mesh, cfg)?;
    let frames = (0..=mesh.steps()).map(|k| frozen_kernel(coeffs, mesh.time(k))).collect::<Result<_>>()?;
    let f = TimeKernel::new(coeffs.spec.clone(), mesh, frames)?;
    let gamma = if neumann.increments[0] == 0.0 { f } else { f.add(&convolve2_time(&f, &neumann.phi, cfg.quadrature)?) };
    Ok(GammaAssembly { gamma, neumann })
}

/// Largest T = t_max·2^{−k} with ‖K‖_{L¹_t([0,T]) L^∞_α L¹_β} < ½, the
/// observable counterpart of the contraction condition.
pub fn estimate_t0(coeffs: &VariableCoefficients, t_max: f64, cfg: &ParametrixConfig) -> Result<(f64, f64)> {
    let mut t = t_max;
    for _ in 0..30 {
        let mesh = TimeMesh::new(t, cfg.frames)?;
        let k = assemble_k_frames(coeffs, mesh)?;
        let norm = k.l1_time_norm(f64::INFINITY, 1.0)?;
        if norm < 0.5 {
            return Ok((t, norm));
        }
        t *= 0.5;
    }
    Err(Error::NotConverged(format!("no interval below {t} gives ‖K‖_L¹ < ½")))
}

/// Γ(kT₀ + t_i) = Γ(t_i) ⊛ Γ(T₀) ⊛ … ⊛ Γ(T₀), folded from the left.
pub fn propagate_gamma(base: &TimeKernel, k: usize, frame: usize) -> Result<Kernel2> {
    let steps = base.mesh().steps();
    if frame > steps {
        return Err(Error::InvalidArgument(format!("frame {frame} beyond the {steps}-step mesh")));
    }
    let end = base.frame(steps);
    let mut g = base.frame(frame).clone();
    for _ in 0..k {
        g = convolve2(&g, end)?;
    }
    Ok(g)
}

/// (Γ(t+h) − Γ(t−h))/2h − ½Σ_j c_α^j ∇_+^j∇_−^j Γ(t) at interior frames,
/// as the max over rows |α|_∞ ≤ N − margin.
pub fn gamma_ode_residual(coeffs: &VariableCoefficients, gamma: &TimeKernel, margin: usize) -> Vec<f64> {
    let spec = gamma.spec();
    let h = gamma.mesh().h();
    let rows = interior_rows(spec, margin);
    (1..gamma.mesh().steps())
        .map(|k| {
            let dt = gamma.frame(k + 1).sub(gamma.frame(k - 1)).scale(0.5 / h);
            let res = dt.sub(&coeffs.apply_alpha(gamma.frame(k)));
            rows.iter().map(|&a| res.entries().row(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max)
        })
        .collect()
}

pub(crate) fn interior_rows(spec: &GridSpec, margin: usize) -> Vec<usize> {
    let lim = spec.radius().saturating_sub(margin) as i64;
    (0..spec.len()).filter(|&i| spec.alpha(i).iter().all(|a| a.abs() <= lim)).collect()
}

/// ∫₀ᵀ ‖∇_±^ℓ Γ(t)‖_{L^∞_α L^{p'}_β} dt (trapezoid in time), with the
/// outer sup over rows at least `margin` cells inside the box. The outermost
/// rows see the zero exterior and carry a spurious O(1/Δx) jump.
pub fn gradient_l1_norm(gamma: &TimeKernel, ell: usize, forward: bool, p: f64, margin: usize) -> Result<f64> {
    let spec = gamma.spec();
    let rows = interior_rows(spec, margin);
    let q = conjugate_exponent(p);
    let vol = spec.cell_volume();
    let norms = gamma
        .frames()
        .par_iter()
        .map(|g| {
            let d = if forward { g.forward_diff_alpha(ell) } else { g.backward_diff_alpha(ell) };
            rows.iter().try_fold(0.0f64, |m, &a| Ok(m.max(lp_norm_slice(&d.entries().row(a).to_vec(), vol, q)?)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let h = gamma.mesh().h();
    let n = norms.len() - 1;
    Ok(h * (norms.iter().sum::<f64>() - 0.5 * (norms[0] + norms[n])))
}

/// max |F_{α,β}| over α and β both at least `margin` cells inside the box.
pub fn interior_max_abs(k: &Kernel2, margin: usize) -> f64 {
    let idx = interior_rows(k.spec(), margin);
    idx.iter().flat_map(|&a| idx.iter().map(move |&b| k.get(a, b).abs())).fold(0.0, f64::max)
}

/// φ(t_k) = Σ_η Γ_{α,η}(t_k)ψ_η Δx^d + ∫₀^{t_k} Σ_η Γ_{α,η}(t_k − s) f_η(s) Δx^d ds.
pub fn duhamel_variable(
    psi: &GridFunction,
    f: &TimeSeries,
    gamma: &TimeKernel,
    frame: usize,
    quad: TimeQuadrature,
) -> Result<GridFunction> {
    gamma.spec().ensure_same(psi.spec())?;
    gamma.spec().ensure_same(f.spec())?;
    if (f.mesh().h() - gamma.mesh().h()).abs() > 1e-12 * gamma.mesh().h() || f.mesh().steps() < frame {
        return Err(Error::Mismatch("source and kernel time meshes differ".into()));
    }
    if frame > gamma.mesh().steps() {
        return Err(Error::InvalidArgument(format!("frame {frame} beyond the kernel mesh")));
    }
    let mut out = gamma.frame(frame).apply(psi);
    let h = gamma.mesh().h();
    for (i, w) in quad.weights(frame).iter().enumerate() {
        if *w != 0.0 {
            out = out.add(&gamma.frame(frame - i).apply(f.frame(i)).scale(w * h));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
