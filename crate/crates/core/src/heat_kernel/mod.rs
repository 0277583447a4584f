//! Semi-discrete heat kernel of ∂_t a = ∇_+·c∇_− a with constant diagonal c:
//! closed Bessel product form, series oracles, tail control, decay fits and
//! the constant-coefficient Duhamel formula.

mod bessel;
mod series;

pub use bessel::{scaled_bessel_i, scaled_bessel_sequence};
pub use series::{kernel_series, kernel_series_partial, kernel_series_uniformized, series_terms_required};

use crate::error::{Error, Result};
use crate::lattice::{convolve, forward_diff, lp_norm, Boundary, GridFunction, GridSpec, TimeSeries};
use crate::quadrature::TimeQuadrature;

/// Default bound on the kernel mass lost to truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionDiag {
    c: Vec<f64>,
}

impl DiffusionDiag {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidArgument("diffusion needs at least one direction".into()));
        }
        if let Some(v) = c.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("diffusion coefficients must be positive, got {v}")));
        }
        Ok(DiffusionDiag { c })
    }

    pub fn isotropic(dim: usize, c: f64) -> Result<Self> {
        DiffusionDiag::new(vec![c; dim])
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
    pub fn get(&self, j: usize) -> f64 {
        self.c[j]
    }
    pub fn values(&self) -> &[f64] {
        &self.c
    }
    /// c̄ = max_j c^j.
    pub fn max(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }
    pub fn sum(&self) -> f64 {
        self.c.iter().sum()
    }

    /// r^j = 2c^j t/Δx².
    pub fn r(&self, j: usize, t: f64, dx: f64) -> f64 {
        2.0 * self.c[j] * t / (dx * dx)
    }

    fn check_against(&self, spec: &GridSpec) -> Result<()> {
        if self.dim() != spec.dim() {
            return Err(Error::Mismatch(format!(
                "{} diffusion coefficients on a {}-dimensional lattice",
                self.dim(),
                spec.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatKernelEval {
    c: DiffusionDiag,
    t: f64,
    values: GridFunction,
}

impl HeatKernelEval {
    pub(crate) fn new(c: DiffusionDiag, t: f64, values: GridFunction) -> Self {
        HeatKernelEval { c, t, values }
    }
    pub fn spec(&self) -> &GridSpec {
        self.values.spec()
    }
    pub fn diffusion(&self) -> &DiffusionDiag {
        &self.c
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn values(&self) -> &GridFunction {
        &self.values
    }
    pub fn into_values(self) -> GridFunction {
        self.values
    }
    /// Δx^d Σ_α a_α.
    pub fn mass(&self) -> f64 {
        self.values.integral()
    }
    /// (∇_+^ℓ)^m a.
    pub fn forward_derivative(&self, m: usize, ell: usize) -> GridFunction {
        let mut g = self.values.clone();
        for _ in 0..m {
            g = forward_diff(&g, ell);
        }
        g
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be finite and ≥ 0, got {t}")));
    }
    Ok(())
}

/// a_α(t) = Δx^{−d} Π_j e^{−r^j} I_{α^j}(r^j).
///
/// On a periodic lattice the profile is wrapped onto the torus, which is the
/// exact kernel of the periodic operator.
pub fn kernel_closed(spec: &GridSpec, c: &DiffusionDiag, t: f64) -> Result<HeatKernelEval> {
    c.check_against(spec)?;
    check_time(t)?;
    let n = spec.radius();
    let profiles: Vec<Vec<f64>> = (0..spec.dim())
        .map(|j| profile_1d(c.r(j, t, spec.dx()), n, spec.boundary()))
        .collect::<Result<_>>()?;
    let inv_vol = 1.0 / spec.cell_volume();
    let values = GridFunction::from_index_fn(spec, |alpha| {
        alpha.iter().zip(&profiles).map(|(&a, p)| p[(a + n as i64) as usize]).product::<f64>() * inv_vol
    });
    Ok(HeatKernelEval::new(c.clone(), t, values))
}

/// One-dimensional factor e^{−r} I_k(r) for k = −n..=n.
fn profile_1d(r: f64, n: usize, boundary: Boundary) -> Result<Vec<f64>> {
    match boundary {
        Boundary::ZeroExterior => {
            let s = scaled_bessel_sequence(n, r)?;
            Ok((0..=2 * n).map(|i| s[(i as i64 - n as i64).unsigned_abs() as usize]).collect())
        }
        Boundary::Periodic => {
            let side = 2 * n + 1;
            let reach = tail_radius_1d(r, 1e-18)?.max(n);
            let s = scaled_bessel_sequence(reach, r)?;
            let mut p = vec![0.0; side];
            for k in -(reach as i64)..=reach as i64 {
                let slot = (k + n as i64).rem_euclid(side as i64) as usize;
                p[slot] += s[k.unsigned_abs() as usize];
            }
            Ok(p)
        }
    }
}

/// 2Σ_{k>n} e^{−r} I_k(r), summed from the top so nothing cancels.
fn tails_1d(r: f64, reach: usize) -> Result<Vec<f64>> {
    let s = scaled_bessel_sequence(reach, r)?;
    let mut tails = vec![0.0; reach + 1];
    let mut acc = 0.0;
    for k in (0..reach).rev() {
        acc += 2.0 * s[k + 1];
        tails[k] = acc;
    }
    Ok(tails)
}

fn tail_reach(r: f64) -> usize {
    // e^{−k²/2r} < e^{−72} beyond this, and the small-r regime is covered
    // by the additive constant.
    (12.0 * r.sqrt()).ceil() as usize + 40
}

fn tail_radius_1d(r: f64, tol: f64) -> Result<usize> {
    let tails = tails_1d(r, tail_reach(r))?;
    Ok(tails.iter().position(|&t| t < tol).unwrap_or(tails.len()))
}

/// Mass of the full-lattice kernel outside the box of radius `radius`,
/// bounded by the sum over directions of the one-dimensional tails.
pub fn kernel_tail(c: &DiffusionDiag, t: f64, dx: f64, radius: usize) -> Result<f64> {
    check_time(t)?;
    let mut total = 0.0;
    for j in 0..c.dim() {
        let r = c.r(j, t, dx);
        let reach = tail_reach(r).max(radius + 1);
        total += tails_1d(r, reach)?[radius];
    }
    Ok(total)
}

/// Smallest box radius whose neglected kernel mass is below `tol`.
pub fn required_radius(c: &DiffusionDiag, t: f64, dx: f64, tol: f64) -> Result<usize> {
    check_time(t)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tail tolerance must be positive, got {tol}")));
    }
    let per_dir = tol / c.dim() as f64;
    let mut radius = 1;
    for j in 0..c.dim() {
        radius = radius.max(tail_radius_1d(c.r(j, t, dx), per_dir)?);
    }
    Ok(radius)
}

/// Envelope t^{−(d+m)/2} Π_j (1 + |x^j|²/4c̄t + |x^j|³/(4c̄t)^{3/2})^{−1}.
pub fn pointwise_envelope(spec: &GridSpec, c: &DiffusionDiag, t: f64, m: usize) -> GridFunction {
    let d = spec.dim() as f64;
    let s = 4.0 * c.max() * t;
    let pre = t.powf(-(d + m as f64) / 2.0);
    GridFunction::from_fn(spec, |x| {
        pre / x
            .iter()
            .map(|&xj| 1.0 + xj * xj / s + xj.abs().powi(3) / s.powf(1.5))
            .product::<f64>()
    })
}

/// max_α |(∇_+^ℓ)^m a_α(t)| / envelope_α: the constant the pointwise bound
/// needs on this box.
pub fn envelope_constant(eval: &HeatKernelEval, m: usize, ell: usize) -> f64 {
    let da = eval.forward_derivative(m, ell);
    let env = pointwise_envelope(eval.spec(), eval.diffusion(), eval.t(), m);
    da.values().iter().zip(env.values()).map(|(a, e)| a.abs() / e).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest |log-norm − fitted line| over the grid.
    pub max_residual: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub radius: usize,
}

/// Least-squares slope of log ‖(∇_+^ℓ)^m a(t)‖_{L^{p'}} against log t.
///
/// The box radius is chosen from the largest time so that the neglected
/// mass stays below 1e−12, unless `radius` overrides it; an override whose
/// tail exceeds 1e−10 is rejected.
pub fn decay_exponent_fit(
    c: &DiffusionDiag,
    dx: f64,
    p: f64,
    m: usize,
    ell: usize,
    t_grid: &[f64],
    radius: Option<usize>,
) -> Result<DecayFit> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("decay fit needs p > 1, got {p}")));
    }
    if ell >= c.dim() {
        return Err(Error::InvalidArgument(format!("direction {ell} out of range")));
    }
    if t_grid.len() < 3 || t_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("need at least three positive times".into()));
    }
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    if t_max / t_min < 100.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "time grid spans {:.2} decades, need ≥ 2",
            (t_max / t_min).log10()
        )));
    }
    let radius = match radius {
        Some(n) => {
            let tail = kernel_tail(c, t_max, dx, n)?;
            if tail > 1e-10 {
                return Err(Error::TailTooLarge { tail, tol: 1e-10, radius: n });
            }
            n
        }
        None => required_radius(c, t_max, dx, DEFAULT_TAIL_TOL)? + m,
    };
    let spec = GridSpec::new(c.dim(), radius, dx)?;
    let q = crate::lattice::conjugate_exponent(p);
    let norms: Vec<f64> = t_grid
        .iter()
        .map(|&t| lp_norm(&kernel_closed(&spec, c, t)?.forward_derivative(m, ell), q))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let max_residual =
        xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).abs()).fold(0.0, f64::max);
    Ok(DecayFit { slope, intercept, max_residual, times: t_grid.to_vec(), norms, radius })
}

/// Ordinary least squares y ≈ slope·x + intercept.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Geometric grid of `n` times from `t_min` to `t_max` inclusive.
pub fn geometric_times(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let ratio = (t_max / t_min).powf(1.0 / (n.max(2) - 1) as f64);
    (0..n).map(|i| t_min * ratio.powi(i as i32)).collect()
}

/// φ(t) = ψ ⊛ a(t) + ∫₀ᵗ a(t−s) ⊛ f(s) ds, with the source sampled on a
/// uniform mesh of [0, t].
pub fn duhamel_const(
    psi: &GridFunction,
    f: &TimeSeries,
    c: &DiffusionDiag,
    t: f64,
    quad: TimeQuadrature,
) -> Result<GridFunction> {
    let spec = psi.spec();
    spec.ensure_same(f.spec())?;
    let mesh = f.mesh();
    if (mesh.horizon() - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::Mismatch(format!(
            "source mesh ends at {}, evaluation time is {t}",
            mesh.horizon()
        )));
    }
    let mut out = convolve(psi, kernel_closed(spec, c, t)?.values());
    let k = mesh.steps();
    let w = quad.weights(k);
    for (i, wi) in w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        let a = kernel_closed(spec, c, mesh.time(k - i))?;
        out = out.add(&convolve(f.frame(i), a.values()).scale(wi * mesh.h()));
    }
    Ok(out)
}
