//! Truncated lattice {−N..N}^d with spacing Δx, piecewise-constant grid
//! functions and the difference, averaging and upwind operators acting on
//! them.
//!
//! Flat indices are row-major with direction 0 slowest. Lookups outside the
//! index set return 0 (`ZeroExterior`) or wrap around (`Periodic`).

mod calculus;
mod kernel;

pub use calculus::{calculus_identity_suite, CalculusReport, IdentityResidual};
pub use kernel::{convolve2, convolve2_time, Kernel2, TimeKernel, TimeMesh, TimeSeries};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    ZeroExterior,
    Periodic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    radius: usize,
    dx: f64,
    boundary: Boundary,
}

/// Marker for "no neighbour inside the box" in a [`NeighborTable`].
pub const OUTSIDE: usize = usize::MAX;

impl GridSpec {
    pub fn new(dim: usize, radius: usize, dx: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be ≥ 1".into()));
        }
        if radius == 0 {
            return Err(Error::InvalidGrid("radius must be ≥ 1".into()));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        Ok(GridSpec { dim, radius, dx, boundary: Boundary::ZeroExterior })
    }

    /// Smallest radius whose box [−N Δx, N Δx] contains [−half_width, half_width].
    pub fn covering(dim: usize, half_width: f64, dx: f64) -> Result<Self> {
        let radius = (half_width / dx - 1e-9).ceil().max(1.0) as usize;
        GridSpec::new(dim, radius, dx)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_radius(&self, radius: usize) -> Result<Self> {
        Ok(GridSpec::new(self.dim, radius, self.dx)?.with_boundary(self.boundary))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn radius(&self) -> usize {
        self.radius
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Δx^d.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    pub fn stride(&self, j: usize) -> usize {
        self.side().pow((self.dim - 1 - j) as u32)
    }

    fn check_direction(&self, j: usize) {
        assert!(j < self.dim, "direction {j} out of range for dimension {}", self.dim);
    }

    /// Flat index of α, or None if α lies outside the box.
    pub fn index(&self, alpha: &[i64]) -> Option<usize> {
        debug_assert_eq!(alpha.len(), self.dim);
        let n = self.radius as i64;
        let mut flat = 0usize;
        for &a in alpha {
            if a < -n || a > n {
                return None;
            }
            flat = flat * self.side() + (a + n) as usize;
        }
        Some(flat)
    }

    pub fn alpha(&self, flat: usize) -> Vec<i64> {
        let mut out = vec![0i64; self.dim];
        self.alpha_into(flat, &mut out);
        out
    }

    pub fn alpha_into(&self, mut flat: usize, out: &mut [i64]) {
        let side = self.side();
        for j in (0..self.dim).rev() {
            out[j] = (flat % side) as i64 - self.radius as i64;
            flat /= side;
        }
    }

    /// Coordinate α^j of a flat index.
    pub fn coord(&self, flat: usize, j: usize) -> i64 {
        ((flat / self.stride(j)) % self.side()) as i64 - self.radius as i64
    }

    /// Cell centre x_α = αΔx.
    pub fn x(&self, flat: usize) -> Vec<f64> {
        self.alpha(flat).iter().map(|&a| a as f64 * self.dx).collect()
    }

    /// Flat index of α + step·e_j under the boundary rule.
    pub fn neighbor(&self, flat: usize, j: usize, step: i64) -> Option<usize> {
        self.check_direction(j);
        let n = self.radius as i64;
        let c = self.coord(flat, j);
        let target = c + step;
        let stride = self.stride(j) as i64;
        if target >= -n && target <= n {
            return Some((flat as i64 + step * stride) as usize);
        }
        match self.boundary {
            Boundary::ZeroExterior => None,
            Boundary::Periodic => {
                let side = self.side() as i64;
                let wrapped = (target + n).rem_euclid(side) - n;
                Some((flat as i64 + (wrapped - c) * stride) as usize)
            }
        }
    }

    pub fn neighbor_table(&self) -> NeighborTable {
        NeighborTable::new(self)
    }

    /// Two specs are compatible when they describe the same lattice.
    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Mismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Precomputed ±e_j neighbours for every cell; `OUTSIDE` where the lookup
/// leaves a zero-exterior box.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    plus: Vec<Vec<usize>>,
    minus: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn new(spec: &GridSpec) -> Self {
        let len = spec.len();
        let mut plus = Vec::with_capacity(spec.dim());
        let mut minus = Vec::with_capacity(spec.dim());
        for j in 0..spec.dim() {
            plus.push((0..len).map(|i| spec.neighbor(i, j, 1).unwrap_or(OUTSIDE)).collect());
            minus.push((0..len).map(|i| spec.neighbor(i, j, -1).unwrap_or(OUTSIDE)).collect());
        }
        NeighborTable { plus, minus }
    }
    #[inline]
    pub fn plus(&self, j: usize) -> &[usize] {
        &self.plus[j]
    }
    #[inline]
    pub fn minus(&self, j: usize) -> &[usize] {
        &self.minus[j]
    }
}

#[inline]
pub(crate) fn at(values: &[f64], i: usize) -> f64 {
    if i == OUTSIDE {
        0.0
    } else {
        values[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a lattice of {} cells",
                values.len(),
                spec.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { alpha: spec.alpha(i), value: values[i] });
        }
        Ok(GridFunction { spec, values })
    }

    /// Skips the finiteness scan; callers guarantee the length.
    pub(crate) fn from_raw(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        GridFunction { spec, values }
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        GridFunction { values: vec![0.0; spec.len()], spec: spec.clone() }
    }

    pub fn constant(spec: &GridSpec, v: f64) -> Self {
        GridFunction { values: vec![v; spec.len()], spec: spec.clone() }
    }

    /// Point samples at the cell centres.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.x(i))).collect();
        GridFunction { values, spec: spec.clone() }
    }

    /// Values indexed by the multi-index α.
    pub fn from_index_fn(spec: &GridSpec, f: impl Fn(&[i64]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.alpha(i))).collect();
        GridFunction { values, spec: spec.clone() }
    }

    /// Discrete Dirac δ_{α−β₀}: Δx^{−d} at β₀, zero elsewhere.
    pub fn dirac(spec: &GridSpec, at: &[i64]) -> Result<Self> {
        let i = spec
            .index(at)
            .ok_or_else(|| Error::InvalidArgument(format!("{at:?} outside the box")))?;
        let mut g = GridFunction::zeros(spec);
        g.values[i] = 1.0 / spec.cell_volume();
        Ok(g)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// f_α with the boundary rule applied.
    pub fn get(&self, alpha: &[i64]) -> f64 {
        match self.spec.index(alpha) {
            Some(i) => self.values[i],
            None => match self.spec.boundary {
                Boundary::ZeroExterior => 0.0,
                Boundary::Periodic => {
                    let n = self.spec.radius as i64;
                    let side = self.spec.side() as i64;
                    let wrapped: Vec<i64> =
                        alpha.iter().map(|&a| (a + n).rem_euclid(side) - n).collect();
                    self.values[self.spec.index(&wrapped).unwrap()]
                }
            },
        }
    }

    /// f_{α + step·e_j} for the cell with flat index `flat`.
    pub fn shifted(&self, flat: usize, j: usize, step: i64) -> f64 {
        self.spec.neighbor(flat, j, step).map_or(0.0, |k| self.values[k])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_raw(self.spec.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.spec, other.spec, "grid functions live on different lattices");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        GridFunction::from_raw(self.spec.clone(), values)
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        self.map(|v| a * v)
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Δx^d Σ_α f_α.
    pub fn integral(&self) -> f64 {
        self.spec.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Debug dump with columns `alpha_1..alpha_d, x_1..x_d, value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.spec.dim;
        let mut header: Vec<String> = (1..=d).map(|j| format!("alpha_{j}")).collect();
        header.extend((1..=d).map(|j| format!("x_{j}")));
        header.push("value".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let alpha = self.spec.alpha(i);
            let mut row: Vec<String> = alpha.iter().map(|a| a.to_string()).collect();
            row.extend(alpha.iter().map(|&a| format!("{}", a as f64 * self.spec.dx)));
            row.push(format!("{v:e}"));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorGridFunction {
    components: Vec<GridFunction>,
}

impl VectorGridFunction {
    pub fn new(components: Vec<GridFunction>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("no components".into()))?;
        if components.len() != first.spec.dim {
            return Err(Error::Mismatch(format!(
                "{} components in dimension {}",
                components.len(),
                first.spec.dim
            )));
        }
        for c in &components {
            first.spec.ensure_same(&c.spec)?;
        }
        Ok(VectorGridFunction { components })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        VectorGridFunction { components: vec![GridFunction::zeros(spec); spec.dim] }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.components[0].spec
    }
    pub fn component(&self, j: usize) -> &GridFunction {
        &self.components[j]
    }
    pub fn components(&self) -> &[GridFunction] {
        &self.components
    }
    /// max_j ‖V^j‖_∞.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(GridFunction::max_abs).fold(0.0, f64::max)
    }
}

fn difference(f: &GridFunction, j: usize, kind: i8) -> GridFunction {
    f.spec.check_direction(j);
    let spec = &f.spec;
    let dx = spec.dx;
    let v = &f.values;
    let values = (0..spec.len())
        .map(|i| {
            let up = spec.neighbor(i, j, 1).map_or(0.0, |k| v[k]);
            let dn = spec.neighbor(i, j, -1).map_or(0.0, |k| v[k]);
            match kind {
                1 => (up - v[i]) / dx,
                -1 => (v[i] - dn) / dx,
                _ => (up - dn) / (2.0 * dx),
            }
        })
        .collect();
    GridFunction::from_raw(spec.clone(), values)
}

/// ∇_+^j f_α = (f_{α+e_j} − f_α)/Δx.
pub fn forward_diff(f: &GridFunction, j: usize) -> GridFunction {
    difference(f, j, 1)
}

/// ∇_−^j f_α = (f_α − f_{α−e_j})/Δx.
pub fn backward_diff(f: &GridFunction, j: usize) -> GridFunction {
    difference(f, j, -1)
}

/// ∇_0^j f_α = (f_{α+e_j} − f_{α−e_j})/(2Δx).
pub fn central_diff(f: &GridFunction, j: usize) -> GridFunction {
    difference(f, j, 0)
}

/// ∇_+^j ∇_−^j f_α = (f_{α+e_j} − 2f_α + f_{α−e_j})/Δx².
pub fn second_diff(f: &GridFunction, j: usize) -> GridFunction {
    f.spec.check_direction(j);
    let spec = &f.spec;
    let inv = 1.0 / (spec.dx * spec.dx);
    let v = &f.values;
    let values = (0..spec.len())
        .map(|i| {
            let up = spec.neighbor(i, j, 1).map_or(0.0, |k| v[k]);
            let dn = spec.neighbor(i, j, -1).map_or(0.0, |k| v[k]);
            (up - 2.0 * v[i] + dn) * inv
        })
        .collect();
    GridFunction::from_raw(spec.clone(), values)
}

fn average(s: &GridFunction, j: usize, step: i64) -> GridFunction {
    s.spec.check_direction(j);
    let spec = &s.spec;
    let values = (0..spec.len())
        .map(|i| 0.5 * (s.values[i] + spec.neighbor(i, j, step).map_or(0.0, |k| s.values[k])))
        .collect();
    GridFunction::from_raw(spec.clone(), values)
}

/// □_+^j σ_α = (σ_{α+e_j} + σ_α)/2.
pub fn average_plus(sigma: &GridFunction, j: usize) -> GridFunction {
    average(sigma, j, 1)
}

/// □_−^j σ_α = (σ_{α−e_j} + σ_α)/2.
pub fn average_minus(sigma: &GridFunction, j: usize) -> GridFunction {
    average(sigma, j, -1)
}

/// Upwind transport D_V f = Σ_j [V^{j,+}(f_α − f_{α−e_j}) − V^{j,−}(f_{α+e_j} − f_α)]/Δx.
pub fn upwind_apply(v: &VectorGridFunction, f: &GridFunction) -> GridFunction {
    let spec = f.spec();
    spec.ensure_same(v.spec()).expect("velocity and field on different lattices");
    let dx = spec.dx;
    let fv = &f.values;
    let mut out = vec![0.0; spec.len()];
    for j in 0..spec.dim {
        let vj = &v.components[j].values;
        for (i, o) in out.iter_mut().enumerate() {
            let up = spec.neighbor(i, j, 1).map_or(0.0, |k| fv[k]);
            let dn = spec.neighbor(i, j, -1).map_or(0.0, |k| fv[k]);
            let vp = vj[i].max(0.0);
            let vm = (-vj[i]).max(0.0);
            *o += (vp * (fv[i] - dn) - vm * (up - fv[i])) / dx;
        }
    }
    GridFunction::from_raw(spec.clone(), out)
}

/// D'_V g = Σ_j [(V^{j,+}g)_{α+e_j} − (V^{j,+}g)_α − (V^{j,−}g)_α + (V^{j,−}g)_{α−e_j}]/Δx.
pub fn dual_upwind_apply(v: &VectorGridFunction, g: &GridFunction) -> GridFunction {
    let spec = g.spec();
    spec.ensure_same(v.spec()).expect("velocity and field on different lattices");
    let dx = spec.dx;
    let gv = &g.values;
    let mut out = vec![0.0; spec.len()];
    for j in 0..spec.dim {
        let vj = &v.components[j].values;
        let plus = |k: usize| vj[k].max(0.0) * gv[k];
        let minus = |k: usize| (-vj[k]).max(0.0) * gv[k];
        for (i, o) in out.iter_mut().enumerate() {
            let up = spec.neighbor(i, j, 1).map_or(0.0, plus);
            let dn = spec.neighbor(i, j, -1).map_or(0.0, minus);
            *o += ((up - plus(i)) - (minus(i) - dn)) / dx;
        }
    }
    GridFunction::from_raw(spec.clone(), out)
}

/// D'_V(1): the dual upwind operator applied to g ≡ 1 on the whole lattice
/// (exterior velocity taken as zero or periodic, per the spec).
pub fn dual_upwind_one(v: &VectorGridFunction) -> GridFunction {
    let spec = v.spec();
    let dx = spec.dx;
    let mut out = vec![0.0; spec.len()];
    for j in 0..spec.dim {
        let vj = &v.components[j].values;
        for (i, o) in out.iter_mut().enumerate() {
            let up = spec.neighbor(i, j, 1).map_or(0.0, |k| vj[k].max(0.0));
            let dn = spec.neighbor(i, j, -1).map_or(0.0, |k| (-vj[k]).max(0.0));
            *o += ((up - vj[i].max(0.0)) - ((-vj[i]).max(0.0) - dn)) / dx;
        }
    }
    GridFunction::from_raw(spec.clone(), out)
}

/// Single-variable convolution (f ⊛ g)_α = Σ_η f_{α−η} g_η Δx^d, with f
/// looked up under the boundary rule.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> GridFunction {
    let spec = f.spec();
    spec.ensure_same(g.spec()).expect("convolution operands on different lattices");
    let vol = spec.cell_volume();
    let d = spec.dim;
    let mut a = vec![0i64; d];
    let mut e = vec![0i64; d];
    let mut diff = vec![0i64; d];
    let values = (0..spec.len())
        .map(|i| {
            spec.alpha_into(i, &mut a);
            let mut acc = 0.0;
            for (k, &gk) in g.values.iter().enumerate() {
                if gk == 0.0 {
                    continue;
                }
                spec.alpha_into(k, &mut e);
                for m in 0..d {
                    diff[m] = a[m] - e[m];
                }
                acc += f.get(&diff) * gk;
            }
            acc * vol
        })
        .collect();
    GridFunction::from_raw(spec.clone(), values)
}

/// Discrete L^p norm (Δx^d Σ|f|^p)^{1/p}; p = ∞ is the plain maximum.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    lp_norm_slice(f.values(), f.spec().cell_volume(), p)
}

pub(crate) fn lp_norm_slice(values: &[f64], vol: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("norm exponent must be ≥ 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    if p == 1.0 {
        return Ok(vol * values.iter().map(|v| v.abs()).sum::<f64>());
    }
    if p == 2.0 {
        return Ok((vol * values.iter().map(|v| v * v).sum::<f64>()).sqrt());
    }
    // Scale by the maximum so large p cannot overflow.
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = values.iter().map(|v| (v.abs() / m).powf(p)).sum();
    Ok(m * (vol * s).powf(1.0 / p))
}

/// Hölder conjugate p' = p/(p−1).
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Δx^d Σ_α f_α g_α.
pub fn inner(f: &GridFunction, g: &GridFunction) -> f64 {
    assert_eq!(f.spec, g.spec, "inner product on different lattices");
    f.spec.cell_volume() * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>()
}

/// Cell averages of `f` by tensorised Gauss–Legendre quadrature.
pub fn project(f: impl Fn(&[f64]) -> f64, spec: &GridSpec, order: usize) -> Result<GridFunction> {
    if order == 0 {
        return Err(Error::InvalidArgument("quadrature order must be ≥ 1".into()));
    }
    let (nodes, weights) = gauss_legendre(order);
    let d = spec.dim;
    let dx = spec.dx;
    let npts = order.pow(d as u32);
    let mut values = Vec::with_capacity(spec.len());
    let mut x = vec![0.0; d];
    for i in 0..spec.len() {
        let centre = spec.x(i);
        let mut acc = 0.0;
        for q in 0..npts {
            let mut rem = q;
            let mut w = 1.0;
            for m in (0..d).rev() {
                let k = rem % order;
                rem /= order;
                x[m] = centre[m] + 0.5 * dx * nodes[k];
                w *= 0.5 * weights[k];
            }
            let fx = f(&x);
            if !fx.is_finite() {
                return Err(Error::NonFiniteSample { alpha: spec.alpha(i), value: fx });
            }
            acc += w * fx;
        }
        values.push(acc);
    }
    Ok(GridFunction::from_raw(spec.clone(), values))
}

/// Gauss–Legendre order used by `project` unless overridden.
pub const DEFAULT_PROJECTION_ORDER: usize = 3;

#[cfg(test)]
mod tests;
