//! Two-index lattice kernels F_{α,β} (α = field point, β = source) and
//! their time-sampled counterparts.

use super::{lp_norm_slice, GridFunction, GridSpec};
use crate::error::{Error, Result};
use crate::quadrature::TimeQuadrature;
use ndarray::{Array2, Axis, Zip};
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2 {
    spec: GridSpec,
    entries: Array2<f64>,
}

impl Kernel2 {
    pub fn new(spec: GridSpec, entries: Array2<f64>) -> Result<Self> {
        let n = spec.len();
        if entries.dim() != (n, n) {
            return Err(Error::Mismatch(format!("kernel of shape {:?} on {n} cells", entries.dim())));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("kernel has non-finite entries".into()));
        }
        Ok(Kernel2 { spec, entries })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        let n = spec.len();
        Kernel2 { spec: spec.clone(), entries: Array2::zeros((n, n)) }
    }

    /// δ_{α−β}/Δx^d, the unit of ⊛.
    pub fn dirac(spec: &GridSpec) -> Self {
        let n = spec.len();
        let mut k = Kernel2::zeros(spec);
        let v = 1.0 / spec.cell_volume();
        for i in 0..n {
            k.entries[[i, i]] = v;
        }
        k
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }
    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn get(&self, alpha: usize, beta: usize) -> f64 {
        self.entries[[alpha, beta]]
    }

    pub fn column(&self, beta: usize) -> GridFunction {
        GridFunction::from_raw(self.spec.clone(), self.entries.column(beta).to_vec())
    }

    pub fn add(&self, other: &Kernel2) -> Kernel2 {
        assert_eq!(self.spec, other.spec);
        Kernel2 { spec: self.spec.clone(), entries: &self.entries + &other.entries }
    }

    pub fn sub(&self, other: &Kernel2) -> Kernel2 {
        assert_eq!(self.spec, other.spec);
        Kernel2 { spec: self.spec.clone(), entries: &self.entries - &other.entries }
    }

    pub fn scale(&self, a: f64) -> Kernel2 {
        Kernel2 { spec: self.spec.clone(), entries: &self.entries * a }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// ‖F‖_{L^p_α L^q_β}: inner norm over β per row, then outer over α.
    pub fn mixed_norm(&self, p_outer: f64, q_inner: f64) -> Result<f64> {
        let vol = self.spec.cell_volume();
        let rows: Vec<f64> = self
            .entries
            .axis_iter(Axis(0))
            .map(|row| lp_norm_slice(&row.to_vec(), vol, q_inner))
            .collect::<Result<_>>()?;
        lp_norm_slice(&rows, vol, p_outer)
    }

    /// Σ_η F_{α,η} ψ_η Δx^d.
    pub fn apply(&self, psi: &GridFunction) -> GridFunction {
        self.spec.ensure_same(psi.spec()).expect("kernel and field on different lattices");
        let v = ndarray::ArrayView1::from(psi.values());
        let out = self.entries.dot(&v) * self.spec.cell_volume();
        GridFunction::from_raw(self.spec.clone(), out.to_vec())
    }

    /// Δx^d Σ_β F_{α,β} for every α.
    pub fn row_mass(&self) -> GridFunction {
        let vol = self.spec.cell_volume();
        let values = self.entries.axis_iter(Axis(0)).map(|r| vol * r.sum()).collect();
        GridFunction::from_raw(self.spec.clone(), values)
    }

    fn alpha_stencil(&self, j: usize, taps: &[(i64, f64)]) -> Kernel2 {
        let spec = &self.spec;
        assert!(j < spec.dim(), "direction out of range");
        let n = spec.len();
        let mut out = Array2::zeros((n, n));
        out.axis_iter_mut(Axis(0)).enumerate().for_each(|(a, mut row)| {
            for &(step, w) in taps {
                if let Some(k) = spec.neighbor(a, j, step) {
                    row.scaled_add(w, &self.entries.row(k));
                }
            }
        });
        Kernel2 { spec: spec.clone(), entries: out }
    }

    /// ∇_+^j acting on α.
    pub fn forward_diff_alpha(&self, j: usize) -> Kernel2 {
        let h = self.spec.dx();
        self.alpha_stencil(j, &[(1, 1.0 / h), (0, -1.0 / h)])
    }

    /// ∇_−^j acting on α.
    pub fn backward_diff_alpha(&self, j: usize) -> Kernel2 {
        let h = self.spec.dx();
        self.alpha_stencil(j, &[(0, 1.0 / h), (-1, -1.0 / h)])
    }

    /// ∇_+^j ∇_−^j acting on α.
    pub fn second_diff_alpha(&self, j: usize) -> Kernel2 {
        let h2 = self.spec.dx() * self.spec.dx();
        self.alpha_stencil(j, &[(1, 1.0 / h2), (0, -2.0 / h2), (-1, 1.0 / h2)])
    }

    /// Multiply row α by w_α.
    pub fn scale_rows(&self, w: &GridFunction) -> Kernel2 {
        let mut out = self.entries.clone();
        Zip::from(out.rows_mut()).and(w.values()).for_each(|mut row, &s| row *= s);
        Kernel2 { spec: self.spec.clone(), entries: out }
    }
}

/// (F ⊛ G)_{α,β} = Σ_η F_{α,η} G_{η,β} Δx^d.
pub fn convolve2(f: &Kernel2, g: &Kernel2) -> Result<Kernel2> {
    f.spec.ensure_same(&g.spec)?;
    let mut out = f.entries.dot(&g.entries);
    out *= f.spec.cell_volume();
    Ok(Kernel2 { spec: f.spec.clone(), entries: out })
}

/// Uniform time mesh t_k = k·h, k = 0..=steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeMesh {
    h: f64,
    steps: usize,
}

impl TimeMesh {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time mesh needs a positive horizon and steps, got T={horizon}, steps={steps}"
            )));
        }
        Ok(TimeMesh { h: horizon / steps as f64, steps })
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }
    pub fn time(&self, k: usize) -> f64 {
        self.h * k as f64
    }
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
    /// The same spacing truncated to `steps` intervals.
    pub fn prefix(&self, steps: usize) -> TimeMesh {
        TimeMesh { h: self.h, steps }
    }
    pub fn same_as(&self, other: &TimeMesh) -> bool {
        self.steps == other.steps && (self.h - other.h).abs() <= 1e-14 * self.h
    }
}

#[derive(Clone, Debug)]
pub struct TimeKernel {
    spec: GridSpec,
    mesh: TimeMesh,
    frames: Vec<Kernel2>,
}

impl TimeKernel {
    pub fn new(spec: GridSpec, mesh: TimeMesh, frames: Vec<Kernel2>) -> Result<Self> {
        if frames.len() != mesh.steps + 1 {
            return Err(Error::Mismatch(format!(
                "{} frames for {} mesh points",
                frames.len(),
                mesh.steps + 1
            )));
        }
        for f in &frames {
            spec.ensure_same(&f.spec)?;
        }
        Ok(TimeKernel { spec, mesh, frames })
    }

    /// Frames generated by `f(t_k)`, in parallel over k.
    pub fn from_fn(spec: &GridSpec, mesh: TimeMesh, f: impl Fn(f64) -> Kernel2 + Sync) -> Self {
        let frames = (0..=mesh.steps).into_par_iter().map(|k| f(mesh.time(k))).collect();
        TimeKernel { spec: spec.clone(), mesh, frames }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn mesh(&self) -> TimeMesh {
        self.mesh
    }
    pub fn frames(&self) -> &[Kernel2] {
        &self.frames
    }
    pub fn frame(&self, k: usize) -> &Kernel2 {
        &self.frames[k]
    }

    pub fn add(&self, other: &TimeKernel) -> TimeKernel {
        assert!(self.mesh.same_as(&other.mesh));
        let frames = self.frames.iter().zip(&other.frames).map(|(a, b)| a.add(b)).collect();
        TimeKernel { spec: self.spec.clone(), mesh: self.mesh, frames }
    }

    pub fn sub(&self, other: &TimeKernel) -> TimeKernel {
        assert!(self.mesh.same_as(&other.mesh));
        let frames = self.frames.iter().zip(&other.frames).map(|(a, b)| a.sub(b)).collect();
        TimeKernel { spec: self.spec.clone(), mesh: self.mesh, frames }
    }

    /// Restriction to the first `steps` intervals.
    pub fn prefix(&self, steps: usize) -> TimeKernel {
        TimeKernel {
            spec: self.spec.clone(),
            mesh: self.mesh.prefix(steps),
            frames: self.frames[..=steps].to_vec(),
        }
    }

    /// Per-frame ‖·‖_{L^p_α L^q_β}.
    pub fn frame_norms(&self, p_outer: f64, q_inner: f64) -> Result<Vec<f64>> {
        self.frames.iter().map(|f| f.mixed_norm(p_outer, q_inner)).collect()
    }

    /// ‖·‖_{L¹_t L^p_α L^q_β}, time integral by the trapezoid rule.
    pub fn l1_time_norm(&self, p_outer: f64, q_inner: f64) -> Result<f64> {
        let norms = self.frame_norms(p_outer, q_inner)?;
        let w = TimeQuadrature::Trapezoid.weights(self.mesh.steps);
        Ok(self.mesh.h * norms.iter().zip(&w).map(|(n, w)| n * w).sum::<f64>())
    }
}

/// Time convolution (F ⊛ G)(t_k) = ∫₀^{t_k} F(t_k − s) ⊛ G(s) ds.
pub fn convolve2_time(f: &TimeKernel, g: &TimeKernel, quad: TimeQuadrature) -> Result<TimeKernel> {
    f.spec.ensure_same(&g.spec)?;
    if !f.mesh.same_as(&g.mesh) {
        return Err(Error::Mismatch("time meshes differ".into()));
    }
    let spec = &f.spec;
    let n = spec.len();
    let scale = f.mesh.h * spec.cell_volume();
    let frames = (0..=f.mesh.steps)
        .into_par_iter()
        .map(|k| {
            let w = quad.weights(k);
            let mut acc = Array2::<f64>::zeros((n, n));
            for (i, &wi) in w.iter().enumerate() {
                if wi != 0.0 {
                    ndarray::linalg::general_mat_mul(
                        wi * scale,
                        &f.frames[k - i].entries,
                        &g.frames[i].entries,
                        1.0,
                        &mut acc,
                    );
                }
            }
            Kernel2 { spec: spec.clone(), entries: acc }
        })
        .collect();
    Ok(TimeKernel { spec: spec.clone(), mesh: f.mesh, frames })
}

/// Grid functions sampled on a uniform time mesh.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    spec: GridSpec,
    mesh: TimeMesh,
    frames: Vec<GridFunction>,
}

impl TimeSeries {
    pub fn new(spec: GridSpec, mesh: TimeMesh, frames: Vec<GridFunction>) -> Result<Self> {
        if frames.len() != mesh.steps + 1 {
            return Err(Error::Mismatch(format!(
                "{} frames for {} mesh points",
                frames.len(),
                mesh.steps + 1
            )));
        }
        for f in &frames {
            spec.ensure_same(f.spec())?;
        }
        Ok(TimeSeries { spec, mesh, frames })
    }

    pub fn from_fn(spec: &GridSpec, mesh: TimeMesh, f: impl Fn(f64) -> GridFunction) -> Self {
        let frames = (0..=mesh.steps).map(|k| f(mesh.time(k))).collect();
        TimeSeries { spec: spec.clone(), mesh, frames }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn mesh(&self) -> TimeMesh {
        self.mesh
    }
    pub fn frames(&self) -> &[GridFunction] {
        &self.frames
    }
    pub fn frame(&self, k: usize) -> &GridFunction {
        &self.frames[k]
    }
    pub fn last(&self) -> &GridFunction {
        self.frames.last().expect("time series has at least one frame")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::TestRng;

    fn random_kernel(spec: &GridSpec, rng: &mut TestRng) -> Kernel2 {
        let n = spec.len();
        Kernel2::new(spec.clone(), Array2::from_shape_fn((n, n), |_| rng.uniform(-1.0, 1.0))).unwrap()
    }

    #[test]
    fn dirac_is_the_unit_of_convolution() {
        let spec = GridSpec::new(1, 3, 0.3).unwrap();
        let mut rng = TestRng::new(1);
        let g = random_kernel(&spec, &mut rng);
        let out = convolve2(&Kernel2::dirac(&spec), &g).unwrap();
        assert!(out.sub(&g).max_abs() < 1e-14);
    }

    #[test]
    fn convolve2_matches_triple_loop() {
        let spec = GridSpec::new(1, 2, 0.7).unwrap();
        let mut rng = TestRng::new(5);
        let f = random_kernel(&spec, &mut rng);
        let g = random_kernel(&spec, &mut rng);
        let out = convolve2(&f, &g).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let mut s = 0.0;
                for e in 0..5 {
                    s += f.get(a, e) * g.get(e, b) * 0.7;
                }
                assert!((out.get(a, b) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn convolve2_is_associative() {
        let spec = GridSpec::new(2, 2, 0.4).unwrap();
        let mut rng = TestRng::new(11);
        for _ in 0..5 {
            let f = random_kernel(&spec, &mut rng);
            let g = random_kernel(&spec, &mut rng);
            let h = random_kernel(&spec, &mut rng);
            let l = convolve2(&convolve2(&f, &g).unwrap(), &h).unwrap();
            let r = convolve2(&f, &convolve2(&g, &h).unwrap()).unwrap();
            assert!(l.sub(&r).max_abs() <= 1e-12 * l.max_abs());
        }
    }

    #[test]
    fn young_inequality_holds_on_random_kernels() {
        // For a general kernel the second factor is the column norm
        // sup_β ‖G_{·,β}‖_p, read off the transpose.
        let spec = GridSpec::new(1, 4, 0.25).unwrap();
        let mut rng = TestRng::new(3);
        for p in [1.5, 2.0, 3.0, 6.0] {
            let pp = p / (p - 1.0);
            for _ in 0..20 {
                let f = random_kernel(&spec, &mut rng);
                let g = random_kernel(&spec, &mut rng);
                let lhs = convolve2(&f, &g).unwrap().mixed_norm(f64::INFINITY, f64::INFINITY).unwrap();
                let gt = Kernel2::new(spec.clone(), g.entries.t().to_owned()).unwrap();
                let rhs = f.mixed_norm(f64::INFINITY, pp).unwrap() * gt.mixed_norm(f64::INFINITY, p).unwrap();
                assert!(lhs <= rhs * (1.0 + 1e-12), "p={p}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn young_inequality_with_row_norms_for_translation_invariant_kernels() {
        let spec = GridSpec::new(1, 5, 0.2).unwrap();
        let n = spec.len();
        let mut rng = TestRng::new(4);
        let toeplitz = |rng: &mut TestRng| {
            let taps: Vec<f64> = (0..2 * n - 1).map(|_| rng.uniform(-1.0, 1.0)).collect();
            Kernel2::new(spec.clone(), Array2::from_shape_fn((n, n), |(a, b)| taps[a + n - 1 - b])).unwrap()
        };
        for p in [1.0, 2.0, 4.0] {
            let pp = if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
            for _ in 0..20 {
                let f = toeplitz(&mut rng);
                let g = toeplitz(&mut rng);
                let lhs = convolve2(&f, &g).unwrap().mixed_norm(f64::INFINITY, f64::INFINITY).unwrap();
                let rhs = f.mixed_norm(f64::INFINITY, pp).unwrap() * g.mixed_norm(f64::INFINITY, p).unwrap();
                assert!(lhs <= rhs * (1.0 + 1e-12), "p={p}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn mixed_norm_nests_inner_then_outer() {
        let spec = GridSpec::new(1, 1, 0.5).unwrap();
        let mut e = Array2::zeros((3, 3));
        e[[0, 0]] = 1.0;
        e[[0, 1]] = 1.0;
        e[[2, 2]] = 3.0;
        let k = Kernel2::new(spec, e).unwrap();
        // rows: L^1_β = 0.5·2 = 1, 0, 1.5; outer sup = 1.5; outer L^1 = 0.5·2.5.
        assert!((k.mixed_norm(f64::INFINITY, 1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((k.mixed_norm(1.0, 1.0).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn time_convolution_of_constants_is_linear_in_time() {
        let spec = GridSpec::new(1, 2, 0.5).unwrap();
        let mesh = TimeMesh::new(1.0, 10).unwrap();
        let f = TimeKernel::from_fn(&spec, mesh, |_| Kernel2::dirac(&spec));
        for quad in [TimeQuadrature::LeftRectangle, TimeQuadrature::Trapezoid, TimeQuadrature::Gregory] {
            let out = convolve2_time(&f, &f, quad).unwrap();
            for k in 0..=10 {
                let expect = Kernel2::dirac(&spec).scale(mesh.time(k));
                assert!(out.frame(k).sub(&expect).max_abs() < 1e-12, "{quad:?} k={k}");
            }
        }
    }

    #[test]
    fn mismatched_meshes_are_rejected() {
        let spec = GridSpec::new(1, 2, 0.5).unwrap();
        let a = TimeKernel::from_fn(&spec, TimeMesh::new(1.0, 4).unwrap(), |_| Kernel2::zeros(&spec));
        let b = TimeKernel::from_fn(&spec, TimeMesh::new(1.0, 5).unwrap(), |_| Kernel2::zeros(&spec));
        assert!(convolve2_time(&a, &b, TimeQuadrature::Trapezoid).is_err());
        let other = GridSpec::new(1, 3, 0.5).unwrap();
        assert!(convolve2(&Kernel2::zeros(&spec), &Kernel2::zeros(&other)).is_err());
    }
}
