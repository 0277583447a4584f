//! Deterministic validation runs behind the `calculus-check`,
//! `kernel-validate`, `parametrix-validate` and `dual-solve` subcommands.

use crate::error::{LabError, Result};
use crate::fixtures::Fixture;
use crate::report::{Check, ExperimentReport, Table};
use lattrans::dual::{
    dual_diagnostics, solve_dual_duhamel, solve_dual_ode, solve_dual_ode_sampled, DualProblem, DualStepper,
    DuhamelConfig,
};
use lattrans::heat_kernel::{
    decay_exponent_fit, geometric_times, kernel_closed, kernel_series_uniformized, required_radius, DiffusionDiag,
    DEFAULT_TAIL_TOL,
};
use lattrans::lattice::{
    calculus_identity_suite, lp_norm, project, Boundary, GridFunction, GridSpec, TimeMesh, VectorGridFunction,
};
use lattrans::parametrix::{
    assemble_gamma, frozen_kernel, gamma_ode_residual, gradient_l1_norm, interior_max_abs, neumann_phi,
    phi_fixed_point_residual, propagate_gamma, ParametrixConfig, VariableCoefficients,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::collections::BTreeMap;

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn new(seed: u64) -> Self {
        Uniform(ChaCha8Rng::seed_from_u64(seed))
    }
    fn next(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }
}

/// Random values on |α|_∞ ≤ r, zero elsewhere.
fn compact_field(spec: &GridSpec, r: i64, amp: f64, rng: &mut Uniform) -> GridFunction {
    let rng = std::cell::RefCell::new(rng);
    GridFunction::from_index_fn(spec, |a| {
        if a.iter().all(|v| v.abs() <= r) {
            rng.borrow_mut().next(-amp, amp)
        } else {
            0.0
        }
    })
}

/// Every discrete calculus identity on `count` random fixtures, alternating
/// d = 1 and d = 2.
pub fn calculus_check(seed: u64, count: usize) -> Result<ExperimentReport> {
    if count == 0 {
        return Err(LabError::Config("need at least one fixture".into()));
    }
    let mut rng = Uniform::new(seed);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..count {
        let dim = 1 + i % 2;
        let n = if dim == 1 { 12 } else { 6 };
        let spec = GridSpec::new(dim, n, rng.next(0.05, 0.5))?;
        let r = n as i64 / 2 - 1;
        let f = compact_field(&spec, r, 1.0, &mut rng);
        let g = compact_field(&spec, r, 1.0, &mut rng);
        let v = VectorGridFunction::new((0..dim).map(|_| compact_field(&spec, n as i64 - 1, 2.0, &mut rng)).collect())?;
        for res in calculus_identity_suite(&f, &g, &v).residuals {
            // Group directions: "product_rule[0]" and "product_rule[1]" share a row.
            let key = res.name.split('[').next().unwrap_or(&res.name).to_string();
            let e = worst.entry(key).or_insert(0.0);
            *e = e.max(res.relative);
        }
    }
    let mut report = ExperimentReport::new("calculus-check", None, seed);
    let max = worst.values().copied().fold(0.0, f64::max);
    for (name, v) in &worst {
        report.fitted.insert(name.clone(), *v);
    }
    report.fitted.insert("fixtures".into(), count as f64);
    report.checks.push(Check::at_most("max_relative_residual", max, 1e-13));
    report.status = report.status_from_checks();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelArgs {
    pub dim: usize,
    pub dx: f64,
    pub c: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub p: f64,
    pub m: usize,
    pub n_times: usize,
}

impl Default for KernelArgs {
    fn default() -> Self {
        KernelArgs { dim: 1, dx: 0.1, c: 1.0, t_min: 0.25, t_max: 25.0, p: 2.0, m: 0, n_times: 9 }
    }
}

/// Decay fit of ‖(∇_+)^m a(t)‖_{L^{p'}} against t^{−d/2p − m/2}, plus mass,
/// positivity and L² monotonicity on the fit's box.
pub fn kernel_validate(args: &KernelArgs) -> Result<ExperimentReport> {
    if !(args.p > 1.0) || args.n_times < 3 || !(args.t_min > 0.0 && args.t_max > args.t_min) {
        return Err(LabError::Config(format!("invalid kernel-validate arguments {args:?}")));
    }
    let c = DiffusionDiag::isotropic(args.dim, args.c)?;
    let times = geometric_times(args.t_min, args.t_max, args.n_times);
    let fit = decay_exponent_fit(&c, args.dx, args.p, args.m, 0, &times, None)?;
    let expected = -(args.dim as f64) / (2.0 * args.p) - args.m as f64 / 2.0;
    let mut report = ExperimentReport::new("kernel-validate", None, 0);
    let mut table = Table::new(&["t", "norm", "fitted_slope"]);
    for (t, n) in fit.times.iter().zip(&fit.norms) {
        table.push(vec![*t, *n, fit.slope]);
    }
    report.tables.insert("decay".into(), table);
    report.fitted.insert("slope".into(), fit.slope);
    report.fitted.insert("expected_slope".into(), expected);
    report.fitted.insert("max_log_residual".into(), fit.max_residual);
    report.checks.push(Check::at_most("slope_relative_error", (fit.slope - expected).abs() / expected.abs(), 0.05));

    let spec = GridSpec::new(args.dim, fit.radius, args.dx)?;
    let mut mass_err = 0.0f64;
    let mut min_value = f64::INFINITY;
    let mut l2_increase = f64::NEG_INFINITY;
    let mut prev = f64::INFINITY;
    for &t in &times {
        let a = kernel_closed(&spec, &c, t)?;
        mass_err = mass_err.max((a.mass() - 1.0).abs());
        min_value = min_value.min(a.values().min());
        let l2 = lp_norm(a.values(), 2.0)?;
        l2_increase = l2_increase.max(l2 - prev);
        prev = l2;
    }
    report.checks.push(Check::at_most("mass_error", mass_err, 1e-10));
    report.checks.push(Check::at_least("min_value", min_value, 0.0));
    report.checks.push(Check::at_most("l2_increase", l2_increase, 0.0));
    report.status = report.status_from_checks();
    Ok(report)
}

/// Closed form against the uniformized series at r = 2ct/Δx² ∈ `rs`.
///
/// Zero-exterior boxes are sized for a 1e−12 tail. In two dimensions r above
/// 1e3 is checked on a torus, where both evaluations are exact for any box
/// and the cost of the walk stays small.
pub fn kernel_oracle_check(rs: &[f64]) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("kernel-oracle", None, 0);
    let mut table = Table::new(&["dim", "periodic", "r", "max_abs_diff", "mass_error", "min_value"]);
    let dx = 0.1;
    let mut worst = (0.0f64, 0.0f64, f64::INFINITY);
    for dim in 1..=2usize {
        let c = DiffusionDiag::isotropic(dim, 1.0)?;
        for &r in rs {
            let t = r * dx * dx / 2.0;
            let zero_ext = dim == 1 || r <= 1e3;
            let spec = if zero_ext {
                GridSpec::new(dim, required_radius(&c, t, dx, DEFAULT_TAIL_TOL)?, dx)?
            } else {
                GridSpec::new(dim, 40, dx)?.with_boundary(Boundary::Periodic)
            };
            let a = kernel_closed(&spec, &c, t)?;
            let b = kernel_series_uniformized(&spec, &c, t, 1e-16)?;
            let diff = a.values().sub(b.values()).max_abs();
            let mass = (a.mass() - 1.0).abs();
            let min = a.values().min();
            worst = (worst.0.max(diff), worst.1.max(mass), worst.2.min(min));
            table.push(vec![dim as f64, f64::from(u8::from(!zero_ext)), r, diff, mass, min]);
        }
    }
    report.tables.insert("oracle".into(), table);
    report.checks.push(Check::at_most("max_abs_discrepancy", worst.0, 1e-10));
    report.checks.push(Check::at_most("mass_error", worst.1, 1e-10));
    report.checks.push(Check::at_least("min_value", worst.2, 0.0));
    report.status = report.status_from_checks();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametrixArgs {
    /// Lattice spacings for the gradient-integral stability check.
    pub dx_levels: Vec<f64>,
    pub p: f64,
}

impl Default for ParametrixArgs {
    fn default() -> Self {
        ParametrixArgs { dx_levels: vec![0.2, 0.1, 0.05], p: 4.0 }
    }
}

/// c(x) = 1 + 0.1 sin x on the box of half-width 4.8.
fn smooth_diffusion(dx: f64) -> Result<VariableCoefficients> {
    let s = GridSpec::covering(1, 4.8, dx)?;
    Ok(VariableCoefficients::new(vec![project(|x| 1.0 + 0.1 * x[0].sin(), &s, 3)?])?)
}

/// Neumann series, ODE residual order, constant-coefficient degeneration,
/// propagation, the Γ bound shape and gradient integrals across Δx.
pub fn parametrix_validate(args: &ParametrixArgs) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("parametrix-validate", None, 0);
    let c = smooth_diffusion(0.2)?;

    let cfg = ParametrixConfig { frames: 32, ..Default::default() };
    let series = neumann_phi(&c, TimeMesh::new(0.1, 32)?, &cfg)?;
    let res = phi_fixed_point_residual(&series, &cfg)?.l1_time_norm(f64::INFINITY, cfg.p_conjugate())?;
    report.fitted.insert("m_used".into(), series.m_used as f64);
    report.fitted.insert("contraction_ratio".into(), series.contraction_ratio);
    report.checks.push(Check::at_most("phi_fixed_point_residual", res, 2.0 * cfg.tol));

    let max_res = |frames: usize| -> Result<f64> {
        let cfg = ParametrixConfig { frames, ..Default::default() };
        let g = assemble_gamma(&c, TimeMesh::new(0.1, frames)?, &cfg)?;
        let res = gamma_ode_residual(&c, &g.gamma, 4);
        let stride = frames / 16;
        Ok((1..16).map(|i| res[i * stride - 1]).fold(0.0, f64::max))
    };
    let order = (max_res(32)? / max_res(64)?).log2();
    report.checks.push(Check::at_least("gamma_ode_residual_order", order, 1.8));

    let s = GridSpec::new(1, 30, 0.25)?;
    let cc = VariableCoefficients::constant(&s, &[1.0])?;
    let g = assemble_gamma(&cc, TimeMesh::new(0.1, 4)?, &ParametrixConfig { frames: 4, ..Default::default() })?;
    let direct = frozen_kernel(&cc, 0.225)?;
    let degeneration = interior_max_abs(&propagate_gamma(&g.gamma, 2, 1)?.sub(&direct), 20);
    report.checks.push(Check::at_most("constant_coefficient_degeneration", degeneration, 1e-12));

    let base = assemble_gamma(&c, TimeMesh::new(0.05, 32)?, &cfg)?;
    let long = assemble_gamma(&c, TimeMesh::new(0.1, 64)?, &cfg)?;
    let prop = interior_max_abs(&propagate_gamma(&base.gamma, 1, 32)?.sub(long.gamma.frame(64)), 8);
    report.checks.push(Check::at_most("propagation_self_consistency", prop, 1e-8));

    // ‖Γ(t)‖_{L^∞_α L²_β} ~ t^{−1/4} once t ≫ Δx², here over t ∈ [0.0125, 0.2].
    let g = assemble_gamma(
        &smooth_diffusion(0.05)?,
        TimeMesh::new(0.2, 64)?,
        &ParametrixConfig { frames: 64, ..Default::default() },
    )?;
    let (mut xs, mut ys) = (vec![], vec![]);
    for k in [4usize, 8, 16, 32, 64] {
        xs.push(g.gamma.mesh().time(k).ln());
        ys.push(g.gamma.frame(k).mixed_norm(f64::INFINITY, 2.0)?.ln());
    }
    let slope = lattrans::heat_kernel::least_squares(&xs, &ys).0;
    report.fitted.insert("gamma_slope".into(), slope);
    report.checks.push(Check::at_most("gamma_slope_relative_error", (slope + 0.25).abs() / 0.25, 0.1));

    let mut table = Table::new(&["dx", "gradient_l1_norm"]);
    let mut vals = vec![];
    for &dx in &args.dx_levels {
        let c = smooth_diffusion(dx)?;
        let g = assemble_gamma(&c, TimeMesh::new(0.2, 64)?, &ParametrixConfig { frames: 64, ..Default::default() })?;
        let v = gradient_l1_norm(&g.gamma, 0, true, args.p, (2.0 / dx) as usize)?;
        table.push(vec![dx, v]);
        vals.push(v);
    }
    let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    report.checks.push(Check::at_most("gradient_l1_norm_spread", (hi - lo) / hi, 0.25));
    report.tables.insert("gradient_l1_norms".into(), table);
    report.status = report.status_from_checks();
    Ok(report)
}

pub fn dual_problem(fixture: Fixture, dx: f64, horizon: f64) -> Result<DualProblem> {
    let (coeffs, _) = fixture.build(1, dx)?;
    Ok(coeffs.dual_problem(horizon)?)
}

/// Dual solutions on Δx = 0.08·2^{−k}, k < levels: terminal value,
/// nonnegativity, gradient uniformity and a Duhamel cross-check at the
/// coarsest level.
pub fn dual_solve(fixture: Fixture, levels: usize, horizon: f64) -> Result<ExperimentReport> {
    if levels == 0 {
        return Err(LabError::Config("need at least one Δx level".into()));
    }
    let mut report = ExperimentReport::new("dual-solve", None, 0);
    let mut table = Table::new(&["dx", "min_phi", "sup_phi", "sup_grad"]);
    let mut terminal = 0.0f64;
    let mut min_phi = f64::INFINITY;
    let mut grads = vec![];
    for k in 0..levels {
        let dx = 0.08 / f64::from(1u32 << k);
        let p = dual_problem(fixture, dx, horizon)?;
        let phi = solve_dual_ode(&p, horizon / (horizon / 1e-3).ceil(), DualStepper::ImplicitEuler)?;
        terminal = terminal.max(phi.last().values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
        let d = dual_diagnostics(&phi);
        min_phi = min_phi.min(d.min_value);
        grads.push(d.max_grad());
        table.push(vec![dx, d.min_value, d.sup_norm, d.max_grad()]);
    }
    report.tables.insert("levels".into(), table);
    report.checks.push(Check::at_most("terminal_value_error", terminal, 0.0));
    report.checks.push(Check::at_least("min_phi", min_phi, -1e-12));
    let (lo, hi) = grads.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &g| (l.min(g), h.max(g)));
    report.checks.push(Check::at_most("sup_grad_spread", hi / lo, 2.0));

    // Γ is built on a short interval that resolves Δx²/c and reused across it.
    // The frozen kernels live on the whole lattice while the ODE sees a zero
    // exterior, so the box is widened until the edge no longer matters.
    let horizon_cross = 0.2;
    let (coeffs, _) = fixture.build_on(&GridSpec::covering(1, fixture.half_width() + 2.0, 0.08)?)?;
    let p = coeffs.dual_problem(horizon_cross)?;
    let frames = 32;
    let mesh = TimeMesh::new(0.025, frames)?;
    let g = assemble_gamma(p.coeffs(), mesh, &ParametrixConfig { frames, ..Default::default() })?;
    let sol = solve_dual_duhamel(&p, &g.gamma, &DuhamelConfig::default())?;
    let ode = solve_dual_ode_sampled(&p, mesh.h() / 100.0, DualStepper::CrankNicolson, 100)?;
    let diff = sol.phi.frames().iter().zip(ode.frames()).map(|(a, b)| a.sub(b).max_abs()).fold(0.0, f64::max);
    report.checks.push(Check::at_most("duhamel_vs_ode", diff, 1e-5));
    report.fitted.insert("duhamel_subintervals".into(), sol.subintervals.len() as f64);
    report.status = report.status_from_checks();
    Ok(report)
}
