//! Series representations of a(t) = e^{tL}δ, L = Σ_j c^j ∇_+^j∇_−^j, used as
//! oracles for the closed form.

use super::{check_time, DiffusionDiag, HeatKernelEval};
use crate::error::{Error, Result};
use crate::lattice::{second_diff, Boundary, GridFunction, GridSpec, NeighborTable};

/// Smallest n with x^{n+1}/(n+1)! · (1 − x/(n+2))^{−1} < tol, i.e. the
/// number of Taylor terms after which e^x is resolved to `tol`.
pub fn series_terms_required(x: f64, tol: f64) -> usize {
    let mut ln_term = 0.0; // ln(x^{n+1}/(n+1)!) for the current n
    let lx = x.max(f64::MIN_POSITIVE).ln();
    let mut n = 0usize;
    loop {
        ln_term += lx - ((n + 1) as f64).ln();
        if (n + 2) as f64 > x {
            let bound = ln_term - (1.0 - x / (n + 2) as f64).ln();
            if bound < tol.ln() {
                return n;
            }
        }
        n += 1;
    }
}

fn restrict(big: &GridFunction, spec: &GridSpec) -> GridFunction {
    GridFunction::from_index_fn(spec, |alpha| big.get(alpha))
}

/// Σ_{n=0}^{n_terms} tⁿ/n! Lⁿδ with no remainder check.
///
/// Computed on a box enlarged by `n_terms` so the stencil never sees the
/// boundary. Terms alternate in sign at the origin, so rounding grows like
/// e^{4Σr^j}·ε; use [`kernel_series_uniformized`] beyond r ≈ 3.
pub fn kernel_series_partial(
    spec: &GridSpec,
    c: &DiffusionDiag,
    t: f64,
    n_terms: usize,
) -> Result<HeatKernelEval> {
    c.check_against(spec)?;
    check_time(t)?;
    let work = match spec.boundary() {
        Boundary::Periodic => spec.clone(),
        Boundary::ZeroExterior => spec.with_radius(spec.radius() + n_terms)?,
    };
    let origin = vec![0i64; spec.dim()];
    let mut term = GridFunction::dirac(&work, &origin)?;
    let mut sum = term.clone();
    for n in 1..=n_terms {
        let mut lt = GridFunction::zeros(&work);
        for j in 0..spec.dim() {
            lt = lt.add(&second_diff(&term, j).scale(c.get(j)));
        }
        term = lt.scale(t / n as f64);
        sum = sum.add(&term);
    }
    Ok(HeatKernelEval::new(c.clone(), t, restrict(&sum, spec)))
}

/// Truncated exponential series, rejected unless the operator-norm
/// remainder (4Σc^j t/Δx²)^{n+1}/(n+1)! after `n_terms` is below 1e−14.
pub fn kernel_series(spec: &GridSpec, c: &DiffusionDiag, t: f64, n_terms: usize) -> Result<HeatKernelEval> {
    check_time(t)?;
    let norm = 4.0 * c.sum() * t / (spec.dx() * spec.dx());
    let required = series_terms_required(norm, 1e-14);
    if n_terms < required {
        return Err(Error::SeriesTooShort { required, given: n_terms });
    }
    kernel_series_partial(spec, c, t, n_terms)
}

/// Series in the shifted operator: with R = Σ r^j and the nonnegative
/// stencil P = Σ_j (r^j/2R)(S_+^j + S_−^j),
/// e^{tL}δ = Σ_n e^{−R} Rⁿ/n! Pⁿδ,
/// a sum of nonnegative terms, so it stays accurate for large r.
///
/// `tol` bounds both the Poisson tail and, for the zero-exterior case, the
/// probability that the lattice walk generated by P leaves the working box;
/// either error enters the values as tol·Δx^{−d}.
pub fn kernel_series_uniformized(
    spec: &GridSpec,
    c: &DiffusionDiag,
    t: f64,
    tol: f64,
) -> Result<HeatKernelEval> {
    c.check_against(spec)?;
    check_time(t)?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let d = spec.dim();
    let rs: Vec<f64> = (0..d).map(|j| c.r(j, t, spec.dx())).collect();
    let big_r: f64 = rs.iter().sum();
    if big_r == 0.0 {
        let dirac = GridFunction::dirac(spec, &vec![0; d])?;
        return Ok(HeatKernelEval::new(c.clone(), t, dirac));
    }
    let weights = poisson_weights(big_r, tol);
    let taps: Vec<f64> = rs.iter().map(|r| r / (2.0 * big_r)).collect();
    let values = match spec.boundary() {
        Boundary::Periodic => walk_periodic(spec, &taps, &weights),
        Boundary::ZeroExterior => {
            let n_max = weights.len() - 1;
            let escape = (2.0 * n_max as f64 * (4.0 * d as f64 / tol).ln()).sqrt().ceil() as usize;
            let b = spec.radius().max(escape).min(spec.radius() + n_max);
            walk_box(spec, b, &taps, &weights)
        }
    };
    let inv_vol = 1.0 / spec.cell_volume();
    let values = GridFunction::from_raw(spec.clone(), values.into_iter().map(|v| v * inv_vol).collect());
    Ok(HeatKernelEval::new(c.clone(), t, values))
}

/// e^{−R}Rⁿ/n! for n = 0..=n_max, with the tail beyond n_max below tol.
fn poisson_weights(big_r: f64, tol: f64) -> Vec<f64> {
    let ln_r = big_r.ln();
    let mut ln_w = -big_r;
    let mut out = vec![ln_w.exp()];
    let mut n = 0usize;
    loop {
        n += 1;
        ln_w += ln_r - (n as f64).ln();
        out.push(ln_w.exp());
        let next = (n + 2) as f64;
        if next > big_r {
            // Σ_{k>n} w_k ≤ w_{n+1}/(1 − R/(n+2)).
            let ln_tail = ln_w + ln_r - ((n + 1) as f64).ln() - (1.0 - big_r / next).ln();
            if ln_tail < tol.ln() {
                return out;
            }
        }
    }
}

fn walk_periodic(spec: &GridSpec, taps: &[f64], weights: &[f64]) -> Vec<f64> {
    let nb = NeighborTable::new(spec);
    let origin = spec.index(&vec![0; spec.dim()]).unwrap();
    let mut cur = vec![0.0; spec.len()];
    cur[origin] = 1.0;
    let mut next = vec![0.0; spec.len()];
    let mut acc = vec![0.0; spec.len()];
    for (n, &w) in weights.iter().enumerate() {
        if n > 0 {
            for (i, o) in next.iter_mut().enumerate() {
                *o = taps
                    .iter()
                    .enumerate()
                    .map(|(j, tj)| tj * (cur[nb.plus(j)[i]] + cur[nb.minus(j)[i]]))
                    .sum();
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (a, v) in acc.iter_mut().zip(&cur) {
            *a += w * v;
        }
    }
    acc
}

/// Lattice walk on the box of radius `b`, padded by one zero layer so the
/// stencil needs no bounds checks; after n steps only |α|_∞ ≤ n is touched.
fn walk_box(spec: &GridSpec, b: usize, taps: &[f64], weights: &[f64]) -> Vec<f64> {
    let d = spec.dim();
    let side = 2 * b + 3;
    let strides: Vec<usize> = (0..d).map(|j| side.pow((d - 1 - j) as u32)).collect();
    let centre: usize = strides.iter().map(|s| s * (b + 1)).sum();
    let total = side.pow(d as u32);
    let mut cur = vec![0.0; total];
    let mut next = vec![0.0; total];
    let mut acc = vec![0.0; total];
    cur[centre] = 1.0;
    acc[centre] = weights[0];
    let last = strides[d - 1];
    debug_assert_eq!(last, 1);

    for (n, &w) in weights.iter().enumerate().skip(1) {
        let rho = n.min(b) as i64;
        for_each_row(d, rho, &strides, centre, |start, len| {
            for i in start..start + len {
                let mut v = 0.0;
                for (j, tj) in taps.iter().enumerate() {
                    v += tj * (cur[i + strides[j]] + cur[i - strides[j]]);
                }
                next[i] = v;
            }
        });
        std::mem::swap(&mut cur, &mut next);
        if w > 0.0 {
            for_each_row(d, rho, &strides, centre, |start, len| {
                for i in start..start + len {
                    acc[i] += w * cur[i];
                }
            });
        }
    }

    let n = spec.radius() as i64;
    let mut alpha = vec![0i64; d];
    (0..spec.len())
        .map(|flat| {
            spec.alpha_into(flat, &mut alpha);
            let k = alpha.iter().zip(&strides).map(|(a, s)| (a + b as i64 + 1) as usize * s).sum::<usize>();
            debug_assert!(alpha.iter().all(|a| a.abs() <= n));
            acc[k]
        })
        .collect()
}

/// Calls `f(start, len)` for each contiguous last-direction row of the
/// hypercube |α|_∞ ≤ rho around `centre`.
fn for_each_row(d: usize, rho: i64, strides: &[usize], centre: usize, mut f: impl FnMut(usize, usize)) {
    let len = (2 * rho + 1) as usize;
    let mut outer = vec![-rho; d - 1];
    loop {
        let mut start = centre as i64 - rho;
        for (o, s) in outer.iter().zip(strides) {
            start += o * *s as i64;
        }
        f(start as usize, len);
        let mut j = d - 1;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            outer[j] += 1;
            if outer[j] <= rho {
                break;
            }
            outer[j] = -rho;
        }
    }
}
