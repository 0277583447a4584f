//! Small linear solvers: tridiagonal LU and Jacobi-preconditioned BiCGSTAB.

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix, reused across time steps.
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    // Modified super-diagonal and inverse pivots from the forward sweep.
    sup_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    /// `sub[i]` couples row i to i−1, `sup[i]` couples row i to i+1.
    pub fn factor(sub: Vec<f64>, diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut sup_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = diag[i] - if i > 0 { sub[i] * prev } else { 0.0 };
            if !(pivot.abs() > 1e-300) {
                return Err(Error::InvalidArgument(format!("singular tridiagonal pivot at row {i}")));
            }
            inv_pivot[i] = 1.0 / pivot;
            sup_mod[i] = sup[i] * inv_pivot[i];
            prev = sup_mod[i];
        }
        Ok(Tridiagonal { sub, sup_mod, inv_pivot })
    }

    pub fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 0..n {
            let carry = if i > 0 { self.sub[i] * rhs[i - 1] } else { 0.0 };
            rhs[i] = (rhs[i] - carry) * self.inv_pivot[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= self.sup_mod[i] * rhs[i + 1];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned BiCGSTAB for a general square system, starting
/// from `x`. Returns the iteration count.
pub fn bicgstab(
    matvec: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = rhs.len();
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut tmp = vec![0.0; n];
    matvec(x, &mut tmp);
    let mut r: Vec<f64> = rhs.iter().zip(&tmp).map(|(b, ax)| b - ax).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            return Ok(it);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] / diag[i];
        }
        matvec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= rel_tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(it + 1);
        }
        for i in 0..n {
            z[i] = s[i] / diag[i];
        }
        matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            break;
        }
    }
    let res = {
        matvec(x, &mut tmp);
        rhs.iter().zip(&tmp).map(|(b, ax)| (b - ax) * (b - ax)).sum::<f64>().sqrt()
    };
    if res <= rel_tol * bnorm {
        return Ok(max_iter);
    }
    Err(Error::NotConverged(format!("BiCGSTAB residual {:.3e} after {max_iter} iterations", res / bnorm)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solution() {
        let n = 7;
        let sub: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let sup: Vec<f64> = (0..n).map(|i| -0.2 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += sub[i] * x[i - 1];
            }
            if i + 1 < n {
                b[i] += sup[i] * x[i + 1];
            }
        }
        let f = Tridiagonal::factor(sub, &diag, &sup).unwrap();
        f.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn bicgstab_solves_a_nonsymmetric_system() {
        let n = 30;
        let a = |i: usize, j: usize| -> f64 {
            if i == j {
                4.0
            } else if j == i + 1 {
                -1.5
            } else if i == j + 1 {
                -0.5
            } else if j == (i + 7) % n {
                0.3
            } else {
                0.0
            }
        };
        let matvec = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = (0..n).map(|j| a(i, j) * x[j]).sum();
            }
        };
        let truth: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).cos()).collect();
        let mut b = vec![0.0; n];
        matvec(&truth, &mut b);
        let mut x = vec![0.0; n];
        let diag = vec![4.0; n];
        bicgstab(matvec, &diag, &b, &mut x, 1e-14, 200).unwrap();
        for i in 0..n {
            assert!((x[i] - truth[i]).abs() < 1e-12);
        }
    }
}
