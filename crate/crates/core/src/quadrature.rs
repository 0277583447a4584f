//! Quadrature rules: Gauss–Legendre for cell averages and uniform-mesh
//! rules for the time integrals in Volterra convolutions.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Rule for ∫₀^{t_k} g(s) ds on the nodes s_i = i·h, i = 0..=k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TimeQuadrature {
    /// h Σ_{i<k} g(s_i); first order, the Picard-natural choice.
    #[default]
    LeftRectangle,
    /// Composite trapezoid; second order.
    Trapezoid,
    /// Trapezoid with fourth-order Gregory end corrections; Newton–Cotes
    /// rules for k < 5.
    Gregory,
}

impl TimeQuadrature {
    /// Weights w_i (without the factor h) for the integral over [0, k·h].
    pub fn weights(self, k: usize) -> Vec<f64> {
        let mut w = vec![1.0; k + 1];
        if k == 0 {
            w[0] = 0.0;
            return w;
        }
        match self {
            TimeQuadrature::LeftRectangle => {
                w[k] = 0.0;
            }
            TimeQuadrature::Trapezoid => {
                w[0] = 0.5;
                w[k] = 0.5;
            }
            TimeQuadrature::Gregory => match k {
                1 => {
                    w[0] = 0.5;
                    w[1] = 0.5;
                }
                2 => w.copy_from_slice(&[1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]),
                3 => w.copy_from_slice(&[3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0]),
                4 => w.copy_from_slice(&[
                    14.0 / 45.0,
                    64.0 / 45.0,
                    24.0 / 45.0,
                    64.0 / 45.0,
                    14.0 / 45.0,
                ]),
                _ => {
                    let g = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
                    for i in 0..3 {
                        w[i] = g[i];
                        w[k - i] = g[i];
                    }
                }
            },
        }
        w
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeQuadrature::LeftRectangle => "left-rectangle",
            TimeQuadrature::Trapezoid => "trapezoid",
            TimeQuadrature::Gregory => "gregory",
        }
    }
}

impl std::str::FromStr for TimeQuadrature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left-rectangle" | "left" => Ok(TimeQuadrature::LeftRectangle),
            "trapezoid" => Ok(TimeQuadrature::Trapezoid),
            "gregory" => Ok(TimeQuadrature::Gregory),
            other => Err(format!("unknown time quadrature '{other}'")),
        }
    }
}
