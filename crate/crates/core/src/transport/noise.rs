//! Reproducible Wiener increments. Each path owns a ChaCha8 stream (stream
//! id = path index) and every step consumes a fixed number of words, so any
//! (path, step) increment can also be regenerated directly.

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BrownianDriver {
    seed: u64,
    dim: usize,
    dt_bits: u64,
    n_steps: usize,
}

impl BrownianDriver {
    pub fn new(seed: u64, dim: usize, dt: f64, n_steps: usize) -> Result<Self> {
        if dim == 0 || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("need d ≥ 1 and Δt > 0, got d={dim}, Δt={dt}")));
        }
        Ok(BrownianDriver { seed, dim, dt_bits: dt.to_bits(), n_steps })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn dt(&self) -> f64 {
        f64::from_bits(self.dt_bits)
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// u32 words consumed per step: two u64 per Box–Muller pair.
    fn words_per_step(&self) -> u128 {
        4 * self.dim.div_ceil(2) as u128
    }

    fn rng(&self, path: u64, step: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng.set_word_pos(step as u128 * self.words_per_step());
        rng
    }

    pub fn path(&self, path: u64) -> PathNoise {
        PathNoise { rng: self.rng(path, 0), dim: self.dim, scale: self.dt().sqrt(), step: 0, n_steps: self.n_steps }
    }

    /// W^{n+1} − W^n for one path, drawn independently of any iterator.
    pub fn increment(&self, path: u64, step: usize) -> Vec<f64> {
        let mut p = PathNoise { rng: self.rng(path, step), dim: self.dim, scale: self.dt().sqrt(), step, n_steps: self.n_steps };
        let mut out = vec![0.0; self.dim];
        p.next_into(&mut out);
        out
    }
}

pub struct PathNoise {
    rng: ChaCha8Rng,
    dim: usize,
    scale: f64,
    step: usize,
    n_steps: usize,
}

impl PathNoise {
    /// Writes the next d increments, each N(0, Δt).
    pub fn next_into(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim, "increment buffer has the wrong dimension");
        let mut j = 0;
        while j < self.dim {
            let (a, b) = box_muller(unit_open(self.rng.next_u64()), unit(self.rng.next_u64()));
            out[j] = a * self.scale;
            if j + 1 < self.dim {
                out[j + 1] = b * self.scale;
            }
            j += 2;
        }
        self.step += 1;
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

impl Iterator for PathNoise {
    type Item = Vec<f64>;
    fn next(&mut self) -> Option<Vec<f64>> {
        if self.step >= self.n_steps {
            return None;
        }
        let mut out = vec![0.0; self.dim];
        self.next_into(&mut out);
        Some(out)
    }
}

/// [0, 1) with 53 random bits.
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// (0, 1], safe for the logarithm.
fn unit_open(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}
