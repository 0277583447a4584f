//! Study configuration. Files are flat TOML key-value lists with the field
//! names below; command-line flags override file values.
//!
//! ```toml
//! fixture = "rough:0.6"
//! dim = 1
//! dx = [0.08, 0.04, 0.02, 0.01]
//! horizon = 0.5
//! cfl = 0.9
//! paths = 1000
//! seed = 42
//! p = 2.0
//! ```

use crate::error::{LabError, Result};
use crate::fixtures::Fixture;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "LATTRANS_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "lattrans-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Stability,
    Convergence,
    Consistency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fixture: String,
    pub dim: usize,
    /// Box half-width L; the fixture's own default when absent.
    pub half_width: Option<f64>,
    /// Δx ladder, strictly decreasing.
    pub dx: Vec<f64>,
    pub horizon: f64,
    /// Δt as a fraction of the explicit stability bound.
    pub cfl: f64,
    pub paths: usize,
    pub seed: u64,
    /// Integrability exponent for norms, p > d.
    pub p: f64,
    /// Reference lattice spacing of the mean oracle; finest Δx / 4 by default.
    pub oracle_dx: Option<f64>,
    /// Centres of the pairing test functions.
    pub centres: Vec<f64>,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            fixture: "rough".into(),
            dim: 1,
            half_width: None,
            dx: vec![0.08, 0.04, 0.02, 0.01],
            horizon: 0.5,
            cfl: 0.9,
            paths: 1000,
            seed: 42,
            p: 2.0,
            oracle_dx: None,
            centres: vec![0.0],
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_study(study: Study) -> Self {
        match study {
            Study::Stability => ExperimentConfig::default(),
            Study::Convergence => ExperimentConfig {
                fixture: "smooth".into(),
                dx: vec![0.16, 0.08, 0.04, 0.02],
                horizon: 0.25,
                paths: 4000,
                ..Default::default()
            },
            Study::Consistency => ExperimentConfig {
                fixture: "smooth".into(),
                dx: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
                paths: 2,
                ..Default::default()
            },
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn fixture(&self) -> Result<Fixture> {
        self.fixture.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        self.fixture()?;
        if self.dim == 0 || self.dim > 3 {
            return bad(format!("dimension must be 1, 2 or 3, got {}", self.dim));
        }
        if self.dx.is_empty() || self.dx.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return bad(format!("Δx ladder must be non-empty and positive, got {:?}", self.dx));
        }
        if self.dx.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("Δx ladder must be strictly decreasing, got {:?}", self.dx));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if self.paths < 2 {
            return bad(format!("need at least 2 paths for a variance estimate, got {}", self.paths));
        }
        if !(self.p > self.dim as f64) {
            return bad(format!("need p > d, got p = {} with d = {}", self.p, self.dim));
        }
        if let Some(l) = self.half_width {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("half-width must be positive, got {l}"));
            }
        }
        if let Some(h) = self.oracle_dx {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("oracle Δx must be positive, got {h}"));
            }
        }
        Ok(())
    }

    pub fn half_width(&self) -> Result<f64> {
        Ok(self.half_width.unwrap_or(self.fixture()?.half_width()))
    }

    /// Explicit directory, else $LATTRANS_OUT, else ./lattrans-out.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
