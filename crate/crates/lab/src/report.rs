//! Report emission. Every study produces the same per-level CSV table plus a
//! JSON summary; study-specific tables go into extra CSV files and into the
//! JSON `tables` object.

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const LEVEL_CSV_HEADER: &str = "dx,dt,paths,energy_ratio,stderr,sup_grad_dual,divergences";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// The oracle's own two-level difference is too large to judge against.
    OracleLimited,
    /// Monte Carlo error exceeds the signal being measured.
    Inconclusive,
    /// Nothing to measure (zero data).
    TrivialPass,
}

impl Status {
    pub fn is_pass(self) -> bool {
        matches!(self, Status::Pass | Status::TrivialPass)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub dx: f64,
    pub dt: f64,
    pub paths: usize,
    pub energy_ratio: f64,
    pub stderr: f64,
    pub sup_grad_dual: f64,
    pub divergences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when value ≤ bound.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound, pass: value <= bound }
    }
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound, pass: value >= bound }
    }
}

/// A named table: header plus rows of numbers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }
    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
}

impl Metadata {
    pub fn now(seed: u64) -> Self {
        Metadata {
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub study: String,
    pub status: Status,
    pub config: Option<ExperimentConfig>,
    pub levels: Vec<LevelRecord>,
    pub fitted: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub tables: BTreeMap<String, Table>,
    pub notes: Vec<String>,
    pub metadata: Metadata,
}

impl ExperimentReport {
    pub fn new(study: &str, config: Option<ExperimentConfig>, seed: u64) -> Self {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            study: study.to_string(),
            status: Status::Pass,
            config,
            levels: vec![],
            fitted: BTreeMap::new(),
            checks: vec![],
            tables: BTreeMap::new(),
            notes: vec![],
            metadata: Metadata::now(seed),
        }
    }

    /// Pass iff every check passes; `Fail` otherwise. Studies may refine it.
    pub fn status_from_checks(&self) -> Status {
        if self.checks.iter().all(|c| c.pass) {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn levels_csv(&self) -> String {
        let mut s = String::from(LEVEL_CSV_HEADER);
        s.push('\n');
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                l.dx, l.dt, l.paths, l.energy_ratio, l.stderr, l.sup_grad_dual, l.divergences
            );
        }
        s
    }

    fn all_finite(&self) -> bool {
        let levels = self.levels.iter().all(|l| {
            [l.dx, l.dt, l.energy_ratio, l.stderr, l.sup_grad_dual].iter().all(|v| v.is_finite())
        });
        let checks = self.checks.iter().all(|c| c.value.is_finite() && c.bound.is_finite());
        let tables = self.tables.values().all(|t| t.rows.iter().flatten().all(|v| v.is_finite()));
        levels && checks && tables && self.fitted.values().all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.all_finite() {
            return Err(LabError::Config(format!("report for {} holds non-finite numbers", self.study)));
        }
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `<stem>.json`, `<stem>.csv` and `<stem>_<table>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let json = self.to_json()?;
        let mut out = vec![];
        let mut put = |name: String, body: &str| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, body)?;
            out.push(p);
            Ok(())
        };
        put(format!("{stem}.json"), &json)?;
        if !self.levels.is_empty() {
            put(format!("{stem}.csv"), &self.levels_csv())?;
        }
        for (name, t) in &self.tables {
            put(format!("{stem}_{name}.csv"), &t.to_csv())?;
        }
        Ok(out)
    }
}
