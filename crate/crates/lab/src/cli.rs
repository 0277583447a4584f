//! Command-line driver. Exit status: 0 when the run passes (or is trivially
//! satisfied, inconclusive or oracle-limited), 1 when an acceptance check
//! fails or the numerics break down, 2 on usage errors.

use crate::config::{ExperimentConfig, Study};
use crate::consistency::consistency_suite;
use crate::error::{LabError, Result};
use crate::fixtures::Fixture;
use crate::report::{Check, ExperimentReport, LevelRecord, Status, Table};
use crate::studies::{dual_sup_grad, run_paths, stability_study, convergence_study};
use crate::validate::{calculus_check, dual_solve, kernel_validate, parametrix_validate, KernelArgs, ParametrixArgs};
use clap::{Args, Parser, Subcommand};
use lattrans::lattice::inner;
use lattrans::transport::{simulate_path, McEstimate, PathConfig};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "lattrans", version, about = "Lattice scheme for stochastic transport: validation runs and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory (default: $LATTRANS_OUT, else ./lattrans-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// TOML key-value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// smooth, rough[:a] or const[:σ].
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Box half-width; defaults to the fixture's own.
    #[arg(long)]
    half_width: Option<f64>,
    /// Comma-separated, strictly decreasing Δx ladder.
    #[arg(long, value_delimiter = ',')]
    dx: Option<Vec<f64>>,
    /// Final time.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Fraction of each level's explicit step bound.
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exponent of the consistency distances.
    #[arg(long)]
    p: Option<f64>,
    /// Oracle spacing; defaults to a quarter of the finest Δx.
    #[arg(long)]
    oracle_dx: Option<f64>,
    /// Test-function centres for the convergence study.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    centres: Option<Vec<f64>>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decay exponents of the lattice heat kernel; CSV t,norm,fitted_slope.
    KernelValidate {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 0.1)]
        dx: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 0.25)]
        t_min: f64,
        #[arg(long, default_value_t = 25.0)]
        t_max: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long, default_value_t = 9)]
        n_times: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Parametrix checks: Neumann series, Γ residual order, propagation.
    ParametrixValidate {
        #[arg(long, default_value_t = 4.0)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        dx_levels: Vec<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Dual problem diagnostics on Δx = 0.08, 0.04, ...; CSV dx,min_phi,sup_phi,sup_grad.
    DualSolve {
        #[arg(long)]
        fixture: String,
        #[arg(long, default_value_t = 3)]
        dx_levels: usize,
        #[arg(long = "T", default_value_t = 0.5)]
        horizon: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo run of the scheme at one Δx.
    Simulate {
        #[arg(long)]
        fixture: String,
        #[arg(long)]
        dx: f64,
        /// Defaults to 0.9 times the explicit stability bound.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T", default_value_t = 0.5)]
        horizon: f64,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the t,l2_energy trace of path 0.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// L² stability ladder.
    StabilityStudy(StudyArgs),
    /// Weak-pairing convergence against the mean oracle.
    ConvergenceStudy(StudyArgs),
    /// Consistency of projected and differenced coefficients.
    ConsistencySuite(StudyArgs),
    /// Discrete calculus identities on random fixtures.
    CalculusCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn study_config(study: Study, a: &StudyArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::for_study(study),
    };
    if let Some(v) = &a.fixture {
        c.fixture = v.clone();
    }
    macro_rules! set {
        ($($f:ident => $g:ident),*) => { $( if let Some(v) = a.$f.clone() { c.$g = v; } )* };
    }
    set!(dim => dim, dx => dx, horizon => horizon, cfl => cfl, paths => paths, seed => seed, p => p, centres => centres);
    if a.half_width.is_some() {
        c.half_width = a.half_width;
    }
    if a.oracle_dx.is_some() {
        c.oracle_dx = a.oracle_dx;
    }
    if a.out.out.is_some() {
        c.output_dir = a.out.out.clone();
    }
    c.validate()?;
    Ok(c)
}

fn out_dir(out: &OutArgs) -> PathBuf {
    ExperimentConfig { output_dir: out.out.clone(), ..Default::default() }.output_dir()
}

fn simulate(fixture: &str, dx: f64, dt: Option<f64>, horizon: f64, paths: usize, seed: u64, trace: bool) -> Result<ExperimentReport> {
    let fixture: Fixture = fixture.parse()?;
    if paths < 2 {
        return Err(LabError::Config("need at least 2 paths".into()));
    }
    let (coeffs, u0) = fixture.build(1, dx)?;
    let dt = dt.unwrap_or(0.9 * coeffs.step_bound());
    let pc = PathConfig::new(horizon, dt, seed);
    let e0 = inner(&u0, &u0);
    let finals = run_paths(&coeffs, &u0, &pc, paths, |s| (!s.diverged).then(|| inner(&s.u, &s.u) / e0))?;
    let ok: Vec<f64> = finals.iter().flatten().copied().collect();
    let divergences = paths - ok.len();
    let est = McEstimate::from_samples(&ok, divergences);
    let mut report = ExperimentReport::new("simulate", None, seed);
    report.levels.push(LevelRecord {
        dx,
        dt: pc.effective_dt(),
        paths,
        energy_ratio: est.mean,
        stderr: est.stderr,
        sup_grad_dual: dual_sup_grad(&coeffs, horizon)?,
        divergences,
    });
    report.fitted.insert("step_bound".into(), coeffs.step_bound());
    report.checks.push(Check::at_most("no_divergence", divergences as f64, 0.0));
    if trace {
        let s = simulate_path(&coeffs, &u0, &PathConfig { record_trace: true, ..pc }, 0)?;
        let mut t = Table::new(&["t", "l2_energy"]);
        for (time, e) in s.trace {
            t.push(vec![time, e]);
        }
        report.tables.insert("trace".into(), t);
    }
    report.status = report.status_from_checks();
    Ok(report)
}

fn execute(cmd: Command) -> Result<(ExperimentReport, PathBuf, &'static str)> {
    Ok(match cmd {
        Command::KernelValidate { d, dx, c, t_min, t_max, p, m, n_times, out } => {
            let args = KernelArgs { dim: d, dx, c, t_min, t_max, p, m, n_times };
            (kernel_validate(&args)?, out_dir(&out), "kernel_validate")
        }
        Command::ParametrixValidate { p, dx_levels, out } => {
            (parametrix_validate(&ParametrixArgs { dx_levels, p })?, out_dir(&out), "parametrix_validate")
        }
        Command::DualSolve { fixture, dx_levels, horizon, out } => {
            (dual_solve(fixture.parse()?, dx_levels, horizon)?, out_dir(&out), "dual_solve")
        }
        Command::Simulate { fixture, dx, dt, horizon, paths, seed, trace, out } => {
            (simulate(&fixture, dx, dt, horizon, paths, seed, trace)?, out_dir(&out), "simulate")
        }
        Command::StabilityStudy(a) => {
            let c = study_config(Study::Stability, &a)?;
            (stability_study(&c)?, c.output_dir(), "stability_study")
        }
        Command::ConvergenceStudy(a) => {
            let c = study_config(Study::Convergence, &a)?;
            (convergence_study(&c)?, c.output_dir(), "convergence_study")
        }
        Command::ConsistencySuite(a) => {
            let c = study_config(Study::Consistency, &a)?;
            (consistency_suite(&c)?, c.output_dir(), "consistency_suite")
        }
        Command::CalculusCheck { seed, count, out } => (calculus_check(seed, count)?, out_dir(&out), "calculus_check"),
    })
}

pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (report, dir, stem) = match execute(cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if e.is_usage() { 2 } else { 1 };
        }
    };
    match report.write(&dir, stem) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write reports to {}: {e}", dir.display());
            return 2;
        }
    }
    for c in &report.checks {
        println!("{:<40} {:>14.6e}  bound {:>12.4e}  {}", c.name, c.value, c.bound, if c.pass { "ok" } else { "FAILED" });
    }
    println!("status: {}", serde_json::to_value(report.status).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default());
    i32::from(report.status == Status::Fail)
}
