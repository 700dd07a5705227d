//! Command-line front end. Exit statuses: 0 all verifiers pass, 1 a verifier or numerical
//! stage failed, 2 the configuration could not be used.

mod config;
mod run;

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

pub use config::{dump_config_schema, parse_complex, BasePoint, FamilySpec, ScenarioConfig, SolverConfig};
pub use run::{exit_code_for, run_scenario, write_report, FamilyInfo, GreenSummary, PointReport, ScenarioReport, StageError};

use crate::curvature::{relative_canonical_curvature, verify_first_chern, wp_metric};
use crate::error::{Error, Result};
use crate::family::{build_admissible, BuildOptions, SParameterStencil};
use crate::fiber::{FiberGrid, TensorField};
use crate::green::{family_green_bound, GreenOperator};
use crate::ma::{self, MongeAmpereProblem, SolverOptions};
use crate::torus::{self, PeriodMatrix};

#[derive(Parser, Debug)]
#[command(name = "cyfam", version, about = "Kähler forms on families of polarized complex tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the full pipeline on a preset or a config file.
    Run(RunArgs),
    /// List the preset families.
    ListPresets,
    /// Print the commented default configuration.
    Schema,
    /// Lower bound -c of the Green kernel on one or more fibers.
    GreenBound(GreenArgs),
    /// Weil-Petersson metric and curvature at one base point.
    Wp(WpArgs),
    /// Solve the fiberwise Monge-Ampère equation for an injected potential.
    SolveMa(SolveMaArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Preset family (overrides the config file's family).
    pub family: Option<String>,
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Per-identity tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base point given by its period tau (n = 1); repeatable.
    #[arg(long = "at", allow_hyphen_values = true)]
    pub at: Vec<String>,
    /// Base point given by its parameter s; repeatable.
    #[arg(long = "s", allow_hyphen_values = true)]
    pub s: Vec<String>,
    /// Add this amount to the normalized s-sbar entry (negative control).
    #[arg(long, allow_hyphen_values = true)]
    pub break_normalization: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GreenArgs {
    /// Fiber periods tau (n = 1); repeatable.
    #[arg(long = "tau", allow_hyphen_values = true)]
    pub tau: Vec<String>,
    /// Sample the fibers of a preset family instead.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub samples: usize,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Write the kernel profile CSV of the first fiber here.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct WpArgs {
    pub family: String,
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 1e-2)]
    pub step: f64,
}

#[derive(Args, Debug)]
pub struct SolveMaArgs {
    #[arg(long, default_value = "i", allow_hyphen_values = true)]
    pub tau: String,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Amplitude of the injected potential `a cos(2 pi x)`.
    #[arg(long, default_value_t = 0.05)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 30)]
    pub max_iter: usize,
    /// Write the Newton trace CSV here.
    #[arg(long)]
    pub out: Option<String>,
}

/// Build the scenario for `run` from a config file and flags.
pub fn scenario_from_args(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(f) = &args.family {
        cfg.family = FamilySpec::Preset(f.clone());
    } else if args.config.is_none() {
        return Err(Error::Config("run needs a preset family or --config".into()));
    }
    if let Some(g) = args.grid {
        cfg.grid = Some(g);
    }
    if let Some(h) = args.step {
        cfg.step = h;
    }
    for t in &args.tol {
        let (name, value) = t.split_once('=').ok_or_else(|| Error::Config(format!("--tol expects name=value, got '{t}'")))?;
        let v: f64 = value.trim().parse().map_err(|_| Error::Config(format!("bad tolerance value '{value}'")))?;
        cfg.tolerances.insert(name.trim().to_string(), v);
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !args.at.is_empty() || !args.s.is_empty() {
        cfg.base_points = args.at.iter().map(|v| BasePoint::At(v.clone())).chain(args.s.iter().map(|v| BasePoint::S(v.clone()))).collect();
    }
    if let Some(b) = args.break_normalization {
        cfg.break_normalization = b;
    }
    Ok(cfg)
}

/// Parse `argv`, run, print to `out`/`err`, and return the exit status.
pub fn main_with_args<I, T, W, E>(argv: I, out: &mut W, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code_for(&e)
        }
    }
}

fn print_json<W: Write, T: Serialize>(out: &mut W, v: &T) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn dispatch<W: Write>(cmd: Command, out: &mut W) -> Result<i32> {
    match cmd {
        Command::Run(args) => {
            let cfg = scenario_from_args(&args)?;
            let report = run_scenario(&cfg)?;
            write_report(&cfg, &report)?;
            for p in &report.points {
                writeln!(
                    out,
                    "{:<14} wp={:.12} theta={:.12} c={:.6} min_eig={:.6e} {}",
                    p.label,
                    p.curvature.wp,
                    p.curvature.theta_ss,
                    p.global_form.c,
                    p.global_form.min_eigenvalue,
                    if p.global_form.effective { "" } else { "(non-effective)" }
                )?;
            }
            if let Some(e) = &report.error {
                writeln!(out, "FAIL stage {}: {}", e.stage, e.message)?;
            }
            for f in &report.failures {
                writeln!(out, "FAIL {f}")?;
            }
            writeln!(out, "{}", if report.pass { "PASS" } else { "FAIL" })?;
            Ok(report.exit_code())
        }
        Command::ListPresets => {
            for name in torus::preset_names() {
                let p = torus::preset(name)?;
                writeln!(out, "{:<12} {}", p.name, p.description)?;
            }
            Ok(0)
        }
        Command::Schema => {
            write!(out, "{}", dump_config_schema())?;
            Ok(0)
        }
        Command::GreenBound(args) => {
            let periods: Vec<PeriodMatrix> = if let Some(f) = &args.family {
                let fam = torus::preset(f)?.family;
                crate::green::sample_base_points(&fam, args.samples).into_iter().map(|s| fam.period(s)).collect::<Result<_>>()?
            } else if args.tau.is_empty() {
                vec![PeriodMatrix::from_tau(Complex64::new(0.0, 1.0))?]
            } else {
                args.tau
                    .iter()
                    .map(|t| PeriodMatrix::from_tau(parse_complex(t)?).map_err(|e| Error::Config(e.to_string())))
                    .collect::<Result<_>>()?
            };
            if !(args.tol > 0.0) {
                return Err(Error::Config("--tol must be positive".into()));
            }
            let bound = family_green_bound(&periods, args.tol, args.grid)?;
            if let Some(path) = &args.out {
                let op = GreenOperator::for_period(periods[0].clone(), None)?;
                crate::green::write_kernel_profile(&op, 64, std::fs::File::create(path)?)?;
            }
            print_json(out, &bound)?;
            Ok(0)
        }
        Command::Wp(args) => {
            let fam = torus::preset(&args.family)?.family;
            let point = match (&args.at, &args.s) {
                (Some(t), _) => BasePoint::At(t.clone()),
                (None, Some(s)) => BasePoint::S(s.clone()),
                (None, None) => BasePoint::S("0".into()),
            };
            let s = point.resolve(&fam)?;
            let local = if s == Complex64::new(0.0, 0.0) { fam } else { fam.recentered(s)? };
            let grid = args.grid.unwrap_or(if local.dim() == 1 { 32 } else { 16 });
            let st = SParameterStencil::new(Complex64::new(0.0, 0.0), args.step)?;
            let w = build_admissible(&local, &st, &BuildOptions::closed_form(grid))?;
            let wp = wp_metric(&w)?;
            let curv = relative_canonical_curvature(&w, 1e-6)?;
            #[derive(Serialize)]
            struct WpReport {
                s: [f64; 2],
                wp: f64,
                wp_log_det: f64,
                theta_ss: f64,
                eq1: f64,
            }
            print_json(
                out,
                &WpReport {
                    s: [s.re, s.im],
                    wp,
                    wp_log_det: curv.analytic_ss,
                    theta_ss: curv.ss.components()[0][0].re,
                    eq1: verify_first_chern(&curv, wp),
                },
            )?;
            Ok(0)
        }
        Command::SolveMa(args) => {
            let tau = parse_complex(&args.tau)?;
            let period = PeriodMatrix::from_tau(tau).map_err(|e| Error::Config(e.to_string()))?;
            let grid = FiberGrid::new(period, args.grid).map_err(|e| Error::Config(e.to_string()))?;
            let a = args.amplitude;
            let psi = TensorField::scalar_from_fn(grid.clone(), |x| Complex64::new(a * (std::f64::consts::TAU * x[0]).cos(), 0.0));
            let problem = MongeAmpereProblem::from_potential(grid, &psi)?;
            let sol = ma::solve_ricci_flat(&problem, &SolverOptions { tol: args.tol, max_iter: args.max_iter, ..Default::default() })?;
            // the injected potential is recovered up to a constant
            let err = sol.potential.add(&psi)?;
            let mean = err.components()[0].iter().sum::<Complex64>() / err.components()[0].len() as f64;
            let recovery = err.map(|z| z - mean).max_abs();
            if let Some(path) = &args.out {
                ma::write_trace_csv(&sol.trace, std::fs::File::create(path)?)?;
            }
            #[derive(Serialize)]
            struct MaReport<'a> {
                iterations: usize,
                residual: f64,
                b: f64,
                recovery_error: f64,
                trace: &'a [ma::TraceRow],
            }
            print_json(out, &MaReport { iterations: sol.iterations, residual: sol.residual, b: sol.b, recovery_error: recovery, trace: &sol.trace })?;
            Ok(0)
        }
    }
}
