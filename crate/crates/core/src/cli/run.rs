//! End-to-end scenario: build, normalize, curvature, Green bound, assemble, verify.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use crate::assembler::{assemble_global_form, positivity_check, write_eigenvalue_csv, GlobalFormReport};
use crate::curvature::{curvature_report, CurvatureReport, IdentityResidual};
use crate::error::{Error, Result};
use crate::family::{build_admissible, normalize_admissible, pollute, AdmissibleForm, BuildOptions, Provenance, SParameterStencil};
use crate::green::{self, family_green_bound, green_lower_bound, GreenOperator};
use crate::ma::SolverOptions;
use crate::torus::PeriodFamily;

#[derive(Clone, Debug, Serialize)]
pub struct FamilyInfo {
    pub name: String,
    pub n: usize,
    pub domain_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenSummary {
    /// Bound used in the assembly: maximum over the sampled fibers and the base points.
    pub c: f64,
    pub kind: &'static str,
    pub sampled_fibers: usize,
    pub sampled_max: f64,
    pub grid: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub label: String,
    pub s: [f64; 2],
    pub provenance: Provenance,
    pub green_c: f64,
    pub green_minimizer: Vec<f64>,
    pub curvature: CurvatureReport,
    pub global_form: GlobalFormReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenSummary>,
    pub points: Vec<PointReport>,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
    pub pass: bool,
}

impl ScenarioReport {
    /// 0 when every verifier passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Residual of a named identity at a point.
    pub fn residual(&self, point: usize, name: &str) -> Option<f64> {
        self.points.get(point)?.curvature.residual(name)
    }
}

struct Prepared {
    label: String,
    s: Complex64,
    form: AdmissibleForm,
    curvature: CurvatureReport,
    bound: green::GreenBound,
    reconstruction: f64,
}

fn stage<T>(name: &str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|e| StageError { stage: name.to_string(), message: e.to_string() })
}

fn prepare(cfg: &ScenarioConfig, fam: &PeriodFamily, label: String, s: Complex64) -> std::result::Result<Prepared, StageError> {
    let n = fam.dim();
    let local = if s == Complex64::new(0.0, 0.0) { fam.clone() } else { stage("family", fam.recentered(s))? };
    let stencil = stage("family", SParameterStencil::new(Complex64::new(0.0, 0.0), cfg.step))?;
    let opts = BuildOptions {
        points: cfg.grid_for(n),
        mode: cfg.mode.clone(),
        solver: SolverOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter, ..Default::default() },
    };
    let built = stage("build", build_admissible(&local, &stencil, &opts))?;
    let mut form = stage("normalize", normalize_admissible(&built))?;
    if cfg.break_normalization != 0.0 {
        form = pollute(&form, cfg.break_normalization);
    }
    let curvature = stage("curvature", curvature_report(&form, s, &cfg.tolerances(), cfg.seed))?;
    let op = stage("green", GreenOperator::new(form.grid().clone()))?;
    let bound = stage("green", green_lower_bound(&op, cfg.green_tol, cfg.green_grid_for(n)))?;
    let reconstruction = stage("green", green::verify_green_reconstruction(&form, &op))?;
    Ok(Prepared { label, s, form, curvature, bound, reconstruction })
}

/// Run the whole pipeline. Configuration problems are returned as errors (exit status 2);
/// numerical failures and verifier failures are recorded in the report (exit status 1).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let fam = cfg.validate()?;
    let n = fam.dim();
    let mut report = ScenarioReport {
        tool: "cyfam",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg.clone(),
        family: Some(FamilyInfo { name: cfg.family.label(), n, domain_radius: fam.domain_radius() }),
        green: None,
        points: Vec::new(),
        failures: Vec::new(),
        error: None,
        pass: false,
    };
    let targets: Vec<(String, Complex64)> =
        cfg.base_points.iter().map(|p| Ok((p.label(), p.resolve(&fam)?))).collect::<Result<_>>()?;
    let prepared: std::result::Result<Vec<Prepared>, StageError> =
        targets.into_par_iter().map(|(label, s)| prepare(cfg, &fam, label, s)).collect();
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => {
            report.error = Some(e);
            return Ok(report);
        }
    };
    let periods: Vec<_> = green::sample_base_points(&fam, cfg.green_samples_for(n))
        .into_iter()
        .map(|s| fam.period(s))
        .collect::<Result<_>>()?;
    let family_bound = match family_green_bound(&periods, cfg.green_tol, cfg.green_grid_for(n)) {
        Ok(b) => b,
        Err(e) => {
            report.error = Some(StageError { stage: "green".into(), message: e.to_string() });
            return Ok(report);
        }
    };
    let c = prepared.iter().map(|p| p.bound.c).fold(family_bound.c, f64::max);
    report.green = Some(GreenSummary {
        c,
        kind: family_bound.kind,
        sampled_fibers: family_bound.per_fiber.len(),
        sampled_max: family_bound.c,
        grid: cfg.green_grid_for(n),
        tol: cfg.green_tol,
    });
    let tolerances = cfg.tolerances();
    for p in prepared {
        let theta = p.curvature.theta_ss;
        let global = match assemble_global_form(&p.form, p.curvature.wp, c).and_then(|a| {
            let r = positivity_check(&a, theta, [p.s.re, p.s.im])?;
            write_point_files(cfg, report.points.len(), &p.form, &a)?;
            Ok(r)
        }) {
            Ok(r) => r,
            Err(e) => {
                report.error = Some(StageError { stage: "assemble".into(), message: e.to_string() });
                return Ok(report);
            }
        };
        let mut curvature = p.curvature;
        for (name, value) in [
            ("green-reconstruction", p.reconstruction),
            ("eq20", global.eq20_margin),
            ("remark1", global.remark1_margin),
        ] {
            curvature.residuals.push(IdentityResidual::new(name, value, &tolerances));
        }
        let idx = report.points.len();
        for r in curvature.residuals.iter().filter(|r| !r.pass) {
            report.failures.push(format!("point {idx} ({}): {}", p.label, r.name));
        }
        if !global.pass {
            report.failures.push(format!("point {idx} ({}): positivity", p.label));
        }
        report.points.push(PointReport {
            label: p.label,
            s: [p.s.re, p.s.im],
            provenance: p.form.provenance(),
            green_c: p.bound.c,
            green_minimizer: p.bound.minimizer,
            curvature,
            global_form: global,
        });
    }
    report.pass = report.failures.is_empty();
    Ok(report)
}

fn write_point_files(cfg: &ScenarioConfig, idx: usize, w: &AdmissibleForm, a: &crate::assembler::AssembledForm) -> Result<()> {
    if cfg.out.is_empty() {
        return Ok(());
    }
    let dir = Path::new(&cfg.out).join("grids").join(format!("point{idx}"));
    w.write_dir(&dir)?;
    write_eigenvalue_csv(a, fs::File::create(dir.join("eigenvalues.csv"))?)?;
    let op = GreenOperator::new(w.grid().clone())?;
    green::write_kernel_profile(&op, 64, fs::File::create(dir.join("green_profile.csv"))?)?;
    Ok(())
}

/// Write `report.json` into the configured output directory.
pub fn write_report(cfg: &ScenarioConfig, report: &ScenarioReport) -> Result<()> {
    if cfg.out.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(&cfg.out)?;
    fs::write(Path::new(&cfg.out).join("report.json"), report.to_json())?;
    Ok(())
}

/// Map errors that reach the top level to exit statuses.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}
