//! Scenario configuration (TOML).

use std::collections::BTreeMap;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curvature::{default_tolerances, is_margin};
use crate::error::{Error, Result};
use crate::family::Mode;
use crate::linalg::CMat;
use crate::torus::{self, PeriodFamily};

/// A preset name or explicit polynomial coefficients `Omega(s) = sum C_k s^k`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FamilySpec {
    Preset(String),
    Custom {
        /// One matrix per power of `s`, rows of `[re, im]` pairs.
        coefficients: Vec<Vec<Vec<[f64; 2]>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain_radius: Option<f64>,
    },
}

impl FamilySpec {
    pub fn label(&self) -> String {
        match self {
            FamilySpec::Preset(name) => name.clone(),
            FamilySpec::Custom { .. } => "custom".into(),
        }
    }

    pub fn resolve(&self) -> Result<PeriodFamily> {
        match self {
            FamilySpec::Preset(name) => Ok(torus::preset(name)?.family),
            FamilySpec::Custom { coefficients, domain_radius } => {
                let mats = coefficients
                    .iter()
                    .map(|rows| {
                        let n = rows.len();
                        if n == 0 || rows.iter().any(|r| r.len() != n) {
                            return Err(Error::Config("coefficient matrix must be square and nonempty".into()));
                        }
                        Ok(CMat::from_fn(n, n, |r, c| Complex64::new(rows[r][c][0], rows[r][c][1])))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let fam = match domain_radius {
                    Some(r) => PeriodFamily::new(mats, *r),
                    None => PeriodFamily::with_estimated_radius(mats),
                };
                fam.map_err(|e| Error::Config(format!("custom family: {e}")))
            }
        }
    }
}

/// Base point given either as a raw parameter `s` or as the period `tau` it should carry
/// (one-dimensional fibers only).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum BasePoint {
    S(String),
    At(String),
}

impl BasePoint {
    pub fn label(&self) -> String {
        match self {
            BasePoint::S(v) => format!("s={v}"),
            BasePoint::At(v) => format!("tau={v}"),
        }
    }

    /// Parameter value in the family's base.
    pub fn resolve(&self, fam: &PeriodFamily) -> Result<Complex64> {
        match self {
            BasePoint::S(v) => parse_complex(v),
            BasePoint::At(v) => {
                let tau = parse_complex(v)?;
                if fam.dim() != 1 {
                    return Err(Error::Config("--at names a period tau and needs one-dimensional fibers; use --s".into()));
                }
                solve_for_period(fam, tau)
            }
        }
    }
}

pub fn parse_complex(v: &str) -> Result<Complex64> {
    Complex64::from_str(v.trim()).map_err(|_| Error::Config(format!("cannot parse complex number '{v}'")))
}

/// Newton iteration for `Omega(s) = tau` on a scalar family.
fn solve_for_period(fam: &PeriodFamily, tau: Complex64) -> Result<Complex64> {
    let mut s = Complex64::new(0.0, 0.0);
    for _ in 0..100 {
        let r = fam.omega_at(s)[(0, 0)] - tau;
        if r.norm() < 1e-14 * (1.0 + tau.norm()) {
            return Ok(s);
        }
        let d = fam.derivative(s)[(0, 0)];
        if d.norm() == 0.0 {
            break;
        }
        s -= r / d;
    }
    Err(Error::Config(format!("no base point carries period {tau}")))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 30 }
    }
}

/// Full description of a run. Unset sizes are chosen from the fiber dimension.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub family: FamilySpec,
    /// Expected fiber dimension; checked against the family when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_points")]
    pub base_points: Vec<BasePoint>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Per-identity overrides of the default tolerances.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Off-diagonal grid per direction for the Green minimum search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_grid: Option<usize>,
    /// Base points per direction for the sampled family Green bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub green_samples: Option<usize>,
    #[serde(default = "default_green_tol")]
    pub green_tol: f64,
    /// Amount added to the `s sbar` entry after normalization (negative control).
    #[serde(default)]
    pub break_normalization: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: String,
}

fn default_step() -> f64 {
    1e-2
}

fn default_points() -> Vec<BasePoint> {
    vec![BasePoint::S("0".into())]
}

fn default_mode() -> Mode {
    Mode::ClosedForm
}

fn default_green_tol() -> f64 {
    1e-6
}

fn default_out() -> String {
    "cyfam-out".into()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            family: FamilySpec::Preset("elliptic".into()),
            n: None,
            grid: None,
            step: default_step(),
            base_points: default_points(),
            mode: default_mode(),
            solver: SolverConfig::default(),
            tolerances: BTreeMap::new(),
            green_grid: None,
            green_samples: None,
            green_tol: default_green_tol(),
            break_normalization: 0.0,
            seed: 0,
            out: default_out(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Default tolerances with this config's overrides applied.
    pub fn tolerances(&self) -> BTreeMap<String, f64> {
        let mut t = default_tolerances();
        t.extend(self.tolerances.iter().map(|(k, v)| (k.clone(), *v)));
        t
    }

    pub fn grid_for(&self, n: usize) -> usize {
        self.grid.unwrap_or(if n == 1 { 32 } else { 16 })
    }

    pub fn green_grid_for(&self, n: usize) -> usize {
        self.green_grid.unwrap_or(if n == 1 { 32 } else { 6 })
    }

    pub fn green_samples_for(&self, n: usize) -> usize {
        self.green_samples.unwrap_or(if n == 1 { 9 } else { 3 })
    }

    /// Checks everything that does not need numerics; errors are configuration errors.
    pub fn validate(&self) -> Result<PeriodFamily> {
        let fam = self.family.resolve().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        if let Some(n) = self.n {
            if n != fam.dim() {
                return Err(Error::Config(format!("config says n = {n} but the family has n = {}", fam.dim())));
            }
        }
        let known = default_tolerances();
        for (name, v) in &self.tolerances {
            if !known.contains_key(name) {
                return Err(Error::Config(format!("unknown tolerance '{name}'")));
            }
            let ok = if is_margin(name) { *v >= 0.0 } else { *v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::Config(format!("tolerance {name} = {v} must be positive")));
            }
        }
        if !(self.step > 0.0) {
            return Err(Error::Config(format!("step {} must be positive", self.step)));
        }
        if !(self.green_tol > 0.0) {
            return Err(Error::Config("green_tol must be positive".into()));
        }
        if self.base_points.is_empty() {
            return Err(Error::Config("no base points".into()));
        }
        let grid = self.grid_for(fam.dim());
        if grid < 8 || grid % 2 != 0 {
            return Err(Error::Config(format!("grid {grid} must be even and at least 8")));
        }
        if let Mode::Perturbed { psi, .. } = &self.mode {
            psi.validate(fam.dim(), grid)?;
        }
        for p in &self.base_points {
            p.resolve(&fam)?;
        }
        Ok(fam)
    }
}

/// Commented default configuration; parsing it yields `ScenarioConfig::default()`.
pub fn dump_config_schema() -> String {
    let mut out = String::from(
        "# cyfam scenario configuration\n\
         #\n\
         # family          preset name (see `cyfam list-presets`) or\n\
         #                 { coefficients = [C0, C1, ...], domain_radius = r } with each C_k an\n\
         #                 n x n matrix of [re, im] pairs, Omega(s) = sum C_k s^k\n\
         # n               optional expected fiber dimension\n\
         # grid            nodes per lattice direction (default 32 for n = 1, 16 otherwise)\n\
         # step            base stencil step h\n\
         # base_points     list of { s = \"z\" } (parameter) or { at = \"tau\" } (period, n = 1)\n\
         # mode            { kind = \"closed-form\" } or { kind = \"perturbed\", solve = true,\n\
         #                 psi = { modes = [{ k = [..], amplitude = a, phase = p, s_coeff = [re, im] }] } }\n\
         # solver          Monge-Ampere Newton tolerance and iteration cap\n\
         # tolerances      per-identity overrides, e.g. eq1 = 1e-6\n\
         # green_grid      minimum-search grid per direction (default 32 for n = 1, 6 otherwise)\n\
         # green_samples   base points per direction for the family Green bound (9 / 3)\n\
         # green_tol       accuracy required of the Green bound\n\
         # break_normalization  add this to the s-sbar entry after normalizing (negative control)\n\
         # seed            seed for randomized checks\n\
         # out             output directory\n\n",
    );
    out.push_str(&ScenarioConfig::default().to_toml());
    out
}
