//! Total-space forms `omega_X` on a base stencil times a fiber grid.
//!
//! Components are kept in the adapted frame `(d_a, D_s)` with `D_s = d/ds` at fixed lattice
//! coordinates. In that frame every component is periodic on the fiber; the coordinate
//! components follow from `D_s = d_s + (Omega' y)^a d_a`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{self, Direction, FiberGrid, Index, MetricField, TensorField};
use crate::linalg::CMat;
use crate::ma::{self, MongeAmpereProblem, SolverOptions};
use crate::torus::PeriodFamily;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Offsets in units of `h`: center, the four axis neighbours, then the half-step copies.
const OFFSETS: [(f64, f64); 9] = [
    (0.0, 0.0),
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (0.5, 0.0),
    (-0.5, 0.0),
    (0.0, 0.5),
    (0.0, -0.5),
];

/// Complex finite-difference stencil in the base with one Richardson level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SParameterStencil {
    center: Complex64,
    h: f64,
}

impl SParameterStencil {
    pub fn new(center: Complex64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("stencil step must be positive, got {h}")));
        }
        Ok(Self { center, h })
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> Vec<Complex64> {
        OFFSETS.iter().map(|&(a, b)| self.center + Complex64::new(a, b) * self.h).collect()
    }

    pub fn check_domain(&self, fam: &PeriodFamily) -> Result<()> {
        for s in self.points() {
            if !fam.contains(s) {
                return Err(Error::OutsideDomain { s: format!("{s}"), radius: fam.domain_radius() });
            }
        }
        Ok(())
    }

    /// `D_s f` at the center, Richardson-extrapolated, plus the sup disagreement between
    /// the two step sizes. `values[k]` holds the node values at stencil point `k`.
    pub fn d_s(&self, values: &[&[Complex64]]) -> (Vec<Complex64>, f64) {
        let h = self.h;
        let d = |p: usize, m: usize, q: usize, r: usize, step: f64, node: usize| {
            let da = (values[p][node] - values[m][node]) / (2.0 * step);
            let db = (values[q][node] - values[r][node]) / (2.0 * step);
            0.5 * (da - Complex64::new(0.0, 1.0) * db)
        };
        richardson(values[0].len(), |node| (d(1, 2, 3, 4, h, node), d(5, 6, 7, 8, 0.5 * h, node)))
    }

    /// `D_s D_sbar f = (Laplacian in s)/4` at the center, Richardson-extrapolated.
    pub fn d_s_dsbar(&self, values: &[&[Complex64]]) -> (Vec<Complex64>, f64) {
        let h = self.h;
        let lap = |i: [usize; 4], step: f64, node: usize| {
            let sum: Complex64 = i.iter().map(|&k| values[k][node]).sum();
            (sum - 4.0 * values[0][node]) / (4.0 * step * step)
        };
        richardson(values[0].len(), |node| (lap([1, 2, 3, 4], h, node), lap([5, 6, 7, 8], 0.5 * h, node)))
    }

    /// Scalar versions of the two stencil operators.
    pub fn d_s_scalar(&self, values: &[Complex64]) -> (Complex64, f64) {
        let v: Vec<[Complex64; 1]> = values.iter().map(|&z| [z]).collect();
        let refs: Vec<&[Complex64]> = v.iter().map(|a| &a[..]).collect();
        let (out, dis) = self.d_s(&refs);
        (out[0], dis)
    }

    pub fn d_s_dsbar_scalar(&self, values: &[Complex64]) -> (Complex64, f64) {
        let v: Vec<[Complex64; 1]> = values.iter().map(|&z| [z]).collect();
        let refs: Vec<&[Complex64]> = v.iter().map(|a| &a[..]).collect();
        let (out, dis) = self.d_s_dsbar(&refs);
        (out[0], dis)
    }
}

fn richardson(nodes: usize, f: impl Fn(usize) -> (Complex64, Complex64)) -> (Vec<Complex64>, f64) {
    let mut out = Vec::with_capacity(nodes);
    let mut dis = 0.0f64;
    for node in 0..nodes {
        let (coarse, fine) = f(node);
        out.push((4.0 * fine - coarse) / 3.0);
        dis = dis.max((fine - coarse).norm());
    }
    (out, dis)
}

/// One band-limited term `amplitude (1 + Re(s_coeff (s - s0))) cos(2 pi k.(x,y) + phase)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PsiMode {
    pub k: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    /// Linear dependence on the base coordinate, as `[re, im]`.
    #[serde(default)]
    pub s_coeff: [f64; 2],
}

/// Real potential `psi(x, y, s)` given as an explicit mode list.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct PsiSpec {
    pub modes: Vec<PsiMode>,
}

impl PsiSpec {
    pub fn validate(&self, n: usize, points: usize) -> Result<()> {
        for m in &self.modes {
            if m.k.len() != 2 * n {
                return Err(Error::Config(format!("psi mode {:?} needs {} wavenumbers", m.k, 2 * n)));
            }
            if m.k.iter().any(|k| k.unsigned_abs() as usize >= points / 3) {
                return Err(Error::Config(format!("psi mode {:?} is not resolved on a grid of {points}", m.k)));
            }
        }
        Ok(())
    }

    pub fn eval(&self, grid: &Arc<FiberGrid>, ds: Complex64) -> TensorField {
        TensorField::scalar_from_fn(grid.clone(), |x| {
            let v: f64 = self
                .modes
                .iter()
                .map(|m| {
                    let arg: f64 = m.k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum();
                    let slope = (Complex64::new(m.s_coeff[0], m.s_coeff[1]) * ds).re;
                    m.amplitude * (1.0 + slope) * (std::f64::consts::TAU * arg + m.phase).cos()
                })
                .sum();
            Complex64::new(v, 0.0)
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Mode {
    /// The constant standard form `sum dx^j ^ dy^j` under the trivialization.
    ClosedForm,
    /// Standard form plus `i d dbar psi`, corrected fiberwise by the Monge-Ampère solver
    /// unless `solve` is false.
    Perturbed {
        psi: PsiSpec,
        #[serde(default = "default_true")]
        solve: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    SolverCorrected,
    Uncorrected,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub points: usize,
    pub mode: Mode,
    pub solver: SolverOptions,
}

impl BuildOptions {
    pub fn closed_form(points: usize) -> Self {
        Self { points, mode: Mode::ClosedForm, solver: SolverOptions::default() }
    }
}

/// `omega_X` on a stencil neighbourhood: fiber metrics at every stencil point and the
/// frame components `G_{s bbar}`, `G_{s sbar}` at the center.
#[derive(Clone, Debug)]
pub struct AdmissibleForm {
    family: PeriodFamily,
    stencil: SParameterStencil,
    provenance: Provenance,
    metrics: Vec<MetricField>,
    mixed: TensorField,
    g_ss: TensorField,
    /// Largest disagreement between the two Richardson levels over all s-derivatives.
    richardson_gap: f64,
    solver_iterations: Vec<usize>,
    /// Total of constants subtracted from `G_{s sbar}` by normalization and pollution.
    ss_shift: f64,
}

pub fn build_admissible(fam: &PeriodFamily, stencil: &SParameterStencil, opts: &BuildOptions) -> Result<AdmissibleForm> {
    stencil.check_domain(fam)?;
    let points = stencil.points();
    let grids = points
        .iter()
        .map(|&s| FiberGrid::new(fam.period(s)?, opts.points))
        .collect::<Result<Vec<_>>>()?;
    let center = grids[0].clone();
    match &opts.mode {
        Mode::ClosedForm => {
            let metrics = grids.into_iter().map(MetricField::flat).collect();
            Ok(AdmissibleForm {
                family: fam.clone(),
                stencil: stencil.clone(),
                provenance: Provenance::ClosedForm,
                metrics,
                mixed: TensorField::zeros(center.clone(), vec![Index::DownAnti]),
                g_ss: TensorField::zeros(center, vec![]),
                richardson_gap: 0.0,
                solver_iterations: Vec::new(),
                ss_shift: 0.0,
            })
        }
        Mode::Perturbed { psi, solve } => {
            psi.validate(fam.dim(), opts.points)?;
            let solved: Vec<(TensorField, MetricField, usize)> = grids
                .par_iter()
                .zip(points.par_iter())
                .map(|(grid, &s)| {
                    let psi_s = psi.eval(grid, s - stencil.center());
                    if *solve {
                        let problem = MongeAmpereProblem::from_potential(grid.clone(), &psi_s)?;
                        let sol = ma::solve_ricci_flat(&problem, &opts.solver)?;
                        // Rebuilding from the total potential avoids cancelling two O(1) Hessians.
                        let total = psi_s.add(&sol.potential)?;
                        let flat = MetricField::flat(grid.clone());
                        let g = MetricField::from_field(flat.field().add(&ma::hessian(&total))?)?;
                        Ok((total, g, sol.iterations))
                    } else {
                        let flat = MetricField::flat(grid.clone());
                        let g = MetricField::from_field(flat.field().add(&ma::hessian(&psi_s))?)?;
                        Ok((psi_s, g, 0))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let n = fam.dim();
            let dbar: Vec<TensorField> =
                solved.iter().map(|(p, _, _)| fiber::spectral_derivative(p, Direction::Anti)).collect();
            let mut gap = 0.0f64;
            let mut mixed = Vec::with_capacity(n);
            for b in 0..n {
                let vals: Vec<&[Complex64]> = dbar.iter().map(|f| &f.components()[b][..]).collect();
                let (d, dis) = stencil.d_s(&vals);
                gap = gap.max(dis);
                mixed.push(d);
            }
            let pots: Vec<&[Complex64]> = solved.iter().map(|(p, _, _)| p.values().unwrap()).collect();
            let (gss, dis) = stencil.d_s_dsbar(&pots);
            gap = gap.max(dis);
            let g_ss = TensorField::scalar(center.clone(), gss.iter().map(|z| Complex64::new(z.re, 0.0)).collect())?;
            let solver_iterations = solved.iter().map(|s| s.2).collect();
            Ok(AdmissibleForm {
                family: fam.clone(),
                stencil: stencil.clone(),
                provenance: if *solve { Provenance::SolverCorrected } else { Provenance::Uncorrected },
                metrics: solved.into_iter().map(|s| s.1).collect(),
                mixed: TensorField::from_data(center, vec![Index::DownAnti], mixed)?,
                g_ss,
                richardson_gap: gap,
                solver_iterations,
                ss_shift: 0.0,
            })
        }
    }
}

/// Add `i d dbar (u o f)` with `u = coeff |s - s0|^2`, i.e. `coeff` to the `s sbar` component.
pub fn pollute(w: &AdmissibleForm, coeff: f64) -> AdmissibleForm {
    let mut out = w.clone();
    out.g_ss = w.g_ss.map(|z| z + coeff);
    out.ss_shift += coeff;
    out
}

/// Add `eps exp(2 pi i x_n)` to the mixed component `g_{s 1bar}`. The result is not closed;
/// used as a negative control for the closedness and symmetry checks.
pub fn break_closedness(w: &AdmissibleForm, eps: f64) -> AdmissibleForm {
    let mut out = w.clone();
    let grid = w.grid().clone();
    let mut data = w.mixed.components().to_vec();
    for (k, v) in data[0].iter_mut().enumerate() {
        *v += Complex64::from_polar(eps, 2.0 * std::f64::consts::PI * grid.coords(k)[w.dim() - 1]);
    }
    out.mixed = TensorField::from_data(grid, vec![Index::DownAnti], data).expect("shape");
    out
}

/// Enforce `H_s(phi_{s sbar}) = 0` by subtracting the pull-back of `u` with
/// `d_s d_sbar u = H_s(phi_{s sbar})`.
pub fn normalize_admissible(w: &AdmissibleForm) -> Result<AdmissibleForm> {
    let phi = w.phi()?;
    let h = fiber::harmonic_projection(&phi, w.center_metric())?.re;
    let mut out = w.clone();
    out.g_ss = w.g_ss.map(|z| z - h);
    out.ss_shift -= h;
    Ok(out)
}

impl AdmissibleForm {
    pub fn family(&self) -> &PeriodFamily {
        &self.family
    }

    pub fn stencil(&self) -> &SParameterStencil {
        &self.stencil
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn grid(&self) -> &Arc<FiberGrid> {
        self.metrics[0].grid()
    }

    pub fn metrics(&self) -> &[MetricField] {
        &self.metrics
    }

    pub fn center_metric(&self) -> &MetricField {
        &self.metrics[0]
    }

    /// Frame component `G_{s bbar} = omega(D_s, d_bbar)` at the center.
    pub fn mixed_frame(&self) -> &TensorField {
        &self.mixed
    }

    /// Frame component `G_{s sbar} = omega(D_s, D_sbar)` at the center.
    pub fn ss_frame(&self) -> &TensorField {
        &self.g_ss
    }

    pub fn richardson_gap(&self) -> f64 {
        self.richardson_gap
    }

    pub fn solver_iterations(&self) -> &[usize] {
        &self.solver_iterations
    }

    pub fn ss_shift(&self) -> f64 {
        self.ss_shift
    }

    /// `Omega'(s0)`.
    pub fn omega_prime(&self) -> CMat {
        self.family.derivative(self.stencil.center())
    }

    /// Drift coefficients of `a_f = Omega' y` per component, in `(x, y)` order.
    fn frame_drift(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let d = self.omega_prime();
        (0..n)
            .map(|a| {
                let mut c = vec![ZERO; 2 * n];
                for j in 0..n {
                    c[n + j] = d[(a, j)];
                }
                c
            })
            .collect()
    }

    /// The quasi-periodic vector field `a_f = Omega' y` relating the frame to coordinates.
    pub fn frame_shift(&self) -> TensorField {
        TensorField::zeros(self.grid().clone(), vec![Index::UpHolo])
            .with_drift(self.frame_drift())
            .expect("drift shape")
    }

    /// Periodic part `b = -g^{bbar a} G_{s bbar}` of the horizontal lift.
    pub fn lift_correction(&self) -> TensorField {
        let g = self.center_metric();
        let n = self.dim();
        let nodes = self.grid().node_count();
        let data = (0..n)
            .map(|a| {
                (0..nodes)
                    .map(|k| -(0..n).map(|b| g.g_inv(b, a, k) * self.mixed.components()[b][k]).sum::<Complex64>())
                    .collect()
            })
            .collect();
        TensorField::from_data(self.grid().clone(), vec![Index::UpHolo], data).expect("shape")
    }

    /// Coordinate component `g_{s bbar} = G_{s bbar} - a_f^a g_{a bbar}`.
    pub fn mixed_coordinate(&self) -> TensorField {
        let g = self.center_metric();
        let af = self.frame_shift();
        let n = self.dim();
        let nodes = self.grid().node_count();
        let data = (0..n)
            .map(|b| {
                (0..nodes)
                    .map(|k| {
                        self.mixed.components()[b][k]
                            - (0..n).map(|a| af.components()[a][k] * g.g(a, b, k)).sum::<Complex64>()
                    })
                    .collect()
            })
            .collect();
        TensorField::from_data(self.grid().clone(), vec![Index::DownAnti], data).expect("shape")
    }

    /// Coordinate component `g_{s sbar}`.
    pub fn ss_coordinate(&self) -> TensorField {
        let g = self.center_metric();
        let af = self.frame_shift();
        let n = self.dim();
        let nodes = self.grid().node_count();
        let m = &self.mixed;
        let vals = (0..nodes)
            .map(|k| {
                let mut v = self.g_ss.components()[0][k];
                for a in 0..n {
                    let fa = af.components()[a][k];
                    // G_{a sbar} = conj(G_{s abar})
                    v -= fa * m.components()[a][k].conj();
                    v -= m.components()[a][k] * fa.conj();
                    for b in 0..n {
                        v += fa * af.components()[b][k].conj() * g.g(a, b, k);
                    }
                }
                v
            })
            .collect();
        TensorField::scalar(self.grid().clone(), vals).expect("shape")
    }

    /// Horizontal lift `a^a = -g^{bbar a} g_{s bbar} = Omega' y + b`.
    pub fn horizontal_lift(&self) -> TensorField {
        self.lift_correction().with_drift(self.frame_drift()).expect("drift shape")
    }

    /// Kodaira-Spencer tensor `A^a_bbar = d_bbar a^a`.
    pub fn kodaira_spencer(&self) -> TensorField {
        fiber::spectral_derivative(&self.horizontal_lift(), Direction::Anti)
    }

    /// Sup of `|omega(v, d_cbar)|` for the lifted vector `v = d_s + a^a d_a`.
    pub fn perpendicularity_residual(&self) -> f64 {
        let g = self.center_metric();
        let a = self.horizontal_lift();
        let gs = self.mixed_coordinate();
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..self.grid().node_count() {
            for c in 0..n {
                let v = gs.components()[c][k] + (0..n).map(|al| a.components()[al][k] * g.g(al, c, k)).sum::<Complex64>();
                worst = worst.max(v.norm());
            }
        }
        worst
    }

    /// `phi_{s sbar} = <v, v>_omega = G_{s sbar} - b^a conj(b^b) g_{a bbar}`.
    pub fn phi(&self) -> Result<TensorField> {
        let g = self.center_metric();
        let b = self.lift_correction();
        let n = self.dim();
        let vals = (0..self.grid().node_count())
            .map(|k| {
                let mut v = self.g_ss.components()[0][k];
                for a in 0..n {
                    for c in 0..n {
                        v -= b.components()[a][k] * b.components()[c][k].conj() * g.g(a, c, k);
                    }
                }
                v
            })
            .collect();
        TensorField::scalar(self.grid().clone(), vals)
    }

    /// Bordered coordinate matrix `[[g_{s sbar}, g_{s bbar}], [g_{a sbar}, g_{a bbar}]]` at a node,
    /// with `extra` added to the `s sbar` entry.
    /// Rebuilds the coordinate fields on every call; loop over nodes through `AssembledForm`.
    pub fn bordered_matrix(&self, node: usize, extra: f64) -> CMat {
        let n = self.dim();
        let g = self.center_metric();
        let gs = self.mixed_coordinate();
        let gss = self.ss_coordinate();
        CMat::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => gss.components()[0][node] + extra,
            (0, j) => gs.components()[j - 1][node],
            (i, 0) => gs.components()[i - 1][node].conj(),
            (i, j) => g.g(i - 1, j - 1, node),
        })
    }

    /// Sup of `|phi det g - det(bordered)|`.
    pub fn determinant_identity_residual(&self) -> Result<f64> {
        let phi = self.phi()?;
        let g = self.center_metric();
        let gs = self.mixed_coordinate();
        let gss = self.ss_coordinate();
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..self.grid().node_count() {
            let m = CMat::from_fn(n + 1, n + 1, |i, j| match (i, j) {
                (0, 0) => gss.components()[0][k],
                (0, j) => gs.components()[j - 1][k],
                (i, 0) => gs.components()[i - 1][k].conj(),
                (i, j) => g.g(i - 1, j - 1, k),
            });
            worst = worst.max((phi.values()?[k] * g.det(k) - m.determinant()).norm());
        }
        Ok(worst)
    }

    /// Sup over stencil points of `|g_{a bbar} - flat(Omega(s))|`.
    pub fn restriction_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in &self.metrics {
            let flat = m.grid().period().flat_metric();
            let n = self.dim();
            for k in 0..m.grid().node_count() {
                for a in 0..n {
                    for b in 0..n {
                        worst = worst.max((m.g(a, b, k) - flat[(a, b)]).norm());
                    }
                }
            }
        }
        worst
    }

    /// Closedness residual `D_s G_{a bbar} - d_a G_{s bbar} + (d_a a_f^c) G_{c bbar}`, which
    /// is the frame form of `d_s g_{a bbar} = d_a g_{s bbar}`.
    pub fn closedness_residual(&self) -> f64 {
        let n = self.dim();
        let g = self.center_metric();
        let (_, dy_dz, _, _) = self.grid().jacobians();
        let daf = self.omega_prime() * dy_dz;
        let dmixed = fiber::spectral_derivative(&self.mixed, Direction::Holo);
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let vals: Vec<&[Complex64]> =
                    self.metrics.iter().map(|m| &m.field().components()[a * n + b][..]).collect();
                let (ds, _) = self.stencil.d_s(&vals);
                for (k, d) in ds.iter().enumerate() {
                    let corr: Complex64 = (0..n).map(|c| daf[(c, a)] * g.g(c, b, k)).sum();
                    worst = worst.max((d - dmixed.components()[b * n + a][k] + corr).norm());
                }
            }
        }
        worst
    }

    /// Largest Hermitian-symmetry defect of the bordered coordinate matrices.
    pub fn hermitian_residual(&self) -> f64 {
        let im = self.g_ss.components()[0].iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let g = self.center_metric();
        let n = self.dim();
        let mut worst = im;
        for k in 0..self.grid().node_count() {
            for a in 0..n {
                for b in 0..n {
                    worst = worst.max((g.g(a, b, k) - g.g(b, a, k).conj()).norm());
                }
            }
        }
        worst
    }

    /// Write a JSON manifest and CSV grids of the center components to `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            family: &self.family,
            stencil: &self.stencil,
            stencil_points: self.stencil.points().iter().map(|z| [z.re, z.im]).collect(),
            provenance: self.provenance,
            grid_points: self.grid().points(),
            n: self.dim(),
            richardson_gap: self.richardson_gap,
            solver_iterations: &self.solver_iterations,
            ss_shift: self.ss_shift,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        fiber::write_csv(self.center_metric().field(), fs::File::create(dir.join("g_fiber.csv"))?)?;
        fiber::write_csv(&self.mixed, fs::File::create(dir.join("g_s_frame.csv"))?)?;
        fiber::write_csv(&self.g_ss, fs::File::create(dir.join("g_ss_frame.csv"))?)?;
        fiber::write_csv(&self.phi()?, fs::File::create(dir.join("phi_ss.csv"))?)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    family: &'a PeriodFamily,
    stencil: &'a SParameterStencil,
    stencil_points: Vec<[f64; 2]>,
    provenance: Provenance,
    grid_points: usize,
    n: usize,
    richardson_gap: f64,
    solver_iterations: &'a [usize],
    ss_shift: f64,
}

/// Pointwise `A . conj(A)` for a Kodaira-Spencer field.
pub fn ks_norm_field(a: &TensorField, g: &MetricField) -> Result<TensorField> {
    fiber::contract(a, a, fiber::Pairing::Inner, g)
}

/// Sup over nodes of `|f - m|` for a rank-2 field and a constant matrix.
pub fn max_dev_from_constant(f: &TensorField, m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for v in &f.components()[a * n + b] {
                worst = worst.max((v - m[(a, b)]).norm());
            }
        }
    }
    worst
}
