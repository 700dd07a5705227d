//! Fiberwise Green operator of the flat Laplacian, its kernel and a lower bound `-c`.
//!
//! The kernel is `G(u) = int_0^inf (p_t(u) - 1) dt` split at `t0`. Above `t0` the heat kernel
//! is a rapidly convergent mode sum and the time integral is `e^{-lambda t0} / lambda` per
//! mode. Below `t0` Poisson summation turns it into Gaussian images, each integrated in time
//! in closed form through an upper incomplete gamma function.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::AdmissibleForm;
use crate::fiber::{self, FiberGrid, MetricField, Pairing, TensorField};
use crate::quad::{gauss_legendre, upper_gamma_int};
use crate::torus::PeriodMatrix;

/// Terms with exponent beyond this are dropped from both sums.
const CUTOFF: f64 = 40.0;

/// Green operator of one flat fiber.
#[derive(Clone, Debug)]
pub struct GreenOperator {
    period: PeriodMatrix,
    grid: Option<Arc<FiberGrid>>,
    /// `lambda(k) = k^T S k` in lattice wavenumbers.
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    det_s: f64,
    t0: f64,
    /// Half of the nonzero modes with `lambda t0 <= CUTOFF`: wavenumber, `lambda`.
    modes: Vec<(Vec<i64>, f64)>,
    images: Vec<Vec<i64>>,
    truncation_error: f64,
}

impl GreenOperator {
    /// Operator on the grid's fiber, with the default switchover time.
    pub fn new(grid: Arc<FiberGrid>) -> Result<Self> {
        let mut op = Self::for_period(grid.period().clone(), None)?;
        op.grid = Some(grid);
        Ok(op)
    }

    /// Kernel-only operator. Without an explicit `t0` the switchover is chosen among a
    /// geometric ladder to minimize the total number of retained terms.
    pub fn for_period(period: PeriodMatrix, t0: Option<f64>) -> Result<Self> {
        let s = spectral_form(&period);
        let d = s.nrows();
        let det_s = s.determinant();
        let s_inv = s.clone().try_inverse().ok_or_else(|| Error::InvalidPeriod("degenerate spectrum".into()))?;
        let (modes, images, t0) = match t0 {
            Some(t0) if !(t0 > 0.0) => {
                return Err(Error::InvalidArgument(format!("switchover time {t0} must be positive")));
            }
            Some(t0) => {
                let (m, i) = truncated_sums(&s, &s_inv, t0);
                (m, i, t0)
            }
            None => {
                let base = PI / det_s.powf(1.0 / d as f64);
                (-6..=2)
                    .map(|j| base * 2f64.powf(j as f64 / 2.0))
                    .map(|t0| {
                        let (m, i) = truncated_sums(&s, &s_inv, t0);
                        (m, i, t0)
                    })
                    .min_by_key(|(m, i, _)| 2 * m.len() + i.len())
                    .expect("nonempty ladder")
            }
        };
        let truncation_error = (-CUTOFF).exp() * (modes.len() + images.len()) as f64 * (1.0 + t0);
        Ok(Self { period, grid: None, s, s_inv, det_s, t0, modes, images, truncation_error })
    }

    pub fn period(&self) -> &PeriodMatrix {
        &self.period
    }

    pub fn grid(&self) -> Option<&Arc<FiberGrid>> {
        self.grid.as_ref()
    }

    pub fn switchover_time(&self) -> f64 {
        self.t0
    }

    /// Smallest nonzero eigenvalue of the flat Laplacian.
    pub fn spectral_gap(&self) -> f64 {
        self.modes.iter().map(|m| m.1).fold(f64::INFINITY, f64::min)
    }

    /// Bound on the terms dropped from the mode and image sums.
    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn term_counts(&self) -> (usize, usize) {
        (self.modes.len(), self.images.len())
    }

    fn dims(&self) -> usize {
        self.s.nrows()
    }

    fn image_exponent(&self, v: &[f64]) -> f64 {
        let d = self.dims();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += v[i] * self.s_inv[(i, j)] * v[j];
            }
        }
        PI * PI * q
    }

    fn images_of<'a>(&'a self, u: &'a [f64]) -> impl Iterator<Item = Vec<f64>> + 'a {
        self.images.iter().map(move |m| u.iter().zip(m).map(|(a, b)| a - a.round() + *b as f64).collect())
    }

    /// Heat kernel `p_t(u)` at lattice displacement `u`.
    pub fn heat_kernel(&self, t: f64, u: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("heat kernel time {t} must be positive")));
        }
        self.check_dims(u)?;
        if t >= self.t0 {
            Ok(1.0 + self.modes.iter().map(|(k, lam)| 2.0 * (-lam * t).exp() * phase(k, u).cos()).sum::<f64>())
        } else {
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            Ok(0.5 * (self.heat_images(t, u) + self.heat_images(t, &neg)))
        }
    }

    /// Image representation, valid for every `t` but truncated for `t <= t0`.
    pub fn heat_images(&self, t: f64, u: &[f64]) -> f64 {
        let n = self.dims() as i32 / 2;
        let pref = (PI / t).powi(n) / self.det_s.sqrt();
        self.images_of(u).map(|v| (-self.image_exponent(&v) / t).exp()).sum::<f64>() * pref
    }

    /// Mode representation, valid for every `t` but truncated for `t >= t0`.
    pub fn heat_modes(&self, t: f64, u: &[f64]) -> f64 {
        1.0 + self.modes.iter().map(|(k, lam)| 2.0 * (-lam * t).exp() * phase(k, u).cos()).sum::<f64>()
    }

    fn check_dims(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dims() {
            return Err(Error::ShapeMismatch(format!("displacement has {} coordinates, expected {}", u.len(), self.dims())));
        }
        Ok(())
    }

    /// Green kernel `G(u)`; errors on the diagonal. Evaluated as the mean over `+-u` so that
    /// `G(u) = G(-u)` holds bit for bit.
    pub fn green_kernel(&self, u: &[f64]) -> Result<f64> {
        self.check_dims(u)?;
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        Ok(0.5 * (self.kernel_one_sided(u)? + self.kernel_one_sided(&neg)?))
    }

    fn kernel_one_sided(&self, u: &[f64]) -> Result<f64> {
        let n = self.dims() / 2;
        let pref = PI.powi(n as i32) / self.det_s.sqrt();
        let mut short = 0.0;
        for v in self.images_of(u) {
            let a = self.image_exponent(&v);
            if a == 0.0 {
                return Err(Error::SingularPoint(format!("{u:?} lies on the diagonal")));
            }
            let x = a / self.t0;
            if x <= CUTOFF {
                short += a.powi(1 - n as i32) * upper_gamma_int(n as u32 - 1, x);
            }
        }
        let long: f64 = self.modes.iter().map(|(k, lam)| 2.0 * (-lam * self.t0).exp() / lam * phase(k, u).cos()).sum();
        Ok(pref * short + long - self.t0)
    }

    /// `G(chi) = box^{-1}(chi - H(chi))` on the operator's grid.
    pub fn apply(&self, chi: &TensorField) -> Result<TensorField> {
        let grid = self.grid.as_ref().ok_or_else(|| Error::InvalidArgument("operator has no grid".into()))?;
        if !chi.grid().same_layout(grid) {
            return Err(Error::ShapeMismatch("field and operator live on different grids".into()));
        }
        let g = MetricField::flat(grid.clone());
        let h = fiber::harmonic_projection(chi, &g)?;
        fiber::poisson_solve(&chi.map(|z| z - h), &g)
    }

    /// `int G(u - w) chi(w) dw` by quadrature: the cell centred on the singularity is split
    /// into pyramids with apex at `u`, each with a geometrically graded radial rule.
    pub fn convolve(&self, chi: &TensorField, u: &[f64]) -> Result<Complex64> {
        self.check_dims(u)?;
        let eval = FourierEval::new(chi)?;
        let d = self.dims();
        let (face_pts, radial_layers, radial_pts) = if d == 2 { (24, 10, 12) } else { (6, 6, 6) };
        let (gx, gw) = gauss_legendre(face_pts);
        let (rx, rw) = gauss_legendre(radial_pts);
        let sigma: f64 = 0.15;
        let mut radial = Vec::new();
        for j in 0..=radial_layers {
            let (lo, hi) = if j == radial_layers { (0.0, sigma.powi(j as i32)) } else { (sigma.powi(j as i32 + 1), sigma.powi(j as i32)) };
            for (x, w) in rx.iter().zip(&rw) {
                radial.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * (hi - lo) * w));
            }
        }
        let mut faces: Vec<(Vec<f64>, f64)> = Vec::new();
        let total = face_pts.pow(d as u32 - 1);
        for idx in 0..total {
            let mut rem = idx;
            let mut pt = Vec::with_capacity(d - 1);
            let mut w = 1.0;
            for _ in 0..d - 1 {
                let i = rem % face_pts;
                rem /= face_pts;
                pt.push(0.5 * gx[i]);
                w *= 0.5 * gw[i];
            }
            faces.push((pt, w));
        }
        let terms: Vec<(Vec<f64>, f64)> = (0..d)
            .flat_map(|axis| [-0.5, 0.5].into_iter().map(move |side| (axis, side)))
            .flat_map(|(axis, side)| {
                faces.iter().map(move |(pt, w)| {
                    let mut v = Vec::with_capacity(d);
                    let mut it = pt.iter();
                    for i in 0..d {
                        v.push(if i == axis { side } else { *it.next().unwrap() });
                    }
                    (v, *w)
                })
            })
            .collect();
        let sum = terms
            .par_iter()
            .map(|(dir, w)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(rho, rwt) in &radial {
                    let v: Vec<f64> = dir.iter().map(|c| rho * c).collect();
                    let gv = self.green_kernel(&v)?;
                    let at: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
                    acc += eval.at(&at) * (gv * rwt * rho.powi(d as i32 - 1) * 0.5);
                }
                Ok(acc * *w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(sum.into_iter().sum())
    }
}

/// `lambda(k) = 4 pi^2 g^{bbar a} kappa_a conj(kappa_b)` with `kappa = J^T k`.
fn spectral_form(period: &PeriodMatrix) -> DMatrix<f64> {
    let n = period.dim();
    let m_inv = crate::linalg::inverse(&period.omega_minus_conj()).expect("nondegenerate period");
    let omega = period.omega();
    let dx_dz = crate::linalg::CMat::identity(n, n) - omega * &m_inv;
    let g_inv = crate::linalg::inverse(&period.flat_metric()).expect("flat metric invertible");
    // row i of J is d u^i / d z
    let row = |i: usize, a: usize| if i < n { dx_dz[(i, a)] } else { m_inv[(i - n, a)] };
    let d = 2 * n;
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut v = Complex64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    v += g_inv[(b, a)] * row(i, a) * row(j, b).conj();
                }
            }
            s[(i, j)] = 4.0 * PI * PI * v.re;
        }
    }
    (&s + s.transpose()) * 0.5
}

type Modes = Vec<(Vec<i64>, f64)>;

/// Modes with `lambda t0 <= CUTOFF` (one of each `+-k` pair) and the lattice images that can
/// reach exponent `CUTOFF` from some point of the centred cell.
fn truncated_sums(s: &DMatrix<f64>, s_inv: &DMatrix<f64>, t0: f64) -> (Modes, Vec<Vec<i64>>) {
    let d = s.nrows();
    let kbox: Vec<i64> = (0..d).map(|i| (CUTOFF / t0 * s_inv[(i, i)]).sqrt().ceil() as i64).collect();
    let modes = lattice_box(&kbox)
        .into_iter()
        .filter(|k| k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0))
        .map(|k| {
            let lam = quad_form(s, &k);
            (k, lam)
        })
        .filter(|(_, lam)| lam * t0 <= CUTOFF)
        .collect();
    // |u + m| >= |m| - |u| in the S^{-1} norm, and |u| is largest at a cell corner
    let norm = |v: &[f64]| {
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += v[i] * s_inv[(i, j)] * v[j];
            }
        }
        q.sqrt()
    };
    let r_cell = (0..1usize << d)
        .map(|bits| norm(&(0..d).map(|i| if bits >> i & 1 == 1 { 0.5 } else { -0.5 }).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let reach = (CUTOFF * t0).sqrt() / PI;
    let mbox: Vec<i64> = (0..d).map(|i| ((reach + r_cell) * s[(i, i)].sqrt()).ceil() as i64).collect();
    let images = lattice_box(&mbox)
        .into_iter()
        .filter(|m| norm(&m.iter().map(|&v| v as f64).collect::<Vec<_>>()) - r_cell <= reach)
        .collect();
    (modes, images)
}

fn quad_form(s: &DMatrix<f64>, k: &[i64]) -> f64 {
    let d = k.len();
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            q += k[i] as f64 * s[(i, j)] * k[j] as f64;
        }
    }
    q
}

fn phase(k: &[i64], u: &[f64]) -> f64 {
    2.0 * PI * k.iter().zip(u).map(|(k, u)| *k as f64 * u).sum::<f64>()
}

fn lattice_box(half: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for &h in half {
        out = out.into_iter().flat_map(|p| (-h..=h).map(move |v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Trigonometric interpolant of a grid field, evaluated off the grid.
struct FourierEval {
    coeffs: Vec<(Vec<i64>, Complex64)>,
}

impl FourierEval {
    fn new(f: &TensorField) -> Result<Self> {
        let grid = f.grid();
        let hat = grid.forward(f.values()?);
        let nodes = grid.node_count() as f64;
        let coeffs = (0..grid.node_count())
            .filter(|&m| !grid.is_nyquist(m) && hat[m].norm() > 1e-15 * nodes)
            .map(|m| (grid.wavevector(m).to_vec(), hat[m] / nodes))
            .collect();
        Ok(Self { coeffs })
    }

    fn at(&self, u: &[f64]) -> Complex64 {
        self.coeffs.iter().map(|(k, c)| c * Complex64::from_polar(1.0, phase(k, u))).sum()
    }
}

/// `G(chi)` on a grid field; `G(1) = 0`.
pub fn green_apply(op: &GreenOperator, chi: &TensorField) -> Result<TensorField> {
    op.apply(chi)
}

/// Certified lower bound `G >= -c` on one fiber.
#[derive(Clone, Debug, Serialize)]
pub struct GreenBound {
    pub c: f64,
    pub minimum: f64,
    pub minimizer: Vec<f64>,
    pub margin: f64,
    pub samples: usize,
}

/// `c = -min G + margin`. The minimum is located on a uniform off-diagonal grid with
/// `points` nodes per direction and refined by pattern search from the best nodes; the
/// margin is ten times the truncation bound plus a continuity term over the final box.
pub fn green_lower_bound(op: &GreenOperator, tol: f64, points: usize) -> Result<GreenBound> {
    if !(tol > 0.0) {
        return Err(Error::Accuracy(format!("lower-bound tolerance {tol} is not achievable")));
    }
    let d = op.dims();
    let total = points.pow(d as u32);
    let mut values: Vec<(f64, Vec<f64>)> = (1..total)
        .into_par_iter()
        .map(|idx| {
            let mut rem = idx;
            let u: Vec<f64> = (0..d)
                .map(|_| {
                    let i = rem % points;
                    rem /= points;
                    i as f64 / points as f64
                })
                .collect();
            (op.green_kernel(&u).unwrap_or(f64::INFINITY), u)
        })
        .collect();
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (f64::INFINITY, Vec::new(), 0.0);
    for (v0, u0) in values.iter().take(4) {
        let (v, u, step) = pattern_search(op, u0.clone(), *v0, 0.5 / points as f64)?;
        if v < best.0 {
            best = (v, u, step);
        }
    }
    let (minimum, minimizer, step) = best;
    // continuity over the final box from a finite-difference gradient and curvature
    let mut slope = 0.0;
    for i in 0..d {
        let mut up = minimizer.clone();
        let mut dn = minimizer.clone();
        up[i] += step;
        dn[i] -= step;
        let (gu, gd) = (op.green_kernel(&up)?, op.green_kernel(&dn)?);
        slope += ((gu - gd).abs() / 2.0).max((gu + gd - 2.0 * minimum).abs());
    }
    let margin = 10.0 * op.truncation_error() + slope;
    if margin > tol {
        return Err(Error::Accuracy(format!("lower-bound margin {margin:e} exceeds tolerance {tol:e}")));
    }
    Ok(GreenBound { c: (margin - minimum).max(0.0), minimum, minimizer, margin, samples: total - 1 })
}

fn pattern_search(op: &GreenOperator, mut u: Vec<f64>, mut v: f64, mut step: f64) -> Result<(f64, Vec<f64>, f64)> {
    let d = u.len();
    while step > 1e-9 {
        let mut improved = false;
        for i in 0..d {
            for sgn in [-1.0, 1.0] {
                let mut w = u.clone();
                w[i] += sgn * step;
                if let Ok(val) = op.green_kernel(&w) {
                    if val < v {
                        v = val;
                        u = w;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((v, u, step))
}

/// Bound over a sampled set of fibers: `c` is the maximum of the per-fiber values.
#[derive(Clone, Debug, Serialize)]
pub struct FamilyGreenBound {
    pub c: f64,
    /// Always "sampled-uniform": the maximum over the listed fibers, not over a continuum.
    pub kind: &'static str,
    pub per_fiber: Vec<GreenBound>,
}

pub fn family_green_bound(periods: &[PeriodMatrix], tol: f64, points: usize) -> Result<FamilyGreenBound> {
    let per_fiber = periods
        .par_iter()
        .map(|p| green_lower_bound(&GreenOperator::for_period(p.clone(), None)?, tol, points))
        .collect::<Result<Vec<_>>>()?;
    let c = per_fiber.iter().map(|b| b.c).fold(0.0, f64::max);
    Ok(FamilyGreenBound { c, kind: "sampled-uniform", per_fiber })
}

/// Uniform `per_dir x per_dir` grid of base points in the square inscribed in the
/// family's admissible disc (shrunk by 10%).
pub fn sample_base_points(fam: &crate::torus::PeriodFamily, per_dir: usize) -> Vec<Complex64> {
    let half = 0.9 * fam.domain_radius() / 2f64.sqrt();
    let coord = |i: usize| if per_dir == 1 { 0.0 } else { -half + 2.0 * half * i as f64 / (per_dir - 1) as f64 };
    (0..per_dir).flat_map(|i| (0..per_dir).map(move |j| Complex64::new(coord(i), coord(j)))).collect()
}

/// `sup |phi_{s sbar} - G(A . conj(A))|`.
pub fn verify_green_reconstruction(w: &AdmissibleForm, op: &GreenOperator) -> Result<f64> {
    let g = w.center_metric();
    let a = w.kodaira_spencer();
    let aa = fiber::contract(&a, &a, Pairing::Inner, g)?;
    Ok(w.phi()?.sub(&op.apply(&aa)?)?.max_abs())
}

/// `min_z G(A . conj(A))(z) + c int A . conj(A) g dV`, nonnegative when the bound holds.
pub fn green_positivity_margin(w: &AdmissibleForm, op: &GreenOperator, c: f64) -> Result<f64> {
    let g = w.center_metric();
    let a = w.kodaira_spencer();
    let aa = fiber::contract(&a, &a, Pairing::Inner, g)?;
    let total = fiber::integrate(&aa, g)?.re;
    let ga = op.apply(&aa)?;
    Ok(ga.components()[0].iter().map(|z| z.re).fold(f64::INFINITY, f64::min) + c * total)
}

/// Kernel samples along the diagonal `u = (t, .., t)` and the line `u = (1/2, t, 0, ..)`.
pub fn write_kernel_profile<W: Write>(op: &GreenOperator, samples: usize, mut out: W) -> Result<()> {
    writeln!(out, "line,t,green")?;
    let d = op.dims();
    for (name, line) in [("diagonal", 0), ("half", 1)] {
        for i in 1..samples {
            let t = i as f64 / samples as f64;
            let u: Vec<f64> = (0..d)
                .map(|j| if line == 0 { t } else if j == 0 { 0.5 } else if j == 1 { t } else { 0.0 })
                .collect();
            if let Ok(v) = op.green_kernel(&u) {
                writeln!(out, "{name},{t},{v:e}")?;
            }
        }
    }
    Ok(())
}
