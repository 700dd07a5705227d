use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::torus::PeriodMatrix;

const TWO_PI_I: Complex64 = Complex64 { re: 0.0, im: std::f64::consts::TAU };

/// Uniform grid in lattice coordinates `(x, y) in [0,1)^{2n}` on one torus fiber.
///
/// Axis order is `x^1..x^n, y^1..y^n`, row-major with the last axis fastest.
pub struct FiberGrid {
    n: usize,
    points: usize,
    period: PeriodMatrix,
    dx_dz: CMat,
    dy_dz: CMat,
    dx_dzb: CMat,
    dy_dzb: CMat,
    coords: Vec<f64>,
    wavenumbers: Vec<i64>,
    nyquist: Vec<bool>,
    holo_mult: Vec<Vec<Complex64>>,
    anti_mult: Vec<Vec<Complex64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FiberGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiberGrid")
            .field("n", &self.n)
            .field("points", &self.points)
            .field("omega", self.period.omega())
            .finish()
    }
}

impl FiberGrid {
    pub fn new(period: PeriodMatrix, points: usize) -> Result<Arc<Self>> {
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be even and at least 8, got {points}"
            )));
        }
        let n = period.dim();
        let dims = 2 * n;
        let m_inv = linalg::inverse(&period.omega_minus_conj())
            .ok_or_else(|| Error::InvalidPeriod("Omega - conj(Omega) singular".into()))?;
        let omega = period.omega();
        // y = M^{-1}(z - zbar), x = z - Omega y
        let dy_dz = m_inv.clone();
        let dy_dzb = -&m_inv;
        let dx_dz = CMat::identity(n, n) - omega * &m_inv;
        let dx_dzb = omega * &m_inv;

        let total = points.pow(dims as u32);
        let mut coords = Vec::with_capacity(total * dims);
        let mut wavenumbers = Vec::with_capacity(total * dims);
        let mut nyquist = Vec::with_capacity(total);
        let mut holo_mult = vec![Vec::with_capacity(total); n];
        let mut anti_mult = vec![Vec::with_capacity(total); n];
        let mut idx = vec![0usize; dims];
        for _ in 0..total {
            let mut is_nyq = false;
            let mut k = vec![0i64; dims];
            for d in 0..dims {
                coords.push(idx[d] as f64 / points as f64);
                let j = idx[d];
                k[d] = if j < points / 2 {
                    j as i64
                } else if j == points / 2 {
                    is_nyq = true;
                    (points / 2) as i64
                } else {
                    j as i64 - points as i64
                };
            }
            wavenumbers.extend_from_slice(&k);
            nyquist.push(is_nyq);
            for a in 0..n {
                let (mut p, mut q) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                if !is_nyq {
                    for j in 0..n {
                        let (kx, ky) = (k[j] as f64, k[n + j] as f64);
                        p += dx_dz[(j, a)] * kx + dy_dz[(j, a)] * ky;
                        q += dx_dzb[(j, a)] * kx + dy_dzb[(j, a)] * ky;
                    }
                }
                holo_mult[a].push(TWO_PI_I * p);
                anti_mult[a].push(TWO_PI_I * q);
            }
            for d in (0..dims).rev() {
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(points);
        let ifft = planner.plan_fft_inverse(points);
        Ok(Arc::new(Self {
            n,
            points,
            period,
            dx_dz,
            dy_dz,
            dx_dzb,
            dy_dzb,
            coords,
            wavenumbers,
            nyquist,
            holo_mult,
            anti_mult,
            fft,
            ifft,
        }))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn node_count(&self) -> usize {
        self.nyquist.len()
    }

    pub fn period(&self) -> &PeriodMatrix {
        &self.period
    }

    /// Lattice coordinates `(x^1..x^n, y^1..y^n)` of a node.
    pub fn coords(&self, node: usize) -> &[f64] {
        let d = 2 * self.n;
        &self.coords[node * d..(node + 1) * d]
    }

    /// Signed integer wavevector of a mode (FFT ordering).
    pub fn wavevector(&self, mode: usize) -> &[i64] {
        let d = 2 * self.n;
        &self.wavenumbers[mode * d..(mode + 1) * d]
    }

    pub fn is_nyquist(&self, mode: usize) -> bool {
        self.nyquist[mode]
    }

    /// `(dx/dz, dy/dz, dx/dzbar, dy/dzbar)`; entry `(j, a)` is `d x^j / d z^a`.
    pub fn jacobians(&self) -> (&CMat, &CMat, &CMat, &CMat) {
        (&self.dx_dz, &self.dy_dz, &self.dx_dzb, &self.dy_dzb)
    }

    /// Fourier multiplier of `d/dz^a` (zero on Nyquist modes).
    pub fn holo_multiplier(&self, a: usize) -> &[Complex64] {
        &self.holo_mult[a]
    }

    /// Fourier multiplier of `d/dzbar^a`.
    pub fn anti_multiplier(&self, a: usize) -> &[Complex64] {
        &self.anti_mult[a]
    }

    /// Whether two grids share node layout (same `n` and `N`).
    pub fn same_layout(&self, other: &FiberGrid) -> bool {
        self.n == other.n && self.points == other.points
    }

    /// Density of the unit-volume lattice measure relative to `det g`:
    /// `g dV = det g * 2^n det(Im Omega) dx dy`.
    pub fn volume_factor(&self) -> f64 {
        2f64.powi(self.n as i32) * self.period.det_im()
    }

    pub fn forward(&self, data: &[Complex64]) -> Vec<Complex64> {
        let mut out = data.to_vec();
        self.transform(&mut out, false);
        out
    }

    pub fn inverse(&self, data: &[Complex64]) -> Vec<Complex64> {
        let mut out = data.to_vec();
        self.transform(&mut out, true);
        let scale = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|z| *z *= scale);
        out
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.ifft } else { &self.fft };
        let np = self.points;
        let dims = 2 * self.n;
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); np];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for d in 0..dims {
            let stride = np.pow((dims - 1 - d) as u32);
            let block = stride * np;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
    }
}
