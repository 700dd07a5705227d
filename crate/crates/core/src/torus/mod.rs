//! Closed-form geometry of principally polarized complex tori.
//!
//! A fiber is `C^n / (Z^n + Omega Z^n)` with lattice coordinates `z = x + Omega y`,
//! `x, y in [0,1)^n`. The polarization is the constant form `sum dx^j ^ dy^j`, whose
//! unique Ricci-flat representative is the flat metric `g = (Im Omega)^{-1} / 2` of
//! total volume one.

mod presets;
mod theta;

pub use presets::{preset, preset_names, Preset};
pub use theta::{theta_green_oracle, ThetaGreen};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric complex `n x n` matrix with positive definite imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodMatrix {
    omega: CMat,
}

impl PeriodMatrix {
    pub fn new(omega: CMat) -> Result<Self> {
        if omega.nrows() == 0 || omega.nrows() != omega.ncols() {
            return Err(Error::InvalidPeriod(format!(
                "expected a nonempty square matrix, got {}x{}",
                omega.nrows(),
                omega.ncols()
            )));
        }
        let asym = linalg::max_abs(&(&omega - omega.transpose()));
        if asym > SYMMETRY_TOL * (1.0 + linalg::max_abs(&omega)) {
            return Err(Error::InvalidPeriod(format!("not symmetric (deviation {asym:e})")));
        }
        let im = linalg::imag_part(&omega);
        let im = (&im + im.transpose()) * 0.5;
        let lmin = linalg::symmetric_min_eigenvalue(&im);
        if !(lmin > 0.0) {
            return Err(Error::InvalidPeriod(format!(
                "imaginary part not positive definite (smallest eigenvalue {lmin:e})"
            )));
        }
        Ok(Self { omega })
    }

    pub fn from_tau(tau: Complex64) -> Result<Self> {
        Self::new(CMat::from_element(1, 1, tau))
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &CMat {
        &self.omega
    }

    pub fn im(&self) -> DMatrix<f64> {
        linalg::imag_part(&self.omega)
    }

    /// `Omega - conj(Omega) = 2i Im Omega`.
    pub fn omega_minus_conj(&self) -> CMat {
        &self.omega - self.omega.map(|z| z.conj())
    }

    pub fn det_im(&self) -> f64 {
        self.im().determinant()
    }

    /// The flat Ricci-flat metric `g_{a b} = (Im Omega)^{-1}_{ab} / 2`.
    pub fn flat_metric(&self) -> CMat {
        let inv = self
            .im()
            .try_inverse()
            .expect("Im Omega is positive definite by construction");
        linalg::to_complex(&(inv * 0.5))
    }

    /// Volume `int omega^n / n!` of the fiber for a constant metric `g`:
    /// `det(g) 2^n det(Im Omega)`.
    pub fn volume_of(&self, g: &CMat) -> f64 {
        let n = self.dim() as i32;
        g.determinant().re * 2f64.powi(n) * self.det_im()
    }
}

/// Constant flat metric of a fiber; errors for invalid periods.
pub fn flat_metric(omega: &CMat) -> Result<CMat> {
    Ok(PeriodMatrix::new(omega.clone())?.flat_metric())
}

/// Polynomial family `Omega(s) = sum_k C_k s^k` over a disc in the base.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodFamily {
    n: usize,
    #[serde(with = "cmat_list")]
    coefficients: Vec<CMat>,
    domain_radius: f64,
}

impl PeriodFamily {
    pub fn new(coefficients: Vec<CMat>, domain_radius: f64) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::InvalidArgument("family needs at least one coefficient".into()));
        };
        let n = first.nrows();
        for c in &coefficients {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::InvalidArgument("coefficient matrices must all be n x n".into()));
            }
            if linalg::max_abs(&(c - c.transpose())) > SYMMETRY_TOL * (1.0 + linalg::max_abs(c)) {
                return Err(Error::InvalidPeriod("family coefficient is not symmetric".into()));
            }
        }
        if !(domain_radius > 0.0) {
            return Err(Error::InvalidArgument("domain radius must be positive".into()));
        }
        let fam = Self { n, coefficients, domain_radius };
        fam.period(Complex64::new(0.0, 0.0))?;
        Ok(fam)
    }

    /// Family with an automatically estimated domain radius around `s = 0`.
    pub fn with_estimated_radius(coefficients: Vec<CMat>) -> Result<Self> {
        let mut fam = Self::new(coefficients, 1.0)?;
        fam.domain_radius = fam.estimate_domain_radius();
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[CMat] {
        &self.coefficients
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn contains(&self, s: Complex64) -> bool {
        s.norm() <= self.domain_radius * (1.0 + 1e-12)
    }

    fn check_domain(&self, s: Complex64) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { s: format!("{s}"), radius: self.domain_radius })
        }
    }

    fn eval_poly(&self, s: Complex64, order: usize) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for (k, c) in self.coefficients.iter().enumerate().skip(order) {
            let mut factor = Complex64::new(1.0, 0.0);
            for j in 0..order {
                factor *= (k - j) as f64;
            }
            out += c * (factor * s.powu((k - order) as u32));
        }
        out
    }

    pub fn omega_at(&self, s: Complex64) -> CMat {
        self.eval_poly(s, 0)
    }

    /// Exact `d Omega / ds`.
    pub fn derivative(&self, s: Complex64) -> CMat {
        self.eval_poly(s, 1)
    }

    pub fn second_derivative(&self, s: Complex64) -> CMat {
        self.eval_poly(s, 2)
    }

    pub fn period(&self, s: Complex64) -> Result<PeriodMatrix> {
        PeriodMatrix::new(self.omega_at(s))
    }

    /// Taylor-shifted family `t -> Omega(s0 + t)` with a re-estimated radius.
    pub fn recentered(&self, s0: Complex64) -> Result<Self> {
        let deg = self.coefficients.len();
        let mut coeffs = vec![CMat::zeros(self.n, self.n); deg];
        for (k, ck) in self.coefficients.iter().enumerate() {
            for (j, out) in coeffs.iter_mut().enumerate().take(k + 1) {
                let binom = binomial(k, j);
                *out += ck * (s0.powu((k - j) as u32) * binom);
            }
        }
        Self::with_estimated_radius(coeffs)
    }

    /// Largest radius (up to 1) on which sampled discs keep `Im Omega` positive
    /// definite with half of the central eigenvalue margin.
    pub fn estimate_domain_radius(&self) -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        let lmin0 = linalg::symmetric_min_eigenvalue(&linalg::imag_part(&self.omega_at(zero)));
        let mut r = 1.0f64;
        let ok = |r: f64| {
            (1..=8).all(|ring| {
                let rr = r * ring as f64 / 8.0;
                (0..64).all(|k| {
                    let s = Complex64::from_polar(rr, 2.0 * std::f64::consts::PI * k as f64 / 64.0);
                    let im = linalg::imag_part(&self.omega_at(s));
                    linalg::symmetric_min_eigenvalue(&im) > 0.5 * lmin0
                })
            })
        };
        while !ok(r) && r > 1e-6 {
            r *= 0.9;
        }
        r
    }

    /// Kodaira-Spencer tensor `A^a_b = -(Omega' (Omega - conj Omega)^{-1})_{ab}`,
    /// the constant harmonic representative of the class of `d/ds`.
    pub fn ks_closed_form(&self, s: Complex64) -> Result<CMat> {
        self.check_domain(s)?;
        let p = self.period(s)?;
        let m_inv = linalg::inverse(&p.omega_minus_conj())
            .ok_or_else(|| Error::InvalidPeriod("Omega - conj(Omega) singular".into()))?;
        Ok(-(self.derivative(s) * m_inv))
    }

    /// Weil-Petersson metric `G_{ss}(s)` from the L2 pairing of the closed-form
    /// Kodaira-Spencer tensor, cross-checked against `-d d-bar log det Im Omega`.
    pub fn wp_closed_form(&self, s: Complex64) -> Result<f64> {
        let a = self.ks_closed_form(s)?;
        let p = self.period(s)?;
        let g = p.flat_metric();
        let g_inv = linalg::inverse(&g).expect("flat metric is invertible");
        let vol = p.volume_of(&g);
        let wp = ks_pointwise_norm(&a, &g, &g_inv) * vol;
        let log_det = self.wp_log_det(s)?;
        if (wp - log_det).abs() > 1e-10 * (1.0 + wp.abs()) {
            return Err(Error::Consistency(format!(
                "L2 Weil-Petersson value {wp} disagrees with log-det value {log_det}"
            )));
        }
        Ok(wp)
    }

    /// `-d_s d_sbar log det Im Omega(s) = tr(P^{-1} Omega' P^{-1} conj(Omega')) / 4`.
    pub fn wp_log_det(&self, s: Complex64) -> Result<f64> {
        self.check_domain(s)?;
        let p = self.period(s)?;
        let p_inv = linalg::to_complex(&p.im().try_inverse().expect("positive definite"));
        let d = self.derivative(s);
        let d_bar = d.map(|z| z.conj());
        Ok((&p_inv * &d * &p_inv * d_bar).trace().re / 4.0)
    }
}

/// Pointwise `A . conj(A) = A^a_b conj(A^c_d) g_{a c} g^{b d}` for constant tensors.
pub fn ks_pointwise_norm(a: &CMat, g: &CMat, g_inv: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for al in 0..n {
        for be in 0..n {
            for ga in 0..n {
                for de in 0..n {
                    acc += a[(al, be)] * a[(ga, de)].conj() * g[(al, ga)] * g_inv[(be, de)];
                }
            }
        }
    }
    acc.re
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub(crate) mod cmat_list {
    use super::CMat;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    /// Matrices as nested `[[ [re, im], ... ], ...]` rows.
    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Vec<[f64; 2]>>> = v.iter().map(to_rows).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let rows: Vec<Vec<Vec<[f64; 2]>>> = Vec::deserialize(d)?;
        rows.iter().map(|m| from_rows(m).map_err(serde::de::Error::custom)).collect()
    }

    pub fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err("coefficient matrix must be square and nonempty".into());
        }
        Ok(CMat::from_fn(n, n, |r, c| Complex64::new(rows[r][c][0], rows[r][c][1])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, I};

    fn tau_family(t: Complex64) -> PeriodFamily {
        PeriodFamily::with_estimated_radius(vec![
            CMat::from_element(1, 1, t),
            CMat::from_element(1, 1, c(1.0, 0.0)),
        ])
        .unwrap()
    }

    #[test]
    fn flat_metric_examples() {
        let g = PeriodMatrix::from_tau(I).unwrap().flat_metric();
        assert!((g[(0, 0)].re - 0.5).abs() < 1e-15);
        let p = PeriodMatrix::from_tau(c(0.0, 2.0)).unwrap();
        assert!((p.flat_metric()[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!((p.volume_of(&p.flat_metric()) - 1.0).abs() < 1e-12);
        let p2 = PeriodMatrix::new(CMat::identity(2, 2) * I).unwrap();
        let g2 = p2.flat_metric();
        assert!((g2[(0, 0)].re - 0.5).abs() < 1e-15 && g2[(0, 1)].norm() < 1e-15);
        assert!((p2.volume_of(&g2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_periods_rejected() {
        assert!(PeriodMatrix::from_tau(c(1.0, -0.5)).is_err());
        assert!(PeriodMatrix::from_tau(c(1.0, 0.0)).is_err());
        let asym = CMat::from_row_slice(2, 2, &[I, c(0.1, 0.0), c(0.2, 0.0), I]);
        assert!(PeriodMatrix::new(asym).is_err());
        assert!(flat_metric(&CMat::from_element(1, 1, c(0.0, -1.0))).is_err());
    }

    #[test]
    fn ks_and_wp_examples() {
        let fam = tau_family(I);
        let a = fam.ks_closed_form(c(0.0, 0.0)).unwrap();
        assert!((a[(0, 0)] - c(0.0, 0.5)).norm() < 1e-15);
        assert!((fam.wp_closed_form(c(0.0, 0.0)).unwrap() - 0.25).abs() < 1e-15);

        let siegel = preset("siegel-e").unwrap().family;
        let a = siegel.ks_closed_form(c(0.0, 0.0)).unwrap();
        assert!((a[(0, 1)] - c(0.0, 0.5)).norm() < 1e-15 && a[(0, 0)].norm() < 1e-15);
        assert!((siegel.wp_closed_form(c(0.0, 0.0)).unwrap() - 0.5).abs() < 1e-14);

        let constant = preset("constant").unwrap().family;
        assert_eq!(constant.ks_closed_form(c(0.0, 0.0)).unwrap()[(0, 0)], c(0.0, 0.0));
        assert_eq!(constant.wp_closed_form(c(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn domain_is_enforced() {
        let fam = tau_family(I);
        assert!(fam.domain_radius() > 0.4 && fam.domain_radius() <= 1.0);
        assert!(matches!(fam.ks_closed_form(c(5.0, 0.0)), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn recentering_shifts_the_family() {
        let fam = PeriodFamily::with_estimated_radius(vec![
            CMat::from_element(1, 1, I),
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::from_element(1, 1, c(0.1, 0.05)),
        ])
        .unwrap();
        let s0 = c(0.1, 0.2);
        let shifted = fam.recentered(s0).unwrap();
        let t = c(-0.03, 0.02);
        assert!(linalg::max_abs(&(shifted.omega_at(t) - fam.omega_at(s0 + t))) < 1e-14);
        assert!(linalg::max_abs(&(shifted.derivative(t) - fam.derivative(s0 + t))) < 1e-14);
    }

    /// Finite differences of `log det Im Omega` as an independent route.
    fn wp_by_finite_differences(fam: &PeriodFamily, s: Complex64, h: f64) -> f64 {
        let u = |s: Complex64| -fam.period(s).unwrap().det_im().ln();
        let lap = |h: f64| {
            (u(s + h) + u(s - h) + u(s + c(0.0, h)) + u(s - c(0.0, h)) - 4.0 * u(s)) / (4.0 * h * h)
        };
        (4.0 * lap(h / 2.0) - lap(h)) / 3.0
    }

    #[test]
    fn wp_matches_log_det_second_derivative_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for name in preset_names() {
            let fam = preset(name).unwrap().family;
            for _ in 0..50 {
                let r = fam.domain_radius() * 0.9 * rng.random::<f64>().sqrt();
                let s = Complex64::from_polar(r, rng.random::<f64>() * std::f64::consts::TAU);
                let wp = fam.wp_closed_form(s).unwrap();
                assert!((wp - fam.wp_log_det(s).unwrap()).abs() < 1e-10);
                let fd = wp_by_finite_differences(&fam, s, 1e-2);
                assert!((wp - fd).abs() < 1e-7, "{name} at {s}: {wp} vs {fd}");
            }
        }
    }

    #[test]
    fn ks_derivatives_match_analytic_differentiation() {
        let fam = PeriodFamily::with_estimated_radius(vec![
            CMat::from_row_slice(2, 2, &[I, c(0.1, 0.0), c(0.1, 0.0), c(0.2, 1.5)]),
            CMat::from_row_slice(2, 2, &[c(0.3, 0.1), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.2)]),
            CMat::from_row_slice(2, 2, &[c(0.05, 0.0), c(0.0, 0.1), c(0.0, 0.1), c(0.1, 0.0)]),
        ])
        .unwrap();
        let s = c(0.05, -0.04);
        let p = fam.period(s).unwrap();
        let m_inv = linalg::inverse(&p.omega_minus_conj()).unwrap();
        let d1 = fam.derivative(s);
        let d1_bar = d1.map(|z| z.conj());
        // d/ds A = -Omega'' M^{-1} + Omega' M^{-1} Omega' M^{-1}
        let ds = -(fam.second_derivative(s) * &m_inv) + &d1 * &m_inv * &d1 * &m_inv;
        // d/dsbar A = -Omega' M^{-1} conj(Omega') M^{-1}
        let dsb = -(&d1 * &m_inv * d1_bar * &m_inv);
        let h = 1e-4;
        let a = |s| fam.ks_closed_form(s).unwrap();
        let da = (a(s + h) - a(s - h)) / c(2.0 * h, 0.0);
        let db = (a(s + c(0.0, h)) - a(s - c(0.0, h))) / c(2.0 * h, 0.0);
        let fd_s = (&da - &db * I) * c(0.5, 0.0);
        let fd_sb = (&da + &db * I) * c(0.5, 0.0);
        assert!(linalg::max_abs(&(fd_s - ds)) < 1e-8);
        assert!(linalg::max_abs(&(fd_sb - dsb)) < 1e-8);
    }
}
