//! Global form `omega~ = omega_X + (c + 1) f^* omega^WP` and its positivity checks.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::AdmissibleForm;
use crate::fiber::TensorField;
use crate::linalg::{self, CMat};

/// Eigenvalues within this of zero count as zero.
const EIGEN_TOL: f64 = 1e-12;

/// `omega_X` with `coefficient * G^WP` added to its `s sbar` entry.
#[derive(Clone, Debug)]
pub struct AssembledForm {
    form: AdmissibleForm,
    wp: f64,
    c: f64,
    coefficient: f64,
    // coordinate components, computed once
    mixed: TensorField,
    ss: TensorField,
}

/// Add `(c + 1) G^WP_{s sbar}` to the `s sbar` coefficient; fiber and mixed blocks are kept.
pub fn assemble_global_form(w: &AdmissibleForm, wp: f64, c: f64) -> Result<AssembledForm> {
    if !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!("Green bound c = {c} must be nonnegative")));
    }
    Ok(AssembledForm {
        form: w.clone(),
        wp,
        c,
        coefficient: c + 1.0,
        mixed: w.mixed_coordinate(),
        ss: w.ss_coordinate(),
    })
}

impl AssembledForm {
    /// Negative control with the Weil-Petersson summand removed.
    pub fn without_wp(&self) -> Self {
        Self { coefficient: 0.0, ..self.clone() }
    }

    pub fn form(&self) -> &AdmissibleForm {
        &self.form
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn wp(&self) -> f64 {
        self.wp
    }

    /// Multiple of `G^WP` added to the base direction.
    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// `(n+1) x (n+1)` coefficient matrix in `(s, z)` coordinates at a node.
    pub fn matrix(&self, node: usize) -> CMat {
        let n = self.form.dim();
        let g = self.form.center_metric();
        let gs = self.mixed.components();
        CMat::from_fn(n + 1, n + 1, |i, j| match (i, j) {
            (0, 0) => self.ss.components()[0][node] + self.coefficient * self.wp,
            (0, j) => gs[j - 1][node],
            (i, 0) => gs[i - 1][node].conj(),
            (i, j) => g.g(i - 1, j - 1, node),
        })
    }

    /// Smallest eigenvalue at every node.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        (0..self.form.grid().node_count())
            .into_par_iter()
            .map(|k| linalg::min_hermitian_eigenvalue(&self.matrix(k)))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GlobalFormReport {
    pub base_point: [f64; 2],
    pub c: f64,
    pub wp: f64,
    pub wp_coefficient: f64,
    pub nodes: usize,
    pub min_eigenvalue: f64,
    pub min_eigenvalue_node: usize,
    pub hermitian_residual: f64,
    /// `min (phi + coefficient Theta - vol Theta)`, nonnegative when the inequality holds.
    pub eq20_margin: f64,
    pub remark1_margin: f64,
    pub bordered_det_residual: f64,
    /// `sup |fiber block - g|`, zero by construction.
    pub restriction_residual: f64,
    /// False when `G^WP` vanishes and the base direction is degenerate.
    pub effective: bool,
    pub pass: bool,
}

/// Eigenvalues, the scalar form of the curvature inequality with `Theta_{s sbar} = theta`,
/// and the determinant consistency of the bordered matrix.
pub fn positivity_check(a: &AssembledForm, theta: f64, base_point: [f64; 2]) -> Result<GlobalFormReport> {
    let w = &a.form;
    let g = w.center_metric();
    let phi = w.phi()?;
    let nodes = w.grid().node_count();
    let n = w.dim();
    let per_node: Vec<(f64, f64, f64, f64)> = (0..nodes)
        .into_par_iter()
        .map(|k| {
            let m = a.matrix(k);
            let herm = linalg::max_abs(&(&m - m.adjoint()));
            let ev = linalg::min_hermitian_eigenvalue(&m);
            let det_want = (phi.values().expect("scalar")[k].re + a.coefficient * a.wp) * g.det(k);
            let det_res = (m.determinant() - det_want).norm();
            let mut fiber = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    fiber = fiber.max((m[(i + 1, j + 1)] - g.g(i, j, k)).norm());
                }
            }
            (ev, herm, det_res, fiber)
        })
        .collect();
    let (min_node, min_eigenvalue) =
        per_node.iter().map(|r| r.0).enumerate().fold((0, f64::INFINITY), |b, (k, v)| if v < b.1 { (k, v) } else { b });
    let fold = |f: fn(&(f64, f64, f64, f64)) -> f64| per_node.iter().map(f).fold(0.0, f64::max);
    let vol = 1.0;
    let phi_re: Vec<f64> = phi.values()?.iter().map(|z| z.re).collect();
    let eq20_margin = phi_re.iter().map(|p| p + a.coefficient * theta - vol * theta).fold(f64::INFINITY, f64::min);
    let effective = a.wp > EIGEN_TOL;
    let positive = if effective { min_eigenvalue > EIGEN_TOL } else { min_eigenvalue >= -EIGEN_TOL };
    let remark1_margin = remark1_check(a)?;
    Ok(GlobalFormReport {
        base_point,
        c: a.c,
        wp: a.wp,
        wp_coefficient: a.coefficient,
        nodes,
        min_eigenvalue,
        min_eigenvalue_node: min_node,
        hermitian_residual: fold(|r| r.1),
        eq20_margin,
        remark1_margin,
        bordered_det_residual: fold(|r| r.2),
        restriction_residual: fold(|r| r.3),
        effective,
        pass: positive && eq20_margin >= 0.0 && remark1_margin >= 0.0,
    })
}

/// `min ((phi + coefficient G^WP) det g - det g G^WP)`: the top-degree densities of
/// `omega~^{n+1}` and `omega~^n ^ f^* omega^WP`, up to the common combinatorial factor.
pub fn remark1_check(a: &AssembledForm) -> Result<f64> {
    let w = &a.form;
    let g = w.center_metric();
    let phi = w.phi()?;
    Ok(phi
        .values()?
        .iter()
        .enumerate()
        .map(|(k, p)| (p.re + a.coefficient * a.wp) * g.det(k) - g.det(k) * a.wp)
        .fold(f64::INFINITY, f64::min))
}

/// Node coordinates and minimum eigenvalue, one row per node.
pub fn write_eigenvalue_csv<W: Write>(a: &AssembledForm, mut out: W) -> Result<()> {
    let grid = a.form.grid();
    let d = 2 * grid.dim();
    let header: Vec<String> = (1..=d / 2).map(|i| format!("x{i}")).chain((1..=d / 2).map(|i| format!("y{i}"))).collect();
    writeln!(out, "{},min_eigenvalue", header.join(","))?;
    for (k, ev) in a.min_eigenvalues().into_iter().enumerate() {
        let coords: Vec<String> = grid.coords(k).iter().map(|x| x.to_string()).collect();
        writeln!(out, "{},{ev:e}", coords.join(","))?;
    }
    Ok(())
}
