//! Fiberwise complex Monge-Ampère solver.
//!
//! Finds the potential `phi` with `det(g0 + Hess phi) = e^b det g_flat` and zero harmonic
//! projection by damped Newton iteration. Each step solves the linearization
//! `□_phi delta = F / det g_phi` with the variable-metric Poisson solver.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::{self, Direction, FiberGrid, MetricField, TensorField};

/// Reference metric cohomologous to the flat one, and the flat target density.
#[derive(Clone, Debug)]
pub struct MongeAmpereProblem {
    reference: MetricField,
    flat_det: f64,
}

impl MongeAmpereProblem {
    pub fn new(reference: MetricField) -> Result<Self> {
        let grid = reference.grid().clone();
        let flat_det = grid.period().flat_metric().determinant().re;
        let nodes = grid.node_count();
        let mean = (0..nodes).map(|k| reference.det(k)).sum::<f64>() / nodes as f64;
        // a form in the flat class has the flat volume; quadrature only perturbs this slightly
        if ((mean - flat_det) / flat_det).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "reference volume {mean:e} differs from the flat class volume {flat_det:e}"
            )));
        }
        Ok(Self { reference, flat_det })
    }

    /// `g0 = g_flat + Hess psi` for a real potential `psi`.
    pub fn from_potential(grid: Arc<FiberGrid>, psi: &TensorField) -> Result<Self> {
        let flat = MetricField::flat(grid);
        Self::new(MetricField::from_field(flat.field().add(&hessian(psi))?)?)
    }

    pub fn grid(&self) -> &Arc<FiberGrid> {
        self.reference.grid()
    }

    pub fn reference(&self) -> &MetricField {
        &self.reference
    }

    /// Metric `g0 + Hess phi`; errors if it is not positive definite.
    pub fn metric(&self, phi: &TensorField) -> Result<MetricField> {
        if !phi.grid().same_layout(self.grid()) {
            return Err(Error::ShapeMismatch("potential and problem live on different grids".into()));
        }
        phi.values()?;
        MetricField::from_field(self.reference.field().add(&hessian(phi))?)
    }

    /// Residual `det g_phi - e^b det g_flat` with `b` matching the total volume.
    fn residual_field(&self, g: &MetricField) -> (Vec<f64>, f64) {
        let nodes = g.grid().node_count();
        let mean = (0..nodes).map(|k| g.det(k)).sum::<f64>() / nodes as f64;
        let b = (mean / self.flat_det).ln();
        ((0..nodes).map(|k| g.det(k) - mean).collect(), b)
    }
}

/// Complex Hessian `d_a d_bbar f` with variance (down-holo, down-anti).
pub fn hessian(f: &TensorField) -> TensorField {
    fiber::spectral_derivative(&fiber::spectral_derivative(f, Direction::Holo), Direction::Anti)
}

/// Sup norm of `det(g0 + Hess phi) - e^b det g_flat`.
pub fn ma_residual(phi: &TensorField, p: &MongeAmpereProblem) -> Result<f64> {
    let g = p.metric(phi)?;
    let (r, _) = p.residual_field(&g);
    Ok(r.iter().fold(0.0, |m, v| m.max(v.abs())))
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Number of initial steps whose damping is capped at `warmup_factor`.
    pub warmup_steps: usize,
    pub warmup_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30, warmup_steps: 0, warmup_factor: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
    /// Sup norm of the undamped Newton step.
    pub decrement: f64,
}

#[derive(Clone, Debug)]
pub struct MaSolution {
    pub potential: TensorField,
    pub metric: MetricField,
    pub b: f64,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Damped Newton solve for the Ricci-flat potential.
pub fn solve_ricci_flat(p: &MongeAmpereProblem, opts: &SolverOptions) -> Result<MaSolution> {
    if !(opts.tol >= 1e-12) {
        return Err(Error::InvalidArgument(format!("tolerance {} below 1e-12", opts.tol)));
    }
    let grid = p.grid().clone();
    let mut phi = TensorField::zeros(grid.clone(), vec![]);
    let mut g = p.metric(&phi)?;
    let (mut res_field, mut b) = p.residual_field(&g);
    let mut res = sup(&res_field);
    let mut trace = Vec::new();
    let mut iteration = 0;
    while res > opts.tol {
        if iteration >= opts.max_iter {
            return Err(Error::SolverFailure {
                iterations: iteration,
                residual: res,
                trace: trace.iter().map(|r: &TraceRow| r.residual).collect(),
            });
        }
        iteration += 1;
        let rhs = TensorField::scalar(
            grid.clone(),
            res_field.iter().enumerate().map(|(k, r)| Complex64::new(r / g.det(k), 0.0)).collect(),
        )?;
        // the volume-matched residual integrates to zero against g_phi dV up to roundoff
        let mean = fiber::harmonic_projection(&rhs, &g)?;
        let step = fiber::poisson_solve(&rhs.map(|z| Complex64::new(z.re - mean.re, 0.0)), &g)?;
        let decrement = step.max_abs();
        let mut damping: f64 = if iteration <= opts.warmup_steps { opts.warmup_factor } else { 1.0 };
        loop {
            let trial = phi.add(&step.scale(Complex64::new(damping, 0.0)))?;
            if let Ok(tg) = p.metric(&trial) {
                let (tr, tb) = p.residual_field(&tg);
                let tres = sup(&tr);
                if tres <= 0.9 * res || tres <= opts.tol {
                    phi = trial;
                    g = tg;
                    res_field = tr;
                    b = tb;
                    res = tres;
                    break;
                }
            }
            damping *= 0.5;
            if damping < 1.0 / 1024.0 {
                return Err(Error::StepFailure { damping });
            }
        }
        trace.push(TraceRow { iteration, residual: res, damping, decrement });
    }
    let h = fiber::harmonic_projection(&phi, &g)?;
    let potential = phi.map(|z| Complex64::new(z.re - h.re, 0.0));
    Ok(MaSolution { potential, metric: g, b, residual: res, iterations: iteration, trace })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solver trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "iteration,residual,damping,decrement")?;
    for r in trace {
        writeln!(w, "{},{:e},{},{:e}", r.iteration, r.residual, r.damping, r.decrement)?;
    }
    Ok(())
}
