use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::FiberGrid;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Index type of a tensor slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Index {
    UpHolo,
    DownHolo,
    UpAnti,
    DownAnti,
}

impl Index {
    pub fn tag(self) -> &'static str {
        match self {
            Index::UpHolo => "up-holo",
            Index::DownHolo => "down-holo",
            Index::UpAnti => "up-anti",
            Index::DownAnti => "down-anti",
        }
    }

    /// Index type after complex conjugation.
    pub fn conj(self) -> Index {
        match self {
            Index::UpHolo => Index::UpAnti,
            Index::DownHolo => Index::DownAnti,
            Index::UpAnti => Index::UpHolo,
            Index::DownAnti => Index::DownHolo,
        }
    }
}

/// Complex tensor sampled on a fiber grid.
///
/// `data[component][node]`, components in row-major multi-index order. A field may carry
/// a `drift`: per component, coefficients of a function linear in `(x, y)` that is part of
/// the sampled values. Differentiation treats the drift analytically so quasi-periodic
/// fields such as `y -> Omega' y` are handled exactly.
#[derive(Clone, Debug)]
pub struct TensorField {
    grid: Arc<FiberGrid>,
    variance: Vec<Index>,
    data: Vec<Vec<Complex64>>,
    drift: Option<Vec<Vec<Complex64>>>,
}

impl TensorField {
    pub fn from_data(grid: Arc<FiberGrid>, variance: Vec<Index>, data: Vec<Vec<Complex64>>) -> Result<Self> {
        let comps = grid.dim().pow(variance.len() as u32);
        if data.len() != comps || data.iter().any(|c| c.len() != grid.node_count()) {
            return Err(Error::ShapeMismatch(format!(
                "expected {comps} components of {} nodes",
                grid.node_count()
            )));
        }
        Ok(Self { grid, variance, data, drift: None })
    }

    pub fn zeros(grid: Arc<FiberGrid>, variance: Vec<Index>) -> Self {
        let comps = grid.dim().pow(variance.len() as u32);
        let data = vec![vec![ZERO; grid.node_count()]; comps];
        Self { grid, variance, data, drift: None }
    }

    /// Constant tensor; `values` in component order.
    pub fn constant(grid: Arc<FiberGrid>, variance: Vec<Index>, values: &[Complex64]) -> Result<Self> {
        let nodes = grid.node_count();
        let data = values.iter().map(|&v| vec![v; nodes]).collect();
        Self::from_data(grid, variance, data)
    }

    pub fn scalar(grid: Arc<FiberGrid>, values: Vec<Complex64>) -> Result<Self> {
        Self::from_data(grid, vec![], vec![values])
    }

    /// Scalar field from a function of the lattice coordinates `(x^1..x^n, y^1..y^n)`.
    pub fn scalar_from_fn(grid: Arc<FiberGrid>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(grid.coords(i))).collect();
        Self { grid, variance: vec![], data: vec![values], drift: None }
    }

    /// Attach a linear drift. `drift[component]` holds `2n` coefficients for `(x, y)`;
    /// the sampled values are updated to include it.
    pub fn with_drift(mut self, drift: Vec<Vec<Complex64>>) -> Result<Self> {
        let d = 2 * self.grid.dim();
        if drift.len() != self.data.len() || drift.iter().any(|c| c.len() != d) {
            return Err(Error::ShapeMismatch("drift coefficients do not match field shape".into()));
        }
        for (comp, coeffs) in self.data.iter_mut().zip(&drift) {
            for (node, v) in comp.iter_mut().enumerate() {
                let x = self.grid.coords(node);
                *v += coeffs.iter().zip(x).map(|(c, x)| c * x).sum::<Complex64>();
            }
        }
        self.drift = Some(match self.drift.take() {
            None => drift,
            Some(old) => old
                .iter()
                .zip(&drift)
                .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a + b).collect())
                .collect(),
        });
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<FiberGrid> {
        &self.grid
    }

    pub fn variance(&self) -> &[Index] {
        &self.variance
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn drift(&self) -> Option<&Vec<Vec<Complex64>>> {
        self.drift.as_ref()
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.data
    }

    pub fn component(&self, idx: &[usize]) -> &[Complex64] {
        &self.data[self.flat_index(idx)]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        let n = self.grid.dim();
        idx.iter().fold(0, |acc, &i| acc * n + i)
    }

    /// Scalar values; errors unless the field is rank 0.
    pub fn values(&self) -> Result<&[Complex64]> {
        if self.rank() != 0 {
            return Err(Error::TypeMismatch(format!("expected scalar field, got rank {}", self.rank())));
        }
        Ok(&self.data[0])
    }

    /// Sampled values minus the drift (the periodic part).
    pub(crate) fn periodic_part(&self, comp: usize) -> Vec<Complex64> {
        match &self.drift {
            None => self.data[comp].clone(),
            Some(drift) => self.data[comp]
                .iter()
                .enumerate()
                .map(|(node, v)| {
                    let x = self.grid.coords(node);
                    v - drift[comp].iter().zip(x).map(|(c, x)| c * x).sum::<Complex64>()
                })
                .collect(),
        }
    }

    fn check_same_shape(&self, other: &TensorField) -> Result<()> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        if self.variance != other.variance {
            return Err(Error::TypeMismatch(format!(
                "variance {:?} vs {:?}",
                self.variance, other.variance
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &TensorField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(&a, &b)| f(a, b)).collect())
            .collect();
        Ok(Self { grid: self.grid.clone(), variance: self.variance.clone(), data, drift: None })
    }

    pub fn add(&self, other: &TensorField) -> Result<Self> {
        let mut out = self.zip_with(other, |a, b| a + b)?;
        out.drift = combine_drift(&self.drift, &other.drift, 1.0);
        Ok(out)
    }

    pub fn sub(&self, other: &TensorField) -> Result<Self> {
        let mut out = self.zip_with(other, |a, b| a - b)?;
        out.drift = combine_drift(&self.drift, &other.drift, -1.0);
        Ok(out)
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            variance: self.variance.clone(),
            data: self.data.iter().map(|c| c.iter().map(|v| v * k).collect()).collect(),
            drift: self.drift.as_ref().map(|d| d.iter().map(|c| c.iter().map(|v| v * k).collect()).collect()),
        }
    }

    /// Pointwise product with a scalar field. The result carries no drift.
    pub fn mul_scalar(&self, s: &TensorField) -> Result<Self> {
        let sv = s.values()?;
        if !self.grid.same_layout(&s.grid) {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid.clone(),
            variance: self.variance.clone(),
            data: self.data.iter().map(|c| c.iter().zip(sv).map(|(a, b)| a * b).collect()).collect(),
            drift: None,
        })
    }

    /// Complex conjugate field; index types flip between holomorphic and antiholomorphic.
    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            variance: self.variance.iter().map(|i| i.conj()).collect(),
            data: self.data.iter().map(|c| c.iter().map(|v| v.conj()).collect()).collect(),
            drift: self.drift.as_ref().map(|d| d.iter().map(|c| c.iter().map(|v| v.conj()).collect()).collect()),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            variance: self.variance.clone(),
            data: self.data.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(),
            drift: None,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &TensorField) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a - b).norm()))
            .fold(0.0, f64::max))
    }

    /// Fraction of spectral energy (of the periodic part) carried by modes whose largest
    /// wavenumber exceeds a third of the grid size.
    pub fn spectral_tail_fraction(&self) -> f64 {
        let cutoff = (self.grid.points() / 3) as i64;
        let (mut tail, mut total) = (0.0, 0.0);
        for comp in 0..self.data.len() {
            let hat = self.grid.forward(&self.periodic_part(comp));
            for (mode, v) in hat.iter().enumerate() {
                let e = v.norm_sqr();
                total += e;
                if self.grid.wavevector(mode).iter().any(|k| k.abs() > cutoff) {
                    tail += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

fn combine_drift(
    a: &Option<Vec<Vec<Complex64>>>,
    b: &Option<Vec<Vec<Complex64>>>,
    sign: f64,
) -> Option<Vec<Vec<Complex64>>> {
    match (a, b) {
        (None, None) => None,
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) => Some(b.iter().map(|c| c.iter().map(|v| v * sign).collect()).collect()),
        (Some(a), Some(b)) => Some(
            a.iter()
                .zip(b)
                .map(|(a, b)| a.iter().zip(b).map(|(a, b)| a + b * sign).collect())
                .collect(),
        ),
    }
}

/// Hermitian positive definite fiber metric `g_{a bbar}` with cached inverse and determinant.
///
/// `inverse[b * n + a]` stores `g^{bbar a}`, i.e. entry `(b, a)` of the inverse matrix.
#[derive(Clone, Debug)]
pub struct MetricField {
    g: TensorField,
    inverse: Vec<Vec<Complex64>>,
    det: Vec<f64>,
    constant: bool,
}

impl MetricField {
    /// The flat Ricci-flat metric of the grid's period matrix.
    pub fn flat(grid: Arc<FiberGrid>) -> Self {
        let g = grid.period().flat_metric();
        Self::from_constant(grid, &g).expect("flat metric is positive definite")
    }

    pub fn from_constant(grid: Arc<FiberGrid>, g: &CMat) -> Result<Self> {
        let n = grid.dim();
        let values: Vec<Complex64> = (0..n * n).map(|k| g[(k / n, k % n)]).collect();
        let field = TensorField::constant(grid, vec![Index::DownHolo, Index::DownAnti], &values)?;
        let mut m = Self::from_field(field)?;
        m.constant = true;
        Ok(m)
    }

    /// Validates Hermitian symmetry (relative 1e-12) and positive definiteness at every node.
    pub fn from_field(g: TensorField) -> Result<Self> {
        if g.variance() != [Index::DownHolo, Index::DownAnti] {
            return Err(Error::TypeMismatch("metric must have variance (down-holo, down-anti)".into()));
        }
        let grid = g.grid().clone();
        let n = grid.dim();
        let nodes = grid.node_count();
        let mut inverse = vec![vec![ZERO; nodes]; n * n];
        let mut det = vec![0.0; nodes];
        let mut local = vec![ZERO; n * n];
        let mut constant = true;
        for node in 0..nodes {
            for k in 0..n * n {
                local[k] = g.components()[k][node];
                if node > 0 && local[k] != g.components()[k][0] {
                    constant = false;
                }
            }
            let scale = local.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            for a in 0..n {
                for b in 0..n {
                    if (local[a * n + b] - local[b * n + a].conj()).norm() > 1e-12 * scale {
                        return Err(Error::InvalidArgument(format!("metric not Hermitian at node {node}")));
                    }
                }
            }
            if !linalg::small_is_positive_definite(n, &local) {
                return Err(Error::InvalidArgument(format!("metric not positive definite at node {node}")));
            }
            let (d, inv) = linalg::small_det_inv(n, &local);
            det[node] = d.re;
            for k in 0..n * n {
                inverse[k][node] = inv[k];
            }
        }
        Ok(Self { g, inverse, det, constant })
    }

    pub fn grid(&self) -> &Arc<FiberGrid> {
        self.g.grid()
    }

    pub fn field(&self) -> &TensorField {
        &self.g
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// `g_{a bbar}` at a node.
    pub fn g(&self, a: usize, b: usize, node: usize) -> Complex64 {
        self.g.components()[a * self.grid().dim() + b][node]
    }

    /// `g^{bbar a}` at a node.
    pub fn g_inv(&self, b: usize, a: usize, node: usize) -> Complex64 {
        self.inverse[b * self.grid().dim() + a][node]
    }

    pub fn det(&self, node: usize) -> f64 {
        self.det[node]
    }

    /// Density of `g dV` relative to the lattice measure `dx dy`.
    pub fn density(&self, node: usize) -> f64 {
        self.det[node] * self.grid().volume_factor()
    }

    pub fn matrix_at(&self, node: usize) -> CMat {
        let n = self.grid().dim();
        CMat::from_fn(n, n, |a, b| self.g(a, b, node))
    }

    /// Volume-weighted mean of the inverse metric, used as a constant preconditioner.
    pub(crate) fn mean_inverse(&self) -> CMat {
        let n = self.grid().dim();
        let nodes = self.grid().node_count() as f64;
        CMat::from_fn(n, n, |b, a| self.inverse[b * n + a].iter().sum::<Complex64>() / nodes)
    }
}
