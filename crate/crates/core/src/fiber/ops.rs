use std::io::Write;

use num_complex::Complex64;

use super::field::{Index, MetricField, TensorField};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Direction of a fiber derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `d/dz^a`; appends a down-holo index.
    Holo,
    /// `d/dzbar^b`; appends a down-anti index.
    Anti,
}

impl Direction {
    fn index(self) -> Index {
        match self {
            Direction::Holo => Index::DownHolo,
            Direction::Anti => Index::DownAnti,
        }
    }
}

/// How two tensors are paired by [`contract`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// Full Hermitian inner product `a . conj(b)` of equal-variance tensors; scalar result.
    Inner,
    /// Last slot of `a` against first slot of `b`, raising or lowering with the metric when
    /// both slots have the same variance direction.
    Natural,
}

/// Spectral derivative in every fiber direction. The derivative index is appended last.
pub fn spectral_derivative(f: &TensorField, dir: Direction) -> TensorField {
    let grid = f.grid().clone();
    let n = grid.dim();
    let (dx_dz, dy_dz, dx_dzb, dy_dzb) = grid.jacobians();
    let (jx, jy) = match dir {
        Direction::Holo => (dx_dz, dy_dz),
        Direction::Anti => (dx_dzb, dy_dzb),
    };
    let mut data = Vec::with_capacity(f.components().len() * n);
    for comp in 0..f.components().len() {
        let hat = grid.forward(&f.periodic_part(comp));
        for a in 0..n {
            let mult = match dir {
                Direction::Holo => grid.holo_multiplier(a),
                Direction::Anti => grid.anti_multiplier(a),
            };
            let prod: Vec<Complex64> = hat.iter().zip(mult).map(|(h, m)| h * m).collect();
            let mut vals = grid.inverse(&prod);
            if let Some(drift) = f.drift() {
                let c = &drift[comp];
                let shift: Complex64 = (0..n).map(|j| c[j] * jx[(j, a)] + c[n + j] * jy[(j, a)]).sum();
                vals.iter_mut().for_each(|v| *v += shift);
            }
            data.push(vals);
        }
    }
    let mut variance = f.variance().to_vec();
    variance.push(dir.index());
    TensorField::from_data(grid, variance, data).expect("derivative shape is consistent")
}

/// Christoffel symbols `Gamma^c_{ab} = g^{dbar c} d_a g_{b dbar}`, stored at `[(c*n + a)*n + b]`.
pub fn christoffel(g: &MetricField) -> Vec<Vec<Complex64>> {
    let grid = g.grid();
    let n = grid.dim();
    let nodes = grid.node_count();
    if g.is_constant() {
        return vec![vec![ZERO; nodes]; n * n * n];
    }
    // dg[(b*n + d)*n + a] = d_a g_{b dbar}
    let dg = spectral_derivative(g.field(), Direction::Holo);
    let mut out = vec![vec![ZERO; nodes]; n * n * n];
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let slot = &mut out[(c * n + a) * n + b];
                for d in 0..n {
                    let src = &dg.components()[(b * n + d) * n + a];
                    for node in 0..nodes {
                        slot[node] += g.g_inv(d, c, node) * src[node];
                    }
                }
            }
        }
    }
    out
}

fn multi_index(mut flat: usize, rank: usize, n: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for k in (0..rank).rev() {
        idx[k] = flat % n;
        flat /= n;
    }
    idx
}

fn flat_of(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Chern-connection covariant derivative; the derivative index is appended last.
pub fn covariant_derivative(f: &TensorField, g: &MetricField, dir: Direction) -> Result<TensorField> {
    if !f.grid().same_layout(g.grid()) {
        return Err(Error::ShapeMismatch("field and metric live on different grids".into()));
    }
    let partial = spectral_derivative(f, dir);
    if g.is_constant() || f.rank() == 0 {
        return Ok(partial);
    }
    let n = f.grid().dim();
    let nodes = f.grid().node_count();
    let rank = f.rank();
    let gamma = christoffel(g);
    let gam = |c: usize, a: usize, b: usize| &gamma[(c * n + a) * n + b];
    let mut data = partial.components().to_vec();
    for (out_flat, out) in data.iter_mut().enumerate() {
        let full = multi_index(out_flat, rank + 1, n);
        let e = full[rank];
        let idx = &full[..rank];
        for (slot, &kind) in f.variance().iter().enumerate() {
            let i = idx[slot];
            let mut src_idx = idx.to_vec();
            for k in 0..n {
                src_idx[slot] = k;
                let src = f.component(&src_idx);
                // connection coefficients for this slot and derivative direction
                let (coeff, conj, sign): (&Vec<Complex64>, bool, f64) = match (dir, kind) {
                    (Direction::Holo, Index::UpHolo) => (gam(i, e, k), false, 1.0),
                    (Direction::Holo, Index::DownHolo) => (gam(k, e, i), false, -1.0),
                    (Direction::Anti, Index::UpAnti) => (gam(i, e, k), true, 1.0),
                    (Direction::Anti, Index::DownAnti) => (gam(k, e, i), true, -1.0),
                    _ => break,
                };
                for node in 0..nodes {
                    let c = if conj { coeff[node].conj() } else { coeff[node] };
                    out[node] += sign * c * src[node];
                }
            }
        }
    }
    TensorField::from_data(f.grid().clone(), partial.variance().to_vec(), data)
}

/// Pointwise tensor product `a ⊗ b`.
pub fn tensor_product(a: &TensorField, b: &TensorField) -> Result<TensorField> {
    if !a.grid().same_layout(b.grid()) {
        return Err(Error::ShapeMismatch("fields live on different grids".into()));
    }
    let nodes = a.grid().node_count();
    let mut data = Vec::with_capacity(a.components().len() * b.components().len());
    for ca in a.components() {
        for cb in b.components() {
            data.push((0..nodes).map(|k| ca[k] * cb[k]).collect());
        }
    }
    let mut variance = a.variance().to_vec();
    variance.extend_from_slice(b.variance());
    TensorField::from_data(a.grid().clone(), variance, data)
}

/// Weight `w(i, j)` pairing slot types `(s, t)`; `None` when the pairing is not defined.
fn pairing_weight(s: Index, t: Index) -> Option<Weight> {
    use Index::*;
    match (s, t) {
        (UpHolo, DownHolo) | (DownHolo, UpHolo) | (UpAnti, DownAnti) | (DownAnti, UpAnti) => Some(Weight::Delta),
        // g^{jbar i} for (down-holo i, down-anti j), symmetric roles otherwise
        (DownHolo, DownAnti) => Some(Weight::InvTransposed),
        (DownAnti, DownHolo) => Some(Weight::Inv),
        (UpHolo, UpAnti) => Some(Weight::Metric),
        (UpAnti, UpHolo) => Some(Weight::MetricTransposed),
        _ => None,
    }
}

#[derive(Clone, Copy)]
enum Weight {
    Delta,
    /// `g^{ibar j}` for slot values `(i, j)`.
    Inv,
    /// `g^{jbar i}`.
    InvTransposed,
    /// `g_{i jbar}`.
    Metric,
    /// `g_{j ibar}`.
    MetricTransposed,
}

impl Weight {
    fn at(self, g: &MetricField, i: usize, j: usize, node: usize) -> Complex64 {
        match self {
            Weight::Delta => {
                if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            }
            Weight::Inv => g.g_inv(i, j, node),
            Weight::InvTransposed => g.g_inv(j, i, node),
            Weight::Metric => g.g(i, j, node),
            Weight::MetricTransposed => g.g(j, i, node),
        }
    }
}

/// Metric trace over slots `i < j` (natural pairing of dual slots, metric pairing otherwise).
pub fn trace(f: &TensorField, i: usize, j: usize, g: &MetricField) -> Result<TensorField> {
    let rank = f.rank();
    if i >= j || j >= rank {
        return Err(Error::InvalidArgument(format!("invalid trace slots ({i}, {j}) for rank {rank}")));
    }
    let v = f.variance();
    let w = pairing_weight(v[i], v[j]).ok_or_else(|| {
        Error::TypeMismatch(format!("cannot pair {} with {}", v[i].tag(), v[j].tag()))
    })?;
    let n = f.grid().dim();
    let nodes = f.grid().node_count();
    let variance: Vec<Index> =
        v.iter().enumerate().filter(|(k, _)| *k != i && *k != j).map(|(_, &x)| x).collect();
    let out_comps = n.pow(variance.len() as u32);
    let mut data = vec![vec![ZERO; nodes]; out_comps];
    for (out_flat, out) in data.iter_mut().enumerate() {
        let rest = multi_index(out_flat, rank - 2, n);
        for p in 0..n {
            for q in 0..n {
                let mut idx = Vec::with_capacity(rank);
                let mut r = rest.iter();
                for k in 0..rank {
                    idx.push(if k == i {
                        p
                    } else if k == j {
                        q
                    } else {
                        *r.next().unwrap()
                    });
                }
                let src = &f.components()[flat_of(&idx, n)];
                for node in 0..nodes {
                    out[node] += w.at(g, p, q, node) * src[node];
                }
            }
        }
    }
    TensorField::from_data(f.grid().clone(), variance, data)
}

/// Pointwise metric contraction of two tensors.
pub fn contract(a: &TensorField, b: &TensorField, pairing: Pairing, g: &MetricField) -> Result<TensorField> {
    match pairing {
        Pairing::Natural => {
            if a.rank() == 0 || b.rank() == 0 {
                return Err(Error::TypeMismatch("natural pairing needs non-scalar fields".into()));
            }
            let slot = a.rank() - 1;
            let prod = tensor_product(a, b)?;
            trace(&prod, slot, slot + 1, g)
        }
        Pairing::Inner => {
            if a.variance() != b.variance() {
                return Err(Error::TypeMismatch(format!(
                    "inner product of {:?} with {:?}",
                    a.variance(),
                    b.variance()
                )));
            }
            if !a.grid().same_layout(b.grid()) {
                return Err(Error::ShapeMismatch("fields live on different grids".into()));
            }
            let n = a.grid().dim();
            let nodes = a.grid().node_count();
            let rank = a.rank();
            let weights: Vec<Weight> = a
                .variance()
                .iter()
                .map(|&s| match s {
                    Index::UpHolo => Weight::Metric,
                    Index::DownHolo => Weight::InvTransposed,
                    Index::UpAnti => Weight::MetricTransposed,
                    Index::DownAnti => Weight::Inv,
                })
                .collect();
            let comps = a.components().len();
            let mut out = vec![ZERO; nodes];
            for ia in 0..comps {
                let ma = multi_index(ia, rank, n);
                for ib in 0..comps {
                    let mb = multi_index(ib, rank, n);
                    let (ca, cb) = (&a.components()[ia], &b.components()[ib]);
                    for node in 0..nodes {
                        let mut w = Complex64::new(1.0, 0.0);
                        for k in 0..rank {
                            w *= weights[k].at(g, ma[k], mb[k], node);
                        }
                        out[node] += w * ca[node] * cb[node].conj();
                    }
                }
            }
            TensorField::scalar(a.grid().clone(), out)
        }
    }
}

/// `∫ f g dV` by trapezoidal quadrature (spectrally accurate for periodic integrands).
pub fn integrate(f: &TensorField, g: &MetricField) -> Result<Complex64> {
    let v = f.values()?;
    let nodes = v.len() as f64;
    Ok(v.iter().enumerate().map(|(k, x)| x * g.density(k)).sum::<Complex64>() / nodes)
}

/// Volume `∫ g dV`.
pub fn volume(g: &MetricField) -> f64 {
    let nodes = g.grid().node_count();
    (0..nodes).map(|k| g.density(k)).sum::<f64>() / nodes as f64
}

/// Harmonic projection: the `g dV` mean of `f`.
pub fn harmonic_projection(f: &TensorField, g: &MetricField) -> Result<Complex64> {
    Ok(integrate(f, g)? / volume(g))
}

/// Flat Laplacian eigenvalues `lambda_k` for a constant inverse metric `inv[(b, a)] = g^{bbar a}`.
pub(crate) fn flat_eigenvalues(grid: &super::FiberGrid, inv: &crate::linalg::CMat) -> Vec<f64> {
    let n = grid.dim();
    (0..grid.node_count())
        .map(|mode| {
            let mut s = ZERO;
            for a in 0..n {
                for b in 0..n {
                    s -= inv[(b, a)] * grid.holo_multiplier(a)[mode] * grid.anti_multiplier(b)[mode];
                }
            }
            s.re
        })
        .collect()
}

/// `□f = -g^{bbar a} d_a d_bbar f`. The spectrum is nonnegative.
pub fn laplacian(f: &TensorField, g: &MetricField) -> Result<TensorField> {
    f.values()?;
    let grid = g.grid();
    if g.is_constant() {
        let lam = flat_eigenvalues(grid, &g.mean_inverse());
        let hat = grid.forward(&f.periodic_part(0));
        let prod: Vec<Complex64> = hat.iter().zip(&lam).map(|(h, l)| h * l).collect();
        return TensorField::scalar(grid.clone(), grid.inverse(&prod));
    }
    let hess = spectral_derivative(&spectral_derivative(f, Direction::Holo), Direction::Anti);
    let tr = trace(&hess, 0, 1, g)?;
    Ok(tr.scale(Complex64::new(-1.0, 0.0)))
}

/// Solve `□u = f` with `H(u) = 0`.
///
/// Constant metrics divide by the eigenvalues. Variable metrics iterate on the
/// density-weighted equation `det g (f - □u) = 0`, whose operator `cof^{bbar a} d_a d_bbar`
/// is symmetric for Kähler metrics, preconditioned by the multiplier of the mean cofactor.
pub fn poisson_solve(f: &TensorField, g: &MetricField) -> Result<TensorField> {
    let v = f.values()?;
    let h = harmonic_projection(f, g)?;
    let scale = v.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if h.norm() >= 1e-10 * scale {
        return Err(Error::NotSolvable(h.norm()));
    }
    let grid = g.grid().clone();
    let nodes = grid.node_count();
    let weights: Vec<f64> = if g.is_constant() {
        vec![1.0; nodes]
    } else {
        let mean = (0..nodes).map(|k| g.det(k)).sum::<f64>() / nodes as f64;
        (0..nodes).map(|k| g.det(k) / mean).collect()
    };
    let n = grid.dim();
    let mean_cof = crate::linalg::CMat::from_fn(n, n, |b, a| {
        (0..nodes).map(|k| g.g_inv(b, a, k) * weights[k]).sum::<Complex64>() / nodes as f64
    });
    let lam = flat_eigenvalues(&grid, &mean_cof);
    let apply_inv = |r: &[Complex64]| -> Vec<Complex64> {
        let hat = grid.forward(r);
        let div: Vec<Complex64> =
            hat.iter().zip(&lam).map(|(h, &l)| if l.abs() > 1e-12 { h / l } else { ZERO }).collect();
        grid.inverse(&div)
    };
    if g.is_constant() {
        return TensorField::scalar(grid.clone(), apply_inv(v));
    }
    let weighted = |r: &TensorField| -> Result<Vec<Complex64>> {
        Ok(r.values()?.iter().zip(&weights).map(|(z, w)| z * w).collect())
    };
    let omega = relaxation(g, &weights, &mean_cof);
    let rhs = TensorField::scalar(grid.clone(), weighted(f)?)?;
    // the operator's range excludes the zero and Nyquist modes
    let rhs = band_limit(&rhs);
    let mut u = TensorField::scalar(grid.clone(), apply_inv(rhs.values()?))?;
    let mut history = Vec::new();
    for it in 0..500 {
        let r = rhs.sub(&divergence_operator(&u, g, &weights)?)?;
        let res = r.max_abs();
        history.push(res);
        if res <= 1e-11 * scale {
            let mean = harmonic_projection(&u, g)?;
            return Ok(u.map(|z| z - mean));
        }
        if it == 499 || !res.is_finite() {
            break;
        }
        let du = TensorField::scalar(grid.clone(), apply_inv(r.values()?))?;
        u = u.add(&du.scale(Complex64::new(omega, 0.0)))?;
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(Error::SolverFailure { iterations: history.len(), residual, trace: history })
}

/// `-d_bbar(w g^{bbar a} d_a u)`: the density-weighted Laplacian in conservative form. With
/// spectral derivatives this is symmetric and nonnegative on the grid, which keeps the
/// preconditioned iteration convergent when products alias.
fn divergence_operator(u: &TensorField, g: &MetricField, weights: &[f64]) -> Result<TensorField> {
    let grid = g.grid();
    let n = grid.dim();
    let nodes = grid.node_count();
    let du = spectral_derivative(u, Direction::Holo);
    let mut flux = vec![vec![ZERO; nodes]; n];
    for (b, fb) in flux.iter_mut().enumerate() {
        for a in 0..n {
            let src = &du.components()[a];
            for k in 0..nodes {
                fb[k] += weights[k] * g.g_inv(b, a, k) * src[k];
            }
        }
    }
    let flux = TensorField::from_data(grid.clone(), vec![Index::UpHolo], flux)?;
    let div = spectral_derivative(&flux, Direction::Anti);
    let mut out = vec![ZERO; nodes];
    for b in 0..n {
        for (k, o) in out.iter_mut().enumerate() {
            *o -= div.components()[b * n + b][k];
        }
    }
    TensorField::scalar(grid.clone(), out)
}

/// Optimal Richardson factor `2/(m+M)`, where `[m, M]` bounds the generalized eigenvalues
/// of the pointwise cofactor against the preconditioner.
fn relaxation(g: &MetricField, weights: &[f64], mean_cof: &crate::linalg::CMat) -> f64 {
    let n = g.grid().dim();
    let eig = mean_cof.clone().symmetric_eigen();
    let s = &eig.eigenvectors
        * crate::linalg::CMat::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(l.max(1e-300).powf(-0.5), 0.0)))
        * eig.eigenvectors.adjoint();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (k, w) in weights.iter().enumerate() {
        let cof = crate::linalg::CMat::from_fn(n, n, |b, a| g.g_inv(b, a, k) * *w);
        for l in crate::linalg::hermitian_eigenvalues(&(&s * cof * &s)) {
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    2.0 / (lo + hi)
}

/// Remove the zero mode and Nyquist modes of a scalar field.
fn band_limit(f: &TensorField) -> TensorField {
    let grid = f.grid().clone();
    let mut hat = grid.forward(&f.periodic_part(0));
    for (mode, h) in hat.iter_mut().enumerate() {
        if mode == 0 || grid.is_nyquist(mode) {
            *h = ZERO;
        }
    }
    TensorField::scalar(grid.clone(), grid.inverse(&hat)).expect("scalar shape")
}

/// Check that the top third of the spectrum carries at most `tol` of the energy.
pub fn check_spectral_tail(f: &TensorField, tol: f64) -> Result<()> {
    let frac = f.spectral_tail_fraction();
    if frac > tol {
        return Err(Error::Accuracy(format!("spectral tail fraction {frac:e} exceeds {tol:e}")));
    }
    Ok(())
}

/// Write a field as CSV: a metadata line with the variance tags, then one row per node with
/// lattice coordinates and the real and imaginary part of every component.
pub fn write_csv<W: Write>(f: &TensorField, mut w: W) -> Result<()> {
    let grid = f.grid();
    let n = grid.dim();
    let tags: Vec<&str> = f.variance().iter().map(|i| i.tag()).collect();
    writeln!(w, "# n={} N={} variance=[{}]", n, grid.points(), tags.join(","))?;
    let mut header: Vec<String> = (1..=n).map(|j| format!("x{j}")).collect();
    header.extend((1..=n).map(|j| format!("y{j}")));
    for comp in 0..f.components().len() {
        let label: String = multi_index(comp, f.rank(), n).iter().map(|i| (i + 1).to_string()).collect();
        let label = if label.is_empty() { "f".to_string() } else { format!("c{label}") };
        header.push(format!("re_{label}"));
        header.push(format!("im_{label}"));
    }
    writeln!(w, "{}", header.join(","))?;
    for node in 0..grid.node_count() {
        let mut row: Vec<String> = grid.coords(node).iter().map(|x| format!("{x}")).collect();
        for comp in f.components() {
            row.push(format!("{:e}", comp[node].re));
            row.push(format!("{:e}", comp[node].im));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
