//! Differential operators pulled back to the fixed domain by `phi`.
//!
//! With `J = d_z phi`:
//!
//! * `d_y^phi = d_y - (d_y phi / J) d_z`, `d_z^phi = d_z / J`
//! * `P = [[J, 0], [-d_y phi, 1]]`, `E = P P^T / J`
//! * `grad^phi f = P^T grad f / J`, `div^phi v = div(P v) / J`,
//!   `lap^phi f = div(E grad f) / J`
//!
//! Every first-order operator has a componentwise and a matrix route. The
//! conservative forms are evaluated separately and agree only to truncation
//! order.

use crate::conormal::{apply_conormal, apply_spatial, z3_weight, History, MultiIndex};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SymTensorField, VectorField};
use crate::surface::Diffeomorphism;

/// Pointwise `P` and `E` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrices {
    /// Row-major entries `[P11, P12, P21, P22]`.
    pub p: [Field; 4],
    /// Entries `E11`, `E12 = E21`, `E22`.
    pub e: SymTensorField,
    pub dzphi: Field,
}

impl MetricMatrices {
    pub fn p_entry(&self, i: usize, j: usize) -> &Field {
        &self.p[2 * i + j]
    }

    /// Smallest eigenvalue of `E` over the grid.
    pub fn min_eigenvalue(&self) -> f64 {
        let mut lo = f64::INFINITY;
        for ((a, b), c) in self
            .e
            .yy
            .values()
            .iter()
            .zip(self.e.yz.values())
            .zip(self.e.zz.values())
        {
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
            lo = lo.min(mean - rad);
        }
        lo
    }

    /// `max |E - P P^T / J|` over all nodes and entries.
    pub fn identity_defect(&self) -> f64 {
        let j = &self.dzphi;
        let pp = |r: usize, c: usize| -> Field {
            let mut s = self.p_entry(r, 0) * self.p_entry(c, 0);
            s.axpy(1.0, &(self.p_entry(r, 1) * self.p_entry(c, 1)));
            s.zip_map(j, |x, jj| x / jj)
        };
        let d11 = (&pp(0, 0) - &self.e.yy).max_abs();
        let d12 = (&pp(0, 1) - &self.e.yz).max_abs();
        let d21 = (&pp(1, 0) - &self.e.yz).max_abs();
        let d22 = (&pp(1, 1) - &self.e.zz).max_abs();
        d11.max(d12).max(d21).max(d22)
    }
}

pub(crate) fn check_metric(d: &Diffeomorphism) -> Result<()> {
    let min = d.dzphi.min();
    if !(min > 0.0) {
        return Err(Error::MetricValidity {
            min_dzphi: min,
            required: 0.0,
        });
    }
    Ok(())
}

pub fn metric_matrices(d: &Diffeomorphism) -> Result<MetricMatrices> {
    check_metric(d)?;
    let j = d.dzphi.clone();
    let s = &d.dyphi;
    let zero = j.scale(0.0);
    let one = zero.map(|_| 1.0);
    let e = SymTensorField {
        yy: j.clone(),
        yz: s.scale(-1.0),
        zz: s.zip_map(&j, |s, jj| (1.0 + s * s) / jj),
    };
    Ok(MetricMatrices {
        p: [j.clone(), zero, s.scale(-1.0), one],
        e,
        dzphi: j,
    })
}

fn ratio(a: &Field, j: &Field) -> Field {
    a.zip_map(j, |x, jj| x / jj)
}

/// `d_i^phi f` for `i = 0` (horizontal) or `i = 1` (vertical).
pub fn partial_phi(grid: &Grid, f: &Field, d: &Diffeomorphism, i: usize) -> Result<Field> {
    check_metric(d)?;
    Ok(partial_unchecked(grid, f, d, i))
}

pub(crate) fn partial_unchecked(grid: &Grid, f: &Field, d: &Diffeomorphism, i: usize) -> Field {
    let fz = grid.dz_unchecked(f);
    match i {
        0 => {
            let mut out = grid.dy_unchecked(f);
            let a = ratio(&d.dyphi, &d.dzphi);
            out.axpy(-1.0, &(&a * &fz));
            out
        }
        1 => ratio(&fz, &d.dzphi),
        _ => panic!("direction {i} out of range"),
    }
}

/// Componentwise `grad^phi f`.
pub fn grad_phi(grid: &Grid, f: &Field, d: &Diffeomorphism) -> Result<VectorField> {
    check_metric(d)?;
    Ok(VectorField::new(
        partial_unchecked(grid, f, d, 0),
        partial_unchecked(grid, f, d, 1),
    ))
}

/// `P^T grad f / J` from the assembled matrices.
pub fn grad_phi_matrix(grid: &Grid, f: &Field, m: &MetricMatrices) -> VectorField {
    let g = [grid.dy_unchecked(f), grid.dz_unchecked(f)];
    let comp = |i: usize| {
        let mut s = m.p_entry(0, i) * &g[0];
        s.axpy(1.0, &(m.p_entry(1, i) * &g[1]));
        ratio(&s, &m.dzphi)
    };
    VectorField::new(comp(0), comp(1))
}

/// Conservative `div(P v) / J`.
pub fn div_phi(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<Field> {
    check_metric(d)?;
    Ok(div_conservative(grid, v, d))
}

pub(crate) fn div_conservative(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Field {
    let py = &d.dzphi * &v.y;
    let mut pz = v.z.clone();
    pz.axpy(-1.0, &(&d.dyphi * &v.y));
    let mut s = grid.dy_unchecked(&py);
    s.axpy(1.0, &grid.dz_unchecked(&pz));
    ratio(&s, &d.dzphi)
}

/// `sum_i d_i^phi v_i`.
pub fn div_phi_componentwise(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<Field> {
    check_metric(d)?;
    let mut s = partial_unchecked(grid, &v.y, d, 0);
    s.axpy(1.0, &partial_unchecked(grid, &v.z, d, 1));
    Ok(s)
}

/// `(1/J) sum_{ij} P_ji d_j v_i`.
pub fn div_phi_matrix(grid: &Grid, v: &VectorField, m: &MetricMatrices) -> Field {
    let mut s = Field::zeros(grid);
    for i in 0..2 {
        let vi = v.component(i);
        let g = [grid.dy_unchecked(vi), grid.dz_unchecked(vi)];
        for (jdx, gj) in g.iter().enumerate() {
            s.axpy(1.0, &(m.p_entry(jdx, i) * gj));
        }
    }
    ratio(&s, &m.dzphi)
}

/// Conservative `div(E grad f) / J`, evaluated on every node.
pub fn laplacian_phi(grid: &Grid, f: &Field, d: &Diffeomorphism) -> Result<Field> {
    let m = metric_matrices(d)?;
    let fy = grid.dy_unchecked(f);
    let fz = grid.dz_unchecked(f);
    let mut qy = &m.e.yy * &fy;
    qy.axpy(1.0, &(&m.e.yz * &fz));
    let mut qz = &m.e.yz * &fy;
    qz.axpy(1.0, &(&m.e.zz * &fz));
    let mut s = grid.dy_unchecked(&qy);
    s.axpy(1.0, &grid.dz_unchecked(&qz));
    Ok(ratio(&s, &m.dzphi))
}

/// `sum_i d_i^phi d_i^phi f`.
pub fn laplacian_phi_componentwise(grid: &Grid, f: &Field, d: &Diffeomorphism) -> Result<Field> {
    check_metric(d)?;
    let mut s = Field::zeros(grid);
    for i in 0..2 {
        let g = partial_unchecked(grid, f, d, i);
        s.axpy(1.0, &partial_unchecked(grid, &g, d, i));
    }
    Ok(s)
}

/// Matrix divergence of the matrix gradient.
pub fn laplacian_phi_matrix(grid: &Grid, f: &Field, m: &MetricMatrices) -> Field {
    div_phi_matrix(grid, &grad_phi_matrix(grid, f, m), m)
}

/// `G[i][j] = d_j^phi v_i`.
pub fn jacobian_phi(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<[[Field; 2]; 2]> {
    check_metric(d)?;
    Ok(jacobian_unchecked(grid, v, d))
}

pub(crate) fn jacobian_unchecked(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> [[Field; 2]; 2] {
    let row = |vi: &Field| [partial_unchecked(grid, vi, d, 0), partial_unchecked(grid, vi, d, 1)];
    [row(&v.y), row(&v.z)]
}

pub fn strain_from_jacobian(g: &[[Field; 2]; 2]) -> SymTensorField {
    SymTensorField {
        yy: g[0][0].clone(),
        yz: (&g[0][1] + &g[1][0]).scale(0.5),
        zz: g[1][1].clone(),
    }
}

/// `S^phi v = (grad^phi v + (grad^phi v)^T) / 2`.
pub fn strain_phi(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<SymTensorField> {
    Ok(strain_from_jacobian(&jacobian_phi(grid, v, d)?))
}

/// `d_y^phi v_z - d_z^phi v_y`.
pub fn vorticity_phi(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<Field> {
    check_metric(d)?;
    let mut w = partial_unchecked(grid, &v.z, d, 0);
    w.axpy(-1.0, &partial_unchecked(grid, &v.y, d, 1));
    Ok(w)
}

/// `C_i^m(f) = Z^m(d_i^phi f) - d_i^phi(Z^m f)` by direct operator
/// differences. `maps[n]` is the diffeomorphism of the `n`-th newest level.
pub fn commutator_residual(
    grid: &Grid,
    history: &History,
    maps: &[&Diffeomorphism],
    idx: MultiIndex,
    i: usize,
) -> Result<Field> {
    if maps.len() < idx.k + 1 || history.depth() < idx.k + 1 {
        return Err(Error::HistoryDepth {
            needed: idx.k + 1,
            available: history.depth().min(maps.len()),
        });
    }
    for d in maps {
        check_metric(d)?;
    }
    let mut derived = History::new(history.dt(), idx.k + 1);
    for back in (0..=idx.k).rev() {
        let f = history.level(back).expect("depth checked");
        derived.push(partial_unchecked(grid, f, maps[back], i));
    }
    let lhs = apply_conormal(grid, &derived, idx)?;
    let zf = apply_conormal(grid, history, idx)?;
    Ok(&lhs - &partial_unchecked(grid, &zf, maps[0], i))
}

/// How the three commutator terms are evaluated in [`commutator_expansion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionMode {
    /// Each term from its defining discrete differences.
    Discrete,
    /// Leibniz sums for the product term and `[Z_3, d_z] = -(1-z)^{-2} d_z`.
    Continuum,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `[Z^alpha, a, b] = Z^alpha(ab) - (Z^alpha a) b - a Z^alpha b`.
fn product_commutator(grid: &Grid, a: &Field, b: &Field, alpha: [usize; 2], mode: ExpansionMode) -> Field {
    match mode {
        ExpansionMode::Discrete => {
            let mut out = apply_spatial(grid, &(a * b), alpha);
            out.axpy(-1.0, &(&apply_spatial(grid, a, alpha) * b));
            out.axpy(-1.0, &(a * &apply_spatial(grid, b, alpha)));
            out
        }
        ExpansionMode::Continuum => {
            let mut out = Field::zeros(grid);
            for b1 in 0..=alpha[0] {
                for b3 in 0..=alpha[1] {
                    let full = b1 == alpha[0] && b3 == alpha[1];
                    if (b1 == 0 && b3 == 0) || full {
                        continue;
                    }
                    let c = binom(alpha[0], b1) * binom(alpha[1], b3);
                    let za = apply_spatial(grid, a, [b1, b3]);
                    let zb = apply_spatial(grid, b, [alpha[0] - b1, alpha[1] - b3]);
                    out.axpy(c, &(&za * &zb));
                }
            }
            out
        }
    }
}

/// `[Z^alpha, d_z] f`.
fn vertical_commutator(grid: &Grid, f: &Field, alpha: [usize; 2], mode: ExpansionMode) -> Field {
    match mode {
        ExpansionMode::Discrete => {
            let mut out = apply_spatial(grid, &grid.dz_unchecked(f), alpha);
            out.axpy(-1.0, &grid.dz_unchecked(&apply_spatial(grid, f, alpha)));
            out
        }
        ExpansionMode::Continuum => {
            let wp: Vec<f64> = grid.z_nodes().iter().map(|&z| 1.0 / (1.0 - z).powi(2)).collect();
            let n = alpha[1];
            let mut out = Field::zeros(grid);
            for j in 0..n {
                let inner = apply_spatial(grid, f, [0, n - 1 - j]);
                let mut t = grid.dz_unchecked(&inner);
                for (k, w) in wp.iter().enumerate() {
                    for v in t.row_mut(k) {
                        *v *= -w;
                    }
                }
                out.axpy(1.0, &apply_spatial(grid, &t, [0, j]));
            }
            apply_spatial(grid, &out, [alpha[0], 0])
        }
    }
}

/// Term-by-term assembly of `C_i^alpha(f)` for a purely spatial index.
pub fn commutator_expansion(
    grid: &Grid,
    f: &Field,
    d: &Diffeomorphism,
    alpha: [usize; 2],
    i: usize,
    mode: ExpansionMode,
) -> Result<Field> {
    check_metric(d)?;
    let a = match i {
        0 => ratio(&d.dyphi, &d.dzphi),
        1 => d.dzphi.map(|j| 1.0 / j),
        _ => panic!("direction {i} out of range"),
    };
    let b = grid.dz_unchecked(f);
    let mut c = product_commutator(grid, &a, &b, alpha, mode);
    c.axpy(1.0, &(&apply_spatial(grid, &a, alpha) * &b));
    c.axpy(1.0, &(&a * &vertical_commutator(grid, f, alpha, mode)));
    if i == 0 {
        // Z_1 and Z_3 commute with d_y exactly, also after discretization.
        c = c.scale(-1.0);
    }
    Ok(c)
}

/// Weight `z/(1-z)` as a field, convenient for operator tests.
pub fn z3_weight_field(grid: &Grid) -> Field {
    let w = z3_weight(grid);
    let mut f = Field::zeros(grid);
    for (k, wk) in w.iter().enumerate() {
        f.row_mut(k).fill(*wk);
    }
    f
}
