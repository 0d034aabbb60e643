//! Symmetric discretizations of `-div(E grad q) = J f` on the fixed grid and
//! a preconditioned conjugate-gradient driver.
//!
//! The compact operator is the average of the two P1 triangulations of each
//! cell, with `E` sampled at the right-angle corner of every triangle. The
//! wide operator `G^T M_J G` uses the same first-derivative stencils as the
//! transformed operators and serves the velocity projection.
//! Both are preconditioned by exact solves of the horizontally averaged
//! operator, one Fourier mode at a time.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SymTensorField, VectorField};
use crate::operators::MetricMatrices;
use crate::surface::Diffeomorphism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BottomCondition {
    #[default]
    NeumannZero,
    DirichletZero,
}

/// Preconditioner for the conjugate-gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Jacobi,
    #[default]
    ModeLine,
}

/// Rows carrying unknowns: all but the surface row, and the bottom row too
/// under a homogeneous Dirichlet bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeRows {
    pub first: usize,
    pub last: usize,
}

impl FreeRows {
    pub fn new(grid: &Grid, bottom: BottomCondition) -> Self {
        let first = match bottom {
            BottomCondition::NeumannZero => 0,
            BottomCondition::DirichletZero => 1,
        };
        FreeRows {
            first,
            last: grid.n_z() - 2,
        }
    }

    pub fn count(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.first..=self.last).contains(&k)
    }
}

/// Nine-point symmetric stencil stored per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Stiffness {
    n_y: usize,
    n_z: usize,
    coeffs: Vec<[f64; 9]>,
}

#[inline]
fn offset(dj: isize, dk: isize) -> usize {
    ((dj + 1) * 3 + (dk + 1)) as usize
}

impl Stiffness {
    /// Corner-quadrature assembly of `int grad w . E grad u dy dz`.
    pub fn compact(grid: &Grid, e: &SymTensorField) -> Self {
        let (ny, nz) = (grid.n_y(), grid.n_z());
        let dy = grid.dy();
        let z = grid.z_nodes();
        let mut coeffs = vec![[0.0; 9]; ny * nz];
        for k in 0..nz - 1 {
            let dz = z[k + 1] - z[k];
            let w = 0.25 * dy * dz;
            for j in 0..ny {
                let jp = (j + 1) % ny;
                for (jc, kc) in [(j, k), (jp, k), (j, k + 1), (jp, k + 1)] {
                    let c = grid.idx(jc, kc);
                    let (e11, e12, e22) = (e.yy.values()[c], e.yz.values()[c], e.zz.values()[c]);
                    let local = [
                        (j, kc, -1.0 / dy, 0.0),
                        (jp, kc, 1.0 / dy, 0.0),
                        (jc, k, 0.0, -1.0 / dz),
                        (jc, k + 1, 0.0, 1.0 / dz),
                    ];
                    for &(pj, pk, py, pz) in &local {
                        let row = grid.idx(pj, pk);
                        for &(qj, qk, qy, qz) in &local {
                            let val = w * (py * (e11 * qy + e12 * qz) + pz * (e12 * qy + e22 * qz));
                            let dj = wrap(qj as isize - pj as isize, ny);
                            let dk = qk as isize - pk as isize;
                            coeffs[row][offset(dj, dk)] += val;
                        }
                    }
                }
            }
        }
        Stiffness { n_y: ny, n_z: nz, coeffs }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (ny, nz) = (self.n_y, self.n_z);
        for k in 0..nz {
            for j in 0..ny {
                let c = &self.coeffs[k * ny + j];
                let mut s = 0.0;
                for dj in -1isize..=1 {
                    let jj = (j as isize + dj).rem_euclid(ny as isize) as usize;
                    for dk in -1isize..=1 {
                        let kk = k as isize + dk;
                        if kk < 0 || kk >= nz as isize {
                            continue;
                        }
                        s += c[offset(dj, dk)] * x[kk as usize * ny + jj];
                    }
                }
                y[k * ny + j] = s;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[offset(0, 0)]).collect()
    }

    /// Largest asymmetry `|K_ab - K_ba|`, for tests.
    pub fn asymmetry(&self) -> f64 {
        let (ny, nz) = (self.n_y, self.n_z);
        let mut worst: f64 = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                for dj in -1isize..=1 {
                    for dk in -1isize..=1 {
                        let kk = k as isize + dk;
                        if kk < 0 || kk >= nz as isize {
                            continue;
                        }
                        let jj = (j as isize + dj).rem_euclid(ny as isize) as usize;
                        let a = self.coeffs[k * ny + j][offset(dj, dk)];
                        let b = self.coeffs[kk as usize * ny + jj][offset(-dj, -dk)];
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        worst
    }
}

fn wrap(d: isize, n: usize) -> isize {
    let n = n as isize;
    if d > 1 {
        d - n
    } else if d < -1 {
        d + n
    } else {
        d
    }
}

/// Lumped mass `dy * w_k` per node.
pub fn lumped_mass(grid: &Grid) -> Vec<f64> {
    let dy = grid.dy();
    let mut m = Vec::with_capacity(grid.len());
    for &w in grid.quadrature_weights_z() {
        m.extend(std::iter::repeat(dy * w).take(grid.n_y()));
    }
    m
}

/// Dense Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::MetricValidity {
                    min_dzphi: d,
                    required: 0.0,
                });
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l: a })
    }

    /// In-place solve; a complex right-hand side is two real ones.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            let row = &self.l[i * n..i * n + i];
            for (k, l) in row.iter().enumerate() {
                s -= *l * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Exact inverse of a horizontally invariant operator, mode by mode. The
/// symbol depends on `|xi|` only, so modes `m` and `n_y - m` share a factor.
pub struct ModeSolver {
    rows: FreeRows,
    factors: Vec<Cholesky>,
}

impl ModeSolver {
    /// `build(m)` returns the dense `count x count` matrix for mode `m`,
    /// called for `m <= n_y / 2`.
    pub fn new(grid: &Grid, rows: FreeRows, build: impl Fn(usize) -> Vec<f64>) -> Result<Self> {
        let n = rows.count();
        let factors = (0..=grid.n_y() / 2)
            .map(|m| Cholesky::factor(n, build(m)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeSolver { rows, factors })
    }

    pub fn apply(&self, grid: &Grid, r: &[f64], out: &mut [f64]) {
        let ny = grid.n_y();
        let rows = self.rows;
        let n = rows.count();
        let spectra: Vec<Vec<Complex64>> = (rows.first..=rows.last)
            .map(|k| grid.fft(&r[k * ny..(k + 1) * ny]))
            .collect();
        let mut solved = vec![vec![Complex64::new(0.0, 0.0); ny]; n];
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for m in 0..ny {
            for (i, s) in spectra.iter().enumerate() {
                col[i] = s[m];
            }
            self.factors[m.min(ny - m)].solve(&mut col);
            for (i, s) in solved.iter_mut().enumerate() {
                s[m] = col[i];
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, s) in solved.into_iter().enumerate() {
            let k = rows.first + i;
            out[k * ny..(k + 1) * ny].copy_from_slice(&grid.ifft(s));
        }
    }
}

fn row_means(grid: &Grid, f: &Field) -> Vec<f64> {
    (0..grid.n_z())
        .map(|k| f.row(k).iter().sum::<f64>() / grid.n_y() as f64)
        .collect()
}

/// Averaged compact operator: diagonal part of `E` only.
pub fn compact_mode_solver(grid: &Grid, e: &SymTensorField, rows: FreeRows) -> Result<ModeSolver> {
    let a = row_means(grid, &e.yy);
    let c = row_means(grid, &e.zz);
    let zero = vec![0.0; grid.n_z()];
    line_mode_solver(grid, rows, &a, &c, &zero)
}

/// Mode solver for the compact form `cy (d_y)^2 + d_z cz d_z` with a lumped
/// shift `shift_k` added per row, coefficients constant along each row.
pub fn line_mode_solver(
    grid: &Grid,
    rows: FreeRows,
    cy: &[f64],
    cz: &[f64],
    shift: &[f64],
) -> Result<ModeSolver> {
    let dy = grid.dy();
    let z = grid.z_nodes();
    let w = grid.quadrature_weights_z();
    let nz = grid.n_z();
    ModeSolver::new(grid, rows, |m| {
        let xi = grid.wavenumbers()[m];
        let lambda = (2.0 - 2.0 * (xi * dy).cos()) / (dy * dy);
        let n = rows.count();
        let mut mat = vec![0.0; n * n];
        let mut add = |k1: usize, k2: usize, v: f64| {
            if rows.contains(k1) && rows.contains(k2) {
                mat[(k1 - rows.first) * n + (k2 - rows.first)] += v;
            }
        };
        for k in 0..nz {
            add(k, k, dy * lambda * w[k] * cy[k] + shift[k]);
        }
        for k in 0..nz - 1 {
            let g = dy * 0.5 * (cz[k] + cz[k + 1]) / (z[k + 1] - z[k]);
            add(k, k, g);
            add(k + 1, k + 1, g);
            add(k, k + 1, -g);
            add(k + 1, k, -g);
        }
        mat
    })
}

fn weak_divergence_parts(grid: &Grid, a: &Field, dzphi: &Field, mass_j: &[f64], u: &VectorField) -> Vec<f64> {
    let my = u.y.values().iter().zip(mass_j).map(|(x, m)| x * m).collect();
    let mz = u.z.values().iter().zip(mass_j).map(|(x, m)| x * m).collect();
    let my = Field::from_values(grid, my).expect("shape");
    let mz = Field::from_values(grid, mz).expect("shape");
    let mut col = mz.zip_map(dzphi, |x, j| x / j);
    col.axpy(-1.0, &(a * &my));
    let mut out = grid.dz_transpose_unchecked(&col);
    out.axpy(-1.0, &grid.dy_unchecked(&my));
    out.into_values()
}

/// `G^T M_J u` for the map `d`.
pub fn weak_divergence(grid: &Grid, d: &Diffeomorphism, u: &VectorField) -> Vec<f64> {
    let a = d.dyphi.zip_map(&d.dzphi, |s, j| s / j);
    let mass_j: Vec<f64> = lumped_mass(grid).iter().zip(d.dzphi.values()).map(|(m, j)| m * j).collect();
    weak_divergence_parts(grid, &a, &d.dzphi, &mass_j, u)
}

/// Surface flux `(G^T M_J u)_top / dy`. It equals `u.N` minus the surface
/// cell's share `w_top J div^phi u`, and is the flux for which pressure work
/// and surface work balance exactly.
pub fn weak_surface_flux(grid: &Grid, d: &Diffeomorphism, u: &VectorField) -> Vec<f64> {
    let wd = weak_divergence(grid, d, u);
    let ny = grid.n_y();
    wd[grid.top() * ny..].iter().map(|x| x / grid.dy()).collect()
}

/// `G^T M_J G` with `G` the componentwise transformed gradient and the
/// surface row held at zero. Its solution projects a velocity onto fields
/// whose conservative divergence vanishes on every row below the surface.
pub struct WideOperator {
    a: Field,
    dzphi: Field,
    mass_j: Vec<f64>,
    mask: Vec<bool>,
    modes: ModeSolver,
}

impl WideOperator {
    pub fn new(grid: &Grid, d: &Diffeomorphism, metric: &MetricMatrices) -> Result<Self> {
        if !(metric.min_eigenvalue() > 0.0) {
            return Err(Error::MetricValidity {
                min_dzphi: metric.dzphi.min(),
                required: 0.0,
            });
        }
        let rows = FreeRows {
            first: 0,
            last: grid.n_z() - 2,
        };
        let mask: Vec<bool> = (0..grid.len()).map(|i| rows.contains(i / grid.n_y())).collect();
        let mass_j: Vec<f64> = lumped_mass(grid)
            .iter()
            .zip(d.dzphi.values())
            .map(|(m, j)| m * j)
            .collect();
        let e11 = row_means(grid, &metric.e.yy);
        let e22 = row_means(grid, &metric.e.zz);
        let dy = grid.dy();
        let w = grid.quadrature_weights_z();
        let nz = grid.n_z();
        let dz = grid.dz_matrix();
        let ny = grid.n_y();
        let n = rows.count();
        let mut vertical = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                let s: f64 = (0..nz).map(|k| dz[k * nz + r] * w[k] * e22[k] * dz[k * nz + c]).sum();
                vertical[r * n + c] = dy * s;
            }
        }
        let modes = ModeSolver::new(grid, rows, |m| {
            let xi = if 2 * m == ny { 0.0 } else { grid.wavenumbers()[m] };
            let mut mat = vertical.clone();
            for r in 0..n {
                mat[r * n + r] += dy * xi * xi * w[r] * e11[r];
            }
            mat
        })?;
        Ok(WideOperator {
            a: d.dyphi.zip_map(&d.dzphi, |s, j| s / j),
            dzphi: d.dzphi.clone(),
            mass_j,
            mask,
            modes,
        })
    }

    /// Componentwise transformed gradient.
    pub fn gradient(&self, grid: &Grid, psi: &Field) -> VectorField {
        let fz = grid.dz_unchecked(psi);
        let mut gy = grid.dy_unchecked(psi);
        gy.axpy(-1.0, &(&self.a * &fz));
        VectorField::new(gy, fz.zip_map(&self.dzphi, |x, j| x / j))
    }

    /// `G^T M_J u`.
    pub fn weak_divergence(&self, grid: &Grid, u: &VectorField) -> Vec<f64> {
        weak_divergence_parts(grid, &self.a, &self.dzphi, &self.mass_j, u)
    }

    fn apply(&self, grid: &Grid, x: &[f64], out: &mut [f64]) {
        let psi = Field::from_values(grid, x.to_vec()).expect("shape");
        out.copy_from_slice(&self.weak_divergence(grid, &self.gradient(grid, &psi)));
    }

    /// `v - G psi` with `G^T M_J (v - G psi) = 0` below the surface row.
    pub fn project(&self, grid: &Grid, v: &VectorField, opts: &SolverOptions) -> Result<(VectorField, SolveStats)> {
        let b = self.weak_divergence(grid, v);
        let mut x = vec![0.0; grid.len()];
        let budget = opts.budget.unwrap_or_else(|| default_budget(grid));
        let stats = pcg(
            |u, o| self.apply(grid, u, o),
            |r, z| self.modes.apply(grid, r, z),
            &self.mask,
            &b,
            &mut x,
            opts.tol,
            budget,
        )?;
        let psi = Field::from_values(grid, x)?;
        let gpsi = self.gradient(grid, &psi);
        Ok((v - &gpsi, stats))
    }
}

/// Result of one conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Default iteration budget `10 sqrt(n_y n_z)`.
pub fn default_budget(grid: &Grid) -> usize {
    (10.0 * (grid.len() as f64).sqrt()).ceil() as usize
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients on the nodes selected by `mask`.
/// `x` holds the initial guess and receives the solution; entries outside
/// the mask are never touched.
pub fn pcg(
    apply_a: impl Fn(&[f64], &mut [f64]),
    apply_m: impl Fn(&[f64], &mut [f64]),
    mask: &[bool],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    budget: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let restrict = |v: &mut [f64]| {
        for (vi, &m) in v.iter_mut().zip(mask) {
            if !m {
                *vi = 0.0;
            }
        }
    };
    let mut bm = b.to_vec();
    restrict(&mut bm);
    let bnorm = dot(&bm, &bm).sqrt();
    let mut xm: Vec<f64> = x.to_vec();
    restrict(&mut xm);
    if bnorm == 0.0 {
        for (xi, &m) in x.iter_mut().zip(mask) {
            if m {
                *xi = 0.0;
            }
        }
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply_a(&xm, &mut r);
    for i in 0..n {
        r[i] = if mask[i] { bm[i] - r[i] } else { 0.0 };
    }
    let mut zv = vec![0.0; n];
    apply_m(&r, &mut zv);
    restrict(&mut zv);
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= budget {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res,
            });
        }
        apply_a(&p, &mut ap);
        restrict(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            xm[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        apply_m(&r, &mut zv);
        restrict(&mut zv);
        let rz_new = dot(&r, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = zv[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
        if !res.is_finite() {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res,
            });
        }
    }
    for i in 0..n {
        if mask[i] {
            x[i] = xm[i];
        }
    }
    Ok(SolveStats {
        iterations: it,
        residual: res,
    })
}

/// `-div(E grad q) = J f` in `S` with `q = dirichlet_top` on `z = 0`.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub metric: MetricMatrices,
    /// Source `f`; the weak form weights it by `J` automatically.
    pub rhs: Field,
    pub dirichlet_top: Vec<f64>,
    pub bottom: BottomCondition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub budget: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            budget: None,
            preconditioner: Preconditioner::ModeLine,
        }
    }
}

/// Assembled compact operator plus preconditioner, reusable across
/// right-hand sides on one metric.
pub struct EllipticOperator {
    pub stiffness: Stiffness,
    rows: FreeRows,
    mask: Vec<bool>,
    mass_j: Vec<f64>,
    precond: PrecondImpl,
}

enum PrecondImpl {
    Jacobi(Vec<f64>),
    Modes(ModeSolver),
}

impl EllipticOperator {
    pub fn new(
        grid: &Grid,
        metric: &MetricMatrices,
        bottom: BottomCondition,
        preconditioner: Preconditioner,
    ) -> Result<Self> {
        if !(metric.min_eigenvalue() > 0.0) {
            return Err(Error::MetricValidity {
                min_dzphi: metric.dzphi.min(),
                required: 0.0,
            });
        }
        let stiffness = Stiffness::compact(grid, &metric.e);
        let rows = FreeRows::new(grid, bottom);
        let mask: Vec<bool> = (0..grid.len()).map(|i| rows.contains(i / grid.n_y())).collect();
        let mass_j: Vec<f64> = lumped_mass(grid)
            .iter()
            .zip(metric.dzphi.values())
            .map(|(m, j)| m * j)
            .collect();
        let precond = match preconditioner {
            Preconditioner::Jacobi => {
                PrecondImpl::Jacobi(stiffness.diagonal().iter().map(|d| 1.0 / d).collect())
            }
            Preconditioner::ModeLine => PrecondImpl::Modes(compact_mode_solver(grid, &metric.e, rows)?),
        };
        Ok(EllipticOperator {
            stiffness,
            rows,
            mask,
            mass_j,
            precond,
        })
    }

    pub fn rows(&self) -> FreeRows {
        self.rows
    }

    /// Solves with source `f` and surface values `top`.
    pub fn solve(
        &self,
        grid: &Grid,
        f: &Field,
        top: &[f64],
        opts: &SolverOptions,
    ) -> Result<(Field, SolveStats)> {
        let n = grid.len();
        let ny = grid.n_y();
        let t = grid.top();
        let mut lift = vec![0.0; n];
        lift[t * ny..].copy_from_slice(top);
        let mut klift = vec![0.0; n];
        self.stiffness.apply(&lift, &mut klift);
        let b: Vec<f64> = (0..n)
            .map(|i| self.mass_j[i] * f.values()[i] - klift[i])
            .collect();
        let mut x = vec![0.0; n];
        let budget = opts.budget.unwrap_or_else(|| default_budget(grid));
        let apply_a = |u: &[f64], out: &mut [f64]| self.stiffness.apply(u, out);
        let stats = match &self.precond {
            PrecondImpl::Jacobi(inv) => pcg(
                apply_a,
                |r, z| {
                    for i in 0..r.len() {
                        z[i] = inv[i] * r[i];
                    }
                },
                &self.mask,
                &b,
                &mut x,
                opts.tol,
                budget,
            )?,
            PrecondImpl::Modes(ms) => pcg(
                apply_a,
                |r, z| ms.apply(grid, r, z),
                &self.mask,
                &b,
                &mut x,
                opts.tol,
                budget,
            )?,
        };
        x[t * ny..].copy_from_slice(top);
        Ok((Field::from_values(grid, x)?, stats))
    }

    /// `K q` on every node, including the surface row.
    pub fn apply_full(&self, q: &Field) -> Vec<f64> {
        let mut out = vec![0.0; q.values().len()];
        self.stiffness.apply(q.values(), &mut out);
        out
    }

    /// Relative residual `|M_J f - K q|` over the free nodes.
    pub fn residual(&self, f: &Field, q: &Field) -> f64 {
        let kq = self.apply_full(q);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..kq.len() {
            if self.mask[i] {
                let b = self.mass_j[i] * f.values()[i];
                num += (b - kq[i]).powi(2);
                den += b * b;
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

pub fn solve_elliptic_with_stats(
    grid: &Grid,
    prob: &EllipticProblem,
    opts: &SolverOptions,
) -> Result<(Field, SolveStats)> {
    if !(opts.tol > 0.0) {
        return Err(Error::config("scheme.solver_tol", "must be positive"));
    }
    if !prob.rhs.is_finite() || prob.dirichlet_top.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape {
            expected: "finite elliptic data".into(),
            found: "non-finite value".into(),
        });
    }
    let op = EllipticOperator::new(grid, &prob.metric, prob.bottom, opts.preconditioner)?;
    op.solve(grid, &prob.rhs, &prob.dirichlet_top, opts)
}

pub fn solve_elliptic(grid: &Grid, prob: &EllipticProblem, tol: f64) -> Result<Field> {
    solve_elliptic_with_stats(grid, prob, &SolverOptions::with_tol(tol)).map(|(q, _)| q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::CutoffSpec;
    use crate::grid::Clustering;
    use crate::operators::metric_matrices;
    use crate::surface::{build_diffeomorphism, Diffeomorphism, SurfaceState};
    use std::f64::consts::PI;

    fn flat(n_y: usize, n_z: usize, depth: f64) -> (Grid, MetricMatrices) {
        let g = Grid::new(n_y, n_z, 2.0 * PI, depth, Clustering::Uniform).unwrap();
        let m = metric_matrices(&Diffeomorphism::flat(&g, 1.0)).unwrap();
        (g, m)
    }

    #[test]
    fn compact_stiffness_symmetric_and_annihilates_constants() {
        let g = Grid::new(16, 20, 2.0 * PI, 2.0, Clustering::Tanh { beta: 2.0 }).unwrap();
        let h = SurfaceState::from_fn(&g, |y| 0.2 * y.cos());
        let d = build_diffeomorphism(&g, &h, 1.0, 0.3, &CutoffSpec::default()).unwrap();
        let m = metric_matrices(&d).unwrap();
        let k = Stiffness::compact(&g, &m.e);
        assert!(k.asymmetry() < 1e-12);
        let one = vec![1.0; g.len()];
        let mut out = vec![0.0; g.len()];
        k.apply(&one, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn flat_line_preconditioner_is_exact() {
        let (g, m) = flat(16, 24, 1.0);
        let op = EllipticOperator::new(&g, &m, BottomCondition::NeumannZero, Preconditioner::ModeLine)
            .unwrap();
        let f = Field::from_fn(&g, |y, z| (2.0 * y).sin() * (z + 0.3).cos());
        let (_, st) = op.solve(&g, &f, &vec![0.0; 16], &SolverOptions::with_tol(1e-12)).unwrap();
        assert!(st.iterations <= 2, "{}", st.iterations);
    }

    #[test]
    fn separable_dirichlet_solution() {
        let k = 2.0;
        let depth = 1.0;
        let err = |n: usize| {
            let (g, m) = flat(n, n, depth);
            let prob = EllipticProblem {
                metric: m,
                rhs: Field::zeros(&g),
                dirichlet_top: g.y_nodes().iter().map(|&y| (k * y).cos()).collect(),
                bottom: BottomCondition::DirichletZero,
            };
            let q = solve_elliptic(&g, &prob, 1e-12).unwrap();
            let exact = Field::from_fn(&g, |y, z| {
                (k * y).cos() * (k * (z + depth)).sinh() / (k * depth).sinh()
            });
            (&q - &exact).max_abs()
        };
        let (a, b) = (err(16), err(32));
        assert!(a < 1e-2 && a / b > 3.5, "{a} {b}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let (g, m) = flat(8, 8, 1.0);
        let prob = EllipticProblem {
            metric: m,
            rhs: Field::zeros(&g),
            dirichlet_top: vec![0.0; 8],
            bottom: BottomCondition::NeumannZero,
        };
        assert_eq!(solve_elliptic(&g, &prob, 1e-10).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn jacobi_and_lines_agree() {
        let g = Grid::new(16, 16, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let h = SurfaceState::from_fn(&g, |y| 0.3 * y.sin());
        let d = build_diffeomorphism(&g, &h, 1.0, 0.3, &CutoffSpec::default()).unwrap();
        let m = metric_matrices(&d).unwrap();
        let prob = EllipticProblem {
            metric: m,
            rhs: Field::from_fn(&g, |y, z| y.cos() * z),
            dirichlet_top: g.y_nodes().iter().map(|&y| (2.0 * y).sin()).collect(),
            bottom: BottomCondition::NeumannZero,
        };
        let mut o = SolverOptions::with_tol(1e-11);
        let (a, sa) = solve_elliptic_with_stats(&g, &prob, &o).unwrap();
        o.preconditioner = Preconditioner::Jacobi;
        o.budget = Some(5000);
        let (b, sb) = solve_elliptic_with_stats(&g, &prob, &o).unwrap();
        assert!((&a - &b).max_abs() < 1e-8);
        assert!(sa.iterations < sb.iterations);
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let (g, m) = flat(16, 16, 1.0);
        let prob = EllipticProblem {
            metric: m,
            rhs: Field::from_fn(&g, |y, z| y.cos() * z),
            dirichlet_top: vec![0.0; 16],
            bottom: BottomCondition::NeumannZero,
        };
        let opts = SolverOptions {
            tol: 1e-14,
            budget: Some(1),
            preconditioner: Preconditioner::Jacobi,
        };
        assert!(matches!(
            solve_elliptic_with_stats(&g, &prob, &opts),
            Err(Error::SolverFailure { iterations: 1, .. })
        ));
    }

    #[test]
    fn cholesky_solves() {
        let a = vec![4.0, 1.0, 1.0, 3.0];
        let f = Cholesky::factor(2, a.clone()).unwrap();
        let x = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)];
        let mut b = vec![a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]];
        f.solve(&mut b);
        assert!((b[0] - x[0]).norm() < 1e-14 && (b[1] - x[1]).norm() < 1e-14);
        assert!(Cholesky::factor(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
    }

    fn curved(n: usize) -> (Grid, Diffeomorphism, MetricMatrices) {
        let g = Grid::new(n, n, 2.0 * PI, 2.0, Clustering::Tanh { beta: 1.5 }).unwrap();
        let h = SurfaceState::from_fn(&g, |y| 0.2 * y.cos() + 0.05 * (2.0 * y).sin());
        let d = build_diffeomorphism(&g, &h, 1.0, 0.3, &CutoffSpec::default()).unwrap();
        let m = metric_matrices(&d).unwrap();
        (g, d, m)
    }

    #[test]
    fn weak_divergence_is_summation_by_parts() {
        let (g, d, m) = curved(16);
        let w = WideOperator::new(&g, &d, &m).unwrap();
        let v = VectorField::from_fn(&g, |y, z| [y.sin() * z, (2.0 * y).cos() + z * z]);
        let wd = w.weak_divergence(&g, &v);
        let div = crate::operators::div_phi(&g, &v, &d).unwrap();
        let mj: Vec<f64> = lumped_mass(&g).iter().zip(d.dzphi.values()).map(|(a, b)| a * b).collect();
        let ny = g.n_y();
        for k in 1..g.top() {
            for j in 0..ny {
                let i = k * ny + j;
                assert!((wd[i] + mj[i] * div.values()[i]).abs() < 1e-11);
            }
        }
        for j in 0..ny {
            let t = g.top() * ny + j;
            let vn = v.y.values()[t] * d.normal.y.values()[t] + v.z.values()[t];
            assert!((wd[t] + mj[t] * div.values()[t] - g.dy() * vn).abs() < 1e-11);
        }
    }

    #[test]
    fn projection_removes_interior_divergence() {
        let (g, d, m) = curved(24);
        let w = WideOperator::new(&g, &d, &m).unwrap();
        let v = VectorField::from_fn(&g, |y, z| [y.sin() * (1.0 + z), y.cos() * z * z]);
        let (p, st) = w.project(&g, &v, &SolverOptions::with_tol(1e-12)).unwrap();
        let div = crate::operators::div_phi(&g, &p, &d).unwrap();
        for k in 1..g.top() {
            assert!(div.row(k).iter().all(|x| x.abs() < 1e-9), "row {k}");
        }
        let (p2, st2) = w.project(&g, &p, &SolverOptions::with_tol(1e-12)).unwrap();
        assert!((&p2 - &p).max_abs() < 1e-9);
        assert!(st.iterations > 0 && st2.iterations <= st.iterations);
    }

    #[test]
    fn flat_wide_preconditioner_is_exact() {
        let g = Grid::new(16, 20, 2.0 * PI, 1.0, Clustering::Uniform).unwrap();
        let d = Diffeomorphism::flat(&g, 1.0);
        let m = metric_matrices(&d).unwrap();
        let w = WideOperator::new(&g, &d, &m).unwrap();
        let v = VectorField::from_fn(&g, |y, z| [(3.0 * y).sin() * z, y.cos() * z]);
        let (_, st) = w.project(&g, &v, &SolverOptions::with_tol(1e-12)).unwrap();
        assert!(st.iterations <= 2, "{}", st.iterations);
    }
}
