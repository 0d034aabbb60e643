//! Implicit viscous step in weak stress form.
//!
//! The bilinear form `int S^phi(w) : S^phi(u) dV_t` is assembled with the
//! same corner quadrature as the compact pressure operator, so the discrete
//! dissipation is exactly `4 eps u^T K u`.

use crate::elliptic::{default_budget, line_mode_solver, lumped_mass, pcg, FreeRows, ModeSolver, SolveStats, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, VectorField};
use crate::operators::check_metric;
use crate::surface::Diffeomorphism;

#[inline]
fn offset(dj: isize, dk: isize) -> usize {
    ((dj + 1) * 3 + (dk + 1)) as usize
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

/// Block stencil `K[r][c]` coupling component `r` of the test function with
/// component `c` of the trial function.
#[derive(Debug, Clone)]
pub struct StrainForm {
    n_y: usize,
    n_z: usize,
    blocks: [[Vec<[f64; 9]>; 2]; 2],
}

impl StrainForm {
    pub fn assemble(grid: &Grid, d: &Diffeomorphism) -> Result<Self> {
        check_metric(d)?;
        let (ny, nz) = (grid.n_y(), grid.n_z());
        let dy = grid.dy();
        let z = grid.z_nodes();
        let mk = || vec![[0.0; 9]; ny * nz];
        let mut blocks = [[mk(), mk()], [mk(), mk()]];
        for k in 0..nz - 1 {
            let dz = z[k + 1] - z[k];
            let w = 0.25 * dy * dz;
            for j in 0..ny {
                let jp = (j + 1) % ny;
                for (jc, kc) in [(j, k), (jp, k), (j, k + 1), (jp, k + 1)] {
                    let c = grid.idx(jc, kc);
                    let jac = d.dzphi.values()[c];
                    let a = d.dyphi.values()[c] / jac;
                    let wj = w * jac;
                    let local = [
                        (j, kc, -1.0 / dy, 0.0),
                        (jp, kc, 1.0 / dy, 0.0),
                        (jc, k, 0.0, -1.0 / dz),
                        (jc, k + 1, 0.0, 1.0 / dz),
                    ];
                    let t: Vec<(usize, usize, f64, f64)> = local
                        .iter()
                        .map(|&(pj, pk, cy, cz)| (pj, pk, cy - a * cz, cz / jac))
                        .collect();
                    for &(qj, qk, q0, q1) in &t {
                        let row = grid.idx(qj, qk);
                        for &(pj, pk, p0, p1) in &t {
                            let o = offset(wrap(pj as isize - qj as isize, ny), pk as isize - qk as isize);
                            blocks[0][0][row][o] += wj * (q0 * p0 + 0.5 * q1 * p1);
                            blocks[1][1][row][o] += wj * (q1 * p1 + 0.5 * q0 * p0);
                            blocks[0][1][row][o] += wj * 0.5 * q1 * p0;
                            blocks[1][0][row][o] += wj * 0.5 * q0 * p1;
                        }
                    }
                }
            }
        }
        Ok(StrainForm { n_y: ny, n_z: nz, blocks })
    }

    /// `y = K x` on the stacked vector `[x_y; x_z]`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (ny, nz) = (self.n_y, self.n_z);
        let n = ny * nz;
        for r in 0..2 {
            for k in 0..nz {
                for j in 0..ny {
                    let mut s = 0.0;
                    for c in 0..2 {
                        let st = &self.blocks[r][c][k * ny + j];
                        let xc = &x[c * n..(c + 1) * n];
                        for dj in -1isize..=1 {
                            let jj = (j as isize + dj).rem_euclid(ny as isize) as usize;
                            for dk in -1isize..=1 {
                                let kk = k as isize + dk;
                                if kk < 0 || kk >= nz as isize {
                                    continue;
                                }
                                s += st[offset(dj, dk)] * xc[kk as usize * ny + jj];
                            }
                        }
                    }
                    y[r * n + k * ny + j] = s;
                }
            }
        }
    }

    /// `u^T K u`, the quadrature of `|S^phi u|^2 dV_t`.
    pub fn energy(&self, u: &VectorField) -> f64 {
        let x = stack(u);
        let mut y = vec![0.0; x.len()];
        self.apply(&x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }
}

fn stack(u: &VectorField) -> Vec<f64> {
    let mut x = u.y.values().to_vec();
    x.extend_from_slice(u.z.values());
    x
}

/// Backward-Euler step `(M_J/dt + 2 eps K) v = M_J (v*/dt + b)` with
/// `v = 0` on the bottom row.
pub struct ViscousSolver {
    form: StrainForm,
    mass_j: Vec<f64>,
    inv_dt: f64,
    eps: f64,
    mask: Vec<bool>,
    modes: [ModeSolver; 2],
}

impl ViscousSolver {
    pub fn new(grid: &Grid, d: &Diffeomorphism, eps: f64, dt: f64) -> Result<Self> {
        if !(eps > 0.0 && dt > 0.0) {
            return Err(Error::config("physics.eps", "viscous solve needs eps > 0 and dt > 0"));
        }
        let form = StrainForm::assemble(grid, d)?;
        let mass_j: Vec<f64> = lumped_mass(grid)
            .iter()
            .zip(d.dzphi.values())
            .map(|(m, j)| m * j)
            .collect();
        let ny = grid.n_y();
        let nz = grid.n_z();
        let mean = |f: &[f64], k: usize| f[k * ny..(k + 1) * ny].iter().sum::<f64>() / ny as f64;
        let jv = d.dzphi.values();
        let e11: Vec<f64> = (0..nz).map(|k| mean(jv, k)).collect();
        let inv_j: Vec<f64> = jv.iter().map(|j| 1.0 / j).collect();
        let e22: Vec<f64> = (0..nz).map(|k| mean(&inv_j, k)).collect();
        let shift: Vec<f64> = (0..nz).map(|k| mean(&mass_j, k) / dt).collect();
        let rows = FreeRows {
            first: 1,
            last: nz - 1,
        };
        let build = |sy: f64, sz: f64| {
            let cy: Vec<f64> = e11.iter().map(|v| 2.0 * eps * sy * v).collect();
            let cz: Vec<f64> = e22.iter().map(|v| 2.0 * eps * sz * v).collect();
            line_mode_solver(grid, rows, &cy, &cz, &shift)
        };
        let modes = [build(1.0, 0.5)?, build(0.5, 1.0)?];
        let mask: Vec<bool> = (0..2 * grid.len())
            .map(|i| rows.contains((i % grid.len()) / ny))
            .collect();
        Ok(ViscousSolver {
            form,
            mass_j,
            inv_dt: 1.0 / dt,
            eps,
            mask,
            modes,
        })
    }

    pub fn form(&self) -> &StrainForm {
        &self.form
    }

    /// Solves for the new velocity given the explicit state `v_star` and a
    /// body load `load`, both weighted by `M_J` on the right-hand side.
    pub fn solve(
        &self,
        grid: &Grid,
        v_star: &VectorField,
        load: &VectorField,
        opts: &SolverOptions,
    ) -> Result<(VectorField, SolveStats)> {
        let n = grid.len();
        let xs = stack(v_star);
        let ls = stack(load);
        let b: Vec<f64> = (0..2 * n)
            .map(|i| self.mass_j[i % n] * (self.inv_dt * xs[i] + ls[i]))
            .collect();
        let mut x = xs.clone();
        for (xi, &m) in x.iter_mut().zip(&self.mask) {
            if !m {
                *xi = 0.0;
            }
        }
        let budget = opts.budget.unwrap_or_else(|| 2 * default_budget(grid));
        let apply_a = |u: &[f64], out: &mut [f64]| {
            self.form.apply(u, out);
            for i in 0..out.len() {
                out[i] = 2.0 * self.eps * out[i] + self.mass_j[i % n] * self.inv_dt * u[i];
            }
        };
        let apply_m = |r: &[f64], z: &mut [f64]| {
            for c in 0..2 {
                self.modes[c].apply(grid, &r[c * n..(c + 1) * n], &mut z[c * n..(c + 1) * n]);
            }
        };
        let stats = pcg(apply_a, apply_m, &self.mask, &b, &mut x, opts.tol, budget)?;
        let vy = Field::from_values(grid, x[..n].to_vec())?;
        let vz = Field::from_values(grid, x[n..].to_vec())?;
        Ok((VectorField::new(vy, vz), stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::CutoffSpec;
    use crate::grid::Clustering;
    use crate::operators::strain_phi;
    use crate::surface::{build_diffeomorphism, SurfaceState};
    use std::f64::consts::PI;

    fn curved(n: usize) -> (Grid, Diffeomorphism) {
        let g = Grid::new(n, n, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let h = SurfaceState::from_fn(&g, |y| 0.15 * y.sin());
        let d = build_diffeomorphism(&g, &h, 1.0, 0.3, &CutoffSpec::default()).unwrap();
        (g, d)
    }

    #[test]
    fn form_is_symmetric_and_kills_rigid_translations() {
        let (g, d) = curved(12);
        let f = StrainForm::assemble(&g, &d).unwrap();
        let n = g.len();
        let x: Vec<f64> = (0..2 * n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..2 * n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let mut kx = vec![0.0; 2 * n];
        let mut ky = vec![0.0; 2 * n];
        f.apply(&x, &mut kx);
        f.apply(&y, &mut ky);
        let a: f64 = y.iter().zip(&kx).map(|(p, q)| p * q).sum();
        let b: f64 = x.iter().zip(&ky).map(|(p, q)| p * q).sum();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        let tr = VectorField::new(Field::constant(&g, 0.7), Field::constant(&g, -0.2));
        assert!(f.energy(&tr).abs() < 1e-12, "{}", f.energy(&tr));
    }

    #[test]
    fn energy_approximates_strain_integral() {
        let err = |n: usize| {
            let (g, d) = curved(n);
            let v = VectorField::from_fn(&g, |y, z| [y.cos() * z, y.sin() * z * z]);
            let f = StrainForm::assemble(&g, &d).unwrap();
            let s = strain_phi(&g, &v, &d).unwrap();
            let exact = g.integrate_dvt(&s.frobenius_sq(), &d.dzphi).unwrap();
            (f.energy(&v) - exact).abs()
        };
        let (a, b) = (err(24), err(48));
        assert!(a / b > 1.8, "{a} {b}");
    }

    #[test]
    fn zero_eps_rejected() {
        let (g, d) = curved(8);
        assert!(ViscousSolver::new(&g, &d, 0.0, 0.1).is_err());
    }

    #[test]
    fn solve_is_dissipative_and_respects_no_slip() {
        let (g, d) = curved(16);
        let vs = ViscousSolver::new(&g, &d, 0.05, 0.1).unwrap();
        let v = VectorField::from_fn(&g, |y, z| [y.cos() * (1.0 + z), 0.3 * y.sin()]);
        let (u, st) = vs.solve(&g, &v, &VectorField::zeros(&g), &SolverOptions::with_tol(1e-11)).unwrap();
        assert!(st.iterations < 60, "{}", st.iterations);
        assert!(u.y.row(0).iter().chain(u.z.row(0)).all(|x| *x == 0.0));
        let ke = |w: &VectorField| g.integrate_dvt(&w.norm_sq(), &d.dzphi).unwrap();
        let mut v0 = v.clone();
        v0.y.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
        v0.z.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
        assert!(ke(&u) < ke(&v0));
    }
}
