//! Pressure split `q = qE + qNS + qS` and the Dirichlet-Neumann operator.

use crate::elliptic::{BottomCondition, EllipticOperator, SolveStats, SolverOptions};
use crate::error::Result;
use crate::grid::{Field, Grid, VectorField};
use crate::operators::{check_metric, div_conservative, jacobian_unchecked, metric_matrices};
use crate::surface::{surface_geometry, Diffeomorphism, SurfaceState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureParams {
    pub eps: f64,
    pub g: f64,
    pub sigma: f64,
    pub bottom: BottomCondition,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureSplit {
    pub qe: Field,
    pub qns: Field,
    pub qs: Field,
    pub total: Field,
    pub iterations: usize,
}

/// Which formula supplies `(S^phi v) n . n` on the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalStrainForm {
    /// Direct contraction of the discrete strain tensor.
    Direct,
    /// `-(d_y v_y + d_y phi d_y v_z) / |N|^2`, valid for solenoidal `v`.
    Tangential,
}

/// `(S^phi v) n . n` on the surface row.
pub fn normal_strain_trace(grid: &Grid, v: &VectorField, d: &Diffeomorphism, form: NormalStrainForm) -> Vec<f64> {
    let t = grid.top();
    let s = d.dyphi.row(t);
    match form {
        NormalStrainForm::Direct => {
            let gr = jacobian_unchecked(grid, v, d);
            let [ny, nz] = &d.n_boundary;
            (0..grid.n_y())
                .map(|j| {
                    let (a, c) = (ny[j], nz[j]);
                    let syy = gr[0][0].get(j, t);
                    let syz = 0.5 * (gr[0][1].get(j, t) + gr[1][0].get(j, t));
                    let szz = gr[1][1].get(j, t);
                    a * a * syy + 2.0 * a * c * syz + c * c * szz
                })
                .collect()
        }
        NormalStrainForm::Tangential => {
            let dvy = grid.diff_row(v.y.row(t));
            let dvz = grid.diff_row(v.z.row(t));
            (0..grid.n_y())
                .map(|j| -(dvy[j] + s[j] * dvz[j]) / (1.0 + s[j] * s[j]))
                .collect()
        }
    }
}

/// `(v . grad^phi) v`.
pub fn advective_term(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> VectorField {
    let gr = jacobian_unchecked(grid, v, d);
    let comp = |i: usize| {
        let mut w = &v.y * &gr[i][0];
        w.axpy(1.0, &(&v.z * &gr[i][1]));
        w
    };
    VectorField::new(comp(0), comp(1))
}

/// `div^phi((v . grad^phi) v)` in conservative form.
pub fn euler_source(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Field {
    div_conservative(grid, &advective_term(grid, v, d), d)
}

/// `grad^phi v : (grad^phi v)^T`.
pub fn gradient_contraction(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Field {
    let gr = jacobian_unchecked(grid, v, d);
    let mut s = &gr[0][0] * &gr[0][0];
    s.axpy(1.0, &(&gr[1][1] * &gr[1][1]));
    s.axpy(2.0, &(&gr[0][1] * &gr[1][0]));
    s
}

/// One assembled operator on a fixed metric, reused by every pressure solve.
pub struct PressureSolver {
    op: EllipticOperator,
    opts: SolverOptions,
}

impl PressureSolver {
    pub fn new(grid: &Grid, d: &Diffeomorphism, bottom: BottomCondition, opts: SolverOptions) -> Result<Self> {
        check_metric(d)?;
        let m = metric_matrices(d)?;
        Ok(PressureSolver {
            op: EllipticOperator::new(grid, &m, bottom, opts.preconditioner)?,
            opts,
        })
    }

    pub fn solve(&self, grid: &Grid, f: &Field, top: &[f64]) -> Result<(Field, SolveStats)> {
        self.op.solve(grid, f, top, &self.opts)
    }

    pub fn harmonic(&self, grid: &Grid, top: &[f64]) -> Result<(Field, SolveStats)> {
        self.solve(grid, &Field::zeros(grid), top)
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    /// Variational flux `(K F)_top / dy` of the harmonic extension `F`.
    pub fn dn_flux(&self, grid: &Grid, f_b: &[f64]) -> Result<Vec<f64>> {
        let (ext, _) = self.harmonic(grid, f_b)?;
        let kf = self.op.apply_full(&ext);
        let ny = grid.n_y();
        let t = grid.top();
        Ok(kf[t * ny..].iter().map(|v| v / grid.dy()).collect())
    }
}

/// Boundary traces of the three components.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTraces {
    pub gravity: Vec<f64>,
    pub viscous: Vec<f64>,
    pub capillary: Vec<f64>,
}

pub fn pressure_traces(
    grid: &Grid,
    v: &VectorField,
    h: &SurfaceState,
    d: &Diffeomorphism,
    params: &PressureParams,
    form: NormalStrainForm,
) -> PressureTraces {
    let kappa = surface_geometry(grid, h).curvature;
    let viscous = if params.eps > 0.0 {
        normal_strain_trace(grid, v, d, form)
            .into_iter()
            .map(|s| 2.0 * params.eps * s)
            .collect()
    } else {
        vec![0.0; grid.n_y()]
    };
    PressureTraces {
        gravity: h.values().iter().map(|x| params.g * x).collect(),
        viscous,
        capillary: kappa.iter().map(|k| -params.sigma * k).collect(),
    }
}

pub fn decompose_with(
    grid: &Grid,
    solver: &PressureSolver,
    v: &VectorField,
    h: &SurfaceState,
    d: &Diffeomorphism,
    params: &PressureParams,
    form: NormalStrainForm,
) -> Result<PressureSplit> {
    let tr = pressure_traces(grid, v, h, d, params, form);
    let src = euler_source(grid, v, d);
    let (qe, s1) = solver.solve(grid, &src, &tr.gravity)?;
    let (qns, s2) = if params.eps > 0.0 {
        solver.harmonic(grid, &tr.viscous)?
    } else {
        (Field::zeros(grid), SolveStats { iterations: 0, residual: 0.0 })
    };
    let (qs, s3) = solver.harmonic(grid, &tr.capillary)?;
    let mut total = qe.clone();
    total.axpy(1.0, &qns);
    total.axpy(1.0, &qs);
    Ok(PressureSplit {
        qe,
        qns,
        qs,
        total,
        iterations: s1.iterations + s2.iterations + s3.iterations,
    })
}

/// Three elliptic solves for the Euler, viscous and capillary parts.
pub fn decompose_pressure(
    grid: &Grid,
    v: &VectorField,
    h: &SurfaceState,
    d: &Diffeomorphism,
    params: &PressureParams,
) -> Result<PressureSplit> {
    let solver = PressureSolver::new(grid, d, params.bottom, params.solver)?;
    decompose_with(grid, &solver, v, h, d, params, NormalStrainForm::Direct)
}

/// Single solve with summed traces, the reference for the split.
pub fn direct_pressure(
    grid: &Grid,
    v: &VectorField,
    h: &SurfaceState,
    d: &Diffeomorphism,
    params: &PressureParams,
) -> Result<Field> {
    let solver = PressureSolver::new(grid, d, params.bottom, params.solver)?;
    let tr = pressure_traces(grid, v, h, d, params, NormalStrainForm::Direct);
    let top: Vec<f64> = (0..grid.n_y())
        .map(|j| tr.gravity[j] + tr.viscous[j] + tr.capillary[j])
        .collect();
    Ok(solver.solve(grid, &euler_source(grid, v, d), &top)?.0)
}

/// `qE = qE1 + qE2` with `qE1` harmonic carrying `g h` and `qE2` driven by
/// `grad v : grad v^T` with zero trace.
pub fn qe_inner_split(
    grid: &Grid,
    v: &VectorField,
    h: &SurfaceState,
    d: &Diffeomorphism,
    params: &PressureParams,
) -> Result<(Field, Field)> {
    let solver = PressureSolver::new(grid, d, params.bottom, params.solver)?;
    let top: Vec<f64> = h.values().iter().map(|x| params.g * x).collect();
    let (q1, _) = solver.harmonic(grid, &top)?;
    let (q2, _) = solver.solve(grid, &gradient_contraction(grid, v, d), &vec![0.0; grid.n_y()])?;
    Ok((q1, q2))
}

/// `G[h] f_b = (grad f)^b . N` through the harmonic extension.
pub fn dirichlet_neumann(grid: &Grid, f_b: &[f64], d: &Diffeomorphism, opts: SolverOptions) -> Result<Vec<f64>> {
    PressureSolver::new(grid, d, BottomCondition::NeumannZero, opts)?.dn_flux(grid, f_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::CutoffSpec;
    use crate::grid::Clustering;
    use crate::surface::build_diffeomorphism;
    use std::f64::consts::PI;

    fn params(eps: f64) -> PressureParams {
        PressureParams {
            eps,
            g: 1.0,
            sigma: 1.0,
            bottom: BottomCondition::NeumannZero,
            solver: SolverOptions::with_tol(1e-12),
        }
    }

    #[test]
    fn rest_state_has_no_pressure() {
        let g = Grid::new(16, 16, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let h = SurfaceState::flat(&g);
        let d = Diffeomorphism::flat(&g, 1.0);
        let p = decompose_pressure(&g, &VectorField::zeros(&g), &h, &d, &params(0.1)).unwrap();
        assert_eq!(p.total.max_abs(), 0.0);
    }

    #[test]
    fn hydrostatic_and_capillary_modes() {
        let g = Grid::new(32, 48, 2.0 * PI, 3.0, Clustering::Tanh { beta: 2.0 }).unwrap();
        let (a, k) = (1e-4, 2.0);
        let h = SurfaceState::from_fn(&g, |y| a * (k * y).cos());
        let d = build_diffeomorphism(&g, &h, 1.0, 0.5, &CutoffSpec::default()).unwrap();
        let p = decompose_pressure(&g, &VectorField::zeros(&g), &h, &d, &params(0.0)).unwrap();
        let mode = |y: f64, z: f64| (k * y).cos() * (k * (z + 3.0)).cosh() / (k * 3.0).cosh();
        let qe = Field::from_fn(&g, |y, z| a * mode(y, z));
        let qs = Field::from_fn(&g, |y, z| a * k * k * mode(y, z));
        assert!((&p.qe - &qe).max_abs() < 2e-2 * a);
        assert!((&p.qs - &qs).max_abs() < 2e-2 * a * k * k);
    }

    #[test]
    fn tangential_and_direct_normal_strain_agree_for_solenoidal_fields() {
        let g = Grid::new(32, 200, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let d = Diffeomorphism::flat(&g, 1.0);
        // Stream function (cos y) e^z gives a divergence-free field.
        let v = VectorField::from_fn(&g, |y, z| [y.cos() * z.exp(), y.sin() * z.exp()]);
        let a = normal_strain_trace(&g, &v, &d, NormalStrainForm::Direct);
        let b = normal_strain_trace(&g, &v, &d, NormalStrainForm::Tangential);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-2);
        }
    }

    #[test]
    fn flat_dn_of_constant_vanishes() {
        let g = Grid::new(16, 24, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let d = Diffeomorphism::flat(&g, 1.0);
        let r = dirichlet_neumann(&g, &vec![2.0; 16], &d, SolverOptions::with_tol(1e-12)).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-9));
    }
}
