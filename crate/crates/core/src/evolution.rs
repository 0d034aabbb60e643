//! Time stepping of the transformed free-surface system.
//!
//! One step of size `dt`:
//! 1. half-step surface predictor `h* = h + dt/2 F`, `F` the weak surface flux;
//! 2. rebuild the map from `h*`;
//! 3. pressure split on the midpoint geometry;
//! 4. explicit advection with the transport velocity `V_z` and pressure gradient;
//! 5. backward-Euler viscous step, no-slip bottom, explicit normal traction
//!    applied through the weak surface flux;
//! 6. projection with the wide operator;
//! 7. surface corrector `h' = h* + dt/2 F'`.

use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffSpec;
use crate::elliptic::{weak_surface_flux, BottomCondition, SolverOptions, WideOperator};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, VectorField};
use crate::operators::{div_phi, jacobian_unchecked, metric_matrices, partial_unchecked};
use crate::pressure::{decompose_with, normal_strain_trace, NormalStrainForm, PressureParams, PressureSolver};
use crate::surface::{build_diffeomorphism, extend_surface, Diffeomorphism, SurfaceState};
use crate::viscous::ViscousSolver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub eps: f64,
    pub g: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheme {
    pub cfl: f64,
    pub solver: SolverOptions,
    pub projection_tol: f64,
    pub pressure_bottom: BottomCondition,
    pub c0: f64,
    pub cutoff: CutoffSpec,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme {
            cfl: 0.5,
            solver: SolverOptions::with_tol(1e-10),
            projection_tol: 1e-11,
            pressure_bottom: BottomCondition::NeumannZero,
            c0: 0.2,
            cutoff: CutoffSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub step: u64,
    pub v: VectorField,
    pub h: SurfaceState,
    pub d: Diffeomorphism,
}

impl FlowState {
    pub fn new(grid: &Grid, v: VectorField, h: SurfaceState, a: f64, scheme: &Scheme) -> Result<Self> {
        if v.y.shape() != (grid.n_y(), grid.n_z()) || v.z.shape() != (grid.n_y(), grid.n_z()) {
            return Err(Error::Shape {
                expected: format!("{}x{}", grid.n_y(), grid.n_z()),
                found: format!("{:?}", v.y.shape()),
            });
        }
        if !v.is_finite() {
            return Err(Error::Shape {
                expected: "finite velocity".into(),
                found: "non-finite value".into(),
            });
        }
        let d = build_diffeomorphism(grid, &h, a, scheme.c0, &scheme.cutoff)?;
        Ok(FlowState { t: 0.0, step: 0, v, h, d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub pressure_iterations: usize,
    pub viscous_iterations: usize,
    pub projection_iterations: usize,
    /// `L^2(dV_t)` norm of `div^phi v` over the rows strictly below the surface.
    pub divergence: f64,
    pub velocity_norm: f64,
    /// `max |(h' - h)/dt - (v.N + v'.N')/2|`.
    pub kinematic_residual: f64,
    /// `max |Pi (S^phi v) n|` on the surface after the step.
    pub tangential_stress: f64,
    pub min_dzphi: f64,
}

/// `v.N` on the surface row with `N = (-d_y h, 1)`.
pub fn kinematic_rate(grid: &Grid, v: &VectorField, h: &SurfaceState) -> Vec<f64> {
    let hy = h.derivative(grid, 1);
    let t = grid.top();
    (0..grid.n_y())
        .map(|j| -hy[j] * v.y.get(j, t) + v.z.get(j, t))
        .collect()
}

/// Vertical transport velocity `(v.N - d_t phi) / J`.
pub fn transport_velocity(v: &VectorField, d: &Diffeomorphism, phi_t: &Field) -> Field {
    let mut vn = &v.y * &d.normal.y;
    vn.axpy(1.0, &v.z);
    vn.axpy(-1.0, phi_t);
    vn.zip_map(&d.dzphi, |x, j| x / j)
}

fn surface_rate_field(grid: &Grid, rate: &[f64], cutoff: &CutoffSpec) -> Result<Field> {
    let s = SurfaceState::new(grid, rate.to_vec())?;
    Ok(extend_surface(grid, &s, cutoff))
}

/// Sup and root-mean-square of `Pi (S^phi v) n` on the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub sup: f64,
    pub rms: f64,
}

pub fn check_compatibility(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> CompatibilityReport {
    let gr = jacobian_unchecked(grid, v, d);
    let t = grid.top();
    let [ny, nz] = &d.n_boundary;
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    for j in 0..grid.n_y() {
        let syy = gr[0][0].get(j, t);
        let syz = 0.5 * (gr[0][1].get(j, t) + gr[1][0].get(j, t));
        let szz = gr[1][1].get(j, t);
        let (a, b) = (ny[j], nz[j]);
        let sn = [syy * a + syz * b, syz * a + szz * b];
        let nn = sn[0] * a + sn[1] * b;
        let r = ((sn[0] - nn * a).powi(2) + (sn[1] - nn * b).powi(2)).sqrt();
        sup = sup.max(r);
        sq += r * r;
    }
    CompatibilityReport {
        sup,
        rms: (sq / grid.n_y() as f64).sqrt(),
    }
}

/// Largest admissible step: advective limits in both directions and the
/// fastest resolved gravity-capillary frequency, scaled by `cfl`.
pub fn cfl_dt(grid: &Grid, state: &FlowState, physics: &Physics, scheme: &Scheme) -> f64 {
    let k = std::f64::consts::PI / grid.dy();
    let omega = (physics.g.max(0.0) * k + physics.sigma.max(0.0) * k.powi(3)).sqrt();
    let mut limit = if omega > 0.0 { 1.0 / omega } else { f64::INFINITY };
    let vy = state.v.y.max_abs();
    if vy > 0.0 {
        limit = limit.min(grid.dy() / vy);
    }
    let rate = kinematic_rate(grid, &state.v, &state.h);
    let phi_t = surface_rate_field(grid, &rate, &scheme.cutoff).unwrap_or_else(|_| Field::zeros(grid));
    let vz = transport_velocity(&state.v, &state.d, &phi_t).max_abs();
    if vz > 0.0 {
        limit = limit.min(grid.min_dz() / vz);
    }
    scheme.cfl * limit
}

fn l2_rows(grid: &Grid, f: &Field, d: &Diffeomorphism, rows: std::ops::Range<usize>) -> f64 {
    let w = grid.quadrature_weights_z();
    let mut s = 0.0;
    for k in rows {
        for (x, j) in f.row(k).iter().zip(d.dzphi.row(k)) {
            s += grid.dy() * w[k] * j * x * x;
        }
    }
    s.sqrt()
}

/// `L^2(dV_t)` norm of the velocity.
pub fn velocity_norm(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> f64 {
    grid.integrate_weighted(&v.norm_sq(), &d.dzphi).sqrt()
}

/// `L^2(dV_t)` norm of `div^phi v` below the surface row.
pub fn interior_divergence(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<f64> {
    let div = div_phi(grid, v, d)?;
    Ok(l2_rows(grid, &div, d, 1..grid.top()))
}

/// Advances `state` by `dt`; fails with `StepSize` above the CFL limit.
pub fn advance(
    grid: &Grid,
    state: &FlowState,
    physics: &Physics,
    scheme: &Scheme,
    dt: f64,
) -> Result<(FlowState, StepReport)> {
    let limit = cfl_dt(grid, state, physics, scheme);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-9) {
        return Err(Error::StepSize { dt, limit });
    }
    let a = state.d.a;
    let ny = grid.n_y();
    let t = grid.top();

    let rate0 = weak_surface_flux(grid, &state.d, &state.v);
    let h_half = SurfaceState::new(
        grid,
        state.h.values().iter().zip(&rate0).map(|(h, r)| h + 0.5 * dt * r).collect(),
    )?;
    let d_half = build_diffeomorphism(grid, &h_half, a, scheme.c0, &scheme.cutoff)?;

    let params = PressureParams {
        eps: physics.eps,
        g: physics.g,
        sigma: physics.sigma,
        bottom: scheme.pressure_bottom,
        solver: scheme.solver,
    };
    let ps = PressureSolver::new(grid, &d_half, scheme.pressure_bottom, scheme.solver)?;
    let split = decompose_with(grid, &ps, &state.v, &h_half, &d_half, &params, NormalStrainForm::Tangential)?;

    let phi_t = surface_rate_field(grid, &rate0, &scheme.cutoff)?;
    let vz = transport_velocity(&state.v, &d_half, &phi_t);
    let qy = partial_unchecked(grid, &split.total, &d_half, 0);
    let qz = partial_unchecked(grid, &split.total, &d_half, 1);
    let mut v_star = state.v.clone();
    for (c, qg) in [(0, &qy), (1, &qz)] {
        let u = state.v.component(c);
        let mut rhs = &state.v.y * &grid.dy_unchecked(u);
        rhs.axpy(1.0, &(&vz * &grid.dz_unchecked(u)));
        rhs.axpy(1.0, qg);
        v_star.component_mut(c).axpy(-dt, &rhs);
    }

    let wide = WideOperator::new(grid, &d_half, &metric_matrices(&d_half)?)?;
    let mut viscous_iterations = 0;
    if physics.eps > 0.0 {
        let snn = normal_strain_trace(grid, &state.v, &d_half, NormalStrainForm::Tangential);
        let mut tau = Field::zeros(grid);
        for (dst, s) in tau.row_mut(t).iter_mut().zip(&snn) {
            *dst = 2.0 * physics.eps * s;
        }
        let load = wide.gradient(grid, &tau);
        let vs = ViscousSolver::new(grid, &d_half, physics.eps, dt)?;
        let (v_visc, st) = vs.solve(grid, &v_star, &load, &scheme.solver)?;
        v_star = v_visc;
        viscous_iterations = st.iterations;
    }

    let mut popts = scheme.solver;
    popts.tol = scheme.projection_tol;
    let (v_new, pst) = wide.project(grid, &v_star, &popts)?;

    let rate1 = weak_surface_flux(grid, &d_half, &v_new);
    let h_new = SurfaceState::new(
        grid,
        h_half.values().iter().zip(&rate1).map(|(h, r)| h + 0.5 * dt * r).collect(),
    )?;
    let d_new = build_diffeomorphism(grid, &h_new, a, scheme.c0, &scheme.cutoff)?;

    let rate_start = kinematic_rate(grid, &state.v, &state.h);
    let rate_end = kinematic_rate(grid, &v_new, &h_new);
    let kinematic_residual = (0..ny)
        .map(|j| {
            let dh = (h_new.values()[j] - state.h.values()[j]) / dt;
            (dh - 0.5 * (rate_start[j] + rate_end[j])).abs()
        })
        .fold(0.0, f64::max);
    let divergence = interior_divergence(grid, &v_new, &d_half)?;
    let compat = check_compatibility(grid, &v_new, &d_new);
    let next = FlowState {
        t: state.t + dt,
        step: state.step + 1,
        v: v_new,
        h: h_new,
        d: d_new,
    };
    let report = StepReport {
        step: next.step,
        t: next.t,
        dt,
        pressure_iterations: split.iterations,
        viscous_iterations,
        projection_iterations: pst.iterations,
        divergence,
        velocity_norm: velocity_norm(grid, &next.v, &d_half),
        kinematic_residual,
        tangential_stress: compat.sup,
        min_dzphi: next.d.c0_observed,
    };
    if !next.v.is_finite() {
        return Err(Error::SolverFailure {
            iterations: pst.iterations,
            residual: f64::NAN,
        });
    }
    Ok((next, report))
}

/// Steps from `state` to `t_end` with `dt = min(dt_max, cfl_dt)`, calling
/// `observe` after every accepted step.
pub fn run(
    grid: &Grid,
    mut state: FlowState,
    physics: &Physics,
    scheme: &Scheme,
    t_end: f64,
    dt_max: f64,
    mut observe: impl FnMut(&FlowState, &StepReport) -> Result<()>,
) -> Result<FlowState> {
    if !(dt_max > 0.0) {
        return Err(Error::config("time.dt", "must be positive"));
    }
    while state.t < t_end - 1e-12 * t_end.abs().max(1.0) {
        let mut dt = dt_max.min(cfl_dt(grid, &state, physics, scheme));
        let remaining = t_end - state.t;
        if remaining < dt * (1.0 + 1e-9) {
            dt = remaining;
        }
        let (next, report) = advance(grid, &state, physics, scheme, dt)?;
        observe(&next, &report)?;
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Clustering;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(16, 24, 2.0 * PI, 3.0, Clustering::Uniform).unwrap()
    }

    #[test]
    fn compatibility_of_shear() {
        let g = grid();
        let d = Diffeomorphism::flat(&g, 1.0);
        let v = VectorField::from_fn(&g, |_, z| [z, 0.0]);
        let r = check_compatibility(&g, &v, &d);
        assert!((r.sup - 0.5).abs() < 1e-12 && (r.rms - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rest_state_is_steady() {
        let g = grid();
        let phys = Physics { eps: 0.01, g: 1.0, sigma: 0.1 };
        let sc = Scheme::default();
        let s = FlowState::new(&g, VectorField::zeros(&g), SurfaceState::flat(&g), 1.0, &sc).unwrap();
        let dt = cfl_dt(&g, &s, &phys, &sc);
        let k = PI / g.dy();
        assert!((dt - 0.5 / (k + 0.1 * k.powi(3)).sqrt()).abs() < 1e-14);
        let (n, rep) = advance(&g, &s, &phys, &sc, dt).unwrap();
        assert_eq!(n.v.max_abs(), 0.0);
        assert!(n.h.values().iter().all(|x| *x == 0.0));
        assert_eq!(rep.step, 1);
    }

    #[test]
    fn step_above_limit_rejected() {
        let g = grid();
        let phys = Physics { eps: 0.0, g: 1.0, sigma: 0.0 };
        let sc = Scheme::default();
        let v = VectorField::from_fn(&g, |y, z| [5.0 * y.cos() * (z / 3.0 + 1.0), 0.0]);
        let s = FlowState::new(&g, v.clone(), SurfaceState::flat(&g), 1.0, &sc).unwrap();
        let dt = cfl_dt(&g, &s, &phys, &sc);
        assert!(matches!(advance(&g, &s, &phys, &sc, 2.0 * dt), Err(Error::StepSize { .. })));
        let s2 = FlowState::new(&g, v.scale(2.0), SurfaceState::flat(&g), 1.0, &sc).unwrap();
        let dt2 = cfl_dt(&g, &s2, &phys, &sc);
        assert!((dt2 - 0.5 * dt).abs() < 1e-12 * dt);
    }

    #[test]
    fn standing_wave_keeps_divergence_small() {
        let g = grid();
        let phys = Physics { eps: 0.01, g: 1.0, sigma: 0.01 };
        let sc = Scheme::default();
        let h = SurfaceState::from_fn(&g, |y| 0.01 * y.cos());
        let mut s = FlowState::new(&g, VectorField::zeros(&g), h, 1.0, &sc).unwrap();
        for _ in 0..20 {
            let dt = cfl_dt(&g, &s, &phys, &sc).min(0.05);
            let (n, r) = advance(&g, &s, &phys, &sc, dt).unwrap();
            assert!(r.divergence <= 1e-8 * r.velocity_norm + 1e-12, "{r:?}");
            s = n;
        }
        assert!(s.v.max_abs() > 1e-4);
    }
}
