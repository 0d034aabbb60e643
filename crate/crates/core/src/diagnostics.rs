//! Energy bookkeeping, functional-inequality audits, the viscosity sweep and
//! boundary-layer profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conormal::{conormal_norm, History, NormFamily};
use crate::cutoff::CutoffSpec;
use crate::elliptic::SolverOptions;
use crate::error::{Error, Result};
use crate::evolution::{advance, FlowState, Physics, Scheme};
use crate::grid::{Field, Grid, VectorField};
use crate::operators::{div_phi, strain_phi};
use crate::pressure::dirichlet_neumann;
use crate::surface::{boundary_hs_norm, grad_extension_hs_norm, Diffeomorphism, SurfaceState};
use crate::viscous::StrainForm;
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub kinetic: f64,
    pub gravitational: f64,
    pub capillary: f64,
    pub dissipation_rate: f64,
    /// Filled by [`energy_identity_residual`]; zero until then.
    pub identity_residual: f64,
}

impl EnergyReport {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravitational + self.capillary
    }
}

/// `int |v|^2 dV_t`, `g int h^2`, `2 sigma int (sqrt(1+h_y^2) - 1)` and
/// `4 eps int |S^phi v|^2 dV_t`.
pub fn energy_report(grid: &Grid, state: &FlowState, physics: &Physics) -> Result<EnergyReport> {
    let kinetic = grid.integrate_weighted(&state.v.norm_sq(), &state.d.dzphi);
    let h = state.h.values();
    let gravitational = physics.g * grid.integrate_row(&h.iter().map(|x| x * x).collect::<Vec<_>>());
    let hy = state.h.derivative(grid, 1);
    let capillary = 2.0
        * physics.sigma
        * grid.integrate_row(&hy.iter().map(|s| s * s / ((1.0 + s * s).sqrt() + 1.0)).collect::<Vec<_>>());
    let dissipation_rate = if physics.eps > 0.0 {
        4.0 * physics.eps * StrainForm::assemble(grid, &state.d)?.energy(&state.v)
    } else {
        0.0
    };
    Ok(EnergyReport {
        t: state.t,
        kinetic,
        gravitational,
        capillary,
        dissipation_rate,
        identity_residual: 0.0,
    })
}

/// Centered-difference residual of `dE/dt + D` at every interior level.
/// Returns the series (endpoints left at zero) and its largest magnitude.
pub fn energy_identity_residual(series: &mut [EnergyReport]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::HistoryDepth {
            needed: 3,
            available: series.len(),
        });
    }
    let mut worst: f64 = 0.0;
    let totals: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.total())).collect();
    for i in 1..series.len() - 1 {
        let (t0, e0) = totals[i - 1];
        let (t1, e1) = totals[i + 1];
        let r = (e1 - e0) / (t1 - t0) + series[i].dissipation_rate;
        series[i].identity_residual = r;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Resolution-independent random surface `sum_m a_m cos(m y + theta_m)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceSpectrum {
    pub modes: Vec<(f64, f64, f64)>,
}

impl SurfaceSpectrum {
    /// Modes `1..=max_mode` with amplitudes `amp * U(-1,1) / m^decay`.
    pub fn random(rng: &mut ChaCha8Rng, amp: f64, max_mode: usize, decay: f64) -> Self {
        let modes = (1..=max_mode)
            .map(|m| {
                let a = amp * rng.gen_range(-1.0..1.0) / (m as f64).powf(decay);
                (m as f64, a, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        SurfaceSpectrum { modes }
    }

    pub fn sample(&self, grid: &Grid) -> SurfaceState {
        let k0 = std::f64::consts::TAU / grid.length_y();
        SurfaceState::from_fn(grid, |y| {
            self.modes
                .iter()
                .map(|&(m, a, th)| a * (m * k0 * y + th).cos())
                .sum()
        })
    }
}

pub fn random_spectra(count: usize, amp: f64, max_mode: usize, decay: f64, seed: u64) -> Vec<SurfaceSpectrum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| SurfaceSpectrum::random(&mut rng, amp, max_mode, decay))
        .collect()
}

/// Largest `||grad eta||_{H^s(S)} / |h|_{H^{s+1/2}}` over the spectra.
pub fn extension_ratio_audit(grid: &Grid, spectra: &[SurfaceSpectrum], cutoff: &CutoffSpec, s: u32) -> f64 {
    spectra
        .iter()
        .map(|sp| {
            let h = sp.sample(grid);
            let den = h.hs_norm(grid, s as f64 + 0.5);
            if den == 0.0 {
                0.0
            } else {
                grad_extension_hs_norm(grid, &h, cutoff, s) / den
            }
        })
        .fold(0.0, f64::max)
}

/// `||grad v||^2 / (int |S^phi v|^2 dV_t + ||v||^2)` with the fixed-domain
/// gradient and flat measure in numerator and `L^2` term.
pub fn korn_ratio(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<f64> {
    let mut grad = 0.0;
    for c in 0..2 {
        let f = v.component(c);
        let fy = grid.d_horizontal(f)?;
        let fz = grid.d_vertical(f)?;
        grad += grid.integrate(&(&fy * &fy)) + grid.integrate(&(&fz * &fz));
    }
    let s = strain_phi(grid, v, d)?;
    let den = grid.integrate_dvt(&s.frobenius_sq(), &d.dzphi)? + grid.integrate(&v.norm_sq());
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(grad / den)
}

/// Measured Korn constant: the largest ratio over the corpus.
pub fn korn_audit(grid: &Grid, corpus: &[(VectorField, Diffeomorphism)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (v, d) in corpus {
        worst = worst.max(korn_ratio(grid, v, d)?);
    }
    Ok(worst)
}

/// `int f g dy` on the surface row.
fn surface_inner(grid: &Grid, f: &[f64], g: &[f64]) -> f64 {
    grid.integrate_row(&f.iter().zip(g).map(|(a, b)| a * b).collect::<Vec<_>>())
}

/// `max |DN cos(k y) - |k| tanh(k H) cos(k y)|` on the flat surface.
pub fn dn_flat_error(grid: &Grid, k: usize, opts: SolverOptions) -> Result<f64> {
    let d = Diffeomorphism::flat(grid, 1.0);
    let xi = k as f64 * std::f64::consts::TAU / grid.length_y();
    let f: Vec<f64> = grid.y_nodes().iter().map(|y| (xi * y).cos()).collect();
    let g = dirichlet_neumann(grid, &f, &d, opts)?;
    let sym = xi * (xi * grid.depth()).tanh();
    Ok(f.iter()
        .zip(&g)
        .map(|(a, b)| (b - sym * a).abs())
        .fold(0.0, f64::max))
}

/// `(G f, f) (1 + |h|_{W^{1,inf}})^2 / || |D| (1 + |D|)^{-1/2} f ||^2`.
pub fn dn_coercivity(grid: &Grid, h: &SurfaceState, d: &Diffeomorphism, f: &[f64], opts: SolverOptions) -> Result<f64> {
    let g = dirichlet_neumann(grid, f, d, opts)?;
    let form = surface_inner(grid, &g, f);
    let w1 = h.w_inf_norm(grid, 1);
    let c = grid.fft(f);
    let n = grid.n_y() as f64;
    let norm: f64 = c
        .iter()
        .zip(grid.wavenumbers())
        .map(|(cm, &xi)| xi * xi / (1.0 + xi.abs()) * cm.norm_sqr())
        .sum::<f64>()
        * grid.length_y()
        / (n * n);
    if norm == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(form * (1.0 + w1).powi(2) / norm)
}

/// `|(G f, g) - (f, G g)| / (|G f| |g|)`.
pub fn dn_symmetry_defect(grid: &Grid, d: &Diffeomorphism, f: &[f64], g: &[f64], opts: SolverOptions) -> Result<f64> {
    let gf = dirichlet_neumann(grid, f, d, opts)?;
    let gg = dirichlet_neumann(grid, g, d, opts)?;
    let a = surface_inner(grid, &gf, g);
    let b = surface_inner(grid, f, &gg);
    let scale = surface_inner(grid, &gf, &gf).sqrt() * surface_inner(grid, g, g).sqrt();
    Ok(if scale == 0.0 { 0.0 } else { (a - b).abs() / scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnAudit {
    /// `max |d_z v . n + (J/|N|) d_y v_y|` on the surface.
    pub normal_part: f64,
    /// `max |d_z v - reconstruction from S_n and tangential data|`.
    pub full: f64,
    /// `max |d_z v|` on the surface, for scale.
    pub scale: f64,
}

/// Two-sided check of the surface reconstruction of `d_z v` from the
/// horizontal divergence and from `S_n = Pi (S^phi v) n`.
pub fn sn_reconstruction_audit(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<SnAudit> {
    let t = grid.top();
    let s = strain_phi(grid, v, d)?;
    let dzv = [grid.d_vertical(&v.y)?, grid.d_vertical(&v.z)?];
    let vy = v.y.row(t);
    let vz = v.z.row(t);
    let dvy = grid.diff_row(vy);
    let dvz = grid.diff_row(vz);
    let mut out = SnAudit {
        normal_part: 0.0,
        full: 0.0,
        scale: 0.0,
    };
    for j in 0..grid.n_y() {
        let py = d.dyphi.get(j, t);
        let jac = d.dzphi.get(j, t);
        let len = (1.0 + py * py).sqrt();
        let tv = [1.0 / len, py / len];
        let nv = [-py / len, 1.0 / len];
        let dz = [dzv[0].get(j, t), dzv[1].get(j, t)];
        out.scale = out.scale.max(dz[0].hypot(dz[1]));
        let lhs_n = dz[0] * nv[0] + dz[1] * nv[1];
        out.normal_part = out.normal_part.max((lhs_n + jac / len * dvy[j]).abs());

        let (syy, syz, szz) = (s.yy.get(j, t), s.yz.get(j, t), s.zz.get(j, t));
        let sn = [syy * nv[0] + syz * nv[1], syz * nv[0] + szz * nv[1]];
        let sn_t = sn[0] * tv[0] + sn[1] * tv[1];
        let gt = [dvy[j] / len, dvz[j] / len];
        let n_gt = gt[0] * nv[0] + gt[1] * nv[1];
        let t_gt = gt[0] * tv[0] + gt[1] * tv[1];
        let a = 2.0 * sn_t - n_gt;
        let b = -t_gt;
        let gn = [a * tv[0] + b * nv[0], a * tv[1] + b * nv[1]];
        for c in 0..2 {
            let rec = jac * (py / len * gt[c] + gn[c] / len);
            out.full = out.full.max((dz[c] - rec).abs());
        }
    }
    Ok(out)
}

/// Tangential velocity deviation near the surface against `zeta = z / sqrt(eps)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerProfile {
    pub eps: f64,
    pub zeta: Vec<f64>,
    /// Root-mean-square over `y` of the deviation on each row.
    pub deviation: Vec<f64>,
}

impl LayerProfile {
    pub fn surface_amplitude(&self) -> f64 {
        self.deviation.last().copied().unwrap_or(0.0)
    }

    /// Linear interpolation of the deviation at `zeta`.
    pub fn at(&self, zeta: f64) -> f64 {
        let z = &self.zeta;
        if z.is_empty() {
            return 0.0;
        }
        if zeta <= z[0] {
            return self.deviation[0];
        }
        for i in 1..z.len() {
            if zeta <= z[i] {
                let w = (zeta - z[i - 1]) / (z[i] - z[i - 1]);
                return self.deviation[i - 1] * (1.0 - w) + self.deviation[i] * w;
            }
        }
        self.surface_amplitude()
    }
}

fn tangential_velocity(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Field {
    let _ = grid;
    let mut u = &v.y + &(&d.dyphi * &v.z);
    let len = d.dyphi.map(|s| (1.0 + s * s).sqrt());
    u = u.zip_map(&len, |a, l| a / l);
    u
}

/// Profile of `state` against `reference` on rows with `zeta >= zeta_min`.
pub fn layer_profile(grid: &Grid, state: &FlowState, reference: &FlowState, eps: f64, zeta_min: f64) -> Result<LayerProfile> {
    if !(eps > 0.0) {
        return Err(Error::config("sweep.eps_list", "layer profile needs eps > 0"));
    }
    let u = tangential_velocity(grid, &state.v, &state.d);
    let u0 = tangential_velocity(grid, &reference.v, &reference.d);
    let diff = &u - &u0;
    let root = eps.sqrt();
    let mut zeta = vec![];
    let mut deviation = vec![];
    for (k, &z) in grid.z_nodes().iter().enumerate() {
        let zt = z / root;
        if zt < zeta_min {
            continue;
        }
        zeta.push(zt);
        deviation.push((diff.row(k).iter().map(|x| x * x).sum::<f64>() / grid.n_y() as f64).sqrt());
    }
    Ok(LayerProfile { eps, zeta, deviation })
}

/// Relative `L^2(zeta)` mismatch of two profiles after dividing each by `sqrt(eps)`.
pub fn layer_collapse(a: &LayerProfile, b: &LayerProfile) -> f64 {
    let lo = a.zeta[0].max(b.zeta[0]);
    let n = 200;
    let (sa, sb) = (a.eps.sqrt(), b.eps.sqrt());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=n {
        let z = lo * (1.0 - i as f64 / n as f64);
        let (x, y) = (a.at(z) / sa, b.at(z) / sb);
        num += (x - y).powi(2);
        den += x * x;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// One stored time level of a sweep member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSample {
    pub t: f64,
    pub l2_difference: f64,
    pub h1_difference: f64,
    pub conormal: f64,
    pub surface_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMember {
    pub eps: f64,
    pub final_time: f64,
    pub steps: u64,
    pub failure: Option<String>,
    /// `sup_t ||v^eps - v^ref||_{L^2}`.
    pub l2_difference: f64,
    /// `sup_t |h^eps - h^ref|_{H^1}`.
    pub h1_difference: f64,
    /// `sup_t ||v||_{H_co^m'}`.
    pub conormal_max: f64,
    /// `sup_t max |d_z v_y|` on the surface row.
    pub surface_gradient_max: f64,
    /// Observed admissibility window: `min_t min d_z phi` and `max_t |h|_{W^{2,inf}}`.
    pub min_dzphi: f64,
    pub max_h_w2inf: f64,
    pub samples: Vec<SweepSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub eps_list: Vec<f64>,
    pub members: Vec<SweepMember>,
    pub profiles: Vec<LayerProfile>,
    /// Last state reached by each member.
    pub finals: Vec<FlowState>,
}

impl SweepResult {
    pub fn failed(&self) -> Vec<f64> {
        self.members.iter().filter(|m| m.failure.is_some()).map(|m| m.eps).collect()
    }
}

/// Stored trajectory of one sweep member.
struct Track {
    levels: Vec<(f64, VectorField, Vec<f64>)>,
    probes: Vec<(f64, f64)>,
    window: (f64, f64),
    last: FlowState,
    failure: Option<String>,
}

fn probes(grid: &Grid, s: &FlowState, order: usize) -> Result<(f64, f64)> {
    let c = conormal_probe(grid, &s.v, order)?;
    let g = grid.d_vertical(&s.v.y)?;
    Ok((c, g.top_row().iter().fold(0.0, |x: f64, y| x.max(y.abs()))))
}

#[allow(clippy::too_many_arguments)]
fn integrate_fixed(
    grid: &Grid,
    s0: &FlowState,
    physics: &Physics,
    scheme: &Scheme,
    t_end: f64,
    dt: f64,
    order: usize,
) -> Result<Track> {
    let mut s = s0.clone();
    let mut tr = Track {
        levels: vec![(s.t, s.v.clone(), s.h.values().to_vec())],
        probes: vec![probes(grid, &s, order)?],
        window: (s.d.c0_observed, s.h.w_inf_norm(grid, 2)),
        last: s.clone(),
        failure: None,
    };
    while s.t < t_end - 1e-12 * t_end.max(1.0) {
        let step = dt.min(t_end - s.t);
        match advance(grid, &s, physics, scheme, step) {
            Ok((next, _)) => {
                tr.levels.push((next.t, next.v.clone(), next.h.values().to_vec()));
                tr.probes.push(probes(grid, &next, order)?);
                tr.window = (tr.window.0.min(next.d.c0_observed), tr.window.1.max(next.h.w_inf_norm(grid, 2)));
                s = next;
            }
            Err(e) => {
                tr.failure = Some(format!("{}: {e}", e.class()));
                break;
            }
        }
    }
    tr.last = s;
    Ok(tr)
}

fn conormal_probe(grid: &Grid, v: &VectorField, order: usize) -> Result<f64> {
    let mut sq = 0.0;
    for c in 0..2 {
        let r = conormal_norm(grid, &History::single(v.component(c).clone()), NormFamily::Hco { s: order })?;
        sq += r.value * r.value;
    }
    Ok(sq.sqrt())
}

/// Runs every `eps` concurrently from `s0` with the fixed step `dt` and
/// compares each against the last entry, which must be `eps = 0`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_sweep(
    grid: &Grid,
    s0: &FlowState,
    base: &Physics,
    scheme: &Scheme,
    eps_list: &[f64],
    t_end: f64,
    dt: f64,
    conormal_order: usize,
) -> Result<SweepResult> {
    if eps_list.len() < 3 {
        return Err(Error::config("sweep.eps_list", "needs at least three entries"));
    }
    if eps_list.windows(2).any(|w| !(w[0] > w[1])) || *eps_list.last().unwrap() != 0.0 {
        return Err(Error::config("sweep.eps_list", "must be strictly decreasing and end with 0"));
    }
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::config("time.t_final", "sweep needs positive t_final and dt"));
    }
    let tracks: Vec<Result<Track>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&eps| {
                let physics = Physics { eps, ..*base };
                scope.spawn(move || integrate_fixed(grid, s0, &physics, scheme, t_end, dt, conormal_order))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep member panicked")).collect()
    });
    let tracks: Vec<Track> = tracks.into_iter().collect::<Result<_>>()?;
    let reference = tracks.last().unwrap();
    let mut members = vec![];
    let mut profiles = vec![];
    for (&eps, tr) in eps_list.iter().zip(&tracks) {
        let mut m = SweepMember {
            eps,
            final_time: tr.last.t,
            steps: tr.last.step,
            failure: tr.failure.clone(),
            l2_difference: 0.0,
            h1_difference: 0.0,
            conormal_max: 0.0,
            surface_gradient_max: 0.0,
            min_dzphi: tr.window.0,
            max_h_w2inf: tr.window.1,
            samples: vec![],
        };
        for (i, (t, v, h)) in tr.levels.iter().enumerate() {
            let (c, sg) = tr.probes[i];
            let mut sample = SweepSample {
                t: *t,
                l2_difference: f64::NAN,
                h1_difference: f64::NAN,
                conormal: c,
                surface_gradient: sg,
            };
            if let Some((_, v0, h0)) = reference.levels.get(i) {
                let dv = v - v0;
                let dh: Vec<f64> = h.iter().zip(h0).map(|(x, y)| x - y).collect();
                sample.l2_difference = grid.integrate(&dv.norm_sq()).sqrt();
                sample.h1_difference = boundary_hs_norm(grid, &dh, 1.0);
                m.l2_difference = m.l2_difference.max(sample.l2_difference);
                m.h1_difference = m.h1_difference.max(sample.h1_difference);
            }
            m.conormal_max = m.conormal_max.max(c);
            m.surface_gradient_max = m.surface_gradient_max.max(sg);
            m.samples.push(sample);
        }
        if eps > 0.0 && tr.failure.is_none() && reference.failure.is_none() {
            profiles.push(layer_profile(grid, &tr.last, &reference.last, eps, -10.0)?);
        }
        members.push(m);
    }
    Ok(SweepResult {
        eps_list: eps_list.to_vec(),
        members,
        profiles,
        finals: tracks.into_iter().map(|t| t.last).collect(),
    })
}

/// Interior divergence check helper for audits on projected fields.
pub fn divergence_max(grid: &Grid, v: &VectorField, d: &Diffeomorphism) -> Result<f64> {
    let div = div_phi(grid, v, d)?;
    Ok((1..grid.top()).map(|k| div.row(k).iter().fold(0.0, |a: f64, b| a.max(b.abs()))).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Scheme;
    use crate::grid::{Clustering, VectorField};
    use crate::surface::SurfaceState;
    use std::f64::consts::PI;

    #[test]
    fn equilibrium_has_zero_energy() {
        let g = Grid::new(8, 8, 2.0 * PI, 1.0, Clustering::Uniform).unwrap();
        let s = FlowState::new(&g, VectorField::zeros(&g), SurfaceState::flat(&g), 1.0, &Scheme::default()).unwrap();
        let p = Physics { eps: 0.1, g: 1.0, sigma: 1.0 };
        let mut series = vec![energy_report(&g, &s, &p).unwrap(); 3];
        for (i, r) in series.iter_mut().enumerate() {
            r.t = i as f64;
        }
        assert_eq!(series[0].total(), 0.0);
        assert_eq!(energy_identity_residual(&mut series).unwrap(), 0.0);
        assert!(energy_identity_residual(&mut series[..2]).is_err());
    }

    #[test]
    fn potential_energies_of_a_mode() {
        let g = Grid::new(32, 8, 2.0 * PI, 1.0, Clustering::Uniform).unwrap();
        let s = FlowState::new(&g, VectorField::zeros(&g), SurfaceState::from_fn(&g, |y| 0.01 * y.cos()), 1.0, &Scheme::default())
            .unwrap();
        let p = Physics { eps: 0.0, g: 2.0, sigma: 1.0 };
        let r = energy_report(&g, &s, &p).unwrap();
        assert!((r.gravitational - 2.0 * 1e-4 * PI).abs() < 1e-14);
        assert!((r.capillary - 1e-4 * PI).abs() < 1e-8);
    }

    fn wavy(n_y: usize, n_z: usize, amp: f64) -> (Grid, SurfaceState, Diffeomorphism) {
        let g = Grid::new(n_y, n_z, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let h = SurfaceState::from_fn(&g, |y| amp * (y.cos() + 0.3 * (2.0 * y).sin()));
        let d = crate::surface::build_diffeomorphism(&g, &h, 1.0, 0.2, &CutoffSpec::default()).unwrap();
        (g, h, d)
    }

    #[test]
    fn flat_dn_matches_symbol() {
        let opts = SolverOptions::with_tol(1e-12);
        let err = |n: usize| {
            let g = Grid::new(n, 3 * n / 2, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
            dn_flat_error(&g, 2, opts).unwrap()
        };
        let (a, b) = (err(32), err(64));
        assert!(a < 2e-2, "{a}");
        assert!(a / b > 1.8, "{a} {b}");
    }

    #[test]
    fn dn_is_symmetric_and_coercive() {
        let (g, h, d) = wavy(32, 32, 0.1);
        let opts = SolverOptions::with_tol(1e-12);
        let f: Vec<f64> = g.y_nodes().iter().map(|y| (2.0 * y).cos() + 0.5 * y.sin()).collect();
        let e: Vec<f64> = g.y_nodes().iter().map(|y| (3.0 * y).sin() - y.cos()).collect();
        assert!(dn_symmetry_defect(&g, &d, &f, &e, opts).unwrap() < 1e-3);
        assert!(dn_coercivity(&g, &h, &d, &f, opts).unwrap() > 0.1);
    }

    #[test]
    fn rigid_rotation_has_korn_ratio_of_its_gradient() {
        let (g, _, d) = wavy(16, 16, 0.0);
        let v = VectorField::from_fn(&g, |y, z| [(0.5 * y).sin() * z, z.cos()]);
        let r = korn_ratio(&g, &v, &d).unwrap();
        assert!(r.is_finite() && r > 0.0);
        assert_eq!(korn_audit(&g, &[]).unwrap(), 0.0);
    }

    #[test]
    fn extension_ratio_is_bounded() {
        let spectra = random_spectra(5, 0.1, 6, 1.5, 7);
        let c = CutoffSpec::default();
        let coarse = Grid::new(32, 32, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        let fine = Grid::new(64, 32, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
        for s in 0..3 {
            let a = extension_ratio_audit(&coarse, &spectra, &c, s);
            let b = extension_ratio_audit(&fine, &spectra, &c, s);
            assert!(a > 0.0 && b <= 1.05 * a, "s={s}: {a} {b}");
        }
    }

    #[test]
    fn reconstruction_holds_for_divergence_free_fields() {
        let (g, _, d) = wavy(48, 64, 0.0);
        let v = VectorField::from_fn(&g, |y, z| [y.cos() * z.cosh(), y.sin() * z.sinh()]);
        let a = sn_reconstruction_audit(&g, &v, &d).unwrap();
        assert!(a.normal_part < 1e-2 * a.scale.max(1.0), "{a:?}");
        assert!(a.full < 1e-2 * a.scale.max(1.0), "{a:?}");
    }

    #[test]
    fn profile_collapse_of_identical_shapes() {
        let mk = |eps: f64| LayerProfile {
            eps,
            zeta: (0..=20).map(|i| -10.0 + 0.5 * i as f64).collect(),
            deviation: (0..=20).map(|i| eps.sqrt() * (-10.0 + 0.5 * i as f64).exp()).collect(),
        };
        assert!(layer_collapse(&mk(1e-2), &mk(1e-4)) < 1e-12);
        assert!((mk(1e-2).at(0.0) - 0.1).abs() < 1e-14);
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let g = Grid::new(8, 8, 2.0 * PI, 1.0, Clustering::Uniform).unwrap();
        let s = FlowState::new(&g, VectorField::zeros(&g), SurfaceState::flat(&g), 1.0, &Scheme::default()).unwrap();
        let p = Physics { eps: 0.0, g: 1.0, sigma: 0.1 };
        let sc = Scheme::default();
        assert!(epsilon_sweep(&g, &s, &p, &sc, &[1e-2, 0.0], 1.0, 0.1, 1).is_err());
        assert!(epsilon_sweep(&g, &s, &p, &sc, &[1e-3, 1e-2, 0.0], 1.0, 0.1, 1).is_err());
        let r = epsilon_sweep(&g, &s, &p, &sc, &[1e-2, 1e-3, 0.0], 0.2, 0.1, 1).unwrap();
        assert!(r.failed().is_empty());
        assert!(r.members.iter().all(|m| m.l2_difference == 0.0));
    }
}
