//! Free-surface elevation, its smoothing extension into the fixed domain and
//! the resulting diffeomorphism `phi = A z + eta` with metric data.

use rustfft::num_complex::Complex64;

use crate::cutoff::CutoffSpec;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, VectorField};

/// Surface elevation `h(y)` together with its discrete Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceState {
    values: Vec<f64>,
    hat: Vec<Complex64>,
}

impl SurfaceState {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_y() {
            return Err(Error::Shape {
                expected: format!("{} surface samples", grid.n_y()),
                found: format!("{} surface samples", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape {
                expected: "finite surface samples".into(),
                found: "non-finite value".into(),
            });
        }
        let hat = grid.fft(&values);
        Ok(SurfaceState { values, hat })
    }

    pub fn flat(grid: &Grid) -> Self {
        SurfaceState::new(grid, vec![0.0; grid.n_y()]).expect("flat surface")
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.y_nodes().iter().map(|&y| f(y)).collect();
        SurfaceState::new(grid, values).expect("surface from closure")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coefficients `c_m` with `h(y_j) = sum_m c_m exp(i xi_m y_j)`.
    pub fn coeffs(&self) -> Vec<Complex64> {
        let n = self.values.len() as f64;
        self.hat.iter().map(|c| c / n).collect()
    }

    pub(crate) fn raw_hat(&self) -> &[Complex64] {
        &self.hat
    }

    pub fn derivative(&self, grid: &Grid, order: u32) -> Vec<f64> {
        grid.diff_row_n(&self.values, order)
    }

    /// `|h|_{H^s}` through the multiplier `(1 + xi^2)^{s/2}`; `s` may be fractional.
    pub fn hs_norm(&self, grid: &Grid, s: f64) -> f64 {
        boundary_hs_norm(grid, &self.values, s)
    }

    /// `|h|_{W^{s,inf}} = max_{j <= s} max |d^j h|`.
    pub fn w_inf_norm(&self, grid: &Grid, s: u32) -> f64 {
        (0..=s)
            .map(|j| {
                self.derivative(grid, j)
                    .iter()
                    .fold(0.0, |m: f64, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `|f|_{H^s}` of periodic boundary samples via a Fourier multiplier.
pub fn boundary_hs_norm(grid: &Grid, row: &[f64], s: f64) -> f64 {
    let c = grid.fft(row);
    let n = grid.n_y() as f64;
    let sum: f64 = c
        .iter()
        .zip(grid.wavenumbers())
        .map(|(cm, &xi)| (1.0 + xi * xi).powf(s) * cm.norm_sqr())
        .sum();
    (grid.length_y() * sum / (n * n)).sqrt()
}

/// Mixed derivative `d_y^p d_z^q eta` of the extension, evaluated exactly per mode.
pub fn extension_derivative(
    grid: &Grid,
    h: &SurfaceState,
    cutoff: &CutoffSpec,
    p: u32,
    q: usize,
) -> Field {
    let mut out = Field::zeros(grid);
    for (k, &z) in grid.z_nodes().iter().enumerate() {
        let c = level_coefficients(grid, h, cutoff, z, p, q);
        out.row_mut(k).copy_from_slice(&grid.ifft(c));
    }
    out
}

fn level_coefficients(
    grid: &Grid,
    h: &SurfaceState,
    cutoff: &CutoffSpec,
    z: f64,
    p: u32,
    q: usize,
) -> Vec<Complex64> {
    let half = grid.n_y() / 2;
    h.raw_hat()
        .iter()
        .zip(grid.wavenumbers())
        .enumerate()
        .map(|(m, (&c, &xi))| {
            if p % 2 == 1 && m == half {
                return Complex64::new(0.0, 0.0);
            }
            let chi = cutoff.derivatives(z * xi)[q];
            let ik = Complex64::new(0.0, xi).powu(p);
            c * ik * chi * xi.powi(q as i32)
        })
        .collect()
}

/// The smoothing extension with `eta_hat(xi, z) = chi(z xi) h_hat(xi)`.
pub fn extend_surface(grid: &Grid, h: &SurfaceState, cutoff: &CutoffSpec) -> Field {
    extension_derivative(grid, h, cutoff, 0, 0)
}

/// `||grad eta||_{H^s(S)}`, summing `L^2` norms of all mixed derivatives of
/// order `<= s` of both gradient components. Horizontal integrals use Parseval.
pub fn grad_extension_hs_norm(grid: &Grid, h: &SurfaceState, cutoff: &CutoffSpec, s: u32) -> f64 {
    let n = grid.n_y() as f64;
    let mut total = 0.0;
    for (k, &z) in grid.z_nodes().iter().enumerate() {
        let w = grid.quadrature_weights_z()[k];
        for order in 0..=s {
            for q in 0..=order as usize {
                let p = order - q as u32;
                for (pp, qq) in [(p + 1, q), (p, q + 1)] {
                    let c = level_coefficients(grid, h, cutoff, z, pp, qq);
                    let e: f64 = c.iter().map(|x| x.norm_sqr()).sum();
                    total += w * grid.length_y() * e / (n * n);
                }
            }
        }
    }
    total.sqrt()
}

/// `max(1, 2 max |d_z eta|)`.
pub fn auto_slope(grid: &Grid, h: &SurfaceState, cutoff: &CutoffSpec) -> f64 {
    let dz = extension_derivative(grid, h, cutoff, 0, 1);
    (2.0 * dz.max_abs()).max(1.0)
}

/// `phi = A z + eta` and its metric data on the fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffeomorphism {
    pub a: f64,
    pub cutoff: CutoffSpec,
    pub eta: Field,
    pub phi: Field,
    /// `J = d_z phi = A + d_z eta`, evaluated exactly per mode.
    pub dzphi: Field,
    /// Spectral `d_y phi`.
    pub dyphi: Field,
    /// `N = (-d_y phi, 1)` on every node.
    pub normal: VectorField,
    /// Unit outward normal on the surface row.
    pub n_boundary: [Vec<f64>; 2],
    pub c0_observed: f64,
}

pub fn build_diffeomorphism(
    grid: &Grid,
    h: &SurfaceState,
    a: f64,
    c0: f64,
    cutoff: &CutoffSpec,
) -> Result<Diffeomorphism> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::config("physics.slope", format!("must be positive, got {a}")));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::config("physics.c0", format!("must be positive, got {c0}")));
    }
    cutoff.validate()?;
    let eta = extend_surface(grid, h, cutoff);
    let mut phi = Field::from_fn(grid, |_, z| a * z);
    phi.axpy(1.0, &eta);
    let dzphi = extension_derivative(grid, h, cutoff, 0, 1).map(|v| v + a);
    let c0_observed = dzphi.min();
    if !(c0_observed >= c0) {
        return Err(Error::MetricValidity {
            min_dzphi: c0_observed,
            required: c0,
        });
    }
    let dyphi = grid.dy_unchecked(&eta);
    let normal = VectorField::new(dyphi.scale(-1.0), Field::constant(grid, 1.0));
    let (ny, _) = dyphi.shape();
    let mut n_y = vec![0.0; ny];
    let mut n_z = vec![0.0; ny];
    for (j, &s) in dyphi.top_row().iter().enumerate() {
        let len = (1.0 + s * s).sqrt();
        n_y[j] = -s / len;
        n_z[j] = 1.0 / len;
    }
    Ok(Diffeomorphism {
        a,
        cutoff: *cutoff,
        eta,
        phi,
        dzphi,
        dyphi,
        normal,
        n_boundary: [n_y, n_z],
        c0_observed,
    })
}

impl Diffeomorphism {
    /// Flat map `phi = A z`.
    pub fn flat(grid: &Grid, a: f64) -> Self {
        build_diffeomorphism(grid, &SurfaceState::flat(grid), a, a.min(1.0) * 0.5, &CutoffSpec::default())
            .expect("flat map is valid")
    }
}

/// Surface normal data and mean curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGeometry {
    /// `N = (-h_y, 1)`.
    pub normal: [Vec<f64>; 2],
    pub unit_normal: [Vec<f64>; 2],
    /// `d_y (h_y / sqrt(1 + h_y^2))`.
    pub curvature: Vec<f64>,
}

pub fn surface_geometry(grid: &Grid, h: &SurfaceState) -> SurfaceGeometry {
    let hy = h.derivative(grid, 1);
    let len: Vec<f64> = hy.iter().map(|s| (1.0 + s * s).sqrt()).collect();
    let flux: Vec<f64> = hy.iter().zip(&len).map(|(s, l)| s / l).collect();
    let curvature = grid.diff_row(&flux);
    SurfaceGeometry {
        normal: [hy.iter().map(|s| -s).collect(), vec![1.0; hy.len()]],
        unit_normal: [
            hy.iter().zip(&len).map(|(s, l)| -s / l).collect(),
            len.iter().map(|l| 1.0 / l).collect(),
        ],
        curvature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Clustering;
    use std::f64::consts::PI;

    fn grid(n_y: usize, n_z: usize) -> Grid {
        Grid::new(n_y, n_z, 2.0 * PI, 2.0, Clustering::Tanh { beta: 2.0 }).unwrap()
    }

    #[test]
    fn round_trip_transform() {
        let g = grid(32, 8);
        let h = SurfaceState::from_fn(&g, |y| 0.3 * y.sin() + 0.1 * (3.0 * y).cos() + 0.05);
        let back = g.ifft(h.raw_hat().to_vec());
        for (a, b) in back.iter().zip(h.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = h.coeffs();
        for m in 1..16 {
            assert!((c[m] - c[32 - m].conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_surface_extends_constant() {
        let g = grid(16, 12);
        let h = SurfaceState::from_fn(&g, |_| 0.7);
        let eta = extend_surface(&g, &h, &CutoffSpec::default());
        assert!((&eta - &Field::constant(&g, 0.7)).max_abs() < 1e-14);
    }

    #[test]
    fn single_mode_extension() {
        let g = grid(16, 24);
        let k = 3.0;
        let cut = CutoffSpec::default();
        let h = SurfaceState::from_fn(&g, |y| (k * y).cos());
        let eta = extend_surface(&g, &h, &cut);
        let exact = Field::from_fn(&g, |y, z| cut.value(z * k) * (k * y).cos());
        assert!((&eta - &exact).max_abs() < 1e-13);
        for (a, b) in eta.top_row().iter().zip(h.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_map() {
        let g = grid(16, 16);
        let d = build_diffeomorphism(&g, &SurfaceState::flat(&g), 1.0, 0.5, &CutoffSpec::default())
            .unwrap();
        assert!((&d.phi - &Field::from_fn(&g, |_, z| z)).max_abs() < 1e-15);
        assert!((&d.dzphi - &Field::constant(&g, 1.0)).max_abs() < 1e-12);
        assert!(d.normal.y.max_abs() < 1e-15);
        assert!(d.n_boundary[1].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn metric_validity() {
        let g = grid(32, 32);
        let cut = CutoffSpec::default();
        let small = SurfaceState::from_fn(&g, |y| 0.1 * y.cos());
        let d = build_diffeomorphism(&g, &small, 1.0, 0.5, &cut).unwrap();
        assert!(d.c0_observed >= 0.5);
        let big = SurfaceState::from_fn(&g, |y| 10.0 * y.cos());
        match build_diffeomorphism(&g, &big, 1.0, 0.5, &cut) {
            Err(Error::MetricValidity { min_dzphi, required }) => {
                assert!(min_dzphi < 0.5);
                assert_eq!(required, 0.5);
            }
            other => panic!("expected metric error, got {other:?}"),
        }
    }

    #[test]
    fn slope_monotone() {
        let g = grid(32, 24);
        let cut = CutoffSpec::default();
        let h = SurfaceState::from_fn(&g, |y| 1.5 * y.cos());
        let a_auto = auto_slope(&g, &h, &cut);
        assert!(a_auto >= 1.0);
        let d1 = build_diffeomorphism(&g, &h, a_auto, 0.25, &cut).unwrap();
        let d2 = build_diffeomorphism(&g, &h, a_auto + 0.5, 0.25, &cut).unwrap();
        assert!((&(&d2.dzphi - &d1.dzphi) - &Field::constant(&g, 0.5)).max_abs() < 1e-12);
    }

    #[test]
    fn exact_vertical_derivative_agrees_with_differences() {
        let cut = CutoffSpec::default();
        let err = |n_z: usize| {
            let g = Grid::new(16, n_z, 2.0 * PI, 2.0, Clustering::Uniform).unwrap();
            let h = SurfaceState::from_fn(&g, |y| 0.2 * (2.0 * y).cos() + 0.1 * y.sin());
            let fd = g.d_vertical(&extend_surface(&g, &h, &cut)).unwrap();
            let exact = extension_derivative(&g, &h, &cut, 0, 1);
            let mut e: f64 = 0.0;
            for k in 1..n_z - 1 {
                for j in 0..16 {
                    e = e.max((fd.get(j, k) - exact.get(j, k)).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(201), err(401));
        assert!(e1 < 1e-2 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn curvature_of_flat_and_cosine() {
        let g = grid(64, 8);
        let geo = surface_geometry(&g, &SurfaceState::flat(&g));
        assert!(geo.curvature.iter().all(|c| c.abs() < 1e-14));
        let (a, k) = (0.2, 2.0);
        let h = SurfaceState::from_fn(&g, |y| a * (k * y).cos());
        let geo = surface_geometry(&g, &h);
        for (j, &y) in g.y_nodes().iter().enumerate() {
            let s = a * k * (k * y).sin();
            let exact = -a * k * k * (k * y).cos() * (1.0 + s * s).powf(-1.5);
            assert!((geo.curvature[j] - exact).abs() < 1e-9);
            let n2 = geo.unit_normal[0][j].powi(2) + geo.unit_normal[1][j].powi(2);
            assert!((n2 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_norm_of_mode() {
        let g = grid(32, 8);
        let h = SurfaceState::from_fn(&g, |y| (3.0 * y).cos());
        let exact = (PI * 10f64.sqrt()).sqrt();
        assert!((h.hs_norm(&g, 0.5) - exact).abs() < 1e-12 * exact);
        assert!((h.hs_norm(&g, 0.0) - PI.sqrt()).abs() < 1e-12);
    }
}
