//! Discretization of the fixed computational domain `T_L x [-H, 0]`.
//!
//! The horizontal coordinate is periodic with `n_y` equispaced nodes and is
//! differentiated spectrally. The vertical coordinate carries `n_z` nodes
//! from `-H` to `0`, optionally clustered towards the surface, and uses a
//! summation-by-parts first-derivative operator: centered differences inside,
//! one-sided differences at the two ends, paired with trapezoidal weights so
//! that `W D + (W D)^T = diag(-1, 0, .., 0, 1)`.
//!
//! Samples are stored row-major by vertical level: index `k * n_y + j` holds
//! the value at `(y_j, z_k)`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertical node distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Clustering {
    Uniform,
    /// `z(s) = -H (1 - tanh(beta (1 - s)) / tanh(beta))` on `s in [0, 1]`,
    /// which packs nodes towards `z = 0`.
    Tanh { beta: f64 },
}

impl Clustering {
    fn nodes(self, n_z: usize, depth: f64) -> Vec<f64> {
        let last = (n_z - 1) as f64;
        let mut z: Vec<f64> = (0..n_z)
            .map(|k| {
                // s runs from the surface (s = 0) to the bottom (s = 1).
                let s = (n_z - 1 - k) as f64 / last;
                match self {
                    Clustering::Uniform => -depth * s,
                    Clustering::Tanh { beta } => {
                        -depth * (1.0 - (beta * (1.0 - s)).tanh() / beta.tanh())
                    }
                }
            })
            .collect();
        z[0] = -depth;
        z[n_z - 1] = 0.0;
        z
    }
}

#[derive(Clone)]
pub struct Grid {
    n_y: usize,
    n_z: usize,
    length_y: f64,
    depth: f64,
    clustering: Clustering,
    y_nodes: Vec<f64>,
    z_nodes: Vec<f64>,
    weights_z: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_y", &self.n_y)
            .field("n_z", &self.n_z)
            .field("length_y", &self.length_y)
            .field("depth", &self.depth)
            .field("clustering", &self.clustering)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n_y == other.n_y
            && self.n_z == other.n_z
            && self.length_y == other.length_y
            && self.depth == other.depth
            && self.clustering == other.clustering
    }
}

impl Grid {
    pub fn new(
        n_y: usize,
        n_z: usize,
        length_y: f64,
        depth: f64,
        clustering: Clustering,
    ) -> Result<Self> {
        if n_y < 8 || n_y % 2 != 0 {
            return Err(Error::config("n_y", format!("must be even and >= 8, got {n_y}")));
        }
        if n_z < 8 {
            return Err(Error::config("n_z", format!("must be >= 8, got {n_z}")));
        }
        if !(length_y.is_finite() && length_y > 0.0) {
            return Err(Error::config("length_y", "must be positive"));
        }
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::config("depth", "must be positive"));
        }
        if let Clustering::Tanh { beta } = clustering {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::config("clustering.beta", "must be positive"));
            }
        }

        let dy = length_y / n_y as f64;
        let y_nodes = (0..n_y).map(|j| j as f64 * dy).collect();
        let z_nodes = clustering.nodes(n_z, depth);
        let mut weights_z = vec![0.0; n_z];
        weights_z[0] = 0.5 * (z_nodes[1] - z_nodes[0]);
        weights_z[n_z - 1] = 0.5 * (z_nodes[n_z - 1] - z_nodes[n_z - 2]);
        for k in 1..n_z - 1 {
            weights_z[k] = 0.5 * (z_nodes[k + 1] - z_nodes[k - 1]);
        }

        let half = n_y / 2;
        let wavenumbers = (0..n_y)
            .map(|m| {
                let signed = if m <= half { m as f64 } else { m as f64 - n_y as f64 };
                2.0 * PI * signed / length_y
            })
            .collect();

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_y);
        let inverse = planner.plan_fft_inverse(n_y);

        Ok(Grid {
            n_y,
            n_z,
            length_y,
            depth,
            clustering,
            y_nodes,
            z_nodes,
            weights_z,
            wavenumbers,
            forward,
            inverse,
        })
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    pub fn len(&self) -> usize {
        self.n_y * self.n_z
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn length_y(&self) -> f64 {
        self.length_y
    }
    pub fn depth(&self) -> f64 {
        self.depth
    }
    pub fn clustering(&self) -> Clustering {
        self.clustering
    }
    pub fn dy(&self) -> f64 {
        self.length_y / self.n_y as f64
    }
    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }
    pub fn z_nodes(&self) -> &[f64] {
        &self.z_nodes
    }
    pub fn quadrature_weights_z(&self) -> &[f64] {
        &self.weights_z
    }
    /// Signed angular wavenumbers in FFT order. The Nyquist entry is positive.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }
    pub fn top(&self) -> usize {
        self.n_z - 1
    }
    pub fn min_dz(&self) -> f64 {
        self.z_nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        k * self.n_y + j
    }

    /// Unnormalized forward transform of one periodic row.
    pub fn fft(&self, row: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = row.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse of [`Grid::fft`], including the `1/n` normalization; the
    /// imaginary part is discarded.
    pub fn ifft(&self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut coeffs);
        let scale = 1.0 / self.n_y as f64;
        coeffs.iter().map(|c| c.re * scale).collect()
    }

    /// Applies a real, even Fourier multiplier `symbol(xi)` to each row.
    pub fn fourier_multiplier_row(&self, row: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.fft(row);
        for (cm, &xi) in c.iter_mut().zip(&self.wavenumbers) {
            *cm *= symbol(xi);
        }
        self.ifft(c)
    }

    /// Spectral derivative of a periodic row. The Nyquist mode is dropped.
    pub fn diff_row(&self, row: &[f64]) -> Vec<f64> {
        self.diff_row_n(row, 1)
    }

    pub fn diff_row_n(&self, row: &[f64], order: u32) -> Vec<f64> {
        if order == 0 {
            return row.to_vec();
        }
        let mut c = self.fft(row);
        let half = self.n_y / 2;
        for (m, cm) in c.iter_mut().enumerate() {
            if m == half {
                *cm = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, self.wavenumbers[m]);
            *cm *= ik.powu(order);
        }
        self.ifft(c)
    }

    /// Summation-by-parts vertical derivative of one column.
    pub fn diff_column(&self, col: &[f64]) -> Vec<f64> {
        let z = &self.z_nodes;
        let n = self.n_z;
        let mut out = vec![0.0; n];
        out[0] = (col[1] - col[0]) / (z[1] - z[0]);
        out[n - 1] = (col[n - 1] - col[n - 2]) / (z[n - 1] - z[n - 2]);
        for k in 1..n - 1 {
            out[k] = (col[k + 1] - col[k - 1]) / (z[k + 1] - z[k - 1]);
        }
        out
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.n_y != self.n_y || f.n_z != self.n_z {
            return Err(Error::Shape {
                expected: format!("{}x{}", self.n_y, self.n_z),
                found: format!("{}x{}", f.n_y, f.n_z),
            });
        }
        Ok(())
    }

    /// Exact (band-limited) horizontal derivative `Z_1 = d/dy`.
    pub fn d_horizontal(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        Ok(self.dy_unchecked(f))
    }

    pub(crate) fn dy_unchecked(&self, f: &Field) -> Field {
        let mut out = Field::zeros(self);
        for k in 0..self.n_z {
            let d = self.diff_row(f.row(k));
            out.row_mut(k).copy_from_slice(&d);
        }
        out
    }

    /// Vertical derivative on the (possibly stretched) nodes.
    pub fn d_vertical(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        Ok(self.dz_unchecked(f))
    }

    pub(crate) fn dz_unchecked(&self, f: &Field) -> Field {
        let (ny, nz) = (self.n_y, self.n_z);
        let z = &self.z_nodes;
        let mut out = Field::zeros(self);
        let v = &f.values;
        let o = &mut out.values;
        for j in 0..ny {
            o[j] = (v[ny + j] - v[j]) / (z[1] - z[0]);
            let t = (nz - 1) * ny + j;
            o[t] = (v[t] - v[t - ny]) / (z[nz - 1] - z[nz - 2]);
        }
        for k in 1..nz - 1 {
            let inv = 1.0 / (z[k + 1] - z[k - 1]);
            for j in 0..ny {
                let i = k * ny + j;
                o[i] = (v[i + ny] - v[i - ny]) * inv;
            }
        }
        out
    }

    /// Transpose of the vertical derivative matrix applied to each column.
    pub(crate) fn dz_transpose_unchecked(&self, f: &Field) -> Field {
        let (ny, nz) = (self.n_y, self.n_z);
        let z = &self.z_nodes;
        let mut out = Field::zeros(self);
        let v = &f.values;
        let o = &mut out.values;
        for j in 0..ny {
            let c0 = 1.0 / (z[1] - z[0]);
            o[j] -= c0 * v[j];
            o[ny + j] += c0 * v[j];
            let t = (nz - 1) * ny + j;
            let c1 = 1.0 / (z[nz - 1] - z[nz - 2]);
            o[t - ny] -= c1 * v[t];
            o[t] += c1 * v[t];
        }
        for k in 1..nz - 1 {
            let inv = 1.0 / (z[k + 1] - z[k - 1]);
            for j in 0..ny {
                let i = k * ny + j;
                o[i - ny] -= inv * v[i];
                o[i + ny] += inv * v[i];
            }
        }
        out
    }

    /// Dense `n_z x n_z` matrix of the vertical derivative, row-major.
    pub fn dz_matrix(&self) -> Vec<f64> {
        let n = self.n_z;
        let mut m = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            let d = self.diff_column(&e);
            for r in 0..n {
                m[r * n + c] = d[r];
            }
        }
        m
    }

    /// Quadrature of `f * dzphi` over the box, i.e. the weighted volume
    /// integral with `dV_t = dz(phi) dy dz`.
    pub fn integrate_dvt(&self, f: &Field, dzphi: &Field) -> Result<f64> {
        self.check(f)?;
        self.check(dzphi)?;
        let min = dzphi.min();
        if !(min > 0.0) {
            return Err(Error::MetricValidity {
                min_dzphi: min,
                required: 0.0,
            });
        }
        Ok(self.integrate_weighted(f, dzphi))
    }

    pub(crate) fn integrate_weighted(&self, f: &Field, w: &Field) -> f64 {
        let dy = self.dy();
        let mut total = 0.0;
        for k in 0..self.n_z {
            let wk = self.weights_z[k];
            let row: f64 = f.row(k).iter().zip(w.row(k)).map(|(a, b)| a * b).sum();
            total += wk * row;
        }
        total * dy
    }

    /// Plain quadrature `int f dy dz`.
    pub fn integrate(&self, f: &Field) -> f64 {
        let dy = self.dy();
        let mut total = 0.0;
        for k in 0..self.n_z {
            total += self.weights_z[k] * f.row(k).iter().sum::<f64>();
        }
        total * dy
    }

    /// `int g dy` over one periodic row.
    pub fn integrate_row(&self, g: &[f64]) -> f64 {
        g.iter().sum::<f64>() * self.dy()
    }
}

/// Real samples of a scalar quantity on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    n_y: usize,
    n_z: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field {
            n_y: grid.n_y,
            n_z: grid.n_z,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &z in &grid.z_nodes {
            for &y in &grid.y_nodes {
                values.push(f(y, z));
            }
        }
        Field {
            n_y: grid.n_y,
            n_z: grid.n_z,
            values,
        }
    }

    /// Validated construction: shape must match and every sample be finite.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: format!("{} samples", grid.len()),
                found: format!("{} samples", values.len()),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape {
                expected: "finite samples".into(),
                found: format!("non-finite value at index {bad}"),
            });
        }
        Ok(Field {
            n_y: grid.n_y,
            n_z: grid.n_z,
            values,
        })
    }

    /// Extends a boundary row to every level, constant in `z`.
    pub fn from_row(grid: &Grid, row: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.n_z {
            values.extend_from_slice(row);
        }
        Field {
            n_y: grid.n_y,
            n_z: grid.n_z,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_y, self.n_z)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[k * self.n_y + j]
    }
    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        self.values[k * self.n_y + j] = v;
    }
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_y..(k + 1) * self.n_y]
    }
    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_y..(k + 1) * self.n_y]
    }
    /// Restriction to the surface level `z = 0`.
    pub fn top_row(&self) -> &[f64] {
        self.row(self.n_z - 1)
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_z).map(|k| self.get(j, k)).collect()
    }
    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        for (k, &v) in col.iter().enumerate() {
            self.set(j, k, v);
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            n_y: self.n_y,
            n_z: self.n_z,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.shape(), other.shape());
        Field {
            n_y: self.n_y,
            n_z: self.n_z,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Mul<&Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        rhs.scale(self)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

/// Two-component vector field `(v_y, v_z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub y: Field,
    pub z: Field,
}

impl VectorField {
    pub fn new(y: Field, z: Field) -> Self {
        debug_assert_eq!(y.shape(), z.shape());
        VectorField { y, z }
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField::new(Field::zeros(grid), Field::zeros(grid))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let y = Field::from_fn(grid, |y, z| f(y, z)[0]);
        let z = Field::from_fn(grid, |y, z| f(y, z)[1]);
        VectorField::new(y, z)
    }

    pub fn component(&self, i: usize) -> &Field {
        match i {
            0 => &self.y,
            1 => &self.z,
            _ => panic!("vector component {i} out of range"),
        }
    }

    pub fn component_mut(&mut self, i: usize) -> &mut Field {
        match i {
            0 => &mut self.y,
            1 => &mut self.z,
            _ => panic!("vector component {i} out of range"),
        }
    }

    pub fn map(&self, f: impl Fn(&Field) -> Field) -> VectorField {
        VectorField::new(f(&self.y), f(&self.z))
    }

    pub fn scale(&self, c: f64) -> VectorField {
        VectorField::new(self.y.scale(c), self.z.scale(c))
    }

    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        self.y.axpy(a, &x.y);
        self.z.axpy(a, &x.z);
    }

    pub fn dot(&self, other: &VectorField) -> Field {
        &(&self.y * &other.y) + &(&self.z * &other.z)
    }

    pub fn norm_sq(&self) -> Field {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.y.max_abs().max(self.z.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.z.is_finite()
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField::new(&self.y - &rhs.y, &self.z - &rhs.z)
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField::new(&self.y + &rhs.y, &self.z + &rhs.z)
    }
}

/// Symmetric 2x2 tensor field stored by its three independent entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub yy: Field,
    pub yz: Field,
    pub zz: Field,
}

impl SymTensorField {
    /// Pointwise Frobenius norm squared `A : A`.
    pub fn frobenius_sq(&self) -> Field {
        let mut out = &self.yy * &self.yy;
        let zz = &self.zz * &self.zz;
        let yz = &self.yz * &self.yz;
        out.axpy(1.0, &zz);
        out.axpy(2.0, &yz);
        out
    }
}
