//! Binary checkpoints and CSV series.
//!
//! Checkpoint layout, all little-endian:
//! magic `FSCK`, version `u32`, `n_y u64`, `n_z u64`, `step u64`,
//! `length_y, depth, t, eps, g, sigma, slope` as `f64`, a `u64` FNV-1a hash
//! of the preceding bytes, then `h` (`n_y` values), `v_y` and `v_z`
//! (`n_y n_z` values each, index `k n_y + j`).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evolution::{FlowState, Physics, Scheme};
use crate::grid::{Field, Grid, VectorField};
use crate::surface::{build_diffeomorphism, SurfaceState};

const MAGIC: &[u8; 4] = b"FSCK";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 3 * 8 + 7 * 8;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Header fields other than the layout markers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub n_y: usize,
    pub n_z: usize,
    pub step: u64,
    pub length_y: f64,
    pub depth: f64,
    pub t: f64,
    pub eps: f64,
    pub g: f64,
    pub sigma: f64,
    pub slope: f64,
}

pub fn encode_checkpoint(grid: &Grid, state: &FlowState, physics: &Physics) -> Vec<u8> {
    let n = grid.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 + 8 * (grid.n_y() + 2 * n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for x in [grid.n_y() as u64, grid.n_z() as u64, state.step] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in [grid.length_y(), grid.depth(), state.t, physics.eps, physics.g, physics.sigma, state.d.a] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let hash = fnv1a(&out);
    out.extend_from_slice(&hash.to_le_bytes());
    for x in state.h.values().iter().chain(state.v.y.values()).chain(state.v.z.values()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    if bytes.len() < HEADER_LEN + 8 {
        return Err(ck("file shorter than header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(ck("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(ck(format!("version {version}, expected {VERSION}")));
    }
    if fnv1a(&bytes[..HEADER_LEN]) != u64_at(bytes, HEADER_LEN) {
        return Err(ck("header hash mismatch"));
    }
    let f = |i: usize| f64_at(bytes, 32 + 8 * i);
    Ok(CheckpointHeader {
        n_y: u64_at(bytes, 8) as usize,
        n_z: u64_at(bytes, 16) as usize,
        step: u64_at(bytes, 24),
        length_y: f(0),
        depth: f(1),
        t: f(2),
        eps: f(3),
        g: f(4),
        sigma: f(5),
        slope: f(6),
    })
}

/// Restores the state on `grid`; the box and shape must match exactly.
pub fn decode_checkpoint(grid: &Grid, scheme: &Scheme, bytes: &[u8]) -> Result<(CheckpointHeader, FlowState)> {
    let hd = decode_header(bytes)?;
    if (hd.n_y, hd.n_z) != (grid.n_y(), grid.n_z()) {
        return Err(ck(format!("shape {}x{} does not match grid {}x{}", hd.n_y, hd.n_z, grid.n_y(), grid.n_z())));
    }
    if hd.length_y.to_bits() != grid.length_y().to_bits() || hd.depth.to_bits() != grid.depth().to_bits() {
        return Err(ck("box dimensions do not match grid"));
    }
    let n = grid.len();
    let body = HEADER_LEN + 8;
    if bytes.len() != body + 8 * (grid.n_y() + 2 * n) {
        return Err(ck(format!("body has {} bytes", bytes.len() - body)));
    }
    let read = |start: usize, count: usize| -> Vec<f64> { (0..count).map(|i| f64_at(bytes, body + 8 * (start + i))).collect() };
    let h = SurfaceState::new(grid, read(0, grid.n_y())).map_err(|e| ck(e.to_string()))?;
    let vy = Field::from_values(grid, read(grid.n_y(), n))?;
    let vz = Field::from_values(grid, read(grid.n_y() + n, n))?;
    let d = build_diffeomorphism(grid, &h, hd.slope, scheme.c0, &scheme.cutoff)?;
    let state = FlowState {
        t: hd.t,
        step: hd.step,
        v: VectorField::new(vy, vz),
        h,
        d,
    };
    Ok((hd, state))
}

pub fn save_checkpoint(path: &Path, grid: &Grid, state: &FlowState, physics: &Physics) -> Result<()> {
    fs::write(path, encode_checkpoint(grid, state, physics)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, grid: &Grid, scheme: &Scheme) -> Result<(CheckpointHeader, FlowState)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(grid, scheme, &bytes)
}

fn cell(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:e}")
    }
}

/// CSV table with a fixed header; integers print plainly, other numbers use
/// round-trip `{:e}` output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    rows: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        let cells: Vec<String> = values.iter().map(|&x| cell(x)).collect();
        self.rows.push(cells.join(","));
    }

    /// Row with leading text cells followed by numbers.
    pub fn push_mixed(&mut self, text: &[&str], values: &[f64]) {
        assert_eq!(text.len() + values.len(), self.columns.len(), "row width");
        let mut cells: Vec<String> = text.iter().map(|s| s.to_string()).collect();
        cells.extend(values.iter().map(|&x| cell(x)));
        self.rows.push(cells.join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.render().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Clustering;
    use std::f64::consts::PI;

    fn sample() -> (Grid, FlowState, Physics) {
        let g = Grid::new(8, 10, 2.0 * PI, 3.0, Clustering::Tanh { beta: 2.0 }).unwrap();
        let h = SurfaceState::from_fn(&g, |y| 0.05 * y.sin());
        let v = VectorField::from_fn(&g, |y, z| [y.cos() * z, 0.1 * z.sin() + y]);
        let mut s = FlowState::new(&g, v, h, 1.25, &Scheme::default()).unwrap();
        s.t = 0.3;
        s.step = 12;
        (g, s, Physics { eps: 1e-3, g: 1.0, sigma: 0.1 })
    }

    #[test]
    fn save_load_save_is_identical() {
        let (g, s, p) = sample();
        let a = encode_checkpoint(&g, &s, &p);
        let (hd, back) = decode_checkpoint(&g, &Scheme::default(), &a).unwrap();
        assert_eq!(back, s);
        assert_eq!(hd.eps, 1e-3);
        assert_eq!(encode_checkpoint(&g, &back, &p), a);
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let (g, s, p) = sample();
        let a = encode_checkpoint(&g, &s, &p);
        for at in [0, 5, 9, 40, HEADER_LEN + 3] {
            let mut b = a.clone();
            b[at] ^= 0x10;
            let e = decode_checkpoint(&g, &Scheme::default(), &b).unwrap_err();
            assert!(matches!(e, Error::Checkpoint(_)), "byte {at}: {e}");
        }
        assert!(decode_checkpoint(&g, &Scheme::default(), &a[..a.len() - 8]).is_err());
        let other = Grid::new(8, 12, 2.0 * PI, 3.0, Clustering::Uniform).unwrap();
        assert!(matches!(decode_checkpoint(&other, &Scheme::default(), &a), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn csv_numbers_round_trip() {
        let mut t = Table::new(&["t", "x"]);
        t.push(&[0.1, 1.0 / 3.0]);
        t.push(&[3.0, -0.0]);
        let text = t.render();
        let row = text.lines().nth(1).unwrap();
        let vals: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(vals, vec![0.1, 1.0 / 3.0]);
        assert_eq!(text.lines().nth(2).unwrap(), "3,0");
    }
}
