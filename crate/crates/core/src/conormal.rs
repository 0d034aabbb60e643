//! Co-normal vector fields `Z_1 = d_y`, `Z_3 = z/(1-z) d_z`, the associated
//! norm families and the trace / anisotropic embedding audits.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::surface::boundary_hs_norm;

/// `(k; alpha_y, alpha_z)` for `d_t^k Z_1^{alpha_y} Z_3^{alpha_z}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub k: usize,
    pub alpha: [usize; 2],
}

impl MultiIndex {
    pub fn new(k: usize, alpha_y: usize, alpha_z: usize) -> Self {
        MultiIndex {
            k,
            alpha: [alpha_y, alpha_z],
        }
    }

    pub fn spatial(alpha_y: usize, alpha_z: usize) -> Self {
        Self::new(0, alpha_y, alpha_z)
    }

    pub fn order(&self) -> usize {
        self.k + self.alpha[0] + self.alpha[1]
    }
}

/// Every multi-index with total order `<= m`; time orders only if `with_time`.
pub fn multi_indices(m: usize, with_time: bool) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let kmax = if with_time { m } else { 0 };
    for k in 0..=kmax {
        for ay in 0..=m - k {
            for az in 0..=m - k - ay {
                out.push(MultiIndex::new(k, ay, az));
            }
        }
    }
    out
}

/// The `floor(m/2)` order used for the `L^inf`-type companion norms.
pub fn half_order(m: usize) -> usize {
    m / 2
}

/// Equispaced time levels of one field, newest last.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    dt: f64,
    capacity: usize,
    levels: VecDeque<Field>,
}

impl History {
    pub fn new(dt: f64, capacity: usize) -> Self {
        History {
            dt,
            capacity: capacity.max(1),
            levels: VecDeque::new(),
        }
    }

    pub fn single(f: Field) -> Self {
        let mut h = History::new(1.0, 1);
        h.push(f);
        h
    }

    pub fn push(&mut self, f: Field) {
        if self.levels.len() == self.capacity {
            self.levels.pop_front();
        }
        self.levels.push_back(f);
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn latest(&self) -> Option<&Field> {
        self.levels.back()
    }

    /// Level `back` steps before the newest.
    pub fn level(&self, back: usize) -> Option<&Field> {
        let n = self.levels.len();
        (back < n).then(|| &self.levels[n - 1 - back])
    }

    /// `k`-th backward difference divided by `dt^k`.
    pub fn time_derivative(&self, k: usize) -> Result<Field> {
        if self.levels.len() < k + 1 {
            return Err(Error::HistoryDepth {
                needed: k + 1,
                available: self.levels.len(),
            });
        }
        let mut out = self.level(0).expect("nonempty").clone();
        if k == 0 {
            return Ok(out);
        }
        out = out.scale(0.0);
        let mut binom = 1.0;
        for i in 0..=k {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            out.axpy(sign * binom, self.level(i).expect("depth checked"));
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
        Ok(out.scale(self.dt.powi(-(k as i32))))
    }
}

/// `z / (1 - z)` on each vertical node.
pub fn z3_weight(grid: &Grid) -> Vec<f64> {
    grid.z_nodes().iter().map(|&z| z / (1.0 - z)).collect()
}

pub fn apply_z3(grid: &Grid, f: &Field) -> Field {
    let w = z3_weight(grid);
    let mut d = grid.dz_unchecked(f);
    for (k, wk) in w.iter().enumerate() {
        for v in d.row_mut(k) {
            *v *= wk;
        }
    }
    d
}

/// `Z_1^{alpha_y} Z_3^{alpha_z} f`.
pub fn apply_spatial(grid: &Grid, f: &Field, alpha: [usize; 2]) -> Field {
    let mut g = f.clone();
    for _ in 0..alpha[1] {
        g = apply_z3(grid, &g);
    }
    for _ in 0..alpha[0] {
        g = grid.dy_unchecked(&g);
    }
    g
}

pub fn apply_conormal(grid: &Grid, history: &History, idx: MultiIndex) -> Result<Field> {
    let f = history.time_derivative(idx.k)?;
    Ok(apply_spatial(grid, &f, idx.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NormFamily {
    /// `(sum_{|alpha| <= s} ||Z^alpha f||^2)^{1/2}`.
    Hco { s: usize },
    /// `sum_{|alpha| <= s} |Z^alpha f|_inf`.
    WcoInf { s: usize },
    /// `(sum_{k + |alpha| <= m} ||d_t^k Z^alpha f||^2_{H^s_tan})^{1/2}`.
    Xms { m: usize, s: f64 },
    /// `sum_{k + |alpha| <= m} ||d_t^k Z^alpha f||_{W_co^{s,inf}}`.
    Yms { m: usize, s: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub family: NormFamily,
    pub m: usize,
    pub s: f64,
    pub value: f64,
}

/// `||f||_{L^2(S)}` with the flat measure `dy dz`.
pub fn l2_norm(grid: &Grid, f: &Field) -> f64 {
    grid.integrate(&(f * f)).max(0.0).sqrt()
}

/// `(int (1 + xi^2)^s |f_hat(xi, z)|^2 dxi dz)^{1/2}`.
pub fn tangential_norm(grid: &Grid, f: &Field, s: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.n_z() {
        let b = boundary_hs_norm(grid, f.row(k), s);
        total += grid.quadrature_weights_z()[k] * b * b;
    }
    total.sqrt()
}

fn wco_inf(grid: &Grid, f: &Field, s: usize) -> f64 {
    multi_indices(s, false)
        .into_iter()
        .map(|i| apply_spatial(grid, f, i.alpha).max_abs())
        .sum()
}

pub fn conormal_norm(grid: &Grid, history: &History, family: NormFamily) -> Result<NormReport> {
    let latest = history.latest().ok_or(Error::HistoryDepth {
        needed: 1,
        available: 0,
    })?;
    let (m, s, value) = match family {
        NormFamily::Hco { s } => {
            let sum: f64 = multi_indices(s, false)
                .into_iter()
                .map(|i| l2_norm(grid, &apply_spatial(grid, latest, i.alpha)).powi(2))
                .sum();
            (s, s as f64, sum.sqrt())
        }
        NormFamily::WcoInf { s } => (s, s as f64, wco_inf(grid, latest, s)),
        NormFamily::Xms { m, s } => {
            let mut sum = 0.0;
            for i in multi_indices(m, true) {
                let g = apply_conormal(grid, history, i)?;
                sum += tangential_norm(grid, &g, s).powi(2);
            }
            (m, s, sum.sqrt())
        }
        NormFamily::Yms { m, s } => {
            let mut sum = 0.0;
            for i in multi_indices(m, true) {
                let g = apply_conormal(grid, history, i)?;
                sum += wco_inf(grid, &g, s);
            }
            (m, s as f64, sum)
        }
    };
    Ok(NormReport {
        family,
        m,
        s,
        value,
    })
}

/// Restriction to `z = 0`.
pub fn trace_to_boundary(f: &Field) -> Vec<f64> {
    f.top_row().to_vec()
}

/// `|f(., 0)|_{H^s} / (||d_z f||_{H^{s2}_tan} ||f||_{H^{s1}_tan})^{1/2}`.
pub fn trace_ratio(grid: &Grid, f: &Field, s: f64, s1: f64, s2: f64) -> f64 {
    let top = boundary_hs_norm(grid, f.top_row(), s);
    let dz = grid.dz_unchecked(f);
    let denom = (tangential_norm(grid, &dz, s2) * tangential_norm(grid, f, s1)).sqrt();
    if denom == 0.0 {
        if top == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        top / denom
    }
}

/// Largest trace ratio over the corpus; requires `s1 + s2 = 2 s`.
pub fn trace_audit(grid: &Grid, corpus: &[Field], s: f64, s1: f64, s2: f64) -> Result<f64> {
    if ((s1 + s2) - 2.0 * s).abs() > 1e-12 {
        return Err(Error::config("audit.trace", "indices must satisfy s1 + s2 = 2 s"));
    }
    Ok(corpus
        .iter()
        .map(|f| trace_ratio(grid, f, s, s1, s2))
        .fold(0.0, f64::max))
}

/// `|f|_inf^2 / (||d_z f||_{H^{s2}_tan} ||f||_{H^{s1}_tan})`.
pub fn embedding_ratio(grid: &Grid, f: &Field, s1: f64, s2: f64) -> f64 {
    let sup = f.max_abs();
    let dz = grid.dz_unchecked(f);
    let denom = tangential_norm(grid, &dz, s2) * tangential_norm(grid, f, s1);
    if denom == 0.0 {
        if sup == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        sup * sup / denom
    }
}

/// Largest embedding ratio over the corpus; the zero field is skipped.
pub fn anisotropic_embedding_audit(grid: &Grid, corpus: &[Field], s1: f64, s2: f64) -> Result<f64> {
    if s1 + s2 <= 1.0 {
        return Err(Error::config("audit.embedding", "need s1 + s2 > 1 in one horizontal dimension"));
    }
    Ok(corpus
        .iter()
        .filter(|f| f.max_abs() > 0.0)
        .map(|f| embedding_ratio(grid, f, s1, s2))
        .fold(0.0, f64::max))
}

/// Parameters of one smooth corpus member, independent of resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMember {
    pub modes: Vec<(f64, f64, f64)>,
    pub decay: f64,
}

impl CorpusMember {
    /// `sum_m a_m cos(m y + theta_m) exp(lambda z) (1 - (z/H)^2)`, which vanishes at `z = -H`.
    pub fn sample(&self, grid: &Grid) -> Field {
        let depth = grid.depth();
        Field::from_fn(grid, |y, z| {
            let profile = (self.decay * z).exp() * (1.0 - (z / depth).powi(2));
            self.modes
                .iter()
                .map(|&(m, a, th)| a * (m * y + th).cos())
                .sum::<f64>()
                * profile
        })
    }
}

pub fn random_corpus(count: usize, max_mode: usize, seed: u64) -> Vec<CorpusMember> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let modes = (0..=max_mode)
                .map(|m| {
                    let a = rng.gen_range(-1.0..1.0) / (1.0 + m as f64).powi(2);
                    (m as f64, a, rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            CorpusMember {
                modes,
                decay: rng.gen_range(0.5..3.0),
            }
        })
        .collect()
}
