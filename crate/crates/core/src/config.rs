//! Run configuration: a TOML document with sectioned keys, dotted overrides
//! and the initial-condition presets.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::cutoff::CutoffSpec;
use crate::elliptic::{BottomCondition, Preconditioner, SolverOptions};
use crate::error::{Error, Result};
use crate::evolution::{FlowState, Physics, Scheme};
use crate::grid::{Clustering, Grid, VectorField};
use crate::surface::{auto_slope, SurfaceState};

/// Literal `"auto"` marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

/// A value or the keyword `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Value(T),
    Auto(Auto),
}

impl<T: Copy> AutoOr<T> {
    pub fn auto() -> Self {
        AutoOr::Auto(Auto::Auto)
    }

    pub fn value(&self) -> Option<T> {
        match self {
            AutoOr::Value(v) => Some(*v),
            AutoOr::Auto(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_y: usize,
    pub n_z: usize,
    pub length_y: f64,
    /// `auto` resolves to four periods of the box.
    pub depth: AutoOr<f64>,
    pub clustering: Clustering,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_y: 32,
            n_z: 48,
            length_y: TAU,
            depth: AutoOr::auto(),
            clustering: Clustering::Tanh { beta: 2.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub eps: f64,
    pub g: f64,
    pub sigma: f64,
    /// Slope `A` of `phi = A z + eta`.
    pub slope: AutoOr<f64>,
    pub c0: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            eps: 0.0,
            g: 1.0,
            sigma: 1.0,
            slope: AutoOr::auto(),
            c0: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Fixed step, or `auto` for the CFL step each step.
    pub dt: AutoOr<f64>,
    pub cfl: f64,
    pub t_final: f64,
    pub solver_tol: f64,
    pub projection_tol: f64,
    /// Iteration budget per solve; `auto` is `10 sqrt(n_y n_z)`.
    pub budget: AutoOr<usize>,
    pub preconditioner: Preconditioner,
    pub pressure_bottom: BottomCondition,
    pub cutoff: CutoffSpec,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        let s = Scheme::default();
        SchemeConfig {
            dt: AutoOr::auto(),
            cfl: s.cfl,
            t_final: 1.0,
            solver_tol: s.solver.tol,
            projection_tol: s.projection_tol,
            budget: AutoOr::auto(),
            preconditioner: s.solver.preconditioner,
            pressure_bottom: s.pressure_bottom,
            cutoff: s.cutoff,
        }
    }
}

/// Initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    /// Flat surface at rest.
    Equilibrium,
    /// `h = a cos(k y)` released from rest, `k` counted in box periods.
    StandingWave {
        #[serde(default = "default_amplitude")]
        a: f64,
        #[serde(default = "default_mode")]
        k: usize,
    },
    /// Flat surface, `v_y = U (1 + cos(pi z / H)) / 2`.
    ShearedLayer {
        #[serde(default = "default_shear")]
        u: f64,
    },
}

fn default_amplitude() -> f64 {
    1e-2
}

fn default_mode() -> usize {
    1
}

fn default_shear() -> f64 {
    0.1
}

impl Default for Initial {
    fn default() -> Self {
        Initial::StandingWave {
            a: default_amplitude(),
            k: default_mode(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    /// Series row every this many steps.
    pub every: u64,
    /// Snapshot every this many steps; 0 writes only the final state.
    pub snapshot_every: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            every: 1,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Strictly decreasing, ending with 0.
    pub eps_list: Vec<f64>,
    /// Common fixed step; `auto` is 0.8 times the initial inviscid CFL step.
    pub dt: AutoOr<f64>,
    /// Co-normal order of the probe norm.
    pub conormal_order: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps_list: vec![1e-2, 1e-3, 1e-4, 0.0],
            dt: AutoOr::auto(),
            conormal_order: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub scheme: SchemeConfig,
    pub initial: Initial,
    pub output: OutputConfig,
    pub sweep: Option<SweepConfig>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 0,
            grid: GridConfig::default(),
            physics: PhysicsConfig::default(),
            scheme: SchemeConfig::default(),
            initial: Initial::default(),
            output: OutputConfig::default(),
            sweep: None,
        }
    }
}

/// Key of the TOML line containing byte `pos`.
fn key_at(text: &str, pos: usize) -> Option<String> {
    let start = text[..pos.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    (!key.is_empty() && !key.starts_with('[')).then(|| key.to_string())
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .split_once("unknown field `")
        .and_then(|(_, r)| r.split_once('`'))
        .map(|(k, _)| k.to_string())
        .or_else(|| e.span().and_then(|s| key_at(text, s.start)))
        .unwrap_or_else(|| "document".into());
    Error::config(key, msg)
}

fn positive(key: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive, got {x}")))
    }
}

fn nonnegative(key: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be nonnegative, got {x}")))
    }
}

impl SimulationConfig {
    /// Parses, resolves `auto` depth and validates.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// As [`parse`](Self::parse) with `a.b=value` overrides applied first.
    pub fn parse_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e| toml_error(text, e))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let merged = toml::to_string(&doc).map_err(|e| Error::config("document", e.to_string()))?;
        let mut c: SimulationConfig = toml::from_str(&merged).map_err(|e| toml_error(&merged, e))?;
        if c.grid.depth.value().is_none() {
            c.grid.depth = AutoOr::Value(4.0 * c.grid.length_y);
        }
        c.validate()?;
        Ok(c)
    }

    /// Effective configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        nonnegative("eps", p.eps)?;
        nonnegative("g", p.g)?;
        nonnegative("sigma", p.sigma)?;
        positive("c0", p.c0)?;
        if let Some(a) = p.slope.value() {
            positive("slope", a)?;
        }
        let s = &self.scheme;
        positive("t_final", s.t_final)?;
        positive("cfl", s.cfl)?;
        positive("solver_tol", s.solver_tol)?;
        positive("projection_tol", s.projection_tol)?;
        if let Some(dt) = s.dt.value() {
            positive("scheme.dt", dt)?;
        }
        if s.budget.value() == Some(0) {
            return Err(Error::config("budget", "must be at least 1"));
        }
        s.cutoff.validate()?;
        positive("length_y", self.grid.length_y)?;
        if let Some(h) = self.grid.depth.value() {
            positive("depth", h)?;
        }
        if let Clustering::Tanh { beta } = self.grid.clustering {
            positive("beta", beta)?;
        }
        match self.initial {
            Initial::Equilibrium => {}
            Initial::StandingWave { a, k } => {
                if !a.is_finite() {
                    return Err(Error::config("a", "must be finite"));
                }
                if k == 0 || 2 * k >= self.grid.n_y {
                    return Err(Error::config("k", format!("must lie in 1..{}", self.grid.n_y / 2)));
                }
            }
            Initial::ShearedLayer { u } => {
                if !u.is_finite() {
                    return Err(Error::config("u", "must be finite"));
                }
            }
        }
        if self.output.every == 0 {
            return Err(Error::config("every", "must be at least 1"));
        }
        if let Some(w) = &self.sweep {
            let l = &w.eps_list;
            if l.len() < 3 || l.windows(2).any(|p| !(p[0] > p[1])) || l.last() != Some(&0.0) {
                return Err(Error::config("eps_list", "needs three or more strictly decreasing entries ending with 0"));
            }
            for &e in l {
                nonnegative("eps_list", e)?;
            }
            if let Some(dt) = w.dt.value() {
                positive("sweep.dt", dt)?;
            }
        }
        Grid::new(self.grid.n_y, self.grid.n_z, self.grid.length_y, self.depth(), self.grid.clustering)?;
        Ok(())
    }

    pub fn depth(&self) -> f64 {
        self.grid.depth.value().unwrap_or(4.0 * self.grid.length_y)
    }

    pub fn make_grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Grid::new(g.n_y, g.n_z, g.length_y, self.depth(), g.clustering)
    }

    pub fn physics(&self) -> Physics {
        Physics {
            eps: self.physics.eps,
            g: self.physics.g,
            sigma: self.physics.sigma,
        }
    }

    pub fn scheme(&self) -> Scheme {
        let s = &self.scheme;
        Scheme {
            cfl: s.cfl,
            solver: SolverOptions {
                tol: s.solver_tol,
                budget: s.budget.value(),
                preconditioner: s.preconditioner,
            },
            projection_tol: s.projection_tol,
            pressure_bottom: s.pressure_bottom,
            c0: self.physics.c0,
            cutoff: s.cutoff,
        }
    }

    /// Initial surface and velocity of the preset.
    pub fn initial_data(&self, grid: &Grid) -> (SurfaceState, VectorField) {
        match self.initial {
            Initial::Equilibrium => (SurfaceState::flat(grid), VectorField::zeros(grid)),
            Initial::StandingWave { a, k } => {
                let xi = k as f64 * TAU / grid.length_y();
                (SurfaceState::from_fn(grid, |y| a * (xi * y).cos()), VectorField::zeros(grid))
            }
            Initial::ShearedLayer { u } => {
                let h = grid.depth();
                let v = VectorField::from_fn(grid, |_, z| [0.5 * u * (1.0 + (PI * z / h).cos()), 0.0]);
                (SurfaceState::flat(grid), v)
            }
        }
    }

    pub fn initial_state(&self, grid: &Grid) -> Result<FlowState> {
        let (h, v) = self.initial_data(grid);
        let scheme = self.scheme();
        let a = match self.physics.slope.value() {
            Some(a) => a,
            None => auto_slope(grid, &h, &scheme.cutoff),
        };
        FlowState::new(grid, v, h, a, &scheme)
    }
}

/// Sets `path = value` in `doc`; `value` is read as a TOML value and falls
/// back to a bare string.
pub fn apply_override(doc: &mut toml::Table, text: &str) -> Result<()> {
    let (path, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must have the form key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(path, "empty key segment"));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn minimal_document_echoes_defaults() {
        let c = SimulationConfig::parse("[initial]\npreset = \"equilibrium\"\n").unwrap();
        assert_eq!(c.initial, Initial::Equilibrium);
        assert_eq!(c.grid.depth, AutoOr::Value(4.0 * TAU));
        let text = c.to_toml();
        for key in ["n_y", "n_z", "eps", "sigma", "slope = \"auto\"", "t_final", "solver_tol", "depth"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
    }

    #[test]
    fn preset_parameters_default() {
        let c = SimulationConfig::parse("[initial]\npreset = \"standing_wave\"\n").unwrap();
        assert_eq!(c.initial, Initial::default());
        assert!(c.to_toml().contains("k = 1"));
    }

    #[test]
    fn negative_eps_names_the_key() {
        let e = SimulationConfig::parse("[physics]\neps = -1.0\n").unwrap_err();
        assert_eq!(key_of(e), "eps");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        assert_eq!(key_of(SimulationConfig::parse("[physics]\nepsilon = 1.0\n").unwrap_err()), "epsilon");
        assert_eq!(key_of(SimulationConfig::parse("[grid]\nn_y = \"many\"\n").unwrap_err()), "n_y");
        assert!(SimulationConfig::parse("[initial]\npreset = \"standing_wave\"\na = 0.1\nk = 1\nz = 2\n").is_err());
    }

    #[test]
    fn sweep_document_round_trips() {
        let text = "seed = 7\n[grid]\nn_y = 16\nn_z = 24\nclustering = { kind = \"uniform\" }\n\
                    [physics]\neps = 0.01\nslope = 1.5\n[scheme]\ndt = 0.01\nt_final = 2.0\n\
                    [initial]\npreset = \"standing_wave\"\na = 0.02\nk = 2\n\
                    [sweep]\neps_list = [0.01, 0.001, 0.0001, 0.0]\n";
        let c = SimulationConfig::parse(text).unwrap();
        assert_eq!(c.sweep.as_ref().unwrap().eps_list.len(), 4);
        let again = SimulationConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_toml(), c.to_toml());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let o = vec!["physics.eps=0.5".to_string(), "output.dir=runs/a".to_string(), "scheme.budget=40".to_string()];
        let c = SimulationConfig::parse_with("", &o).unwrap();
        assert_eq!(c.physics.eps, 0.5);
        assert_eq!(c.output.dir, "runs/a");
        assert_eq!(c.scheme.budget, AutoOr::Value(40));
        assert!(SimulationConfig::parse_with("", &["physics.eps".to_string()]).is_err());
    }

    #[test]
    fn bad_sweep_list_is_rejected() {
        let e = SimulationConfig::parse("[sweep]\neps_list = [0.01, 0.0]\n").unwrap_err();
        assert_eq!(key_of(e), "eps_list");
    }

    #[test]
    fn presets_build_states() {
        for preset in ["preset = \"equilibrium\"", "preset = \"standing_wave\"\na = 0.01\nk = 1", "preset = \"sheared_layer\"\nu = 0.1"] {
            let c = SimulationConfig::parse(&format!("[grid]\nn_y = 16\nn_z = 16\n[initial]\n{preset}\n")).unwrap();
            let g = c.make_grid().unwrap();
            let s = c.initial_state(&g).unwrap();
            assert!(s.v.is_finite());
        }
        let c = SimulationConfig::parse("[grid]\nn_y = 16\nn_z = 16\n[initial]\npreset = \"sheared_layer\"\nu = 1.0\n").unwrap();
        let g = c.make_grid().unwrap();
        let (_, v) = c.initial_data(&g);
        assert!((v.y.get(0, g.top()) - 1.0).abs() < 1e-14);
        assert!(v.y.get(0, 0).abs() < 1e-14);
    }
}
