//! Command-line front end: `run`, `sweep`, `audit` and `check`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::SimulationConfig;
use crate::conormal::{anisotropic_embedding_audit, conormal_norm, random_corpus, trace_audit, History, MultiIndex, NormFamily};
use crate::diagnostics::{
    dn_coercivity, dn_flat_error, dn_symmetry_defect, energy_identity_residual, energy_report, epsilon_sweep,
    extension_ratio_audit, korn_audit, random_spectra, EnergyReport,
};
use crate::elliptic::SolverOptions;
use crate::error::{Error, Result};
use crate::evolution::{advance, cfl_dt, check_compatibility, FlowState, Physics, StepReport};
use crate::grid::{Field, Grid, VectorField};
use crate::io::{load_checkpoint, save_checkpoint, Table};
use crate::operators::{commutator_expansion, commutator_residual, strain_phi, ExpansionMode};
use crate::surface::build_diffeomorphism;

#[derive(Debug, Parser)]
#[command(name = "freesurf", version, about = "Viscous free-surface flow on a flattened strip")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one configuration to `t_final`.
    Run {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Run the viscosity sweep concurrently and tabulate the convergence.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the functional-inequality corpora and write their constants.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Validate the configuration and the compatibility of the initial data.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Common {
    pub fn load(&self) -> Result<SimulationConfig> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(d) = &self.out {
            o.push(format!("output.dir={}", toml::Value::String(d.display().to_string())));
        }
        SimulationConfig::parse_with(&text, &o)
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Run { common, .. } | Command::Sweep { common } | Command::Audit { common } | Command::Check { common } => {
                common
            }
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

/// Writes `status.toml` into `out`.
pub fn write_status(out: &Path, outcome: &Result<()>) -> Result<()> {
    mkdir(out)?;
    let mut t = toml::Table::new();
    match outcome {
        Ok(()) => {
            t.insert("status".into(), "ok".into());
        }
        Err(e) => {
            t.insert("status".into(), "error".into());
            t.insert("class".into(), e.class().into());
            t.insert("message".into(), e.to_string().into());
        }
    }
    write(&out.join("status.toml"), &toml::to_string(&t).expect("status serializes"))
}

/// Parses the command line, executes and records the status; returns the
/// process exit code.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (outcome, out) = match cli.command.common().load() {
        Ok(cfg) => {
            let out = PathBuf::from(&cfg.output.dir);
            (execute(&cli.command, &cfg), out)
        }
        Err(e) => (Err(e), cli.command.common().out.clone().unwrap_or_else(|| PathBuf::from("out"))),
    };
    if let Err(e) = write_status(&out, &outcome) {
        eprintln!("freesurf: cannot write status: {e}");
    }
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("freesurf: [{}] {e}", e.class());
            1
        }
    }
}

pub fn execute(cmd: &Command, cfg: &SimulationConfig) -> Result<()> {
    let out = PathBuf::from(&cfg.output.dir);
    mkdir(&out)?;
    write(&out.join("effective_config.toml"), &cfg.to_toml())?;
    match cmd {
        Command::Run { restart, .. } => run_simulation(cfg, &out, restart.as_deref()).map(|_| ()),
        Command::Sweep { .. } => run_sweep(cfg, &out),
        Command::Audit { .. } => run_audit(cfg, &out),
        Command::Check { .. } => run_check(cfg, &out),
    }
}

const SERIES_COLUMNS: [&str; 18] = [
    "step",
    "t",
    "dt",
    "kinetic",
    "gravitational",
    "capillary",
    "total",
    "dissipation",
    "energy_residual",
    "divergence",
    "kinematic_residual",
    "tangential_stress",
    "velocity_norm",
    "conormal_h2",
    "min_dzphi",
    "pressure_iterations",
    "viscous_iterations",
    "projection_iterations",
];

fn velocity_probe(grid: &Grid, v: &VectorField) -> Result<f64> {
    let mut sq = 0.0;
    for c in 0..2 {
        let r = conormal_norm(grid, &History::single(v.component(c).clone()), NormFamily::Hco { s: 2 })?;
        sq += r.value * r.value;
    }
    Ok(sq.sqrt())
}

fn snapshot_name(step: u64) -> String {
    format!("step_{step:08}.fsck")
}

/// Integrates `cfg` and writes `series.csv`, snapshots and `final.fsck`.
pub fn run_simulation(cfg: &SimulationConfig, out: &Path, restart: Option<&Path>) -> Result<FlowState> {
    let grid = cfg.make_grid()?;
    let physics = cfg.physics();
    let scheme = cfg.scheme();
    let mut state = match restart {
        Some(p) => {
            let (hd, s) = load_checkpoint(p, &grid, &scheme)?;
            let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
            if !(same(hd.eps, physics.eps) && same(hd.g, physics.g) && same(hd.sigma, physics.sigma)) {
                return Err(Error::Checkpoint("physics parameters differ from the configuration".into()));
            }
            s
        }
        None => cfg.initial_state(&grid)?,
    };
    let snaps = out.join("snapshots");
    if cfg.output.snapshot_every > 0 {
        mkdir(&snaps)?;
    }
    let t_end = cfg.scheme.t_final;
    let mut energies: Vec<EnergyReport> = vec![energy_report(&grid, &state, &physics)?];
    let mut reports: Vec<Option<StepReport>> = vec![None];
    let mut rows: Vec<(usize, f64, f64)> = vec![(0, state.d.dzphi.min(), velocity_probe(&grid, &state.v)?)];
    let mut outcome = Ok(());
    while state.t < t_end - 1e-12 * t_end.max(1.0) {
        let mut dt = match cfg.scheme.dt.value() {
            Some(dt) => dt,
            None => cfl_dt(&grid, &state, &physics, &scheme),
        };
        if t_end - state.t < dt * (1.0 + 1e-9) {
            dt = t_end - state.t;
        }
        let (next, report) = match advance(&grid, &state, &physics, &scheme, dt) {
            Ok(r) => r,
            Err(e) => {
                outcome = Err(e);
                break;
            }
        };
        state = next;
        energies.push(energy_report(&grid, &state, &physics)?);
        reports.push(Some(report));
        let final_step = state.t >= t_end - 1e-12 * t_end.max(1.0);
        if state.step % cfg.output.every == 0 || final_step {
            rows.push((energies.len() - 1, report.min_dzphi, velocity_probe(&grid, &state.v)?));
        }
        if cfg.output.snapshot_every > 0 && state.step % cfg.output.snapshot_every == 0 {
            save_checkpoint(&snaps.join(snapshot_name(state.step)), &grid, &state, &physics)?;
        }
    }
    let mut residual = vec![f64::NAN; energies.len()];
    if energies.len() >= 3 {
        energy_identity_residual(&mut energies)?;
        for (i, e) in energies.iter().enumerate().take(energies.len() - 1).skip(1) {
            residual[i] = e.identity_residual;
        }
    }
    let mut table = Table::new(&SERIES_COLUMNS);
    let first_step = state.step + 1 - energies.len() as u64;
    for &(i, min_dz, probe) in &rows {
        let e = &energies[i];
        let r = reports[i];
        let it = |f: fn(&StepReport) -> f64| r.as_ref().map_or(0.0, f);
        table.push(&[
            (first_step + i as u64) as f64,
            e.t,
            it(|r| r.dt),
            e.kinetic,
            e.gravitational,
            e.capillary,
            e.total(),
            e.dissipation_rate,
            residual[i],
            it(|r| r.divergence),
            it(|r| r.kinematic_residual),
            it(|r| r.tangential_stress),
            it(|r| r.velocity_norm),
            probe,
            min_dz,
            it(|r| r.pressure_iterations as f64),
            it(|r| r.viscous_iterations as f64),
            it(|r| r.projection_iterations as f64),
        ]);
    }
    table.write(&out.join("series.csv"))?;
    save_checkpoint(&out.join("final.fsck"), &grid, &state, &physics)?;
    outcome.map(|_| state)
}

fn eps_dir(eps: f64) -> String {
    format!("eps_{eps:e}")
}

/// Common sweep step: the configured value or 0.8 of the initial inviscid CFL step.
pub fn sweep_dt(cfg: &SimulationConfig, grid: &Grid, s0: &FlowState) -> f64 {
    let w = cfg.sweep.clone().unwrap_or_default();
    w.dt.value().unwrap_or_else(|| {
        let inviscid = Physics { eps: 0.0, ..cfg.physics() };
        0.8 * cfl_dt(grid, s0, &inviscid, &cfg.scheme())
    })
}

fn run_sweep(cfg: &SimulationConfig, out: &Path) -> Result<()> {
    let grid = cfg.make_grid()?;
    let w = cfg.sweep.clone().unwrap_or_default();
    let s0 = cfg.initial_state(&grid)?;
    let dt = sweep_dt(cfg, &grid, &s0);
    let res = epsilon_sweep(
        &grid,
        &s0,
        &cfg.physics(),
        &cfg.scheme(),
        &w.eps_list,
        cfg.scheme.t_final,
        dt,
        w.conormal_order,
    )?;
    let mut conv = Table::new(&[
        "eps",
        "l2_difference",
        "h1_difference",
        "l2_ratio",
        "conormal_max",
        "surface_gradient_max",
        "layer_amplitude",
        "layer_amplitude_over_sqrt_eps",
        "min_dzphi",
        "max_h_w2inf",
        "final_time",
        "failed",
    ]);
    let mut prev: Option<f64> = None;
    for (m, fin) in res.members.iter().zip(&res.finals) {
        let dir = out.join(eps_dir(m.eps));
        mkdir(&dir)?;
        let mut t = Table::new(&["t", "l2_difference", "h1_difference", "conormal", "surface_gradient"]);
        for s in &m.samples {
            t.push(&[s.t, s.l2_difference, s.h1_difference, s.conormal, s.surface_gradient]);
        }
        t.write(&dir.join("series.csv"))?;
        let physics = Physics { eps: m.eps, ..cfg.physics() };
        save_checkpoint(&dir.join("final.fsck"), &grid, fin, &physics)?;
        let profile = res.profiles.iter().find(|p| p.eps == m.eps);
        if let Some(p) = profile {
            let mut pt = Table::new(&["zeta", "deviation", "deviation_over_sqrt_eps"]);
            for (z, d) in p.zeta.iter().zip(&p.deviation) {
                pt.push(&[*z, *d, d / p.eps.sqrt()]);
            }
            pt.write(&dir.join("profile.csv"))?;
        }
        let amp = profile.map_or(f64::NAN, |p| p.surface_amplitude());
        let ratio = prev.map_or(f64::NAN, |p| m.l2_difference / p);
        prev = Some(m.l2_difference);
        conv.push(&[
            m.eps,
            m.l2_difference,
            m.h1_difference,
            ratio,
            m.conormal_max,
            m.surface_gradient_max,
            amp,
            if m.eps > 0.0 { amp / m.eps.sqrt() } else { f64::NAN },
            m.min_dzphi,
            m.max_h_w2inf,
            m.final_time,
            if m.failure.is_some() { 1.0 } else { 0.0 },
        ]);
    }
    conv.write(&out.join("convergence.csv"))?;
    if let Some(m) = res.members.iter().find(|m| m.failure.is_some()) {
        return Err(Error::config(
            "sweep.eps_list",
            format!("member eps = {:e} failed: {}", m.eps, m.failure.as_deref().unwrap_or("")),
        ));
    }
    Ok(())
}

/// Constants measured over the random corpora, one row per audit.
pub fn audit_table(cfg: &SimulationConfig) -> Result<Table> {
    let grid = cfg.make_grid()?;
    let scheme = cfg.scheme();
    let seed = cfg.seed;
    let opts = SolverOptions::with_tol(1e-11);
    let mut t = Table::new(&["audit", "parameter", "value", "count"]);
    let spectra = random_spectra(30, 0.1, 6, 1.5, seed);
    let corpus = random_corpus(20, 6, seed.wrapping_add(1));
    let fields: Vec<Field> = corpus.iter().map(|c| c.sample(&grid)).collect();

    let mut maps = vec![];
    for sp in spectra.iter().take(10) {
        let h = sp.sample(&grid);
        maps.push((h.clone(), build_diffeomorphism(&grid, &h, 1.0, scheme.c0, &scheme.cutoff)?));
    }
    let korn_corpus: Vec<(VectorField, _)> = fields
        .chunks(2)
        .zip(maps.iter().cycle())
        .filter(|(c, _)| c.len() == 2)
        .map(|(c, (_, d))| (VectorField::new(c[0].clone(), c[1].clone()), d.clone()))
        .collect();
    t.push_mixed(&["korn", "max"], &[korn_audit(&grid, &korn_corpus)?, korn_corpus.len() as f64]);

    t.push_mixed(&["dn_flat_symbol", "k=1"], &[dn_flat_error(&grid, 1, opts)?, 1.0]);
    let mut coercive = f64::INFINITY;
    let mut symmetry: f64 = 0.0;
    let data = random_spectra(2 * maps.len(), 1.0, 8, 1.0, seed.wrapping_add(2));
    for (i, (h, d)) in maps.iter().enumerate() {
        let f = data[2 * i].sample(&grid);
        let g = data[2 * i + 1].sample(&grid);
        coercive = coercive.min(dn_coercivity(&grid, h, d, f.values(), opts)?);
        symmetry = symmetry.max(dn_symmetry_defect(&grid, d, f.values(), g.values(), opts)?);
    }
    t.push_mixed(&["dn_coercivity", "min"], &[coercive, maps.len() as f64]);
    t.push_mixed(&["dn_symmetry", "max"], &[symmetry, maps.len() as f64]);

    for s in 0..3u32 {
        let r = extension_ratio_audit(&grid, &spectra[..20], &scheme.cutoff, s);
        t.push_mixed(&["extension", &format!("s={s}")], &[r, 20.0]);
    }
    for (s, s1, s2) in [(0.5, 0.0, 1.0), (1.0, 1.0, 1.0)] {
        let r = trace_audit(&grid, &fields, s, s1, s2)?;
        t.push_mixed(&["trace", &format!("s={s};s1={s1};s2={s2}")], &[r, fields.len() as f64]);
    }
    let r = anisotropic_embedding_audit(&grid, &fields, 1.0, 1.0)?;
    t.push_mixed(&["embedding", "s1=1;s2=1"], &[r, fields.len() as f64]);

    for alpha in [[1, 0], [0, 1], [1, 1], [0, 2]] {
        let mut worst: f64 = 0.0;
        for (f, (_, d)) in fields.iter().zip(maps.iter().cycle()) {
            for i in 0..2 {
                let direct = commutator_residual(&grid, &History::single(f.clone()), &[d], MultiIndex::spatial(alpha[0], alpha[1]), i)?;
                let expanded = commutator_expansion(&grid, f, d, alpha, i, ExpansionMode::Discrete)?;
                let scale = direct.max_abs().max(1e-300);
                worst = worst.max((&direct - &expanded).max_abs() / scale);
            }
        }
        t.push_mixed(&["commutator", &format!("alpha={}{}", alpha[0], alpha[1])], &[worst, fields.len() as f64]);
    }
    Ok(t)
}

fn run_audit(cfg: &SimulationConfig, out: &Path) -> Result<()> {
    audit_table(cfg)?.write(&out.join("audit.csv"))
}

fn run_check(cfg: &SimulationConfig, out: &Path) -> Result<()> {
    let grid = cfg.make_grid()?;
    let s0 = cfg.initial_state(&grid)?;
    let c = check_compatibility(&grid, &s0.v, &s0.d);
    let dt = cfl_dt(&grid, &s0, &cfg.physics(), &cfg.scheme());
    let mut t = Table::new(&["quantity", "value"]);
    t.push_mixed(&["compatibility_sup"], &[c.sup]);
    t.push_mixed(&["compatibility_rms"], &[c.rms]);
    t.push_mixed(&["min_dzphi"], &[s0.d.dzphi.min()]);
    t.push_mixed(&["slope"], &[s0.d.a]);
    t.push_mixed(&["cfl_dt"], &[dt]);
    // Discrete data of a compatible profile leave a truncation-size trace,
    // so the bound is relative to the largest strain.
    let scale = strain_phi(&grid, &s0.v, &s0.d)?.frobenius_sq().max_abs().sqrt();
    t.push_mixed(&["strain_scale"], &[scale]);
    t.write(&out.join("check.csv"))?;
    if c.sup > 1e-2 * scale + 1e-12 && cfg.physics.eps > 0.0 {
        return Err(Error::config("initial", format!("tangential stress {:e} violates compatibility", c.sup)));
    }
    Ok(())
}
