//! Experiment drivers: convergence sweeps on the manufactured solution, the
//! Gaussian-peak relaxation, the Crank–Nicolson failure demonstration and a
//! single configurable run.
//!
//! Configuration is flat `key = value` text; keys match the field names of
//! [`ExperimentSpec`]. Lists are comma separated. Grid sizes given as `NxM`
//! count lattice intervals, so `64x64` is 32×32 elements.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::assembly::{l2_norm_error, DofVector, ErrorMode};
use crate::error::{Error, Result};
use crate::field::{Anisotropy, MagneticField, Point};
use crate::grid::{lattice_count, Grid};
use crate::mms::{gaussian_initial, ManufacturedSolution, MmsParams};
use crate::schemes::{run, NoSources, RunDiagnostics, RunOptions, SchemeConfig, SchemeKind, Sources, StepRecord, TimeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ConvergeSpace,
    ConvergeTime,
    Gaussian,
    CnFailure,
    Solve,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::ConvergeSpace => "converge-space",
            Self::ConvergeTime => "converge-time",
            Self::Gaussian => "gaussian",
            Self::CnFailure => "cn-failure",
            Self::Solve => "solve",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").to_ascii_lowercase().as_str() {
            "converge-space" => Ok(Self::ConvergeSpace),
            "converge-time" => Ok(Self::ConvergeTime),
            "gaussian" => Ok(Self::Gaussian),
            "cn-failure" => Ok(Self::CnFailure),
            "solve" => Ok(Self::Solve),
            other => Err(Error::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

/// Initial data for [`Experiment::Solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// Manufactured solution at `t = 0`, with its forcing.
    Manufactured,
    /// Gaussian peak of height `tm`, no forcing.
    Gaussian,
    /// Constant value, no forcing.
    Constant(f64),
}

impl FromStr for InitialData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "mms" | "manufactured" => Ok(Self::Manufactured),
            "gaussian" => Ok(Self::Gaussian),
            _ => {
                let value = s
                    .strip_prefix("constant:")
                    .ok_or_else(|| Error::Config(format!("unknown initial data '{s}'")))?;
                Ok(Self::Constant(parse_real("initial", value)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub scheme: Vec<SchemeKind>,
    pub eps: Vec<f64>,
    /// Lattice spacings; used when `grid` is unset.
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    pub tm: f64,
    pub t_end: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Lattice intervals `(Nx, Ny)`; overrides `h`.
    pub grid: Option<(usize, usize)>,
    pub boundary_sources: bool,
    pub initial: InitialData,
    /// Times at which the Gaussian run dumps the field.
    pub snapshots: Vec<f64>,
    /// Step budget per run of the Crank–Nicolson experiment.
    pub steps: usize,
    /// When set, temporal sweeps also report the error against a run with
    /// this step on the same grid.
    pub reference_tau: Option<f64>,
    /// Largest admissible node count per grid.
    pub max_nodes: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Defaults reproducing the reference setup of each experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            scheme: vec![SchemeKind::EAp],
            eps: vec![1.0],
            h: vec![0.1],
            tau: vec![0.01],
            tm: 1.0,
            t_end: 0.1,
            alpha: 1.0,
            gamma: 1.0,
            grid: None,
            boundary_sources: true,
            initial: InitialData::Manufactured,
            snapshots: Vec::new(),
            steps: 100,
            reference_tau: None,
            max_nodes: 200_000,
            out: None,
        };
        match experiment {
            Experiment::ConvergeSpace => Self {
                scheme: vec![SchemeKind::P, SchemeKind::EAp, SchemeKind::RkAp],
                eps: vec![1.0, 1e-10],
                h: vec![0.1, 0.05, 0.025],
                tau: vec![1e-6],
                t_end: 1e-4,
                ..base
            },
            Experiment::ConvergeTime => Self {
                scheme: vec![SchemeKind::P, SchemeKind::EAp, SchemeKind::RkAp],
                eps: vec![1.0, 1e-10],
                tau: vec![0.1, 0.05, 0.025, 0.0125],
                grid: Some((64, 64)),
                ..base
            },
            Experiment::Gaussian => Self {
                scheme: vec![SchemeKind::EAp, SchemeKind::RkAp],
                tau: vec![0.01],
                tm: 1e5,
                t_end: 15.0,
                grid: Some((50, 50)),
                initial: InitialData::Gaussian,
                snapshots: vec![0.0, 0.01, 4.5, 4.75, 5.0, 6.0],
                ..base
            },
            Experiment::CnFailure => Self {
                scheme: vec![SchemeKind::CnAp, SchemeKind::EAp],
                tau: vec![0.1, 1e-16],
                tm: 1e5,
                grid: Some((50, 50)),
                initial: InitialData::Gaussian,
                ..base
            },
            Experiment::Solve => base,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "experiment" => self.experiment = value.parse()?,
            "scheme" => self.scheme = parse_list(value, |s| s.parse())?,
            "eps" => self.eps = parse_list(value, |s| parse_real("eps", s))?,
            "h" => self.h = parse_list(value, |s| parse_real("h", s))?,
            "tau" => self.tau = parse_list(value, |s| parse_real("tau", s))?,
            "snapshots" => self.snapshots = parse_list(value, |s| parse_real("snapshots", s))?,
            "tm" => self.tm = parse_real(key, value)?,
            "t_end" => self.t_end = parse_real(key, value)?,
            "alpha" => self.alpha = parse_real(key, value)?,
            "gamma" => self.gamma = parse_real(key, value)?,
            "grid" => self.grid = Some(parse_grid(value)?),
            "boundary_sources" => self.boundary_sources = parse_bool(key, value)?,
            "initial" => self.initial = value.parse()?,
            "steps" => self.steps = parse_count(key, value)?,
            "reference_tau" => self.reference_tau = Some(parse_real(key, value)?),
            "max_nodes" => self.max_nodes = parse_count(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every setting in `text`. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Reads a config file. Its `experiment` key, if present, selects the
    /// defaults the other keys are applied to.
    pub fn from_config(text: &str, experiment: Option<Experiment>) -> Result<Self> {
        let declared = text
            .lines()
            .filter_map(|l| l.split('#').next()?.split_once('='))
            .find(|(k, _)| k.trim() == "experiment")
            .map(|(_, v)| v.parse::<Experiment>())
            .transpose()?;
        let experiment = experiment.or(declared).ok_or_else(|| {
            Error::Config("no experiment given in the config or on the command line".into())
        })?;
        let mut spec = Self::defaults(experiment);
        spec.apply_config(text)?;
        spec.experiment = experiment;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("scheme", self.scheme.is_empty()),
            ("eps", self.eps.is_empty()),
            ("tau", self.tau.is_empty()),
            ("h", self.grid.is_none() && self.h.is_empty()),
        ];
        if let Some((key, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            return Err(Error::Config(format!("'{key}' must not be empty")));
        }
        if self.eps.iter().chain(&self.tau).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("eps and tau entries must be positive".into()));
        }
        if !(self.tm > 0.0) || !(self.t_end >= 0.0) {
            return Err(Error::Config("tm must be positive and t_end nonnegative".into()));
        }
        for (lx, ly) in self.lattices()? {
            if lx < 2 || ly < 2 || lx % 2 == 1 || ly % 2 == 1 {
                return Err(Error::Config(format!(
                    "{lx}x{ly} grid: lattice interval counts must be even and at least 2"
                )));
            }
            let nodes = (lx + 1) * (ly + 1);
            if nodes > self.max_nodes {
                return Err(Error::Config(format!(
                    "{lx}x{ly} grid has {nodes} nodes, above the budget of {}",
                    self.max_nodes
                )));
            }
        }
        Ok(())
    }

    /// Lattice sizes swept by this spec.
    fn lattices(&self) -> Result<Vec<(usize, usize)>> {
        match self.grid {
            Some(g) => Ok(vec![g]),
            None => self
                .h
                .iter()
                .map(|&h| lattice_count(h).map(|n| (n, n)))
                .collect(),
        }
    }

    fn field(&self) -> MagneticField {
        MagneticField::new(self.alpha)
    }

    fn mms(&self, eps: f64) -> Result<ManufacturedSolution> {
        Ok(ManufacturedSolution::new(MmsParams {
            alpha: self.alpha,
            tm: self.tm,
            eps,
            gamma: self.gamma,
            ..Default::default()
        })?
        .with_boundary_sources(self.boundary_sources))
    }

    fn scheme_config(&self, kind: SchemeKind, eps: f64, tau: f64) -> SchemeConfig {
        SchemeConfig::new(kind, eps, tau).with_gamma(self.gamma)
    }
}

fn parse_real(key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{key}': '{s}' is not a number")))
}

fn parse_count(key: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{key}': '{s}' is not a count")))
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("'{key}': '{s}' is not a boolean"))),
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(item)
        .collect()
}

/// Parses `NxM` lattice sizes.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .trim()
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("grid '{s}' is not of the form NxM")))?;
    Ok((parse_count("grid", a)?, parse_count("grid", b)?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("OK"),
            Status::Failed(_) => f.write_str("FAILED"),
        }
    }
}

/// One cell of a convergence table, tagged with its full parameter tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub experiment: Experiment,
    pub scheme: SchemeKind,
    pub eps: f64,
    /// Lattice spacing.
    pub h: f64,
    pub tau: f64,
    pub t_end: f64,
    pub abs_l2: Option<f64>,
    pub rel_l2: Option<f64>,
    /// Order against the previous row of the same `(scheme, eps)` series.
    pub observed_order: Option<f64>,
    /// Error against the reference-step run, when one was requested.
    pub temporal_l2: Option<f64>,
    pub temporal_order: Option<f64>,
    pub status: Status,
}

pub const TABLE_HEADER: &str =
    "experiment,scheme,eps,h,tau,t_end,abs_l2,rel_l2,observed_order,status";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

impl TableRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{},{},{},{}",
            self.experiment,
            self.scheme,
            self.eps,
            self.h,
            self.tau,
            self.t_end,
            opt(self.abs_l2),
            opt(self.rel_l2),
            self.observed_order.map(|o| format!("{o:.4}")).unwrap_or_default(),
            self.status
        )
    }
}

pub fn write_table(rows: &[TableRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{TABLE_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv())?;
    }
    Ok(())
}

/// Temporal errors against the reference run, for sweeps that requested one.
pub fn write_temporal_table(rows: &[TableRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "experiment,scheme,eps,h,tau,t_end,temporal_l2,temporal_order,status")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{},{},{}",
            r.experiment,
            r.scheme,
            r.eps,
            r.h,
            r.tau,
            r.t_end,
            opt(r.temporal_l2),
            r.temporal_order.map(|o| format!("{o:.4}")).unwrap_or_default(),
            r.status
        )?;
    }
    Ok(())
}

/// Order `ln(e_prev / e) / ln(s_prev / s)` between consecutive rows of the
/// same `(scheme, eps)` series, with `s` the swept parameter.
fn fill_orders(rows: &mut [TableRow], param: impl Fn(&TableRow) -> f64) {
    for i in 1..rows.len() {
        let (prev, cur) = (&rows[i - 1], &rows[i]);
        if prev.scheme != cur.scheme || prev.eps != cur.eps {
            continue;
        }
        let ratio = (param(prev) / param(cur)).ln();
        let order = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / ratio),
            _ => None,
        };
        let observed = order(prev.abs_l2, cur.abs_l2);
        let temporal = order(prev.temporal_l2, cur.temporal_l2);
        rows[i].observed_order = observed;
        rows[i].temporal_order = temporal;
    }
}

/// Result of one manufactured-solution run.
struct MmsOutcome {
    abs: f64,
    rel: f64,
    u: DofVector,
}

fn run_mms(spec: &ExperimentSpec, grid: &Grid, kind: SchemeKind, eps: f64, tau: f64) -> Result<MmsOutcome> {
    let sol = spec.mms(eps)?;
    let u0 = grid.interpolate(|x| sol.exact_u(0.0, x));
    let d = run(
        u0,
        spec.scheme_config(kind, eps, tau),
        grid,
        &sol.field,
        &sol,
        spec.t_end,
        RunOptions::default(),
    )?;
    let exact = |t: f64, x: Point| sol.exact_u(t, x);
    let t = d.final_state.t;
    let u = d.final_state.u;
    Ok(MmsOutcome {
        abs: l2_norm_error(grid, &u, exact, t, ErrorMode::Absolute)?,
        rel: l2_norm_error(grid, &u, exact, t, ErrorMode::Relative)?,
        u,
    })
}

struct Cell {
    scheme: SchemeKind,
    eps: f64,
    lattice: (usize, usize),
    tau: f64,
}

fn table_row(spec: &ExperimentSpec, cell: &Cell, grid: &Grid, outcome: &Result<MmsOutcome>) -> TableRow {
    let (abs, rel, status) = match outcome {
        Ok(o) => (Some(o.abs), Some(o.rel), Status::Ok),
        Err(e) => (None, None, Status::Failed(e.to_string())),
    };
    TableRow {
        experiment: spec.experiment,
        scheme: cell.scheme,
        eps: cell.eps,
        h: grid.lattice_spacing(),
        tau: cell.tau,
        t_end: spec.t_end,
        abs_l2: abs,
        rel_l2: rel,
        observed_order: None,
        temporal_l2: None,
        temporal_order: None,
        status,
    }
}

fn classified_grid(spec: &ExperimentSpec, (lx, ly): (usize, usize)) -> Result<Grid> {
    Grid::from_lattice(lx, ly)?.classify_boundary(&spec.field())
}

/// Spatial convergence on the manufactured solution: one row per
/// `(scheme, eps, h)` with the first `tau`.
pub fn converge_space(spec: &ExperimentSpec) -> Result<Vec<TableRow>> {
    spec.validate()?;
    let tau = spec.tau[0];
    let lattices = spec.lattices()?;
    let mut cells = Vec::new();
    for &scheme in &spec.scheme {
        for &eps in &spec.eps {
            for &lattice in &lattices {
                cells.push(Cell { scheme, eps, lattice, tau });
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|cell| {
            let grid = classified_grid(spec, cell.lattice)?;
            let outcome = run_mms(spec, &grid, cell.scheme, cell.eps, cell.tau);
            Ok(table_row(spec, cell, &grid, &outcome))
        })
        .collect::<Result<Vec<_>>>()?;
    fill_orders(&mut rows, |r| r.h);
    Ok(rows)
}

/// Temporal convergence on the manufactured solution: one row per
/// `(scheme, eps, tau)` on a fixed grid.
pub fn converge_time(spec: &ExperimentSpec) -> Result<Vec<TableRow>> {
    spec.validate()?;
    let lattice = spec.lattices()?[0];
    let grid = classified_grid(spec, lattice)?;
    let mut cells = Vec::new();
    for &scheme in &spec.scheme {
        for &eps in &spec.eps {
            for &tau in &spec.tau {
                cells.push(Cell { scheme, eps, lattice, tau });
            }
        }
    }
    let references: Vec<Option<Result<DofVector>>> = match spec.reference_tau {
        None => vec![],
        Some(tau_ref) => {
            let series: Vec<(SchemeKind, f64)> = spec
                .scheme
                .iter()
                .flat_map(|&s| spec.eps.iter().map(move |&e| (s, e)))
                .collect();
            series
                .par_iter()
                .map(|&(s, e)| Some(run_mms(spec, &grid, s, e, tau_ref).map(|o| o.u)))
                .collect()
        }
    };
    let mut rows: Vec<TableRow> = cells
        .par_iter()
        .enumerate()
        .map(|(k, cell)| {
            let outcome = run_mms(spec, &grid, cell.scheme, cell.eps, cell.tau);
            let mut row = table_row(spec, cell, &grid, &outcome);
            if let (Some(Some(Ok(reference))), Ok(o)) = (references.get(k / spec.tau.len()), &outcome) {
                let diff: Vec<f64> = o.u.iter().zip(reference).map(|(a, b)| a - b).collect();
                row.temporal_l2 =
                    l2_norm_error(&grid, &diff, |_, _| 0.0, 0.0, ErrorMode::Absolute).ok();
            }
            row
        })
        .collect();
    fill_orders(&mut rows, |r| r.tau);
    Ok(rows)
}

fn initial_state(spec: &ExperimentSpec, grid: &Grid) -> Result<DofVector> {
    Ok(match spec.initial {
        InitialData::Manufactured => {
            let sol = spec.mms(spec.eps[0])?;
            grid.interpolate(|x| sol.exact_u(0.0, x))
        }
        InitialData::Gaussian => grid.interpolate(|x| gaussian_initial(spec.tm, x)),
        InitialData::Constant(c) => vec![c; grid.num_nodes()],
    })
}

/// Field captured at a requested time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub scheme: SchemeKind,
    pub t: f64,
    pub u: DofVector,
}

#[derive(Debug)]
pub struct GaussianReport {
    pub grid: Grid,
    pub runs: Vec<(SchemeKind, Result<RunDiagnostics>)>,
    pub snapshots: Vec<Snapshot>,
}

/// Relaxation of the Gaussian peak without forcing, one run per scheme.
pub fn gaussian(spec: &ExperimentSpec) -> Result<GaussianReport> {
    spec.validate()?;
    let grid = classified_grid(spec, spec.lattices()?[0])?;
    let field = spec.field();
    let tau = spec.tau[0];
    let eps = spec.eps[0];
    let u0 = grid.interpolate(|x| gaussian_initial(spec.tm, x));
    let results: Vec<_> = spec
        .scheme
        .par_iter()
        .map(|&kind| {
            let mut snaps = Vec::new();
            let mut capture = |state: &TimeState, _: &StepRecord| {
                if spec.snapshots.iter().any(|&s| (state.t - s).abs() < 0.5 * tau) {
                    snaps.push(Snapshot {
                        scheme: kind,
                        t: state.t,
                        u: state.u.clone(),
                    });
                }
            };
            let d = run(
                u0.clone(),
                spec.scheme_config(kind, eps, tau),
                &grid,
                &field,
                &NoSources,
                spec.t_end,
                RunOptions {
                    exact: None,
                    on_step: Some(&mut capture),
                },
            );
            (kind, d, snaps)
        })
        .collect();
    let mut runs = Vec::new();
    let mut snapshots = Vec::new();
    for (kind, d, s) in results {
        runs.push((kind, d));
        snapshots.extend(s);
    }
    Ok(GaussianReport {
        grid,
        runs,
        snapshots,
    })
}

pub const SERIES_HEADER: &str = "scheme,step,t,min,max,l2";

pub fn write_series(kind: SchemeKind, records: &[StepRecord], mut out: impl Write) -> io::Result<()> {
    for r in records {
        writeln!(out, "{kind},{},{:e},{:.10e},{:.10e},{:.10e}", r.step, r.t, r.min, r.max, r.l2)?;
    }
    Ok(())
}

/// Outcome of one budgeted run in the Crank–Nicolson experiment.
#[derive(Debug, Clone)]
pub struct CnOutcome {
    pub scheme: SchemeKind,
    pub tau: f64,
    /// `(step, t, min u_h)` for every completed step, starting at step 0.
    pub minima: Vec<(usize, f64, f64)>,
    /// Failing step, its message and the offending value of `u_h`.
    pub failure: Option<(usize, String, Option<f64>)>,
}

impl CnOutcome {
    pub fn steps_completed(&self) -> usize {
        self.minima.last().map_or(0, |m| m.0)
    }

    pub fn is_negative_state(&self) -> bool {
        self.failure
            .as_ref()
            .is_some_and(|(_, msg, _)| msg.contains("NEGATIVE_STATE"))
    }
}

/// Runs each `(scheme, tau)` pair from the Gaussian peak for `steps` steps.
/// A negative state is recorded as the outcome, not returned as an error.
pub fn cn_failure(spec: &ExperimentSpec) -> Result<Vec<CnOutcome>> {
    spec.validate()?;
    let grid = classified_grid(spec, spec.lattices()?[0])?;
    let field = spec.field();
    let eps = spec.eps[0];
    let u0 = grid.interpolate(|x| gaussian_initial(spec.tm, x));
    let pairs: Vec<(SchemeKind, f64)> = spec
        .scheme
        .iter()
        .flat_map(|&s| spec.tau.iter().map(move |&t| (s, t)))
        .collect();
    pairs
        .par_iter()
        .map(|&(scheme, tau)| {
            let mut minima = Vec::new();
            let mut track = |state: &TimeState, rec: &StepRecord| minima.push((state.step, state.t, rec.min));
            let result = run(
                u0.clone(),
                spec.scheme_config(scheme, eps, tau),
                &grid,
                &field,
                &NoSources,
                spec.steps as f64 * tau,
                RunOptions {
                    exact: None,
                    on_step: Some(&mut track),
                },
            );
            let failure = match result {
                Ok(_) => None,
                Err(Error::Step { step, source }) => {
                    let value = match *source {
                        Error::NegativeState { value, .. } => Some(value),
                        _ => None,
                    };
                    Some((step, source.to_string(), value))
                }
                Err(e) => return Err(e),
            };
            Ok(CnOutcome {
                scheme,
                tau,
                minima,
                failure,
            })
        })
        .collect()
}

pub fn write_cn_report(outcomes: &[CnOutcome], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "scheme,tau,step,t,min_u,status")?;
    for o in outcomes {
        for &(step, t, min) in &o.minima {
            writeln!(out, "{},{:e},{step},{t:e},{min:.10e},OK", o.scheme, o.tau)?;
        }
        if let Some((step, _, value)) = &o.failure {
            let status = if o.is_negative_state() { "NEGATIVE_STATE" } else { "FAILED" };
            let t = *step as f64 * o.tau;
            let min = value.map(|v| format!("{v:.10e}")).unwrap_or_default();
            writeln!(out, "{},{:e},{step},{t:e},{min},{status}", o.scheme, o.tau)?;
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct SolveReport {
    pub grid: Grid,
    pub diagnostics: RunDiagnostics,
    /// Final absolute and relative L² errors for manufactured data.
    pub error: Option<(f64, f64)>,
}

/// Single run with the first scheme, `eps`, `tau` and grid of `spec`.
pub fn solve(spec: &ExperimentSpec) -> Result<SolveReport> {
    spec.validate()?;
    let grid = classified_grid(spec, spec.lattices()?[0])?;
    let (kind, eps, tau) = (spec.scheme[0], spec.eps[0], spec.tau[0]);
    let u0 = initial_state(spec, &grid)?;
    let config = spec.scheme_config(kind, eps, tau);
    let (diagnostics, error) = match spec.initial {
        InitialData::Manufactured => {
            let sol = spec.mms(eps)?;
            let exact = |t: f64, x: Point| sol.exact_u(t, x);
            let d = run(
                u0,
                config,
                &grid,
                &sol.field,
                &sol,
                spec.t_end,
                RunOptions {
                    exact: Some(&exact),
                    on_step: None,
                },
            )?;
            let err = d.final_abs_error().zip(d.final_rel_error());
            (d, err)
        }
        _ => {
            let field = spec.field();
            let sources: &dyn Sources = &NoSources;
            let d = run(u0, config, &grid, &field as &dyn Anisotropy, sources, spec.t_end, RunOptions::default())?;
            (d, None)
        }
    };
    Ok(SolveReport {
        grid,
        diagnostics,
        error,
    })
}

/// Writes nodal values row by row (y outer, x inner) after a header of
/// node counts and time.
pub fn write_field_dump(grid: &Grid, t: f64, u: &[f64], mut out: impl Write) -> io::Result<()> {
    let (nx, ny) = (grid.nodes_x(), grid.nodes_y());
    writeln!(out, "Nx {nx}")?;
    writeln!(out, "Ny {ny}")?;
    writeln!(out, "t {t:.17e}")?;
    for j in 0..ny {
        let row: Vec<String> = (0..nx).map(|i| format!("{:.16e}", u[j * nx + i])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Inverse of [`write_field_dump`]: `(nx, ny, t, values)`.
pub fn read_field_dump(text: &str) -> Result<(usize, usize, f64, Vec<f64>)> {
    let bad = |what: &str| Error::Config(format!("malformed field dump: {what}"));
    let mut lines = text.lines();
    let mut header = |name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad("missing header"))?;
        line.strip_prefix(name)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| bad(&format!("expected '{name}'")))
    };
    let nx: usize = header("Nx")?.parse().map_err(|_| bad("Nx"))?;
    let ny: usize = header("Ny")?.parse().map_err(|_| bad("Ny"))?;
    let t: f64 = header("t")?.parse().map_err(|_| bad("t"))?;
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|v| v.parse::<f64>().map_err(|_| bad(v)))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != nx * ny {
        return Err(bad("value count"));
    }
    Ok((nx, ny, t, values))
}

/// Creates `path`'s parent directory and opens it for writing.
pub fn create_output(path: &Path) -> io::Result<io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(io::BufWriter::new(fs::File::create(path)?))
}
