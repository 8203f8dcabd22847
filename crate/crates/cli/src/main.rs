use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use aphe::harness::{
    self, create_output, write_cn_report, write_field_dump, write_series, write_table,
    write_temporal_table, Experiment, ExperimentSpec, SERIES_HEADER,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aphe", version, about = "Asymptotic-preserving anisotropic heat transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spatial convergence table on the manufactured solution.
    ConvergeSpace(Overrides),
    /// Temporal convergence table on the manufactured solution.
    ConvergeTime(Overrides),
    /// Gaussian-peak relaxation: per-step min, max and L2 norm.
    Gaussian(Overrides),
    /// Crank–Nicolson negative-state demonstration with a control scheme.
    CnFailure(Overrides),
    /// Single run with a final field dump.
    Solve(Overrides),
}

#[derive(clap::Args)]
struct Overrides {
    /// Flat `key = value` config file; flags below take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Scheme list: P, E_AP, CN_AP, RK_AP.
    #[arg(long, value_name = "NAME[,NAME]")]
    scheme: Option<String>,
    #[arg(long, value_name = "LIST")]
    eps: Option<String>,
    /// Lattice spacings; each element spans two of them.
    #[arg(long, value_name = "LIST")]
    h: Option<String>,
    #[arg(long, value_name = "LIST")]
    tau: Option<String>,
    #[arg(long, value_name = "REAL")]
    tm: Option<f64>,
    #[arg(long, value_name = "REAL")]
    tend: Option<f64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Lattice intervals per direction, e.g. 64x64.
    #[arg(long, value_name = "NxM")]
    grid: Option<String>,
    /// Drop the boundary residual of the manufactured solution from the load.
    #[arg(long)]
    no_boundary_sources: bool,
    /// Any other config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn spec(&self, experiment: Experiment) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ExperimentSpec::from_config(&text, Some(experiment))?
            }
            None => ExperimentSpec::defaults(experiment),
        };
        let pairs = [
            ("scheme", self.scheme.clone()),
            ("eps", self.eps.clone()),
            ("h", self.h.clone()),
            ("tau", self.tau.clone()),
            ("tm", self.tm.map(|v| v.to_string())),
            ("t_end", self.tend.map(|v| v.to_string())),
            ("grid", self.grid.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in pairs {
            if let Some(value) = value {
                spec.set(key, &value)?;
            }
        }
        if self.h.is_some() && self.grid.is_none() {
            spec.grid = None;
        }
        if self.no_boundary_sources {
            spec.boundary_sources = false;
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got '{kv}'");
            };
            spec.set(k, v)?;
        }
        spec.experiment = experiment;
        Ok(spec)
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(create_output(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn converge(spec: &ExperimentSpec) -> Result<bool> {
    let rows = match spec.experiment {
        Experiment::ConvergeSpace => harness::converge_space(spec)?,
        _ => harness::converge_time(spec)?,
    };
    let mut out = sink(spec.out.as_deref())?;
    write_table(&rows, &mut out)?;
    if spec.reference_tau.is_some() {
        match &spec.out {
            Some(path) => write_temporal_table(&rows, create_output(&sibling(path, "_temporal.csv"))?)?,
            None => {
                writeln!(out)?;
                write_temporal_table(&rows, &mut out)?;
            }
        }
    }
    out.flush()?;
    let failed = rows.iter().filter(|r| r.status != harness::Status::Ok).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells FAILED", rows.len());
    }
    Ok(true)
}

fn gaussian(spec: &ExperimentSpec) -> Result<bool> {
    let report = harness::gaussian(spec)?;
    let mut out = sink(spec.out.as_deref())?;
    writeln!(out, "{SERIES_HEADER}")?;
    let mut ok = true;
    for (kind, result) in &report.runs {
        match result {
            Ok(d) => write_series(*kind, &d.records, &mut out)?,
            Err(e) => {
                eprintln!("{kind}: {e}");
                ok = false;
            }
        }
    }
    out.flush()?;
    if let Some(path) = &spec.out {
        for snap in &report.snapshots {
            let name = sibling(path, &format!("_{}_t{}.txt", snap.scheme, snap.t));
            write_field_dump(&report.grid, snap.t, &snap.u, create_output(&name)?)?;
        }
    }
    Ok(ok)
}

fn cn_failure(spec: &ExperimentSpec) -> Result<bool> {
    let outcomes = harness::cn_failure(spec)?;
    let mut out = sink(spec.out.as_deref())?;
    write_cn_report(&outcomes, &mut out)?;
    out.flush()?;
    for o in &outcomes {
        match &o.failure {
            Some((step, msg, _)) => eprintln!("{} tau={:e}: failed at step {step}: {msg}", o.scheme, o.tau),
            None => eprintln!("{} tau={:e}: {} steps completed", o.scheme, o.tau, o.steps_completed()),
        }
    }
    Ok(true)
}

fn solve(spec: &ExperimentSpec) -> Result<bool> {
    let report = harness::solve(spec)?;
    let state = &report.diagnostics.final_state;
    let mut out = sink(spec.out.as_deref())?;
    write_field_dump(&report.grid, state.t, &state.u, &mut out)?;
    out.flush()?;
    if let Some(path) = &spec.out {
        let mut diag = create_output(&sibling(path, "_diagnostics.csv"))?;
        writeln!(diag, "{SERIES_HEADER}")?;
        write_series(spec.scheme[0], &report.diagnostics.records, &mut diag)?;
        diag.flush()?;
    }
    if let Some((abs, rel)) = report.error {
        eprintln!("abs_l2={abs:.6e} rel_l2={rel:.6e}");
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, overrides) = match &cli.command {
        Command::ConvergeSpace(o) => (Experiment::ConvergeSpace, o),
        Command::ConvergeTime(o) => (Experiment::ConvergeTime, o),
        Command::Gaussian(o) => (Experiment::Gaussian, o),
        Command::CnFailure(o) => (Experiment::CnFailure, o),
        Command::Solve(o) => (Experiment::Solve, o),
    };
    let result = overrides.spec(experiment).and_then(|spec| match experiment {
        Experiment::ConvergeSpace | Experiment::ConvergeTime => converge(&spec),
        Experiment::Gaussian => gaussian(&spec),
        Experiment::CnFailure => cn_failure(&spec),
        Experiment::Solve => solve(&spec),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
