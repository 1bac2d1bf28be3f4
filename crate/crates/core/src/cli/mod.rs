//! Command line front end.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invalid configuration or
//! input file, 3 numerical failure.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io;
use crate::stap::Method;
use config::{Experiment, ExperimentConfig};
use run::{Artifacts, Session};

#[derive(Debug, Parser)]
#[command(name = "d3sr", version, about = "Single-snapshot STAP via sparse clutter spectrum estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a range-cell cube and write it to `<out>/cube.txt`.
    Simulate(Common),
    /// Estimate the sparse spectrum of one cell (`<out>/<method>/estimated_spectrum.txt`).
    Estimate(CellArgs),
    /// Design the filter of one cell at the target SOI (`<out>/<method>/filter.txt`).
    Filter(CellArgs),
    /// Output SCR versus target Doppler for every method (`<out>/mdv.csv`).
    Sweep(Common),
    /// Every artifact of the experiment plus a manifest.
    Run(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated method list overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    /// Overrides the number of sweep trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "D3SR_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    #[command(flatten)]
    pub common: Common,
    /// Cube file to read instead of simulating one.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Range cell; defaults to the target cell.
    #[arg(long)]
    pub cell: Option<usize>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::Config(_)
        | Error::InvalidConfig(_)
        | Error::InvalidScene(_)
        | Error::OutOfRange(_)
        | Error::GridTooCoarse { .. }
        | Error::DimensionMismatch { .. }
        | Error::DimensionError { .. }
        | Error::RangeBelowHeight { .. }
        | Error::InconsistentGeometry { .. } => 2,
        Error::NumericalBreakdown
        | Error::EmptySupport
        | Error::DidNotConverge { .. }
        | Error::Infeasible { .. }
        | Error::SingularCovariance => 3,
        Error::Io(_) => 1,
    }
}

impl Common {
    fn load(&self) -> Result<Experiment> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(methods) = &self.method {
            cfg.methods = methods.clone();
        }
        if let Some(trials) = self.trials {
            cfg.metrics.trials = trials;
        }
        let exp = cfg.build()?;
        for w in &exp.warnings {
            eprintln!("warning: {w}");
        }
        Ok(exp)
    }
}

fn cube_for(session: &Session, input: Option<&Path>) -> Result<Vec<crate::scene::Snapshot>> {
    match input {
        Some(path) => {
            let (header, cube) = io::read_cube(path)?;
            let cfg = &session.exp.radar;
            if header.num_channels != cfg.num_channels || header.num_pulses != cfg.num_pulses {
                return Err(Error::Config(format!(
                    "cube is {}x{} but the radar is {}x{}",
                    header.num_channels, header.num_pulses, cfg.num_channels, cfg.num_pulses
                )));
            }
            Ok(cube)
        }
        None => session.cube(),
    }
}

fn execute(command: &Command) -> Result<()> {
    let common = match command {
        Command::Simulate(c) | Command::Sweep(c) | Command::Run(c) => c,
        Command::Estimate(a) | Command::Filter(a) => &a.common,
    };
    let exp = common.load()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    let artifacts = pool.install(|| artifacts_for(command, &exp))?;
    artifacts.write(&exp.config.output_dir)
}

fn artifacts_for(command: &Command, exp: &Experiment) -> Result<Artifacts> {
    let session = Session::new(exp)?;
    let mut art = Artifacts::default();
    match command {
        Command::Simulate(_) => {
            let cube = session.cube()?;
            let header = io::CubeHeader::new(exp.radar.num_channels, exp.radar.num_pulses, Some(session.seeds.cube));
            art.insert("cube.txt", io::format_cube(&header, &cube)?);
        }
        Command::Estimate(a) => {
            let cube = cube_for(&session, a.input.as_deref())?;
            let cell = a.cell.unwrap_or_else(|| session.test_cell());
            let snapshot = cube
                .get(cell)
                .ok_or_else(|| Error::OutOfRange(format!("cell {cell} is outside a cube of {} cells", cube.len())))?;
            for &method in exp.config.methods.iter().filter(|m| m.is_sparse()) {
                let (spectrum, converged) = session.estimate(method, snapshot)?;
                if !converged {
                    eprintln!("warning: {method} did not converge; writing its best iterate");
                }
                art.insert(
                    PathBuf::from(method.name()).join("estimated_spectrum.txt"),
                    io::format_spectrum(&exp.grid, method.name(), &spectrum, exp.scene.noise_power)?,
                );
            }
            if art.files.is_empty() {
                return Err(Error::Config("methods: estimate needs d3sr-focuss or d3sr-l1".into()));
            }
        }
        Command::Filter(a) => {
            let cube = cube_for(&session, a.input.as_deref())?;
            let cell = a.cell.unwrap_or_else(|| session.test_cell());
            for &method in &exp.config.methods {
                let filter = run::design_filter(&session, method, &cube, cell)?;
                art.insert(PathBuf::from(method.name()).join("filter.txt"), io::format_filter(&filter)?);
            }
        }
        Command::Sweep(_) => {
            let curves = session.sweep(&exp.config.methods, exp.config.metrics.trials)?;
            art.insert("mdv.csv", run::mdv_table(&curves));
        }
        Command::Run(_) => art = run::run_all(exp, exp.config.metrics.trials)?,
    }
    Ok(art)
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(exit_code(&Error::Parse { line: 1, message: String::new() }), 2);
        assert_eq!(exit_code(&Error::SingularCovariance), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 1);
    }

    #[test]
    fn method_lists_parse() {
        let cli = Cli::try_parse_from(["d3sr", "sweep", "--config", "c.cfg", "--method", "lsmi,d3ls"]).unwrap();
        match cli.command {
            Command::Sweep(c) => assert_eq!(c.method, Some(vec![Method::Lsmi, Method::D3ls])),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Cli::try_parse_from(["d3sr", "sweep", "--config", "c.cfg", "--method", "smi"]).is_err());
        assert_eq!(main_with_args(["d3sr", "bogus"]), 1);
    }
}
