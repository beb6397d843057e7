//! `golden-anosov`: build schedules, run verification suites and export
//! curves, orbits and densities. Every run writes `<out>.manifest.json`, and
//! `golden-anosov rerun <manifest>` repeats it.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use golden_anosov::verify::{Suite, VerifyOptions};
use golden_anosov::Backend;

use config::{ExportSpec, Manifest, RunConfig, ScheduleSource};

/// Process outcome other than success, with its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2: a certificate or verification check failed.
    Certificate(String),
    /// Exit 3: no schedule satisfies the requested profile.
    Infeasible(String),
    /// Exit 4: bad arguments.
    Usage(String),
    /// Exit 1: I/O and internal errors.
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Certificate(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Usage(_) => 4,
            Failure::Io(_) => 1,
        }
    }
}

impl From<golden_anosov::Error> for Failure {
    fn from(e: golden_anosov::Error) -> Self {
        use golden_anosov::Error as E;
        let msg = e.to_string();
        match e {
            E::Infeasible(_) => Failure::Infeasible(msg),
            E::Certificate(_) => Failure::Certificate(msg),
            E::InvalidArgument(_) | E::Parse(_) | E::OutOfRange(_) | E::NotAdmissible(_) | E::Endpoint(_) => {
                Failure::Usage(msg)
            }
            _ => Failure::Io(msg),
        }
    }
}

#[derive(Parser)]
#[command(name = "golden-anosov", version, about = "Golden-mean circle homeomorphisms and fibered Anosov maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a schedule and write it as JSON with its certificates.
    BuildSchedule {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite (or `all`) and write a JSON report.
    Verify {
        /// Suite name, or `all`.
        suite: String,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        /// Points of the one-dimensional grids.
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write CSV data: a circle curve, an orbit of the fibered map, or a
    /// cylinder histogram of the density.
    Export {
        #[arg(value_enum)]
        what: ExportKind,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        /// Depth of the map (defaults to the last N_t of the schedule).
        #[arg(long)]
        depth: Option<usize>,
        /// Curve sample points.
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[arg(long, default_value = "0.3", allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value = "0.1", allow_hyphen_values = true)]
        y: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Stage of the density.
        #[arg(long)]
        stage: Option<usize>,
        /// Cylinder depth of the density histogram.
        #[arg(long, default_value_t = 6)]
        bins_depth: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat the run recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        /// Write to this path instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScheduleArgs {
    /// Schedule JSON written by `build-schedule`; overrides the build flags.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProfileArg::Toy)]
    profile: ProfileArg,
    #[arg(long, default_value_t = 2)]
    stages: usize,
    /// Base of the lattice, e.g. `262145/262144`; searched when omitted.
    #[arg(long)]
    theta: Option<String>,
}

#[derive(Args)]
struct NumericArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Float)]
    backend: BackendArg,
    /// Mantissa bits of the float backend: 53, 80, 128 or 256.
    #[arg(long, default_value_t = 53)]
    precision: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Toy,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Exact,
    Float,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Curve,
    Orbit,
    Density,
}

impl ScheduleArgs {
    fn source(&self) -> Result<ScheduleSource, Failure> {
        if self.stages == 0 {
            return Err(Failure::Usage("--stages must be at least 1".into()));
        }
        Ok(ScheduleSource {
            file: self.schedule.as_ref().map(|p| p.display().to_string()),
            profile: match self.profile {
                ProfileArg::Toy => "toy",
                ProfileArg::Strict => "strict",
            }
            .into(),
            stages: self.stages,
            theta: self.theta.clone(),
        })
    }
}

impl NumericArgs {
    fn backend(&self) -> Result<Backend, Failure> {
        match self.backend {
            BackendArg::Exact => Ok(Backend::Exact),
            BackendArg::Float => Ok(Backend::float(self.precision)?),
        }
    }
}

fn out_string(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn plan(cli: Cli) -> Result<RunConfig, Failure> {
    Ok(match cli.command {
        Command::BuildSchedule { schedule, out } => {
            RunConfig::BuildSchedule { schedule: schedule.source()?, out: out_string(&out) }
        }
        Command::Verify { suite, schedule, numeric, grid, seed, out } => {
            let suites = if suite == "all" {
                Suite::ALL.iter().map(|s| s.name().to_string()).collect()
            } else {
                vec![suite.parse::<Suite>()?.name().to_string()]
            };
            if grid == 0 {
                return Err(Failure::Usage("--grid must be positive".into()));
            }
            let options = VerifyOptions { backend: numeric.backend()?, grid, seed, ..VerifyOptions::default() };
            RunConfig::Verify { schedule: schedule.source()?, suites, options, out: out_string(&out) }
        }
        Command::Export { what, schedule, numeric, depth, points, x, y, steps, stage, bins_depth, out } => {
            let export = match what {
                ExportKind::Curve => ExportSpec::Curve { depth, points },
                ExportKind::Orbit => ExportSpec::Orbit { depth, x, y, steps },
                ExportKind::Density => ExportSpec::Density { stage, depth: bins_depth },
            };
            RunConfig::Export { schedule: schedule.source()?, export, backend: numeric.backend()?, out: out_string(&out) }
        }
        Command::Rerun { manifest, out } => {
            let mut run = Manifest::read(&manifest)?.run;
            if let Some(p) = out {
                run.set_out(out_string(&p));
            }
            run
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match plan(cli).and_then(|run| commands::execute(&run)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Certificate(m) => eprintln!("certificate failure: {m}"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
                Failure::Usage(m) => eprintln!("usage: {m}"),
                Failure::Io(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
