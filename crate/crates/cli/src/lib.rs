//! Command-line front end: argument parsing, logging, exit codes and the
//! run lifecycle. Every subcommand is also callable as a function so the
//! test suites can drive it without spawning processes.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use avf_core::config::ConfigError;
use avf_core::fem::FemError;
use avf_core::mesh::MeshError;
use avf_core::post::PostError;
use avf_core::waveform::WaveformError;

mod commands;
mod run;

pub use commands::{cmd_classify, cmd_mesh_info, cmd_rectify, MeshInfo};
pub use run::{cmd_post, cmd_run, PeriodStats, RunManifest, MANIFEST_NAME, PRESSURE_TRACE_NAME, WSS_SUMMARY_NAME};

/// Failure classes, mapped to the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or unreadable input: exit status 2.
    #[error("{0}")]
    Input(String),
    /// The numerics failed (solver divergence, NaN): exit status 1.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Input(format!("mesh: {e}"))
    }
}

impl From<WaveformError> for CliError {
    fn from(e: WaveformError) -> Self {
        CliError::Input(format!("waveform: {e}"))
    }
}

impl From<PostError> for CliError {
    fn from(e: PostError) -> Self {
        CliError::Input(format!("post: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("i/o: {e}"))
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        match e {
            FemError::Solver { .. } | FemError::NonFinite { .. } | FemError::Krylov(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "avf", version, about = "Pulsatile flow simulation in vessel junctions")]
pub struct Cli {
    /// Emit log records as JSON lines.
    #[arg(long, global = true)]
    pub json_logs: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation described by a JSON configuration.
    Run {
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Close the DA column by mass conservation and classify the result.
    Rectify {
        input: PathBuf,
        output: PathBuf,
        /// Period in seconds (default: declared or inferred from the file).
        #[arg(long)]
        period: Option<f64>,
        #[arg(long, default_value_t = avf_core::waveform::DEFAULT_ONE_WAY_EPSILON)]
        epsilon: f64,
    },
    /// Print the flow type of a waveform file.
    Classify {
        input: PathBuf,
        #[arg(long)]
        period: Option<f64>,
        #[arg(long, default_value_t = avf_core::waveform::DEFAULT_ONE_WAY_EPSILON)]
        epsilon: f64,
        /// Classify the DA column as given instead of the rectified one.
        #[arg(long)]
        no_rectify: bool,
    },
    /// Summarize a Gmsh mesh.
    MeshInfo {
        mesh: PathBuf,
        /// Physical-group mapping NAME=LABEL (repeatable); default PA, DA, FV, WALL.
        #[arg(long = "label", value_name = "NAME=LABEL")]
        labels: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Re-derive outputs from checkpoints of a finished run.
    Post { config: PathBuf, checkpoints: Vec<PathBuf> },
}

/// Installs the process logger; later calls are no-ops.
pub fn init_logging(json: bool) {
    let mut b = env_logger::Builder::new();
    b.filter_level(log::LevelFilter::Info).target(env_logger::Target::Stderr);
    if json {
        b.format(|buf, r| {
            let line = serde_json::json!({ "level": r.level().as_str(), "message": r.args().to_string() });
            writeln!(buf, "{line}")
        });
    } else {
        b.format(|buf, r| writeln!(buf, "{:<5} {}", r.level(), r.args()));
    }
    let _ = b.try_init();
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, resume } => cmd_run(&config, resume.as_deref()).map(|_| ()),
        Command::Rectify { input, output, period, epsilon } => {
            println!("{}", cmd_rectify(&input, &output, period, epsilon)?);
            Ok(())
        }
        Command::Classify { input, period, epsilon, no_rectify } => {
            println!("{}", cmd_classify(&input, period, epsilon, !no_rectify)?);
            Ok(())
        }
        Command::MeshInfo { mesh, labels, json } => {
            let info = cmd_mesh_info(&mesh, &labels)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&info).expect("serializable"));
            } else {
                print!("{info}");
            }
            Ok(())
        }
        Command::Post { config, checkpoints } => {
            for f in cmd_post(&config, &checkpoints)? {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.json_logs);
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
