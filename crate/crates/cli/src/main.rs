use std::path::PathBuf;
use std::process::ExitCode;

use armsynth_cli::commands::{self, Globals};
use armsynth_cli::{CliError, EXIT_OK};
use armsynth_core::kinematics::ContinuityNorm;
use armsynth_core::optimize::Algorithm;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "armsynth",
    version,
    about = "Serial-arm design synthesis from marker demonstrations"
)]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for optimisation results.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent runs for compare and sweep-dof; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    continuity_norm: Option<NormArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Euclidean,
    PerJoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Pso,
    Rapso,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a marker task from a design and a joint trajectory.
    Synth {
        #[arg(long)]
        design: PathBuf,
        /// JSON with `waypoints_deg`, `frames` and `anchors`.
        #[arg(long)]
        trajectory: PathBuf,
        /// Uniform marker noise half-width in meters.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Output task file; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        output: PathBuf,
    },
    /// Score one design against a task.
    Evaluate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        task: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve the marker-matching problem for a single frame.
    Ik {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Previous joint configuration in degrees, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q_prev: Option<Vec<f64>>,
    },
    /// Search for the best design of a given DOF.
    Optimize {
        #[arg(long)]
        task: Option<PathBuf>,
        #[arg(long)]
        dof: Option<usize>,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
    },
    /// Run PSO and RA-PSO over the configured grid and seeds.
    Compare {
        #[arg(long)]
        task: Option<PathBuf>,
    },
    /// Run the configured algorithm for every DOF in the grid.
    SweepDof {
        #[arg(long)]
        task: Option<PathBuf>,
    },
    /// Write a design as URDF.
    ExportUrdf {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let g = cli.globals;
    let globals = Globals {
        config: g.config,
        seed: g.seed,
        out: g.out,
        workers: g.workers,
        continuity_norm: g.continuity_norm.map(|n| match n {
            NormArg::Euclidean => ContinuityNorm::Euclidean,
            NormArg::PerJoint => ContinuityNorm::PerJoint,
        }),
    };
    match cli.command {
        Command::Synth {
            design,
            trajectory,
            noise,
            output,
        } => commands::synth(&globals, &design, &trajectory, noise, &output)?,
        Command::Evaluate { design, task, report } => {
            return commands::evaluate(&globals, &design, &task, report.as_deref())
        }
        Command::Ik {
            design,
            task,
            frame,
            q_prev,
        } => commands::ik(&globals, &design, &task, frame, q_prev.as_deref())?,
        Command::Optimize { task, dof, algorithm } => {
            let algorithm = algorithm.map(|a| match a {
                AlgorithmArg::Pso => Algorithm::Pso,
                AlgorithmArg::Rapso => Algorithm::RaPso,
            });
            commands::optimize(&globals, task.as_deref(), dof, algorithm)?
        }
        Command::Compare { task } => commands::compare(&globals, task.as_deref())?,
        Command::SweepDof { task } => commands::sweep_dof(&globals, task.as_deref())?,
        Command::ExportUrdf { design, output } => commands::export_urdf(&globals, &design, &output)?,
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
