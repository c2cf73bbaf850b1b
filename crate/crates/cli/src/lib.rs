//! Command implementations behind the `armsynth` binary.

pub mod commands;
pub mod config;
pub mod urdf;

use std::path::Path;

use armsynth_core::demonstration::{RecordedTask, TaskFormat};
use armsynth_core::kinematics::RobotDesign;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_NO_SOLUTION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    InvalidInput(String),
    #[error("{0}")]
    NoSolution(String),
    #[error(transparent)]
    Core(#[from] armsynth_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use armsynth_core::Error as E;
        match self {
            Self::InvalidInput(_) => EXIT_INVALID_INPUT,
            Self::NoSolution(_) => EXIT_NO_SOLUTION,
            Self::Core(
                E::Dimension { .. }
                | E::SigmaOutOfRange(_)
                | E::InvalidArgument(_)
                | E::MalformedTask(_)
                | E::InconsistentMarkers { .. }
                | E::NonFinite(_)
                | E::Json(_)
                | E::Csv(_),
            ) => EXIT_INVALID_INPUT,
            Self::Json(_) => EXIT_INVALID_INPUT,
            _ => EXIT_FAILURE,
        }
    }
}

pub fn read_design(path: &Path) -> Result<RobotDesign, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read design {}: {e}", path.display())))?;
    RobotDesign::from_json(&text).map_err(|e| CliError::input(format!("bad design {}: {e}", path.display())))
}

pub fn read_task(path: &Path) -> Result<RecordedTask, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::input(format!("cannot read task {}: {e}", path.display())))?;
    RecordedTask::load(std::io::BufReader::new(file), TaskFormat::from_path(path))
        .map_err(|e| CliError::input(format!("bad task {}: {e}", path.display())))
}
