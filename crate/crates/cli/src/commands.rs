use std::path::{Path, PathBuf};

use armsynth_core::demonstration::{joint_path_through, synthesize_task, SynthesisOptions, TaskFormat};
use armsynth_core::fitness::{robot_fitness, temporal_fitness, FitnessReport, InvalidReason};
use armsynth_core::harness::{self, write_atomic, Experiment};
use armsynth_core::kinematics::{ContinuityNorm, JointConfig};
use armsynth_core::optimize::{run_design_optimization, Algorithm, DesignSpace, OptimizationResult, RobotFitness};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{read_design, read_task, urdf, CliError};

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub continuity_norm: Option<ContinuityNorm>,
}

impl Globals {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if let Some(norm) = self.continuity_norm {
            cfg.ik.continuity_norm = norm;
        }
        Ok(cfg)
    }
}

/// Joint-space trajectory used to synthesise a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Joint waypoints in degrees, visited in order.
    pub waypoints_deg: Vec<Vec<f64>>,
    pub frames: usize,
    /// Normalised arc-length positions of the markers; the last must be 1.
    pub anchors: Vec<f64>,
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(CliError::from)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn task_bytes(task: &armsynth_core::demonstration::RecordedTask, format: TaskFormat) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    task.save(&mut buf, format)?;
    Ok(buf)
}

pub fn synth(globals: &Globals, design: &Path, trajectory: &Path, noise: f64, output: &Path) -> Result<(), CliError> {
    let cfg = globals.resolve()?;
    let truth = read_design(design)?;
    let text = std::fs::read_to_string(trajectory)
        .map_err(|e| CliError::input(format!("cannot read trajectory {}: {e}", trajectory.display())))?;
    let spec: TrajectorySpec = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("bad trajectory {}: {e}", trajectory.display())))?;
    let waypoints: Vec<JointConfig> = spec
        .waypoints_deg
        .iter()
        .map(|w| JointConfig(w.iter().map(|v| v.to_radians()).collect()))
        .collect();
    let path = joint_path_through(&waypoints, spec.frames)?;
    let settings = cfg.fitness_settings()?;
    let options = SynthesisOptions {
        noise,
        seed: cfg.seed,
        epsilon: settings.ik.epsilon,
        continuity_norm: settings.ik.continuity_norm,
    };
    let task = synthesize_task(&truth, &path, &spec.anchors, &settings.limits, &options)?;
    write_new(output, &task_bytes(&task, TaskFormat::from_path(output))?)
}

/// Exit code for an evaluated design: 0 valid, 2 outside the design limits,
/// 3 when it cannot track the task.
pub fn report_exit_code(report: &FitnessReport) -> i32 {
    match &report.invalid {
        None => crate::EXIT_OK,
        Some(InvalidReason::DesignLimits { .. }) => crate::EXIT_INVALID_INPUT,
        Some(_) => crate::EXIT_NO_SOLUTION,
    }
}

pub fn evaluate(globals: &Globals, design: &Path, task: &Path, report: Option<&Path>) -> Result<i32, CliError> {
    let cfg = globals.resolve()?;
    let design = read_design(design)?;
    let task = read_task(task)?;
    let settings = cfg.fitness_settings()?;
    settings.validate(&task).map_err(|e| CliError::input(e.to_string()))?;
    let result = robot_fitness(&design, &task, &settings, cfg.seed)?;
    eprintln!("{}", result.summary());
    let json = serde_json::to_string_pretty(&result.to_document())?;
    match report {
        Some(path) => write_new(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(report_exit_code(&result))
}

#[derive(Debug, Serialize)]
struct IkOutput {
    frame: usize,
    cost_mm: f64,
    q: JointConfig,
    sigma: Vec<f64>,
}

pub fn ik(
    globals: &Globals,
    design: &Path,
    task: &Path,
    frame: usize,
    q_prev_deg: Option<&[f64]>,
) -> Result<(), CliError> {
    let cfg = globals.resolve()?;
    let design = read_design(design)?;
    let task = read_task(task)?;
    let settings = cfg.fitness_settings()?;
    let f = task
        .frames()
        .get(frame)
        .ok_or_else(|| CliError::input(format!("task has {} frames, no frame {frame}", task.frame_count())))?;
    let q_prev = q_prev_deg.map(|q| JointConfig(q.iter().map(|v| v.to_radians()).collect()));
    let sol = temporal_fitness(&design, f, q_prev.as_ref(), &settings, cfg.seed)?;
    let out = IkOutput {
        frame,
        cost_mm: sol.cost * 1e3,
        q: sol.q,
        sigma: sol.sigma,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

/// Hash of the task file contents and the resolved fitness settings.
fn fingerprint(task_path: &Path, cfg: &RunConfig) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(task_path)?);
    hasher.update(serde_json::to_vec(&cfg.fitness_settings()?)?);
    Ok(hex::encode(&hasher.finalize()[..8]))
}

fn objective(cfg: &RunConfig) -> Result<(RobotFitness, PathBuf), CliError> {
    let path = cfg
        .task
        .clone()
        .ok_or_else(|| CliError::input("no task file given (config \"task\" or --task)"))?;
    let task = read_task(&path)?;
    let objective = RobotFitness::new(task, cfg.fitness_settings()?).map_err(|e| CliError::input(e.to_string()))?;
    Ok((objective, path))
}

pub const RESULT_FILES: [&str; 5] = [
    "result.json",
    "design.json",
    "joint_path.csv",
    "history.csv",
    "summary.txt",
];

fn summary_text(result: &OptimizationResult) -> String {
    let mut s = format!(
        "algorithm {}  seed {}  dof {}  generations {}  evaluations {}\n",
        result.algorithm,
        result.seed,
        result.dof,
        result.history.len(),
        result.evaluations
    );
    match (&result.best, &result.design) {
        (Some(best), Some(design)) => {
            s.push_str(&best.report.summary());
            s.push('\n');
            s.push_str("alpha(rad)  a(m)  d(m)\n");
            for l in design.rows() {
                s.push_str(&format!("{:.3}  {:.3}  {:.3}\n", l.alpha, l.a, l.d));
            }
        }
        _ => s.push_str("no valid design found\n"),
    }
    s
}

pub fn optimize(
    globals: &Globals,
    task: Option<&Path>,
    dof: Option<usize>,
    algorithm: Option<Algorithm>,
) -> Result<(), CliError> {
    let mut cfg = globals.resolve()?;
    if let Some(task) = task {
        cfg.task = Some(task.to_path_buf());
    }
    cfg.dof = dof.unwrap_or(cfg.dof);
    cfg.algorithm = algorithm.unwrap_or(cfg.algorithm);
    for name in RESULT_FILES {
        let path = cfg.out.join(name);
        if path.exists() {
            return Err(CliError::input(format!(
                "{} already exists; refusing to overwrite",
                path.display()
            )));
        }
    }
    let (objective, _) = objective(&cfg)?;
    let space =
        DesignSpace::new(cfg.dof, cfg.limits.to_limits(), cfg.tool()).map_err(|e| CliError::input(e.to_string()))?;
    let pso = cfg.pso();
    pso.validate().map_err(|e| CliError::input(e.to_string()))?;
    let result = run_design_optimization(&objective, &space, &pso, cfg.algorithm, cfg.seed)?;

    let out = &cfg.out;
    let mut history = String::from("iter,best,n_valid\n");
    for h in &result.history {
        history.push_str(&format!(
            "{},{},{}\n",
            h.iter,
            h.best.map(|b| b.to_string()).unwrap_or_default(),
            h.n_valid
        ));
    }
    write_new(
        &out.join("result.json"),
        serde_json::to_string_pretty(&result.to_document(&pso))?.as_bytes(),
    )?;
    write_new(&out.join("history.csv"), history.as_bytes())?;
    write_new(&out.join("summary.txt"), summary_text(&result).as_bytes())?;
    let (Some(best), Some(design)) = (&result.best, &result.design) else {
        return Err(CliError::NoSolution("no valid design was found".into()));
    };
    write_new(&out.join("design.json"), design.to_json()?.as_bytes())?;
    let mut path = String::from("t");
    for j in 0..design.dof() {
        path.push_str(&format!(",q{}", j + 1));
    }
    path.push('\n');
    for (t, q) in best.report.joint_path.iter().enumerate() {
        path.push_str(&t.to_string());
        for v in q.as_slice() {
            path.push_str(&format!(",{v}"));
        }
        path.push('\n');
    }
    write_new(&out.join("joint_path.csv"), path.as_bytes())?;
    eprint!("{}", summary_text(&result));
    Ok(())
}

fn experiment(cfg: &RunConfig, task_path: &Path) -> Result<Experiment, CliError> {
    Ok(Experiment {
        cfg: cfg.pso(),
        limits: cfg.limits.to_limits(),
        tool: cfg.tool(),
        seeds: cfg.grid.seeds.clone(),
        workers: cfg.workers,
        fingerprint: fingerprint(task_path, cfg)?,
    })
}

pub fn compare(globals: &Globals, task: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = globals.resolve()?;
    if let Some(task) = task {
        cfg.task = Some(task.to_path_buf());
    }
    let (objective, path) = objective(&cfg)?;
    let exp = experiment(&cfg, &path)?;
    let table = harness::compare_algorithms(&objective, &exp, &cfg.grid.dofs, &cfg.grid.periods, Some(&cfg.out))?;
    print!("{}", table.to_csv()?);
    Ok(())
}

pub fn sweep_dof(globals: &Globals, task: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = globals.resolve()?;
    if let Some(task) = task {
        cfg.task = Some(task.to_path_buf());
    }
    let (objective, path) = objective(&cfg)?;
    let exp = experiment(&cfg, &path)?;
    let rows = harness::sweep_dof(&objective, &exp, cfg.algorithm, &cfg.grid.dofs, Some(&cfg.out))?;
    print!("{}", harness::sweep_to_csv(&rows)?);
    Ok(())
}

pub fn export_urdf(globals: &Globals, design: &Path, output: &Path) -> Result<(), CliError> {
    let cfg = globals.resolve()?;
    let design = read_design(design)?;
    let name = output.file_stem().and_then(|s| s.to_str()).unwrap_or("robot");
    let xml = urdf::export_urdf(&design, &cfg.limits.to_limits(), name)?;
    write_new(output, xml.as_bytes())
}
