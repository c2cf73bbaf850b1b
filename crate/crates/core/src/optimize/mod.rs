//! Design-space search: standard particle swarm and the range-adaptive
//! variant (RA-PSO) in which valid particles only receive small
//! range-scaled perturbations and twist angles move every `D` iterations.

pub mod joint_swarm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demonstration::{MarkerFrame, RecordedTask};
use crate::error::{Error, Result};
use crate::fitness::{robot_fitness, temporal_fitness, FitnessReport, FitnessSettings, ReportDocument};
use crate::kinematics::{check_design_limits, DesignLimits, DhLink, JointConfig, RobotDesign};

/// Mix a stream index into a master seed (splitmix64 finaliser).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for evaluating a design vector: a function of the run seed and the
/// vector's bits only, so the same design always gets the same inner solve.
pub fn evaluation_seed(master: u64, position: &[f64]) -> u64 {
    position
        .iter()
        .fold(derive_seed(master, 0xE7A1), |acc, x| derive_seed(acc, x.to_bits()))
}

const SAMPLE_STREAM: u64 = 0x5A3D_0001;
const MOVE_STREAM: u64 = 0x5A3D_0002;
/// Rejection-sampling attempts allowed per requested particle.
pub const SAMPLE_ATTEMPTS_PER_PARTICLE: u64 = 100_000;

/// Box bounds of the flattened design vector `[alpha_1, a_1, d_1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub dof: usize,
    pub limits: DesignLimits,
    /// Fixed tool row appended to every decoded design.
    pub tool: Option<DhLink>,
}

impl DesignSpace {
    pub fn new(dof: usize, limits: DesignLimits, tool: Option<DhLink>) -> Result<Self> {
        if dof == 0 {
            return Err(Error::InvalidArgument("a design needs at least one joint".into()));
        }
        limits.validate()?;
        Ok(Self { dof, limits, tool })
    }

    pub fn dim(&self) -> usize {
        3 * self.dof
    }

    pub fn is_angular(&self, i: usize) -> bool {
        i.is_multiple_of(3)
    }

    pub fn lower(&self, i: usize) -> f64 {
        if self.is_angular(i) {
            self.limits.alpha_min
        } else {
            0.0
        }
    }

    pub fn upper(&self, i: usize) -> f64 {
        match i % 3 {
            0 => self.limits.alpha_max,
            1 => self.limits.a_max,
            _ => self.limits.d_max,
        }
    }

    pub fn range(&self, i: usize) -> f64 {
        self.upper(i) - self.lower(i)
    }

    pub fn decode(&self, x: &[f64]) -> RobotDesign {
        RobotDesign {
            links: x.chunks_exact(3).map(|c| DhLink::new(c[0], c[1], c[2])).collect(),
            tool: self.tool,
        }
    }

    pub fn encode(&self, design: &RobotDesign) -> Result<Vec<f64>> {
        if design.dof() != self.dof {
            return Err(Error::Dimension {
                expected: self.dof,
                actual: design.dof(),
            });
        }
        Ok(design.links.iter().flat_map(|l| [l.alpha, l.a, l.d]).collect())
    }

    /// Uniform draw from the per-dimension boxes.
    pub fn sample_box<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| rng.gen_range(self.lower(i)..=self.upper(i)))
            .collect()
    }

    /// Uniform draw from the boxes conditioned on passing the static design
    /// limits, by rejection.
    pub fn sample_valid<R: Rng + ?Sized>(&self, rng: &mut R, budget: u64) -> Option<(Vec<f64>, u64)> {
        for attempt in 1..=budget {
            let x = self.sample_box(rng);
            if check_design_limits(&self.decode(&x), &self.limits).is_valid() {
                return Some((x, attempt));
            }
        }
        None
    }

    fn clamp(&self, x: &mut [f64], v: &mut [f64]) {
        for i in 0..x.len() {
            let (lo, hi) = (self.lower(i), self.upper(i));
            if x[i] < lo || x[i] > hi {
                x[i] = x[i].clamp(lo, hi);
                v[i] = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pso,
    RaPso,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pso" => Ok(Self::Pso),
            "rapso" | "ra-pso" => Ok(Self::RaPso),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pso => "pso",
            Self::RaPso => "rapso",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// Twist angles move only on iterations divisible by this (RA-PSO).
    pub angular_period: usize,
    pub stall_iterations: usize,
    pub tolerance: f64,
    /// When false, RA-PSO treats every particle as invalid for the update
    /// rule, which makes it behave like the standard swarm.
    pub exploit_valid: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 400,
            iterations: 200,
            inertia: 0.8,
            cognitive: 0.4,
            social: 0.6,
            c_min: -0.5,
            c_max: 0.5,
            angular_period: 2,
            stall_iterations: 20,
            tolerance: 1e-4,
            exploit_valid: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.iterations == 0 || self.angular_period == 0 {
            return Err(Error::InvalidArgument(
                "particles, iterations and D must be at least 1".into(),
            ));
        }
        if !(self.c_min <= self.c_max) {
            return Err(Error::InvalidArgument("c_min must not exceed c_max".into()));
        }
        let finite = [
            self.inertia,
            self.cognitive,
            self.social,
            self.c_min,
            self.c_max,
            self.tolerance,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("swarm constants must be finite".into()));
        }
        Ok(())
    }
}

/// Standard velocity update for one dimension.
#[allow(clippy::too_many_arguments)]
pub fn standard_velocity(v: f64, x: f64, personal: f64, global: f64, cfg: &PsoConfig, beta1: f64, beta2: f64) -> f64 {
    cfg.inertia * v + beta1 * cfg.cognitive * (personal - x) + beta2 * cfg.social * (global - x)
}

/// Velocity of a valid RA-PSO particle for one dimension.
pub fn perturbed_velocity(v: f64, range: f64, u: f64) -> f64 {
    v + u * range
}

/// Whether twist angles move at step `k` under angular period `d`.
pub fn angular_update(k: usize, d: usize) -> bool {
    k.is_multiple_of(d)
}

/// Something that scores designs; implemented by [`RobotFitness`] and by
/// any `Fn(&RobotDesign, u64) -> FitnessReport`.
pub trait DesignObjective: Sync {
    fn evaluate(&self, design: &RobotDesign, seed: u64) -> FitnessReport;
}

impl<F> DesignObjective for F
where
    F: Fn(&RobotDesign, u64) -> FitnessReport + Sync,
{
    fn evaluate(&self, design: &RobotDesign, seed: u64) -> FitnessReport {
        self(design, seed)
    }
}

/// The robot fitness of a design against one recorded task.
#[derive(Debug, Clone)]
pub struct RobotFitness {
    pub task: RecordedTask,
    pub settings: FitnessSettings,
}

impl RobotFitness {
    pub fn new(task: RecordedTask, settings: FitnessSettings) -> Result<Self> {
        settings.validate(&task)?;
        Ok(Self { task, settings })
    }
}

impl DesignObjective for RobotFitness {
    fn evaluate(&self, design: &RobotDesign, seed: u64) -> FitnessReport {
        robot_fitness(design, &self.task, &self.settings, seed)
            .expect("settings were validated against the task at construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Fitness of the current position, `+inf` if invalid or not yet evaluated.
    pub fitness: f64,
    pub valid: bool,
    pub best_position: Option<Vec<f64>>,
    pub best_fitness: f64,
    pub last_report: Option<FitnessReport>,
}

impl Particle {
    fn at(position: Vec<f64>) -> Self {
        let n = position.len();
        Self {
            position,
            velocity: vec![0.0; n],
            fitness: f64::INFINITY,
            valid: false,
            best_position: None,
            best_fitness: f64::INFINITY,
            last_report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBest {
    pub position: Vec<f64>,
    pub fitness: f64,
    pub report: FitnessReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iter: usize,
    /// Best fitness so far, `None` while no valid design has been seen.
    pub best: Option<f64>,
    pub n_valid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub global_best: Option<GlobalBest>,
    /// Evaluated generations so far; the initial swarm is generation 1.
    pub iteration: usize,
    pub seed: u64,
    pub history: Vec<HistoryEntry>,
    /// Design evaluations performed.
    pub evaluations: usize,
}

/// Draw `count` particles uniformly from the design boxes, keeping only
/// those inside the static limits. Velocities start at zero; nothing is
/// evaluated yet.
pub fn sample_initial_swarm(space: &DesignSpace, count: usize, seed: u64) -> Result<SwarmState> {
    if count == 0 {
        return Err(Error::InvalidArgument("the swarm needs at least one particle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SAMPLE_STREAM));
    let budget = SAMPLE_ATTEMPTS_PER_PARTICLE * count as u64;
    let mut attempts = 0;
    let mut particles = Vec::with_capacity(count);
    while particles.len() < count {
        match space.sample_valid(&mut rng, budget - attempts) {
            Some((x, used)) => {
                attempts += used;
                particles.push(Particle::at(x));
            }
            None => {
                return Err(Error::RejectionBudget {
                    attempts: budget,
                    accepted: particles.len(),
                    wanted: count,
                })
            }
        }
    }
    Ok(SwarmState {
        particles,
        global_best: None,
        iteration: 0,
        seed,
        history: Vec::new(),
        evaluations: 0,
    })
}

/// Evaluate every particle at its current position (in parallel), then
/// update personal and global bests and append a history entry.
pub fn evaluate_swarm<O: DesignObjective + ?Sized>(state: &mut SwarmState, space: &DesignSpace, objective: &O) {
    let seed = state.seed;
    let reports: Vec<FitnessReport> = state
        .particles
        .par_iter()
        .map(|p| objective.evaluate(&space.decode(&p.position), evaluation_seed(seed, &p.position)))
        .collect();
    state.evaluations += reports.len();
    let mut n_valid = 0;
    for (p, report) in state.particles.iter_mut().zip(reports) {
        p.valid = report.is_valid() && report.combined.is_finite();
        p.fitness = if p.valid { report.combined } else { f64::INFINITY };
        if p.valid {
            n_valid += 1;
            if p.fitness < p.best_fitness {
                p.best_fitness = p.fitness;
                p.best_position = Some(p.position.clone());
            }
            if state.global_best.as_ref().is_none_or(|g| p.fitness < g.fitness) {
                state.global_best = Some(GlobalBest {
                    position: p.position.clone(),
                    fitness: p.fitness,
                    report: report.clone(),
                });
            }
        }
        p.last_report = Some(report);
    }
    state.history.push(HistoryEntry {
        iter: state.iteration,
        best: state.global_best.as_ref().map(|g| g.fitness),
        n_valid,
    });
    state.iteration += 1;
}

fn move_particles(state: &mut SwarmState, space: &DesignSpace, cfg: &PsoConfig, algorithm: Algorithm) {
    let k = state.iteration;
    let gbest = state.global_best.as_ref().map(|g| g.position.clone());
    let freeze = algorithm == Algorithm::RaPso && !angular_update(k, cfg.angular_period);
    for (idx, p) in state.particles.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            derive_seed(state.seed, MOVE_STREAM),
            ((k as u64) << 32) | idx as u64,
        ));
        let Some(g) = gbest.as_deref() else {
            // Nothing valid yet: keep drawing fresh candidates from the limits.
            if !p.valid {
                if let Some((x, _)) = space.sample_valid(&mut rng, SAMPLE_ATTEMPTS_PER_PARTICLE) {
                    *p = Particle {
                        best_position: p.best_position.take(),
                        best_fitness: p.best_fitness,
                        ..Particle::at(x)
                    };
                }
            }
            continue;
        };
        let exploit = algorithm == Algorithm::RaPso && cfg.exploit_valid && p.valid;
        let old = p.position.clone();
        let old_v = p.velocity.clone();
        if exploit {
            for i in 0..space.dim() {
                let u = rng.gen_range(cfg.c_min..=cfg.c_max);
                p.velocity[i] = perturbed_velocity(p.velocity[i], space.range(i), u);
            }
        } else {
            let beta1: f64 = rng.gen();
            let beta2: f64 = rng.gen();
            let personal = p.best_position.clone().unwrap_or_else(|| p.position.clone());
            for i in 0..space.dim() {
                p.velocity[i] = standard_velocity(p.velocity[i], p.position[i], personal[i], g[i], cfg, beta1, beta2);
            }
        }
        for i in 0..space.dim() {
            let r = space.range(i);
            p.velocity[i] = p.velocity[i].clamp(-r, r);
            p.position[i] += p.velocity[i];
        }
        space.clamp(&mut p.position, &mut p.velocity);
        if freeze {
            for i in (0..space.dim()).filter(|&i| space.is_angular(i)) {
                p.position[i] = old[i];
                p.velocity[i] = old_v[i];
            }
        }
    }
}

/// One standard-swarm iteration: move, then evaluate.
pub fn pso_step<O: DesignObjective + ?Sized>(
    state: &mut SwarmState,
    space: &DesignSpace,
    cfg: &PsoConfig,
    objective: &O,
) {
    move_particles(state, space, cfg, Algorithm::Pso);
    evaluate_swarm(state, space, objective);
}

/// One RA-PSO iteration: move, then evaluate.
pub fn rapso_step<O: DesignObjective + ?Sized>(
    state: &mut SwarmState,
    space: &DesignSpace,
    cfg: &PsoConfig,
    objective: &O,
) {
    move_particles(state, space, cfg, Algorithm::RaPso);
    evaluate_swarm(state, space, objective);
}

/// Index into `history` of the first generation with a finite best that is
/// followed by `stall` consecutive improvements below `tolerance`.
pub fn convergence_index(history: &[HistoryEntry], stall: usize, tolerance: f64) -> Option<usize> {
    let mut run = 0;
    for j in 1..history.len() {
        match (history[j - 1].best, history[j].best) {
            (Some(prev), Some(cur)) if prev - cur < tolerance => {
                run += 1;
                if run >= stall {
                    return Some(j - stall);
                }
            }
            _ => run = 0,
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub dof: usize,
    pub best: Option<GlobalBest>,
    pub design: Option<RobotDesign>,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
    pub converged_at: Option<usize>,
}

impl OptimizationResult {
    pub fn to_document(&self, config: &PsoConfig) -> OptimizationDocument {
        OptimizationDocument {
            algorithm: self.algorithm,
            seed: self.seed,
            dof: self.dof,
            config: *config,
            design: self.design.clone(),
            report: self.best.as_ref().map(|b| b.report.to_document()),
            evaluations: self.evaluations,
            converged_at: self.converged_at,
            history: self.history.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationDocument {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub dof: usize,
    pub config: PsoConfig,
    pub design: Option<RobotDesign>,
    pub report: Option<ReportDocument>,
    pub evaluations: usize,
    pub converged_at: Option<usize>,
    pub history: Vec<HistoryEntry>,
}

/// Sample, evaluate, then iterate until `cfg.iterations` steps have run or
/// the best fitness stalls. `best` is `None` when no valid design was found.
pub fn run_design_optimization<O: DesignObjective + ?Sized>(
    objective: &O,
    space: &DesignSpace,
    cfg: &PsoConfig,
    algorithm: Algorithm,
    seed: u64,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut state = sample_initial_swarm(space, cfg.particles, seed)?;
    evaluate_swarm(&mut state, space, objective);
    let mut converged_at = None;
    for _ in 0..cfg.iterations {
        match algorithm {
            Algorithm::Pso => pso_step(&mut state, space, cfg, objective),
            Algorithm::RaPso => rapso_step(&mut state, space, cfg, objective),
        }
        if let Some(w) = convergence_index(&state.history, cfg.stall_iterations, cfg.tolerance) {
            converged_at = Some(w);
            break;
        }
    }
    log::debug!(
        "{algorithm} seed {seed}: {} generations, best {:?}",
        state.history.len(),
        state.global_best.as_ref().map(|g| g.fitness)
    );
    Ok(OptimizationResult {
        algorithm,
        seed,
        dof: space.dof,
        design: state.global_best.as_ref().map(|g| space.decode(&g.position)),
        best: state.global_best,
        history: state.history,
        evaluations: state.evaluations,
        converged_at,
    })
}

/// Single-frame multi-point IK: the minimal temporal cost and its
/// configuration.
pub fn inner_ik_solve(
    design: &RobotDesign,
    frame: &MarkerFrame,
    q_prev: Option<&JointConfig>,
    settings: &FitnessSettings,
    seed: u64,
) -> Result<(f64, JointConfig)> {
    let sol = temporal_fitness(design, frame, q_prev, settings, seed)?;
    Ok((sol.cost, sol.q))
}
