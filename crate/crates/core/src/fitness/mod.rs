//! How well a design tracks a recorded task.
//!
//! Per frame, the temporal cost of a configuration is the weighted RMS
//! distance of the markers from the arm (markers projected in order onto
//! the arm polyline) plus a weighted hand-orientation residual. The
//! temporal fitness is its minimum over reachable configurations near the
//! previous frame's solution, found with the joint-space swarm. The path
//! fitness averages those minima over the task, and the robot fitness adds
//! the area penalty that keeps the arm from bulging away from the marker
//! lines.

pub mod area;
pub mod projection;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demonstration::{MarkerFrame, RecordedTask};
use crate::error::{Error, Result};
use crate::kinematics::{
    arm_polyline, arm_polyline_into, check_design_limits, forward_kinematics, total_length, wrap_angle, ArmPolyline,
    ContinuityNorm, DesignLimits, EulerRpy, JointConfig, LimitReport, RobotDesign,
};
use crate::optimize::derive_seed;
use crate::optimize::joint_swarm::{least_squares_polish, minimize, JointRegion, JointSolution, JointSwarmConfig};

pub use area::area_penalty;
pub use projection::{Projection, Projector, SigmaAssignment};

/// Tolerance on `w0 + sum(w) = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    /// Hand-orientation weight `w0`.
    pub orientation: f64,
    /// Per-marker position weights, base to hand.
    pub position: Vec<f64>,
    pub lambda_f: f64,
    pub lambda_e: f64,
}

impl FitnessWeights {
    /// Position-dominated weighting used for pick-and-place style tasks.
    pub fn scenario_one() -> Self {
        Self {
            orientation: 0.0,
            position: vec![1.0 / 6.0, 1.0 / 3.0, 0.5],
            lambda_f: 15.0,
            lambda_e: 5.0,
        }
    }

    /// Hand-dominated weighting with orientation tracking (welding style).
    pub fn scenario_two() -> Self {
        Self {
            orientation: 0.2,
            position: vec![0.0, 0.1, 0.7],
            lambda_f: 15.0,
            lambda_e: 5.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.orientation + self.position.iter().sum::<f64>()
    }

    pub fn validate(&self, markers: usize) -> Result<()> {
        if self.position.len() != markers {
            return Err(Error::Dimension {
                expected: markers,
                actual: self.position.len(),
            });
        }
        let all = std::iter::once(self.orientation)
            .chain(self.position.iter().copied())
            .chain([self.lambda_f, self.lambda_e]);
        if all.clone().any(|w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        if (self.sum() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "orientation and position weights sum to {}, not 1",
                self.sum()
            )));
        }
        Ok(())
    }

    /// Rescale `w0, w1..wm` to sum to one. Returns `None` if they are all zero.
    pub fn normalized(&self) -> Option<Self> {
        let s = self.sum();
        if !(s > 0.0) {
            return None;
        }
        Some(Self {
            orientation: self.orientation / s,
            position: self.position.iter().map(|w| w / s).collect(),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkSettings {
    /// Continuity bound between consecutive frames, radians.
    pub epsilon: f64,
    pub continuity_norm: ContinuityNorm,
    /// Required end-effector accuracy at the first frame, meters.
    pub ee_gate: f64,
    pub solver: JointSwarmConfig,
    /// Independent swarm runs for the first frame, which is searched over
    /// the whole joint box.
    pub start_restarts: usize,
    /// Independent runs of the end-effector reach check; stops at the
    /// first run within `ee_gate`.
    pub reach_restarts: usize,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            epsilon: 10f64.to_radians(),
            continuity_norm: ContinuityNorm::Euclidean,
            ee_gate: 0.001,
            solver: JointSwarmConfig::default(),
            start_restarts: 3,
            reach_restarts: 10,
        }
    }
}

impl IkSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.ee_gate > 0.0) {
            return Err(Error::InvalidArgument("epsilon and ee_gate must be positive".into()));
        }
        if self.solver.particles == 0 {
            return Err(Error::InvalidArgument(
                "the joint swarm needs at least one particle".into(),
            ));
        }
        Ok(())
    }
}

/// Everything besides the design and the task that a fitness evaluation
/// depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSettings {
    pub limits: DesignLimits,
    pub weights: FitnessWeights,
    pub ik: IkSettings,
    /// Arc-length sample spacing for the area penalty, meters.
    pub delta_m: f64,
}

impl Default for FitnessSettings {
    fn default() -> Self {
        Self {
            limits: DesignLimits::default(),
            weights: FitnessWeights::scenario_one(),
            ik: IkSettings::default(),
            delta_m: 0.01,
        }
    }
}

impl FitnessSettings {
    pub fn validate(&self, task: &RecordedTask) -> Result<()> {
        self.limits.validate()?;
        self.weights.validate(task.marker_count())?;
        self.ik.validate()?;
        if !(self.delta_m > 0.0) {
            return Err(Error::InvalidArgument("delta_m must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvalidReason {
    DesignLimits {
        report: LimitReport,
    },
    /// Some hand marker lies farther from the base than the arm is long.
    OutOfReach {
        max_hand_distance: f64,
        length: f64,
    },
    /// The end effector cannot get within the gate of the first hand marker.
    UnreachableStart {
        ee_error: f64,
        gate: f64,
    },
    SolverDiverged {
        frame: usize,
    },
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DesignLimits { report } => write!(f, "design limits violated: {report}"),
            Self::OutOfReach {
                max_hand_distance,
                length,
            } => write!(
                f,
                "hand marker at {max_hand_distance:.4} m is beyond the arm length {length:.4} m"
            ),
            Self::UnreachableStart { ee_error, gate } => write!(
                f,
                "end effector misses the first hand position by {:.3} mm (gate {:.3} mm)",
                ee_error * 1e3,
                gate * 1e3
            ),
            Self::SolverDiverged { frame } => write!(f, "joint solver produced a non-finite cost at frame {frame}"),
        }
    }
}

/// Residual between two Euler triples, each component wrapped to `(-pi, pi]`.
pub fn euler_residual(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| wrap_angle(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Temporal cost of configuration `q` against `frame` with an explicit
/// marker-to-arm association, meters (plus the weighted orientation term).
pub fn temporal_cost(
    design: &RobotDesign,
    q: &JointConfig,
    frame: &MarkerFrame,
    sigma: &SigmaAssignment,
    weights: &FitnessWeights,
) -> Result<f64> {
    let m = frame.markers.len();
    if sigma.as_slice().len() != m || weights.position.len() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: sigma.as_slice().len().min(weights.position.len()),
        });
    }
    let poly = arm_polyline(design, q)?;
    let mut sum = 0.0;
    for ((p, &s), w) in frame.markers.iter().zip(sigma.as_slice()).zip(&weights.position) {
        sum += w * (poly.point_at(s)? - p).norm_squared();
    }
    let mut g = sum.sqrt() / m as f64;
    if weights.orientation > 0.0 {
        let euler = forward_kinematics(design, q)?.euler.to_array();
        g += weights.orientation * euler_residual(&euler, &frame.hand_euler);
    }
    Ok(g)
}

/// Exact monotone association of the frame's markers with the arm at `q`.
pub fn project_markers(
    design: &RobotDesign,
    q: &JointConfig,
    frame: &MarkerFrame,
    weights: &FitnessWeights,
) -> Result<Projection> {
    if weights.position.len() != frame.markers.len() {
        return Err(Error::Dimension {
            expected: frame.markers.len(),
            actual: weights.position.len(),
        });
    }
    let poly = arm_polyline(design, q)?;
    Ok(Projector::new().project(&poly, &frame.markers, &weights.position))
}

/// Temporal cost with the association resolved by exact projection; the
/// objective handed to the joint swarm.
struct FrameCost<'a> {
    design: &'a RobotDesign,
    frame: &'a MarkerFrame,
    weights: &'a FitnessWeights,
    poly: ArmPolyline,
    projector: Projector,
}

impl<'a> FrameCost<'a> {
    fn new(design: &'a RobotDesign, frame: &'a MarkerFrame, weights: &'a FitnessWeights) -> Self {
        Self {
            design,
            frame,
            weights,
            poly: ArmPolyline::with_capacity(2 * design.dof() + 3),
            projector: Projector::new(),
        }
    }

    fn cost(&mut self, q: &[f64]) -> f64 {
        let Ok(rot) = arm_polyline_into(self.design, q, &mut self.poly) else {
            return f64::INFINITY;
        };
        let obj = self
            .projector
            .objective(&self.poly, &self.frame.markers, &self.weights.position);
        let mut g = obj.max(0.0).sqrt() / self.frame.markers.len() as f64;
        if self.weights.orientation > 0.0 {
            let euler = EulerRpy::from_rotation(&rot).to_array();
            g += self.weights.orientation * euler_residual(&euler, &self.frame.hand_euler);
        }
        g
    }

    /// Residual vector whose squared norm is `A^2 + (w0 * |e|)^2`, where
    /// `A` is the position term and `e` the wrapped Euler residual.
    fn residuals(&mut self, q: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let m = self.frame.markers.len();
        let rows = 3 * m + if self.weights.orientation > 0.0 { 3 } else { 0 };
        let Ok(rot) = arm_polyline_into(self.design, q, &mut self.poly) else {
            out.resize(rows, f64::INFINITY);
            return;
        };
        let proj = self
            .projector
            .project(&self.poly, &self.frame.markers, &self.weights.position);
        let total = self.poly.length();
        for ((p, &s), &w) in self
            .frame
            .markers
            .iter()
            .zip(proj.sigma.as_slice())
            .zip(&self.weights.position)
        {
            let d = (self.poly.point_at_length(s * total) - p) * (w.sqrt() / m as f64);
            out.extend(d.iter());
        }
        if self.weights.orientation > 0.0 {
            let euler = EulerRpy::from_rotation(&rot).to_array();
            out.extend(
                euler
                    .iter()
                    .zip(&self.frame.hand_euler)
                    .map(|(b, u)| self.weights.orientation * wrap_angle(b - u)),
            );
        }
    }

    fn sigma(&mut self, q: &[f64]) -> Vec<f64> {
        let _ = arm_polyline_into(self.design, q, &mut self.poly);
        self.projector
            .project(&self.poly, &self.frame.markers, &self.weights.position)
            .sigma
            .into_inner()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSolution {
    /// Minimal temporal cost found.
    pub cost: f64,
    pub q: JointConfig,
    pub sigma: Vec<f64>,
    pub evaluations: usize,
}

fn frame_region(
    design: &RobotDesign,
    q_prev: Option<&JointConfig>,
    ik: &IkSettings,
    limits: &DesignLimits,
) -> JointRegion {
    match q_prev {
        None => JointRegion::full(design.dof(), limits.q_min, limits.q_max),
        Some(prev) => JointRegion::around(
            prev.as_slice(),
            ik.epsilon,
            ik.continuity_norm,
            limits.q_min,
            limits.q_max,
        ),
    }
}

fn solve_frame(
    design: &RobotDesign,
    frame: &MarkerFrame,
    q_prev: Option<&JointConfig>,
    extra_seed: Option<&[f64]>,
    settings: &FitnessSettings,
    seed: u64,
) -> TemporalSolution {
    let region = frame_region(design, q_prev, &settings.ik, &settings.limits);
    let mut cost = FrameCost::new(design, frame, &settings.weights);
    let mut seeds: Vec<&[f64]> = Vec::new();
    if let Some(prev) = q_prev {
        seeds.push(prev.as_slice());
    }
    if let Some(extra) = extra_seed {
        seeds.push(extra);
    }
    let runs = if q_prev.is_none() {
        settings.ik.start_restarts.max(1)
    } else {
        1
    };
    let mut best: Option<JointSolution> = None;
    let mut evaluations = 0;
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, run as u64));
        let run_seeds = if run == 0 { &seeds[..] } else { &[][..] };
        let mut sol = minimize(|q| cost.cost(q), &region, run_seeds, &settings.ik.solver, &mut rng);
        evaluations += sol.evaluations;
        if settings.ik.solver.lm_iterations > 0 && sol.cost.is_finite() && sol.cost > settings.ik.solver.target {
            let ls = least_squares_polish(
                |q, out| cost.residuals(q, out),
                &region,
                &sol.q,
                settings.ik.solver.lm_iterations,
            );
            evaluations += ls.evaluations + 1;
            let c = cost.cost(&ls.q);
            if c < sol.cost {
                sol.q = ls.q;
                sol.cost = c;
            }
        }
        if best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(sol);
        }
        if best.as_ref().is_some_and(|b| b.cost <= settings.ik.solver.target) {
            break;
        }
    }
    let best = best.expect("at least one run");
    let sigma = cost.sigma(&best.q);
    TemporalSolution {
        cost: best.cost,
        q: JointConfig(best.q),
        sigma,
        evaluations,
    }
}

/// Minimal temporal cost for one frame. With `q_prev` the search is
/// restricted to the continuity ball around it and seeded with it;
/// without, the whole joint box is searched.
pub fn temporal_fitness(
    design: &RobotDesign,
    frame: &MarkerFrame,
    q_prev: Option<&JointConfig>,
    settings: &FitnessSettings,
    seed: u64,
) -> Result<TemporalSolution> {
    if let Some(prev) = q_prev {
        if prev.len() != design.dof() {
            return Err(Error::Dimension {
                expected: design.dof(),
                actual: prev.len(),
            });
        }
    }
    if settings.weights.position.len() != frame.markers.len() {
        return Err(Error::Dimension {
            expected: frame.markers.len(),
            actual: settings.weights.position.len(),
        });
    }
    Ok(solve_frame(design, frame, q_prev, None, settings, seed))
}

/// Closest approach of the end effector to `target` over the joint box.
pub fn reach_error(
    design: &RobotDesign,
    target: &Vector3<f64>,
    settings: &FitnessSettings,
    seed: u64,
) -> JointSolution {
    let region = JointRegion::full(design.dof(), settings.limits.q_min, settings.limits.q_max);
    let mut q_buf = JointConfig::zeros(design.dof());
    let mut q_res = JointConfig::zeros(design.dof());
    let mut objective = |q: &[f64]| {
        q_buf.0.copy_from_slice(q);
        match forward_kinematics(design, &q_buf) {
            Ok(pose) => (pose.position - target).norm(),
            Err(_) => f64::INFINITY,
        }
    };
    let mut best: Option<JointSolution> = None;
    for run in 0..settings.ik.reach_restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + run as u64));
        let mut sol = minimize(&mut objective, &region, &[], &settings.ik.solver, &mut rng);
        if settings.ik.solver.lm_iterations > 0 && sol.cost.is_finite() {
            let ls = least_squares_polish(
                |q, out| {
                    out.clear();
                    q_res.0.copy_from_slice(q);
                    match forward_kinematics(design, &q_res) {
                        Ok(pose) => out.extend((pose.position - target).iter()),
                        Err(_) => out.resize(3, f64::INFINITY),
                    }
                },
                &region,
                &sol.q,
                settings.ik.solver.lm_iterations,
            );
            sol.evaluations += ls.evaluations;
            let c = ls.cost.sqrt();
            if c < sol.cost {
                sol.q = ls.q;
                sol.cost = c;
            }
        }
        let total = best.as_ref().map_or(0, |b| b.evaluations) + sol.evaluations;
        if best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(JointSolution {
                evaluations: total,
                ..sol
            });
        } else if let Some(b) = best.as_mut() {
            b.evaluations = total;
        }
        if best.as_ref().is_some_and(|b| b.cost <= settings.ik.ee_gate) {
            break;
        }
    }
    best.expect("at least one run")
}

/// Sequentially solved joint path and its mean temporal fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFit {
    pub temporal: Vec<f64>,
    /// Mean of `temporal`, meters.
    pub path_fitness: f64,
    pub joint_path: Vec<JointConfig>,
    pub sigma_path: Vec<Vec<f64>>,
    /// Closest end-effector approach to the first hand marker.
    pub start_error: f64,
    pub evaluations: usize,
}

/// Solve every frame in order, each seeded by (and within the continuity
/// bound of) the previous solution. Fails fast with
/// [`InvalidReason::UnreachableStart`] if the end effector cannot reach the
/// first hand position within the gate.
pub fn path_fitness(
    design: &RobotDesign,
    task: &RecordedTask,
    settings: &FitnessSettings,
    seed: u64,
) -> Result<std::result::Result<PathFit, InvalidReason>> {
    settings.validate(task)?;
    let frames = task.frames();
    let reach = reach_error(design, &frames[0].hand(), settings, derive_seed(seed, u64::MAX));
    if !(reach.cost <= settings.ik.ee_gate) {
        return Ok(Err(InvalidReason::UnreachableStart {
            ee_error: reach.cost,
            gate: settings.ik.ee_gate,
        }));
    }
    let mut evaluations = reach.evaluations;
    let mut temporal = Vec::with_capacity(frames.len());
    let mut joint_path: Vec<JointConfig> = Vec::with_capacity(frames.len());
    let mut sigma_path = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let prev = joint_path.last();
        let extra = if t == 0 { Some(reach.q.as_slice()) } else { None };
        let sol = solve_frame(design, frame, prev, extra, settings, derive_seed(seed, t as u64));
        if !sol.cost.is_finite() {
            return Ok(Err(InvalidReason::SolverDiverged { frame: t }));
        }
        evaluations += sol.evaluations;
        temporal.push(sol.cost);
        joint_path.push(sol.q);
        sigma_path.push(sol.sigma);
    }
    let path_fitness = temporal.iter().sum::<f64>() / temporal.len() as f64;
    Ok(Ok(PathFit {
        temporal,
        path_fitness,
        joint_path,
        sigma_path,
        start_error: reach.cost,
        evaluations,
    }))
}

/// Static part of the feasibility test: design limits plus the necessary
/// reach condition, and the first-frame gate when its result is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub limits: LimitReport,
    pub length: f64,
    pub max_hand_distance: f64,
    pub reach_ok: bool,
    /// `None` until the first frame has been solved.
    pub start_ok: Option<bool>,
}

impl GateVerdict {
    pub fn passes(&self) -> bool {
        self.limits.is_valid() && self.reach_ok && self.start_ok != Some(false)
    }

    pub fn reason(&self) -> Option<InvalidReason> {
        if !self.limits.is_valid() {
            return Some(InvalidReason::DesignLimits {
                report: self.limits.clone(),
            });
        }
        if !self.reach_ok {
            return Some(InvalidReason::OutOfReach {
                max_hand_distance: self.max_hand_distance,
                length: self.length,
            });
        }
        None
    }
}

pub fn validity_gate(
    design: &RobotDesign,
    limits: &DesignLimits,
    task: &RecordedTask,
    start_error: Option<(f64, f64)>,
) -> GateVerdict {
    let length = total_length(design);
    let max_hand_distance = task.max_hand_distance();
    GateVerdict {
        limits: check_design_limits(design, limits),
        length,
        max_hand_distance,
        reach_ok: max_hand_distance <= length,
        start_ok: start_error.map(|(err, gate)| err <= gate),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    /// Per-frame temporal fitness, meters. Partial or empty when invalid.
    pub temporal: Vec<f64>,
    pub path_fitness: f64,
    pub area: f64,
    /// `lambda_f * f + lambda_e * E`, or `+inf` for an invalid design.
    pub combined: f64,
    pub joint_path: Vec<JointConfig>,
    pub sigma_path: Vec<Vec<f64>>,
    pub start_error: Option<f64>,
    pub invalid: Option<InvalidReason>,
    /// Objective evaluations spent by the joint solver.
    pub evaluations: usize,
}

impl FitnessReport {
    pub fn invalid(reason: InvalidReason) -> Self {
        Self {
            temporal: Vec::new(),
            path_fitness: f64::INFINITY,
            area: f64::INFINITY,
            combined: f64::INFINITY,
            joint_path: Vec::new(),
            sigma_path: Vec::new(),
            start_error: None,
            invalid: Some(reason),
            evaluations: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }

    /// Serializable view: fitness components in millimetres, the combined
    /// objective in the meter-consistent units it is optimised in, joint
    /// angles in radians.
    pub fn to_document(&self) -> ReportDocument {
        let finite = |v: f64| v.is_finite().then_some(v);
        ReportDocument {
            valid: self.is_valid(),
            reason: self.invalid.as_ref().map(|r| r.to_string()),
            invalid: self.invalid.clone(),
            combined: finite(self.combined),
            path_fitness_mm: finite(self.path_fitness * 1e3),
            area_mm: finite(self.area * 1e3),
            start_error_mm: self.start_error.map(|e| e * 1e3),
            temporal_mm: self.temporal.iter().map(|g| g * 1e3).collect(),
            joint_path: self.joint_path.clone(),
            sigma_path: self.sigma_path.clone(),
        }
    }

    /// One-line summary, e.g. `fitness 0.430  f 17.59 mm  E 33.23 mm`.
    pub fn summary(&self) -> String {
        match &self.invalid {
            Some(reason) => format!("invalid design: {reason}"),
            None => format!(
                "fitness {:.3}  f {:.2} mm  E {:.2} mm",
                self.combined,
                self.path_fitness * 1e3,
                self.area * 1e3
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invalid: Option<InvalidReason>,
    pub combined: Option<f64>,
    pub path_fitness_mm: Option<f64>,
    pub area_mm: Option<f64>,
    pub start_error_mm: Option<f64>,
    pub temporal_mm: Vec<f64>,
    pub joint_path: Vec<JointConfig>,
    pub sigma_path: Vec<Vec<f64>>,
}

/// `lambda_f * f + lambda_e * E`.
pub fn combine(weights: &FitnessWeights, path_fitness: f64, area: f64) -> f64 {
    weights.lambda_f * path_fitness + weights.lambda_e * area
}

/// Full evaluation: validity gates, sequential joint path, area penalty and
/// the weighted combination. Invalid designs report `+inf`.
pub fn robot_fitness(
    design: &RobotDesign,
    task: &RecordedTask,
    settings: &FitnessSettings,
    seed: u64,
) -> Result<FitnessReport> {
    settings.validate(task)?;
    let verdict = validity_gate(design, &settings.limits, task, None);
    if let Some(reason) = verdict.reason() {
        return Ok(FitnessReport::invalid(reason));
    }
    let fit = match path_fitness(design, task, settings, seed)? {
        Ok(fit) => fit,
        Err(reason) => {
            let mut report = FitnessReport::invalid(reason.clone());
            if let InvalidReason::UnreachableStart { ee_error, .. } = reason {
                report.start_error = Some(ee_error);
            }
            return Ok(report);
        }
    };
    let area = area_penalty(design, task, &fit.joint_path, &fit.sigma_path, settings.delta_m)?;
    Ok(FitnessReport {
        combined: combine(&settings.weights, fit.path_fitness, area),
        temporal: fit.temporal,
        path_fitness: fit.path_fitness,
        area,
        joint_path: fit.joint_path,
        sigma_path: fit.sigma_path,
        start_error: Some(fit.start_error),
        invalid: None,
        evaluations: fit.evaluations,
    })
}
