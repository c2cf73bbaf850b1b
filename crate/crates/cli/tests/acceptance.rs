//! Acceptance suite. Each criterion prints one PASS/FAIL line to stderr
//! (bypassing the test harness capture) and then asserts.
//!
//! Criteria run one at a time under a lock so wall-clock budgets are not
//! shared with the other tests in this binary.

use std::io::Write as _;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use armsynth_cli::commands::{self, Globals};
use armsynth_cli::config::RunConfig;
use armsynth_cli::urdf::export_urdf;
use armsynth_core::demonstration::{joint_path_through, synthesize_task, RecordedTask, SynthesisOptions};
use armsynth_core::fitness::{project_markers, robot_fitness, FitnessReport, FitnessSettings, FitnessWeights};
use armsynth_core::harness::{computational_effort, median};
use armsynth_core::kinematics::{
    arm_polyline, dh_transform, ee_transform, forward_kinematics, ArmPolyline, DesignLimits, DhLink, JointConfig,
    RobotDesign,
};
use armsynth_core::optimize::{
    run_design_optimization, sample_initial_swarm, Algorithm, DesignSpace, OptimizationResult, PsoConfig, RobotFitness,
};
use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance criterion {id}: {status}: {detail}");
}

// ---------------------------------------------------------------- oracles

fn mat(rows: [[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| rows[i][j])
}

fn rot_z(t: f64) -> Matrix4<f64> {
    let (s, c) = t.sin_cos();
    mat([
        [c, -s, 0.0, 0.0],
        [s, c, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

fn rot_x(t: f64) -> Matrix4<f64> {
    let (s, c) = t.sin_cos();
    mat([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, -s, 0.0],
        [0.0, s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

fn rot_y(t: f64) -> Matrix4<f64> {
    let (s, c) = t.sin_cos();
    mat([
        [c, 0.0, s, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [-s, 0.0, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
    mat([
        [1.0, 0.0, 0.0, x],
        [0.0, 1.0, 0.0, y],
        [0.0, 0.0, 1.0, z],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

fn elementary(link: &DhLink, theta: f64) -> Matrix4<f64> {
    rot_z(theta) * trans(0.0, 0.0, link.d) * trans(link.a, 0.0, 0.0) * rot_x(link.alpha)
}

fn elementary_chain(design: &RobotDesign, q: &[f64]) -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    for (link, theta) in design.links.iter().zip(q) {
        t *= elementary(link, *theta);
    }
    if let Some(tool) = &design.tool {
        t *= elementary(tool, 0.0);
    }
    t
}

fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).abs().max()
}

fn random_link(rng: &mut ChaCha8Rng) -> DhLink {
    DhLink::new(
        rng.gen_range(-1.6..1.6),
        rng.gen_range(0.0..0.5),
        rng.gen_range(0.0..0.5),
    )
}

fn random_design(rng: &mut ChaCha8Rng, max_dof: usize) -> RobotDesign {
    let n = rng.gen_range(1..=max_dof);
    let links = (0..n).map(|_| random_link(rng)).collect();
    let tool = rng.gen_bool(0.3).then(|| random_link(rng));
    RobotDesign::new(links, tool).unwrap()
}

/// Every monotone sigma vector on a uniform arc-length grid (plus the
/// polyline breakpoints), minimised by a running-minimum sweep.
fn grid_oracle(poly: &ArmPolyline, markers: &[Vector3<f64>], w: &[f64], step: f64) -> f64 {
    let steps = (1.0 / step).round() as usize;
    let mut arc: Vec<f64> = (0..=steps).map(|k| poly.length() * k as f64 / steps as f64).collect();
    arc.extend(poly.cumulative.iter().copied());
    arc.sort_by(f64::total_cmp);
    let pts: Vec<Vector3<f64>> = arc.iter().map(|&s| poly.point_at_length(s)).collect();
    let mut best = vec![0.0; pts.len()];
    for (p, &wi) in markers.iter().zip(w) {
        let mut running = f64::INFINITY;
        for (g, b) in best.iter_mut().enumerate() {
            running = running.min(*b + wi * (pts[g] - p).norm_squared());
            *b = running;
        }
    }
    best[pts.len() - 1]
}

/// Independent restatement of the static design limits.
fn within_limits(design: &RobotDesign, l: &DesignLimits) -> bool {
    let rows: Vec<&DhLink> = design.links.iter().chain(design.tool.iter()).collect();
    let boxes = rows.iter().all(|r| {
        (l.alpha_min..=l.alpha_max).contains(&r.alpha)
            && (0.0..=l.a_max).contains(&r.a)
            && (0.0..=l.d_max).contains(&r.d)
    });
    let length: f64 = rows.iter().map(|r| r.a + r.d).sum();
    let n = design.links.len();
    let concentric = (0..n.saturating_sub(1))
        .any(|i| design.links[i].alpha.abs() < l.axis_tolerance && design.links[i].a < l.axis_tolerance);
    boxes && length > l.length_min && length < l.length_max && !concentric
}

// --------------------------------------------------------------- fixtures

/// A valid 3-DOF design whose rows are all long enough to carry a marker,
/// with markers at the end of each row (elbow, wrist, hand), driven along a
/// random joint path.
fn self_consistency_case(rng: &mut ChaCha8Rng, settings: &FitnessSettings) -> (RobotDesign, RecordedTask) {
    let space = DesignSpace::new(3, settings.limits, None).unwrap();
    loop {
        let (x, _) = space.sample_valid(rng, 1_000_000).unwrap();
        // One nonzero length per row keeps the arm straight between
        // consecutive markers, so the area penalty of the truth is zero.
        let mut design = space.decode(&x);
        for l in &mut design.links {
            if l.a >= l.d {
                l.d = 0.0;
            } else {
                l.a = 0.0;
            }
        }
        let rows: Vec<f64> = design.links.iter().map(|l| l.a + l.d).collect();
        if rows.iter().any(|&r| r < 0.05) || !within_limits(&design, &settings.limits) {
            continue;
        }
        let total: f64 = rows.iter().sum();
        let anchors = [rows[0] / total, (rows[0] + rows[1]) / total, 1.0];
        let q0: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let waypoints: Vec<JointConfig> = (0..3)
            .map(|k| {
                if k == 0 {
                    JointConfig(q0.clone())
                } else {
                    JointConfig(q0.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect())
                }
            })
            .collect();
        let path = joint_path_through(&waypoints, 60).unwrap();
        let options = SynthesisOptions {
            epsilon: settings.ik.epsilon,
            continuity_norm: settings.ik.continuity_norm,
            ..SynthesisOptions::default()
        };
        let task = synthesize_task(&design, &path, &anchors, &settings.limits, &options).unwrap();
        return (design, task);
    }
}

/// Hidden 3-DOF truth driven through three joint waypoints.
fn recovery_task(frames: usize) -> RecordedTask {
    let truth = RobotDesign::new(
        vec![
            DhLink::new(-1.2, 0.0, 0.0),
            DhLink::new(0.9, 0.3, 0.0),
            DhLink::new(0.0, 0.35, 0.0),
        ],
        None,
    )
    .unwrap();
    let waypoints = [
        JointConfig(vec![0.2, -0.4, 0.6]),
        JointConfig(vec![0.7, -0.1, 1.0]),
        JointConfig(vec![0.5, 0.3, 0.6]),
    ];
    let path = joint_path_through(&waypoints, frames).unwrap();
    let anchors = [0.3 / 0.65, 0.475 / 0.65, 1.0];
    synthesize_task(
        &truth,
        &path,
        &anchors,
        &DesignLimits::default(),
        &SynthesisOptions::default(),
    )
    .unwrap()
}

const RECOVERY_FRAMES: usize = 10;
const SEEDS: u64 = 10;

fn recovery_config() -> PsoConfig {
    PsoConfig {
        particles: 100,
        iterations: 100,
        angular_period: 2,
        ..PsoConfig::default()
    }
}

fn recovery_runs(algorithm: Algorithm) -> (Vec<OptimizationResult>, Duration) {
    let objective = RobotFitness::new(recovery_task(RECOVERY_FRAMES), FitnessSettings::default()).unwrap();
    let space = DesignSpace::new(3, DesignLimits::default(), None).unwrap();
    let cfg = recovery_config();
    let start = Instant::now();
    let runs = (0..SEEDS)
        .map(|seed| run_design_optimization(&objective, &space, &cfg, algorithm, seed).unwrap())
        .collect();
    (runs, start.elapsed())
}

/// RA-PSO recovery runs, shared by the recovery and effort criteria.
fn rapso_runs() -> &'static (Vec<OptimizationResult>, Duration) {
    static RUNS: OnceLock<(Vec<OptimizationResult>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| recovery_runs(Algorithm::RaPso))
}

fn joint_path_ok(report: &FitnessReport, settings: &FitnessSettings) -> bool {
    let eps = settings.ik.epsilon;
    let limits = &settings.limits;
    report
        .joint_path
        .iter()
        .all(|q| q.as_slice().iter().all(|v| (limits.q_min..=limits.q_max).contains(v)))
        && report.joint_path.windows(2).all(|w| {
            let d = w[1].step_distance(&w[0], settings.ik.continuity_norm);
            d <= eps + 1e-12
        })
}

// --------------------------------------------------------------- criteria

#[test]
fn criterion_1_kinematics_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let design = random_design(&mut rng, 7);
        let q: Vec<f64> = (0..design.dof()).map(|_| rng.gen_range(-3.2..3.2)).collect();
        let jq = JointConfig(q.clone());
        for (link, theta) in design.links.iter().zip(&q) {
            worst = worst.max(max_abs_diff(&dh_transform(link, *theta), &elementary(link, *theta)));
        }
        let oracle = elementary_chain(&design, &q);
        worst = worst.max(max_abs_diff(&ee_transform(&design, &jq).unwrap(), &oracle));
        let pose = forward_kinematics(&design, &jq).unwrap();
        let p = oracle.fixed_view::<3, 1>(0, 3).into_owned();
        worst = worst.max((pose.position - p).abs().max());
        worst = worst.max((arm_polyline(&design, &jq).unwrap().end() - pose.position).abs().max());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(5);
    verdict(
        1,
        pass,
        &format!("1000 pairs, max deviation {worst:.2e} (<= 1e-9), {elapsed:.2?} (< 5 s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_projection_exactness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut below_grid = true;
    for _ in 0..200 {
        let n = rng.gen_range(1..=4);
        let links = (0..n).map(|_| random_link(&mut rng)).collect();
        let design = RobotDesign::new(links, None).unwrap();
        let q = JointConfig((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let m = rng.gen_range(1..=3);
        let markers: Vec<Vector3<f64>> = (0..m)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                )
            })
            .collect();
        let raw: Vec<f64> = (0..=m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let weights = FitnessWeights {
            orientation: raw[0] / sum,
            position: raw[1..].iter().map(|w| w / sum).collect(),
            ..FitnessWeights::scenario_one()
        };
        let frame = armsynth_core::demonstration::MarkerFrame {
            t: 0,
            markers: markers.clone(),
            hand_euler: [0.0; 3],
        };
        let exact = project_markers(&design, &q, &frame, &weights).unwrap();
        let s = exact.sigma.as_slice();
        let monotone = s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|v| (0.0..=1.0).contains(v));
        let poly = arm_polyline(&design, &q).unwrap();
        let grid = grid_oracle(&poly, &markers, &weights.position, 1e-4);
        below_grid &= monotone && exact.objective <= grid + 1e-12;
        worst = worst.max((grid - exact.objective).abs());
    }
    let elapsed = start.elapsed();
    let pass = below_grid && worst <= 1e-6 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        pass,
        &format!("200 instances, max |grid - exact| {worst:.2e} (<= 1e-6), {elapsed:.2?} (< 60 s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_self_consistency() {
    let _g = serial();
    let start = Instant::now();
    let settings = FitnessSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_f, mut worst_e): (f64, f64) = (0.0, 0.0);
    let mut all_valid = true;
    for k in 0..20 {
        let (design, task) = self_consistency_case(&mut rng, &settings);
        let report = robot_fitness(&design, &task, &settings, k).unwrap();
        all_valid &= report.is_valid();
        worst_f = worst_f.max(report.path_fitness);
        worst_e = worst_e.max(report.area);
    }
    let elapsed = start.elapsed();
    let pass = all_valid && worst_f < 2e-3 && worst_e < 2e-3 && elapsed < Duration::from_secs(600);
    verdict(
        3,
        pass,
        &format!(
            "20 designs x 60 frames, max f {:.4} mm (< 2), max E {:.4} mm (< 2), {elapsed:.2?} (< 10 min)",
            worst_f * 1e3,
            worst_e * 1e3
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_design_recovery() {
    let _g = serial();
    let (runs, elapsed) = rapso_runs();
    let best: Vec<f64> = runs
        .iter()
        .map(|r| r.best.as_ref().map_or(f64::INFINITY, |b| b.fitness))
        .collect();
    let med = median(best.iter().copied()).unwrap();
    let pass = med < 0.10 && *elapsed < Duration::from_secs(30 * 60);
    verdict(
        4,
        pass,
        &format!("RA-PSO N=100 M=100 D=2, median combined {med:.4} over 10 seeds (< 0.10), {elapsed:.2?} (< 30 min)"),
    );
    assert!(pass, "per-seed best {best:?}");
}

#[test]
fn criterion_5_effort_reduction() {
    let _g = serial();
    let (rapso, rapso_time) = rapso_runs();
    let (pso, pso_time) = recovery_runs(Algorithm::Pso);
    let cfg = recovery_config();
    let ce = |runs: &[OptimizationResult]| {
        median(
            runs.iter()
                .map(|r| computational_effort(&r.history, cfg.stall_iterations, cfg.tolerance).ce),
        )
        .unwrap()
    };
    let (ce_rapso, ce_pso) = (ce(rapso), ce(&pso));
    let elapsed = *rapso_time + pso_time;
    let pass = ce_rapso <= 0.7 * ce_pso && elapsed < Duration::from_secs(2 * 3600);
    verdict(
        5,
        pass,
        &format!(
            "median CE RA-PSO {ce_rapso:.0} vs PSO {ce_pso:.0}, ratio {:.3} (<= 0.7), {elapsed:.2?} (< 2 h)",
            ce_rapso / ce_pso
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_weight_identity() {
    let _g = serial();
    let settings = FitnessSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut reports = 0;
    for k in 0..5 {
        let (design, task) = self_consistency_case(&mut rng, &settings);
        // The truth and a perturbed neighbour, so both terms are nonzero.
        let mut other = design.clone();
        other.links[2].a += 0.03;
        for d in [&design, &other] {
            let r = robot_fitness(d, &task, &settings, k).unwrap();
            if r.is_valid() {
                let w = &settings.weights;
                worst = worst.max((r.combined - (w.lambda_f * r.path_fitness + w.lambda_e * r.area)).abs());
                reports += 1;
            }
        }
    }
    let table = FitnessReport {
        temporal: vec![0.01759],
        path_fitness: 0.01759,
        area: 0.03323,
        combined: 15.0 * 0.01759 + 5.0 * 0.03323,
        joint_path: Vec::new(),
        sigma_path: Vec::new(),
        start_error: Some(0.0),
        invalid: None,
        evaluations: 0,
    };
    let line = table.summary();
    let formatted = line.starts_with("fitness 0.430 ");
    let pass = reports > 0 && worst <= 1e-12 && formatted;
    verdict(
        6,
        pass,
        &format!("{reports} reports, max identity residual {worst:.1e} (<= 1e-12); formatter \"{line}\""),
    );
    assert!(pass);
}

#[test]
fn criterion_7_constraints() {
    let _g = serial();
    let limits = DesignLimits::default();
    let space = DesignSpace::new(3, limits, None).unwrap();
    let swarm = sample_initial_swarm(&space, 10_000, 7).unwrap();
    let bad_particles = swarm
        .particles
        .iter()
        .filter(|p| !within_limits(&space.decode(&p.position), &limits))
        .count();

    let settings = FitnessSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut paths = 0;
    let mut bad_paths = 0;
    for k in 0..10 {
        let (design, task) = self_consistency_case(&mut rng, &settings);
        let r = robot_fitness(&design, &task, &settings, k).unwrap();
        paths += 1;
        bad_paths += usize::from(!joint_path_ok(&r, &settings));
    }
    let recovery = recovery_task(RECOVERY_FRAMES);
    for (k, p) in swarm.particles.iter().take(40).enumerate() {
        let r = robot_fitness(&space.decode(&p.position), &recovery, &settings, k as u64).unwrap();
        if !r.joint_path.is_empty() {
            paths += 1;
            bad_paths += usize::from(!joint_path_ok(&r, &settings));
        }
    }
    let pass = bad_particles == 0 && bad_paths == 0 && paths > 0;
    verdict(
        7,
        pass,
        &format!("10000 particles, {bad_particles} violations; {paths} joint paths, {bad_paths} violations"),
    );
    assert!(pass);
}

fn optimize_once(dir: &Path, task: &Path) -> Vec<u8> {
    let config = RunConfig {
        task: Some(task.to_path_buf()),
        seed: 11,
        pso: PsoConfig {
            particles: 16,
            iterations: 6,
            ..PsoConfig::default()
        },
        ..RunConfig::default()
    };
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let globals = Globals {
        config: Some(config_path),
        out: Some(dir.join("out")),
        ..Globals::default()
    };
    std::fs::create_dir_all(dir.join("out")).unwrap();
    match commands::optimize(&globals, None, None, None) {
        Ok(()) | Err(armsynth_cli::CliError::NoSolution(_)) => {}
        Err(e) => panic!("optimize failed: {e}"),
    }
    std::fs::read(dir.join("out/result.json")).unwrap()
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let tmp = tempfile::tempdir().unwrap();
    let task_path = tmp.path().join("task.json");
    let mut buf = Vec::new();
    recovery_task(RECOVERY_FRAMES)
        .save(&mut buf, armsynth_core::demonstration::TaskFormat::Json)
        .unwrap();
    std::fs::write(&task_path, buf).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let first = optimize_once(&a, &task_path);
    let second = optimize_once(&b, &task_path);
    let pass = !first.is_empty() && first == second;
    verdict(
        8,
        pass,
        &format!(
            "two optimize runs, result.json {} bytes, identical: {}",
            first.len(),
            first == second
        ),
    );
    assert!(pass);
}

/// URDF `rpy` is extrinsic roll-pitch-yaw about fixed x, y, z.
fn urdf_origin(node: roxmltree::Node) -> Matrix4<f64> {
    let origin = node.children().find(|c| c.has_tag_name("origin")).unwrap();
    let nums = |attr: &str| -> Vec<f64> {
        origin
            .attribute(attr)
            .unwrap()
            .split_whitespace()
            .map(|v| v.parse().unwrap())
            .collect()
    };
    let (xyz, rpy) = (nums("xyz"), nums("rpy"));
    trans(xyz[0], xyz[1], xyz[2]) * rot_z(rpy[2]) * rot_y(rpy[1]) * rot_x(rpy[0])
}

#[test]
fn criterion_9_urdf_round_trip() {
    let _g = serial();
    let limits = DesignLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut designs = 0;
    while designs < 50 {
        let dof = rng.gen_range(1..=6);
        let tool = rng.gen_bool(0.3).then(|| {
            DhLink::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.0..0.1),
                rng.gen_range(0.0..0.1),
            )
        });
        let space = DesignSpace::new(dof, limits, tool).unwrap();
        let Some((x, _)) = space.sample_valid(&mut rng, 1_000_000) else {
            continue;
        };
        let design = space.decode(&x);
        let xml = export_urdf(&design, &limits, "arm").unwrap();
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let joints: Vec<roxmltree::Node> = doc.descendants().filter(|n| n.has_tag_name("joint")).collect();
        // Joints are emitted parent-first, so the running product is each
        // joint's frame at q = 0.
        let mut frame = Matrix4::identity();
        let mut revolute = 0;
        let zeros = vec![0.0; dof];
        for j in &joints {
            frame *= urdf_origin(*j);
            if j.attribute("type") == Some("revolute") {
                // Joint k+1 sits at the end of the first k DH rows.
                let prefix = RobotDesign::new(design.links[..revolute].to_vec(), None);
                let expected = match prefix {
                    Ok(p) => ee_transform(&p, &JointConfig(zeros[..revolute].to_vec())).unwrap(),
                    Err(_) => Matrix4::identity(),
                };
                worst = worst.max(max_abs_diff(&frame, &expected));
                revolute += 1;
            }
        }
        worst = worst.max(max_abs_diff(
            &frame,
            &ee_transform(&design, &JointConfig(zeros)).unwrap(),
        ));
        assert_eq!(revolute, dof);
        designs += 1;
    }
    let pass = worst <= 1e-9;
    verdict(
        9,
        pass,
        &format!("50 designs, max joint-frame deviation {worst:.2e} (<= 1e-9)"),
    );
    assert!(pass);
}
