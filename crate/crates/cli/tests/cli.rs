use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use armsynth_core::demonstration::{RecordedTask, TaskFormat};
use armsynth_core::{DhLink, RobotDesign};

fn armsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armsynth"))
        .args(args)
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let truth = RobotDesign::new(
            vec![
                DhLink::new(-1.2, 0.0, 0.0),
                DhLink::new(0.9, 0.3, 0.0),
                DhLink::new(0.0, 0.35, 0.0),
            ],
            None,
        )
        .unwrap();
        std::fs::write(dir.path().join("truth.json"), truth.to_json().unwrap()).unwrap();
        std::fs::write(
            dir.path().join("trajectory.json"),
            r#"{"waypoints_deg": [[10, -20, 35], [40, -5, 55]], "frames": 8, "anchors": [0.4615384615, 0.7307692308, 1.0]}"#,
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, output: &str) -> PathBuf {
        let out = self.path(output);
        let o = armsynth(&[
            "synth",
            "--design",
            path_str(&self.path("truth.json")),
            "--trajectory",
            path_str(&self.path("trajectory.json")),
            "--output",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

#[test]
fn synth_then_evaluate_the_truth() {
    let fx = Fixture::new();
    for name in ["task.json", "task.csv"] {
        let task = fx.synth(name);
        let format = if name.ends_with(".csv") {
            TaskFormat::Csv
        } else {
            TaskFormat::Json
        };
        let loaded = RecordedTask::load(std::fs::File::open(&task).unwrap(), format).unwrap();
        assert_eq!((loaded.frame_count(), loaded.marker_count()), (8, 3));
        let o = armsynth(&[
            "evaluate",
            "--design",
            path_str(&fx.path("truth.json")),
            "--task",
            path_str(&task),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(doc["valid"], true);
        assert!(doc["path_fitness_mm"].as_f64().unwrap() < 1e-3);
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("fitness "));
    }
}

#[test]
fn evaluate_exit_codes() {
    let fx = Fixture::new();
    let task = fx.synth("task.json");
    // Outside the design limits.
    let wide = RobotDesign::new(vec![DhLink::new(0.0, 0.9, 0.0), DhLink::new(0.5, 0.9, 0.0)], None).unwrap();
    std::fs::write(fx.path("wide.json"), wide.to_json().unwrap()).unwrap();
    let o = armsynth(&[
        "evaluate",
        "--design",
        path_str(&fx.path("wide.json")),
        "--task",
        path_str(&task),
    ]);
    assert_eq!(o.status.code(), Some(2));
    // Valid, but unable to reach the hand.
    let short = RobotDesign::new(
        vec![
            DhLink::new(0.5, 0.0, 0.5),
            DhLink::new(0.5, 0.07, 0.0),
            DhLink::new(0.0, 0.07, 0.0),
        ],
        None,
    )
    .unwrap();
    std::fs::write(fx.path("short.json"), short.to_json().unwrap()).unwrap();
    let o = armsynth(&[
        "evaluate",
        "--design",
        path_str(&fx.path("short.json")),
        "--task",
        path_str(&task),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["valid"], false);
    assert!(doc["combined"].is_null());
    // Missing file.
    let o = armsynth(&["evaluate", "--design", "/nonexistent.json", "--task", path_str(&task)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn the_published_scenario_one_design_is_within_the_default_limits() {
    let fx = Fixture::new();
    let task = fx.synth("task.json");
    let design = RobotDesign::new(
        vec![
            DhLink::new(0.515, 0.0, 0.0),
            DhLink::new(-1.57, 0.11, 0.0),
            DhLink::new(-0.27, 0.5, 0.0),
        ],
        Some(DhLink::new(-1.57, 0.0, 0.1)),
    )
    .unwrap();
    std::fs::write(fx.path("scenario1.json"), design.to_json().unwrap()).unwrap();
    let o = armsynth(&[
        "evaluate",
        "--design",
        path_str(&fx.path("scenario1.json")),
        "--task",
        path_str(&task),
    ]);
    assert_ne!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_ne!(doc["invalid"]["kind"], "design_limits");
}

#[test]
fn ik_reports_one_frame() {
    let fx = Fixture::new();
    let task = fx.synth("task.json");
    let o = armsynth(&[
        "ik",
        "--design",
        path_str(&fx.path("truth.json")),
        "--task",
        path_str(&task),
        "--frame",
        "1",
        "--q-prev",
        "10,-20,35",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc["cost_mm"].as_f64().unwrap() < 1e-3);
    assert_eq!(doc["q"].as_array().unwrap().len(), 3);
}

#[test]
fn optimize_writes_results_and_refuses_to_overwrite() {
    let fx = Fixture::new();
    let task = fx.synth("task.json");
    std::fs::write(
        fx.path("config.json"),
        r#"{"task": "task.json", "seed": 5, "pso": {"particles": 12, "iterations": 4}}"#,
    )
    .unwrap();
    let out = fx.path("out");
    std::fs::create_dir_all(&out).unwrap();
    let config = fx.path("config.json");
    let args = ["optimize", "--config", path_str(&config), "--out", path_str(&out)];
    let o = armsynth(&args);
    let code = o.status.code();
    assert!(
        code == Some(0) || code == Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for name in ["result.json", "history.csv", "summary.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let result: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["seed"], 5);
    if code == Some(0) {
        let design = std::fs::read_to_string(out.join("design.json")).unwrap();
        let design = RobotDesign::from_json(&design).unwrap();
        assert_eq!(design.dof(), 3);
        let rows = std::fs::read_to_string(out.join("joint_path.csv")).unwrap();
        assert_eq!(rows.lines().count(), 1 + 8);
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    if code == Some(0) {
        assert!(summary.contains(" mm"), "{summary}");
    }
    let again = armsynth(&args);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let fx = Fixture::new();
    std::fs::write(fx.path("bad.json"), r#"{"particles": 3}"#).unwrap();
    let o = armsynth(&["optimize", "--config", path_str(&fx.path("bad.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_urdf_writes_parseable_xml() {
    let fx = Fixture::new();
    let out = fx.path("arm.urdf");
    let o = armsynth(&[
        "export-urdf",
        "--design",
        path_str(&fx.path("truth.json")),
        "--output",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let xml = std::fs::read_to_string(&out).unwrap();
    let doc = roxmltree::Document::parse(&xml).unwrap();
    assert_eq!(doc.root_element().attribute("name"), Some("arm"));
    let revolute = doc
        .descendants()
        .filter(|n| n.has_tag_name("joint") && n.attribute("type") == Some("revolute"))
        .count();
    assert_eq!(revolute, 3);
    // A second export to the same file is refused.
    let o = armsynth(&[
        "export-urdf",
        "--design",
        path_str(&fx.path("truth.json")),
        "--output",
        path_str(&out),
    ]);
    assert!(!o.status.success());
}
