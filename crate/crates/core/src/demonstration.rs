//! Recorded demonstrations: marker paths relative to the shoulder plus the
//! hand orientation, one frame per time step.

use std::io::{Read, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{arm_polyline, ee_euler, wrap_angle, ContinuityNorm, DesignLimits, JointConfig, RobotDesign};

/// Value of the `units` field every task document must carry.
pub const UNITS: &str = "m_rad";

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFrame {
    pub t: usize,
    /// Shoulder-relative marker positions, base to hand.
    pub markers: Vec<Vector3<f64>>,
    /// Hand orientation `[roll, pitch, yaw]`.
    pub hand_euler: [f64; 3],
}

impl MarkerFrame {
    pub fn hand(&self) -> Vector3<f64> {
        self.markers[self.markers.len() - 1]
    }
}

/// An immutable, validated recording of `T + 1` frames of `m` markers.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedTask {
    frames: Vec<MarkerFrame>,
    m: usize,
    label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFormat {
    Json,
    Csv,
}

impl std::str::FromStr for TaskFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidArgument(format!("unknown task format {other:?}"))),
        }
    }
}

impl TaskFormat {
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Json,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TaskDocument {
    units: Option<String>,
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    frames: Vec<FrameDocument>,
}

#[derive(Serialize, Deserialize)]
struct FrameDocument {
    t: usize,
    markers: Vec<[f64; 3]>,
    hand_euler: [f64; 3],
}

impl RecordedTask {
    pub fn new(frames: Vec<MarkerFrame>, label: Option<String>) -> Result<Self> {
        let m = frames.first().map_or(0, |f| f.markers.len());
        Self::validated(frames, m, label)
    }

    fn validated(frames: Vec<MarkerFrame>, m: usize, label: Option<String>) -> Result<Self> {
        if m == 0 {
            return Err(Error::MalformedTask("a task needs at least one marker".into()));
        }
        if frames.len() < 2 {
            return Err(Error::MalformedTask(format!(
                "a task needs at least two frames, got {}",
                frames.len()
            )));
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.markers.len() != m {
                return Err(Error::InconsistentMarkers {
                    frame: i,
                    expected: m,
                    actual: frame.markers.len(),
                });
            }
            let finite = frame.markers.iter().all(|p| p.iter().all(|v| v.is_finite()))
                && frame.hand_euler.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!("frame {i}")));
            }
        }
        Ok(Self { frames, m, label })
    }

    pub fn frames(&self) -> &[MarkerFrame] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn marker_count(&self) -> usize {
        self.m
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Largest distance of the hand marker from the base over all frames.
    pub fn max_hand_distance(&self) -> f64 {
        self.frames.iter().map(|f| f.hand().norm()).fold(0.0, f64::max)
    }

    pub fn max_marker_distance(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.markers.iter())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    /// Sanity gate: every marker within `radius` of the base.
    pub fn check_within(&self, radius: f64) -> Result<()> {
        let max = self.max_marker_distance();
        if max > radius {
            return Err(Error::MalformedTask(format!(
                "marker at {max:.4} m from the base exceeds the {radius} m sanity radius"
            )));
        }
        Ok(())
    }

    pub fn load<R: Read>(reader: R, format: TaskFormat) -> Result<Self> {
        match format {
            TaskFormat::Json => Self::load_json(reader),
            TaskFormat::Csv => Self::load_csv(reader),
        }
    }

    pub fn save<W: Write>(&self, writer: W, format: TaskFormat) -> Result<()> {
        match format {
            TaskFormat::Json => self.save_json(writer),
            TaskFormat::Csv => self.save_csv(writer),
        }
    }

    fn load_json<R: Read>(reader: R) -> Result<Self> {
        let doc: TaskDocument = serde_json::from_reader(reader).map_err(|e| Error::MalformedTask(e.to_string()))?;
        match doc.units.as_deref() {
            None => return Err(Error::MalformedTask("missing \"units\" field".into())),
            Some(UNITS) => {}
            Some(other) => {
                return Err(Error::MalformedTask(format!(
                    "unsupported units {other:?}, expected {UNITS:?}"
                )))
            }
        }
        let frames = doc
            .frames
            .into_iter()
            .map(|f| MarkerFrame {
                t: f.t,
                markers: f.markers.iter().map(|p| Vector3::from(*p)).collect(),
                hand_euler: f.hand_euler,
            })
            .collect();
        Self::validated(frames, doc.m, doc.label)
    }

    fn save_json<W: Write>(&self, writer: W) -> Result<()> {
        let doc = TaskDocument {
            units: Some(UNITS.to_string()),
            m: self.m,
            label: self.label.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameDocument {
                    t: f.t,
                    markers: f.markers.iter().map(|p| [p.x, p.y, p.z]).collect(),
                    hand_euler: f.hand_euler,
                })
                .collect(),
        };
        serde_json::to_writer_pretty(writer, &doc)?;
        Ok(())
    }

    fn load_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 7 || !(cols.len() - 4).is_multiple_of(3) {
            return Err(Error::MalformedTask(format!(
                "unexpected CSV header with {} columns",
                cols.len()
            )));
        }
        let m = (cols.len() - 4) / 3;
        let mut expected = vec!["t".to_string()];
        for i in 1..=m {
            for axis in ["x", "y", "z"] {
                expected.push(format!("m{i}{axis}"));
            }
        }
        expected.extend(["roll", "pitch", "yaw"].map(String::from));
        if cols.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::MalformedTask(format!(
                "CSV header must be {}",
                expected.join(",")
            )));
        }
        let mut frames = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != cols.len() {
                return Err(Error::InconsistentMarkers {
                    frame: row,
                    expected: m,
                    actual: record.len().saturating_sub(4) / 3,
                });
            }
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::MalformedTask(format!("row {row}, column {}: {e}", cols[i])))
            };
            let t = record[0]
                .parse::<usize>()
                .map_err(|e| Error::MalformedTask(format!("row {row}, column t: {e}")))?;
            let markers = (0..m)
                .map(|i| Ok(Vector3::new(num(1 + 3 * i)?, num(2 + 3 * i)?, num(3 + 3 * i)?)))
                .collect::<Result<Vec<_>>>()?;
            let base = 1 + 3 * m;
            frames.push(MarkerFrame {
                t,
                markers,
                hand_euler: [num(base)?, num(base + 1)?, num(base + 2)?],
            });
        }
        Self::validated(frames, m, None)
    }

    fn save_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for i in 1..=self.m {
            for axis in ["x", "y", "z"] {
                header.push(format!("m{i}{axis}"));
            }
        }
        header.extend(["roll", "pitch", "yaw"].map(String::from));
        wtr.write_record(&header)?;
        for f in &self.frames {
            let mut row = vec![f.t.to_string()];
            for p in &f.markers {
                row.extend(p.iter().map(|v| v.to_string()));
            }
            row.extend(f.hand_euler.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Centered moving average over `window` frames. Positions are averaged
/// directly; Euler angles are unwrapped along time, averaged and rewrapped.
/// Near the ends the window shrinks symmetrically.
pub fn smooth_task(task: &RecordedTask, window: usize) -> Result<RecordedTask> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "smoothing window must be a positive odd frame count, got {window}"
        )));
    }
    if window == 1 {
        return Ok(task.clone());
    }
    let half = window / 2;
    let frames = task.frames();
    let last = frames.len() - 1;

    let mut unwrapped: Vec<[f64; 3]> = Vec::with_capacity(frames.len());
    for f in frames {
        let next = match unwrapped.last() {
            None => f.hand_euler,
            Some(prev) => {
                let mut v = [0.0; 3];
                for k in 0..3 {
                    v[k] = prev[k] + wrap_angle(f.hand_euler[k] - prev[k]);
                }
                v
            }
        };
        unwrapped.push(next);
    }

    let smoothed = (0..frames.len())
        .map(|t| {
            let h = half.min(t).min(last - t);
            let span = (t - h)..=(t + h);
            let count = (2 * h + 1) as f64;
            let markers = (0..task.marker_count())
                .map(|i| span.clone().map(|s| frames[s].markers[i]).sum::<Vector3<f64>>() / count)
                .collect();
            let mut euler = [0.0; 3];
            for (k, e) in euler.iter_mut().enumerate() {
                *e = wrap_angle(span.clone().map(|s| unwrapped[s][k]).sum::<f64>() / count);
            }
            MarkerFrame {
                t: frames[t].t,
                markers,
                hand_euler: euler,
            }
        })
        .collect();
    RecordedTask::validated(smoothed, task.marker_count(), task.label.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    /// Half-width of the uniform per-coordinate position noise, meters.
    pub noise: f64,
    pub seed: u64,
    /// Continuity bound the joint path must respect, radians.
    pub epsilon: f64,
    pub continuity_norm: ContinuityNorm,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            noise: 0.0,
            seed: 0,
            epsilon: 10f64.to_radians(),
            continuity_norm: ContinuityNorm::Euclidean,
        }
    }
}

/// Generate a task by driving `truth` along `joint_path` and reading the
/// arm at the given normalised arc-length anchors. The last anchor must be
/// 1 so the final marker is the end effector.
pub fn synthesize_task(
    truth: &RobotDesign,
    joint_path: &[JointConfig],
    sigma_anchors: &[f64],
    limits: &DesignLimits,
    options: &SynthesisOptions,
) -> Result<RecordedTask> {
    if sigma_anchors.is_empty() {
        return Err(Error::InvalidArgument("at least one sigma anchor is required".into()));
    }
    if sigma_anchors.windows(2).any(|w| w[0] >= w[1]) || sigma_anchors[0] <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sigma anchors must be strictly increasing in (0, 1], got {sigma_anchors:?}"
        )));
    }
    if sigma_anchors[sigma_anchors.len() - 1] != 1.0 {
        return Err(Error::InvalidArgument(
            "the last sigma anchor must be 1 (the hand)".into(),
        ));
    }
    if !(options.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise amplitude must be non-negative".into()));
    }
    for (t, q) in joint_path.iter().enumerate() {
        if q.len() != truth.dof() {
            return Err(Error::Dimension {
                expected: truth.dof(),
                actual: q.len(),
            });
        }
        if !limits.joint_config_within(q) {
            return Err(Error::InvalidArgument(format!(
                "joint path frame {t} violates the joint limits"
            )));
        }
        if t > 0 {
            let step = q.step_distance(&joint_path[t - 1], options.continuity_norm);
            if step > options.epsilon {
                return Err(Error::InvalidArgument(format!(
                    "joint path step {t} moves {step:.4} rad, above the continuity bound {:.4}",
                    options.epsilon
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut frames = Vec::with_capacity(joint_path.len());
    for (t, q) in joint_path.iter().enumerate() {
        let poly = arm_polyline(truth, q)?;
        let markers = sigma_anchors
            .iter()
            .map(|&s| {
                let mut p = poly.point_at(s)?;
                if options.noise > 0.0 {
                    for v in p.iter_mut() {
                        *v += rng.gen_range(-options.noise..=options.noise);
                    }
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(MarkerFrame {
            t,
            markers,
            hand_euler: ee_euler(truth, q)?.to_array(),
        });
    }
    RecordedTask::new(frames, Some("synthetic".into()))
}

/// Joint path through `waypoints` sampled at `frames` evenly spaced points of
/// a piecewise-linear interpolation (arc-length parameterised in joint space).
pub fn joint_path_through(waypoints: &[JointConfig], frames: usize) -> Result<Vec<JointConfig>> {
    let first = waypoints
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one waypoint is required".into()))?;
    if frames < 2 {
        return Err(Error::InvalidArgument("a path needs at least two frames".into()));
    }
    let n = first.len();
    if let Some(bad) = waypoints.iter().find(|w| w.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            actual: bad.len(),
        });
    }
    let mut cumulative = vec![0.0];
    for w in waypoints.windows(2) {
        let prev = cumulative[cumulative.len() - 1];
        cumulative.push(prev + w[0].distance(&w[1]));
    }
    let total = cumulative[cumulative.len() - 1];
    let path = (0..frames)
        .map(|k| {
            let s = total * k as f64 / (frames - 1) as f64;
            let seg = cumulative
                .partition_point(|&c| c <= s)
                .clamp(1, waypoints.len().max(2) - 1)
                .min(waypoints.len() - 1);
            if waypoints.len() == 1 || cumulative[seg] == cumulative[seg - 1] {
                return waypoints[seg].clone();
            }
            let u = ((s - cumulative[seg - 1]) / (cumulative[seg] - cumulative[seg - 1])).clamp(0.0, 1.0);
            JointConfig(
                waypoints[seg - 1]
                    .0
                    .iter()
                    .zip(&waypoints[seg].0)
                    .map(|(a, b)| a + (b - a) * u)
                    .collect(),
            )
        })
        .collect();
    Ok(path)
}
