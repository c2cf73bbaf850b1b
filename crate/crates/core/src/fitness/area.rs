//! Area penalty between the arm and the lines through its bounding markers.

use nalgebra::Vector3;

use crate::demonstration::RecordedTask;
use crate::error::{Error, Result};
use crate::kinematics::{arm_polyline, ArmPolyline, JointConfig, RobotDesign};

/// Bounding markers closer than this are treated as a single point.
const DEGENERATE_LINE: f64 = 1e-12;

/// Distance from `p` to the infinite line through `a` and `b`, or to `a`
/// when the two coincide.
pub fn distance_to_line(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dir = b - a;
    let len = dir.norm();
    if len < DEGENERATE_LINE {
        return (p - a).norm();
    }
    (p - a).cross(&dir).norm() / len
}

/// Running sum of sampled distances.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct AreaSamples {
    pub sum: f64,
    pub count: usize,
}

impl AreaSamples {
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    fn add(&mut self, other: AreaSamples) {
        self.sum += other.sum;
        self.count += other.count;
    }
}

/// Sample the arc `[from, to]` of `poly` at the midpoints of pieces no
/// longer than `delta`, accumulating `dist(point)`.
fn sample_arc(poly: &ArmPolyline, from: f64, to: f64, delta: f64, dist: impl Fn(&Vector3<f64>) -> f64) -> AreaSamples {
    let len = to - from;
    if len <= 0.0 {
        return AreaSamples::default();
    }
    let pieces = (len / delta).ceil().max(1.0) as usize;
    let step = len / pieces as f64;
    let sum = (0..pieces)
        .map(|k| dist(&poly.point_at_length(from + (k as f64 + 0.5) * step)))
        .sum();
    AreaSamples { sum, count: pieces }
}

/// Samples for one frame: the arm is cut at each marker's sigma; the part
/// between markers `i-1` and `i` (the base counts as marker 0) is compared
/// with the line through them. Any arm left beyond the hand marker is
/// compared with the hand marker itself.
pub fn frame_area(poly: &ArmPolyline, markers: &[Vector3<f64>], sigma: &[f64], delta: f64) -> AreaSamples {
    let total = poly.length();
    let mut out = AreaSamples::default();
    let mut prev_marker = Vector3::zeros();
    let mut prev_arc = 0.0;
    for (p, &s) in markers.iter().zip(sigma) {
        let arc = (s * total).clamp(prev_arc, total);
        out.add(sample_arc(poly, prev_arc, arc, delta, |x| {
            distance_to_line(x, &prev_marker, p)
        }));
        prev_marker = *p;
        prev_arc = arc;
    }
    out.add(sample_arc(poly, prev_arc, total, delta, |x| (x - prev_marker).norm()));
    out
}

/// Mean distance over all samples of all frames, meters.
pub fn area_penalty(
    design: &RobotDesign,
    task: &RecordedTask,
    joint_path: &[JointConfig],
    sigma_path: &[Vec<f64>],
    delta_m: f64,
) -> Result<f64> {
    if !(delta_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample spacing must be positive, got {delta_m}"
        )));
    }
    let frames = task.frame_count();
    if joint_path.len() != frames || sigma_path.len() != frames {
        return Err(Error::Dimension {
            expected: frames,
            actual: joint_path.len().min(sigma_path.len()),
        });
    }
    let mut acc = AreaSamples::default();
    for ((frame, q), sigma) in task.frames().iter().zip(joint_path).zip(sigma_path) {
        if sigma.len() != frame.markers.len() {
            return Err(Error::Dimension {
                expected: frame.markers.len(),
                actual: sigma.len(),
            });
        }
        let poly = arm_polyline(design, q)?;
        acc.add(frame_area(&poly, &frame.markers, sigma, delta_m));
    }
    Ok(acc.mean())
}
