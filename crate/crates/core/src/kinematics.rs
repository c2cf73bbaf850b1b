//! Denavit-Hartenberg design space and forward kinematics.
//!
//! A design is an ordered list of per-joint `(alpha, a, d)` triples; the
//! joint angle `theta` is the only variable. Frames follow the standard
//! (distal) convention `A = Rz(theta) * Tz(d) * Tx(a) * Rx(alpha)`.
//!
//! Besides the end-effector pose, the arm is also exposed as a polyline
//! running from the base through every `d` and `a` offset, parameterised by
//! normalised arc length.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Concentricity tolerance used when none is configured.
pub const DEFAULT_AXIS_TOLERANCE: f64 = 1e-3;

/// `|cos(pitch)|` below which the yaw/roll split is considered singular.
const GIMBAL_TOLERANCE: f64 = 1e-9;

/// Constant DH parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    /// Twist about the new x axis, radians.
    pub alpha: f64,
    /// Common-normal length along x, meters.
    pub a: f64,
    /// Offset along the previous z axis, meters.
    pub d: f64,
}

impl DhLink {
    pub const fn new(alpha: f64, a: f64, d: f64) -> Self {
        Self { alpha, a, d }
    }

    fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.a.is_finite() && self.d.is_finite()
    }
}

/// Kinematic design of a serial arm with `n` revolute joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDesign {
    pub links: Vec<DhLink>,
    /// Fixed, non-actuated end-effector offset applied after the last joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<DhLink>,
}

impl RobotDesign {
    pub fn new(links: Vec<DhLink>, tool: Option<DhLink>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidArgument("a design needs at least one joint".into()));
        }
        Ok(Self { links, tool })
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// Every DH row in chain order, the tool (if any) last.
    pub fn rows(&self) -> impl Iterator<Item = &DhLink> {
        self.links.iter().chain(self.tool.iter())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let design: Self = serde_json::from_str(text)?;
        if design.links.is_empty() {
            return Err(Error::InvalidArgument("a design needs at least one joint".into()));
        }
        if !design.rows().all(DhLink::is_finite) {
            return Err(Error::NonFinite("design".into()));
        }
        Ok(design)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Joint-angle vector, radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Euclidean distance in joint space.
    pub fn distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest single-joint difference.
    pub fn max_joint_distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn step_distance(&self, other: &JointConfig, norm: ContinuityNorm) -> f64 {
        match norm {
            ContinuityNorm::Euclidean => self.distance(other),
            ContinuityNorm::PerJoint => self.max_joint_distance(other),
        }
    }
}

/// How the distance between consecutive joint configurations is measured
/// for the continuity bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuityNorm {
    #[default]
    Euclidean,
    /// Every joint individually within the bound.
    PerJoint,
}

impl From<Vec<f64>> for JointConfig {
    fn from(q: Vec<f64>) -> Self {
        Self(q)
    }
}

/// Intrinsic Z-Y-X Euler angles: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerRpy {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when `|pitch| = pi/2`; roll was pinned to zero.
    #[serde(default)]
    pub gimbal_lock: bool,
}

impl EulerRpy {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll,
            pitch,
            yaw,
            gimbal_lock: false,
        }
    }

    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        let cos_pitch = r[(0, 0)].hypot(r[(1, 0)]);
        let pitch = (-r[(2, 0)]).atan2(cos_pitch);
        if cos_pitch < GIMBAL_TOLERANCE {
            // Only yaw - roll (or yaw + roll) is observable; pin roll.
            let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
            return Self {
                roll: 0.0,
                pitch: wrap_angle(pitch),
                yaw: wrap_angle(yaw),
                gimbal_lock: true,
            };
        }
        Self {
            roll: wrap_angle(r[(2, 1)].atan2(r[(2, 2)])),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(r[(1, 0)].atan2(r[(0, 0)])),
            gimbal_lock: false,
        }
    }

    pub fn to_rotation(&self) -> Matrix3<f64> {
        let (sr, cr) = self.roll.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        )
    }

    /// `[roll, pitch, yaw]`.
    pub fn to_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let wrapped = x - two_pi * ((x - PI) / two_pi).ceil();
    // ceil() can land one period short for values a rounding error above pi.
    if wrapped <= -PI {
        wrapped + two_pi
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub euler: EulerRpy,
}

/// The arm as a chain of straight segments from base to end effector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArmPolyline {
    pub points: Vec<Vector3<f64>>,
    /// Arc length from the base to each point.
    pub cumulative: Vec<f64>,
}

impl ArmPolyline {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            points: Vec::with_capacity(n),
            cumulative: Vec::with_capacity(n),
        }
    }

    fn clear(&mut self) {
        self.points.clear();
        self.cumulative.clear();
    }

    fn push(&mut self, p: Vector3<f64>) {
        match self.points.last() {
            None => {
                self.points.push(p);
                self.cumulative.push(0.0);
            }
            Some(last) => {
                let len = (p - last).norm();
                if len > 0.0 {
                    let total = self.cumulative[self.cumulative.len() - 1] + len;
                    self.points.push(p);
                    self.cumulative.push(total);
                }
            }
        }
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn segment_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn end(&self) -> Vector3<f64> {
        self.points.last().copied().unwrap_or_else(Vector3::zeros)
    }

    /// Point at arc length `s`, clamped to the polyline.
    pub fn point_at_length(&self, s: f64) -> Vector3<f64> {
        let n = self.segment_count();
        if n == 0 {
            return self.end();
        }
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return self.end();
        }
        // First breakpoint strictly beyond s.
        let k = self.cumulative.partition_point(|&c| c <= s).clamp(1, n);
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        let t = (s - c0) / (c1 - c0);
        self.points[k - 1] + (self.points[k] - self.points[k - 1]) * t
    }

    /// Point at normalised arc length `sigma` in `[0, 1]`.
    pub fn point_at(&self, sigma: f64) -> Result<Vector3<f64>> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::SigmaOutOfRange(sigma));
        }
        Ok(self.point_at_length(sigma * self.length()))
    }
}

/// Homogeneous transform of one DH link at joint angle `theta`.
pub fn dh_transform(link: &DhLink, theta: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = link.alpha.sin_cos();
    Matrix4::new(
        ct,
        -st * ca,
        st * sa,
        link.a * ct,
        st,
        ct * ca,
        -ct * sa,
        link.a * st,
        0.0,
        sa,
        ca,
        link.d,
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

fn check_dims(design: &RobotDesign, q: &[f64]) -> Result<()> {
    if q.len() != design.dof() {
        return Err(Error::Dimension {
            expected: design.dof(),
            actual: q.len(),
        });
    }
    Ok(())
}

/// Walk the chain, optionally recording the polyline. Returns the final
/// rotation and position.
fn walk(design: &RobotDesign, q: &[f64], mut poly: Option<&mut ArmPolyline>) -> (Matrix3<f64>, Vector3<f64>) {
    let mut rot = Matrix3::<f64>::identity();
    let mut pos = Vector3::<f64>::zeros();
    if let Some(p) = poly.as_deref_mut() {
        p.clear();
        p.push(pos);
    }
    let thetas = q.iter().copied().chain(design.tool.iter().map(|_| 0.0));
    for (link, theta) in design.rows().zip(thetas) {
        let z = rot.column(2).into_owned();
        pos += z * link.d;
        if let Some(p) = poly.as_deref_mut() {
            p.push(pos);
        }
        let (st, ct) = theta.sin_cos();
        let c0 = rot.column(0).into_owned();
        let c1 = rot.column(1).into_owned();
        rot.set_column(0, &(c0 * ct + c1 * st));
        rot.set_column(1, &(c1 * ct - c0 * st));
        pos += rot.column(0) * link.a;
        if let Some(p) = poly.as_deref_mut() {
            p.push(pos);
        }
        let (sa, ca) = link.alpha.sin_cos();
        let c1 = rot.column(1).into_owned();
        let c2 = rot.column(2).into_owned();
        rot.set_column(1, &(c1 * ca + c2 * sa));
        rot.set_column(2, &(c2 * ca - c1 * sa));
    }
    (rot, pos)
}

pub fn forward_kinematics(design: &RobotDesign, q: &JointConfig) -> Result<EePose> {
    check_dims(design, q.as_slice())?;
    let (rotation, position) = walk(design, q.as_slice(), None);
    Ok(EePose {
        position,
        rotation,
        euler: EulerRpy::from_rotation(&rotation),
    })
}

/// Full homogeneous end-effector transform as a 4x4 matrix.
pub fn ee_transform(design: &RobotDesign, q: &JointConfig) -> Result<Matrix4<f64>> {
    let pose = forward_kinematics(design, q)?;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&pose.position);
    Ok(m)
}

pub fn arm_polyline(design: &RobotDesign, q: &JointConfig) -> Result<ArmPolyline> {
    let mut poly = ArmPolyline::with_capacity(2 * design.dof() + 3);
    arm_polyline_into(design, q.as_slice(), &mut poly)?;
    Ok(poly)
}

/// Fill `poly` with the arm polyline, reusing its buffers. Returns the
/// end-effector rotation as a by-product.
pub fn arm_polyline_into(design: &RobotDesign, q: &[f64], poly: &mut ArmPolyline) -> Result<Matrix3<f64>> {
    check_dims(design, q)?;
    let (rot, _) = walk(design, q, Some(poly));
    Ok(rot)
}

pub fn arm_point(design: &RobotDesign, q: &JointConfig, sigma: f64) -> Result<Vector3<f64>> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::SigmaOutOfRange(sigma));
    }
    arm_polyline(design, q)?.point_at(sigma)
}

pub fn ee_euler(design: &RobotDesign, q: &JointConfig) -> Result<EulerRpy> {
    Ok(forward_kinematics(design, q)?.euler)
}

/// Sum of all `a` and `d` offsets, tool included.
pub fn total_length(design: &RobotDesign) -> f64 {
    design.rows().map(|l| l.a + l.d).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignLimits {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub a_max: f64,
    pub d_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub length_min: f64,
    pub length_max: f64,
    pub axis_tolerance: f64,
}

impl Default for DesignLimits {
    fn default() -> Self {
        Self {
            alpha_min: -PI / 2.0,
            alpha_max: PI / 2.0,
            a_max: 0.5,
            d_max: 0.5,
            q_min: -PI,
            q_max: PI,
            length_min: 0.6,
            length_max: 1.2,
            axis_tolerance: DEFAULT_AXIS_TOLERANCE,
        }
    }
}

impl DesignLimits {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_min <= self.alpha_max
            && self.a_max >= 0.0
            && self.d_max >= 0.0
            && self.q_min < self.q_max
            && self.length_min < self.length_max
            && self.axis_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("inconsistent design limits: {self:?}")))
        }
    }

    pub fn joint_config_within(&self, q: &JointConfig) -> bool {
        q.0.iter().all(|&v| v >= self.q_min && v <= self.q_max)
    }
}

/// Which DH row a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Row {
    /// Zero-based joint index.
    Joint(usize),
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitViolation {
    NonFinite {
        row: Row,
    },
    Alpha {
        row: Row,
        value: f64,
    },
    LinkLength {
        row: Row,
        value: f64,
    },
    Offset {
        row: Row,
        value: f64,
    },
    TotalLength {
        value: f64,
        min: f64,
        max: f64,
    },
    /// Joints `joint` and `joint + 1` (zero-based) share an axis.
    Concentric {
        joint: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub violations: Vec<LimitViolation>,
}

impl LimitReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for LimitReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "within limits");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            match v {
                LimitViolation::NonFinite { row } => write!(f, "{row:?}: non-finite parameter")?,
                LimitViolation::Alpha { row, value } => write!(f, "{row:?}: alpha {value} out of range")?,
                LimitViolation::LinkLength { row, value } => write!(f, "{row:?}: a {value} out of range")?,
                LimitViolation::Offset { row, value } => write!(f, "{row:?}: d {value} out of range")?,
                LimitViolation::TotalLength { value, min, max } => {
                    write!(f, "total length {value} not in ({min}, {max})")?
                }
                LimitViolation::Concentric { joint } => {
                    write!(f, "joints {} and {} are concentric", joint + 1, joint + 2)?
                }
            }
        }
        Ok(())
    }
}

/// Static design-limit checks: per-parameter boxes, the open total-length
/// band, and non-concentric consecutive joint axes.
pub fn check_design_limits(design: &RobotDesign, limits: &DesignLimits) -> LimitReport {
    let mut violations = Vec::new();
    let rows = design
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| (Row::Joint(i), l))
        .chain(design.tool.iter().map(|l| (Row::Tool, l)));
    for (row, link) in rows {
        if !link.is_finite() {
            violations.push(LimitViolation::NonFinite { row });
            continue;
        }
        if link.alpha < limits.alpha_min || link.alpha > limits.alpha_max {
            violations.push(LimitViolation::Alpha { row, value: link.alpha });
        }
        if link.a < 0.0 || link.a > limits.a_max {
            violations.push(LimitViolation::LinkLength { row, value: link.a });
        }
        if link.d < 0.0 || link.d > limits.d_max {
            violations.push(LimitViolation::Offset { row, value: link.d });
        }
    }
    let length = total_length(design);
    if !(length > limits.length_min && length < limits.length_max) {
        violations.push(LimitViolation::TotalLength {
            value: length,
            min: limits.length_min,
            max: limits.length_max,
        });
    }
    // Link i maps the axis of joint i onto the axis of joint i + 1; the two
    // coincide when it neither twists nor offsets along the common normal.
    let n = design.dof();
    for (i, link) in design.links.iter().enumerate().take(n.saturating_sub(1)) {
        if link.alpha.abs() < limits.axis_tolerance && link.a < limits.axis_tolerance {
            violations.push(LimitViolation::Concentric { joint: i });
        }
    }
    LimitReport { violations }
}
