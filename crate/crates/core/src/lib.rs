//! Task-driven kinematic design synthesis for serial robot arms.
//!
//! Given a recorded whole-arm demonstration (marker paths relative to the
//! shoulder plus hand orientation), search the Denavit-Hartenberg design
//! space for the arm that tracks it best, together with the joint path
//! that does the tracking.
//!
//! - [`kinematics`]: DH transforms, forward kinematics, the arm polyline.
//! - [`demonstration`]: recorded tasks, their file formats, smoothing and
//!   synthetic generation.
//! - [`fitness`]: marker projection, temporal/path fitness, area penalty,
//!   validity gates.
//! - [`optimize`]: the joint-space swarm used for multi-point IK and the
//!   design-space PSO / RA-PSO search.
//! - [`harness`]: seeded experiment runs, computational effort, algorithm
//!   comparisons and DOF sweeps.

// `!(x > 0.0)` comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demonstration;
pub mod error;
pub mod fitness;
pub mod harness;
pub mod kinematics;
pub mod optimize;

pub use error::{Error, Result};
pub use kinematics::{DesignLimits, DhLink, JointConfig, RobotDesign};
