//! URDF export of a DH design.
//!
//! Link `k` carries the frame of joint `k` after its rotation; the constant
//! part of each DH row (`Tz(d) Tx(a) Rx(alpha)`) becomes the origin of the
//! next joint, which is `xyz = (a, 0, d)`, `rpy = (alpha, 0, 0)`.

use std::fmt::Write;

use armsynth_core::kinematics::{check_design_limits, DesignLimits, DhLink, RobotDesign};

use crate::CliError;

const RADIUS: f64 = 0.02;

fn origin(link: Option<&DhLink>) -> String {
    match link {
        None => r#"<origin xyz="0 0 0" rpy="0 0 0"/>"#.to_string(),
        Some(l) => format!(r#"<origin xyz="{} 0 {}" rpy="{} 0 0"/>"#, l.a, l.d, l.alpha),
    }
}

/// Cylinders along the offset (`z`) and the common normal (`x`) of a row.
fn visuals(out: &mut String, row: &DhLink) {
    if row.d > 0.0 {
        let _ = writeln!(
            out,
            r#"    <visual><origin xyz="0 0 {}" rpy="0 0 0"/><geometry><cylinder radius="{RADIUS}" length="{}"/></geometry></visual>"#,
            row.d / 2.0,
            row.d
        );
    }
    if row.a > 0.0 {
        let _ = writeln!(
            out,
            r#"    <visual><origin xyz="{} 0 {}" rpy="0 {} 0"/><geometry><cylinder radius="{RADIUS}" length="{}"/></geometry></visual>"#,
            row.a / 2.0,
            row.d,
            std::f64::consts::FRAC_PI_2,
            row.a
        );
    }
}

fn link(out: &mut String, name: &str, row: Option<&DhLink>) {
    match row {
        Some(row) if row.a > 0.0 || row.d > 0.0 => {
            let _ = writeln!(out, r#"  <link name="{name}">"#);
            visuals(out, row);
            let _ = writeln!(out, "  </link>");
        }
        _ => {
            let _ = writeln!(out, r#"  <link name="{name}"/>"#);
        }
    }
}

/// Render `design` as URDF. Designs outside `limits` are rejected.
pub fn export_urdf(design: &RobotDesign, limits: &DesignLimits, name: &str) -> Result<String, CliError> {
    let report = check_design_limits(design, limits);
    if !report.is_valid() {
        return Err(CliError::input(format!("design rejected: {report}")));
    }
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0"?>"#);
    let _ = writeln!(out, r#"<robot name="{name}">"#);
    link(&mut out, "base_link", None);
    let mut parent = "base_link".to_string();
    let mut prev: Option<&DhLink> = None;
    for (i, row) in design.links.iter().enumerate() {
        let child = format!("link_{}", i + 1);
        link(&mut out, &child, Some(row));
        let _ = writeln!(out, r#"  <joint name="joint_{}" type="revolute">"#, i + 1);
        let _ = writeln!(out, r#"    <parent link="{parent}"/>"#);
        let _ = writeln!(out, r#"    <child link="{child}"/>"#);
        let _ = writeln!(out, "    {}", origin(prev));
        let _ = writeln!(out, r#"    <axis xyz="0 0 1"/>"#);
        let _ = writeln!(
            out,
            r#"    <limit lower="{}" upper="{}" effort="100" velocity="1"/>"#,
            limits.q_min, limits.q_max
        );
        let _ = writeln!(out, "  </joint>");
        parent = child;
        prev = Some(row);
    }
    let mut fixed = |out: &mut String, child: &str, row: Option<&DhLink>, at: Option<&DhLink>| {
        link(out, child, row);
        let _ = writeln!(out, r#"  <joint name="{child}_joint" type="fixed">"#);
        let _ = writeln!(out, r#"    <parent link="{parent}"/>"#);
        let _ = writeln!(out, r#"    <child link="{child}"/>"#);
        let _ = writeln!(out, "    {}", origin(at));
        let _ = writeln!(out, "  </joint>");
        parent = child.to_string();
    };
    fixed(&mut out, "flange", design.tool.as_ref(), prev);
    if let Some(tool) = design.tool.as_ref() {
        fixed(&mut out, "tool", None, Some(tool));
    }
    let _ = writeln!(out, "</robot>");
    Ok(out)
}
