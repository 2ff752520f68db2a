//! Serial-chain kinematics in the Modified Denavit-Hartenberg convention.
//!
//! Each frame is reached from its predecessor by rotating `alpha` about x,
//! translating `a` along x, rotating `theta` about the new z and translating
//! `d` along it. Prismatic joints add their value to `d`, revolute joints to
//! `theta`; fixed frames ignore the joint vector.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::pose::Pose;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Prismatic,
    Revolute,
    Fixed,
}

impl JointKind {
    pub fn is_actuated(self) -> bool {
        self != JointKind::Fixed
    }

    fn code(self) -> &'static str {
        match self {
            JointKind::Prismatic => "p",
            JointKind::Revolute => "r",
            JointKind::Fixed => "f",
        }
    }
}

/// One Modified-DH frame. Lengths in meters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhFrame {
    pub a: f64,
    pub alpha: f64,
    pub d_offset: f64,
    pub theta_offset: f64,
    pub kind: JointKind,
}

impl DhFrame {
    pub const fn new(kind: JointKind, a: f64, alpha: f64, d_offset: f64, theta_offset: f64) -> Self {
        Self {
            a,
            alpha,
            d_offset,
            theta_offset,
            kind,
        }
    }

    pub const fn prismatic(a: f64, alpha: f64, theta: f64) -> Self {
        Self::new(JointKind::Prismatic, a, alpha, 0.0, theta)
    }

    pub const fn revolute(a: f64, alpha: f64, d: f64, theta_offset: f64) -> Self {
        Self::new(JointKind::Revolute, a, alpha, d, theta_offset)
    }

    pub const fn fixed(a: f64, alpha: f64, d: f64, theta: f64) -> Self {
        Self::new(JointKind::Fixed, a, alpha, d, theta)
    }

    /// Transform from the previous frame to this one for the given joint value.
    pub fn transform(&self, joint_value: f64) -> Pose {
        let (d, theta) = match self.kind {
            JointKind::Prismatic => (self.d_offset + joint_value, self.theta_offset),
            JointKind::Revolute => (self.d_offset, self.theta_offset + joint_value),
            JointKind::Fixed => (self.d_offset, self.theta_offset),
        };
        let (sa, ca) = self.alpha.sin_cos();
        let (st, ct) = theta.sin_cos();
        // Rx(alpha) * Rz(theta), translation Rx(alpha) * (a, 0, d)
        let rotation = Matrix3::new(
            ct,
            -st,
            0.0,
            ca * st,
            ca * ct,
            -sa,
            sa * st,
            sa * ct,
            ca,
        );
        Pose::new(rotation, Vector3::new(self.a, -sa * d, ca * d))
    }
}

/// Frame-to-frame transform; see [`DhFrame::transform`].
pub fn link_transform(frame: &DhFrame, joint_value: f64) -> Pose {
    frame.transform(joint_value)
}

/// Position and orientation Jacobians of the last frame, one column per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    pub position: Matrix3xX<f64>,
    pub orientation: Matrix3xX<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    frames: Vec<DhFrame>,
}

impl KinematicChain {
    pub fn new(frames: Vec<DhFrame>) -> Self {
        Self { frames }
    }

    /// The CRANE chain: three base linear axes, trunnion, three cable-driven
    /// revolute joints, the insertion axis and the fixed grasper-tip offset.
    pub fn crane() -> Self {
        Self::new(vec![
            DhFrame::prismatic(0.0, -FRAC_PI_2, 0.0),
            DhFrame::prismatic(0.0, -FRAC_PI_2, -FRAC_PI_2),
            DhFrame::prismatic(0.0, -FRAC_PI_2, -FRAC_PI_2),
            DhFrame::revolute(0.0, 0.0, 0.0, 0.0),
            DhFrame::revolute(0.0, FRAC_PI_2, 0.0, FRAC_PI_2),
            DhFrame::revolute(7e-2, FRAC_PI_2, 0.0, 0.0),
            DhFrame::revolute(7e-2, FRAC_PI_2, 3e-2, -FRAC_PI_2),
            DhFrame::prismatic(1e-2, -FRAC_PI_2, 0.0),
            DhFrame::fixed(0.0, 0.0, 6e-2, FRAC_PI_2),
        ])
    }

    pub fn frames(&self) -> &[DhFrame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [DhFrame] {
        &mut self.frames
    }

    pub fn dof(&self) -> usize {
        self.frames.iter().filter(|f| f.kind.is_actuated()).count()
    }

    /// Kinds of the actuated joints in chain order.
    pub fn joint_kinds(&self) -> Vec<JointKind> {
        self.frames
            .iter()
            .map(|f| f.kind)
            .filter(|k| k.is_actuated())
            .collect()
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// Base-to-frame pose of every frame, in order.
    pub fn frame_poses(&self, q: &[f64]) -> Result<Vec<Pose>> {
        self.check_dim(q)?;
        let mut poses = Vec::with_capacity(self.frames.len());
        let mut current = Pose::identity();
        let mut joint = q.iter();
        for frame in &self.frames {
            let value = if frame.kind.is_actuated() {
                *joint.next().expect("dimension checked")
            } else {
                0.0
            };
            current = current.compose(&frame.transform(value));
            poses.push(current);
        }
        Ok(poses)
    }

    /// Base-to-tip pose.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Pose> {
        Ok(self
            .frame_poses(q)?
            .last()
            .copied()
            .unwrap_or_else(Pose::identity))
    }

    /// Geometric Jacobians of the tip frame evaluated at `q`.
    pub fn jacobians(&self, q: &[f64]) -> Result<Jacobians> {
        let poses = self.frame_poses(q)?;
        let dof = self.dof();
        let tip = poses.last().map(|p| p.translation).unwrap_or_else(Vector3::zeros);
        let mut position = Matrix3xX::zeros(dof);
        let mut orientation = Matrix3xX::zeros(dof);
        let mut col = 0;
        for (frame, pose) in self.frames.iter().zip(&poses) {
            let axis = pose.z_axis();
            match frame.kind {
                JointKind::Prismatic => {
                    position.set_column(col, &axis);
                }
                JointKind::Revolute => {
                    position.set_column(col, &axis.cross(&(tip - pose.translation)));
                    orientation.set_column(col, &axis);
                }
                JointKind::Fixed => continue,
            }
            col += 1;
        }
        Ok(Jacobians {
            position,
            orientation,
        })
    }

    /// Parse the plain-text chain format: one frame per line,
    /// `kind a alpha d theta`, whitespace or comma separated. `kind` is one of
    /// `p`/`prismatic`, `r`/`revolute`, `f`/`fixed`. Angles accept `pi`
    /// expressions such as `-pi/2`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut frames = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
            }
            let kind = match fields[0].to_ascii_lowercase().as_str() {
                "p" | "prismatic" => JointKind::Prismatic,
                "r" | "revolute" => JointKind::Revolute,
                "f" | "fixed" | "-" => JointKind::Fixed,
                other => return Err(parse_err(format!("unknown joint kind `{other}`"))),
            };
            let mut values = [0.0; 4];
            for (slot, field) in values.iter_mut().zip(&fields[1..]) {
                *slot = parse_scalar(field).ok_or_else(|| parse_err(format!("bad number `{field}`")))?;
            }
            frames.push(DhFrame::new(kind, values[0], values[1], values[2], values[3]));
        }
        Ok(Self::new(frames))
    }

    /// Serialize to the plain-text chain format. Values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# kind a alpha d theta\n");
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{} {:?} {:?} {:?} {:?}",
                f.kind.code(),
                f.a,
                f.alpha,
                f.d_offset,
                f.theta_offset
            );
        }
        out
    }
}

fn parse_scalar(s: &str) -> Option<f64> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    let lower = body.to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("pi") {
        let value = if rest.is_empty() {
            PI
        } else if let Some(div) = rest.strip_prefix('/') {
            PI / div.parse::<f64>().ok()?
        } else if let Some(mul) = rest.strip_prefix('*') {
            PI * mul.parse::<f64>().ok()?
        } else {
            return None;
        };
        return Some(sign * value);
    }
    body.parse::<f64>().ok().map(|v| sign * v)
}

/// Travel limits per joint, `(lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitViolation {
    pub joint: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl JointLimits {
    /// 400 mm of travel on the base axes, 200° on the cable-driven revolute
    /// joints. Trunnion and insertion-axis limits are not published; these are
    /// conservative placeholders.
    pub fn crane() -> Self {
        let cable = 100f64.to_radians();
        Self {
            ranges: vec![
                (-0.2, 0.2),
                (-0.2, 0.2),
                (-0.2, 0.2),
                (-PI, PI),
                (-cable, cable),
                (-cable, cable),
                (-cable, cable),
                (-0.02, 0.06),
            ],
        }
    }

    pub fn check(&self, q: &[f64]) -> Vec<LimitViolation> {
        q.iter()
            .zip(&self.ranges)
            .enumerate()
            .filter(|(_, (v, (lo, hi)))| **v < *lo || **v > *hi)
            .map(|(joint, (v, (lo, hi)))| LimitViolation {
                joint,
                value: *v,
                lower: *lo,
                upper: *hi,
            })
            .collect()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        self.check(q).is_empty()
    }
}
