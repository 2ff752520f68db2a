//! Wire messages. Every frame is one JSON object tagged by `type` and carrying
//! the schema version `v`. Units are SI throughout: meters, radians, seconds,
//! degrees Celsius.

use crane_core::clutch::{ClutchCommand, ClutchId, InchwormPhase};
use crane_core::plant::WatchdogStatus;
use crane_core::Pose;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        v: u32,
        client: String,
        /// Control-authority token; without it the client is an observer.
        #[serde(default)]
        token: Option<String>,
    },
    Command {
        v: u32,
        seq: u64,
        command: Command,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        v: u32,
        client: String,
        role: Role,
        /// Joint travel limits, `(lower, upper)` per joint.
        joint_limits: Vec<(f64, f64)>,
        max_target_jump: f64,
        heartbeat_timeout: f64,
    },
    Snapshot {
        v: u32,
        #[serde(flatten)]
        state: Box<StateSnapshot>,
    },
    Ack {
        v: u32,
        seq: u64,
    },
    Error {
        v: u32,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        seq: Option<u64>,
        reason: Reason,
        message: String,
    },
}

impl ServerMessage {
    pub fn ack(seq: u64) -> Self {
        Self::Ack {
            v: PROTOCOL_VERSION,
            seq,
        }
    }

    pub fn error(seq: Option<u64>, reason: Reason, message: impl Into<String>) -> Self {
        Self::Error {
            v: PROTOCOL_VERSION,
            seq,
            reason,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    JointJog,
    EeTarget,
    Insertion,
    Estopped,
}

impl Mode {
    /// Modes in which a silent client has its setpoints frozen.
    pub fn is_motion(self) -> bool {
        matches!(self, Mode::JointJog | Mode::EeTarget | Mode::Insertion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutchAction {
    Engage,
    Release,
}

impl From<ClutchAction> for ClutchCommand {
    fn from(a: ClutchAction) -> Self {
        match a {
            ClutchAction::Engage => ClutchCommand::Hold,
            ClutchAction::Release => ClutchCommand::Release,
        }
    }
}

/// Pose on the wire: position in meters, unit quaternion as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub position: [f64; 3],
    pub quaternion: [f64; 4],
}

impl WirePose {
    /// `None` for non-finite values or a quaternion too short to normalise.
    pub fn to_pose(&self) -> Option<Pose> {
        let [w, x, y, z] = self.quaternion;
        let q = Quaternion::new(w, x, y, z);
        let finite = self.position.iter().chain(self.quaternion.iter()).all(|v| v.is_finite());
        if !finite || q.norm() < 1e-6 {
            return None;
        }
        Some(Pose::from_quaternion(&UnitQuaternion::from_quaternion(q), Vector3::from(self.position)))
    }
}

impl From<&Pose> for WirePose {
    fn from(p: &Pose) -> Self {
        Self {
            position: p.translation.into(),
            quaternion: p.quaternion_wxyz(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    SetEeTarget { pose: WirePose },
    JogJoint { index: usize, delta: f64 },
    SetMode { mode: Mode },
    Clutch { action: ClutchAction, which: ClutchId },
    /// Drive the needle to an absolute depth, m.
    Insert { depth: f64 },
    Estop,
    Reset,
    /// No-op that keeps the link alive.
    Heartbeat,
}

impl Command {
    /// Commands that can move the robot or the needle.
    pub fn is_motion(&self) -> bool {
        !matches!(self, Command::Estop | Command::Reset | Command::Heartbeat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    ModeMismatch,
    Limit,
    NoGrasp,
    Estopped,
    Unauthorized,
    /// Sequence number not above the client's last one.
    Sequence,
    Malformed,
    /// Command needs a `hello` first.
    NoSession,
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutchView {
    pub temperature: f64,
    pub engaged: bool,
    pub command: ClutchCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// Broadcast counter, strictly increasing.
    pub index: u64,
    pub time: f64,
    pub mode: Mode,
    pub joints: [f64; 8],
    pub motors: [f64; 8],
    /// Noise-free tip pose seen through the registration, base frame.
    pub tip_true: WirePose,
    /// Tip pose the end-effector loop last acted on.
    pub tip_measured: WirePose,
    pub target: Option<WirePose>,
    /// Position error of the true tip against the target, m; zero without a target.
    pub e_pos: [f64; 3],
    pub e_pos_norm: f64,
    /// Needle-axis angle between true tip and target, rad.
    pub e_ori_norm: f64,
    pub clutch_a: ClutchView,
    pub clutch_b: ClutchView,
    pub inchworm_phase: InchwormPhase,
    pub needle_depth: f64,
    pub insertion_target: Option<f64>,
    pub insertion_stalled: bool,
    pub watchdog: WatchdogStatus,
    /// Motion setpoints frozen after client silence.
    pub setpoints_frozen: bool,
}

impl StateSnapshot {
    pub fn is_finite(&self) -> bool {
        let poses = [Some(&self.tip_true), Some(&self.tip_measured), self.target.as_ref()];
        let pose_ok = poses
            .into_iter()
            .flatten()
            .all(|p| p.position.iter().chain(p.quaternion.iter()).all(|v| v.is_finite()));
        let scalars = [
            self.time,
            self.e_pos_norm,
            self.e_ori_norm,
            self.clutch_a.temperature,
            self.clutch_b.temperature,
            self.needle_depth,
            self.insertion_target.unwrap_or(0.0),
        ];
        pose_ok
            && self
                .joints
                .iter()
                .chain(&self.motors)
                .chain(&self.e_pos)
                .chain(&scalars)
                .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_json_shape() {
        let msg = ClientMessage::Command {
            v: 1,
            seq: 4,
            command: Command::JogJoint { index: 2, delta: 0.001 },
        };
        let text = serde_json::to_string(&msg).unwrap();
        assert_eq!(
            text,
            r#"{"type":"command","v":1,"seq":4,"command":{"op":"jog_joint","index":2,"delta":0.001}}"#
        );
        assert_eq!(serde_json::from_str::<ClientMessage>(&text).unwrap(), msg);
    }

    #[test]
    fn hello_token_is_optional() {
        let msg: ClientMessage = serde_json::from_str(r#"{"type":"hello","v":1,"client":"ui"}"#).unwrap();
        assert_eq!(
            msg,
            ClientMessage::Hello {
                v: 1,
                client: "ui".into(),
                token: None
            }
        );
    }

    #[test]
    fn error_reason_is_snake_case() {
        let text = serde_json::to_string(&ServerMessage::error(Some(3), Reason::ModeMismatch, "x")).unwrap();
        assert!(text.contains(r#""reason":"mode_mismatch""#), "{text}");
        assert!(text.contains(r#""type":"error""#));
    }

    #[test]
    fn wire_pose_round_trip() {
        let pose = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.7, Vector3::new(0.1, -0.2, 0.3));
        let back = WirePose::from(&pose).to_pose().unwrap();
        assert!(back.rotation_angle_to(&pose) < 1e-12);
        assert!((back.translation - pose.translation).norm() < 1e-15);
    }

    #[test]
    fn degenerate_quaternion_is_rejected() {
        let p = WirePose {
            position: [0.0; 3],
            quaternion: [0.0; 4],
        };
        assert!(p.to_pose().is_none());
        let p = WirePose {
            position: [f64::NAN, 0.0, 0.0],
            quaternion: [1.0, 0.0, 0.0, 0.0],
        };
        assert!(p.to_pose().is_none());
    }
}
