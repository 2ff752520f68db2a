//! The simulation owner behind the service: plant, control cascade and
//! needle drive, plus the command gate and heartbeat rules. Everything here
//! runs on simulated time, so it can be driven directly by tests.

use std::collections::HashMap;

use crane_core::clutch::{InchwormState, ClutchCommand};
use crane_core::config::CraneConfig;
use crane_core::control::{ee_control_step, ee_pose_error, EeGains};
use crane_core::harness::{prepare_plant, Rig, TrackingMode};
use crane_core::kinematics::{JointLimits, KinematicChain};
use crane_core::plant::WatchdogStatus;
use crane_core::{Error as CoreError, JointVector, Pose, DOF};

use crate::protocol::{ClutchView, Command, Mode, Reason, Role, StateSnapshot, WirePose};

/// Why a command was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub reason: Reason,
    pub message: String,
}

impl Rejection {
    fn new(reason: Reason, message: impl Into<String>) -> Self {
        Self {
            reason,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeartbeatAction {
    None,
    HoldSetpoints,
}

/// What to do about a client that has been silent for `silence` seconds.
pub fn heartbeat_action(mode: Mode, silence: f64, timeout: f64) -> HeartbeatAction {
    if mode.is_motion() && silence > timeout {
        HeartbeatAction::HoldSetpoints
    } else {
        HeartbeatAction::None
    }
}

#[derive(Debug, Clone)]
struct Client {
    name: String,
    role: Role,
    last_seq: Option<u64>,
}

pub struct Session {
    cfg: CraneConfig,
    rig: Rig,
    inchworm: InchwormState,
    chain: KinematicChain,
    limits: JointLimits,
    mode: Mode,
    target: Option<Pose>,
    jog: JointVector,
    insertion_target: Option<f64>,
    insertion_stalled: bool,
    frozen: bool,
    last_activity: f64,
    clients: HashMap<u64, Client>,
    controller: Option<u64>,
    clutch_decimation: u64,
    ticks: u64,
    snapshots: u64,
}

impl Session {
    /// Build, calibrate and register the simulated robot and leave it idle at
    /// home. Both clutches start cold and open.
    pub fn new(cfg: CraneConfig) -> Result<Self, CoreError> {
        cfg.validate()?;
        let (plant, setup) = prepare_plant(&cfg.plant, &cfg.control, &cfg.harness, cfg.service.seed)?;
        let rig = Rig::new(plant, cfg.control, TrackingMode::ClosedLoop, setup.coupling, setup.registration)?;
        let clutch_decimation = (cfg.clutch.dt / rig.dt()).round().max(1.0) as u64;
        Ok(Self {
            inchworm: InchwormState::released(&cfg.clutch),
            chain: KinematicChain::crane(),
            limits: JointLimits::crane(),
            mode: Mode::Idle,
            target: None,
            jog: *rig.joint_estimate(),
            insertion_target: None,
            insertion_stalled: false,
            frozen: false,
            last_activity: rig.time(),
            clients: HashMap::new(),
            controller: None,
            clutch_decimation,
            ticks: 0,
            snapshots: 0,
            rig,
            cfg,
        })
    }

    pub fn config(&self) -> &CraneConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.rig.time()
    }

    pub fn dt(&self) -> f64 {
        self.rig.dt()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn inchworm(&self) -> &InchwormState {
        &self.inchworm
    }

    pub fn limits(&self) -> &JointLimits {
        &self.limits
    }

    /// Register a connection. A matching token grants control authority
    /// unless another connection already holds it.
    pub fn hello(&mut self, conn: u64, name: &str, token: Option<&str>) -> Role {
        let wants_control = token == Some(self.cfg.service.token.as_str());
        let role = if wants_control && self.controller.is_none_or(|c| c == conn) {
            self.controller = Some(conn);
            self.last_activity = self.time();
            Role::Controller
        } else {
            Role::Observer
        };
        self.clients.insert(
            conn,
            Client {
                name: name.to_owned(),
                role,
                last_seq: None,
            },
        );
        role
    }

    pub fn disconnect(&mut self, conn: u64) {
        self.clients.remove(&conn);
        if self.controller == Some(conn) {
            self.controller = None;
        }
    }

    pub fn client_name(&self, conn: u64) -> Option<&str> {
        self.clients.get(&conn).map(|c| c.name.as_str())
    }

    /// Gate and apply one command. Any command from the controller counts as
    /// a heartbeat, accepted or not; a rejected command still uses up its
    /// sequence number.
    pub fn submit(&mut self, conn: u64, seq: u64, cmd: &Command) -> Result<(), Rejection> {
        let Some(client) = self.clients.get_mut(&conn) else {
            return Err(Rejection::new(Reason::NoSession, "send hello first"));
        };
        if client.role != Role::Controller {
            return Err(Rejection::new(Reason::Unauthorized, "observers cannot command"));
        }
        if client.last_seq.is_some_and(|last| seq <= last) {
            return Err(Rejection::new(
                Reason::Sequence,
                format!("sequence {seq} not above {}", client.last_seq.unwrap_or(0)),
            ));
        }
        client.last_seq = Some(seq);
        self.last_activity = self.time();
        self.frozen = false;
        self.gate(cmd)?;
        self.apply(cmd);
        Ok(())
    }

    /// Check a command against the current mode, limits and interlocks.
    pub fn gate(&self, cmd: &Command) -> Result<(), Rejection> {
        if !cmd.is_motion() {
            return Ok(());
        }
        if self.mode == Mode::Estopped {
            return Err(Rejection::new(Reason::Estopped, "e-stop active; send reset"));
        }
        let need = |mode: Mode| {
            if self.mode == mode {
                Ok(())
            } else {
                Err(Rejection::new(
                    Reason::ModeMismatch,
                    format!("needs mode {mode:?}, current mode is {:?}", self.mode),
                ))
            }
        };
        match *cmd {
            Command::SetMode { mode } => {
                if mode == Mode::Estopped {
                    return Err(Rejection::new(Reason::ModeMismatch, "use the estop command"));
                }
                if self.insertion_target.is_some() && mode != Mode::Insertion {
                    return Err(Rejection::new(Reason::ModeMismatch, "insertion in progress"));
                }
                Ok(())
            }
            Command::SetEeTarget { pose } => {
                need(Mode::EeTarget)?;
                let target = pose
                    .to_pose()
                    .ok_or_else(|| Rejection::new(Reason::Malformed, "target pose is not finite or not a rotation"))?;
                self.check_target(&target)
            }
            Command::JogJoint { index, delta } => {
                need(Mode::JointJog)?;
                if index >= DOF || !delta.is_finite() {
                    return Err(Rejection::new(Reason::Malformed, format!("bad jog of joint {index} by {delta}")));
                }
                let mut q = self.jog;
                q[index] += delta;
                let (lo, hi) = self.limits.ranges[index];
                if q[index] < lo || q[index] > hi {
                    return Err(Rejection::new(
                        Reason::Limit,
                        format!("joint {} would reach {:.4}, travel is [{lo:.4}, {hi:.4}]", index + 1, q[index]),
                    ));
                }
                Ok(())
            }
            Command::Clutch { .. } => {
                if !matches!(self.mode, Mode::Idle | Mode::Insertion) {
                    return Err(Rejection::new(Reason::ModeMismatch, "clutches are switched in idle or insertion mode"));
                }
                if self.insertion_target.is_some() {
                    return Err(Rejection::new(Reason::ModeMismatch, "insertion in progress"));
                }
                Ok(())
            }
            Command::Insert { depth } => {
                need(Mode::Insertion)?;
                let max = self.cfg.service.max_insertion_depth;
                if !(depth.is_finite() && depth > self.inchworm.needle_depth && depth <= max) {
                    return Err(Rejection::new(
                        Reason::Limit,
                        format!(
                            "depth {depth} m must exceed the current {:.4} m and stay within {max} m",
                            self.inchworm.needle_depth
                        ),
                    ));
                }
                if !self.inchworm.has_grasp() {
                    return Err(Rejection::new(Reason::NoGrasp, "neither clutch holds the needle"));
                }
                Ok(())
            }
            Command::Estop | Command::Reset | Command::Heartbeat => Ok(()),
        }
    }

    /// A target must lie near the current tip and be reachable inside the
    /// joint travel by the nominal kinematics.
    fn check_target(&self, target: &Pose) -> Result<(), Rejection> {
        let tip = self.rig.actual_tip();
        let jump = (target.translation - tip.translation).norm();
        let max = self.cfg.service.max_target_jump;
        if jump > max {
            return Err(Rejection::new(
                Reason::Limit,
                format!("target is {:.1} mm from the tip, limit {:.1} mm", jump * 1e3, max * 1e3),
            ));
        }
        match self.solve_ik(target) {
            Some(q) if self.limits.contains(q.as_slice()) => Ok(()),
            Some(q) => {
                let v = self.limits.check(q.as_slice());
                Err(Rejection::new(
                    Reason::Limit,
                    format!("target needs joint {} outside its travel", v[0].joint + 1),
                ))
            }
            None => Err(Rejection::new(Reason::Limit, "target is not reachable")),
        }
    }

    /// Resolved-rate iteration on the nominal chain from the current estimate.
    fn solve_ik(&self, target: &Pose) -> Option<JointVector> {
        let gains = EeGains::new(1.0, 1.0, self.cfg.control.lambda).ok()?;
        let mut q = *self.rig.joint_estimate();
        for _ in 0..1000 {
            let pose = self.chain.forward_kinematics(q.as_slice()).ok()?;
            let err = ee_pose_error(target, &pose);
            if err.position_norm() < 1e-6 && err.orientation_norm() < 1e-5 {
                return Some(q);
            }
            q = ee_control_step(&q, &err, None, &self.chain, &gains, &self.cfg.control.ee_step).ok()?;
        }
        None
    }

    fn apply(&mut self, cmd: &Command) {
        match *cmd {
            Command::Estop => {
                self.mode = Mode::Estopped;
                self.clear_motion();
            }
            Command::Reset => {
                if self.rig.plant().state().watchdog == WatchdogStatus::Tripped {
                    self.rig.reset_watchdog();
                }
                self.inchworm.stalled = false;
                self.insertion_stalled = false;
                self.mode = Mode::Idle;
                self.clear_motion();
            }
            Command::SetMode { mode } => {
                if mode != self.mode {
                    self.mode = mode;
                    self.clear_motion();
                }
            }
            Command::SetEeTarget { pose } => self.target = pose.to_pose(),
            Command::JogJoint { index, delta } => {
                self.jog[index] += delta;
                let jog = self.jog;
                self.rig.cascade_mut().set_joint_target(jog);
            }
            Command::Clutch { action, which } => self.inchworm.set_command(which, ClutchCommand::from(action)),
            Command::Insert { depth } => {
                self.insertion_target = Some(depth);
                self.insertion_stalled = false;
            }
            Command::Heartbeat => {}
        }
    }

    /// Drop every motion setpoint and hold where the robot is.
    fn clear_motion(&mut self) {
        self.target = None;
        self.insertion_target = None;
        self.rig.hold();
        self.jog = *self.rig.joint_estimate();
    }

    /// Advance one control period.
    pub fn tick(&mut self) -> Result<(), CoreError> {
        let silence = self.time() - self.last_activity;
        if !self.frozen
            && heartbeat_action(self.mode, silence, self.cfg.service.heartbeat_timeout) == HeartbeatAction::HoldSetpoints
        {
            self.frozen = true;
            self.clear_motion();
        }
        if self.rig.plant().state().watchdog == WatchdogStatus::Tripped && self.mode != Mode::Estopped {
            self.mode = Mode::Estopped;
            self.clear_motion();
        }
        match self.mode {
            Mode::Estopped => self.rig.hold_tick()?,
            Mode::EeTarget => {
                let target = self.target;
                self.rig.tick(target.as_ref())?;
            }
            Mode::Idle | Mode::JointJog | Mode::Insertion => {
                self.rig.tick(None)?;
            }
        }
        self.ticks += 1;
        if self.ticks.is_multiple_of(self.clutch_decimation) {
            self.step_needle_drive()?;
        }
        Ok(())
    }

    fn step_needle_drive(&mut self) -> Result<(), CoreError> {
        let Some(depth) = self.insertion_target.filter(|_| self.mode == Mode::Insertion) else {
            return self.inchworm.step_clutches(&self.cfg.clutch);
        };
        match self
            .inchworm
            .step_insertion(&self.cfg.clutch, depth, self.cfg.service.insertion_resistance)
        {
            Ok(true) => self.insertion_target = None,
            Ok(false) => {}
            Err(CoreError::InsertionStall { .. }) => {
                self.insertion_target = None;
                self.insertion_stalled = true;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    pub fn run_for(&mut self, seconds: f64) -> Result<(), CoreError> {
        let n = (seconds / self.dt()).round() as usize;
        for _ in 0..n {
            self.tick()?;
        }
        Ok(())
    }

    /// Let `seconds` pass without a control tick, as if the loop had hung.
    pub fn stall_for(&mut self, seconds: f64) -> Result<(), CoreError> {
        let n = (seconds / self.dt()).round() as usize;
        for _ in 0..n {
            self.rig.stall_tick()?;
        }
        Ok(())
    }

    pub fn setpoints_frozen(&self) -> bool {
        self.frozen
    }

    pub fn snapshot(&mut self) -> StateSnapshot {
        self.snapshots += 1;
        let tip = self.rig.actual_tip();
        let err = self.target.map(|t| ee_pose_error(&t, &tip));
        let state = self.rig.plant().state();
        let clutch = |c: &crane_core::clutch::ClutchState, command| ClutchView {
            temperature: c.temperature,
            engaged: c.engaged,
            command,
        };
        StateSnapshot {
            index: self.snapshots,
            time: state.clock,
            mode: self.mode,
            joints: (*self.rig.joint_estimate()).into(),
            motors: state.motor_pos.into(),
            tip_true: WirePose::from(&tip),
            tip_measured: WirePose::from(self.rig.measured_tip()),
            target: self.target.as_ref().map(WirePose::from),
            e_pos: err.map_or([0.0; 3], |e| e.e_pos.into()),
            e_pos_norm: err.map_or(0.0, |e| e.position_norm()),
            e_ori_norm: err.map_or(0.0, |e| e.orientation_norm()),
            clutch_a: clutch(&self.inchworm.clutch_a, self.inchworm.command_a),
            clutch_b: clutch(&self.inchworm.clutch_b, self.inchworm.command_b),
            inchworm_phase: self.inchworm.phase,
            needle_depth: self.inchworm.needle_depth,
            insertion_target: self.insertion_target,
            insertion_stalled: self.insertion_stalled,
            watchdog: state.watchdog,
            setpoints_frozen: self.frozen,
        }
    }
}
