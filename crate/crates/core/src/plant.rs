//! Ground-truth simulator of the physical robot.
//!
//! Motors follow their commands through a velocity-limited first-order servo.
//! Each joint then sees the coupled motor motion through a backlash deadband
//! and a compliant cable, and the tip is displaced by structural deflection
//! under the applied tip force. Sensors read this state with noise,
//! quantization and (for the tracker) latency.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::kinematics::{JointKind, KinematicChain};
use crate::pose::Pose;
use crate::transmission::CouplingMatrix;
use crate::{Error, JointVector, Matrix8, MotorVector, Result, DOF};

/// Motors are disabled when no command arrives for longer than this.
pub const WATCHDOG_TIMEOUT: f64 = 0.010;

/// Indices of the in-bore cable-driven joints (q5..q8).
pub const CABLE_JOINTS: [usize; 4] = [4, 5, 6, 7];

/// Rigid frame given as translation plus rotation vector (axis × angle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub translation: [f64; 3],
    pub rotation_vector: [f64; 3],
}

impl FrameSpec {
    pub fn pose(&self) -> Pose {
        let r = nalgebra::Rotation3::new(Vector3::from(self.rotation_vector));
        Pose::new(*r.matrix(), Vector3::from(self.translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Closed-loop bandwidth of each motor servo, Hz.
    pub motor_bandwidth: f64,
    /// Cable compliance of q5..q7 in rad/(N·m) and of q8 in m/N.
    pub cable_compliance: [f64; 4],
    /// Backlash deadband width of q5..q7 in rad and of q8 in m.
    pub cable_backlash: [f64; 4],
    /// Backlash of the three base linear axes, m.
    pub base_backlash: f64,
    /// Structural tip compliance along the applied force, m/N.
    pub tip_compliance: f64,
    /// Maximum independent joint velocity per joint (rad/s or m/s).
    pub joint_velocity_limits: [f64; DOF],
    /// Holding torque limit of the cable-driven revolute joints, N·m.
    pub joint_torque_limit: f64,
    pub encoder_noise_sigma: f64,
    pub encoder_quantum: f64,
    pub linear_encoder_noise_sigma: f64,
    pub linear_encoder_quantum: f64,
    pub tracker_noise_sigma_pos: f64,
    pub tracker_noise_sigma_ori: f64,
    pub tracker_latency: f64,
    /// True pose of the tracker's field generator in the robot base frame.
    pub tracker_frame: FrameSpec,
    /// 1σ relative error of each admissible coupling entry against the design value.
    pub coupling_tolerance: f64,
    /// 1σ error of DH lengths (a, d), m.
    pub dh_length_tolerance: f64,
    /// 1σ error of DH angles (alpha, theta), rad.
    pub dh_angle_tolerance: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let half_degree = 0.5f64.to_radians();
        Self {
            motor_bandwidth: 50.0,
            cable_compliance: [0.02, 0.02, 0.02, 5e-5],
            cable_backlash: [half_degree, half_degree, half_degree, 1e-4],
            base_backlash: 5e-5,
            tip_compliance: 10.3e-3 / 10.0,
            joint_velocity_limits: [0.166, 0.166, 0.332, 1.0, 5.16, 5.16, 5.16, 0.05],
            joint_torque_limit: 3.36,
            encoder_noise_sigma: 2e-4,
            encoder_quantum: 2.0 * std::f64::consts::PI / 16384.0,
            linear_encoder_noise_sigma: 5e-6,
            linear_encoder_quantum: 1e-6,
            tracker_noise_sigma_pos: 0.3e-3,
            tracker_noise_sigma_ori: 0.2f64.to_radians(),
            tracker_latency: 0.010,
            tracker_frame: FrameSpec {
                translation: [0.35, -0.25, 0.10],
                rotation_vector: [0.0, 0.0, 30f64.to_radians()],
            },
            coupling_tolerance: 0.03,
            dh_length_tolerance: 0.3e-3,
            dh_angle_tolerance: 0.2f64.to_radians(),
        }
    }
}

impl PlantConfig {
    /// Rigid, noiseless, backlash-free plant built exactly to the design values.
    pub fn ideal() -> Self {
        Self {
            motor_bandwidth: 200.0,
            cable_compliance: [0.0; 4],
            cable_backlash: [0.0; 4],
            base_backlash: 0.0,
            tip_compliance: 0.0,
            encoder_noise_sigma: 0.0,
            encoder_quantum: 0.0,
            linear_encoder_noise_sigma: 0.0,
            linear_encoder_quantum: 0.0,
            tracker_noise_sigma_pos: 0.0,
            tracker_noise_sigma_ori: 0.0,
            tracker_latency: 0.0,
            coupling_tolerance: 0.0,
            dh_length_tolerance: 0.0,
            dh_angle_tolerance: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.motor_bandwidth,
            self.base_backlash,
            self.tip_compliance,
            self.joint_torque_limit,
            self.encoder_noise_sigma,
            self.encoder_quantum,
            self.linear_encoder_noise_sigma,
            self.linear_encoder_quantum,
            self.tracker_noise_sigma_pos,
            self.tracker_noise_sigma_ori,
            self.tracker_latency,
            self.coupling_tolerance,
            self.dh_length_tolerance,
            self.dh_angle_tolerance,
        ];
        let arrays = self
            .cable_compliance
            .iter()
            .chain(&self.cable_backlash)
            .chain(&self.joint_velocity_limits);
        if scalars.iter().chain(arrays).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("plant parameters must be finite and non-negative".into()));
        }
        if self.motor_bandwidth == 0.0 || self.joint_velocity_limits.contains(&0.0) {
            return Err(Error::InvalidParameter("motor bandwidth and velocity limits must be positive".into()));
        }
        Ok(())
    }

    fn backlash_widths(&self) -> JointVector {
        let mut w = JointVector::zeros();
        for i in 0..3 {
            w[i] = self.base_backlash;
        }
        for (k, &j) in CABLE_JOINTS.iter().enumerate() {
            w[j] = self.cable_backlash[k];
        }
        w
    }

    fn compliances(&self) -> JointVector {
        let mut c = JointVector::zeros();
        for (k, &j) in CABLE_JOINTS.iter().enumerate() {
            c[j] = self.cable_compliance[k];
        }
        c
    }
}

/// The as-built robot: true kinematics and coupling, which differ from the
/// design values by manufacturing tolerances.
#[derive(Debug, Clone)]
pub struct PlantModel {
    cfg: PlantConfig,
    chain: KinematicChain,
    coupling: CouplingMatrix,
    tracker_frame: Pose,
    motor_velocity_limits: MotorVector,
    backlash: JointVector,
    compliance: JointVector,
    revolute: [bool; DOF],
}

impl PlantModel {
    /// Draw an as-built robot around the design values.
    pub fn build(cfg: PlantConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(seed, 0);
        let mut chain = KinematicChain::crane();
        let lengths = Normal::new(0.0, cfg.dh_length_tolerance).expect("validated sigma");
        let angles = Normal::new(0.0, cfg.dh_angle_tolerance).expect("validated sigma");
        for frame in chain.frames_mut() {
            frame.a += lengths.sample(&mut rng);
            frame.d_offset += lengths.sample(&mut rng);
            frame.alpha += angles.sample(&mut rng);
            frame.theta_offset += angles.sample(&mut rng);
        }
        let nominal = CouplingMatrix::crane_nominal();
        let relative = Normal::new(0.0, cfg.coupling_tolerance).expect("validated sigma");
        let mut l = *nominal.matrix();
        for v in l.iter_mut() {
            if *v != 0.0 {
                *v *= 1.0 + relative.sample(&mut rng);
            }
        }
        let coupling = CouplingMatrix::new(l, *nominal.mask())?;
        Self::with_parts(cfg, chain, coupling)
    }

    /// Plant with explicitly given true kinematics and coupling.
    pub fn with_parts(cfg: PlantConfig, chain: KinematicChain, coupling: CouplingMatrix) -> Result<Self> {
        cfg.validate()?;
        if chain.dof() != DOF {
            return Err(Error::DimensionMismatch {
                expected: DOF,
                actual: chain.dof(),
            });
        }
        // Motor speed limits come from the design drive ratios: the quoted
        // joint speeds are reached when a single motor runs flat out.
        let design = CouplingMatrix::crane_nominal();
        let motor_velocity_limits =
            MotorVector::from_fn(|i, _| cfg.joint_velocity_limits[i] / design.matrix()[(i, i)].abs());
        let kinds = chain.joint_kinds();
        let mut revolute = [false; DOF];
        for (r, k) in revolute.iter_mut().zip(kinds) {
            *r = k == JointKind::Revolute;
        }
        Ok(Self {
            tracker_frame: cfg.tracker_frame.pose(),
            backlash: cfg.backlash_widths(),
            compliance: cfg.compliances(),
            motor_velocity_limits,
            revolute,
            cfg,
            chain,
            coupling,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    /// True base-from-tracker transform.
    pub fn tracker_frame(&self) -> &Pose {
        &self.tracker_frame
    }

    pub fn motor_velocity_limits(&self) -> &MotorVector {
        &self.motor_velocity_limits
    }

    /// Motor positions that put the unloaded joints exactly at `q`.
    pub fn motors_for(&self, q: &JointVector) -> Result<MotorVector> {
        self.coupling.joints_to_motors(q)
    }

    /// Joint load from a tip force, clamped at the cable joints' torque limit.
    fn joint_loads(&self, q: &JointVector, tip_force: &Vector3<f64>) -> (JointVector, bool) {
        if tip_force.norm() == 0.0 || self.compliance.iter().all(|c| *c == 0.0) {
            return (JointVector::zeros(), false);
        }
        let j = self.chain.jacobians(q.as_slice()).expect("plant chain has 8 joints");
        let raw = j.position.transpose() * tip_force;
        let mut saturated = false;
        let limit = self.cfg.joint_torque_limit;
        let loads = JointVector::from_fn(|i, _| {
            let t = raw[i];
            if self.revolute[i] && self.compliance[i] > 0.0 && t.abs() > limit {
                saturated = true;
                t.signum() * limit
            } else {
                t
            }
        });
        (loads, saturated)
    }

    /// Rigid-body tip pose plus structural deflection along the tip force.
    pub fn tip_pose(&self, q: &JointVector, tip_force: &Vector3<f64>) -> Pose {
        let mut pose = self
            .chain
            .forward_kinematics(q.as_slice())
            .expect("plant chain has 8 joints");
        pose.translation += tip_force * self.cfg.tip_compliance;
        pose
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchdogStatus {
    Ok,
    Tripped,
}

/// Command staleness check: tripped iff the last command is older than 10 ms.
pub fn watchdog_check(last_cmd_age: f64) -> WatchdogStatus {
    if last_cmd_age > WATCHDOG_TIMEOUT {
        WatchdogStatus::Tripped
    } else {
        WatchdogStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub motor_pos: MotorVector,
    pub motor_vel: MotorVector,
    pub joint_pos_true: JointVector,
    /// Output of each joint's backlash element before cable stretch.
    pub backlash_state: JointVector,
    pub applied_tip_force: Vector3<f64>,
    pub theta_cmd: MotorVector,
    pub clock: f64,
    pub last_cmd_time: f64,
    pub watchdog: WatchdogStatus,
    pub torque_saturated: bool,
}

impl PlantState {
    /// At rest with the motors at `theta` and no load.
    pub fn at_rest(model: &PlantModel, theta: MotorVector) -> Self {
        let q = model.coupling.motors_to_joints(&theta);
        Self {
            motor_pos: theta,
            motor_vel: MotorVector::zeros(),
            joint_pos_true: q,
            backlash_state: q,
            applied_tip_force: Vector3::zeros(),
            theta_cmd: theta,
            clock: 0.0,
            last_cmd_time: 0.0,
            watchdog: WatchdogStatus::Ok,
            torque_saturated: false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.motor_pos
            .iter()
            .chain(self.motor_vel.iter())
            .chain(self.joint_pos_true.iter())
            .chain(self.applied_tip_force.iter())
            .all(|v| v.is_finite())
            && self.clock.is_finite()
    }

    /// Seconds since the last motor command, rounded to whole nanoseconds so
    /// accumulated clock error cannot decide a watchdog edge.
    pub fn command_age(&self) -> f64 {
        ((self.clock - self.last_cmd_time) * 1e9).round() / 1e9
    }
}

fn play(input: f64, output: f64, width: f64) -> f64 {
    let half = 0.5 * width;
    if input - output > half {
        input - half
    } else if output - input > half {
        input + half
    } else {
        output
    }
}

/// Advance the plant by `dt`. A `Some` command refreshes the watchdog.
pub fn step_plant(
    model: &PlantModel,
    state: &PlantState,
    theta_cmd: Option<&MotorVector>,
    tip_force: &Vector3<f64>,
    dt: f64,
) -> Result<PlantState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidParameter(format!("plant step {dt} s outside (0, 0.01]")));
    }
    if tip_force.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tip force"));
    }
    let mut next = *state;
    next.clock = state.clock + dt;
    if let Some(cmd) = theta_cmd {
        if cmd.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("motor command"));
        }
        next.theta_cmd = *cmd;
        next.last_cmd_time = state.clock;
    }
    // Judged at the end of the step, so a state at time t is tripped
    // exactly when the command has been stale for more than 10 ms by t.
    if watchdog_check(next.command_age()) == WatchdogStatus::Tripped {
        next.watchdog = WatchdogStatus::Tripped;
    }

    let gain = 1.0 - (-2.0 * std::f64::consts::PI * model.cfg.motor_bandwidth * dt).exp();
    for i in 0..DOF {
        let vel = if next.watchdog == WatchdogStatus::Tripped {
            0.0
        } else {
            let limit = model.motor_velocity_limits[i];
            ((next.theta_cmd[i] - state.motor_pos[i]) * gain / dt).clamp(-limit, limit)
        };
        next.motor_vel[i] = vel;
        next.motor_pos[i] = state.motor_pos[i] + vel * dt;
    }

    let drive = model.coupling.motors_to_joints(&next.motor_pos);
    for i in 0..DOF {
        next.backlash_state[i] = play(drive[i], state.backlash_state[i], model.backlash[i]);
    }
    let (loads, saturated) = model.joint_loads(&state.joint_pos_true, tip_force);
    next.joint_pos_true = next.backlash_state + model.compliance.component_mul(&loads);
    next.torque_saturated = saturated;
    next.applied_tip_force = *tip_force;
    Ok(next)
}

/// Re-arm after a watchdog trip: motors hold where they stopped.
pub fn reset_watchdog(state: &PlantState) -> PlantState {
    let mut next = *state;
    next.watchdog = WatchdogStatus::Ok;
    next.theta_cmd = state.motor_pos;
    next.last_cmd_time = state.clock;
    next
}

fn quantize(x: f64, quantum: f64) -> f64 {
    if quantum > 0.0 {
        (x / quantum).round() * quantum
    } else {
        x
    }
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
    } else {
        0.0
    }
}

/// Joint-encoder reading of the true joint positions.
pub fn sense_joints(model: &PlantModel, state: &PlantState, rng: &mut impl Rng) -> JointVector {
    let cfg = &model.cfg;
    JointVector::from_fn(|i, _| {
        let (sigma, quantum) = if model.revolute[i] {
            (cfg.encoder_noise_sigma, cfg.encoder_quantum)
        } else {
            (cfg.linear_encoder_noise_sigma, cfg.linear_encoder_quantum)
        };
        quantize(state.joint_pos_true[i] + gaussian(rng, sigma), quantum)
    })
}

/// Time-stamped true tip poses in the base frame, newest last.
#[derive(Debug, Clone, Default)]
pub struct TipHistory {
    samples: VecDeque<(f64, Pose)>,
    horizon: f64,
}

impl TipHistory {
    pub fn new(horizon: f64) -> Self {
        Self {
            samples: VecDeque::new(),
            horizon,
        }
    }

    pub fn push(&mut self, time: f64, pose: Pose) {
        self.samples.push_back((time, pose));
        while self.samples.len() > 2 && self.samples[1].0 < time - self.horizon {
            self.samples.pop_front();
        }
    }

    /// Pose at `time`, linearly interpolated; clamps to the stored range.
    pub fn at(&self, time: f64) -> Option<Pose> {
        let first = self.samples.front()?;
        if time <= first.0 {
            return Some(first.1);
        }
        let last = self.samples.back()?;
        if time >= last.0 {
            return Some(last.1);
        }
        let idx = self.samples.partition_point(|(t, _)| *t <= time);
        let (t0, p0) = &self.samples[idx - 1];
        let (t1, p1) = &self.samples[idx];
        Some(p0.interpolate(p1, (time - t0) / (t1 - t0)))
    }
}

/// Tracker reading of the tip pose, in the tracker's own frame.
pub fn sense_tracker(model: &PlantModel, history: &TipHistory, now: f64, rng: &mut impl Rng) -> Pose {
    let cfg = &model.cfg;
    let delayed = history.at(now - cfg.tracker_latency).unwrap_or_default();
    let in_tracker = model.tracker_frame.inverse().compose(&delayed);
    let dp = Vector3::from_fn(|_, _| gaussian(rng, cfg.tracker_noise_sigma_pos));
    let dr = Vector3::from_fn(|_, _| gaussian(rng, cfg.tracker_noise_sigma_ori));
    in_tracker.perturbed(&dr, &dp)
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Owner of one simulated robot: model, state, sensor noise streams and the
/// tip history the tracker reads from.
#[derive(Debug, Clone)]
pub struct Plant {
    model: PlantModel,
    state: PlantState,
    history: TipHistory,
    encoder_rng: ChaCha8Rng,
    tracker_rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(cfg: PlantConfig, seed: u64) -> Result<Self> {
        Ok(Self::with_model(PlantModel::build(cfg, seed)?, seed))
    }

    pub fn with_model(model: PlantModel, seed: u64) -> Self {
        let state = PlantState::at_rest(&model, MotorVector::zeros());
        let horizon = model.cfg.tracker_latency + 0.05;
        let mut plant = Self {
            model,
            state,
            history: TipHistory::new(horizon),
            encoder_rng: stream(seed, 1),
            tracker_rng: stream(seed, 2),
        };
        plant.record_tip();
        plant
    }

    /// Place the robot at rest with its unloaded joints at `q`.
    pub fn place_at(&mut self, q: &JointVector) -> Result<()> {
        let theta = self.model.motors_for(q)?;
        let clock = self.state.clock;
        self.state = PlantState::at_rest(&self.model, theta);
        self.state.clock = clock;
        self.state.last_cmd_time = clock;
        self.history = TipHistory::new(self.history.horizon);
        self.record_tip();
        Ok(())
    }

    pub fn model(&self) -> &PlantModel {
        &self.model
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn step(&mut self, theta_cmd: Option<&MotorVector>, tip_force: &Vector3<f64>, dt: f64) -> Result<()> {
        self.state = step_plant(&self.model, &self.state, theta_cmd, tip_force, dt)?;
        self.record_tip();
        Ok(())
    }

    fn record_tip(&mut self) {
        let pose = self.true_tip_pose();
        self.history.push(self.state.clock, pose);
    }

    pub fn true_tip_pose(&self) -> Pose {
        self.model
            .tip_pose(&self.state.joint_pos_true, &self.state.applied_tip_force)
    }

    pub fn sense_joints(&mut self) -> JointVector {
        sense_joints(&self.model, &self.state, &mut self.encoder_rng)
    }

    pub fn sense_tracker(&mut self) -> Pose {
        sense_tracker(&self.model, &self.history, self.state.clock, &mut self.tracker_rng)
    }

    pub fn reset_watchdog(&mut self) {
        self.state = reset_watchdog(&self.state);
    }

    /// Ideal coupling applied to the motor encoders.
    pub fn motor_model_joints(&self, coupling: &CouplingMatrix) -> JointVector {
        coupling.motors_to_joints(&self.state.motor_pos)
    }

    pub fn coupling_matrix(&self) -> &Matrix8 {
        self.model.coupling.matrix()
    }
}
