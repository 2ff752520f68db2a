//! Joint-space PD on motor setpoints, needle-symmetric pose error and the
//! resolved-rate end-effector loop.

use nalgebra::{Matrix3, Matrix3xX, MatrixXx3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{JointKind, KinematicChain};
use crate::pose::Pose;
use crate::transmission::CouplingMatrix;
use crate::{Error, JointVector, Matrix8, MotorVector, Result, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGains {
    pub kp: JointVector,
    pub kd: JointVector,
}

impl JointGains {
    pub fn uniform(kp: f64, kd: f64) -> Result<Self> {
        Self::new(JointVector::repeat(kp), JointVector::repeat(kd))
    }

    pub fn new(kp: JointVector, kd: JointVector) -> Result<Self> {
        if kp.iter().chain(kd.iter()).any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter("joint gains must be finite and non-negative".into()));
        }
        Ok(Self { kp, kd })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EeGains {
    pub k_pos: f64,
    pub k_ori: f64,
    pub lambda: f64,
}

impl EeGains {
    pub fn new(k_pos: f64, k_ori: f64, lambda: f64) -> Result<Self> {
        if [k_pos, k_ori, lambda].iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter("end-effector gains must be finite and non-negative".into()));
        }
        Ok(Self { k_pos, k_ori, lambda })
    }
}

/// End-effector error. `e_ori` is an axis-angle vector along
/// `z_targ × z_meas`; rotation about the needle axis is not an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub e_pos: Vector3<f64>,
    pub e_ori: Vector3<f64>,
    /// Set when the needle axes were antiparallel and the rotation axis had
    /// to be chosen arbitrarily.
    pub antiparallel: bool,
}

impl PoseError {
    pub fn zero() -> Self {
        Self {
            e_pos: Vector3::zeros(),
            e_ori: Vector3::zeros(),
            antiparallel: false,
        }
    }

    pub fn position_norm(&self) -> f64 {
        self.e_pos.norm()
    }

    /// Angle between the needle axes, radians.
    pub fn orientation_norm(&self) -> f64 {
        self.e_ori.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.e_pos.iter().chain(self.e_ori.iter()).all(|v| v.is_finite())
    }
}

const PARALLEL_EPS: f64 = 1e-12;

pub fn ee_pose_error(target: &Pose, measured: &Pose) -> PoseError {
    let e_pos = target.translation - measured.translation;
    let z_t = target.z_axis();
    let z_m = measured.z_axis();
    let cos = (z_t.dot(&z_m) / (z_t.norm() * z_m.norm())).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let axis = z_t.cross(&z_m);
    let axis_norm = axis.norm();
    if axis_norm > PARALLEL_EPS {
        return PoseError {
            e_pos,
            e_ori: axis * (angle / axis_norm),
            antiparallel: false,
        };
    }
    if cos > 0.0 {
        return PoseError {
            e_pos,
            e_ori: Vector3::zeros(),
            antiparallel: false,
        };
    }
    // Antiparallel: any axis perpendicular to z_targ is a valid half-turn.
    let helper = if z_t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let perp = z_t.cross(&helper).normalize();
    PoseError {
        e_pos,
        e_ori: perp * std::f64::consts::PI,
        antiparallel: true,
    }
}

/// Damped least-squares inverse `Jᵀ(JJᵀ + λ²I)⁻¹`.
pub fn damped_pinv(j: &Matrix3xX<f64>, lambda: f64) -> Result<MatrixXx3<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("damping {lambda} must be non-negative")));
    }
    let gram: Matrix3<f64> = j * j.transpose() + Matrix3::identity() * (lambda * lambda);
    let chol = gram
        .cholesky()
        .filter(|c| {
            let d = c.l_dirty().diagonal();
            d.min() > 1e-12 * d.max().max(1.0)
        })
        .ok_or_else(|| Error::Singular("Jacobian is rank deficient and undamped".into()))?;
    Ok(j.transpose() * chol.inverse())
}

fn smallest_singular_value(j: &Matrix3xX<f64>) -> f64 {
    let gram: Matrix3<f64> = j * j.transpose();
    gram.symmetric_eigenvalues().min().max(0.0).sqrt()
}

/// Per-tick joint step bounds for the end-effector loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLimits {
    pub revolute: f64,
    pub prismatic: f64,
}

impl Default for StepLimits {
    fn default() -> Self {
        Self {
            revolute: 0.01,
            prismatic: 0.002,
        }
    }
}

/// How the position and orientation steps are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EeComposition {
    /// `K_pos J_pos† e_pos + K_ori J_ori† e_ori` as two independent terms.
    Sum,
    /// As `Sum`, but the position term also cancels the tip displacement the
    /// orientation term causes (`J_pos Δq_ori`). Wrist rotations swing the
    /// tip on a lever arm; without this the position loop chases that motion
    /// and lags whenever the needle direction is changing.
    #[default]
    Decoupled,
}

/// Damping schedule for the pseudoinverses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingSchedule {
    pub near_singular_lambda: f64,
    pub singular_threshold: f64,
}

impl Default for DampingSchedule {
    fn default() -> Self {
        Self {
            near_singular_lambda: 0.1,
            singular_threshold: 1e-3,
        }
    }
}

impl DampingSchedule {
    pub fn lambda_for(&self, j: &Matrix3xX<f64>, base: f64) -> f64 {
        if smallest_singular_value(j) < self.singular_threshold {
            base.max(self.near_singular_lambda)
        } else {
            base
        }
    }
}

/// Step shaping shared by every end-effector update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EeStepOptions {
    pub limits: StepLimits,
    pub damping: DampingSchedule,
    pub composition: EeComposition,
}

/// One resolved-rate update, returning the new joint setpoint
/// `q_set = q_est + Δq`.
///
/// `feedforward` is the target's own motion over this tick, written as a
/// pose error from the previous target to the current one; it is added to
/// the gained error so a moving target is followed without steady lag.
pub fn ee_control_step(
    q_est: &JointVector,
    err: &PoseError,
    feedforward: Option<&PoseError>,
    chain: &KinematicChain,
    gains: &EeGains,
    options: &EeStepOptions,
) -> Result<JointVector> {
    let ff = feedforward.copied().unwrap_or_else(PoseError::zero);
    if !err.is_finite() || !ff.is_finite() {
        return Err(Error::NonFinite("pose error"));
    }
    if q_est.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("joint estimate"));
    }
    let j = chain.jacobians(q_est.as_slice())?;
    let damping = &options.damping;
    let pos_pinv = damped_pinv(&j.position, damping.lambda_for(&j.position, gains.lambda))?;
    let ori_pinv = damped_pinv(&j.orientation, damping.lambda_for(&j.orientation, gains.lambda))?;
    // e_ori points along z_targ × z_meas; the rotation that brings the
    // measured axis onto the target is about the opposite direction.
    let dq_ori = -(ori_pinv * (err.e_ori * gains.k_ori + ff.e_ori));
    let position_demand = err.e_pos * gains.k_pos + ff.e_pos;
    let position_demand = match options.composition {
        EeComposition::Sum => position_demand,
        EeComposition::Decoupled => position_demand - &j.position * &dq_ori,
    };
    let dq = pos_pinv * position_demand + dq_ori;
    let mut dq = JointVector::from_iterator(dq.iter().copied());

    let mut scale: f64 = 1.0;
    for (v, kind) in dq.iter().zip(chain.joint_kinds()) {
        let bound = match kind {
            JointKind::Prismatic => options.limits.prismatic,
            _ => options.limits.revolute,
        };
        if v.abs() > bound {
            scale = scale.min(bound / v.abs());
        }
    }
    dq *= scale;
    Ok(q_est + dq)
}

/// `θ_set + L⁻¹(K_p e_q + K_d ė_q)`.
pub fn joint_pd_step(
    theta_set: &MotorVector,
    e_q: &JointVector,
    e_q_rate: &JointVector,
    gains: &JointGains,
    coupling: &CouplingMatrix,
) -> Result<MotorVector> {
    let increment = gains.kp.component_mul(e_q) + gains.kd.component_mul(e_q_rate);
    Ok(theta_set + coupling.joints_to_motors(&increment)?)
}

/// Backward difference followed by a one-pole low-pass.
#[derive(Debug, Clone)]
pub struct RateFilter {
    dt: f64,
    blend: f64,
    previous: Option<JointVector>,
    rate: JointVector,
}

impl RateFilter {
    pub fn new(dt: f64, cutoff_hz: f64) -> Self {
        Self {
            dt,
            blend: 1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp(),
            previous: None,
            rate: JointVector::zeros(),
        }
    }

    pub fn update(&mut self, value: &JointVector) -> JointVector {
        let raw = match &self.previous {
            Some(prev) => (value - prev) / self.dt,
            None => JointVector::zeros(),
        };
        self.previous = Some(*value);
        self.rate += (raw - self.rate) * self.blend;
        self.rate
    }

    pub fn reset(&mut self) {
        self.previous = None;
        self.rate = JointVector::zeros();
    }
}

/// Rates and gains for the two-level cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub joint_rate_hz: f64,
    pub ee_rate_hz: f64,
    pub joint_kp: f64,
    pub joint_kd: f64,
    pub k_pos: f64,
    pub k_ori: f64,
    pub lambda: f64,
    pub ee_step: EeStepOptions,
    /// Feed the target's per-tick motion forward when it is small enough to
    /// be a trajectory rather than a new setpoint.
    pub target_feedforward: bool,
    pub rate_filter_hz: f64,
    pub filter_alpha: f64,
    /// Joint speeds the inner loop may ask for, so the motor setpoint never
    /// runs ahead of what the drives can follow.
    pub joint_velocity_limits: [f64; DOF],
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            joint_rate_hz: 1000.0,
            ee_rate_hz: 100.0,
            joint_kp: 0.3,
            joint_kd: 5e-4,
            k_pos: 0.15,
            k_ori: 0.15,
            lambda: 0.02,
            ee_step: EeStepOptions::default(),
            target_feedforward: true,
            rate_filter_hz: 50.0,
            filter_alpha: 0.95,
            joint_velocity_limits: [0.166, 0.166, 0.332, 1.0, 5.16, 5.16, 5.16, 0.05],
        }
    }
}

impl ControlConfig {
    pub fn joint_dt(&self) -> f64 {
        1.0 / self.joint_rate_hz
    }

    pub fn ee_dt(&self) -> f64 {
        1.0 / self.ee_rate_hz
    }

    /// Inner-loop ticks per end-effector tick.
    pub fn ee_decimation(&self) -> usize {
        (self.joint_rate_hz / self.ee_rate_hz).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.joint_rate_hz, self.ee_rate_hz, self.rate_filter_hz];
        if positive
            .iter()
            .chain(&self.joint_velocity_limits)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidParameter("control rates and velocity limits must be positive".into()));
        }
        if self.ee_rate_hz > self.joint_rate_hz {
            return Err(Error::InvalidParameter("end-effector loop cannot outrun the joint loop".into()));
        }
        JointGains::uniform(self.joint_kp, self.joint_kd)?;
        EeGains::new(self.k_pos, self.k_ori, self.lambda)?;
        crate::estimation::FilterConfig::new(self.filter_alpha, self.joint_dt())?;
        Ok(())
    }

    pub fn joint_gains(&self) -> JointGains {
        JointGains::uniform(self.joint_kp, self.joint_kd).expect("validated")
    }

    pub fn ee_gains(&self) -> EeGains {
        EeGains::new(self.k_pos, self.k_ori, self.lambda).expect("validated")
    }
}

/// The controller half of the cascade: owns the joint setpoint, the motor
/// setpoint and the derivative filter. Estimation and sensing are the
/// caller's job, so the same controller runs open- or closed-loop.
#[derive(Debug, Clone)]
pub struct Cascade {
    cfg: ControlConfig,
    chain: KinematicChain,
    coupling: CouplingMatrix,
    coupling_inv: Matrix8,
    gains: JointGains,
    ee_gains: EeGains,
    q_set: JointVector,
    theta_set: MotorVector,
    rate: RateFilter,
    last_error: PoseError,
    last_target: Option<Pose>,
}

impl Cascade {
    pub fn new(
        cfg: ControlConfig,
        chain: KinematicChain,
        coupling: CouplingMatrix,
        q_initial: JointVector,
        theta_initial: MotorVector,
    ) -> Result<Self> {
        cfg.validate()?;
        if chain.dof() != DOF {
            return Err(Error::DimensionMismatch {
                expected: DOF,
                actual: chain.dof(),
            });
        }
        Ok(Self {
            coupling_inv: coupling.inverse()?,
            gains: cfg.joint_gains(),
            ee_gains: cfg.ee_gains(),
            rate: RateFilter::new(cfg.joint_dt(), cfg.rate_filter_hz),
            cfg,
            chain,
            coupling,
            q_set: q_initial,
            theta_set: theta_initial,
            last_error: PoseError::zero(),
            last_target: None,
        })
    }

    pub fn config(&self) -> &ControlConfig {
        &self.cfg
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn q_set(&self) -> &JointVector {
        &self.q_set
    }

    pub fn theta_set(&self) -> &MotorVector {
        &self.theta_set
    }

    pub fn last_error(&self) -> &PoseError {
        &self.last_error
    }

    pub fn set_joint_target(&mut self, q: JointVector) {
        self.last_target = None;
        self.q_set = q;
    }

    /// Re-seat both setpoints on the current state so nothing moves.
    pub fn hold(&mut self, q_est: &JointVector, theta: &MotorVector) {
        self.q_set = *q_est;
        self.theta_set = *theta;
        self.rate.reset();
        self.last_target = None;
    }

    /// Inner-loop tick; returns the new motor setpoint.
    pub fn joint_tick(&mut self, q_est: &JointVector) -> MotorVector {
        let e_q = self.q_set - q_est;
        let e_rate = self.rate.update(&e_q);
        let step = self.cfg.joint_dt();
        let increment = (self.gains.kp.component_mul(&e_q) + self.gains.kd.component_mul(&e_rate))
            .zip_map(&JointVector::from(self.cfg.joint_velocity_limits), |v, limit| {
                v.clamp(-limit * step, limit * step)
            });
        self.theta_set += self.coupling_inv * increment;
        self.theta_set
    }

    /// Outer-loop tick: compare the measured tip against the target and move
    /// the joint setpoint.
    pub fn ee_tick(&mut self, q_est: &JointVector, measured: &Pose, target: &Pose) -> Result<PoseError> {
        let err = ee_pose_error(target, measured);
        let limits = &self.cfg.ee_step.limits;
        let feedforward = self
            .last_target
            .filter(|_| self.cfg.target_feedforward)
            .map(|prev| ee_pose_error(target, &prev))
            .filter(|d| d.position_norm() <= limits.prismatic && d.orientation_norm() <= limits.revolute);
        self.q_set = ee_control_step(
            q_est,
            &err,
            feedforward.as_ref(),
            &self.chain,
            &self.ee_gains,
            &self.cfg.ee_step,
        )?;
        self.last_target = Some(*target);
        self.last_error = err;
        Ok(err)
    }
}
