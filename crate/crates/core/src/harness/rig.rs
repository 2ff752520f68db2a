use nalgebra::Vector3;

use super::{HarnessConfig, TrackingMode};
use crate::control::{Cascade, ControlConfig, PoseError};
use crate::estimation::{register_tracker, ComplementaryFilter, FilterConfig, JointEstimate, Registration};
use crate::kinematics::{JointKind, KinematicChain};
use crate::plant::Plant;
use crate::pose::Pose;
use crate::transmission::{calibrate_coupling, CalibrationSet, CouplingMatrix, StructureMask};
use crate::{JointVector, Result, DOF};

/// The simulated robot wired to its controller: plant, estimator and
/// cascade stepped together at the joint-loop rate.
#[derive(Debug, Clone)]
pub struct Rig {
    plant: Plant,
    cascade: Cascade,
    filter: ComplementaryFilter,
    mode: TrackingMode,
    estimator_coupling: CouplingMatrix,
    registration: Registration,
    nominal: KinematicChain,
    decimation: usize,
    ticks: u64,
    tip_force: Vector3<f64>,
    q_est: JointVector,
    measured: Pose,
}

impl Rig {
    /// `coupling` is what the estimator and controller believe; in open-loop
    /// mode it should be the design matrix.
    pub fn new(
        plant: Plant,
        control: ControlConfig,
        mode: TrackingMode,
        coupling: CouplingMatrix,
        registration: Registration,
    ) -> Result<Self> {
        control.validate()?;
        let nominal = KinematicChain::crane();
        let theta = plant.state().motor_pos;
        let mut rig = Self {
            filter: ComplementaryFilter::new(
                FilterConfig::new(control.filter_alpha, control.joint_dt())?,
                JointEstimate::new(JointVector::zeros(), plant.state().clock),
            ),
            cascade: Cascade::new(control, nominal.clone(), coupling, JointVector::zeros(), theta)?,
            decimation: control.ee_decimation(),
            estimator_coupling: coupling,
            ticks: 0,
            tip_force: Vector3::zeros(),
            q_est: JointVector::zeros(),
            measured: Pose::identity(),
            plant,
            mode,
            registration,
            nominal,
        };
        let q0 = match mode {
            TrackingMode::OpenLoop => rig.estimator_coupling.motors_to_joints(&theta),
            TrackingMode::ClosedLoop => rig.plant.sense_joints(),
        };
        rig.filter.reset(JointEstimate::new(q0, rig.plant.state().clock));
        rig.q_est = q0;
        rig.cascade.hold(&q0, &theta);
        rig.measured = rig.predicted_tip();
        Ok(rig)
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn plant_mut(&mut self) -> &mut Plant {
        &mut self.plant
    }

    pub fn cascade(&self) -> &Cascade {
        &self.cascade
    }

    pub fn cascade_mut(&mut self) -> &mut Cascade {
        &mut self.cascade
    }

    pub fn mode(&self) -> TrackingMode {
        self.mode
    }

    pub fn registration(&self) -> &Registration {
        &self.registration
    }

    pub fn joint_estimate(&self) -> &JointVector {
        &self.q_est
    }

    /// Last tip pose the end-effector loop acted on.
    pub fn measured_tip(&self) -> &Pose {
        &self.measured
    }

    pub fn time(&self) -> f64 {
        self.plant.state().clock
    }

    pub fn dt(&self) -> f64 {
        self.cascade.config().joint_dt()
    }

    pub fn set_tip_force(&mut self, force: Vector3<f64>) {
        self.tip_force = force;
    }

    pub fn tip_force(&self) -> &Vector3<f64> {
        &self.tip_force
    }

    /// Tip pose predicted by nominal kinematics from the joint estimate.
    pub fn predicted_tip(&self) -> Pose {
        self.nominal
            .forward_kinematics(self.q_est.as_slice())
            .expect("nominal chain has 8 joints")
    }

    /// Noise-free tip pose as the registered tracker would see it.
    pub fn actual_tip(&self) -> Pose {
        let in_tracker = self
            .plant
            .model()
            .tracker_frame()
            .inverse()
            .compose(&self.plant.true_tip_pose());
        self.registration.base_from_tracker.compose(&in_tracker)
    }

    fn estimate(&mut self) -> JointVector {
        match self.mode {
            TrackingMode::OpenLoop => self.estimator_coupling.motors_to_joints(&self.plant.state().motor_pos),
            TrackingMode::ClosedLoop => {
                let q_meas = self.plant.sense_joints();
                let motor_vel = self.plant.state().motor_vel;
                self.filter.update(&motor_vel, &q_meas, &self.estimator_coupling).q
            }
        }
    }

    fn measure(&mut self) -> Pose {
        match self.mode {
            TrackingMode::OpenLoop => self.predicted_tip(),
            TrackingMode::ClosedLoop => self.registration.base_from_tracker.compose(&self.plant.sense_tracker()),
        }
    }

    /// True when the next tick runs the end-effector loop.
    pub fn ee_due(&self) -> bool {
        self.ticks.is_multiple_of(self.decimation as u64)
    }

    /// One joint-loop period. With a target, the end-effector loop runs on
    /// its own decimated schedule and its error is returned.
    pub fn tick(&mut self, target: Option<&Pose>) -> Result<Option<PoseError>> {
        self.q_est = self.estimate();
        let mut error = None;
        if self.ee_due() {
            self.measured = self.measure();
            if let Some(target) = target {
                error = Some(self.cascade.ee_tick(&self.q_est, &self.measured, target)?);
            }
        }
        let theta = self.cascade.joint_tick(&self.q_est);
        let dt = self.dt();
        self.plant.step(Some(&theta), &self.tip_force, dt)?;
        self.ticks += 1;
        Ok(error)
    }

    /// Tick that commands every motor to stay exactly where it is, so motor
    /// velocity is zero from this step on. Setpoints are re-seated on the
    /// current state, so a later [`Rig::tick`] resumes without a jump.
    pub fn hold_tick(&mut self) -> Result<()> {
        self.q_est = self.estimate();
        if self.ee_due() {
            self.measured = self.measure();
        }
        let theta = self.plant.state().motor_pos;
        self.cascade.hold(&self.q_est, &theta);
        let dt = self.dt();
        self.plant.step(Some(&theta), &self.tip_force, dt)?;
        self.ticks += 1;
        Ok(())
    }

    /// Tick without sending a motor command, as if the control loop stalled.
    pub fn stall_tick(&mut self) -> Result<()> {
        let dt = self.dt();
        self.plant.step(None, &self.tip_force, dt)?;
        Ok(())
    }

    /// Freeze the setpoints where the robot is now.
    pub fn hold(&mut self) {
        let theta = self.plant.state().motor_pos;
        self.cascade.hold(&self.q_est, &theta);
    }

    /// Clear a watchdog trip and hold position.
    pub fn reset_watchdog(&mut self) {
        self.plant.reset_watchdog();
        self.hold();
    }

    pub fn run_for(&mut self, seconds: f64, target: Option<&Pose>) -> Result<()> {
        let n = (seconds / self.dt()).round() as usize;
        for _ in 0..n {
            self.tick(target)?;
        }
        Ok(())
    }
}

/// Joint-space excitation used to calibrate the coupling: one sinusoid per
/// joint with a distinct whole number of cycles over the run, so the motion
/// starts and ends at `q_home`.
pub fn excitation_targets(cfg: &HarnessConfig, q_home: &JointVector, t: f64) -> JointVector {
    const CYCLES: [f64; DOF] = [3.0, 4.0, 5.0, 2.0, 6.0, 7.0, 8.0, 1.0];
    let kinds = KinematicChain::crane().joint_kinds();
    JointVector::from_fn(|i, _| {
        let amplitude = match kinds[i] {
            JointKind::Prismatic => cfg.calibration_amplitude_prismatic,
            _ => cfg.calibration_amplitude_revolute,
        };
        let w = std::f64::consts::TAU * CYCLES[i] / cfg.calibration_duration;
        q_home[i] + amplitude * (w * t).sin()
    })
}

/// Drive the motors open-loop through the excitation, record motor and
/// joint-encoder pairs and fit the coupling matrix. Ends at rest at `q_home`.
pub fn calibrate_on_plant(plant: &mut Plant, cfg: &HarnessConfig, q_home: &JointVector) -> Result<CouplingMatrix> {
    let design = CouplingMatrix::crane_nominal();
    let dt = 1e-3;
    let steps = (cfg.calibration_duration / dt).round() as usize;
    let every = (steps / cfg.calibration_samples).max(1);
    let mut samples = Vec::with_capacity(cfg.calibration_samples + 1);
    for k in 1..=steps {
        let q_cmd = excitation_targets(cfg, q_home, k as f64 * dt);
        let theta = design.joints_to_motors(&q_cmd)?;
        plant.step(Some(&theta), &Vector3::zeros(), dt)?;
        if k % every == 0 {
            let q_meas = plant.sense_joints();
            samples.push((plant.state().motor_pos, q_meas));
        }
    }
    let rest = design.joints_to_motors(q_home)?;
    for _ in 0..500 {
        plant.step(Some(&rest), &Vector3::zeros(), dt)?;
    }
    calibrate_coupling(&CalibrationSet::from_samples(&samples)?, &StructureMask::crane())
}

/// Joint offsets from home for the registration sweep: the eight corners of
/// a 40 mm cube of base travel, then four wrist tilts.
pub fn registration_poses(q_home: &JointVector) -> Vec<JointVector> {
    let mut poses = Vec::with_capacity(12);
    for corner in 0..8 {
        let mut q = *q_home;
        for axis in 0..3 {
            q[axis] += if corner >> axis & 1 == 1 { 0.02 } else { -0.02 };
        }
        poses.push(q);
    }
    for (joint, angle) in [(4, 0.2), (4, -0.2), (5, 0.2), (6, -0.2)] {
        let mut q = *q_home;
        q[joint] += angle;
        q[7] += 0.01;
        poses.push(q);
    }
    poses
}

/// Outcome of the per-seed setup: calibrated coupling and registration.
#[derive(Debug, Clone)]
pub struct SetupReport {
    pub coupling: CouplingMatrix,
    pub registration: Registration,
}

/// Visit each registration pose under closed-loop joint control, average the
/// tracker and the joint estimate, and fit tracker-to-base from the tracker
/// positions against nominal forward kinematics.
pub fn register_on_plant(
    plant: Plant,
    control: ControlConfig,
    coupling: &CouplingMatrix,
    cfg: &HarnessConfig,
    q_home: &JointVector,
) -> Result<(Plant, Registration)> {
    let mut rig = Rig::new(
        plant,
        control,
        TrackingMode::ClosedLoop,
        *coupling,
        Registration::identity(),
    )?;
    let nominal = KinematicChain::crane();
    let mut pairs = Vec::new();
    for q in registration_poses(q_home) {
        rig.cascade.set_joint_target(q);
        rig.run_for(cfg.registration_settle, None)?;
        let mut tracker = Vector3::zeros();
        let mut joints = JointVector::zeros();
        for _ in 0..cfg.registration_average {
            for _ in 0..rig.decimation {
                rig.tick(None)?;
            }
            tracker += rig.measured.translation;
            joints += rig.q_est;
        }
        let n = cfg.registration_average as f64;
        let base = nominal.forward_kinematics((joints / n).as_slice())?.translation;
        pairs.push((tracker / n, base));
    }
    rig.cascade.set_joint_target(*q_home);
    rig.run_for(cfg.registration_settle, None)?;
    let registration = register_tracker(&pairs)?;
    Ok((rig.plant, registration))
}
