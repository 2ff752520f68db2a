//! SMA needle clutches and inch-worm insertion.
//!
//! Each clutch is a lumped thermal mass heated by a PWM-driven Joule heater
//! and cooled passively or by an air blast. The wire grips the needle once it
//! passes the activation temperature and lets go only after cooling below the
//! release temperature. Two clutches, one on the insertion carriage (A) and
//! one fixed to the frame (B), hand the needle back and forth so it can be
//! driven deeper than the carriage stroke.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Holding force of an engaged clutch (lower of the two measured values), N.
pub const GRIP_ENGAGED: f64 = 18.0;
/// Drag of a released clutch (higher of the two measured values), N.
pub const GRIP_RELEASED: f64 = 2.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutchThermalParams {
    pub heat_capacity: f64,
    pub loss_coeff_passive: f64,
    pub loss_coeff_aircool: f64,
    pub max_power: f64,
    pub ambient: f64,
    pub t_active: f64,
    pub t_release: f64,
    pub t_max: f64,
}

impl Default for ClutchThermalParams {
    fn default() -> Self {
        Self::fitted(2.5, 10.1, 22.0, 5.0)
    }
}

impl ClutchThermalParams {
    /// Match a full-power rise from ambient to `t_active` in `rise` seconds and
    /// an air-cooled fall from `t_active` to `t_release` in `fall` seconds.
    /// Heat capacity is normalised to 1 J/°C; only time constants are
    /// observable, so the passive loss is set to `aircool_ratio` times less
    /// than the air-cooled loss.
    pub fn fitted(rise: f64, fall: f64, ambient: f64, aircool_ratio: f64) -> Self {
        let (t_active, t_release) = (80.0, 40.0);
        let heat_capacity = 1.0;
        let loss_coeff_aircool = heat_capacity * ((t_active - ambient) / (t_release - ambient)).ln() / fall;
        let loss_coeff_passive = loss_coeff_aircool / aircool_ratio;
        let tau = heat_capacity / loss_coeff_passive;
        let max_power = (t_active - ambient) * loss_coeff_passive / (1.0 - (-rise / tau).exp());
        Self {
            heat_capacity,
            loss_coeff_passive,
            loss_coeff_aircool,
            max_power,
            ambient,
            t_active,
            t_release,
            t_max: 91.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.heat_capacity > 0.0
            && self.loss_coeff_passive > 0.0
            && self.loss_coeff_aircool > self.loss_coeff_passive
            && self.max_power > 0.0
            && self.t_release < self.t_active
            && self.t_active < self.t_max
            && self.ambient < self.t_release;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("inconsistent clutch thermal parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutchState {
    pub temperature: f64,
    pub duty: f64,
    pub cooling_on: bool,
    pub engaged: bool,
    pub pid_integrator: f64,
    /// Temperature at the previous PID update, for the derivative term.
    pub pid_last_temperature: f64,
}

impl ClutchState {
    pub fn at_ambient(params: &ClutchThermalParams) -> Self {
        Self::at(params.ambient, false)
    }

    /// Clutch resting at `temperature` with a given engagement.
    pub fn at(temperature: f64, engaged: bool) -> Self {
        Self {
            temperature,
            duty: 0.0,
            cooling_on: false,
            engaged,
            pid_integrator: 0.0,
            pid_last_temperature: temperature,
        }
    }
}

/// Engagement with hysteresis: on at `t_active`, off only below `t_release`.
pub fn update_engagement(engaged: bool, temperature: f64, params: &ClutchThermalParams) -> bool {
    if temperature >= params.t_active {
        true
    } else if temperature < params.t_release {
        false
    } else {
        engaged
    }
}

/// Advance one clutch's temperature with explicit Euler. Heater power is cut
/// so the temperature never passes `t_max`.
pub fn thermal_step(state: &ClutchState, params: &ClutchThermalParams, dt: f64) -> Result<ClutchState> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::InvalidParameter(format!("thermal step {dt} s outside (0, 0.1]")));
    }
    if !state.duty.is_finite() || !state.temperature.is_finite() {
        return Err(Error::NonFinite("clutch state"));
    }
    let k = if state.cooling_on {
        params.loss_coeff_aircool
    } else {
        params.loss_coeff_passive
    };
    let loss = k * (state.temperature - params.ambient);
    let headroom = params.heat_capacity * (params.t_max - state.temperature) / dt + loss;
    let power = (state.duty.clamp(0.0, 1.0) * params.max_power).min(headroom.max(0.0));
    let mut next = *state;
    next.temperature = (state.temperature + dt * (power - loss) / params.heat_capacity).min(params.t_max);
    next.engaged = update_engagement(state.engaged, next.temperature, params);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.2,
            ki: 0.05,
            kd: 0.0,
        }
    }
}

/// Heater PID. Writes the new duty and integrator into `state` and returns
/// the duty. The integrator is frozen while the output is saturated in the
/// direction the error is pushing.
pub fn temp_pid_step(state: &mut ClutchState, target: f64, gains: &PidGains, dt: f64) -> f64 {
    let error = target - state.temperature;
    let derivative = -(state.temperature - state.pid_last_temperature) / dt;
    state.pid_last_temperature = state.temperature;
    let unclamped = gains.kp * error + state.pid_integrator + gains.kd * derivative;
    let duty = unclamped.clamp(0.0, 1.0);
    let saturated = (unclamped > 1.0 && error > 0.0) || (unclamped < 0.0 && error < 0.0);
    if !saturated {
        state.pid_integrator += gains.ki * error * dt;
    }
    state.duty = duty;
    duty
}

/// Holding capacity (engaged) or residual drag (released), N.
pub fn grip_force(state: &ClutchState) -> f64 {
    if state.engaged {
        GRIP_ENGAGED
    } else {
        GRIP_RELEASED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutchId {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutchCommand {
    /// Regulate at the hold temperature.
    Hold,
    /// Heater off, air cooling on.
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InchwormPhase {
    #[serde(rename = "A_grip_advance")]
    AGripAdvance,
    #[serde(rename = "handoff_AB")]
    HandoffAB,
    #[serde(rename = "B_grip_retract")]
    BGripRetract,
    #[serde(rename = "handoff_BA")]
    HandoffBA,
}

impl InchwormPhase {
    pub fn name(&self) -> &'static str {
        match self {
            Self::AGripAdvance => "A_grip_advance",
            Self::HandoffAB => "handoff_AB",
            Self::BGripRetract => "B_grip_retract",
            Self::HandoffBA => "handoff_BA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InchwormConfig {
    pub stroke: f64,
    /// Carriage speed while advancing or retracting, m/s.
    pub carriage_speed: f64,
    pub hold_temperature: f64,
    pub dt: f64,
    pub thermal: ClutchThermalParams,
    pub pid: PidGains,
}

impl Default for InchwormConfig {
    fn default() -> Self {
        Self {
            stroke: 0.05,
            carriage_speed: 0.02,
            hold_temperature: 85.0,
            dt: 0.01,
            thermal: ClutchThermalParams::default(),
            pid: PidGains::default(),
        }
    }
}

impl InchwormConfig {
    pub fn validate(&self) -> Result<()> {
        self.thermal.validate()?;
        if !(self.stroke > 0.0 && self.carriage_speed > 0.0 && self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::InvalidParameter("stroke, carriage speed and dt must be positive".into()));
        }
        if !(self.hold_temperature > self.thermal.t_active && self.hold_temperature < self.thermal.t_max) {
            return Err(Error::InvalidParameter(
                "hold temperature must sit between activation and the ceiling".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InchwormState {
    pub phase: InchwormPhase,
    pub needle_depth: f64,
    pub stroke: f64,
    /// Carriage travel within the current stroke, m.
    pub carriage: f64,
    pub clutch_a: ClutchState,
    pub clutch_b: ClutchState,
    pub command_a: ClutchCommand,
    pub command_b: ClutchCommand,
    /// Completed advance strokes.
    pub cycles: usize,
    pub time: f64,
    pub stalled: bool,
    stroke_start_depth: f64,
    stroke_goal: Option<f64>,
}

impl InchwormState {
    /// Needle held by the carriage clutch A at the hold temperature, B released.
    pub fn grasped(cfg: &InchwormConfig) -> Self {
        let mut s = Self::released(cfg);
        s.clutch_a = ClutchState::at(cfg.hold_temperature, true);
        s.command_a = ClutchCommand::Hold;
        s
    }

    /// Both clutches cold and open.
    pub fn released(cfg: &InchwormConfig) -> Self {
        Self {
            phase: InchwormPhase::AGripAdvance,
            needle_depth: 0.0,
            stroke: cfg.stroke,
            carriage: 0.0,
            clutch_a: ClutchState::at_ambient(&cfg.thermal),
            clutch_b: ClutchState::at_ambient(&cfg.thermal),
            command_a: ClutchCommand::Release,
            command_b: ClutchCommand::Release,
            cycles: 0,
            time: 0.0,
            stalled: false,
            stroke_start_depth: 0.0,
            stroke_goal: None,
        }
    }

    pub fn has_grasp(&self) -> bool {
        self.clutch_a.engaged || self.clutch_b.engaged
    }

    pub fn clutch(&self, id: ClutchId) -> &ClutchState {
        match id {
            ClutchId::A => &self.clutch_a,
            ClutchId::B => &self.clutch_b,
        }
    }

    pub fn set_command(&mut self, id: ClutchId, cmd: ClutchCommand) {
        match id {
            ClutchId::A => self.command_a = cmd,
            ClutchId::B => self.command_b = cmd,
        }
    }

    /// Step both clutches under their current commands.
    pub fn step_clutches(&mut self, cfg: &InchwormConfig) -> Result<()> {
        let dt = cfg.dt;
        for (clutch, cmd) in [(&mut self.clutch_a, self.command_a), (&mut self.clutch_b, self.command_b)] {
            match cmd {
                ClutchCommand::Hold => {
                    clutch.cooling_on = false;
                    temp_pid_step(clutch, cfg.hold_temperature, &cfg.pid, dt);
                }
                ClutchCommand::Release => {
                    clutch.cooling_on = true;
                    clutch.duty = 0.0;
                    clutch.pid_integrator = 0.0;
                    clutch.pid_last_temperature = clutch.temperature;
                }
            }
            *clutch = thermal_step(clutch, &cfg.thermal, dt)?;
        }
        self.time += dt;
        Ok(())
    }

    /// One time step of the inch-worm sequence towards `target_depth`.
    /// Returns true once the target depth is reached.
    pub fn step_insertion(&mut self, cfg: &InchwormConfig, target_depth: f64, resistance: f64) -> Result<bool> {
        if self.needle_depth >= target_depth {
            return Ok(true);
        }
        match self.phase {
            InchwormPhase::AGripAdvance => {
                self.command_a = ClutchCommand::Hold;
                if !self.clutch_a.engaged {
                    // Wait for A to close; B keeps the needle meanwhile.
                    self.command_b = ClutchCommand::Hold;
                } else if self.clutch_b.engaged {
                    self.command_b = ClutchCommand::Release;
                } else {
                    let grip = grip_force(&self.clutch_a);
                    if resistance > grip {
                        self.stalled = true;
                        return Err(Error::InsertionStall {
                            depth: self.needle_depth,
                            resistance,
                            grip,
                        });
                    }
                    let goal = *self.stroke_goal.get_or_insert_with(|| {
                        self.stroke_start_depth = self.needle_depth;
                        (target_depth - self.needle_depth).min(self.stroke)
                    });
                    self.carriage = (self.carriage + cfg.carriage_speed * cfg.dt).min(goal);
                    let finished = self.carriage >= goal;
                    self.needle_depth = if finished && goal == target_depth - self.stroke_start_depth {
                        target_depth
                    } else {
                        self.stroke_start_depth + self.carriage
                    };
                    if finished {
                        self.cycles += 1;
                        self.stroke_goal = None;
                        if self.needle_depth >= target_depth {
                            self.step_clutches(cfg)?;
                            return Ok(true);
                        }
                        self.phase = InchwormPhase::HandoffAB;
                    }
                }
            }
            InchwormPhase::HandoffAB => {
                self.command_b = ClutchCommand::Hold;
                self.command_a = if self.clutch_b.engaged {
                    ClutchCommand::Release
                } else {
                    ClutchCommand::Hold
                };
                if self.clutch_b.engaged && !self.clutch_a.engaged {
                    self.phase = InchwormPhase::BGripRetract;
                }
            }
            InchwormPhase::BGripRetract => {
                self.carriage = (self.carriage - cfg.carriage_speed * cfg.dt).max(0.0);
                if self.carriage == 0.0 {
                    self.phase = InchwormPhase::HandoffBA;
                }
            }
            InchwormPhase::HandoffBA => {
                self.command_a = ClutchCommand::Hold;
                self.command_b = if self.clutch_a.engaged {
                    ClutchCommand::Release
                } else {
                    ClutchCommand::Hold
                };
                if self.clutch_a.engaged && !self.clutch_b.engaged {
                    self.phase = InchwormPhase::AGripAdvance;
                }
            }
        }
        self.step_clutches(cfg)?;
        Ok(false)
    }
}

/// Run the sequence until one more advance stroke has completed and the
/// carriage is back ready for the next one (or the target is reached).
/// A target at or below the current depth leaves the state untouched.
pub fn inchworm_cycle(
    state: &InchwormState,
    target_depth: f64,
    resistance_force: f64,
    cfg: &InchwormConfig,
) -> Result<InchwormState> {
    cfg.validate()?;
    if !(resistance_force >= 0.0 && resistance_force.is_finite()) {
        return Err(Error::InvalidParameter("resistance force must be finite and non-negative".into()));
    }
    let mut s = *state;
    if target_depth <= s.needle_depth {
        return Ok(s);
    }
    if !s.has_grasp() {
        return Err(Error::InvalidParameter("insertion needs a grasped needle".into()));
    }
    let start_cycles = s.cycles;
    loop {
        if s.step_insertion(cfg, target_depth, resistance_force)? {
            return Ok(s);
        }
        if s.cycles > start_cycles && s.phase == InchwormPhase::AGripAdvance {
            return Ok(s);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub time: f64,
    pub phase: InchwormPhase,
    pub needle_depth: f64,
    pub carriage: f64,
    pub temperature_a: f64,
    pub temperature_b: f64,
    pub engaged_a: bool,
    pub engaged_b: bool,
    pub duty_a: f64,
    pub duty_b: f64,
    pub resistance: f64,
}

impl PhaseSample {
    fn of(s: &InchwormState, resistance: f64) -> Self {
        Self {
            time: s.time,
            phase: s.phase,
            needle_depth: s.needle_depth,
            carriage: s.carriage,
            temperature_a: s.clutch_a.temperature,
            temperature_b: s.clutch_b.temperature,
            engaged_a: s.clutch_a.engaged,
            engaged_b: s.clutch_b.engaged,
            duty_a: s.clutch_a.duty,
            duty_b: s.clutch_b.duty,
            resistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsertionRun {
    pub final_state: InchwormState,
    pub log: Vec<PhaseSample>,
    /// Stall raised by the state machine, if any; depth is frozen at stall.
    pub stall: Option<Stall>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stall {
    pub depth: f64,
    pub resistance: f64,
    pub grip: f64,
}

impl From<Stall> for Error {
    fn from(s: Stall) -> Self {
        Error::InsertionStall {
            depth: s.depth,
            resistance: s.resistance,
            grip: s.grip,
        }
    }
}

impl InsertionRun {
    pub fn completed(&self) -> bool {
        self.stall.is_none()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_phase_log(&mut w, &self.log).map_err(|e| Error::io(path, e))
    }
}

fn write_phase_log(w: &mut impl Write, log: &[PhaseSample]) -> std::io::Result<()> {
    writeln!(
        w,
        "time_s,phase,needle_depth_m,carriage_m,temp_a_c,temp_b_c,engaged_a,engaged_b,duty_a,duty_b,resistance_n"
    )?;
    for s in log {
        writeln!(
            w,
            "{:?},{},{:?},{:?},{:?},{:?},{},{},{:?},{:?},{:?}",
            s.time,
            s.phase.name(),
            s.needle_depth,
            s.carriage,
            s.temperature_a,
            s.temperature_b,
            s.engaged_a as u8,
            s.engaged_b as u8,
            s.duty_a,
            s.duty_b,
            s.resistance
        )?;
    }
    w.flush()
}

/// Drive the needle from a grasped start to `target_depth` against a constant
/// resistance, logging every step. Stops early on stall or after `max_time`.
pub fn insert_to_depth(
    cfg: &InchwormConfig,
    start: &InchwormState,
    target_depth: f64,
    resistance: f64,
    max_time: f64,
) -> Result<InsertionRun> {
    cfg.validate()?;
    if !start.has_grasp() {
        return Err(Error::InvalidParameter("insertion needs a grasped needle".into()));
    }
    let mut s = *start;
    let mut log = vec![PhaseSample::of(&s, resistance)];
    let mut stall = None;
    while s.time < start.time + max_time {
        match s.step_insertion(cfg, target_depth, resistance) {
            Ok(done) => {
                log.push(PhaseSample::of(&s, resistance));
                if done {
                    break;
                }
            }
            Err(Error::InsertionStall { depth, resistance, grip }) => {
                log.push(PhaseSample::of(&s, resistance));
                stall = Some(Stall { depth, resistance, grip });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(InsertionRun {
        final_state: s,
        log,
        stall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn time_to(params: &ClutchThermalParams, start: ClutchState, done: impl Fn(f64) -> bool) -> f64 {
        let mut s = start;
        let dt = 1e-3;
        let mut t = 0.0;
        while !done(s.temperature) {
            s = thermal_step(&s, params, dt).unwrap();
            t += dt;
            assert!(t < 100.0);
        }
        t
    }

    #[test]
    fn fitted_rise_and_fall() {
        let p = ClutchThermalParams::default();
        let mut heating = ClutchState::at_ambient(&p);
        heating.duty = 1.0;
        let rise = time_to(&p, heating, |t| t >= 80.0);
        assert!((rise - 2.5).abs() < 0.25, "{rise}");
        let mut cooling = ClutchState::at(80.0, true);
        cooling.cooling_on = true;
        let fall = time_to(&p, cooling, |t| t <= 40.0);
        assert!((fall - 10.1).abs() < 1.01, "{fall}");
    }

    #[test]
    fn cools_to_ambient() {
        let p = ClutchThermalParams::default();
        let mut s = ClutchState::at(85.0, true);
        s.cooling_on = true;
        for _ in 0..2000 {
            s = thermal_step(&s, &p, 0.1).unwrap();
        }
        assert!((s.temperature - p.ambient).abs() < 1e-3);
        assert!(!s.engaged);
    }

    #[test]
    fn ceiling_holds_at_full_power() {
        let p = ClutchThermalParams::default();
        let mut s = ClutchState::at_ambient(&p);
        s.duty = 1.0;
        for _ in 0..1000 {
            s = thermal_step(&s, &p, 0.1).unwrap();
            assert!(s.temperature <= p.t_max);
        }
        assert!((s.temperature - p.t_max).abs() < 1e-9);
    }

    #[test]
    fn pid_basics() {
        let gains = PidGains::default();
        let mut s = ClutchState::at(80.0, true);
        assert_eq!(temp_pid_step(&mut s, 80.0, &gains, 0.01), 0.0);
        let mut cold = ClutchState::at(22.0, false);
        assert_eq!(temp_pid_step(&mut cold, 80.0, &gains, 0.01), 1.0);
        assert_eq!(cold.pid_integrator, 0.0, "integrator frozen while saturated");
    }

    #[test]
    fn pid_holds_target() {
        let p = ClutchThermalParams::default();
        let gains = PidGains::default();
        let mut s = ClutchState::at_ambient(&p);
        let dt = 0.01;
        for i in 0..60_000 {
            temp_pid_step(&mut s, 80.0, &gains, dt);
            s = thermal_step(&s, &p, dt).unwrap();
            if i > 30_000 {
                assert!((s.temperature - 80.0).abs() < 2.0, "{}", s.temperature);
            }
        }
    }

    #[test]
    fn grip_hysteresis() {
        let p = ClutchThermalParams::default();
        let mut engaged = update_engagement(false, 85.0, &p);
        assert_eq!(grip_force(&ClutchState::at(85.0, engaged)), 18.0);
        for t in [80.0, 60.0, 45.0, 40.0] {
            engaged = update_engagement(engaged, t, &p);
            assert!(engaged, "still engaged at {t}");
        }
        engaged = update_engagement(engaged, 39.9, &p);
        assert!(!engaged);
        assert_eq!(grip_force(&ClutchState::at(30.0, false)), 2.25);
        assert!(!update_engagement(false, 79.9, &p));
    }

    #[test]
    fn three_strokes_for_150_mm() {
        let cfg = InchwormConfig::default();
        let run = insert_to_depth(&cfg, &InchwormState::grasped(&cfg), 0.150, 5.0, 1000.0).unwrap();
        assert!(run.completed());
        assert_eq!(run.final_state.cycles, 3);
        assert_eq!(run.final_state.needle_depth, 0.150);
        for w in run.log.windows(2) {
            assert!(w[1].needle_depth >= w[0].needle_depth);
            assert!(w[1].engaged_a || w[1].engaged_b, "grasp lost at t={}", w[1].time);
            assert!(w[1].temperature_a <= 91.0 && w[1].temperature_b <= 91.0);
        }
    }

    #[test]
    fn stall_freezes_depth() {
        let cfg = InchwormConfig::default();
        let run = insert_to_depth(&cfg, &InchwormState::grasped(&cfg), 0.150, 19.0, 1000.0).unwrap();
        assert!(matches!(run.stall, Some(Stall { grip, .. }) if grip == 18.0));
        assert_eq!(run.final_state.needle_depth, 0.0);
        assert!(run.final_state.stalled);
    }

    #[test]
    fn zero_target_is_noop() {
        let cfg = InchwormConfig::default();
        let s = InchwormState::grasped(&cfg);
        let after = inchworm_cycle(&s, 0.0, 5.0, &cfg).unwrap();
        assert_eq!(after, s);
    }

    #[test]
    fn single_cycle_advances_one_stroke() {
        let cfg = InchwormConfig::default();
        let s = inchworm_cycle(&InchwormState::grasped(&cfg), 0.12, 5.0, &cfg).unwrap();
        assert!((s.needle_depth - 0.05).abs() < 1e-12);
        assert_eq!(s.phase, InchwormPhase::AGripAdvance);
        assert_eq!(s.carriage, 0.0);
        let s = inchworm_cycle(&s, 0.12, 5.0, &cfg).unwrap();
        let s = inchworm_cycle(&s, 0.12, 5.0, &cfg).unwrap();
        assert_eq!(s.needle_depth, 0.12);
        assert_eq!(s.cycles, 3);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let cfg = InchwormConfig::default();
        let run = insert_to_depth(&cfg, &InchwormState::grasped(&cfg), 0.01, 5.0, 100.0).unwrap();
        let mut buf = Vec::new();
        write_phase_log(&mut buf, &run.log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,phase,"));
        assert_eq!(text.lines().count(), run.log.len() + 1);
    }
}
