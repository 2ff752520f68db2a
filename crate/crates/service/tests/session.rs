use crane_core::clutch::ClutchId;
use crane_core::config::CraneConfig;
use crane_core::harness::home_configuration;
use crane_core::kinematics::KinematicChain;
use crane_core::plant::WatchdogStatus;
use crane_core::MotorVector;
use crane_service::protocol::ClutchAction;
use crane_service::{Command, Mode, Reason, Role, Session, WirePose};
use nalgebra::Vector3;
use proptest::prelude::*;

const CTRL: u64 = 1;

fn session() -> Session {
    let mut s = Session::new(CraneConfig::default()).unwrap();
    assert_eq!(s.hello(CTRL, "test", Some("crane")), Role::Controller);
    s
}

struct Driver {
    s: Session,
    seq: u64,
}

impl Driver {
    fn new() -> Self {
        Self { s: session(), seq: 0 }
    }

    fn send(&mut self, cmd: Command) -> Result<(), Reason> {
        self.seq += 1;
        self.s.submit(CTRL, self.seq, &cmd).map_err(|r| r.reason)
    }

    /// Run while sending heartbeats often enough to keep motion live.
    fn run_alive(&mut self, seconds: f64) {
        let mut left = seconds;
        while left > 0.0 {
            let chunk = left.min(0.3);
            self.s.run_for(chunk).unwrap();
            self.send(Command::Heartbeat).unwrap();
            left -= chunk;
        }
    }

    fn mode(&mut self, mode: Mode) {
        self.send(Command::SetMode { mode }).unwrap();
    }
}

fn tip_offset(s: &Session, offset: Vector3<f64>) -> WirePose {
    let mut pose = s.rig().actual_tip();
    pose.translation += offset;
    WirePose::from(&pose)
}

#[test]
fn jog_in_ee_mode_is_a_mode_mismatch() {
    let mut d = Driver::new();
    d.mode(Mode::EeTarget);
    assert_eq!(d.send(Command::JogJoint { index: 0, delta: 0.001 }), Err(Reason::ModeMismatch));
    d.mode(Mode::JointJog);
    assert_eq!(d.send(Command::JogJoint { index: 0, delta: 0.001 }), Ok(()));
    let pose = tip_offset(&d.s, Vector3::zeros());
    assert_eq!(d.send(Command::SetEeTarget { pose }), Err(Reason::ModeMismatch));
}

#[test]
fn targets_beyond_base_travel_are_limited() {
    let mut d = Driver::new();
    d.mode(Mode::EeTarget);
    // far outside the 400 mm travel
    let far = tip_offset(&d.s, Vector3::new(0.3, 0.0, 0.0));
    assert_eq!(d.send(Command::SetEeTarget { pose: far }), Err(Reason::Limit));

    // close to the tip, but only reachable with q1 past its 200 mm half-travel
    let mut q = home_configuration();
    q[0] = 0.21;
    let beyond = KinematicChain::crane().forward_kinematics(q.as_slice()).unwrap();
    let mut start = home_configuration();
    start[0] = 0.18;
    d.mode(Mode::JointJog);
    d.send(Command::JogJoint { index: 0, delta: 0.18 }).unwrap();
    d.run_alive(4.0);
    d.mode(Mode::EeTarget);
    let tip = d.s.rig().actual_tip();
    assert!((beyond.translation - tip.translation).norm() < 0.05);
    assert_eq!(
        d.send(Command::SetEeTarget {
            pose: WirePose::from(&beyond)
        }),
        Err(Reason::Limit)
    );
    let inside = KinematicChain::crane().forward_kinematics(start.as_slice()).unwrap();
    assert_eq!(
        d.send(Command::SetEeTarget {
            pose: WirePose::from(&inside)
        }),
        Ok(())
    );
}

#[test]
fn jog_past_travel_is_limited() {
    let mut d = Driver::new();
    d.mode(Mode::JointJog);
    assert_eq!(d.send(Command::JogJoint { index: 1, delta: 0.25 }), Err(Reason::Limit));
    assert_eq!(d.send(Command::JogJoint { index: 9, delta: 0.0 }), Err(Reason::Malformed));
}

#[test]
fn insertion_needs_a_grasp() {
    let mut d = Driver::new();
    d.mode(Mode::Insertion);
    assert_eq!(d.send(Command::Insert { depth: 0.06 }), Err(Reason::NoGrasp));
}

#[test]
fn insertion_reaches_depth_after_engaging() {
    let mut d = Driver::new();
    d.mode(Mode::Insertion);
    d.send(Command::Clutch {
        action: ClutchAction::Engage,
        which: ClutchId::A,
    })
    .unwrap();
    d.run_alive(3.2);
    assert!(d.s.inchworm().clutch_a.engaged);
    d.send(Command::Insert { depth: 0.06 }).unwrap();
    for _ in 0..100 {
        d.run_alive(0.4);
        if d.s.snapshot().insertion_target.is_none() {
            break;
        }
    }
    let snap = d.s.snapshot();
    assert_eq!(snap.needle_depth, 0.06);
    assert!(!snap.insertion_stalled);
    assert_eq!(snap.mode, Mode::Insertion);
}

#[test]
fn estop_holds_motors_and_blocks_motion_until_reset() {
    let mut d = Driver::new();
    d.mode(Mode::JointJog);
    d.send(Command::JogJoint { index: 0, delta: 0.05 }).unwrap();
    d.s.run_for(0.2).unwrap();
    assert!(d.s.rig().plant().state().motor_vel.norm() > 0.0, "robot should be moving");

    d.send(Command::Estop).unwrap();
    d.s.tick().unwrap();
    d.s.tick().unwrap();
    assert_eq!(d.s.rig().plant().state().motor_vel, MotorVector::zeros());
    let frozen = d.s.rig().plant().state().motor_pos;
    d.s.run_for(0.5).unwrap();
    assert_eq!(d.s.rig().plant().state().motor_pos, frozen);
    assert_eq!(d.s.snapshot().mode, Mode::Estopped);

    for cmd in [
        Command::SetMode { mode: Mode::JointJog },
        Command::JogJoint { index: 0, delta: 0.01 },
        Command::Insert { depth: 0.01 },
        Command::Clutch {
            action: ClutchAction::Engage,
            which: ClutchId::B,
        },
    ] {
        assert_eq!(d.send(cmd), Err(Reason::Estopped), "{cmd:?}");
    }
    d.send(Command::Reset).unwrap();
    assert_eq!(d.s.mode(), Mode::Idle);
    d.mode(Mode::JointJog);
    assert_eq!(d.send(Command::JogJoint { index: 0, delta: 0.01 }), Ok(()));
}

#[test]
fn client_silence_freezes_motion_setpoints() {
    let mut d = Driver::new();
    d.mode(Mode::JointJog);
    // 150 mm on q1 takes about 0.9 s at its speed limit
    d.send(Command::JogJoint { index: 0, delta: 0.15 }).unwrap();
    d.s.run_for(0.4).unwrap();
    assert!(!d.s.setpoints_frozen(), "400 ms of silence is fine");
    d.s.run_for(0.2).unwrap();
    assert!(d.s.setpoints_frozen(), "600 ms of silence holds the setpoints");
    let q1 = d.s.rig().joint_estimate()[0];
    d.s.run_for(1.0).unwrap();
    let moved = (d.s.rig().joint_estimate()[0] - q1).abs();
    assert!(moved < 2e-3, "moved {moved} after the hold");
    assert!(d.s.rig().joint_estimate()[0] < 0.13, "held short of the jog");
    // the next message lifts the freeze
    d.send(Command::Heartbeat).unwrap();
    assert!(!d.s.setpoints_frozen());
}

#[test]
fn idle_silence_is_not_frozen() {
    let mut d = Driver::new();
    d.s.run_for(1.0).unwrap();
    assert!(!d.s.setpoints_frozen());
}

#[test]
fn control_stall_trips_the_watchdog() {
    let mut d = Driver::new();
    d.s.run_for(0.05).unwrap();
    d.s.stall_for(0.008).unwrap();
    d.s.tick().unwrap();
    assert_eq!(d.s.rig().plant().state().watchdog, WatchdogStatus::Ok);

    d.s.stall_for(0.012).unwrap();
    assert_eq!(d.s.rig().plant().state().watchdog, WatchdogStatus::Tripped);
    d.s.tick().unwrap();
    assert_eq!(d.s.mode(), Mode::Estopped);
    d.send(Command::Reset).unwrap();
    d.s.tick().unwrap();
    assert_eq!(d.s.rig().plant().state().watchdog, WatchdogStatus::Ok);
    assert_eq!(d.s.mode(), Mode::Idle);
}

#[test]
fn sequence_numbers_must_increase() {
    let mut s = session();
    assert!(s.submit(CTRL, 5, &Command::Heartbeat).is_ok());
    assert_eq!(s.submit(CTRL, 5, &Command::Heartbeat).unwrap_err().reason, Reason::Sequence);
    assert_eq!(s.submit(CTRL, 4, &Command::Heartbeat).unwrap_err().reason, Reason::Sequence);
    assert!(s.submit(CTRL, 6, &Command::Heartbeat).is_ok());
}

#[test]
fn one_controller_at_a_time() {
    let mut s = session();
    assert_eq!(s.hello(2, "second", Some("crane")), Role::Observer);
    assert_eq!(s.hello(3, "nosy", Some("wrong")), Role::Observer);
    assert_eq!(s.submit(3, 1, &Command::Estop).unwrap_err().reason, Reason::Unauthorized);
    assert_eq!(s.submit(9, 1, &Command::Estop).unwrap_err().reason, Reason::NoSession);
    s.disconnect(CTRL);
    assert_eq!(s.hello(2, "second", Some("crane")), Role::Controller);
}

#[test]
fn ee_target_converges_and_is_visible_after_the_ack() {
    let mut d = Driver::new();
    d.mode(Mode::EeTarget);
    let pose = tip_offset(&d.s, Vector3::new(0.004, -0.006, 0.003));
    let acked_at = d.s.time();
    d.send(Command::SetEeTarget { pose }).unwrap();
    let mut converged = None;
    for _ in 0..500 {
        d.s.run_for(0.01).unwrap();
        let snap = d.s.snapshot();
        assert!(snap.time > acked_at);
        let shown = snap.target.expect("target in snapshot");
        assert_eq!(shown.position, pose.position);
        if snap.e_pos_norm < 0.5e-3 {
            converged = Some(snap.time - acked_at);
            break;
        }
        if d.s.time() - acked_at > 0.3 {
            d.send(Command::Heartbeat).unwrap();
        }
    }
    let t = converged.expect("no convergence within 5 s");
    assert!(t < 5.0, "{t}");
}

fn arb_command() -> impl Strategy<Value = Command> {
    let mode = prop_oneof![
        Just(Mode::Idle),
        Just(Mode::JointJog),
        Just(Mode::EeTarget),
        Just(Mode::Insertion),
        Just(Mode::Estopped)
    ];
    let which = prop_oneof![Just(ClutchId::A), Just(ClutchId::B)];
    let action = prop_oneof![Just(ClutchAction::Engage), Just(ClutchAction::Release)];
    prop_oneof![
        (prop::array::uniform3(-0.03f64..0.03), prop::array::uniform4(-1.0f64..1.0)).prop_map(|(p, q)| {
            let mut pose = KinematicChain::crane()
                .forward_kinematics(home_configuration().as_slice())
                .unwrap();
            pose.translation += Vector3::from(p);
            let mut wire = WirePose::from(&pose);
            wire.quaternion = [wire.quaternion[0] + 4.0 * q[0], q[1], q[2], q[3]];
            Command::SetEeTarget { pose: wire }
        }),
        (0usize..9, -0.05f64..0.05).prop_map(|(index, delta)| Command::JogJoint { index, delta }),
        mode.prop_map(|mode| Command::SetMode { mode }),
        (action, which).prop_map(|(action, which)| Command::Clutch { action, which }),
        (0.0f64..0.3).prop_map(|depth| Command::Insert { depth }),
        Just(Command::Estop),
        Just(Command::Reset),
        Just(Command::Heartbeat),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_command_streams_keep_the_interlocks(cmds in prop::collection::vec((arb_command(), 1usize..150), 1..25)) {
        let mut d = Driver::new();
        let mut last_time = d.s.time();
        for (cmd, ticks) in cmds {
            let before = d.s.mode();
            let outcome = d.send(cmd);
            if before == Mode::Estopped && cmd.is_motion() {
                prop_assert_eq!(outcome, Err(Reason::Estopped));
            }
            if outcome.is_ok() && cmd == Command::Estop {
                d.s.tick().unwrap();
                d.s.tick().unwrap();
                prop_assert_eq!(d.s.rig().plant().state().motor_vel, MotorVector::zeros());
            }
            for _ in 0..ticks {
                d.s.tick().unwrap();
            }
            let snap = d.s.snapshot();
            prop_assert!(snap.is_finite());
            prop_assert!(snap.time > last_time);
            last_time = snap.time;
            if snap.mode == Mode::Estopped {
                prop_assert!(snap.target.is_none() && snap.insertion_target.is_none());
            }
        }
    }
}
