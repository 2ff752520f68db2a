use crane_core::control::{damped_pinv, ee_control_step, ee_pose_error, EeGains, EeStepOptions};
use crane_core::kinematics::{JointKind, KinematicChain};
use crane_core::pose::Pose;
use crane_core::JointVector;
use nalgebra::{Matrix3, Matrix3xX, Vector3};
use proptest::prelude::*;

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-1.0f64..1.0), 0.0f64..3.1, prop::array::uniform3(-1.0f64..1.0))
        .prop_filter("axis", |(a, _, _)| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
        .prop_map(|(a, angle, t)| Pose::from_axis_angle(&Vector3::from(a).normalize(), angle, Vector3::from(t)))
}

fn roll(p: &Pose, phi: f64) -> Pose {
    p.compose(&Pose::from_axis_angle(&Vector3::z(), phi, Vector3::zeros()))
}

fn well_conditioned() -> impl Strategy<Value = JointVector> {
    (
        prop::array::uniform3(-0.05f64..0.05),
        prop::array::uniform4(-0.6f64..0.6),
        0.0f64..0.04,
    )
        .prop_map(|(b, w, d)| JointVector::from_column_slice(&[b[0], b[1], b[2], w[0], w[1], w[2], w[3], d]))
        .prop_filter("away from singularities", |q| {
            let j = KinematicChain::crane().jacobians(q.as_slice()).unwrap();
            let min_sv = |m: &Matrix3xX<f64>| (m * m.transpose()).symmetric_eigenvalues().min().sqrt();
            min_sv(&j.position) > 0.05 && min_sv(&j.orientation) > 0.3
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn position_error_is_antisymmetric(a in pose(), b in pose()) {
        prop_assert_eq!(ee_pose_error(&a, &b).e_pos, -ee_pose_error(&b, &a).e_pos);
    }

    #[test]
    fn orientation_error_ignores_needle_roll(a in pose(), b in pose(), ra in -6.0f64..6.0, rb in -6.0f64..6.0) {
        let e = ee_pose_error(&a, &b);
        let rolled = ee_pose_error(&roll(&a, ra), &roll(&b, rb));
        prop_assume!(!e.antiparallel);
        prop_assert!((e.e_ori - rolled.e_ori).norm() < 1e-9);
    }

    #[test]
    fn orientation_error_is_bounded_and_perpendicular(a in pose(), b in pose()) {
        let e = ee_pose_error(&a, &b);
        prop_assert!(e.e_ori.norm() <= std::f64::consts::PI + 1e-12);
        prop_assert!(e.e_ori.dot(&a.z_axis()).abs() < 1e-9);
        if !e.antiparallel {
            prop_assert!(e.e_ori.dot(&b.z_axis()).abs() < 1e-9);
        }
    }

    #[test]
    fn undamped_pseudoinverse_is_a_generalised_inverse(entries in prop::collection::vec(-1.0f64..1.0, 24)) {
        let j = Matrix3xX::from_column_slice(&entries);
        let gram: Matrix3<f64> = &j * j.transpose();
        prop_assume!(gram.symmetric_eigenvalues().min() > 1e-3);
        let pinv = damped_pinv(&j, 0.0).unwrap();
        prop_assert!((&j * &pinv * &j - &j).abs().max() < 1e-9);
    }

    #[test]
    fn steps_never_exceed_the_clamp(q in prop::array::uniform8(-3.0f64..3.0), a in pose(), b in pose()) {
        let chain = KinematicChain::crane();
        let opts = EeStepOptions::default();
        let q = JointVector::from(q);
        let out = ee_control_step(&q, &ee_pose_error(&a, &b), None, &chain, &EeGains::new(0.3, 0.3, 0.05).unwrap(), &opts).unwrap();
        for ((next, prev), kind) in out.iter().zip(q.iter()).zip(chain.joint_kinds()) {
            let bound = if kind == JointKind::Prismatic { opts.limits.prismatic } else { opts.limits.revolute };
            prop_assert!((next - prev).abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn small_position_errors_shrink(q in well_conditioned(), dir in prop::array::uniform3(-1.0f64..1.0), k in 0.05f64..0.5) {
        let chain = KinematicChain::crane();
        let here = chain.forward_kinematics(q.as_slice()).unwrap();
        let offset = Vector3::from(dir);
        prop_assume!(offset.norm() > 0.1);
        let mut target = here;
        target.translation += offset.normalize() * 5e-4;
        let before = ee_pose_error(&target, &here).position_norm();
        let q_next = ee_control_step(&q, &ee_pose_error(&target, &here), None, &chain, &EeGains::new(k, k, 0.0).unwrap(), &EeStepOptions::default()).unwrap();
        let after = ee_pose_error(&target, &chain.forward_kinematics(q_next.as_slice()).unwrap()).position_norm();
        prop_assert!(after <= before * (1.0 - 0.5 * k), "{before} -> {after}");
    }
}

#[test]
fn iteration_reaches_a_static_target() {
    let chain = KinematicChain::crane();
    let start = JointVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.01]);
    let target_q = JointVector::from_column_slice(&[0.02, -0.01, 0.015, 0.2, -0.3, 0.25, 0.1, 0.03]);
    let target = chain.forward_kinematics(target_q.as_slice()).unwrap();
    let gains = EeGains::new(0.3, 0.3, 0.02).unwrap();
    let mut q = start;
    for _ in 0..2000 {
        let tip = chain.forward_kinematics(q.as_slice()).unwrap();
        q = ee_control_step(&q, &ee_pose_error(&target, &tip), None, &chain, &gains, &EeStepOptions::default()).unwrap();
    }
    let e = ee_pose_error(&target, &chain.forward_kinematics(q.as_slice()).unwrap());
    assert!(e.position_norm() < 1e-4, "{}", e.position_norm());
    assert!(e.orientation_norm().to_degrees() < 0.1);
}

#[test]
fn zero_jacobian_with_damping_gives_zero_inverse() {
    let pinv = damped_pinv(&Matrix3xX::zeros(8), 0.01).unwrap();
    assert_eq!(pinv.norm(), 0.0);
}
