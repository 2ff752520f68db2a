use std::f64::consts::FRAC_PI_2;

use crane_core::kinematics::{link_transform, DhFrame, JointKind, KinematicChain};
use crane_core::pose::Pose;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn joints() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::array::uniform3(-0.2f64..0.2),
        prop::array::uniform4(-3.0f64..3.0),
        -0.05f64..0.1,
    )
        .prop_map(|(base, wrist, insertion)| {
            let mut q = base.to_vec();
            q.extend(wrist);
            q.push(insertion);
            q
        })
}

fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    let dr = (a.rotation - b.rotation).abs().max();
    let dt = (a.translation - b.translation).abs().max();
    dr.max(dt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fk_is_the_left_to_right_product_of_link_transforms(q in joints()) {
        let chain = KinematicChain::crane();
        let mut product = Pose::identity();
        let mut values = q.iter();
        for frame in chain.frames() {
            let v = if frame.kind.is_actuated() { *values.next().unwrap() } else { 0.0 };
            product = product.compose(&link_transform(frame, v));
        }
        let fk = chain.forward_kinematics(&q).unwrap();
        prop_assert!(pose_distance(&fk, &product) < 1e-12);
    }

    #[test]
    fn tool_offset_is_configuration_independent(q in joints(), r in joints()) {
        let chain = KinematicChain::crane();
        let offset = |q: &[f64]| {
            let poses = chain.frame_poses(q).unwrap();
            poses[7].inverse().compose(&poses[8])
        };
        prop_assert!(pose_distance(&offset(&q), &offset(&r)) < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences(q in joints()) {
        let chain = KinematicChain::crane();
        let j = chain.jacobians(&q).unwrap();
        let h = 1e-6;
        for i in 0..8 {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = chain.forward_kinematics(&plus).unwrap();
            let fm = chain.forward_kinematics(&minus).unwrap();
            let dp = (fp.translation - fm.translation) / (2.0 * h);
            // skew part of dR·Rᵀ gives the angular velocity
            let w = (fp.rotation - fm.rotation) / (2.0 * h) * fk_rotation(&chain, &q).transpose();
            let omega = Vector3::new(w[(2, 1)] - w[(1, 2)], w[(0, 2)] - w[(2, 0)], w[(1, 0)] - w[(0, 1)]) * 0.5;
            prop_assert!((dp - j.position.column(i)).abs().max() < 1e-5);
            prop_assert!((omega - j.orientation.column(i)).abs().max() < 1e-5);
        }
    }

    #[test]
    fn insertion_column_has_no_rotation(q in joints()) {
        let j = KinematicChain::crane().jacobians(&q).unwrap();
        prop_assert_eq!(j.orientation.column(7).norm(), 0.0);
    }

    #[test]
    fn chain_text_round_trip(
        frames in prop::collection::vec(
            (0usize..3, -0.5f64..0.5, -3.0f64..3.0, -0.5f64..0.5, -3.0f64..3.0),
            1..10,
        )
    ) {
        let frames: Vec<DhFrame> = frames
            .into_iter()
            .map(|(k, a, alpha, d, theta)| {
                let kind = [JointKind::Prismatic, JointKind::Revolute, JointKind::Fixed][k];
                DhFrame::new(kind, a, alpha, d, theta)
            })
            .collect();
        let chain = KinematicChain::new(frames);
        prop_assert_eq!(KinematicChain::parse(&chain.to_text()).unwrap(), chain);
    }
}

fn fk_rotation(chain: &KinematicChain, q: &[f64]) -> Matrix3<f64> {
    chain.forward_kinematics(q).unwrap().rotation
}

#[test]
fn rotations_stay_orthonormal_over_many_evaluations() {
    let chain = KinematicChain::crane();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = chain.forward_kinematics(&q).unwrap();
        worst = worst.max(p.orthonormality_error());
        assert!(p.rotation.determinant() > 0.0);
    }
    assert!(worst < 1e-9, "worst orthonormality error {worst:e}");
}

#[test]
fn prismatic_only_chain_has_a_signed_permutation_jacobian() {
    let chain = KinematicChain::new(vec![
        DhFrame::prismatic(0.0, -FRAC_PI_2, 0.0),
        DhFrame::prismatic(0.0, -FRAC_PI_2, -FRAC_PI_2),
        DhFrame::prismatic(0.0, -FRAC_PI_2, -FRAC_PI_2),
    ]);
    let j = chain.jacobians(&[0.1, -0.2, 0.3]).unwrap();
    assert_eq!(j.orientation.norm(), 0.0);
    for row in 0..3 {
        let nonzero = (0..3).filter(|c| j.position[(row, *c)].abs() > 1e-12).count();
        assert_eq!(nonzero, 1);
    }
    assert!((j.position.transpose() * &j.position - Matrix3::identity()).norm() < 1e-12);
}
