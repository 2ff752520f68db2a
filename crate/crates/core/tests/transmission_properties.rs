use crane_core::transmission::{calibrate_coupling, CalibrationSet, CouplingMatrix, SampleMatrix, StructureMask};
use crane_core::{JointVector, Matrix8, MotorVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A mask with the diagonal always present plus random off-diagonal entries,
/// and a diagonally dominant matrix inside it.
fn structured(seed: u64, density: f64) -> CouplingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allowed: Vec<bool> = (0..64).map(|k| k % 9 == 0 || rng.random_bool(density)).collect();
    let mask = StructureMask::from_fn(|r, c| allowed[r * 8 + c]);
    let m = Matrix8::from_fn(|r, c| {
        if r == c {
            rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else if mask.allows(r, c) {
            rng.random_range(-0.1..0.1)
        } else {
            0.0
        }
    });
    CouplingMatrix::new(m, mask).unwrap()
}

fn excitation(seed: u64, m: usize) -> SampleMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    SampleMatrix::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibration_is_exact_on_noiseless_data(seed in any::<u64>(), density in 0.0f64..0.6, m in 8usize..200) {
        let truth = structured(seed, density);
        let theta = excitation(seed, m);
        let q = truth.matrix() * &theta;
        let fit = calibrate_coupling(&CalibrationSet::new(theta, q).unwrap(), truth.mask()).unwrap();
        prop_assert!((fit.matrix() - truth.matrix()).abs().max() <= 1e-9);
    }

    #[test]
    fn calibration_respects_the_mask(seed in any::<u64>(), density in 0.0f64..0.6) {
        let truth = structured(seed, density);
        let theta = excitation(seed, 50);
        // dense joint data the mask cannot represent exactly
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = SampleMatrix::from_fn(50, |_, _| rng.random_range(-1.0..1.0)) + truth.matrix() * &theta * 10.0;
        let fit = calibrate_coupling(&CalibrationSet::new(theta, q).unwrap(), truth.mask()).unwrap();
        prop_assert!(truth.mask().admits(fit.matrix()));
    }

    #[test]
    fn calibration_is_scale_equivariant(seed in any::<u64>(), c in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0]) {
        let truth = structured(seed, 0.3);
        let theta = excitation(seed, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = truth.matrix() * &theta + SampleMatrix::from_fn(40, |_, _| rng.random_range(-1e-3..1e-3));
        let fit = calibrate_coupling(&CalibrationSet::new(theta.clone(), q.clone()).unwrap(), truth.mask()).unwrap();
        let scaled = calibrate_coupling(&CalibrationSet::new(theta, q * c).unwrap(), truth.mask()).unwrap();
        prop_assert!((scaled.matrix() - fit.matrix() * c).abs().max() <= 1e-10 * c.abs());
    }

    #[test]
    fn motor_joint_round_trip(seed in any::<u64>(), q in prop::array::uniform8(-2.0f64..2.0)) {
        let l = structured(seed, 0.4);
        let q = JointVector::from(q);
        let theta = l.joints_to_motors(&q).unwrap();
        prop_assert!((l.motors_to_joints(&theta) - q).abs().max() < 1e-10);
        // independent oracle: general linear solve through the full inverse
        let oracle: MotorVector = l.matrix().try_inverse().unwrap() * q;
        prop_assert!((theta - oracle).abs().max() < 1e-9);
    }

    #[test]
    fn coupling_csv_round_trip(seed in any::<u64>(), density in 0.0f64..0.6) {
        let l = structured(seed, density);
        prop_assert_eq!(CouplingMatrix::from_csv(&l.to_csv()).unwrap(), l);
    }
}
