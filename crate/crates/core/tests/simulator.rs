use proptest::prelude::*;
use seeker_core::field::make_random_smooth_field;
use seeker_core::runner::{read_csv, write_csv};
use seeker_core::sim::integrate;
use seeker_core::{ControllerParams, Vec2};

fn setup(seed: u64, mu: f64, nu: f64) -> (seeker_core::field::FieldSpec, ControllerParams) {
    (make_random_smooth_field(seed, 3), ControllerParams::new(1.3, nu, mu, 0.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chord_never_exceeds_the_arc(seed in 0u64..500, mu in 0.5f64..8.0, nu in 0.01f64..0.5) {
        let (field, params) = setup(seed, mu, nu);
        let traj = integrate(&field, &params, Vec2::new(0.2, -0.1), 2.0, 1e-3).unwrap();
        for w in traj.samples.windows(2) {
            let step = (w[1].r - w[0].r).norm();
            prop_assert!(step <= params.v_bar() * traj.dt * (1.0 + 1e-9));
            prop_assert!(step >= params.v_bar() * traj.dt * 0.99);
        }
    }

    #[test]
    fn reruns_are_identical(seed in 0u64..500, mu in 0.5f64..8.0) {
        let (field, params) = setup(seed, mu, 0.1);
        let a = integrate(&field, &params, Vec2::new(1.0, 1.0), 1.0, 1e-3).unwrap();
        let b = integrate(&field, &params, Vec2::new(1.0, 1.0), 1.0, 1e-3).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stored_trajectories_load_back_exactly(seed in 0u64..500) {
        let (field, params) = setup(seed, 3.0, 0.2);
        let traj = integrate(&field, &params, Vec2::new(-0.5, 0.5), 0.5, 1e-3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&traj, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back.samples, traj.samples);
    }
}
