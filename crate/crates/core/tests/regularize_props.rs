use alqg_core::regularize::{self, RegularizerState};
use alqg_core::stabcheck;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn samples_stay_in_the_unit_ball(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let eta = regularize::sample_eta(&mut rng, n, m);
            prop_assert_eq!(eta.shape(), (n + m, n));
            prop_assert!(eta.norm() <= 1.0);
        }
    }

    #[test]
    fn beta_confined_and_switches_honor_the_rule(seed in any::<u64>()) {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let theta = stabcheck::pack_theta(&a, &b);
        let qh = DMatrix::identity(2, 2);
        let mut state = RegularizerState::new(&theta, 1.2, seed).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..40 {
            let p = DMatrix::identity(3, 3) / k as f64;
            let out = state.regularize_step(&theta, &p, &qh, k).unwrap();
            prop_assert!(state.beta.norm() <= 1.0);
            if out.switched {
                prop_assert!(regularize::accepts(out.log_f_candidate, out.log_f_incumbent, 1.2));
                prop_assert_eq!(out.log_f, out.log_f_candidate);
            } else {
                prop_assert_eq!(out.log_f, out.log_f_incumbent);
            }
            prev = prev.max(out.log_f);
        }
        prop_assert!(prev.is_finite());
    }
}

/// Monte Carlo check of uniformity: for a uniform draw from the unit ball in
/// `R^d`, `E‖η‖² = d/(d+2)` and every coordinate has mean zero.
#[test]
fn eta_moments_match_uniform_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (n, m) = (2, 1);
    let d = (n * (n + m)) as f64;
    let draws = 200_000;
    let mut sq = 0.0;
    let mut mean = DMatrix::<f64>::zeros(n + m, n);
    for _ in 0..draws {
        let eta = regularize::sample_eta(&mut rng, n, m);
        sq += eta.norm_squared();
        mean += eta;
    }
    let sq = sq / draws as f64;
    mean /= draws as f64;
    assert!((sq - d / (d + 2.0)).abs() < 3e-3, "E|η|² = {sq}");
    assert!(mean.amax() < 5e-3, "mean {mean}");
}

#[test]
fn held_estimate_follows_interval_convention() {
    let theta0 = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
    let mut state = RegularizerState::new(&theta0, 1.2, 9).unwrap();
    let p = DMatrix::identity(2, 2) * 0.01;
    let qh = DMatrix::identity(1, 1);
    let mut estimates = vec![theta0.clone()];
    for k in 1..5 {
        let theta_k = DMatrix::from_row_slice(2, 1, &[0.1 * k as f64, 1.0]);
        state.regularize_step(&theta_k, &p, &qh, k).unwrap();
        estimates.push(state.theta_hat.clone());
    }
    for k in 0..5 {
        assert_eq!(state.hold(k as f64 + 0.5), Some(&estimates[k]));
        assert_eq!(state.hold(k as f64 + 1.0), Some(&estimates[k]));
    }
}
