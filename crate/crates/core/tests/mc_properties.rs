//! Statistical and structural properties of the path simulator.

mod support;

use blowuplab::mc::{
    boundary_hit_prob, estimate_explosion_prob, simulate_path, simulate_path_recorded, terminal_mean, threshold_sensitivity,
    Outcome, SimConfig,
};
use blowuplab::model::{JumpApply, JumpSizeDist, JumpSpec, SdeModel, StateDomain};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn config(x0: f64, horizon: f64, n_paths: usize, seed: u64) -> SimConfig {
    SimConfig { x0: vec![x0], horizon, dt0: 0.01, eta: 0.25, threshold: 1e8, lower_level: None, n_paths, seed }
}

fn quadratic() -> SdeModel {
    SdeModel::scalar("x^2", "1").unwrap()
}

fn merton(mu: f64, sigma: f64, lambda: f64, sigma_j: f64) -> SdeModel {
    SdeModel::scalar(&format!("{mu}*x"), &format!("{sigma}*x"))
        .unwrap()
        .with_domain(StateDomain::PositiveHalfLine)
        .unwrap()
        .with_jumps(JumpSpec { lambda, dist: JumpSizeDist::Lognormal { mu: 0.0, sigma: sigma_j }, apply: JumpApply::Merton })
        .unwrap()
}

/// Fixed-step Euler fraction of paths of `dX = X^2 dt + dW` reaching `threshold`.
fn fine_step_explosion_fraction(x0: f64, horizon: f64, dt: f64, threshold: f64, n: usize, seed: u64) -> f64 {
    let steps = (horizon / dt).ceil() as usize;
    let sq = dt.sqrt();
    let mut hits = 0;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let mut x = x0;
        for _ in 0..steps {
            x += x * x * dt + sq * rng.sample::<f64, _>(StandardNormal);
            if x.abs() >= threshold || !x.is_finite() {
                hits += 1;
                break;
            }
        }
    }
    hits as f64 / n as f64
}

#[test]
fn reproducible_across_worker_counts() {
    support::reproducible_across_workers().unwrap();
}

#[test]
fn martingale_integrands_have_zero_mean() {
    support::martingale_integrands().unwrap();
}

#[test]
fn quadratic_drift_explodes_like_the_fine_step_oracle() {
    let est = estimate_explosion_prob(&quadratic(), &config(2.0, 5.0, 2000, 1)).unwrap();
    assert!(est.p_hat >= 0.95, "{est:?}");
    let oracle = fine_step_explosion_fraction(2.0, 5.0, 1e-4, 1e10, 200, 77);
    assert!(oracle >= 0.95, "oracle {oracle}");
}

#[test]
fn brownian_motion_never_reaches_the_threshold() {
    let m = SdeModel::scalar("0", "1").unwrap();
    let est = estimate_explosion_prob(&m, &config(1.0, 5.0, 2000, 2)).unwrap();
    assert_eq!(est.successes, 0);
}

#[test]
fn spatial_quadratic_noise_explodes_with_positive_probability() {
    let m = SdeModel::diagonal_noise(3, "norm(x)^2").unwrap();
    let cfg = SimConfig { x0: vec![2.0; 3], n_paths: 300, seed: 3, ..config(2.0, 5.0, 300, 3) };
    let est = estimate_explosion_prob(&m, &cfg).unwrap();
    assert!(est.ci_low > 0.0, "{est:?}");
}

#[test]
fn merton_jump_count_matches_poisson_mean() {
    let m = merton(0.05, 0.2, 5.0, 0.3);
    let cfg = config(1.0, 2.0, 10_000, 4);
    let est = estimate_explosion_prob(&m, &cfg).unwrap();
    // Oracle: the number of jumps on [0, T] is Poisson(lambda T) with mean 10.
    assert!((est.mean_jumps - 10.0).abs() <= 0.3, "{}", est.mean_jumps);
}

#[test]
fn geometric_brownian_motion_weak_order() {
    let m = SdeModel::scalar("0.05*x", "0.2*x").unwrap().with_domain(StateDomain::PositiveHalfLine).unwrap();
    let est = terminal_mean(&m, &config(1.0, 1.0, 100_000, 5), |x| x[0]).unwrap();
    let exact = 0.05f64.exp();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{} vs {exact} (se {})", est.mean, est.std_error);
}

#[test]
fn merton_second_moment_is_bounded() {
    let (mu, sigma, lambda, sigma_j) = (0.05, 0.2, 1.0, 0.3);
    let m = merton(mu, sigma, lambda, sigma_j);
    let est = terminal_mean(&m, &config(1.0, 1.0, 20_000, 6), |x| x[0] * x[0]).unwrap();
    let c = 2.0 * mu + sigma * sigma + lambda * ((2.0 * sigma_j * sigma_j) as f64).exp_m1();
    assert!(est.mean <= c.exp() * (1.0 + 3.0 * est.std_error / est.mean), "{} vs {}", est.mean, c.exp());
}

#[test]
fn explosion_fraction_grows_with_the_horizon() {
    let short = estimate_explosion_prob(&quadratic(), &config(0.5, 2.0, 1000, 7)).unwrap();
    let long = estimate_explosion_prob(&quadratic(), &config(0.5, 5.0, 1000, 7)).unwrap();
    assert!(short.p_hat <= long.p_hat, "{} > {}", short.p_hat, long.p_hat);
}

#[test]
fn threshold_barely_matters_for_superlinear_drift() {
    let rows = threshold_sensitivity(&quadratic(), &config(0.5, 2.0, 1000, 8), &[1e6, 1e10]).unwrap();
    assert!((rows[0].1.p_hat - rows[1].1.p_hat).abs() < 0.02, "{rows:?}");
}

#[test]
fn boundary_hits_are_nested() {
    let m = SdeModel::scalar("x^-2", "1").unwrap().with_domain(StateDomain::PositiveHalfLine).unwrap();
    let cfg = config(1.0, 1.0, 2000, 9);
    let coarse = boundary_hit_prob(&m, &cfg, 1e-2).unwrap();
    let fine = boundary_hit_prob(&m, &cfg, 1e-4).unwrap();
    assert!(coarse.p_hat >= fine.p_hat);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn path_outcomes_respect_the_horizon_and_threshold(seed in any::<u64>(), index in 0u64..1000, x0 in 0.2f64..3.0) {
        let cfg = config(x0, 2.0, 1, seed);
        let (r, traj) = simulate_path_recorded(&quadratic(), &cfg, index).unwrap();
        prop_assert_eq!(&r, &simulate_path(&quadratic(), &cfg, index).unwrap());
        let last = &traj.last().unwrap().1;
        match r.outcome {
            Outcome::Exploded { tau } => {
                prop_assert!(tau <= cfg.horizon);
                prop_assert!(r.step_underflow || last[0].abs() >= cfg.threshold);
            }
            Outcome::Survived { x_t } => prop_assert_eq!(&x_t, last),
            Outcome::HitBoundary { tau, .. } => prop_assert!(tau <= cfg.horizon),
        }
    }

    #[test]
    fn estimate_lies_inside_its_interval(seed in any::<u64>(), x0 in 0.2f64..2.0, horizon in 0.1f64..2.0) {
        let est = estimate_explosion_prob(&quadratic(), &config(x0, horizon, 50, seed)).unwrap();
        prop_assert!(est.ci_low <= est.p_hat && est.p_hat <= est.ci_high);
        prop_assert!(est.ci_low >= 0.0 && est.ci_high <= 1.0);
    }
}
