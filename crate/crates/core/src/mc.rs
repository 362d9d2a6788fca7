//! Adaptive-step Monte Carlo simulation with explosion and boundary detection.
//!
//! Each path draws from its own ChaCha8 stream selected by
//! `(seed, path_index)`, and aggregates are reduced in path order, so every
//! estimate is bit-identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ParamMap};
use crate::model::{SdeModel, StateDomain};

/// Steps below `dt0 * STEP_FLOOR` count as numerical blowup.
pub const STEP_FLOOR: f64 = 1e-12;
/// Per-path step budget.
pub const MAX_STEPS: u64 = 50_000_000;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum McError {
    #[error("invalid simulation setting `{key}`: {message}")]
    InvalidConfig { key: String, message: String },
    #[error("precondition rejected: {0}")]
    PreconditionRejected(String),
    #[error("path {path} used its {steps}-step budget before t = {t}")]
    StepBudget { path: u64, steps: u64, t: f64 },
}

fn invalid(key: &str, message: impl Into<String>) -> McError {
    McError::InvalidConfig { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt0: f64,
    pub eta: f64,
    /// Explosion threshold `B`.
    pub threshold: f64,
    /// Stop when the first coordinate falls to this level.
    pub lower_level: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Settings from the model's `mc` block; `x0` defaults to all ones.
    pub fn from_model(m: &SdeModel) -> SimConfig {
        let s = &m.settings.mc;
        SimConfig {
            x0: s.x0.clone().unwrap_or_else(|| vec![1.0; m.dim]),
            horizon: s.horizon,
            dt0: s.dt0,
            eta: s.eta,
            threshold: s.threshold,
            lower_level: None,
            n_paths: s.paths,
            seed: s.seed,
        }
    }

    pub fn validate(&self, m: &SdeModel) -> Result<(), McError> {
        if self.x0.len() != m.dim {
            return Err(invalid("x0", format!("expected {} coordinates, got {}", m.dim, self.x0.len())));
        }
        if !m.domain.contains(&self.x0) {
            return Err(invalid("x0", format!("{:?} is not in the state domain", self.x0)));
        }
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return Err(invalid("dt0", "must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("eta", "must lie in (0, 1]"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.threshold > norm(&self.x0)) {
            return Err(invalid("threshold", "must exceed |x0|"));
        }
        if self.n_paths == 0 {
            return Err(invalid("paths", "must be at least 1"));
        }
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// The configured lower level of the first coordinate.
    Level,
    /// Left end of the state domain.
    DomainLeft,
    /// Right end of the state domain.
    DomainRight,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Exploded { tau: f64 },
    HitBoundary { tau: f64, which: Boundary },
    Survived { x_t: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub outcome: Outcome,
    pub steps: u64,
    pub jumps: u64,
    /// The explosion was declared because the step fell below the floor.
    pub step_underflow: bool,
}

/// Optional trajectory recording for CSV output.
pub type Trajectory = Vec<(f64, Vec<f64>)>;

fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// `dt0 min(1, eta (1+|x|)/(1+|b|), eta^2 (1+|x|)^2/(1+|sigma|_F^2))`.
pub fn adaptive_step(dt0: f64, eta: f64, x_norm: f64, b_norm: f64, sigma_frob_sq: f64) -> f64 {
    let a = eta * (1.0 + x_norm) / (1.0 + b_norm);
    let b = eta * eta * (1.0 + x_norm).powi(2) / (1.0 + sigma_frob_sq);
    dt0 * 1f64.min(a).min(b)
}

fn boundary_hit(domain: &StateDomain, x: &[f64]) -> Option<Boundary> {
    if domain.contains(x) {
        return None;
    }
    let (l, _) = domain.bounds();
    Some(if x.first().is_some_and(|v| *v <= l) { Boundary::DomainLeft } else { Boundary::DomainRight })
}

fn run_path(m: &SdeModel, cfg: &SimConfig, path_index: u64, mut record: Option<&mut Trajectory>) -> Result<PathResult, McError> {
    let (d, q) = (m.dim, m.noise_dim());
    let mut rng = path_rng(cfg.seed, path_index);
    let clock = m.jumps.filter(|j| j.lambda > 0.0).map(|j| (j, Exp::new(j.lambda).expect("positive rate")));
    let mut next_jump = match &clock {
        Some((_, e)) => rng.sample(e),
        None => f64::INFINITY,
    };
    let mut x = cfg.x0.clone();
    let (mut b, mut s, mut dw) = (vec![0.0; d], vec![0.0; d * q], vec![0.0; q]);
    let (mut t, mut steps, mut jumps) = (0.0f64, 0u64, 0u64);
    if let Some(r) = record.as_deref_mut() {
        r.push((t, x.clone()));
    }
    let floor = cfg.dt0 * STEP_FLOOR;
    while t < cfg.horizon {
        if steps >= MAX_STEPS {
            return Err(McError::StepBudget { path: path_index, steps, t });
        }
        m.drift_at(&x, &mut b);
        m.diffusion_at(&x, &mut s);
        let frob: f64 = s.iter().map(|v| v * v).sum();
        let mut dt = adaptive_step(cfg.dt0, cfg.eta, norm(&x), norm(&b), frob);
        if !(dt >= floor) {
            return Ok(PathResult { outcome: Outcome::Exploded { tau: t }, steps, jumps, step_underflow: true });
        }
        let mut land_on_jump = false;
        let mut landing = None;
        if next_jump - t <= dt {
            dt = next_jump - t;
            land_on_jump = true;
            landing = Some(next_jump);
        }
        if cfg.horizon - t <= dt {
            dt = cfg.horizon - t;
            land_on_jump = land_on_jump && next_jump <= cfg.horizon;
            landing = Some(cfg.horizon);
        }
        let sq = dt.sqrt();
        for w in dw.iter_mut() {
            *w = sq * rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..d {
            let noise: f64 = (0..q).map(|k| s[i * q + k] * dw[k]).sum();
            x[i] += b[i] * dt + noise;
        }
        t = landing.unwrap_or(t + dt);
        steps += 1;
        if land_on_jump {
            let (j, e) = clock.as_ref().expect("jump clock present");
            let y = j.dist.sample(&mut rng);
            j.apply_to(&mut x, y);
            jumps += 1;
            next_jump = t + rng.sample(e);
        }
        if let Some(r) = record.as_deref_mut() {
            r.push((t, x.clone()));
        }
        let n = norm(&x);
        if !(n < cfg.threshold) {
            return Ok(PathResult { outcome: Outcome::Exploded { tau: t }, steps, jumps, step_underflow: false });
        }
        if let Some(which) = boundary_hit(&m.domain, &x) {
            return Ok(PathResult { outcome: Outcome::HitBoundary { tau: t, which }, steps, jumps, step_underflow: false });
        }
        if cfg.lower_level.is_some_and(|l| x[0] <= l) {
            return Ok(PathResult {
                outcome: Outcome::HitBoundary { tau: t, which: Boundary::Level },
                steps,
                jumps,
                step_underflow: false,
            });
        }
    }
    Ok(PathResult { outcome: Outcome::Survived { x_t: x }, steps, jumps, step_underflow: false })
}

/// Simulates path `path_index` of the ensemble defined by `cfg`.
pub fn simulate_path(m: &SdeModel, cfg: &SimConfig, path_index: u64) -> Result<PathResult, McError> {
    run_path(m, cfg, path_index, None)
}

/// Simulates one path and returns its `(t, x)` trajectory too.
pub fn simulate_path_recorded(m: &SdeModel, cfg: &SimConfig, path_index: u64) -> Result<(PathResult, Trajectory), McError> {
    let mut traj = Vec::new();
    let r = run_path(m, cfg, path_index, Some(&mut traj))?;
    Ok((r, traj))
}

/// Every path of the ensemble, in path order.
pub fn simulate_all(m: &SdeModel, cfg: &SimConfig) -> Result<Vec<Result<PathResult, McError>>, McError> {
    cfg.validate(m)?;
    Ok((0..cfg.n_paths as u64).into_par_iter().map(|i| simulate_path(m, cfg, i)).collect())
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: usize,
    pub n_paths: usize,
    pub mean_steps: f64,
    pub mean_jumps: f64,
    /// Explosions declared by step underflow.
    pub underflows: usize,
    /// Paths that failed, counted as non-events.
    pub failed_paths: usize,
    pub caveats: Vec<String>,
}

impl McEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    fn from_results(results: &[Result<PathResult, McError>], event: impl Fn(&PathResult) -> bool) -> McEstimate {
        let n = results.len();
        let ok: Vec<&PathResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let successes = ok.iter().filter(|r| event(r)).count();
        let (ci_low, ci_high) = wilson_interval(successes, n);
        let underflows = ok.iter().filter(|r| r.step_underflow).count();
        let failed_paths = n - ok.len();
        let mut caveats = Vec::new();
        if underflows > 0 {
            caveats.push(format!(
                "{underflows} paths stopped with a step below dt0 * {STEP_FLOOR:e}; counted as exploded because they are numerically indistinguishable from blowup"
            ));
        }
        if failed_paths > 0 {
            caveats.push(format!("{failed_paths} paths failed (step budget) and count as non-events"));
        }
        McEstimate {
            p_hat: successes as f64 / n as f64,
            ci_low,
            ci_high,
            successes,
            n_paths: n,
            mean_steps: ok.iter().map(|r| r.steps as f64).sum::<f64>() / n as f64,
            mean_jumps: ok.iter().map(|r| r.jumps as f64).sum::<f64>() / n as f64,
            underflows,
            failed_paths,
            caveats,
        }
    }
}

/// Fraction of paths reaching `|x| >= B` before the horizon.
pub fn estimate_explosion_prob(m: &SdeModel, cfg: &SimConfig) -> Result<McEstimate, McError> {
    let results = simulate_all(m, cfg)?;
    Ok(McEstimate::from_results(&results, |r| matches!(r.outcome, Outcome::Exploded { .. })))
}

/// Explosion estimates at several thresholds on shared seeds.
pub fn threshold_sensitivity(m: &SdeModel, cfg: &SimConfig, thresholds: &[f64]) -> Result<Vec<(f64, McEstimate)>, McError> {
    thresholds
        .iter()
        .map(|&b| estimate_explosion_prob(m, &SimConfig { threshold: b, ..cfg.clone() }).map(|e| (b, e)))
        .collect()
}

/// Fraction of paths whose first coordinate falls to `level` before the horizon.
pub fn boundary_hit_prob(m: &SdeModel, cfg: &SimConfig, level: f64) -> Result<McEstimate, McError> {
    if m.dim != 1 || m.domain != StateDomain::PositiveHalfLine {
        return Err(McError::PreconditionRejected("needs a one-dimensional model on the positive half-line".into()));
    }
    if !(cfg.x0.first().is_some_and(|x| *x > level)) {
        return Err(McError::PreconditionRejected(format!("x0 = {:?} does not start above the level {level}", cfg.x0)));
    }
    let cfg = SimConfig { lower_level: Some(level), ..cfg.clone() };
    let results = simulate_all(m, &cfg)?;
    Ok(McEstimate::from_results(&results, |r| {
        matches!(r.outcome, Outcome::HitBoundary { which: Boundary::Level | Boundary::DomainLeft, .. })
    }))
}

/// Sample mean and standard error of `f(X_T)` over surviving paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    /// Paths that exploded, hit a boundary or failed.
    pub excluded: usize,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn terminal_mean(m: &SdeModel, cfg: &SimConfig, f: impl Fn(&[f64]) -> f64) -> Result<MeanEstimate, McError> {
    let results = simulate_all(m, cfg)?;
    let values: Vec<f64> = results
        .iter()
        .filter_map(|r| match r {
            Ok(PathResult { outcome: Outcome::Survived { x_t }, .. }) => Some(f(x_t)),
            _ => None,
        })
        .collect();
    let (mean, std_error) = mean_and_se(&values);
    Ok(MeanEstimate { mean, std_error, n: values.len(), excluded: results.len() - values.len() })
}

/// Discrete Ito sums `sum_k f(W_k) (W_{k+1} - W_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub integrand: String,
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `|mean| <= 3 std_error`.
    pub pass: bool,
}

/// Steps per path of [`martingale_check`].
pub const MARTINGALE_STEPS: usize = 200;

/// Simulates `I_T = sum_k f(W_k) (W_{k+1} - W_k)` with the integrand evaluated
/// at the current Brownian value `x = W_k`.
pub fn martingale_check(integrand: &Expr, horizon: f64, n_paths: usize, seed: u64) -> MartingaleReport {
    let dt = horizon / MARTINGALE_STEPS as f64;
    let sq = dt.sqrt();
    let params = ParamMap::new();
    let sums: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let (mut w, mut sum) = (0.0f64, 0.0f64);
            for _ in 0..MARTINGALE_STEPS {
                let dw = sq * rng.sample::<f64, _>(StandardNormal);
                sum += integrand.eval_unchecked(&[w], &params) * dw;
                w += dw;
            }
            sum
        })
        .collect();
    let (mean, std_error) = mean_and_se(&sums);
    MartingaleReport {
        integrand: integrand.render(),
        horizon,
        steps: MARTINGALE_STEPS,
        n_paths,
        mean,
        std_error,
        pass: mean.abs() <= 3.0 * std_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(x0: f64, horizon: f64, n: usize) -> SimConfig {
        SimConfig { x0: vec![x0], horizon, dt0: 0.01, eta: 0.25, threshold: 1e8, lower_level: None, n_paths: n, seed: 3 }
    }

    #[test]
    fn frozen_path_survives_exactly() {
        let m = SdeModel::scalar("0", "0").unwrap();
        let r = simulate_path(&m, &cfg(1.0, 1.0, 1), 0).unwrap();
        assert_eq!(r.outcome, Outcome::Survived { x_t: vec![1.0] });
    }

    #[test]
    fn ode_blowup_time() {
        let m = SdeModel::scalar("x^2", "0").unwrap();
        let r = simulate_path(&m, &cfg(1.0, 2.0, 1), 0).unwrap();
        match r.outcome {
            Outcome::Exploded { tau } => assert!((tau - 1.0).abs() < 0.02, "{tau}"),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 2000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.003);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn martingale_trivial_integrands() {
        let zero = martingale_check(&Expr::constant(0.0), 1.0, 100, 1);
        assert_eq!((zero.mean, zero.pass), (0.0, true));
        let one = martingale_check(&Expr::constant(1.0), 1.0, 10_000, 1);
        assert!(one.pass);
        assert!((one.std_error - 0.01).abs() < 0.001);
    }

    #[test]
    fn level_must_be_below_start() {
        let m = SdeModel::scalar("x^-2", "1").unwrap().with_domain(StateDomain::PositiveHalfLine).unwrap();
        assert!(matches!(boundary_hit_prob(&m, &cfg(0.5, 1.0, 10), 1.0), Err(McError::PreconditionRejected(_))));
    }
}
