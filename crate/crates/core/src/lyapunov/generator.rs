//! The infinitesimal generator applied to a candidate function.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::LyapunovError;
use crate::expr::{Expr, ParamMap};
use crate::model::{CandidateFunction, JumpApply, JumpSizeDist, JumpSpec, LyapunovCandidate, SdeModel};

/// Sample count of the Monte Carlo jump expectation.
pub const JUMP_MC_SAMPLES: usize = 100_000;
/// Seed of the Monte Carlo jump expectation. The same draws are reused at
/// every state, so the estimate is a deterministic function of `x`.
pub const JUMP_MC_SEED: u64 = 0x6a75_6d70;
/// Largest polynomial degree handled by the closed-form jump expectation.
pub const CLOSED_FORM_MAX_DEGREE: usize = 4;
/// Multiple of the propagated rounding-error bound below which the drift and
/// diffusion part is reported as zero.
pub const ROUNDING_FLOOR: f64 = 4.0;

/// `lambda E[V(x + J) - V(x)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum JumpPart {
    ClosedForm { expr: Expr },
    MonteCarlo { samples: usize, seed: u64 },
}

/// `LV = b . grad V + 1/2 A : hess V + lambda E[V(x + J) - V(x)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorResult {
    pub candidate: String,
    /// Drift and diffusion part.
    pub diffusion_part: Expr,
    pub jump_part: Option<JumpPart>,
    #[serde(skip)]
    function: CandidateFunction,
    #[serde(skip)]
    jumps: Option<JumpSpec>,
    #[serde(skip)]
    params: ParamMap,
}

/// `LV(x)` with the standard error of its Monte Carlo component (zero when
/// everything is in closed form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorValue {
    pub value: f64,
    pub std_error: f64,
}

impl GeneratorResult {
    pub fn eval(&self, x: &[f64]) -> GeneratorValue {
        let base = self.diffusion_base(x);
        match (&self.jump_part, &self.jumps) {
            (Some(JumpPart::ClosedForm { expr }), _) => {
                GeneratorValue { value: base + expr.eval_unchecked(x, &self.params), std_error: 0.0 }
            }
            (Some(JumpPart::MonteCarlo { samples, seed }), Some(j)) => {
                let (mean, se) = jump_expectation_mc(j, &|y| self.value(y), x, *samples, *seed);
                GeneratorValue { value: base + j.lambda * mean, std_error: j.lambda * se }
            }
            _ => GeneratorValue { value: base, std_error: 0.0 },
        }
    }

    fn diffusion_base(&self, x: &[f64]) -> f64 {
        let (base, err) = self.diffusion_part.eval_with_error(x, &self.params);
        if base.is_finite() && base.abs() <= ROUNDING_FLOOR * err {
            0.0
        } else {
            base
        }
    }

    /// `LV(x)` without the standard error.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.eval(x).value
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.function {
            CandidateFunction::Symbolic { v } => v.eval_unchecked(x, &self.params),
            CandidateFunction::Tabulated(t) => t.value(x[0]),
        }
    }

    /// The whole of `LV` as a symbolic expression, when the jump part has a
    /// closed form.
    pub fn closed_form(&self) -> Option<Expr> {
        match &self.jump_part {
            None => Some(self.diffusion_part.clone()),
            Some(JumpPart::ClosedForm { expr }) => Some((self.diffusion_part.clone() + expr.clone()).simplify()),
            Some(JumpPart::MonteCarlo { .. }) => None,
        }
    }

    /// Coefficients of `LV` as a polynomial in `x` (or in `|x|`), with the
    /// model parameters substituted.
    pub fn polynomial_coefficients(&self) -> Option<Vec<f64>> {
        self.closed_form()?.bind(&self.params).simplify().univariate_polynomial()
    }
}

/// `(E[V(x + J) - V(x)], standard error)` over `samples` draws of the jump size.
pub fn jump_expectation_mc(
    jumps: &JumpSpec,
    v: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = v(x);
    let mut y = x.to_vec();
    let (mut mean, mut m2) = (0.0, 0.0);
    for n in 1..=samples {
        y.copy_from_slice(x);
        jumps.apply_to(&mut y, jumps.dist.sample(&mut rng));
        let d = v(&y) - v0;
        let delta = d - mean;
        mean += delta / n as f64;
        m2 += delta * (d - mean);
    }
    let var = if samples > 1 { m2 / (samples - 1) as f64 } else { 0.0 };
    (mean, (var / samples as f64).sqrt())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn polynomial_expr(coeffs: &[f64], var: Expr) -> Expr {
    let mut terms = coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, &c)| match k {
        0 => Expr::constant(c),
        1 => Expr::constant(c) * var.clone(),
        _ => Expr::constant(c) * Expr::powf(var.clone(), k as f64),
    });
    let first = terms.next().unwrap_or(Expr::constant(0.0));
    terms.fold(first, |acc, t| acc + t).simplify()
}

/// Closed-form `lambda E[V(x + J) - V(x)]` for polynomial `V` of degree at
/// most four: binomial expansion for additive jumps, scaling for
/// multiplicative ones.
fn closed_form_jump(m: &SdeModel, v: &Expr, j: &JumpSpec) -> Option<Expr> {
    let coeffs = v.bind(&m.params).simplify().univariate_polynomial()?;
    if coeffs.len() > CLOSED_FORM_MAX_DEGREE + 1 {
        return None;
    }
    let out: Vec<f64> = match (m.dim, j.apply) {
        (1, JumpApply::Additive) => {
            let mut out = vec![0.0; coeffs.len()];
            for (k, &c) in coeffs.iter().enumerate() {
                for jj in 1..=k {
                    out[k - jj] += c * binomial(k, jj) * j.dist.moment(jj as u32);
                }
            }
            out
        }
        (_, JumpApply::Merton) if m.dim == 1 || v.max_var_index().is_none() => coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c * (j.dist.moment(k as u32) - 1.0))
            .collect(),
        _ => return None,
    };
    let var = if m.dim == 1 { Expr::var(0) } else { Expr::Norm };
    let scaled: Vec<f64> = out.iter().map(|c| c * j.lambda).collect();
    Some(polynomial_expr(&scaled, var))
}

/// Whether the jump law puts positive density next to a pole of `V`, which
/// makes `E|V(x + J)|` infinite.
fn reachable_pole(m: &SdeModel, cand: &LyapunovCandidate, j: &JumpSpec) -> Option<Vec<f64>> {
    if m.dim != 1 {
        return None;
    }
    let v = |x: f64| cand.value(&[x], &m.params).abs();
    cand.singular_points.iter().find_map(|p| {
        let s = p[0];
        let reachable = match (j.dist, j.apply) {
            (JumpSizeDist::PointMass { .. }, _) => false,
            (JumpSizeDist::Normal { .. }, _) => true,
            (JumpSizeDist::Lognormal { .. }, JumpApply::Additive) => true,
            (JumpSizeDist::Lognormal { .. }, JumpApply::Merton) => s != 0.0,
        };
        let pole = [1.0, -1.0].iter().any(|&side| {
            let (near, far) = (v(s + side * 1e-6), v(s + side * 1e-3));
            near.is_infinite() || (near.is_finite() && far.is_finite() && near > 100.0 * far.max(1e-300))
        });
        (reachable && pole).then(|| p.clone())
    })
}

/// Applies the generator of `m` to the candidate.
pub fn generator_apply(m: &SdeModel, cand: &LyapunovCandidate) -> Result<GeneratorResult, LyapunovError> {
    let diffusion_part = match &cand.function {
        CandidateFunction::Symbolic { v } => {
            let a = m.covariance_exprs();
            let mut terms = Vec::new();
            for i in 0..m.dim {
                let vi = v.differentiate(i)?;
                if !vi.is_zero() {
                    terms.push(m.drift[i].clone() * vi.clone());
                }
                for (jj, aij) in a[i].iter().enumerate() {
                    if aij.is_zero() {
                        continue;
                    }
                    let vij = vi.differentiate(jj)?;
                    if !vij.is_zero() {
                        terms.push(Expr::constant(0.5) * aij.clone() * vij);
                    }
                }
            }
            let first = terms.pop().unwrap_or(Expr::constant(0.0));
            terms.into_iter().rev().fold(first, |acc, t| t + acc).simplify()
        }
        CandidateFunction::Tabulated(t) => {
            if m.dim != 1 {
                return Err(LyapunovError::Dimension { dim: m.dim });
            }
            (m.drift[0].clone() * t.derivative.clone()
                + Expr::constant(0.5) * m.sigma_squared() * t.second_derivative.clone())
            .simplify()
        }
    };
    let jump_part = match &m.jumps {
        None => None,
        Some(j) => {
            let closed = match &cand.function {
                CandidateFunction::Symbolic { v } => closed_form_jump(m, v, j),
                CandidateFunction::Tabulated(_) => None,
            };
            match closed {
                Some(expr) => Some(JumpPart::ClosedForm { expr }),
                None => {
                    if let Some(at) = reachable_pole(m, cand, j) {
                        return Err(LyapunovError::MomentDiverges { candidate: cand.name.clone(), at });
                    }
                    Some(JumpPart::MonteCarlo { samples: JUMP_MC_SAMPLES, seed: JUMP_MC_SEED })
                }
            }
        }
    };
    Ok(GeneratorResult {
        candidate: cand.name.clone(),
        diffusion_part,
        jump_part,
        function: cand.function.clone(),
        jumps: m.jumps,
        params: m.params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_candidates;

    fn user(src: &str) -> LyapunovCandidate {
        LyapunovCandidate::user("v", Expr::parse(src).unwrap())
    }

    #[test]
    fn squared_candidate_on_quadratic_drift() {
        let m = SdeModel::scalar("x^2", "1").unwrap();
        let g = generator_apply(&m, &user("x^2")).unwrap();
        // LV = 2 x^3 + 1.
        assert_eq!(g.polynomial_coefficients().unwrap(), vec![1.0, 0.0, 0.0, 2.0]);
        assert_eq!(g.value_at(&[2.0]), 17.0);
    }

    #[test]
    fn log_norm_in_two_dimensions_is_harmonic_under_isotropic_noise() {
        let m = SdeModel::diagonal_noise(2, "norm(x)^3").unwrap();
        let c = builtin_candidates(&m);
        let g = generator_apply(&m, &c[1]).unwrap();
        for x in [[3.0, 4.0], [-1e3, 2.5], [0.1, -0.2]] {
            assert!(g.value_at(&x).abs() < 1e-9 * (x[0] * x[0] + x[1] * x[1]).powf(1.5), "{x:?}");
        }
    }

    #[test]
    fn additive_closed_form_matches_monte_carlo() {
        let j = JumpSpec { lambda: 2.0, dist: JumpSizeDist::Normal { mean: 0.3, sd: 0.5 }, apply: JumpApply::Additive };
        let m = SdeModel::scalar("-x", "1").unwrap().with_jumps(j).unwrap();
        let g = generator_apply(&m, &user("x^4 - x")).unwrap();
        let Some(JumpPart::ClosedForm { expr }) = &g.jump_part else { panic!("expected closed form") };
        let v = |x: &[f64]| x[0].powi(4) - x[0];
        for x in [-2.0, 0.0, 1.5] {
            let (mean, se) = jump_expectation_mc(&j, &v, &[x], 200_000, 9);
            let exact = expr.eval_unchecked(&[x], &m.params);
            assert!((exact - 2.0 * mean).abs() < 2.0 * 4.0 * se + 1e-12, "x = {x}: {exact} vs {}", 2.0 * mean);
        }
    }

    #[test]
    fn reciprocal_with_normal_jumps_diverges() {
        let j = JumpSpec { lambda: 1.0, dist: JumpSizeDist::Normal { mean: 0.0, sd: 1.0 }, apply: JumpApply::Additive };
        let m = SdeModel::scalar("1", "1").unwrap().with_jumps(j).unwrap();
        let c = LyapunovCandidate { singular_points: vec![vec![0.0]], ..user("1/x") };
        assert!(matches!(generator_apply(&m, &c), Err(LyapunovError::MomentDiverges { .. })));
        // A logarithmic singularity is integrable and falls back to sampling.
        let c = LyapunovCandidate { singular_points: vec![vec![0.0]], ..user("ln(x^2)") };
        let g = generator_apply(&m, &c).unwrap();
        assert!(matches!(g.jump_part, Some(JumpPart::MonteCarlo { .. })));
    }
}
