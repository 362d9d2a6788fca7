//! Feller's boundary test and the Osgood integral for scalar diffusions.
//!
//! For `dX = b dt + sigma dW` on `(l, r)` with anchor `c`, the scale density
//! is `p'(y) = exp(-2 int_c^y b / sigma^2)` and
//! `v(x) = int_c^x w(y) dy` with outer integrand
//! `w(y) = p'(y) int_c^y 2 / (p'(z) sigma^2(z)) dz`.
//! The process leaves `(l, r)` with positive probability iff `v` stays finite
//! at one of the endpoints.
//!
//! `ln w(y)` is evaluated as `ln int_c^y exp(ln 2 - ln sigma^2(z) - 2 int_z^y b / sigma^2) dz`
//! which never forms `p'(y)` and its reciprocal separately. Both grow like
//! `exp(2 y^3 / 3)` for a quadratic drift with unit noise.
//!
//! The left endpoint is handled by reflecting the model through `x -> -x`.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ParamMap};
use crate::grid::log_spaced;
use crate::model::SdeModel;
use crate::quad::{
    cumulative_integral, integrate, integrate_improper, integrate_improper_log, log_integrate, IntegralStatus,
    IntegralVerdict, QuadError, TailConfig,
};
use crate::verdict::Verdict;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum FellerError {
    #[error("the test needs a one-dimensional model, got dimension {dim}")]
    Dimension { dim: usize },
    #[error("the test does not cover jump models")]
    JumpsUnsupported,
    #[error("drift is not positive at x = {at}")]
    DriftNotPositive { at: f64 },
    #[error("anchor {c} is not an interior point with sigma^2 > 0")]
    InvalidAnchor { c: f64 },
    #[error("sigma^2 vanishes at {count} sampled points; no isolated degeneracies to split at")]
    DegenerateNoise { count: usize },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Tail settings for the outer Feller integral. The inner integrals are
/// computed to `1e-12`, so panels are refined only to `1e-9`.
pub fn feller_tail_config() -> TailConfig {
    TailConfig { panel_tol: 1e-9, ..TailConfig::default() }
}

const RATIO_TOL: f64 = 1e-13;
const INNER_TOL: f64 = 1e-12;

fn check_scalar(m: &SdeModel) -> Result<(), FellerError> {
    if m.dim != 1 {
        return Err(FellerError::Dimension { dim: m.dim });
    }
    Ok(())
}

/// The model seen from the anchor towards one endpoint, oriented so that the
/// endpoint lies to the right. The left endpoint uses `b~(u) = -b(-u)`,
/// `sigma~^2(u) = sigma^2(-u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSide {
    pub drift: Expr,
    pub sigma2: Expr,
    #[serde(skip)]
    params: ParamMap,
    /// Anchor in oriented coordinates.
    pub anchor: f64,
    /// Endpoint in oriented coordinates, possibly `+inf`.
    pub end: f64,
    pub reflected: bool,
}

impl ScaleSide {
    /// Towards the right endpoint `r` of the domain.
    pub fn toward_right(m: &SdeModel, c: f64, r: f64) -> ScaleSide {
        ScaleSide {
            drift: m.drift[0].clone(),
            sigma2: m.sigma_squared(),
            params: m.params.clone(),
            anchor: c,
            end: r,
            reflected: false,
        }
    }

    /// Towards the left endpoint `l`, reflected.
    pub fn toward_left(m: &SdeModel, c: f64, l: f64) -> ScaleSide {
        let minus_x = -Expr::var(0);
        ScaleSide {
            drift: (-m.drift[0].substitute_var(0, &minus_x)).simplify(),
            sigma2: m.sigma_squared().substitute_var(0, &minus_x).simplify(),
            params: m.params.clone(),
            anchor: -c,
            end: -l,
            reflected: true,
        }
    }

    /// Original coordinate of an oriented point.
    pub fn original(&self, y: f64) -> f64 {
        if self.reflected {
            -y
        } else {
            y
        }
    }

    fn ratio(&self, y: f64) -> f64 {
        self.drift.eval_unchecked(&[y], &self.params) / self.sigma2.eval_unchecked(&[y], &self.params)
    }

    /// `ln p'(y) = -2 int_c^y b / sigma^2`.
    pub fn log_scale_derivative(&self, y: f64) -> Result<f64, QuadError> {
        Ok(-2.0 * integrate(|z| self.ratio(z), self.anchor, y, RATIO_TOL)?)
    }

    /// `ln w(y)` for `y >= anchor`; NaN when the quadrature fails.
    pub fn log_outer_integrand(&self, y: f64) -> f64 {
        if y == self.anchor {
            return f64::NEG_INFINITY;
        }
        if !(y > self.anchor) {
            return f64::NAN;
        }
        // Integrate over the distance s = y - z so that nodes near the peak at
        // z = y keep full relative precision.
        let log_inner = |s: f64| {
            let s2 = self.sigma2.eval_unchecked(&[y - s], &self.params);
            match integrate(|u| self.ratio(y - u), 0.0, s, RATIO_TOL) {
                Ok(i) if s2 > 0.0 => std::f64::consts::LN_2 - s2.ln() - 2.0 * i,
                _ => f64::NAN,
            }
        };
        log_integrate(log_inner, 0.0, y - self.anchor, INNER_TOL).map_or(f64::NAN, |r| r.log_value)
    }

    /// `ln v(x)` for oriented `x >= anchor`.
    pub fn log_v(&self, x: f64) -> Result<f64, QuadError> {
        Ok(log_integrate(|y| self.log_outer_integrand(y), self.anchor, x, 1e-10)?.log_value)
    }

    /// Finiteness of `v` at the endpoint. A finite endpoint `e` is mapped to
    /// `[1, inf)` by `y = e - (e - c) / t`.
    pub fn endpoint_verdict(&self, cfg: &TailConfig) -> IntegralVerdict {
        if self.end.is_infinite() {
            integrate_improper_log(|y| self.log_outer_integrand(y), self.anchor, cfg)
        } else {
            let span = self.end - self.anchor;
            integrate_improper_log(
                |t| self.log_outer_integrand(self.end - span / t) + span.ln() - 2.0 * t.ln(),
                1.0,
                cfg,
            )
        }
    }

    /// `(y, ln w(y))` in original coordinates over the oriented points `grid`.
    pub fn outer_integrand_profile(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter().map(|&y| (self.original(y), self.log_outer_integrand(y))).collect()
    }
}

/// `ln p'(y) = -2 int_c^y b / sigma^2` at one point.
pub fn scale_log_derivative(m: &SdeModel, c: f64, y: f64) -> Result<f64, FellerError> {
    check_scalar(m)?;
    let side = ScaleSide::toward_right(m, c, f64::INFINITY);
    Ok(side.log_scale_derivative(y)?)
}

/// `ln p'` along a monotone grid starting at `c`.
pub fn scale_log_derivative_on(m: &SdeModel, c: f64, grid: &[f64]) -> Result<Vec<f64>, FellerError> {
    check_scalar(m)?;
    let side = ScaleSide::toward_right(m, c, f64::INFINITY);
    let acc = cumulative_integral(|z| side.ratio(z), c, grid, RATIO_TOL)?;
    Ok(acc.into_iter().map(|s| -2.0 * s).collect())
}

/// `v(x)` with anchor `c`, on either side of `c`.
pub fn v_function(m: &SdeModel, c: f64, x: f64) -> Result<f64, FellerError> {
    check_scalar(m)?;
    let log_v = if x >= c {
        ScaleSide::toward_right(m, c, f64::INFINITY).log_v(x)?
    } else {
        ScaleSide::toward_left(m, c, f64::NEG_INFINITY).log_v(-x)?
    };
    Ok(log_v.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    FromLeft,
    FromRight,
    Across,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityFailure {
    pub at: f64,
    pub approach: Approach,
    /// The point is an endpoint of the domain rather than an interior point.
    pub at_boundary: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preconditions {
    pub nondegenerate: bool,
    pub locally_integrable: bool,
    /// Isolated zeros of `sigma^2` inside the domain.
    pub degenerate_points: Vec<f64>,
    pub integrability_failures: Vec<IntegrabilityFailure>,
    pub sampled_range: (f64, f64),
    pub samples: usize,
}

fn sample_points(l: f64, r: f64) -> Vec<f64> {
    let spread = log_spaced(1e-8, 1e6, 10);
    let mut pts: Vec<f64> = match (l.is_finite(), r.is_finite()) {
        (false, false) => {
            let mut v: Vec<f64> = spread.iter().rev().map(|s| -s).collect();
            v.push(0.0);
            v.extend(spread.iter().copied());
            v
        }
        (true, false) => spread.iter().map(|s| l + s).collect(),
        (false, true) => spread.iter().rev().map(|s| r - s).collect(),
        (true, true) => {
            let w = r - l;
            let q = log_spaced(1e-8, 0.5, 10);
            let mut v: Vec<f64> = q.iter().map(|s| l + w * s).collect();
            v.extend(q.iter().rev().map(|s| r - w * s));
            v
        }
    };
    pts.retain(|&x| x > l && x < r);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Minimises `f` on `[a, b]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Verdict of `int_d |b|/sigma^2` as the point `d` is approached from `from`.
fn approach_verdict(side: &ScaleSide, d: f64, from: f64) -> IntegralVerdict {
    let span = from - d;
    let f = |t: f64| {
        let y = d + span / t;
        side.ratio(y).abs() * span.abs() / (t * t)
    };
    integrate_improper(f, 1.0, &TailConfig::default())
}

/// Sampled checks of `sigma^2 > 0` and local integrability of `|b| / sigma^2`.
pub fn check_preconditions(m: &SdeModel) -> Result<Preconditions, FellerError> {
    check_scalar(m)?;
    let (l, r) = m.domain.bounds();
    let side = ScaleSide::toward_right(m, 0.0, r);
    let s2 = |x: f64| side.sigma2.eval_unchecked(&[x], &m.params);
    let pts = sample_points(l, r);
    let vals: Vec<f64> = pts.iter().map(|&x| s2(x)).collect();

    let mut degenerate: Vec<f64> = pts.iter().zip(&vals).filter(|(_, v)| !(**v > 0.0)).map(|(x, _)| *x).collect();
    for i in 1..pts.len().saturating_sub(1) {
        let v = vals[i];
        if v > 0.0 && v <= vals[i - 1] && v <= vals[i + 1] && (v < vals[i - 1] || v < vals[i + 1]) {
            let scale = vals[i - 1].max(vals[i + 1]);
            let (xm, vm) = golden_min(|x| s2(x), pts[i - 1], pts[i + 1]);
            if !(vm > 1e-20 * scale.max(1.0)) {
                degenerate.push(xm);
            }
        }
    }
    degenerate.sort_by(f64::total_cmp);
    degenerate.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));

    let mut failures = Vec::new();
    let is_near_degenerate = |x: f64| degenerate.iter().any(|d| (x - d).abs() <= 1e-9 * (1.0 + d.abs()));
    for w in pts.windows(2) {
        if is_near_degenerate(w[0]) || is_near_degenerate(w[1]) || degenerate.iter().any(|d| *d > w[0] && *d < w[1]) {
            continue;
        }
        if let Err(e) = integrate(|y| side.ratio(y).abs(), w[0], w[1], 1e-8) {
            failures.push(IntegrabilityFailure {
                at: 0.5 * (w[0] + w[1]),
                approach: Approach::Across,
                at_boundary: false,
                detail: e.to_string(),
            });
        }
    }
    let neighbor = |d: f64, right: bool| -> f64 {
        let found = if right {
            pts.iter().copied().find(|&x| x > d && !is_near_degenerate(x))
        } else {
            pts.iter().rev().copied().find(|&x| x < d && !is_near_degenerate(x))
        };
        found.unwrap_or(if right { d + 1.0 } else { d - 1.0 })
    };
    let mut approaches: Vec<(f64, Approach, bool)> = Vec::new();
    for &d in &degenerate {
        approaches.push((d, Approach::FromLeft, false));
        approaches.push((d, Approach::FromRight, false));
    }
    if l.is_finite() {
        approaches.push((l, Approach::FromRight, true));
    }
    if r.is_finite() {
        approaches.push((r, Approach::FromLeft, true));
    }
    for (d, approach, at_boundary) in approaches {
        let from = neighbor(d, approach == Approach::FromRight);
        let v = approach_verdict(&side, d, from);
        let detail = match v.status {
            IntegralStatus::Convergent { .. } => continue,
            IntegralStatus::Divergent { .. } => format!("|b|/sigma^2 is not integrable: {}", v.diagnostics.reason),
            IntegralStatus::Inconclusive => format!("integrability undetermined: {}", v.diagnostics.reason),
        };
        failures.push(IntegrabilityFailure { at: d, approach, at_boundary, detail });
    }

    Ok(Preconditions {
        nondegenerate: degenerate.is_empty(),
        locally_integrable: failures.is_empty(),
        degenerate_points: degenerate,
        integrability_failures: failures,
        sampled_range: (pts[0], pts[pts.len() - 1]),
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointReport {
    /// Endpoint in original coordinates.
    pub endpoint: f64,
    /// Anchor used for this endpoint, in original coordinates.
    pub anchor: f64,
    pub v: IntegralVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FellerReport {
    pub anchor: f64,
    pub precond_nondegenerate: bool,
    pub precond_locally_integrable: bool,
    pub preconditions: Preconditions,
    pub v_at_left: EndpointReport,
    pub v_at_right: EndpointReport,
    pub verdict: Verdict,
    /// The preconditions failed somewhere, so the verdict rests on the split test.
    pub conditional: bool,
    pub caveats: Vec<String>,
}

/// Both oriented sides of a Feller analysis.
#[derive(Debug, Clone)]
pub struct FellerSetup {
    pub anchor: f64,
    pub preconditions: Preconditions,
    pub left: ScaleSide,
    pub right: ScaleSide,
    pub caveats: Vec<String>,
}

/// Default anchor: the midpoint of a bounded domain, otherwise 1 (or one unit
/// inside a finite endpoint).
pub fn default_anchor(m: &SdeModel) -> f64 {
    if let Some(c) = m.settings.feller.anchor {
        return c;
    }
    let (l, r) = m.domain.bounds();
    match (l.is_finite(), r.is_finite()) {
        (true, true) => 0.5 * (l + r),
        (true, false) if l >= 1.0 => l + 1.0,
        (false, true) if r <= 1.0 => r - 1.0,
        _ => 1.0,
    }
}

fn pick_anchor(c: f64, lo: f64, hi: f64, pivot: f64) -> f64 {
    if c > lo && c < hi {
        return c;
    }
    let mirrored = 2.0 * pivot - c;
    if mirrored > lo && mirrored < hi {
        return mirrored;
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (false, false) => 0.0,
    }
}

/// Preconditions plus the two oriented sides. Isolated zeros of `sigma^2`
/// split the domain; each endpoint is then studied from the piece next to it.
pub fn prepare(m: &SdeModel, anchor: Option<f64>) -> Result<FellerSetup, FellerError> {
    check_scalar(m)?;
    if m.jumps.is_some() {
        return Err(FellerError::JumpsUnsupported);
    }
    let pre = check_preconditions(m)?;
    let (l, r) = m.domain.bounds();
    let c = anchor.unwrap_or_else(|| default_anchor(m));
    let s2c = m.sigma_squared().eval_unchecked(&[c], &m.params);
    if !(c > l && c < r && s2c > 0.0) {
        return Err(FellerError::InvalidAnchor { c });
    }
    let degenerate = &pre.degenerate_points;
    if degenerate.len() > 8 {
        return Err(FellerError::DegenerateNoise { count: degenerate.len() });
    }
    let mut caveats = Vec::new();
    let (first, last) = (degenerate.first().copied(), degenerate.last().copied());
    let right_anchor = match last {
        Some(d) => pick_anchor(c, d, r, d),
        None => c,
    };
    let left_anchor = match first {
        Some(d) => pick_anchor(c, l, d, d),
        None => c,
    };
    if !degenerate.is_empty() {
        caveats.push(format!(
            "sigma^2 vanishes at {degenerate:?}; the test runs separately on ({l}, {}) with anchor {left_anchor} \
             and on ({}, {r}) with anchor {right_anchor}",
            first.unwrap_or(r),
            last.unwrap_or(l),
        ));
    }
    for f in &pre.integrability_failures {
        let place = if f.at_boundary { "at the domain boundary" } else { "inside the domain" };
        caveats.push(format!("|b|/sigma^2 fails local integrability near {} ({place}): {}", f.at, f.detail));
    }
    Ok(FellerSetup {
        anchor: c,
        left: ScaleSide::toward_left(m, left_anchor, l),
        right: ScaleSide::toward_right(m, right_anchor, r),
        preconditions: pre,
        caveats,
    })
}

fn combine(left: &IntegralVerdict, right: &IntegralVerdict) -> Verdict {
    if left.is_divergent() && right.is_divergent() {
        Verdict::AlmostSureNonExplosion
    } else if left.is_convergent() || right.is_convergent() {
        Verdict::PositiveProbabilityExplosion
    } else {
        Verdict::Inconclusive
    }
}

/// Runs the test toward both endpoints of the domain.
pub fn classify_feller(m: &SdeModel, anchor: Option<f64>) -> Result<FellerReport, FellerError> {
    let setup = prepare(m, anchor)?;
    let cfg = feller_tail_config();
    let (lv, rv) = rayon::join(|| setup.left.endpoint_verdict(&cfg), || setup.right.endpoint_verdict(&cfg));
    let verdict = combine(&lv, &rv);
    let pre = setup.preconditions;
    let mut caveats = setup.caveats;
    let (l, r) = m.domain.bounds();
    if verdict == Verdict::PositiveProbabilityExplosion && (l.is_finite() || r.is_finite()) {
        caveats.push("v is finite at an endpoint: the process leaves the domain with positive probability".into());
    }
    Ok(FellerReport {
        anchor: setup.anchor,
        precond_nondegenerate: pre.nondegenerate,
        precond_locally_integrable: pre.locally_integrable,
        conditional: !(pre.nondegenerate && pre.locally_integrable),
        v_at_left: EndpointReport { endpoint: l, anchor: setup.left.original(setup.left.anchor), v: lv },
        v_at_right: EndpointReport { endpoint: r, anchor: setup.right.anchor, v: rv },
        preconditions: pre,
        verdict,
        caveats,
    })
}

/// `int_xi^inf 1/b`, after checking by sampling that `b > 0` on `[xi, inf)`.
pub fn osgood_test(m: &SdeModel, xi: f64) -> Result<IntegralVerdict, FellerError> {
    check_scalar(m)?;
    let b = |y: f64| m.drift[0].eval_unchecked(&[y], &m.params);
    let mut probes: Vec<f64> = if xi > 0.0 {
        log_spaced(xi, xi.max(1.0) * 1e6, 50)
    } else {
        let mut v = crate::grid::linspace(xi, 1.0, 200);
        v.extend(log_spaced(1.0, 1e6, 50));
        v
    };
    probes.retain(|y| *y >= xi);
    if let Some(&at) = probes.iter().find(|&&y| !(b(y) > 0.0)) {
        return Err(FellerError::DriftNotPositive { at });
    }
    Ok(integrate_improper(|y| 1.0 / b(y), xi, &TailConfig::default()))
}
