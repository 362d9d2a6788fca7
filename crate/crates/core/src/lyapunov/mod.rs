//! Lyapunov-function sufficient conditions for explosion and non-explosion.
//!
//! Every condition is checked by sampling on log-spaced shells
//! `r_inner <= |x| <= r_outer` and reading the asymptotic trend of per-shell
//! extremes over the outer two decades. `Yes` needs a decisive trend, `No`
//! needs a sampled witness with a negative margin beyond tolerance, and
//! everything else is `Inconclusive`.

mod generator;
mod linalg;
mod sampling;

use serde::Serialize;
use thiserror::Error;

pub use generator::{
    generator_apply, jump_expectation_mc, GeneratorResult, GeneratorValue, JumpPart, CLOSED_FORM_MAX_DEGREE,
    JUMP_MC_SAMPLES, JUMP_MC_SEED,
};
pub use linalg::{lambda_extremes, symmetric_eigenvalues, LinalgError};
pub use sampling::{lower_trend, margin_tol, shell_stats, upper_trend, ShellGrid, ShellStat, Trend};

use crate::expr::{DiffError, Expr};
use crate::feller::{osgood_test, FellerError};
use crate::grid::log_spaced;
use crate::model::{
    CandidateFamily, CandidateFunction, LyapunovCandidate, RegionSpec, SdeModel, StateDomain, TabulatedIntegral,
};
use crate::quad::QuadError;
use crate::Holds;
use sampling::outer_window_start;

/// Shells per decade of radius.
pub const SHELLS_PER_DECADE: usize = 10;
/// Direction cap when the generator needs Monte Carlo at every point.
pub const MC_DIRECTION_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error(transparent)]
    NonDifferentiable(#[from] DiffError),
    #[error("E|V(x + J)| is infinite for `{candidate}`: the jump law charges the pole at {at:?}")]
    MomentDiverges { candidate: String, at: Vec<f64> },
    #[error("candidate `{candidate}` is not positive at {witness:?} (V = {value})")]
    CandidateNotPositive { candidate: String, witness: Vec<f64>, value: f64 },
    #[error("candidate `{candidate}` is unbounded on the exterior region (V = {value} at {witness:?})")]
    UnboundedCandidate { candidate: String, witness: Vec<f64>, value: f64 },
    #[error("this check needs a one-dimensional model, got dimension {dim}")]
    Dimension { dim: usize },
    #[error("this check does not cover models with jumps")]
    JumpsUnsupported,
    #[error("drift is not positive at x = {at}")]
    DriftNotPositive { at: f64 },
    #[error("drift decreases near x = {at}")]
    DriftNotMonotone { at: f64 },
    #[error("sup LV/V diverges toward {edge}")]
    SupremumDiverges { edge: String },
    #[error("precondition rejected: {0}")]
    PreconditionRejected(String),
    #[error("no sampled point of the region lies in the state domain")]
    EmptyRegion,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Feller(#[from] FellerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    /// `LV <= C V` outside a ball with `V` growing to infinity.
    Nonexplosion,
    /// Growth bound with the `|x|^2 ln |x|^2` envelope.
    ChowNonexplosion,
    /// Growth lower bound with the `|x|^2 (ln |x|^2)^(1 + eps)` envelope.
    ChowExplosion,
    /// Bounded `V` with `LV >= C V` outside a ball.
    PositiveExplosion,
    /// Bounded `V`, ellipticity and recurrence to a level set.
    AlmostSureExplosion,
    /// `LV <= C V` for a `V` singular at the boundary of the positive half-line.
    BoundaryAvoidance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Constants {
    /// `inf V` outside `D`.
    pub k0: Option<f64>,
    /// `sup V` outside `D`.
    pub k1: Option<f64>,
    /// `sup V` on `D`.
    pub k2: Option<f64>,
    /// `inf V` on `Gamma`.
    pub k3: Option<f64>,
}

/// The sampled region, with the radii actually used after enlarging `D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionUsed {
    pub r_inner: f64,
    pub r_gamma: f64,
    pub r_outer: f64,
    pub effective_inner: f64,
    pub effective_gamma: f64,
    pub shells: usize,
    pub directions: usize,
    pub include_interior: bool,
    /// `+1` or `-1` when a one-dimensional check was decided on one half-line.
    pub half_line: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubCheck {
    pub name: String,
    pub holds: Holds,
    pub detail: String,
}

impl SubCheck {
    fn new(name: &str, holds: Holds, detail: impl Into<String>) -> SubCheck {
        SubCheck { name: name.into(), holds, detail: detail.into() }
    }
}

/// One row of a per-shell profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellRow {
    pub radius: f64,
    pub sup: f64,
    pub inf: f64,
}

/// `P(tau_{1/n} <= t) <= e^{C t} / (n x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: u64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub candidate: Option<String>,
    pub holds: Holds,
    pub c: Option<f64>,
    /// Smallest sampled slack of the inequality in units of the ratio that
    /// defines `C`; negative at a witness.
    pub worst_margin: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub constants: Constants,
    pub region: RegionUsed,
    pub trend: Option<Trend>,
    pub checks: Vec<SubCheck>,
    pub notes: Vec<String>,
    pub shells: Vec<ShellRow>,
    pub bounds: Vec<BoundRow>,
}

impl ConditionReport {
    fn new(condition: ConditionId, candidate: Option<&LyapunovCandidate>, region: RegionUsed) -> ConditionReport {
        ConditionReport {
            condition,
            candidate: candidate.map(|c| c.name.clone()),
            holds: Holds::Inconclusive,
            c: None,
            worst_margin: None,
            witness: None,
            constants: Constants::default(),
            region,
            trend: None,
            checks: Vec::new(),
            notes: Vec::new(),
            shells: Vec::new(),
            bounds: Vec::new(),
        }
    }
}

fn rows(stats: &[ShellStat]) -> Vec<ShellRow> {
    stats.iter().map(|s| ShellRow { radius: s.radius, sup: s.sup, inf: s.inf }).collect()
}

fn combine(parts: &[Holds]) -> Holds {
    if parts.contains(&Holds::No) {
        Holds::No
    } else if parts.iter().all(|h| *h == Holds::Yes) {
        Holds::Yes
    } else {
        Holds::Inconclusive
    }
}

/// Sampling pieces: the two half-lines in one dimension (those meeting the
/// domain), the whole space otherwise.
fn pieces(m: &SdeModel) -> Vec<Option<f64>> {
    if m.dim != 1 {
        return vec![None];
    }
    let (l, r) = m.domain.bounds();
    let mut out = Vec::new();
    if r > 0.0 {
        out.push(Some(1.0));
    }
    if l < 0.0 {
        out.push(Some(-1.0));
    }
    out
}

fn grid_for(m: &SdeModel, lo: f64, hi: f64, piece: Option<f64>, directions: usize) -> ShellGrid {
    let g = ShellGrid::new(m.dim, lo, hi, SHELLS_PER_DECADE, directions);
    match piece {
        Some(sign) => g.half_line(sign),
        None => g,
    }
}

fn region_used(regions: &RegionSpec, grid: &ShellGrid, include_interior: bool, piece: Option<f64>) -> RegionUsed {
    RegionUsed {
        r_inner: regions.r_inner,
        r_gamma: regions.r_gamma,
        r_outer: regions.r_outer,
        effective_inner: regions.r_inner,
        effective_gamma: regions.r_gamma,
        shells: grid.radii.len(),
        directions: grid.directions.len(),
        include_interior,
        half_line: piece.map(|s| s as i8),
    }
}

fn direction_count(m: &SdeModel, gen: &GeneratorResult) -> usize {
    let n = m.settings.lyapunov.directions;
    if matches!(gen.jump_part, Some(JumpPart::MonteCarlo { .. })) {
        n.min(MC_DIRECTION_CAP)
    } else {
        n
    }
}

/// Outcome of an upper-bound search `sup q <= C`.
struct UpperBound {
    holds: Holds,
    c: Option<f64>,
    trend: Trend,
    witness: Option<Vec<f64>>,
    margin: Option<f64>,
}

fn upper_bound(stats: &[ShellStat]) -> UpperBound {
    let start = outer_window_start(stats);
    let sups: Vec<f64> = stats[start..].iter().map(|s| s.sup).collect();
    let max = stats.iter().map(|s| s.sup).fold(f64::NEG_INFINITY, f64::max);
    let trend = upper_trend(&sups);
    let accept = |c: f64| UpperBound {
        holds: Holds::Yes,
        c: Some(c),
        trend,
        witness: None,
        margin: Some(stats.iter().map(|s| c - s.sup).fold(f64::INFINITY, f64::min)),
    };
    match trend {
        Trend::NonIncreasing => accept(max),
        Trend::Saturating { limit } => accept(max.max(limit)),
        Trend::Growing => {
            let inner = stats[..start.max(1)].iter().map(|s| s.sup).fold(f64::NEG_INFINITY, f64::max);
            let last = stats.last().expect("non-empty stats");
            UpperBound {
                holds: Holds::No,
                c: None,
                trend,
                witness: Some(last.argsup.clone()),
                margin: Some(inner - last.sup),
            }
        }
        Trend::Undetermined => UpperBound { holds: Holds::Inconclusive, c: None, trend, witness: None, margin: None },
    }
}

/// Outcome of a positive lower-bound search `q >= C > 0` for `|x| >= r_star`.
struct LowerBound {
    holds: Holds,
    c: Option<f64>,
    r_star: Option<f64>,
    trend: Option<Trend>,
    witness: Option<Vec<f64>>,
    margin: Option<f64>,
    note: Option<String>,
}

fn lower_bound(stats: &[ShellStat]) -> LowerBound {
    let scale = stats.iter().map(|s| s.inf.abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let tol = margin_tol(scale);
    let last = stats.last().expect("non-empty stats");
    let mut none = LowerBound { holds: Holds::Inconclusive, c: None, r_star: None, trend: None, witness: None, margin: None, note: None };
    if !(last.inf > tol) {
        if last.inf < -tol {
            none.holds = Holds::No;
            none.witness = Some(last.arginf.clone());
            none.margin = Some(last.inf);
        } else {
            none.note = Some("the lower bound is within tolerance of zero at the outer radius".into());
        }
        return none;
    }
    let j_star = stats.iter().rposition(|s| !(s.inf > tol)).map_or(0, |j| j + 1);
    let start = outer_window_start(stats);
    if j_star > start {
        none.note = Some(format!(
            "positive only beyond r = {:.4e}, leaving less than two decades of sampling",
            stats[j_star].radius
        ));
        none.r_star = Some(stats[j_star].radius);
        return none;
    }
    let infs: Vec<f64> = stats[start..].iter().map(|s| s.inf).collect();
    let trend = lower_trend(&infs);
    let min = stats[j_star..].iter().map(|s| s.inf).fold(f64::INFINITY, f64::min);
    let r_star = stats[j_star].radius;
    let base = LowerBound { r_star: Some(r_star), trend: Some(trend), ..none };
    match trend {
        Trend::NonIncreasing => LowerBound { holds: Holds::Yes, c: Some(min), margin: Some(min), ..base },
        Trend::Saturating { limit } if limit > tol && limit >= infs[infs.len() - 1] - limit => {
            let c = min.min(limit);
            LowerBound { holds: Holds::Yes, c: Some(c), margin: Some(c), ..base }
        }
        Trend::Saturating { limit } => LowerBound {
            note: Some(format!(
                "the lower bound extrapolates to {limit:.4e}, which is not clearly separated from zero"
            )),
            ..base
        },
        _ => LowerBound { note: Some("the lower bound keeps decreasing over the outer decades".into()), ..base },
    }
}

/// `LV <= C V` on `|x| >= r_inner` (and inside when `include_interior`), with
/// `inf_{|x| >= R} V -> infinity`.
pub fn check_nonexplosion(m: &SdeModel, cand: &LyapunovCandidate) -> Result<ConditionReport, LyapunovError> {
    let gen = generator_apply(m, cand)?;
    let s = &m.settings.lyapunov;
    let regions = s.regions;
    let include_interior = s.include_interior.unwrap_or(m.jumps.is_some());
    let dirs = direction_count(m, &gen);
    let grid = grid_for(m, regions.r_inner, regions.r_outer, None, dirs);
    let mut report = ConditionReport::new(ConditionId::Nonexplosion, Some(cand), region_used(&regions, &grid, include_interior, None));
    if dirs < s.directions {
        report.notes.push(format!("directions capped at {dirs}: the jump term is estimated by Monte Carlo"));
    }
    let v = |x: &[f64]| cand.value(x, &m.params);
    let v_stats = shell_stats(&grid, &m.domain, &v);
    if v_stats.is_empty() {
        return Err(LyapunovError::EmptyRegion);
    }
    if let Some(bad) = v_stats.iter().find(|s| !(s.inf > 0.0)) {
        return Err(LyapunovError::CandidateNotPositive {
            candidate: cand.name.clone(),
            witness: bad.arginf.clone(),
            value: bad.inf,
        });
    }
    let ratio = |x: &[f64]| gen.value_at(x) / v(x);
    let stats = shell_stats(&grid, &m.domain, &ratio);
    if stats.is_empty() {
        return Err(LyapunovError::EmptyRegion);
    }
    let skipped: usize = stats.iter().map(|s| s.skipped).sum();
    if skipped > 0 && m.domain.bounds() == (f64::NEG_INFINITY, f64::INFINITY) {
        report.notes.push(format!("{skipped} sampled points skipped where LV/V is undefined"));
    }
    let ub = upper_bound(&stats);
    let mut holds_ratio = ub.holds;
    let mut c = ub.c;
    report.trend = Some(ub.trend);
    report.witness = ub.witness;
    report.worst_margin = ub.margin;

    if include_interior && holds_ratio != Holds::No {
        let lo = (regions.r_inner * 1e-3).max(cand.min_radius * (1.0 + 1e-6)).max(1e-9);
        if lo < regions.r_inner {
            let inner = ShellGrid { radii: log_spaced(lo, regions.r_inner, SHELLS_PER_DECADE), ..grid.clone() };
            let worst = shell_stats(&inner, &m.domain, &|x| {
                let (lv, vx) = (gen.value_at(x), v(x));
                if vx > 0.0 {
                    lv / vx
                } else if lv > margin_tol(vx) {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            });
            if let Some(w) = worst.iter().find(|s| s.sup == f64::INFINITY) {
                holds_ratio = Holds::No;
                report.witness = Some(w.argsup.clone());
                report.notes.push("LV > 0 where V <= 0 inside D".into());
            } else if let Some(c0) = c {
                let c_in = worst.iter().map(|s| s.sup).fold(f64::NEG_INFINITY, f64::max);
                c = Some(c0.max(c_in));
            }
        }
    }
    report.checks.push(SubCheck::new(
        "lv_bounded_by_cv",
        holds_ratio,
        match c {
            Some(c) => format!("sup LV/V = {c:.6e}"),
            None => format!("{:?}", ub.trend),
        },
    ));

    let infs: Vec<f64> = v_stats[outer_window_start(&v_stats)..].iter().map(|s| s.inf).collect();
    let growth = match upper_trend(&infs) {
        Trend::Growing => Holds::Yes,
        Trend::NonIncreasing | Trend::Saturating { .. } => Holds::No,
        Trend::Undetermined => Holds::Inconclusive,
    };
    report.checks.push(SubCheck::new(
        "radial_growth",
        growth,
        format!("inf V on the outer shell = {:.6e}", v_stats.last().map_or(f64::NAN, |s| s.inf)),
    ));
    report.holds = combine(&[holds_ratio, growth]);
    report.c = c;
    report.shells = rows(&stats);
    Ok(report)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `<b, x> + 1/2 tr A` and `lambda_max(A)` at `x`.
fn drift_trace_lambda(m: &SdeModel, x: &[f64]) -> (f64, f64) {
    let mut b = vec![0.0; m.dim];
    m.drift_at(x, &mut b);
    let a = m.covariance_at(x);
    let inner: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
    let tr: f64 = (0..m.dim).map(|i| a[i * m.dim + i]).sum();
    let lmax = lambda_extremes(&a, m.dim).map_or(f64::NAN, |(_, hi)| hi);
    (inner + 0.5 * tr, lmax)
}

/// `<b,x> + 1/2 tr A - lambda_max(A) <= C |x|^2 ln |x|^2` for `|x| > e`.
pub fn chow_nonexplosion_condition(m: &SdeModel) -> Result<ConditionReport, LyapunovError> {
    if m.jumps.is_some() {
        return Err(LyapunovError::JumpsUnsupported);
    }
    let regions = m.settings.lyapunov.regions;
    let lo = regions.r_inner.max(std::f64::consts::E * (1.0 + 1e-9));
    let grid = grid_for(m, lo, regions.r_outer, None, m.settings.lyapunov.directions);
    let mut report = ConditionReport::new(ConditionId::ChowNonexplosion, None, region_used(&regions, &grid, false, None));
    report.region.effective_inner = lo;
    let q = |x: &[f64]| {
        let (lhs, lmax) = drift_trace_lambda(m, x);
        let r2 = norm(x).powi(2);
        (lhs - lmax) / (r2 * r2.ln())
    };
    let stats = shell_stats(&grid, &m.domain, &q);
    if stats.is_empty() {
        return Err(LyapunovError::EmptyRegion);
    }
    let ub = upper_bound(&stats);
    report.holds = ub.holds;
    report.c = ub.c;
    report.trend = Some(ub.trend);
    report.witness = ub.witness;
    report.worst_margin = ub.margin;
    report.shells = rows(&stats);
    Ok(report)
}

/// Picks the decisive piece of a one-dimensional explosion check: any `Yes`
/// half-line suffices, `No` needs both.
fn best_piece(reports: Vec<ConditionReport>) -> ConditionReport {
    let rank = |h: Holds| match h {
        Holds::Yes => 0,
        Holds::Inconclusive => 1,
        Holds::No => 2,
    };
    let mut best = reports.into_iter().min_by_key(|r| rank(r.holds)).expect("at least one piece");
    if best.region.half_line.is_some() {
        best.notes.push("explosion toward one end of the line suffices; the other half-line was also sampled".into());
    }
    best
}

/// `<b,x> + 1/2 tr A - lambda_max(A) (1 + (1+eps)/ln |x|^2) >= C |x|^2 (ln |x|^2)^(1+eps)`
/// for `|x| >= r_star`, with `r_star` the first sampled radius beyond which
/// the sampled left side stays positive.
pub fn chow_explosion_condition(m: &SdeModel, eps: f64) -> Result<ConditionReport, LyapunovError> {
    if m.jumps.is_some() {
        return Err(LyapunovError::JumpsUnsupported);
    }
    if !(eps > 0.0) {
        return Err(LyapunovError::PreconditionRejected(format!("eps must be positive, got {eps}")));
    }
    let regions = m.settings.lyapunov.regions;
    let lo = regions.r_inner.max(std::f64::consts::E * (1.0 + 1e-9));
    let q = |x: &[f64]| {
        let (lhs, lmax) = drift_trace_lambda(m, x);
        let l2 = norm(x).powi(2).ln();
        (lhs - lmax * (1.0 + (1.0 + eps) / l2)) / (norm(x).powi(2) * l2.powf(1.0 + eps))
    };
    let mut reports = Vec::new();
    for piece in pieces(m) {
        let grid = grid_for(m, lo, regions.r_outer, piece, m.settings.lyapunov.directions);
        let mut report = ConditionReport::new(ConditionId::ChowExplosion, None, region_used(&regions, &grid, false, piece));
        let stats = shell_stats(&grid, &m.domain, &q);
        if stats.is_empty() {
            continue;
        }
        let lb = lower_bound(&stats);
        report.holds = lb.holds;
        report.c = lb.c;
        report.trend = lb.trend;
        report.witness = lb.witness;
        report.worst_margin = lb.margin;
        report.region.effective_inner = lb.r_star.unwrap_or(lo).max(lo);
        report.notes.extend(lb.note);
        report.shells = rows(&stats);
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(LyapunovError::EmptyRegion);
    }
    Ok(best_piece(reports))
}

/// `sup V` outside `D`, analytic for the bounded families.
fn sup_exterior(cand: &LyapunovCandidate, v_stats: &[ShellStat]) -> Result<(Option<f64>, Option<String>), LyapunovError> {
    match (&cand.family, &cand.function) {
        (CandidateFamily::BoundedLog { k, .. }, _) => {
            return Ok((Some(*k), Some(format!("K1 = k = {k}: V < k wherever ln|x| > 0"))));
        }
        (_, CandidateFunction::Tabulated(t)) => {
            return match t.limit {
                Some(l) => Ok((Some(l), Some("K1 is the convergent integral of 1/b".into()))),
                None => Err(LyapunovError::UnboundedCandidate {
                    candidate: cand.name.clone(),
                    witness: vec![t.upper()],
                    value: t.value(t.upper()),
                }),
            };
        }
        _ => {}
    }
    let start = outer_window_start(v_stats);
    let sups: Vec<f64> = v_stats[start..].iter().map(|s| s.sup).collect();
    let max = v_stats.iter().map(|s| s.sup).fold(f64::NEG_INFINITY, f64::max);
    match upper_trend(&sups) {
        Trend::NonIncreasing => Ok((Some(max), None)),
        Trend::Saturating { limit } => Ok((Some(max.max(limit)), Some("K1 extrapolated from the outer shells".into()))),
        Trend::Growing => {
            let last = v_stats.last().expect("non-empty stats");
            Err(LyapunovError::UnboundedCandidate { candidate: cand.name.clone(), witness: last.argsup.clone(), value: last.sup })
        }
        Trend::Undetermined => Ok((None, Some("could not decide whether V is bounded".into()))),
    }
}

/// `sup V` on the part of the ball `|x| <= r` where `V` is defined
/// (`|x| > min_radius`), and `inf V` on the shell `|x| = r_gamma`.
fn level_constants(
    m: &SdeModel,
    cand: &LyapunovCandidate,
    piece: Option<f64>,
    r: f64,
    r_gamma: f64,
) -> (f64, f64) {
    let v = |x: &[f64]| cand.value(x, &m.params);
    let lo = (cand.min_radius * (1.0 + 1e-6)).max(r * 1e-3);
    let mut ball = grid_for(m, lo.min(r), r, piece, m.settings.lyapunov.directions);
    if ball.radii.last() != Some(&r) {
        ball.radii.push(r);
    }
    let k2 = shell_stats(&ball, &m.domain, &v).iter().map(|s| s.sup).fold(f64::NEG_INFINITY, f64::max);
    let gamma = ShellGrid { radii: vec![r_gamma], ..ball };
    let k3 = shell_stats(&gamma, &m.domain, &v).iter().map(|s| s.inf).fold(f64::INFINITY, f64::min);
    (k2, k3)
}

fn enlarged_regions(regions: &RegionSpec, r_star: f64) -> (f64, f64) {
    let d = regions.r_inner.max(r_star);
    let gamma = if regions.r_gamma > d { regions.r_gamma } else { d * regions.r_gamma / regions.r_inner };
    (d, gamma)
}

/// Bounded positive `V` with `LV >= C V` outside `D` and
/// `sup_D V < inf_Gamma V`: explosion with positive probability from `Gamma`.
/// `D` is enlarged to the first radius beyond which the sampled `LV/V` stays
/// positive.
pub fn check_positive_explosion(m: &SdeModel, cand: &LyapunovCandidate) -> Result<ConditionReport, LyapunovError> {
    let gen = generator_apply(m, cand)?;
    let regions = m.settings.lyapunov.regions;
    let dirs = direction_count(m, &gen);
    let v = |x: &[f64]| cand.value(x, &m.params);
    let mut reports = Vec::new();
    for piece in pieces(m) {
        let grid = grid_for(m, regions.r_inner, regions.r_outer, piece, dirs);
        let mut report =
            ConditionReport::new(ConditionId::PositiveExplosion, Some(cand), region_used(&regions, &grid, m.jumps.is_some(), piece));
        let v_stats = shell_stats(&grid, &m.domain, &v);
        if v_stats.is_empty() {
            continue;
        }
        if let Some(bad) = v_stats.iter().find(|s| !(s.inf > 0.0)) {
            return Err(LyapunovError::CandidateNotPositive {
                candidate: cand.name.clone(),
                witness: bad.arginf.clone(),
                value: bad.inf,
            });
        }
        let (k1, k1_note) = sup_exterior(cand, &v_stats)?;
        report.constants.k1 = k1;
        report.notes.extend(k1_note);
        let stats = shell_stats(&grid, &m.domain, &|x| gen.value_at(x) / v(x));
        if stats.is_empty() {
            continue;
        }
        let lb = lower_bound(&stats);
        report.trend = lb.trend;
        report.witness = lb.witness.clone();
        report.worst_margin = lb.margin;
        report.notes.extend(lb.note.clone());
        report.shells = rows(&stats);
        report.checks.push(SubCheck::new(
            "k1_finite",
            if k1.is_some() { Holds::Yes } else { Holds::Inconclusive },
            k1.map_or("undetermined".into(), |k| format!("K1 = {k:.6e}")),
        ));
        report.checks.push(SubCheck::new(
            "lv_at_least_cv",
            lb.holds,
            lb.c.map_or("no positive C found".into(), |c| format!("inf LV/V = {c:.6e}")),
        ));
        let mut levels = Holds::Inconclusive;
        if let Some(r_star) = lb.r_star {
            let (d, gamma) = enlarged_regions(&regions, r_star);
            report.region.effective_inner = d;
            report.region.effective_gamma = gamma;
            if d > regions.r_inner {
                report.notes.push(format!("D enlarged to radius {d:.4e}, Gamma at radius {gamma:.4e}"));
            }
            if gamma < regions.r_outer / 100.0 {
                let (k2, k3) = level_constants(m, cand, piece, d, gamma);
                report.constants.k2 = Some(k2);
                report.constants.k3 = Some(k3);
                levels = if k2 < k3 { Holds::Yes } else { Holds::No };
                report.checks.push(SubCheck::new("k2_below_k3", levels, format!("K2 = {k2:.6e}, K3 = {k3:.6e}")));
            }
        }
        if cand.min_radius > 0.0 {
            report.notes.push(format!("V is sampled only where |x| > {}", cand.min_radius));
        }
        let k1_holds = if k1.is_some() { Holds::Yes } else { Holds::Inconclusive };
        report.holds = combine(&[k1_holds, lb.holds, levels]);
        report.c = lb.c;
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(LyapunovError::EmptyRegion);
    }
    Ok(best_piece(reports))
}

/// Uniform ellipticity on the ball of radius `r_outer`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ellipticity {
    pub elliptic: Holds,
    /// `inf |sigma|` in one dimension, `inf lambda_min(sigma sigma^T)` otherwise.
    pub c0: f64,
    pub witness: Vec<f64>,
    pub radius: f64,
}

pub fn ellipticity_check(m: &SdeModel) -> Result<Ellipticity, LyapunovError> {
    let radius = m.settings.lyapunov.regions.r_outer;
    let grid = ShellGrid::new(m.dim, 1e-6, radius, SHELLS_PER_DECADE, m.settings.lyapunov.directions);
    let f = |x: &[f64]| {
        let a = m.covariance_at(x);
        if m.dim == 1 {
            a[0].sqrt()
        } else {
            lambda_extremes(&a, m.dim).map_or(f64::NAN, |(lo, _)| lo)
        }
    };
    let mut best = (f64::INFINITY, Vec::new());
    let origin = vec![0.0; m.dim];
    if m.domain.contains(&origin) {
        best = (f(&origin), origin);
    }
    for s in shell_stats(&grid, &m.domain, &f) {
        if s.inf < best.0 {
            best = (s.inf, s.arginf);
        }
    }
    if best.1.is_empty() {
        return Err(LyapunovError::EmptyRegion);
    }
    let elliptic = if best.0 > 1e-9 { Holds::Yes } else { Holds::No };
    Ok(Ellipticity { elliptic, c0: best.0, witness: best.1, radius })
}

/// One-dimensional almost sure explosion with `V = int_1^x dy / b(y)`:
/// convergent Osgood integral, `LV = 1 - 1/2 sigma^2 b'/b^2 >= C V` on the
/// right of `D`, `b'/b^2 -> 0`, `inf V > 0` outside `D`, and ellipticity.
pub fn check_as_explosion(m: &SdeModel) -> Result<ConditionReport, LyapunovError> {
    if m.dim != 1 {
        return Err(LyapunovError::Dimension { dim: m.dim });
    }
    if m.jumps.is_some() {
        return Err(LyapunovError::JumpsUnsupported);
    }
    let regions = m.settings.lyapunov.regions;
    let b = |y: f64| m.drift[0].eval_unchecked(&[y], &m.params);
    let probe = log_spaced(1.0, regions.r_outer, 50);
    let mut prev = f64::NEG_INFINITY;
    for &y in &probe {
        let by = b(y);
        if !(by > 0.0) {
            return Err(LyapunovError::DriftNotPositive { at: y });
        }
        if by < prev * (1.0 - 1e-12) {
            return Err(LyapunovError::DriftNotMonotone { at: y });
        }
        prev = by;
    }
    let grid = grid_for(m, regions.r_inner, regions.r_outer, Some(1.0), 2);
    let mut report = ConditionReport::new(ConditionId::AlmostSureExplosion, None, region_used(&regions, &grid, false, Some(1.0)));

    let osgood = osgood_test(m, 1.0)?;
    let osgood_holds = if osgood.is_convergent() {
        Holds::Yes
    } else if osgood.is_divergent() {
        Holds::No
    } else {
        Holds::Inconclusive
    };
    report.checks.push(SubCheck::new("osgood_convergent", osgood_holds, format!("{:?}", osgood.status)));
    if osgood_holds != Holds::Yes {
        report.holds = osgood_holds;
        return Ok(report);
    }

    let table = TabulatedIntegral::build(&m.drift[0], &m.params, regions.r_outer)?;
    let cand = LyapunovCandidate {
        name: "osgood_integral".into(),
        family: CandidateFamily::OsgoodIntegral,
        function: CandidateFunction::Tabulated(table),
        singular_points: Vec::new(),
        min_radius: 1.0,
    };
    report.candidate = Some(cand.name.clone());
    let gen = generator_apply(m, &cand)?;
    let v = |x: &[f64]| cand.value(x, &m.params);
    let stats = shell_stats(&grid, &m.domain, &|x| gen.value_at(x) / v(x));
    let lb = lower_bound(&stats);
    report.checks.push(SubCheck::new(
        "lv_at_least_cv",
        lb.holds,
        lb.c.map_or("no positive C found".into(), |c| format!("inf LV/V = {c:.6e}")),
    ));
    report.trend = lb.trend;
    report.witness = lb.witness.clone();
    report.worst_margin = lb.margin;
    report.notes.extend(lb.note.clone());
    report.shells = rows(&stats);
    report.c = lb.c;

    let db = m.drift[0].differentiate(0)?;
    let ratio = Expr::binary(crate::expr::BinOp::Div, db, Expr::powf(m.drift[0].clone(), 2.0));
    let tail: Vec<f64> = stats[outer_window_start(&stats)..]
        .iter()
        .map(|s| ratio.eval_unchecked(&[s.radius], &m.params).abs())
        .collect();
    let vanishing = matches!(upper_trend(&tail), Trend::NonIncreasing) && tail.last().is_some_and(|t| *t < 1e-6);
    report.checks.push(SubCheck::new(
        "drift_ratio_vanishes",
        if vanishing { Holds::Yes } else { Holds::Inconclusive },
        format!("|b'/b^2| at the outer radius = {:.3e}", tail.last().copied().unwrap_or(f64::NAN)),
    ));

    let mut levels = Holds::Inconclusive;
    if let Some(r_star) = lb.r_star {
        let (d, gamma) = enlarged_regions(&regions, r_star);
        report.region.effective_inner = d;
        report.region.effective_gamma = gamma;
        let (k0, k2, k3) = (v(&[d]), v(&[d]), v(&[gamma]));
        report.constants = Constants { k0: Some(k0), k1: cand_limit(&cand), k2: Some(k2), k3: Some(k3) };
        levels = if k0 > 0.0 && k2 < k3 { Holds::Yes } else { Holds::No };
        report.checks.push(SubCheck::new("level_sets", levels, format!("K0 = {k0:.6e}, K2 = {k2:.6e}, K3 = {k3:.6e}")));
    }
    let ell = ellipticity_check(m)?;
    report.checks.push(SubCheck::new("elliptic", ell.elliptic, format!("c0 = {:.6e} at {:?}", ell.c0, ell.witness)));
    report.notes.push("V is increasing, so sup V on D and inf V outside D are both V at the radius of D".into());
    report.holds = combine(&[osgood_holds, lb.holds, if vanishing { Holds::Yes } else { Holds::Inconclusive }, levels, ell.elliptic]);
    Ok(report)
}

fn cand_limit(c: &LyapunovCandidate) -> Option<f64> {
    match &c.function {
        CandidateFunction::Tabulated(t) => t.limit,
        CandidateFunction::Symbolic { .. } => None,
    }
}

/// `e^{C t} / (n x0)`, capped at one.
pub fn boundary_bound(c: f64, t: f64, n: u64, x0: f64) -> f64 {
    ((c * t).exp() / (n as f64 * x0)).min(1.0)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Reads a drift of the form `x^(-a)` and returns `a`.
fn negative_power_exponent(b: &Expr, m: &SdeModel) -> Option<f64> {
    match b {
        Expr::Pow(base, e) if matches!(**base, Expr::Var(0)) => {
            let p = e.bind(&m.params).simplify().as_const()?;
            (p < 0.0).then_some(-p)
        }
        _ => None,
    }
}

/// With `V = 1/x` on the positive half-line, `C = sup_{x > 0} LV/V` bounds
/// `P(tau_{1/n} <= t) <= e^{C t} / (n x0)`.
pub fn boundary_avoidance_check(m: &SdeModel) -> Result<ConditionReport, LyapunovError> {
    if m.dim != 1 {
        return Err(LyapunovError::Dimension { dim: m.dim });
    }
    if m.domain != StateDomain::PositiveHalfLine {
        return Err(LyapunovError::PreconditionRejected("the state domain must be the positive half-line".into()));
    }
    if let Some(a) = negative_power_exponent(&m.drift[0], m) {
        if a <= 1.0 {
            return Err(LyapunovError::PreconditionRejected(format!("drift x^-a needs a > 1, got a = {a}")));
        }
    }
    let cand = LyapunovCandidate {
        singular_points: vec![vec![0.0]],
        ..LyapunovCandidate::symbolic("reciprocal", CandidateFamily::Reciprocal, Expr::parse("1/x").expect("literal parses"))
    };
    let gen = generator_apply(m, &cand)?;
    let s = &m.settings;
    let regions = s.lyapunov.regions;
    let f = |x: f64| gen.value_at(&[x]) * x;
    let xs = log_spaced(1e-6, regions.r_outer, 4 * SHELLS_PER_DECADE);
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if let Some(i) = vals.iter().position(|v| v.is_nan()) {
        return Err(LyapunovError::PreconditionRejected(format!("LV/V is undefined at x = {:.4e}", xs[i])));
    }
    let (i_max, &v_max) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let decade = 4 * SHELLS_PER_DECADE * 2;
    let mut notes = Vec::new();
    let sup = if i_max + 1 == vals.len() {
        match upper_trend(&vals[vals.len() - decade..]) {
            Trend::NonIncreasing => v_max,
            Trend::Saturating { limit } => {
                notes.push("sup LV/V approached as x -> infinity".to_string());
                v_max.max(limit)
            }
            _ => return Err(LyapunovError::SupremumDiverges { edge: "x -> infinity".into() }),
        }
    } else if i_max == 0 {
        let rev: Vec<f64> = vals[..decade].iter().rev().copied().collect();
        match upper_trend(&rev) {
            Trend::NonIncreasing => v_max,
            Trend::Saturating { limit } => {
                notes.push("sup LV/V approached as x -> 0".to_string());
                v_max.max(limit)
            }
            _ => return Err(LyapunovError::SupremumDiverges { edge: "x -> 0".into() }),
        }
    } else {
        let (lo, hi) = (xs[i_max - 1].ln(), xs[i_max + 1].ln());
        let (_, best) = golden_max(&|u| f(u.exp()), lo, hi);
        best.max(v_max)
    };
    let c = sup.max(0.0);
    if sup <= 0.0 {
        notes.push(format!("sup LV/V = {sup:.6e} <= 0; C = 0 is used"));
    }
    let x0 = s.mc.x0.as_ref().and_then(|v| v.first().copied()).unwrap_or(1.0);
    let t = s.mc.horizon;
    let mut ns: Vec<u64> = std::iter::successors(Some(1u64), |n| n.checked_mul(10)).take_while(|n| *n <= s.lyapunov.n_max).collect();
    if ns.last() != Some(&s.lyapunov.n_max) {
        ns.push(s.lyapunov.n_max);
    }
    let grid = ShellGrid { radii: xs, directions: vec![vec![1.0]] };
    let mut report = ConditionReport::new(ConditionId::BoundaryAvoidance, Some(&cand), region_used(&regions, &grid, true, Some(1.0)));
    report.holds = Holds::Yes;
    report.c = Some(c);
    report.worst_margin = Some(c - sup);
    report.bounds = ns.into_iter().map(|n| BoundRow { n, bound: boundary_bound(c, t, n, x0) }).collect();
    report.notes = notes;
    report.notes.push(format!("bounds at t = {t}, x0 = {x0}"));
    Ok(report)
}
