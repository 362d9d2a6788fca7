//! Evidence collection and the final verdict.
//!
//! Analytic findings decide the verdict. An almost sure explosion finding
//! subsumes a positive-probability one; a non-explosion finding together with
//! any explosion finding is a contradiction and makes the verdict
//! inconclusive. Simulation never changes the verdict, it only adds caveats
//! or contradiction flags.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::feller::{classify_feller, osgood_test, FellerReport};
use crate::lyapunov::{
    boundary_avoidance_check, check_as_explosion, check_nonexplosion, check_positive_explosion,
    chow_explosion_condition, chow_nonexplosion_condition, ConditionId, ConditionReport,
};
use crate::mc::{boundary_hit_prob, estimate_explosion_prob, threshold_sensitivity, McEstimate, SimConfig};
use crate::model::{builtin_candidates, CandidateFamily, SdeModel, StateDomain};
use crate::quad::IntegralVerdict;
use crate::{Holds, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

/// Thresholds of the explosion sensitivity run.
pub const SENSITIVITY_THRESHOLDS: [f64; 3] = [1e6, 1e8, 1e10];

/// A sub-report or the reason it could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome<T> {
    Done { report: T },
    NotApplicable { reason: String },
}

impl<T> Outcome<T> {
    pub fn from_result<E: std::fmt::Display>(r: Result<T, E>) -> Outcome<T> {
        match r {
            Ok(report) => Outcome::Done { report },
            Err(e) => Outcome::NotApplicable { reason: e.to_string() },
        }
    }

    pub fn report(&self) -> Option<&T> {
        match self {
            Outcome::Done { report } => Some(report),
            Outcome::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovEvidence {
    pub condition: ConditionId,
    pub candidate: Option<String>,
    pub result: Outcome<ConditionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryEvidence {
    pub n: u64,
    pub estimate: McEstimate,
    /// `e^{C T} / (n x0)` from the boundary-avoidance check.
    pub analytic_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEvidence {
    pub advisory: bool,
    pub config: SimConfig,
    pub explosion: Outcome<McEstimate>,
    pub threshold_sensitivity: Vec<(f64, McEstimate)>,
    pub boundary: Vec<BoundaryEvidence>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SubReports {
    pub osgood: Option<Outcome<IntegralVerdict>>,
    pub feller: Option<Outcome<FellerReport>>,
    pub lyapunov: Vec<LyapunovEvidence>,
    pub mc: Option<McEvidence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    NonExplosion,
    PositiveProbabilityExplosion,
    AlmostSureExplosion,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FindingRecord {
    pub source: String,
    pub finding: Finding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceReport {
    pub schema_version: u32,
    pub model_name: String,
    pub model_digest: String,
    pub subreports: SubReports,
    pub findings: Vec<FindingRecord>,
    #[serde(rename = "final")]
    pub final_verdict: Verdict,
    /// Human-readable classification, refined for domain-preserving models.
    pub label: String,
    pub contradictions: Vec<String>,
    pub caveats: Vec<String>,
}

/// SHA-256 of the canonical JSON serialization of the model.
pub fn model_digest(m: &SdeModel) -> String {
    let json = serde_json::to_string(m).expect("models serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn source_of(e: &LyapunovEvidence) -> String {
    let name = serde_json::to_value(e.condition).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    match &e.candidate {
        Some(c) => format!("lyapunov.{name}[{c}]"),
        None => format!("lyapunov.{name}"),
    }
}

fn findings_of(sub: &SubReports) -> Vec<FindingRecord> {
    let mut out = Vec::new();
    if let Some(f) = sub.feller.as_ref().and_then(Outcome::report) {
        let finding = match f.verdict {
            Verdict::AlmostSureNonExplosion => Some(Finding::NonExplosion),
            Verdict::PositiveProbabilityExplosion => Some(Finding::PositiveProbabilityExplosion),
            _ => None,
        };
        out.extend(finding.map(|finding| FindingRecord { source: "feller".into(), finding }));
    }
    for e in &sub.lyapunov {
        let Some(r) = e.result.report() else { continue };
        if r.holds != Holds::Yes {
            continue;
        }
        let finding = match r.condition {
            ConditionId::Nonexplosion | ConditionId::ChowNonexplosion => Finding::NonExplosion,
            ConditionId::PositiveExplosion | ConditionId::ChowExplosion => Finding::PositiveProbabilityExplosion,
            ConditionId::AlmostSureExplosion => Finding::AlmostSureExplosion,
            ConditionId::BoundaryAvoidance => continue,
        };
        out.push(FindingRecord { source: source_of(e), finding });
    }
    out.sort();
    out
}

fn boundary_avoidance_holds(sub: &SubReports) -> bool {
    sub.lyapunov.iter().any(|e| {
        e.condition == ConditionId::BoundaryAvoidance && e.result.report().is_some_and(|r| r.holds == Holds::Yes)
    })
}

/// Combines the sub-reports into the final verdict.
pub fn combine(model_name: &str, model_digest: &str, mut sub: SubReports) -> EvidenceReport {
    sub.lyapunov.sort_by_key(source_of);
    let findings = findings_of(&sub);
    let sources = |f: &dyn Fn(Finding) -> bool| {
        findings.iter().filter(|r| f(r.finding)).map(|r| r.source.clone()).collect::<Vec<_>>()
    };
    let non = sources(&|f| f == Finding::NonExplosion);
    let exp = sources(&|f| f != Finding::NonExplosion);
    let mut contradictions = Vec::new();
    let mut caveats = Vec::new();
    let final_verdict = if !non.is_empty() && !exp.is_empty() {
        contradictions.push(format!(
            "non-explosion from {} contradicts explosion from {}",
            non.join(", "),
            exp.join(", ")
        ));
        Verdict::Inconclusive
    } else if findings.iter().any(|r| r.finding == Finding::AlmostSureExplosion) {
        Verdict::AlmostSureExplosion
    } else if !exp.is_empty() {
        Verdict::PositiveProbabilityExplosion
    } else if !non.is_empty() {
        Verdict::AlmostSureNonExplosion
    } else {
        Verdict::Inconclusive
    };

    if !sub.lyapunov.is_empty() {
        caveats.push("lyapunov: only time-independent candidates V(x) are checked".into());
    }
    if let Some(f) = sub.feller.as_ref().and_then(Outcome::report) {
        caveats.extend(f.caveats.iter().map(|c| format!("feller: {c}")));
    }
    if let Some(mc) = &sub.mc {
        if let Some(est) = mc.explosion.report() {
            caveats.extend(est.caveats.iter().map(|c| format!("mc: {c}")));
            if final_verdict == Verdict::AlmostSureNonExplosion && est.ci_low > 0.0 {
                let msg = format!(
                    "simulation sees explosions (95% CI [{:.4}, {:.4}]) although the analytic verdict is non-explosion",
                    est.ci_low, est.ci_high
                );
                if mc.advisory {
                    caveats.push(format!("{msg}; simulation is advisory for this model"));
                } else {
                    contradictions.push(msg);
                }
            }
            if final_verdict.is_explosive() && est.successes == 0 {
                caveats.push(format!("no explosion observed by T = {}", mc.config.horizon));
            }
        }
        for b in &mc.boundary {
            if let Some(bound) = b.analytic_bound {
                if b.estimate.p_hat > bound + 3.0 * b.estimate.half_width() {
                    contradictions.push(format!(
                        "P(min X <= 1/{}) estimated at {:.4e}, above the bound {bound:.4e}",
                        b.n, b.estimate.p_hat
                    ));
                }
            }
        }
        if mc.advisory {
            caveats.push("simulation unreliable for this model; analytic verdicts are authoritative".into());
        }
    }
    let label = if final_verdict == Verdict::AlmostSureNonExplosion && boundary_avoidance_holds(&sub) {
        "stays in (0,inf)".to_string()
    } else {
        final_verdict.label().to_string()
    };
    EvidenceReport {
        schema_version: SCHEMA_VERSION,
        model_name: model_name.into(),
        model_digest: model_digest.into(),
        subreports: sub,
        findings,
        final_verdict,
        label,
        contradictions,
        caveats,
    }
}

/// The drift blows up at the left end of the positive half-line, which makes
/// reaching `0` a question of its own.
fn singular_at_origin(m: &SdeModel) -> bool {
    if m.dim != 1 || m.domain != StateDomain::PositiveHalfLine {
        return false;
    }
    let b = |x: f64| m.drift[0].eval_unchecked(&[x], &m.params).abs();
    let near = b(1e-6);
    !near.is_finite() || near > 1e3 * (1.0 + b(1.0))
}

/// Every Lyapunov check applicable to `m`.
pub fn lyapunov_evidence(m: &SdeModel) -> Vec<LyapunovEvidence> {
    let cands = builtin_candidates(m);
    let s = &m.settings.lyapunov;
    let mut jobs: Vec<Box<dyn Fn() -> LyapunovEvidence + Send + Sync + '_>> = Vec::new();
    for c in &cands {
        let growing = matches!(c.family, CandidateFamily::SquaredNorm | CandidateFamily::LogSquaredNorm | CandidateFamily::User);
        let bounded = matches!(c.family, CandidateFamily::BoundedLog { .. } | CandidateFamily::User);
        if growing {
            jobs.push(Box::new(move || LyapunovEvidence {
                condition: ConditionId::Nonexplosion,
                candidate: Some(c.name.clone()),
                result: Outcome::from_result(check_nonexplosion(m, c)),
            }));
        }
        if bounded {
            jobs.push(Box::new(move || LyapunovEvidence {
                condition: ConditionId::PositiveExplosion,
                candidate: Some(c.name.clone()),
                result: Outcome::from_result(check_positive_explosion(m, c)),
            }));
        }
    }
    if m.jumps.is_none() {
        jobs.push(Box::new(|| LyapunovEvidence {
            condition: ConditionId::ChowNonexplosion,
            candidate: None,
            result: Outcome::from_result(chow_nonexplosion_condition(m)),
        }));
        jobs.push(Box::new(move || LyapunovEvidence {
            condition: ConditionId::ChowExplosion,
            candidate: None,
            result: Outcome::from_result(chow_explosion_condition(m, s.eps)),
        }));
        if m.dim == 1 {
            jobs.push(Box::new(|| LyapunovEvidence {
                condition: ConditionId::AlmostSureExplosion,
                candidate: Some("osgood_integral".into()),
                result: Outcome::from_result(check_as_explosion(m)),
            }));
        }
    }
    if singular_at_origin(m) {
        jobs.push(Box::new(|| LyapunovEvidence {
            condition: ConditionId::BoundaryAvoidance,
            candidate: Some("reciprocal".into()),
            result: Outcome::from_result(boundary_avoidance_check(m)),
        }));
    }
    jobs.par_iter().map(|j| j()).collect()
}

/// Simulation evidence for `m` under `cfg`.
pub fn mc_evidence(m: &SdeModel, cfg: &SimConfig, lyapunov: &[LyapunovEvidence]) -> McEvidence {
    let explosion = Outcome::from_result(estimate_explosion_prob(m, cfg));
    let others: Vec<f64> = SENSITIVITY_THRESHOLDS.iter().copied().filter(|b| *b != cfg.threshold).collect();
    let mut threshold_sensitivity = threshold_sensitivity(m, cfg, &others).unwrap_or_default();
    if let Some(e) = explosion.report() {
        threshold_sensitivity.push((cfg.threshold, e.clone()));
    }
    threshold_sensitivity.sort_by(|a, b| a.0.total_cmp(&b.0));
    let c = lyapunov
        .iter()
        .find(|e| e.condition == ConditionId::BoundaryAvoidance)
        .and_then(|e| e.result.report())
        .and_then(|r| r.c);
    let x0 = cfg.x0.first().copied().unwrap_or(1.0);
    let boundary = m
        .settings
        .mc
        .boundary_levels
        .iter()
        .filter_map(|&n| {
            boundary_hit_prob(m, cfg, 1.0 / n as f64).ok().map(|estimate| BoundaryEvidence {
                n,
                estimate,
                analytic_bound: c.map(|c| crate::lyapunov::boundary_bound(c, cfg.horizon, n, x0)),
            })
        })
        .collect();
    McEvidence { advisory: m.settings.mc.advisory, config: cfg.clone(), explosion, threshold_sensitivity, boundary }
}

/// Runs every applicable engine and combines the results.
pub fn classify(m: &SdeModel, cfg: Option<&SimConfig>) -> EvidenceReport {
    let mut sub = SubReports::default();
    if m.dim == 1 {
        let xi = m.settings.osgood.xi;
        if m.drift_nonpositive_witness(xi.max(1e-12), xi.max(1.0) * 1e6).is_none() {
            sub.osgood = Some(Outcome::from_result(osgood_test(m, xi)));
        }
        if m.jumps.is_none() {
            sub.feller = Some(Outcome::from_result(classify_feller(m, None)));
        }
    }
    sub.lyapunov = lyapunov_evidence(m);
    if m.settings.mc.enabled {
        let default_cfg = SimConfig::from_model(m);
        sub.mc = Some(mc_evidence(m, cfg.unwrap_or(&default_cfg), &sub.lyapunov));
    }
    combine(&m.name, &model_digest(m), sub)
}
