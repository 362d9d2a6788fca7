//! Plain-text renderings of the reports.

use std::fmt::Write as _;

use blowuplab::feller::FellerReport;
use blowuplab::mc::McEstimate;
use blowuplab::quad::IntegralStatus;
use blowuplab::report::{EvidenceReport, Finding, LyapunovEvidence, McEvidence, Outcome};

fn status(s: &IntegralStatus) -> String {
    match s {
        IntegralStatus::Convergent { value, .. } => format!("finite ({value:.6e})"),
        IntegralStatus::Divergent { .. } => "infinite".into(),
        IntegralStatus::Inconclusive => "inconclusive".into(),
    }
}

fn finding(f: Finding) -> &'static str {
    match f {
        Finding::NonExplosion => "no explosion",
        Finding::PositiveProbabilityExplosion => "explosion with positive probability",
        Finding::AlmostSureExplosion => "almost sure explosion",
    }
}

fn list(s: &mut String, title: &str, items: &[String]) {
    if items.is_empty() {
        let _ = writeln!(s, "{title}: none");
    } else {
        let _ = writeln!(s, "{title}:");
        for i in items {
            let _ = writeln!(s, "  - {i}");
        }
    }
}

fn estimate(e: &McEstimate) -> String {
    format!("{:.4} (95% CI [{:.4}, {:.4}], {} of {} paths)", e.p_hat, e.ci_low, e.ci_high, e.successes, e.n_paths)
}

pub fn evidence(r: &EvidenceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model:   {} ({})", r.model_name, &r.model_digest[..12]);
    let _ = writeln!(s, "verdict: {}", r.label);
    let findings: Vec<String> = r.findings.iter().map(|f| format!("{} ({})", finding(f.finding), f.source)).collect();
    list(&mut s, "findings", &findings);
    list(&mut s, "contradictions", &r.contradictions);
    list(&mut s, "caveats", &r.caveats);
    s
}

pub fn feller(r: &FellerReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "verdict: {}", r.verdict);
    let _ = writeln!(s, "anchor:  {}", r.anchor);
    for (side, e) in [("left", &r.v_at_left), ("right", &r.v_at_right)] {
        let _ = writeln!(s, "v at {side} endpoint {}: {}", e.endpoint, status(&e.v.status));
    }
    list(&mut s, "caveats", &r.caveats);
    s
}

pub fn lyapunov(ev: &[LyapunovEvidence]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:22} {:18} {:14} constant", "condition", "candidate", "holds");
    for e in ev {
        let cond = serde_json::to_value(e.condition).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let cand = e.candidate.clone().unwrap_or_else(|| "-".into());
        match &e.result {
            Outcome::Done { report } => {
                let c = report.c.map_or("-".to_string(), |c| format!("{c:.6e}"));
                let _ = writeln!(s, "{cond:22} {cand:18} {:14} {c}", report.holds.to_string());
            }
            Outcome::NotApplicable { reason } => {
                let _ = writeln!(s, "{cond:22} {cand:18} {:14} {reason}", "not applicable");
            }
        }
    }
    s
}

pub fn simulation(ev: &McEvidence) -> String {
    let mut s = String::new();
    let c = &ev.config;
    let _ = writeln!(s, "paths {}, horizon {}, seed {}, threshold {:e}", c.n_paths, c.horizon, c.seed, c.threshold);
    match &ev.explosion {
        Outcome::Done { report } => {
            let _ = writeln!(s, "explosion probability: {}", estimate(report));
            let _ = writeln!(s, "mean steps {:.1}, mean jumps {:.3}", report.mean_steps, report.mean_jumps);
            list(&mut s, "caveats", &report.caveats);
        }
        Outcome::NotApplicable { reason } => {
            let _ = writeln!(s, "explosion probability: not available ({reason})");
        }
    }
    for (b, e) in &ev.threshold_sensitivity {
        let _ = writeln!(s, "  threshold {b:e}: {}", estimate(e));
    }
    for b in &ev.boundary {
        let _ = writeln!(s, "P(min X <= 1/{}): {}", b.n, estimate(&b.estimate));
    }
    if ev.advisory {
        let _ = writeln!(s, "simulation is advisory for this model");
    }
    s
}
