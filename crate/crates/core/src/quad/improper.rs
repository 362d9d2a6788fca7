use serde::Serialize;

use super::log::{log_add_exp, log_integrate};

/// Controls the truncation sequence used by [`integrate_improper`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailConfig {
    /// Slope margin around -1 for the log-log tail test.
    pub delta: f64,
    pub k_max: u32,
    /// Partial integrals beyond this value count as divergence.
    pub m_div: f64,
    /// Cauchy tolerance on successive tail-corrected truncations.
    pub tol: f64,
    /// Relative tolerance for each doubling panel.
    pub panel_tol: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig { delta: 0.1, k_max: 40, m_div: 1e12, tol: 1e-8, panel_tol: 1e-11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum IntegralStatus {
    Convergent { value: f64, log_value: f64 },
    /// Always towards `+inf` for the positive integrands handled here.
    Divergent { direction: i8 },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    pub upper: f64,
    pub log_partial: f64,
    pub tail_slope: Option<f64>,
    /// `ln` of the partial integral plus the fitted power-law tail, when the tail is integrable.
    pub log_corrected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct TailDiagnostics {
    pub truncations: Vec<Truncation>,
    pub tail_slope: Option<f64>,
    pub error_estimate: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralVerdict {
    #[serde(flatten)]
    pub status: IntegralStatus,
    pub diagnostics: TailDiagnostics,
}

impl IntegralVerdict {
    pub fn is_convergent(&self) -> bool {
        matches!(self.status, IntegralStatus::Convergent { .. })
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self.status, IntegralStatus::Divergent { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self.status, IntegralStatus::Inconclusive)
    }

    pub fn value(&self) -> Option<f64> {
        match self.status {
            IntegralStatus::Convergent { value, .. } => Some(value),
            _ => None,
        }
    }
}

/// Least-squares slope of `log_f` against `ln y` over `n` log-spaced points of `[lo, hi]`.
pub fn fit_log_log_slope(log_f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Option<f64> {
    if !(lo > 0.0 && hi > lo) || n < 3 {
        return None;
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| l0 + (l1 - l0) * i as f64 / (n - 1) as f64)
        .map(|u| (u, log_f(u.exp())))
        .filter(|(_, v)| v.is_finite())
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Decides whether `int_a^inf f` is finite for a positive `f`.
pub fn integrate_improper(f: impl Fn(f64) -> f64, a: f64, cfg: &TailConfig) -> IntegralVerdict {
    integrate_improper_log(
        |y| {
            let v = f(y);
            if v > 0.0 {
                v.ln()
            } else if v == 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::NAN
            }
        },
        a,
        cfg,
    )
}

/// Same as [`integrate_improper`] with the integrand given as `ln f`.
///
/// Truncation points are `R_k = a 2^k` (or `a + 2^k` when `a <= 0`). The
/// integral is declared
/// - Divergent when a partial integral exceeds `m_div`, when the fitted
///   log-log tail slope stays at or above `-1 + delta` for three doublings,
///   or when the slope is within `delta` of -1 and the integral over each
///   doubling stops shrinking for five doublings in a row;
/// - Convergent when the slope is below `-1 - delta` and three successive
///   tail-corrected truncations agree within `tol * (1 + I)`, or with value 0
///   when the integrand is exactly zero on every truncation;
/// - Inconclusive otherwise.
pub fn integrate_improper_log(log_f: impl Fn(f64) -> f64, a: f64, cfg: &TailConfig) -> IntegralVerdict {
    let mut diag = TailDiagnostics::default();
    let point = |k: u32| if a > 0.0 { a * 2f64.powi(k as i32) } else { a + 2f64.powi(k as i32) };
    let log_div = cfg.m_div.ln();
    let mut prev_upper = a;
    let mut log_partial = f64::NEG_INFINITY;
    let mut prev_piece: Option<f64> = None;
    let mut steep_run = 0;
    let mut flat_run = 0;
    let mut cauchy_run = 0;
    let mut prev_corrected: Option<f64> = None;
    let inconclusive = |mut diag: TailDiagnostics, reason: String| {
        diag.reason = reason;
        IntegralVerdict { status: IntegralStatus::Inconclusive, diagnostics: diag }
    };

    for k in 1..=cfg.k_max {
        let upper = point(k);
        let piece = match log_integrate(&log_f, prev_upper, upper, cfg.panel_tol) {
            Ok(p) => p.log_value,
            Err(e) => return inconclusive(diag, format!("quadrature failed on [{prev_upper}, {upper}]: {e}")),
        };
        log_partial = log_add_exp(log_partial, piece);
        let lo = (upper / 10.0).max(a);
        let slope = if lo > 0.0 && upper / lo >= 2.0 { fit_log_log_slope(&log_f, lo, upper, 9) } else { None };
        let mut record = Truncation { upper, log_partial, tail_slope: slope, log_corrected: None };
        diag.tail_slope = slope.or(diag.tail_slope);

        if log_partial > log_div {
            diag.truncations.push(record);
            diag.reason = format!("partial integral exceeds {:e} at R = {upper}", cfg.m_div);
            return IntegralVerdict { status: IntegralStatus::Divergent { direction: 1 }, diagnostics: diag };
        }
        if let Some(s) = slope {
            steep_run = if s >= -1.0 + cfg.delta { steep_run + 1 } else { 0 };
            let not_shrinking = prev_piece.is_some_and(|p| piece >= p + (-1e-6f64).ln_1p());
            flat_run = if s >= -1.0 - cfg.delta && not_shrinking { flat_run + 1 } else { 0 };
            if steep_run >= 3 || flat_run >= 5 {
                diag.truncations.push(record);
                diag.reason = if steep_run >= 3 {
                    format!("tail slope {s:.4} >= {} over three doublings", -1.0 + cfg.delta)
                } else {
                    format!("integral over each doubling stopped shrinking (tail slope {s:.4})")
                };
                return IntegralVerdict { status: IntegralStatus::Divergent { direction: 1 }, diagnostics: diag };
            }
            if s < -1.0 - cfg.delta {
                let log_tail = log_f(upper) + upper.ln() - (-(s + 1.0)).ln();
                let log_corrected = log_add_exp(log_partial, log_tail);
                record.log_corrected = Some(log_corrected);
                let corrected = log_corrected.exp();
                if let Some(prev) = prev_corrected {
                    let diff = (corrected - prev).abs();
                    diag.error_estimate = Some(diff);
                    cauchy_run = if diff <= cfg.tol * (1.0 + corrected) { cauchy_run + 1 } else { 0 };
                }
                prev_corrected = Some(corrected);
                if cauchy_run >= 2 && corrected.is_finite() {
                    diag.truncations.push(record);
                    diag.reason = format!("tail-corrected truncations agree; tail slope {s:.4}");
                    return IntegralVerdict {
                        status: IntegralStatus::Convergent { value: corrected, log_value: log_corrected },
                        diagnostics: diag,
                    };
                }
            } else {
                prev_corrected = None;
                cauchy_run = 0;
            }
        }
        diag.truncations.push(record);
        prev_piece = Some(piece);
        prev_upper = upper;
    }
    if log_partial == f64::NEG_INFINITY {
        diag.reason = "integrand vanishes on every truncation".into();
        return IntegralVerdict {
            status: IntegralStatus::Convergent { value: 0.0, log_value: f64::NEG_INFINITY },
            diagnostics: diag,
        };
    }
    let reason = format!("no decision after {} doublings", cfg.k_max);
    inconclusive(diag, reason)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_square_converges_to_one() {
        let v = integrate_improper(|y| y.powi(-2), 1.0, &TailConfig::default());
        let value = v.value().expect("convergent");
        assert!((value - 1.0).abs() < 1e-8, "{value}");
    }

    #[test]
    fn square_root_decay_diverges() {
        let v = integrate_improper(|y| y.powf(-0.5), 1.0, &TailConfig::default());
        assert!(v.is_divergent(), "{v:?}");
    }

    #[test]
    fn harmonic_tail_diverges() {
        let v = integrate_improper(|y| 1.0 / y, 1.0, &TailConfig::default());
        assert!(v.is_divergent(), "{v:?}");
    }

    #[test]
    fn slowly_convergent_tail_is_not_overclaimed() {
        // Convergent, but with a log-log slope within delta of -1 everywhere in reach.
        let v = integrate_improper(|y| 1.0 / (y * (1.0 + y.ln()).powi(2)), 1.0, &TailConfig::default());
        assert!(!v.is_divergent(), "{v:?}");
    }

    #[test]
    fn nonpositive_start_uses_shifted_points() {
        let v = integrate_improper(|y| (-y).exp(), 0.0, &TailConfig::default());
        // exp(-y) has an ever-steeper slope; the value is 1.
        let value = v.value().expect("convergent");
        assert!((value - 1.0).abs() < 1e-8, "{value}");
    }

    #[test]
    fn slope_fit_recovers_exponent() {
        let s = fit_log_log_slope(&|y: f64| -2.5 * y.ln() + 3.0, 10.0, 1000.0, 9).unwrap();
        assert!((s + 2.5).abs() < 1e-12);
    }
}
