use serde::Serialize;

use super::{kronrod_gauss_sums, kronrod_nodes, QuadError};

/// Largest change of `ln g` allowed between adjacent points of a cumulative grid.
pub const LOG_STABILITY_BOUND: f64 = 700.0;

/// Panels whose node values span more than this many e-folds are split
/// regardless of their Kronrod error estimate.
const SPREAD_LIMIT: f64 = 40.0;
const MAX_PANELS: usize = 6000;

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogQuadResult {
    /// `ln int f`.
    pub log_value: f64,
    /// Estimated relative error of `int f`.
    pub rel_error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct LogPanel {
    a: f64,
    b: f64,
    log_value: f64,
    log_error: f64,
}

fn gk15_log(log_f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<LogPanel, QuadError> {
    let nodes = kronrod_nodes(a, b);
    let mut lv = [0.0; 15];
    for (slot, &y) in lv.iter_mut().zip(nodes.iter()) {
        let v = log_f(y);
        if v.is_nan() || v == f64::INFINITY {
            return Err(QuadError::NonFinite { at: y });
        }
        *slot = v;
    }
    let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(LogPanel { a, b, log_value: f64::NEG_INFINITY, log_error: f64::NEG_INFINITY });
    }
    let min = lv.iter().copied().fold(f64::INFINITY, f64::min);
    let mut scaled = [0.0; 15];
    for (s, l) in scaled.iter_mut().zip(lv.iter()) {
        *s = (l - max).exp();
    }
    let (k, g) = kronrod_gauss_sums(&scaled);
    let h = 0.5 * (b - a);
    let log_value = max + (k * h).ln();
    let mut rel = ((k - g) / k).abs();
    if max - min > SPREAD_LIMIT {
        rel = rel.max(1.0);
    }
    Ok(LogPanel { a, b, log_value, log_error: log_value + rel.ln() })
}

/// `ln int_a^b f` for a positive integrand given through `log_f = ln f`.
///
/// `log_f` may return `-inf` where `f` vanishes. Panels are refined until
/// the summed error estimate is below `tol` relative to the total.
pub fn log_integrate(
    log_f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<LogQuadResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::InvalidRange { a, b });
    }
    if a == b {
        return Ok(LogQuadResult { log_value: f64::NEG_INFINITY, rel_error: 0.0, evaluations: 0 });
    }
    let log_f = &log_f as &dyn Fn(f64) -> f64;
    let mut panels = vec![gk15_log(log_f, a, b)?];
    let mut evaluations = 15;
    let log_tol = tol.ln();
    loop {
        let total = log_sum_exp(panels.iter().map(|p| p.log_value));
        let err = log_sum_exp(panels.iter().map(|p| p.log_error));
        if total == f64::NEG_INFINITY && evaluations > 15 * 64 {
            return Ok(LogQuadResult { log_value: total, rel_error: 0.0, evaluations });
        }
        if err <= total + log_tol {
            let rel_error = if total == f64::NEG_INFINITY { 0.0 } else { (err - total).exp() };
            return Ok(LogQuadResult { log_value: total, rel_error, evaluations });
        }
        if panels.len() >= MAX_PANELS {
            return Err(QuadError::QuadFailure {
                a,
                b,
                estimate: total,
                error: (err - total).exp(),
            });
        }
        // An all-zero panel has error -inf; with an all-zero total, split the widest instead.
        let idx = if total == f64::NEG_INFINITY {
            (0..panels.len())
                .max_by(|&i, &j| (panels[i].b - panels[i].a).total_cmp(&(panels[j].b - panels[j].a)))
                .expect("non-empty")
        } else {
            (0..panels.len())
                .max_by(|&i, &j| panels[i].log_error.total_cmp(&panels[j].log_error))
                .expect("non-empty")
        };
        let worst = panels.swap_remove(idx);
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(QuadError::QuadFailure {
                a,
                b,
                estimate: total,
                error: (err - total).exp(),
            });
        }
        panels.push(gk15_log(log_f, worst.a, mid)?);
        panels.push(gk15_log(log_f, mid, worst.b)?);
        evaluations += 30;
    }
}

/// Logarithms of the running integrals `|int_c^{grid[i]} g|` for a positive
/// integrand given as `log_g`. The grid must start at `c` and be monotone;
/// the first entry is `-inf`.
pub fn cumulative_log_integral(
    log_g: impl Fn(f64) -> f64,
    c: f64,
    grid: &[f64],
    tol: f64,
) -> Result<Vec<f64>, QuadError> {
    let Some(&first) = grid.first() else {
        return Ok(Vec::new());
    };
    if first != c {
        return Err(QuadError::InvalidRange { a: c, b: first });
    }
    let increasing = grid.windows(2).all(|w| w[1] > w[0]);
    let decreasing = grid.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(QuadError::InvalidRange { a: c, b: *grid.last().unwrap() });
    }
    let at_nodes: Vec<f64> = grid.iter().map(|&y| log_g(y)).collect();
    let mut out = Vec::with_capacity(grid.len());
    out.push(f64::NEG_INFINITY);
    for i in 1..grid.len() {
        let (l0, l1) = (at_nodes[i - 1], at_nodes[i]);
        if l0.is_finite() && l1.is_finite() && (l1 - l0).abs() > LOG_STABILITY_BOUND {
            return Err(QuadError::GridTooCoarse { at: grid[i], jump: (l1 - l0).abs() });
        }
        let (a, b) = if increasing { (grid[i - 1], grid[i]) } else { (grid[i], grid[i - 1]) };
        let panel = log_integrate(&log_g, a, b, tol)?;
        out.push(log_add_exp(out[i - 1], panel.log_value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrand_on_small_grid() {
        let out = cumulative_log_integral(|_| 0.0, 1.0, &[1.0, 2.0, 3.0], 1e-12).unwrap();
        assert_eq!(out[0], f64::NEG_INFINITY);
        assert!(out[1].abs() < 1e-14);
        assert!((out[2] - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn huge_integrand_does_not_overflow() {
        // int_0^10 exp(2y^3/3) dy overflows in linear space.
        let r = log_integrate(|y| 2.0 * y.powi(3) / 3.0, 0.0, 10.0, 1e-10).unwrap();
        // Oracle: fine midpoint sum accumulated in log space.
        let n = 2_000_000;
        let h = 10.0 / n as f64;
        let mut acc = f64::NEG_INFINITY;
        for i in 0..n {
            let y = (i as f64 + 0.5) * h;
            acc = log_add_exp(acc, 2.0 * y.powi(3) / 3.0 + h.ln());
        }
        assert!((r.log_value - acc).abs() < 1e-6, "{} vs {}", r.log_value, acc);
        assert!(r.log_value > 660.0);
    }

    #[test]
    fn sharp_peak_near_endpoint() {
        // int_0^1000 exp(-(1000 - y) * 1e6) = 1e-6 (to double precision).
        let r = log_integrate(|y| -(1000.0 - y) * 1e6, 0.0, 1000.0, 1e-10).unwrap();
        assert!((r.log_value - (1e-6f64).ln()).abs() < 1e-8, "{}", r.log_value);
    }

    #[test]
    fn decreasing_grid_and_coarse_grid() {
        let out = cumulative_log_integral(|_| 0.0, 0.0, &[0.0, -1.0, -3.0], 1e-12).unwrap();
        assert!((out[2] - 3f64.ln()).abs() < 1e-14);
        let err = cumulative_log_integral(|y| y * y * y, 0.0, &[0.0, 10.0], 1e-8).unwrap_err();
        assert!(matches!(err, QuadError::GridTooCoarse { .. }));
    }

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
