//! Radial shell sampling of the exterior region and trend classification of
//! per-shell extremes.

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{directions, log_spaced};
use crate::model::StateDomain;

/// Log-spaced radii times a fixed set of unit directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellGrid {
    pub radii: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl ShellGrid {
    pub fn new(dim: usize, lo: f64, hi: f64, per_decade: usize, count: usize) -> ShellGrid {
        ShellGrid { radii: log_spaced(lo, hi, per_decade), directions: directions(dim, count) }
    }

    /// Restricts a one-dimensional grid to one half-line (`sign` is +1 or -1).
    pub fn half_line(mut self, sign: f64) -> ShellGrid {
        self.directions.retain(|d| d[0] * sign > 0.0);
        self
    }
}

/// Extremes of a sampled quantity on one shell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellStat {
    pub radius: f64,
    pub sup: f64,
    pub inf: f64,
    pub argsup: Vec<f64>,
    pub arginf: Vec<f64>,
    /// Points outside the domain or where the quantity is undefined.
    pub skipped: usize,
}

/// Evaluates `f` at every in-domain point of every shell. Shells without a
/// single defined value are dropped. The result is ordered by radius and
/// does not depend on scheduling.
pub fn shell_stats(grid: &ShellGrid, domain: &StateDomain, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Vec<ShellStat> {
    grid.radii
        .par_iter()
        .map(|&r| {
            let mut stat = ShellStat {
                radius: r,
                sup: f64::NEG_INFINITY,
                inf: f64::INFINITY,
                argsup: Vec::new(),
                arginf: Vec::new(),
                skipped: 0,
            };
            for u in &grid.directions {
                let x: Vec<f64> = u.iter().map(|c| c * r).collect();
                if !domain.contains(&x) {
                    stat.skipped += 1;
                    continue;
                }
                let v = f(&x);
                if v.is_nan() {
                    stat.skipped += 1;
                    continue;
                }
                if v > stat.sup {
                    stat.sup = v;
                    stat.argsup = x.clone();
                }
                if v < stat.inf {
                    stat.inf = v;
                    stat.arginf = x;
                }
            }
            stat
        })
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|s| !s.argsup.is_empty())
        .collect()
}

/// Asymptotic behaviour of a sequence sampled on log-spaced radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "trend", rename_all = "snake_case")]
pub enum Trend {
    /// No increment exceeds the tolerance.
    NonIncreasing,
    /// Increasing with geometrically shrinking increments; `limit` is the
    /// geometric extrapolation.
    Saturating { limit: f64 },
    /// Increments do not shrink.
    Growing,
    Undetermined,
}

/// Margin tolerance `1e-9 (1 + |scale|)`.
pub fn margin_tol(scale: f64) -> f64 {
    1e-9 * (1.0 + scale.abs())
}

/// Size below which a per-shell increment counts as flat, relative to the
/// two values it connects. Larger
/// than the margin tolerance so tabulation and rounding noise in the
/// sampled values cannot fake a trend.
pub const TREND_TOL: f64 = 1e-7;

/// Classifies the upper trend of `v`. Use on negated values for lower bounds.
pub fn upper_trend(v: &[f64]) -> Trend {
    if v.len() < 3 || v.iter().any(|x| !x.is_finite()) {
        return Trend::Undetermined;
    }
    let flat: Vec<bool> = v.windows(2).map(|w| w[1] - w[0] <= TREND_TOL * (1.0 + w[0].abs().max(w[1].abs()))).collect();
    let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    if flat.iter().all(|&f| f) {
        return Trend::NonIncreasing;
    }
    if flat.iter().any(|&f| f) {
        return Trend::Undetermined;
    }
    let q: Vec<f64> = d.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = &q[q.len().saturating_sub(3)..];
    let q_max = tail.iter().copied().fold(0.0, f64::max);
    if q_max <= 0.9 {
        let last = d[d.len() - 1];
        return Trend::Saturating { limit: v[v.len() - 1] + last * q_max / (1.0 - q_max) };
    }
    if q.iter().all(|&x| x >= 0.99) {
        return Trend::Growing;
    }
    Trend::Undetermined
}

/// Classifies the lower trend of `v`, mirroring [`upper_trend`].
pub fn lower_trend(v: &[f64]) -> Trend {
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    match upper_trend(&neg) {
        Trend::Saturating { limit } => Trend::Saturating { limit: -limit },
        t => t,
    }
}

/// Index of the first shell of the outer two decades.
pub fn outer_window_start(stats: &[ShellStat]) -> usize {
    let Some(last) = stats.last() else {
        return 0;
    };
    let cut = last.radius / 100.0;
    stats.iter().position(|s| s.radius >= cut * (1.0 - 1e-12)).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_shells(f: impl Fn(f64) -> f64) -> Vec<f64> {
        log_spaced(1e4, 1e6, 10).into_iter().map(f).collect()
    }

    #[test]
    fn trend_cases() {
        assert_eq!(upper_trend(&on_shells(|_| 3.0)), Trend::NonIncreasing);
        assert_eq!(upper_trend(&on_shells(|r| 1.0 / r)), Trend::NonIncreasing);
        assert_eq!(upper_trend(&on_shells(|r| r.ln())), Trend::Growing);
        assert_eq!(upper_trend(&on_shells(|r| 2.0 * r + 1.0 / (r * r))), Trend::Growing);
        match upper_trend(&on_shells(|r| 1.0 - 1.0 / r)) {
            Trend::Saturating { limit } => assert!((limit - 1.0).abs() < 1e-6),
            t => panic!("{t:?}"),
        }
        assert_eq!(upper_trend(&on_shells(|r| 2.0 - 1.0 / r.ln().sqrt())), Trend::Undetermined);
        match lower_trend(&on_shells(|r| 1.0 + 1.0 / r)) {
            Trend::Saturating { limit } => assert!((limit - 1.0).abs() < 1e-6),
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn stats_respect_domain_and_order() {
        let g = ShellGrid::new(1, 1.0, 100.0, 5, 2);
        let s = shell_stats(&g, &StateDomain::PositiveHalfLine, &|x| x[0]);
        assert_eq!(s.len(), g.radii.len());
        assert!(s.iter().all(|st| st.skipped == 1 && st.sup == st.radius));
        let s = shell_stats(&g, &StateDomain::FullLine, &|x| x[0]);
        assert!(s.iter().all(|st| st.inf == -st.radius && st.arginf == vec![-st.radius]));
    }
}
