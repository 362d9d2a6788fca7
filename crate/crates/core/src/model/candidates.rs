use serde::Serialize;

use super::{SdeModel, StateDomain};
use crate::expr::{Expr, ParamMap};
use crate::grid::log_spaced;
use crate::quad::{cumulative_integral, integrate, integrate_improper, QuadError, TailConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CandidateFamily {
    /// `|x|^2`.
    SquaredNorm,
    /// `ln(|x|^2)`.
    LogSquaredNorm,
    /// `k - 1/ln(|x|)^eps`, bounded above by `k`.
    BoundedLog { k: f64, eps: f64 },
    /// `1/x` on the positive half-line.
    Reciprocal,
    /// `int_1^x dy / b(y)` for a positive scalar drift.
    OsgoodIntegral,
    User,
}

/// `V(x) = int_1^x dy / b(y)` on `[1, upper]`, tabulated with monotone cubic
/// Hermite interpolation. Slopes at the nodes are the exact `1 / b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabulatedIntegral {
    pub drift: Expr,
    /// `1 / b`.
    pub derivative: Expr,
    /// `-b' / b^2`.
    pub second_derivative: Expr,
    #[serde(skip)]
    nodes: Vec<f64>,
    #[serde(skip)]
    values: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
    /// `V(inf)` when the integral converges.
    pub limit: Option<f64>,
    #[serde(skip)]
    params: ParamMap,
}

const TABLE_TOL: f64 = 1e-9;
const MAX_NODES: usize = 20_000;

impl TabulatedIntegral {
    /// Tabulates on `[1, upper]`. Fails if the drift is not positive or the
    /// quadrature breaks down.
    pub fn build(drift: &Expr, params: &ParamMap, upper: f64) -> Result<TabulatedIntegral, QuadError> {
        let inv = |y: f64| 1.0 / drift.eval_unchecked(&[y], params);
        let derivative = (Expr::constant(1.0) / drift.clone()).simplify();
        let db = drift.differentiate(0).map_err(|_| QuadError::NonFinite { at: 1.0 })?;
        let second_derivative = (-(db / Expr::powf(drift.clone(), 2.0))).simplify();

        let mut nodes = log_spaced(1.0, upper, 20);
        for &y in &nodes {
            let v = inv(y);
            if !(v.is_finite() && v > 0.0) {
                return Err(QuadError::NonFinite { at: y });
            }
        }
        loop {
            let values = cumulative_integral(&inv, 1.0, &nodes, 1e-12)?;
            let slopes: Vec<f64> = nodes.iter().map(|&y| inv(y)).collect();
            let table = TabulatedIntegral {
                drift: drift.clone(),
                derivative: derivative.clone(),
                second_derivative: second_derivative.clone(),
                nodes: nodes.clone(),
                values,
                slopes,
                limit: None,
                params: params.clone(),
            };
            let mut refined = Vec::with_capacity(nodes.len() * 2);
            for i in 0..nodes.len() - 1 {
                refined.push(nodes[i]);
                let mid = 0.5 * (nodes[i] + nodes[i + 1]);
                let exact = table.values[i] + integrate(&inv, nodes[i], mid, 1e-12)?;
                if (table.interpolate(i, mid) - exact).abs() > TABLE_TOL * (1.0 + exact.abs()) {
                    refined.push(mid);
                }
            }
            refined.push(*nodes.last().expect("grid is non-empty"));
            if refined.len() == nodes.len() || refined.len() > MAX_NODES {
                let limit = integrate_improper(inv, 1.0, &TailConfig::default()).value();
                return Ok(TabulatedIntegral { limit, ..table });
            }
            nodes = refined;
        }
    }

    pub fn upper(&self) -> f64 {
        *self.nodes.last().expect("grid is non-empty")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn interpolate(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let h = x1 - x0;
        let secant = (v1 - v0) / h;
        let (mut m0, mut m1) = (self.slopes[i], self.slopes[i + 1]);
        if secant <= 0.0 {
            m0 = 0.0;
            m1 = 0.0;
        } else {
            // Fritsch-Carlson limiter keeps the cubic monotone.
            let (a, b) = (m0 / secant, m1 / secant);
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m0 = t * a * secant;
                m1 = t * b * secant;
            }
        }
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * v1
            + (t3 - t2) * h * m1
    }

    /// `V(x)`; points off the table are integrated directly from the nearest end.
    pub fn value(&self, x: f64) -> f64 {
        let inv = |y: f64| 1.0 / self.drift.eval_unchecked(&[y], &self.params);
        let (lo, hi) = (self.nodes[0], self.upper());
        if x < lo {
            return integrate(inv, lo, x, 1e-12).unwrap_or(f64::NAN);
        }
        if x > hi {
            let last = *self.values.last().expect("grid is non-empty");
            return last + integrate(inv, hi, x, 1e-12).unwrap_or(f64::NAN);
        }
        let i = match self.nodes.binary_search_by(|n| n.total_cmp(&x)) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        self.interpolate(i, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateFunction {
    Symbolic { v: Expr },
    Tabulated(TabulatedIntegral),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovCandidate {
    pub name: String,
    pub family: CandidateFamily,
    pub function: CandidateFunction,
    /// States where `V` or its derivatives blow up.
    pub singular_points: Vec<Vec<f64>>,
    /// `V` is only meaningful for `|x|` above this radius.
    pub min_radius: f64,
}

impl LyapunovCandidate {
    pub fn symbolic(name: impl Into<String>, family: CandidateFamily, v: Expr) -> Self {
        LyapunovCandidate {
            name: name.into(),
            family,
            function: CandidateFunction::Symbolic { v },
            singular_points: Vec::new(),
            min_radius: 0.0,
        }
    }

    pub fn user(name: impl Into<String>, v: Expr) -> Self {
        LyapunovCandidate::symbolic(name, CandidateFamily::User, v)
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.function {
            CandidateFunction::Symbolic { v } => Some(v),
            CandidateFunction::Tabulated(_) => None,
        }
    }

    pub fn value(&self, x: &[f64], params: &ParamMap) -> f64 {
        match &self.function {
            CandidateFunction::Symbolic { v } => v.eval_unchecked(x, params),
            CandidateFunction::Tabulated(t) => t.value(x[0]),
        }
    }

    pub fn render(&self) -> String {
        match &self.function {
            CandidateFunction::Symbolic { v } => v.render(),
            CandidateFunction::Tabulated(t) => format!("int_1^x 1/({}) dy", t.drift.render()),
        }
    }
}

fn parse(src: &str) -> Expr {
    Expr::parse(src).expect("built-in candidate parses")
}

/// The built-in candidate families applicable to `m`.
pub fn builtin_candidates(m: &SdeModel) -> Vec<LyapunovCandidate> {
    let one_d = m.dim == 1;
    let s = &m.settings.lyapunov;
    let origin = vec![vec![0.0; m.dim]];
    let mut out = vec![LyapunovCandidate::symbolic(
        "squared_norm",
        CandidateFamily::SquaredNorm,
        parse(if one_d { "x^2" } else { "norm(x)^2" }),
    )];
    out.push(LyapunovCandidate {
        singular_points: origin.clone(),
        ..LyapunovCandidate::symbolic(
            "log_squared_norm",
            CandidateFamily::LogSquaredNorm,
            parse(if one_d { "ln(x^2)" } else { "ln(norm(x)^2)" }),
        )
    });
    let bounded = Expr::constant(s.k)
        - Expr::constant(1.0) / Expr::powf(Expr::ln(Expr::Norm), s.eps);
    let mut unit = origin.clone();
    if one_d {
        unit.extend([vec![-1.0], vec![1.0]]);
    }
    out.push(LyapunovCandidate {
        singular_points: unit,
        min_radius: 1.0,
        ..LyapunovCandidate::symbolic("bounded_log", CandidateFamily::BoundedLog { k: s.k, eps: s.eps }, bounded)
    });
    if m.domain == StateDomain::PositiveHalfLine {
        out.push(LyapunovCandidate {
            singular_points: origin,
            ..LyapunovCandidate::symbolic("reciprocal", CandidateFamily::Reciprocal, parse("1/x"))
        });
    }
    if one_d && m.drift_nonpositive_witness(1.0, s.regions.r_outer).is_none() {
        if let Ok(t) = TabulatedIntegral::build(&m.drift[0], &m.params, s.regions.r_outer) {
            out.push(LyapunovCandidate {
                name: "osgood_integral".into(),
                family: CandidateFamily::OsgoodIntegral,
                function: CandidateFunction::Tabulated(t),
                singular_points: Vec::new(),
                min_radius: 1.0,
            });
        }
    }
    for u in &s.candidates {
        out.push(LyapunovCandidate::user(u.name.clone(), u.v.clone()));
    }
    out
}
