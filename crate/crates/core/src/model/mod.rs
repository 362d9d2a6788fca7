//! SDE problem instances: drift, diffusion, jumps, state domain and the
//! analysis settings shared by every engine.
//!
//! A model describes `dX = b(X) dt + sigma(X) dW + J(X, Y) dN` where `N` is a
//! Poisson process of constant intensity. Models are immutable once built.

mod candidates;
mod config;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ParamMap, ParseError};

pub use candidates::{
    builtin_candidates, CandidateFamily, CandidateFunction, LyapunovCandidate, TabulatedIntegral,
};
pub use config::load_model;

/// Configuration problem, naming the offending key.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { key: key.into(), message: message.into() }
    }

    fn parse(key: impl Into<String>, src: &str, err: &ParseError) -> Self {
        ConfigError::new(key, format!("cannot parse `{src}`: {err}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateDomain {
    FullLine,
    Interval { l: f64, r: f64 },
    PositiveHalfLine,
    FullSpace,
}

impl StateDomain {
    /// Endpoints `(l, r)` of a one-dimensional domain.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            StateDomain::FullLine | StateDomain::FullSpace => (f64::NEG_INFINITY, f64::INFINITY),
            StateDomain::Interval { l, r } => (l, r),
            StateDomain::PositiveHalfLine => (0.0, f64::INFINITY),
        }
    }

    /// Membership of the open domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            StateDomain::FullLine | StateDomain::FullSpace => x.iter().all(|v| v.is_finite()),
            _ => {
                let (l, r) = self.bounds();
                x.len() == 1 && x[0] > l && x[0] < r
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum JumpSizeDist {
    /// `ln Y ~ N(mu, sigma^2)`.
    Lognormal { mu: f64, sigma: f64 },
    Normal { mean: f64, sd: f64 },
    PointMass { y: f64 },
}

impl JumpSizeDist {
    /// Raw moment `E[Y^k]`.
    pub fn moment(&self, k: u32) -> f64 {
        match *self {
            JumpSizeDist::Lognormal { mu, sigma } => {
                let k = k as f64;
                (k * mu + 0.5 * k * k * sigma * sigma).exp()
            }
            JumpSizeDist::Normal { mean: m, sd: s } => {
                let (m2, s2) = (m * m, s * s);
                match k {
                    0 => 1.0,
                    1 => m,
                    2 => m2 + s2,
                    3 => m * m2 + 3.0 * m * s2,
                    4 => m2 * m2 + 6.0 * m2 * s2 + 3.0 * s2 * s2,
                    _ => {
                        // E[Y^k] = sum_j C(k, 2j) m^(k-2j) s^(2j) (2j-1)!!
                        let mut total = 0.0;
                        let mut binom = 1.0;
                        let mut double_fact = 1.0;
                        for j in 0..=k / 2 {
                            if j > 0 {
                                let (a, b) = ((k - 2 * j + 2) as f64, (k - 2 * j + 1) as f64);
                                binom *= a * b / ((2 * j - 1) as f64 * (2 * j) as f64);
                                double_fact *= (2 * j - 1) as f64;
                            }
                            total += binom * m.powi((k - 2 * j) as i32) * s.powi(2 * j as i32) * double_fact;
                        }
                        total
                    }
                }
            }
            JumpSizeDist::PointMass { y } => y.powi(k as i32),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpSizeDist::Lognormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("validated at load").sample(rng)
            }
            JumpSizeDist::Normal { mean, sd } => Normal::new(mean, sd).expect("validated at load").sample(rng),
            JumpSizeDist::PointMass { y } => y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpApply {
    /// `x <- x + Y` in every coordinate.
    Additive,
    /// `x <- x * Y` in every coordinate, the `X (Y - 1) dN` increment.
    Merton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpSpec {
    pub lambda: f64,
    #[serde(flatten)]
    pub dist: JumpSizeDist,
    pub apply: JumpApply,
}

impl JumpSpec {
    pub fn apply_to(&self, x: &mut [f64], y: f64) {
        for v in x.iter_mut() {
            match self.apply {
                JumpApply::Additive => *v += y,
                JumpApply::Merton => *v *= y,
            }
        }
    }

    /// The post-jump coordinate `x + J(x, Y)` as an expression in `x` with `Y = y`.
    pub fn jumped_coordinate(&self, x: Expr, y: Expr) -> Expr {
        match self.apply {
            JumpApply::Additive => x + y,
            JumpApply::Merton => y * x,
        }
    }
}

/// Nested regions `D` (radius `r_inner`), `Gamma` (radius `r_gamma`) and the
/// outer truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSpec {
    pub r_inner: f64,
    pub r_gamma: f64,
    pub r_outer: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec { r_inner: 3.0, r_gamma: 5.0, r_outer: 1e6 }
    }
}

impl RegionSpec {
    pub fn new(r_inner: f64, r_gamma: f64, r_outer: f64) -> Result<Self, ConfigError> {
        if !(r_inner > 0.0 && r_inner < r_gamma && r_gamma < r_outer && r_outer.is_finite()) {
            return Err(ConfigError::new(
                "lyapunov.regions",
                format!("need 0 < r_inner < r_gamma < r_outer, got {r_inner}, {r_gamma}, {r_outer}"),
            ));
        }
        Ok(RegionSpec { r_inner, r_gamma, r_outer })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserCandidate {
    pub name: String,
    pub v: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSettings {
    pub candidates: Vec<UserCandidate>,
    /// Offset `K` of the bounded candidate `K - 1/ln(|x|)^eps`.
    pub k: f64,
    pub eps: f64,
    pub regions: RegionSpec,
    /// Check the generator inequality inside `D` as well; defaults to on for jump models.
    pub include_interior: Option<bool>,
    pub directions: usize,
    /// Largest `n` for boundary levels `1/n`.
    pub n_max: u64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        LyapunovSettings {
            candidates: Vec::new(),
            k: 2.0,
            eps: 0.5,
            regions: RegionSpec::default(),
            include_interior: None,
            directions: 64,
            n_max: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct FellerSettings {
    pub anchor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsgoodSettings {
    pub xi: f64,
}

impl Default for OsgoodSettings {
    fn default() -> Self {
        OsgoodSettings { xi: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSettings {
    pub enabled: bool,
    pub x0: Option<Vec<f64>>,
    pub horizon: f64,
    pub dt0: f64,
    pub eta: f64,
    pub threshold: f64,
    pub paths: usize,
    pub seed: u64,
    /// Simulation results are informational only for this model.
    pub advisory: bool,
    /// Boundary levels `1/n` for first-passage estimates.
    pub boundary_levels: Vec<u64>,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            enabled: true,
            x0: None,
            horizon: 1.0,
            dt0: 0.01,
            eta: 0.25,
            threshold: 1e8,
            paths: 1000,
            seed: 1,
            advisory: false,
            boundary_levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct AnalysisSettings {
    pub osgood: OsgoodSettings,
    pub feller: FellerSettings,
    pub lyapunov: LyapunovSettings,
    pub mc: McSettings,
}

/// A validated SDE. Parameters are already substituted into every expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdeModel {
    pub name: String,
    pub description: String,
    pub dim: usize,
    pub drift: Vec<Expr>,
    /// `dim` rows of `noise_dim` entries.
    pub diffusion: Vec<Vec<Expr>>,
    pub jumps: Option<JumpSpec>,
    pub domain: StateDomain,
    pub params: ParamMap,
    pub settings: AnalysisSettings,
}

impl SdeModel {
    /// Builds a model from expression strings. Parameters are substituted.
    pub fn new(
        dim: usize,
        drift: &[&str],
        diffusion: &[Vec<&str>],
        params: ParamMap,
    ) -> Result<SdeModel, ConfigError> {
        let names: Vec<&str> = params.keys().map(|s| s.as_str()).collect();
        let parse = |key: String, src: &str| {
            Expr::parse_with_params(src, &names)
                .map(|e| e.bind(&params))
                .map_err(|e| ConfigError::parse(key, src, &e))
        };
        let drift = drift
            .iter()
            .enumerate()
            .map(|(i, s)| parse(format!("drift[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let diffusion = diffusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, s)| parse(format!("diffusion[{i}][{j}]"), s))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = SdeModel {
            name: String::new(),
            description: String::new(),
            dim,
            drift,
            diffusion,
            jumps: None,
            domain: if dim == 1 { StateDomain::FullLine } else { StateDomain::FullSpace },
            params,
            settings: AnalysisSettings::default(),
        };
        model.validate()?;
        Ok(model)
    }

    /// One-dimensional model `dX = b dt + sigma dW` on the real line.
    pub fn scalar(drift: &str, diffusion: &str) -> Result<SdeModel, ConfigError> {
        SdeModel::new(1, &[drift], &[vec![diffusion]], ParamMap::new())
    }

    /// Driftless model with `sigma = entry * I_dim`.
    pub fn diagonal_noise(dim: usize, entry: &str) -> Result<SdeModel, ConfigError> {
        let drift = vec!["0"; dim];
        let rows: Vec<Vec<&str>> =
            (0..dim).map(|i| (0..dim).map(|j| if i == j { entry } else { "0" }).collect()).collect();
        SdeModel::new(dim, &drift, &rows, ParamMap::new())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_domain(mut self, domain: StateDomain) -> Result<Self, ConfigError> {
        self.domain = domain;
        self.validate()?;
        Ok(self)
    }

    pub fn with_jumps(mut self, jumps: JumpSpec) -> Result<Self, ConfigError> {
        self.jumps = Some(jumps);
        self.validate()?;
        Ok(self)
    }

    pub fn with_settings(mut self, settings: AnalysisSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim == 0 || self.dim > 9 {
            return Err(ConfigError::new("dim", format!("must be between 1 and 9, got {}", self.dim)));
        }
        if self.drift.len() != self.dim {
            return Err(ConfigError::new(
                "drift",
                format!("expected {} entries, got {}", self.dim, self.drift.len()),
            ));
        }
        if self.diffusion.len() != self.dim {
            return Err(ConfigError::new(
                "diffusion",
                format!("expected {} rows, got {}", self.dim, self.diffusion.len()),
            ));
        }
        let m = self.diffusion[0].len();
        if m == 0 {
            return Err(ConfigError::new("diffusion[0]", "rows must not be empty"));
        }
        for (i, row) in self.diffusion.iter().enumerate() {
            if row.len() != m {
                return Err(ConfigError::new(
                    format!("diffusion[{i}]"),
                    format!("expected {m} entries like the first row, got {}", row.len()),
                ));
            }
        }
        let all = self
            .drift
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("drift[{i}]"), e))
            .chain(self.diffusion.iter().enumerate().flat_map(|(i, row)| {
                row.iter().enumerate().map(move |(j, e)| (format!("diffusion[{i}][{j}]"), e))
            }));
        for (key, e) in all {
            if let Some(i) = e.max_var_index() {
                if i >= self.dim {
                    return Err(ConfigError::new(
                        key,
                        format!("references x{} but the model has dimension {}", i + 1, self.dim),
                    ));
                }
            }
            if let Some(p) = e.param_names().first() {
                return Err(ConfigError::new(key, format!("parameter `{p}` has no value")));
            }
        }
        match self.domain {
            StateDomain::FullSpace | StateDomain::FullLine => {}
            StateDomain::Interval { l, r } if !(l < r) => {
                return Err(ConfigError::new("domain", format!("interval needs l < r, got ({l}, {r})")));
            }
            _ if self.dim != 1 => {
                return Err(ConfigError::new("domain.kind", "interval and half-line domains need dim = 1"));
            }
            _ => {}
        }
        if let Some(j) = &self.jumps {
            if !(j.lambda > 0.0 && j.lambda.is_finite()) {
                return Err(ConfigError::new("jumps.lambda", format!("must be positive, got {}", j.lambda)));
            }
            let ok = match j.dist {
                JumpSizeDist::Lognormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
                JumpSizeDist::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
                JumpSizeDist::PointMass { y } => y.is_finite(),
            };
            if !ok {
                return Err(ConfigError::new("jumps.dist_params", format!("invalid parameters {:?}", j.dist)));
            }
        }
        Ok(())
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion[0].len()
    }

    pub fn drift_at(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval_unchecked(x, &self.params);
        }
    }

    /// Row-major `dim x noise_dim` diffusion matrix at `x`.
    pub fn diffusion_at(&self, x: &[f64], out: &mut [f64]) {
        let m = self.noise_dim();
        for (i, row) in self.diffusion.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[i * m + j] = e.eval_unchecked(x, &self.params);
            }
        }
    }

    /// `A = sigma sigma^T` at `x`, row-major `dim x dim`.
    pub fn covariance_at(&self, x: &[f64]) -> Vec<f64> {
        let (d, m) = (self.dim, self.noise_dim());
        let mut s = vec![0.0; d * m];
        self.diffusion_at(x, &mut s);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
        }
        a
    }

    /// Symbolic entries of `A = sigma sigma^T`.
    pub fn covariance_exprs(&self) -> Vec<Vec<Expr>> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut terms = self.diffusion[i].iter().zip(&self.diffusion[j]).map(|(a, b)| {
                            if i == j {
                                Expr::powf(a.clone(), 2.0)
                            } else {
                                a.clone() * b.clone()
                            }
                        });
                        let first = terms.next().expect("non-empty rows");
                        terms.fold(first, |acc, t| acc + t).simplify()
                    })
                    .collect()
            })
            .collect()
    }

    /// `sigma^2(x)` of a one-dimensional model (summed over noise columns).
    pub fn sigma_squared(&self) -> Expr {
        self.covariance_exprs()[0][0].clone()
    }

    pub fn is_one_dimensional(&self) -> bool {
        self.dim == 1
    }

    /// First sampled point of `[lo, hi]` where the scalar drift is not positive.
    pub fn drift_nonpositive_witness(&self, lo: f64, hi: f64) -> Option<f64> {
        let b = &self.drift[0];
        crate::grid::log_spaced(lo, hi, 50)
            .into_iter()
            .find(|&x| !(b.eval_unchecked(&[x], &self.params) > 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_moments() {
        let n = JumpSizeDist::Normal { mean: 0.5, sd: 2.0 };
        // Generic formula agrees with the explicit low-order cases.
        let explicit = [1.0, 0.5, 4.25, 0.125 + 3.0 * 0.5 * 4.0, 0.0625 + 6.0 * 0.25 * 4.0 + 3.0 * 16.0];
        for (k, e) in explicit.iter().enumerate() {
            assert!((n.moment(k as u32) - e).abs() < 1e-12);
        }
        // Sixth moment of N(0, 1) is 15.
        assert!((JumpSizeDist::Normal { mean: 0.0, sd: 1.0 }.moment(6) - 15.0).abs() < 1e-12);
        let ln = JumpSizeDist::Lognormal { mu: 0.0, sigma: 0.3 };
        assert!((ln.moment(2) - (0.18f64).exp()).abs() < 1e-15);
        assert_eq!(JumpSizeDist::PointMass { y: 2.0 }.moment(3), 8.0);
    }

    #[test]
    fn covariance_of_diagonal_noise() {
        let m = SdeModel::diagonal_noise(2, "norm(x)^3").unwrap();
        let a = m.covariance_at(&[1.0, 1.0]);
        assert!((a[0] - 8.0).abs() < 1e-12 && a[1] == 0.0 && a[2] == 0.0 && (a[3] - 8.0).abs() < 1e-12);
        assert_eq!(m.covariance_exprs()[0][1].render(), "0");
        assert_eq!(m.covariance_exprs()[0][0].render(), "(norm(x)^3)^2");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = SdeModel::new(2, &["0", "0"], &[vec!["1"], vec!["1"], vec!["1"]], ParamMap::new()).unwrap_err();
        assert_eq!(err.key, "diffusion");
        let err = SdeModel::scalar("x2", "1").unwrap_err();
        assert_eq!(err.key, "drift[0]");
    }

    #[test]
    fn domain_membership() {
        assert!(StateDomain::PositiveHalfLine.contains(&[0.1]));
        assert!(!StateDomain::PositiveHalfLine.contains(&[0.0]));
        assert!(StateDomain::Interval { l: -1.0, r: 2.0 }.contains(&[1.5]));
        assert!(StateDomain::FullSpace.contains(&[1.0, -3.0]));
    }
}
