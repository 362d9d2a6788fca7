use std::path::Path;

use toml::{Table, Value};

use super::{
    AnalysisSettings, ConfigError, FellerSettings, JumpApply, JumpSizeDist, JumpSpec, LyapunovSettings,
    McSettings, OsgoodSettings, RegionSpec, SdeModel, StateDomain, UserCandidate,
};
use crate::expr::{Expr, ParamMap, RESERVED_IDENTIFIERS};

/// Reads and validates a model file. The format is described in `docs/config-schema.md`.
pub fn load_model(path: impl AsRef<Path>) -> Result<SdeModel, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
    SdeModel::from_toml_str(&text)
}

impl SdeModel {
    pub fn from_toml_str(text: &str) -> Result<SdeModel, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("<syntax>", e.message().to_string()))?;
        Section::new("", &table).model()
    }
}

struct Section<'a> {
    prefix: String,
    table: &'a Table,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

impl<'a> Section<'a> {
    fn new(prefix: &str, table: &'a Table) -> Self {
        Section { prefix: prefix.to_string(), table }
    }

    fn key(&self, k: &str) -> String {
        if self.prefix.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.prefix)
        }
    }

    fn only(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for k in self.table.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(ConfigError::new(self.key(k), format!("unknown key; expected one of {allowed:?}")));
            }
        }
        Ok(())
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.get(k)
    }

    fn wrong(&self, k: &str, want: &str, v: &Value) -> ConfigError {
        ConfigError::new(self.key(k), format!("expected {want}, found {}", type_name(v)))
    }

    fn f64_opt(&self, k: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| self.wrong(k, "a number", v)),
        }
    }

    fn f64_or(&self, k: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(k)?.unwrap_or(default))
    }

    fn f64_req(&self, k: &str) -> Result<f64, ConfigError> {
        self.f64_opt(k)?.ok_or_else(|| ConfigError::new(self.key(k), "missing"))
    }

    fn u64_opt(&self, k: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(self.wrong(k, "a non-negative integer", v)),
        }
    }

    fn bool_opt(&self, k: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(self.wrong(k, "a boolean", v)),
        }
    }

    fn str_opt(&self, k: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(self.wrong(k, "a string", v)),
        }
    }

    fn sub(&self, k: &str) -> Result<Option<Section<'a>>, ConfigError> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section::new(&self.key(k), t))),
            Some(v) => Err(self.wrong(k, "a table", v)),
        }
    }

    fn model(&self) -> Result<SdeModel, ConfigError> {
        self.only(&[
            "name", "description", "dim", "drift", "diffusion", "params", "domain", "jumps", "osgood", "feller",
            "lyapunov", "mc",
        ])?;
        let dim = self.u64_opt("dim")?.ok_or_else(|| ConfigError::new("dim", "missing"))? as usize;
        if dim == 0 || dim > 9 {
            return Err(ConfigError::new("dim", format!("must be between 1 and 9, got {dim}")));
        }
        let params = self.params()?;
        let names: Vec<&str> = params.keys().map(|s| s.as_str()).collect();

        let drift_src = self.string_list("drift")?;
        let diffusion_src = self.diffusion_rows()?;
        let drift: Vec<&str> = drift_src.iter().map(|s| s.as_str()).collect();
        let diffusion: Vec<Vec<&str>> =
            diffusion_src.iter().map(|row| row.iter().map(|s| s.as_str()).collect()).collect();
        let mut model = SdeModel::new(dim, &drift, &diffusion, params.clone())?;
        model.name = self.str_opt("name")?.unwrap_or("").to_string();
        model.description = self.str_opt("description")?.unwrap_or("").to_string();
        if let Some(d) = self.sub("domain")? {
            model.domain = d.domain()?;
        }
        if let Some(j) = self.sub("jumps")? {
            model.jumps = Some(j.jumps()?);
        }
        model.settings = AnalysisSettings {
            osgood: match self.sub("osgood")? {
                Some(s) => {
                    s.only(&["xi"])?;
                    OsgoodSettings { xi: s.f64_or("xi", 1.0)? }
                }
                None => OsgoodSettings::default(),
            },
            feller: match self.sub("feller")? {
                Some(s) => {
                    s.only(&["anchor"])?;
                    FellerSettings { anchor: s.f64_opt("anchor")? }
                }
                None => FellerSettings::default(),
            },
            lyapunov: match self.sub("lyapunov")? {
                Some(s) => s.lyapunov(&names, &params, dim)?,
                None => LyapunovSettings::default(),
            },
            mc: match self.sub("mc")? {
                Some(s) => s.mc(dim)?,
                None => McSettings::default(),
            },
        };
        model.validate()?;
        if let Some(x0) = &model.settings.mc.x0 {
            if !model.domain.contains(x0) {
                return Err(ConfigError::new("mc.x0", format!("{x0:?} is outside the state domain")));
            }
        }
        Ok(model)
    }

    fn params(&self) -> Result<ParamMap, ConfigError> {
        let mut out = ParamMap::new();
        if let Some(p) = self.sub("params")? {
            for (k, v) in p.table {
                if RESERVED_IDENTIFIERS.contains(&k.as_str())
                    || !k.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    return Err(ConfigError::new(p.key(k), "not a usable parameter name"));
                }
                let x = as_f64(v).ok_or_else(|| p.wrong(k, "a number", v))?;
                if !x.is_finite() {
                    return Err(ConfigError::new(p.key(k), "must be finite"));
                }
                out.insert(k.clone(), x);
            }
        }
        Ok(out)
    }

    fn string_list(&self, k: &str) -> Result<Vec<String>, ConfigError> {
        match self.get(k) {
            None => Err(ConfigError::new(self.key(k), "missing")),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(ConfigError::new(
                        format!("{}[{i}]", self.key(k)),
                        format!("expected a string, found {}", type_name(other)),
                    )),
                })
                .collect(),
            Some(v) => Err(self.wrong(k, "an array of strings", v)),
        }
    }

    fn diffusion_rows(&self) -> Result<Vec<Vec<String>>, ConfigError> {
        let Some(v) = self.get("diffusion") else {
            return Err(ConfigError::new("diffusion", "missing"));
        };
        let Value::Array(rows) = v else {
            return Err(self.wrong("diffusion", "an array of rows", v));
        };
        rows.iter()
            .enumerate()
            .map(|(i, row)| match row {
                Value::String(s) => Ok(vec![s.clone()]),
                Value::Array(entries) => entries
                    .iter()
                    .enumerate()
                    .map(|(j, e)| match e {
                        Value::String(s) => Ok(s.clone()),
                        other => Err(ConfigError::new(
                            format!("diffusion[{i}][{j}]"),
                            format!("expected a string, found {}", type_name(other)),
                        )),
                    })
                    .collect(),
                other => Err(ConfigError::new(
                    format!("diffusion[{i}]"),
                    format!("expected a string or an array of strings, found {}", type_name(other)),
                )),
            })
            .collect()
    }

    fn domain(&self) -> Result<StateDomain, ConfigError> {
        self.only(&["kind", "l", "r"])?;
        let kind = self.str_opt("kind")?.ok_or_else(|| ConfigError::new(self.key("kind"), "missing"))?;
        Ok(match kind {
            "full_line" => StateDomain::FullLine,
            "full_space" => StateDomain::FullSpace,
            "positive_half_line" => StateDomain::PositiveHalfLine,
            "interval" => StateDomain::Interval { l: self.f64_req("l")?, r: self.f64_req("r")? },
            other => {
                return Err(ConfigError::new(
                    self.key("kind"),
                    format!("unknown domain `{other}`; expected full_line, interval, positive_half_line or full_space"),
                ))
            }
        })
    }

    fn jumps(&self) -> Result<JumpSpec, ConfigError> {
        self.only(&["lambda", "dist", "dist_params", "apply"])?;
        let lambda = self.f64_req("lambda")?;
        let dist_name = self.str_opt("dist")?.ok_or_else(|| ConfigError::new(self.key("dist"), "missing"))?;
        let params = self.sub("dist_params")?.ok_or_else(|| ConfigError::new(self.key("dist_params"), "missing"))?;
        let dist = match dist_name {
            "lognormal" => {
                params.only(&["mu", "sigma"])?;
                JumpSizeDist::Lognormal { mu: params.f64_req("mu")?, sigma: params.f64_req("sigma")? }
            }
            "normal" => {
                params.only(&["mean", "sd"])?;
                JumpSizeDist::Normal { mean: params.f64_req("mean")?, sd: params.f64_req("sd")? }
            }
            "point_mass" => {
                params.only(&["y"])?;
                JumpSizeDist::PointMass { y: params.f64_req("y")? }
            }
            other => {
                return Err(ConfigError::new(
                    self.key("dist"),
                    format!("unknown distribution `{other}`; expected lognormal, normal or point_mass"),
                ))
            }
        };
        let apply = match self.str_opt("apply")?.unwrap_or("additive") {
            "additive" => JumpApply::Additive,
            "merton" => JumpApply::Merton,
            other => {
                return Err(ConfigError::new(
                    self.key("apply"),
                    format!("unknown mode `{other}`; expected additive or merton"),
                ))
            }
        };
        let spec = JumpSpec { lambda, dist, apply };
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ConfigError::new(self.key("lambda"), format!("must be positive, got {lambda}")));
        }
        let bad = match dist {
            JumpSizeDist::Lognormal { sigma, .. } if !(sigma > 0.0) => Some("sigma"),
            JumpSizeDist::Normal { sd, .. } if !(sd > 0.0) => Some("sd"),
            _ => None,
        };
        if let Some(k) = bad {
            return Err(ConfigError::new(params.key(k), "must be positive"));
        }
        Ok(spec)
    }

    fn lyapunov(&self, names: &[&str], params: &ParamMap, dim: usize) -> Result<LyapunovSettings, ConfigError> {
        self.only(&["candidates", "k", "eps", "r_inner", "r_gamma", "r_outer", "include_interior", "directions", "n_max"])?;
        let d = LyapunovSettings::default();
        let mut candidates = Vec::new();
        if let Some(v) = self.get("candidates") {
            let Value::Array(items) = v else {
                return Err(self.wrong("candidates", "an array", v));
            };
            for (i, item) in items.iter().enumerate() {
                let key = format!("{}[{i}]", self.key("candidates"));
                let (name, src) = match item {
                    Value::String(s) => (s.clone(), s.clone()),
                    Value::Table(t) => {
                        let s = Section::new(&key, t);
                        s.only(&["name", "v"])?;
                        let src = s.str_opt("v")?.ok_or_else(|| ConfigError::new(s.key("v"), "missing"))?;
                        (s.str_opt("name")?.unwrap_or(src).to_string(), src.to_string())
                    }
                    other => {
                        return Err(ConfigError::new(
                            key,
                            format!("expected a string or a table, found {}", type_name(other)),
                        ))
                    }
                };
                let v = Expr::parse_with_params(&src, names)
                    .map_err(|e| ConfigError::parse(key.clone(), &src, &e))?
                    .bind(params);
                if v.max_var_index().is_some_and(|j| j >= dim) {
                    return Err(ConfigError::new(key, "references a coordinate beyond the model dimension"));
                }
                candidates.push(UserCandidate { name, v });
            }
        }
        let eps = self.f64_or("eps", d.eps)?;
        if !(eps > 0.0) {
            return Err(ConfigError::new(self.key("eps"), "must be positive"));
        }
        let regions = RegionSpec::new(
            self.f64_or("r_inner", d.regions.r_inner)?,
            self.f64_or("r_gamma", d.regions.r_gamma)?,
            self.f64_or("r_outer", d.regions.r_outer)?,
        )
        .map_err(|e| ConfigError::new(self.key("r_inner"), e.message))?;
        Ok(LyapunovSettings {
            candidates,
            k: self.f64_or("k", d.k)?,
            eps,
            regions,
            include_interior: self.bool_opt("include_interior")?,
            directions: self.u64_opt("directions")?.map_or(d.directions, |v| v as usize).max(4),
            n_max: self.u64_opt("n_max")?.unwrap_or(d.n_max).max(1),
        })
    }

    fn mc(&self, dim: usize) -> Result<McSettings, ConfigError> {
        self.only(&[
            "enabled", "x0", "horizon", "dt0", "eta", "threshold", "paths", "seed", "advisory", "boundary_levels",
        ])?;
        let d = McSettings::default();
        let x0 = match self.get("x0") {
            None => None,
            Some(v) => {
                let xs: Option<Vec<f64>> = match v {
                    Value::Array(items) => items.iter().map(as_f64).collect(),
                    other => as_f64(other).map(|x| vec![x]),
                };
                let xs = xs.ok_or_else(|| self.wrong("x0", "a number or an array of numbers", v))?;
                if xs.len() != dim {
                    return Err(ConfigError::new(self.key("x0"), format!("expected {dim} entries, got {}", xs.len())));
                }
                Some(xs)
            }
        };
        let s = McSettings {
            enabled: self.bool_opt("enabled")?.unwrap_or(d.enabled),
            x0,
            horizon: self.f64_or("horizon", d.horizon)?,
            dt0: self.f64_or("dt0", d.dt0)?,
            eta: self.f64_or("eta", d.eta)?,
            threshold: self.f64_or("threshold", d.threshold)?,
            paths: self.u64_opt("paths")?.map_or(d.paths, |v| v as usize),
            seed: self.u64_opt("seed")?.unwrap_or(d.seed),
            advisory: self.bool_opt("advisory")?.unwrap_or(d.advisory),
            boundary_levels: match self.get("boundary_levels") {
                None => Vec::new(),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| match v {
                        Value::Integer(i) if *i >= 1 => Ok(*i as u64),
                        other => Err(self.wrong("boundary_levels", "positive integers", other)),
                    })
                    .collect::<Result<_, _>>()?,
                Some(v) => return Err(self.wrong("boundary_levels", "an array of positive integers", v)),
            },
        };
        for (k, v) in [("horizon", s.horizon), ("dt0", s.dt0), ("threshold", s.threshold)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(self.key(k), "must be positive"));
            }
        }
        if !(s.eta > 0.0 && s.eta <= 1.0) {
            return Err(ConfigError::new(self.key("eta"), "must lie in (0, 1]"));
        }
        if s.paths == 0 {
            return Err(ConfigError::new(self.key("paths"), "must be at least 1"));
        }
        if let Some(x0) = &s.x0 {
            let n = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n < s.threshold) {
                return Err(ConfigError::new(self.key("threshold"), "must exceed the norm of x0"));
            }
        }
        Ok(s)
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MERTON: &str = r#"
name = "merton"
dim = 1
drift = ["mu*x"]
diffusion = ["s*x"]
params = { mu = 0.05, s = 0.2 }
domain = { kind = "positive_half_line" }
[jumps]
lambda = 1.0
dist = "lognormal"
dist_params = { mu = 0.0, sigma = 0.3 }
apply = "merton"
[mc]
x0 = 1.0
horizon = 1
"#;

    #[test]
    fn loads_merton_model() {
        let m = SdeModel::from_toml_str(MERTON).unwrap();
        assert_eq!(m.drift[0].render(), "0.05*x");
        assert_eq!(m.diffusion[0][0].render(), "0.2*x");
        let j = m.jumps.unwrap();
        assert_eq!(j.apply, JumpApply::Merton);
        assert_eq!(j.dist, JumpSizeDist::Lognormal { mu: 0.0, sigma: 0.3 });
        assert_eq!(m.settings.mc.x0, Some(vec![1.0]));
        assert_eq!(m.domain, StateDomain::PositiveHalfLine);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("dim = 1\ndrift = [\"x\"]", "diffusion"),
            ("dim = 2\ndrift = [\"x1\", \"x2\"]\ndiffusion = [[\"1\"], [\"1\"], [\"1\"]]", "diffusion"),
            ("dim = 1\ndrift = [\"x^2*dt\"]\ndiffusion = [\"1\"]", "drift[0]"),
            ("dim = 1\ndrift = [\"x\"]\ndiffusion = [\"1\"]\n[jumps]\nlambda = -1\ndist = \"normal\"\ndist_params = {mean = 0, sd = 1}", "jumps.lambda"),
            ("dim = 1\ndrift = [\"x\"]\ndiffusion = [\"1\"]\n[jumps]\nlambda = 1\ndist = \"normal\"\ndist_params = {mean = 0, sd = 0}", "jumps.dist_params.sd"),
            ("dim = 1\ndrift = [\"x\"]\ndiffusion = [\"1\"]\nbogus = 3", "bogus"),
            ("dim = 1\ndrift = [\"x\"]\ndiffusion = [\"1\"]\n[mc]\neta = 2.0", "mc.eta"),
            ("dim = 1\ndrift = [\"x\"]\ndiffusion = [\"1\"]\ndomain = { kind = \"positive_half_line\" }\n[mc]\nx0 = -1.0", "mc.x0"),
            ("dim = \"one\"", "dim"),
            ("dim = [", "<syntax>"),
        ];
        for (src, key) in cases {
            let err = SdeModel::from_toml_str(src).unwrap_err();
            assert_eq!(err.key, key, "{src}: {err}");
        }
    }

    #[test]
    fn loading_twice_gives_equal_models() {
        assert_eq!(SdeModel::from_toml_str(MERTON).unwrap(), SdeModel::from_toml_str(MERTON).unwrap());
    }
}
