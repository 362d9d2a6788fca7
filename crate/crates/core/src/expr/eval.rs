use serde::Serialize;
use thiserror::Error;

use super::{BinOp, Expr, ParamMap, UnaryOp};

/// A state vector together with parameter bindings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalPoint {
    pub state: Vec<f64>,
    pub params: ParamMap,
}

impl EvalPoint {
    pub fn new(state: Vec<f64>) -> Self {
        EvalPoint { state, params: ParamMap::new() }
    }

    pub fn with_params(state: Vec<f64>, params: ParamMap) -> Self {
        EvalPoint { state, params }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum EvalErrorKind {
    LogNonPositive,
    DivisionByZero,
    SqrtNegative,
    /// Negative base with a non-integer exponent.
    PowDomain,
    /// Overflow to an infinite value.
    NonFinite,
    UnboundParameter(String),
    VariableOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot evaluate `{subexpr}`: {kind:?}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    /// Rendering of the offending subexpression.
    pub subexpr: String,
}

fn norm(state: &[f64]) -> f64 {
    state.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn integer_exponent(e: f64) -> Option<i32> {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        Some(e as i32)
    } else {
        None
    }
}

fn pow_raw(base: f64, e: f64) -> f64 {
    if base.is_nan() || e.is_nan() {
        return f64::NAN;
    }
    match integer_exponent(e) {
        Some(n) => {
            if base == 0.0 && n < 0 {
                f64::NAN
            } else {
                base.powi(n)
            }
        }
        None => {
            if base < 0.0 || (base == 0.0 && e < 0.0) {
                f64::NAN
            } else {
                base.powf(e)
            }
        }
    }
}

impl Expr {
    /// Fast evaluation: domain errors and overflow come back as NaN or an
    /// infinity instead of an error value. Used in inner loops.
    pub fn eval_unchecked(&self, state: &[f64], params: &ParamMap) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => state.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Param(name) => params.get(name).copied().unwrap_or(f64::NAN),
            Expr::Norm => norm(state),
            Expr::Unary(op, a) => {
                let v = a.eval_unchecked(state, params);
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Ln => {
                        if v > 0.0 {
                            v.ln()
                        } else {
                            f64::NAN
                        }
                    }
                    UnaryOp::Sqrt => {
                        if v >= 0.0 {
                            v.sqrt()
                        } else {
                            f64::NAN
                        }
                    }
                    UnaryOp::Abs => v.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let l = a.eval_unchecked(state, params);
                let r = b.eval_unchecked(state, params);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            f64::NAN
                        } else {
                            l / r
                        }
                    }
                }
            }
            Expr::Pow(a, b) => pow_raw(a.eval_unchecked(state, params), b.eval_unchecked(state, params)),
        }
    }

    /// Value together with a first-order bound on its accumulated rounding
    /// error. Inputs are taken as exact.
    pub fn eval_with_error(&self, state: &[f64], params: &ParamMap) -> (f64, f64) {
        const U: f64 = f64::EPSILON;
        match self {
            Expr::Const(c) => (*c, 0.0),
            Expr::Var(i) => (state.get(*i).copied().unwrap_or(f64::NAN), 0.0),
            Expr::Param(name) => (params.get(name).copied().unwrap_or(f64::NAN), 0.0),
            Expr::Norm => {
                let n = norm(state);
                (n, (state.len() as f64 + 1.0) * U * n)
            }
            Expr::Unary(op, a) => {
                let (v, e) = a.eval_with_error(state, params);
                match op {
                    UnaryOp::Neg => (-v, e),
                    UnaryOp::Abs => (v.abs(), e),
                    UnaryOp::Exp => {
                        let y = v.exp();
                        (y, y * e + U * y)
                    }
                    UnaryOp::Ln => {
                        let y = if v > 0.0 { v.ln() } else { f64::NAN };
                        (y, e / v.abs() + U * y.abs())
                    }
                    UnaryOp::Sqrt => {
                        let y = if v >= 0.0 { v.sqrt() } else { f64::NAN };
                        (y, e / (2.0 * y) + U * y)
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let (l, el) = a.eval_with_error(state, params);
                let (r, er) = b.eval_with_error(state, params);
                let y = match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div if r == 0.0 => f64::NAN,
                    BinOp::Div => l / r,
                };
                let prop = match op {
                    BinOp::Add | BinOp::Sub => el + er,
                    BinOp::Mul => l.abs() * er + r.abs() * el,
                    BinOp::Div => (el + y.abs() * er) / r.abs(),
                };
                (y, prop + U * y.abs())
            }
            Expr::Pow(a, b) => {
                let (base, eb) = a.eval_with_error(state, params);
                let (p, ep) = b.eval_with_error(state, params);
                let y = pow_raw(base, p);
                let dbase = if base == 0.0 { 0.0 } else { (p * y / base).abs() * eb };
                let dexp = if base > 0.0 { (y * base.ln()).abs() * ep } else { 0.0 };
                (y, dbase + dexp + (p.abs() + 1.0) * U * y.abs())
            }
        }
    }

    /// Evaluates at a point, reporting the first offending subexpression when
    /// the value is undefined or not finite.
    pub fn eval(&self, point: &EvalPoint) -> Result<f64, EvalError> {
        self.eval_at(&point.state, &point.params)
    }

    pub fn eval_at(&self, state: &[f64], params: &ParamMap) -> Result<f64, EvalError> {
        let v = self.eval_unchecked(state, params);
        if v.is_finite() {
            return Ok(v);
        }
        match self.eval_checked(state, params) {
            Err(e) => Err(e),
            Ok(_) => Err(EvalError { kind: EvalErrorKind::NonFinite, subexpr: self.render() }),
        }
    }

    fn eval_checked(&self, state: &[f64], params: &ParamMap) -> Result<f64, EvalError> {
        let fail = |kind: EvalErrorKind| Err(EvalError { kind, subexpr: self.render() });
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => match state.get(*i) {
                Some(v) => *v,
                None => return fail(EvalErrorKind::VariableOutOfRange(*i)),
            },
            Expr::Param(name) => match params.get(name) {
                Some(v) => *v,
                None => return fail(EvalErrorKind::UnboundParameter(name.clone())),
            },
            Expr::Norm => norm(state),
            Expr::Unary(op, a) => {
                let v = a.eval_checked(state, params)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Ln if v <= 0.0 => return fail(EvalErrorKind::LogNonPositive),
                    UnaryOp::Ln => v.ln(),
                    UnaryOp::Sqrt if v < 0.0 => return fail(EvalErrorKind::SqrtNegative),
                    UnaryOp::Sqrt => v.sqrt(),
                    UnaryOp::Abs => v.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let l = a.eval_checked(state, params)?;
                let r = b.eval_checked(state, params)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div if r == 0.0 => return fail(EvalErrorKind::DivisionByZero),
                    BinOp::Div => l / r,
                }
            }
            Expr::Pow(a, b) => {
                let base = a.eval_checked(state, params)?;
                let e = b.eval_checked(state, params)?;
                if base == 0.0 && e < 0.0 {
                    return fail(EvalErrorKind::DivisionByZero);
                }
                if base < 0.0 && integer_exponent(e).is_none() {
                    return fail(EvalErrorKind::PowDomain);
                }
                pow_raw(base, e)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            fail(EvalErrorKind::NonFinite)
        }
    }
}
