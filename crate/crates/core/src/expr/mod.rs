//! Scalar expressions over the state vector.
//!
//! An [`Expr`] is an immutable tree describing a real function of the state
//! `x = (x1, ..., xd)` and of named model parameters. Drift and diffusion
//! coefficients, jump maps and Lyapunov candidates are all written in this
//! small language:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' exponent)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Exponents must be free of state variables (numbers, parameters, or
//! parenthesised constant expressions), which keeps differentiation total.

mod diff;
mod eval;
mod parse;
mod poly;
mod render;
mod simplify;

use std::collections::BTreeMap;
use std::fmt;

pub use diff::DiffError;
pub use eval::{EvalError, EvalErrorKind, EvalPoint};
pub use parse::{ParseError, ParseErrorKind};

/// Parameter bindings, ordered by name.
pub type ParamMap = BTreeMap<String, f64>;

/// Identifiers that cannot be used as parameter names.
pub const RESERVED_IDENTIFIERS: &[&str] = &[
    "x", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "norm", "exp", "ln", "sqrt", "abs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(UnaryOp::Exp),
            "ln" => Some(UnaryOp::Ln),
            "sqrt" => Some(UnaryOp::Sqrt),
            "abs" => Some(UnaryOp::Abs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Expression tree. `Var(i)` is the zero-based state coordinate `x_{i+1}`;
/// `Norm` is the Euclidean norm of the whole state vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Param(String),
    Norm,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Base raised to a state-free exponent.
    Pow(Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Parses an expression that may only reference state variables.
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        parse::Parser::new(src, &[]).parse()
    }

    /// Parses an expression that may also reference the given parameter names.
    pub fn parse_with_params<S: AsRef<str>>(src: &str, params: &[S]) -> Result<Expr, ParseError> {
        let names: Vec<&str> = params.iter().map(|s| s.as_ref()).collect();
        parse::Parser::new(src, &names).parse()
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Expr {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        Expr::Pow(Box::new(base), Box::new(exponent))
    }

    pub fn powf(base: Expr, exponent: f64) -> Expr {
        Expr::pow(base, Expr::Const(exponent))
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::unary(UnaryOp::Exp, arg)
    }

    pub fn ln(arg: Expr) -> Expr {
        Expr::unary(UnaryOp::Ln, arg)
    }

    pub fn sqrt(arg: Expr) -> Expr {
        Expr::unary(UnaryOp::Sqrt, arg)
    }

    pub fn abs(arg: Expr) -> Expr {
        Expr::unary(UnaryOp::Abs, arg)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    /// True when the tree references neither state variables nor the norm.
    pub fn is_state_free(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Param(_) => true,
            Expr::Var(_) | Expr::Norm => false,
            Expr::Unary(_, a) => a.is_state_free(),
            Expr::Binary(_, a, b) | Expr::Pow(a, b) => a.is_state_free() && b.is_state_free(),
        }
    }

    /// Largest state index referenced through `Var`, if any.
    pub fn max_var_index(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) | Expr::Param(_) | Expr::Norm => None,
            Expr::Unary(_, a) => a.max_var_index(),
            Expr::Binary(_, a, b) | Expr::Pow(a, b) => match (a.max_var_index(), b.max_var_index()) {
                (Some(i), Some(j)) => Some(i.max(j)),
                (i, j) => i.or(j),
            },
        }
    }

    pub fn uses_norm(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Norm))
    }

    /// Parameter names referenced anywhere in the tree.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Param(name) = e {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
        });
        out
    }

    /// Pre-order traversal over every subexpression, including `self`.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.visit(f),
            Expr::Binary(_, a, b) | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Unary(_, a) => a.any(pred),
            Expr::Binary(_, a, b) | Expr::Pow(a, b) => a.any(pred) || b.any(pred),
            _ => false,
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Replaces every bound parameter by its value. Unbound names are kept.
    pub fn bind(&self, params: &ParamMap) -> Expr {
        match self {
            Expr::Param(name) => match params.get(name) {
                Some(v) => Expr::Const(*v),
                None => self.clone(),
            },
            Expr::Const(_) | Expr::Var(_) | Expr::Norm => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.bind(params)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.bind(params), b.bind(params)),
            Expr::Pow(a, b) => Expr::pow(a.bind(params), b.bind(params)),
        }
    }

    /// Replaces state variable `index` by `replacement` everywhere.
    pub fn substitute_var(&self, index: usize, replacement: &Expr) -> Expr {
        match self {
            Expr::Var(i) if *i == index => replacement.clone(),
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::Norm => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute_var(index, replacement)),
            Expr::Binary(op, a, b) => Expr::binary(
                *op,
                a.substitute_var(index, replacement),
                b.substitute_var(index, replacement),
            ),
            Expr::Pow(a, b) => Expr::pow(a.substitute_var(index, replacement), (**b).clone()),
        }
    }

    /// Partial derivative with respect to state coordinate `var`, simplified.
    pub fn differentiate(&self, var: usize) -> Result<Expr, DiffError> {
        diff::derivative(self, var).map(|d| d.simplify())
    }

    /// Constant folding and 0/1 identities; never changes the value where the
    /// original is defined.
    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    /// Coefficients `c_k` such that the expression equals `sum c_k x^k` in a
    /// one-dimensional state, when it is a polynomial with constant
    /// coefficients (even powers of `norm(x)` count as polynomial).
    pub fn univariate_polynomial(&self) -> Option<Vec<f64>> {
        poly::univariate(self)
    }

    /// Renders the expression in the input grammar. `parse(render(e)) == e`.
    pub fn render(&self) -> String {
        render::render(self)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Mul, self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::binary(BinOp::Div, self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Self {
        Expr::Const(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_replaces_known_parameters_only() {
        let e = Expr::parse_with_params("a*x + b", &["a", "b"]).unwrap();
        let mut p = ParamMap::new();
        p.insert("a".into(), 2.0);
        let bound = e.bind(&p);
        assert_eq!(bound.param_names(), vec!["b".to_string()]);
        assert_eq!(bound.render(), "2*x+b");
    }

    #[test]
    fn max_var_index_and_state_freeness() {
        let e = Expr::parse("x1*x3 + norm(x)").unwrap();
        assert_eq!(e.max_var_index(), Some(2));
        assert!(e.uses_norm());
        assert!(!e.is_state_free());
        assert!(Expr::parse("2^3").unwrap().is_state_free());
    }

    #[test]
    fn substitute_var_keeps_exponent() {
        let e = Expr::parse("x^2").unwrap();
        let s = e.substitute_var(0, &Expr::parse("x+1").unwrap());
        assert_eq!(s.render(), "(x+1)^2");
    }
}
