use thiserror::Error;

use super::{BinOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    /// `abs` of a state-dependent argument; rewrite as `sqrt(u^2)` away from zero.
    #[error("`{subexpr}` is not symbolically differentiable")]
    NonDifferentiable { subexpr: String },
}

fn depends_on(e: &Expr, var: usize) -> bool {
    e.any(&|n| matches!(n, Expr::Var(i) if *i == var) || matches!(n, Expr::Norm))
}

pub(super) fn derivative(e: &Expr, var: usize) -> Result<Expr, DiffError> {
    if !depends_on(e, var) {
        return Ok(Expr::Const(0.0));
    }
    Ok(match e {
        Expr::Const(_) | Expr::Param(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Norm => Expr::Var(var) / Expr::Norm,
        Expr::Unary(op, a) => {
            let da = derivative(a, var)?;
            match op {
                UnaryOp::Neg => -da,
                UnaryOp::Exp => e.clone() * da,
                UnaryOp::Ln => da / (**a).clone(),
                UnaryOp::Sqrt => da / (Expr::Const(2.0) * e.clone()),
                UnaryOp::Abs => return Err(DiffError::NonDifferentiable { subexpr: e.render() }),
            }
        }
        Expr::Binary(op, a, b) => {
            let da = derivative(a, var)?;
            let db = derivative(b, var)?;
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => da + db,
                BinOp::Sub => da - db,
                BinOp::Mul => da * b + a * db,
                BinOp::Div => {
                    if db.is_zero() {
                        da / b
                    } else {
                        (da * b.clone() - a * db) / Expr::powf(b, 2.0)
                    }
                }
            }
        }
        Expr::Pow(base, exponent) => {
            let dbase = derivative(base, var)?;
            let reduced = match exponent.as_const() {
                Some(c) => Expr::Const(c - 1.0),
                None => Expr::binary(BinOp::Sub, (**exponent).clone(), Expr::Const(1.0)),
            };
            (**exponent).clone() * Expr::pow((**base).clone(), reduced) * dbase
        }
    })
}

#[cfg(test)]
mod tests {
    use crate::expr::{EvalPoint, Expr};

    fn d(src: &str, var: usize) -> Expr {
        Expr::parse(src).unwrap().differentiate(var).unwrap()
    }

    #[test]
    fn derivative_of_square_is_two_x() {
        assert_eq!(d("x^2", 0).render(), "2*x");
    }

    #[test]
    fn derivative_of_reciprocal_is_minus_inverse_square() {
        let dv = d("1/x", 0);
        for x in [0.3, 1.0, 2.5, -4.0] {
            let v = dv.eval(&EvalPoint::new(vec![x])).unwrap();
            assert!((v + x.powi(-2)).abs() < 1e-14 * x.powi(-2).abs());
        }
        // Second derivative 2 x^-3.
        let d2 = dv.differentiate(0).unwrap();
        let v = d2.eval(&EvalPoint::new(vec![2.0])).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_log_squared_norm() {
        let v = Expr::parse("ln(norm(x)^2)").unwrap();
        let x = [0.7, -1.3, 2.1];
        let n2: f64 = x.iter().map(|a| a * a).sum();
        for i in 0..3 {
            let g = v.differentiate(i).unwrap().eval(&EvalPoint::new(x.to_vec())).unwrap();
            let expected = 2.0 * x[i] / n2;
            assert!((g - expected).abs() < 1e-14, "{g} vs {expected}");
        }
    }

    #[test]
    fn abs_is_rejected_but_constant_abs_is_fine() {
        assert!(Expr::parse("abs(x)").unwrap().differentiate(0).is_err());
        assert_eq!(d("abs(x2)*x1", 0).render(), "abs(x2)");
        assert!(d("sqrt(x^2)", 0).eval(&EvalPoint::new(vec![-2.0])).unwrap() == -1.0);
    }

    #[test]
    fn parameter_exponent_power_rule() {
        let e = Expr::parse_with_params("x^p", &["p"]).unwrap();
        let de = e.differentiate(0).unwrap();
        let mut params = crate::expr::ParamMap::new();
        params.insert("p".into(), 2.5);
        let v = de.eval(&EvalPoint::with_params(vec![4.0], params)).unwrap();
        assert!((v - 2.5 * 4f64.powf(1.5)).abs() < 1e-12);
    }
}
