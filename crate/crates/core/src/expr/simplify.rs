use super::{BinOp, Expr, UnaryOp};

fn fold_unary(op: UnaryOp, c: f64) -> Option<f64> {
    let v = match op {
        UnaryOp::Neg => -c,
        UnaryOp::Exp => c.exp(),
        UnaryOp::Ln if c > 0.0 => c.ln(),
        UnaryOp::Sqrt if c >= 0.0 => c.sqrt(),
        UnaryOp::Abs => c.abs(),
        _ => return None,
    };
    v.is_finite().then_some(v)
}

fn fold_binary(op: BinOp, a: f64, b: f64) -> Option<f64> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div if b != 0.0 => a / b,
        BinOp::Div => return None,
    };
    v.is_finite().then_some(v)
}

pub(super) fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::Norm => e.clone(),
        Expr::Unary(op, a) => unary(*op, simplify(a)),
        Expr::Binary(op, a, b) => binary(*op, simplify(a), simplify(b)),
        Expr::Pow(a, b) => power(simplify(a), simplify(b)),
    }
}

fn unary(op: UnaryOp, a: Expr) -> Expr {
    if let Some(v) = a.as_const().and_then(|c| fold_unary(op, c)) {
        return Expr::Const(v);
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = a {
            return *inner;
        }
    }
    Expr::unary(op, a)
}

fn strip_neg(e: Expr) -> Result<Expr, Expr> {
    match e {
        Expr::Unary(UnaryOp::Neg, inner) => Ok(*inner),
        other => Err(other),
    }
}

fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Some(v) = fold_binary(op, x, y) {
            return Expr::Const(v);
        }
    }
    match op {
        BinOp::Add => {
            if a.is_zero() {
                return b;
            }
            if b.is_zero() {
                return a;
            }
            match strip_neg(b) {
                Ok(nb) => binary(BinOp::Sub, a, nb),
                Err(b) => match strip_neg(a) {
                    Ok(na) => binary(BinOp::Sub, b, na),
                    Err(a) => Expr::binary(op, a, b),
                },
            }
        }
        BinOp::Sub => {
            if b.is_zero() {
                return a;
            }
            if a.is_zero() {
                return unary(UnaryOp::Neg, b);
            }
            if a == b {
                return Expr::Const(0.0);
            }
            match strip_neg(b) {
                Ok(nb) => binary(BinOp::Add, a, nb),
                Err(b) => Expr::binary(op, a, b),
            }
        }
        BinOp::Mul => {
            if a.is_zero() || b.is_zero() {
                return Expr::Const(0.0);
            }
            if a.is_one() {
                return b;
            }
            if b.is_one() {
                return a;
            }
            // Constants go to the left.
            if b.as_const().is_some() && a.as_const().is_none() {
                return binary(BinOp::Mul, b, a);
            }
            if let Some(c) = a.as_const() {
                if c == -1.0 {
                    return unary(UnaryOp::Neg, b);
                }
                if let Expr::Binary(BinOp::Mul, ref inner_a, ref inner_b) = b {
                    if let Some(k) = inner_a.as_const() {
                        if let Some(v) = fold_binary(BinOp::Mul, c, k) {
                            return binary(BinOp::Mul, Expr::Const(v), (**inner_b).clone());
                        }
                    }
                }
            }
            match (strip_neg(a), strip_neg(b)) {
                (Ok(na), Ok(nb)) => binary(BinOp::Mul, na, nb),
                (Ok(na), Err(b)) => unary(UnaryOp::Neg, binary(BinOp::Mul, na, b)),
                (Err(a), Ok(nb)) => unary(UnaryOp::Neg, binary(BinOp::Mul, a, nb)),
                (Err(a), Err(b)) => Expr::binary(op, a, b),
            }
        }
        BinOp::Div => {
            if a.is_zero() && !b.is_zero() {
                return Expr::Const(0.0);
            }
            if b.is_one() {
                return a;
            }
            if b.as_const() == Some(-1.0) {
                return unary(UnaryOp::Neg, a);
            }
            match (strip_neg(a), strip_neg(b)) {
                (Ok(na), Ok(nb)) => binary(BinOp::Div, na, nb),
                (Ok(na), Err(b)) => unary(UnaryOp::Neg, binary(BinOp::Div, na, b)),
                (Err(a), Ok(nb)) => unary(UnaryOp::Neg, binary(BinOp::Div, a, nb)),
                (Err(a), Err(b)) => Expr::binary(op, a, b),
            }
        }
    }
}

fn power(base: Expr, exponent: Expr) -> Expr {
    if let Some(e) = exponent.as_const() {
        if e == 1.0 {
            return base;
        }
        if e == 0.0 {
            return Expr::Const(1.0);
        }
        if let Some(b) = base.as_const() {
            let v = Expr::pow(Expr::Const(b), Expr::Const(e)).eval_unchecked(&[], &Default::default());
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
    }
    if base.is_one() {
        return Expr::Const(1.0);
    }
    Expr::pow(base, exponent)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(src: &str) -> String {
        Expr::parse(src).unwrap().simplify().render()
    }

    #[test]
    fn zero_and_one_identities() {
        assert_eq!(s("0*x + x^2"), "x^2");
        assert_eq!(s("x^1"), "x");
        assert_eq!(s("(2/2)*ln(x)"), "ln(x)");
        assert_eq!(s("x^0 + 0"), "1");
        assert_eq!(s("x - x"), "0");
        assert_eq!(s("--x"), "x");
    }

    #[test]
    fn constant_folding_and_sign_normalisation() {
        assert_eq!(s("2*(3*x)"), "6*x");
        assert_eq!(s("x*2"), "2*x");
        assert_eq!(s("x + -y".replace('y', "x2").as_str()), "x1-x2");
        assert_eq!(s("-1*x"), "-x");
        assert_eq!(s("(-x)*(-x2)"), "x1*x2");
        assert_eq!(s("2^3 + ln(1)"), "8");
        // Undefined constants are left alone.
        assert_eq!(s("ln(0)"), "ln(0)");
        assert_eq!(s("1/0"), "1/0");
    }
}
