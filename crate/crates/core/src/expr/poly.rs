use super::{BinOp, Expr, UnaryOp};

const MAX_DEGREE: usize = 16;

fn trim(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p.last() == Some(&0.0) {
        p.pop();
    }
    p
}

fn add(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + sign * b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn mul(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    if a.len() + b.len() - 1 > MAX_DEGREE + 1 {
        return None;
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    Some(out)
}

fn small_natural(e: &Expr) -> Option<usize> {
    let c = e.as_const()?;
    (c >= 0.0 && c.fract() == 0.0 && c <= MAX_DEGREE as f64).then_some(c as usize)
}

pub(super) fn univariate(e: &Expr) -> Option<Vec<f64>> {
    let p = match e {
        Expr::Const(c) => vec![*c],
        Expr::Var(0) => vec![0.0, 1.0],
        Expr::Var(_) | Expr::Param(_) | Expr::Norm => return None,
        Expr::Unary(UnaryOp::Neg, a) => univariate(a)?.into_iter().map(|c| -c).collect(),
        Expr::Unary(..) => return None,
        Expr::Binary(op, a, b) => {
            let pa = univariate(a)?;
            match op {
                BinOp::Add => add(&pa, &univariate(b)?, 1.0),
                BinOp::Sub => add(&pa, &univariate(b)?, -1.0),
                BinOp::Mul => mul(&pa, &univariate(b)?)?,
                BinOp::Div => {
                    let d = b.as_const().filter(|d| *d != 0.0)?;
                    pa.into_iter().map(|c| c / d).collect()
                }
            }
        }
        Expr::Pow(base, exponent) => {
            let n = small_natural(exponent)?;
            // |x|^(2k) = x^(2k) in one dimension.
            let base_poly = if matches!(**base, Expr::Norm) && n % 2 == 0 {
                vec![0.0, 1.0]
            } else {
                univariate(base)?
            };
            let mut acc = vec![1.0];
            for _ in 0..n {
                acc = mul(&acc, &base_poly)?;
            }
            acc
        }
    };
    Some(trim(p))
}

#[cfg(test)]
mod tests {
    use crate::expr::Expr;

    fn poly(src: &str) -> Option<Vec<f64>> {
        Expr::parse(src).unwrap().univariate_polynomial()
    }

    #[test]
    fn extracts_coefficients() {
        assert_eq!(poly("x^2"), Some(vec![0.0, 0.0, 1.0]));
        assert_eq!(poly("(x+1)^2 - 1"), Some(vec![0.0, 2.0, 1.0]));
        assert_eq!(poly("3*x^3/2"), Some(vec![0.0, 0.0, 0.0, 1.5]));
        assert_eq!(poly("norm(x)^2"), Some(vec![0.0, 0.0, 1.0]));
        assert_eq!(poly("7"), Some(vec![7.0]));
    }

    #[test]
    fn rejects_non_polynomials() {
        assert_eq!(poly("1/x"), None);
        assert_eq!(poly("ln(x^2)"), None);
        assert_eq!(poly("x^0.5"), None);
        assert_eq!(poly("norm(x)"), None);
        assert_eq!(poly("x1*x2"), None);
    }
}
