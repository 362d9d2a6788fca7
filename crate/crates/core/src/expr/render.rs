use super::{BinOp, Expr, UnaryOp};

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_PREFIX: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => PREC_PREFIX,
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::Norm => PREC_ATOM,
        Expr::Unary(UnaryOp::Neg, _) => PREC_PREFIX,
        Expr::Unary(..) => PREC_ATOM,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_SUM,
        Expr::Binary(..) => PREC_PRODUCT,
        Expr::Pow(..) => PREC_POWER,
    }
}

pub(super) fn render(e: &Expr) -> String {
    let short_var = e.max_var_index().map_or(true, |i| i == 0);
    let mut out = String::new();
    write(e, short_var, &mut out);
    out
}

fn write_number(c: f64, out: &mut String) {
    if c.is_sign_negative() {
        out.push('-');
    }
    out.push_str(&c.abs().to_string());
}

fn write_wrapped(e: &Expr, min_prec: u8, short_var: bool, out: &mut String) {
    if precedence(e) >= min_prec {
        write(e, short_var, out);
    } else {
        out.push('(');
        write(e, short_var, out);
        out.push(')');
    }
}

fn write(e: &Expr, short_var: bool, out: &mut String) {
    match e {
        Expr::Const(c) => write_number(*c, out),
        Expr::Var(i) => {
            if short_var && *i == 0 {
                out.push('x');
            } else {
                out.push_str(&format!("x{}", i + 1));
            }
        }
        Expr::Param(name) => out.push_str(name),
        Expr::Norm => out.push_str("norm(x)"),
        Expr::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            match **a {
                // `-2` would re-parse as a negative literal.
                Expr::Const(c) if !c.is_sign_negative() => {
                    out.push('(');
                    write_number(c, out);
                    out.push(')');
                }
                _ => write_wrapped(a, PREC_PREFIX, short_var, out),
            }
        }
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write(a, short_var, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            write_wrapped(a, p, short_var, out);
            out.push(op.symbol());
            write_wrapped(b, p + 1, short_var, out);
        }
        Expr::Pow(base, exponent) => {
            write_wrapped(base, PREC_ATOM, short_var, out);
            out.push('^');
            match **exponent {
                Expr::Const(c) => write_number(c, out),
                Expr::Param(ref name) => out.push_str(name),
                _ => {
                    out.push('(');
                    write(exponent, short_var, out);
                    out.push(')');
                }
            }
        }
    }
}
