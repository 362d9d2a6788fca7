use thiserror::Error;

use super::{BinOp, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    UnexpectedToken(String),
    UnbalancedParenthesis,
    UnknownIdentifier(String),
    NonConstantExponent,
    InvalidNumber(String),
    BadNormArgument,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {}", describe(.kind))]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::UnexpectedChar(c) => format!("unexpected character '{c}'"),
        ParseErrorKind::UnexpectedEnd => "unexpected end of input".into(),
        ParseErrorKind::UnexpectedToken(t) => format!("unexpected token '{t}'"),
        ParseErrorKind::UnbalancedParenthesis => "unbalanced parenthesis".into(),
        ParseErrorKind::UnknownIdentifier(id) => format!("unknown identifier '{id}'"),
        ParseErrorKind::NonConstantExponent => "exponent must not depend on the state".into(),
        ParseErrorKind::InvalidNumber(n) => format!("invalid number '{n}'"),
        ParseErrorKind::BadNormArgument => "norm takes exactly the state vector: norm(x)".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // Exponent part only when digits follow, so `2e` stays a number and an identifier.
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::InvalidNumber(text.to_string()),
            })?;
            out.push((Tok::Num(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                let ch = src[i..].chars().next().unwrap_or(c);
                return Err(ParseError { offset: i, kind: ParseErrorKind::UnexpectedChar(ch) });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

pub(super) struct Parser<'a> {
    src: &'a str,
    params: &'a [&'a str],
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    pub(super) fn new(src: &'a str, params: &'a [&'a str]) -> Self {
        Parser { src, params, toks: Vec::new(), pos: 0 }
    }

    pub(super) fn parse(mut self) -> Result<Expr, ParseError> {
        self.toks = lex(self.src)?;
        if self.toks.is_empty() {
            return Err(self.err_here(ParseErrorKind::UnexpectedEnd));
        }
        let e = self.expr()?;
        if let Some((tok, off)) = self.toks.get(self.pos) {
            let kind = if *tok == Tok::RParen {
                ParseErrorKind::UnbalancedParenthesis
            } else {
                ParseErrorKind::UnexpectedToken(tok.text())
            };
            return Err(ParseError { offset: *off, kind });
        }
        Ok(e)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Tok> {
        self.toks.get(self.pos + ahead).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.src.len())
    }

    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { offset: self.offset(), kind }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_rparen(&mut self, open_offset: usize) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            None => Err(ParseError { offset: open_offset, kind: ParseErrorKind::UnbalancedParenthesis }),
            Some(t) => {
                let kind = ParseErrorKind::UnexpectedToken(t.text());
                Err(self.err_here(kind))
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            // A minus directly in front of a bare literal is a negative constant.
            if let (Some(Tok::Num(v)), next) = (self.peek_at(1), self.peek_at(2)) {
                if next != Some(&Tok::Op('^')) {
                    let v = *v;
                    self.pos += 2;
                    return Ok(Expr::Const(-v));
                }
            }
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::unary(UnaryOp::Neg, inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp_offset = self.offset();
            let exponent = self.exponent()?;
            if !exponent.is_state_free() {
                return Err(ParseError { offset: exp_offset, kind: ParseErrorKind::NonConstantExponent });
            }
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            if let Some(Tok::Num(v)) = self.peek_at(1) {
                let v = *v;
                self.pos += 2;
                return Ok(Expr::Const(-v));
            }
            self.pos += 1;
            let inner = self.exponent()?;
            return Ok(Expr::unary(UnaryOp::Neg, inner));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            None => Err(ParseError { offset, kind: ParseErrorKind::UnexpectedEnd }),
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect_rparen(offset)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => self.identifier(name, offset),
            Some(Tok::RParen) => Err(ParseError { offset, kind: ParseErrorKind::UnbalancedParenthesis }),
            Some(t) => Err(ParseError { offset, kind: ParseErrorKind::UnexpectedToken(t.text()) }),
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        if name == "x" {
            return Ok(Expr::Var(0));
        }
        if let Some(digit) = name.strip_prefix('x') {
            if digit.len() == 1 {
                if let Some(d) = digit.chars().next().and_then(|c| c.to_digit(10)) {
                    if d >= 1 {
                        return Ok(Expr::Var(d as usize - 1));
                    }
                }
            }
        }
        if name == "norm" {
            let open = self.offset();
            if self.peek() != Some(&Tok::LParen) {
                return Err(ParseError { offset: open, kind: ParseErrorKind::BadNormArgument });
            }
            self.pos += 1;
            match self.bump() {
                Some(Tok::Ident(arg)) if arg == "x" => {}
                _ => return Err(ParseError { offset: open, kind: ParseErrorKind::BadNormArgument }),
            }
            self.expect_rparen(open)?;
            return Ok(Expr::Norm);
        }
        if let Some(op) = UnaryOp::from_function_name(&name) {
            let open = self.offset();
            if self.peek() != Some(&Tok::LParen) {
                let kind = match self.peek() {
                    None => ParseErrorKind::UnexpectedEnd,
                    Some(t) => ParseErrorKind::UnexpectedToken(t.text()),
                };
                return Err(self.err_here(kind));
            }
            self.pos += 1;
            let arg = self.expr()?;
            self.expect_rparen(open)?;
            return Ok(Expr::unary(op, arg));
        }
        if self.params.contains(&name.as_str()) {
            return Ok(Expr::Param(name));
        }
        Err(ParseError { offset, kind: ParseErrorKind::UnknownIdentifier(name) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn square_is_pow_of_first_coordinate() {
        assert_eq!(p("x^2"), Expr::pow(Expr::Var(0), Expr::Const(2.0)));
        assert_eq!(p("x1 ^ 2"), p("x^2"));
    }

    #[test]
    fn unknown_identifier_is_reported_with_offset() {
        let err = Expr::parse("x^2*dt-drift").unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("dt".into()));
    }

    #[test]
    fn log_of_squared_norm() {
        assert_eq!(p("ln(norm(x)^2)"), Expr::ln(Expr::pow(Expr::Norm, Expr::Const(2.0))));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1-2-3"), Expr::binary(BinOp::Sub, p("1-2"), Expr::Const(3.0)));
        assert_eq!(p("a/b*c".replace('a', "x1").replace('b', "x2").replace('c', "x3").as_str()),
            Expr::binary(BinOp::Mul, p("x1/x2"), Expr::Var(2)));
        assert_eq!(p("-x^2"), Expr::unary(UnaryOp::Neg, p("x^2")));
        assert_eq!(p("2*-3"), Expr::binary(BinOp::Mul, Expr::Const(2.0), Expr::Const(-3.0)));
        assert_eq!(p("-(3)"), Expr::unary(UnaryOp::Neg, Expr::Const(3.0)));
    }

    #[test]
    fn negative_and_parameter_exponents() {
        assert_eq!(p("x^-2"), Expr::pow(Expr::Var(0), Expr::Const(-2.0)));
        let e = Expr::parse_with_params("x^(-1-alpha)", &["alpha"]).unwrap();
        assert!(matches!(e, Expr::Pow(_, ref b) if b.is_state_free()));
    }

    #[test]
    fn whitespace_is_ignored() {
        assert_eq!(p(" exp( x1 )  *  3 "), p("exp(x1)*3"));
    }

    #[test]
    fn scientific_notation() {
        assert_eq!(p("1.5e-3"), Expr::Const(1.5e-3));
        assert_eq!(p("2E3"), Expr::Const(2000.0));
    }

    #[test]
    fn error_cases() {
        let e = Expr::parse("(x+1").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnbalancedParenthesis);
        assert_eq!(e.offset, 0);
        assert_eq!(Expr::parse("x+1)").unwrap_err().kind, ParseErrorKind::UnbalancedParenthesis);
        let e = Expr::parse("2^x").unwrap_err();
        assert_eq!((e.kind, e.offset), (ParseErrorKind::NonConstantExponent, 2));
        assert_eq!(Expr::parse("norm(x1)").unwrap_err().kind, ParseErrorKind::BadNormArgument);
        assert_eq!(Expr::parse("x $ 2").unwrap_err().kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(Expr::parse("").unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(Expr::parse("x0").unwrap_err().kind, ParseErrorKind::UnknownIdentifier("x0".into()));
        assert!(Expr::parse("x*").is_err());
        assert!(Expr::parse("ln x").is_err());
    }
}
