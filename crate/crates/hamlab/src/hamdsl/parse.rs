//! Lexer and recursive-descent parser for the Hamiltonian DSL, plus the
//! syntactic checks that make every accepted expression a valid
//! time-1-periodic Hamiltonian on its manifold: coordinate binding, constant
//! nonzero denominators, integer exponents, and the time-periodicity rule.

use crate::error::{Error, Result};
use crate::geom::{Manifold, ManifoldKind};
use crate::num::Real;

use super::{Env, Expr, Hamiltonian};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Semi,
    Comma,
}

#[derive(Debug, Clone)]
struct Lexed {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let offset = i;
        let tok = match c {
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                i += 1;
                Tok::Minus
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            '^' => {
                i += 1;
                Tok::Caret
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ';' => {
                i += 1;
                Tok::Semi
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part like 1e-3
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    offset: start,
                    expected: "a numeric literal".into(),
                })?;
                Tok::Num(v)
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            _ => {
                return Err(Error::Parse {
                    offset,
                    expected: "an operator, number, or identifier".into(),
                })
            }
        };
        out.push(Lexed { tok, offset });
    }
    Ok(out)
}

struct Parser<'a, T> {
    toks: Vec<Lexed>,
    pos: usize,
    src_len: usize,
    kind: ManifoldKind,
    allow_param: bool,
    _marker: std::marker::PhantomData<&'a T>,
}

impl<'a, T: Real> Parser<'a, T> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|l| l.offset)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<Lexed> {
        let l = self.toks.get(self.pos).cloned();
        if l.is_some() {
            self.pos += 1;
        }
        l
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some(l) if l.tok == tok => Ok(()),
            Some(l) => Err(Error::Parse {
                offset: l.offset,
                expected: what.into(),
            }),
            None => Err(Error::Parse {
                offset: self.src_len,
                expected: what.into(),
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr<T>> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr<T>> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Slash) => {
                    let offset = self.offset();
                    self.bump();
                    let rhs = self.parse_unary()?;
                    match const_value(&rhs) {
                        Some(v) if v != T::zero() => {
                            lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                        }
                        Some(_) => {
                            return Err(Error::Parse {
                                offset,
                                expected: "a nonzero constant denominator".into(),
                            })
                        }
                        None => {
                            return Err(Error::Parse {
                                offset,
                                expected: "a constant denominator".into(),
                            })
                        }
                    }
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr<T>> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr<T>> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            let n = self.parse_exponent()?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    /// Exponents are nonnegative integer constants, optionally written as a
    /// parenthesized constant expression.
    fn parse_exponent(&mut self) -> Result<u32> {
        let offset = self.offset();
        let err = || Error::Parse {
            offset,
            expected: "a nonnegative integer exponent".into(),
        };
        let value = if matches!(self.peek(), Some(Tok::LParen)) {
            self.bump();
            let e = self.parse_expr()?;
            self.expect(Tok::RParen, "`)` closing the exponent")?;
            const_value(&e).ok_or_else(err)?.to64()
        } else {
            match self.bump() {
                Some(Lexed {
                    tok: Tok::Num(v), ..
                }) => v,
                _ => return Err(err()),
            }
        };
        if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
            Ok(value as u32)
        } else {
            Err(err())
        }
    }

    fn parse_atom(&mut self) -> Result<Expr<T>> {
        let offset = self.offset();
        match self.bump() {
            Some(Lexed {
                tok: Tok::Num(v), ..
            }) => Ok(Expr::Num(T::lit(v))),
            Some(Lexed { tok: Tok::LParen, .. }) => {
                let e = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Lexed {
                tok: Tok::Ident(name),
                offset,
            }) => self.parse_ident(&name, offset),
            Some(l) => Err(Error::Parse {
                offset: l.offset,
                expected: "a number, identifier, or `(`".into(),
            }),
            None => Err(Error::Parse {
                offset,
                expected: "a number, identifier, or `(`".into(),
            }),
        }
    }

    fn parse_ident(&mut self, name: &str, offset: usize) -> Result<Expr<T>> {
        match name {
            "pi" => Ok(Expr::Pi),
            "t" => Ok(Expr::Time),
            "s" if self.allow_param => Ok(Expr::Param),
            "x" if self.kind != ManifoldKind::Sphere2 => Ok(Expr::Coord1),
            "y" if self.kind != ManifoldKind::Sphere2 => Ok(Expr::Coord2),
            "theta" if self.kind == ManifoldKind::Sphere2 => Ok(Expr::Coord1),
            "z" if self.kind == ManifoldKind::Sphere2 => Ok(Expr::Coord2),
            "sin" | "cos" | "exp" => {
                self.expect(Tok::LParen, "`(` after function name")?;
                let arg = self.parse_expr()?;
                self.expect(Tok::RParen, "`)` closing the function argument")?;
                Ok(match name {
                    "sin" => Expr::Sin(Box::new(arg)),
                    "cos" => Expr::Cos(Box::new(arg)),
                    _ => Expr::Exp(Box::new(arg)),
                })
            }
            "bump2" => {
                self.expect(Tok::LParen, "`(` after `bump2`")?;
                let arg = self.parse_expr()?;
                self.expect(Tok::Semi, "`;` separating the bump2 argument")?;
                let lo_off = self.offset();
                let lo_expr = self.parse_expr()?;
                self.expect(Tok::Comma, "`,` between bump2 thresholds")?;
                let hi_off = self.offset();
                let hi_expr = self.parse_expr()?;
                self.expect(Tok::RParen, "`)` closing `bump2`")?;
                let lo = const_value(&lo_expr).ok_or_else(|| Error::Parse {
                    offset: lo_off,
                    expected: "a constant bump2 threshold".into(),
                })?;
                let hi = const_value(&hi_expr).ok_or_else(|| Error::Parse {
                    offset: hi_off,
                    expected: "a constant bump2 threshold".into(),
                })?;
                if !(lo < hi) {
                    return Err(Error::Parse {
                        offset: lo_off,
                        expected: "bump2 thresholds with lo < hi".into(),
                    });
                }
                Ok(Expr::Bump2 {
                    arg: Box::new(arg),
                    lo,
                    hi,
                    order: 0,
                })
            }
            _ => Err(Error::Bind {
                name: name.to_string(),
                offset,
            }),
        }
    }
}

/// Value of a syntactically constant subtree (no coordinates, time, or
/// parameter), or `None` if the subtree is not constant.
fn const_value<T: Real>(e: &Expr<T>) -> Option<T> {
    match e {
        Expr::Num(v) => Some(*v),
        Expr::Pi => Some(T::PI()),
        Expr::Coord1 | Expr::Coord2 | Expr::Time | Expr::Param => None,
        Expr::Neg(a) => const_value(a).map(|v| -v),
        Expr::Add(a, b) => Some(const_value(a)? + const_value(b)?),
        Expr::Sub(a, b) => Some(const_value(a)? - const_value(b)?),
        Expr::Mul(a, b) => Some(const_value(a)? * const_value(b)?),
        Expr::Div(a, b) => Some(const_value(a)? / const_value(b)?),
        Expr::Pow(a, n) => Some(const_value(a)?.powi(*n as i32)),
        Expr::Sin(a) => Some(const_value(a)?.sin()),
        Expr::Cos(a) => Some(const_value(a)?.cos()),
        Expr::Exp(a) => Some(const_value(a)?.exp()),
        Expr::Bump2 { arg, lo, hi, order } => {
            Some(super::bump_profile(const_value(arg)?, *lo, *hi, *order))
        }
    }
}

fn contains_time<T: Real>(e: &Expr<T>) -> bool {
    match e {
        Expr::Time => true,
        Expr::Num(_) | Expr::Pi | Expr::Coord1 | Expr::Coord2 | Expr::Param => false,
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
            contains_time(a)
        }
        Expr::Bump2 { arg, .. } => contains_time(arg),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            contains_time(a) || contains_time(b)
        }
    }
}

/// A sin/cos argument qualifies when it is a product of constants and a
/// single `t` with total coefficient `2*pi*k`, `k` a nonzero integer.
fn is_periodic_time_arg<T: Real>(e: &Expr<T>) -> bool {
    fn split<T: Real>(e: &Expr<T>) -> Option<(T, u32)> {
        // returns (constant coefficient, t-degree) for product/quotient trees
        match e {
            Expr::Time => Some((T::one(), 1)),
            Expr::Neg(a) => split(a).map(|(c, d)| (-c, d)),
            Expr::Mul(a, b) => {
                let (ca, da) = split(a)?;
                let (cb, db) = split(b)?;
                Some((ca * cb, da + db))
            }
            Expr::Div(a, b) => {
                let (ca, da) = split(a)?;
                let cb = const_value(b)?;
                Some((ca / cb, da))
            }
            other => const_value(other).map(|c| (c, 0)),
        }
    }
    match split(e) {
        Some((c, 1)) => {
            let k = c.to64() / (2.0 * std::f64::consts::PI);
            k.round() != 0.0 && (k - k.round()).abs() < 1e-9
        }
        _ => false,
    }
}

/// Every occurrence of `t` must sit inside a sin/cos whose argument is a
/// constant integer multiple of `2*pi*t`; such expressions are 1-periodic
/// in time by construction.
fn check_time_periodicity<T: Real>(e: &Expr<T>, offset_hint: usize) -> Result<()> {
    if !contains_time(e) {
        return Ok(());
    }
    match e {
        Expr::Time => Err(Error::Periodicity {
            offset: offset_hint,
        }),
        Expr::Sin(a) | Expr::Cos(a) => {
            if is_periodic_time_arg(a) {
                Ok(())
            } else {
                check_time_periodicity(a, offset_hint)
            }
        }
        Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Bump2 { arg: a, .. } => {
            check_time_periodicity(a, offset_hint)
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            check_time_periodicity(a, offset_hint)?;
            check_time_periodicity(b, offset_hint)
        }
        _ => Ok(()),
    }
}

fn parse_raw<T: Real>(
    src: &str,
    manifold: &Manifold<T>,
    allow_param: bool,
) -> Result<Expr<T>> {
    let toks = lex(src)?;
    let mut p = Parser::<T> {
        toks,
        pos: 0,
        src_len: src.len(),
        kind: manifold.kind,
        allow_param,
        _marker: std::marker::PhantomData,
    };
    let expr = p.parse_expr()?;
    if p.pos != p.toks.len() {
        return Err(Error::Parse {
            offset: p.offset(),
            expected: "end of input".into(),
        });
    }
    // locate the first `t` for periodicity diagnostics
    let t_offset = p
        .toks
        .iter()
        .find(|l| matches!(&l.tok, Tok::Ident(n) if n == "t"))
        .map(|l| l.offset)
        .unwrap_or(0);
    check_time_periodicity(&expr, t_offset)?;
    Ok(expr)
}

/// Parse a Hamiltonian bound to `manifold`. The family parameter `s` is
/// rejected here; use [`parse_family`] for parameterized expressions.
pub fn parse<T: Real>(src: &str, manifold: &Manifold<T>) -> Result<Hamiltonian<T>> {
    let expr = parse_raw(src, manifold, false)?;
    Ok(Hamiltonian::from_expr(expr, *manifold))
}

/// A one-parameter family of Hamiltonians `H^s`, parsed once and
/// instantiated per parameter value.
#[derive(Debug, Clone)]
pub struct HamiltonianFamily<T> {
    pub expr: Expr<T>,
    pub manifold: Manifold<T>,
}

impl<T: Real> HamiltonianFamily<T> {
    pub fn at(&self, s: T) -> Hamiltonian<T> {
        Hamiltonian::from_expr(self.expr.substitute_param(s), self.manifold)
    }

    /// Raw evaluation at explicit coordinates, time, and parameter (no pole
    /// averaging; used by derived-field machinery that stays off the poles).
    pub fn eval_raw(&self, c1: T, c2: T, t: T, s: T) -> T {
        self.expr.eval(&Env { c1, c2, t, param: s })
    }
}

/// Parse a family expression which may mention the parameter `s`.
pub fn parse_family<T: Real>(src: &str, manifold: &Manifold<T>) -> Result<HamiltonianFamily<T>> {
    let expr = parse_raw(src, manifold, true)?;
    Ok(HamiltonianFamily {
        expr,
        manifold: *manifold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    #[test]
    fn rejects_unknown_symbol_with_offset() {
        let m = Manifold::<f64>::torus();
        match parse("x + q", &m) {
            Err(Error::Bind { name, offset }) => {
                assert_eq!(name, "q");
                assert_eq!(offset, 4);
            }
            other => panic!("expected bind error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_chart_symbols() {
        let s = Manifold::<f64>::sphere();
        assert!(matches!(parse("x", &s), Err(Error::Bind { .. })));
        let t = Manifold::<f64>::torus();
        assert!(matches!(parse("z", &t), Err(Error::Bind { .. })));
    }

    #[test]
    fn rejects_bare_time() {
        let m = Manifold::<f64>::torus();
        assert!(matches!(parse("t*x", &m), Err(Error::Periodicity { .. })));
        assert!(matches!(
            parse("sin(3*t)", &m),
            Err(Error::Periodicity { .. })
        ));
        assert!(matches!(
            parse("exp(sin(t))", &m),
            Err(Error::Periodicity { .. })
        ));
        // integer multiples of 2*pi*t are fine, including nested products
        assert!(parse("sin(2*pi*3*t)*x", &m).is_ok());
        assert!(parse("cos(-2*pi*t)", &m).is_ok());
    }

    #[test]
    fn rejects_fractional_power() {
        let m = Manifold::<f64>::torus();
        match parse("x^(1/2)", &m) {
            Err(Error::Parse { expected, .. }) => {
                assert!(expected.contains("integer exponent"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse("x^1.5", &m), Err(Error::Parse { .. })));
    }

    #[test]
    fn rejects_nonconstant_denominator() {
        let m = Manifold::<f64>::torus();
        assert!(matches!(parse("1/x", &m), Err(Error::Parse { .. })));
        assert!(matches!(parse("x/0", &m), Err(Error::Parse { .. })));
        assert!(parse("x/2", &m).is_ok());
        assert!(parse("x/(2*pi)", &m).is_ok());
    }

    #[test]
    fn rejects_param_outside_family_context() {
        let m = Manifold::<f64>::torus();
        assert!(matches!(parse("s*x", &m), Err(Error::Bind { .. })));
        assert!(parse_family("s*sin(2*pi*x)", &m).is_ok());
    }

    #[test]
    fn reports_offset_of_unbalanced_paren() {
        let m = Manifold::<f64>::torus();
        match parse("sin(2*pi*x", &m) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn family_substitution_matches_manual() {
        let m = Manifold::<f64>::sphere();
        let fam = parse_family("(2*pi + 2*pi*0.1*s*cos(2*pi*t))*z", &m).unwrap();
        let h = fam.at(0.5);
        let p = Point::new(1.0, 0.3);
        let t = 0.2;
        let expected = (2.0 * std::f64::consts::PI
            + 2.0 * std::f64::consts::PI * 0.05 * (2.0 * std::f64::consts::PI * t).cos())
            * 0.3;
        assert!((h.eval(p, t) - expected).abs() < 1e-13);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let m = Manifold::<f64>::plane_default();
        let h = parse("-x^2 + 3*y", &m).unwrap();
        let v = h.eval(Point::new(2.0, 1.0), 0.0);
        assert!((v - (-4.0 + 3.0)).abs() < 1e-14);
        let h = parse("2*3 - 4/2", &m).unwrap();
        assert!((h.eval(Point::new(0.0, 0.0), 0.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn scientific_notation_literals() {
        let m = Manifold::<f64>::plane_default();
        let h = parse("1e-3*x + 2.5E2", &m).unwrap();
        let v = h.eval(Point::new(1.0, 0.0), 0.0);
        assert!((v - 250.001).abs() < 1e-12);
    }
}
