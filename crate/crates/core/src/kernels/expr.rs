use std::fmt;
use std::str::FromStr;

use super::{fold, CalendarPoint, DAY_HOURS, DEFAULT_SIGMA_D, DEFAULT_SIGMA_T, YEAR_DAYS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A kernel on a single calendar feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelAtom {
    /// `exp(-h_24(|t1 - t2|) / sigma)`, sigma in hours.
    Time { sigma: f64 },
    /// `exp(-h_366(|d1 - d2|) / sigma)`, sigma in days.
    Day { sigma: f64 },
    /// 1 when the day types agree, 0 otherwise.
    DayType,
}

impl KernelAtom {
    #[inline]
    pub fn eval<T: Scalar>(&self, a: &CalendarPoint, b: &CalendarPoint) -> T {
        match *self {
            KernelAtom::Time { sigma } => {
                let dist = fold(T::lit((a.t - b.t).abs()), T::lit(DAY_HOURS));
                (-dist / T::lit(sigma)).exp()
            }
            KernelAtom::Day { sigma } => {
                let dist = fold(T::lit((a.d - b.d).abs()), T::lit(YEAR_DAYS));
                (-dist / T::lit(sigma)).exp()
            }
            KernelAtom::DayType => {
                if a.c == b.c {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            KernelAtom::Time { sigma } | KernelAtom::Day { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "sigma must be positive and finite, got {sigma}"
                    )))
                }
            }
            KernelAtom::DayType => Ok(()),
        }
    }
}

/// Composition tree of kernel atoms.
///
/// Grammar of the textual form (whitespace ignored, `*` binds tighter than
/// `+`):
///
/// ```text
/// expr   := term ('+' term)*
/// term   := factor ('*' factor)*
/// factor := atom | '(' expr ')'
/// atom   := 'kt' ['(' 'sigma' '=' number ')']
///         | 'kd' ['(' 'sigma' '=' number ')']
///         | 'kc'
/// ```
///
/// Omitted bandwidths default to 4 hours for `kt` and 120 days for `kd`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    Atom(KernelAtom),
    Sum(Vec<KernelExpr>),
    Product(Vec<KernelExpr>),
}

impl KernelExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            end: text.len(),
        };
        let expr = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(Error::Syntax {
                position: tok.pos,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        expr.validate()?;
        Ok(expr)
    }

    /// Recursive evaluation at a pair of points.
    #[inline]
    pub fn eval<T: Scalar>(&self, a: &CalendarPoint, b: &CalendarPoint) -> T {
        match self {
            KernelExpr::Atom(atom) => atom.eval(a, b),
            KernelExpr::Sum(children) => children
                .iter()
                .fold(T::zero(), |acc, child| acc + child.eval::<T>(a, b)),
            KernelExpr::Product(children) => children
                .iter()
                .fold(T::one(), |acc, child| acc * child.eval::<T>(a, b)),
        }
    }

    /// Every bandwidth positive and no empty sum or product.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelExpr::Atom(atom) => atom.validate(),
            KernelExpr::Sum(children) | KernelExpr::Product(children) => {
                if children.is_empty() {
                    return Err(Error::invalid("empty sum or product in kernel expression"));
                }
                children.iter().try_for_each(KernelExpr::validate)
            }
        }
    }

    /// Value of `k(x, x)`, identical for every point.
    pub fn self_value(&self) -> f64 {
        match self {
            KernelExpr::Atom(_) => 1.0,
            KernelExpr::Sum(children) => children.iter().map(KernelExpr::self_value).sum(),
            KernelExpr::Product(children) => children.iter().map(KernelExpr::self_value).product(),
        }
    }

    pub fn atoms(&self) -> Vec<KernelAtom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<KernelAtom>) {
        match self {
            KernelExpr::Atom(atom) => out.push(*atom),
            KernelExpr::Sum(children) | KernelExpr::Product(children) => {
                children.iter().for_each(|c| c.collect_atoms(out))
            }
        }
    }
}

impl FromStr for KernelExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelExpr::parse(s)
    }
}

impl fmt::Display for KernelAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelAtom::Time { sigma } if sigma == DEFAULT_SIGMA_T => write!(f, "kt"),
            KernelAtom::Time { sigma } => write!(f, "kt(sigma={sigma})"),
            KernelAtom::Day { sigma } if sigma == DEFAULT_SIGMA_D => write!(f, "kd"),
            KernelAtom::Day { sigma } => write!(f, "kd(sigma={sigma})"),
            KernelAtom::DayType => write!(f, "kc"),
        }
    }
}

impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelExpr::Atom(atom) => write!(f, "{atom}"),
            KernelExpr::Sum(children) => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    match child {
                        KernelExpr::Sum(_) => write!(f, "({child})")?,
                        _ => write!(f, "{child}")?,
                    }
                }
                Ok(())
            }
            KernelExpr::Product(children) => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" * ")?;
                    }
                    match child {
                        KernelExpr::Atom(_) => write!(f, "{child}")?,
                        _ => write!(f, "({child})")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Ident(String),
    Number(f64),
    Plus,
    Star,
    LParen,
    RParen,
    Equals,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("'{s}'"),
            TokenKind::Number(x) => format!("number {x}"),
            TokenKind::Plus => "'+'".into(),
            TokenKind::Star => "'*'".into(),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::Equals => "'='".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        let start = i;
        let kind = match ch {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'*' => TokenKind::Star,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'=' => TokenKind::Equals,
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    pos: start,
                });
                continue;
            }
            b'0'..=b'9' | b'.' | b'-' => {
                i += 1;
                while i < bytes.len() {
                    let b = bytes[i];
                    let exp_sign = (b == b'+' || b == b'-')
                        && matches!(bytes[i - 1], b'e' | b'E');
                    if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lexeme = &text[start..i];
                let value: f64 = lexeme.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("malformed number '{lexeme}'"),
                })?;
                out.push(Token {
                    kind: TokenKind::Number(value),
                    pos: start,
                });
                continue;
            }
            _ => {
                let c = text[start..].chars().next().unwrap_or('?');
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected character '{c}'"),
                });
            }
        };
        out.push(Token { kind, pos: start });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token> {
        match self.next() {
            Some(tok) if tok.kind == kind => Ok(tok),
            Some(tok) => Err(Error::Syntax {
                position: tok.pos,
                message: format!("expected {}, found {}", kind.describe(), tok.kind.describe()),
            }),
            None => Err(Error::Syntax {
                position: self.end,
                message: format!("expected {}, found end of input", kind.describe()),
            }),
        }
    }

    fn expr(&mut self) -> Result<KernelExpr> {
        let mut terms = vec![self.term()?];
        while matches!(self.peek(), Some(Token { kind: TokenKind::Plus, .. })) {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            KernelExpr::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<KernelExpr> {
        let mut factors = vec![self.factor()?];
        while matches!(self.peek(), Some(Token { kind: TokenKind::Star, .. })) {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            KernelExpr::Product(factors)
        })
    }

    fn factor(&mut self) -> Result<KernelExpr> {
        let position = self.here();
        match self.next() {
            Some(Token {
                kind: TokenKind::LParen,
                ..
            }) => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            Some(Token {
                kind: TokenKind::Ident(name),
                pos,
            }) => self.atom(&name, pos),
            Some(tok) => Err(Error::Syntax {
                position: tok.pos,
                message: format!("expected kernel atom or '(', found {}", tok.kind.describe()),
            }),
            None => Err(Error::Syntax {
                position,
                message: "expected kernel atom or '(', found end of input".into(),
            }),
        }
    }

    fn atom(&mut self, name: &str, pos: usize) -> Result<KernelExpr> {
        let atom = match name {
            "kt" => KernelAtom::Time {
                sigma: self.sigma(DEFAULT_SIGMA_T)?,
            },
            "kd" => KernelAtom::Day {
                sigma: self.sigma(DEFAULT_SIGMA_D)?,
            },
            "kc" => KernelAtom::DayType,
            other => {
                return Err(Error::Syntax {
                    position: pos,
                    message: format!("unknown kernel atom '{other}' (expected kt, kd or kc)"),
                })
            }
        };
        atom.validate()?;
        Ok(KernelExpr::Atom(atom))
    }

    fn sigma(&mut self, default: f64) -> Result<f64> {
        if !matches!(self.peek(), Some(Token { kind: TokenKind::LParen, .. })) {
            return Ok(default);
        }
        self.pos += 1;
        match self.next() {
            Some(Token {
                kind: TokenKind::Ident(ref s),
                ..
            }) if s == "sigma" => {}
            Some(tok) => {
                return Err(Error::Syntax {
                    position: tok.pos,
                    message: format!("expected 'sigma', found {}", tok.kind.describe()),
                })
            }
            None => {
                return Err(Error::Syntax {
                    position: self.end,
                    message: "expected 'sigma', found end of input".into(),
                })
            }
        }
        self.expect(TokenKind::Equals)?;
        let value = match self.next() {
            Some(Token {
                kind: TokenKind::Number(x),
                ..
            }) => x,
            Some(tok) => {
                return Err(Error::Syntax {
                    position: tok.pos,
                    message: format!("expected number, found {}", tok.kind.describe()),
                })
            }
            None => {
                return Err(Error::Syntax {
                    position: self.end,
                    message: "expected number, found end of input".into(),
                })
            }
        };
        self.expect(TokenKind::RParen)?;
        Ok(value)
    }
}

/// The six named kernel models: additive, semi-additive and multiplicative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// `kd + kt`
    Am1,
    /// `kd + kt + kc`
    Am2,
    /// `kd + kt * kc`
    Sam1,
    /// `(kd + kt) * kc`
    Sam2,
    /// `kd * kt`
    Mm1,
    /// `kd * kt * kc`
    Mm2,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Am1,
        Preset::Am2,
        Preset::Sam1,
        Preset::Sam2,
        Preset::Mm1,
        Preset::Mm2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Am1 => "am1",
            Preset::Am2 => "am2",
            Preset::Sam1 => "sam1",
            Preset::Sam2 => "sam2",
            Preset::Mm1 => "mm1",
            Preset::Mm2 => "mm2",
        }
    }

    pub fn expression(self) -> &'static str {
        match self {
            Preset::Am1 => "kd + kt",
            Preset::Am2 => "kd + kt + kc",
            Preset::Sam1 => "kd + kt * kc",
            Preset::Sam2 => "(kd + kt) * kc",
            Preset::Mm1 => "kd * kt",
            Preset::Mm2 => "kd * kt * kc",
        }
    }

    /// Label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Preset::Am1 => "K^d+K^t",
            Preset::Am2 => "K^d+K^t+K^c",
            Preset::Sam1 => "K^d+K^t*K^c",
            Preset::Sam2 => "(K^d+K^t)*K^c",
            Preset::Mm1 => "K^d*K^t",
            Preset::Mm2 => "K^d*K^t*K^c",
        }
    }

    pub fn family(self) -> &'static str {
        match self {
            Preset::Am1 | Preset::Am2 => "Additive Models",
            Preset::Sam1 | Preset::Sam2 => "Semi-Additive Models",
            Preset::Mm1 | Preset::Mm2 => "Multiplicative Models",
        }
    }

    pub fn kernel(self) -> KernelExpr {
        KernelExpr::parse(self.expression()).expect("preset expressions are valid")
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown preset '{name}' (expected am1, am2, sam1, sam2, mm1 or mm2)"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kt(sigma: f64) -> KernelExpr {
        KernelExpr::Atom(KernelAtom::Time { sigma })
    }
    fn kd(sigma: f64) -> KernelExpr {
        KernelExpr::Atom(KernelAtom::Day { sigma })
    }
    fn kc() -> KernelExpr {
        KernelExpr::Atom(KernelAtom::DayType)
    }

    #[test]
    fn parses_multiplicative_model() {
        let e = KernelExpr::parse("kd * kt * kc").unwrap();
        assert_eq!(e, KernelExpr::Product(vec![kd(120.0), kt(4.0), kc()]));
    }

    #[test]
    fn parses_semi_additive_model() {
        let e = KernelExpr::parse("(kd + kt) * kc").unwrap();
        assert_eq!(
            e,
            KernelExpr::Product(vec![KernelExpr::Sum(vec![kd(120.0), kt(4.0)]), kc()])
        );
        let e = KernelExpr::parse("kd + kt * kc").unwrap();
        assert_eq!(
            e,
            KernelExpr::Sum(vec![kd(120.0), KernelExpr::Product(vec![kt(4.0), kc()])])
        );
    }

    #[test]
    fn explicit_sigma() {
        let e = KernelExpr::parse("kt(sigma=2.5)*kd( sigma = 1e2 )").unwrap();
        assert_eq!(e, KernelExpr::Product(vec![kt(2.5), kd(100.0)]));
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let err = KernelExpr::parse("kt(sigma=0)").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("positive")), "{err}");
        assert!(matches!(
            KernelExpr::parse("kd(sigma=-3)"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unknown_atom_names_the_token() {
        match KernelExpr::parse("kt + kx") {
            Err(Error::Syntax { position, message }) => {
                assert_eq!(position, 5);
                assert!(message.contains("kx"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let cases = [
            ("kt +", 4),
            ("(kt + kd", 8),
            ("kt kd", 3),
            ("kt * * kd", 5),
            ("kc(sigma=1)", 2),
            ("kt(sigma 1)", 9),
            ("kt $ kd", 3),
            ("", 0),
        ];
        for (text, expected) in cases {
            match KernelExpr::parse(text) {
                Err(Error::Syntax { position, .. }) => {
                    assert_eq!(position, expected, "input {text:?}")
                }
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn self_value_counts_summed_atoms() {
        assert_eq!(KernelExpr::parse("kt + kd + kc").unwrap().self_value(), 3.0);
        assert_eq!(KernelExpr::parse("(kt + kd) * kc").unwrap().self_value(), 2.0);
        assert_eq!(KernelExpr::parse("kt * kd").unwrap().self_value(), 1.0);
    }

    #[test]
    fn presets_match_expressions() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
            let printed = p.kernel().to_string();
            assert_eq!(KernelExpr::parse(&printed).unwrap(), p.kernel());
        }
        assert_eq!(Preset::Mm2.kernel().to_string(), "kd * kt * kc");
        assert_eq!(Preset::Sam2.kernel().to_string(), "(kd + kt) * kc");
        assert!(Preset::from_name("mm3").is_err());
    }

    #[test]
    fn display_keeps_nested_grouping() {
        for text in ["(kt * kd) * kc", "kt + (kd + kc)", "((kt))", "kt(sigma=0.1) + kd(sigma=365)"] {
            let e = KernelExpr::parse(text).unwrap();
            assert_eq!(KernelExpr::parse(&e.to_string()).unwrap(), e, "{text}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = KernelExpr> {
        let leaf = prop_oneof![
            (0.01f64..100.0).prop_map(kt),
            (0.01f64..1000.0).prop_map(kd),
            Just(kt(4.0)),
            Just(kd(120.0)),
            Just(kc()),
        ];
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(KernelExpr::Sum),
                prop::collection::vec(inner, 2..4).prop_map(KernelExpr::Product),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let once = KernelExpr::parse(&e.to_string()).unwrap();
            let twice = KernelExpr::parse(&once.to_string()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn printed_form_reparses_to_same_tree(e in arb_expr()) {
            // Generated trees never nest a single-child node, so printing is lossless.
            prop_assert_eq!(KernelExpr::parse(&e.to_string()).unwrap(), e);
        }
    }
}
