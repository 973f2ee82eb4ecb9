//! Tiny arithmetic grammar for initial data.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x1' | 'x2' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func   := 'sin' | 'cos'
//! ```

use std::fmt;

use wforge_core::Field;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X1,
    X2,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

/// Parse failure at a 1-based column of the expression text.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| ParseError { column: col, message: format!("malformed number `{text}`") })?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(ParseError { column: col, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { column: self.column(), message: message.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "x1" => Ok(Expr::X1),
                    "x2" => Ok(Expr::X2),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" | "cos" => {
                        if !self.eat('(') {
                            return self.err(format!("expected `(` after `{name}`"));
                        }
                        let arg = Box::new(self.expr()?);
                        if !self.eat(')') {
                            return self.err("expected `)`");
                        }
                        Ok(if name == "sin" { Expr::Sin(arg) } else { Expr::Cos(arg) })
                    }
                    _ => {
                        self.pos -= 1;
                        self.err(format!("unknown name `{name}`"))
                    }
                }
            }
            Tok::Sym(c) => self.err(format!("unexpected `{c}`")),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0, end: src.chars().count() + 1 };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    /// Constant value, if the expression has no coordinates.
    pub fn constant(&self) -> Option<f64> {
        use Expr::*;
        Some(match self {
            Num(v) => *v,
            X1 | X2 => return None,
            Neg(a) => -a.constant()?,
            Add(a, b) => a.constant()? + b.constant()?,
            Sub(a, b) => a.constant()? - b.constant()?,
            Mul(a, b) => a.constant()? * b.constant()?,
            Div(a, b) => a.constant()? / b.constant()?,
            Pow(a, b) => a.constant()?.powf(b.constant()?),
            Sin(a) => a.constant()?.sin(),
            Cos(a) => a.constant()?.cos(),
        })
    }

    /// Expression tree with exact derivatives. Exponents must be constant;
    /// division only by constants.
    pub fn to_field(&self) -> Result<Field, String> {
        use Expr::*;
        if let Some(c) = self.constant() {
            return if c.is_finite() { Ok(Field::constant(c)) } else { Err(format!("non-finite constant {c}")) };
        }
        Ok(match self {
            Num(v) => Field::constant(*v),
            X1 => Field::x1(),
            X2 => Field::x2(),
            Neg(a) => a.to_field()?.neg(),
            Add(a, b) => a.to_field()?.add(&b.to_field()?),
            Sub(a, b) => a.to_field()?.sub(&b.to_field()?),
            Mul(a, b) => a.to_field()?.mul(&b.to_field()?),
            Div(a, b) => match b.constant() {
                Some(c) if c != 0.0 => a.to_field()?.scale(1.0 / c),
                _ => return Err("division is only supported by nonzero constants".into()),
            },
            Pow(a, b) => {
                let p = b.constant().ok_or("exponents must be constant")?;
                let base = a.to_field()?;
                if p.fract() == 0.0 && p.abs() <= 64.0 {
                    base.powi(p as i32)
                } else {
                    base.powf(p)
                }
            }
            Sin(a) => a.to_field()?.sin(),
            Cos(a) => a.to_field()?.cos(),
        })
    }
}

/// Parse and convert in one go.
pub fn parse_field(src: &str) -> Result<Field, ParseError> {
    let e = Expr::parse(src)?;
    e.to_field().map_err(|message| ParseError { column: 1, message })
}
