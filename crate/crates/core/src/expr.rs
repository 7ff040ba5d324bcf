//! A tiny arithmetic language over one variable `x`.
//!
//! Grammar (usual precedence, `^` binds tighter than unary minus and is right associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func   := exp | log | sqrt | pow
//! ```

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Pow,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

/// A parsed expression in `x`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let tokens = lex(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            source,
        };
        let root = p.expr()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(p.error_at(tok.offset, format!("unexpected {}", tok.kind)));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval(&self.root, x)
    }
}

fn eval(node: &Node, x: f64) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var => x,
        Node::Neg(a) => -eval(a, x),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x), eval(b, x));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(f, args) => match f {
            Func::Exp => eval(&args[0], x).exp(),
            Func::Log => eval(&args[0], x).ln(),
            Func::Sqrt => eval(&args[0], x).sqrt(),
            Func::Pow => eval(&args[0], x).powf(eval(&args[1], x)),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Sym(char),
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Num(v) => write!(f, "number {v}"),
            Kind::Ident(s) => write!(f, "identifier '{s}'"),
            Kind::Sym(c) => write!(f, "'{c}'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    offset: usize,
}

fn position(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

fn parse_error(source: &str, offset: usize, message: String) -> Error {
    let (line, column) = position(source, offset);
    Error::Parse {
        line,
        column,
        message,
    }
}

fn lex(source: &str) -> Result<Vec<Token>> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
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
            let text = &source[start..i];
            let v: f64 = text.parse().map_err(|_| {
                parse_error(source, start, format!("malformed number '{text}'"))
            })?;
            out.push(Token {
                kind: Kind::Num(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Kind::Ident(source[start..i].to_string()),
                offset: start,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Token {
                kind: Kind::Sym(c),
                offset: i,
            });
            i += 1;
        } else {
            let ch = source[i..].chars().next().unwrap_or(c);
            return Err(parse_error(source, i, format!("unexpected character '{ch}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn error_at(&self, offset: usize, message: String) -> Error {
        parse_error(self.source, offset, message)
    }

    fn end_offset(&self) -> usize {
        self.source.len()
    }

    fn peek_sym(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: Kind::Sym(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: Kind::Sym(d), ..
            }) if *d == c => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(self.error_at(tok.offset, format!("expected '{c}', found {}", tok.kind))),
            None => Err(self.error_at(self.end_offset(), format!("expected '{c}' before end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_sym() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_sym() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_sym() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error_at(self.end_offset(), "unexpected end of input".into()));
        };
        self.pos += 1;
        match tok.kind {
            Kind::Num(v) => Ok(Node::Num(v)),
            Kind::Sym('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Kind::Ident(name) => match name.as_str() {
                "x" => Ok(Node::Var),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "exp" | "log" | "sqrt" | "pow" => {
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "log" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        _ => Func::Pow,
                    };
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.peek_sym() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(self.error_at(
                            tok.offset,
                            format!("{name} takes {} argument(s), got {}", func.arity(), args.len()),
                        ));
                    }
                    Ok(Node::Call(func, args))
                }
                _ => Err(self.error_at(tok.offset, format!("unknown identifier '{name}'"))),
            },
            other => Err(self.error_at(tok.offset, format!("unexpected {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2*x^2^0.5 - -x/4").unwrap();
        let x: f64 = 3.0;
        let expected = 1.0 + 2.0 * x.powf(2f64.powf(0.5)) + x / 4.0;
        assert!((e.eval(x) - expected).abs() < 1e-12);
        assert_eq!(Expr::parse("-x^2").unwrap().eval(3.0), -9.0);
        assert_eq!(Expr::parse("2^-1").unwrap().eval(0.0), 0.5);
    }

    #[test]
    fn functions() {
        let e = Expr::parse("exp(log(x)) + sqrt(pow(x, 2)) + 1e-1").unwrap();
        assert!((e.eval(2.5) - 5.1).abs() < 1e-12);
        assert!((Expr::parse("pi").unwrap().eval(0.0) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        match Expr::parse("x +\n  foo(x)") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        match Expr::parse("(x + 1") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 7)),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("pow(x)").is_err());
        assert!(Expr::parse("x $ 2").is_err());
        assert!(Expr::parse("").is_err());
    }
}
