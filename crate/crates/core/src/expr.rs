//! Arithmetic expressions for coefficient fields.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | constant | variable | func '(' args ')' | '(' sum ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2 = -4`
//! and `2^3^2 = 512`. Variables are `x`, `y`, `r` and `lambda`; `pi` and `e`
//! are folded into constants at parse time, as is any name supplied through
//! [`parse_with_constants`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Free variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    R,
    Lambda,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X, Var::Y, Var::R, Var::Lambda];

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::R => "r",
            Var::Lambda => "lambda",
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

const UNARY_PRECEDENCE: u8 = 3;
const ATOM_PRECEDENCE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Ln,
    Sqrt,
    Abs,
    Arcsin,
    Min,
    Max,
}

impl Func {
    const ALL: [Func; 9] = [
        Func::Exp,
        Func::Sin,
        Func::Cos,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
        Func::Arcsin,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Arcsin => "arcsin",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Immutable once built; evaluation is reentrant.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct SyntaxError {
    /// Byte offset into the source text.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("variable `{0}` bound twice")]
pub struct DuplicateBinding(pub &'static str);

/// Values for the free variables of an expression.
///
/// `r` is derived as `sqrt(x^2 + y^2)` when both `x` and `y` are bound and `r`
/// is not.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    values: [Option<f64>; 4],
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bindings for a planar point, with `lambda` optionally set.
    pub fn point(x: f64, y: f64, lambda: Option<f64>) -> Self {
        Self {
            values: [Some(x), Some(y), None, lambda],
        }
    }

    /// Bindings for a radial evaluation at radius `r` (taken on the positive x axis).
    pub fn radial(r: f64, lambda: Option<f64>) -> Self {
        Self {
            values: [Some(r), Some(0.0), Some(r), lambda],
        }
    }

    pub fn bind(&mut self, var: Var, value: f64) -> Result<(), DuplicateBinding> {
        let slot = &mut self.values[var as usize];
        if slot.is_some() {
            return Err(DuplicateBinding(var.name()));
        }
        *slot = Some(value);
        Ok(())
    }

    pub fn with(mut self, var: Var, value: f64) -> Result<Self, DuplicateBinding> {
        self.bind(var, value)?;
        Ok(self)
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        match (var, self.values[var as usize]) {
            (_, Some(v)) => Some(v),
            (Var::R, None) => match (self.values[0], self.values[1]) {
                (Some(x), Some(y)) => Some(x.hypot(y)),
                _ => None,
            },
            _ => None,
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
    parse_with_constants(text, &BTreeMap::new())
}

/// Parses `text`, replacing every identifier found in `constants` by its value.
pub fn parse_with_constants(text: &str, constants: &BTreeMap<String, f64>) -> Result<Expr, SyntaxError> {
    if text.trim().is_empty() {
        return Err(SyntaxError {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
        constants,
    };
    let expr = parser.sum()?;
    match parser.peek() {
        None => Ok(expr),
        Some(tok) => Err(SyntaxError {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    Open,
    Close,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("operator `{c}`"),
            TokenKind::Open => "`(`".into(),
            TokenKind::Close => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokenKind::Op(c as char)
            }
            b'(' => {
                i += 1;
                TokenKind::Open
            }
            b')' => {
                i += 1;
                TokenKind::Close
            }
            b',' => {
                i += 1;
                TokenKind::Comma
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part, only when followed by digits
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
                let literal = &text[start..i];
                let value = literal.parse::<f64>().map_err(|_| SyntaxError {
                    offset: start,
                    message: format!("malformed number `{literal}`"),
                })?;
                TokenKind::Num(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokenKind::Ident(text[start..i].to_string())
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(SyntaxError {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        tokens.push(Token { kind, offset: start });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c), ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Some(tok) if tok.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => {
                let found = tok.kind.describe();
                self.error(format!("expected {what}, found {found}"))
            }
            None => self.error(format!("expected {what}, found end of input")),
        }
    }

    fn sum(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.product()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.product()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let Some(tok) = self.peek().cloned() else {
            return self.error("expected operand, found end of input");
        };
        match tok.kind {
            TokenKind::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            TokenKind::Open => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(TokenKind::Close, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    return self.call(func);
                }
                if let Some(var) = Var::from_name(&name) {
                    return Ok(Expr::Var(var));
                }
                if let Some(&value) = self.constants.get(&name) {
                    return Ok(Expr::Const(value));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    _ => Err(SyntaxError {
                        offset: tok.offset,
                        message: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            other => self.error(format!("expected operand, found {}", other.describe())),
        }
    }

    fn call(&mut self, func: Func) -> Result<Expr, SyntaxError> {
        self.expect(TokenKind::Open, "`(` after function name")?;
        let mut args = vec![self.sum()?];
        while matches!(self.peek(), Some(t) if t.kind == TokenKind::Comma) {
            self.pos += 1;
            args.push(self.sum()?);
        }
        self.expect(TokenKind::Close, "`)`")?;
        if args.len() != func.arity() {
            return self.error(format!(
                "`{}` takes {} argument(s), got {}",
                func.name(),
                func.arity(),
                args.len()
            ));
        }
        Ok(Expr::Call(func, args))
    }
}

fn domain_error<T>(message: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError::Domain(message.into()))
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    /// True when the tree is a literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    /// Evaluates in IEEE double precision. Non-finite results are reported as
    /// domain errors instead of being propagated.
    pub fn eval(&self, env: &Bindings) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(v) => *v,
            Expr::Var(var) => env.get(*var).ok_or(EvalError::UnboundVariable(var.name()))?,
            Expr::Neg(inner) => -inner.eval(env)?,
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return domain_error(format!("division of {a} by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return domain_error(format!("negative base {a} with non-integer exponent {b}"));
                        }
                        if a == 0.0 && b < 0.0 {
                            return domain_error("zero raised to a negative power");
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(func, args) => {
                let x = args[0].eval(env)?;
                match func {
                    Func::Exp => x.exp(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Ln => {
                        if x <= 0.0 {
                            return domain_error(format!("ln of non-positive value {x}"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return domain_error(format!("sqrt of negative value {x}"));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                    Func::Arcsin => {
                        if !(-1.0..=1.0).contains(&x) {
                            return domain_error(format!("arcsin of {x} outside [-1, 1]"));
                        }
                        x.asin()
                    }
                    Func::Min => x.min(args[1].eval(env)?),
                    Func::Max => x.max(args[1].eval(env)?),
                }
            }
        };
        if !value.is_finite() {
            return domain_error(format!("non-finite result while evaluating `{self}`"));
        }
        Ok(value)
    }

    /// Variables referenced anywhere in the tree, sorted and deduplicated.
    pub fn variables(&self) -> Vec<Var> {
        fn walk(e: &Expr, out: &mut Vec<Var>) {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => out.push(*v),
                Expr::Neg(inner) => walk(inner, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(v) if v.is_sign_negative() => UNARY_PRECEDENCE,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => ATOM_PRECEDENCE,
            Expr::Neg(_) => UNARY_PRECEDENCE,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` is the shortest representation that round-trips
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_operand(f, inner, inner.precedence() < UNARY_PRECEDENCE)
            }
            Expr::Binary(op, lhs, rhs) => {
                let p = op.precedence();
                let right_assoc = *op == BinOp::Pow;
                let lp = lhs.precedence() < p || (right_assoc && lhs.precedence() == p);
                let rp = rhs.precedence() < p || (!right_assoc && rhs.precedence() == p);
                write_operand(f, lhs, lp)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, rhs, rp)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(v: f64) -> Box<Expr> {
        Box::new(Expr::Const(v))
    }

    fn var(v: Var) -> Box<Expr> {
        Box::new(Expr::Var(v))
    }

    fn ev(s: &str) -> f64 {
        parse(s).unwrap().eval(&Bindings::new()).unwrap()
    }

    #[test]
    fn parses_radial_drift_component() {
        let e = parse("x/(x^2+y^2)").unwrap();
        let expected = Expr::Binary(
            BinOp::Div,
            var(Var::X),
            Box::new(Expr::Binary(
                BinOp::Add,
                Box::new(Expr::Binary(BinOp::Pow, var(Var::X), c(2.0))),
                Box::new(Expr::Binary(BinOp::Pow, var(Var::Y), c(2.0))),
            )),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_constant() {
        assert_eq!(parse("1").unwrap(), Expr::Const(1.0));
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse("2*sin(1)+cos(").unwrap_err();
        assert_eq!(err.offset, 13);
    }

    #[test]
    fn syntax_errors() {
        assert_eq!(parse("foo + 1").unwrap_err().offset, 0);
        assert_eq!(parse("1 + * 2").unwrap_err().offset, 4);
        assert_eq!(parse("(1 + 2").unwrap_err().offset, 6);
        assert_eq!(parse("1 + 2)").unwrap_err().offset, 5);
        assert!(parse("").is_err());
        assert!(parse("min(1)").is_err());
        assert!(parse("sin(1, 2)").is_err());
        assert!(parse("1 $ 2").is_err());
    }

    #[test]
    fn evaluates_constant_expression() {
        let v = ev("2*sin(1)+cos(1)");
        let oracle = 2.0 * 1f64.sin() + 1f64.cos();
        assert!((v - 2.223_244_275_483_195).abs() < 1e-12);
        assert_eq!(v, oracle);
    }

    #[test]
    fn variable_lookup_and_identity() {
        let e = parse("r").unwrap();
        let env = Bindings::new().with(Var::R, 3.0).unwrap();
        assert_eq!(e.eval(&env).unwrap(), 3.0);
        assert_eq!(ev("exp(0)"), 1.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2+3*4"), 14.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("2^-1"), 0.5);
        assert_eq!(ev("8/4/2"), 1.0);
        assert_eq!(ev("8-4-2"), 2.0);
        assert_eq!(ev("min(3, max(1, 2))"), 2.0);
        assert_eq!(ev("1e-3*1000"), 1.0);
        assert!((ev("pi") - std::f64::consts::PI).abs() == 0.0);
    }

    #[test]
    fn derived_radius() {
        let e = parse("r").unwrap();
        assert_eq!(e.eval(&Bindings::point(3.0, 4.0, None)).unwrap(), 5.0);
        let env = Bindings::new().with(Var::X, 3.0).unwrap();
        assert_eq!(e.eval(&env), Err(EvalError::UnboundVariable("r")));
    }

    #[test]
    fn duplicate_binding_rejected() {
        let env = Bindings::new().with(Var::X, 1.0).unwrap();
        assert!(env.with(Var::X, 2.0).is_err());
    }

    #[test]
    fn domain_errors() {
        let env = Bindings::new();
        for s in [
            "ln(-1)",
            "ln(0)",
            "sqrt(-2)",
            "1/0",
            "(-2)^0.5",
            "arcsin(2)",
            "exp(1000)",
        ] {
            let res = parse(s).unwrap().eval(&env);
            assert!(matches!(res, Err(EvalError::Domain(_))), "{s}: {res:?}");
        }
        assert_eq!(ev("(-2)^3"), -8.0);
        let g = parse("exp(-r)/r*sin(r)").unwrap();
        assert!(g.eval(&Bindings::point(0.0, 0.0, None)).is_err());
    }

    #[test]
    fn constants_table() {
        let mut table = BTreeMap::new();
        table.insert("C0".to_string(), 2.5);
        let e = parse_with_constants("C0*r", &table).unwrap();
        assert_eq!(e.variables(), vec![Var::R]);
        assert_eq!(e.eval(&Bindings::radial(2.0, None)).unwrap(), 5.0);
    }

    #[test]
    fn printing_is_readable() {
        let e = parse("x/(x^2+y^2)").unwrap();
        assert_eq!(e.to_string(), "x / (x ^ 2.0 + y ^ 2.0)");
        let e = parse("-(x-1)^2").unwrap();
        assert_eq!(e.to_string(), "-(x - 1.0) ^ 2.0");
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| n.to_string()),
            (0.0f64..100.0).prop_map(|v| format!("{v:?}")),
            Just("x".to_string()),
            Just("y".to_string()),
            Just("r".to_string()),
            Just("lambda".to_string()),
            Just("pi".to_string()),
        ];
        leaf.prop_recursive(5, 48, 4, |inner| {
            prop_oneof![
                (
                    inner.clone(),
                    prop::sample::select(vec!["+", "-", "*", "/", "^"]),
                    inner.clone()
                )
                    .prop_map(|(a, op, b)| format!("{a}{op}{b}")),
                inner.clone().prop_map(|a| format!("-{a}")),
                inner.clone().prop_map(|a| format!("({a})")),
                (
                    prop::sample::select(vec!["exp", "sin", "cos", "ln", "sqrt", "abs", "arcsin"]),
                    inner.clone()
                )
                    .prop_map(|(f, a)| format!("{f}({a})")),
                (prop::sample::select(vec!["min", "max"]), inner.clone(), inner)
                    .prop_map(|(f, a, b)| format!("{f}({a},{b})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(src in arb_expr()) {
            let first = parse(&src).unwrap();
            let printed = first.to_string();
            let second = parse(&printed).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn eval_is_bitwise_deterministic(src in arb_expr(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let e = parse(&src).unwrap();
            let env = Bindings::point(x, y, Some(2.0));
            let a = e.eval(&env).map(f64::to_bits);
            let b = e.eval(&env).map(f64::to_bits);
            prop_assert_eq!(a, b);
        }
    }
}
