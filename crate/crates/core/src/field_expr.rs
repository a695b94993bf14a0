//! A small arithmetic language for the coefficient fields `f`, `b`, `φ₁`, `φ₂`.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 'y' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^-1` is `0.5`.

use std::fmt;

use crate::geometry::Point;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: &'static str,
        got: usize,
    },
    #[error("empty expression")]
    Empty,
    #[error("domain error in `{expr}` at ({x}, {y})")]
    Domain { expr: String, x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn is_variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
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
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Canonical, fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X => f.write_str("x"),
            Expr::Y => f.write_str("y"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Expr {
    pub fn eval(&self, p: Point) -> Result<f64, FieldError> {
        let domain = |e: &Expr| FieldError::Domain {
            expr: e.to_string(),
            x: p.x,
            y: p.y,
        };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::X => p.x,
            Expr::Y => p.y,
            Expr::Neg(e) => -e.eval(p)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(p)?, b.eval(p)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain(self));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(func, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(p))
                    .collect::<Result<Vec<_>, _>>()?;
                match func {
                    Func::Sin => vals[0].sin(),
                    Func::Cos => vals[0].cos(),
                    Func::Exp => vals[0].exp(),
                    Func::Abs => vals[0].abs(),
                    Func::Sqrt => {
                        if vals[0] < 0.0 {
                            return Err(domain(self));
                        }
                        vals[0].sqrt()
                    }
                    Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(self))
        }
    }

    /// True when the expression does not reference `x` or `y`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::X | Expr::Y => false,
            Expr::Neg(e) => e.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
            Expr::Call(_, args) => args.iter().all(Expr::is_constant),
        }
    }
}

/// A parsed coefficient field together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    source: String,
    ast: Expr,
}

impl ScalarField {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn eval(&self, p: Point) -> Result<f64, FieldError> {
        self.ast.eval(p)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value:?}"),
            ast: Expr::Num(value),
        }
    }
}

impl std::str::FromStr for ScalarField {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_field(s)
    }
}

pub fn parse_field(text: &str) -> Result<ScalarField, FieldError> {
    parse_with_level(text, None)
}

/// Parses a per-level expression in which the identifier `n` stands for the
/// pre-fractal level.
pub fn parse_field_at_level(text: &str, level: u32) -> Result<ScalarField, FieldError> {
    parse_with_level(text, Some(level as f64))
}

/// Parses and evaluates an expression that must not depend on `x` or `y`;
/// used for numeric config values such as `h = 3^-4`.
pub fn eval_constant(text: &str, level: Option<u32>) -> Result<f64, FieldError> {
    let field = parse_with_level(text, level.map(f64::from))?;
    if !field.ast.is_constant() {
        return Err(FieldError::Syntax {
            offset: 0,
            expected: "a constant expression".into(),
        });
    }
    field.eval(Point::default())
}

pub fn eval_field(field: &ScalarField, p: Point) -> Result<f64, FieldError> {
    field.eval(p)
}

fn parse_with_level(text: &str, level: Option<f64>) -> Result<ScalarField, FieldError> {
    if text.trim().is_empty() {
        return Err(FieldError::Empty);
    }
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        level,
    };
    let ast = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.syntax("an operator or end of input"));
    }
    Ok(ScalarField {
        source: text.to_string(),
        ast,
    })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    level: Option<f64>,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn syntax(&self, expected: &str) -> FieldError {
        FieldError::Syntax {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, FieldError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, FieldError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, FieldError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, FieldError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("`)`"));
                }
                Ok(e)
            }
            _ => Err(self.syntax("a number, variable, function call or `(`")),
        }
    }

    fn number(&mut self) -> Result<Expr, FieldError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.syntax("a number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| FieldError::Syntax {
                offset: start,
                expected: "a number".into(),
            })
    }

    fn identifier(&mut self) -> Result<Expr, FieldError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match name {
            "x" => return Ok(Expr::X),
            "y" => return Ok(Expr::Y),
            "n" if self.level.is_some() => return Ok(Expr::Num(self.level.unwrap())),
            _ => {}
        }
        let Some(func) = Func::from_name(name) else {
            if self.peek() == Some(b'(') {
                return Err(FieldError::UnknownFunction {
                    name: name.to_string(),
                    offset: start,
                });
            }
            self.pos = start;
            return Err(self.syntax("`x`, `y` or a function name"));
        };
        if !self.eat(b'(') {
            return Err(self.syntax("`(`"));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.syntax("`,` or `)`"));
        }
        let ok = if func.is_variadic() {
            args.len() >= 2
        } else {
            args.len() == 1
        };
        if !ok {
            return Err(FieldError::Arity {
                name: name.to_string(),
                expected: if func.is_variadic() {
                    "at least 2"
                } else {
                    "1"
                },
                got: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(text: &str, x: f64, y: f64) -> f64 {
        parse_field(text).unwrap().eval(Point::new(x, y)).unwrap()
    }

    #[test]
    fn basic_examples() {
        assert_eq!(ev("x^2+y", 1.0, 2.0), 3.0);
        assert_eq!(ev("min(1, x)", 2.0, 0.0), 1.0);
        assert_eq!(ev("sin(0)", 0.3, 0.7), 0.0);
        assert_eq!(ev("exp(0)+abs(-2)", 0.0, 0.0), 3.0);
        assert_eq!(ev("max(x, y, 3)", 1.0, 2.0), 3.0);
        assert_eq!(ev("1.5e1 - .5", 0.0, 0.0), 14.5);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2+3*4", 0.0, 0.0), 14.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("8/2/2", 0.0, 0.0), 2.0);
        assert_eq!(ev("1-2-3", 0.0, 0.0), -4.0);
        assert_eq!(ev("--3", 0.0, 0.0), 3.0);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_field("1+*2") {
            Err(FieldError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_field("(x"),
            Err(FieldError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse_field("x y"),
            Err(FieldError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(parse_field("   "), Err(FieldError::Empty)));
        assert!(matches!(
            parse_field("z+1"),
            Err(FieldError::Syntax { offset: 0, .. })
        ));
    }

    #[test]
    fn function_errors() {
        assert!(matches!(
            parse_field("tan(x)"),
            Err(FieldError::UnknownFunction { offset: 0, .. })
        ));
        assert!(matches!(
            parse_field("sin(x, y)"),
            Err(FieldError::Arity { got: 2, .. })
        ));
        assert!(matches!(
            parse_field("min(x)"),
            Err(FieldError::Arity { got: 1, .. })
        ));
    }

    #[test]
    fn domain_errors() {
        let f = parse_field("1/(x-1)").unwrap();
        match f.eval(Point::new(1.0, 0.0)) {
            Err(FieldError::Domain { expr, x, .. }) => {
                assert_eq!(x, 1.0);
                assert!(expr.contains('/'));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_field("sqrt(x)")
            .unwrap()
            .eval(Point::new(-1.0, 0.0))
            .is_err());
        assert!(parse_field("exp(x)")
            .unwrap()
            .eval(Point::new(1e6, 0.0))
            .is_err());
    }

    #[test]
    fn level_identifier() {
        let f = parse_field_at_level("0.1*(1 - 2^-n) + x*0", 3).unwrap();
        assert!((f.eval(Point::default()).unwrap() - 0.0875).abs() < 1e-15);
        assert!(parse_field("n").is_err());
        assert_eq!(eval_constant("3^-2", None).unwrap(), 1.0 / 9.0);
        assert!(eval_constant("x", None).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            Just(Expr::X),
            Just(Expr::Y),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![Just(Func::Sin), Just(Func::Abs), Just(Func::Sqrt)],
                    inner.clone()
                )
                    .prop_map(|(f, a)| Expr::Call(f, vec![a])),
                (
                    prop_oneof![Just(Func::Min), Just(Func::Max)],
                    prop::collection::vec(inner, 2..4)
                )
                    .prop_map(|(f, a)| Expr::Call(f, a)),
            ]
        })
    }

    proptest! {
        #[test]
        fn printer_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let parsed = parse_field(&printed).unwrap();
            prop_assert_eq!(parsed.ast(), &e);
        }

        #[test]
        fn evaluation_is_deterministic(e in arb_expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let p = Point::new(x, y);
            let a = e.eval(p);
            let b = e.eval(p);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
