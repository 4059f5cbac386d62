//! Expression trees over chart coordinates: parsing, exact symbolic
//! differentiation, and pointwise evaluation.
//!
//! The grammar is deliberately small. Operators by precedence, low to high:
//!
//! | Precedence | Operators        | Associativity |
//! |------------|------------------|---------------|
//! | 1          | `+`, `-`         | left          |
//! | 2          | `*`, `/`         | left          |
//! | 3          | unary `-`        | —             |
//! | 4          | `^`              | right         |
//! | 5          | literals, names, `f(x)`, `(x)` | — |
//!
//! `pi` and `e` are reserved constant identifiers. Exponents of `^` must be
//! constant expressions so that differentiation stays closed-form; `f^g` with
//! a non-constant `g` is rejected at parse time.
//!
//! Trees are immutable after construction and safe to share across threads.

use std::fmt;

use thiserror::Error;

/// Binary operator kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Exponent subtree is restricted to constant expressions.
    Pow,
}

/// Single-argument function kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Tan => "tan",
            UnaryFn::Sinh => "sinh",
            UnaryFn::Cosh => "cosh",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryFn::Exp,
            "log" => UnaryFn::Log,
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "tan" => UnaryFn::Tan,
            "sinh" => UnaryFn::Sinh,
            "cosh" => UnaryFn::Cosh,
            "tanh" => UnaryFn::Tanh,
            "sqrt" => UnaryFn::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryFn::Exp => x.exp(),
            UnaryFn::Log => x.ln(),
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::Tan => x.tan(),
            UnaryFn::Sinh => x.sinh(),
            UnaryFn::Cosh => x.cosh(),
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Sqrt => x.sqrt(),
        }
    }
}

/// Symbolic expression over coordinates referenced by index.
///
/// Coordinate indices are bound to a chart's coordinate list by the caller;
/// the tree itself only knows slot numbers.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Func(UnaryFn, Box<Expr>),
}

/// Why a pointwise evaluation failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainFault {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    /// Negative base with a non-integer exponent, or 0 with a negative one.
    PowOutOfDomain,
    NonFinite,
    CoordOutOfRange,
}

impl fmt::Display for DomainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainFault::DivisionByZero => "division by zero",
            DomainFault::LogNonPositive => "log of a non-positive value",
            DomainFault::SqrtNegative => "sqrt of a negative value",
            DomainFault::PowOutOfDomain => "power outside the real domain",
            DomainFault::NonFinite => "non-finite result",
            DomainFault::CoordOutOfRange => "coordinate index exceeds point dimension",
        };
        f.write_str(s)
    }
}

/// Evaluation error carrying the offending subtree.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("{fault} in `{}`", node.display_indexed())]
pub struct EvalError {
    pub fault: DomainFault,
    pub node: Expr,
}

/// Parse error with a byte position into the source text.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

impl Expr {
    /// Smart constructor: addition with constant folding and `x + 0` removal.
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x + y).is_finite() => Expr::Const(x + y),
            (Expr::Const(z), b) if z == 0.0 => b,
            (a, Expr::Const(z)) if z == 0.0 => a,
            (a, b) => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x - y).is_finite() => Expr::Const(x - y),
            (a, Expr::Const(z)) if z == 0.0 => a,
            (Expr::Const(z), b) if z == 0.0 => Expr::neg(b),
            (a, b) => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) if (x * y).is_finite() => Expr::Const(x * y),
            (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
            (Expr::Const(o), b) if o == 1.0 => b,
            (a, Expr::Const(o)) if o == 1.0 => a,
            (a, b) => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            // Never fold away a zero divisor; eval must see it and fail.
            (Expr::Const(x), Expr::Const(y)) if y != 0.0 && (x / y).is_finite() => {
                Expr::Const(x / y)
            }
            (a, Expr::Const(o)) if o == 1.0 => a,
            (Expr::Const(z), b) if z == 0.0 && !matches!(b, Expr::Const(c) if c == 0.0) => {
                Expr::Const(0.0)
            }
            (a, b) => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        match (base, exponent) {
            (b, Expr::Const(e)) if e == 1.0 => b,
            (_, Expr::Const(e)) if e == 0.0 => Expr::Const(1.0),
            (Expr::Const(b), Expr::Const(e)) if b.powf(e).is_finite() => Expr::Const(b.powf(e)),
            (b, e) => Expr::Bin(BinOp::Pow, Box::new(b), Box::new(e)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn func(f: UnaryFn, a: Expr) -> Expr {
        if let Expr::Const(c) = a {
            let v = f.apply(c);
            // Out-of-domain constants stay symbolic so eval reports them.
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
        Expr::Func(f, Box::new(a))
    }

    /// True when the tree references no coordinate slot.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Coord(_) => false,
            Expr::Neg(a) | Expr::Func(_, a) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    /// Largest referenced coordinate slot, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(a) | Expr::Func(_, a) => a.max_coord(),
            Expr::Bin(_, a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// True when the tree references coordinate slot `i`.
    pub fn uses_coord(&self, i: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Coord(j) => *j == i,
            Expr::Neg(a) | Expr::Func(_, a) => a.uses_coord(i),
            Expr::Bin(_, a, b) => a.uses_coord(i) || b.uses_coord(i),
        }
    }

    /// Exact partial derivative with respect to coordinate slot `i`.
    ///
    /// Total on well-formed trees; the result is built through the folding
    /// constructors so repeated differentiation stays compact.
    pub fn diff(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Coord(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.diff(i)),
            Expr::Bin(BinOp::Add, a, b) => Expr::add(a.diff(i), b.diff(i)),
            Expr::Bin(BinOp::Sub, a, b) => Expr::sub(a.diff(i), b.diff(i)),
            Expr::Bin(BinOp::Mul, a, b) => Expr::add(
                Expr::mul(a.diff(i), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(i)),
            ),
            Expr::Bin(BinOp::Div, a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.diff(i), (**b).clone()),
                    Expr::mul((**a).clone(), b.diff(i)),
                ),
                Expr::pow((**b).clone(), Expr::Const(2.0)),
            ),
            // (f^c)' = c * f^(c-1) * f' with c constant by construction.
            Expr::Bin(BinOp::Pow, f, c) => Expr::mul(
                Expr::mul(
                    (**c).clone(),
                    Expr::pow((**f).clone(), Expr::sub((**c).clone(), Expr::Const(1.0))),
                ),
                f.diff(i),
            ),
            Expr::Func(f, a) => {
                let da = a.diff(i);
                let inner = (**a).clone();
                let outer = match f {
                    UnaryFn::Exp => Expr::func(UnaryFn::Exp, inner),
                    UnaryFn::Log => return Expr::div(da, inner),
                    UnaryFn::Sin => Expr::func(UnaryFn::Cos, inner),
                    UnaryFn::Cos => Expr::neg(Expr::func(UnaryFn::Sin, inner)),
                    UnaryFn::Tan => Expr::div(
                        Expr::Const(1.0),
                        Expr::pow(Expr::func(UnaryFn::Cos, inner), Expr::Const(2.0)),
                    ),
                    UnaryFn::Sinh => Expr::func(UnaryFn::Cosh, inner),
                    UnaryFn::Cosh => Expr::func(UnaryFn::Sinh, inner),
                    UnaryFn::Tanh => Expr::div(
                        Expr::Const(1.0),
                        Expr::pow(Expr::func(UnaryFn::Cosh, inner), Expr::Const(2.0)),
                    ),
                    UnaryFn::Sqrt => {
                        return Expr::div(
                            da,
                            Expr::mul(Expr::Const(2.0), Expr::func(UnaryFn::Sqrt, inner)),
                        )
                    }
                };
                Expr::mul(outer, da)
            }
        }
    }

    /// IEEE double-precision value of the tree at `point`.
    ///
    /// Domain faults (division by zero, log of a non-positive value, ...)
    /// are reported together with the offending subtree.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let fail = |fault| {
            Err(EvalError {
                fault,
                node: self.clone(),
            })
        };
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => match point.get(*i) {
                Some(v) => *v,
                None => return fail(DomainFault::CoordOutOfRange),
            },
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval(point)?;
                let y = b.eval(point)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return fail(DomainFault::DivisionByZero);
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x < 0.0 && y.fract() != 0.0 {
                            return fail(DomainFault::PowOutOfDomain);
                        }
                        if x == 0.0 && y < 0.0 {
                            return fail(DomainFault::PowOutOfDomain);
                        }
                        x.powf(y)
                    }
                }
            }
            Expr::Func(f, a) => {
                let x = a.eval(point)?;
                match f {
                    UnaryFn::Log if x <= 0.0 => return fail(DomainFault::LogNonPositive),
                    UnaryFn::Sqrt if x < 0.0 => return fail(DomainFault::SqrtNegative),
                    _ => {}
                }
                f.apply(x)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            fail(DomainFault::NonFinite)
        }
    }

    /// Constant folding and 0/1 identities; pointwise equal to the input on
    /// every point where the input evaluates.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Coord(_) => self.clone(),
            Expr::Neg(a) => Expr::neg(a.simplify()),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match op {
                    BinOp::Add => Expr::add(a, b),
                    BinOp::Sub => Expr::sub(a, b),
                    BinOp::Mul => Expr::mul(a, b),
                    BinOp::Div => Expr::div(a, b),
                    BinOp::Pow => Expr::pow(a, b),
                }
            }
            Expr::Func(f, a) => Expr::func(*f, a.simplify()),
        }
    }

    /// Render with coordinate names; output reparses to an equivalent tree.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }

    /// Render with positional placeholder names `w1`, `w2`, ...
    pub fn display_indexed(&self) -> String {
        let n = self.max_coord().map_or(0, |m| m + 1);
        let names: Vec<String> = (1..=n).map(|i| format!("w{i}")).collect();
        format!("{}", self.display(&names))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 3,
            Expr::Const(_) | Expr::Coord(_) | Expr::Func(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Bin(BinOp::Pow, ..) => 4,
        }
    }
}

/// Precedence-aware printer tied to a coordinate name list.
pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.names, f)
    }
}

fn write_child(
    child: &Expr,
    names: &[String],
    f: &mut fmt::Formatter<'_>,
    needs_parens: bool,
) -> fmt::Result {
    if needs_parens {
        f.write_str("(")?;
        write_expr(child, names, f)?;
        f.write_str(")")
    } else {
        write_expr(child, names, f)
    }
}

fn write_expr(e: &Expr, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "{c}"),
        Expr::Coord(i) => match names.get(*i) {
            Some(n) => f.write_str(n),
            None => write!(f, "#{i}"),
        },
        Expr::Neg(a) => {
            f.write_str("-")?;
            write_child(a, names, f, a.precedence() < 4)
        }
        Expr::Bin(op, a, b) => {
            let (sym, prec) = match op {
                BinOp::Add => ("+", 1),
                BinOp::Sub => ("-", 1),
                BinOp::Mul => ("*", 2),
                BinOp::Div => ("/", 2),
                BinOp::Pow => ("^", 4),
            };
            if *op == BinOp::Pow {
                // Right-associative: parenthesize the base at equal precedence.
                write_child(a, names, f, a.precedence() <= prec)?;
                write!(f, " {sym} ")?;
                write_child(b, names, f, b.precedence() < prec)
            } else {
                write_child(a, names, f, a.precedence() < prec)?;
                write!(f, " {sym} ")?;
                write_child(b, names, f, b.precedence() <= prec)
            }
        }
        Expr::Func(g, a) => {
            f.write_str(g.name())?;
            f.write_str("(")?;
            write_expr(a, names, f)?;
            f.write_str(")")
        }
    }
}

/// Named constants visible to the parser in addition to `pi` and `e`.
pub type ConstEnv<'a> = &'a [(String, f64)];

/// Parse `text` over the named coordinates.
///
/// Coordinate names bind to slots in list order. `pi` and `e` are reserved;
/// a coordinate may not shadow them.
pub fn parse(text: &str, coords: &[String]) -> Result<Expr, ParseError> {
    parse_with_env(text, coords, &[])
}

/// Like [`parse`] but with extra named constants (metric-file `param`s).
pub fn parse_with_env(text: &str, coords: &[String], env: ConstEnv) -> Result<Expr, ParseError> {
    for name in coords {
        if name == "pi" || name == "e" {
            return Err(ParseError::new(
                0,
                format!("coordinate name `{name}` shadows a reserved constant"),
            ));
        }
    }
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        coords,
        env,
        src_len: text.len(),
    };
    let expr = p.expression()?;
    match p.peek() {
        None => Ok(expr),
        Some(t) => Err(ParseError::new(
            t.pos,
            format!("unexpected token `{}`", t.kind.describe()),
        )),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("{v}"),
            TokenKind::Ident(s) => s.clone(),
            TokenKind::Plus => "+".into(),
            TokenKind::Minus => "-".into(),
            TokenKind::Star => "*".into(),
            TokenKind::Slash => "/".into(),
            TokenKind::Caret => "^".into(),
            TokenKind::LParen => "(".into(),
            TokenKind::RParen => ")".into(),
            TokenKind::Comma => ",".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                let kind = match c {
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '*' => TokenKind::Star,
                    '/' => TokenKind::Slash,
                    '^' => TokenKind::Caret,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    _ => TokenKind::Comma,
                };
                out.push(Token { kind, pos });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                // Scientific suffix only when digits follow, so `2*e` stays
                // an identifier reference while `2e5` is a literal.
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
                let lit = &text[start..i];
                let value: f64 = lit
                    .parse()
                    .map_err(|_| ParseError::new(start, format!("bad number literal `{lit}`")))?;
                out.push(Token {
                    kind: TokenKind::Number(value),
                    pos: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    pos: start,
                });
            }
            other => {
                return Err(ParseError::new(pos, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    coords: &'a [String],
    env: ConstEnv<'a>,
    src_len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next_pos(&self) -> usize {
        self.peek().map_or(self.src_len, |t| t.pos)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().map(|t| &t.kind) == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expression(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(&TokenKind::Plus) {
                let rhs = self.term()?;
                lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
            } else if self.eat(&TokenKind::Minus) {
                let rhs = self.term()?;
                lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(&TokenKind::Star) {
                let rhs = self.unary()?;
                lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
            } else if self.eat(&TokenKind::Slash) {
                let rhs = self.unary()?;
                lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&TokenKind::Minus) {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(&TokenKind::Caret) {
            let exp_pos = self.next_pos();
            let exponent = self.unary()?;
            if !exponent.is_constant() {
                return Err(ParseError::new(
                    exp_pos,
                    "exponent of `^` must be a constant expression",
                ));
            }
            Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => {
                return Err(ParseError::new(self.src_len, "unexpected end of input"));
            }
        };
        match tok.kind {
            TokenKind::Number(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            TokenKind::LParen => {
                self.pos += 1;
                let inner = self.expression()?;
                if self.eat(&TokenKind::RParen) {
                    Ok(inner)
                } else {
                    Err(ParseError::new(self.next_pos(), "expected `)`"))
                }
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                if self.peek().map(|t| &t.kind) == Some(&TokenKind::LParen) {
                    return self.call(&name, tok.pos);
                }
                if let Some(i) = self.coords.iter().position(|c| c == &name) {
                    return Ok(Expr::Coord(i));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    _ => {
                        if let Some((_, v)) = self.env.iter().find(|(n, _)| n == &name) {
                            Ok(Expr::Const(*v))
                        } else if UnaryFn::from_name(&name).is_some() {
                            Err(ParseError::new(
                                tok.pos,
                                format!("function `{name}` requires an argument list"),
                            ))
                        } else {
                            Err(ParseError::new(
                                tok.pos,
                                format!("unknown identifier `{name}`"),
                            ))
                        }
                    }
                }
            }
            other => Err(ParseError::new(
                tok.pos,
                format!("unexpected token `{}`", other.describe()),
            )),
        }
    }

    fn call(&mut self, name: &str, name_pos: usize) -> Result<Expr, ParseError> {
        let Some(f) = UnaryFn::from_name(name) else {
            return Err(ParseError::new(
                name_pos,
                format!("unknown function `{name}`"),
            ));
        };
        self.eat(&TokenKind::LParen);
        let mut args = vec![self.expression()?];
        while self.eat(&TokenKind::Comma) {
            args.push(self.expression()?);
        }
        if !self.eat(&TokenKind::RParen) {
            return Err(ParseError::new(self.next_pos(), "expected `)`"));
        }
        if args.len() != 1 {
            return Err(ParseError::new(
                name_pos,
                format!("function `{name}` takes 1 argument, got {}", args.len()),
            ));
        }
        Ok(Expr::Func(f, Box::new(args.pop().unwrap())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords() -> Vec<String> {
        ["w1", "w2", "w3", "w4"].map(String::from).to_vec()
    }

    fn p(text: &str) -> Expr {
        parse(text, &coords()).unwrap()
    }

    #[test]
    fn parses_exp_of_sum() {
        assert_eq!(
            p("exp(w1 + 1)"),
            Expr::Func(
                UnaryFn::Exp,
                Box::new(Expr::Bin(
                    BinOp::Add,
                    Box::new(Expr::Coord(0)),
                    Box::new(Expr::Const(1.0))
                ))
            )
        );
    }

    #[test]
    fn parses_scaled_potential() {
        assert_eq!(
            p("2 * exp(w1 + 1)"),
            Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Const(2.0)),
                Box::new(p("exp(w1+1)"))
            )
        );
    }

    #[test]
    fn reports_syntax_error_position() {
        let err = parse("w1 + * w2", &coords()).unwrap_err();
        assert_eq!(err.position, 5);
        assert!(err.message.contains('*'));
    }

    #[test]
    fn rejects_unknown_identifier() {
        let err = parse("w1 + zz", &coords()).unwrap_err();
        assert!(err.message.contains("zz"));
    }

    #[test]
    fn rejects_wrong_arity() {
        let err = parse("sin(w1, w2)", &coords()).unwrap_err();
        assert!(err.message.contains("1 argument"));
    }

    #[test]
    fn rejects_non_constant_exponent() {
        let err = parse("w1 ^ w2", &coords()).unwrap_err();
        assert!(err.message.contains("constant"));
        // Constant arithmetic in the exponent is fine.
        assert!(parse("w1 ^ (2 + 1)", &coords()).is_ok());
    }

    #[test]
    fn reserved_constants_bind() {
        assert_eq!(p("pi"), Expr::Const(std::f64::consts::PI));
        assert_eq!(p("1 / (2 * e)"), p("1 / (2 * e)"));
        let v = p("1 / (2 * e)").eval(&[0.0; 4]).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::E)).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        // ^ above unary minus: -x^2 == -(x^2)
        let v = p("-w1 ^ 2").eval(&[3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, -9.0);
        // Right-associative power.
        let v = p("2 ^ 3 ^ 2").eval(&[0.0; 4]).unwrap();
        assert_eq!(v, 512.0);
        // Left-associative subtraction.
        let v = p("10 - 3 - 2").eval(&[0.0; 4]).unwrap();
        assert_eq!(v, 5.0);
        // Exponent may carry a sign.
        let v = p("2 ^ -1").eval(&[0.0; 4]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn diff_chain_rule_exp() {
        let e = p("exp(w1 + 1)");
        assert_eq!(e.diff(0), e);
        assert_eq!(e.diff(1), Expr::Const(0.0));
    }

    #[test]
    fn diff_product_rule() {
        let e = p("w1^2 * w2");
        let d = e.diff(0);
        let at = [3.0, 5.0, 0.0, 0.0];
        assert!((d.eval(&at).unwrap() - 2.0 * 3.0 * 5.0).abs() < 1e-12);
        assert_eq!(p("w1^2").diff(1), Expr::Const(0.0));
    }

    #[test]
    fn eval_examples() {
        assert!((p("exp(w1 + 1)").eval(&[0.0; 4]).unwrap() - std::f64::consts::E).abs() < 1e-12);
        // 2 e^2 at w1 = 1.
        let v = p("2 * exp(w1 + 1)").eval(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - 14.7781121978613).abs() < 1e-10);
    }

    #[test]
    fn eval_domain_errors() {
        let err = p("1 / w1").eval(&[0.0; 4]).unwrap_err();
        assert_eq!(err.fault, DomainFault::DivisionByZero);
        let err = p("log(w1)").eval(&[-1.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.fault, DomainFault::LogNonPositive);
        let err = p("sqrt(w1)").eval(&[-1.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.fault, DomainFault::SqrtNegative);
        let err = p("w1 ^ 0.5").eval(&[-1.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.fault, DomainFault::PowOutOfDomain);
        // The offending node is carried in the error.
        let err = p("w2 + 1 / w1").eval(&[0.0; 4]).unwrap_err();
        assert!(format!("{err}").contains("1 / w1"));
    }

    #[test]
    fn simplify_identities() {
        let raw = Expr::Bin(
            BinOp::Mul,
            Box::new(Expr::Const(0.0)),
            Box::new(p("exp(w1)")),
        );
        assert_eq!(raw.simplify(), Expr::Const(0.0));
        assert_eq!(p("2 + 3").simplify(), Expr::Const(5.0));
        assert_eq!(p("w1 ^ 1").simplify(), Expr::Coord(0));
        assert_eq!(p("w1 * 1 + 0").simplify(), Expr::Coord(0));
    }

    #[test]
    fn simplify_keeps_zero_divisors() {
        // 0 / 0 and 1 / 0 must keep failing at eval after simplify.
        let e = Expr::Bin(
            BinOp::Div,
            Box::new(Expr::Const(1.0)),
            Box::new(Expr::Const(0.0)),
        );
        assert_eq!(e.simplify().eval(&[]).unwrap_err().fault, DomainFault::DivisionByZero);
    }

    #[test]
    fn print_reparses_to_equal_eval() {
        let names = coords();
        for src in [
            "2 * exp(w1 + 1)",
            "w1^2 * w2 - w3 / (1 + w4^2)",
            "-w1 ^ 2",
            "sin(w1) * cos(w2) + tanh(w3)",
            "(w1 + w2) * (w1 - w2)",
            "1 / (2 * e) + pi",
            "2 ^ -1 * w317 / 1e3".replace("w317", "w3").as_str(),
        ] {
            let tree = parse(src, &names).unwrap();
            let printed = format!("{}", tree.display(&names));
            let reparsed = parse(&printed, &names).unwrap();
            let pt = [0.3, -0.7, 1.9, 0.1];
            assert_eq!(
                tree.eval(&pt).unwrap(),
                reparsed.eval(&pt).unwrap(),
                "round-trip failed for `{src}` -> `{printed}`"
            );
        }
    }
}
