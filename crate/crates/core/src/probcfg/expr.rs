//! Arithmetic expressions over the spatial variable `x` and the age `t`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | 'x' | 't' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-2^2` is `-4`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at byte {pos}")]
    DivisionByZero { pos: usize },
    #[error("log of non-positive value {value} at byte {pos}")]
    LogDomain { pos: usize, value: f64 },
    #[error("sqrt of negative value {value} at byte {pos}")]
    SqrtDomain { pos: usize, value: f64 },
    #[error("non-finite result at byte {pos}")]
    NonFinite { pos: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Exp,
    Log,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 2,
            Func::Pow => n == 2,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin {
        op: BinOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
        pos: usize,
    },
    Call {
        func: Func,
        args: Vec<Node>,
        pos: usize,
    },
}

/// A parsed coefficient expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    source: String,
    root: Node,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self {
            source: source.trim().to_string(),
            root,
        })
    }

    /// Shorthand for a literal constant.
    pub fn constant(v: f64) -> Self {
        Self {
            source: format!("{v:?}"),
            root: Node::Num(v),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        eval(&self.root, x, t)
    }

    pub fn uses(&self, var: Var) -> bool {
        uses(&self.root, var)
    }

    /// Value of an expression that depends on neither `x` nor `t`.
    pub fn constant_value(&self) -> Option<f64> {
        if self.uses(Var::X) || self.uses(Var::T) {
            None
        } else {
            self.eval(0.0, 0.0).ok()
        }
    }
}

impl fmt::Display for Expression {
    /// Fully parenthesised form that re-parses to an equivalent tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var(Var::X) => f.write_str("x"),
        Node::Var(Var::T) => f.write_str("t"),
        Node::Neg(inner) => {
            f.write_str("(-")?;
            write_node(inner, f)?;
            f.write_str(")")
        }
        Node::Bin { op, lhs, rhs, .. } => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            f.write_str("(")?;
            write_node(lhs, f)?;
            write!(f, " {sym} ")?;
            write_node(rhs, f)?;
            f.write_str(")")
        }
        Node::Call { func, args, .. } => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_node(a, f)?;
            }
            f.write_str(")")
        }
    }
}

fn uses(node: &Node, var: Var) -> bool {
    match node {
        Node::Num(_) => false,
        Node::Var(v) => *v == var,
        Node::Neg(inner) => uses(inner, var),
        Node::Bin { lhs, rhs, .. } => uses(lhs, var) || uses(rhs, var),
        Node::Call { args, .. } => args.iter().any(|a| uses(a, var)),
    }
}

fn finite(v: f64, pos: usize) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { pos })
    }
}

fn eval(node: &Node, x: f64, t: f64) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Var(Var::X) => Ok(x),
        Node::Var(Var::T) => Ok(t),
        Node::Neg(inner) => Ok(-eval(inner, x, t)?),
        Node::Bin { op, lhs, rhs, pos } => {
            let a = eval(lhs, x, t)?;
            let b = eval(rhs, x, t)?;
            let pos = *pos;
            match op {
                BinOp::Add => finite(a + b, pos),
                BinOp::Sub => finite(a - b, pos),
                BinOp::Mul => finite(a * b, pos),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero { pos })
                    } else {
                        finite(a / b, pos)
                    }
                }
                BinOp::Pow => finite(a.powf(b), pos),
            }
        }
        Node::Call { func, args, pos } => {
            let pos = *pos;
            let a = eval(&args[0], x, t)?;
            match func {
                Func::Min | Func::Max => {
                    let mut acc = a;
                    for arg in &args[1..] {
                        let v = eval(arg, x, t)?;
                        acc = if *func == Func::Min {
                            acc.min(v)
                        } else {
                            acc.max(v)
                        };
                    }
                    Ok(acc)
                }
                Func::Exp => finite(a.exp(), pos),
                Func::Log => {
                    if a <= 0.0 {
                        Err(EvalError::LogDomain { pos, value: a })
                    } else {
                        Ok(a.ln())
                    }
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        Err(EvalError::SqrtDomain { pos, value: a })
                    } else {
                        Ok(a.sqrt())
                    }
                }
                Func::Abs => Ok(a.abs()),
                Func::Pow => {
                    let b = eval(&args[1], x, t)?;
                    finite(a.powf(b), pos)
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            let pos = self.pos;
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin {
                op: BinOp::Pow,
                lhs: Box::new(base),
                rhs: Box::new(exponent),
                pos,
            });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.err("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.err("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>().map(Node::Num).map_err(|_| ExprError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        match name {
            "x" => return Ok(Node::Var(Var::X)),
            "t" => return Ok(Node::Var(Var::T)),
            _ => {}
        }
        let Some(func) = Func::from_name(name) else {
            return Err(ExprError::UnknownIdentifier {
                pos: start,
                name: name.to_string(),
            });
        };
        self.expect(b'(')?;
        let mut args = vec![self.expr()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        if !func.arity_ok(args.len()) {
            return Err(ExprError::Syntax {
                pos: start,
                msg: format!("wrong number of arguments to `{name}`"),
            });
        }
        Ok(Node::Call {
            func,
            args,
            pos: start,
        })
    }
}
