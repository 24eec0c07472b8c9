//! Closed-form scalar expressions with exact symbolic derivatives.
//!
//! Grammar: numeric literals, declared variables, `+ - * / ^`, unary minus,
//! parentheses, the constants `pi` and `e`, and the functions
//! `sin cos tan exp log sqrt abs sign min max tanh smoothstep`.
//!
//! `sign` is 0 at 0, so `abs` differentiates to `sign` everywhere.
//!
//! `smoothstep(a, b, s)` is the clamped quintic `6u^5 - 15u^4 + 10u^3` with
//! `u = (s - a) / (b - a)`; it is C² and equals 0 for `u <= 0`, 1 for `u >= 1`.
//! Internally it is stored as `sstep(u)`; the derivatives `sstep1` … `sstep5`
//! and the antiderivative `sstepint` are also accepted by the parser so that
//! printed derivative trees parse back.

mod diff;
mod parser;

use crate::scalar::{lit, Scalar};
use std::collections::HashMap;
use std::fmt;

/// Errors raised while parsing or evaluating expressions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at offset {offset} expects {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("missing binding for variable `{0}`")]
    MissingBinding(String),
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
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
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Tanh,
    Min,
    Max,
    /// Clamped quintic step and its derivatives of order 0..=5.
    Step(u8),
    /// Antiderivative of `Step(0)` vanishing at u = 0.
    StepInt,
}

impl Func {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Step(0) => "sstep",
            Func::Step(1) => "sstep1",
            Func::Step(2) => "sstep2",
            Func::Step(3) => "sstep3",
            Func::Step(4) => "sstep4",
            Func::Step(_) => "sstep5",
            Func::StepInt => "sstepint",
        }
    }

    pub(crate) fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub(crate) fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            "sstep" => Func::Step(0),
            "sstep1" => Func::Step(1),
            "sstep2" => Func::Step(2),
            "sstep3" => Func::Step(3),
            "sstep4" => Func::Step(4),
            "sstep5" => Func::Step(5),
            "sstepint" => Func::StepInt,
            _ => return None,
        })
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with its declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    root: Node,
    variables: Vec<String>,
    source: String,
}

impl ScalarExpr {
    /// Parses `text` over the declared `variables`.
    pub fn parse(text: &str, variables: &[&str]) -> Result<Self, ExprError> {
        let vars: Vec<String> = variables.iter().map(|v| v.to_string()).collect();
        let root = parser::parse(text, &vars)?;
        Ok(ScalarExpr {
            root,
            variables: vars,
            source: text.to_string(),
        })
    }

    /// A constant expression over the given variables.
    pub fn constant(value: f64, variables: &[&str]) -> Self {
        let root = Node::Const(value);
        let source = print_node(&root, &[]);
        ScalarExpr {
            root,
            variables: variables.iter().map(|v| v.to_string()).collect(),
            source,
        }
    }

    pub(crate) fn from_node(root: Node, variables: Vec<String>) -> Self {
        let source = print_node(&root, &variables);
        ScalarExpr {
            root,
            variables,
            source,
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// The text this expression was parsed from (or its printed form when built programmatically).
    pub fn source(&self) -> &str {
        &self.source
    }

    /// True if no variable occurs in the tree.
    pub fn is_constant(&self) -> bool {
        !contains_var(&self.root)
    }

    /// Evaluates with named bindings.
    pub fn eval(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        let mut vals = Vec::with_capacity(self.variables.len());
        for v in &self.variables {
            match bindings.get(v) {
                Some(x) => vals.push(*x),
                None => return Err(ExprError::MissingBinding(v.clone())),
            }
        }
        self.eval_at(&vals)
    }

    /// Evaluates with positional values in declaration order.
    pub fn eval_at<T: Scalar>(&self, values: &[T]) -> Result<T, ExprError> {
        if values.len() < self.variables.len() {
            return Err(ExprError::MissingBinding(
                self.variables[values.len()].clone(),
            ));
        }
        eval_node(&self.root, values)
    }

    /// Evaluates a single-variable expression.
    pub fn eval1<T: Scalar>(&self, x: T) -> Result<T, ExprError> {
        self.eval_at(&[x])
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Result<ScalarExpr, ExprError> {
        let idx = self
            .variables
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| ExprError::UndeclaredVariable(var.to_string()))?;
        let d = diff::derivative(&self.root, idx);
        Ok(ScalarExpr::from_node(d, self.variables.clone()))
    }

    /// Returns `self + c` as a new expression.
    pub fn plus_constant(&self, c: f64) -> ScalarExpr {
        let node = Node::Bin(
            BinOp::Add,
            Box::new(self.root.clone()),
            Box::new(Node::Const(c)),
        );
        ScalarExpr::from_node(node, self.variables.clone())
    }

    /// Returns `-self`.
    pub fn negated(&self) -> ScalarExpr {
        ScalarExpr::from_node(Node::Neg(Box::new(self.root.clone())), self.variables.clone())
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_node(&self.root, &self.variables))
    }
}

fn contains_var(n: &Node) -> bool {
    match n {
        Node::Const(_) => false,
        Node::Var(_) => true,
        Node::Neg(a) => contains_var(a),
        Node::Bin(_, a, b) => contains_var(a) || contains_var(b),
        Node::Call(_, args) => args.iter().any(contains_var),
    }
}

pub(crate) fn is_var_free(n: &Node) -> bool {
    !contains_var(n)
}

/// Fully parenthesized printer; output parses back to an equivalent tree.
pub(crate) fn print_node(n: &Node, vars: &[String]) -> String {
    match n {
        Node::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                format!("(-{:?})", -c)
            } else {
                format!("{:?}", c)
            }
        }
        Node::Var(i) => vars
            .get(*i)
            .cloned()
            .unwrap_or_else(|| format!("_v{}", i)),
        Node::Neg(a) => format!("(-{})", print_node(a, vars)),
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            format!("({} {} {})", print_node(a, vars), sym, print_node(b, vars))
        }
        Node::Call(func, args) => {
            let inner: Vec<String> = args.iter().map(|a| print_node(a, vars)).collect();
            format!("{}({})", func.name(), inner.join(", "))
        }
    }
}

fn domain<T>(msg: &str) -> Result<T, ExprError> {
    Err(ExprError::Domain(msg.to_string()))
}

fn finite<T: Scalar>(x: T, what: &str) -> Result<T, ExprError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ExprError::Domain(format!("{} produced a non-finite value", what)))
    }
}

fn eval_node<T: Scalar>(n: &Node, vals: &[T]) -> Result<T, ExprError> {
    match n {
        Node::Const(c) => Ok(lit(*c)),
        Node::Var(i) => {
            let x = vals[*i];
            if x.is_finite() {
                Ok(x)
            } else {
                domain("non-finite variable value")
            }
        }
        Node::Neg(a) => Ok(-eval_node(a, vals)?),
        Node::Bin(op, a, b) => {
            let x = eval_node(a, vals)?;
            let y = eval_node(b, vals)?;
            match op {
                BinOp::Add => finite(x + y, "addition"),
                BinOp::Sub => finite(x - y, "subtraction"),
                BinOp::Mul => finite(x * y, "multiplication"),
                BinOp::Div => {
                    if y == T::zero() {
                        return domain("division by zero");
                    }
                    finite(x / y, "division")
                }
                BinOp::Pow => eval_pow(x, y),
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], vals)?;
            match func {
                Func::Sin => Ok(a.sin()),
                Func::Cos => Ok(a.cos()),
                Func::Tan => finite(a.tan(), "tan"),
                Func::Exp => finite(a.exp(), "exp"),
                Func::Log => {
                    if a <= T::zero() {
                        return domain("log of a nonpositive number");
                    }
                    Ok(a.ln())
                }
                Func::Sqrt => {
                    if a < T::zero() {
                        return domain("sqrt of a negative number");
                    }
                    Ok(a.sqrt())
                }
                Func::Abs => Ok(a.abs()),
                Func::Sign => Ok(if a == T::zero() { T::zero() } else { a.signum() }),
                Func::Tanh => Ok(a.tanh()),
                Func::Min => {
                    let b = eval_node(&args[1], vals)?;
                    Ok(if b < a { b } else { a })
                }
                Func::Max => {
                    let b = eval_node(&args[1], vals)?;
                    Ok(if b > a { b } else { a })
                }
                Func::Step(k) => Ok(step(*k, a)),
                Func::StepInt => Ok(step_int(a)),
            }
        }
    }
}

fn eval_pow<T: Scalar>(x: T, y: T) -> Result<T, ExprError> {
    if x == T::zero() && y < T::zero() {
        return domain("zero raised to a negative power");
    }
    if x < T::zero() && y.fract() != T::zero() {
        return domain("negative base with non-integer exponent");
    }
    let r = if y == lit(2.0) {
        x * x
    } else if y.fract() == T::zero() && y.abs() <= lit(64.0) {
        x.powi(y.to_i32().unwrap_or(0))
    } else {
        x.powf(y)
    };
    finite(r, "power")
}

/// Derivative of order `k` of the clamped quintic step.
pub fn step<T: Scalar>(k: u8, u: T) -> T {
    let zero = T::zero();
    let one = T::one();
    if u <= zero || u >= one {
        return if k == 0 && u >= one { one } else { zero };
    }
    let c = |x: f64| -> T { lit(x) };
    match k {
        0 => u * u * u * (u * (u * c(6.0) - c(15.0)) + c(10.0)),
        1 => c(30.0) * u * u * (one - u) * (one - u),
        2 => u * (u * (u * c(120.0) - c(180.0)) + c(60.0)),
        3 => u * (u * c(360.0) - c(360.0)) + c(60.0),
        4 => u * c(720.0) - c(360.0),
        5 => c(720.0),
        _ => zero,
    }
}

/// Antiderivative of the quintic step, zero for `u <= 0`.
pub fn step_int<T: Scalar>(u: T) -> T {
    let one = T::one();
    if u <= T::zero() {
        T::zero()
    } else if u >= one {
        u - lit(0.5)
    } else {
        u * u * u * u * (u * (u - lit(3.0)) + lit(2.5))
    }
}
