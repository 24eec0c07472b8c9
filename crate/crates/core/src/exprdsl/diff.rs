//! Symbolic differentiation with light structural simplification.

use super::{is_var_free, BinOp, Func, Node};

fn c(x: f64) -> Node {
    Node::Const(x)
}

fn as_const(n: &Node) -> Option<f64> {
    match n {
        Node::Const(x) => Some(*x),
        _ => None,
    }
}

fn fold(op: BinOp, x: f64, y: f64) -> Option<f64> {
    let r = match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return None;
            }
            x / y
        }
        BinOp::Pow => {
            if x < 0.0 && y.fract() != 0.0 {
                return None;
            }
            x.powf(y)
        }
    };
    r.is_finite().then_some(r)
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if let Some(r) = fold(op, x, y) {
            return c(r);
        }
    }
    Node::Bin(op, Box::new(a), Box::new(b))
}

pub(super) fn add(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => bin(BinOp::Add, a, b),
    }
}

pub(super) fn sub(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        _ => bin(BinOp::Sub, a, b),
    }
}

pub(super) fn mul(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), _) if x == 0.0 => c(0.0),
        (_, Some(y)) if y == 0.0 => c(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => bin(BinOp::Mul, a, b),
    }
}

pub(super) fn div(a: Node, b: Node) -> Node {
    match (as_const(&a), as_const(&b)) {
        (Some(x), _) if x == 0.0 => c(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => bin(BinOp::Div, a, b),
    }
}

pub(super) fn pow(a: Node, b: Node) -> Node {
    match as_const(&b) {
        Some(y) if y == 0.0 => c(1.0),
        Some(y) if y == 1.0 => a,
        _ => bin(BinOp::Pow, a, b),
    }
}

pub(super) fn neg(a: Node) -> Node {
    match a {
        Node::Const(x) => c(-x),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn call(f: Func, args: Vec<Node>) -> Node {
    Node::Call(f, args)
}

pub(super) fn derivative(n: &Node, v: usize) -> Node {
    match n {
        Node::Const(_) => c(0.0),
        Node::Var(i) => c(if *i == v { 1.0 } else { 0.0 }),
        Node::Neg(a) => neg(derivative(a, v)),
        Node::Bin(op, a, b) => {
            let (a, b) = (a.as_ref(), b.as_ref());
            match op {
                BinOp::Add => add(derivative(a, v), derivative(b, v)),
                BinOp::Sub => sub(derivative(a, v), derivative(b, v)),
                BinOp::Mul => add(
                    mul(derivative(a, v), b.clone()),
                    mul(a.clone(), derivative(b, v)),
                ),
                BinOp::Div => {
                    let da = derivative(a, v);
                    let db = derivative(b, v);
                    let first = div(da, b.clone());
                    if matches!(db, Node::Const(x) if x == 0.0) {
                        return first;
                    }
                    sub(
                        first,
                        div(mul(a.clone(), db), pow(b.clone(), c(2.0))),
                    )
                }
                BinOp::Pow => {
                    let da = derivative(a, v);
                    if is_var_free(b) {
                        // b * a^(b-1) * a'
                        let exp = sub(b.clone(), c(1.0));
                        return mul(mul(b.clone(), pow(a.clone(), exp)), da);
                    }
                    let db = derivative(b, v);
                    let whole = pow(a.clone(), b.clone());
                    if is_var_free(a) {
                        return mul(mul(whole, call(Func::Log, vec![a.clone()])), db);
                    }
                    // a^b * (b' ln a + b a'/a)
                    mul(
                        whole,
                        add(
                            mul(db, call(Func::Log, vec![a.clone()])),
                            div(mul(b.clone(), da), a.clone()),
                        ),
                    )
                }
            }
        }
        Node::Call(func, args) => {
            let a = &args[0];
            let da = derivative(a, v);
            let outer = match func {
                Func::Sin => call(Func::Cos, vec![a.clone()]),
                Func::Cos => neg(call(Func::Sin, vec![a.clone()])),
                Func::Tan => div(c(1.0), pow(call(Func::Cos, vec![a.clone()]), c(2.0))),
                Func::Exp => call(Func::Exp, vec![a.clone()]),
                Func::Log => div(c(1.0), a.clone()),
                Func::Sqrt => div(c(0.5), call(Func::Sqrt, vec![a.clone()])),
                Func::Abs => call(Func::Sign, vec![a.clone()]),
                Func::Sign => c(0.0),
                Func::Tanh => sub(c(1.0), pow(call(Func::Tanh, vec![a.clone()]), c(2.0))),
                Func::Step(k) => {
                    if *k >= 5 {
                        c(0.0)
                    } else {
                        call(Func::Step(k + 1), vec![a.clone()])
                    }
                }
                Func::StepInt => call(Func::Step(0), vec![a.clone()]),
                Func::Min | Func::Max => {
                    // min(a,b) = (a + b - |a - b|)/2, max(a,b) = (a + b + |a - b|)/2
                    let b = &args[1];
                    let db = derivative(b, v);
                    let diff = sub(a.clone(), b.clone());
                    let sign = call(Func::Sign, vec![diff]);
                    let corr = mul(sign, sub(da.clone(), db.clone()));
                    let sum = add(da, db);
                    let num = if *func == Func::Min {
                        sub(sum, corr)
                    } else {
                        add(sum, corr)
                    };
                    return mul(c(0.5), num);
                }
            };
            mul(outer, da)
        }
    }
}
