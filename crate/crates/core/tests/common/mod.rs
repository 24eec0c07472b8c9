//! Shared helpers for the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// Random expression in `s` built only from smooth pieces with bounded growth.
pub fn smooth_expr<R: Rng>(rng: &mut R, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.6) {
            "s".to_string()
        } else {
            format!("{:.3}", rng.gen_range(-2.0..2.0))
        };
    }
    let a = smooth_expr(rng, depth - 1);
    match rng.gen_range(0..14) {
        0 => format!("sin({})", a),
        1 => format!("cos({})", a),
        2 => format!("tanh({})", a),
        3 => format!("exp(sin({}))", a),
        4 => format!("log(1 + ({})^2)", a),
        5 => format!("sqrt(1 + ({})^2)", a),
        6 => format!("({})^2", a),
        7 => format!("smoothstep(-1, 1, {})", a),
        8 => format!("-({})", a),
        9 => format!("({}) + ({})", a, smooth_expr(rng, depth - 1)),
        10 => format!("({}) - ({})", a, smooth_expr(rng, depth - 1)),
        11 => format!("({}) * ({})", a, smooth_expr(rng, depth - 1)),
        12 => format!("({}) / (1.5 + sin({}))", a, smooth_expr(rng, depth - 1)),
        _ => format!("({})^3", a),
    }
}

/// Random expression over `s` and `t` using the whole grammar (may hit domain errors).
pub fn grammar_expr<R: Rng>(rng: &mut R, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..5) {
            0 => "s".into(),
            1 => "t".into(),
            2 => "pi".into(),
            3 => "e".into(),
            _ => format!("{}", (rng.gen_range(0.0..5.0f64) * 100.0).round() / 100.0),
        };
    }
    let a = grammar_expr(rng, depth - 1);
    let b = grammar_expr(rng, depth - 1);
    let funcs = [
        "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh",
    ];
    match rng.gen_range(0..10) {
        0 => format!("{} + {}", a, b),
        1 => format!("{} - {}", a, b),
        2 => format!("{} * {}", a, b),
        3 => format!("{} / ({})", a, b),
        4 => format!("({})^{}", a, rng.gen_range(0..4)),
        5 => format!("-{}", a),
        6 => format!("min({}, {})", a, b),
        7 => format!("max({}, {})", a, b),
        8 => format!("smoothstep(0, 2, {})", a),
        _ => format!("{}({})", funcs[rng.gen_range(0..funcs.len())], a),
    }
}
