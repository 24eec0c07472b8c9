mod common;

use gradobs::{ExprError, ScalarExpr};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn same(a: &Result<f64, ExprError>, b: &Result<f64, ExprError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => (x - y).abs() <= 1e-12 * (1.0 + x.abs()),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

#[test]
fn print_parse_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let text = common::grammar_expr(&mut rng, 4);
        let e = ScalarExpr::parse(&text, &["s", "t"]).unwrap();
        let printed = e.to_string();
        let back = ScalarExpr::parse(&printed, &["s", "t"]).unwrap();
        assert_eq!(back.to_string(), printed, "printer not idempotent for {}", text);
        for _ in 0..3 {
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            assert!(same(&e.eval_at(&p), &back.eval_at(&p)), "{} vs {}", text, printed);
        }
    }
}

#[test]
fn derivative_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let text = common::smooth_expr(&mut rng, 4);
        let e = ScalarExpr::parse(&text, &["s"]).unwrap();
        let d = e.differentiate("s").unwrap();
        for _ in 0..10 {
            let s: f64 = rng.gen_range(-2.0..2.0);
            let h = 1e-5;
            let fd = (e.eval1(s + h).unwrap() - e.eval1(s - h).unwrap()) / (2.0 * h);
            let sym = d.eval1(s).unwrap();
            assert!(
                (sym - fd).abs() <= 1e-6 * (1.0 + sym.abs()),
                "{}: sym {} fd {} at {}",
                text,
                sym,
                fd,
                s
            );
        }
        checked += 1;
    }
}

#[test]
fn derivative_of_printed_derivative_parses() {
    let e = ScalarExpr::parse("smoothstep(0.1, 0.4, s) * exp(-s) + min(s, 1)", &["s"]).unwrap();
    let d2 = e.differentiate("s").unwrap().differentiate("s").unwrap();
    let back = ScalarExpr::parse(&d2.to_string(), &["s"]).unwrap();
    assert!(same(&d2.eval1(0.25), &back.eval1(0.25)));
}

#[test]
fn partial_derivatives_two_variables() {
    let e = ScalarExpr::parse("x1^2 * sin(x2) + x1*x2", &["x1", "x2"]).unwrap();
    let d1 = e.differentiate("x1").unwrap();
    let d2 = e.differentiate("x2").unwrap();
    let p = [0.7, -1.3];
    assert!((d1.eval_at(&p).unwrap() - (2.0 * 0.7 * (-1.3f64).sin() - 1.3)).abs() < 1e-14);
    assert!((d2.eval_at(&p).unwrap() - (0.49 * (-1.3f64).cos() + 0.7)).abs() < 1e-14);
}

proptest! {
    #[test]
    fn smoothstep_is_monotone_and_bounded(a in -5.0..5.0f64, w in 0.01..3.0f64, x in -10.0..10.0f64, dx in 0.0..1.0f64) {
        let e = ScalarExpr::parse(&format!("smoothstep({}, {}, s)", a, a + w), &["s"]).unwrap();
        let y0 = e.eval1(x).unwrap();
        let y1 = e.eval1(x + dx).unwrap();
        prop_assert!((0.0..=1.0).contains(&y0));
        prop_assert!(y1 >= y0 - 1e-15);
    }

    #[test]
    fn constant_shift_leaves_derivative_unchanged(c in -100.0..100.0f64, s in -2.0..2.0f64) {
        let f = ScalarExpr::parse("s^3/3 - cos(2*s)", &["s"]).unwrap();
        let g = f.plus_constant(c);
        let df = f.differentiate("s").unwrap();
        let dg = g.differentiate("s").unwrap();
        prop_assert_eq!(df.eval1(s).unwrap().to_bits(), dg.eval1(s).unwrap().to_bits());
    }
}
