use std::f64::consts::PI;

use gradobs::flow::{gcc_time, integrate_flow, Condition, Direction, FlowMethod};
use gradobs::geometry::{build_surface, SurfaceConfig, SurfaceSpec};
use gradobs::region::Region;
use gradobs::ScalarExpr;
use proptest::prelude::*;

fn surface(case: &str, l: f64, origin: Option<f64>, r: Option<&str>, n: usize) -> SurfaceSpec<f64> {
    build_surface(&SurfaceConfig {
        case: case.into(),
        length: l,
        origin,
        profile: r.map(|s| s.into()),
        grid_n: n,
    })
    .unwrap()
}

fn expr(text: &str) -> ScalarExpr {
    ScalarExpr::parse(text, &["s"]).unwrap()
}

#[test]
fn stationary_point_stays_put() {
    let spec = surface("circle", 2.0 * PI, None, None, 128);
    let tr = integrate_flow(&spec, &expr("sin(s)"), &[PI / 2.0], (0.0, 10.0), Direction::Backward).unwrap();
    assert!((tr.last()[0] - PI / 2.0).abs() < 1e-12);
}

#[test]
fn disk_backward_trajectory_reaches_the_cap() {
    // f' = 1 + s on [δ, L]: time to go from L to δ is log((1+L)/(1+δ))
    let spec = surface("disk", 1.0, None, Some("s"), 128);
    let f = expr("s + s^2/2");
    let d = 0.1;
    let om = Region::Intervals(vec![(0.0, d)]);
    let expected = (2.0f64 / 1.1).ln();
    for m in [FlowMethod::Simulation, FlowMethod::ClosedForm] {
        let r = gcc_time(&spec, &f, &om, Condition::Gcc, m, 10.0).unwrap();
        assert!(r.satisfied);
        assert!((r.t_min - expected).abs() <= 1e-3 * expected, "{:?} {}", m, r.t_min);
    }
}

#[test]
fn g_field_vanishes_somewhere_when_unsatisfied() {
    let spec = surface("circle", 2.0 * PI, None, None, 256);
    let f = expr("sin(s)");
    // the minimum at 3π/2 is not observed
    let om = Region::Intervals(vec![(1.0, 2.0)]);
    let r = gcc_time(&spec, &f, &om, Condition::Gcc, FlowMethod::Simulation, 20.0).unwrap();
    assert!(!r.satisfied);
    assert!(r.g_field.iter().any(|g| *g == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn reversed_field_has_the_same_time(a in 0.3f64..1.5, b in -0.3f64..0.3, w in 0.2f64..0.6) {
        // f' = a cos s + b cos 2s·2 on the circle; observe arcs around both poles of sin
        let text = format!("{}*sin(s) + {}*sin(2*s)", a, b * a);
        let f = expr(&text);
        let spec = surface("circle", 2.0 * PI, None, None, 256);
        let df = |s: f64| a * s.cos() + 2.0 * b * a * (2.0 * s).cos();
        let mut crit = vec![];
        let n = 4000;
        for i in 0..n {
            let (s0, s1) = (2.0 * PI * i as f64 / n as f64, 2.0 * PI * (i + 1) as f64 / n as f64);
            if df(s0) * df(s1) <= 0.0 {
                crit.push(0.5 * (s0 + s1));
            }
        }
        let mut arcs = vec![];
        for c in crit {
            arcs.push(((c - w).max(0.0), (c + w).min(2.0 * PI)));
            if c - w < 0.0 { arcs.push((c - w + 2.0 * PI, 2.0 * PI)); }
            if c + w > 2.0 * PI { arcs.push((0.0, c + w - 2.0 * PI)); }
        }
        arcs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut merged: Vec<(f64, f64)> = vec![];
        for (x, y) in arcs {
            match merged.last_mut() {
                Some(l) if x <= l.1 => l.1 = l.1.max(y),
                _ => merged.push((x, y)),
            }
        }
        let om = Region::Intervals(merged);
        let p = gcc_time(&spec, &f, &om, Condition::Gcc, FlowMethod::Simulation, 100.0).unwrap();
        let q = gcc_time(&spec, &f.negated(), &om, Condition::Gcc, FlowMethod::Simulation, 100.0).unwrap();
        prop_assert_eq!(p.satisfied, q.satisfied);
        if p.satisfied {
            prop_assert!((p.t_min - q.t_min).abs() <= 1e-3 * p.t_min);
            prop_assert!(p.g_field.iter().all(|g| *g > 0.0));
        }
        // enlarging ω never increases the time
        let bigger = match &om {
            Region::Intervals(v) => Region::Intervals(v.iter().map(|(x, y)| ((x - 0.1).max(0.0), (y + 0.1).min(2.0 * PI))).collect()),
            _ => unreachable!(),
        };
        let r = gcc_time(&spec, &f, &bigger, Condition::Gcc, FlowMethod::Simulation, 100.0).unwrap();
        if p.satisfied {
            prop_assert!(r.satisfied && r.t_min <= p.t_min + 1e-9);
        }
    }
}

#[test]
fn closed_form_and_simulation_agree_on_the_interval() {
    let spec = surface("interval", 2.0, Some(0.0), None, 256);
    let f = expr("s + 0.3*sin(3*s)");
    let om = Region::Intervals(vec![(1.8, 2.0)]);
    let a = gcc_time(&spec, &f, &om, Condition::Fc, FlowMethod::Simulation, 10.0).unwrap();
    let b = gcc_time(&spec, &f, &om, Condition::Fc, FlowMethod::ClosedForm, 10.0).unwrap();
    assert!(a.satisfied && b.satisfied);
    assert!((a.t_min - b.t_min).abs() <= 1e-3 * b.t_min, "{} {}", a.t_min, b.t_min);
}
