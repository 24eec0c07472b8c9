use std::f64::consts::PI;

use gradobs::geometry::{build_surface, SurfaceConfig, SurfaceSpec};
use gradobs::kernel::*;
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

fn sine_circle() -> (SurfaceSpec<f64>, ScalarExpr) {
    (surface("circle", 2.0 * PI, None, None, 256), expr("sin(s) + 0.2*cos(2*s)"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn forms_differ_by_half_f_difference(x in 0.0..2.0 * PI, y in 0.0..2.0 * PI, t in 0.2f64..3.0) {
        let (spec, f) = sine_circle();
        let ctx = ActionContext::new(&spec, &f).unwrap();
        let rho = action_distance(&ctx, x, y, t, ActionForm::Rho, 32).unwrap().value;
        let minus = action_distance(&ctx, x, y, t, ActionForm::DxMinus, 32).unwrap().value;
        let plus = action_distance(&ctx, x, y, t, ActionForm::DxPlus, 32).unwrap().value;
        let half = 0.5 * (f.eval1(x).unwrap() - f.eval1(y).unwrap());
        prop_assert!((minus - (rho + half)).abs() <= 1e-6);
        prop_assert!((plus - (rho - half)).abs() <= 1e-6);
        prop_assert!(minus >= 0.0 && plus >= 0.0);
    }

    #[test]
    fn path_reversal(x in 0.0..2.0 * PI, y in 0.0..2.0 * PI, t in 0.2f64..3.0) {
        let (spec, f) = sine_circle();
        let ctx = ActionContext::new(&spec, &f).unwrap();
        let plus = action_distance(&ctx, x, y, t, ActionForm::DxPlus, 32).unwrap().value;
        let minus = action_distance(&ctx, y, x, t, ActionForm::DxMinus, 32).unwrap().value;
        prop_assert!((plus - minus).abs() <= 1e-6 * (1.0 + plus), "{} {}", plus, minus);
    }
}

#[test]
fn reversed_path_has_the_reversed_action() {
    let (spec, f) = sine_circle();
    let ctx = ActionContext::new(&spec, &f).unwrap();
    let r = action_distance(&ctx, 1.0, 4.0, 1.5, ActionForm::DxPlus, 64).unwrap();
    let mut back = r.path.clone();
    back.reverse();
    let a = ctx.path_action(&r.path, 1.5, ActionForm::DxPlus).unwrap();
    let b = ctx.path_action(&back, 1.5, ActionForm::DxMinus).unwrap();
    assert!((a - b).abs() <= 1e-12 * (1.0 + a));
}

#[test]
fn zero_exactly_along_flow_lines() {
    let spec = surface("circle", 2.0 * PI, None, None, 512);
    let f = expr("sin(s)");
    let ctx = ActionContext::new(&spec, &f).unwrap();
    let h = spec.h;
    for i in 0..20 {
        let x = 0.3 + 0.29 * i as f64;
        let t = 0.4 + 0.07 * i as f64;
        let y = ctx.flow_map(x, t).unwrap();
        let on = action_distance(&ctx, x, y, t, ActionForm::DxMinus, 64).unwrap().value;
        assert!(on <= 1e-6, "x={} t={} dX={}", x, t, on);
        // two cells away is no longer a flow endpoint
        let off = action_distance(&ctx, x, spec.wrap(y + 2.0 * h), t, ActionForm::DxMinus, 64)
            .unwrap()
            .value;
        assert!(off > 1e-6, "x={} t={} dX={}", x, t, off);
    }
}

#[test]
fn rho_nonincreasing_at_stationary_target() {
    let spec = surface("circle", 2.0 * PI, None, None, 256);
    let f = expr("sin(s)");
    let ctx = ActionContext::new(&spec, &f).unwrap();
    let y = PI / 2.0;
    for x in [0.5, 2.5, 4.0] {
        let mut last = f64::INFINITY;
        for t in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = action_distance(&ctx, x, y, t, ActionForm::Rho, 64).unwrap().value;
            assert!(v <= last + 1e-6, "x={} t={} {} > {}", x, t, v, last);
            last = v;
        }
    }
}

#[test]
fn flat_action_is_kinetic() {
    let spec = surface("interval", 10.0, Some(-5.0), None, 200);
    let ctx = ActionContext::new(&spec, &expr("0")).unwrap();
    let r = action_distance(&ctx, -1.0, 2.0, 3.0, ActionForm::Rho, 32).unwrap();
    assert!((r.value - 9.0 / 12.0).abs() < 1e-10);
    // f = s: d_∇f(x, y, t) = (y - x - t)²/(4t)
    let ctx = ActionContext::new(&spec, &expr("s")).unwrap();
    let r = action_distance(&ctx, 0.0, 0.5, 1.0, ActionForm::DxMinus, 32).unwrap();
    assert!((r.value - 0.0625).abs() < 1e-9, "{}", r.value);
}

#[test]
fn hopf_lax_table_agrees_with_optimizer() {
    let spec = surface("circle", 2.0 * PI, None, None, 256);
    let f = expr("sin(s)");
    let ctx = ActionContext::new(&spec, &f).unwrap();
    let nodes = uniform_nodes(&spec, 256);
    let tab = hopf_lax_table(&ctx, &nodes, 1.0, 8).unwrap();
    for (i, j) in [(10usize, 100usize), (50, 150), (200, 30)] {
        let r = action_distance(&ctx, nodes[i], nodes[j], 1.0, ActionForm::Rho, 64).unwrap().value;
        assert!((tab.rho[i][j] - r).abs() <= 0.03 * r, "{} {}", tab.rho[i][j], r);
    }
    let csv = tab.to_csv();
    assert!(csv.lines().count() > 1);
}

#[test]
fn reparametrized_distance_is_consistent() {
    let spec = surface("interval", 4.0, Some(-2.0), None, 400);
    let ctx = ActionContext::new(&spec, &expr("sin(s) + 0.3*s^2")).unwrap();
    let rep = reparametrization_check(&ctx, -1.0, 1.2, 17).unwrap();
    assert!(rep.pass, "{:?}", rep);
}

#[test]
fn h_picture_is_symmetric_and_k_is_not() {
    let spec = surface("circle", 2.0 * PI, None, None, 128);
    let f = expr("sin(s)");
    let zero = expr("0");
    let eps = 0.2;
    let gen = KernelGenerator::new(&spec, &f, &zero, eps).unwrap();
    let (i, j) = (20usize, 70usize);
    let (yi, yj) = (gen.grid[i], gen.grid[j]);
    let ki = kernel_simulate(&gen, yi, 1.0, 0.0, KernelMethod::Uniformization).unwrap();
    let kj = kernel_simulate(&gen, yj, 1.0, 0.0, KernelMethod::Uniformization).unwrap();
    let k_ji = ki.log_at_node(j);
    let k_ij = kj.log_at_node(i);
    let hi = ki.switch_picture(&gen.f_nodes, gen.f_nodes[i]);
    let hj = kj.switch_picture(&gen.f_nodes, gen.f_nodes[j]);
    assert_eq!(hi.picture, Picture::SchrodingerH);
    let (h_ji, h_ij) = (hi.log_at_node(j), hj.log_at_node(i));
    assert!((h_ji - h_ij).abs() <= 1e-9, "{} {}", h_ji, h_ij);
    assert!((k_ji - k_ij).abs() > 1e-3, "K should be asymmetric: {} {}", k_ji, k_ij);
    // switching back restores K
    let back = hi.switch_picture(&gen.f_nodes, gen.f_nodes[i]);
    for n in 0..gen.grid.len() {
        assert!((back.log_at_node(n) - ki.log_at_node(n)).abs() < 1e-10);
    }
}

#[test]
fn flat_kernel_conserves_mass_and_stays_positive() {
    let spec = surface("circle", 2.0 * PI, None, None, 200);
    let zero = expr("0");
    let gen = KernelGenerator::new(&spec, &zero, &zero, 0.1).unwrap();
    let snaps = gen
        .snapshots(1.0, &[0.1, 0.5, 1.0, 3.0], 2.0, KernelMethod::Uniformization)
        .unwrap();
    for k in &snaps {
        assert!(k.log_mass(None).abs() < 1e-10, "{}", k.log_mass(None));
        assert!(k.values.iter().all(|v| *v >= -1e-12));
        assert_eq!(k.negative_count, 0);
    }
}

#[test]
fn uniformization_matches_eigen_expansion() {
    let spec = surface("circle", 2.0 * PI, None, None, 100);
    let f = expr("sin(s)");
    let zero = expr("0");
    let gen = KernelGenerator::new(&spec, &f, &zero, 0.1).unwrap();
    let ts: Vec<f64> = (1..=100).map(|i| 0.01 * i as f64).collect();
    let a = gen.snapshots(2.0, &ts, 2.0, KernelMethod::Uniformization).unwrap();
    let b = gen.snapshots(2.0, &ts, 2.0, KernelMethod::EigenExpansion).unwrap();
    // both columns normalized by the uniformized maximum
    for (ka, kb) in a.iter().zip(&b) {
        let top = (0..ka.grid.len()).map(|i| ka.log_at_node(i)).fold(f64::MIN, f64::max);
        for i in 0..ka.grid.len() {
            let va = (ka.log_at_node(i) - top).exp();
            let vb = (kb.log_at_node(i) - top).exp();
            assert!((va - vb).abs() < 1e-8, "t={} i={} {} {}", ka.t, i, va, vb);
        }
    }
}

#[test]
fn mass_stays_bounded_on_the_sphere() {
    let spec = surface("sphere", PI, None, Some("sin(s)"), 200);
    let f = expr("cos(s)");
    let zero = expr("0");
    let gen = KernelGenerator::new(&spec, &f, &zero, 0.1).unwrap();
    let ts: Vec<f64> = (1..=20).map(|i| 0.1 * i as f64).collect();
    let snaps = gen.snapshots(1.0, &ts, 2.0, KernelMethod::Uniformization).unwrap();
    let bound = gen.divergence_rate.iter().fold(0.0f64, |a, b| a.max(*b)) * 2.0;
    for k in &snaps {
        let m = k.log_mass(None);
        assert!(m.is_finite() && m <= bound + 1e-9, "t={} log mass {}", k.t, m);
        assert!(k.values.iter().all(|v| *v >= -1e-12));
    }
}

#[test]
fn generator_is_metzler_with_zero_row_sums_for_constant_f() {
    let spec = surface("circle", 2.0 * PI, None, None, 64);
    let zero = expr("0");
    let gen = KernelGenerator::new(&spec, &zero, &zero, 0.2).unwrap();
    assert!(gen.row_sums().iter().all(|r| r.abs() < 1e-10));
    assert!(gen.uniformization_rate() > 0.0);
}

#[test]
fn refuses_below_the_viscosity_floor() {
    let spec = surface("circle", 2.0 * PI, None, None, 64);
    let zero = expr("0");
    assert!(KernelGenerator::new(&spec, &zero, &zero, 0.01).is_err());
    assert!(ActionContext::new(&surface("box2d", 1.0, None, None, 64), &ScalarExpr::parse("x1", &["x1", "x2"]).unwrap()).is_err());
}

#[test]
fn li_yau_on_a_line_with_drift() {
    let spec = surface("interval", 6.0, Some(-3.0), None, 600);
    let f = expr("s");
    let zero = expr("0");
    let rep = liyau_check(&spec, &f, &zero, &[(0.0, 0.8, 1.0), (-1.0, 0.5, 1.0)], &[0.08, 0.06, 0.045, 0.035], 2.0).unwrap();
    for p in &rep.pairs {
        assert!(p.pass, "{:?}", p);
    }
}

#[test]
fn csv_outputs_have_headers() {
    let spec = surface("circle", 2.0 * PI, None, None, 64);
    let zero = expr("0");
    let gen = KernelGenerator::new(&spec, &zero, &zero, 0.2).unwrap();
    let k = kernel_simulate(&gen, 0.0, 0.5, 2.0, KernelMethod::Uniformization).unwrap();
    let csv = k.to_csv();
    assert!(csv.starts_with("x,log_K\n"));
    assert_eq!(csv.lines().count(), gen.grid.len() + 1);
}
