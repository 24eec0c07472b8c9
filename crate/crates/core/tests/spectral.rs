use std::f64::consts::PI;

use gradobs::geometry::{build_surface, SurfaceConfig, SurfaceSpec};
use gradobs::spectral::{assemble_operator, energy_densities, lowest_eigenpairs, nearest_eigenpair};
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairs_are_accurate_and_orthonormal(a in -1.0f64..1.0, b in 0.2f64..2.0, eps in 0.05f64..0.5, k in 0u32..4) {
        let spec = surface("sphere", PI, None, Some("sin(s)"), 300);
        let f = expr(&format!("{}*cos(s) + {}*cos(2*s)", b, a));
        let q = expr("0.3*sin(s)");
        let op = assemble_operator(&spec, &f, &q, eps, k, true).unwrap();
        prop_assert!(op.mass.iter().all(|m| *m > 0.0));
        let st = &op.stiffness;
        prop_assert_eq!(st.off.len() + 1, st.diag.len());
        let pairs = lowest_eigenpairs(&op, 6).unwrap();
        let mass = op.mass_full();
        for w in pairs.windows(2) {
            prop_assert!(w[0].mu <= w[1].mu);
        }
        for p in &pairs {
            prop_assert!(p.residual <= 1e-10, "residual {}", p.residual);
            prop_assert!(p.norm_check <= 1e-12, "norm {}", p.norm_check);
        }
        for i in 0..pairs.len() {
            for j in 0..pairs.len() {
                let g: f64 = (0..mass.len()).map(|m| pairs[i].phi[m] * pairs[j].phi[m] * mass[m]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - want).abs() <= 1e-10, "gram[{}][{}] = {}", i, j, g);
            }
        }
        for p in &pairs {
            let e = energy_densities(p, &op);
            for m in 0..p.phi.len() {
                let d = e.e_k[m] - e.e_k_plus[m] - p.phi[m] * p.phi[m];
                prop_assert!(d.abs() <= 1e-12 * (1.0 + e.e_k[m].abs()));
            }
        }
    }
}

#[test]
fn stiffness_matches_its_transpose() {
    let spec = surface("torus", 1.0, None, Some("2 + cos(2*pi*s)"), 64);
    let op = assemble_operator(&spec, &expr("sin(2*pi*s)"), &expr("0"), 0.1, 2, true).unwrap();
    let n = op.len();
    let mut dense = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (i, v) in op.stiffness.matvec(&e).into_iter().enumerate() {
            dense[i * n + j] = v;
        }
    }
    for i in 0..n {
        for j in 0..n {
            assert_eq!(dense[i * n + j], dense[j * n + i]);
        }
    }
}

#[test]
fn sphere_levels_converge_at_second_order() {
    // f = 0, ε = 1: mode k has levels l(l+1) for l ≥ k
    let mut errs = vec![];
    for n in [100, 200, 400] {
        let spec = surface("sphere", PI, None, Some("sin(s)"), n);
        let op = assemble_operator(&spec, &expr("0"), &expr("0"), 1.0, 1, true).unwrap();
        let p = lowest_eigenpairs(&op, 2).unwrap();
        errs.push(((p[0].mu - 2.0).abs(), (p[1].mu - 6.0).abs(), PI / n as f64));
    }
    for (e0, e1, h) in &errs {
        assert!(*e0 <= 5.0 * h * h && *e1 <= 20.0 * h * h, "{} {} {}", e0, e1, h);
    }
    assert!(errs[0].0 / errs[2].0 > 10.0);
}

#[test]
fn solve_order_does_not_change_results() {
    let spec = surface("sphere", PI, None, Some("sin(s)"), 200);
    let f = expr("cos(s)");
    let q = expr("0");
    let solve = |k: u32| {
        let op = assemble_operator(&spec, &f, &q, 0.1, k, true).unwrap();
        nearest_eigenpair(&op, 0.0, 3).unwrap()
    };
    let forward: Vec<_> = (0..4).map(solve).collect();
    let backward: Vec<_> = (0..4).rev().map(solve).collect();
    for k in 0..4 {
        for (a, b) in forward[k].iter().zip(&backward[3 - k]) {
            assert_eq!(a.mu.to_bits(), b.mu.to_bits());
            assert_eq!(a.phi, b.phi);
        }
    }
}

#[test]
fn bad_arguments_are_refused() {
    let spec = surface("interval", 1.0, Some(0.0), None, 64);
    assert!(assemble_operator(&spec, &expr("s"), &expr("0"), 0.0, 0, true).is_err());
    assert!(assemble_operator(&spec, &expr("s"), &expr("0"), 0.1, 1, true).is_err());
    let op = assemble_operator(&spec, &expr("s"), &expr("0"), 0.1, 0, true).unwrap();
    assert!(lowest_eigenpairs(&op, 0).is_err());
}
