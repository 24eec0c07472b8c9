mod common;

use std::f64::consts::PI;

use gradobs::geometry::{build_surface, effective_potential, Case, EnergyChoice, SurfaceConfig, SurfaceSpec};
use gradobs::ScalarExpr;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn potential_is_nonnegative_and_shift_invariant(seed in 0u64..10_000, c in 0.0f64..2.0, shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = common::smooth_expr(&mut rng, 3);
        let f = ScalarExpr::parse(&text, &["s"]).unwrap();
        let sphere = surface("sphere", PI, None, Some("sin(s)"), 128);
        let line = surface("interval", 4.0, Some(-2.0), None, 128);
        for (spec, cc) in [(&sphere, c), (&line, 0.0)] {
            let a = effective_potential(spec, &f, cc, EnergyChoice::Bottom);
            let b = effective_potential(spec, &f.plus_constant(shift), cc, EnergyChoice::Bottom);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!(a.values.iter().all(|v| *v >= 0.0));
                    prop_assert_eq!(&a.values, &b.values);
                    prop_assert_eq!(a.v_min, b.v_min);
                    prop_assert_eq!(a.unique_min, b.unique_min);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "shift changed the outcome for {}", text),
            }
        }
    }
}

#[test]
fn unique_minimum_occupies_one_cell() {
    let spec = surface("interval", 4.0, Some(-2.0), None, 400);
    let f = ScalarExpr::parse("sin(s) + 0.3*s^2", &["s"]).unwrap();
    let pot = effective_potential(&spec, &f, 0.0, EnergyChoice::Bottom).unwrap();
    assert!(pot.unique_min);
    let near = pot.values.iter().filter(|v| (**v - pot.v_min).abs() <= 1e-12).count();
    assert!(near <= 1, "{}", near);
}

#[test]
fn v_min_converges_at_second_order() {
    // 1/sin² s + f'²/4 with f = 0.5 cos s; the minimum sits between nodes
    let f = ScalarExpr::parse("0.5*cos(s)", &["s"]).unwrap();
    let mut mins = vec![];
    for n in [100, 200, 400, 800] {
        let spec = surface("sphere", PI, None, Some("sin(s)"), n);
        mins.push(effective_potential(&spec, &f, 1.0, EnergyChoice::Bottom).unwrap().v_min);
    }
    let reference = mins[3];
    for (i, n) in [100.0, 200.0, 400.0].iter().enumerate() {
        let c = (mins[i] - reference).abs() * n * n;
        assert!(c < 1.0, "n={} C={}", n, c);
    }
}

#[test]
fn pole_inset_and_case_metadata() {
    let n = 128;
    let sphere = surface("sphere", PI, None, Some("sin(s)"), n);
    assert_eq!(sphere.case, Case::Sphere);
    assert!((sphere.grid[0] - PI / (2.0 * n as f64)).abs() < 1e-15);
    let disk = surface("disk", 1.0, None, Some("s"), n);
    assert!(!disk.dirichlet_mask().iter().all(|b| !*b));
    let torus = surface("torus", 1.0, None, Some("2 + cos(2*pi*s)"), n);
    assert!(torus.case.is_periodic() && torus.case.is_revolution());
}
