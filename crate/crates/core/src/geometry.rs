//! Computational domains and the effective potential.
//!
//! Revolution surfaces carry the metric `ds² + R(s)² dθ²`; flat domains are
//! intervals, circles and square boxes in the plane.

use crate::error::{Error, Result};
use crate::exprdsl::ScalarExpr;
use crate::numerics::golden_min;
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Sphere,
    Disk,
    Cylinder,
    Torus,
    Interval,
    Circle,
    Box2d,
}

impl Case {
    pub fn parse(name: &str) -> Result<Case> {
        Ok(match name {
            "sphere" => Case::Sphere,
            "disk" => Case::Disk,
            "cylinder" => Case::Cylinder,
            "torus" => Case::Torus,
            "interval" => Case::Interval,
            "circle" => Case::Circle,
            "box2d" => Case::Box2d,
            other => return Err(Error::Geometry(format!("unknown case `{}`", other))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::Sphere => "sphere",
            Case::Disk => "disk",
            Case::Cylinder => "cylinder",
            Case::Torus => "torus",
            Case::Interval => "interval",
            Case::Circle => "circle",
            Case::Box2d => "box2d",
        }
    }

    pub fn is_revolution(self) -> bool {
        matches!(self, Case::Sphere | Case::Disk | Case::Cylinder | Case::Torus)
    }

    pub fn is_periodic(self) -> bool {
        matches!(self, Case::Torus | Case::Circle)
    }
}

/// Topology of the meridian (or of the flat domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Interval,
    Circle,
    Box2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Start,
    Finish,
}

/// Input for [`build_surface`].
#[derive(Debug, Clone)]
pub struct SurfaceConfig {
    pub case: String,
    pub length: f64,
    /// Left end of the meridian; defaults to 0 (and to `-L/2` for boxes).
    pub origin: Option<f64>,
    pub profile: Option<String>,
    pub grid_n: usize,
}

/// Square lattice `origin + h·(i, j)`, `0 <= i, j < n`.
#[derive(Debug, Clone)]
pub struct Lattice<T> {
    pub origin: T,
    pub h: T,
    pub n: usize,
}

impl<T: Scalar> Lattice<T> {
    pub fn coord(&self, i: usize) -> T {
        self.origin + self.h * lit(i as f64)
    }

    pub fn point(&self, idx: usize) -> [T; 2] {
        [self.coord(idx / self.n), self.coord(idx % self.n)]
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// A validated computational domain.
#[derive(Debug, Clone)]
pub struct SurfaceSpec<T> {
    pub case: Case,
    pub length: T,
    pub origin: T,
    pub profile: Option<ScalarExpr>,
    pub pole_set: Vec<End>,
    pub boundary: Vec<End>,
    pub grid_n: usize,
    /// Meridian sample abscissas (empty for boxes).
    pub grid: Vec<T>,
    pub h: T,
    pub lattice: Option<Lattice<T>>,
}

impl<T: Scalar> SurfaceSpec<T> {
    pub fn topology(&self) -> Topology {
        match self.case {
            Case::Torus | Case::Circle => Topology::Circle,
            Case::Box2d => Topology::Box2d,
            _ => Topology::Interval,
        }
    }

    pub fn end(&self) -> T {
        self.origin + self.length
    }

    /// Profile value `R(s)` (1 on flat domains).
    pub fn r_at(&self, s: T) -> Result<T> {
        match &self.profile {
            Some(r) => Ok(r.eval1(s)?),
            None => Ok(T::one()),
        }
    }

    /// True for grid nodes carrying a Dirichlet condition.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let n = self.grid.len();
        let mut m = vec![false; n];
        if n == 0 {
            return m;
        }
        if self.boundary.contains(&End::Start) {
            m[0] = true;
        }
        if self.boundary.contains(&End::Finish) {
            m[n - 1] = true;
        }
        m
    }

    /// Wraps a coordinate onto `[origin, origin + L)` for periodic domains.
    pub fn wrap(&self, s: T) -> T {
        if !self.case.is_periodic() {
            return s;
        }
        let l = self.length;
        let mut x = (s - self.origin) % l;
        if x < T::zero() {
            x += l;
        }
        self.origin + x
    }

    /// Whether `s` lies in the closed domain.
    pub fn contains(&self, s: T) -> bool {
        self.case.is_periodic() || (s >= self.origin && s <= self.end())
    }
}

fn fmt<T: Scalar>(x: T) -> f64 {
    to_f64(x)
}

/// Builds and validates a domain from its configuration.
pub fn build_surface<T: Scalar>(cfg: &SurfaceConfig) -> Result<SurfaceSpec<T>> {
    let case = Case::parse(&cfg.case)?;
    if !(cfg.length > 0.0) || !cfg.length.is_finite() {
        return Err(Error::Geometry(format!("L must be positive, got {}", cfg.length)));
    }
    if cfg.grid_n < 64 {
        return Err(Error::Geometry(format!("grid_n must be at least 64, got {}", cfg.grid_n)));
    }
    let n = cfg.grid_n;
    let l: T = lit(cfg.length);
    let origin: T = lit(cfg
        .origin
        .unwrap_or(if case == Case::Box2d { -cfg.length / 2.0 } else { 0.0 }));
    let profile = if case.is_revolution() {
        let text = cfg
            .profile
            .as_deref()
            .ok_or_else(|| Error::Geometry(format!("case {} requires a profile R", case.name())))?;
        Some(ScalarExpr::parse(text, &["s"])?)
    } else {
        None
    };
    if case.is_revolution() && origin != T::zero() {
        return Err(Error::Geometry("revolution meridians start at s = 0".into()));
    }
    let half: T = lit(0.5);
    let (grid, h, pole_set, boundary) = match case {
        Case::Sphere => {
            let h = l / lit(n as f64);
            let g = (0..n).map(|i| origin + (lit::<T>(i as f64) + half) * h).collect();
            (g, h, vec![End::Start, End::Finish], vec![])
        }
        Case::Disk => {
            let h = l / (lit::<T>(n as f64) - half);
            let mut g: Vec<T> = (0..n).map(|i| origin + (lit::<T>(i as f64) + half) * h).collect();
            g[n - 1] = origin + l;
            (g, h, vec![End::Start], vec![End::Finish])
        }
        Case::Cylinder | Case::Interval => {
            let h = l / lit((n - 1) as f64);
            let mut g: Vec<T> = (0..n).map(|i| origin + lit::<T>(i as f64) * h).collect();
            g[n - 1] = origin + l;
            (g, h, vec![], vec![End::Start, End::Finish])
        }
        Case::Torus | Case::Circle => {
            let h = l / lit(n as f64);
            let g = (0..n).map(|i| origin + lit::<T>(i as f64) * h).collect();
            (g, h, vec![], vec![])
        }
        Case::Box2d => (vec![], l / lit(n as f64), vec![], vec![]),
    };
    let lattice = (case == Case::Box2d).then(|| Lattice {
        origin,
        h,
        n: n + 1,
    });
    let spec = SurfaceSpec {
        case,
        length: l,
        origin,
        profile,
        pole_set,
        boundary,
        grid_n: n,
        grid,
        h,
        lattice,
    };
    validate_profile(&spec)?;
    Ok(spec)
}

fn validate_profile<T: Scalar>(spec: &SurfaceSpec<T>) -> Result<()> {
    let Some(r) = &spec.profile else {
        return Ok(());
    };
    let dr = r.differentiate("s")?;
    let l = spec.length;
    let tol = 1e-6;
    let check = |which: &str, measured: f64, expected: f64, tol: f64| -> Result<()> {
        if (measured - expected).abs() > tol {
            Err(Error::PoleCondition {
                which: which.into(),
                measured,
                expected,
            })
        } else {
            Ok(())
        }
    };
    let pole_value = |s: T, towards: T| -> Result<(f64, f64)> {
        match (r.eval1(s), dr.eval1(s)) {
            (Ok(v), Ok(d)) => Ok((fmt(v), fmt(d))),
            _ => pole_extrapolation(spec, r, s, towards),
        }
    };
    if spec.pole_set.contains(&End::Start) {
        let (v, d) = pole_value(T::zero(), T::one())?;
        check("R(0) = 0", v, 0.0, tol)?;
        check("R'(0) = 1", d, 1.0, tol)?;
    }
    if spec.pole_set.contains(&End::Finish) {
        let (v, d) = pole_value(l, -T::one())?;
        check("R(L) = 0", v, 0.0, tol)?;
        check("R'(L) = -1", d, -1.0, tol)?;
    }
    if spec.case == Case::Torus {
        let (r0, rl) = (fmt(r.eval1(T::zero())?), fmt(r.eval1(l)?));
        check("R(0) = R(L)", r0 - rl, 0.0, 1e-8)?;
        let (d0, dl) = (fmt(dr.eval1(T::zero())?), fmt(dr.eval1(l)?));
        check("R'(0) = R'(L)", d0 - dl, 0.0, 1e-8)?;
    }
    let mut pts: Vec<T> = spec.grid.clone();
    // cell faces too, since the operator evaluates R there
    for w in spec.grid.windows(2) {
        pts.push((w[0] + w[1]) * lit(0.5));
    }
    if spec.case == Case::Cylinder || spec.case == Case::Disk {
        pts.push(l);
    }
    if spec.case == Case::Cylinder {
        pts.push(T::zero());
    }
    for s in pts {
        let v = r.eval1(s)?;
        if !(v > T::zero()) {
            return Err(Error::NonPositiveProfile {
                s: fmt(s),
                value: fmt(v),
            });
        }
    }
    Ok(())
}

/// Richardson extrapolation of R and R(s)/s from the three nodes nearest a
/// pole, used when the profile cannot be evaluated at the pole itself.
fn pole_extrapolation<T: Scalar>(
    spec: &SurfaceSpec<T>,
    r: &ScalarExpr,
    pole: T,
    towards: T,
) -> Result<(f64, f64)> {
    let h = spec.h;
    let mut xs = [0.0f64; 3];
    let mut rv = [0.0f64; 3];
    let mut qv = [0.0f64; 3];
    for k in 0..3 {
        let d = h * lit(0.5 + k as f64);
        let s = pole + towards * d;
        let v = fmt(r.eval1(s)?);
        xs[k] = fmt(d);
        rv[k] = v;
        qv[k] = v / fmt(d) * fmt(towards);
    }
    let extrap = |y: &[f64; 3]| -> f64 {
        // quadratic Lagrange interpolation evaluated at distance 0
        let mut acc = 0.0;
        for i in 0..3 {
            let mut w = 1.0;
            for j in 0..3 {
                if i != j {
                    w *= (0.0 - xs[j]) / (xs[i] - xs[j]);
                }
            }
            acc += w * y[i];
        }
        acc
    };
    Ok((extrap(&rv), extrap(&qv)))
}

/// Energy level used for Agmon distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyChoice<T> {
    Bottom,
    Value(T),
}

/// Samples of the effective potential `V_c = c²/R² + |f'|²/4` (or `|∇f|²/4`).
#[derive(Debug, Clone)]
pub struct PotentialField<T> {
    pub case: Case,
    pub topology: Topology,
    /// 1D sample abscissas (empty on boxes).
    pub grid: Vec<T>,
    pub lattice: Option<Lattice<T>>,
    pub values: Vec<T>,
    pub c: T,
    pub e_ref: T,
    /// Location of the minimum (one coordinate in 1D, two on boxes).
    pub x_min: Vec<T>,
    pub v_min: T,
    pub unique_min: bool,
    pub length: T,
    pub origin: T,
    eval: PotentialEval,
}

#[derive(Debug, Clone)]
struct PotentialEval {
    grad: Vec<ScalarExpr>,
    profile: Option<ScalarExpr>,
    c: f64,
}

impl PotentialEval {
    fn value<T: Scalar>(&self, x: &[T]) -> Result<T> {
        let mut v = T::zero();
        for g in &self.grad {
            let d = g.eval_at(x)?;
            v += d * d / lit(4.0);
        }
        if let Some(r) = &self.profile {
            if self.c != 0.0 {
                let rv = r.eval_at(x)?;
                let c: T = lit(self.c);
                v += c * c / (rv * rv);
            }
        }
        Ok(v)
    }
}

impl<T: Scalar> PotentialField<T> {
    pub fn s_min(&self) -> T {
        self.x_min[0]
    }

    /// Continuous evaluation of the potential at a 1D abscissa.
    pub fn eval(&self, s: T) -> Result<T> {
        self.eval.value(&[s])
    }

    /// Continuous evaluation at a point of the box.
    pub fn eval_point(&self, x: &[T]) -> Result<T> {
        self.eval.value(x)
    }
}

/// Samples the effective potential and locates its minimum.
pub fn effective_potential<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    c: T,
    e_choice: EnergyChoice<T>,
) -> Result<PotentialField<T>> {
    if c < T::zero() {
        return Err(Error::InvalidArgument("c must be nonnegative".into()));
    }
    let topology = spec.topology();
    let vars: Vec<&str> = if topology == Topology::Box2d {
        vec!["x1", "x2"]
    } else {
        vec!["s"]
    };
    if f.variables().iter().map(|s| s.as_str()).collect::<Vec<_>>() != vars {
        return Err(Error::InvalidArgument(format!(
            "f must be declared over {:?}",
            vars
        )));
    }
    let grad = vars
        .iter()
        .map(|v| f.differentiate(v))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let eval = PotentialEval {
        grad,
        profile: spec.profile.clone(),
        c: to_f64(c),
    };
    if topology == Topology::Box2d {
        return box_potential(spec, eval, c, e_choice);
    }
    let values = spec
        .grid
        .iter()
        .map(|s| eval.value(&[*s]))
        .collect::<Result<Vec<T>>>()?;
    let n = values.len();
    let periodic = topology == Topology::Circle;
    let vfun = |s: T| eval.value(&[spec.wrap(s)]).unwrap_or(T::infinity());
    // local minima runs of the sampled values
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let left_ok = if i == 0 {
            !periodic || values[n - 1] > values[i]
        } else {
            values[i - 1] > values[i]
        };
        let right_ok = if j == n - 1 {
            !periodic || values[0] > values[j]
        } else {
            values[j + 1] > values[j]
        };
        if left_ok && right_ok && !(i == 0 && j == n - 1) {
            runs.push((i, j));
        }
        i = j + 1;
    }
    let all_equal = values.iter().all(|v| (*v - values[0]).abs() <= lit(1e-12));
    let lo = spec.grid[0];
    let hi = spec.grid[n - 1];
    let mut minima: Vec<(T, T)> = Vec::new();
    for (a, b) in &runs {
        let (mut left, mut right) = if periodic {
            (spec.grid[*a] - spec.h, spec.grid[*b] + spec.h)
        } else {
            (
                spec.grid[a.saturating_sub(1)],
                spec.grid[(*b + 1).min(n - 1)],
            )
        };
        if !periodic {
            left = left.max(lo);
            right = right.min(hi);
        }
        let (xm, vm) = golden_min(&vfun, left, right, spec.h * lit(1e-10));
        // keep the sampled node if the refinement did not improve on it
        let (xm, vm) = if values[*a] <= vm {
            (spec.grid[*a], values[*a])
        } else {
            (spec.wrap(xm), vm)
        };
        minima.push((xm, vm));
    }
    if minima.is_empty() {
        let (k, v) = argmin(&values);
        minima.push((spec.grid[k], v));
    }
    minima.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (x_min, v_min) = minima[0];
    let close = minima
        .iter()
        .filter(|m| m.1 <= v_min + lit(1e-9))
        .count();
    let plateau = values
        .iter()
        .filter(|v| (**v - v_min).abs() <= lit(1e-12))
        .count();
    let unique_min = !all_equal && close == 1 && plateau <= 1;
    let e_ref = match e_choice {
        EnergyChoice::Bottom => v_min,
        EnergyChoice::Value(e) => e,
    };
    Ok(PotentialField {
        case: spec.case,
        topology,
        grid: spec.grid.clone(),
        lattice: None,
        values,
        c,
        e_ref,
        x_min: vec![x_min],
        v_min,
        unique_min,
        length: spec.length,
        origin: spec.origin,
        eval,
    })
}

fn argmin<T: Scalar>(v: &[T]) -> (usize, T) {
    let mut k = 0;
    for i in 1..v.len() {
        if v[i] < v[k] {
            k = i;
        }
    }
    (k, v[k])
}

fn box_potential<T: Scalar>(
    spec: &SurfaceSpec<T>,
    eval: PotentialEval,
    c: T,
    e_choice: EnergyChoice<T>,
) -> Result<PotentialField<T>> {
    let lat = spec.lattice.clone().expect("box lattice");
    let values = (0..lat.len())
        .map(|idx| eval.value(&lat.point(idx)))
        .collect::<Result<Vec<T>>>()?;
    let (k, v_min) = argmin(&values);
    let near = values
        .iter()
        .filter(|v| **v <= v_min + lit(1e-9))
        .count();
    let all_equal = values.iter().all(|v| (*v - values[0]).abs() <= lit(1e-12));
    // other strict local minima (4-neighbourhood) at the same level
    let n = lat.n;
    let mut others = 0;
    for idx in 0..values.len() {
        if idx == k {
            continue;
        }
        let (i, j) = (idx / n, idx % n);
        let mut is_min = true;
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                continue;
            }
            if values[(a as usize) * n + b as usize] < values[idx] {
                is_min = false;
            }
        }
        if is_min && values[idx] <= v_min + lit(1e-9) {
            others += 1;
        }
    }
    let e_ref = match e_choice {
        EnergyChoice::Bottom => v_min,
        EnergyChoice::Value(e) => e,
    };
    Ok(PotentialField {
        case: spec.case,
        topology: Topology::Box2d,
        grid: vec![],
        x_min: lat.point(k).to_vec(),
        lattice: Some(lat),
        values,
        c,
        e_ref,
        v_min,
        unique_min: !all_equal && near == 1 && others == 0,
        length: spec.length,
        origin: spec.origin,
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(case: &str, l: f64, r: Option<&str>, n: usize) -> SurfaceConfig {
        SurfaceConfig {
            case: case.into(),
            length: l,
            origin: None,
            profile: r.map(|s| s.to_string()),
            grid_n: n,
        }
    }

    #[test]
    fn sphere_accepted_and_inset() {
        let spec: SurfaceSpec<f64> =
            build_surface(&cfg("sphere", std::f64::consts::PI, Some("sin(s)"), 64)).unwrap();
        assert_eq!(spec.pole_set, vec![End::Start, End::Finish]);
        assert!((spec.grid[0] - std::f64::consts::PI / 128.0).abs() < 1e-15);
        assert!(spec.boundary.is_empty());
    }

    #[test]
    fn cylinder_and_rejections() {
        let spec: SurfaceSpec<f64> = build_surface(&cfg("cylinder", 1.0, Some("0.5"), 64)).unwrap();
        assert_eq!(spec.boundary, vec![End::Start, End::Finish]);
        assert_eq!(spec.grid[0], 0.0);
        assert_eq!(*spec.grid.last().unwrap(), 1.0);
        let err = build_surface::<f64>(&cfg("sphere", std::f64::consts::PI, Some("s"), 64)).unwrap_err();
        match err {
            Error::PoleCondition { which, measured, .. } => {
                assert_eq!(which, "R(L) = 0");
                assert!((measured - std::f64::consts::PI).abs() < 1e-12);
            }
            e => panic!("{:?}", e),
        }
        assert!(build_surface::<f64>(&cfg("cylinder", 1.0, Some("s - 0.5"), 64)).is_err());
        assert!(build_surface::<f64>(&cfg("disk", 1.0, Some("2*s"), 64)).is_err());
        assert!(build_surface::<f64>(&cfg("torus", 1.0, Some("1.5 + s"), 64)).is_err());
        assert!(build_surface::<f64>(&cfg("sphere", 1.0, Some("sin(s)"), 10)).is_err());
    }

    #[test]
    fn sphere_potential() {
        let spec: SurfaceSpec<f64> =
            build_surface(&cfg("sphere", std::f64::consts::PI, Some("sin(s)"), 64)).unwrap();
        let f = ScalarExpr::parse("0", &["s"]).unwrap();
        let pot = effective_potential(&spec, &f, 1.0, EnergyChoice::Bottom).unwrap();
        assert!((pot.s_min() - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        assert!((pot.v_min - 1.0).abs() < 1e-12);
        assert!(pot.unique_min);
        assert!(pot.values.iter().all(|v| *v >= 1.0));
    }

    #[test]
    fn interval_potential() {
        let mut c = cfg("interval", 4.0, None, 401);
        c.origin = Some(-2.0);
        let spec: SurfaceSpec<f64> = build_surface(&c).unwrap();
        let f = ScalarExpr::parse("s^2/2", &["s"]).unwrap();
        let pot = effective_potential(&spec, &f, 0.0, EnergyChoice::Bottom).unwrap();
        assert!(pot.s_min().abs() < 1e-12 && pot.v_min.abs() < 1e-15);
        assert!(pot.unique_min);
        // constant shift is bitwise invisible
        let g = f.plus_constant(3.25);
        let pot2 = effective_potential(&spec, &g, 0.0, EnergyChoice::Bottom).unwrap();
        assert!(pot.values.iter().zip(&pot2.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn flat_potential_is_not_unique() {
        let spec: SurfaceSpec<f64> = build_surface(&cfg("circle", 1.0, None, 64)).unwrap();
        let f = ScalarExpr::parse("0", &["s"]).unwrap();
        let pot = effective_potential(&spec, &f, 0.0, EnergyChoice::Bottom).unwrap();
        assert!(!pot.unique_min);
        let spec: SurfaceSpec<f64> = build_surface(&cfg("cylinder", 1.0, Some("1"), 64)).unwrap();
        let pot = effective_potential(&spec, &f, 1.0, EnergyChoice::Bottom).unwrap();
        assert!(!pot.unique_min);
    }

    #[test]
    fn flambda_box_potential() {
        let spec: SurfaceSpec<f64> = build_surface(&cfg("box2d", 1.0, None, 64)).unwrap();
        let fl = "(x1*sqrt(16*x1^2+1) + log(4*x1 + sqrt(16*x1^2+1))/4)/2 + (x2*sqrt(16*x2^2+1) + log(4*x2 + sqrt(16*x2^2+1))/4)/2";
        let f = ScalarExpr::parse(fl, &["x1", "x2"]).unwrap();
        let pot = effective_potential(&spec, &f, 0.0, EnergyChoice::Bottom).unwrap();
        assert!((pot.v_min - 0.5).abs() < 1e-12);
        assert!(pot.x_min.iter().all(|x| x.abs() < 1e-12));
        assert!(pot.unique_min);
        let v = pot.eval_point(&[0.3, -0.2]).unwrap();
        assert!((v - (16.0 * 0.13 + 2.0) / 4.0).abs() < 1e-12);
    }
}
