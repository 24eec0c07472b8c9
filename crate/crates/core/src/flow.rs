//! Gradient flow of `f`, hitting times of an observation region, and the
//! minimal times for the geometric control and flushing conditions.
//!
//! Forward time follows `ẋ = ∇f`; hitting times use the backward flow.

use crate::error::{Error, Result};
use crate::exprdsl::ScalarExpr;
use crate::geometry::{End, SurfaceSpec, Topology};
use crate::numerics::{adaptive_simpson, bisect_root};
use crate::region::Region;
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Gcc,
    Fc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMethod {
    Simulation,
    ClosedForm,
}

/// Sampled trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub points: Vec<Vec<T>>,
    /// Time at which the trajectory left a bounded domain.
    pub exit_time: Option<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &[T] {
        self.points.last().unwrap()
    }
}

/// Velocity field `±∇f` on a domain.
pub struct GradientField<'a, T: Scalar> {
    spec: &'a SurfaceSpec<T>,
    grad: Vec<ScalarExpr>,
    sign: T,
}

impl<'a, T: Scalar> GradientField<'a, T> {
    pub fn new(spec: &'a SurfaceSpec<T>, f: &ScalarExpr, direction: Direction) -> Result<Self> {
        let vars: Vec<&str> = if spec.topology() == Topology::Box2d {
            vec!["x1", "x2"]
        } else {
            vec!["s"]
        };
        let grad = vars
            .iter()
            .map(|v| f.differentiate(v))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let sign = match direction {
            Direction::Forward => T::one(),
            Direction::Backward => -T::one(),
        };
        Ok(GradientField { spec, grad, sign })
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn velocity(&self, x: &[T]) -> Result<Vec<T>> {
        let y: Vec<T> = if self.spec.case.is_periodic() {
            vec![self.spec.wrap(x[0])]
        } else {
            x.to_vec()
        };
        self.grad
            .iter()
            .map(|g| Ok(self.sign * g.eval_at(&y)?))
            .collect()
    }

    /// True when `x` lies in the closed domain.
    pub fn inside(&self, x: &[T]) -> bool {
        let spec = self.spec;
        if spec.topology() == Topology::Box2d {
            x.iter().all(|c| *c >= spec.origin && *c <= spec.end())
        } else {
            spec.contains(x[0])
        }
    }

    fn rk4(&self, x: &[T], h: T) -> Result<Vec<T>> {
        let half: T = lit(0.5);
        let k1 = self.velocity(x)?;
        let x2: Vec<T> = x.iter().zip(&k1).map(|(a, k)| *a + half * h * *k).collect();
        let k2 = self.velocity(&x2)?;
        let x3: Vec<T> = x.iter().zip(&k2).map(|(a, k)| *a + half * h * *k).collect();
        let k3 = self.velocity(&x3)?;
        let x4: Vec<T> = x.iter().zip(&k3).map(|(a, k)| *a + h * *k).collect();
        let k4 = self.velocity(&x4)?;
        let six: T = lit(6.0);
        let two: T = lit(2.0);
        Ok((0..x.len())
            .map(|i| x[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
            .collect())
    }

    /// One adaptive step by step doubling. Returns (new point, step taken,
    /// suggested next step).
    fn adaptive_step(&self, x: &[T], mut h: T, tol: T) -> Result<(Vec<T>, T, T)> {
        let half: T = lit(0.5);
        let min_step = lit::<T>(1e-14) * (T::one() + self.spec.length);
        loop {
            let full = self.rk4(x, h)?;
            let mid = self.rk4(x, h * half)?;
            let two = self.rk4(&mid, h * half)?;
            let err = full
                .iter()
                .zip(&two)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max)
                / lit(15.0);
            if err <= tol || h <= min_step {
                if err > tol {
                    return Err(Error::Numerical(format!(
                        "step size underflow near {:?} (stagnation)",
                        x.iter().map(|v| to_f64(*v)).collect::<Vec<_>>()
                    )));
                }
                let grow = if err == T::zero() {
                    lit(4.0)
                } else {
                    (lit::<T>(0.9) * (tol / err).powf(lit(0.2))).min(lit(4.0))
                };
                // local extrapolation
                let out: Vec<T> = two
                    .iter()
                    .zip(&full)
                    .map(|(b, a)| *b + (*b - *a) / lit(15.0))
                    .collect();
                return Ok((out, h, h * grow));
            }
            let shrink = (lit::<T>(0.9) * (tol / err).powf(lit(0.2))).max(lit(0.1));
            h *= shrink;
        }
    }
}

const STEP_TOL: f64 = 1e-9;

/// Integrates the gradient flow from `x0` over `t_span`.
///
/// On bounded domains the integration stops at the first exit, whose time is
/// located by bisection on the last step.
pub fn integrate_flow<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    x0: &[T],
    t_span: (T, T),
    direction: Direction,
) -> Result<Trajectory<T>> {
    let field = GradientField::new(spec, f, direction)?;
    if x0.len() != field.dim() {
        return Err(Error::InvalidArgument("point dimension does not match the domain".into()));
    }
    if !field.inside(x0) {
        return Err(Error::InvalidArgument("starting point outside the domain".into()));
    }
    let (t0, t1) = t_span;
    let tol: T = lit(STEP_TOL);
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut traj = Trajectory {
        times: vec![t],
        points: vec![x.clone()],
        exit_time: None,
    };
    let mut h = ((t1 - t0) / lit(64.0)).min(spec.length / lit(64.0)).max(lit(1e-12));
    while t < t1 {
        let step = h.min(t1 - t);
        let (nx, taken, next) = field.adaptive_step(&x, step, tol)?;
        if !field.inside(&nx) {
            let g = |d: T| -> T {
                match field.rk4(&x, d) {
                    Ok(p) if field.inside(&p) => -T::one(),
                    _ => T::one(),
                }
            };
            let d = bisect_root(&g, T::zero(), taken, taken * lit(1e-12));
            let p = field.rk4(&x, d)?;
            traj.times.push(t + d);
            traj.points.push(p);
            traj.exit_time = Some(t + d);
            return Ok(traj);
        }
        t += taken;
        x = nx;
        if spec.case.is_periodic() {
            x[0] = spec.wrap(x[0]);
        }
        traj.times.push(t);
        traj.points.push(x.clone());
        h = next;
    }
    Ok(traj)
}

/// Result of [`gcc_time`].
#[derive(Debug, Clone)]
pub struct FlowReport<T> {
    pub condition: Condition,
    pub satisfied: bool,
    /// Minimal time, `+∞` when unsatisfied (or `T_cap` when censored).
    pub t_min: T,
    pub censored: bool,
    /// Point realizing the largest hitting time.
    pub witness: Vec<T>,
    /// Evaluation points of `g_field`.
    pub points: Vec<Vec<T>>,
    pub hitting_times: Vec<T>,
    /// `g_{ω,T}` at `T = 1.05·T_min` (or `T_cap`).
    pub g_field: Vec<T>,
    pub g_time: T,
    pub method: FlowMethod,
    /// Stationary point of the flow outside the region, if any.
    pub stationary: Option<Vec<T>>,
}

/// Evaluation points: the grid plus probes just outside each region endpoint
/// and just inside Dirichlet ends.
fn probe_points<T: Scalar>(spec: &SurfaceSpec<T>, omega: &Region<T>) -> Vec<Vec<T>> {
    if let Some(lat) = &spec.lattice {
        return (0..lat.len()).map(|i| lat.point(i).to_vec()).collect();
    }
    let mut pts: Vec<T> = spec.grid.clone();
    let off = spec.length * lit(1e-9);
    for e in omega.endpoints() {
        for p in [e - off, e + off] {
            let p = spec.wrap(p);
            if spec.contains(p) {
                pts.push(p);
            }
        }
    }
    if spec.boundary.contains(&End::Start) || spec.pole_set.contains(&End::Start) {
        pts.push(spec.origin + off);
    }
    if spec.boundary.contains(&End::Finish) || spec.pole_set.contains(&End::Finish) {
        pts.push(spec.end() - off);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts.into_iter().map(|p| vec![p]).collect()
}

/// Looks for a stationary point of `f` in the closure of the complement of
/// the region. Poles outside the region count as stationary.
pub fn stationary_outside<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    omega: &Region<T>,
) -> Result<Option<Vec<T>>> {
    if spec.topology() == Topology::Box2d {
        let lat = spec.lattice.as_ref().unwrap();
        let g1 = f.differentiate("x1")?;
        let g2 = f.differentiate("x2")?;
        let tiny: T = lit(1e-12);
        for i in 0..lat.len() {
            let p = lat.point(i);
            if omega.contains(spec, &p) {
                continue;
            }
            let a = g1.eval_at(&p)?;
            let b = g2.eval_at(&p)?;
            if a.abs() <= tiny && b.abs() <= tiny {
                return Ok(Some(p.to_vec()));
            }
        }
        return Ok(None);
    }
    let df = f.differentiate("s")?;
    for (a, b) in omega.complement(spec) {
        for (end, pos) in [(End::Start, spec.origin), (End::Finish, spec.end())] {
            if spec.pole_set.contains(&end) && pos >= a && pos <= b {
                return Ok(Some(vec![pos]));
            }
        }
        // dense sampling of f' on [a, b], refined at sign changes
        let m = (((b - a) / spec.h).to_f64().unwrap_or(0.0).ceil() as usize * 4).max(64);
        let step = (b - a) / lit(m as f64);
        let mut prev_s = a;
        let mut prev = df.eval1(spec.wrap(a))?;
        if prev == T::zero() {
            return Ok(Some(vec![spec.wrap(a)]));
        }
        for i in 1..=m {
            let s = if i == m { b } else { a + step * lit(i as f64) };
            let v = df.eval1(spec.wrap(s))?;
            if v == T::zero() {
                return Ok(Some(vec![spec.wrap(s)]));
            }
            if (v > T::zero()) != (prev > T::zero()) {
                let g = |x: T| df.eval1(spec.wrap(x)).unwrap_or(T::zero());
                let r = bisect_root(&g, prev_s, s, spec.length * lit(1e-14));
                return Ok(Some(vec![spec.wrap(r)]));
            }
            prev = v;
            prev_s = s;
        }
    }
    Ok(None)
}

/// Hitting time of the region (or of the domain exit for FC) along the
/// backward flow from `y`, capped at `t_cap`.
fn hitting_time<T: Scalar>(
    field: &GradientField<'_, T>,
    spec: &SurfaceSpec<T>,
    omega: &Region<T>,
    condition: Condition,
    y: &[T],
    t_cap: T,
) -> Result<Option<T>> {
    let hit = |p: &[T]| -> bool {
        let out = !field.inside(p);
        if out {
            return condition == Condition::Fc;
        }
        omega.contains(spec, p)
    };
    if hit(y) {
        return Ok(Some(T::zero()));
    }
    let tol: T = lit(STEP_TOL);
    let mut t = T::zero();
    let mut x = y.to_vec();
    let mut h = spec.length / lit(256.0);
    while t < t_cap {
        let step = h.min(t_cap - t);
        let (nx, taken, next) = field.adaptive_step(&x, step, tol)?;
        if hit(&nx) || !field.inside(&nx) {
            if !hit(&nx) {
                // left a bounded domain without being observed
                return Ok(None);
            }
            let g = |d: T| -> T {
                match field.rk4(&x, d) {
                    Ok(p) if hit(&p) => T::one(),
                    Ok(_) => -T::one(),
                    Err(_) => T::one(),
                }
            };
            let d = bisect_root(&g, T::zero(), taken, taken * lit(1e-13));
            return Ok(Some(t + d));
        }
        t += taken;
        x = nx;
        if spec.case.is_periodic() {
            x[0] = spec.wrap(x[0]);
        }
        h = next;
    }
    Ok(None)
}

/// `g_{ω,T}(y) = ∫₀ᵀ 1_ω(φ_{-t}(y)) dt` at each point. For FC the time spent
/// outside the domain counts as observed.
pub fn g_field<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    omega: &Region<T>,
    condition: Condition,
    t_end: T,
    points: &[Vec<T>],
) -> Result<Vec<T>> {
    let field = GradientField::new(spec, f, Direction::Backward)?;
    let observed = |p: &[T]| -> bool {
        if !field.inside(p) {
            condition == Condition::Fc
        } else {
            omega.contains(spec, p)
        }
    };
    let max_step = t_end / lit(4000.0);
    let half: T = lit(0.5);
    points
        .iter()
        .map(|y| {
            let mut t = T::zero();
            let mut x = y.clone();
            let mut acc = T::zero();
            let mut h = max_step;
            let mut in_prev = observed(&x);
            while t < t_end {
                if !field.inside(&x) {
                    // outside a bounded domain the state is frozen
                    if in_prev {
                        acc += t_end - t;
                    }
                    break;
                }
                let step = h.min(max_step).min(t_end - t);
                let (nx, taken, next) = field.adaptive_step(&x, step, lit(STEP_TOL))?;
                let in_next = observed(&nx);
                acc += match (in_prev, in_next) {
                    (true, true) => taken,
                    (false, false) => T::zero(),
                    _ => taken * half,
                };
                t += taken;
                x = nx;
                if spec.case.is_periodic() {
                    x[0] = spec.wrap(x[0]);
                }
                in_prev = in_next;
                h = next;
            }
            Ok(acc)
        })
        .collect()
}

/// Minimal time for (GCC) or (FC), by simulation or (in 1D) by the
/// closed-form integrals `∫ ds/|f'|` over the components of the complement.
pub fn gcc_time<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    omega: &Region<T>,
    condition: Condition,
    method: FlowMethod,
    t_cap: T,
) -> Result<FlowReport<T>> {
    omega.validate(spec)?;
    if !(t_cap > T::zero()) {
        return Err(Error::InvalidArgument("T_cap must be positive".into()));
    }
    let points = probe_points(spec, omega);
    let stationary = stationary_outside(spec, f, omega)?;
    let (satisfied, t_min, censored, witness, hitting) = if stationary.is_some() {
        (false, T::infinity(), false, stationary.clone().unwrap(), vec![])
    } else {
        match method {
            FlowMethod::Simulation => {
                let field = GradientField::new(spec, f, Direction::Backward)?;
                let mut times = Vec::with_capacity(points.len());
                for y in &points {
                    times.push(hitting_time(&field, spec, omega, condition, y, t_cap)?);
                }
                let mut worst = T::zero();
                let mut arg = 0;
                let mut missing = None;
                for (i, h) in times.iter().enumerate() {
                    match h {
                        Some(v) if *v > worst => {
                            worst = *v;
                            arg = i;
                        }
                        None if missing.is_none() => missing = Some(i),
                        _ => {}
                    }
                }
                let hitting: Vec<T> = times.iter().map(|h| h.unwrap_or(T::infinity())).collect();
                match missing {
                    Some(i) => (false, t_cap, true, points[i].clone(), hitting),
                    None => (true, worst, false, points[arg].clone(), hitting),
                }
            }
            FlowMethod::ClosedForm => {
                let (ok, t, w) = closed_form(spec, f, omega, condition)?;
                if ok && t > t_cap {
                    (false, t_cap, true, w, vec![])
                } else {
                    (ok, if ok { t } else { T::infinity() }, false, w, vec![])
                }
            }
        }
    };
    let g_time = if satisfied { t_min * lit(1.05) } else { t_cap };
    let g = if g_time > T::zero() {
        g_field(spec, f, omega, condition, g_time, &points)?
    } else {
        vec![T::zero(); points.len()]
    };
    Ok(FlowReport {
        condition,
        satisfied,
        t_min,
        censored,
        witness,
        points,
        hitting_times: hitting,
        g_field: g,
        g_time,
        method,
        stationary,
    })
}

fn closed_form<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    omega: &Region<T>,
    condition: Condition,
) -> Result<(bool, T, Vec<T>)> {
    if spec.topology() == Topology::Box2d {
        return Err(Error::InvalidArgument(
            "the closed form applies to one-dimensional and rotational domains only".into(),
        ));
    }
    let df = f.differentiate("s")?;
    let tol = lit::<T>(1e-12) * (T::one() + spec.length);
    let mut worst = T::zero();
    let mut witness = vec![spec.origin];
    for (a, b) in omega.complement(spec) {
        let touches_start = !spec.case.is_periodic() && a <= spec.origin;
        let touches_end = !spec.case.is_periodic() && b >= spec.end();
        if touches_start && touches_end && condition == Condition::Gcc {
            return Ok((false, T::infinity(), vec![a]));
        }
        let sign = df.eval1(spec.wrap((a + b) * lit(0.5)))?;
        if condition == Condition::Gcc {
            // the backward velocity -f' must not push towards a boundary end
            if (touches_start && sign > T::zero()) || (touches_end && sign < T::zero()) {
                return Ok((false, T::infinity(), vec![if touches_start { a } else { b }]));
            }
        }
        let g = |s: T| T::one() / df.eval1(spec.wrap(s)).unwrap_or(T::nan()).abs();
        let t = adaptive_simpson(&g, a, b, tol);
        if !t.is_finite() {
            return Ok((false, T::infinity(), vec![a]));
        }
        if t > worst {
            worst = t;
            // the longest trajectory starts at the upstream end of the component
            witness = vec![spec.wrap(if sign > T::zero() { b } else { a })];
        }
    }
    Ok((true, worst, witness))
}
