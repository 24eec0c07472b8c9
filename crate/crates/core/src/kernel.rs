//! Action distances of the gradient flow and the viscous transport kernel.
//!
//! With `V = |∇f|²/4`, the action of a path `γ: [0, t] → M` is
//! `ρ(x, y, t) = inf ∫ ¼|γ̇|² + V(γ)`, and
//! `d_∇f(x, y, t) = ρ + (f(x) - f(y))/2 = inf ∫ ¼|γ̇ - ∇f(γ)|²` vanishes
//! exactly when `y` is reached from `x` by the forward flow `ẋ = ∇f` in time
//! `t`. The kernel `K_ε(x, y, t)` of `∂t u = ∇f·∇u + q u + εΔu` satisfies
//! `-ε log K_ε ≈ d_∇f` for small `ε`.
//!
//! Everything here is one-dimensional: intervals, circles, and meridians of
//! surfaces of revolution in the rotation-invariant sector.

use crate::error::{Error, Result};
use crate::exprdsl::ScalarExpr;
use crate::geometry::{SurfaceSpec, Topology};
use crate::linalg::{dense_sym_eigen, Dense};
use crate::numerics::{adaptive_simpson, golden_min, linear_fit, log_sum_exp};
use crate::observability::{fit_rate, t_unif_bracket, Bracket, RateFit};
use crate::region::Region;
use crate::scalar::{lit, to_f64, Scalar};
use crate::spectral::{assemble_operator, DiscreteOperator};

/// Which functional an [`ActionResult`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionForm {
    Rho,
    /// `∫ ¼|γ̇ + ∇f|²`
    DxPlus,
    /// `∫ ¼|γ̇ - ∇f|²`, the distance `d_∇f`.
    DxMinus,
    /// Entry of a Bellman table.
    HopfLax,
}

impl ActionForm {
    pub fn name(self) -> &'static str {
        match self {
            ActionForm::Rho => "rho",
            ActionForm::DxPlus => "dX_plus",
            ActionForm::DxMinus => "dX_minus",
            ActionForm::HopfLax => "hopf_lax",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActionResult<T> {
    pub x: T,
    pub y: T,
    pub t: T,
    pub value: T,
    pub form: ActionForm,
    /// Optimized nodes `γ(i t/m)`, unwrapped on circles.
    pub path: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
}

/// The field `f` on a one-dimensional domain, with the derivatives the
/// action functionals need.
#[derive(Debug, Clone)]
pub struct ActionContext<T> {
    pub spec: SurfaceSpec<T>,
    f: ScalarExpr,
    df: ScalarExpr,
    d2f: ScalarExpr,
}

/// Segments shorter than this use the derivative at the midpoint instead of
/// the difference quotient.
const SECANT_MIN: f64 = 1e-4;

impl<T: Scalar> ActionContext<T> {
    pub fn new(spec: &SurfaceSpec<T>, f: &ScalarExpr) -> Result<Self> {
        if spec.topology() == Topology::Box2d {
            return Err(Error::InvalidArgument(
                "action distances are computed on one-dimensional domains".into(),
            ));
        }
        let df = f.differentiate("s")?;
        let d2f = df.differentiate("s")?;
        Ok(ActionContext {
            spec: spec.clone(),
            f: f.clone(),
            df,
            d2f,
        })
    }

    pub fn f(&self, s: T) -> Result<T> {
        Ok(self.f.eval1(self.spec.wrap(s))?)
    }

    pub fn grad(&self, s: T) -> Result<T> {
        Ok(self.df.eval1(self.spec.wrap(s))?)
    }

    /// `V = |∇f|²/4`.
    pub fn potential(&self, s: T) -> Result<T> {
        let g = self.grad(s)?;
        Ok(g * g * lit(0.25))
    }

    fn hess(&self, s: T) -> Result<T> {
        Ok(self.d2f.eval1(self.spec.wrap(s))?)
    }

    fn periodic(&self) -> bool {
        self.spec.case.is_periodic()
    }

    fn clamp(&self, s: T) -> T {
        if self.periodic() {
            s
        } else {
            s.max(self.spec.origin).min(self.spec.end())
        }
    }

    /// The copy of `to` closest to `from` on a circle; `to` otherwise.
    fn lift(&self, from: T, to: T) -> T {
        if self.periodic() {
            let l = self.spec.length;
            to + l * ((from - to) / l).round()
        } else {
            to
        }
    }

    /// Geodesic distance.
    pub fn distance(&self, a: T, b: T) -> T {
        (self.lift(a, b) - a).abs()
    }

    /// Difference quotient of `f` over a segment and its partial derivatives
    /// in the two endpoints.
    fn secant(&self, p: T, q: T) -> Result<(T, T, T)> {
        let d = q - p;
        if d.abs() > lit(SECANT_MIN) {
            let g = (self.f(q)? - self.f(p)?) / d;
            let gq = (self.grad(q)? - g) / d;
            let gp = (g - self.grad(p)?) / d;
            Ok((g, gp, gq))
        } else {
            let mid = (p + q) * lit(0.5);
            let h = self.hess(mid)? * lit(0.5);
            Ok((self.grad(mid)?, h, h))
        }
    }

    /// Discrete action of a path with `m = path.len() - 1` equal time steps.
    ///
    /// The drift on each segment is the difference quotient `g` of `f`, so
    /// `Σ (q - p) g` telescopes to `f(y) - f(x)` and the three forms differ
    /// by exactly `(f(x) - f(y))/2`.
    pub fn path_action(&self, path: &[T], t: T, form: ActionForm) -> Result<T> {
        let m = path.len() - 1;
        let dt = t / lit(m as f64);
        let quarter: T = lit(0.25);
        let mut acc = T::zero();
        for w in path.windows(2) {
            let (g, _, _) = self.secant(w[0], w[1])?;
            let v = (w[1] - w[0]) / dt;
            acc += match form {
                ActionForm::Rho | ActionForm::HopfLax => dt * quarter * (v * v + g * g),
                ActionForm::DxMinus => dt * quarter * (v - g) * (v - g),
                ActionForm::DxPlus => dt * quarter * (v + g) * (v + g),
            };
        }
        Ok(acc)
    }

    /// Gradient of the discrete `ρ` in the interior nodes.
    fn action_gradient(&self, path: &[T], dt: T) -> Result<Vec<T>> {
        let m = path.len() - 1;
        let half: T = lit(0.5);
        let mut grad = vec![T::zero(); m + 1];
        for i in 0..m {
            let (p, q) = (path[i], path[i + 1]);
            let (g, gp, gq) = self.secant(p, q)?;
            let kin = (q - p) / (dt + dt);
            grad[i] += -kin + dt * g * gp * half;
            grad[i + 1] += kin + dt * g * gq * half;
        }
        grad[0] = T::zero();
        grad[m] = T::zero();
        Ok(grad)
    }

    /// Forward flow `ẋ = ∇f` sampled at `m + 1` equally spaced times.
    fn flow_samples(&self, x: T, t: T, m: usize) -> Result<Vec<T>> {
        let dt = t / lit(m as f64);
        let sub = 8;
        let h = dt / lit(sub as f64);
        let half: T = lit(0.5);
        let sixth: T = lit(1.0 / 6.0);
        let mut out = Vec::with_capacity(m + 1);
        let mut s = x;
        out.push(s);
        for _ in 0..m {
            for _ in 0..sub {
                let k1 = self.grad(s)?;
                let k2 = self.grad(self.clamp(s + h * half * k1))?;
                let k3 = self.grad(self.clamp(s + h * half * k2))?;
                let k4 = self.grad(self.clamp(s + h * k3))?;
                s = self.clamp(s + h * sixth * (k1 + (k2 + k3) * lit(2.0) + k4));
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Forward flow map `φ_t(x)` (wrapped on circles).
    pub fn flow_map(&self, x: T, t: T) -> Result<T> {
        let m = ((t.abs() / lit(0.01)).ceil().max(T::one())).to_usize().unwrap_or(1);
        let s = if t >= T::zero() {
            *self.flow_samples(x, t, m)?.last().unwrap()
        } else {
            let neg = ActionContext {
                spec: self.spec.clone(),
                f: self.f.negated(),
                df: self.df.negated(),
                d2f: self.d2f.negated(),
            };
            *neg.flow_samples(x, -t, m)?.last().unwrap()
        };
        Ok(self.spec.wrap(s))
    }
}

/// Solves a symmetric tridiagonal system by LDLᵀ; `None` unless every pivot is
/// positive.
fn solve_spd_tridiag<T: Scalar>(diag: &[T], off: &[T], rhs: &[T]) -> Option<Vec<T>> {
    let n = diag.len();
    let mut d = vec![T::zero(); n];
    let mut l = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        let mut di = diag[i];
        let mut zi = rhs[i];
        if i > 0 {
            l[i] = off[i - 1] / d[i - 1];
            di -= l[i] * off[i - 1];
            zi -= l[i] * z[i - 1];
        }
        if !(di > T::zero()) {
            return None;
        }
        d[i] = di;
        z[i] = zi;
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let next = if i + 1 < n { l[i + 1] * x[i + 1] } else { T::zero() };
        x[i] = z[i] / d[i] - next;
    }
    Some(x)
}

const MAX_ITER: usize = 300;
const STALL_WINDOW: usize = 5;
const STALL_DECREASE: f64 = 1e-10;

/// Minimizes the discrete `ρ` over interior nodes by damped Newton steps
/// with backtracking. The Hessian is tridiagonal and is formed by central
/// differences of the analytic gradient.
fn minimize_path<T: Scalar>(ctx: &ActionContext<T>, mut path: Vec<T>, t: T) -> Result<(Vec<T>, T, bool, usize)> {
    let m = path.len() - 1;
    let dt = t / lit(m as f64);
    let mut value = ctx.path_action(&path, t, ActionForm::Rho)?;
    let mut history = vec![value];
    let mut iterations = 0;
    let mut converged = false;
    let eta: T = lit(1e-6);
    let two: T = lit(2.0);
    while iterations < MAX_ITER {
        iterations += 1;
        let grad = ctx.action_gradient(&path, dt)?;
        // tridiagonal Hessian, three colours of interior nodes
        let n = m - 1;
        let mut hd = vec![T::zero(); n];
        let mut ho = vec![T::zero(); n.saturating_sub(1)];
        for colour in 0..3 {
            let mut plus = path.clone();
            let mut minus = path.clone();
            for i in (1..m).filter(|i| i % 3 == colour) {
                let step = eta * (T::one() + path[i].abs());
                plus[i] += step;
                minus[i] -= step;
            }
            let gp = ctx.action_gradient(&plus, dt)?;
            let gm = ctx.action_gradient(&minus, dt)?;
            for i in (1..m).filter(|i| i % 3 == colour) {
                let step = eta * (T::one() + path[i].abs());
                let col = |j: usize| (gp[j] - gm[j]) / (two * step);
                hd[i - 1] = col(i);
                if i + 1 < m {
                    ho[i - 1] += col(i + 1) * lit(0.5);
                }
                if i > 1 {
                    ho[i - 2] += col(i - 1) * lit(0.5);
                }
            }
        }
        let rhs: Vec<T> = (1..m).map(|i| -grad[i]).collect();
        let scale = hd.iter().fold(T::zero(), |a, b| a.max(b.abs())).max(T::min_positive_value());
        let mut shift = T::zero();
        let dir = loop {
            let d: Vec<T> = hd.iter().map(|v| *v + shift).collect();
            if let Some(x) = solve_spd_tridiag(&d, &ho, &rhs) {
                break x;
            }
            shift = if shift == T::zero() { scale * lit(1e-8) } else { shift * lit(10.0) };
            if shift > scale * lit(1e8) {
                // fall back to steepest descent
                break rhs.iter().map(|g| *g / scale).collect();
            }
        };
        let slope: T = (1..m).map(|i| grad[i] * dir[i - 1]).sum();
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial = path.clone();
            for i in 1..m {
                trial[i] = ctx.clamp(path[i] + alpha * dir[i - 1]);
            }
            let v = ctx.path_action(&trial, t, ActionForm::Rho)?;
            if v <= value + lit::<T>(1e-4) * alpha * slope {
                accepted = Some((trial, v));
                break;
            }
            alpha *= lit(0.5);
        }
        match accepted {
            Some((trial, v)) => {
                path = trial;
                value = v;
            }
            None => {
                // no representable decrease left
                converged = true;
                break;
            }
        }
        history.push(value);
        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            if old - value < lit(STALL_DECREASE) {
                converged = true;
                break;
            }
        }
    }
    Ok((path, value, converged, iterations))
}

/// Action distance between `x` and `y` over horizon `t` with `m` path
/// segments.
///
/// Two initial paths are optimized, the straight (shortest geodesic) one and
/// the forward flow from `x` bent linearly to end at `y`; the smaller
/// optimum is returned. All forms share the optimal path of `ρ` since they
/// differ by a path-independent constant.
pub fn action_distance<T: Scalar>(
    ctx: &ActionContext<T>,
    x: T,
    y: T,
    t: T,
    form: ActionForm,
    m: usize,
) -> Result<ActionResult<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument("the horizon t must be positive".into()));
    }
    if m < 16 {
        return Err(Error::InvalidArgument("action paths need at least 16 segments".into()));
    }
    if !ctx.spec.contains(x) || !ctx.spec.contains(y) {
        return Err(Error::InvalidArgument("endpoints must lie in the domain".into()));
    }
    let mf: T = lit(m as f64);
    let straight_end = ctx.lift(x, y);
    let straight: Vec<T> = (0..=m)
        .map(|i| x + (straight_end - x) * lit::<T>(i as f64) / mf)
        .collect();
    let flow = ctx.flow_samples(x, t, m)?;
    let flow_end = ctx.lift(flow[m], y);
    let drift = flow_end - flow[m];
    let bent: Vec<T> = flow
        .iter()
        .enumerate()
        .map(|(i, s)| ctx.clamp(*s + drift * lit::<T>(i as f64) / mf))
        .collect();
    let mut best: Option<(Vec<T>, T, bool, usize)> = None;
    let mut total_iter = 0;
    for init in [straight, bent] {
        let r = minimize_path(ctx, init, t)?;
        total_iter += r.3;
        if best.as_ref().map_or(true, |b| r.1 < b.1) {
            best = Some(r);
        }
    }
    let (path, _, converged, _) = best.unwrap();
    let value = match form {
        ActionForm::HopfLax => ctx.path_action(&path, t, ActionForm::Rho)?,
        _ => ctx.path_action(&path, t, form)?,
    };
    Ok(ActionResult {
        x,
        y,
        t,
        value,
        form,
        path,
        converged,
        iterations: total_iter,
    })
}

/// `inf_t ρ(x, y, t)` over `t ∈ [t_lo, t_hi]`: a log-spaced scan with
/// `samples` horizons refined by golden section around the best one.
/// Returns `(value, argmin t)`.
pub fn inf_time_rho<T: Scalar>(
    ctx: &ActionContext<T>,
    x: T,
    y: T,
    m: usize,
    t_lo: T,
    t_hi: T,
    samples: usize,
) -> Result<(T, T)> {
    if !(t_lo > T::zero() && t_hi > t_lo) || samples < 3 {
        return Err(Error::InvalidArgument("need 0 < t_lo < t_hi and at least three samples".into()));
    }
    let (a, b) = (t_lo.ln(), t_hi.ln());
    let step = (b - a) / lit((samples - 1) as f64);
    let eval = |lt: T| -> T {
        action_distance(ctx, x, y, lt.exp(), ActionForm::Rho, m)
            .map(|r| r.value)
            .unwrap_or(T::infinity())
    };
    let mut best = (T::infinity(), a);
    let mut best_i = 0;
    for i in 0..samples {
        let lt = a + step * lit(i as f64);
        let v = eval(lt);
        if v < best.0 {
            best = (v, lt);
            best_i = i;
        }
    }
    let lo = a + step * lit(best_i.saturating_sub(1) as f64);
    let hi = a + step * lit((best_i + 1).min(samples - 1) as f64);
    let (lt, v) = golden_min(&eval, lo, hi, lit(1e-4));
    if v < best.0 {
        best = (v, lt);
    }
    Ok((best.0, best.1.exp()))
}

/// Bellman evaluation of the action over all node pairs.
#[derive(Debug, Clone)]
pub struct HopfLaxTable<T> {
    pub nodes: Vec<T>,
    pub t: T,
    pub m: usize,
    /// `rho[i][j] = ρ(nodes[i], nodes[j], t)`.
    pub rho: Vec<Vec<T>>,
}

impl<T: Scalar> HopfLaxTable<T> {
    /// CSV matrix with a header row of node abscissas.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x\\y");
        for y in &self.nodes {
            s.push_str(&format!(",{:.16e}", to_f64(*y)));
        }
        s.push('\n');
        for (i, row) in self.rho.iter().enumerate() {
            s.push_str(&format!("{:.16e}", to_f64(self.nodes[i])));
            for v in row {
                s.push_str(&format!(",{:.16e}", to_f64(*v)));
            }
            s.push('\n');
        }
        s
    }
}

fn node_potentials<T: Scalar>(ctx: &ActionContext<T>, nodes: &[T]) -> Result<Vec<T>> {
    nodes.iter().map(|s| ctx.potential(*s)).collect()
}

/// Rows of the Bellman recursion from each source: `out[k][l][j]` is the
/// action from `nodes[sources[k]]` to `nodes[j]` at time `(l + 1) t / m`.
///
/// The local action over one slice is `d(x, x')²/(4Δt) + (Δt/2)(V(x) + V(x'))`;
/// ties go to the smaller intermediate index.
pub fn hopf_lax_rows<T: Scalar>(
    ctx: &ActionContext<T>,
    nodes: &[T],
    sources: &[usize],
    t: T,
    m: usize,
) -> Result<Vec<Vec<Vec<T>>>> {
    if m < 8 {
        return Err(Error::InvalidArgument("the Bellman recursion needs at least 8 slices".into()));
    }
    let dt = t / lit(m as f64);
    if !(dt > T::zero()) || !(dt * dt > T::min_positive_value()) {
        return Err(Error::Numerical(format!("time slice Δt = {} underflows", to_f64(dt))));
    }
    let n = nodes.len();
    let v = node_potentials(ctx, nodes)?;
    let half_dt = dt * lit(0.5);
    let inv = T::one() / (dt * lit(4.0));
    let mut local = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let d = ctx.distance(nodes[i], nodes[j]);
            local[i * n + j] = d * d * inv + half_dt * (v[i] + v[j]);
        }
    }
    let mut out = Vec::with_capacity(sources.len());
    for &src in sources {
        let mut slices = Vec::with_capacity(m);
        let mut row: Vec<T> = (0..n).map(|j| local[src * n + j]).collect();
        slices.push(row.clone());
        for _ in 1..m {
            let mut next = vec![T::infinity(); n];
            for w in 0..n {
                let base = row[w];
                let lw = &local[w * n..(w + 1) * n];
                for z in 0..n {
                    let c = base + lw[z];
                    if c < next[z] {
                        next[z] = c;
                    }
                }
            }
            row = next;
            slices.push(row.clone());
        }
        out.push(slices);
    }
    Ok(out)
}

/// `ρ(x_i, y_j, t)` over all node pairs.
pub fn hopf_lax_table<T: Scalar>(ctx: &ActionContext<T>, nodes: &[T], t: T, m: usize) -> Result<HopfLaxTable<T>> {
    let sources: Vec<usize> = (0..nodes.len()).collect();
    let rows = hopf_lax_rows(ctx, nodes, &sources, t, m)?;
    Ok(HopfLaxTable {
        nodes: nodes.to_vec(),
        t,
        m,
        rho: rows.into_iter().map(|mut s| s.pop().unwrap()).collect(),
    })
}

/// Uniform nodes on the domain: endpoints included on intervals, spacing
/// `L/n` on circles.
pub fn uniform_nodes<T: Scalar>(spec: &SurfaceSpec<T>, n: usize) -> Vec<T> {
    if spec.case.is_periodic() {
        let h = spec.length / lit(n as f64);
        (0..n).map(|i| spec.origin + h * lit(i as f64)).collect()
    } else {
        let h = spec.length / lit((n - 1) as f64);
        (0..n).map(|i| spec.origin + h * lit(i as f64)).collect()
    }
}

/// The three expressions of the Agmon distance between two points.
#[derive(Debug, Clone)]
pub struct ReparamReport<T> {
    /// Energy form: `inf_t ρ(x, y, t)` over the horizon grid.
    pub d1: T,
    /// Smallest length `∫|γ̇|√V` of the optimal energy paths over the grid.
    pub d2: T,
    /// `∫|γ̇|√V` along the straight path parametrized on `[0, 1]`.
    pub d3: T,
    pub max_gap: T,
    pub pass: bool,
}

/// Values below this are compared in absolute terms in [`reparametrization_check`].
const REPARAM_FLOOR: f64 = 0.25;

/// Compares the energy form, the free-time length form and the `[0, 1]`
/// length form of the Agmon distance, with horizons on a log grid over
/// `[1e-2, 1e2]`. Passes when every pairwise gap is at most 2% of
/// `max(|a|, |b|, 0.25)`.
pub fn reparametrization_check<T: Scalar>(ctx: &ActionContext<T>, x: T, y: T, samples: usize) -> Result<ReparamReport<T>> {
    if samples < 3 {
        return Err(Error::InvalidArgument("need at least three horizons".into()));
    }
    let m = 64;
    let sqrt_v = |s: T| ctx.potential(s).map(|v| v.sqrt()).unwrap_or(T::nan());
    let arc = |end: T| -> T { adaptive_simpson(&|u: T| sqrt_v(x + (end - x) * u), T::zero(), T::one(), lit(1e-12)) * (end - x).abs() };
    let mut d3 = arc(ctx.lift(x, y));
    if ctx.periodic() {
        let l = ctx.spec.length;
        let near = ctx.lift(x, y);
        let other = if near >= x { near - l } else { near + l };
        d3 = d3.min(arc(other));
    }
    let (a, b): (T, T) = (lit::<T>(1e-2).ln(), lit::<T>(1e2).ln());
    let mut d1 = T::infinity();
    let mut d2 = T::infinity();
    for i in 0..samples {
        let t = (a + (b - a) * lit::<T>(i as f64) / lit((samples - 1) as f64)).exp();
        let r = action_distance(ctx, x, y, t, ActionForm::Rho, m)?;
        d1 = d1.min(r.value);
        let mut len = T::zero();
        for w in r.path.windows(2) {
            let (g, _, _) = ctx.secant(w[0], w[1])?;
            len += (w[1] - w[0]).abs() * g.abs() * lit(0.5);
        }
        d2 = d2.min(len);
    }
    let floor: T = lit(REPARAM_FLOOR);
    let gap = |p: T, q: T| (p - q).abs() / p.abs().max(q.abs()).max(floor);
    let max_gap = gap(d1, d2).max(gap(d1, d3)).max(gap(d2, d3));
    Ok(ReparamReport {
        d1,
        d2,
        d3,
        max_gap,
        pass: max_gap <= lit(0.02),
    })
}

/// Result of [`dx_sup_inf`].
#[derive(Debug, Clone)]
pub struct SupInf<T> {
    pub value: T,
    /// Maximizing target.
    pub y: T,
    /// Minimizing source and time for that target.
    pub x: T,
    pub t: T,
    /// `(y, inf_{x, t} d_∇f(x, y, t))` over the target grid.
    pub profile: Vec<(T, T)>,
}

/// Slices per Bellman table in [`dx_sup_inf`].
const DX_SLICES: usize = 8;

/// `sup_y inf_{x ∈ ω̄, t ∈ [T/64, T]} d_∇f(x, y, t)` from Bellman tables on
/// `n` uniform nodes (plus the endpoints of `ω`), `t` on 64 equally spaced
/// horizons.
pub fn dx_sup_inf<T: Scalar>(ctx: &ActionContext<T>, omega: &Region<T>, t: T, n: usize) -> Result<SupInf<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    omega.validate(&ctx.spec)?;
    let mut nodes = uniform_nodes(&ctx.spec, n);
    for e in omega.endpoints() {
        let e = ctx.spec.wrap(e);
        if ctx.spec.contains(e) && !nodes.iter().any(|s| (*s - e).abs() < ctx.spec.length * lit(1e-12)) {
            nodes.push(e);
        }
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let slack = ctx.spec.length * lit(1e-12);
    let inside = |s: T| {
        omega.contains(&ctx.spec, &[s])
            || omega.contains(&ctx.spec, &[s + slack])
            || omega.contains(&ctx.spec, &[s - slack])
    };
    let sources: Vec<usize> = (0..nodes.len()).filter(|i| inside(nodes[*i])).collect();
    if sources.is_empty() {
        return Err(Error::InvalidArgument("ω contains no node".into()));
    }
    // each horizon gets its own coarse table: the node-rounding error of the
    // recursion grows like m²h²/t with the number of slices m
    let n_times = 64;
    let fv: Vec<T> = nodes.iter().map(|s| ctx.f(*s)).collect::<Result<_>>()?;
    let dt = t / lit(n_times as f64);
    let mut tables = Vec::with_capacity(n_times);
    for l in 1..=n_times {
        let rows = hopf_lax_rows(ctx, &nodes, &sources, dt * lit(l as f64), DX_SLICES)?;
        tables.push(rows.into_iter().map(|mut r| r.pop().unwrap()).collect::<Vec<_>>());
    }
    let half: T = lit(0.5);
    let mut profile = Vec::with_capacity(nodes.len());
    let mut best = (T::neg_infinity(), T::zero(), T::zero(), T::zero());
    for j in 0..nodes.len() {
        let mut low = (T::infinity(), T::zero(), T::zero());
        for (l, table) in tables.iter().enumerate() {
            for (k, &src) in sources.iter().enumerate() {
                let d = table[k][j] + (fv[src] - fv[j]) * half;
                if d < low.0 {
                    low = (d, nodes[src], dt * lit((l + 1) as f64));
                }
            }
        }
        profile.push((nodes[j], low.0));
        if low.0 > best.0 {
            best = (low.0, nodes[j], low.1, low.2);
        }
    }
    Ok(SupInf {
        value: best.0,
        y: best.1,
        x: best.2,
        t: best.3,
        profile,
    })
}

/// Which picture a kernel sample lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    /// `K_ε(x, y, t)`, kernel of the transport equation.
    TransportU,
    /// `H_ε(x, y, εt) = e^{f(x)/2ε} e^{-f(y)/2ε} K_ε(x, y, t)`, kernel of
    /// the conjugated Schrödinger semigroup.
    SchrodingerH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMethod {
    /// Poisson-weighted powers of the nonnegative uniformized generator in
    /// the transport picture. Positive by construction.
    Uniformization,
    /// Dense eigen-expansion of the symmetric operator, conjugated back.
    EigenExpansion,
}

/// Samples of a kernel column `x ↦ K(x, y, t)` on the unknown nodes, stored
/// as `values · e^{log_offset}`.
#[derive(Debug, Clone)]
pub struct KernelField<T> {
    pub y: T,
    pub t: T,
    pub eps: T,
    pub picture: Picture,
    pub grid: Vec<T>,
    /// Volume weights of the nodes.
    pub mass: Vec<T>,
    pub values: Vec<T>,
    pub log_offset: T,
    /// Mollifier width in cells (0 for a discrete delta).
    pub mollifier_width: T,
    /// Entries below `-1e-12` (relative to the largest) before clamping.
    pub negative_count: usize,
    /// Their total mass, relative to the total absolute mass.
    pub negative_mass: T,
}

impl<T: Scalar> KernelField<T> {
    /// `log K` at a node.
    pub fn log_at_node(&self, i: usize) -> T {
        if self.values[i] > T::zero() {
            self.values[i].ln() + self.log_offset
        } else {
            T::neg_infinity()
        }
    }

    /// `log K(x)`, linear interpolation of `log K` between nodes.
    pub fn log_at(&self, x: T, spec: &SurfaceSpec<T>) -> T {
        let n = self.grid.len();
        let x = spec.wrap(x);
        let mut j = self.grid.partition_point(|g| *g <= x);
        if j == 0 {
            if spec.case.is_periodic() {
                j = n;
            } else {
                return self.log_at_node(0);
            }
        }
        let i = j - 1;
        let (next, gx) = if j < n {
            (j, self.grid[j])
        } else if spec.case.is_periodic() {
            (0, self.grid[0] + spec.length)
        } else {
            return self.log_at_node(n - 1);
        };
        let xs = if x < self.grid[i] { x + spec.length } else { x };
        let w = (xs - self.grid[i]) / (gx - self.grid[i]);
        let (a, b) = (self.log_at_node(i), self.log_at_node(next));
        if !a.is_finite() || !b.is_finite() {
            return if w < lit(0.5) { a } else { b };
        }
        a + (b - a) * w
    }

    /// `log ∫ K dVol` over the nodes selected by `mask` (all when `None`).
    pub fn log_mass(&self, mask: Option<&[bool]>) -> T {
        let mut acc = T::zero();
        for i in 0..self.values.len() {
            if mask.map_or(true, |m| m[i]) {
                acc += self.mass[i] * self.values[i].max(T::zero());
            }
        }
        if acc > T::zero() {
            acc.ln() + self.log_offset
        } else {
            T::neg_infinity()
        }
    }

    /// `log ∫ K² dVol` over the nodes selected by `mask`.
    pub fn log_norm2_sq(&self, mask: Option<&[bool]>) -> T {
        let mut acc = T::zero();
        for i in 0..self.values.len() {
            if mask.map_or(true, |m| m[i]) {
                acc += self.mass[i] * self.values[i] * self.values[i];
            }
        }
        if acc > T::zero() {
            acc.ln() + self.log_offset + self.log_offset
        } else {
            T::neg_infinity()
        }
    }

    /// Converts to the other picture using the node values of `f` and `f(y)`.
    pub fn switch_picture(&self, f_nodes: &[T], f_y: T) -> KernelField<T> {
        let two: T = lit(2.0);
        let sign = match self.picture {
            Picture::TransportU => T::one(),
            Picture::SchrodingerH => -T::one(),
        };
        let logs: Vec<T> = self
            .values
            .iter()
            .zip(f_nodes)
            .map(|(v, f)| {
                if *v > T::zero() {
                    v.ln() + sign * (*f - f_y) / (two * self.eps)
                } else {
                    T::neg_infinity()
                }
            })
            .collect();
        let top = logs.iter().fold(T::neg_infinity(), |a, b| a.max(*b));
        let top = if top.is_finite() { top } else { T::zero() };
        let mut out = self.clone();
        out.picture = match self.picture {
            Picture::TransportU => Picture::SchrodingerH,
            Picture::SchrodingerH => Picture::TransportU,
        };
        out.values = logs.iter().map(|l| (*l - top).exp()).collect();
        out.log_offset = self.log_offset + top;
        out
    }

    /// CSV rows `x,K` (plain values, underflow to 0 allowed).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,log_K\n");
        for i in 0..self.grid.len() {
            s.push_str(&format!("{:.16e},{:.16e}\n", to_f64(self.grid[i]), to_f64(self.log_at_node(i))));
        }
        s
    }
}

/// Transport-picture generator `L = -(1/ε) D⁻¹ M⁻¹ S D`, `D = e^{f/2ε}`,
/// in the rotation-invariant sector. Off-diagonal entries are nonnegative.
#[derive(Debug, Clone)]
pub struct KernelGenerator<T> {
    pub op: DiscreteOperator<T>,
    pub eps: T,
    /// Node abscissas of the unknowns.
    pub grid: Vec<T>,
    pub f_nodes: Vec<T>,
    /// `Δf - q` on the unknowns.
    pub divergence_rate: Vec<T>,
    f_expr: ScalarExpr,
    diag: Vec<T>,
    /// `lower[i]` couples row `i` to its left neighbour (the wrap on rings).
    lower: Vec<T>,
    upper: Vec<T>,
    rate: T,
}

impl<T: Scalar> KernelGenerator<T> {
    pub fn new(spec: &SurfaceSpec<T>, f: &ScalarExpr, q: &ScalarExpr, eps: T) -> Result<Self> {
        if eps < lit(crate::observability::EPS_FLOOR) {
            return Err(Error::Refused {
                reason: "ε below the floor".into(),
                measured: to_f64(eps),
            });
        }
        let op = assemble_operator(spec, f, q, eps, 0, true)?;
        let n = op.len();
        let periodic = op.stiffness.is_cyclic();
        let grid: Vec<T> = op.active.iter().map(|i| spec.grid[*i]).collect();
        let f_nodes: Vec<T> = grid.iter().map(|s| f.eval1(*s)).collect::<std::result::Result<_, _>>()?;
        let mut divergence_rate = Vec::with_capacity(n);
        for (j, i) in op.active.iter().enumerate() {
            let qv = q.eval1(grid[j])?;
            divergence_rate.push(op.q_f[*i] * lit(2.0) + qv);
        }
        let two: T = lit(2.0);
        let ratio = |from: usize, to: usize| ((f_nodes[to] - f_nodes[from]) / (two * eps)).exp();
        let mut diag = vec![T::zero(); n];
        let mut lower = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        for i in 0..n {
            let mi = op.mass[i];
            diag[i] = -op.stiffness.diag[i] / (eps * mi);
            let left = if i > 0 {
                Some((i - 1, op.stiffness.off[i - 1]))
            } else if periodic {
                Some((n - 1, op.stiffness.corner.unwrap()))
            } else {
                None
            };
            let right = if i + 1 < n {
                Some((i + 1, op.stiffness.off[i]))
            } else if periodic {
                Some((0, op.stiffness.corner.unwrap()))
            } else {
                None
            };
            if let Some((j, s)) = left {
                lower[i] = -s / (eps * mi) * ratio(i, j);
            }
            if let Some((j, s)) = right {
                upper[i] = -s / (eps * mi) * ratio(i, j);
            }
        }
        let rate = diag.iter().fold(T::zero(), |a, d| a.max(-*d)).max(lit(1e-12));
        Ok(KernelGenerator {
            op,
            eps,
            grid,
            f_nodes,
            divergence_rate,
            f_expr: f.clone(),
            diag,
            lower,
            upper,
            rate,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn spec(&self) -> &SurfaceSpec<T> {
        &self.op.spec
    }

    /// `f(y)` at an arbitrary point.
    pub fn f_at(&self, y: T) -> Result<T> {
        Ok(self.f_expr.eval1(self.spec().wrap(y))?)
    }

    /// Uniformization rate `Λ`: `I + L/Λ` is entrywise nonnegative.
    pub fn uniformization_rate(&self) -> T {
        self.rate
    }

    fn periodic(&self) -> bool {
        self.op.stiffness.is_cyclic()
    }

    /// Row sums of `L`; zero up to discretization error when `Δf = q`.
    pub fn row_sums(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.diag[i] + self.lower[i] + self.upper[i]).collect()
    }

    /// Mollified delta at `y` with unit mass: a discrete Gaussian of standard
    /// deviation `width` cells, or the nearest-node delta when `width = 0`.
    pub fn initial_datum(&self, y: T, width: T) -> Result<Vec<T>> {
        let spec = self.spec();
        if !spec.contains(y) {
            return Err(Error::InvalidArgument("source outside the domain".into()));
        }
        if width != T::zero() && width < lit(2.0) {
            return Err(Error::InvalidArgument("mollifier width must be 0 or at least 2 cells".into()));
        }
        let n = self.len();
        let mut u = vec![T::zero(); n];
        let dist = |s: T| -> T {
            let d = (s - y).abs();
            if spec.case.is_periodic() {
                d.min(spec.length - d)
            } else {
                d
            }
        };
        if width == T::zero() {
            let mut best = 0;
            for i in 0..n {
                if dist(self.grid[i]) < dist(self.grid[best]) {
                    best = i;
                }
            }
            u[best] = T::one() / self.op.mass[best];
            return Ok(u);
        }
        let sigma = width * spec.h;
        let mut total = T::zero();
        for i in 0..n {
            let z = dist(self.grid[i]) / sigma;
            u[i] = (-(z * z) * lit(0.5)).exp();
            total += u[i] * self.op.mass[i];
        }
        if !(total > T::zero()) {
            return Err(Error::Numerical("mollifier has no mass on the unknowns".into()));
        }
        for v in u.iter_mut() {
            *v /= total;
        }
        Ok(u)
    }

    fn apply_uniformized(&self, w: &[T], out: &mut [T]) {
        let n = w.len();
        let inv = T::one() / self.rate;
        for i in 0..n {
            let mut acc = w[i] + self.diag[i] * inv * w[i];
            if i > 0 {
                acc += self.lower[i] * inv * w[i - 1];
            } else if self.periodic() {
                acc += self.lower[i] * inv * w[n - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * inv * w[i + 1];
            } else if self.periodic() {
                acc += self.upper[i] * inv * w[0];
            }
            out[i] = acc;
        }
    }

    /// `e^{tL} (w e^{offset})` by uniformization, result in scaled form.
    fn evolve_uniformized(&self, w0: &[T], offset: T, t: T) -> (Vec<T>, T) {
        if t == T::zero() {
            return (w0.to_vec(), offset);
        }
        let lt = self.rate * t;
        let n = w0.len();
        let mut w = w0.to_vec();
        let mut wo = offset;
        normalize(&mut w, &mut wo);
        let mut scratch = vec![T::zero(); n];
        let mut acc: Vec<T> = vec![T::zero(); n];
        let mut acc_o = T::neg_infinity();
        let mut log_p = -lt;
        let log_lt = lt.ln();
        let cap = to_f64(lt + lt.sqrt() * lit(50.0)) as usize + 200;
        let cutoff: T = lit(-45.0);
        let mut k = 0usize;
        loop {
            let c = log_p + wo;
            if c > acc_o {
                let s = (acc_o - c).exp();
                for i in 0..n {
                    acc[i] = acc[i] * s + w[i];
                }
                acc_o = c;
            } else {
                let s = (c - acc_o).exp();
                if s > T::zero() {
                    for i in 0..n {
                        acc[i] += s * w[i];
                    }
                }
            }
            k += 1;
            if (lit::<T>(k as f64) > lt && c - acc_o < cutoff) || k > cap {
                break;
            }
            self.apply_uniformized(&w, &mut scratch);
            std::mem::swap(&mut w, &mut scratch);
            normalize(&mut w, &mut wo);
            log_p += log_lt - lit::<T>(k as f64).ln();
        }
        normalize(&mut acc, &mut acc_o);
        (acc, acc_o)
    }

    /// Kernel column at several increasing times `ts` (starting from 0).
    pub fn snapshots(&self, y: T, ts: &[T], width: T, method: KernelMethod) -> Result<Vec<KernelField<T>>> {
        for w in ts.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidArgument("snapshot times must increase".into()));
            }
        }
        if ts.iter().any(|t| *t < T::zero()) {
            return Err(Error::InvalidArgument("snapshot times must be nonnegative".into()));
        }
        let u0 = self.initial_datum(y, width)?;
        let mut out = Vec::with_capacity(ts.len());
        match method {
            KernelMethod::Uniformization => {
                let mut cur = u0;
                let mut off = T::zero();
                let mut now = T::zero();
                for &t in ts {
                    let (v, o) = self.evolve_uniformized(&cur, off, t - now);
                    cur = v;
                    off = o;
                    now = t;
                    out.push(self.field(y, t, width, cur.clone(), off));
                }
            }
            KernelMethod::EigenExpansion => {
                let eig = self.eigen_basis();
                for &t in ts {
                    let (v, o) = self.evolve_eigen(&eig, &u0, t);
                    out.push(self.field(y, t, width, v, o));
                }
            }
        }
        Ok(out)
    }

    fn field(&self, y: T, t: T, width: T, mut values: Vec<T>, log_offset: T) -> KernelField<T> {
        let top = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let floor = -top * lit(1e-12);
        let mut negative_count = 0;
        let mut neg = T::zero();
        let mut total = T::zero();
        for (v, m) in values.iter_mut().zip(&self.op.mass) {
            total += v.abs() * *m;
            if *v < floor {
                negative_count += 1;
                neg += -*v * *m;
            }
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        KernelField {
            y,
            t,
            eps: self.eps,
            picture: Picture::TransportU,
            grid: self.grid.clone(),
            mass: self.op.mass.clone(),
            values,
            log_offset,
            mollifier_width: width,
            negative_count,
            negative_mass: if total > T::zero() { neg / total } else { T::zero() },
        }
    }

    fn eigen_basis(&self) -> (Vec<T>, Dense<T>) {
        let a = self.op.symmetric();
        let n = a.len();
        let mut d = Dense::zeros(n);
        for i in 0..n {
            d.set(i, i, a.diag[i]);
            if i + 1 < n {
                d.set(i, i + 1, a.off[i]);
                d.set(i + 1, i, a.off[i]);
            }
        }
        if let Some(c) = a.corner {
            if n >= 3 {
                d.set(0, n - 1, c);
                d.set(n - 1, 0, c);
            }
        }
        dense_sym_eigen(&d)
    }

    /// `u(t) = D⁻¹ M^{-1/2} e^{-tA/ε} M^{1/2} D u0` with logs tracked per
    /// node so the conjugation factors never overflow.
    fn evolve_eigen(&self, eig: &(Vec<T>, Dense<T>), u0: &[T], t: T) -> (Vec<T>, T) {
        let (mu, vecs) = eig;
        let n = u0.len();
        let two: T = lit(2.0);
        let a: Vec<T> = self.f_nodes.iter().map(|f| *f / (two * self.eps)).collect();
        // z0 = M^{1/2} D u0, scaled by its largest log-magnitude
        let logs: Vec<T> = (0..n)
            .map(|i| if u0[i] > T::zero() { u0[i].ln() + a[i] + self.op.mass[i].sqrt().ln() } else { T::neg_infinity() })
            .collect();
        let top = logs.iter().fold(T::neg_infinity(), |x, y| x.max(*y));
        let z0: Vec<T> = logs.iter().map(|l| (*l - top).exp()).collect();
        let mu0 = mu[0];
        let mut z = vec![T::zero(); n];
        for k in 0..n {
            let decay = (-(mu[k] - mu0) * t / self.eps).exp();
            if decay == T::zero() {
                continue;
            }
            let mut c = T::zero();
            for i in 0..n {
                c += vecs.get(i, k) * z0[i];
            }
            c *= decay;
            for i in 0..n {
                z[i] += c * vecs.get(i, k);
            }
        }
        let base = top - mu0 * t / self.eps;
        // u = D⁻¹ M^{-1/2} z: per-node factor e^{-a_i}/√m_i
        let ulog: Vec<T> = (0..n)
            .map(|i| -a[i] - self.op.mass[i].sqrt().ln())
            .collect();
        let shift = ulog.iter().fold(T::neg_infinity(), |x, y| x.max(*y));
        let values: Vec<T> = (0..n).map(|i| z[i] * (ulog[i] - shift).exp()).collect();
        (values, base + shift)
    }
}

fn normalize<T: Scalar>(w: &mut [T], offset: &mut T) {
    let mx = w.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if mx > T::zero() && mx.is_finite() {
        for v in w.iter_mut() {
            *v /= mx;
        }
        *offset += mx.ln();
    }
}

/// One kernel column `K_ε(·, y, t)`.
pub fn kernel_simulate<T: Scalar>(
    gen: &KernelGenerator<T>,
    y: T,
    t: T,
    mollifier_width: T,
    method: KernelMethod,
) -> Result<KernelField<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    let field = gen.snapshots(y, &[t], mollifier_width, method)?.pop().unwrap();
    if field.negative_mass > lit(1e-8) {
        return Err(Error::Numerical(format!(
            "kernel lost positivity: relative negative mass {}",
            to_f64(field.negative_mass)
        )));
    }
    Ok(field)
}

/// Per-pair outcome of [`liyau_check`].
#[derive(Debug, Clone)]
pub struct LiYauPair<T> {
    pub x: T,
    pub y: T,
    pub t: T,
    /// `d_∇f(x, y, t)` from [`action_distance`].
    pub d_grad: T,
    /// `(ε, -ε log K_ε(x, y, t))`.
    pub samples: Vec<(T, T)>,
    /// Intercept of the fit of `-ε log K_ε - (ε/2) log ε` against `ε`.
    pub fit: T,
    pub residual: T,
    pub pass: bool,
    /// Set when the kernel underflowed at some ε; the pair is skipped.
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct LiYauReport<T> {
    pub pairs: Vec<LiYauPair<T>>,
    pub pass: bool,
}

/// Compares `-ε log K_ε(x, y, t)` with `d_∇f(x, y, t)` over several `ε`.
///
/// In one dimension `K_ε ≈ a ε^{-1/2} e^{-d/ε}`, so
/// `-ε log K_ε - (ε/2) log ε = d - ε log a` and the intercept of a linear fit
/// in `ε` estimates `d`. A pair passes when `|fit - d| ≤ 0.1 (1 + d)`.
pub fn liyau_check<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    q: &ScalarExpr,
    pairs: &[(T, T, T)],
    eps_list: &[T],
    mollifier_width: T,
) -> Result<LiYauReport<T>> {
    if eps_list.len() < 4 {
        return Err(Error::InvalidArgument("the Li–Yau fit needs at least four ε values".into()));
    }
    for &(_, _, t) in pairs {
        if t < lit(0.2) || t > lit(5.0) {
            return Err(Error::InvalidArgument("pair times must lie in [0.2, 5]".into()));
        }
    }
    let ctx = ActionContext::new(spec, f)?;
    let gens = eps_list
        .iter()
        .map(|e| KernelGenerator::new(spec, f, q, *e))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(pairs.len());
    for &(x, y, t) in pairs {
        let d = action_distance(&ctx, x, y, t, ActionForm::DxMinus, 64)?.value;
        let mut samples = Vec::with_capacity(gens.len());
        let mut skipped = false;
        for g in &gens {
            let k = kernel_simulate(g, y, t, mollifier_width, KernelMethod::Uniformization)?;
            let lk = k.log_at(x, spec);
            if !lk.is_finite() {
                skipped = true;
                break;
            }
            samples.push((g.eps, -g.eps * lk));
        }
        if skipped {
            out.push(LiYauPair {
                x,
                y,
                t,
                d_grad: d,
                samples,
                fit: T::nan(),
                residual: T::nan(),
                pass: false,
                skipped,
            });
            continue;
        }
        let xs: Vec<T> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<T> = samples.iter().map(|(e, v)| *v - *e * e.ln() * lit(0.5)).collect();
        let (slope, icpt) = linear_fit(&xs, &ys);
        let residual = (xs
            .iter()
            .zip(&ys)
            .map(|(a, b)| {
                let r = *b - (icpt + slope * *a);
                r * r
            })
            .sum::<T>()
            / lit(xs.len() as f64))
        .sqrt();
        let pass = (icpt - d).abs() <= lit::<T>(0.1) * (T::one() + d);
        out.push(LiYauPair {
            x,
            y,
            t,
            d_grad: d,
            samples,
            fit: icpt,
            residual,
            pass,
            skipped,
        });
    }
    let pass = out.iter().all(|p| p.pass || p.skipped) && out.iter().any(|p| !p.skipped);
    Ok(LiYauReport { pairs: out, pass })
}

/// Observation-time samples on `(0, T]`: `n_uniform` equal steps plus a
/// geometric refinement of the first step.
pub fn observation_times<T: Scalar>(t: T, n_uniform: usize, n_geometric: usize) -> Vec<T> {
    let step = t / lit(n_uniform as f64);
    let mut ts: Vec<T> = (1..=n_geometric)
        .rev()
        .map(|j| step * lit::<T>(0.5).powi(j as i32))
        .collect();
    ts.extend((1..=n_uniform).map(|j| step * lit(j as f64)));
    ts
}

/// `log ∫ e^{g(t)} dt` by the trapezoid rule on `(t_i, g_i)` samples.
fn log_trapezoid<T: Scalar>(ts: &[T], logs: &[T]) -> T {
    let half: T = lit(0.5);
    let mut terms = Vec::with_capacity(2 * ts.len());
    for i in 1..ts.len() {
        let w = (ts[i] - ts[i - 1]) * half;
        if w > T::zero() {
            terms.push(w.ln() + logs[i - 1]);
            terms.push(w.ln() + logs[i]);
        }
    }
    log_sum_exp(&terms)
}

/// Result of [`l1_kernel_observability`].
#[derive(Debug, Clone)]
pub struct L1Report<T> {
    pub eps: T,
    pub t: T,
    pub s: T,
    pub ys: Vec<T>,
    /// `log O_T(y) = log ∫₀ᵀ ∫_ω K(x, y, t) dx dt`.
    pub log_o: Vec<T>,
    /// `log I_s(y) = log ∫ K(x, y, s) dx`.
    pub log_i: Vec<T>,
    /// `log C`, `C = max_y I_s(y)/O_T(y)`.
    pub log_c: T,
    pub eps_log_c: T,
    /// Largest `‖u(t)‖_{L¹}/‖u(T)‖_{L¹}` over the samples and sources.
    pub reverse_l1_ratio: T,
    /// Grönwall bound `e^{T max(Δf - q)₊}` for that ratio.
    pub gronwall_bound: T,
}

/// Node mask of a region on the unknowns.
pub fn region_mask<T: Scalar>(gen: &KernelGenerator<T>, omega: &Region<T>) -> Vec<bool> {
    gen.grid.iter().map(|s| omega.contains(gen.spec(), &[*s])).collect()
}

/// L¹ observability of kernel columns: `O_T` by the trapezoid rule over 16
/// time samples (10 uniform, 6 geometric near 0) and `I_s` at `s`.
pub fn l1_kernel_observability<T: Scalar>(
    gen: &KernelGenerator<T>,
    omega: &Region<T>,
    t: T,
    s: T,
    ys: &[T],
    mollifier_width: T,
) -> Result<L1Report<T>> {
    if !(s > T::zero() && s <= t) {
        return Err(Error::InvalidArgument("need 0 < s ≤ T".into()));
    }
    omega.validate(gen.spec())?;
    let mask = region_mask(gen, omega);
    if !mask.iter().any(|b| *b) {
        return Err(Error::InvalidArgument("ω contains no node".into()));
    }
    let mut ts = vec![T::zero()];
    ts.extend(observation_times(t, 10, 6));
    let s_idx = match ts.iter().position(|x| (*x - s).abs() <= t * lit(1e-12)) {
        Some(i) => i,
        None => {
            ts.push(s);
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.iter().position(|x| *x == s).unwrap()
        }
    };
    let mut log_o = Vec::with_capacity(ys.len());
    let mut log_i = Vec::with_capacity(ys.len());
    let mut reverse = T::zero();
    for &y in ys {
        let snaps = gen.snapshots(y, &ts, mollifier_width, KernelMethod::Uniformization)?;
        let obs: Vec<T> = snaps.iter().map(|k| k.log_mass(Some(&mask))).collect();
        log_o.push(log_trapezoid(&ts, &obs));
        log_i.push(snaps[s_idx].log_mass(None));
        let masses: Vec<T> = snaps.iter().map(|k| k.log_mass(None)).collect();
        let last = *masses.last().unwrap();
        for m in &masses {
            reverse = reverse.max((*m - last).exp());
        }
    }
    let log_c = log_i
        .iter()
        .zip(&log_o)
        .map(|(i, o)| *i - *o)
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let a = gen
        .divergence_rate
        .iter()
        .fold(T::zero(), |a, b| a.max(*b));
    Ok(L1Report {
        eps: gen.eps,
        t,
        s,
        ys: ys.to_vec(),
        log_o,
        log_i,
        log_c,
        eps_log_c: gen.eps * log_c,
        reverse_l1_ratio: reverse,
        gronwall_bound: (a * t).exp(),
    })
}

/// `log C0⁺(T, ε)` for each horizon, from the positive family
/// `u(t) = K_ε(·, y, t + η)` over the sources `ys`:
/// `max_y ‖u(T)‖_{L²} / (∫₀ᵀ ‖u‖²_{L²(ω)})^{1/2}`.
pub fn positive_cost<T: Scalar>(
    gen: &KernelGenerator<T>,
    omega: &Region<T>,
    horizons: &[T],
    ys: &[T],
    eta: T,
    mollifier_width: T,
) -> Result<Vec<T>> {
    if horizons.is_empty() || !(eta > T::zero()) {
        return Err(Error::InvalidArgument("need horizons and η > 0".into()));
    }
    let mask = region_mask(gen, omega);
    if !mask.iter().any(|b| *b) {
        return Err(Error::InvalidArgument("ω contains no node".into()));
    }
    let t_max = horizons.iter().fold(T::zero(), |a, b| a.max(*b));
    let mut rel = vec![T::zero()];
    rel.extend(observation_times(t_max, 200, 8));
    rel.extend_from_slice(horizons);
    rel.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rel.dedup_by(|a, b| (*a - *b).abs() <= t_max * lit(1e-12));
    let abs: Vec<T> = rel.iter().map(|t| *t + eta).collect();
    let mut best = vec![T::neg_infinity(); horizons.len()];
    for &y in ys {
        let snaps = gen.snapshots(y, &abs, mollifier_width, KernelMethod::Uniformization)?;
        let obs: Vec<T> = snaps.iter().map(|k| k.log_norm2_sq(Some(&mask))).collect();
        for (h, &tt) in horizons.iter().enumerate() {
            let j = rel.iter().position(|x| (*x - tt).abs() <= t_max * lit(1e-12)).unwrap();
            let num = snaps[j].log_norm2_sq(None) * lit(0.5);
            let den = log_trapezoid(&rel[..=j], &obs[..=j]) * lit(0.5);
            best[h] = best[h].max(num - den);
        }
    }
    Ok(best)
}

/// Result of [`positive_time_bracket`].
#[derive(Debug, Clone)]
pub struct PositiveBracket<T> {
    pub horizons: Vec<T>,
    pub eps: Vec<T>,
    /// `log_c0[h][e]`.
    pub log_c0: Vec<Vec<T>>,
    pub fits: Vec<Option<RateFit<T>>>,
    pub bracket: Bracket<T>,
    pub t_gcc: T,
    /// Whether `T_lo ≤ T_GCC` and `T_hi ≥ T_GCC` where defined.
    pub consistent: bool,
}

/// Brackets the positive-solution observability time from fitted rates of
/// [`positive_cost`] over `eps_list` and compares with `t_gcc`.
pub fn positive_time_bracket<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    q: &ScalarExpr,
    omega: &Region<T>,
    horizons: &[T],
    eps_list: &[T],
    ys: &[T],
    eta: T,
    delta_fit: T,
    t_gcc: T,
) -> Result<PositiveBracket<T>> {
    let mut per_eps = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        let gen = KernelGenerator::new(spec, f, q, e)?;
        per_eps.push(positive_cost(&gen, omega, horizons, ys, eta, lit(2.0))?);
    }
    let log_c0: Vec<Vec<T>> = (0..horizons.len())
        .map(|h| per_eps.iter().map(|v| v[h]).collect())
        .collect();
    let fits: Vec<Option<RateFit<T>>> = log_c0
        .iter()
        .map(|row| {
            let s: Vec<(T, T)> = eps_list.iter().copied().zip(row.iter().copied()).collect();
            fit_rate(&s).ok()
        })
        .collect();
    let rates: Vec<Option<T>> = fits.iter().map(|f| f.as_ref().map(|r| r.rate)).collect();
    let bracket = t_unif_bracket(horizons, &rates, delta_fit)?;
    let consistent = bracket.t_lo.map_or(true, |t| t <= t_gcc) && bracket.t_hi.map_or(true, |t| t >= t_gcc);
    Ok(PositiveBracket {
        horizons: horizons.to_vec(),
        eps: eps_list.to_vec(),
        log_c0,
        fits,
        bracket,
        t_gcc,
        consistent,
    })
}
