//! Lower bounds on the observability cost `C0(T, ε)`, numerical estimates of
//! it (Gramian and single-mode witness), exponential-rate fits over ε sweeps,
//! and the named scenarios that exercise them.
//!
//! Costs are carried as natural logarithms: at ε = 0.02 they routinely exceed
//! the range of a double.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::agmon::AgmonField;
use crate::error::{Error, Result};
use crate::exprdsl::ScalarExpr;
use crate::geometry::{End, PotentialField, SurfaceConfig, SurfaceSpec};
use crate::linalg::{max_generalized_eigenvalue, max_generalized_eigenvalue_truncated, Dense};
use crate::numerics::{log_sum_exp, mean};
use crate::region::Region;
use crate::scalar::{lit, to_f64, Scalar};
use crate::spectral::{boundary_flux, conjugate_plain, lowest_eigenpairs, ConjDirection, DiscreteOperator, EigenPair};

/// Smallest viscosity accepted by the Gramian.
pub const EPS_FLOOR: f64 = 0.02;
/// Default tolerance of rate comparisons.
pub const DELTA_FIT: f64 = 0.1;
/// Condition number of the observation Gramian above which it is refused.
pub const COND_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// `min_ω̄ W_E - max_{K_E} f/2 - E T`
    General,
    /// `W_ω - W_m - V_c(s_min) T`
    Revolution,
    /// `W(end) - W_m - V_c(s_min) T` for boundary observation at the ends in ω.
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gramian,
    Witness,
    Theory,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gramian => "gramian",
            Method::Witness => "witness",
            Method::Theory => "theory",
        }
    }
}

/// Theoretical exponent `rate(T) = gap - energy·T`.
#[derive(Debug, Clone)]
pub struct TheoryRate<T> {
    pub mode: RateMode,
    pub t: T,
    pub energy: T,
    pub gap: T,
    pub rate: T,
    /// `gap / energy`, absent when the energy vanishes.
    pub t_unif_lower: Option<T>,
    /// `E = 0` and ω misses `K_E`: the cost blows up for every horizon.
    pub never_uniform: bool,
}

impl<T: Scalar> TheoryRate<T> {
    pub fn at(&self, t: T) -> T {
        self.gap - self.energy * t
    }

    /// Cost estimates `exp(rate/ε)` in log form.
    pub fn log_c0(&self, eps: T) -> T {
        self.rate / eps
    }
}

fn field_points<T: Scalar>(agmon: &AgmonField<T>) -> Vec<Vec<T>> {
    match &agmon.lattice {
        Some(lat) => (0..lat.len()).map(|i| lat.point(i).to_vec()).collect(),
        None => agmon.grid.iter().map(|s| vec![*s]).collect(),
    }
}

/// Evaluates the theoretical lower bound on `ε log C0(T, ε)`.
///
/// `agmon` must carry the weight from [`crate::agmon::weight_w`] computed with
/// the same `omega`.
pub fn theoretical_rate<T: Scalar>(
    agmon: &AgmonField<T>,
    pot: &PotentialField<T>,
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    omega: &Region<T>,
    t: T,
    mode: RateMode,
) -> Result<TheoryRate<T>> {
    let (w, w_omega, w_m) = match (&agmon.w, agmon.w_omega, agmon.w_m) {
        (Some(w), Some(a), Some(b)) => (w, a, b),
        _ => return Err(Error::InvalidArgument("the Agmon field carries no weight W".into())),
    };
    let half: T = lit(0.5);
    let tiny: T = lit(1e-12);
    let (energy, gap, never_uniform) = match mode {
        RateMode::General => {
            let points = field_points(agmon);
            let mut top = T::neg_infinity();
            let mut meets = false;
            for (p, inside) in points.iter().zip(&agmon.k_e) {
                if *inside {
                    top = top.max(half * f.eval_at(p)?);
                    meets |= omega.contains(spec, p);
                }
            }
            if (agmon.e - pot.v_min).abs() <= tiny * (T::one() + pot.v_min.abs()) {
                top = top.max(half * f.eval_at(&pot.x_min)?);
                meets |= omega.contains(spec, &pot.x_min);
            }
            if !top.is_finite() {
                return Err(Error::Numerical("the allowed region K_E is empty on the grid".into()));
            }
            let e = agmon.e;
            (e, w_omega - top, e.abs() <= tiny && !meets)
        }
        RateMode::Revolution => {
            if !pot.unique_min {
                return Err(Error::InvalidArgument(
                    "the revolution bound needs a unique minimum of V_c".into(),
                ));
            }
            (pot.v_min, w_omega - w_m, false)
        }
        RateMode::Boundary => {
            let n = w.len();
            let mut best = T::infinity();
            for end in &spec.boundary {
                let (s, i) = match end {
                    End::Start => (spec.grid[0], 0),
                    End::Finish => (spec.grid[n - 1], n - 1),
                };
                if omega.contains(spec, &[s]) {
                    best = best.min(w[i]);
                }
            }
            if !best.is_finite() {
                return Err(Error::InvalidArgument("no observed boundary end".into()));
            }
            (pot.v_min, best - w_m, false)
        }
    };
    let t_unif_lower = if energy > tiny { Some(gap.max(T::zero()) / energy) } else { None };
    Ok(TheoryRate {
        mode,
        t,
        energy,
        gap,
        rate: gap - energy * t,
        t_unif_lower,
        never_uniform,
    })
}

/// `log((1 - e^{-x}) / x)`, stable for all real `x`.
fn log_phi<T: Scalar>(x: T) -> T {
    if x.abs() < lit(1e-8) {
        -x * lit(0.5)
    } else if x > T::zero() {
        (-(-x).exp_m1()).ln() - x.ln()
    } else {
        let y = -x;
        y + (-(-y).exp_m1()).ln() - y.ln()
    }
}

/// `log ∫₀ᵀ e^{-σt/ε} dt`.
fn log_time_integral<T: Scalar>(sigma: T, t: T, eps: T) -> T {
    t.ln() + log_phi(sigma * t / eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Interior,
    Boundary,
}

/// Ratio of the two sides of the observability inequality for the solution
/// `v(t) = e^{-μt/ε} ψ`.
#[derive(Debug, Clone)]
pub struct WitnessCost<T> {
    pub eps: T,
    pub t: T,
    pub log_ratio: T,
    pub eps_log_ratio: T,
    /// `log ∫_ω e^{-f/ε} ψ²` (interior) or log of the squared observed flux.
    pub log_observed: T,
    /// True when the observation vanishes numerically; `log_ratio` is then `+∞`.
    pub unobserved: bool,
}

/// Single-mode lower bound on `C0(T, ε)`.
///
/// `f_values` are samples of `f` on the full grid of `op`.
pub fn witness_cost<T: Scalar>(
    pair: &EigenPair<T>,
    op: &DiscreteOperator<T>,
    f_values: &[T],
    omega: &Region<T>,
    t: T,
    target: Target,
) -> Result<WitnessCost<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument("the horizon must be positive".into()));
    }
    let spec = &op.spec;
    let eps = pair.eps;
    let mu = pair.mu;
    let half: T = lit(0.5);
    let two: T = lit(2.0);
    let mass = op.mass_full();
    let log_time = log_time_integral(two * mu, t, eps);
    let (log_num2, log_obs) = match target {
        Target::Interior => {
            let mut all = Vec::new();
            let mut obs = Vec::new();
            for i in 0..mass.len() {
                let p = pair.phi[i];
                if p == T::zero() || mass[i] == T::zero() {
                    continue;
                }
                let l = -f_values[i] / eps + (p * p * mass[i]).ln();
                all.push(l);
                if omega.contains(spec, &[spec.grid[i]]) {
                    obs.push(l);
                }
            }
            let obs = if obs.is_empty() { T::neg_infinity() } else { log_sum_exp(&obs) };
            (log_sum_exp(&all), obs)
        }
        Target::Boundary => {
            // H¹ norm of u = e^{-f/2ε} φ e^{ikθ}, 2π from the angular integral
            let u = conjugate_plain(&pair.phi, f_values, eps, ConjDirection::ToU);
            let g = &spec.grid;
            let n = g.len();
            let k2 = lit::<T>((pair.k as f64).powi(2));
            let mut terms = Vec::new();
            for i in 0..n {
                if mass[i] == T::zero() {
                    continue;
                }
                let d = if i == 0 {
                    (u.values[1] - u.values[0]) / (g[1] - g[0])
                } else if i + 1 == n {
                    (u.values[n - 1] - u.values[n - 2]) / (g[n - 1] - g[n - 2])
                } else {
                    (u.values[i + 1] - u.values[i - 1]) / (g[i + 1] - g[i - 1])
                };
                let r = op.r[i];
                let dens = d * d + (k2 / (r * r) + T::one()) * u.values[i] * u.values[i];
                if dens > T::zero() {
                    terms.push((dens * mass[i]).ln());
                }
            }
            let two_pi = T::PI() * two;
            let num = two_pi.ln() + two * u.log_offset + log_sum_exp(&terms);
            let flux = boundary_flux(pair, spec)?;
            let mut obs = Vec::new();
            for e in &flux.ends {
                if omega.contains(spec, &[e.s]) && e.flux > T::zero() {
                    let i = if e.end == End::Start { 0 } else { n - 1 };
                    // |θ ε ∂_ν u|²_{H^{1/2}} for a single Fourier mode
                    obs.push(
                        two_pi.ln() + half * (T::one() + k2).ln() + two * (eps * e.flux).ln() - f_values[i] / eps,
                    );
                }
            }
            let obs = if obs.is_empty() { T::neg_infinity() } else { log_sum_exp(&obs) };
            (num, obs)
        }
    };
    let log_num2 = log_num2 - two * mu * t / eps;
    let unobserved = !log_obs.is_finite();
    let log_ratio = if unobserved {
        T::infinity()
    } else {
        half * (log_num2 - log_time - log_obs)
    };
    Ok(WitnessCost {
        eps,
        t,
        log_ratio,
        eps_log_ratio: eps * log_ratio,
        log_observed: log_obs,
        unobserved,
    })
}

/// Eigenbasis data of the Gramian, independent of the horizon.
#[derive(Debug, Clone)]
pub struct GramianModes<T> {
    pub eps: T,
    pub k: u32,
    pub lambdas: Vec<T>,
    /// `⟨ψ_m, e^{-(f - min f)/ε} ψ_n⟩` over the whole domain.
    pub b: Dense<T>,
    /// The same restricted to ω.
    pub b_omega: Dense<T>,
}

/// Cost estimate at one horizon.
#[derive(Debug, Clone)]
pub struct GramianCost<T> {
    pub eps: T,
    pub k: u32,
    pub t: T,
    pub log_c0: T,
    pub eps_log_c0: T,
    pub cond: T,
    pub n_modes: usize,
    /// Dimension of the subspace the maximum was taken over.
    pub rank: usize,
}

/// Projects the weights onto the `n_modes` lowest eigenfunctions of `op`.
pub fn gramian_modes<T: Scalar>(
    op: &DiscreteOperator<T>,
    f_values: &[T],
    omega: &Region<T>,
    n_modes: usize,
) -> Result<GramianModes<T>> {
    if op.eps < lit::<T>(EPS_FLOOR * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "ε = {} is below the floor {}",
            op.eps, EPS_FLOOR
        )));
    }
    if n_modes == 0 || n_modes > op.len() {
        return Err(Error::InvalidArgument(format!(
            "{} modes requested from a problem of dimension {}",
            n_modes,
            op.len()
        )));
    }
    let pairs = lowest_eigenpairs(op, n_modes)?;
    let spec = &op.spec;
    let fmin = f_values.iter().fold(T::infinity(), |m, v| m.min(*v));
    let mass = op.mass_full();
    let w: Vec<T> = f_values
        .iter()
        .zip(&mass)
        .map(|(fv, m)| (-(*fv - fmin) / op.eps).exp() * *m)
        .collect();
    let inside: Vec<bool> = spec.grid.iter().map(|s| omega.contains(spec, &[*s])).collect();
    let n = pairs.len();
    let mut b = Dense::zeros(n);
    let mut bo = Dense::zeros(n);
    for m in 0..n {
        for l in m..n {
            let (mut all, mut obs) = (T::zero(), T::zero());
            for i in 0..w.len() {
                let x = pairs[m].phi[i] * pairs[l].phi[i] * w[i];
                all += x;
                if inside[i] {
                    obs += x;
                }
            }
            b.set(m, l, all);
            b.set(l, m, all);
            bo.set(m, l, obs);
            bo.set(l, m, obs);
        }
    }
    Ok(GramianModes {
        eps: op.eps,
        k: op.k,
        lambdas: pairs.iter().map(|p| p.mu).collect(),
        b,
        b_omega: bo,
    })
}

impl<T: Scalar> GramianModes<T> {
    /// `A' = e^{2λ₀T/ε} A` and `G` at horizon `t`.
    fn pencil(&self, t: T) -> Result<(Dense<T>, Dense<T>)> {
        if !(t > T::zero()) {
            return Err(Error::InvalidArgument("the horizon must be positive".into()));
        }
        let n = self.lambdas.len();
        let eps = self.eps;
        let l0 = self.lambdas[0];
        // A = e^{-2λ₀T/ε} D B D keeps the decay factors representable
        let d: Vec<T> = self.lambdas.iter().map(|l| (-(*l - l0) * t / eps).exp()).collect();
        let mut a = Dense::zeros(n);
        let mut g = Dense::zeros(n);
        for m in 0..n {
            for l in 0..n {
                a.set(m, l, d[m] * d[l] * self.b.get(m, l));
                let tau = log_time_integral(self.lambdas[m] + self.lambdas[l], t, eps).exp();
                if !tau.is_finite() {
                    return Err(Error::Refused {
                        reason: "time integral overflows".into(),
                        measured: to_f64(self.lambdas[m] + self.lambdas[l]),
                    });
                }
                g.set(m, l, self.b_omega.get(m, l) * tau);
            }
        }
        Ok((a, g))
    }

    fn finish(&self, t: T, top: T, cond: T, rank: usize) -> Result<GramianCost<T>> {
        if !(top > T::zero()) {
            return Err(Error::Numerical("nonpositive generalized eigenvalue".into()));
        }
        let log_c0 = lit::<T>(0.5) * top.ln() - self.lambdas[0] * t / self.eps;
        Ok(GramianCost {
            eps: self.eps,
            k: self.k,
            t,
            log_c0,
            eps_log_c0: self.eps * log_c0,
            cond,
            n_modes: self.lambdas.len(),
            rank,
        })
    }

    /// Largest generalized eigenvalue of `(A, G)` at horizon `t`. Refuses
    /// when `G` is numerically singular.
    pub fn cost(&self, t: T) -> Result<GramianCost<T>> {
        let (a, g) = self.pencil(t)?;
        let (top, cond) = match max_generalized_eigenvalue(&a, &g) {
            Some(x) => x,
            None => {
                return Err(Error::Refused {
                    reason: "observation Gramian is numerically singular".into(),
                    measured: f64::INFINITY,
                })
            }
        };
        if !(cond <= lit(COND_LIMIT)) {
            return Err(Error::Refused {
                reason: "observation Gramian is numerically singular".into(),
                measured: to_f64(cond),
            });
        }
        self.finish(t, top, cond, self.lambdas.len())
    }

    /// Like [`GramianModes::cost`] but restricted to the directions where the
    /// equilibrated `G` has eigenvalues above `rcond` times its largest, and
    /// to each single mode. The value is a lower bound for the constant over
    /// the retained modes; `cond` then reports `1/rcond`.
    pub fn cost_truncated(&self, t: T, rcond: T) -> Result<GramianCost<T>> {
        let (a, g) = self.pencil(t)?;
        // single modes are one-dimensional subspaces too; keeps the result
        // above every single-mode witness
        let mut single = T::zero();
        for m in 0..a.n {
            if g.get(m, m) > T::zero() {
                single = single.max(a.get(m, m) / g.get(m, m));
            }
        }
        match max_generalized_eigenvalue_truncated(&a, &g, rcond) {
            Some((top, rank)) => self.finish(t, top.max(single), T::one() / rcond, rank),
            None => Err(Error::Refused {
                reason: "observation Gramian vanishes".into(),
                measured: 0.0,
            }),
        }
    }
}

/// Observability constant restricted to the span of the lowest `n_modes`
/// eigenfunctions.
pub fn gramian_cost<T: Scalar>(
    op: &DiscreteOperator<T>,
    f_values: &[T],
    omega: &Region<T>,
    t: T,
    n_modes: usize,
) -> Result<GramianCost<T>> {
    gramian_modes(op, f_values, omega, n_modes)?.cost(t)
}

/// Constant fit of `ε log C0` after dropping the largest ε.
#[derive(Debug, Clone)]
pub struct RateFit<T> {
    pub rate: T,
    /// Root mean square deviation of the retained samples.
    pub residual: T,
    pub used: usize,
    pub discarded_eps: T,
}

/// Fits the exponential rate of `(ε, log C0)` samples.
pub fn fit_rate<T: Scalar>(samples: &[(T, T)]) -> Result<RateFit<T>> {
    if samples.len() < 4 {
        return Err(Error::InvalidArgument("a rate fit needs at least four ε values".into()));
    }
    let mut idx = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.0 > samples[idx].0 {
            idx = i;
        }
    }
    let y: Vec<T> = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, (e, l))| *e * *l)
        .collect();
    let rate = mean(&y);
    let var = y.iter().map(|v| (*v - rate) * (*v - rate)).sum::<T>() / lit(y.len() as f64);
    Ok(RateFit {
        rate,
        residual: var.sqrt(),
        used: y.len(),
        discarded_eps: samples[idx].0,
    })
}

/// One cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint<T> {
    pub k: u32,
    pub eps: T,
    pub t: T,
    pub log_c0: Option<T>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport<T> {
    pub method: Method,
    pub t: T,
    pub points: Vec<SweepPoint<T>>,
    pub fit: Option<RateFit<T>>,
    pub theory_rate: Option<T>,
    pub delta_fit: T,
    /// `fitted >= theory - δ_fit`, when both exist.
    pub pass: Option<bool>,
}

/// Evaluates `eval(k, ε)` on each cell and fits the rate. A refused cell
/// leaves the report with partial data and no fit.
pub fn slope_sweep<T: Scalar, F>(
    cells: &[(u32, T)],
    t: T,
    method: Method,
    theory_rate: Option<T>,
    delta_fit: T,
    mut eval: F,
) -> Result<SweepReport<T>>
where
    F: FnMut(u32, T) -> Result<T>,
{
    if cells.len() < 4 {
        return Err(Error::InvalidArgument("a sweep needs at least four ε values".into()));
    }
    for w in cells.windows(2) {
        if !(w[1].1 < w[0].1) {
            return Err(Error::InvalidArgument("ε values must decrease".into()));
        }
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut complete = true;
    for (k, eps) in cells {
        match eval(*k, *eps) {
            Ok(l) => points.push(SweepPoint {
                k: *k,
                eps: *eps,
                t,
                log_c0: Some(l),
                note: None,
            }),
            Err(e) => {
                complete = false;
                points.push(SweepPoint {
                    k: *k,
                    eps: *eps,
                    t,
                    log_c0: None,
                    note: Some(e.to_string()),
                });
            }
        }
    }
    let fit = if complete {
        let s: Vec<(T, T)> = points.iter().map(|p| (p.eps, p.log_c0.unwrap())).collect();
        Some(fit_rate(&s)?)
    } else {
        None
    };
    let pass = match (&fit, theory_rate) {
        (Some(f), Some(r)) => Some(f.rate >= r - delta_fit),
        _ => None,
    };
    Ok(SweepReport {
        method,
        t,
        points,
        fit,
        theory_rate,
        delta_fit,
        pass,
    })
}

/// CSV rows `scenario,method,k,eps,T,log_C0_times_eps,theory_rate,pass`.
pub fn sweep_csv<T: Scalar>(scenario: &str, reports: &[SweepReport<T>]) -> String {
    let mut out = String::from("scenario,method,k,eps,T,log_C0_times_eps,theory_rate,pass\n");
    for r in reports {
        for p in &r.points {
            let v = p.log_c0.map(|l| to_f64(l * p.eps)).unwrap_or(f64::NAN);
            let th = r.theory_rate.map(to_f64).unwrap_or(f64::NAN);
            let pass = match r.theory_rate {
                Some(th) if p.log_c0.is_some() => (to_f64(p.eps * p.log_c0.unwrap()) >= to_f64(th - r.delta_fit)).to_string(),
                _ => String::new(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                scenario,
                r.method.name(),
                p.k,
                to_f64(p.eps),
                to_f64(p.t),
                v,
                th,
                pass
            );
        }
    }
    out
}

/// `[T_lo, T_hi]` from fitted rates on an increasing horizon grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket<T> {
    /// Largest horizon whose fitted rate exceeds δ_fit; `None` if there is none.
    pub t_lo: Option<T>,
    /// Smallest horizon whose fitted rate is below δ_fit; `None` if there is
    /// none. Heuristic, never a certificate.
    pub t_hi: Option<T>,
    pub t_hi_certified: bool,
}

/// Brackets the uniform observability time. Horizons with no fitted rate
/// are skipped.
pub fn t_unif_bracket<T: Scalar>(ts: &[T], rates: &[Option<T>], delta_fit: T) -> Result<Bracket<T>> {
    if ts.len() != rates.len() {
        return Err(Error::InvalidArgument("one rate per horizon".into()));
    }
    for w in ts.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument("horizons must increase".into()));
        }
    }
    let mut t_lo = None;
    let mut t_hi = None;
    for (t, r) in ts.iter().zip(rates) {
        if let Some(r) = r {
            if *r > delta_fit {
                t_lo = Some(*t);
            } else if t_hi.is_none() {
                t_hi = Some(*t);
            }
        }
    }
    Ok(Bracket {
        t_lo,
        t_hi,
        t_hi_certified: false,
    })
}

/// Scenario description shared by the library tests and the command line.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub surface: SurfaceConfig,
    pub f: String,
    pub q: String,
    pub c: f64,
    pub omega: Region<f64>,
    /// Observation through the boundary ends contained in ω.
    pub boundary: bool,
    pub params: BTreeMap<String, f64>,
    /// Quantities predicted in closed form (T_GCC, T_FC bounds, T_unif bounds).
    pub predicted: BTreeMap<String, f64>,
}

impl Scenario {
    /// Profile and `f` as expressions in `s` (or `x1, x2`).
    pub fn f_expr(&self) -> Result<ScalarExpr> {
        let vars: &[&str] = if self.surface.case == "box2d" { &["x1", "x2"] } else { &["s"] };
        Ok(ScalarExpr::parse(&self.f, vars)?)
    }

    pub fn q_expr(&self) -> Result<ScalarExpr> {
        let vars: &[&str] = if self.surface.case == "box2d" { &["x1", "x2"] } else { &["s"] };
        Ok(ScalarExpr::parse(&self.q, vars)?)
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("parameter out of range: {}", what)))
    }
}

/// Names accepted by [`build_named_scenario`].
pub const SCENARIOS: [&str; 4] = ["flambda", "sphere_caps", "torus_profile", "cylinder_profile"];

/// Builds one of the constructions behind the lower bounds.
///
/// * `flambda`: interval `[-a, a]`, `f = ∫₀ˢ √(λ²t²+1) dt`, `ω = [η, a]`
///   (params `lambda`, `eta`, `a`, `grid_n`).
/// * `sphere_caps`: round sphere `R = sin s`, `f' = χ_δ` with `χ_δ = 1` on
///   `[3δ/4, π - 3δ/4]`, `ω` the two polar caps of radius δ
///   (params `delta`, `c`, `grid_n`).
/// * `torus_profile`: `S¹_L × S¹`, `f = (L/2π) sin(2πs/L)`, `ω = I_ω × S¹`
///   with `I_ω` of half width α centered at `L/2`, and the profile
///   `R_δ = (χ_δ + M - f'²/4)^{-1/2}` where `χ_δ = 1/δ` on the plateau
///   `|s - L/2| <= p`, and `χ_δ = 1 + a s²` near the minimum `s = 0`
///   (params `delta`, `length`, `alpha`, `plateau`, `curvature`, `grid_n`).
/// * `cylinder_profile`: `[0, L] × S¹`, `f = s`, boundary observation at both
///   ends, `R_δ = (V^δ - f'²/4)^{-1/2}` with
///   `V^δ = χ/(u+δ)^γ + (1-χ)(u-L/2)² + M`, `u = min(s, L - s)`
///   (params `delta`, `gamma`, `length`, `margin`, `grid_n`).
pub fn build_named_scenario(name: &str, params: &BTreeMap<String, f64>) -> Result<Scenario> {
    let mut predicted = BTreeMap::new();
    let mut used = BTreeMap::new();
    let mut get = |key: &str, default: f64| {
        let v = param(params, key, default);
        used.insert(key.to_string(), v);
        v
    };
    let scenario = match name {
        "flambda" => {
            let lam = get("lambda", 4.0);
            let eta = get("eta", 0.25);
            let a = get("a", 1.0);
            let n = get("grid_n", 801.0);
            check(lam > 0.0, "lambda > 0")?;
            check(a > 0.0 && eta > 0.0 && eta < a, "0 < eta < a")?;
            let f = format!(
                "s*sqrt({l}^2*s^2 + 1)/2 + log({l}*s + sqrt({l}^2*s^2 + 1))/(2*{l})",
                l = lam
            );
            predicted.insert("T_unif_lower".into(), lam * eta * eta);
            predicted.insert("T_FC_upper".into(), 2.0 * a);
            Scenario {
                name: name.into(),
                surface: SurfaceConfig {
                    case: "interval".into(),
                    length: 2.0 * a,
                    origin: Some(-a),
                    profile: None,
                    grid_n: n as usize,
                },
                f,
                q: "0".into(),
                c: 0.0,
                omega: Region::Intervals(vec![(eta, a)]),
                boundary: false,
                params: BTreeMap::new(),
                predicted,
            }
        }
        "sphere_caps" => {
            let delta = get("delta", 0.05);
            let c = get("c", 1.0);
            let n = get("grid_n", 1200.0);
            let l = std::f64::consts::PI;
            check(delta > 0.0 && delta < 0.5, "0 < delta < 0.5")?;
            check(c > 0.0, "c > 0")?;
            let w = delta / 2.0;
            let f = format!(
                "{w}*sstepint((s - {a})/{w}) - {w}*sstepint((s - {b})/{w})",
                w = w,
                a = delta / 4.0,
                b = l - 3.0 * delta / 4.0
            );
            predicted.insert("T_GCC".into(), l - 2.0 * delta);
            predicted.insert("T_unif_lower_leading".into(), c * (1.0 / delta).ln() / (c * c + 0.25));
            Scenario {
                name: name.into(),
                surface: SurfaceConfig {
                    case: "sphere".into(),
                    length: l,
                    origin: None,
                    profile: Some("sin(s)".into()),
                    grid_n: n as usize,
                },
                f,
                q: "0".into(),
                c,
                omega: Region::Intervals(vec![(0.0, delta), (l - delta, l)]),
                boundary: false,
                params: BTreeMap::new(),
                predicted,
            }
        }
        "torus_profile" => {
            let delta = get("delta", 0.05);
            let l = get("length", 8.0);
            let alpha = get("alpha", 2.2);
            let p = get("plateau", 2.5);
            let a = get("curvature", 1.0);
            let n = get("grid_n", 3200.0);
            check(delta > 0.0 && delta < 1.0, "0 < delta < 1")?;
            check(l > 0.0 && a > 0.0, "length, curvature > 0")?;
            // f' vanishes at L/4 and 3L/4, both must lie inside I_ω
            check(alpha > l / 4.0 && alpha < p && p < l / 2.0, "L/4 < alpha < plateau < L/2")?;
            let w = l / 2.0 - p;
            check(a * w * w < 1.0 / delta - 1.0, "curvature * (L/2 - plateau)^2 < 1/delta - 1")?;
            // x = distance to s_min = 0; χ_δ = 1 + a x² near x = 0, 1/δ for x >= L/2 - plateau
            let x = format!("({h} - abs(s - {h}))", h = l / 2.0);
            let step = format!("smoothstep({x0}, {x1}, {x})", x0 = 0.5 * w, x1 = w, x = x);
            let chi = format!(
                "(1 + {a}*{x}^2*(1 - {st}) + {d}*{st})",
                a = a,
                x = x,
                st = step,
                d = 1.0 / delta - 1.0
            );
            let k = 2.0 * std::f64::consts::PI / l;
            let profile = format!("({chi} + sin({k}*s)^2/4)^(-0.5)", chi = chi, k = k);
            let f = format!("{}*sin({}*s)", 1.0 / k, k);
            // T_GCC = ∫ ds/|f'| over the complement of I_ω
            let lo = l / 2.0 + alpha;
            let t_gcc = {
                let g = |s: f64| 1.0 / (k * s).cos().abs();
                crate::numerics::adaptive_simpson(&g, lo, l + l / 2.0 - alpha, 1e-12)
            };
            predicted.insert("T_GCC".into(), t_gcc);
            predicted.insert("min_R_upper".into(), delta.sqrt());
            // d_A(edge of ω) >= (plateau - α)(1/δ - 1)^{1/2}, |f| <= L/2π, V_min = 5/4
            predicted.insert(
                "T_unif_lower_leading".into(),
                ((p - alpha) * (1.0 / delta - 1.0).sqrt() - l / (4.0 * std::f64::consts::PI)) / 1.25,
            );
            Scenario {
                name: name.into(),
                surface: SurfaceConfig {
                    case: "torus".into(),
                    length: l,
                    origin: None,
                    profile: Some(profile),
                    grid_n: n as usize,
                },
                f,
                q: "0".into(),
                c: 1.0,
                omega: Region::Intervals(vec![(l / 2.0 - alpha, l / 2.0 + alpha)]),
                boundary: false,
                params: BTreeMap::new(),
                predicted,
            }
        }
        "cylinder_profile" => {
            let delta = get("delta", 0.05);
            let gamma = get("gamma", 3.0);
            let l = get("length", 2.0);
            let margin = get("margin", 0.25);
            let n = get("grid_n", 1201.0);
            check(delta > 0.0 && delta <= 0.5, "0 < delta <= 0.5")?;
            check(gamma > 2.0, "gamma > 2")?;
            check(l > 0.0 && margin > 0.0, "length, margin > 0")?;
            let h = l / 2.0;
            let u = format!("({h} - abs(s - {h}))", h = h);
            let chi = format!("(1 - smoothstep({a}, {b}, {u}))", a = l / 4.0, b = 3.0 * l / 8.0, u = u);
            // f = s, so |f'|²/4 = 1/4 = M - margin
            let m = 0.25 + margin;
            let vdelta = format!(
                "{chi}/({u} + {d})^{g} + (1 - {chi})*({u} - {h})^2 + {m}",
                chi = chi,
                u = u,
                d = delta,
                g = gamma,
                h = h,
                m = m
            );
            let profile = format!("({} - 0.25)^(-0.5)", vdelta);
            let e = gamma / 2.0 - 1.0;
            predicted.insert("T_FC".into(), l);
            predicted.insert("T_unif_lower_leading".into(), delta.powf(-e) / e / m);
            Scenario {
                name: name.into(),
                surface: SurfaceConfig {
                    case: "cylinder".into(),
                    length: l,
                    origin: None,
                    profile: Some(profile),
                    grid_n: n as usize,
                },
                f: "s".into(),
                q: "0".into(),
                c: 1.0,
                omega: Region::Intervals(vec![(0.0, 0.0), (l, l)]),
                boundary: true,
                params: BTreeMap::new(),
                predicted,
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario `{}` (known: {})",
                other,
                SCENARIOS.join(", ")
            )))
        }
    };
    Ok(Scenario {
        params: used,
        ..scenario
    })
}

/// Scenario with its geometry, potential and weight evaluated.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub spec: SurfaceSpec<T>,
    pub f: ScalarExpr,
    pub q: ScalarExpr,
    pub omega: Region<T>,
    pub pot: PotentialField<T>,
    /// Agmon distance at the bottom energy, with `W` filled in.
    pub agmon: AgmonField<T>,
    /// `f` on the grid up to an additive constant (`f(s_0)` is dropped in
    /// one dimension).
    pub f_values: Vec<T>,
}

impl<T: Scalar> Prepared<T> {
    /// Bound mode matching the scenario's geometry and observation.
    pub fn mode(&self, boundary: bool) -> RateMode {
        if boundary {
            RateMode::Boundary
        } else if self.spec.case.is_revolution() && self.pot.unique_min {
            RateMode::Revolution
        } else {
            RateMode::General
        }
    }

    pub fn theory(&self, t: T, mode: RateMode) -> Result<TheoryRate<T>> {
        theoretical_rate(&self.agmon, &self.pot, &self.spec, &self.f, &self.omega, t, mode)
    }

    /// Mode-`k` operator at viscosity `eps` (with the `ε q_f` term).
    pub fn operator(&self, eps: T, k: u32) -> Result<DiscreteOperator<T>> {
        crate::spectral::assemble_operator(&self.spec, &self.f, &self.q, eps, k, true)
    }
}

fn convert_region<T: Scalar>(r: &Region<f64>) -> Region<T> {
    match r {
        Region::Whole => Region::Whole,
        Region::Intervals(v) => Region::Intervals(v.iter().map(|(a, b)| (lit(*a), lit(*b))).collect()),
        Region::Boxes(v) => Region::Boxes(v.iter().map(|b| b.map(lit)).collect()),
        Region::Balls(v) => Region::Balls(v.iter().map(|(c, r)| (c.map(lit), lit(*r))).collect()),
    }
}

/// `f(s_i) - f(s_0)` from the symbolic derivative, five-point Gauss–Legendre
/// per cell. Depends on `f'` only, so `f → f + c` leaves it bitwise
/// unchanged; direct samples would not, and the truncated Gramian pencil
/// amplifies that rounding by several orders of magnitude.
fn integrated_f<T: Scalar>(grid: &[T], f: &ScalarExpr) -> Result<Vec<T>> {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let df = f.differentiate(&f.variables()[0])?;
    let half: T = lit(0.5);
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = T::zero();
    out.push(acc);
    for w in grid.windows(2) {
        let (mid, rad) = ((w[0] + w[1]) * half, (w[1] - w[0]) * half);
        let mut cell = T::zero();
        for (x, wt) in NODES.iter().zip(WEIGHTS) {
            cell += lit::<T>(wt) * df.eval1(mid + rad * lit(*x))?;
        }
        acc += cell * rad;
        out.push(acc);
    }
    Ok(out)
}

/// Builds the surface, the effective potential at `c`, and `W` at the bottom
/// energy.
pub fn prepare<T: Scalar>(sc: &Scenario) -> Result<Prepared<T>> {
    let spec = crate::geometry::build_surface::<T>(&sc.surface)?;
    let f = sc.f_expr()?;
    let q = sc.q_expr()?;
    let omega = convert_region::<T>(&sc.omega);
    omega.validate(&spec)?;
    let pot = crate::geometry::effective_potential(&spec, &f, lit(sc.c), crate::geometry::EnergyChoice::Bottom)?;
    let ag = crate::agmon::agmon_distance(&pot, pot.v_min)?;
    let agmon = crate::agmon::weight_w(ag, &spec, &f, &omega)?;
    let f_values = match &spec.lattice {
        Some(lat) => (0..lat.len()).map(|i| f.eval_at(&lat.point(i))).collect::<std::result::Result<Vec<T>, _>>()?,
        None => integrated_f(&spec.grid, &f)?,
    };
    Ok(Prepared {
        spec,
        f,
        q,
        omega,
        pot,
        agmon,
        f_values,
    })
}
