//! Discretization of the conjugated operator
//! `P = -ε²Δ + |∇f|²/4 + ε q_f` restricted to a Fourier mode `k`, its
//! eigenpairs, and the localization checks built on them.

use std::fmt::Write as _;

use crate::agmon::AgmonField;
use crate::error::{Error, Result};
use crate::exprdsl::ScalarExpr;
use crate::geometry::{End, PotentialField, SurfaceSpec, Topology};
use crate::linalg::SymTridiag;
use crate::numerics::linear_fit;
use crate::scalar::{lit, to_f64, Scalar};

/// Flux-form discretization of the mode-`k` operator.
///
/// The generalized problem is `S φ = μ M φ` with `S` symmetric tridiagonal
/// (cyclic on rings) and `M = diag(R_i w_i)`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator<T> {
    pub spec: SurfaceSpec<T>,
    pub eps: T,
    pub k: u32,
    /// Grid indices of the unknowns (Dirichlet nodes removed).
    pub active: Vec<usize>,
    pub stiffness: SymTridiag<T>,
    pub mass: Vec<T>,
    /// Potential part `ε²k²/R² + |f'|²/4` on the full grid.
    pub v: Vec<T>,
    /// `Δf/2 - q` on the full grid.
    pub q_f: Vec<T>,
    pub include_qf: bool,
    /// Profile samples on the full grid.
    pub r: Vec<T>,
}

impl<T: Scalar> DiscreteOperator<T> {
    /// Symmetrized matrix `M^{-1/2} S M^{-1/2}`.
    pub fn symmetric(&self) -> SymTridiag<T> {
        let sq: Vec<T> = self.mass.iter().map(|m| m.sqrt()).collect();
        let n = sq.len();
        let diag = (0..n).map(|i| self.stiffness.diag[i] / self.mass[i]).collect();
        let off = (0..n.saturating_sub(1))
            .map(|i| self.stiffness.off[i] / (sq[i] * sq[i + 1]))
            .collect();
        let corner = self.stiffness.corner.map(|c| c / (sq[0] * sq[n - 1]));
        SymTridiag { diag, off, corner }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Expands unknowns to the full grid, zero on Dirichlet nodes.
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.spec.grid.len()];
        for (j, i) in self.active.iter().enumerate() {
            out[*i] = x[j];
        }
        out
    }

    /// Mass weights on the full grid (zero on Dirichlet nodes).
    pub fn mass_full(&self) -> Vec<T> {
        self.expand(&self.mass)
    }
}

/// Assembles the mode-`k` operator on a one-dimensional or rotational domain.
///
/// `q` is the zeroth-order coefficient of the transport equation; the term
/// `ε q_f` is dropped when `include_qf` is false.
pub fn assemble_operator<T: Scalar>(
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    q: &ScalarExpr,
    eps: T,
    k: u32,
    include_qf: bool,
) -> Result<DiscreteOperator<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }
    if spec.topology() == Topology::Box2d {
        return Err(Error::InvalidArgument(
            "the operator is assembled on one-dimensional and rotational domains".into(),
        ));
    }
    if k > 0 && !spec.case.is_revolution() {
        return Err(Error::InvalidArgument("Fourier modes need a surface of revolution".into()));
    }
    let grid = &spec.grid;
    let n = grid.len();
    let h = spec.h;
    let df = f.differentiate("s")?;
    let d2f = df.differentiate("s")?;
    let (r, dr): (Vec<T>, Vec<T>) = match &spec.profile {
        Some(p) => {
            let dp = p.differentiate("s")?;
            let mut r = Vec::with_capacity(n);
            let mut d = Vec::with_capacity(n);
            for s in grid {
                r.push(p.eval1(*s)?);
                d.push(dp.eval1(*s)?);
            }
            (r, d)
        }
        None => (vec![T::one(); n], vec![T::zero(); n]),
    };
    let half: T = lit(0.5);
    let quarter: T = lit(0.25);
    let ek = eps * lit::<T>(k as f64);
    let mut v = Vec::with_capacity(n);
    let mut q_f = Vec::with_capacity(n);
    for i in 0..n {
        let s = grid[i];
        let fp = df.eval1(s)?;
        let mut vi = fp * fp * quarter;
        if k > 0 {
            vi += ek * ek / (r[i] * r[i]);
        }
        v.push(vi);
        let lap = d2f.eval1(s)? + dr[i] / r[i] * fp;
        q_f.push(lap * half - q.eval1(s)?);
    }
    let dir = spec.dirichlet_mask();
    let active: Vec<usize> = (0..n).filter(|i| !dir[*i]).collect();
    let periodic = spec.case.is_periodic();
    // face values R_{i+1/2}; faces through a pole carry no flux
    let face_r = |a: T, b: T| -> Result<T> {
        match &spec.profile {
            Some(p) => Ok(p.eval1((a + b) * half)?),
            None => Ok(T::one()),
        }
    };
    let mut face = Vec::with_capacity(n);
    for i in 0..n - 1 {
        face.push(face_r(grid[i], grid[i + 1])?);
    }
    let wrap_face = if periodic {
        Some(face_r(grid[n - 1], grid[0] + spec.length)?)
    } else {
        None
    };
    let e2 = eps * eps;
    let m = active.len();
    let mut diag = vec![T::zero(); m];
    let mut off = vec![T::zero(); m.saturating_sub(1)];
    let mut mass = vec![T::zero(); m];
    for (j, &i) in active.iter().enumerate() {
        let left = if i > 0 {
            Some(face[i - 1])
        } else {
            wrap_face
        };
        let right = if i + 1 < n { Some(face[i]) } else { wrap_face };
        let mut flux = T::zero();
        if let Some(rl) = left {
            flux += rl;
        }
        if let Some(rr) = right {
            flux += rr;
        }
        let w = r[i] * h;
        let pot = if include_qf { v[i] + eps * q_f[i] } else { v[i] };
        diag[j] = e2 * flux / h + w * pot;
        mass[j] = w;
        if j + 1 < m {
            // consecutive unknowns are grid neighbours
            debug_assert_eq!(active[j + 1], i + 1);
            off[j] = -e2 * face[i] / h;
        }
    }
    let corner = wrap_face.map(|rf| -e2 * rf / h);
    Ok(DiscreteOperator {
        spec: spec.clone(),
        eps,
        k,
        active,
        stiffness: SymTridiag { diag, off, corner },
        mass,
        v,
        q_f,
        include_qf,
        r,
    })
}

/// Eigenpair of the generalized problem, `φ` on the full grid.
#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub k: u32,
    pub eps: T,
    pub mu: T,
    pub phi: Vec<T>,
    pub norm_check: T,
    pub residual: T,
    pub index: usize,
}

/// The `count` eigenpairs with `μ` closest to `target`, sorted by `|μ - target|`.
pub fn nearest_eigenpair<T: Scalar>(
    op: &DiscreteOperator<T>,
    target: T,
    count: usize,
) -> Result<Vec<EigenPair<T>>> {
    if count == 0 || count > op.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {} eigenpairs from a problem of dimension {}",
            count,
            op.len()
        )));
    }
    let a = op.symmetric();
    let pairs = a.eigenpairs_near(target, count);
    let mut out = Vec::with_capacity(pairs.len());
    for (idx, mu, z) in pairs {
        out.push(finish_pair(op, idx, mu, &z));
    }
    Ok(out)
}

/// The `count` lowest eigenpairs in ascending order.
pub fn lowest_eigenpairs<T: Scalar>(op: &DiscreteOperator<T>, count: usize) -> Result<Vec<EigenPair<T>>> {
    let a = op.symmetric();
    let (lo, _) = a.gershgorin();
    let mut v = nearest_eigenpair(op, lo - T::one(), count)?;
    v.sort_by(|x, y| x.index.cmp(&y.index));
    Ok(v)
}

fn finish_pair<T: Scalar>(op: &DiscreteOperator<T>, index: usize, mu: T, z: &[T]) -> EigenPair<T> {
    let mut x: Vec<T> = z.iter().zip(&op.mass).map(|(zi, m)| *zi / m.sqrt()).collect();
    // sign: largest magnitude entry positive
    let mut big = 0;
    for i in 0..x.len() {
        if x[i].abs() > x[big].abs() {
            big = i;
        }
    }
    if x[big] < T::zero() {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
    let nrm2: T = x.iter().zip(&op.mass).map(|(a, m)| *a * *a * *m).sum();
    let sx = op.stiffness.matvec(&x);
    let mut res2 = T::zero();
    let mut mx2 = T::zero();
    for i in 0..x.len() {
        let r = sx[i] - mu * op.mass[i] * x[i];
        res2 += r * r;
        mx2 += (op.mass[i] * x[i]) * (op.mass[i] * x[i]);
    }
    EigenPair {
        k: op.k,
        eps: op.eps,
        mu,
        phi: op.expand(&x),
        norm_check: (nrm2.sqrt() - T::one()).abs(),
        residual: (res2 / mx2).sqrt(),
        index,
    }
}

/// Grid function multiplied by `e^{±f/2ε}`, stored as `values · e^{log_offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled<T> {
    pub values: Vec<T>,
    pub log_offset: T,
}

impl<T: Scalar> Scaled<T> {
    pub fn to_plain(&self) -> Vec<T> {
        let s = self.log_offset.exp();
        self.values.iter().map(|v| *v * s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjDirection {
    /// `v = e^{f/2ε} u`
    ToV,
    /// `u = e^{-f/2ε} v`
    ToU,
}

/// Time relabelling attached to a conjugation: `w(t) = v(t/ε)` when `ByEps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScale {
    None,
    ByEps,
}

const EXP_GUARD: f64 = 700.0;

/// Pointwise conjugation by `e^{±f/2ε}`. Exponents beyond ±700 switch to a
/// scaled representation so nothing overflows.
pub fn conjugate<T: Scalar>(input: &Scaled<T>, f_values: &[T], eps: T, direction: ConjDirection) -> Scaled<T> {
    let sign = match direction {
        ConjDirection::ToV => T::one(),
        ConjDirection::ToU => -T::one(),
    };
    let two: T = lit(2.0);
    let expo: Vec<T> = f_values.iter().map(|f| sign * *f / (two * eps)).collect();
    let big = expo.iter().fold(T::zero(), |m, a| m.max(a.abs()));
    if big <= lit(EXP_GUARD) {
        Scaled {
            values: input.values.iter().zip(&expo).map(|(u, a)| *u * a.exp()).collect(),
            log_offset: input.log_offset,
        }
    } else {
        // work with log-magnitudes so neither factor overflows
        let logs: Vec<T> = input
            .values
            .iter()
            .zip(&expo)
            .map(|(u, a)| if *u == T::zero() { T::neg_infinity() } else { u.abs().ln() + *a })
            .collect();
        let top = logs.iter().fold(T::neg_infinity(), |m, a| m.max(*a));
        let top = if top.is_finite() { top } else { T::zero() };
        Scaled {
            values: input
                .values
                .iter()
                .zip(&logs)
                .map(|(u, l)| if *u == T::zero() { T::zero() } else { u.signum() * (*l - top).exp() })
                .collect(),
            log_offset: input.log_offset + top,
        }
    }
}

/// Conjugation of plain samples; see [`conjugate`].
pub fn conjugate_plain<T: Scalar>(u: &[T], f_values: &[T], eps: T, direction: ConjDirection) -> Scaled<T> {
    conjugate(
        &Scaled {
            values: u.to_vec(),
            log_offset: T::zero(),
        },
        f_values,
        eps,
        direction,
    )
}

/// Semiclassical energy densities of an eigenfunction.
#[derive(Debug, Clone)]
pub struct EnergyDensity<T> {
    pub e_k: Vec<T>,
    pub e_k_plus: Vec<T>,
}

/// `E_k = ε²|φ'|² + (V - μ + 1)|φ|²` and `E_k⁺ = ε²|φ'|² + (V - μ)|φ|²`,
/// with `φ'` by centered differences (one-sided at the ends).
pub fn energy_densities<T: Scalar>(pair: &EigenPair<T>, op: &DiscreteOperator<T>) -> EnergyDensity<T> {
    let phi = &pair.phi;
    let g = &op.spec.grid;
    let n = phi.len();
    let periodic = op.spec.case.is_periodic();
    let mut e_k = Vec::with_capacity(n);
    let mut e_kp = Vec::with_capacity(n);
    let e2 = pair.eps * pair.eps;
    for i in 0..n {
        let d = if periodic {
            let (a, b) = ((i + n - 1) % n, (i + 1) % n);
            (phi[b] - phi[a]) / (op.spec.h * lit(2.0))
        } else if i == 0 {
            (phi[1] - phi[0]) / (g[1] - g[0])
        } else if i + 1 == n {
            (phi[n - 1] - phi[n - 2]) / (g[n - 1] - g[n - 2])
        } else {
            (phi[i + 1] - phi[i - 1]) / (g[i + 1] - g[i - 1])
        };
        let kin = e2 * d * d;
        let p2 = phi[i] * phi[i];
        e_kp.push(kin + (op.v[i] - pair.mu) * p2);
        e_k.push(kin + (op.v[i] - pair.mu + T::one()) * p2);
    }
    EnergyDensity {
        e_k,
        e_k_plus: e_kp,
    }
}

/// Per-band outcome of [`verify_decay_bounds`].
#[derive(Debug, Clone)]
pub struct BandReport<T> {
    pub band: (T, T),
    pub mass: T,
    pub d_a: T,
    pub d_a_center: T,
    pub minus_eps_log_mass: T,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone)]
pub struct DecayReport<T> {
    pub bands: Vec<BandReport<T>>,
    pub slope: T,
    pub intercept: T,
    /// `|μ - V_min|`.
    pub gap: T,
    pub refused: bool,
    /// `‖φ‖²` on the neighbourhood of `K_E` of the given radius.
    pub allowed_mass: T,
}

impl<T: Scalar> DecayReport<T> {
    pub fn all_pass(&self) -> bool {
        !self.refused && self.bands.iter().all(|b| b.lower_ok && b.upper_ok)
    }
}

/// Checks `e^{-(d+δ)/ε} <= ‖φ‖_band <= e^{-((1-δ)d-δ)/ε}` on each band, fits
/// `-ε log ‖φ‖_band` against the Agmon distance at the band centres and
/// measures the mass near the minimum.
#[allow(clippy::too_many_arguments)]
pub fn verify_decay_bounds<T: Scalar>(
    pair: &EigenPair<T>,
    op: &DiscreteOperator<T>,
    pot: &PotentialField<T>,
    agmon: &AgmonField<T>,
    bands: &[(T, T)],
    delta: T,
    allowed_radius: T,
    max_gap: T,
) -> Result<DecayReport<T>> {
    let gap = (pair.mu - pot.v_min).abs();
    let g = &op.spec.grid;
    let w = op.mass_full();
    let eps = pair.eps;
    let mut reports = Vec::with_capacity(bands.len());
    for &(a, b) in bands {
        let mut m2 = T::zero();
        let mut dmin = T::infinity();
        for i in 0..g.len() {
            if g[i] >= a && g[i] <= b {
                m2 += pair.phi[i] * pair.phi[i] * w[i];
            }
        }
        // distance of the band: continuous minimum over the band
        let steps = 64;
        for j in 0..=steps {
            let s = a + (b - a) * lit(j as f64 / steps as f64);
            dmin = dmin.min(agmon.distance_at(s)?);
        }
        let dc = agmon.distance_at((a + b) * lit(0.5))?;
        let m = m2.sqrt();
        let lower = (-(dmin + delta) / eps).exp();
        let upper = (-((T::one() - delta) * dmin - delta) / eps).exp();
        reports.push(BandReport {
            band: (a, b),
            mass: m,
            d_a: dmin,
            d_a_center: dc,
            minus_eps_log_mass: -eps * m.ln(),
            lower_ok: m >= lower,
            upper_ok: m <= upper,
        });
    }
    let xs: Vec<T> = reports.iter().map(|r| r.d_a_center).collect();
    let ys: Vec<T> = reports.iter().map(|r| r.minus_eps_log_mass).collect();
    let (slope, intercept) = if reports.len() >= 2 {
        linear_fit(&xs, &ys)
    } else {
        (T::nan(), T::nan())
    };
    let sm = pot.s_min();
    let mut allowed = T::zero();
    for i in 0..g.len() {
        let mut dist = (g[i] - sm).abs();
        if op.spec.case.is_periodic() {
            dist = dist.min(op.spec.length - dist);
        }
        if dist <= allowed_radius {
            allowed += pair.phi[i] * pair.phi[i] * w[i];
        }
    }
    Ok(DecayReport {
        bands: reports,
        slope,
        intercept,
        gap,
        refused: gap > max_gap,
        allowed_mass: allowed,
    })
}

/// Normal derivative of an eigenfunction at one Dirichlet end.
#[derive(Debug, Clone)]
pub struct EndFlux<T> {
    pub end: End,
    pub s: T,
    pub flux: T,
    /// `√(2π)(1+k²)^{1/4}|∂_s φ|`, the single-mode `H^{1/2}(S¹)` norm.
    pub h_half: T,
    /// `-ε log|∂_s φ|`.
    pub minus_eps_log_flux: T,
}

#[derive(Debug, Clone)]
pub struct BoundaryReport<T> {
    pub eps: T,
    pub k: u32,
    pub ends: Vec<EndFlux<T>>,
}

impl<T: Scalar> BoundaryReport<T> {
    /// `-ε log|∂_s φ| >= (1-δ) d_A(end) - tol` at every end.
    pub fn decay_ok(&self, d_a_end: &[T], delta: T, tol: T) -> bool {
        self.ends
            .iter()
            .zip(d_a_end)
            .all(|(e, d)| e.minus_eps_log_flux >= (T::one() - delta) * *d - tol)
    }
}

/// One-sided second-order derivative of `φ` at each Dirichlet end.
pub fn boundary_flux<T: Scalar>(pair: &EigenPair<T>, spec: &SurfaceSpec<T>) -> Result<BoundaryReport<T>> {
    if spec.boundary.is_empty() {
        return Err(Error::InvalidArgument("no boundary".into()));
    }
    let g = &spec.grid;
    let p = &pair.phi;
    let n = g.len();
    let three: T = lit(3.0);
    let four: T = lit(4.0);
    let mut ends = Vec::new();
    let factor = (T::PI() * lit(2.0)).sqrt() * (T::one() + lit::<T>((pair.k as f64).powi(2))).powf(lit(0.25));
    for end in &spec.boundary {
        let (s, d) = match end {
            End::Start => {
                let h = g[1] - g[0];
                (g[0], (-three * p[0] + four * p[1] - p[2]) / (h * lit(2.0)))
            }
            End::Finish => {
                let h = g[n - 1] - g[n - 2];
                (g[n - 1], (three * p[n - 1] - four * p[n - 2] + p[n - 3]) / (h * lit(2.0)))
            }
        };
        let a = d.abs();
        ends.push(EndFlux {
            end: *end,
            s,
            flux: a,
            h_half: factor * a,
            minus_eps_log_flux: -pair.eps * a.ln(),
        });
    }
    Ok(BoundaryReport {
        eps: pair.eps,
        k: pair.k,
        ends,
    })
}

/// CSV dump with columns `s,phi,V,d_A`.
pub fn eigenpair_csv<T: Scalar>(pair: &EigenPair<T>, op: &DiscreteOperator<T>, agmon: Option<&AgmonField<T>>) -> String {
    let mut out = String::from("s,phi,V,d_A\n");
    for i in 0..op.spec.grid.len() {
        let d = agmon.map_or(f64::NAN, |a| to_f64(a.d_a[i]));
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            to_f64(op.spec.grid[i]),
            to_f64(pair.phi[i]),
            to_f64(op.v[i]),
            d
        );
    }
    out
}
