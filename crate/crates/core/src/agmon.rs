//! Agmon distances to the classically allowed region `K_E = {V <= E}` and the
//! weight `W_E = f/2 + d_A`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exprdsl::ScalarExpr;
use crate::geometry::{Lattice, PotentialField, SurfaceSpec, Topology};
use crate::numerics::{adaptive_simpson, bisect_root, golden_min, simpson_sqrt_endpoint};
use crate::region::Region;
use crate::scalar::{lit, to_f64, Scalar};

/// Agmon distance samples and the associated weight.
#[derive(Debug, Clone)]
pub struct AgmonField<T> {
    pub topology: Topology,
    pub grid: Vec<T>,
    pub lattice: Option<Lattice<T>>,
    pub e: T,
    pub d_a: Vec<T>,
    pub k_e: Vec<bool>,
    pub v: Vec<T>,
    /// `d_A + f/2`, filled by [`weight_w`].
    pub w: Option<Vec<T>>,
    pub w_omega: Option<T>,
    pub w_m: Option<T>,
    pub w_omega_at: Option<Vec<T>>,
    pub w_m_at: Option<Vec<T>>,
    // sorted abscissas (grid nodes and anchors) with their distances, used for
    // evaluation between nodes
    knots: Vec<(T, T)>,
    pot: Option<PotentialField<T>>,
    length: T,
    origin: T,
}

impl<T: Scalar> AgmonField<T> {
    fn integrand(&self) -> impl Fn(T) -> T + '_ {
        let pot = self.pot.as_ref().expect("1D field");
        let e = self.e;
        move |s: T| {
            let v = pot.eval(s).unwrap_or(T::infinity()) - e;
            if v > T::zero() {
                v.sqrt()
            } else {
                T::zero()
            }
        }
    }

    /// Agmon distance at an arbitrary abscissa (1D only).
    pub fn distance_at(&self, s: T) -> Result<T> {
        if self.pot.is_none() {
            return Err(Error::InvalidArgument("pointwise evaluation needs a 1D field".into()));
        }
        let periodic = self.topology == Topology::Circle;
        let mut s = s;
        if periodic {
            let mut x = (s - self.origin) % self.length;
            if x < T::zero() {
                x += self.length;
            }
            s = self.origin + x;
        }
        let tol: T = lit(1e-13);
        let g = self.integrand();
        let k = &self.knots;
        let idx = k.partition_point(|p| p.0 <= s);
        let (left, right) = if periodic {
            let n = k.len();
            let l = if idx == 0 {
                (k[n - 1].0 - self.length, k[n - 1].1)
            } else {
                k[idx - 1]
            };
            let r = if idx == n {
                (k[0].0 + self.length, k[0].1)
            } else {
                k[idx]
            };
            (Some(l), Some(r))
        } else {
            (
                if idx > 0 { Some(k[idx - 1]) } else { None },
                k.get(idx).copied(),
            )
        };
        let mut best = T::infinity();
        if let Some((a, da)) = left {
            let gi = |x: T| g(if periodic { wrap_to(x, self.origin, self.length) } else { x });
            best = best.min(da + adaptive_simpson(&gi, a, s, tol));
        }
        if let Some((b, db)) = right {
            let gi = |x: T| g(if periodic { wrap_to(x, self.origin, self.length) } else { x });
            best = best.min(db + adaptive_simpson(&gi, s, b, tol));
        }
        Ok(best)
    }

    /// CSV with columns `s,V,d_A,W` (or `x1,x2,V,d_A,W`).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let w = self.w.clone().unwrap_or_else(|| vec![T::nan(); self.d_a.len()]);
        if let Some(lat) = &self.lattice {
            out.push_str("x1,x2,V,d_A,W\n");
            for i in 0..lat.len() {
                let p = lat.point(i);
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    to_f64(p[0]),
                    to_f64(p[1]),
                    to_f64(self.v[i]),
                    to_f64(self.d_a[i]),
                    to_f64(w[i])
                );
            }
        } else {
            out.push_str("s,V,d_A,W\n");
            for i in 0..self.grid.len() {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    to_f64(self.grid[i]),
                    to_f64(self.v[i]),
                    to_f64(self.d_a[i]),
                    to_f64(w[i])
                );
            }
        }
        out
    }
}

fn wrap_to<T: Scalar>(s: T, origin: T, l: T) -> T {
    let mut x = (s - origin) % l;
    if x < T::zero() {
        x += l;
    }
    origin + x
}

fn check_energy<T: Scalar>(pot: &PotentialField<T>, e: T) -> Result<()> {
    let slack = lit::<T>(1e-12) * (T::one() + pot.v_min.abs());
    if e < pot.v_min - slack {
        return Err(Error::InvalidArgument(format!(
            "energy {} is below the minimum {} of the potential",
            e, pot.v_min
        )));
    }
    Ok(())
}

/// One-dimensional Agmon distance by cumulative quadrature of `√((V-E)₊)`.
///
/// Anchors are the edges of `K_E` (located by bisection) and, at the bottom
/// level, the minimum itself. Cells next to an anchor use the substitution
/// `s = a + u²`, which absorbs the square-root behaviour there.
pub fn agmon_distance_1d<T: Scalar>(pot: &PotentialField<T>, e: T) -> Result<AgmonField<T>> {
    if pot.topology == Topology::Box2d {
        return Err(Error::InvalidArgument("use agmon_distance_grid on boxes".into()));
    }
    check_energy(pot, e)?;
    let periodic = pot.topology == Topology::Circle;
    let n = pot.grid.len();
    let vmx = |s: T| pot.eval(s).unwrap_or(T::infinity()) - e;
    let tiny = lit::<T>(1e-13) * (T::one() + e.abs());
    let bottom = e <= pot.v_min + tiny;

    // knots: (abscissa, is_anchor, grid index)
    let mut knots: Vec<(T, bool, Option<usize>)> = Vec::with_capacity(n + 8);
    let mut mask: Vec<bool> = pot.values.iter().map(|v| *v - e <= tiny).collect();
    for i in 0..n {
        knots.push((pot.grid[i], mask[i], Some(i)));
    }
    let cells = if periodic { n } else { n - 1 };
    for i in 0..cells {
        let j = (i + 1) % n;
        let a = pot.grid[i];
        let b = if j == 0 { pot.grid[0] + pot.length } else { pot.grid[j] };
        let (va, vb) = (pot.values[i] - e, pot.values[j] - e);
        if (va < -tiny && vb > tiny) || (va > tiny && vb < -tiny) {
            let g = |s: T| vmx(if periodic { wrap_to(s, pot.origin, pot.length) } else { s });
            let r = bisect_root(&g, a, b, (b - a) * lit(1e-15));
            let r = if periodic { wrap_to(r, pot.origin, pot.length) } else { r };
            knots.push((r, true, None));
        }
    }
    if bottom {
        // every (refined) local minimum at the bottom level belongs to K_E
        let level = lit::<T>(1e-10) * (T::one() + e.abs());
        let mut minima = vec![pot.s_min()];
        for i in 0..n {
            let prev = if i > 0 { Some(i - 1) } else if periodic { Some(n - 1) } else { None };
            let next = if i + 1 < n { Some(i + 1) } else if periodic { Some(0) } else { None };
            let lower_left = prev.map_or(true, |p| pot.values[p] >= pot.values[i]);
            let lower_right = next.map_or(true, |q| pot.values[q] >= pot.values[i]);
            if !(lower_left && lower_right) {
                continue;
            }
            let h = if n > 1 { (pot.grid[1] - pot.grid[0]).abs() } else { T::one() };
            let (mut lo, mut hi) = (pot.grid[i] - h, pot.grid[i] + h);
            if !periodic {
                lo = lo.max(pot.grid[0]);
                hi = hi.min(pot.grid[n - 1]);
            }
            let g = |s: T| vmx(if periodic { wrap_to(s, pot.origin, pot.length) } else { s });
            let (x, v) = golden_min(&g, lo, hi, h * lit(1e-10));
            if v <= level {
                minima.push(if periodic { wrap_to(x, pot.origin, pot.length) } else { x });
            }
        }
        for sm in minima {
            knots.push((sm, true, None));
            let mut k = 0;
            for i in 0..n {
                if (pot.grid[i] - sm).abs() < (pot.grid[k] - sm).abs() {
                    k = i;
                }
            }
            // the node nearest an isolated bottom point stands for it
            mask[k] = true;
        }
    }
    if !knots.iter().any(|k| k.1) {
        return Err(Error::Numerical("empty allowed region".into()));
    }
    knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    knots.dedup_by(|a, b| {
        if a.0 == b.0 {
            b.1 |= a.1;
            if b.2.is_none() {
                b.2 = a.2;
            }
            true
        } else {
            false
        }
    });
    let m = knots.len();
    let sq = |s: T| {
        let s = if periodic { wrap_to(s, pot.origin, pot.length) } else { s };
        let v = vmx(s);
        if v > T::zero() {
            v.sqrt()
        } else {
            T::zero()
        }
    };
    let tol: T = lit(1e-13);
    // cell integrals between consecutive knots
    let ncell = if periodic { m } else { m - 1 };
    let mut cell = vec![T::zero(); ncell];
    for c in 0..ncell {
        let (a, aa, _) = knots[c];
        let (b, ba, _) = if c + 1 == m {
            let k = knots[0];
            (k.0 + pot.length, k.1, k.2)
        } else {
            knots[c + 1]
        };
        let inside_allowed = aa && ba && sq((a + b) * lit(0.5)) == T::zero();
        cell[c] = if inside_allowed {
            T::zero()
        } else if aa && ba {
            let mid = (a + b) * lit(0.5);
            simpson_sqrt_endpoint(&sq, a, mid, tol) - simpson_sqrt_endpoint(&sq, b, mid, tol)
        } else if aa {
            simpson_sqrt_endpoint(&sq, a, b, tol)
        } else if ba {
            -simpson_sqrt_endpoint(&sq, b, a, tol)
        } else {
            adaptive_simpson(&sq, a, b, tol)
        };
    }
    let mut d: Vec<T> = knots
        .iter()
        .map(|k| if k.1 { T::zero() } else { T::infinity() })
        .collect();
    let passes = if periodic { 2 } else { 1 };
    for _ in 0..passes {
        for c in 0..ncell {
            let j = (c + 1) % m;
            let cand = d[c] + cell[c];
            if cand < d[j] {
                d[j] = cand;
            }
        }
        for c in (0..ncell).rev() {
            let j = (c + 1) % m;
            let cand = d[j] + cell[c];
            if cand < d[c] {
                d[c] = cand;
            }
        }
    }
    let mut d_a = vec![T::zero(); n];
    for (k, knot) in knots.iter().enumerate() {
        if let Some(i) = knot.2 {
            d_a[i] = d[k];
        }
    }
    for i in 0..n {
        if mask[i] {
            d_a[i] = T::zero();
        }
    }
    Ok(AgmonField {
        topology: pot.topology,
        grid: pot.grid.clone(),
        lattice: None,
        e,
        d_a,
        k_e: mask,
        v: pot.values.clone(),
        w: None,
        w_omega: None,
        w_m: None,
        w_omega_at: None,
        w_m_at: None,
        knots: knots.iter().zip(&d).map(|(k, v)| (k.0, *v)).collect(),
        pot: Some(pot.clone()),
        length: pot.length,
        origin: pot.origin,
    })
}

#[derive(PartialEq)]
struct HeapItem<T>(T, usize);

impl<T: PartialOrd> Eq for HeapItem<T> {}

impl<T: PartialOrd> Ord for HeapItem<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (distance, index)
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl<T: PartialOrd> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order fast marching for `|∇d| = √((V-E)₊)` on a box lattice.
pub fn agmon_distance_grid<T: Scalar>(pot: &PotentialField<T>, e: T) -> Result<AgmonField<T>> {
    let lat = pot
        .lattice
        .clone()
        .ok_or_else(|| Error::InvalidArgument("fast marching needs a box2d potential".into()))?;
    check_energy(pot, e)?;
    let n = lat.n;
    let h = lat.h;
    let tiny = lit::<T>(1e-13) * (T::one() + e.abs());
    let speed: Vec<T> = pot
        .values
        .iter()
        .map(|v| if *v - e > T::zero() { (*v - e).sqrt() } else { T::zero() })
        .collect();
    let mut mask: Vec<bool> = pot.values.iter().map(|v| *v - e <= tiny).collect();
    if !mask.iter().any(|m| *m) {
        let xm = &pot.x_min;
        let mut k = 0;
        let mut best = T::infinity();
        for i in 0..lat.len() {
            let p = lat.point(i);
            let dd = (p[0] - xm[0]).powi(2) + (p[1] - xm[1]).powi(2);
            if dd < best {
                best = dd;
                k = i;
            }
        }
        mask[k] = true;
    }
    let mut d = vec![T::infinity(); lat.len()];
    let mut done = vec![false; lat.len()];
    let mut heap = BinaryHeap::new();
    for i in 0..lat.len() {
        if mask[i] {
            d[i] = T::zero();
            heap.push(HeapItem(T::zero(), i));
        }
    }
    let two: T = lit(2.0);
    while let Some(HeapItem(di, idx)) = heap.pop() {
        if done[idx] || di > d[idx] {
            continue;
        }
        done[idx] = true;
        let (i, j) = (idx / n, idx % n);
        let mut nb = Vec::with_capacity(4);
        if i > 0 {
            nb.push(idx - n);
        }
        if i + 1 < n {
            nb.push(idx + n);
        }
        if j > 0 {
            nb.push(idx - 1);
        }
        if j + 1 < n {
            nb.push(idx + 1);
        }
        for q in nb {
            if done[q] {
                continue;
            }
            let (qi, qj) = (q / n, q % n);
            let mut a = T::infinity();
            if qi > 0 && done[q - n] {
                a = a.min(d[q - n]);
            }
            if qi + 1 < n && done[q + n] {
                a = a.min(d[q + n]);
            }
            let mut b = T::infinity();
            if qj > 0 && done[q - 1] {
                b = b.min(d[q - 1]);
            }
            if qj + 1 < n && done[q + 1] {
                b = b.min(d[q + 1]);
            }
            let hf = h * speed[q];
            let cand = if !a.is_finite() || !b.is_finite() || (a - b).abs() >= hf {
                a.min(b) + hf
            } else {
                (a + b + (two * hf * hf - (a - b) * (a - b)).sqrt()) / two
            };
            if cand < d[q] {
                d[q] = cand;
                heap.push(HeapItem(cand, q));
            }
        }
    }
    Ok(AgmonField {
        topology: Topology::Box2d,
        grid: vec![],
        lattice: Some(lat),
        e,
        d_a: d,
        k_e: mask,
        v: pot.values.clone(),
        w: None,
        w_omega: None,
        w_m: None,
        w_omega_at: None,
        w_m_at: None,
        knots: vec![],
        pot: None,
        length: pot.length,
        origin: pot.origin,
    })
}

/// Agmon distance at the given energy, dispatching on the topology.
pub fn agmon_distance<T: Scalar>(pot: &PotentialField<T>, e: T) -> Result<AgmonField<T>> {
    if pot.topology == Topology::Box2d {
        agmon_distance_grid(pot, e)
    } else {
        agmon_distance_1d(pot, e)
    }
}

/// Fills `W = d_A + f/2` together with `W_ω = min_ω̄ W` and `W_m = min W`.
pub fn weight_w<T: Scalar>(
    mut agmon: AgmonField<T>,
    spec: &SurfaceSpec<T>,
    f: &ScalarExpr,
    omega: &Region<T>,
) -> Result<AgmonField<T>> {
    let half: T = lit(0.5);
    let points: Vec<Vec<T>> = match &agmon.lattice {
        Some(lat) => (0..lat.len()).map(|i| lat.point(i).to_vec()).collect(),
        None => agmon.grid.iter().map(|s| vec![*s]).collect(),
    };
    let mut w = Vec::with_capacity(points.len());
    for (p, d) in points.iter().zip(&agmon.d_a) {
        w.push(*d + half * f.eval_at(p)?);
    }
    let argmin_where = |pred: &dyn Fn(usize) -> bool| -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in 0..w.len() {
            if pred(i) && w[i].is_finite() && best.map_or(true, |b| w[i] < w[b]) {
                best = Some(i);
            }
        }
        best
    };
    let (mut wm, mut wm_at) = match argmin_where(&|_| true) {
        Some(i) => (w[i], points[i].clone()),
        None => return Err(Error::Numerical("weight is nowhere finite".into())),
    };
    let om = argmin_where(&|i| omega.contains(spec, &points[i]));
    let (mut wo, mut wo_at) = match om {
        Some(i) => (w[i], points[i].clone()),
        None => (T::infinity(), vec![]),
    };
    if agmon.pot.is_some() {
        // refine both minima between nodes
        let wf = |s: T| -> T {
            let d = agmon.distance_at(s).unwrap_or(T::infinity());
            d + half * f.eval1(spec.wrap(s)).unwrap_or(T::infinity())
        };
        let h = spec.h;
        let clamp = |s: T| if spec.case.is_periodic() { s } else { s.max(spec.origin).min(spec.end()) };
        let (x, v) = golden_min(&wf, clamp(wm_at[0] - h), clamp(wm_at[0] + h), h * lit(1e-9));
        if v < wm {
            wm = v;
            wm_at = vec![spec.wrap(x)];
        }
        for (a, b) in omega.covered(spec) {
            for s in [a, b] {
                let v = wf(s);
                if v < wo {
                    wo = v;
                    wo_at = vec![spec.wrap(s)];
                }
            }
            if !wo_at.is_empty() {
                let c = wo_at[0];
                let lo = (c - h).max(a);
                let hi = (c + h).min(b);
                if lo < hi && c >= a && c <= b {
                    let (x, v) = golden_min(&wf, lo, hi, h * lit(1e-9));
                    if v < wo {
                        wo = v;
                        wo_at = vec![spec.wrap(x)];
                    }
                }
            }
        }
        if wo < wm {
            wm = wo;
            wm_at = wo_at.clone();
        }
    }
    agmon.w = Some(w);
    agmon.w_omega = Some(wo);
    agmon.w_m = Some(wm);
    agmon.w_omega_at = Some(wo_at);
    agmon.w_m_at = Some(wm_at);
    Ok(agmon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_surface, effective_potential, EnergyChoice, SurfaceConfig};

    fn interval(n: usize) -> SurfaceSpec<f64> {
        build_surface(&SurfaceConfig {
            case: "interval".into(),
            length: 4.0,
            origin: Some(-2.0),
            profile: None,
            grid_n: n,
        })
        .unwrap()
    }

    #[test]
    fn harmonic_distance() {
        let sp = interval(101);
        let f = ScalarExpr::parse("s^2/2", &["s"]).unwrap();
        let pot = effective_potential(&sp, &f, 0.0, EnergyChoice::Bottom).unwrap();
        let ag = agmon_distance_1d(&pot, 0.0).unwrap();
        for (s, d) in ag.grid.iter().zip(&ag.d_a) {
            assert!((d - s * s / 4.0).abs() < 1e-10, "{} {}", s, d);
        }
        let v = ag.distance_at(0.737).unwrap();
        assert!((v - 0.737f64.powi(2) / 4.0).abs() < 1e-10);
        // E above the bottom: allowed set [-1, 1]
        let ag = agmon_distance_1d(&pot, 0.25).unwrap();
        let s: f64 = 1.7;
        let exact = (s * (s * s - 1.0).sqrt() - (s + (s * s - 1.0).sqrt()).ln()) / 4.0;
        assert!((ag.distance_at(s).unwrap() - exact).abs() < 1e-9);
        assert!(agmon_distance_1d(&pot, -1.0).is_err());
    }

    #[test]
    fn circle_wraps() {
        let sp: SurfaceSpec<f64> = build_surface(&SurfaceConfig {
            case: "circle".into(),
            length: 2.0 * std::f64::consts::PI,
            origin: None,
            profile: None,
            grid_n: 128,
        })
        .unwrap();
        // V = cos² s vanishes at π/2 and 3π/2, so d_A = 1 - |sin s|
        let f = ScalarExpr::parse("2*sin(s)", &["s"]).unwrap();
        let pot = effective_potential(&sp, &f, 0.0, EnergyChoice::Bottom).unwrap();
        assert!(!pot.unique_min);
        let ag = agmon_distance_1d(&pot, 0.0).unwrap();
        for (i, (s, d)) in ag.grid.iter().zip(&ag.d_a).enumerate() {
            if ag.k_e[i] {
                continue;
            }
            assert!((d - (1.0 - s.sin().abs())).abs() < 1e-9, "{} {}", s, d);
        }
        let v = ag.distance_at(-0.3).unwrap();
        assert!((v - (1.0 - 0.3f64.sin())).abs() < 1e-9);
    }

    #[test]
    fn fast_marching_quadratic() {
        let sp: SurfaceSpec<f64> = build_surface(&SurfaceConfig {
            case: "box2d".into(),
            length: 1.0,
            origin: None,
            profile: None,
            grid_n: 128,
        })
        .unwrap();
        let f = ScalarExpr::parse("x1^2 + x2^2", &["x1", "x2"]).unwrap();
        let pot = effective_potential(&sp, &f, 0.0, EnergyChoice::Bottom).unwrap();
        let ag = agmon_distance_grid(&pot, 0.0).unwrap();
        let lat = ag.lattice.as_ref().unwrap();
        let mut err: f64 = 0.0;
        for i in 0..lat.len() {
            let p = lat.point(i);
            let r2 = p[0] * p[0] + p[1] * p[1];
            if r2 <= 0.0625 {
                err = err.max((ag.d_a[i] - r2 / 2.0).abs());
            }
        }
        assert!(err < 2e-2, "{}", err);
    }
}
