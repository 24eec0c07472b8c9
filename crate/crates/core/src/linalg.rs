//! Symmetric eigenvalue problems: (cyclic) tridiagonal by bisection and
//! twisted factorization, dense matrices by Householder + implicit QL.

use crate::scalar::{lit, Scalar};

/// Symmetric tridiagonal matrix, optionally closed into a ring by a corner
/// entry coupling the first and last rows.
#[derive(Debug, Clone)]
pub struct SymTridiag<T> {
    pub diag: Vec<T>,
    pub off: Vec<T>,
    pub corner: Option<T>,
}

/// Dense row-major square matrix.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub n: usize,
    pub a: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(n: usize) -> Self {
        Dense {
            n,
            a: vec![T::zero(); n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[i * self.n + j] = v;
    }
}

impl<T: Scalar> SymTridiag<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_cyclic(&self) -> bool {
        self.corner.is_some() && self.diag.len() >= 3
    }

    /// Infinity norm, used as the scale for tolerances.
    pub fn norm(&self) -> T {
        let n = self.len();
        let mut m = T::zero();
        for i in 0..n {
            let mut r = self.diag[i].abs();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            if self.is_cyclic() && (i == 0 || i == n - 1) {
                r += self.corner.unwrap().abs();
            }
            m = m.max(r);
        }
        m
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (T, T) {
        let n = self.len();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let mut r = T::zero();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            if self.is_cyclic() && (i == 0 || i == n - 1) {
                r += self.corner.unwrap().abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// y = M x.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
        if self.is_cyclic() {
            let c = self.corner.unwrap();
            y[0] += c * x[n - 1];
            y[n - 1] += c * x[0];
        }
        y
    }

    fn tiny(&self) -> T {
        T::min_positive_value().sqrt() * (self.norm() + T::one())
    }

    /// Number of eigenvalues strictly below `x` (Sylvester inertia of `M - x`).
    pub fn count_below(&self, x: T) -> usize {
        let n = self.len();
        let tiny = self.tiny();
        let fix = |d: T| if d.abs() < tiny { -tiny } else { d };
        let mut count = 0;
        if !self.is_cyclic() {
            let mut d = fix(self.diag[0] - x);
            if d < T::zero() {
                count += 1;
            }
            for i in 1..n {
                d = fix(self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / d);
                if d < T::zero() {
                    count += 1;
                }
            }
            return count;
        }
        let (d, _, bd) = self.bordered_ldl(x);
        count += d.iter().filter(|v| **v < T::zero()).count();
        if bd < T::zero() {
            count += 1;
        }
        count
    }

    /// LDLᵀ of the cyclic matrix `M - x` with the last row treated as a border.
    /// Returns pivots of the chain, border multipliers w_i (before division)
    /// and the final border pivot.
    fn bordered_ldl(&self, x: T) -> (Vec<T>, Vec<T>, T) {
        let n = self.len();
        let m = n - 1;
        let c = self.corner.unwrap();
        let tiny = self.tiny();
        let fix = |d: T| if d.abs() < tiny { -tiny } else { d };
        let mut d = vec![T::zero(); m];
        let mut w = vec![T::zero(); m];
        let mut bd = self.diag[m] - x;
        d[0] = fix(self.diag[0] - x);
        w[0] = c;
        if m == 1 {
            w[0] += self.off[0];
        }
        for i in 0..m {
            if i > 0 {
                d[i] = fix(self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / d[i - 1]);
                let orig = if i == m - 1 { self.off[m - 1] } else { T::zero() };
                w[i] = orig - w[i - 1] * self.off[i - 1] / d[i - 1];
            }
            bd -= w[i] * w[i] / d[i];
        }
        (d, w, bd)
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection on inertia counts.
    pub fn eigenvalue(&self, j: usize) -> T {
        let (mut lo, mut hi) = self.gershgorin();
        let pad = (hi - lo).abs() * lit(1e-12) + T::epsilon();
        lo -= pad;
        hi += pad;
        for _ in 0..400 {
            let mid = (lo + hi) * lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if hi - lo <= T::epsilon() * lit::<T>(2.0) * (lo.abs().max(hi.abs())) {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo + hi) * lit(0.5)
    }

    /// Indices (ascending) of the `count` eigenvalues closest to `target`, with values.
    pub fn eigenvalues_near(&self, target: T, count: usize) -> Vec<(usize, T)> {
        let n = self.len();
        let count = count.min(n);
        let below = self.count_below(target);
        let lo = below.saturating_sub(count);
        let hi = (below + count).min(n);
        let mut cand: Vec<(usize, T)> = (lo..hi).map(|j| (j, self.eigenvalue(j))).collect();
        cand.sort_by(|a, b| {
            (a.1 - target)
                .abs()
                .partial_cmp(&(b.1 - target).abs())
                .unwrap()
                .then(a.0.cmp(&b.0))
        });
        cand.truncate(count);
        cand
    }

    /// The `count` eigenpairs closest to `target`, sorted by distance to it.
    ///
    /// Vectors have unit Euclidean norm; eigenvalues of cyclic matrices are
    /// refined by the Rayleigh quotient, and nearly equal eigenvalues get
    /// mutually orthogonal vectors.
    pub fn eigenpairs_near(&self, target: T, count: usize) -> Vec<(usize, T, Vec<T>)> {
        let mut near = self.eigenvalues_near(target, count);
        near.sort_by_key(|p| p.0);
        let tol = lit::<T>(1e-9) * (self.norm() + T::one());
        let mut out: Vec<(usize, T, Vec<T>)> = Vec::with_capacity(near.len());
        let mut cluster: Vec<Vec<T>> = Vec::new();
        let mut last: Option<T> = None;
        for (j, mu) in near {
            if last.is_some_and(|m| (mu - m).abs() > tol) {
                cluster.clear();
            }
            let z = self.eigenvector(mu, &cluster);
            let refined = if self.is_cyclic() || !cluster.is_empty() {
                let az = self.matvec(&z);
                az.iter().zip(&z).map(|(a, b)| *a * *b).sum()
            } else {
                mu
            };
            cluster.push(z.clone());
            last = Some(mu);
            out.push((j, refined, z));
        }
        out.sort_by(|a, b| {
            (a.1 - target)
                .abs()
                .partial_cmp(&(b.1 - target).abs())
                .unwrap()
                .then(a.0.cmp(&b.0))
        });
        out
    }

    /// Eigenvector for an (accurate) eigenvalue `mu`, unit Euclidean norm.
    ///
    /// Tridiagonal matrices use a twisted factorization, which keeps
    /// exponentially small entries accurate in a relative sense; cyclic
    /// matrices use inverse iteration on the bordered factorization.
    pub fn eigenvector(&self, mu: T, deflate: &[Vec<T>]) -> Vec<T> {
        let mut z = if self.is_cyclic() || !deflate.is_empty() {
            self.inverse_iteration(mu, deflate)
        } else {
            self.twisted(mu)
        };
        normalize(&mut z);
        if self.is_cyclic() && deflate.is_empty() {
            if let Some(w) = self.cut_refinement(mu, &z) {
                z = w;
            }
        }
        z
    }

    /// A localized eigenvector of a cyclic matrix is recomputed with the
    /// twisted factorization of the chain opened where it is smallest, which
    /// recovers its exponentially small tail in a relative sense. Kept only
    /// when the residual stays as small as that of inverse iteration.
    fn cut_refinement(&self, mu: T, z: &[T]) -> Option<Vec<T>> {
        let n = self.len();
        if n < 3 {
            return None;
        }
        let (mut cut, mut small) = (0, T::infinity());
        for (i, v) in z.iter().enumerate() {
            if v.abs() < small {
                small = v.abs();
                cut = i;
            }
        }
        if small > lit(1e-8) {
            return None;
        }
        let c = self.corner.unwrap();
        // link j couples j and j+1 (mod n), link n-1 is the corner
        let link = |j: usize| if j + 1 < n { self.off[j] } else { c };
        let order: Vec<usize> = (1..=n).map(|j| (cut + j) % n).collect();
        let open = SymTridiag {
            diag: order.iter().map(|i| self.diag[*i]).collect(),
            off: order[..n - 1].iter().map(|i| link(*i)).collect(),
            corner: None,
        };
        let w = open.twisted(mu);
        let mut x = vec![T::zero(); n];
        for (p, i) in order.iter().enumerate() {
            x[*i] = w[p];
        }
        normalize(&mut x);
        let res = |v: &[T]| -> T {
            let av = self.matvec(v);
            av.iter().zip(v).map(|(a, b)| (*a - mu * *b) * (*a - mu * *b)).sum::<T>().sqrt()
        };
        let bound = (res(z) * lit(10.0)).max(lit::<T>(1e-13) * (self.norm() + T::one()));
        if res(&x) <= bound {
            Some(x)
        } else {
            None
        }
    }

    fn twisted(&self, mu: T) -> Vec<T> {
        let n = self.len();
        if n == 1 {
            return vec![T::one()];
        }
        let tiny = self.tiny();
        let fix = |d: T| if d.abs() < tiny { tiny } else { d };
        let a = &self.diag;
        let b = &self.off;
        let mut dp = vec![T::zero(); n];
        let mut rm = vec![T::zero(); n];
        dp[0] = fix(a[0] - mu);
        for i in 1..n {
            dp[i] = fix(a[i] - mu - b[i - 1] * b[i - 1] / dp[i - 1]);
        }
        rm[n - 1] = fix(a[n - 1] - mu);
        for i in (0..n - 1).rev() {
            rm[i] = fix(a[i] - mu - b[i] * b[i] / rm[i + 1]);
        }
        let mut r = 0;
        let mut best = T::infinity();
        for k in 0..n {
            let mut g = a[k] - mu;
            if k > 0 {
                g -= b[k - 1] * b[k - 1] / dp[k - 1];
            }
            if k + 1 < n {
                g -= b[k] * b[k] / rm[k + 1];
            }
            if g.abs() < best {
                best = g.abs();
                r = k;
            }
        }
        let mut z = vec![T::zero(); n];
        z[r] = T::one();
        for i in (0..r).rev() {
            z[i] = -(b[i] / dp[i]) * z[i + 1];
        }
        for i in r + 1..n {
            z[i] = -(b[i - 1] / rm[i]) * z[i - 1];
        }
        z
    }

    fn solve_shifted(&self, mu: T, y: &[T]) -> Vec<T> {
        let n = self.len();
        let tiny = self.tiny();
        let mut diag: Vec<T> = self.diag.iter().map(|a| *a - mu).collect();
        if !self.is_cyclic() {
            return gtsv(&self.off, &diag, &self.off, y, tiny);
        }
        // Sherman-Morrison: M - mu = T' + u vᵀ with T' tridiagonal
        let c = self.corner.unwrap();
        let mut gamma = -diag[0];
        if gamma.abs() < tiny {
            gamma = T::one();
        }
        diag[0] -= gamma;
        diag[n - 1] -= c * c / gamma;
        let mut u = vec![T::zero(); n];
        u[0] = gamma;
        u[n - 1] = c;
        let yy = gtsv(&self.off, &diag, &self.off, y, tiny);
        let zz = gtsv(&self.off, &diag, &self.off, &u, tiny);
        let vy = yy[0] + c / gamma * yy[n - 1];
        let mut den = T::one() + zz[0] + c / gamma * zz[n - 1];
        if den.abs() < tiny {
            den = tiny;
        }
        let f = vy / den;
        yy.iter().zip(&zz).map(|(a, b)| *a - f * *b).collect()
    }

    fn inverse_iteration(&self, mu: T, deflate: &[Vec<T>]) -> Vec<T> {
        let n = self.len();
        // deterministic, non-symmetric start vector
        let mut x: Vec<T> = (0..n)
            .map(|i| T::one() + lit::<T>(((i * 7919) % 97) as f64 / 997.0))
            .collect();
        orthogonalize(&mut x, deflate);
        normalize(&mut x);
        for _ in 0..4 {
            let mut y = self.solve_shifted(mu, &x);
            orthogonalize(&mut y, deflate);
            normalize(&mut y);
            x = y;
        }
        x
    }
}

/// Tridiagonal solve with partial pivoting (sub, diag, super diagonals).
fn gtsv<T: Scalar>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T], tiny: T) -> Vec<T> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let dl = sub.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![T::zero(); n.saturating_sub(2)];
    let mut b = rhs.to_vec();
    if n == 1 {
        let p = if d[0].abs() < tiny { tiny } else { d[0] };
        return vec![b[0] / p];
    }
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i].abs() < tiny {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] = b[i + 1] - fact * b[i];
            if i + 2 < n {
                du2[i] = T::zero();
            }
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - fact * b[i + 1];
        }
    }
    if d[n - 1].abs() < tiny {
        d[n - 1] = tiny;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = b[n - 1] / d[n - 1];
    x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    x
}

fn orthogonalize<T: Scalar>(x: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let p: T = x.iter().zip(q).map(|(a, b)| *a * *b).sum();
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= p * *qi;
            }
        }
    }
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let mx = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if mx == T::zero() {
        return;
    }
    for v in x.iter_mut() {
        *v /= mx;
    }
    let nrm = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
    for v in x.iter_mut() {
        *v /= nrm;
    }
}

/// Eigenpairs `(values ascending, vectors as columns)` of a dense symmetric matrix.
pub fn dense_sym_eigen<T: Scalar>(m: &Dense<T>) -> (Vec<T>, Dense<T>) {
    let n = m.n;
    let mut v = m.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    if n == 0 {
        return (d, v);
    }
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e);
    (d, v)
}

fn tred2<T: Scalar>(vm: &mut Dense<T>, d: &mut [T], e: &mut [T]) {
    let n = vm.n;
    let idx = |i: usize, j: usize| i * n + j;
    let v = &mut vm.a;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                let f = d[j];
                v[idx(j, i)] = f;
                let mut g = e[j] + v[idx(j, j)] * f;
                for k in j + 1..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

fn tql2<T: Scalar>(vm: &mut Dense<T>, d: &mut [T], e: &mut [T]) {
    let n = vm.n;
    let idx = |i: usize, j: usize| i * n + j;
    let v = &mut vm.a;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let g = d[l];
                let mut p = (d[l + 1] - g) / (lit::<T>(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let hk = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * hk;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    // selection sort ascending
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, dj) in d.iter().enumerate().skip(i + 1) {
            if *dj < p {
                k = j;
                p = *dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                v.swap(idx(j, i), idx(j, k));
            }
        }
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Scalar>(m: &Dense<T>) -> Option<Dense<T>> {
    let n = m.n;
    let mut l = Dense::zeros(n);
    for j in 0..n {
        let mut s = m.get(j, j);
        for k in 0..j {
            s -= l.get(j, k) * l.get(j, k);
        }
        if s <= T::zero() || !s.is_finite() {
            return None;
        }
        let ljj = s.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Some(l)
}

/// Largest eigenvalue of the pencil `(a, g)` with `g` positive definite,
/// together with the 2-norm condition estimate of `g` after diagonal scaling.
pub fn max_generalized_eigenvalue<T: Scalar>(a: &Dense<T>, g: &Dense<T>) -> Option<(T, T)> {
    let n = a.n;
    // symmetric diagonal equilibration of g
    let s: Vec<T> = (0..n)
        .map(|i| {
            let gi = g.get(i, i);
            if gi > T::zero() {
                T::one() / gi.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    let mut gs = Dense::zeros(n);
    let mut as_ = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            gs.set(i, j, g.get(i, j) * s[i] * s[j]);
            as_.set(i, j, a.get(i, j) * s[i] * s[j]);
        }
    }
    let (gev, _) = dense_sym_eigen(&gs);
    let gmin = gev[0];
    let gmax = gev[n - 1];
    let cond = if gmin > T::zero() { gmax / gmin } else { T::infinity() };
    let l = cholesky(&gs)?;
    // c = L^{-1} A L^{-T}
    let mut y = Dense::zeros(n);
    for col in 0..n {
        for i in 0..n {
            let mut v = as_.get(i, col);
            for k in 0..i {
                v -= l.get(i, k) * y.get(k, col);
            }
            y.set(i, col, v / l.get(i, i));
        }
    }
    let mut c = Dense::zeros(n);
    for row in 0..n {
        for i in 0..n {
            let mut v = y.get(row, i);
            for k in 0..i {
                v -= l.get(i, k) * c.get(row, k);
            }
            c.set(row, i, v / l.get(i, i));
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = (c.get(i, j) + c.get(j, i)) * lit(0.5);
            c.set(i, j, avg);
            c.set(j, i, avg);
        }
    }
    let (ev, _) = dense_sym_eigen(&c);
    Some((ev[n - 1], cond))
}

/// Largest eigenvalue of the pencil `(a, g)` restricted to the span of the
/// eigenvectors of (diagonally equilibrated) `g` whose eigenvalues exceed
/// `rcond` times the largest one. Returns the value and the retained rank.
///
/// Restricting to a subspace can only lower the maximum of the Rayleigh
/// quotient `xᵀax / xᵀgx`, so the result is a lower bound for the full pencil.
pub fn max_generalized_eigenvalue_truncated<T: Scalar>(a: &Dense<T>, g: &Dense<T>, rcond: T) -> Option<(T, usize)> {
    let n = a.n;
    let s: Vec<T> = (0..n)
        .map(|i| {
            let gi = g.get(i, i);
            if gi > T::zero() {
                T::one() / gi.sqrt()
            } else {
                T::one()
            }
        })
        .collect();
    let mut gs = Dense::zeros(n);
    let mut as_ = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            gs.set(i, j, g.get(i, j) * s[i] * s[j]);
            as_.set(i, j, a.get(i, j) * s[i] * s[j]);
        }
    }
    let (gev, q) = dense_sym_eigen(&gs);
    let top = gev[n - 1];
    if !(top > T::zero()) {
        return None;
    }
    let keep: Vec<usize> = (0..n).filter(|j| gev[*j] > rcond * top).collect();
    let r = keep.len();
    // columns y_j = q_j / sqrt(λ_j) make the restricted g the identity
    let mut y = Dense::zeros(n);
    for (c, j) in keep.iter().enumerate() {
        let sc = T::one() / gev[*j].sqrt();
        for i in 0..n {
            y.set(i, c, q.get(i, *j) * sc);
        }
    }
    let mut ay = vec![T::zero(); n * r];
    for i in 0..n {
        for c in 0..r {
            let mut v = T::zero();
            for k in 0..n {
                v += as_.get(i, k) * y.get(k, c);
            }
            ay[i * r + c] = v;
        }
    }
    let mut b = Dense::zeros(r);
    for c1 in 0..r {
        for c2 in c1..r {
            let mut v = T::zero();
            for i in 0..n {
                v += y.get(i, c1) * ay[i * r + c2];
            }
            b.set(c1, c2, v);
            b.set(c2, c1, v);
        }
    }
    let (ev, _) = dense_sym_eigen(&b);
    Some((ev[r - 1], r))
}
