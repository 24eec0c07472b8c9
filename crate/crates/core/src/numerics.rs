//! Quadrature, one-dimensional minimization and least-squares helpers.

use crate::scalar::{lit, Scalar};

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
///
/// Returns NaN if the integrand produced a non-finite value.
pub fn adaptive_simpson<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let m = (a + b) * lit(0.5);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / lit(6.0) * (fa + lit::<T>(4.0) * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<T: Scalar, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let m = (a + b) * lit(0.5);
    let lm = (a + m) * lit(0.5);
    let rm = (m + b) * lit(0.5);
    let flm = f(lm);
    let frm = f(rm);
    let six: T = lit(6.0);
    let four: T = lit(4.0);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return T::nan();
    }
    if depth == 0 || delta.abs() <= lit::<T>(15.0) * tol || (b - a).abs() <= T::epsilon() * (a.abs() + b.abs()) {
        return left + right + delta / lit(15.0);
    }
    let half = tol * lit(0.5);
    simpson_rec(f, a, m, fa, flm, fm, left, half, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, half, depth - 1)
}

/// Integral of `f` over `[a, b]` where `f` may have a square-root type
/// singularity or a zero of finite order at `a`: substitutes `s = a + sign·u²`.
pub fn simpson_sqrt_endpoint<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let sign = if b > a { T::one() } else { -T::one() };
    let umax = (b - a).abs().sqrt();
    let two: T = lit(2.0);
    let g = |u: T| two * u * f(a + sign * u * u);
    sign * adaptive_simpson(&g, T::zero(), umax, tol)
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_min<T: Scalar, F: Fn(T) -> T>(f: &F, mut a: T, mut b: T, tol: T) -> (T, T) {
    let invphi: T = lit(0.618_033_988_749_894_8);
    let mut c = b - (b - a) * invphi;
    let mut d = a + (b - a) * invphi;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * invphi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * invphi;
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub fn bisect_root<T: Scalar, F: Fn(T) -> T>(f: &F, mut a: T, mut b: T, tol: T) -> T {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = (a + b) * lit(0.5);
        if (b - a).abs() <= tol {
            return m;
        }
        let fm = f(m);
        if (fm <= T::zero()) == (fa <= T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    (a + b) * lit(0.5)
}

/// Ordinary least-squares line `y = slope·x + intercept`.
pub fn linear_fit<T: Scalar>(x: &[T], y: &[T]) -> (T, T) {
    let n: T = lit(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (xi, yi) in x.iter().zip(y) {
        sxy += (*xi - mx) * (*yi - my);
        sxx += (*xi - mx) * (*xi - mx);
    }
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    (slope, my - slope * mx)
}

/// Arithmetic mean.
pub fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / lit(v.len().max(1) as f64)
}

/// `log(Σ exp(x_i))` without overflow.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (*x - m).exp()).sum::<T>().ln()
}

/// Trapezoid rule on samples.
pub fn trapezoid<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for i in 1..x.len() {
        acc += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) * lit(0.5);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_sqrt() {
        let v = adaptive_simpson(&|x: f64| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-12);
        let w = simpson_sqrt_endpoint(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((w - 2.0 / 3.0).abs() < 1e-11);
        let back = simpson_sqrt_endpoint(&|x: f64| (1.0 - x).sqrt(), 1.0, 0.0, 1e-12);
        assert!((back + 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn golden_and_bisect() {
        let (x, fx) = golden_min(&|x: f64| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
        let r = bisect_root(&|x: f64| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn fits() {
        let x = [1.0f64, 2.0, 3.0];
        let y = [3.0f64, 5.0, 7.0];
        let (m, b) = linear_fit(&x, &y);
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
