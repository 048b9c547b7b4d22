//! Small one-dimensional numerical routines: bracketing bisection,
//! adaptive Simpson quadrature and golden-section search.

use crate::scalar::Scalar;

/// Bisects a monotone predicate on `[lo, hi]` where `pred(lo)` is false and
/// `pred(hi)` is true. Returns the final bracket `(lo, hi)` with the same
/// property. Stops when the width is at most `tol`, when the midpoint no
/// longer separates the endpoints, or after `max_iter` halvings.
pub(crate) fn bisect_bracket<T, F>(mut lo: T, mut hi: T, tol: T, max_iter: usize, mut pred: F) -> (T, T)
where
    T: Scalar,
    F: FnMut(T) -> bool,
{
    let half = T::lit(0.5);
    for _ in 0..max_iter {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Adaptive Simpson integration of `f` over `[a, b]` (either orientation).
pub(crate) fn adaptive_simpson<T, F>(f: &F, a: T, b: T, tol: T) -> T
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if a == b {
        return T::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) * T::lit(0.5);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn simpson<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T, F>(f: &F, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let half = T::lit(0.5);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol * half, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol * half, depth - 1)
}

/// Golden-section search for the maximizer of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`; the endpoints are compared as well so a
/// monotone `f` reports its boundary optimum.
pub(crate) fn golden_max<T, F>(mut f: F, a: T, b: T, max_iter: usize) -> (T, T)
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if hi - lo <= T::epsilon() * (T::one() + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}
