//! Bracketing root finder.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bisection on `[lo, hi]` for `iters` halvings.
///
/// The bracket must show a sign change (a zero at an endpoint is returned
/// directly). The midpoint of the final bracket is returned.
pub fn bisect<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, iters: usize) -> Result<T> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NonFinite("function value at bracket endpoint"));
    }
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracket { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    let two = T::of(2.0);
    for _ in 0..iters {
        let mid = (a + b) / two;
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok((a + b) / two)
}

/// Bisection followed by a residual check `|f(root)| <= tol`.
pub fn bisect_checked<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, iters: usize, tol: T) -> Result<T> {
    let root = bisect(&f, lo, hi, iters)?;
    let residual = f(root).abs();
    if residual > tol || !residual.is_finite() {
        return Err(Error::NoConvergence { residual: residual.as_f64() });
    }
    Ok(root)
}
