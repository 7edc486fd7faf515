//! Derivative-free one-dimensional root finding.

use crate::error::{Error, Result};
use alloc::format;

/// Bisection on `[lo, hi]`, which must bracket a sign change of `f`.
///
/// Stops once `|f| <= ftol`, or when the bracket can no longer be split in
/// floating point. Returns the midpoint of the final bracket together with the
/// residual at that point.
pub(crate) fn bisect<F>(mut f: F, lo: f64, hi: f64, ftol: f64, max_iter: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok((a, 0.0));
    }
    if fb == 0.0 {
        return Ok((b, 0.0));
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NumericalFailure(format!(
            "no sign change on bracket [{lo}, {hi}]: f(lo) = {fa:e}, f(hi) = {fb:e}"
        )));
    }
    let mut best = (0.5 * (a + b), f64::INFINITY);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm.abs() < best.1.abs() {
            best = (m, fm);
        }
        if fm.abs() <= ftol || m <= a || m >= b {
            return Ok((m, fm));
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(best)
}
