//! Scalar root finding: plain bisection and Newton safeguarded by a bracket.

use crate::error::{Error, Result};
use crate::fmath;

/// Bisection on `[lo, hi]` assuming `f(lo)` and `f(hi)` have opposite signs
/// (zero endpoint values count as roots). Runs until the bracket width is
/// below `xtol` or `max_iter` halvings, whichever comes first; deterministic.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::domain(alloc::format!(
            "bisection bracket [{lo}, {hi}] does not straddle a sign change (f = {flo}, {fhi})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Newton iteration on a smooth monotone function, safeguarded by a bracket:
/// any step leaving `[lo, hi]` (or with a tiny derivative) is replaced by a
/// bisection step, and the bracket is tightened from every evaluation.
///
/// `f` returns `(value, derivative)`. Converges when `|value| <= ftol` or the
/// bracket width drops below `xtol`.
pub fn newton_bisect<F: FnMut(f64) -> (f64, f64)>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<f64> {
    // Establish bracket orientation from the endpoints.
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::domain(alloc::format!(
            "newton bracket [{lo}, {hi}] does not straddle a sign change (f = {flo}, {fhi})"
        )));
    }
    let increasing = fhi > 0.0;
    let mut x = x0.clamp(lo, hi);
    for _ in 0..max_iter {
        let (v, d) = f(x);
        if fmath::abs(v) <= ftol {
            return Ok(x);
        }
        // Tighten the bracket with the fresh sample.
        if (v > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= xtol {
            return Ok(0.5 * (lo + hi));
        }
        let step_ok = d != 0.0 && d.is_finite();
        let mut xn = if step_ok { x - v / d } else { f64::NAN };
        if !xn.is_finite() || xn <= lo || xn >= hi {
            xn = 0.5 * (lo + hi);
        }
        x = xn;
    }
    Err(Error::non_convergence(alloc::format!(
        "newton_bisect: no root to tolerance after {max_iter} iterations (bracket [{lo}, {hi}])"
    )))
}
