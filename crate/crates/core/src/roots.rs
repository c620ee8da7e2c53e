//! Bracketed root finding for strictly increasing functions.
//!
//! The bracket `[lo, hi]` with `f(lo) < 0 < f(hi)` is maintained at every
//! step. When a derivative is available a Newton step is tried first and
//! accepted only if it lands strictly inside the current bracket; otherwise
//! the bracket is bisected.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    /// Stop once `hi - lo` falls below this.
    pub x_tol: f64,
    /// Stop once `|f(x)|` falls below this.
    pub f_tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Finds the zero of an increasing `f` in `[lo, hi]`.
///
/// `f` returns `(value, derivative)`; a non-finite or non-positive derivative
/// disables the Newton step for that iteration.
pub fn find_increasing<F>(
    method: &'static str,
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: Tolerance,
) -> Result<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    debug_assert!(lo <= hi);
    let (f_lo, _) = f(lo);
    if f_lo >= 0.0 {
        return Ok(Root {
            x: lo,
            fx: f_lo,
            iterations: 0,
        });
    }
    let (f_hi, _) = f(hi);
    if f_hi <= 0.0 {
        return Ok(Root {
            x: hi,
            fx: f_hi,
            iterations: 0,
        });
    }
    let mut x = 0.5 * (lo + hi);
    let (mut fx, mut dfx) = f(x);
    for it in 1..=tol.max_iter {
        if fx == 0.0 || fx.abs() <= tol.f_tol {
            return Ok(Root {
                x,
                fx,
                iterations: it,
            });
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= tol.x_tol {
            return Ok(Root {
                x,
                fx,
                iterations: it,
            });
        }
        let newton = x - fx / dfx;
        let next = if dfx.is_finite() && dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next <= lo || next >= hi {
            // bracket exhausted at double precision
            return Ok(Root {
                x,
                fx,
                iterations: it,
            });
        }
        x = next;
        (fx, dfx) = f(x);
    }
    Err(Error::NonConvergence {
        method,
        iterations: tol.max_iter,
        residual: fx.abs(),
    })
}
