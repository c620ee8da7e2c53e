//! Erlang-B blocking probability.
//!
//! Integer server counts go through the forward recursion on `1/B`,
//! switching to log space once the reciprocal leaves double range, so
//! `B(M, a)` stays finite and accurate for any `M` the solvers use.
//! Real-valued server counts use the integral form
//! `1/B(k, a) = a ∫₀^∞ (1+t)^k e^{-at} dt`.

use crate::error::{Error, Result};
use crate::quadrature;

/// Offered load in Erlangs (`λ/μ`).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct OfferedLoad(f64);

impl OfferedLoad {
    pub fn new(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain(format!(
                "offered load must be finite, got {a}"
            )));
        }
        if a < 0.0 {
            return Err(Error::Domain(format!(
                "offered load must be non-negative, got {a}"
            )));
        }
        Ok(OfferedLoad(a))
    }

    pub fn from_rate(lambda: f64, mu: f64) -> Result<Self> {
        OfferedLoad::new(lambda / mu)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `B(M, a)` for an integer number of servers.
///
/// `B(0, a) = 1` for every `a` (including the `a = 0` limit) and `B(M, 0) = 0`
/// for `M ≥ 1`.
pub fn erlang_b(servers: u32, load: OfferedLoad) -> f64 {
    let a = load.value();
    if servers == 0 {
        return 1.0;
    }
    if a == 0.0 {
        return 0.0;
    }
    (-ln_inverse(servers, a)).exp()
}

/// `ln B(M, a)`, accurate where `B` itself underflows.
pub fn erlang_b_ln(servers: u32, load: OfferedLoad) -> f64 {
    ln_erlang_b(servers, load.value())
}

/// `ln B(M, a)`; `-∞` when the system never blocks.
pub(crate) fn ln_erlang_b(servers: u32, a: f64) -> f64 {
    if servers == 0 {
        return 0.0;
    }
    if a <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -ln_inverse(servers, a)
}

/// `ln(1/B(M, a))` for `a > 0`.
fn ln_inverse(servers: u32, a: f64) -> f64 {
    let mut inv = 1.0f64;
    let mut m = 1u32;
    while m <= servers {
        let next = 1.0 + (f64::from(m) / a) * inv;
        if !(next < 1e300) {
            break;
        }
        inv = next;
        m += 1;
    }
    let mut ln_inv = inv.ln();
    let ln_a = a.ln();
    while m <= servers {
        // ln(1 + e^x) with x = ln(m/a) + ln_inv, x is large here
        let x = f64::from(m).ln() - ln_a + ln_inv;
        ln_inv = x + (-x).exp().ln_1p();
        m += 1;
    }
    ln_inv
}

/// `B(k, a)` for a real number of servers `k ≥ 0`.
///
/// Agrees with [`erlang_b`] at integer `k`. The `a = 0` corner follows the
/// integer convention: `1` when `k = 0`, otherwise `0`.
pub fn erlang_b_real(servers: f64, load: OfferedLoad) -> Result<f64> {
    Ok(ln_erlang_b_real(servers, load.value())?.exp())
}

/// `ln B(k, a)` for real `k ≥ 0`, `a ≥ 0`.
pub(crate) fn ln_erlang_b_real(k: f64, a: f64) -> Result<f64> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::Domain(format!(
            "server count must be finite and non-negative, got {k}"
        )));
    }
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::Domain(format!(
            "offered load must be finite and non-negative, got {a}"
        )));
    }
    if a == 0.0 {
        return Ok(if k == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    Ok(-ln_reciprocal_integral(k, a))
}

/// `ln R(k, a)` with `R(k, a) = a ∫₀^∞ (1+t)^k e^{-at} dt`.
///
/// The integrand is rescaled by its peak value so that neither overflow
/// (light traffic, huge `R`) nor underflow occurs.
fn ln_reciprocal_integral(k: f64, a: f64) -> f64 {
    // ln of the integrand: g(t) = k ln(1+t) - a t, maximised at t* = max(0, k/a - 1)
    let g = |t: f64| k * t.ln_1p() - a * t;
    let peak = (k / a - 1.0).max(0.0);
    let g_peak = g(peak);
    // integrand below 1e-18 of the peak is dropped
    const CUTOFF: f64 = -41.5;

    let mut right = (1.0 / a).max(peak.sqrt() * 1e-3);
    while g(peak + right) - g_peak > CUTOFF {
        right *= 2.0;
    }
    let hi = peak + right;

    let lo = if peak > 0.0 && g(0.0) - g_peak < CUTOFF {
        let mut left = (1.0 / a).min(peak);
        while left < peak && g(peak - left) - g_peak > CUTOFF {
            left = (2.0 * left).min(peak);
        }
        peak - left
    } else {
        0.0
    };

    let f = |t: f64| (g(t) - g_peak).exp();
    let mut integral = 0.0;
    if peak > lo {
        integral += quadrature::integrate(f, lo, peak, 1e-14 * (peak - lo).max(1e-300), 8).0;
    }
    integral += quadrature::integrate(f, peak, hi, 1e-14 * (hi - peak), 8).0;
    a.ln() + g_peak + integral.ln()
}
