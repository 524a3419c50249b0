//! Digamma, trigamma and the numerical inverse of trigamma.
//!
//! Both functions shift the argument upward with the recurrences
//! `ψ(x) = ψ(x+1) − 1/x` and `ψ₁(x) = ψ₁(x+1) + 1/x²` until it reaches the
//! asymptotic regime `x ≥ 6`, where the Bernoulli-number expansions are
//! truncated after the `x⁻¹⁴`-order term.

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// A finite, strictly positive real number.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(PositiveReal(value))
        } else {
            Err(Error::domain(format!(
                "expected a finite positive real, got {value}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PositiveReal {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        PositiveReal::new(value)
    }
}

impl From<PositiveReal> for f64 {
    fn from(value: PositiveReal) -> f64 {
        value.0
    }
}

/// Digamma function ψ(x) = d/dx ln Γ(x).
pub fn digamma(x: PositiveReal) -> f64 {
    digamma_raw(x.0)
}

/// Trigamma function ψ₁(x) = d²/dx² ln Γ(x).
pub fn trigamma(x: PositiveReal) -> f64 {
    trigamma_raw(x.0)
}

/// Solves `trigamma(α) = q` for α.
///
/// Safeguarded Newton iteration inside a bracket that is widened geometrically
/// from the starting guess; any Newton step leaving the bracket is replaced by
/// bisection.
pub fn inverse_trigamma(q: PositiveReal) -> PositiveReal {
    PositiveReal(inverse_trigamma_raw(q.0))
}

pub(crate) fn digamma_raw(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // −Σ B_{2k} / (2k x^{2k}), Horner in x⁻².
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - series
}

pub(crate) fn trigamma_raw(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Σ B_{2k} / x^{2k+1}
    let series = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2
                                * (1.0 / 30.0
                                    - inv2
                                        * (5.0 / 66.0
                                            - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    shift + inv + 0.5 * inv2 + series
}

/// ψ₂(x), only needed as the Newton derivative for [`inverse_trigamma`].
fn tetragamma_raw(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // −Σ (2k+1) B_{2k} / x^{2k+2}
    let series = inv2
        * inv2
        * (0.5
            - inv2
                * (1.0 / 6.0
                    - inv2
                        * (1.0 / 6.0
                            - inv2
                                * (3.0 / 10.0
                                    - inv2
                                        * (5.0 / 6.0
                                            - inv2 * (691.0 / 210.0 - inv2 * 35.0 / 2.0))))));
    shift - inv2 - inv2 * inv - series
}

pub(crate) fn inverse_trigamma_raw(q: f64) -> f64 {
    debug_assert!(q > 0.0);
    // ψ₁(α) ≈ 1/α + 1/(2α²) for large α and ≈ 1/α² for small α.
    let guess = if q <= 1.0 { 0.5 + 1.0 / q } else { 1.0 / q.sqrt() };

    let residual = |a: f64| trigamma_raw(a) - q;

    // Bracket [lo, hi] with residual(lo) > 0 > residual(hi).
    let (mut lo, mut hi);
    if residual(guess) > 0.0 {
        lo = guess;
        hi = guess * 2.0;
        while residual(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
    } else {
        hi = guess;
        lo = guess * 0.5;
        while residual(lo) < 0.0 {
            hi = lo;
            lo *= 0.5;
        }
    }

    let mut alpha = guess.clamp(lo, hi);
    for _ in 0..200 {
        let r = residual(alpha);
        if r == 0.0 {
            return alpha;
        }
        if r > 0.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        let newton = alpha - r / tetragamma_raw(alpha);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - alpha).abs();
        alpha = next;
        if step <= 1e-12 * alpha {
            // One extra Newton step once converged costs nothing and lands
            // on the rounding floor.
            let polished = alpha - residual(alpha) / tetragamma_raw(alpha);
            if polished > 0.0 && polished.is_finite() {
                alpha = polished;
            }
            break;
        }
    }
    alpha
}
