//! Prior moments for coefficients from hazard-ratio judgements.
//!
//! A judgement states that moving covariate `k` by `Δx` multiplies the
//! hazard by a factor lying in `(low, high)` with about 95% probability.
//! Treating that as `mean ± 2 sd` of `Δx · β_k` on the log scale gives the
//! coefficient's prior mean and variance.

use crate::error::{Error, Result};

/// Central 95% range for the hazard ratio caused by a covariate change.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioJudgement {
    pub coefficient: usize,
    pub delta_x: f64,
    pub low: f64,
    pub high: f64,
}

impl RatioJudgement {
    pub fn new(coefficient: usize, delta_x: f64, low: f64, high: f64) -> Result<Self> {
        if !(delta_x.is_finite() && delta_x != 0.0) {
            return Err(Error::domain(format!("covariate gap must be finite and non-zero, got {delta_x}")));
        }
        check_range(low, high, "hazard ratio")?;
        Ok(RatioJudgement {
            coefficient,
            delta_x,
            low,
            high,
        })
    }
}

/// Prior mean and variance of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientMoments {
    pub mean: f64,
    pub sd: f64,
}

impl CoefficientMoments {
    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

/// `mean = (ln low + ln high) / (2Δx)`, `sd = (ln high − ln low) / (4|Δx|)`.
pub fn moments_from_ratios(j: &RatioJudgement) -> Result<CoefficientMoments> {
    check_range(j.low, j.high, "hazard ratio")?;
    let (ll, lh) = (j.low.ln(), j.high.ln());
    Ok(CoefficientMoments {
        mean: (ll + lh) / (2.0 * j.delta_x),
        sd: (lh - ll) / (4.0 * j.delta_x.abs()),
    })
}

/// Hazard ratio `h_i / h_j` implied by the probability that `i` dies first.
pub fn partial_likelihood_to_ratio(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(p / (1.0 - p))
}

/// Probability that `i` dies first given the hazard ratio `h_i / h_j`.
pub fn ratio_to_partial_likelihood(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::domain(format!("hazard ratio must be positive and finite, got {ratio}")));
    }
    Ok(ratio / (1.0 + ratio))
}

/// Baseline coefficient moments from a central 95% range for the mean
/// lifetime under a constant hazard (`β₀ = −ln mean lifetime`).
pub fn baseline_range(low: f64, high: f64) -> Result<CoefficientMoments> {
    check_range(low, high, "mean lifetime")?;
    let (ll, lh) = (low.ln(), high.ln());
    Ok(CoefficientMoments {
        mean: -(ll + lh) / 2.0,
        sd: (lh - ll) / 4.0,
    })
}

fn check_range(low: f64, high: f64, what: &str) -> Result<()> {
    if !(low > 0.0 && low.is_finite() && high.is_finite() && low < high) {
        return Err(Error::domain(format!(
            "{what} range needs 0 < low < high, got ({low}, {high})"
        )));
    }
    Ok(())
}
