//! The guide relationship `log λ ≈ η`.
//!
//! A gamma belief `λ ~ Ga(α, θ)` (shape α, rate θ) is summarised by the mean
//! `f` and variance `q` of the log-hazard `η`. For every method
//!
//! ```text
//! f = h₁(α) − ln θ,    q = h₂(α)
//! ```
//!
//! | method      | h₁(α)              | h₂(α)          |
//! |-------------|--------------------|----------------|
//! | log-moment  | ψ(α)               | ψ₁(α)          |
//! | log-mode    | ln α               | 1/α            |
//! | lognormal   | ln[α √(α/(α+1))]   | ln(1 + 1/α)    |
//!
//! `h₂` is strictly decreasing in all three cases, so a death (α → α+1)
//! strictly shrinks `q` and a survival or censoring leaves it unchanged.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::specfun::{digamma_raw, inverse_trigamma_raw, trigamma_raw};

/// Which pair of moment functions links a gamma belief to `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GuideMethod {
    /// Mean and variance of `ln λ`.
    LogMoment,
    /// Mode and inverse curvature of the log-density of `ln λ`.
    #[default]
    LogMode,
    /// Lognormal with the same mean and variance as the gamma.
    Lognormal,
}

impl GuideMethod {
    pub const ALL: [GuideMethod; 3] = [
        GuideMethod::LogMoment,
        GuideMethod::LogMode,
        GuideMethod::Lognormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GuideMethod::LogMoment => "log-moment",
            GuideMethod::LogMode => "log-mode",
            GuideMethod::Lognormal => "lognormal",
        }
    }

    pub fn h1(self, alpha: f64) -> f64 {
        match self {
            GuideMethod::LogMoment => digamma_raw(alpha),
            GuideMethod::LogMode => alpha.ln(),
            GuideMethod::Lognormal => alpha.ln() - 0.5 * (1.0 / alpha).ln_1p(),
        }
    }

    pub fn h2(self, alpha: f64) -> f64 {
        match self {
            GuideMethod::LogMoment => trigamma_raw(alpha),
            GuideMethod::LogMode => 1.0 / alpha,
            GuideMethod::Lognormal => (1.0 / alpha).ln_1p(),
        }
    }

    /// `h₂⁻¹(q)`; every method maps (0, ∞) onto (0, ∞).
    pub fn h2_inverse(self, q: f64) -> Result<f64> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::domain(format!(
                "variance of eta must be finite and positive, got {q}"
            )));
        }
        let alpha = match self {
            GuideMethod::LogMoment => inverse_trigamma_raw(q),
            GuideMethod::LogMode => 1.0 / q,
            GuideMethod::Lognormal => 1.0 / q.exp_m1(),
        };
        if alpha.is_finite() && alpha > 0.0 {
            Ok(alpha)
        } else {
            Err(Error::domain(format!(
                "variance {q} maps outside the representable shape range"
            )))
        }
    }

    /// Moments of `η` implied by a gamma belief.
    pub fn forward(self, belief: GammaBelief) -> LinkMoments {
        LinkMoments {
            f: self.h1(belief.alpha) - belief.theta.ln(),
            q: self.h2(belief.alpha),
        }
    }

    /// Gamma belief whose guide moments are `m`.
    pub fn inverse(self, m: LinkMoments) -> Result<GammaBelief> {
        let alpha = self.h2_inverse(m.q)?;
        let theta = (self.h1(alpha) - m.f).exp();
        GammaBelief::new(alpha, theta)
    }

    /// Conjugate update from a single person-interval record, returning the
    /// posterior belief and its guide moments.
    pub fn observe(
        self,
        prior: GammaBelief,
        death: bool,
        exposure: f64,
    ) -> Result<(GammaBelief, LinkMoments)> {
        let posterior = prior.observe(death, exposure)?;
        Ok((posterior, self.forward(posterior)))
    }
}

impl fmt::Display for GuideMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuideMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-moment" => Ok(GuideMethod::LogMoment),
            "log-mode" => Ok(GuideMethod::LogMode),
            "lognormal" => Ok(GuideMethod::Lognormal),
            other => Err(Error::input(format!(
                "unknown guide method `{other}` (expected log-moment, log-mode or lognormal)"
            ))),
        }
    }
}

/// `λ ~ Ga(alpha, theta)` with shape `alpha` and rate `theta` (1/time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBelief {
    alpha: f64,
    theta: f64,
}

impl GammaBelief {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain(format!("gamma shape must be positive, got {alpha}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::domain(format!("gamma rate must be positive, got {theta}")));
        }
        Ok(GammaBelief { alpha, theta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / self.theta
    }

    pub fn variance(&self) -> f64 {
        self.alpha / (self.theta * self.theta)
    }

    pub fn sd(&self) -> f64 {
        self.alpha.sqrt() / self.theta
    }

    /// `Ga(α + δ, θ + exposure)`.
    pub fn observe(&self, death: bool, exposure: f64) -> Result<Self> {
        if !(exposure.is_finite() && exposure >= 0.0) {
            return Err(Error::domain(format!(
                "exposure must be finite and non-negative, got {exposure}"
            )));
        }
        GammaBelief::new(
            self.alpha + if death { 1.0 } else { 0.0 },
            self.theta + exposure,
        )
    }
}

/// Mean `f` and variance `q` of a guide quantity `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMoments {
    pub f: f64,
    pub q: f64,
}

impl LinkMoments {
    pub fn new(f: f64, q: f64) -> Result<Self> {
        if !f.is_finite() {
            return Err(Error::domain(format!("mean of eta must be finite, got {f}")));
        }
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::domain(format!("variance of eta must be positive, got {q}")));
        }
        Ok(LinkMoments { f, q })
    }
}
