//! Commutative Bayes linear kinematic inference for dynamic survival models.
//!
//! Each individual's hazard in each interval of a piecewise-constant hazard
//! model receives a conjugate gamma update from its own death/exposure
//! record. The revision is mapped onto the log-hazard `η = x'β` through a
//! guide relationship and propagated to every other individual, interval and
//! coefficient through a temporally correlated second-order prior over the
//! coefficient vectors `β_1, …, β_r`. Pooling all sources with the
//! precision-additive commutative rule makes the result independent of the
//! order in which observations are processed.
//!
//! Module map:
//!
//! - [`specfun`]: digamma, trigamma and inverse trigamma.
//! - [`guide`]: gamma beliefs ↔ moments of `η` for the three guide methods.
//! - [`hazard`]: time partition, per-interval sufficient statistics and the
//!   piecewise hazard probability kit.
//! - [`bayes_linear`]: second-order specifications, adjustment, kinematic
//!   updates and the Ω-space commutative pooling used as an exactness oracle.
//! - [`prior`]: the dynamic coefficient prior and the induced moments of `η`.
//! - [`fit`]: the production β-space pooled update, prediction and simulation.
//! - [`elicit`]: prior moments from hazard-ratio judgements.
//! - [`oracle`]: full-Bayes references (quadrature and MCMC) for validation.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes_linear;
pub mod elicit;
pub mod error;
pub mod fit;
pub mod guide;
pub mod hazard;
pub mod oracle;
pub mod prior;
pub mod specfun;

pub use error::{Error, Result};
pub use guide::{GammaBelief, GuideMethod, LinkMoments};
pub use hazard::{Dataset, IntervalGrid, IntervalObservation, Status, SurvivalRecord};
