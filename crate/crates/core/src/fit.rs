//! Pooled commutative update in coefficient space.
//!
//! Every person-interval record revises the moments of its own `η_{i,j}`
//! from `(f0, q0)` to `(f1, q1)`. Because `η_{i,j} = a'β` for a fixed row
//! `a`, the precision-pooled revision of `β` is
//!
//! ```text
//! P = C⁻¹ + Σ dP · a a',       dP = 1/q1 − 1/q0
//! b = C⁻¹ m + Σ db · a,        db = dP · f0 + (f1 − f0)/q1
//! ```
//!
//! with posterior covariance `P⁻¹` and mean `P⁻¹ b`. This is exactly the
//! Ω-space pooling of [`crate::bayes_linear::pool_naive`] but costs
//! `O((q+1)²)` per record plus one factorisation.

use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::bayes_linear::{pool_naive, symmetrize, KinematicSource};
use crate::error::{Error, Result};
use crate::guide::{GammaBelief, GuideMethod, LinkMoments};
use crate::hazard::{
    decompose, restricted_mean, survival_function, Dataset, IntervalGrid, IntervalObservation, Status,
    SurvivalRecord,
};
use crate::prior::{assemble_omega, beta_label, eta_label, CoefficientPrior, DesignMatrix, StationarySpec};

/// Rank-one contribution of one person-interval record.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationIncrement {
    pub individual: usize,
    pub interval: usize,
    /// `x_i`, including the leading 1.
    pub design: DVector<f64>,
    pub prior: LinkMoments,
    pub revised: LinkMoments,
    /// `dP = 1/q1 − 1/q0`.
    pub precision: f64,
    /// `db = dP · f0 + (f1 − f0)/q1`.
    pub information: f64,
}

impl ObservationIncrement {
    /// Dense row `a` with `η_{i,j} = a'β`.
    pub fn row(&self, intervals: usize) -> DVector<f64> {
        let dim = self.design.len();
        let mut a = DVector::zeros(intervals * dim);
        a.rows_mut(self.interval * dim, dim).copy_from(&self.design);
        a
    }
}

/// Revised guide moments of `η` after a conjugate update of its hazard.
///
/// Differences are formed directly so a censored record with tiny exposure
/// produces a correspondingly tiny shift, and a censored record leaves the
/// variance exactly unchanged.
pub fn revise(method: GuideMethod, prior: LinkMoments, death: bool, exposure: f64) -> Result<LinkMoments> {
    if !(exposure >= 0.0 && exposure.is_finite()) {
        return Err(Error::domain(format!("exposure must be finite and non-negative, got {exposure}")));
    }
    let alpha0 = method.h2_inverse(prior.q)?;
    let log_theta0 = method.h1(alpha0) - prior.f;
    let relative_exposure = exposure * (-log_theta0).exp();
    let (alpha1, q1) = if death {
        (alpha0 + 1.0, method.h2(alpha0 + 1.0))
    } else {
        (alpha0, prior.q)
    };
    let shape_shift = if death { method.h1(alpha1) - method.h1(alpha0) } else { 0.0 };
    let f1 = prior.f + shape_shift - relative_exposure.ln_1p();
    LinkMoments::new(f1, q1)
}

/// One increment per observation, in the order given.
pub fn increments(
    observations: &[IntervalObservation],
    design: &DesignMatrix,
    prior: &CoefficientPrior,
    method: GuideMethod,
) -> Result<Vec<ObservationIncrement>> {
    if design.dim() != prior.dim() {
        return Err(Error::Dimension {
            context: "design columns vs coefficients",
            expected: prior.dim(),
            actual: design.dim(),
        });
    }
    let mut seen = HashSet::with_capacity(observations.len());
    let blocks: Vec<(DVector<f64>, DMatrix<f64>)> = (0..prior.num_intervals())
        .map(|j| (prior.mean_block(j), prior.block(j, j)))
        .collect();
    observations
        .iter()
        .map(|obs| {
            if !seen.insert((obs.individual, obs.interval)) {
                return Err(Error::input(format!(
                    "individual {} has two observations in interval {}",
                    obs.individual, obs.interval
                )));
            }
            if obs.individual >= design.num_individuals() || obs.interval >= prior.num_intervals() {
                return Err(Error::input(format!(
                    "observation ({}, {}) is outside the design or grid",
                    obs.individual, obs.interval
                )));
            }
            let x = design.row(obs.individual);
            let (m, c) = &blocks[obs.interval];
            let f0 = x.dot(m);
            let q0 = (x.transpose() * c * &x)[(0, 0)];
            let prior_moments = LinkMoments::new(f0, q0)?;
            let revised = revise(method, prior_moments, obs.death, obs.exposure)?;
            let precision = 1.0 / revised.q - 1.0 / q0;
            let information = precision * f0 + (revised.f - f0) / revised.q;
            Ok(ObservationIncrement {
                individual: obs.individual,
                interval: obs.interval,
                design: x,
                prior: prior_moments,
                revised,
                precision,
                information,
            })
        })
        .collect()
}

/// Running sums of precision and information in coefficient space.
///
/// Increments are added in the order supplied; callers that need
/// bit-reproducible output must fix that order.
#[derive(Debug, Clone)]
pub struct Accumulator {
    dim: usize,
    precision: DMatrix<f64>,
    information: DVector<f64>,
}

impl Accumulator {
    pub fn new(prior: &CoefficientPrior) -> Result<Self> {
        let chol = Cholesky::new(prior.cov().clone())
            .ok_or_else(|| Error::Spec("coefficient prior covariance must be positive definite".into()))?;
        let information = chol.solve(prior.mean());
        let precision = symmetrize(chol.inverse());
        Ok(Accumulator {
            dim: prior.dim(),
            precision,
            information,
        })
    }

    pub fn add(&mut self, inc: &ObservationIncrement) {
        let offset = inc.interval * self.dim;
        let x = &inc.design;
        for a in 0..self.dim {
            self.information[offset + a] += inc.information * x[a];
            for b in 0..self.dim {
                self.precision[(offset + a, offset + b)] += inc.precision * x[a] * x[b];
            }
        }
    }

    /// Posterior `(mean, covariance)` of the stacked coefficients.
    pub fn finish(self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = Cholesky::new(self.precision).ok_or_else(|| {
            Error::PoolingValidity("pooled coefficient precision is not positive definite".into())
        })?;
        let mean = chol.solve(&self.information);
        Ok((mean, symmetrize(chol.inverse())))
    }
}

/// Pooled posterior of the coefficients, summing increments sorted by
/// `(individual, interval)`.
pub fn pool_fast(prior: &CoefficientPrior, increments: &[ObservationIncrement]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut order: Vec<&ObservationIncrement> = increments.iter().collect();
    order.sort_by_key(|inc| (inc.individual, inc.interval));
    let mut acc = Accumulator::new(prior)?;
    for inc in order {
        acc.add(inc);
    }
    acc.finish()
}

/// Adjusted moments of one person-interval log-hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedEta {
    pub id: String,
    pub individual: usize,
    pub interval: usize,
    pub moments: LinkMoments,
    pub belief: GammaBelief,
}

/// Posterior coefficient moments and the adjusted per-record hazards.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub grid: IntervalGrid,
    pub method: GuideMethod,
    /// `baseline` followed by the covariate names.
    pub coefficient_names: Vec<String>,
    pub prior: CoefficientPrior,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// One entry per observed person-interval, sorted by `(individual, interval)`.
    pub eta: Vec<AdjustedEta>,
}

impl PosteriorSummary {
    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn num_intervals(&self) -> usize {
        self.prior.num_intervals()
    }

    pub fn coef_mean(&self, interval: usize, coefficient: usize) -> f64 {
        self.mean[interval * self.dim() + coefficient]
    }

    pub fn coef_sd(&self, interval: usize, coefficient: usize) -> f64 {
        let k = interval * self.dim() + coefficient;
        self.cov[(k, k)].max(0.0).sqrt()
    }

    /// Posterior means as an `r × (q+1)` matrix.
    pub fn coef_means(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_intervals(), self.dim(), |j, k| self.coef_mean(j, k))
    }

    /// Posterior standard deviations as an `r × (q+1)` matrix.
    pub fn coef_sds(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_intervals(), self.dim(), |j, k| self.coef_sd(j, k))
    }

    pub fn prior_sd(&self, interval: usize, coefficient: usize) -> f64 {
        let k = interval * self.dim() + coefficient;
        self.prior.cov()[(k, k)].sqrt()
    }

    /// Adjusted `(f, q)` of `x'β_j` for an arbitrary covariate vector.
    pub fn linear_predictor(&self, covariates: &[f64], interval: usize) -> Result<LinkMoments> {
        let dim = self.dim();
        if covariates.len() + 1 != dim {
            return Err(Error::Dimension {
                context: "covariates for prediction",
                expected: dim - 1,
                actual: covariates.len(),
            });
        }
        let x = DVector::from_iterator(dim, std::iter::once(1.0).chain(covariates.iter().copied()));
        Ok(moments_of(&x, interval, &self.mean, &self.cov))
    }
}

/// Fit result plus any non-fatal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub summary: PosteriorSummary,
    pub warnings: Vec<String>,
}

/// Fit under a stationary prior.
pub fn fit(dataset: &Dataset, grid: &IntervalGrid, spec: &StationarySpec, method: GuideMethod) -> Result<FitOutput> {
    let prior = spec.coefficient_prior(grid.num_intervals())?;
    fit_with_prior(dataset, grid, &prior, method)
}

/// Fit under an arbitrary coefficient prior using the coefficient-space
/// update.
pub fn fit_with_prior(
    dataset: &Dataset,
    grid: &IntervalGrid,
    prior: &CoefficientPrior,
    method: GuideMethod,
) -> Result<FitOutput> {
    let problem = Problem::new(dataset, grid, prior)?;
    let incs = increments(&problem.observations, &problem.design, prior, method)?;
    let (mean, cov) = pool_fast(prior, &incs)?;
    problem.finish(method, mean, cov)
}

/// Fit by explicit pooling over `(η, β)`; cubic in the number of records and
/// intended only for cross-checking small problems.
pub fn fit_naive(
    dataset: &Dataset,
    grid: &IntervalGrid,
    prior: &CoefficientPrior,
    method: GuideMethod,
) -> Result<FitOutput> {
    let problem = Problem::new(dataset, grid, prior)?;
    let incs = increments(&problem.observations, &problem.design, prior, method)?;
    let omega = assemble_omega(prior, &problem.design)?;
    let sources = incs
        .iter()
        .map(|inc| {
            KinematicSource::new(
                eta_label(inc.individual, inc.interval),
                inc.prior.f,
                inc.prior.q,
                inc.revised.f,
                inc.revised.q,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = pool_naive(&omega, &sources)?;
    let r = prior.num_intervals();
    let dim = prior.dim();
    let idx = (0..r)
        .flat_map(|j| (0..dim).map(move |k| beta_label(j, k)))
        .map(|l| pooled.index_of(&l))
        .collect::<Result<Vec<_>>>()?;
    let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| pooled.mean()[i]));
    let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| pooled.cov()[(idx[a], idx[b])]);
    problem.finish(method, mean, cov)
}

/// Records in canonical order with their design and observations.
struct Problem<'a> {
    grid: &'a IntervalGrid,
    prior: &'a CoefficientPrior,
    ids: Vec<String>,
    names: Vec<String>,
    design: DesignMatrix,
    observations: Vec<IntervalObservation>,
    warnings: Vec<String>,
}

impl<'a> Problem<'a> {
    fn new(dataset: &Dataset, grid: &'a IntervalGrid, prior: &'a CoefficientPrior) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::input("dataset has no records"));
        }
        if prior.num_intervals() != grid.num_intervals() {
            return Err(Error::Dimension {
                context: "prior intervals vs grid intervals",
                expected: grid.num_intervals(),
                actual: prior.num_intervals(),
            });
        }
        if prior.dim() != dataset.num_covariates() + 1 {
            return Err(Error::Dimension {
                context: "prior coefficients vs dataset covariates plus baseline",
                expected: dataset.num_covariates() + 1,
                actual: prior.dim(),
            });
        }
        let mut warnings = Vec::new();
        if dataset.num_deaths() == 0 {
            warnings.push(
                "dataset contains no deaths; the pooled update is not guaranteed to be unique".to_string(),
            );
        }
        let records: Vec<&SurvivalRecord> = dataset.canonical_records();
        let design = DesignMatrix::from_dataset(dataset)?;
        let observations = records
            .iter()
            .enumerate()
            .flat_map(|(i, rec)| decompose(i, rec, grid))
            .collect();
        let names = std::iter::once("baseline".to_string())
            .chain(dataset.covariate_names().iter().cloned())
            .collect();
        Ok(Problem {
            grid,
            prior,
            ids: records.iter().map(|r| r.id.clone()).collect(),
            names,
            design,
            observations,
            warnings,
        })
    }

    fn finish(self, method: GuideMethod, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<FitOutput> {
        let eta = self
            .observations
            .iter()
            .map(|obs| {
                let x = self.design.row(obs.individual);
                let moments = moments_of(&x, obs.interval, &mean, &cov);
                Ok(AdjustedEta {
                    id: self.ids[obs.individual].clone(),
                    individual: obs.individual,
                    interval: obs.interval,
                    moments,
                    belief: method.inverse(moments)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FitOutput {
            summary: PosteriorSummary {
                grid: self.grid.clone(),
                method,
                coefficient_names: self.names,
                prior: self.prior.clone(),
                mean,
                cov,
                eta,
            },
            warnings: self.warnings,
        })
    }
}

fn moments_of(x: &DVector<f64>, interval: usize, mean: &DVector<f64>, cov: &DMatrix<f64>) -> LinkMoments {
    let dim = x.len();
    let off = interval * dim;
    let f = x.dot(&mean.rows(off, dim));
    let q = (x.transpose() * cov.view((off, off), (dim, dim)) * x)[(0, 0)];
    LinkMoments { f, q: q.max(0.0) }
}

/// How a log-hazard distribution is turned into a single hazard value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlugIn {
    /// `exp(f + q/2)`, the mean of a lognormal hazard.
    #[default]
    LognormalMean,
    /// `exp(f)`, its median.
    Median,
}

/// Plug-in survival probability with a band from shifting every interval's
/// log-hazard by two adjusted standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalPrediction {
    pub survival: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn predict_survival(
    summary: &PosteriorSummary,
    covariates: &[f64],
    t: f64,
    plug_in: PlugIn,
) -> Result<SurvivalPrediction> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    let moments = (0..summary.num_intervals())
        .map(|j| summary.linear_predictor(covariates, j))
        .collect::<Result<Vec<_>>>()?;
    let hazards = |shift: f64| -> Vec<f64> {
        moments
            .iter()
            .map(|m| {
                let centre = match plug_in {
                    PlugIn::LognormalMean => m.f + 0.5 * m.q,
                    PlugIn::Median => m.f,
                };
                (centre + shift * m.q.sqrt()).exp()
            })
            .collect()
    };
    Ok(SurvivalPrediction {
        survival: survival_function(&summary.grid, &hazards(0.0), t)?,
        lower: survival_function(&summary.grid, &hazards(2.0), t)?,
        upper: survival_function(&summary.grid, &hazards(-2.0), t)?,
    })
}

/// Simulates a piecewise-exponential cohort with i.i.d. standard normal
/// covariates named `x1..xq`.
pub fn simulate_cohort(
    grid: &IntervalGrid,
    truth: &DMatrix<f64>,
    n: usize,
    censoring_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    let q = truth.ncols().saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let covariates = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    simulate_with(grid, truth, &covariates, censoring_rate, &mut rng)
}

/// Simulates survival times for given covariates.
///
/// `truth` holds `β_j'` as row `j`. Censoring times are independent
/// `U(0, c)` with `c` chosen so that the expected censored fraction over the
/// cohort equals `censoring_rate`; a rate of 0 censors nobody.
pub fn simulate(
    grid: &IntervalGrid,
    truth: &DMatrix<f64>,
    covariates: &DMatrix<f64>,
    censoring_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(grid, truth, covariates, censoring_rate, &mut rng)
}

fn simulate_with(
    grid: &IntervalGrid,
    truth: &DMatrix<f64>,
    covariates: &DMatrix<f64>,
    censoring_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let r = grid.num_intervals();
    if truth.nrows() != r {
        return Err(Error::Dimension {
            context: "rows of the true coefficient matrix",
            expected: r,
            actual: truth.nrows(),
        });
    }
    if truth.ncols() != covariates.ncols() + 1 {
        return Err(Error::Dimension {
            context: "columns of the true coefficient matrix",
            expected: covariates.ncols() + 1,
            actual: truth.ncols(),
        });
    }
    if !(0.0..1.0).contains(&censoring_rate) {
        return Err(Error::domain(format!("censoring rate must lie in [0, 1), got {censoring_rate}")));
    }
    let hazards: Vec<Vec<f64>> = covariates
        .row_iter()
        .map(|row| {
            (0..r)
                .map(|j| {
                    let eta = truth[(j, 0)] + (0..row.len()).map(|k| truth[(j, k + 1)] * row[k]).sum::<f64>();
                    eta.exp()
                })
                .collect()
        })
        .collect();
    for h in &hazards {
        if h.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::domain("simulated hazards must be positive and finite"));
        }
    }
    let horizon = if censoring_rate > 0.0 && !hazards.is_empty() {
        Some(censoring_horizon(grid, &hazards, censoring_rate)?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(hazards.len());
    for (i, h) in hazards.iter().enumerate() {
        let event = sample_time(grid, h, rng.sample(Exp1));
        let censor = horizon.map(|c| c * rng.random::<f64>());
        let (time, status) = match censor {
            Some(c) if c < event => (c, Status::Censored),
            _ => (event, Status::Death),
        };
        let covs = covariates.row(i).iter().copied().collect();
        records.push(SurvivalRecord::new((i + 1).to_string(), time, status, covs)?);
    }
    let names = (1..=covariates.ncols()).map(|k| format!("x{k}")).collect();
    Dataset::new(names, records)
}

/// Inverts `H(t) = target` for a piecewise-constant hazard.
fn sample_time(grid: &IntervalGrid, hazards: &[f64], target: f64) -> f64 {
    let mut remaining = target;
    let last = grid.num_intervals() - 1;
    for (j, &lam) in hazards.iter().enumerate() {
        if j == last {
            break;
        }
        let cap = lam * grid.length(j);
        if remaining < cap {
            return grid.lower(j) + remaining / lam;
        }
        remaining -= cap;
    }
    grid.lower(last) + remaining / hazards[last]
}

/// Upper limit `c` of uniform censoring with `mean_i ∫₀^c S_i / c = rate`.
fn censoring_horizon(grid: &IntervalGrid, hazards: &[Vec<f64>], rate: f64) -> Result<f64> {
    let censored_fraction = |c: f64| -> Result<f64> {
        let mut total = 0.0;
        for h in hazards {
            total += restricted_mean(grid, h, c)?;
        }
        Ok(total / (c * hazards.len() as f64))
    };
    // fraction decreases from 1 (c → 0) to 0 (c → ∞)
    let mut lo = 1.0;
    while censored_fraction(lo)? < rate {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::domain("cannot reach the requested censoring rate"));
        }
    }
    let mut hi = lo * 2.0;
    while censored_fraction(hi)? > rate {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::domain("cannot reach the requested censoring rate"));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if censored_fraction(mid)? > rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}
