//! Full-Bayes reference computations used to validate the Bayes linear fit.
//!
//! Two tools live here:
//!
//! - a two-hazard study where a single record on `λ₁` informs a correlated
//!   `λ₂`. The full-Bayes answer comes from tensor-product Gauss–Hermite
//!   quadrature under a bivariate normal prior on the log-hazards, matched to
//!   the gamma moments. The Bayes linear answers come from a single kinematic
//!   update on either the log scale or the hazard scale.
//! - an adaptive random-walk Metropolis sampler for small piecewise-hazard
//!   models with a multivariate normal coefficient prior.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bayes_linear::{kinematic_single, symmetrize, KinematicSource, SecondOrderSpec};
use crate::error::{Error, Result};
use crate::fit::revise;
use crate::guide::{GammaBelief, GuideMethod, LinkMoments};
use crate::hazard::{decompose, Dataset, IntervalGrid, IntervalObservation};
use crate::prior::{CoefficientPrior, DesignMatrix};

/// Nodes and weights of `n`-point Gauss–Hermite quadrature for
/// `∫ g(x) e^{−x²} dx`, nodes in decreasing order.
///
/// Nodes start from the eigenvalues of the Jacobi matrix and are polished
/// by Newton steps on the orthonormal Hermite recurrence, which also yields
/// weights accurate to full relative precision in the tails.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = nalgebra::SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    guesses.sort_by(|a, b| b.total_cmp(a));
    let nf = n as f64;
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for mut z in guesses {
        let mut pp = 0.0;
        for _ in 0..20 {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x.push(z);
        w.push(2.0 / (pp * pp));
    }
    (x, w)
}

/// Posterior mean and standard deviation of a hazard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardMoments {
    pub mean: f64,
    pub sd: f64,
}

impl From<GammaBelief> for HazardMoments {
    fn from(b: GammaBelief) -> Self {
        HazardMoments {
            mean: b.mean(),
            sd: b.sd(),
        }
    }
}

/// Two correlated hazards and one record `(δ, t)` on the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoHazardScenario {
    pub observed: GammaBelief,
    pub target: GammaBelief,
    /// Correlation between the two log-hazards (or hazards, for the
    /// identity link).
    pub correlation: f64,
    pub death: bool,
    pub time: f64,
}

impl TwoHazardScenario {
    pub fn new(observed: GammaBelief, target: GammaBelief, correlation: f64, death: bool, time: f64) -> Result<Self> {
        if !(correlation > -1.0 && correlation < 1.0) {
            return Err(Error::domain(format!("correlation must lie in (−1, 1), got {correlation}")));
        }
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::domain(format!("exposure must be finite and non-negative, got {time}")));
        }
        Ok(TwoHazardScenario {
            observed,
            target,
            correlation,
            death,
            time,
        })
    }

    /// Both hazards `Ga(α, α)` (prior mean 1) with a record at
    /// `t = 1/(1 + 1/√α)`, one over the prior mean plus one prior sd.
    pub fn unit_mean(alpha: f64, correlation: f64, death: bool) -> Result<Self> {
        let prior = GammaBelief::new(alpha, alpha)?;
        let time = 1.0 / (prior.mean() + prior.sd());
        TwoHazardScenario::new(prior, prior, correlation, death, time)
    }
}

const QUADRATURE_NODES: usize = 64;
const QUADRATURE_TOLERANCE: f64 = 1e-5;

/// Full-Bayes posterior moments of `λ₂` under the lognormal-matched
/// bivariate prior, checked against a grid with twice the nodes.
pub fn full_bayes_quadrature(s: &TwoHazardScenario) -> Result<HazardMoments> {
    let coarse = quadrature_moments(s, QUADRATURE_NODES);
    let fine = quadrature_moments(s, 2 * QUADRATURE_NODES);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let (dm, ds) = (rel(coarse.mean, fine.mean), rel(coarse.sd, fine.sd));
    if !(dm <= QUADRATURE_TOLERANCE && ds <= QUADRATURE_TOLERANCE) {
        return Err(Error::Accuracy(format!(
            "quadrature refinement changed the posterior by {:.3e} (mean) and {:.3e} (sd)",
            dm, ds
        )));
    }
    Ok(fine)
}

/// Log-scale mean and sd of a lognormal with the gamma's mean and variance.
fn lognormal_match(b: GammaBelief) -> (f64, f64) {
    let var = (1.0 / b.alpha()).ln_1p();
    (b.mean().ln() - 0.5 * var, var.sqrt())
}

fn quadrature_moments(s: &TwoHazardScenario, n: usize) -> HazardMoments {
    let (x, w) = gauss_hermite(n);
    let (mu1, s1) = lognormal_match(s.observed);
    let (mu2, s2) = lognormal_match(s.target);
    let r = s.correlation;
    let root = (1.0 - r * r).sqrt();
    let delta = if s.death { 1.0 } else { 0.0 };
    let mut log_terms = Vec::with_capacity(n * n);
    for a in 0..n {
        let z1 = std::f64::consts::SQRT_2 * x[a];
        let eta1 = mu1 + s1 * z1;
        let loglik = delta * eta1 - eta1.exp() * s.time;
        for b in 0..n {
            let z2 = std::f64::consts::SQRT_2 * x[b];
            let eta2 = mu2 + s2 * (r * z1 + root * z2);
            log_terms.push((w[a].ln() + w[b].ln() + loglik, eta2));
        }
    }
    let max = log_terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for &(lw, eta2) in &log_terms {
        let weight = (lw - max).exp();
        let lam = eta2.exp();
        z += weight;
        m1 += weight * lam;
        m2 += weight * lam * lam;
    }
    let mean = m1 / z;
    HazardMoments {
        mean,
        sd: (m2 / z - mean * mean).max(0.0).sqrt(),
    }
}

/// Kinematic update on the log-hazard scale; returns the adjusted gamma
/// belief for `λ₂`.
pub fn blk_log_link(method: GuideMethod, s: &TwoHazardScenario) -> Result<GammaBelief> {
    let m1 = method.forward(s.observed);
    let m2 = method.forward(s.target);
    let spec = pair_spec(["eta1", "eta2"], (m1.f, m2.f), (m1.q, m2.q), s.correlation)?;
    let revised = revise(method, m1, s.death, s.time)?;
    let src = KinematicSource::new("eta1", m1.f, m1.q, revised.f, revised.q)?;
    let (f, q) = kinematic_single(&spec, &src)?.marginal("eta2")?;
    method.inverse(LinkMoments::new(f, q)?)
}

/// Kinematic update placing the correlation directly on the hazards, with
/// `λ₁`'s conjugate posterior moments as the source.
pub fn blk_identity_link(s: &TwoHazardScenario) -> Result<HazardMoments> {
    let (o, t) = (s.observed, s.target);
    let spec = pair_spec(["lambda1", "lambda2"], (o.mean(), t.mean()), (o.variance(), t.variance()), s.correlation)?;
    let post = o.observe(s.death, s.time)?;
    let src = KinematicSource::new("lambda1", o.mean(), o.variance(), post.mean(), post.variance())?;
    let (mean, var) = kinematic_single(&spec, &src)?.marginal("lambda2")?;
    Ok(HazardMoments {
        mean,
        sd: var.max(0.0).sqrt(),
    })
}

/// Scale factor `k_c = (θ₁⁽¹⁾/θ₁⁽⁰⁾)^{r √(q₂/q₁)}` applied to `λ₂`'s rate by
/// any log-link method after a censored record.
///
/// The exponent reduces to `r` when both hazards share a prior.
pub fn censored_k_c(method: GuideMethod, s: &TwoHazardScenario) -> f64 {
    let q1 = method.h2(s.observed.alpha());
    let q2 = method.h2(s.target.alpha());
    let ratio = 1.0 + s.time / s.observed.theta();
    ratio.powf(s.correlation * (q2 / q1).sqrt())
}

fn pair_spec(labels: [&str; 2], mean: (f64, f64), var: (f64, f64), r: f64) -> Result<SecondOrderSpec> {
    let c = r * (var.0 * var.1).sqrt();
    SecondOrderSpec::new(
        labels.iter().map(|s| s.to_string()).collect(),
        DVector::from_vec(vec![mean.0, mean.1]),
        DMatrix::from_row_slice(2, 2, &[var.0, c, c, var.1]),
    )
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub iterations: usize,
    pub seed: u64,
    pub max_individuals: usize,
    pub max_intervals: usize,
    pub target_acceptance: f64,
    /// Split-R̂ above this attaches a warning.
    pub rhat_threshold: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 2,
            burn_in: 2000,
            iterations: 10_000,
            seed: 1,
            max_individuals: 50,
            max_intervals: 5,
            target_acceptance: 0.23,
            rhat_threshold: 1.05,
        }
    }
}

/// Per-coefficient sampler summaries, stacked like the coefficient prior.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcSummary {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
    /// Monte Carlo standard error of each mean (batch means).
    pub mcse: DVector<f64>,
    /// Split-chain potential scale reduction.
    pub rhat: DVector<f64>,
    pub acceptance: f64,
    pub warnings: Vec<String>,
}

/// Log posterior of the stacked coefficients for a piecewise-hazard model.
struct Target {
    dim: usize,
    prior_mean: DVector<f64>,
    prior_precision: DMatrix<f64>,
    design: DesignMatrix,
    observations: Vec<IntervalObservation>,
}

impl Target {
    fn eta(&self, beta: &DVector<f64>, obs: &IntervalObservation) -> f64 {
        let off = obs.interval * self.dim;
        (0..self.dim)
            .map(|k| self.design.rows()[(obs.individual, k)] * beta[off + k])
            .sum()
    }

    fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.prior_mean;
        let prior = -0.5 * d.dot(&(&self.prior_precision * &d));
        let lik: f64 = self
            .observations
            .iter()
            .map(|o| {
                let eta = self.eta(beta, o);
                let delta = if o.death { eta } else { 0.0 };
                delta - eta.exp() * o.exposure
            })
            .sum();
        prior + lik
    }

    /// Mode and negative Hessian there, by damped Newton on the concave log
    /// posterior.
    fn laplace(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut beta = self.prior_mean.clone();
        let mut current = self.log_density(&beta);
        for _ in 0..200 {
            let mut grad = -(&self.prior_precision * (&beta - &self.prior_mean));
            let mut hess = self.prior_precision.clone();
            for o in &self.observations {
                let eta = self.eta(&beta, o);
                let rate = eta.exp() * o.exposure;
                let resid = if o.death { 1.0 } else { 0.0 } - rate;
                let off = o.interval * self.dim;
                for a in 0..self.dim {
                    let xa = self.design.rows()[(o.individual, a)];
                    grad[off + a] += resid * xa;
                    for b in 0..self.dim {
                        hess[(off + a, off + b)] += rate * xa * self.design.rows()[(o.individual, b)];
                    }
                }
            }
            let chol = Cholesky::new(hess.clone())
                .ok_or_else(|| Error::Accuracy("posterior curvature is not positive definite".into()))?;
            let step = chol.solve(&grad);
            let mut scale = 1.0;
            let mut next = &beta + &step;
            let mut value = self.log_density(&next);
            while !(value >= current) && scale > 1e-10 {
                scale *= 0.5;
                next = &beta + &step * scale;
                value = self.log_density(&next);
            }
            let moved = (&next - &beta).amax();
            beta = next;
            current = value;
            if moved < 1e-12 * beta.amax().max(1.0) {
                return Ok((beta, symmetrize(hess)));
            }
        }
        Err(Error::Accuracy("posterior mode search did not converge".into()))
    }
}

/// Draws from the posterior of the coefficients under a multivariate normal
/// prior, using parallel chains of adaptive block random-walk Metropolis.
///
/// Proposals are scaled copies of the Laplace covariance; the scale adapts
/// towards the target acceptance during burn-in only.
pub fn mcmc_reference(
    dataset: &Dataset,
    grid: &IntervalGrid,
    prior: &CoefficientPrior,
    config: &McmcConfig,
) -> Result<McmcSummary> {
    if dataset.len() > config.max_individuals || grid.num_intervals() > config.max_intervals {
        return Err(Error::input(format!(
            "reference sampler is limited to {} individuals and {} intervals (got {} and {})",
            config.max_individuals,
            config.max_intervals,
            dataset.len(),
            grid.num_intervals()
        )));
    }
    if prior.num_intervals() != grid.num_intervals() || prior.dim() != dataset.num_covariates() + 1 {
        return Err(Error::Dimension {
            context: "prior blocks vs grid and covariates",
            expected: grid.num_intervals() * (dataset.num_covariates() + 1),
            actual: prior.mean().len(),
        });
    }
    if config.chains == 0 || config.iterations < 4 {
        return Err(Error::input("sampler needs at least one chain and four iterations"));
    }
    let chol = Cholesky::new(prior.cov().clone())
        .ok_or_else(|| Error::Spec("coefficient prior covariance must be positive definite".into()))?;
    let design = DesignMatrix::from_dataset(dataset)?;
    let observations = dataset
        .canonical_records()
        .iter()
        .enumerate()
        .flat_map(|(i, rec)| decompose(i, rec, grid))
        .collect();
    let target = Target {
        dim: prior.dim(),
        prior_mean: prior.mean().clone(),
        prior_precision: symmetrize(chol.inverse()),
        design,
        observations,
    };
    let (mode, curvature) = target.laplace()?;
    let laplace_cov = Cholesky::new(curvature)
        .ok_or_else(|| Error::Accuracy("posterior curvature is not positive definite".into()))?
        .inverse();
    let factor = Cholesky::new(symmetrize(laplace_cov))
        .ok_or_else(|| Error::Accuracy("Laplace covariance is not positive definite".into()))?
        .l();

    let runs: Vec<ChainRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| {
                let (target, mode, factor) = (&target, &mode, &factor);
                scope.spawn(move || run_chain(target, mode, factor, config, c as u64))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    summarise(&runs, config)
}

struct ChainRun {
    draws: Vec<DVector<f64>>,
    accepted: usize,
}

fn run_chain(target: &Target, mode: &DVector<f64>, factor: &DMatrix<f64>, config: &McmcConfig, chain: u64) -> ChainRun {
    let n = mode.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain);
    let normal = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    // overdispersed start so that split-R̂ is informative
    let mut state = mode + factor * normal(&mut rng) * 2.0;
    let mut current = target.log_density(&state);
    let mut log_scale = (2.38 / (n as f64).sqrt()).ln();
    let mut draws = Vec::with_capacity(config.iterations);
    let mut accepted = 0;
    for it in 0..config.burn_in + config.iterations {
        let proposal = &state + factor * normal(&mut rng) * log_scale.exp();
        let value = target.log_density(&proposal);
        let accept_prob = (value - current).exp().min(1.0);
        let accept = rng.random::<f64>() < accept_prob;
        if accept {
            state = proposal;
            current = value;
        }
        if it < config.burn_in {
            let gain = 1.0 / ((it + 1) as f64).sqrt();
            log_scale += gain * (accept_prob - config.target_acceptance);
        } else {
            accepted += usize::from(accept);
            draws.push(state.clone());
        }
    }
    ChainRun { draws, accepted }
}

fn summarise(runs: &[ChainRun], config: &McmcConfig) -> Result<McmcSummary> {
    let n = runs[0].draws[0].len();
    let total = (runs.len() * config.iterations) as f64;
    let mut mean = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    let mut mcse = DVector::zeros(n);
    let mut rhat = DVector::zeros(n);
    for k in 0..n {
        let series: Vec<Vec<f64>> = runs.iter().map(|r| r.draws.iter().map(|d| d[k]).collect()).collect();
        let all: Vec<f64> = series.iter().flatten().copied().collect();
        let (m, v) = mean_var(&all);
        mean[k] = m;
        sd[k] = v.sqrt();
        let chain_var: f64 = series.iter().map(|s| batch_means_variance(s)).sum::<f64>();
        mcse[k] = chain_var.sqrt() / runs.len() as f64;
        rhat[k] = split_rhat(&series);
    }
    let acceptance = runs.iter().map(|r| r.accepted).sum::<usize>() as f64 / total;
    let worst = rhat.max();
    let mut warnings = Vec::new();
    if !(worst <= config.rhat_threshold) {
        warnings.push(format!(
            "split R-hat reached {worst:.3}, above {:.2}; chains may not have converged",
            config.rhat_threshold
        ));
    }
    Ok(McmcSummary {
        mean,
        sd,
        mcse,
        rhat,
        acceptance,
        warnings,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Variance of a chain's mean estimated from `⌊√n⌋` non-overlapping batches.
fn batch_means_variance(x: &[f64]) -> f64 {
    let batches = (x.len() as f64).sqrt().floor().max(2.0) as usize;
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, v) = mean_var(&means);
    v / batches as f64
}

fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[h..2 * h]]
        })
        .collect();
    let len = halves[0].len() as f64;
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let within = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, between_var) = mean_var(&means);
    let between = len * between_var;
    if within <= 0.0 {
        return 1.0;
    }
    let pooled = (len - 1.0) / len * within + between / len;
    (pooled / within).sqrt()
}

/// Posterior mean and sd of `η = ln λ` for a single hazard with a
/// `N(μ, σ²)` prior and one record, by `nodes`-point quadrature.
pub fn single_hazard_log_posterior(mu: f64, sigma: f64, death: bool, exposure: f64, nodes: usize) -> (f64, f64) {
    let (x, w) = gauss_hermite(nodes);
    let delta = if death { 1.0 } else { 0.0 };
    let terms: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let eta = mu + sigma * std::f64::consts::SQRT_2 * xi;
            (wi.ln() + delta * eta - eta.exp() * exposure, eta)
        })
        .collect();
    let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for &(lw, eta) in &terms {
        let weight = (lw - max).exp();
        z += weight;
        m1 += weight * eta;
        m2 += weight * eta * eta;
    }
    let mean = m1 / z;
    (mean, (m2 / z - mean * mean).max(0.0).sqrt())
}
