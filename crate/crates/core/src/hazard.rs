//! Time partition, per-interval sufficient statistics and the piecewise
//! constant hazard probability kit.
//!
//! Intervals are half-open, `R_j = [τ_{j−1}, τ_j)`, and the final interval
//! `[τ_{r−1}, ∞)` is unbounded. Internally intervals are indexed from 0.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};

/// Ordered interval boundaries `0 = τ₀ < τ₁ < … < τ_{r−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalGrid {
    boundaries: Vec<f64>,
    log_params: Option<(f64, f64)>,
}

impl IntervalGrid {
    /// Grid from explicit lower boundaries. The first must be 0.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::domain("a grid needs at least one interval"));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::domain(format!(
                "the first boundary must be 0, got {}",
                boundaries[0]
            )));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::domain("grid boundaries must be finite"));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("grid boundaries must be strictly increasing"));
        }
        Ok(IntervalGrid {
            boundaries,
            log_params: None,
        })
    }

    /// `τ_j = −ν ln(1 − κ j)` for `j = 0..r−1`, giving `r` intervals.
    pub fn log_grid(nu: f64, kappa: f64, r: usize) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0 && kappa.is_finite() && kappa > 0.0) {
            return Err(Error::domain(format!(
                "nu and kappa must be positive, got nu={nu}, kappa={kappa}"
            )));
        }
        if r < 2 {
            return Err(Error::domain(format!("a log grid needs r >= 2, got {r}")));
        }
        if kappa * (r - 1) as f64 >= 1.0 {
            return Err(Error::domain(format!(
                "kappa * (r - 1) = {} must be below 1",
                kappa * (r - 1) as f64
            )));
        }
        let boundaries = (0..r)
            .map(|j| -nu * (-kappa * j as f64).ln_1p())
            .collect();
        let mut grid = IntervalGrid::new(boundaries)?;
        grid.log_params = Some((nu, kappa));
        Ok(grid)
    }

    pub fn num_intervals(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// `(ν, κ)` when the grid was built by [`IntervalGrid::log_grid`].
    pub fn log_params(&self) -> Option<(f64, f64)> {
        self.log_params
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.boundaries[j]
    }

    /// Upper boundary; infinite for the last interval.
    pub fn upper(&self, j: usize) -> f64 {
        self.boundaries.get(j + 1).copied().unwrap_or(f64::INFINITY)
    }

    pub fn length(&self, j: usize) -> f64 {
        self.upper(j) - self.lower(j)
    }

    /// Index of the interval containing `t ≥ 0`.
    pub fn interval_of(&self, t: f64) -> usize {
        // partition_point gives the count of boundaries <= t.
        self.boundaries.partition_point(|&b| b <= t).saturating_sub(1)
    }

    /// Representative plotting time of interval `j`.
    ///
    /// For log grids this is `−ν ln(1 − κ(j − ½))` (1-based `j`). For explicit
    /// grids it is the arithmetic midpoint, and for the unbounded last
    /// interval the lower boundary plus half the previous interval's length.
    pub fn midpoint(&self, j: usize) -> f64 {
        if let Some((nu, kappa)) = self.log_params {
            return -nu * (-kappa * (j as f64 + 0.5)).ln_1p();
        }
        let upper = self.upper(j);
        if upper.is_finite() {
            0.5 * (self.lower(j) + upper)
        } else if j > 0 {
            self.lower(j) + 0.5 * self.length(j - 1)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Death,
    Censored,
}

impl Status {
    /// `1` for a death, `0` for a right-censored time.
    pub fn indicator(self) -> u8 {
        match self {
            Status::Death => 1,
            Status::Censored => 0,
        }
    }

    pub fn from_indicator(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Status::Death),
            0 => Ok(Status::Censored),
            other => Err(Error::input(format!("status must be 0 or 1, got {other}"))),
        }
    }
}

/// One individual's (possibly right-censored) survival time and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub id: String,
    pub time: f64,
    pub status: Status,
    pub covariates: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(id: impl Into<String>, time: f64, status: Status, covariates: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::input(format!(
                "record `{id}`: survival time must be positive and finite, got {time}"
            )));
        }
        if covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::input(format!("record `{id}`: covariates must be finite")));
        }
        Ok(SurvivalRecord {
            id,
            time,
            status,
            covariates,
        })
    }
}

/// A collection of survival records sharing one covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    records: Vec<SurvivalRecord>,
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<SurvivalRecord>) -> Result<Self> {
        let q = covariate_names.len();
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if rec.covariates.len() != q {
                return Err(Error::Dimension {
                    context: "covariates per record",
                    expected: q,
                    actual: rec.covariates.len(),
                });
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::input(format!("duplicate record id `{}`", rec.id)));
            }
        }
        Ok(Dataset {
            covariate_names,
            records,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn num_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_deaths(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == Status::Death)
            .count()
    }

    /// Records sorted by id (numeric ids compare numerically), which fixes
    /// the individual index used throughout inference independent of the
    /// input order.
    pub fn canonical_records(&self) -> Vec<&SurvivalRecord> {
        let mut out: Vec<&SurvivalRecord> = self.records.iter().collect();
        out.sort_by(|a, b| compare_ids(&a.id, &b.id));
        out
    }
}

fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Sufficient statistic of one person-interval: death indicator and time at
/// risk inside the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalObservation {
    pub individual: usize,
    pub interval: usize,
    pub death: bool,
    pub exposure: f64,
}

/// Splits a record into one observation per interval the individual entered.
///
/// Fully survived intervals contribute `δ = 0` and their whole length. The
/// terminal interval contributes `t − τ_{j−1}` and `δ = 1` for a death. A
/// death exactly on a boundary belongs to the interval starting there (with
/// zero exposure).
pub fn decompose(individual: usize, record: &SurvivalRecord, grid: &IntervalGrid) -> Vec<IntervalObservation> {
    let t = record.time;
    let last = grid.interval_of(t);
    let mut out = Vec::with_capacity(last + 1);
    for j in 0..=last {
        let lower = grid.lower(j);
        let terminal = j == last;
        if terminal && lower == t && record.status == Status::Censored {
            // Censored exactly at τ_{j−1}: the individual never entered R_j.
            break;
        }
        let exposure = if terminal { t - lower } else { grid.length(j) };
        out.push(IntervalObservation {
            individual,
            interval: j,
            death: terminal && record.status == Status::Death,
            exposure,
        });
    }
    out
}

/// `H(t) = Σ_{k: τ_k < t} λ_k (τ_k − τ_{k−1}) + λ_j (t − τ_{j−1})`.
pub fn cumulative_hazard(grid: &IntervalGrid, hazards: &[f64], t: f64) -> Result<f64> {
    check_hazards(grid, hazards)?;
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    if t.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let last = grid.interval_of(t);
    let full: f64 = (0..last).map(|k| hazards[k] * grid.length(k)).sum();
    Ok(full + hazards[last] * (t - grid.lower(last)))
}

/// `S(t) = exp(−H(t))`.
pub fn survival_function(grid: &IntervalGrid, hazards: &[f64], t: f64) -> Result<f64> {
    Ok((-cumulative_hazard(grid, hazards, t)?).exp())
}

/// `f(t) = λ_j S(t)` for `t ∈ R_j`.
pub fn density(grid: &IntervalGrid, hazards: &[f64], t: f64) -> Result<f64> {
    let s = survival_function(grid, hazards, t)?;
    Ok(hazards[grid.interval_of(t)] * s)
}

/// Restricted mean survival `∫₀^c S(t) dt`.
pub fn restricted_mean(grid: &IntervalGrid, hazards: &[f64], horizon: f64) -> Result<f64> {
    check_hazards(grid, hazards)?;
    if !(horizon >= 0.0) {
        return Err(Error::domain(format!("horizon must be non-negative, got {horizon}")));
    }
    let mut total = 0.0;
    let mut surv = 1.0;
    for (j, &lam) in hazards.iter().enumerate() {
        let lower = grid.lower(j);
        if lower >= horizon {
            break;
        }
        let width = grid.upper(j).min(horizon) - lower;
        // ∫₀^w e^{−λu} du = −expm1(−λw)/λ
        total += surv * (-(-lam * width).exp_m1()) / lam;
        surv *= (-lam * width).exp();
    }
    Ok(total)
}

/// Σ over observations of `δ ln λ − λ · exposure`.
///
/// Up to an additive constant this equals the log-likelihood of independent
/// Poisson counts `δ` with means `λ · exposure`.
pub fn log_likelihood(
    observations: &[IntervalObservation],
    hazard: impl Fn(usize, usize) -> f64,
) -> f64 {
    observations
        .iter()
        .map(|o| {
            let lam = hazard(o.individual, o.interval);
            let death = if o.death { lam.ln() } else { 0.0 };
            death - lam * o.exposure
        })
        .sum()
}

fn check_hazards(grid: &IntervalGrid, hazards: &[f64]) -> Result<()> {
    if hazards.len() != grid.num_intervals() {
        return Err(Error::Dimension {
            context: "hazards per interval",
            expected: grid.num_intervals(),
            actual: hazards.len(),
        });
    }
    if hazards.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
        return Err(Error::domain("hazards must be positive and finite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_grid() -> IntervalGrid {
        IntervalGrid::log_grid(500.0, 0.1, 10).unwrap()
    }

    fn rec(time: f64, status: Status) -> SurvivalRecord {
        SurvivalRecord::new("a", time, status, vec![]).unwrap()
    }

    #[test]
    fn log_grid_values() {
        let g = reference_grid();
        assert_eq!(g.num_intervals(), 10);
        assert_eq!(g.lower(0), 0.0);
        assert!((g.lower(1) - 52.68).abs() < 0.005);
        assert!((g.lower(2) - 111.57).abs() < 0.005);
        assert!((g.lower(9) - 1151.29).abs() < 0.005);
        assert!(g.upper(9).is_infinite());

        let g = IntervalGrid::log_grid(1.0, 0.5, 2).unwrap();
        assert_relative_eq!(g.lower(1), 2f64.ln(), epsilon = 1e-15);

        assert!(IntervalGrid::log_grid(500.0, 0.1, 11).is_err());
        assert!(IntervalGrid::log_grid(500.0, 0.1, 1).is_err());
        assert!(IntervalGrid::log_grid(-1.0, 0.1, 3).is_err());
    }

    #[test]
    fn explicit_grid_validation() {
        assert!(IntervalGrid::new(vec![]).is_err());
        assert!(IntervalGrid::new(vec![1.0, 2.0]).is_err());
        assert!(IntervalGrid::new(vec![0.0, 2.0, 2.0]).is_err());
        let g = IntervalGrid::new(vec![0.0]).unwrap();
        assert_eq!(g.num_intervals(), 1);
        assert_eq!(g.interval_of(1e9), 0);
    }

    #[test]
    fn midpoints() {
        let g = reference_grid();
        assert_relative_eq!(g.midpoint(0), -500.0 * (1.0f64 - 0.05).ln(), max_relative = 1e-14);
        assert_relative_eq!(g.midpoint(9), -500.0 * (1.0f64 - 0.95).ln(), max_relative = 1e-14);
        let g = IntervalGrid::new(vec![0.0, 2.0, 6.0]).unwrap();
        assert_eq!(g.midpoint(0), 1.0);
        assert_eq!(g.midpoint(1), 4.0);
        assert_eq!(g.midpoint(2), 8.0);
    }

    #[test]
    fn decompose_death_in_second_interval() {
        let g = reference_grid();
        let obs = decompose(3, &rec(60.0, Status::Death), &g);
        assert_eq!(obs.len(), 2);
        assert_eq!((obs[0].interval, obs[0].death), (0, false));
        assert_relative_eq!(obs[0].exposure, g.lower(1));
        assert!((obs[0].exposure - 52.68).abs() < 0.005);
        assert_eq!((obs[1].interval, obs[1].death), (1, true));
        assert_relative_eq!(obs[1].exposure, 60.0 - g.lower(1));
        assert!((obs[1].exposure - 7.32).abs() < 0.005);
        assert!(obs.iter().all(|o| o.individual == 3));
    }

    #[test]
    fn decompose_censored_in_first_interval() {
        let obs = decompose(0, &rec(10.0, Status::Censored), &reference_grid());
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].interval, 0);
        assert!(!obs[0].death);
        assert_eq!(obs[0].exposure, 10.0);
    }

    #[test]
    fn death_on_boundary_goes_to_next_interval() {
        let g = reference_grid();
        let t = g.lower(1);
        let obs = decompose(0, &rec(t, Status::Death), &g);
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[1].interval, 1);
        assert!(obs[1].death);
        assert_eq!(obs[1].exposure, 0.0);
        assert!(!obs[0].death);

        let obs = decompose(0, &rec(t, Status::Censored), &g);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].exposure, t);
    }

    #[test]
    fn censored_beyond_last_boundary() {
        let g = IntervalGrid::new(vec![0.0, 1.0, 3.0]).unwrap();
        let obs = decompose(0, &rec(10.0, Status::Censored), &g);
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[2].exposure, 7.0);
    }

    #[test]
    fn rejects_nonpositive_times() {
        assert!(SurvivalRecord::new("x", 0.0, Status::Death, vec![]).is_err());
        assert!(SurvivalRecord::new("x", -3.0, Status::Death, vec![]).is_err());
        assert!(SurvivalRecord::new("x", 1.0, Status::Death, vec![f64::NAN]).is_err());
    }

    #[test]
    fn dataset_checks_layout_and_ids() {
        let a = SurvivalRecord::new("1", 1.0, Status::Death, vec![0.5]).unwrap();
        let b = SurvivalRecord::new("1", 2.0, Status::Death, vec![0.5]).unwrap();
        let c = SurvivalRecord::new("2", 2.0, Status::Death, vec![]).unwrap();
        assert!(Dataset::new(vec!["x1".into()], vec![a.clone(), b]).is_err());
        assert!(Dataset::new(vec!["x1".into()], vec![a, c]).is_err());
    }

    #[test]
    fn canonical_order_is_numeric_aware() {
        let mk = |id: &str| SurvivalRecord::new(id, 1.0, Status::Censored, vec![]).unwrap();
        let ds = Dataset::new(vec![], vec![mk("10"), mk("b"), mk("2"), mk("a")]).unwrap();
        let ids: Vec<&str> = ds.canonical_records().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["2", "10", "a", "b"]);
    }

    #[test]
    fn survival_function_examples() {
        let one = IntervalGrid::new(vec![0.0]).unwrap();
        assert_relative_eq!(survival_function(&one, &[2.0], 1.0).unwrap(), (-2.0f64).exp());
        assert_eq!(survival_function(&one, &[2.0], 0.0).unwrap(), 1.0);
        let two = IntervalGrid::new(vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(
            survival_function(&two, &[1.0, 3.0], 2.0).unwrap(),
            (-4.0f64).exp(),
            max_relative = 1e-15
        );
        assert!(survival_function(&two, &[1.0], 2.0).is_err());
        assert!(survival_function(&two, &[1.0, 0.0], 2.0).is_err());
    }

    #[test]
    fn density_integrates_to_one_minus_survival() {
        let g = IntervalGrid::new(vec![0.0, 0.5, 1.5]).unwrap();
        let lam = [0.7, 1.9, 0.4];
        let n = 200_000;
        let upper = 4.0;
        let h = upper / n as f64;
        let integral: f64 = (0..n)
            .map(|k| density(&g, &lam, (k as f64 + 0.5) * h).unwrap() * h)
            .sum();
        let target = 1.0 - survival_function(&g, &lam, upper).unwrap();
        assert_relative_eq!(integral, target, max_relative = 1e-6);
    }

    #[test]
    fn restricted_mean_matches_midpoint_rule() {
        let g = IntervalGrid::new(vec![0.0, 0.5, 1.5]).unwrap();
        let lam = [0.7, 1.9, 0.4];
        let horizon = 3.2;
        let n = 100_000;
        let h = horizon / n as f64;
        let quad: f64 = (0..n)
            .map(|k| survival_function(&g, &lam, (k as f64 + 0.5) * h).unwrap() * h)
            .sum();
        assert_relative_eq!(restricted_mean(&g, &lam, horizon).unwrap(), quad, max_relative = 1e-8);
        assert_eq!(restricted_mean(&g, &lam, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn log_likelihood_examples() {
        let d = IntervalObservation { individual: 0, interval: 0, death: true, exposure: 0.5 };
        assert_relative_eq!(log_likelihood(&[d], |_, _| 2.0), 2f64.ln() - 1.0);
        let c = IntervalObservation { individual: 0, interval: 0, death: false, exposure: 1.0 };
        assert_relative_eq!(log_likelihood(&[c], |_, _| 3.0), -3.0);
    }

    proptest! {
        #[test]
        fn log_likelihood_is_poisson_up_to_constant(
            lam in 0.01f64..20.0, exposure in 0.01f64..10.0, death in any::<bool>()
        ) {
            let o = IntervalObservation { individual: 0, interval: 0, death, exposure };
            let k = if death { 1.0 } else { 0.0 };
            let mean = lam * exposure;
            // log Poisson pmf of k ∈ {0, 1}: k ln μ − μ − ln k!
            let poisson = k * mean.ln() - mean;
            let got = log_likelihood(&[o], |_, _| lam);
            prop_assert!((got - (poisson - k * exposure.ln())).abs() < 1e-12 * (1.0 + got.abs()));
        }

        #[test]
        fn decomposition_invariants(
            t in 0.001f64..3000.0, death in any::<bool>(), r in 2usize..10
        ) {
            let g = IntervalGrid::log_grid(500.0, 0.1, r).unwrap();
            let status = if death { Status::Death } else { Status::Censored };
            let obs = decompose(0, &rec(t, status), &g);
            let total: f64 = obs.iter().map(|o| o.exposure).sum();
            prop_assert!((total - t).abs() <= 1e-9 * t);
            let deaths = obs.iter().filter(|o| o.death).count();
            prop_assert_eq!(deaths, if death { 1 } else { 0 });
            for o in &obs {
                prop_assert!(o.exposure >= 0.0 && o.exposure <= g.length(o.interval) + 1e-9);
            }
            for w in obs.windows(2) {
                prop_assert_eq!(w[1].interval, w[0].interval + 1);
            }
        }

        #[test]
        fn survival_is_product_of_interval_factors(
            lam in proptest::collection::vec(0.001f64..0.05, 10), k in 1usize..10
        ) {
            let g = reference_grid();
            let at_boundary = survival_function(&g, &lam, g.lower(k)).unwrap();
            let product: f64 = (0..k).map(|j| (-lam[j] * g.length(j)).exp()).product();
            prop_assert!((at_boundary - product).abs() < 1e-12);
        }

        #[test]
        fn survival_non_increasing(lam in proptest::collection::vec(0.001f64..0.05, 10),
                                   a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
            let g = reference_grid();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(survival_function(&g, &lam, hi).unwrap() <= survival_function(&g, &lam, lo).unwrap());
        }
    }
}
