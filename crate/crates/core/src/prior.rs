//! Dynamic second-order prior over the interval coefficient vectors.
//!
//! The coefficients `β_j` of interval `j` are a global component shared by
//! all intervals plus an interval-specific part that evolves as
//!
//! ```text
//! β_j − U = G_j (β_{j−1} − U) + ε_j,    Var(U) = C0,  Var(ε_j) = E_j
//! ```
//!
//! so that `C_j = C0 + G_j (C_{j−1} − C0) G_j' + E_j` and, for `l > j`,
//! `Cov(β_j, β_l) = C0 + (C_j − C0) (G_l ⋯ G_{j+1})'`.
//!
//! [`StationarySpec`] is the scalar special case `G_j = ρI`, `C0 = c0·C`,
//! `E = (C − C0)(1 − ρ²)` in which every `C_j = C` and the lag-`k` covariance
//! is `C0 + ρᵏ (C − C0)`.
//!
//! Coefficients are stacked interval-major: entry `j·dim + k` of the full
//! vector is coefficient `k` of interval `j`, where coefficient 0 is the
//! baseline (intercept).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::bayes_linear::{symmetrize, SecondOrderSpec, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::hazard::Dataset;

/// Label of `η_{i,j}` inside an Ω specification.
pub fn eta_label(individual: usize, interval: usize) -> String {
    format!("eta[{individual},{interval}]")
}

/// Label of coefficient `k` of interval `j` inside an Ω specification.
pub fn beta_label(interval: usize, coefficient: usize) -> String {
    format!("beta[{interval},{coefficient}]")
}

/// Joint mean and covariance of `(β_1, …, β_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPrior {
    intervals: usize,
    dim: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl CoefficientPrior {
    pub fn new(intervals: usize, dim: usize, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = intervals * dim;
        if intervals == 0 || dim == 0 {
            return Err(Error::Spec("prior needs at least one interval and one coefficient".into()));
        }
        if mean.len() != n {
            return Err(Error::Dimension {
                context: "coefficient prior mean",
                expected: n,
                actual: mean.len(),
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension {
                context: "coefficient prior covariance",
                expected: n,
                actual: cov.nrows(),
            });
        }
        check_psd(&cov, "assembled coefficient covariance")?;
        Ok(CoefficientPrior {
            intervals,
            dim,
            mean,
            cov: symmetrize(cov),
        })
    }

    pub fn num_intervals(&self) -> usize {
        self.intervals
    }

    /// Coefficients per interval (`q + 1`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean_block(&self, j: usize) -> DVector<f64> {
        self.mean.rows(j * self.dim, self.dim).into_owned()
    }

    /// `Cov(β_j, β_l)`.
    pub fn block(&self, j: usize, l: usize) -> DMatrix<f64> {
        self.cov
            .view((j * self.dim, l * self.dim), (self.dim, self.dim))
            .into_owned()
    }
}

/// General evolution specification.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSpec {
    /// `m_j` for every interval.
    pub means: Vec<DVector<f64>>,
    /// Covariance of the global component.
    pub global_cov: DMatrix<f64>,
    /// `C_1`.
    pub initial_cov: DMatrix<f64>,
    /// `G_2, …, G_r`.
    pub evolution: Vec<DMatrix<f64>>,
    /// `E_2, …, E_r`.
    pub innovations: Vec<DMatrix<f64>>,
}

impl EvolutionSpec {
    pub fn num_intervals(&self) -> usize {
        self.means.len()
    }

    fn validate(&self) -> Result<usize> {
        let r = self.means.len();
        if r == 0 {
            return Err(Error::Spec("at least one interval mean is required".into()));
        }
        let dim = self.means[0].len();
        let square = |m: &DMatrix<f64>, what: &'static str| {
            if m.nrows() == dim && m.ncols() == dim {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context: what,
                    expected: dim,
                    actual: m.nrows().max(m.ncols()),
                })
            }
        };
        for m in &self.means {
            if m.len() != dim {
                return Err(Error::Dimension {
                    context: "interval mean",
                    expected: dim,
                    actual: m.len(),
                });
            }
        }
        if self.evolution.len() != r - 1 || self.innovations.len() != r - 1 {
            return Err(Error::Dimension {
                context: "evolution and innovation matrices (one per interval after the first)",
                expected: r - 1,
                actual: self.evolution.len().min(self.innovations.len()),
            });
        }
        square(&self.global_cov, "global covariance")?;
        square(&self.initial_cov, "initial covariance")?;
        check_psd(&self.global_cov, "global covariance")?;
        check_psd(&self.initial_cov, "initial covariance")?;
        for (g, e) in self.evolution.iter().zip(&self.innovations) {
            square(g, "evolution matrix")?;
            square(e, "innovation covariance")?;
            check_psd(e, "innovation covariance")?;
        }
        Ok(dim)
    }

    /// Marginal covariances `C_1, …, C_r`.
    pub fn interval_covs(&self) -> Result<Vec<DMatrix<f64>>> {
        self.validate()?;
        let mut covs = vec![self.initial_cov.clone()];
        for (g, e) in self.evolution.iter().zip(&self.innovations) {
            let prev = covs.last().expect("non-empty") - &self.global_cov;
            covs.push(symmetrize(&self.global_cov + g * prev * g.transpose() + e));
        }
        Ok(covs)
    }

    /// Full prior over all interval coefficients.
    pub fn propagate(&self) -> Result<CoefficientPrior> {
        let dim = self.validate()?;
        let r = self.num_intervals();
        let covs = self.interval_covs()?;
        let n = r * dim;
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for (j, cov_j) in covs.iter().enumerate() {
            let local = cov_j - &self.global_cov;
            // product G_l ⋯ G_{j+1}, built up as l increases
            let mut chain = DMatrix::<f64>::identity(dim, dim);
            for l in j..r {
                if l > j {
                    chain = &self.evolution[l - 1] * chain;
                }
                let block = &self.global_cov + &local * chain.transpose();
                cov.view_mut((j * dim, l * dim), (dim, dim)).copy_from(&block);
                cov.view_mut((l * dim, j * dim), (dim, dim)).copy_from(&block.transpose());
            }
        }
        let mean = DVector::from_iterator(n, self.means.iter().flat_map(|m| m.iter().copied()));
        CoefficientPrior::new(r, dim, mean, cov)
    }
}

/// Stationary scalar-persistence prior: every interval has mean `m` and
/// covariance `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    c0: f64,
    rho: f64,
}

impl StationarySpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, c0: f64, rho: f64) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::Spec("prior mean must have at least one entry".into()));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::Dimension {
                context: "stationary covariance",
                expected: dim,
                actual: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Spec("prior mean must be finite".into()));
        }
        if !(0.0..=1.0).contains(&c0) {
            return Err(Error::Spec(format!("c0 must lie in [0, 1], got {c0}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Spec(format!("rho must lie in (0, 1), got {rho}")));
        }
        let cov = symmetrize(cov);
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::Spec("per-interval covariance must be positive definite".into()));
        }
        Ok(StationarySpec { mean, cov, c0, rho })
    }

    /// Independent coefficients with the given variances.
    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>, c0: f64, rho: f64) -> Result<Self> {
        if mean.len() != variances.len() {
            return Err(Error::Dimension {
                context: "prior variances",
                expected: mean.len(),
                actual: variances.len(),
            });
        }
        let cov = DMatrix::from_diagonal(&DVector::from_vec(variances));
        StationarySpec::new(DVector::from_vec(mean), cov, c0, rho)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn global_cov(&self) -> DMatrix<f64> {
        &self.cov * self.c0
    }

    /// `E = (C − C0)(1 − ρ²)`.
    pub fn innovation_cov(&self) -> DMatrix<f64> {
        &self.cov * ((1.0 - self.c0) * (1.0 - self.rho * self.rho))
    }

    /// Correlation between the same coefficient `k` intervals apart:
    /// `c0 + (1 − c0) ρᵏ`.
    pub fn lag_correlation(&self, lag: usize) -> f64 {
        self.c0 + (1.0 - self.c0) * self.rho.powi(lag as i32)
    }

    /// `Γ_k = C0 + ρᵏ (C − C0)`.
    pub fn lag_cov(&self, lag: usize) -> DMatrix<f64> {
        &self.cov * self.lag_correlation(lag)
    }

    /// The equivalent general specification over `r` intervals.
    pub fn to_evolution(&self, intervals: usize) -> EvolutionSpec {
        let dim = self.dim();
        let steps = intervals.saturating_sub(1);
        EvolutionSpec {
            means: vec![self.mean.clone(); intervals],
            global_cov: self.global_cov(),
            initial_cov: self.cov.clone(),
            evolution: vec![DMatrix::identity(dim, dim) * self.rho; steps],
            innovations: vec![self.innovation_cov(); steps],
        }
    }

    /// Full prior over `r` intervals from the closed-form lag covariances.
    pub fn coefficient_prior(&self, intervals: usize) -> Result<CoefficientPrior> {
        let dim = self.dim();
        let n = intervals * dim;
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for j in 0..intervals {
            for l in 0..intervals {
                let block = self.lag_cov(j.abs_diff(l));
                cov.view_mut((j * dim, l * dim), (dim, dim)).copy_from(&block);
            }
        }
        let mean = DVector::from_iterator(n, (0..intervals).flat_map(|_| self.mean.iter().copied()));
        CoefficientPrior::new(intervals, dim, mean, cov)
    }
}

/// Rows `x_i' = (1, x_{i,1}, …, x_{i,q})`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::input("design matrix needs an intercept column"));
        }
        if rows.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::input("first design column must be all ones"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("design entries must be finite"));
        }
        Ok(DesignMatrix { rows })
    }

    /// Prepends the intercept to each covariate row.
    pub fn from_covariates<'a>(dim: usize, covariates: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut data = Vec::new();
        let mut n = 0;
        for row in covariates {
            if row.len() + 1 != dim {
                return Err(Error::Dimension {
                    context: "covariates per individual",
                    expected: dim - 1,
                    actual: row.len(),
                });
            }
            data.push(1.0);
            data.extend_from_slice(row);
            n += 1;
        }
        DesignMatrix::new(DMatrix::from_row_slice(n, dim, &data))
    }

    /// Design of a dataset's records in canonical order.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let dim = dataset.num_covariates() + 1;
        DesignMatrix::from_covariates(
            dim,
            dataset.canonical_records().into_iter().map(|r| r.covariates.as_slice()),
        )
    }

    pub fn num_individuals(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

/// Map `A` with `η = A β`: row `i·r + j` holds `x_i'` in block `j`.
pub fn design_map(design: &DesignMatrix, intervals: usize) -> DMatrix<f64> {
    let (p, dim) = (design.num_individuals(), design.dim());
    let mut a = DMatrix::<f64>::zeros(p * intervals, intervals * dim);
    for i in 0..p {
        for j in 0..intervals {
            for k in 0..dim {
                a[(i * intervals + j, j * dim + k)] = design.rows[(i, k)];
            }
        }
    }
    a
}

/// Prior moments of every `η_{i,j}` and their covariance with `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaMoments {
    pub individuals: usize,
    pub intervals: usize,
    /// `f_{i,j}` at index `i·r + j`.
    pub mean: DVector<f64>,
    /// `Cov(η_{i,j}, η_{k,l})`.
    pub cov: DMatrix<f64>,
    /// `Cov(η_{i,j}, β)`.
    pub cross: DMatrix<f64>,
}

impl EtaMoments {
    pub fn f(&self, i: usize, j: usize) -> f64 {
        self.mean[i * self.intervals + j]
    }

    pub fn q(&self, i: usize, j: usize) -> f64 {
        let k = i * self.intervals + j;
        self.cov[(k, k)]
    }
}

pub fn eta_moments(prior: &CoefficientPrior, design: &DesignMatrix) -> Result<EtaMoments> {
    if design.dim() != prior.dim() {
        return Err(Error::Dimension {
            context: "design columns vs coefficients",
            expected: prior.dim(),
            actual: design.dim(),
        });
    }
    let a = design_map(design, prior.num_intervals());
    let cross = &a * prior.cov();
    Ok(EtaMoments {
        individuals: design.num_individuals(),
        intervals: prior.num_intervals(),
        mean: &a * prior.mean(),
        cov: symmetrize(&cross * a.transpose()),
        cross,
    })
}

/// Second-order specification over `Ω = (η, β)`.
///
/// η labels come first, row-major by `(i, j)`, followed by β labels by
/// `(j, k)`. The covariance is `[A; I] Var(β) [A; I]'` and is singular by
/// construction.
pub fn assemble_omega(prior: &CoefficientPrior, design: &DesignMatrix) -> Result<SecondOrderSpec> {
    let eta = eta_moments(prior, design)?;
    let (p, r, dim) = (eta.individuals, eta.intervals, prior.dim());
    let ne = p * r;
    let nb = r * dim;
    let mut labels = Vec::with_capacity(ne + nb);
    for i in 0..p {
        for j in 0..r {
            labels.push(eta_label(i, j));
        }
    }
    for j in 0..r {
        for k in 0..dim {
            labels.push(beta_label(j, k));
        }
    }
    let mut mean = DVector::<f64>::zeros(ne + nb);
    mean.rows_mut(0, ne).copy_from(&eta.mean);
    mean.rows_mut(ne, nb).copy_from(prior.mean());
    let mut cov = DMatrix::<f64>::zeros(ne + nb, ne + nb);
    cov.view_mut((0, 0), (ne, ne)).copy_from(&eta.cov);
    cov.view_mut((0, ne), (ne, nb)).copy_from(&eta.cross);
    cov.view_mut((ne, 0), (nb, ne)).copy_from(&eta.cross.transpose());
    cov.view_mut((ne, ne), (nb, nb)).copy_from(prior.cov());
    SecondOrderSpec::new(labels, mean, symmetrize(cov))
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Spec(format!("{what} has non-finite entries")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Spec(format!("{what} is not symmetric")));
    }
    let eig = SymmetricEigen::new(symmetrize(m.clone())).eigenvalues;
    let max = eig.max().max(0.0);
    if eig.min() < -RANK_TOLERANCE * max.max(scale) {
        return Err(Error::Spec(format!(
            "{what} is not positive semidefinite (eigenvalue {:e})",
            eig.min()
        )));
    }
    Ok(())
}
