//! Second-order belief specifications and their revision.
//!
//! A [`SecondOrderSpec`] holds only an expectation vector and a covariance
//! matrix. It can be *adjusted* by observing some of its quantities, or
//! revised *kinematically* when external information changes the moments of
//! one quantity without observing it. Several kinematic revisions are
//! combined with the precision-additive rule
//!
//! ```text
//! P(X | D)          = Σ_j P(X | D_j) − (J − 1) P(X)
//! P(X | D) E(X | D) = Σ_j P(X | D_j) E(X | D_j) − (J − 1) P(X) E(X)
//! ```
//!
//! which is the unique order-independent combination whenever it exists.
//!
//! Covariance matrices here are frequently singular by construction (the
//! log-hazards are exact linear images of the coefficients), so pooling is
//! carried out in the eigenbasis of the prior covariance restricted to its
//! range, with eigenvalues below [`RANK_TOLERANCE`] × the largest treated as
//! zero.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for ranks and pseudo-inverses.
pub const RANK_TOLERANCE: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Expectation vector and covariance matrix over an ordered set of labelled
/// quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSpec {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl SecondOrderSpec {
    pub fn new(labels: Vec<String>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if mean.len() != n {
            return Err(Error::Dimension {
                context: "spec mean",
                expected: n,
                actual: mean.len(),
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension {
                context: "spec covariance",
                expected: n,
                actual: cov.nrows().max(cov.ncols()),
            });
        }
        let scale = cov.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::Spec(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if n > 0 {
            let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
            let max = eig.max();
            let min = eig.min();
            if min < -RANK_TOLERANCE * max.max(0.0) - f64::MIN_POSITIVE {
                return Err(Error::Spec(format!(
                    "covariance is not positive semidefinite (eigenvalue {min:e})"
                )));
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Spec(format!("duplicate label `{l}`")));
            }
        }
        Ok(SecondOrderSpec {
            labels,
            index,
            mean,
            cov,
        })
    }

    /// Builds a spec from already validated parts, re-symmetrising `cov`.
    fn from_parts(labels: Vec<String>, index: HashMap<String, usize>, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let cov = symmetrize(cov);
        SecondOrderSpec {
            labels,
            index,
            mean,
            cov,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// `(E, Var)` of a single quantity.
    pub fn marginal(&self, label: &str) -> Result<(f64, f64)> {
        let k = self.index_of(label)?;
        Ok((self.mean[k], self.cov[(k, k)]))
    }

    /// Restriction to a subset of quantities, in the given order.
    pub fn subset(&self, labels: &[&str]) -> Result<SecondOrderSpec> {
        let idx = labels
            .iter()
            .map(|l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.cov[(idx[a], idx[b])]);
        SecondOrderSpec::new(labels.iter().map(|s| s.to_string()).collect(), mean, cov)
    }
}

/// A revision of one quantity's moments from `(f0, q0)` to `(f1, q1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSource {
    pub label: String,
    pub f0: f64,
    pub q0: f64,
    pub f1: f64,
    pub q1: f64,
}

impl KinematicSource {
    pub fn new(label: impl Into<String>, f0: f64, q0: f64, f1: f64, q1: f64) -> Result<Self> {
        let label = label.into();
        if !(q0 > 0.0 && q0.is_finite() && q1 > 0.0 && q1.is_finite()) {
            return Err(Error::domain(format!(
                "source `{label}`: variances must be positive, got q0={q0}, q1={q1}"
            )));
        }
        if !(f0.is_finite() && f1.is_finite()) {
            return Err(Error::domain(format!("source `{label}`: means must be finite")));
        }
        Ok(KinematicSource { label, f0, q0, f1, q1 })
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix via its
/// eigendecomposition.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m.clone()));
    let cutoff = RANK_TOLERANCE * eig.eigenvalues.amax();
    let inv = eig
        .eigenvalues
        .map(|v| if v.abs() > cutoff { 1.0 / v } else { 0.0 });
    let v = &eig.eigenvectors;
    symmetrize(v * DMatrix::from_diagonal(&inv) * v.transpose())
}

/// Bayes linear adjustment by observing `observed = values`.
///
/// `E(B|A) = E(B) + V_BA V_AA⁻ (a − E(A))`,
/// `Var(B|A) = V_BB − V_BA V_AA⁻ V_AB`, applied to every quantity in `spec`
/// (observed ones collapse to their values with zero variance).
pub fn adjust(spec: &SecondOrderSpec, observed: &[&str], values: &[f64]) -> Result<SecondOrderSpec> {
    if observed.len() != values.len() {
        return Err(Error::Dimension {
            context: "observed values",
            expected: observed.len(),
            actual: values.len(),
        });
    }
    let idx = observed
        .iter()
        .map(|l| spec.index_of(l))
        .collect::<Result<Vec<_>>>()?;
    let n = spec.len();
    let k = idx.len();
    let v_aa = DMatrix::from_fn(k, k, |a, b| spec.cov[(idx[a], idx[b])]);
    let v_xa = DMatrix::from_fn(n, k, |i, a| spec.cov[(i, idx[a])]);
    let resid = DVector::from_fn(k, |a, _| values[a] - spec.mean[idx[a]]);
    let gain = &v_xa * pseudo_inverse(&v_aa);
    let mean = &spec.mean + &gain * resid;
    let cov = &spec.cov - &gain * v_xa.transpose();
    Ok(SecondOrderSpec::from_parts(
        spec.labels.clone(),
        spec.index.clone(),
        mean,
        cov,
    ))
}

/// Kinematic revision of the whole spec from one source.
///
/// `E₁ = E₀ + c (f1 − f0)/q0` and `Var₁ = Var₀ − c c' (1/q0 − q1/q0²)`, with
/// `c` the prior covariance column of the source quantity. The source's own
/// marginal becomes exactly `(f1, q1)`.
pub fn kinematic_single(spec: &SecondOrderSpec, src: &KinematicSource) -> Result<SecondOrderSpec> {
    let k = spec.index_of(&src.label)?;
    check_marginal(spec, k, src)?;
    let c = spec.cov.column(k).into_owned();
    let shift = (src.f1 - src.f0) / src.q0;
    let shrink = 1.0 / src.q0 - src.q1 / (src.q0 * src.q0);
    let mut mean = &spec.mean + &c * shift;
    let mut cov = &spec.cov - (&c * c.transpose()) * shrink;
    mean[k] = src.f1;
    cov[(k, k)] = src.q1;
    Ok(SecondOrderSpec::from_parts(
        spec.labels.clone(),
        spec.index.clone(),
        mean,
        cov,
    ))
}

/// Commutative pooling of several sources, each first applied alone with
/// [`kinematic_single`].
pub fn pool_naive(spec: &SecondOrderSpec, sources: &[KinematicSource]) -> Result<SecondOrderSpec> {
    let mut seen = std::collections::HashSet::with_capacity(sources.len());
    for s in sources {
        if !seen.insert(s.label.as_str()) {
            return Err(Error::input(format!("source label `{}` appears twice", s.label)));
        }
    }
    let updates = sources
        .iter()
        .map(|s| kinematic_single(spec, s))
        .collect::<Result<Vec<_>>>()?;
    pool_updates(spec, &updates)
}

/// Precision pooling of arbitrary single-source revisions of `prior`.
///
/// Each update must keep its covariance inside the range of the prior
/// covariance (always true for kinematic and adjustment revisions).
pub fn pool_updates(prior: &SecondOrderSpec, updates: &[SecondOrderSpec]) -> Result<SecondOrderSpec> {
    for u in updates {
        if u.labels != prior.labels {
            return Err(Error::input("pooled updates must share the prior's labels"));
        }
    }
    if updates.is_empty() || prior.is_empty() {
        return Ok(prior.clone());
    }

    // Range basis of the prior covariance.
    let eig = SymmetricEigen::new(prior.cov.clone());
    let max = eig.eigenvalues.max();
    let cutoff = RANK_TOLERANCE * max;
    let keep: Vec<usize> = (0..prior.len()).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
    if keep.is_empty() {
        return Ok(prior.clone());
    }
    let basis = eig.eigenvectors.select_columns(&keep);
    let prior_precision = DMatrix::from_diagonal(&DVector::from_iterator(
        keep.len(),
        keep.iter().map(|&i| 1.0 / eig.eigenvalues[i]),
    ));

    let d = keep.len();
    let mut precision = DMatrix::<f64>::zeros(d, d);
    let mut information = DVector::<f64>::zeros(d);
    for u in updates {
        let reduced = symmetrize(basis.transpose() * &u.cov * &basis);
        let shift = basis.transpose() * (&u.mean - &prior.mean);
        let p = pseudo_inverse(&reduced);
        information += &p * shift;
        precision += p;
    }
    precision -= prior_precision * (updates.len() as f64 - 1.0);
    let precision = symmetrize(precision);

    let peig = SymmetricEigen::new(precision.clone());
    let pmax = peig.eigenvalues.amax();
    let pmin = peig.eigenvalues.min();
    if !(pmin > RANK_TOLERANCE * pmax) {
        return Err(Error::PoolingValidity(format!(
            "pooled precision is not positive definite on the prior range (min eigenvalue {pmin:e}, max {pmax:e})"
        )));
    }
    let inv = peig.eigenvalues.map(|v| 1.0 / v);
    let pooled_cov = &peig.eigenvectors * DMatrix::from_diagonal(&inv) * peig.eigenvectors.transpose();
    let pooled_shift = &pooled_cov * information;

    let mean = &prior.mean + &basis * pooled_shift;
    let cov = &basis * pooled_cov * basis.transpose();
    Ok(SecondOrderSpec::from_parts(
        prior.labels.clone(),
        prior.index.clone(),
        mean,
        cov,
    ))
}

fn check_marginal(spec: &SecondOrderSpec, k: usize, src: &KinematicSource) -> Result<()> {
    let (m, v) = (spec.mean[k], spec.cov[(k, k)]);
    if (m - src.f0).abs() > MARGINAL_TOLERANCE * m.abs().max(1.0) {
        return Err(Error::Consistency {
            label: src.label.clone(),
            detail: format!("prior mean {m} differs from f0 = {}", src.f0),
        });
    }
    if (v - src.q0).abs() > MARGINAL_TOLERANCE * v.abs().max(1.0) {
        return Err(Error::Consistency {
            label: src.label.clone(),
            detail: format!("prior variance {v} differs from q0 = {}", src.q0),
        });
    }
    Ok(())
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
