//! Joint Gaussian form of a fitted network, exact conditioning, Monte Carlo
//! queries and trait prediction.

mod evidence;
mod predict;
mod sampling;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, submatrix, subvector, symmetrize};
use crate::params::GaussianBn;
use crate::stats::normal_quantile;

pub use evidence::{Evidence, EvidenceValue};
pub use predict::{predict, PredictionMode, Predictions};
pub use sampling::{logic_sample, query, Engine, QueryResult, TargetSummary};

/// Multivariate normal over named nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    pub order: Vec<String>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl JointGaussian {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.order.iter().position(|o| o == id)
    }

    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn sd(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    /// Marginal over `ids`, in the given order.
    pub fn marginal<S: AsRef<str>>(&self, ids: &[S]) -> Result<JointGaussian> {
        let idx = ids
            .iter()
            .map(|s| self.require(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(JointGaussian {
            order: idx.iter().map(|&i| self.order[i].clone()).collect(),
            mean: subvector(&self.mean, &idx),
            covariance: submatrix(&self.covariance, &idx, &idx),
        })
    }

    /// Σ⁻¹; a singular covariance is an error.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        let c = nalgebra::Cholesky::new(self.covariance.clone()).ok_or_else(|| {
            Error::Singular(
                "joint covariance is not positive definite; refit with OLS so every residual \
                 variance is positive, or add diagonal jitter"
                    .into(),
            )
        })?;
        let mut inv = c.inverse();
        symmetrize(&mut inv);
        Ok(inv)
    }

    /// Quantile-bounded interval of one node's marginal, e.g. (0.75, 1.0) for
    /// the top quartile. Probabilities 0 and 1 map to infinite bounds.
    pub fn quantile_interval(&self, id: &str, p_lo: f64, p_hi: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&p_lo) || !(0.0..=1.0).contains(&p_hi) || p_lo > p_hi {
            return Err(Error::Config(format!("invalid quantile range [{p_lo}, {p_hi}]")));
        }
        let i = self.require(id)?;
        let at = |p: f64| match p {
            p if p <= 0.0 => f64::NEG_INFINITY,
            p if p >= 1.0 => f64::INFINITY,
            p => self.mean[i] + self.sd(i) * normal_quantile(p),
        };
        Ok((at(p_lo), at(p_hi)))
    }
}

/// Mean and covariance implied by the local distributions, built by forward
/// substitution along a topological order. Node order follows the network.
pub fn to_joint(bn: &GaussianBn) -> JointGaussian {
    let dag = bn.dag();
    let p = dag.len();
    let topo = dag.topological_order().expect("network is acyclic");
    let mut mean = DVector::zeros(p);
    let mut cov = DMatrix::zeros(p, p);
    for (k, &v) in topo.iter().enumerate() {
        let local = bn.local_at(v);
        let parents: Vec<(usize, f64)> = dag
            .parents(v)
            .iter()
            .map(|&q| (q, bn.coefficient(v, q)))
            .collect();
        mean[v] = local.intercept + parents.iter().map(|&(q, b)| b * mean[q]).sum::<f64>();
        for &u in &topo[..k] {
            let c: f64 = parents.iter().map(|&(q, b)| b * cov[(q, u)]).sum();
            cov[(v, u)] = c;
            cov[(u, v)] = c;
        }
        cov[(v, v)] = local.residual_variance + parents.iter().map(|&(q, b)| b * cov[(q, v)]).sum::<f64>();
    }
    JointGaussian {
        order: dag.nodes().iter().map(|n| n.id.clone()).collect(),
        mean,
        covariance: cov,
    }
}

/// `true` where |Ω_ij| ≤ tol.
pub fn precision_zero_pattern(j: &JointGaussian, tol: f64) -> Result<Vec<Vec<bool>>> {
    let omega = j.precision()?;
    Ok((0..j.len())
        .map(|r| (0..j.len()).map(|c| omega[(r, c)].abs() <= tol).collect())
        .collect())
}

/// Gaussian conditioning on point evidence; the result covers the remaining
/// nodes in their original order.
pub fn condition_exact(j: &JointGaussian, e: &Evidence) -> Result<JointGaussian> {
    let mut given = Vec::new();
    let mut values = Vec::new();
    for (id, v) in e.iter() {
        match v {
            EvidenceValue::Point(x) => {
                given.push(j.require(id)?);
                values.push(*x);
            }
            EvidenceValue::Interval { .. } => {
                return Err(Error::Config(format!(
                    "exact conditioning needs point evidence; '{id}' has an interval"
                )))
            }
        }
    }
    let rest: Vec<usize> = (0..j.len()).filter(|i| !given.contains(i)).collect();
    let order = rest.iter().map(|&i| j.order[i].clone()).collect();
    let mu1 = subvector(&j.mean, &rest);
    let s11 = submatrix(&j.covariance, &rest, &rest);
    if given.is_empty() {
        return Ok(JointGaussian {
            order,
            mean: mu1,
            covariance: s11,
        });
    }
    let s22 = submatrix(&j.covariance, &given, &given);
    let s12 = submatrix(&j.covariance, &rest, &given);
    let (chol, _) = cholesky_with_jitter(&s22, "covariance of the evidence nodes")?;
    let delta = DVector::from_vec(values) - subvector(&j.mean, &given);
    let mean = mu1 + &s12 * chol.solve(&delta);
    let mut cov = s11 - &s12 * chol.solve(&s12.transpose());
    symmetrize(&mut cov);
    Ok(JointGaussian {
        order,
        mean,
        covariance: cov,
    })
}

/// Regression coefficients of `child` on `regressors` implied by the joint,
/// read off the precision of their marginal as −Ω_cj / Ω_cc.
pub fn implied_coefficients<S: AsRef<str>>(j: &JointGaussian, child: &str, regressors: &[S]) -> Result<Vec<f64>> {
    let mut ids: Vec<&str> = vec![child];
    ids.extend(regressors.iter().map(|s| s.as_ref()));
    let omega = j.marginal(&ids)?.precision()?;
    Ok((1..ids.len()).map(|k| -omega[(0, k)] / omega[(0, 0)]).collect())
}
