use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix};

use crate::error::Result;
use crate::frame::NodeData;
use crate::graph::Dag;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// BIC of one node's OLS local model from the MLE covariance `cov` of `n`
/// observations: Gaussian log-likelihood minus (|parents| + 2)/2 · ln n.
///
/// Singular or perfectly fitted designs score −∞.
pub fn local_bic(cov: &DMatrix<f64>, n: usize, node: usize, parents: &[usize]) -> f64 {
    let var_y = cov[(node, node)];
    let resid = if parents.is_empty() {
        var_y
    } else {
        let k = parents.len();
        let cpp = DMatrix::from_fn(k, k, |i, j| cov[(parents[i], parents[j])]);
        let cpy = nalgebra::DVector::from_fn(k, |i, _| cov[(parents[i], node)]);
        let Some(chol) = Cholesky::new(cpp.clone()) else {
            return f64::NEG_INFINITY;
        };
        let l = chol.l_dirty();
        let collinear = (0..k).any(|i| l[(i, i)] * l[(i, i)] <= 1e-10 * cpp[(i, i)]);
        if collinear {
            return f64::NEG_INFINITY;
        }
        let beta = chol.solve(&cpy);
        var_y - cpy.dot(&beta)
    };
    if !(resid > 1e-12 * var_y.max(f64::MIN_POSITIVE)) {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let loglik = -0.5 * nf * (LN_2PI + resid.ln() + 1.0);
    loglik - 0.5 * (parents.len() as f64 + 2.0) * nf.ln()
}

/// Decomposable BIC with a cache of local terms keyed by (node, parent set).
#[derive(Debug, Clone)]
pub struct BicScorer {
    cov: DMatrix<f64>,
    n: usize,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl BicScorer {
    pub fn new(data: &NodeData) -> Self {
        BicScorer {
            cov: data.mle_covariance(),
            n: data.n(),
            cache: HashMap::new(),
        }
    }

    /// `parents` must be sorted.
    pub fn local(&mut self, node: usize, parents: &[usize]) -> f64 {
        if let Some(&v) = self.cache.get(&(node, parents.to_vec())) {
            return v;
        }
        let v = local_bic(&self.cov, self.n, node, parents);
        self.cache.insert((node, parents.to_vec()), v);
        v
    }

    /// Score of a graph whose node indices coincide with the data columns.
    pub fn score(&mut self, dag: &Dag) -> f64 {
        (0..dag.len())
            .map(|v| {
                let ps: Vec<usize> = dag.parents(v).iter().copied().collect();
                self.local(v, &ps)
            })
            .sum()
    }
}

/// Total BIC of `dag` on `data`, matching nodes by id.
pub fn bic_score(dag: &Dag, data: &NodeData) -> Result<f64> {
    let cols = dag
        .nodes()
        .iter()
        .map(|n| data.require(&n.id))
        .collect::<Result<Vec<usize>>>()?;
    let sub = data.select(&dag.nodes().iter().map(|n| n.id.as_str()).collect::<Vec<_>>())?;
    debug_assert_eq!(cols.len(), sub.p());
    Ok(BicScorer::new(&sub).score(dag))
}
