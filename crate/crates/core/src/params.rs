//! Local linear-Gaussian distributions fitted by OLS or ridge regression for a
//! fixed structure.
//!
//! Ridge fits standardize each node's predictors internally (population
//! standard deviation), leave the intercept unpenalized, and report
//! coefficients on the original scale. Their residual variance is
//! RSS / (n − tr H(λ)).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::NodeData;
use crate::graph::Dag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDistribution {
    pub node: String,
    pub intercept: f64,
    /// Parent id → regression coefficient.
    pub coefficients: BTreeMap<String, f64>,
    pub residual_variance: f64,
}

impl LocalDistribution {
    /// Conditional mean given parent values supplied by `value_of`.
    pub fn mean_given(&self, mut value_of: impl FnMut(&str) -> f64) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .map(|(p, b)| b * value_of(p))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum LambdaPolicy {
    Fixed { lambda: f64 },
    /// Generalized cross-validation over a grid, per node.
    Gcv { grid: Vec<f64> },
    /// k-fold cross-validated prediction error over a grid, per node.
    KFold { folds: usize, grid: Vec<f64>, seed: u64 },
}

impl LambdaPolicy {
    /// 17 log-spaced values from 1e−4 to 1e4.
    pub fn default_grid() -> Vec<f64> {
        (0..17).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
    }

    pub fn gcv() -> Self {
        LambdaPolicy::Gcv {
            grid: Self::default_grid(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |l: f64| !(l >= 0.0 && l.is_finite());
        match self {
            LambdaPolicy::Fixed { lambda } if bad(*lambda) => {
                Err(Error::Config(format!("ridge lambda must be >= 0, got {lambda}")))
            }
            LambdaPolicy::Gcv { grid } | LambdaPolicy::KFold { grid, .. }
                if grid.is_empty() || grid.iter().any(|&l| bad(l)) =>
            {
                Err(Error::Config("ridge lambda grid must be non-empty and >= 0".into()))
            }
            LambdaPolicy::KFold { folds, .. } if *folds < 2 => {
                Err(Error::Config("k-fold lambda selection needs at least 2 folds".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FitMethod {
    Ols,
    Ridge { lambda: LambdaPolicy },
}

impl Default for FitMethod {
    fn default() -> Self {
        FitMethod::Ridge {
            lambda: LambdaPolicy::gcv(),
        }
    }
}

/// A DAG with one fitted local distribution per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBn {
    dag: Dag,
    locals: Vec<LocalDistribution>,
    fit_method: FitMethod,
}

impl GaussianBn {
    /// `locals` must follow the node order of `dag` and their coefficient keys
    /// must equal each node's parents.
    pub fn new(dag: Dag, locals: Vec<LocalDistribution>, fit_method: FitMethod) -> Result<Self> {
        if locals.len() != dag.len() {
            return Err(Error::ModelFile(format!(
                "{} local distributions for {} nodes",
                locals.len(),
                dag.len()
            )));
        }
        for (i, l) in locals.iter().enumerate() {
            if l.node != dag.id(i) {
                return Err(Error::ModelFile(format!(
                    "local distribution '{}' is out of node order (expected '{}')",
                    l.node,
                    dag.id(i)
                )));
            }
            let parents: Vec<&str> = dag.parents(i).iter().map(|&p| dag.id(p)).collect();
            let mut keys: Vec<&str> = l.coefficients.keys().map(String::as_str).collect();
            let mut ps = parents.clone();
            ps.sort_unstable();
            keys.sort_unstable();
            if ps != keys {
                return Err(Error::ModelFile(format!(
                    "coefficients of '{}' do not match its parents {:?}",
                    l.node, parents
                )));
            }
            if !(l.residual_variance >= 0.0) || !l.intercept.is_finite() {
                return Err(Error::ModelFile(format!("invalid parameters for '{}'", l.node)));
            }
        }
        Ok(GaussianBn {
            dag,
            locals,
            fit_method,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn locals(&self) -> &[LocalDistribution] {
        &self.locals
    }

    pub fn local_at(&self, i: usize) -> &LocalDistribution {
        &self.locals[i]
    }

    pub fn local(&self, id: &str) -> Option<&LocalDistribution> {
        self.dag.index_of(id).map(|i| &self.locals[i])
    }

    pub fn fit_method(&self) -> &FitMethod {
        &self.fit_method
    }

    /// Coefficient of parent `p` in the local distribution of node `i`.
    pub(crate) fn coefficient(&self, i: usize, p: usize) -> f64 {
        self.locals[i].coefficients[self.dag.id(p)]
    }

    /// Sub-network over `keep`; every kept node's parents must also be kept.
    pub fn restrict(&self, keep: &[bool]) -> Result<GaussianBn> {
        for (i, &k) in keep.iter().enumerate() {
            if k && self.dag.parents(i).iter().any(|&p| !keep[p]) {
                return Err(Error::Config(format!(
                    "cannot drop a parent of '{}'",
                    self.dag.id(i)
                )));
            }
        }
        let dag = self.dag.induced(keep);
        let locals = self
            .locals
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(l, _)| l.clone())
            .collect();
        GaussianBn::new(dag, locals, self.fit_method.clone())
    }
}

struct Design {
    /// Centered predictors, n × k.
    x: DMatrix<f64>,
    x_mean: Vec<f64>,
    /// Centered response.
    y: DVector<f64>,
    y_mean: f64,
}

fn design(data: &NodeData, node: usize, parents: &[usize]) -> Design {
    let n = data.n();
    let nf = n as f64;
    let y_raw = data.column(node);
    let y_mean = y_raw.iter().sum::<f64>() / nf;
    let y = DVector::from_iterator(n, y_raw.iter().map(|v| v - y_mean));
    let mut x = DMatrix::zeros(n, parents.len());
    let mut x_mean = Vec::with_capacity(parents.len());
    for (k, &p) in parents.iter().enumerate() {
        let col = data.column(p);
        let m = col.iter().sum::<f64>() / nf;
        x_mean.push(m);
        for (i, v) in col.iter().enumerate() {
            x[(i, k)] = v - m;
        }
    }
    Design { x, x_mean, y, y_mean }
}

fn column_indices(dag: &Dag, data: &NodeData) -> Result<Vec<usize>> {
    dag.nodes().iter().map(|n| data.require(&n.id)).collect()
}

fn finish(
    dag: &Dag,
    v: usize,
    parent_ids: &[usize],
    d: &Design,
    beta: &DVector<f64>,
    residual_variance: f64,
) -> LocalDistribution {
    let intercept = d.y_mean - beta.iter().zip(&d.x_mean).map(|(b, m)| b * m).sum::<f64>();
    LocalDistribution {
        node: dag.id(v).to_string(),
        intercept,
        coefficients: parent_ids
            .iter()
            .zip(beta.iter())
            .map(|(&p, &b)| (dag.id(p).to_string(), b))
            .collect(),
        residual_variance,
    }
}

/// Parents that are (numerically) linear combinations of earlier parents,
/// found by a pivot check on the Cholesky factor of the centered Gram matrix.
fn collinear_parents(x: &DMatrix<f64>) -> Option<Vec<usize>> {
    let k = x.ncols();
    let gram = x.tr_mul(x);
    let mut l = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut d = gram[(j, j)];
        for m in 0..j {
            d -= l[(j, m)] * l[(j, m)];
        }
        if d <= 1e-10 * gram[(j, j)].max(f64::MIN_POSITIVE) {
            // report j together with the earlier parents it loads on
            let mut involved: Vec<usize> = (0..j).filter(|&m| l[(j, m)].abs() > 1e-8 * gram[(j, j)].sqrt()).collect();
            involved.push(j);
            return Some(involved);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..k {
            let mut s = gram[(i, j)];
            for m in 0..j {
                s -= l[(i, m)] * l[(j, m)];
            }
            l[(i, j)] = s / djj;
        }
    }
    None
}

fn ols_local(dag: &Dag, data: &NodeData, cols: &[usize], v: usize) -> Result<LocalDistribution> {
    let parent_ids: Vec<usize> = dag.parents(v).iter().copied().collect();
    let pcols: Vec<usize> = parent_ids.iter().map(|&p| cols[p]).collect();
    let n = data.n();
    let k = pcols.len();
    if n <= k + 1 {
        return Err(Error::RankDeficient {
            node: dag.id(v).to_string(),
            parents: parent_ids.iter().map(|&p| dag.id(p).to_string()).collect(),
        });
    }
    let d = design(data, cols[v], &pcols);
    if let Some(bad) = collinear_parents(&d.x) {
        return Err(Error::RankDeficient {
            node: dag.id(v).to_string(),
            parents: bad.into_iter().map(|j| dag.id(parent_ids[j]).to_string()).collect(),
        });
    }
    let beta = if k == 0 {
        DVector::zeros(0)
    } else {
        let qr = d.x.clone().qr();
        let qty = qr.q().tr_mul(&d.y);
        qr.r()
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Singular(format!("least squares for '{}'", dag.id(v))))?
    };
    let resid = &d.y - &d.x * &beta;
    let rss = resid.norm_squared();
    let var = rss / (n - k - 1) as f64;
    Ok(finish(dag, v, &parent_ids, &d, &beta, var))
}

/// Per-node ordinary least squares; residual variance RSS / (n − |parents| − 1).
pub fn fit_ols(dag: &Dag, data: &NodeData) -> Result<GaussianBn> {
    let cols = column_indices(dag, data)?;
    let locals = (0..dag.len())
        .into_par_iter()
        .map(|v| ols_local(dag, data, &cols, v))
        .collect::<Result<Vec<_>>>()?;
    GaussianBn::new(dag.clone(), locals, FitMethod::Ols)
}

/// Ridge path for one standardized design via its SVD.
struct RidgePath {
    u: DMatrix<f64>,
    d: DVector<f64>,
    v_t: DMatrix<f64>,
    uty: DVector<f64>,
    scale: Vec<f64>,
}

impl RidgePath {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> RidgePath {
        let n = x.nrows() as f64;
        let scale: Vec<f64> = x
            .column_iter()
            .map(|c| (c.norm_squared() / n).sqrt())
            .collect();
        let mut z = x.clone();
        for (j, s) in scale.iter().enumerate() {
            if *s > 0.0 {
                z.column_mut(j).scale_mut(1.0 / s);
            } else {
                z.column_mut(j).fill(0.0);
            }
        }
        let svd = z.svd(true, true);
        let u = svd.u.unwrap();
        let uty = u.tr_mul(y);
        RidgePath {
            u,
            d: svd.singular_values,
            v_t: svd.v_t.unwrap(),
            uty,
            scale,
        }
    }

    fn shrink(&self, lambda: f64) -> DVector<f64> {
        self.d.map(|d| {
            let den = d * d + lambda;
            if den > 0.0 && d > 1e-12 * self.d.max().max(1.0) {
                d / den
            } else {
                0.0
            }
        })
    }

    /// Coefficients on the original (centered) predictor scale.
    fn beta(&self, lambda: f64) -> DVector<f64> {
        let f = self.shrink(lambda);
        let gamma = self.uty.component_mul(&f);
        let bz = self.v_t.tr_mul(&gamma);
        DVector::from_iterator(
            bz.len(),
            bz.iter().zip(&self.scale).map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 }),
        )
    }

    /// tr of the hat matrix including the unpenalized intercept.
    fn effective_df(&self, lambda: f64) -> f64 {
        1.0 + self
            .d
            .iter()
            .zip(self.shrink(lambda).iter())
            .map(|(d, f)| d * f)
            .sum::<f64>()
    }

    fn rss(&self, y: &DVector<f64>, lambda: f64) -> f64 {
        let f = self.shrink(lambda);
        let fitted_coords = DVector::from_iterator(
            self.d.len(),
            self.d.iter().zip(f.iter()).zip(self.uty.iter()).map(|((d, f), c)| d * f * c),
        );
        let fitted = &self.u * fitted_coords;
        (y - fitted).norm_squared()
    }
}

fn select_lambda(d: &Design, policy: &LambdaPolicy, path: &RidgePath) -> f64 {
    let n = d.y.len() as f64;
    let argmin = |grid: &[f64], crit: &dyn Fn(f64) -> f64| {
        let mut best = (f64::INFINITY, grid[0]);
        for &l in grid {
            let c = crit(l);
            if c < best.0 {
                best = (c, l);
            }
        }
        best.1
    };
    match policy {
        LambdaPolicy::Fixed { lambda } => *lambda,
        LambdaPolicy::Gcv { grid } => argmin(grid, &|l| {
            let df = path.effective_df(l);
            let denom = n - df;
            if denom <= 0.0 {
                f64::INFINITY
            } else {
                n * path.rss(&d.y, l) / (denom * denom)
            }
        }),
        LambdaPolicy::KFold { folds, grid, seed } => {
            use rand::seq::SliceRandom;
            let rows = d.y.len();
            let mut order: Vec<usize> = (0..rows).collect();
            order.shuffle(&mut crate::rng::rng_from(*seed, &[0x6c61_6d62]));
            let mut fold_of = vec![0; rows];
            for (k, &i) in order.iter().enumerate() {
                fold_of[i] = k % folds;
            }
            let splits: Vec<(RidgePath, Design, Vec<usize>)> = (0..*folds)
                .filter_map(|f| {
                    let train: Vec<usize> = (0..rows).filter(|&i| fold_of[i] != f).collect();
                    let test: Vec<usize> = (0..rows).filter(|&i| fold_of[i] == f).collect();
                    if train.len() < 2 || test.is_empty() {
                        return None;
                    }
                    let xt = d.x.select_rows(&train);
                    let yt = d.y.select_rows(&train);
                    let xm: Vec<f64> = xt.column_iter().map(|c| c.mean()).collect();
                    let ym = yt.mean();
                    let mut xc = xt.clone();
                    for (j, m) in xm.iter().enumerate() {
                        xc.column_mut(j).add_scalar_mut(-m);
                    }
                    let yc = yt.add_scalar(-ym);
                    let sub = Design { x: xc, x_mean: xm, y: yc, y_mean: ym };
                    Some((RidgePath::new(&sub.x, &sub.y), sub, test))
                })
                .collect();
            argmin(grid, &|l| {
                splits
                    .iter()
                    .map(|(p, sub, test)| {
                        let b = p.beta(l);
                        test.iter()
                            .map(|&i| {
                                let pred = sub.y_mean
                                    + (0..b.len()).map(|j| b[j] * (d.x[(i, j)] - sub.x_mean[j])).sum::<f64>();
                                (d.y[i] - pred).powi(2)
                            })
                            .sum::<f64>()
                    })
                    .sum()
            })
        }
    }
}

fn ridge_local(
    dag: &Dag,
    data: &NodeData,
    cols: &[usize],
    v: usize,
    policy: &LambdaPolicy,
) -> Result<LocalDistribution> {
    let parent_ids: Vec<usize> = dag.parents(v).iter().copied().collect();
    let pcols: Vec<usize> = parent_ids.iter().map(|&p| cols[p]).collect();
    let d = design(data, cols[v], &pcols);
    let n = data.n() as f64;
    if pcols.is_empty() {
        let var = d.y.norm_squared() / (n - 1.0);
        return Ok(finish(dag, v, &parent_ids, &d, &DVector::zeros(0), var));
    }
    let path = RidgePath::new(&d.x, &d.y);
    let lambda = select_lambda(&d, policy, &path);
    let beta = path.beta(lambda);
    let resid = &d.y - &d.x * &beta;
    let df = n - path.effective_df(lambda);
    let var = if df > 0.0 { resid.norm_squared() / df } else { 0.0 };
    Ok(finish(dag, v, &parent_ids, &d, &beta, var))
}

pub fn fit_ridge(dag: &Dag, data: &NodeData, policy: &LambdaPolicy) -> Result<GaussianBn> {
    policy.validate()?;
    let cols = column_indices(dag, data)?;
    let locals = (0..dag.len())
        .into_par_iter()
        .map(|v| ridge_local(dag, data, &cols, v, policy))
        .collect::<Result<Vec<_>>>()?;
    GaussianBn::new(
        dag.clone(),
        locals,
        FitMethod::Ridge {
            lambda: policy.clone(),
        },
    )
}

pub fn fit(dag: &Dag, data: &NodeData, method: &FitMethod) -> Result<GaussianBn> {
    match method {
        FitMethod::Ols => fit_ols(dag, data),
        FitMethod::Ridge { lambda } => fit_ridge(dag, data, lambda),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn table(n: usize, p: usize, seed: u64, f: impl Fn(&mut crate::rng::Rng, &mut [f64])) -> NodeData {
        let mut rng = rng_from(seed, &[]);
        let mut m = DMatrix::zeros(n, p);
        let mut row = vec![0.0; p];
        for i in 0..n {
            f(&mut rng, &mut row);
            for j in 0..p {
                m[(i, j)] = row[j];
            }
        }
        let mut nodes: Vec<Node> = (0..p - 1).map(|j| Node::snp(&format!("x{j}"))).collect();
        nodes.push(Node::trait_node("y", 0));
        NodeData::new(nodes, m).unwrap()
    }

    fn star(d: &NodeData) -> Dag {
        let y = d.p() - 1;
        let mut dag = Dag::new(d.nodes().to_vec()).unwrap();
        for j in 0..y {
            dag.add_arc_idx(j, y).unwrap();
        }
        dag
    }

    fn z(r: &mut crate::rng::Rng) -> f64 {
        r.sample(StandardNormal)
    }

    /// Normal-equations oracle with explicit intercept column.
    fn normal_equations(d: &NodeData, lambda: f64) -> (f64, Vec<f64>) {
        let n = d.n();
        let k = d.p() - 1;
        let mut x = DMatrix::from_element(n, k + 1, 1.0);
        for j in 0..k {
            x.column_mut(j + 1).copy_from_slice(d.column(j));
        }
        let y = DVector::from_column_slice(d.column(k));
        let mut xtx = x.tr_mul(&x);
        for j in 1..=k {
            xtx[(j, j)] += lambda;
        }
        let b = xtx.try_inverse().unwrap() * x.tr_mul(&y);
        (b[0], b.iter().skip(1).copied().collect())
    }

    #[test]
    fn root_node_gets_mean_and_sample_variance() {
        let d = table(50, 2, 1, |r, row| row.iter_mut().for_each(|v| *v = 3.0 + z(r)));
        let dag = Dag::new(d.nodes().to_vec()).unwrap();
        for bn in [fit_ols(&dag, &d).unwrap(), fit_ridge(&dag, &d, &LambdaPolicy::gcv()).unwrap()] {
            let l = bn.local("y").unwrap();
            let col = d.column(1);
            let m = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 49.0;
            assert!((l.intercept - m).abs() < 1e-12);
            assert!((l.residual_variance - var).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_fit() {
        let d = table(20, 2, 2, |r, row| {
            row[0] = z(r);
            row[1] = 3.0 * row[0];
        });
        let bn = fit_ols(&star(&d), &d).unwrap();
        let l = bn.local("y").unwrap();
        assert!((l.coefficients["x0"] - 3.0).abs() < 1e-12);
        assert!(l.residual_variance < 1e-20);
    }

    #[test]
    fn ols_matches_normal_equations() {
        let d = table(200, 5, 3, |r, row| {
            for j in 0..4 {
                row[j] = z(r) + j as f64;
            }
            row[4] = 1.0 + 0.5 * row[0] - row[1] + 0.25 * row[2] + 2.0 * row[3] + z(r);
        });
        let bn = fit_ols(&star(&d), &d).unwrap();
        let (a, b) = normal_equations(&d, 0.0);
        let l = bn.local("y").unwrap();
        assert!((l.intercept - a).abs() < 1e-10);
        for j in 0..4 {
            assert!((l.coefficients[&format!("x{j}")] - b[j]).abs() < 1e-10);
        }
        // residuals orthogonal to every parent
        let y = d.column(4);
        for j in 0..4 {
            let dot: f64 = (0..200)
                .map(|i| {
                    let pred = l.mean_given(|p| d.column(d.index_of(p).unwrap())[i]);
                    (y[i] - pred) * d.column(j)[i]
                })
                .sum();
            assert!(dot.abs() < 1e-8);
        }
        assert_eq!(fit_ols(&star(&d), &d).unwrap(), bn);
    }

    #[test]
    fn collinear_parents_are_named() {
        let d = table(30, 4, 4, |r, row| {
            row[0] = z(r);
            row[1] = z(r);
            row[2] = row[0] - 2.0 * row[1];
            row[3] = z(r);
        });
        match fit_ols(&star(&d), &d) {
            Err(Error::RankDeficient { node, parents }) => {
                assert_eq!(node, "y");
                assert_eq!(parents, vec!["x0", "x1", "x2"]);
            }
            other => panic!("{other:?}"),
        }
        // ridge still fits
        assert!(fit_ridge(&star(&d), &d, &LambdaPolicy::Fixed { lambda: 1.0 }).is_ok());
    }

    #[test]
    fn ridge_limits() {
        let d = table(100, 4, 5, |r, row| {
            for j in 0..3 {
                row[j] = z(r);
            }
            row[3] = 2.0 + row[0] - row[2] + z(r);
        });
        let ols = fit_ols(&star(&d), &d).unwrap();
        let r0 = fit_ridge(&star(&d), &d, &LambdaPolicy::Fixed { lambda: 0.0 }).unwrap();
        let (lo, l0) = (ols.local("y").unwrap(), r0.local("y").unwrap());
        assert!((lo.intercept - l0.intercept).abs() < 1e-6);
        assert!((lo.residual_variance - l0.residual_variance).abs() < 1e-6);
        for (k, v) in &lo.coefficients {
            assert!((v - l0.coefficients[k]).abs() < 1e-6);
        }
        let big = fit_ridge(&star(&d), &d, &LambdaPolicy::Fixed { lambda: 1e8 }).unwrap();
        let lb = big.local("y").unwrap();
        let ybar = d.column(3).iter().sum::<f64>() / 100.0;
        assert!(lb.coefficients.values().all(|b| b.abs() < 1e-4));
        assert!((lb.intercept - ybar).abs() < 1e-4);
        assert!(matches!(
            fit_ridge(&star(&d), &d, &LambdaPolicy::Fixed { lambda: -1.0 }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ridge_matches_direct_regularized_solve() {
        let d = table(150, 3, 6, |r, row| {
            row[0] = z(r);
            row[1] = 0.999 * row[0] + (1.0f64 - 0.999 * 0.999).sqrt() * z(r);
            row[2] = row[0] + row[1] + z(r);
        });
        let bn = fit_ridge(&star(&d), &d, &LambdaPolicy::Fixed { lambda: 1.0 }).unwrap();
        // oracle: standardize predictors (population sd), solve (Z'Z + λI)⁻¹Z'y, back-scale
        let n = 150;
        let mut zmat = DMatrix::zeros(n, 2);
        let mut sds = [0.0; 2];
        for j in 0..2 {
            let c = d.column(j);
            let m = c.iter().sum::<f64>() / n as f64;
            sds[j] = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            for i in 0..n {
                zmat[(i, j)] = (c[i] - m) / sds[j];
            }
        }
        let y = DVector::from_column_slice(d.column(2));
        let yc = y.add_scalar(-y.mean());
        let b = (zmat.tr_mul(&zmat) + DMatrix::identity(2, 2)).try_inverse().unwrap() * zmat.tr_mul(&yc);
        let l = bn.local("y").unwrap();
        assert!((l.coefficients["x0"] - b[0] / sds[0]).abs() < 1e-8);
        assert!((l.coefficients["x1"] - b[1] / sds[1]).abs() < 1e-8);
        assert!(l.coefficients.values().all(|v| v.is_finite()));
    }

    #[test]
    fn ridge_norm_shrinks_with_lambda() {
        let d = table(80, 6, 7, |r, row| {
            for j in 0..5 {
                row[j] = z(r);
            }
            row[5] = row[0] - row[1] + 0.5 * row[4] + z(r);
        });
        let mut last = f64::INFINITY;
        for l in LambdaPolicy::default_grid() {
            let bn = fit_ridge(&star(&d), &d, &LambdaPolicy::Fixed { lambda: l }).unwrap();
            let norm: f64 = bn.local("y").unwrap().coefficients.values().map(|b| b * b).sum();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
    }

    #[test]
    fn selection_policies_are_deterministic() {
        let d = table(120, 5, 8, |r, row| {
            for j in 0..4 {
                row[j] = z(r);
            }
            row[4] = 0.3 * row[0] + z(r);
        });
        for policy in [
            LambdaPolicy::gcv(),
            LambdaPolicy::KFold {
                folds: 5,
                grid: LambdaPolicy::default_grid(),
                seed: 3,
            },
        ] {
            let a = fit_ridge(&star(&d), &d, &policy).unwrap();
            let b = fit_ridge(&star(&d), &d, &policy).unwrap();
            assert_eq!(a, b);
            assert!(a.local("y").unwrap().residual_variance > 0.5);
        }
    }
}
