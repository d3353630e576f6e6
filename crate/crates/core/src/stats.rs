//! Pearson and partial correlations and the Student's t test on them.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Sample Pearson correlation, clamped to [−1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!("need n >= 3, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation matrix of the columns of `data`. Constant columns get zero
/// off-diagonal entries.
pub fn correlation_matrix(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    let p = data.ncols();
    let mut z = data.clone();
    for j in 0..p {
        let mut col = z.column_mut(j);
        let m = col.sum() / n as f64;
        col.add_scalar_mut(-m);
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let mut c = z.tr_mul(&z);
    for j in 0..p {
        c[(j, j)] = 1.0;
    }
    crate::linalg::symmetrize(&mut c);
    c.apply(|v| *v = v.clamp(-1.0, 1.0));
    c
}

/// Partial correlation of `x` and `y` given `z` from a correlation matrix, via
/// the inverse of the submatrix over {x, y} ∪ z.
pub fn partial_corr_from_corr(corr: &DMatrix<f64>, x: usize, y: usize, z: &[usize]) -> Result<f64> {
    if z.is_empty() {
        return Ok(corr[(x, y)]);
    }
    let mut idx = Vec::with_capacity(z.len() + 2);
    idx.push(x);
    idx.push(y);
    idx.extend_from_slice(z);
    let sub = crate::linalg::submatrix(corr, &idx, &idx);
    let singular = || Error::NumericalRank(idx.iter().map(|i| format!("#{i}")).collect());
    match well_conditioned_inverse(sub) {
        Some(omega) => {
            let r = -omega[(0, 1)] / (omega[(0, 0)] * omega[(1, 1)]).sqrt();
            Ok(r.clamp(-1.0, 1.0))
        }
        // x or y is (numerically) a linear function of z: nothing is left to correlate
        None if well_conditioned_inverse(crate::linalg::submatrix(corr, z, z)).is_some() => Ok(0.0),
        None => Err(singular()),
    }
}

fn well_conditioned_inverse(m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = m.nrows();
    let chol = nalgebra::Cholesky::new(m)?;
    let l = chol.l_dirty();
    let min_pivot = (0..p).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    (min_pivot >= 1e-7).then(|| chol.inverse())
}

/// Partial correlation of columns `x` and `y` of `data` given columns `z`.
pub fn partial_corr(x: usize, y: usize, z: &[usize], data: &DMatrix<f64>) -> Result<f64> {
    if z.is_empty() {
        return pearson(data.column(x).as_slice(), data.column(y).as_slice());
    }
    if data.nrows() <= z.len() + 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "n = {} must exceed |z| + 2 = {}",
            data.nrows(),
            z.len() + 2
        )));
    }
    let mut idx = vec![x, y];
    idx.extend_from_slice(z);
    let sub = data.select_columns(&idx);
    let corr = correlation_matrix(&sub);
    let zz: Vec<usize> = (2..idx.len()).collect();
    partial_corr_from_corr(&corr, 0, 1, &zz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiTestResult {
    pub r: f64,
    /// Student's t statistic.
    pub statistic: f64,
    /// n − 2 − |z|; non-positive values mark a degenerate test.
    pub df: i64,
    pub p_value: f64,
    pub dependent: bool,
    /// The test could not be carried out (df ≤ 0 or singular conditioning set)
    /// and conservatively reports independence.
    pub degenerate: bool,
}

/// Two-sided p-value of Student's t with `df` degrees of freedom, through the
/// regularized incomplete beta function.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Test a (partial) correlation `r` estimated from `n` samples with `cond_size`
/// conditioning variables.
pub fn t_test(r: f64, n: usize, cond_size: usize, alpha: f64) -> CiTestResult {
    let df = n as i64 - 2 - cond_size as i64;
    if df <= 0 {
        return CiTestResult {
            r,
            statistic: 0.0,
            df,
            p_value: 1.0,
            dependent: false,
            degenerate: true,
        };
    }
    let dff = df as f64;
    let (statistic, p_value) = if r.abs() >= 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (dff / (1.0 - r * r)).sqrt();
        (t, t_two_sided_p(t, dff))
    };
    CiTestResult {
        r,
        statistic,
        df,
        p_value,
        dependent: p_value <= alpha,
        degenerate: false,
    }
}

fn degenerate(df: i64) -> CiTestResult {
    CiTestResult {
        r: 0.0,
        statistic: 0.0,
        df,
        p_value: 1.0,
        dependent: false,
        degenerate: true,
    }
}

/// Conditional-independence test of columns `x` and `y` given `z`.
pub fn ci_test(x: usize, y: usize, z: &[usize], data: &DMatrix<f64>, alpha: f64) -> Result<CiTestResult> {
    let n = data.nrows();
    if (n as i64) - 2 - (z.len() as i64) <= 0 {
        return Ok(degenerate(n as i64 - 2 - z.len() as i64));
    }
    let r = partial_corr(x, y, z, data)?;
    Ok(t_test(r, n, z.len(), alpha))
}

/// Precomputed correlations over a fixed set of columns, answering repeated
/// conditional-independence queries during structure search.
#[derive(Debug, Clone)]
pub struct CiTester {
    corr: DMatrix<f64>,
    n: usize,
}

impl CiTester {
    pub fn new(data: &DMatrix<f64>) -> Self {
        CiTester {
            corr: correlation_matrix(data),
            n: data.nrows(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn correlations(&self) -> &DMatrix<f64> {
        &self.corr
    }

    /// A numerically singular conditioning set is reported as a degenerate
    /// (independent) result.
    pub fn test(&self, x: usize, y: usize, z: &[usize], alpha: f64) -> CiTestResult {
        let df = self.n as i64 - 2 - z.len() as i64;
        if df <= 0 {
            return degenerate(df);
        }
        match partial_corr_from_corr(&self.corr, x, y, z) {
            Ok(r) => t_test(r, self.n, z.len(), alpha),
            Err(_) => degenerate(df),
        }
    }
}

pub(crate) fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
