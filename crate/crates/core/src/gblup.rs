//! Multivariate GBLUP as a joint Gaussian over phenotypes and random effects,
//! and checks that it is the same object as a Gaussian network.
//!
//! For traits t₁…t_T with per-trait phenotype vectors X_t = μ_t + Z u_t + ε_t,
//! the joint covariance over (X_{t₁},…,X_{t_T}, u_{t₁},…,u_{t_T}) is
//! `[Z̃ G Z̃ᵀ + R̃, Z̃ G; (Z̃ G)ᵀ, G]` with Z̃ = I_T ⊗ Z and R̃ = R ⊗ I_n.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::GenotypeMatrix;
use crate::error::{Error, Result};
use crate::graph::{Dag, Node};
use crate::inference::JointGaussian;
use crate::linalg::{cholesky_with_jitter, min_eigenvalue, spd_inverse, symmetrize};
use crate::params::{FitMethod, GaussianBn, LocalDistribution};
use crate::rng::rng_from;

/// How the random-effect design and covariance blocks are formed.
#[derive(Debug, Clone, PartialEq)]
pub enum GPolicy {
    /// One effect per SNP and trait: Z holds allele counts and
    /// G_{ab} = C_ab · I_S for a T×T genetic covariance C.
    Identity { genetic_cov: DMatrix<f64> },
    /// One effect per individual and trait: Z = I_n and
    /// G_{ab} = C_ab · X Xᵀ / scale, with scale defaulting to the SNP count.
    CrossProduct { genetic_cov: DMatrix<f64>, scale: Option<f64> },
    /// Explicit n×q design and T×T grid of q×q blocks.
    Blocks { design: DMatrix<f64>, blocks: Vec<Vec<DMatrix<f64>>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GblupModel {
    pub trait_ids: Vec<String>,
    pub individual_ids: Vec<String>,
    /// Labels of the q random-effect coordinates (SNPs or individuals).
    pub effect_ids: Vec<String>,
    /// n × q
    pub design: DMatrix<f64>,
    /// T × T grid of q × q covariance blocks.
    pub g_blocks: Vec<Vec<DMatrix<f64>>>,
    /// T × T residual covariance, expanded by I_n.
    pub residual: DMatrix<f64>,
    pub means: Vec<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(Error::Config(format!("{what} must be symmetric")));
    }
    Ok(())
}

fn check_psd(m: &DMatrix<f64>, what: &str, strict: bool) -> Result<()> {
    check_symmetric(m, what)?;
    let ev = min_eigenvalue(m);
    let bad = if strict { ev <= 0.0 } else { ev < -1e-10 * m.amax().max(1.0) };
    if bad {
        return Err(Error::NotPsd {
            what: what.to_string(),
            eigenvalue: ev,
        });
    }
    Ok(())
}

fn assemble(blocks: &[Vec<DMatrix<f64>>], q: usize) -> DMatrix<f64> {
    let t = blocks.len();
    let mut g = DMatrix::zeros(t * q, t * q);
    for a in 0..t {
        for b in 0..t {
            g.view_mut((a * q, b * q), (q, q)).copy_from(&blocks[a][b]);
        }
    }
    g
}

pub fn build_gblup(
    genotypes: &GenotypeMatrix,
    trait_ids: &[String],
    policy: &GPolicy,
    residual: &DMatrix<f64>,
    means: &[f64],
) -> Result<GblupModel> {
    let t = trait_ids.len();
    let n = genotypes.n_individuals();
    if t == 0 {
        return Err(Error::Config("GBLUP needs at least one trait".into()));
    }
    if residual.shape() != (t, t) || means.len() != t {
        return Err(Error::Dimension(format!(
            "{t} traits need a {t}×{t} residual covariance and {t} means"
        )));
    }
    check_psd(residual, "residual covariance", true)?;
    let scaled = |c: &DMatrix<f64>, base: &DMatrix<f64>| -> Result<Vec<Vec<DMatrix<f64>>>> {
        if c.shape() != (t, t) {
            return Err(Error::Dimension(format!("genetic covariance must be {t}×{t}")));
        }
        check_psd(c, "genetic covariance", false)?;
        Ok((0..t)
            .map(|a| (0..t).map(|b| base * c[(a, b)]).collect())
            .collect())
    };
    let (design, g_blocks, effect_ids) = match policy {
        GPolicy::Identity { genetic_cov } => {
            let s = genotypes.n_snps();
            (
                genotypes.counts.clone(),
                scaled(genetic_cov, &DMatrix::identity(s, s))?,
                genotypes.snp_ids.clone(),
            )
        }
        GPolicy::CrossProduct { genetic_cov, scale } => {
            let x = &genotypes.counts;
            let scale = scale.unwrap_or(genotypes.n_snps() as f64);
            if !(scale > 0.0) {
                return Err(Error::Config("cross-product scale must be positive".into()));
            }
            let mut k = x * x.transpose() / scale;
            symmetrize(&mut k);
            (
                DMatrix::identity(n, n),
                scaled(genetic_cov, &k)?,
                genotypes.individual_ids.clone(),
            )
        }
        GPolicy::Blocks { design, blocks } => {
            let q = design.ncols();
            if design.nrows() != n
                || blocks.len() != t
                || blocks.iter().any(|r| r.len() != t || r.iter().any(|b| b.shape() != (q, q)))
            {
                return Err(Error::Dimension(format!(
                    "design must be {n}×q and blocks a {t}×{t} grid of q×q matrices"
                )));
            }
            let g = assemble(blocks, q);
            check_psd(&g, "assembled G", false)?;
            (design.clone(), blocks.clone(), (0..q).map(|k| format!("e{k}")).collect())
        }
    };
    Ok(GblupModel {
        trait_ids: trait_ids.to_vec(),
        individual_ids: genotypes.individual_ids.clone(),
        effect_ids,
        design,
        g_blocks,
        residual: residual.clone(),
        means: means.to_vec(),
    })
}

impl GblupModel {
    pub fn n_traits(&self) -> usize {
        self.trait_ids.len()
    }

    pub fn n_individuals(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_effects(&self) -> usize {
        self.design.ncols()
    }

    /// Assembled random-effect covariance G (Tq × Tq).
    pub fn g(&self) -> DMatrix<f64> {
        assemble(&self.g_blocks, self.n_effects())
    }

    /// Phenotype nodes (`trait:individual`, trait order then individual order)
    /// followed by random-effect nodes (`u.trait:effect`).
    pub fn node_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        for t in &self.trait_ids {
            ids.extend(self.individual_ids.iter().map(|i| format!("{t}:{i}")));
        }
        for t in &self.trait_ids {
            ids.extend(self.effect_ids.iter().map(|e| format!("u.{t}:{e}")));
        }
        ids
    }

    /// Network nodes for the joint: phenotypes as same-tier traits, random
    /// effects as latent nodes.
    pub fn nodes(&self) -> Vec<Node> {
        let nx = self.n_traits() * self.n_individuals();
        self.node_ids()
            .iter()
            .enumerate()
            .map(|(k, id)| if k < nx { Node::trait_node(id, 0) } else { Node::latent(id) })
            .collect()
    }
}

pub fn joint_covariance(m: &GblupModel) -> Result<JointGaussian> {
    let (t, n, q) = (m.n_traits(), m.n_individuals(), m.n_effects());
    if m.g_blocks.len() != t || m.residual.shape() != (t, t) || m.means.len() != t {
        return Err(Error::Dimension("GBLUP model blocks do not match its trait count".into()));
    }
    let nx = t * n;
    let mut sigma = DMatrix::zeros(nx + t * q, nx + t * q);
    let z = &m.design;
    for a in 0..t {
        for b in 0..t {
            let g = &m.g_blocks[a][b];
            let zg = z * g;
            let mut xx = &zg * z.transpose();
            for i in 0..n {
                xx[(i, i)] += m.residual[(a, b)];
            }
            sigma.view_mut((a * n, b * n), (n, n)).copy_from(&xx);
            sigma.view_mut((a * n, nx + b * q), (n, q)).copy_from(&zg);
            sigma.view_mut((nx + b * q, a * n), (q, n)).copy_from(&zg.transpose());
            sigma.view_mut((nx + a * q, nx + b * q), (q, q)).copy_from(g);
        }
    }
    symmetrize(&mut sigma);
    let mut mean = DVector::zeros(nx + t * q);
    for a in 0..t {
        mean.rows_mut(a * n, n).fill(m.means[a]);
    }
    Ok(JointGaussian {
        order: m.node_ids(),
        mean,
        covariance: sigma,
    })
}

/// Full-conditional regressions estimated from simulated draws.
#[derive(Debug, Clone, Serialize)]
pub struct SampledRegression {
    pub samples: usize,
    /// `coefficients[(i, j)]`: coefficient of variable j when regressing i on
    /// all other variables (with intercept); zero on the diagonal.
    #[serde(skip)]
    pub coefficients: DMatrix<f64>,
    #[serde(skip)]
    pub standard_errors: DMatrix<f64>,
    pub max_abs_diff: f64,
    pub max_abs_z: f64,
    /// Pairs whose sampled coefficient lies more than 3 standard errors from the implied one.
    pub beyond_3se: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub order: Vec<String>,
    #[serde(skip)]
    pub precision: DMatrix<f64>,
    /// `true` where |Ω_ij| ≤ tol.
    pub zero_pattern: Vec<Vec<bool>>,
    /// `implied[(i, j)] = −Ω_ij / Ω_ii`; zero on the diagonal.
    #[serde(skip)]
    pub implied: DMatrix<f64>,
    pub sampled: Option<SampledRegression>,
    /// Whether diagonal jitter was needed to invert Σ.
    pub jittered: bool,
    pub tol: f64,
}

impl EquivalenceReport {
    /// Sampled coefficients within `tol` of the implied ones.
    pub fn within_tol(&self) -> Option<bool> {
        self.sampled.as_ref().map(|s| s.max_abs_diff <= self.tol)
    }
}

fn implied_from_precision(omega: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(omega.nrows(), omega.ncols(), |i, j| {
        if i == j {
            0.0
        } else {
            -omega[(i, j)] / omega[(i, i)]
        }
    })
}

/// Mean and MLE covariance of `n` draws from `j`, accumulated in seeded blocks.
fn sample_moments(j: &JointGaussian, n: usize, seed: u64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    const CHUNK: usize = 4096;
    let d = j.len();
    let (chol, _) = cholesky_with_jitter(&j.covariance, "GBLUP joint covariance")?;
    let l = chol.l();
    let parts: Vec<(DVector<f64>, DMatrix<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            let mut rng = rng_from(seed, &[0x6762_6c70, c as u64]);
            let z = DMatrix::from_fn(d, rows, |_, _| StandardNormal.sample(&mut rng));
            let x = &l * z;
            (x.column_sum(), &x * x.transpose())
        })
        .collect();
    let mut s1 = DVector::zeros(d);
    let mut s2 = DMatrix::zeros(d, d);
    for (a, b) in parts {
        s1 += a;
        s2 += b;
    }
    let nf = n as f64;
    let centered_mean = s1 / nf;
    let cov = s2 / nf - &centered_mean * centered_mean.transpose();
    Ok((centered_mean + &j.mean, cov))
}

/// OLS of every variable on all others, from the sample covariance of `n`
/// rows: β̂_ij = −Ω̂_ij/Ω̂_ii with standard errors
/// √(s²_i · (Ω̂_jj − Ω̂_ij²/Ω̂_ii) / n), s²_i = n / ((n − d) Ω̂_ii).
pub(crate) fn regressions_from_moments(cov: &DMatrix<f64>, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = cov.nrows();
    let (omega, _) = spd_inverse(cov, "sample covariance")?;
    let nf = n as f64;
    let beta = implied_from_precision(&omega);
    let se = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            return 0.0;
        }
        let s2 = nf / ((nf - d as f64) * omega[(i, i)]);
        let inv_jj = omega[(j, j)] - omega[(i, j)].powi(2) / omega[(i, i)];
        (s2 * inv_jj / nf).sqrt()
    });
    Ok((beta, se))
}

/// Precision zero pattern and implied coefficients of the GBLUP joint, plus
/// (when `samples > 0`) a Monte Carlo check that full-conditional regressions
/// reproduce them.
pub fn verify_equivalence(m: &GblupModel, tol: f64, samples: usize, seed: u64) -> Result<EquivalenceReport> {
    let j = joint_covariance(m)?;
    let (omega, jittered) = spd_inverse(&j.covariance, "GBLUP joint covariance")?;
    if jittered {
        log::warn!("GBLUP covariance needed diagonal jitter; implied coefficients are approximate");
    }
    let d = j.len();
    let zero_pattern = (0..d)
        .map(|r| (0..d).map(|c| omega[(r, c)].abs() <= tol).collect())
        .collect();
    let implied = implied_from_precision(&omega);
    let sampled = if samples > 0 {
        if samples <= d + 1 {
            return Err(Error::Config(format!("need more than {} samples", d + 1)));
        }
        let (_, cov) = sample_moments(&j, samples, seed)?;
        let (coefficients, standard_errors) = regressions_from_moments(&cov, samples)?;
        let mut max_abs_diff = 0.0f64;
        let mut max_abs_z = 0.0f64;
        let mut beyond = 0;
        for r in 0..d {
            for c in (0..d).filter(|&c| c != r) {
                let diff = (coefficients[(r, c)] - implied[(r, c)]).abs();
                let z = diff / standard_errors[(r, c)];
                max_abs_diff = max_abs_diff.max(diff);
                max_abs_z = max_abs_z.max(z);
                if z > 3.0 {
                    beyond += 1;
                }
            }
        }
        Some(SampledRegression {
            samples,
            coefficients,
            standard_errors,
            max_abs_diff,
            max_abs_z,
            beyond_3se: beyond,
            pairs: d * (d - 1),
        })
    } else {
        None
    };
    Ok(EquivalenceReport {
        order: j.order.clone(),
        precision: omega,
        zero_pattern,
        implied,
        sampled,
        jittered,
        tol,
    })
}

/// Gaussian network over `nodes` (aligned with `j.order`) whose arcs follow
/// `order`: each node regresses on its predecessors. With the covariance
/// permuted into `order` and factored as L̃ D L̃ᵀ (L̃ unit lower triangular),
/// the coefficients are the rows of I − L̃⁻¹ and D holds the residual
/// variances. Coefficients with magnitude ≤ `drop_tol` become absent arcs.
pub fn bn_from_covariance<S: AsRef<str>>(
    j: &JointGaussian,
    nodes: &[Node],
    order: &[S],
    drop_tol: f64,
) -> Result<GaussianBn> {
    if nodes.len() != j.len() || nodes.iter().zip(&j.order).any(|(n, o)| &n.id != o) {
        return Err(Error::Dimension("nodes must follow the joint's order".into()));
    }
    if order.len() != j.len() {
        return Err(Error::Dimension("ordering must cover every node".into()));
    }
    let perm: Vec<usize> = order.iter().map(|id| j.require(id.as_ref())).collect::<Result<_>>()?;
    let mut seen = vec![false; perm.len()];
    for &v in &perm {
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::Dimension("ordering repeats a node".into()));
        }
    }
    let d = perm.len();
    let sigma = DMatrix::from_fn(d, d, |a, b| j.covariance[(perm[a], perm[b])]);
    let chol = nalgebra::Cholesky::new(sigma)
        .ok_or_else(|| Error::Singular("covariance is not positive definite in the given ordering".into()))?;
    let l = chol.l();
    let scales: Vec<f64> = (0..d).map(|k| l[(k, k)]).collect();
    let unit = DMatrix::from_fn(d, d, |a, b| l[(a, b)] / scales[b]);
    let inv = unit
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Singular("triangular factor".into()))?;

    let mut dag = Dag::new(nodes.to_vec())?;
    let mut locals: Vec<Option<LocalDistribution>> = vec![None; d];
    for k in 0..d {
        let v = perm[k];
        let mut coefficients = std::collections::BTreeMap::new();
        let mut intercept = j.mean[v];
        for (a, &p) in perm.iter().enumerate().take(k) {
            let b = -inv[(k, a)];
            if b.abs() > drop_tol {
                dag.add_arc_idx(p, v)?;
                intercept -= b * j.mean[p];
                coefficients.insert(j.order[p].clone(), b);
            }
        }
        locals[v] = Some(LocalDistribution {
            node: j.order[v].clone(),
            intercept,
            coefficients,
            residual_variance: scales[k] * scales[k],
        });
    }
    GaussianBn::new(dag, locals.into_iter().map(Option::unwrap).collect(), FitMethod::Ols)
}

/// Network form of a GBLUP model: random effects first, then phenotypes.
pub fn gblup_network(m: &GblupModel, drop_tol: f64) -> Result<GaussianBn> {
    let j = joint_covariance(m)?;
    let nx = m.n_traits() * m.n_individuals();
    let mut order: Vec<String> = j.order[nx..].to_vec();
    order.extend_from_slice(&j.order[..nx]);
    bn_from_covariance(&j, &m.nodes(), &order, drop_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::NodeData;
    use crate::inference::to_joint;
    use crate::params::fit_ols;
    use rand::Rng;

    fn genotypes(n: usize, s: usize, seed: u64) -> GenotypeMatrix {
        let mut rng = rng_from(seed, &[]);
        GenotypeMatrix::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            (0..s).map(|j| format!("S{j}")).collect(),
            DMatrix::from_fn(n, s, |_, _| rng.random_range(0..3) as f64),
        )
        .unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn m2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, b, c])
    }

    #[test]
    fn single_trait_identity_is_random_regression() {
        let g = genotypes(5, 3, 1);
        let m = build_gblup(&g, &ids(&["T"]), &GPolicy::Identity { genetic_cov: DMatrix::from_element(1, 1, 0.5) }, &DMatrix::from_element(1, 1, 2.0), &[1.0]).unwrap();
        let j = joint_covariance(&m).unwrap();
        let z = &g.counts;
        let expected_xx = z * z.transpose() * 0.5 + DMatrix::identity(5, 5) * 2.0;
        assert!((j.covariance.view((0, 0), (5, 5)) - expected_xx).amax() < 1e-12);
        assert!((j.covariance.view((0, 5), (5, 3)) - z * 0.5).amax() < 1e-12);
        assert_eq!(j.mean.rows(0, 5).iter().copied().collect::<Vec<_>>(), vec![1.0; 5]);
        assert_eq!(j.mean.rows(5, 3).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
    }

    /// Direct Kronecker-product assembly of the joint.
    fn kron_oracle(m: &GblupModel) -> DMatrix<f64> {
        let (t, n) = (m.n_traits(), m.n_individuals());
        let zt = DMatrix::identity(t, t).kronecker(&m.design);
        let rt = m.residual.kronecker(&DMatrix::<f64>::identity(n, n));
        let g = m.g();
        let top_left = &zt * &g * zt.transpose() + rt;
        let top_right = &zt * &g;
        let d = top_left.nrows() + g.nrows();
        let mut s = DMatrix::zeros(d, d);
        s.view_mut((0, 0), top_left.shape()).copy_from(&top_left);
        s.view_mut((0, top_left.ncols()), top_right.shape()).copy_from(&top_right);
        s.view_mut((top_left.nrows(), 0), (g.nrows(), top_right.nrows())).copy_from(&top_right.transpose());
        s.view_mut((top_left.nrows(), top_left.ncols()), g.shape()).copy_from(&g);
        s
    }

    #[test]
    fn block_assembly_matches_kronecker_form() {
        let g = genotypes(4, 3, 2);
        for policy in [
            GPolicy::Identity { genetic_cov: m2(1.0, 0.6, 2.0) },
            GPolicy::CrossProduct { genetic_cov: m2(1.0, -0.3, 0.5), scale: None },
        ] {
            let m = build_gblup(&g, &ids(&["A", "B"]), &policy, &m2(1.0, 0.2, 1.5), &[0.0, 3.0]).unwrap();
            let j = joint_covariance(&m).unwrap();
            assert_eq!(j.covariance, kron_oracle(&m));
            assert!(min_eigenvalue(&j.covariance) >= -1e-8);
        }
    }

    #[test]
    fn scalar_case_and_zero_genetic_variance() {
        let g = genotypes(1, 1, 3);
        let ones = GPolicy::Blocks { design: DMatrix::from_element(1, 1, 1.0), blocks: vec![vec![DMatrix::from_element(1, 1, 0.7)]] };
        let m = build_gblup(&g, &ids(&["T"]), &ones, &DMatrix::from_element(1, 1, 0.4), &[0.0]).unwrap();
        assert!((joint_covariance(&m).unwrap().covariance[(0, 0)] - 1.1).abs() < 1e-15);

        let g = genotypes(3, 2, 4);
        let m = build_gblup(&g, &ids(&["A", "B"]), &GPolicy::Identity { genetic_cov: DMatrix::zeros(2, 2) }, &m2(1.0, 0.3, 2.0), &[0.0, 0.0]).unwrap();
        let s = joint_covariance(&m).unwrap().covariance;
        assert_eq!(s.view((0, 0), (6, 6)).into_owned(), m.residual.kronecker(&DMatrix::<f64>::identity(3, 3)));
        assert_eq!(s.view((6, 0), (4, 10)).amax(), 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let g = genotypes(3, 2, 5);
        let bad_r = m2(1.0, 2.0, 1.0);
        match build_gblup(&g, &ids(&["A", "B"]), &GPolicy::Identity { genetic_cov: m2(1.0, 0.0, 1.0) }, &bad_r, &[0.0, 0.0]) {
            Err(Error::NotPsd { eigenvalue, .. }) => assert!((eigenvalue + 1.0).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            build_gblup(&g, &ids(&["A", "B"]), &GPolicy::Identity { genetic_cov: m2(1.0, 3.0, 1.0) }, &m2(1.0, 0.0, 1.0), &[0.0, 0.0]),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            build_gblup(&g, &ids(&["A"]), &GPolicy::Identity { genetic_cov: m2(1.0, 0.0, 1.0) }, &DMatrix::from_element(1, 1, 1.0), &[0.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn independent_traits_have_zero_cross_precision() {
        let g = genotypes(4, 3, 6);
        let m = build_gblup(&g, &ids(&["A", "B"]), &GPolicy::Identity { genetic_cov: m2(1.0, 0.0, 0.5) }, &m2(1.0, 0.0, 2.0), &[0.0, 0.0]).unwrap();
        let rep = verify_equivalence(&m, 1e-8, 0, 0).unwrap();
        let trait_of = |id: &str| id.trim_start_matches("u.").split(':').next().unwrap().to_string();
        for (r, a) in rep.order.iter().enumerate() {
            for (c, b) in rep.order.iter().enumerate() {
                if trait_of(a) != trait_of(b) {
                    assert!(rep.precision[(r, c)].abs() < 1e-8);
                    assert!(rep.zero_pattern[r][c]);
                }
            }
        }
    }

    #[test]
    fn saturated_three_variables() {
        let g = genotypes(1, 2, 7);
        let policy = GPolicy::Blocks { design: DMatrix::from_element(1, 2, 1.0), blocks: vec![vec![m2(1.0, 0.5, 1.0)]] };
        let m = build_gblup(&g, &ids(&["T"]), &policy, &DMatrix::from_element(1, 1, 1.0), &[0.0]).unwrap();
        let rep = verify_equivalence(&m, 1e-8, 0, 0).unwrap();
        assert_eq!(rep.order.len(), 3);
        for r in 0..3 {
            for c in (0..3).filter(|&c| c != r) {
                assert!(!rep.zero_pattern[r][c]);
            }
        }
    }

    #[test]
    fn moment_regressions_match_ols() {
        // random 4-variable sample: closed-form regressions vs per-node OLS
        let mut rng = rng_from(8, &[]);
        let n = 300;
        let x = DMatrix::from_fn(n, 4, |i, j| {
            let base: f64 = StandardNormal.sample(&mut rng);
            base + 0.3 * (i % 7) as f64 * (j as f64 + 1.0) / 7.0
        });
        let nodes: Vec<Node> = (0..4).map(|k| Node::trait_node(&format!("v{k}"), 0)).collect();
        let data = NodeData::new(nodes.clone(), x.clone()).unwrap();
        let (beta, se) = regressions_from_moments(&data.mle_covariance(), n).unwrap();
        for i in 0..4 {
            let mut dag = Dag::new(nodes.clone()).unwrap();
            for j in (0..4).filter(|&j| j != i) {
                dag.add_arc_idx(j, i).unwrap();
            }
            let bn = fit_ols(&dag, &data).unwrap();
            let local = bn.local_at(i);
            // classical OLS standard errors from (X'X)⁻¹ with intercept
            let others: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            let mut design = DMatrix::from_element(n, 4, 1.0);
            for (k, &j) in others.iter().enumerate() {
                design.set_column(k + 1, &x.column(j));
            }
            let xtx_inv = (design.transpose() * &design).try_inverse().unwrap();
            for (k, &j) in others.iter().enumerate() {
                assert!((beta[(i, j)] - local.coefficients[&format!("v{j}")]).abs() < 1e-10);
                let classical = (local.residual_variance * xtx_inv[(k + 1, k + 1)]).sqrt();
                assert!((se[(i, j)] - classical).abs() < 1e-10 * classical.max(1.0));
            }
        }
    }

    #[test]
    fn round_trip_through_network() {
        // more SNPs than individuals keeps X Xᵀ nonsingular
        let g = genotypes(3, 5, 9);
        for policy in [
            GPolicy::Identity { genetic_cov: m2(1.0, 0.4, 0.8) },
            GPolicy::CrossProduct { genetic_cov: m2(0.6, 0.2, 0.9), scale: None },
        ] {
            let m = build_gblup(&g, &ids(&["A", "B"]), &policy, &m2(1.0, 0.3, 1.2), &[1.0, -2.0]).unwrap();
            let bn = gblup_network(&m, 1e-12).unwrap();
            let back = to_joint(&bn);
            let sigma = joint_covariance(&m).unwrap();
            let rel = (&back.covariance - &sigma.covariance).norm() / sigma.covariance.norm();
            assert!(rel < 1e-6, "{rel}");
            assert!((&back.mean - &sigma.mean).amax() < 1e-9);
            assert!(bn.dag().is_tier_valid());
        }
    }

    #[test]
    fn sampled_regressions_are_deterministic() {
        let g = genotypes(2, 2, 10);
        let m = build_gblup(&g, &ids(&["A"]), &GPolicy::Identity { genetic_cov: DMatrix::from_element(1, 1, 1.0) }, &DMatrix::from_element(1, 1, 1.0), &[0.0]).unwrap();
        let a = verify_equivalence(&m, 0.05, 20_000, 3).unwrap();
        let b = verify_equivalence(&m, 0.05, 20_000, 3).unwrap();
        let (sa, sb) = (a.sampled.unwrap(), b.sampled.unwrap());
        assert_eq!(sa.coefficients, sb.coefficients);
        assert_eq!(sa.pairs, 12);
    }
}
