//! Synthetic genotype panels with first-order LD decay and phenotypes drawn
//! from a known linear-Gaussian model.
//!
//! Each haplotype is a Gaussian AR(1) chain along the SNP order, thresholded
//! at the allele frequency of each SNP; two haplotypes sum to an allele count.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GenotypeMatrix, TraitMatrix};
use crate::error::{Error, Result};
use crate::graph::{Dag, Node};
use crate::params::{FitMethod, GaussianBn, LocalDistribution};
use crate::rng::rng_from;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitSpec {
    pub id: String,
    pub tier: u32,
    #[serde(default)]
    pub intercept: f64,
    /// Parent id (SNP or earlier trait) and its coefficient.
    #[serde(default)]
    pub parents: Vec<(String, f64)>,
    pub residual_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub snps: usize,
    /// Allele frequencies are drawn uniformly from this range within (0, 0.5].
    pub maf_range: (f64, f64),
    /// Correlation between adjacent latent haplotype values, in [0, 1).
    #[serde(default)]
    pub ld_rho: f64,
    pub traits: Vec<TraitSpec>,
    #[serde(default)]
    pub seed: u64,
}

pub fn snp_id(j: usize) -> String {
    format!("S{}", j + 1)
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::Config(format!("maf range [{lo}, {hi}] must lie in (0, 0.5]")));
        }
        if !(0.0..1.0).contains(&self.ld_rho) {
            return Err(Error::Config("ld_rho must lie in [0, 1)".into()));
        }
        if self.n < 3 || self.snps == 0 {
            return Err(Error::Config("need at least 3 individuals and 1 SNP".into()));
        }
        let snps: std::collections::HashSet<String> = (0..self.snps).map(snp_id).collect();
        let mut seen: HashMap<&str, u32> = HashMap::new();
        for t in self.ordered_traits() {
            if !(t.residual_variance > 0.0) {
                return Err(Error::Config(format!("residual variance of '{}' must be positive", t.id)));
            }
            if snps.contains(&t.id) || seen.contains_key(t.id.as_str()) {
                return Err(Error::Config(format!("duplicate id '{}'", t.id)));
            }
            for (p, b) in &t.parents {
                if !b.is_finite() {
                    return Err(Error::Config(format!("coefficient {p} -> {} is not finite", t.id)));
                }
                if !snps.contains(p) && !seen.contains_key(p.as_str()) {
                    return Err(Error::Config(format!(
                        "parent '{p}' of '{}' is neither a SNP nor an earlier trait",
                        t.id
                    )));
                }
            }
            seen.insert(&t.id, t.tier);
        }
        Ok(())
    }

    /// Traits in generation order: by tier, then as listed.
    pub fn ordered_traits(&self) -> Vec<&TraitSpec> {
        let mut v: Vec<&TraitSpec> = self.traits.iter().collect();
        v.sort_by_key(|t| t.tier);
        v
    }
}

pub fn simulate_genotypes(spec: &SimSpec) -> Result<GenotypeMatrix> {
    spec.validate()?;
    let (lo, hi) = spec.maf_range;
    let mut freq_rng = rng_from(spec.seed, &[0x6672_6571]);
    let cut: Vec<f64> = (0..spec.snps)
        .map(|_| normal_quantile(freq_rng.random_range(lo..=hi)))
        .collect();
    let rho = spec.ld_rho;
    let innov = (1.0 - rho * rho).sqrt();
    let rows: Vec<Vec<f64>> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(spec.seed, &[0x6765_6e6f, i as u64]);
            let mut counts = vec![0.0; spec.snps];
            for _ in 0..2 {
                let mut z: f64 = rng.sample(StandardNormal);
                for (j, c) in counts.iter_mut().enumerate() {
                    if j > 0 {
                        let e: f64 = rng.sample(StandardNormal);
                        z = rho * z + innov * e;
                    }
                    if z < cut[j] {
                        *c += 1.0;
                    }
                }
            }
            counts
        })
        .collect();
    GenotypeMatrix::new(
        (0..spec.n).map(|i| format!("ind{}", i + 1)).collect(),
        (0..spec.snps).map(snp_id).collect(),
        DMatrix::from_fn(spec.n, spec.snps, |i, j| rows[i][j]),
    )
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    /// Generating model; SNPs enter as independent roots with their
    /// empirical mean and variance.
    pub truth: GaussianBn,
}

pub fn simulate_phenotypes(g: &GenotypeMatrix, spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let traits = spec.ordered_traits();
    let n = g.n_individuals();
    let mut column: HashMap<String, Vec<f64>> = HashMap::new();
    for (j, id) in g.snp_ids.iter().enumerate() {
        column.insert(id.clone(), g.counts.column(j).iter().copied().collect());
    }
    for (k, t) in traits.iter().enumerate() {
        let mut rng = rng_from(spec.seed, &[0x7068_656e, k as u64]);
        let sd = t.residual_variance.sqrt();
        let mut values = vec![t.intercept; n];
        for (p, b) in &t.parents {
            let src = column
                .get(p)
                .ok_or_else(|| Error::MissingColumn(p.clone()))?;
            for (v, x) in values.iter_mut().zip(src) {
                *v += b * x;
            }
        }
        for v in values.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += sd * e;
        }
        column.insert(t.id.clone(), values);
    }

    let trait_ids: Vec<String> = traits.iter().map(|t| t.id.clone()).collect();
    let tm = TraitMatrix::new(
        g.individual_ids.clone(),
        trait_ids.clone(),
        DMatrix::from_fn(n, traits.len(), |i, k| column[&trait_ids[k]][i]),
        traits.iter().map(|t| t.tier).collect(),
    )?;
    let dataset = Dataset::new(g.clone(), tm)?;

    let mut nodes: Vec<Node> = g.snp_ids.iter().map(|s| Node::snp(s)).collect();
    nodes.extend(traits.iter().map(|t| Node::trait_node(&t.id, t.tier)));
    let mut dag = Dag::new(nodes)?;
    let mut locals = Vec::with_capacity(dag.len());
    for j in 0..g.n_snps() {
        let c = g.counts.column(j);
        let m = c.mean();
        let var = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        locals.push(LocalDistribution {
            node: g.snp_ids[j].clone(),
            intercept: m,
            coefficients: Default::default(),
            residual_variance: var,
        });
    }
    for t in &traits {
        let mut coefficients = std::collections::BTreeMap::new();
        for (p, b) in &t.parents {
            if *b != 0.0 {
                dag.add_arc(p, &t.id)?;
                *coefficients.entry(p.clone()).or_insert(0.0) += b;
            }
        }
        locals.push(LocalDistribution {
            node: t.id.clone(),
            intercept: t.intercept,
            coefficients,
            residual_variance: t.residual_variance,
        });
    }
    let truth = GaussianBn::new(dag, locals, FitMethod::Ols)?;
    Ok(Simulation { dataset, truth })
}

/// Genotypes and phenotypes from one spec.
pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    let g = simulate_genotypes(spec)?;
    simulate_phenotypes(&g, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::NodeData;
    use crate::inference::to_joint;
    use crate::params::fit_ols;
    use crate::stats::pearson;

    fn spec(n: usize, snps: usize, ld: f64, traits: Vec<TraitSpec>) -> SimSpec {
        SimSpec {
            n,
            snps,
            maf_range: (0.1, 0.5),
            ld_rho: ld,
            traits,
            seed: 12,
        }
    }

    fn t(id: &str, tier: u32, parents: &[(&str, f64)], var: f64) -> TraitSpec {
        TraitSpec {
            id: id.into(),
            tier,
            intercept: 0.0,
            parents: parents.iter().map(|(p, b)| (p.to_string(), *b)).collect(),
            residual_variance: var,
        }
    }

    fn col(g: &GenotypeMatrix, j: usize) -> Vec<f64> {
        g.counts.column(j).iter().copied().collect()
    }

    #[test]
    fn ld_structure() {
        let g0 = simulate_genotypes(&spec(2000, 10, 0.0, vec![])).unwrap();
        let g9 = simulate_genotypes(&spec(2000, 10, 0.9, vec![])).unwrap();
        for j in 0..9 {
            assert!(pearson(&col(&g0, j), &col(&g0, j + 1)).unwrap().abs() < 0.1);
            assert!(pearson(&col(&g9, j), &col(&g9, j + 1)).unwrap() > 0.4);
        }
        assert!(g0.counts.iter().all(|&c| c == 0.0 || c == 1.0 || c == 2.0));
    }

    #[test]
    fn allele_frequencies_within_range() {
        let s = spec(2000, 30, 0.5, vec![]);
        let g = simulate_genotypes(&s).unwrap();
        let n2 = 2.0 * 2000.0;
        for j in 0..30 {
            let p = g.counts.column(j).sum() / n2;
            let se = (0.25 / n2).sqrt();
            assert!(p >= s.maf_range.0 - 3.0 * se && p <= s.maf_range.1 + 3.0 * se, "{p}");
        }
    }

    #[test]
    fn ols_recovers_generating_coefficient() {
        let s = spec(10_000, 3, 0.0, vec![t("T1", 0, &[("S1", 1.5)], 1.0)]);
        let sim = simulate(&s).unwrap();
        let d = NodeData::from_dataset(&sim.dataset);
        let bn = fit_ols(sim.truth.dag(), &d).unwrap();
        assert!((bn.local("T1").unwrap().coefficients["S1"] - 1.5).abs() < 0.05);
    }

    #[test]
    fn zero_coefficients_give_unrelated_trait() {
        let s = spec(10_000, 4, 0.3, vec![t("T1", 0, &[("S1", 0.0), ("S2", 0.0)], 1.0)]);
        let sim = simulate(&s).unwrap();
        assert_eq!(sim.truth.dag().n_arcs(), 0);
        let y: Vec<f64> = sim.dataset.traits.values.column(0).iter().copied().collect();
        for j in 0..4 {
            assert!(pearson(&col(&sim.dataset.genotypes, j), &y).unwrap().abs() < 0.05);
        }
    }

    #[test]
    fn tiers_generated_in_order() {
        // listed child-first; generation still follows tiers
        let s = spec(20_000, 2, 0.0, vec![t("T2", 1, &[("T1", 2.0)], 1.0), t("T1", 0, &[("S1", 0.5)], 1.0)]);
        let sim = simulate(&s).unwrap();
        assert_eq!(sim.dataset.traits.trait_ids, vec!["T1", "T2"]);
        let v = &sim.dataset.traits.values;
        let (a, b): (Vec<f64>, Vec<f64>) = (0..20_000).map(|i| (v[(i, 0)], v[(i, 1)])).unzip();
        let ma = a.iter().sum::<f64>() / 20_000.0;
        let mb = b.iter().sum::<f64>() / 20_000.0;
        let var_a = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / 20_000.0;
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 20_000.0;
        assert!((cov / var_a - 2.0).abs() < 0.05);
    }

    #[test]
    fn truth_moments_match_sample() {
        let s = spec(20_000, 3, 0.0, vec![t("T1", 0, &[("S1", 1.0), ("S3", -0.5)], 0.5), t("T2", 1, &[("T1", 0.8), ("S2", 0.4)], 1.0)]);
        let sim = simulate(&s).unwrap();
        let j = to_joint(&sim.truth);
        let d = NodeData::from_dataset(&sim.dataset);
        let cov = d.mle_covariance();
        let n = 20_000.0;
        for a in 0..5 {
            for b in a..5 {
                let sa = &j.covariance;
                let se = ((sa[(a, a)] * sa[(b, b)] + sa[(a, b)].powi(2)) / n).sqrt();
                assert!((cov[(a, b)] - sa[(a, b)]).abs() < 4.0 * se, "({a},{b})");
            }
        }
    }

    #[test]
    fn determinism_and_validation() {
        let s = spec(50, 5, 0.4, vec![t("T1", 0, &[("S1", 1.0)], 1.0)]);
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let mut bad = s.clone();
        bad.traits[0].parents = vec![("T9".into(), 1.0)];
        assert!(matches!(simulate(&bad), Err(Error::Config(_))));
        let mut bad = s.clone();
        bad.traits[0].residual_variance = 0.0;
        assert!(simulate(&bad).is_err());
        let mut bad = s;
        bad.maf_range = (0.2, 0.7);
        assert!(simulate(&bad).is_err());
    }
}
