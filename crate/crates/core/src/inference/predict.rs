use std::collections::HashMap;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::to_joint;
use crate::data::{GenotypeMatrix, TraitMatrix};
use crate::error::{Error, Result};
use crate::graph::NodeKind;
use crate::linalg::{cholesky_with_jitter, submatrix, subvector};
use crate::params::GaussianBn;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// Conditional mean of every trait given all SNPs in the network.
    Genetic,
    /// Each trait's local mean at the observed values of its parents.
    Causal,
}

impl FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genetic" => Ok(PredictionMode::Genetic),
            "causal" => Ok(PredictionMode::Causal),
            _ => Err(Error::Config(format!("unknown prediction mode '{s}' (genetic|causal)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub individual_ids: Vec<String>,
    pub trait_ids: Vec<String>,
    /// individuals × traits
    pub values: DMatrix<f64>,
}

impl Predictions {
    pub fn column(&self, id: &str) -> Option<Vec<f64>> {
        let j = self.trait_ids.iter().position(|t| t == id)?;
        Some(self.values.column(j).iter().copied().collect())
    }
}

/// Conditional means of the non-SNP nodes given each individual's SNPs; rows
/// are individuals, columns follow `hidden`.
fn genetic_means(bn: &GaussianBn, g: &GenotypeMatrix, hidden: &[usize]) -> Result<DMatrix<f64>> {
    let dag = bn.dag();
    let joint = to_joint(bn);
    let snps: Vec<usize> = (0..dag.len()).filter(|&i| dag.node(i).kind == NodeKind::Snp).collect();
    let cols = snps
        .iter()
        .map(|&i| g.snp_index(dag.id(i)).ok_or_else(|| Error::MissingColumn(dag.id(i).to_string())))
        .collect::<Result<Vec<_>>>()?;
    let n = g.n_individuals();
    let mu_h = subvector(&joint.mean, hidden);
    let mut out = DMatrix::zeros(n, hidden.len());
    if snps.is_empty() {
        for i in 0..n {
            out.row_mut(i).copy_from(&mu_h.transpose());
        }
        return Ok(out);
    }
    let s_ss = submatrix(&joint.covariance, &snps, &snps);
    let s_hs = submatrix(&joint.covariance, hidden, &snps);
    let (chol, _) = cholesky_with_jitter(&s_ss, "covariance of the network SNPs")?;
    // gain = Σ_hs Σ_ss⁻¹
    let gain = chol.solve(&s_hs.transpose()).transpose();
    let mu_s = subvector(&joint.mean, &snps);
    for i in 0..n {
        let s = DVector::from_iterator(cols.len(), cols.iter().map(|&c| g.counts[(i, c)]));
        let m = &mu_h + &gain * (s - &mu_s);
        out.row_mut(i).copy_from(&m.transpose());
    }
    Ok(out)
}

/// Trait predictions for new individuals. Genetic mode conditions jointly on
/// all network SNPs; causal mode also needs observed values for every trait
/// that parents another trait.
pub fn predict(
    bn: &GaussianBn,
    genotypes: &GenotypeMatrix,
    mode: PredictionMode,
    observed: Option<&TraitMatrix>,
) -> Result<Predictions> {
    let dag = bn.dag();
    let traits: Vec<usize> = (0..dag.len()).filter(|&i| dag.node(i).is_trait()).collect();
    let latents: Vec<usize> = (0..dag.len())
        .filter(|&i| dag.node(i).kind == NodeKind::Latent)
        .collect();
    let trait_ids: Vec<String> = traits.iter().map(|&i| dag.id(i).to_string()).collect();
    let n = genotypes.n_individuals();
    let values = match mode {
        PredictionMode::Genetic => genetic_means(bn, genotypes, &traits)?,
        PredictionMode::Causal => {
            let needs_latent = traits
                .iter()
                .any(|&t| dag.parents(t).iter().any(|&q| dag.node(q).kind == NodeKind::Latent));
            let latent_means = if needs_latent {
                Some(genetic_means(bn, genotypes, &latents)?)
            } else {
                None
            };
            let observed_rows: Option<Vec<usize>> = observed
                .map(|o| {
                    let pos: HashMap<&str, usize> =
                        o.individual_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
                    genotypes
                        .individual_ids
                        .iter()
                        .map(|id| {
                            pos.get(id.as_str()).copied().ok_or_else(|| {
                                Error::Dimension(format!("individual '{id}' has no observed trait values"))
                            })
                        })
                        .collect()
                })
                .transpose()?;
            let mut out = DMatrix::zeros(n, traits.len());
            for (t, &v) in traits.iter().enumerate() {
                let local = bn.local_at(v);
                let mut sources = Vec::new();
                for &q in dag.parents(v) {
                    let id = dag.id(q);
                    let src = match dag.node(q).kind {
                        NodeKind::Snp => Source::Snp(
                            genotypes.snp_index(id).ok_or_else(|| Error::MissingColumn(id.to_string()))?,
                        ),
                        NodeKind::Trait => {
                            let o = observed.ok_or_else(|| Error::MissingColumn(id.to_string()))?;
                            Source::Trait(o.trait_index(id).ok_or_else(|| Error::MissingColumn(id.to_string()))?)
                        }
                        NodeKind::Latent => Source::Latent(latents.iter().position(|&l| l == q).unwrap()),
                    };
                    sources.push((id, src));
                }
                for i in 0..n {
                    let value_of = |id: &str| -> f64 {
                        let (_, src) = sources.iter().find(|(s, _)| *s == id).unwrap();
                        match *src {
                            Source::Snp(c) => genotypes.counts[(i, c)],
                            Source::Trait(c) => {
                                observed.unwrap().values[(observed_rows.as_ref().unwrap()[i], c)]
                            }
                            Source::Latent(c) => latent_means.as_ref().unwrap()[(i, c)],
                        }
                    };
                    out[(i, t)] = local.mean_given(value_of);
                }
            }
            out
        }
    };
    Ok(Predictions {
        individual_ids: genotypes.individual_ids.clone(),
        trait_ids,
        values,
    })
}

#[derive(Clone, Copy)]
enum Source {
    Snp(usize),
    Trait(usize),
    Latent(usize),
}
