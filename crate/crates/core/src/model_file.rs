//! Versioned JSON representation of a fitted network.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::averaging::ArcStrengthTable;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Dag, Node};
use crate::params::{FitMethod, GaussianBn, LocalDistribution};
use crate::structure::SearchConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcRecord {
    pub parent: String,
    pub child: String,
    /// Frequency across averaged networks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// SHA-256 over the training data (ids and values).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub nodes: Vec<Node>,
    pub arcs: Vec<ArcRecord>,
    pub locals: Vec<LocalDistribution>,
    pub fit: FitMethod,
    #[serde(default)]
    pub metadata: Metadata,
}

impl ModelFile {
    pub fn from_bn(bn: &GaussianBn, metadata: Metadata, strengths: Option<&ArcStrengthTable>) -> Self {
        let arcs = bn
            .dag()
            .arc_ids()
            .into_iter()
            .map(|(parent, child)| ArcRecord {
                strength: strengths.map(|t| t.strength(&parent, &child)),
                parent,
                child,
            })
            .collect();
        ModelFile {
            schema_version: SCHEMA_VERSION,
            nodes: bn.dag().nodes().to_vec(),
            arcs,
            locals: bn.locals().to_vec(),
            fit: bn.fit_method().clone(),
            metadata,
        }
    }

    pub fn to_bn(&self) -> Result<GaussianBn> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let arcs: Vec<(&str, &str)> = self.arcs.iter().map(|a| (a.parent.as_str(), a.child.as_str())).collect();
        let dag = Dag::with_arcs(self.nodes.clone(), &arcs)?;
        GaussianBn::new(dag, self.locals.clone(), self.fit.clone())
    }

    /// Arc → strength for models that carry strengths.
    pub fn strengths(&self) -> Option<Vec<(String, String, f64)>> {
        self.arcs
            .iter()
            .map(|a| a.strength.map(|s| (a.parent.clone(), a.child.clone(), s)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))
    }
}

/// Hex SHA-256 over individual, SNP and trait ids and the bit patterns of all values.
pub fn fingerprint(d: &Dataset) -> String {
    let mut h = Sha256::new();
    for group in [d.individual_ids(), &d.genotypes.snp_ids, &d.traits.trait_ids] {
        for id in group {
            h.update(id.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
    }
    for v in d.genotypes.counts.iter().chain(d.traits.values.iter()) {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
