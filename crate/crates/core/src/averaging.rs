//! Arc frequencies across an ensemble of networks, a data-driven inclusion
//! threshold, and the resulting averaged structure.
//!
//! The threshold is chosen by L1 matching of the empirical CDF of arc
//! strengths against a two-point CDF (every arc at 0 or 1).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Dag, Node, NodeKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ArcStrengthTable {
    /// Shared node universe of the averaged networks.
    pub nodes: Vec<Node>,
    /// Observed directed arcs and their relative frequency; absent arcs have 0.
    pub arcs: BTreeMap<(String, String), f64>,
    pub network_count: usize,
}

impl ArcStrengthTable {
    pub fn strength(&self, parent: &str, child: &str) -> f64 {
        self.arcs
            .get(&(parent.to_string(), child.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Arcs by descending frequency, ties by (parent, child) id.
    pub fn ranked(&self) -> Vec<(&str, &str, f64)> {
        let mut v: Vec<(&str, &str, f64)> = self
            .arcs
            .iter()
            .map(|((a, b), f)| (a.as_str(), b.as_str(), *f))
            .collect();
        v.sort_by(|x, y| y.2.total_cmp(&x.2).then_with(|| (x.0, x.1).cmp(&(y.0, y.1))));
        v
    }
}

pub fn arc_strengths(networks: &[Dag]) -> Result<ArcStrengthTable> {
    let first = networks
        .first()
        .ok_or_else(|| Error::Config("arc strengths need at least one network".into()))?;
    let universe = |d: &Dag| -> BTreeSet<(String, NodeKind)> {
        d.nodes().iter().map(|n| (n.id.clone(), n.kind)).collect()
    };
    let reference = universe(first);
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (k, d) in networks.iter().enumerate() {
        if universe(d) != reference {
            return Err(Error::Dimension(format!(
                "network {k} has a different node set from network 0"
            )));
        }
        for arc in d.arc_ids() {
            *counts.entry(arc).or_default() += 1;
        }
    }
    let m = networks.len() as f64;
    let mut nodes = first.nodes().to_vec();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(ArcStrengthTable {
        nodes,
        arcs: counts.into_iter().map(|(k, c)| (k, c as f64 / m)).collect(),
        network_count: networks.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    /// Smallest strength assigned to the "present" group.
    pub cutpoint: f64,
    /// Value for strict `>` comparison that retains exactly the strengths at or
    /// above `cutpoint`: midway to the next lower observed strength, or 0.
    pub threshold: f64,
}

/// L1 distance between the empirical CDF of `sorted` strengths and the
/// two-point CDF putting every strength below `cut` at 0 and the rest at 1,
/// integrated over [0, 1].
pub(crate) fn l1_distance(sorted: &[f64], cut: f64) -> f64 {
    let n = sorted.len() as f64;
    let level = sorted.iter().filter(|&&s| s < cut).count() as f64 / n;
    let mut dist = 0.0;
    let mut x = 0.0;
    let mut below = 0usize;
    for (k, &s) in sorted.iter().enumerate() {
        if s > x {
            dist += (s - x) * (below as f64 / n - level).abs();
            x = s;
        }
        below = k + 1;
    }
    dist + (1.0 - x).max(0.0) * (below as f64 / n - level).abs()
}

pub fn estimate_threshold(t: &ArcStrengthTable) -> Result<ThresholdEstimate> {
    let mut strengths: Vec<f64> = t.arcs.values().copied().collect();
    if strengths.is_empty() {
        return Err(Error::Config("arc strength table is empty".into()));
    }
    strengths.sort_by(f64::total_cmp);
    let mut candidates = strengths.clone();
    candidates.dedup();
    // Distances that tie in exact arithmetic can differ by rounding; those
    // still go to the smaller cut.
    const TIE: f64 = 1e-12;
    let mut best = (f64::INFINITY, candidates[0]);
    for &c in &candidates {
        let d = l1_distance(&strengths, c);
        if d < best.0 - TIE {
            best = (d, c);
        }
    }
    let cutpoint = best.1;
    let lower = candidates.iter().rev().find(|&&c| c < cutpoint);
    Ok(ThresholdEstimate {
        cutpoint,
        threshold: lower.map_or(0.0, |&l| 0.5 * (l + cutpoint)),
    })
}

/// Arcs stronger than `threshold`, added in descending frequency and skipping
/// any that would create a cycle or break tier rules; SNPs left without arcs
/// are dropped, traits always kept.
pub fn averaged_network(t: &ArcStrengthTable, threshold: f64) -> Result<Dag> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let mut dag = Dag::new(t.nodes.clone())?;
    for (a, b, f) in t.ranked() {
        if f <= threshold {
            break;
        }
        if let Err(e) = dag.add_arc(a, b) {
            log::debug!("averaging: skipped {a} -> {b} ({e})");
        }
    }
    let keep: Vec<bool> = (0..dag.len())
        .map(|i| dag.node(i).kind != NodeKind::Snp || !dag.is_isolated(i))
        .collect();
    Ok(dag.induced(&keep))
}
