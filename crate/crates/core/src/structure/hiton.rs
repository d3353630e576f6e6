use std::cmp::Ordering;

use rayon::prelude::*;

use super::SearchConfig;
use crate::error::{Error, Result};
use crate::frame::NodeData;
use crate::stats::CiTester;

#[derive(Debug, Clone, PartialEq)]
pub struct HitonResult {
    pub target: String,
    /// Parents-and-children candidates, sorted by id.
    pub pc_set: Vec<String>,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbFilterResult {
    /// Traits plus every SNP found in some trait's parents-and-children set,
    /// in data column order.
    pub retained: Vec<String>,
    pub per_trait: Vec<HitonResult>,
}

impl MbFilterResult {
    pub fn test_count(&self) -> usize {
        self.per_trait.iter().map(|h| h.test_count).sum()
    }
}

/// Calls `f` on every subset of `items` with size in `1..=max_size`, in
/// lexicographic order by size, stopping early once `f` returns true.
fn any_subset(items: &[usize], max_size: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(
        items: &[usize],
        start: usize,
        size: usize,
        buf: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if buf.len() == size {
            return f(buf);
        }
        for i in start..items.len() {
            if items.len() - i < size - buf.len() {
                break;
            }
            buf.push(items[i]);
            let stop = rec(items, i + 1, size, buf, f);
            buf.pop();
            if stop {
                return true;
            }
        }
        false
    }
    let mut buf = Vec::with_capacity(max_size);
    (1..=max_size.min(items.len())).any(|size| rec(items, 0, size, &mut buf, &mut f))
}

struct Counter<'a> {
    tester: &'a CiTester,
    alpha: f64,
    tests: usize,
}

impl Counter<'_> {
    fn independent(&mut self, x: usize, t: usize, z: &[usize]) -> bool {
        self.tests += 1;
        !self.tester.test(x, t, z, self.alpha).dependent
    }
}

/// Index-level semi-interleaved HITON-PC. Returns the admitted candidates and
/// the number of tests performed.
pub(crate) fn hiton_pc_idx(
    target: usize,
    candidates: &[usize],
    names: &[String],
    tester: &CiTester,
    cfg: &SearchConfig,
) -> (Vec<usize>, usize) {
    let mut c = Counter {
        tester,
        alpha: cfg.alpha,
        tests: 0,
    };
    // rank by marginal association: p-value, then |r|, then id
    let mut open: Vec<(usize, f64, f64)> = candidates
        .iter()
        .filter(|&&x| x != target)
        .filter_map(|&x| {
            c.tests += 1;
            let res = tester.test(x, target, &[], cfg.alpha);
            res.dependent.then_some((x, res.p_value, res.r.abs()))
        })
        .collect();
    open.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap_or(Ordering::Equal)
            .then(b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal))
            .then_with(|| names[a.0].cmp(&names[b.0]))
    });

    let mut pc: Vec<usize> = Vec::new();
    for (x, _, _) in open {
        let rejected = any_subset(&pc, cfg.max_cond_size, |z| c.independent(x, target, z));
        if !rejected {
            pc.push(x);
        }
    }

    // backward correction: drop members made independent by the others
    let mut k = 0;
    while k < pc.len() {
        let x = pc[k];
        let others: Vec<usize> = pc.iter().copied().filter(|&v| v != x).collect();
        if any_subset(&others, cfg.max_cond_size, |z| c.independent(x, target, z)) {
            pc.remove(k);
        } else {
            k += 1;
        }
    }
    pc.sort_by(|a, b| names[*a].cmp(&names[*b]));
    (pc, c.tests)
}

/// Learn the parents-and-children candidates of `target` among `candidates`.
pub fn hiton_pc<S: AsRef<str>>(
    target: &str,
    candidates: &[S],
    data: &NodeData,
    cfg: &SearchConfig,
) -> Result<HitonResult> {
    cfg.validate()?;
    let t = data.require(target)?;
    if !data.nodes()[t].is_trait() {
        return Err(Error::Config(format!("'{target}' is not a trait")));
    }
    let cands = candidates
        .iter()
        .map(|s| data.require(s.as_ref()))
        .collect::<Result<Vec<usize>>>()?;
    let tester = CiTester::new(data.values());
    let names: Vec<String> = data.nodes().iter().map(|n| n.id.clone()).collect();
    let (pc, tests) = hiton_pc_idx(t, &cands, &names, &tester, cfg);
    Ok(HitonResult {
        target: target.to_string(),
        pc_set: pc.into_iter().map(|i| names[i].clone()).collect(),
        test_count: tests,
    })
}

/// Keep the traits and every SNP in at least one trait's parents-and-children
/// set. Other traits are candidates for each trait so trait–trait links are
/// visible to the search.
pub fn mb_filter(data: &NodeData, cfg: &SearchConfig) -> Result<MbFilterResult> {
    cfg.validate()?;
    let traits: Vec<usize> = (0..data.p()).filter(|&i| data.nodes()[i].is_trait()).collect();
    if traits.is_empty() {
        return Err(Error::Config("structure learning needs at least one trait".into()));
    }
    let tester = CiTester::new(data.values());
    let names: Vec<String> = data.nodes().iter().map(|n| n.id.clone()).collect();
    let all: Vec<usize> = (0..data.p()).collect();
    let per: Vec<(Vec<usize>, usize)> = traits
        .par_iter()
        .map(|&t| hiton_pc_idx(t, &all, &names, &tester, cfg))
        .collect();

    let mut keep = vec![false; data.p()];
    for &t in &traits {
        keep[t] = true;
    }
    for (pc, _) in &per {
        for &v in pc {
            keep[v] = true;
        }
    }
    let per_trait = traits
        .iter()
        .zip(per)
        .map(|(&t, (pc, tests))| HitonResult {
            target: names[t].clone(),
            pc_set: pc.into_iter().map(|i| names[i].clone()).collect(),
            test_count: tests,
        })
        .collect();
    Ok(MbFilterResult {
        retained: (0..data.p()).filter(|&i| keep[i]).map(|i| names[i].clone()).collect(),
        per_trait,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use crate::rng::rng_from;
    use nalgebra::DMatrix;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn build(n: usize, s: usize, seed: u64, trait_of: impl Fn(&[f64], f64) -> f64) -> NodeData {
        build_with(n, s, seed, |_, _, _| None, trait_of)
    }

    /// `snp_override(rng, i, row)` may replace a SNP column value given earlier ones.
    fn build_with(
        n: usize,
        s: usize,
        seed: u64,
        snp_override: impl Fn(&mut crate::rng::Rng, usize, &[f64]) -> Option<f64>,
        trait_of: impl Fn(&[f64], f64) -> f64,
    ) -> NodeData {
        let mut rng = rng_from(seed, &[]);
        let mut m = DMatrix::zeros(n, s + 1);
        for i in 0..n {
            let mut row = vec![0.0; s];
            for j in 0..s {
                row[j] = match snp_override(&mut rng, j, &row) {
                    Some(v) => v,
                    None => rng.sample(StandardNormal),
                };
            }
            let e: f64 = rng.sample(StandardNormal);
            for j in 0..s {
                m[(i, j)] = row[j];
            }
            m[(i, s)] = trait_of(&row, e);
        }
        let mut nodes: Vec<Node> = (0..s).map(|j| Node::snp(&format!("S{}", j + 1))).collect();
        nodes.push(Node::trait_node("T", 0));
        NodeData::new(nodes, m).unwrap()
    }

    fn snps(d: &NodeData) -> Vec<String> {
        d.nodes().iter().filter(|n| n.is_snp()).map(|n| n.id.clone()).collect()
    }

    fn cfg(alpha: f64) -> SearchConfig {
        SearchConfig {
            alpha,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn subsets_enumerated_in_size_order() {
        let mut seen = Vec::new();
        any_subset(&[1, 2, 3], 2, |z| {
            seen.push(z.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![1], vec![2], vec![3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn null_target_yields_empty_set() {
        let mut empty = 0;
        // five candidates at α = 0.01: P(empty) ≈ 0.99⁵ ≈ 0.95
        for rep in 0..100 {
            let d = build(1000, 5, 100 + rep, |_, e| e);
            let r = hiton_pc("T", &snps(&d), &d, &cfg(0.01)).unwrap();
            if r.pc_set.is_empty() {
                empty += 1;
            }
        }
        assert!(empty >= 90, "{empty}/100");
    }

    #[test]
    fn single_causal_snp_recovered() {
        let mut hits = 0;
        for rep in 0..100 {
            let d = build(300, 8, 200 + rep, |row, e| 2.0 * row[0] + e);
            let r = hiton_pc("T", &snps(&d), &d, &cfg(0.01)).unwrap();
            if r.pc_set == vec!["S1".to_string()] {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn correlated_proxy_excluded() {
        let mut excluded = 0;
        for rep in 0..100 {
            let d = build_with(
                500,
                5,
                300 + rep,
                |rng, j, row| {
                    (j == 1).then(|| 0.9 * row[0] + (1.0f64 - 0.81).sqrt() * rng.sample::<f64, _>(StandardNormal))
                },
                |row, e| 0.5 * row[0] + e,
            );
            let r = hiton_pc("T", &snps(&d), &d, &cfg(0.05)).unwrap();
            assert!(r.pc_set.contains(&"S1".to_string()));
            if !r.pc_set.contains(&"S2".to_string()) {
                excluded += 1;
            }
        }
        assert!(excluded >= 90, "{excluded}/100");
    }

    #[test]
    fn candidate_order_does_not_matter() {
        let d = build(400, 12, 7, |row, e| 0.4 * row[2] - 0.3 * row[5] + 0.2 * row[9] + e);
        let mut c = snps(&d);
        let a = hiton_pc("T", &c, &d, &cfg(0.05)).unwrap();
        let mut rng = rng_from(1, &[]);
        for _ in 0..5 {
            c.shuffle(&mut rng);
            let b = hiton_pc("T", &c, &d, &cfg(0.05)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn non_trait_target_rejected() {
        let d = build(50, 3, 1, |_, e| e);
        assert!(hiton_pc("S1", &["S2"], &d, &cfg(0.05)).is_err());
    }

    #[test]
    fn mb_filter_union_semantics() {
        // traits A and B; S1 → A only; nothing else associated
        let mut rng = rng_from(42, &[]);
        let n = 600;
        let s = 20;
        let mut m = DMatrix::zeros(n, s + 2);
        for i in 0..n {
            for j in 0..s {
                m[(i, j)] = rng.sample(StandardNormal);
            }
            let ea: f64 = rng.sample(StandardNormal);
            let eb: f64 = rng.sample(StandardNormal);
            m[(i, s)] = 1.0 * m[(i, 0)] + ea;
            m[(i, s + 1)] = eb;
        }
        let mut nodes: Vec<Node> = (0..s).map(|j| Node::snp(&format!("S{}", j + 1))).collect();
        nodes.push(Node::trait_node("A", 0));
        nodes.push(Node::trait_node("B", 0));
        let d = NodeData::new(nodes, m).unwrap();
        let r = mb_filter(&d, &cfg(0.01)).unwrap();
        assert_eq!(r.retained, vec!["S1", "A", "B"]);
        assert_eq!(r.per_trait[0].pc_set, vec!["S1"]);

        let again = mb_filter(&d, &cfg(0.01)).unwrap();
        assert_eq!(again, r);
        assert_eq!(again.test_count(), r.test_count());
    }

    #[test]
    fn mb_filter_traits_only_without_signal() {
        let d = build(300, 10, 77, |_, e| e);
        let r = mb_filter(&d, &cfg(0.001)).unwrap();
        assert_eq!(r.retained, vec!["T"]);
    }
}
