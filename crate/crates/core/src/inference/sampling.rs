use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::ContinuousCDF;

use super::{condition_exact, to_joint, Evidence, EvidenceValue};
use crate::error::{Error, Result};
use crate::params::GaussianBn;
use crate::rng::{rng_from, Rng as ChaCha};
use crate::stats::std_normal;

/// Samples per independently seeded block; results do not depend on the
/// number of worker threads.
const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact,
    Logic,
    #[serde(rename = "lw")]
    Weighting,
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Engine::Exact),
            "logic" => Ok(Engine::Logic),
            "lw" | "weighting" => Ok(Engine::Weighting),
            _ => Err(Error::Config(format!("unknown engine '{s}' (exact|logic|lw)"))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Exact => "exact",
            Engine::Logic => "logic",
            Engine::Weighting => "lw",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSummary {
    pub node: String,
    pub mean: f64,
    /// Standard deviation of the conditional distribution.
    pub sd: f64,
    /// Monte Carlo standard error of `mean`; absent for the exact engine.
    pub mc_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub targets: Vec<TargetSummary>,
    pub engine: Engine,
    pub requested_samples: usize,
    /// Accepted samples (logic) or (Σw)²/Σw² (weighting); absent for exact.
    pub effective_sample_size: Option<f64>,
}

struct Sampler {
    topo: Vec<usize>,
    parents: Vec<Vec<(usize, f64)>>,
    intercept: Vec<f64>,
    sd: Vec<f64>,
}

impl Sampler {
    fn new(bn: &GaussianBn) -> Sampler {
        let dag = bn.dag();
        Sampler {
            topo: dag.topological_order().expect("network is acyclic"),
            parents: (0..dag.len())
                .map(|v| dag.parents(v).iter().map(|&q| (q, bn.coefficient(v, q))).collect())
                .collect(),
            intercept: bn.locals().iter().map(|l| l.intercept).collect(),
            sd: bn.locals().iter().map(|l| l.residual_variance.sqrt()).collect(),
        }
    }

    fn local_mean(&self, v: usize, row: &[f64]) -> f64 {
        self.intercept[v] + self.parents[v].iter().map(|&(q, b)| b * row[q]).sum::<f64>()
    }

    fn forward(&self, rng: &mut ChaCha, row: &mut [f64]) {
        for &v in &self.topo {
            let e: f64 = rng.sample(StandardNormal);
            row[v] = self.local_mean(v, row) + self.sd[v] * e;
        }
    }

    /// Likelihood-weighted draw; returns the log weight.
    fn weighted(&self, rng: &mut ChaCha, row: &mut [f64], ev: &[Option<EvidenceValue>]) -> f64 {
        let mut logw = 0.0;
        for &v in &self.topo {
            let mu = self.local_mean(v, row);
            let sd = self.sd[v];
            match ev[v] {
                None => {
                    let e: f64 = rng.sample(StandardNormal);
                    row[v] = mu + sd * e;
                }
                Some(EvidenceValue::Point(x)) => {
                    row[v] = x;
                    logw += if sd > 0.0 {
                        let z = (x - mu) / sd;
                        -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    } else if x == mu {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                Some(EvidenceValue::Interval { lo, hi }) => {
                    if sd == 0.0 {
                        row[v] = mu;
                        if !(lo <= mu && mu <= hi) {
                            logw = f64::NEG_INFINITY;
                        }
                        continue;
                    }
                    let (x, mass) = truncated_normal(rng, mu, sd, lo, hi);
                    row[v] = x;
                    logw += mass.ln();
                }
            }
            if logw == f64::NEG_INFINITY {
                return logw;
            }
        }
        logw
    }
}

/// Draw from N(mu, sd²) restricted to [lo, hi] by inversion; also returns the
/// probability mass of the interval. Upper tails are handled through the
/// survival function to keep precision.
fn truncated_normal(rng: &mut ChaCha, mu: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = std_normal();
    let (a, b) = ((lo - mu) / sd, (hi - mu) / sd);
    let u: f64 = rng.random();
    if a > 0.0 {
        let (sa, sb) = (n.sf(a), n.sf(b));
        let mass = sa - sb;
        if mass <= 0.0 {
            return (mu, 0.0);
        }
        let z = -n.inverse_cdf((sb + u * mass).clamp(f64::MIN_POSITIVE, 1.0));
        (mu + sd * z.clamp(a, b), mass)
    } else {
        let (ca, cb) = (n.cdf(a), n.cdf(b));
        let mass = cb - ca;
        if mass <= 0.0 {
            return (mu, 0.0);
        }
        let z = n.inverse_cdf((ca + u * mass).clamp(f64::MIN_POSITIVE, 1.0));
        (mu + sd * z.clamp(a, b), mass)
    }
}

/// Ancestral samples, one row per draw, columns in network node order.
pub fn logic_sample(bn: &GaussianBn, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let s = Sampler::new(bn);
    let p = bn.dag().len();
    let blocks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            let mut rng = rng_from(seed, &[0x6c6f_6769, c as u64]);
            let mut out = vec![0.0; rows * p];
            for r in 0..rows {
                s.forward(&mut rng, &mut out[r * p..(r + 1) * p]);
            }
            out
        })
        .collect();
    let flat: Vec<f64> = blocks.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(n, p, &flat))
}

/// Weighted moment sums over one block, relative to the block's largest log weight.
#[derive(Clone)]
struct Moments {
    max_logw: f64,
    w: f64,
    w2: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn empty(k: usize) -> Self {
        Moments {
            max_logw: f64::NEG_INFINITY,
            w: 0.0,
            w2: 0.0,
            s1: vec![0.0; k],
            s2: vec![0.0; k],
        }
    }

    fn from_block(logw: &[f64], values: &[Vec<f64>]) -> Self {
        let k = values.first().map_or(0, Vec::len);
        let mut m = Moments::empty(k);
        m.max_logw = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m.max_logw == f64::NEG_INFINITY {
            return m;
        }
        for (lw, xs) in logw.iter().zip(values) {
            let w = (lw - m.max_logw).exp();
            if w == 0.0 {
                continue;
            }
            m.w += w;
            m.w2 += w * w;
            for (t, x) in xs.iter().enumerate() {
                m.s1[t] += w * x;
                m.s2[t] += w * x * x;
            }
        }
        m
    }

    fn merge(mut self, other: Moments) -> Moments {
        if other.max_logw == f64::NEG_INFINITY {
            return self;
        }
        if self.max_logw == f64::NEG_INFINITY {
            return other;
        }
        let top = self.max_logw.max(other.max_logw);
        let (a, b) = ((self.max_logw - top).exp(), (other.max_logw - top).exp());
        self.w = a * self.w + b * other.w;
        self.w2 = a * a * self.w2 + b * b * other.w2;
        for t in 0..self.s1.len() {
            self.s1[t] = a * self.s1[t] + b * other.s1[t];
            self.s2[t] = a * self.s2[t] + b * other.s2[t];
        }
        self.max_logw = top;
        self
    }
}

/// Conditional means and standard deviations of `targets` given `evidence`.
///
/// `exact` needs point evidence; `logic` rejects draws outside interval
/// evidence and refuses point evidence; `lw` fixes point evidence with a
/// density weight and draws interval evidence from its truncated local
/// distribution, weighting by the interval's local probability mass.
pub fn query<S: AsRef<str>>(
    bn: &GaussianBn,
    targets: &[S],
    evidence: &Evidence,
    engine: Engine,
    n: usize,
    seed: u64,
) -> Result<QueryResult> {
    let dag = bn.dag();
    let mut ev = evidence.aligned(dag)?;
    if targets.is_empty() {
        return Err(Error::Config("no query targets".into()));
    }
    let tidx = targets
        .iter()
        .map(|t| {
            let t = t.as_ref();
            let i = dag.index_of(t).ok_or_else(|| Error::UnknownNode(t.to_string()))?;
            if ev[i].is_some() {
                return Err(Error::Config(format!("'{t}' is both a target and evidence")));
            }
            Ok(i)
        })
        .collect::<Result<Vec<_>>>()?;
    let joint = to_joint(bn);

    if engine == Engine::Exact {
        let cond = condition_exact(&joint, evidence)?;
        let targets = tidx
            .iter()
            .map(|&i| {
                let k = cond.index_of(dag.id(i)).expect("target survives conditioning");
                TargetSummary {
                    node: dag.id(i).to_string(),
                    mean: cond.mean[k],
                    sd: cond.sd(k),
                    mc_se: None,
                }
            })
            .collect();
        return Ok(QueryResult {
            targets,
            engine,
            requested_samples: 0,
            effective_sample_size: None,
        });
    }

    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if engine == Engine::Logic {
        if let Some((id, _)) = evidence.iter().find(|(_, v)| matches!(v, EvidenceValue::Point(_))) {
            return Err(Error::Config(format!(
                "logic sampling cannot condition on the point value of '{id}'; use the exact or lw engine"
            )));
        }
    }

    // an interval covering the whole line carries no information
    for e in ev.iter_mut() {
        if matches!(e, Some(EvidenceValue::Interval { lo, hi }) if *lo == f64::NEG_INFINITY && *hi == f64::INFINITY) {
            *e = None;
        }
    }
    // shift by the prior mean to keep the second-moment sums well conditioned
    let shift: Vec<f64> = tidx.iter().map(|&i| joint.mean[i]).collect();
    let s = Sampler::new(bn);
    let p = dag.len();
    let blocks: Vec<Moments> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            let mut rng = rng_from(seed, &[0x7175_6572, c as u64]);
            let mut row = vec![0.0; p];
            let mut logw = Vec::with_capacity(rows);
            let mut vals = Vec::with_capacity(rows);
            for _ in 0..rows {
                let lw = match engine {
                    Engine::Logic => {
                        s.forward(&mut rng, &mut row);
                        let ok = ev.iter().zip(&row).all(|(e, &x)| e.is_none_or(|e| e.contains(x)));
                        if ok {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    }
                    _ => s.weighted(&mut rng, &mut row, &ev),
                };
                logw.push(lw);
                vals.push(tidx.iter().zip(&shift).map(|(&i, m)| row[i] - m).collect());
            }
            Moments::from_block(&logw, &vals)
        })
        .collect();
    let total = blocks
        .into_iter()
        .fold(Moments::empty(tidx.len()), Moments::merge);
    if !(total.w > 0.0) {
        return Err(Error::InsufficientSupport(match engine {
            Engine::Logic => "no sample satisfied the evidence".into(),
            _ => "all importance weights are zero".into(),
        }));
    }
    let ess = total.w * total.w / total.w2;
    let targets = tidx
        .iter()
        .enumerate()
        .map(|(t, &i)| {
            let m = total.s1[t] / total.w;
            let var = (total.s2[t] / total.w - m * m).max(0.0);
            TargetSummary {
                node: dag.id(i).to_string(),
                mean: m + shift[t],
                sd: var.sqrt(),
                mc_se: Some((var / ess).sqrt()),
            }
        })
        .collect();
    Ok(QueryResult {
        targets,
        engine,
        requested_samples: n,
        effective_sample_size: Some(ess),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Dag, Node};
    use crate::inference::tests::{bn_from, random_bn};
    use crate::stats::{normal_cdf, normal_pdf, normal_quantile};

    fn snps(ids: &[&str]) -> Vec<Node> {
        ids.iter().map(|s| Node::snp(s)).collect()
    }

    fn sample_cov(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let n = m.nrows() as f64;
        let means: Vec<f64> = m.column_iter().map(|c| c.sum() / n).collect();
        let mut c = m.clone();
        for (j, mu) in means.iter().enumerate() {
            c.column_mut(j).add_scalar_mut(-mu);
        }
        (means, c.tr_mul(&c) / n)
    }

    #[test]
    fn root_moments_and_determinism() {
        let bn = bn_from(Dag::new(snps(&["x"])).unwrap(), &[(2.0, &[], 3.0)]);
        let n = 200_000;
        let m = logic_sample(&bn, n, 5).unwrap();
        let (mean, cov) = sample_cov(&m);
        let tol = 4.0 / (n as f64).sqrt();
        assert!((mean[0] - 2.0).abs() / 2.0 < tol);
        assert!((cov[(0, 0)] - 3.0).abs() / 3.0 < tol);
        assert_eq!(logic_sample(&bn, 1000, 9).unwrap(), logic_sample(&bn, 1000, 9).unwrap());
        assert_ne!(logic_sample(&bn, 1000, 9).unwrap(), logic_sample(&bn, 1000, 10).unwrap());
        assert!(logic_sample(&bn, 0, 1).is_err());
    }

    /// Each covariance element within 3 Monte Carlo standard errors of the joint.
    fn covariance_within_3se(bn: &GaussianBn, n: usize, seed: u64) {
        let m = logic_sample(bn, n, seed).unwrap();
        let (_, cov) = sample_cov(&m);
        let j = to_joint(bn);
        let s = &j.covariance;
        for a in 0..s.nrows() {
            for b in a..s.ncols() {
                let se = ((s[(a, a)] * s[(b, b)] + s[(a, b)].powi(2)) / n as f64).sqrt();
                assert!((cov[(a, b)] - s[(a, b)]).abs() < 3.0 * se, "({a},{b}) {} vs {}", cov[(a, b)], s[(a, b)]);
            }
        }
    }

    #[test]
    fn two_node_samples_match_joint() {
        let dag = Dag::with_arcs(snps(&["x", "y"]), &[("x", "y")]).unwrap();
        covariance_within_3se(&bn_from(dag, &[(0.0, &[], 1.0), (1.0, &[2.0], 1.0)]), 200_000, 3);
    }

    #[test]
    fn random_network_samples_match_joint() {
        covariance_within_3se(&random_bn(6, 0.5, 42), 1_000_000, 17);
    }

    fn bivariate(rho: f64) -> GaussianBn {
        let dag = Dag::with_arcs(snps(&["x", "y"]), &[("x", "y")]).unwrap();
        bn_from(dag, &[(0.0, &[], 1.0), (0.0, &[rho], 1.0 - rho * rho)])
    }

    #[test]
    fn exact_and_weighting_agree_on_point_evidence() {
        let bn = random_bn(5, 0.6, 77);
        let dag = bn.dag();
        let e = Evidence::new().point(dag.id(1), 0.5).point(dag.id(3), -1.0);
        let targets = [dag.id(0), dag.id(2), dag.id(4)];
        let exact = query(&bn, &targets, &e, Engine::Exact, 0, 0).unwrap();
        let lw = query(&bn, &targets, &e, Engine::Weighting, 1_000_000, 5).unwrap();
        assert_eq!(exact.effective_sample_size, None);
        let ess = lw.effective_sample_size.unwrap();
        assert!(ess > 0.0 && ess <= 1_000_000.0);
        for (x, w) in exact.targets.iter().zip(&lw.targets) {
            assert!((x.mean - w.mean).abs() < 3.0 * w.mc_se.unwrap(), "{x:?} {w:?}");
            assert!((x.sd - w.sd).abs() / x.sd < 0.05);
        }
    }

    #[test]
    fn vacuous_interval_equals_marginal() {
        let bn = bivariate(0.8);
        let e = Evidence::new().interval("x", f64::NEG_INFINITY, f64::INFINITY);
        for engine in [Engine::Logic, Engine::Weighting] {
            let with = query(&bn, &["y"], &e, engine, 50_000, 1).unwrap();
            let without = query(&bn, &["y"], &Evidence::new(), engine, 50_000, 1).unwrap();
            assert_eq!(with.targets, without.targets);
            assert_eq!(with.effective_sample_size, Some(50_000.0));
        }
    }

    #[test]
    fn top_quartile_matches_quadrature() {
        let rho = 0.8;
        let bn = bivariate(rho);
        let (lo, hi) = to_joint(&bn).quantile_interval("x", 0.75, 1.0).unwrap();
        // E[Y | X > q] = ρ E[X | X > q], by midpoint quadrature of x φ(x) over [q, 10]
        let q = normal_quantile(0.75);
        let steps = 200_000;
        let h = (10.0 - q) / steps as f64;
        let num: f64 = (0..steps)
            .map(|k| {
                let x = q + (k as f64 + 0.5) * h;
                x * normal_pdf(x) * h
            })
            .sum();
        let truth = rho * num / (1.0 - normal_cdf(q));
        let e = Evidence::new().interval("x", lo, hi);
        for engine in [Engine::Logic, Engine::Weighting] {
            let r = query(&bn, &["y"], &e, engine, 1_000_000, 11).unwrap();
            assert!((r.targets[0].mean - truth).abs() < 0.01, "{engine}: {} vs {truth}", r.targets[0].mean);
        }
    }

    #[test]
    fn interval_evidence_with_downstream_point_evidence() {
        // x → y → z, x in an interval and z observed: weighting stays consistent with rejection
        let dag = Dag::with_arcs(snps(&["x", "y", "z"]), &[("x", "y"), ("y", "z")]).unwrap();
        let bn = bn_from(dag, &[(0.0, &[], 1.0), (0.0, &[0.9], 0.5), (0.0, &[1.0], 0.5)]);
        let lw = query(&bn, &["y"], &Evidence::new().interval("x", 0.5, 1.5).interval("z", 0.0, 0.5), Engine::Weighting, 400_000, 2).unwrap();
        let logic = query(&bn, &["y"], &Evidence::new().interval("x", 0.5, 1.5).interval("z", 0.0, 0.5), Engine::Logic, 400_000, 2).unwrap();
        let (a, b) = (&lw.targets[0], &logic.targets[0]);
        let se = (a.mc_se.unwrap().powi(2) + b.mc_se.unwrap().powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 4.0 * se, "{a:?} {b:?}");
    }

    #[test]
    fn query_errors() {
        let bn = bivariate(0.5);
        let e = Evidence::new().point("x", 1.0);
        assert!(matches!(query(&bn, &["y"], &e, Engine::Logic, 100, 0), Err(Error::Config(_))));
        assert!(matches!(query(&bn, &["x"], &e, Engine::Exact, 0, 0), Err(Error::Config(_))));
        assert!(matches!(query(&bn, &["q"], &e, Engine::Exact, 0, 0), Err(Error::UnknownNode(_))));
        let far = Evidence::new().interval("x", 50.0, 60.0);
        assert!(matches!(query(&bn, &["y"], &far, Engine::Logic, 1000, 0), Err(Error::InsufficientSupport(_))));
        let interval = Evidence::new().interval("x", 0.0, 1.0);
        assert!(query(&bn, &["y"], &interval, Engine::Exact, 0, 0).is_err());
        assert_eq!("lw".parse::<Engine>().unwrap(), Engine::Weighting);
        assert!("junction".parse::<Engine>().is_err());
    }

    #[test]
    fn far_tail_interval_is_weighted_not_rejected() {
        let bn = bivariate(0.5);
        let r = query(&bn, &["y"], &Evidence::new().interval("x", 6.0, f64::INFINITY), Engine::Weighting, 20_000, 0).unwrap();
        // E[X | X > 6] ≈ 6.158
        assert!((r.targets[0].mean - 0.5 * 6.158).abs() < 0.05);
    }
}
