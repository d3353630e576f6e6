//! End-to-end learning, repeated k-fold cross-validation of genetic and causal
//! predictions, and averaging of the per-fold networks.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{arc_strengths, averaged_network, estimate_threshold, ArcStrengthTable, ThresholdEstimate};
use crate::data::{filter_maf, prune_correlated, Dataset};
use crate::error::{Error, Result};
use crate::frame::NodeData;
use crate::graph::{Dag, Node};
use crate::inference::{predict, PredictionMode};
use crate::params::{fit, FitMethod, GaussianBn, LocalDistribution};
use crate::rng::{derive_seed, rng_from};
use crate::stats::pearson;
use crate::structure::{hill_climb, mb_filter, MbFilterResult, SearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LearnConfig {
    pub search: SearchConfig,
    pub fit: FitMethod,
    /// Drop SNPs below this minor allele frequency before learning.
    #[serde(default)]
    pub min_maf: Option<f64>,
    /// Greedy pruning of SNPs correlated above this |r|.
    #[serde(default)]
    pub prune_r: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub bn: GaussianBn,
    pub filter: MbFilterResult,
    pub score: f64,
    pub best_restart: usize,
    /// SNPs removed by frequency filtering or correlation pruning.
    pub dropped_snps: usize,
}

/// Preprocessing, Markov-blanket filtering, hill-climbing and parameter
/// fitting. The returned network covers traits and filter-retained SNPs.
pub fn learn(data: &Dataset, cfg: &LearnConfig) -> Result<Learned> {
    cfg.search.validate()?;
    let mut g = data.genotypes.clone();
    if let Some(m) = cfg.min_maf {
        g = filter_maf(&g, m)?;
    }
    if let Some(r) = cfg.prune_r {
        g = prune_correlated(&g, r)?;
    }
    let dropped_snps = data.genotypes.n_snps() - g.n_snps();
    let d = data.with_genotypes(g)?;
    let nd = NodeData::from_dataset(&d);
    let filter = mb_filter(&nd, &cfg.search)?;
    log::info!(
        "retained {} of {} nodes after {} CI tests",
        filter.retained.len(),
        nd.p(),
        filter.test_count()
    );
    let hc = hill_climb(&nd, &filter.retained, &cfg.search)?;
    let bn = fit(&hc.dag, &nd, &cfg.fit)?;
    Ok(Learned {
        bn,
        filter,
        score: hc.score,
        best_restart: hc.best_restart,
        dropped_snps,
    })
}

/// Extends `bn` to every node of `universe`; added nodes are isolated with
/// their sample mean and variance in `data`.
pub fn embed_model(bn: &GaussianBn, universe: &[Node], data: &NodeData) -> Result<GaussianBn> {
    let dag = bn.dag().embed(universe)?;
    let locals = universe
        .iter()
        .map(|node| match bn.local(&node.id) {
            Some(l) => Ok(l.clone()),
            None => {
                let col = data.column(data.require(&node.id)?);
                let n = col.len() as f64;
                let m = col.iter().sum::<f64>() / n;
                Ok(LocalDistribution {
                    node: node.id.clone(),
                    intercept: m,
                    coefficients: Default::default(),
                    residual_variance: col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianBn::new(dag, locals, bn.fit_method().clone())
}

/// Pearson correlation between predictions and observations; constant
/// predictions carry no ranking information and score 0.
pub fn predictive_correlation(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(observed) {
        return Err(Error::UndefinedCorrelation("observed values are constant".into()));
    }
    if constant(predicted) {
        return Ok(0.0);
    }
    pearson(predicted, observed)
}

/// Correlation of held-out predictions pooled over folds after centering
/// both predictions and observations within each fold, so that fold-to-fold
/// shifts of the training means do not enter the score.
pub fn pooled_correlation(folds: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut pred = Vec::new();
    let mut obs = Vec::new();
    for (p, o) in folds {
        if p.is_empty() {
            continue;
        }
        let mp = p.iter().sum::<f64>() / p.len() as f64;
        let mo = o.iter().sum::<f64>() / o.len() as f64;
        // exact zeros for constant predictions keep them recognisable
        if p.iter().all(|&x| x == p[0]) {
            pred.extend(std::iter::repeat_n(0.0, p.len()));
        } else {
            pred.extend(p.iter().map(|x| x - mp));
        }
        obs.extend(o.iter().map(|x| x - mo));
    }
    predictive_correlation(&pred, &obs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub runs: usize,
    pub folds: usize,
    pub learn: LearnConfig,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            runs: 10,
            folds: 10,
            learn: LearnConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldRecord {
    pub run: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Reason the fold was left out of the pooled correlations.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraitCv {
    pub trait_id: String,
    /// Per-run pooled correlations.
    pub rho_g: Vec<f64>,
    pub rho_c: Vec<f64>,
    pub rho_g_mean: f64,
    pub rho_g_sd: f64,
    pub rho_c_mean: f64,
    pub rho_c_sd: f64,
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub run: usize,
    pub fold: usize,
    /// Fitted on the training partition, over the full node universe.
    pub bn: GaussianBn,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub traits: Vec<TraitCv>,
    pub folds: Vec<FoldRecord>,
    pub models: Vec<FoldModel>,
}

impl CvReport {
    pub fn networks(&self) -> Vec<Dag> {
        self.models.iter().map(|m| m.bn.dag().clone()).collect()
    }
}

/// Fold label of every row for one run: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64, run: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, &[0x666f_6c64, run as u64]));
    let mut label = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        label[i] = k % folds;
    }
    label
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

struct FoldOutput {
    record: FoldRecord,
    model: Option<GaussianBn>,
    /// Per trait: (genetic, causal, observed) for the held-out rows.
    held_out: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

/// Training and held-out partitions handed to the learner, for auditing.
pub type FoldObserver<'a> = &'a (dyn Fn(usize, usize, &Dataset, &Dataset) + Sync);

pub fn run_cv(data: &Dataset, cfg: &CvConfig) -> Result<CvReport> {
    run_cv_observed(data, cfg, &|_, _, _, _| {})
}

/// As [`run_cv`], calling `observer(run, fold, train, test)` before each fold
/// is learned.
pub fn run_cv_observed(data: &Dataset, cfg: &CvConfig, observer: FoldObserver) -> Result<CvReport> {
    if cfg.folds < 2 || cfg.runs < 1 {
        return Err(Error::Config("cross-validation needs folds >= 2 and runs >= 1".into()));
    }
    if cfg.folds > data.n() {
        return Err(Error::Config(format!("{} folds for {} individuals", cfg.folds, data.n())));
    }
    cfg.learn.search.validate()?;
    let universe = data.nodes();
    let trait_ids = data.traits.trait_ids.clone();
    let labels: Vec<Vec<usize>> = (0..cfg.runs).map(|r| fold_assignment(data.n(), cfg.folds, cfg.seed, r)).collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.runs).flat_map(|r| (0..cfg.folds).map(move |k| (r, k))).collect();

    let outputs: Vec<FoldOutput> = jobs
        .par_iter()
        .map(|&(r, k)| -> Result<FoldOutput> {
            let train_rows: Vec<usize> = (0..data.n()).filter(|&i| labels[r][i] != k).collect();
            let test_rows: Vec<usize> = (0..data.n()).filter(|&i| labels[r][i] == k).collect();
            let mut record = FoldRecord {
                run: r,
                fold: k,
                n_train: train_rows.len(),
                n_test: test_rows.len(),
                skipped: None,
            };
            let train = data.subset_rows(&train_rows);
            let test = data.subset_rows(&test_rows);
            let (train, test) = match (train, test) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("run {r} fold {k} skipped: {e}");
                    record.skipped = Some(e.to_string());
                    return Ok(FoldOutput { record, model: None, held_out: vec![] });
                }
            };
            observer(r, k, &train, &test);
            let mut lc = cfg.learn.clone();
            lc.search.seed = derive_seed(cfg.seed, &[r as u64, k as u64]);
            let learned = match learn(&train, &lc) {
                Ok(l) => l,
                Err(e) if matches!(e, Error::Config(_)) => return Err(e),
                Err(e) => {
                    log::warn!("run {r} fold {k} skipped: {e}");
                    record.skipped = Some(e.to_string());
                    return Ok(FoldOutput { record, model: None, held_out: vec![] });
                }
            };
            let genetic = predict(&learned.bn, &test.genotypes, PredictionMode::Genetic, None)?;
            let causal = predict(&learned.bn, &test.genotypes, PredictionMode::Causal, Some(&test.traits))?;
            let held_out = trait_ids
                .iter()
                .enumerate()
                .map(|(t, id)| {
                    (
                        genetic.column(id).expect("every trait is predicted"),
                        causal.column(id).expect("every trait is predicted"),
                        test.traits.values.column(t).iter().copied().collect(),
                    )
                })
                .collect();
            let model = embed_model(&learned.bn, &universe, &NodeData::from_dataset(&train))?;
            Ok(FoldOutput { record, model: Some(model), held_out })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_run: HashMap<usize, Vec<&FoldOutput>> = HashMap::new();
    for o in &outputs {
        if o.model.is_some() {
            per_run.entry(o.record.run).or_default().push(o);
        }
    }
    let mut traits = Vec::with_capacity(trait_ids.len());
    for (t, id) in trait_ids.iter().enumerate() {
        let mut rho_g = Vec::new();
        let mut rho_c = Vec::new();
        for r in 0..cfg.runs {
            let Some(folds) = per_run.get(&r) else { continue };
            let g: Vec<(Vec<f64>, Vec<f64>)> = folds.iter().map(|o| (o.held_out[t].0.clone(), o.held_out[t].2.clone())).collect();
            let c: Vec<(Vec<f64>, Vec<f64>)> = folds.iter().map(|o| (o.held_out[t].1.clone(), o.held_out[t].2.clone())).collect();
            rho_g.push(pooled_correlation(&g)?);
            rho_c.push(pooled_correlation(&c)?);
        }
        let (gm, gs) = mean_sd(&rho_g);
        let (cm, cs) = mean_sd(&rho_c);
        traits.push(TraitCv {
            trait_id: id.clone(),
            rho_g,
            rho_c,
            rho_g_mean: gm,
            rho_g_sd: gs,
            rho_c_mean: cm,
            rho_c_sd: cs,
        });
    }
    let mut folds = Vec::with_capacity(outputs.len());
    let mut models = Vec::new();
    for o in outputs {
        if let Some(bn) = o.model {
            models.push(FoldModel {
                run: o.record.run,
                fold: o.record.fold,
                bn,
            });
        }
        folds.push(o.record);
    }
    if models.is_empty() {
        return Err(Error::InsufficientSupport("every cross-validation fold was skipped".into()));
    }
    Ok(CvReport { traits, folds, models })
}

#[derive(Debug, Clone)]
pub struct Averaged {
    pub strengths: ArcStrengthTable,
    pub estimate: ThresholdEstimate,
    /// Threshold actually applied (estimated unless overridden).
    pub threshold: f64,
    /// Averaged structure refitted on the full data.
    pub bn: GaussianBn,
}

/// Arc strengths over `networks`, thresholded structure, and parameters
/// refitted on `data`.
pub fn average_networks(
    networks: &[Dag],
    data: &Dataset,
    method: &FitMethod,
    threshold: Option<f64>,
) -> Result<Averaged> {
    let strengths = arc_strengths(networks)?;
    let estimate = if strengths.arcs.is_empty() {
        ThresholdEstimate { cutpoint: 1.0, threshold: 1.0 }
    } else {
        estimate_threshold(&strengths)?
    };
    let threshold = threshold.unwrap_or(estimate.threshold);
    let dag = averaged_network(&strengths, threshold)?;
    let bn = fit(&dag, &NodeData::from_dataset(data), method)?;
    Ok(Averaged {
        strengths,
        estimate,
        threshold,
        bn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, SimSpec, TraitSpec};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::sync::Mutex;

    fn small_spec(seed: u64) -> SimSpec {
        SimSpec {
            n: 200,
            snps: 20,
            maf_range: (0.2, 0.5),
            ld_rho: 0.3,
            traits: vec![
                TraitSpec { id: "A".into(), tier: 0, intercept: 1.0, parents: vec![("S3".into(), 1.0), ("S11".into(), -0.8)], residual_variance: 1.0 },
                TraitSpec { id: "B".into(), tier: 1, intercept: 0.0, parents: vec![("A".into(), 0.7), ("S17".into(), 0.9)], residual_variance: 1.0 },
            ],
            seed,
        }
    }

    fn cv_cfg(seed: u64) -> CvConfig {
        CvConfig {
            runs: 2,
            folds: 5,
            learn: LearnConfig {
                search: SearchConfig { alpha: 0.01, ..SearchConfig::default() },
                ..LearnConfig::default()
            },
            seed,
        }
    }

    #[test]
    fn correlation_edge_cases() {
        let x = [1.0, 2.0, 4.0, 3.0];
        assert!((predictive_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((predictive_correlation(&neg, &x).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(predictive_correlation(&[2.0; 4], &x).unwrap(), 0.0);
        assert!(matches!(predictive_correlation(&x, &[1.0; 4]), Err(Error::UndefinedCorrelation(_))));
        assert!(predictive_correlation(&x, &x[..3]).is_err());
    }

    #[test]
    fn equal_variance_noise_attenuates_to_inverse_root_two() {
        let mut rng = rng_from(3, &[]);
        let obs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let pred: Vec<f64> = obs.iter().map(|o| o + rng.sample::<f64, _>(StandardNormal)).collect();
        let r = predictive_correlation(&pred, &obs).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn fold_centering_removes_between_fold_shifts() {
        // predictions equal to the (shifted) fold means carry no signal
        let folds = vec![
            (vec![5.0; 3], vec![1.0, 2.0, 3.0]),
            (vec![-5.0; 3], vec![4.0, 0.0, 2.0]),
        ];
        assert_eq!(pooled_correlation(&folds).unwrap(), 0.0);
        let folds = vec![(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]), (vec![10.0, 11.0, 12.0], vec![0.0, 1.0, 2.0])];
        assert!((pooled_correlation(&folds).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn folds_partition_rows(n in 10usize..200, folds in 2usize..10, seed in 0u64..1000, run in 0usize..5) {
            let labels = fold_assignment(n, folds, seed, run);
            let mut sizes = vec![0usize; folds];
            for &l in &labels {
                sizes[l] += 1;
            }
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn learn_finds_generating_arcs() {
        let sim = simulate(&SimSpec { n: 800, ..small_spec(1) }).unwrap();
        let cfg = LearnConfig {
            search: SearchConfig { alpha: 0.01, ..SearchConfig::default() },
            ..LearnConfig::default()
        };
        let learned = learn(&sim.dataset, &cfg).unwrap();
        let arcs = learned.bn.dag().arc_ids();
        for (p, c) in [("S3", "A"), ("S11", "A"), ("A", "B"), ("S17", "B")] {
            assert!(arcs.contains(&(p.to_string(), c.to_string())), "{p}->{c} missing from {arcs:?}");
        }
    }

    #[test]
    fn cv_never_learns_from_held_out_rows() {
        let sim = simulate(&small_spec(2)).unwrap();
        let seen = Mutex::new(Vec::new());
        let report = run_cv_observed(&sim.dataset, &cv_cfg(5), &|r, k, train, test| {
            seen.lock().unwrap().push((r, k, train.individual_ids().to_vec(), test.individual_ids().to_vec()));
        })
        .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 10);
        for r in 0..2 {
            let mut tested: Vec<String> = Vec::new();
            for (_, _, train, test) in seen.iter().filter(|s| s.0 == r) {
                assert!(train.iter().all(|id| !test.contains(id)));
                assert_eq!(train.len() + test.len(), 200);
                tested.extend(test.iter().cloned());
            }
            tested.sort();
            tested.dedup();
            assert_eq!(tested.len(), 200);
        }
        assert_eq!(report.models.len(), 10);
        // every fold model spans the full universe
        for m in &report.models {
            assert_eq!(m.bn.dag().len(), 22);
        }
        for t in &report.traits {
            assert_eq!(t.rho_g.len(), 2);
            assert!(t.rho_g.iter().chain(&t.rho_c).all(|r| (-1.0..=1.0).contains(r)));
            assert!(t.rho_g_sd >= 0.0);
        }
    }

    #[test]
    fn cv_is_deterministic() {
        let sim = simulate(&small_spec(3)).unwrap();
        let a = run_cv(&sim.dataset, &cv_cfg(9)).unwrap();
        let b = run_cv(&sim.dataset, &cv_cfg(9)).unwrap();
        assert_eq!(a.traits, b.traits);
        assert_eq!(a.folds, b.folds);
        assert!(a.models.iter().zip(&b.models).all(|(x, y)| x.bn == y.bn));
    }

    #[test]
    fn averaging_refits_consensus_structure() {
        let sim = simulate(&small_spec(4)).unwrap();
        let report = run_cv(&sim.dataset, &cv_cfg(1)).unwrap();
        let avg = average_networks(&report.networks(), &sim.dataset, &FitMethod::default(), None).unwrap();
        assert_eq!(avg.strengths.network_count, 10);
        assert!(avg.bn.dag().index_of("A").is_some() && avg.bn.dag().index_of("B").is_some());
        assert!(avg.bn.dag().has_arc(avg.bn.dag().index_of("A").unwrap(), avg.bn.dag().index_of("B").unwrap()));
        for i in 0..avg.bn.dag().len() {
            if avg.bn.dag().node(i).is_snp() {
                assert!(!avg.bn.dag().is_isolated(i));
            }
        }
    }
}
