//! Command-line front end. `main` only parses arguments and maps errors to
//! exit codes; everything else lives here so integration tests can drive it.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::averaging::ArcStrengthTable;
use crate::data::{load_dataset, load_genotypes, load_tiers_csv, load_traits, parse_tiers, read_header, Dataset, LoadOptions, TierMap};
use crate::dot::to_dot;
use crate::error::{Error, Result};
use crate::format::sig;
use crate::gblup::{build_gblup, gblup_network, joint_covariance, verify_equivalence, GPolicy};
use crate::graph::Dag;
use crate::inference::{predict, query, to_joint, Engine, Evidence, EvidenceValue, PredictionMode};
use crate::model_file::{fingerprint, Metadata, ModelFile};
use crate::params::{FitMethod, LambdaPolicy};
use crate::pipeline::{average_networks, learn, run_cv, CvConfig, LearnConfig};
use crate::simulate::{simulate, SimSpec};
use crate::structure::SearchConfig;

#[derive(Debug, Parser)]
#[command(name = "traitnet", version, about = "Multi-trait Gaussian Bayesian networks for genomic prediction")]
pub struct Cli {
    /// Seed for every randomized step; required by learn, cv, simulate,
    /// sampled queries and sampled GBLUP checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Significant digits in numeric text output.
    #[arg(long, global = true, default_value_t = 6)]
    pub precision: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a network and its parameters from genotype and trait files.
    Learn(LearnArgs),
    /// Predict traits for individuals from a model file.
    Predict(PredictArgs),
    /// Conditional means and standard deviations given evidence.
    Query(QueryArgs),
    /// Repeated k-fold cross-validation of the learning pipeline.
    Cv(CvArgs),
    /// Average the fold networks saved by `cv` and refit parameters.
    Average(AverageArgs),
    /// Simulate genotypes and traits from a JSON settings file.
    Simulate(SimulateArgs),
    /// Check the network form of a multivariate GBLUP model.
    GblupVerify(GblupArgs),
    /// Render a model file as a DOT graph.
    ExportDot(ExportDotArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Genotype CSV: `id,<snp>...` with allele counts 0/1/2.
    #[arg(long)]
    pub genotypes: PathBuf,
    /// Trait CSV: `id,<trait>...`.
    #[arg(long)]
    pub traits: PathBuf,
    /// Trait tiers as `trait=0,trait2=1`; traits not listed default to 0
    /// when neither this nor --tiers-file is given.
    #[arg(long, conflicts_with = "tiers_file")]
    pub tiers: Option<String>,
    /// Two-column `trait,tier` CSV.
    #[arg(long)]
    pub tiers_file: Option<PathBuf>,
    /// Fill missing fields with column means instead of failing.
    #[arg(long)]
    pub impute_mean: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitKind {
    Ols,
    Ridge,
}

#[derive(Debug, Args)]
pub struct LearnOpts {
    /// Size of the conditional-independence tests.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Largest conditioning set in the parents-and-children search.
    #[arg(long, default_value_t = 3)]
    pub max_cond: usize,
    /// Perturbed hill-climbing restarts.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Random moves applied before each restart.
    #[arg(long, default_value_t = 3)]
    pub perturb: usize,
    #[arg(long, value_enum, default_value_t = FitKind::Ridge)]
    pub fit: FitKind,
    /// Fixed ridge penalty (default: chosen by generalized cross-validation).
    #[arg(long, conflicts_with = "lambda_folds")]
    pub lambda: Option<f64>,
    /// Choose the ridge penalty by k-fold cross-validation instead of GCV.
    #[arg(long)]
    pub lambda_folds: Option<usize>,
    /// Drop SNPs with minor allele frequency below this value.
    #[arg(long)]
    pub min_maf: Option<f64>,
    /// Drop one SNP of every pair with |r| above this value.
    #[arg(long)]
    pub prune_r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: LearnOpts,
    /// Output model file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a DOT rendering here.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub genotypes: PathBuf,
    /// Observed traits, needed by causal mode for trait parents.
    #[arg(long)]
    pub traits: Option<PathBuf>,
    #[arg(long, default_value = "genetic")]
    pub mode: PredictionMode,
    #[arg(long)]
    pub impute_mean: bool,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated target nodes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    /// `node=value`, `node in [lo,hi]`, or `node in q[p_lo,p_hi]` for
    /// marginal quantiles; repeatable.
    #[arg(long)]
    pub evidence: Vec<String>,
    /// exact, logic or lw.
    #[arg(long, default_value = "exact")]
    pub engine: Engine,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: LearnOpts,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Receives report.csv, runs.csv, folds.csv and models/.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AverageArgs {
    /// Directory of model files, e.g. the models/ directory written by `cv`.
    #[arg(long)]
    pub models: PathBuf,
    /// Data used to refit parameters on the averaged structure.
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = FitKind::Ridge)]
    pub fit: FitKind,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Strength threshold (default: estimated from the strengths).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Arc strength CSV `parent,child,frequency`.
    #[arg(long)]
    pub strengths: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation settings (n, snps, maf_range, ld_rho, traits).
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the number of individuals.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the number of SNPs.
    #[arg(long)]
    pub snps: Option<usize>,
    /// Receives genotypes.csv, traits.csv, tiers.csv and truth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyKind {
    Identity,
    CrossProduct,
}

#[derive(Debug, Args)]
pub struct GblupArgs {
    #[arg(long)]
    pub genotypes: PathBuf,
    /// Comma-separated trait names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub trait_ids: Vec<String>,
    /// Genetic covariance, rows separated by ';' and entries by ','.
    #[arg(long, allow_hyphen_values = true)]
    pub genetic_cov: String,
    /// Residual covariance in the same layout.
    #[arg(long, allow_hyphen_values = true)]
    pub residual_cov: String,
    /// Trait means (default: zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub means: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PolicyKind::Identity)]
    pub policy: PolicyKind,
    /// Divisor of X Xᵀ under cross-product (default: SNP count).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Monte Carlo draws for the regression check (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Per-pair CSV of implied and sampled coefficients.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportDotArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args`, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // A second call (e.g. from tests in one process) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let ctx = Ctx { seed: cli.seed, digits: cli.precision.max(1) };
    match &cli.command {
        Command::Learn(a) => cmd_learn(&ctx, a),
        Command::Predict(a) => cmd_predict(&ctx, a),
        Command::Query(a) => cmd_query(&ctx, a),
        Command::Cv(a) => cmd_cv(&ctx, a),
        Command::Average(a) => cmd_average(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::GblupVerify(a) => cmd_gblup(&ctx, a),
        Command::ExportDot(a) => cmd_export_dot(&ctx, a),
    }
}

struct Ctx {
    seed: Option<u64>,
    digits: usize,
}

impl Ctx {
    fn require_seed(&self, what: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("--seed is required for {what}")))
    }

    fn num(&self, x: f64) -> String {
        sig(x, self.digits)
    }
}

fn load_data(a: &DataArgs) -> Result<Dataset> {
    let tiers: TierMap = match (&a.tiers, &a.tiers_file) {
        (Some(s), _) => parse_tiers(s)?,
        (None, Some(p)) => load_tiers_csv(p)?,
        (None, None) => read_header(&a.traits)?.into_iter().map(|t| (t, 0)).collect(),
    };
    let (data, report) = load_dataset(&a.genotypes, &a.traits, &tiers, LoadOptions { impute_mean: a.impute_mean })?;
    if report.imputed_fields > 0 {
        log::warn!("imputed {} missing fields with column means", report.imputed_fields);
    }
    Ok(data)
}

fn fit_method(kind: FitKind, lambda: Option<f64>, lambda_folds: Option<usize>, seed: u64) -> FitMethod {
    match kind {
        FitKind::Ols => FitMethod::Ols,
        FitKind::Ridge => FitMethod::Ridge {
            lambda: match (lambda, lambda_folds) {
                (Some(lambda), _) => LambdaPolicy::Fixed { lambda },
                (None, Some(folds)) => LambdaPolicy::KFold { folds, grid: LambdaPolicy::default_grid(), seed },
                (None, None) => LambdaPolicy::gcv(),
            },
        },
    }
}

fn learn_config(o: &LearnOpts, seed: u64) -> LearnConfig {
    LearnConfig {
        search: SearchConfig {
            alpha: o.alpha,
            max_cond_size: o.max_cond,
            restarts: o.restarts,
            perturb: o.perturb,
            seed,
        },
        fit: fit_method(o.fit, o.lambda, o.lambda_folds, seed),
        min_maf: o.min_maf,
        prune_r: o.prune_r,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// CSV text from string rows; quoting follows the csv crate.
fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("CSV output: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("CSV output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn dot_text(dag: &Dag, strengths: Option<&[(String, String, f64)]>, digits: usize) -> String {
    match strengths {
        Some(s) => {
            let lookup = |p: &str, c: &str| s.iter().find(|(a, b, _)| a == p && b == c).map(|t| t.2);
            to_dot(dag, Some(&lookup), digits)
        }
        None => to_dot(dag, None, digits),
    }
}

fn cmd_learn(ctx: &Ctx, a: &LearnArgs) -> Result<()> {
    let seed = ctx.require_seed("learn")?;
    let data = load_data(&a.data)?;
    let cfg = learn_config(&a.opts, seed);
    let learned = learn(&data, &cfg)?;
    log::info!(
        "retained {} nodes, {} arcs, BIC {}",
        learned.bn.dag().len(),
        learned.bn.dag().n_arcs(),
        learned.score
    );
    let meta = Metadata {
        search: Some(cfg.search.clone()),
        seed: Some(seed),
        data_fingerprint: Some(fingerprint(&data)),
        ..Metadata::default()
    };
    write_file(&a.out, &ModelFile::from_bn(&learned.bn, meta, None).to_json())?;
    if let Some(p) = &a.dot {
        write_file(p, &dot_text(learned.bn.dag(), None, ctx.digits))?;
    }
    Ok(())
}

fn cmd_predict(ctx: &Ctx, a: &PredictArgs) -> Result<()> {
    let model = ModelFile::read(&a.model)?;
    let bn = model.to_bn()?;
    let opts = LoadOptions { impute_mean: a.impute_mean };
    let (genotypes, _) = load_genotypes(&a.genotypes, opts)?;
    let observed = match &a.traits {
        Some(p) => {
            let tiers: TierMap = bn.dag().nodes().iter().filter_map(|n| n.tier.map(|t| (n.id.clone(), t))).collect();
            Some(load_traits(p, &tiers, opts)?.0)
        }
        None => None,
    };
    let pred = predict(&bn, &genotypes, a.mode, observed.as_ref())?;
    let mut header = vec!["id"];
    header.extend(pred.trait_ids.iter().map(String::as_str));
    let rows = pred.individual_ids.iter().enumerate().map(|(i, id)| {
        let mut r = vec![id.clone()];
        r.extend((0..pred.trait_ids.len()).map(|t| ctx.num(pred.values[(i, t)])));
        r
    });
    emit(a.out.as_deref(), &csv_text(&header, rows)?)
}

/// Evidence items, with `node in q[p_lo,p_hi]` resolved against the model's
/// marginal distribution.
fn resolve_evidence(items: &[String], bn: &crate::params::GaussianBn) -> Result<Evidence> {
    let mut ev = Evidence::new();
    let mut joint = None;
    for item in items {
        if let Some((node, rest)) = item.split_once(" in ") {
            if let Some(q) = rest.trim().strip_prefix('q') {
                let (_, value) = Evidence::parse_item(&format!("{} in {q}", node.trim()))?;
                let EvidenceValue::Interval { lo, hi } = value else {
                    unreachable!("interval syntax parses to an interval")
                };
                if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
                    return Err(Error::Config(format!("quantile bounds in '{item}' must lie in [0, 1]")));
                }
                let j = joint.get_or_insert_with(|| to_joint(bn));
                let (qlo, qhi) = j.quantile_interval(node.trim(), lo, hi)?;
                ev.insert(node.trim(), EvidenceValue::Interval { lo: qlo, hi: qhi });
                continue;
            }
        }
        let (node, value) = Evidence::parse_item(item)?;
        ev.insert(&node, value);
    }
    Ok(ev)
}

fn cmd_query(ctx: &Ctx, a: &QueryArgs) -> Result<()> {
    let bn = ModelFile::read(&a.model)?.to_bn()?;
    let evidence = resolve_evidence(&a.evidence, &bn)?;
    let seed = match a.engine {
        Engine::Exact => ctx.seed.unwrap_or(0),
        _ => ctx.require_seed("sampled queries")?,
    };
    let res = query(&bn, &a.targets, &evidence, a.engine, a.samples, seed)?;
    let ess = res.effective_sample_size.map(|e| ctx.num(e)).unwrap_or_default();
    let rows = res.targets.iter().map(|t| {
        vec![
            t.node.clone(),
            ctx.num(t.mean),
            ctx.num(t.sd),
            t.mc_se.map(|s| ctx.num(s)).unwrap_or_default(),
            res.engine.to_string(),
            ess.clone(),
        ]
    });
    emit(None, &csv_text(&["node", "mean", "sd", "mc_se", "engine", "ess"], rows)?)
}

fn cmd_cv(ctx: &Ctx, a: &CvArgs) -> Result<()> {
    let seed = ctx.require_seed("cv")?;
    let data = load_data(&a.data)?;
    let cfg = CvConfig {
        runs: a.runs,
        folds: a.folds,
        learn: learn_config(&a.opts, seed),
        seed,
    };
    let report = run_cv(&data, &cfg)?;
    let dir = &a.out_dir;

    let summary = report.traits.iter().flat_map(|t| {
        [
            vec![t.trait_id.clone(), "rho_g".into(), ctx.num(t.rho_g_mean), ctx.num(t.rho_g_sd)],
            vec![t.trait_id.clone(), "rho_c".into(), ctx.num(t.rho_c_mean), ctx.num(t.rho_c_sd)],
        ]
    });
    write_file(&dir.join("report.csv"), &csv_text(&["trait", "metric", "mean", "sd"], summary)?)?;

    let runs = report.traits.iter().flat_map(|t| {
        (0..t.rho_g.len()).map(move |r| vec![t.trait_id.clone(), r.to_string(), ctx.num(t.rho_g[r]), ctx.num(t.rho_c[r])])
    });
    write_file(&dir.join("runs.csv"), &csv_text(&["trait", "run", "rho_g", "rho_c"], runs)?)?;

    let folds = report.folds.iter().map(|f| {
        vec![
            f.run.to_string(),
            f.fold.to_string(),
            f.n_train.to_string(),
            f.n_test.to_string(),
            f.skipped.clone().unwrap_or_default(),
        ]
    });
    write_file(&dir.join("folds.csv"), &csv_text(&["run", "fold", "n_train", "n_test", "skipped"], folds)?)?;

    let fp = fingerprint(&data);
    for m in &report.models {
        let meta = Metadata {
            search: Some(cfg.learn.search.clone()),
            seed: Some(seed),
            data_fingerprint: Some(fp.clone()),
            cv_run: Some(m.run),
            cv_fold: Some(m.fold),
            ..Metadata::default()
        };
        let path = dir.join("models").join(format!("run{:03}_fold{:03}.json", m.run, m.fold));
        write_file(&path, &ModelFile::from_bn(&m.bn, meta, None).to_json())?;
    }
    Ok(())
}

fn read_model_dir(dir: &Path) -> Result<Vec<Dag>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .json model files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| Ok(ModelFile::read(p)?.to_bn()?.dag().clone()))
        .collect()
}

fn strength_rows(t: &ArcStrengthTable) -> Vec<(String, String, f64)> {
    t.ranked().into_iter().map(|(p, c, s)| (p.to_string(), c.to_string(), s)).collect()
}

fn cmd_average(ctx: &Ctx, a: &AverageArgs) -> Result<()> {
    let networks = read_model_dir(&a.models)?;
    let data = load_data(&a.data)?;
    let method = fit_method(a.fit, a.lambda, None, ctx.seed.unwrap_or(0));
    let avg = average_networks(&networks, &data, &method, a.threshold)?;
    log::info!(
        "threshold {} (estimated {}), {} arcs kept",
        avg.threshold,
        avg.estimate.threshold,
        avg.bn.dag().n_arcs()
    );
    let meta = Metadata {
        data_fingerprint: Some(fingerprint(&data)),
        threshold: Some(avg.threshold),
        network_count: Some(avg.strengths.network_count),
        seed: ctx.seed,
        ..Metadata::default()
    };
    write_file(&a.out, &ModelFile::from_bn(&avg.bn, meta, Some(&avg.strengths)).to_json())?;
    let rows = strength_rows(&avg.strengths);
    if let Some(p) = &a.strengths {
        let text = csv_text(
            &["parent", "child", "frequency"],
            rows.iter().map(|(p, c, s)| vec![p.clone(), c.clone(), ctx.num(*s)]),
        )?;
        write_file(p, &text)?;
    }
    if let Some(p) = &a.dot {
        write_file(p, &dot_text(avg.bn.dag(), Some(&rows), ctx.digits))?;
    }
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let seed = ctx.require_seed("simulate")?;
    let text = fs::read_to_string(&a.spec).map_err(|e| Error::io(&a.spec, e))?;
    let mut spec: SimSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: a.spec.clone(),
        row: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    spec.seed = seed;
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(s) = a.snps {
        spec.snps = s;
    }
    let sim = simulate(&spec)?;
    let d = &sim.dataset;
    let dir = &a.out_dir;

    let mut gh = vec!["id"];
    gh.extend(d.genotypes.snp_ids.iter().map(String::as_str));
    let grows = (0..d.n()).map(|i| {
        let mut r = vec![d.genotypes.individual_ids[i].clone()];
        r.extend((0..d.genotypes.n_snps()).map(|j| format!("{}", d.genotypes.counts[(i, j)])));
        r
    });
    write_file(&dir.join("genotypes.csv"), &csv_text(&gh, grows)?)?;

    // Traits keep full precision so a learned model sees exactly the simulated data.
    let mut th = vec!["id"];
    th.extend(d.traits.trait_ids.iter().map(String::as_str));
    let trows = (0..d.n()).map(|i| {
        let mut r = vec![d.traits.individual_ids[i].clone()];
        r.extend((0..d.traits.n_traits()).map(|t| format!("{:?}", d.traits.values[(i, t)])));
        r
    });
    write_file(&dir.join("traits.csv"), &csv_text(&th, trows)?)?;

    let tiers = d
        .traits
        .trait_ids
        .iter()
        .zip(&d.traits.tiers)
        .map(|(t, k)| vec![t.clone(), k.to_string()]);
    write_file(&dir.join("tiers.csv"), &csv_text(&["trait", "tier"], tiers)?)?;

    let meta = Metadata { seed: Some(seed), data_fingerprint: Some(fingerprint(d)), ..Metadata::default() };
    write_file(&dir.join("truth.json"), &ModelFile::from_bn(&sim.truth, meta, None).to_json())
}

fn parse_matrix(s: &str, what: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("{what}: '{x}' is not a number")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Config(format!("{what} must be square, rows separated by ';'")));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn cmd_gblup(ctx: &Ctx, a: &GblupArgs) -> Result<()> {
    let seed = if a.samples > 0 { ctx.require_seed("sampled GBLUP checks")? } else { ctx.seed.unwrap_or(0) };
    let (genotypes, _) = load_genotypes(&a.genotypes, LoadOptions::default())?;
    let c = parse_matrix(&a.genetic_cov, "--genetic-cov")?;
    let r = parse_matrix(&a.residual_cov, "--residual-cov")?;
    let means = if a.means.is_empty() { vec![0.0; a.trait_ids.len()] } else { a.means.clone() };
    let policy = match a.policy {
        PolicyKind::Identity => GPolicy::Identity { genetic_cov: c },
        PolicyKind::CrossProduct => GPolicy::CrossProduct { genetic_cov: c, scale: a.scale },
    };
    let model = build_gblup(&genotypes, &a.trait_ids, &policy, &r, &means)?;
    let rep = verify_equivalence(&model, a.tol, a.samples, seed)?;

    let joint = joint_covariance(&model)?;
    // A rank-deficient G has no network form; report that instead of failing.
    let network = match gblup_network(&model, a.tol) {
        Ok(bn) => {
            let back = to_joint(&bn).marginal(&joint.order)?;
            let err = (&back.covariance - &joint.covariance).norm() / joint.covariance.norm();
            format!("network arcs: {}\nround-trip relative Frobenius error: {}\n", bn.dag().n_arcs(), ctx.num(err))
        }
        Err(e @ Error::Singular(_)) => format!("network form: unavailable ({e})\n"),
        Err(e) => return Err(e),
    };

    let d = rep.order.len();
    let zeros = rep
        .zero_pattern
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().filter(|&(j, &z)| i != j && z).count())
        .sum::<usize>()
        / 2;
    let mut text = String::new();
    text.push_str(&format!(
        "variables: {d} ({} phenotypes, {} random effects)\n",
        model.n_traits() * model.n_individuals(),
        model.n_traits() * model.n_effects()
    ));
    text.push_str(&format!("zero precision pairs (|omega| <= {}): {zeros} of {}\n", ctx.num(a.tol), d * (d - 1) / 2));
    text.push_str(&network);
    text.push_str(&format!("jitter needed: {}\n", rep.jittered));
    if let Some(s) = &rep.sampled {
        text.push_str(&format!(
            "sampled regressions ({} draws): max |diff| {}, max |z| {}, beyond 3 SE {} of {}\n",
            s.samples,
            ctx.num(s.max_abs_diff),
            ctx.num(s.max_abs_z),
            s.beyond_3se,
            s.pairs
        ));
    }
    print!("{text}");

    if let Some(p) = &a.out_csv {
        let mut rows = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let (beta, se) = match &rep.sampled {
                    Some(s) => (ctx.num(s.coefficients[(i, j)]), ctx.num(s.standard_errors[(i, j)])),
                    None => (String::new(), String::new()),
                };
                rows.push(vec![
                    rep.order[i].clone(),
                    rep.order[j].clone(),
                    ctx.num(rep.precision[(i, j)]),
                    ctx.num(rep.implied[(i, j)]),
                    beta,
                    se,
                ]);
            }
        }
        write_file(p, &csv_text(&["response", "regressor", "precision", "implied", "sampled", "se"], rows)?)?;
    }
    Ok(())
}

fn cmd_export_dot(ctx: &Ctx, a: &ExportDotArgs) -> Result<()> {
    let model = ModelFile::read(&a.model)?;
    let bn = model.to_bn()?;
    let strengths = model.strengths();
    emit(a.out.as_deref(), &dot_text(bn.dag(), strengths.as_deref(), ctx.digits))
}
