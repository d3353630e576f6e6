use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use traitnet::inference::{condition_exact, to_joint, Evidence};
use traitnet::model_file::ModelFile;

fn traitnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traitnet")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = traitnet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Simulated data set: two tier-0 traits feeding a tier-1 trait.
fn fixture(dir: &Path) -> PathBuf {
    let spec = r#"{
        "n": 250, "snps": 20, "maf_range": [0.2, 0.5], "ld_rho": 0.2,
        "traits": [
            {"id": "A", "tier": 0, "parents": [["S2", 1.0], ["S9", -1.0]], "residual_variance": 1.0},
            {"id": "B", "tier": 0, "parents": [["S14", 1.0]], "residual_variance": 1.0},
            {"id": "C", "tier": 1, "parents": [["A", 0.6], ["B", 0.5], ["S18", 0.8]], "residual_variance": 1.0}
        ]
    }"#;
    std::fs::write(dir.join("spec.json"), spec).unwrap();
    let sim = dir.join("sim");
    ok(&["--seed", "5", "simulate", "--spec", &s(&dir.join("spec.json")), "--out-dir", &s(&sim)]);
    sim
}

fn data_args(sim: &Path) -> Vec<String> {
    vec![
        "--genotypes".into(),
        s(&sim.join("genotypes.csv")),
        "--traits".into(),
        s(&sim.join("traits.csv")),
        "--tiers-file".into(),
        s(&sim.join("tiers.csv")),
    ]
}

fn learn(dir: &Path, sim: &Path) -> PathBuf {
    let model = dir.join("model.json");
    let mut args = vec!["--seed".to_string(), "1".into(), "learn".into(), "--alpha".into(), "0.05".into()];
    args.extend(data_args(sim));
    args.extend(["--out".into(), s(&model)]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    model
}

#[test]
fn learn_records_alpha_and_fingerprint() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let model = ModelFile::read(&learn(tmp.path(), &sim)).unwrap();
    let search = model.metadata.search.unwrap();
    assert_eq!(search.alpha, 0.05);
    assert_eq!(model.metadata.seed, Some(1));
    assert_eq!(model.metadata.data_fingerprint.unwrap().len(), 64);
    assert!(model.arcs.iter().any(|a| a.parent == "A" && a.child == "C"));
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let out = tmp.path().join("m.json");

    let missing = traitnet(&[
        "--seed", "1", "learn", "--genotypes", &s(&sim.join("genotypes.csv")),
        "--traits", &s(&tmp.path().join("nope.csv")), "--out", &s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    let unknown = traitnet(&["learn", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(1));

    let no_seed = traitnet(&[
        "learn", "--genotypes", &s(&sim.join("genotypes.csv")), "--traits", &s(&sim.join("traits.csv")),
        "--out", &s(&out),
    ]);
    assert_eq!(no_seed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_seed.stderr).contains("--seed"));

    assert_eq!(traitnet(&["--help"]).status.code(), Some(0));

    // A negative genetic variance is a numerical (class 3) failure.
    let g = sim.join("genotypes.csv");
    let bad_cov = traitnet(&[
        "gblup-verify", "--genotypes", &s(&g), "--trait-ids", "y", "--genetic-cov", "-1", "--residual-cov", "1",
    ]);
    assert_eq!(bad_cov.status.code(), Some(3), "{}", String::from_utf8_lossy(&bad_cov.stderr));
}

#[test]
fn genetic_predictions_equal_exact_conditional_means() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let model_path = learn(tmp.path(), &sim);
    let text = ok(&[
        "--precision", "17", "predict", "--model", &s(&model_path), "--genotypes", &s(&sim.join("genotypes.csv")),
        "--mode", "genetic",
    ]);

    let bn = ModelFile::read(&model_path).unwrap().to_bn().unwrap();
    let joint = to_joint(&bn);
    let snps: Vec<String> = bn.dag().nodes().iter().filter(|n| n.is_snp()).map(|n| n.id.clone()).collect();
    let mut geno = csv::Reader::from_path(sim.join("genotypes.csv")).unwrap();
    let header: Vec<String> = geno.headers().unwrap().iter().map(str::to_string).collect();
    let rows: Vec<csv::StringRecord> = geno.records().map(Result::unwrap).collect();

    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let traits: Vec<String> = reader.headers().unwrap().iter().skip(1).map(str::to_string).collect();
    let mut checked = 0;
    for (record, g) in reader.records().map(Result::unwrap).zip(&rows) {
        let mut ev = Evidence::new();
        for id in &snps {
            let col = header.iter().position(|h| h == id).unwrap();
            ev = ev.point(id, g[col].parse().unwrap());
        }
        let post = condition_exact(&joint, &ev).unwrap();
        for (k, t) in traits.iter().enumerate() {
            let want = post.mean[post.index_of(t).unwrap()];
            let got: f64 = record[k + 1].parse().unwrap();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{t}: {got} vs {want}");
            checked += 1;
        }
    }
    assert_eq!(checked, 250 * 3);
}

#[test]
fn exact_and_weighted_queries_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let model = learn(tmp.path(), &sim);
    let parse = |text: &str| -> (f64, Option<f64>) {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rec = r.records().next().unwrap().unwrap();
        (rec[1].parse().unwrap(), rec[3].parse().ok())
    };
    let base = ["--precision", "12", "query", "--model", &s(&model), "--targets", "C", "--evidence", "A=1.5"];
    let (exact, se) = parse(&ok(&base));
    assert!(se.is_none());
    let mut lw = base.to_vec();
    lw.extend(["--engine", "lw", "--samples", "1000000"]);
    let (mean, se) = parse(&ok(&[&["--seed", "99"], lw.as_slice()].concat()));
    let se = se.unwrap();
    assert!((mean - exact).abs() <= 3.0 * se, "exact {exact} lw {mean} se {se}");

    let sampled_without_seed = traitnet(&lw);
    assert_eq!(sampled_without_seed.status.code(), Some(1));
}

#[test]
fn quantile_evidence_is_resolved_against_the_marginal() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let model = learn(tmp.path(), &sim);
    let text = ok(&[
        "--seed", "3", "query", "--model", &s(&model), "--targets", "C", "--evidence", "A in q[0.75,1]",
        "--engine", "logic", "--samples", "20000",
    ]);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("C,"));
    assert!(row.contains(",logic,"));
}

/// Arc frequencies recounted straight from the JSON files.
fn recount(dir: &Path) -> BTreeMap<(String, String), f64> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut files = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for arc in v["arcs"].as_array().unwrap() {
            let key = (arc["parent"].as_str().unwrap().to_string(), arc["child"].as_str().unwrap().to_string());
            *counts.entry(key).or_default() += 1;
        }
        files += 1;
    }
    counts.into_iter().map(|(k, c)| (k, c as f64 / files as f64)).collect()
}

#[test]
fn average_reproduces_recounted_frequencies() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let cv = tmp.path().join("cv");
    let mut args = vec!["--seed".to_string(), "4".into(), "cv".into(), "--runs".into(), "2".into(), "--folds".into(), "5".into()];
    args.extend(data_args(&sim));
    args.extend(["--out-dir".into(), s(&cv)]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let report = std::fs::read_to_string(cv.join("report.csv")).unwrap();
    assert!(report.starts_with("trait,metric,mean,sd\n"));
    assert_eq!(report.lines().count(), 1 + 3 * 2);

    let strengths = tmp.path().join("strengths.csv");
    let avg = tmp.path().join("avg.json");
    let dot = tmp.path().join("avg.dot");
    let mut args = vec!["--precision".to_string(), "17".into(), "average".into(), "--models".into(), s(&cv.join("models"))];
    args.extend(data_args(&sim));
    args.extend(["--out".into(), s(&avg), "--strengths".into(), s(&strengths), "--dot".into(), s(&dot)]);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let want = recount(&cv.join("models"));
    let mut got = BTreeMap::new();
    let mut r = csv::Reader::from_path(&strengths).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["parent", "child", "frequency"]);
    for rec in r.records().map(Result::unwrap) {
        got.insert((rec[0].to_string(), rec[1].to_string()), rec[2].parse::<f64>().unwrap());
    }
    assert_eq!(got.len(), want.len());
    for (k, f) in &want {
        assert!((got[k] - f).abs() < 1e-12, "{k:?}");
    }

    let model = ModelFile::read(&avg).unwrap();
    assert_eq!(model.metadata.network_count, Some(10));
    assert!(model.arcs.iter().all(|a| a.strength.is_some_and(|s| s > model.metadata.threshold.unwrap())));
    let dot_text = std::fs::read_to_string(&dot).unwrap();
    assert!(dot_text.starts_with("digraph"));
    assert!(dot_text.contains("penwidth"));
}

#[test]
fn model_files_round_trip_through_export() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let model = learn(tmp.path(), &sim);
    let text = std::fs::read_to_string(&model).unwrap();
    let parsed = ModelFile::from_json(&text).unwrap();
    assert_eq!(parsed.to_json(), text);
    let truth = ModelFile::read(&sim.join("truth.json")).unwrap();
    assert_eq!(truth.metadata.seed, Some(5));

    let dot = ok(&["export-dot", "--model", &s(&model)]);
    assert!(dot.contains("\"A\" -> \"C\""));
    assert!(!dot.contains("penwidth"));
}

#[test]
fn gblup_verify_reports_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = fixture(tmp.path());
    let csv_out = tmp.path().join("pairs.csv");
    let text = ok(&[
        "--seed", "8", "gblup-verify", "--genotypes", &s(&sim.join("genotypes.csv")), "--trait-ids", "A,B",
        "--genetic-cov", "1,0.5;0.5,1", "--residual-cov", "1,0;0,1", "--samples", "2000", "--out-csv", &s(&csv_out),
    ]);
    assert!(text.contains("round-trip relative Frobenius error"));
    assert!(text.contains("sampled regressions (2000 draws)"));
    let pairs = std::fs::read_to_string(&csv_out).unwrap();
    assert!(pairs.starts_with("response,regressor,precision,implied,sampled,se\n"));
}
