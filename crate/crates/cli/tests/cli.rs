//! Command-level behavior: flags, config layering, outputs, exit codes.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use moje_core::corpus::{Dataset, Label, LabeledExample};
use moje_core::modelstore::ModelBundle;

use moje_cli::commands::{add_expert, train};
use moje_cli::config::{self, FeatureArgs, SelectScope};

use common::Rng;
use rand_core::SeedableRng;

fn moje_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_moje"))
}

struct TrainFixture {
    dir: tempfile::TempDir,
    data: PathBuf,
    grid: PathBuf,
}

fn train_fixture(categories: &[&str], per_cat: usize, benign: usize, seed: u64) -> TrainFixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    common::write_jsonl(
        &common::synth_corpus(categories, per_cat, benign, seed),
        &data,
    );
    let grid = common::write_small_grid(dir.path());
    TrainFixture { dir, data, grid }
}

fn plan_for(fixture: &TrainFixture, out: &Path, extra: impl FnOnce(&mut PlanFlags)) -> config::TrainPlan {
    let mut flags = PlanFlags::default();
    extra(&mut flags);
    let features = FeatureArgs {
        ngram: flags.ngram,
        ..Default::default()
    };
    config::resolve_plan(config::PlanInputs {
        config: None,
        data: std::slice::from_ref(&fixture.data),
        out: Some(out),
        features: &features,
        select_fraction: flags.select_fraction,
        select_scope: flags.select_scope,
        grid: Some(&fixture.grid),
        seed: Some(7),
        test_fraction: None,
        val_fraction: None,
        stratify: None,
        tau: None,
    })
    .unwrap()
}

#[derive(Default)]
struct PlanFlags {
    select_fraction: Option<f64>,
    select_scope: Option<SelectScope>,
    ngram: Option<moje_core::featurize::NGramOrders>,
}

#[test]
fn train_produces_one_expert_per_category_with_cv_scores() {
    let fixture = train_fixture(&["a", "b", "c", "d"], 60, 600, 3);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |_| {});
    let artifacts = train::train_from_plan(&plan).unwrap();
    assert_eq!(artifacts.model.experts().len(), 4);
    assert_eq!(artifacts.summaries.len(), 4);
    for s in &artifacts.summaries {
        assert!(s.cv_fbeta > 0.5, "{}: cv {}", s.category, s.cv_fbeta);
        assert!(!s.cv_records.is_empty());
    }
    // The CV report has one row per (expert, setting): 3 settings here.
    let csv = train::cv_report_csv(&artifacts.summaries);
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
}

#[test]
fn train_select_fraction_masks_every_expert() {
    let fixture = train_fixture(&["a", "b"], 60, 500, 5);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |f| f.select_fraction = Some(0.15));
    let artifacts = train::train_from_plan(&plan).unwrap();
    for expert in artifacts.model.experts() {
        let mask = expert.pipeline().mask().expect("mask present");
        let m = expert.pipeline().vocab().len();
        let want = ((0.15 * m as f64).round() as usize).max(1);
        assert_eq!(mask.len(), want, "expert {}", expert.category());
    }
}

#[test]
fn train_global_selection_scope_runs() {
    let fixture = train_fixture(&["a", "b"], 60, 500, 6);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |f| {
        f.select_fraction = Some(0.5);
        f.select_scope = Some(SelectScope::Global);
    });
    let artifacts = train::train_from_plan(&plan).unwrap();
    assert_eq!(artifacts.model.experts().len(), 2);
    assert!(artifacts.report.f_beta > 0.9);
}

#[test]
fn train_via_binary_writes_bundle_and_reports() {
    let fixture = train_fixture(&["a", "b"], 50, 400, 9);
    let out = fixture.dir.path().join("model.moje");
    let cv_csv = fixture.dir.path().join("cv.csv");
    let output = moje_bin()
        .args(["train", "--data"])
        .arg(&fixture.data)
        .arg("--out")
        .arg(&out)
        .arg("--grid")
        .arg(&fixture.grid)
        .args(["--seed", "7", "--cv-report"])
        .arg(&cv_csv)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    let expert_lines = stdout.lines().filter(|l| l.starts_with("expert ")).count();
    assert_eq!(expert_lines, 2);
    assert!(stdout.contains("AUC"));
    assert!(out.exists());
    assert!(cv_csv.exists());
    let bundle = ModelBundle::load(&out).unwrap();
    assert_eq!(bundle.model.experts().len(), 2);
    assert_eq!(bundle.provenance.seed, 7);
}

#[test]
fn train_missing_dataset_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.moje");
    let output = moje_bin()
        .args(["train", "--data", "/definitely/missing.jsonl", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("/definitely/missing.jsonl"), "{stderr}");
}

#[test]
fn train_config_file_with_flag_override() {
    let fixture = train_fixture(&["a"], 50, 400, 11);
    let out = fixture.dir.path().join("model.moje");
    let config_path = fixture.dir.path().join("train.toml");
    std::fs::write(
        &config_path,
        format!(
            "data = [{:?}]\noutput = {:?}\ngrid = {:?}\n\n[features]\nngram = \"uni\"\n\n[split]\nseed = 7\n",
            fixture.data.display().to_string(),
            out.display().to_string(),
            fixture.grid.display().to_string(),
        ),
    )
    .unwrap();

    // Config alone: unigram vocabulary, no spaces in terms.
    let output = moje_bin()
        .arg("train")
        .arg("--config")
        .arg(&config_path)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let bundle = ModelBundle::load(&out).unwrap();
    let vocab = bundle.model.experts()[0].pipeline().vocab();
    assert!(vocab.terms().iter().all(|t| !t.contains(' ')));

    // Flag overrides the config's ngram: bigram terms contain a space.
    let output = moje_bin()
        .arg("train")
        .arg("--config")
        .arg(&config_path)
        .args(["--ngram", "uni+bi"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let bundle = ModelBundle::load(&out).unwrap();
    let vocab = bundle.model.experts()[0].pipeline().vocab();
    assert!(vocab.terms().iter().any(|t| t.contains(' ')));
}

#[test]
fn eval_prints_table_csv_and_per_dataset_rows() {
    let fixture = train_fixture(&["a", "b"], 50, 400, 13);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |_| {});
    let artifacts = train::train_from_plan(&plan).unwrap();
    ModelBundle::new(artifacts.model, Default::default())
        .save(&out)
        .unwrap();

    // Homogeneous per-dataset files.
    let mut rng = Rng::seed_from_u64(99);
    let pool = common::word_pool();
    let attacks: Vec<LabeledExample> = (0..30)
        .map(|_| {
            LabeledExample::new(
                common::attack_prompt(&mut rng, &pool, "a"),
                Label::Jailbreak,
                Some("a".into()),
            )
            .unwrap()
        })
        .collect();
    let benign: Vec<LabeledExample> = (0..30)
        .map(|_| LabeledExample::new(common::benign_prompt(&mut rng, &pool), Label::Benign, None).unwrap())
        .collect();
    let attacks_path = fixture.dir.path().join("attacks_a.jsonl");
    let benign_path = fixture.dir.path().join("clean.jsonl");
    Dataset::new("attacks_a", attacks).write_jsonl(&attacks_path).unwrap();
    Dataset::new("clean", benign).write_jsonl(&benign_path).unwrap();

    let output = moje_bin()
        .arg("eval")
        .arg("--bundle")
        .arg(&out)
        .arg("--per-dataset")
        .arg(&attacks_path)
        .arg(&benign_path)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("AUC"), "{stdout}");
    assert!(stdout.contains("attacks_a"));
    assert!(stdout.contains("TPr"));
    assert!(stdout.contains("FPr"));

    let output = moje_bin()
        .arg("eval")
        .arg("--bundle")
        .arg(&out)
        .arg("--csv")
        .arg(&attacks_path)
        .arg(&benign_path)
        .output()
        .unwrap();
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.starts_with("metric_set,auc,acc,f_beta,recall,precision"));
}

#[test]
fn eval_rejects_mixed_per_dataset_file() {
    let fixture = train_fixture(&["a"], 50, 400, 15);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |_| {});
    let artifacts = train::train_from_plan(&plan).unwrap();
    ModelBundle::new(artifacts.model, Default::default())
        .save(&out)
        .unwrap();

    let output = moje_bin()
        .arg("eval")
        .arg("--bundle")
        .arg(&out)
        .arg("--per-dataset")
        .arg(&fixture.data) // mixed labels
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("mixes"), "{stderr}");
}

#[test]
fn add_expert_writes_new_bundle_and_leaves_original() {
    let fixture = train_fixture(&["a", "b"], 50, 400, 17);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |_| {});
    let artifacts = train::train_from_plan(&plan).unwrap();
    ModelBundle::new(artifacts.model, Default::default())
        .save(&out)
        .unwrap();
    let original_bytes = std::fs::read(&out).unwrap();

    // New-category data: benign + category-c attacks.
    let mut rng = Rng::seed_from_u64(5);
    let pool = common::word_pool();
    let mut rows = Vec::new();
    for _ in 0..200 {
        rows.push(LabeledExample::new(common::benign_prompt(&mut rng, &pool), Label::Benign, None).unwrap());
    }
    for _ in 0..50 {
        rows.push(
            LabeledExample::new(
                common::attack_prompt(&mut rng, &pool, "c"),
                Label::Jailbreak,
                Some("c".into()),
            )
            .unwrap(),
        );
    }
    let data_c = fixture.dir.path().join("cat_c.jsonl");
    Dataset::new("c", rows).write_jsonl(&data_c).unwrap();

    let extended = fixture.dir.path().join("model5.moje");
    add_expert::run(add_expert::AddExpertArgs {
        bundle: out.clone(),
        category: "c".into(),
        data: vec![data_c.clone()],
        out: extended.clone(),
        features: FeatureArgs::default(),
        select_fraction: None,
        grid: Some(fixture.grid.clone()),
        seed: Some(2),
    })
    .unwrap();

    assert_eq!(std::fs::read(&out).unwrap(), original_bytes);
    let new_bundle = ModelBundle::load(&extended).unwrap();
    assert_eq!(new_bundle.model.experts().len(), 3);

    // Duplicate category is a usage error.
    let err = add_expert::run(add_expert::AddExpertArgs {
        bundle: out.clone(),
        category: "a".into(),
        data: vec![data_c.clone()],
        out: fixture.dir.path().join("dup.moje"),
        features: FeatureArgs::default(),
        select_fraction: None,
        grid: Some(fixture.grid.clone()),
        seed: Some(2),
    })
    .unwrap_err();
    assert!(matches!(err, moje_cli::CliError::Usage(_)));

    // Writing over the input bundle is refused.
    let err = add_expert::run(add_expert::AddExpertArgs {
        bundle: out.clone(),
        category: "d".into(),
        data: vec![data_c],
        out: out.clone(),
        features: FeatureArgs::default(),
        select_fraction: None,
        grid: Some(fixture.grid.clone()),
        seed: Some(2),
    })
    .unwrap_err();
    assert!(matches!(err, moje_cli::CliError::Usage(_)));
}

#[test]
fn predict_scores_flags_and_stdin() {
    let fixture = train_fixture(&["a"], 60, 400, 19);
    let out = fixture.dir.path().join("model.moje");
    let plan = plan_for(&fixture, &out, |_| {});
    let artifacts = train::train_from_plan(&plan).unwrap();
    ModelBundle::new(artifacts.model, Default::default())
        .save(&out)
        .unwrap();

    let mut rng = Rng::seed_from_u64(1);
    let pool = common::word_pool();
    let attack = common::attack_prompt(&mut rng, &pool, "a");
    let benign = common::benign_prompt(&mut rng, &pool);

    let output = moje_bin()
        .arg("predict")
        .arg("--bundle")
        .arg(&out)
        .arg("--text")
        .arg(&attack)
        .arg("--text")
        .arg(&benign)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["label"], "jailbreak");
    assert_eq!(first["rule"], "max");
    let second: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(second["label"], "benign");
    assert!(second["score"].as_f64().unwrap() < 0.5);

    // Empty stdin: zero output lines, exit 0.
    let mut child = moje_bin()
        .arg("predict")
        .arg("--bundle")
        .arg(&out)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let status = child.wait().unwrap();
    assert!(status.success());
    let mut buf = String::new();
    use std::io::Read;
    child.stdout.take().unwrap().read_to_string(&mut buf).unwrap();
    assert!(buf.is_empty());
}

#[test]
fn select_ranks_planted_signals_first() {
    let fixture = train_fixture(&["a"], 80, 300, 23);
    let output = moje_bin()
        .arg("select")
        .arg("--data")
        .arg(&fixture.data)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("index,term,score"));
    let top: Vec<&str> = lines.take(8).collect();
    let signal_hits = top.iter().filter(|l| l.contains(",xa")).count();
    assert!(signal_hits >= 6, "top-8 rows were: {top:?}");
}

#[test]
fn corrupt_grid_and_bundle_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad_grid = dir.path().join("grid.toml");
    std::fs::write(&bad_grid, "lr_l2 = \"oops\"").unwrap();
    let data = dir.path().join("d.jsonl");
    common::write_jsonl(&common::synth_corpus(&["a"], 30, 100, 1), &data);
    let output = moje_bin()
        .args(["train", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("m.moje"))
        .arg("--grid")
        .arg(&bad_grid)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = moje_bin()
        .args(["predict", "--bundle", "/missing/bundle.moje", "--text", "hi"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
