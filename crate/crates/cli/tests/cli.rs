use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use densindex::data::{generate_synthetic, parse_sales_csv, PropType, RegionRegistry, Scenario, SyntheticGroundTruth};
use densindex::mdn::TrainConfig;
use densindex::validation::nll_generalization;
use densindex::{train_ensemble, DensitySource, EnsembleModel, FeatureKey};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_densindex"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, scenario: &str, seed: &str) {
    run_ok(&["synth", "--scenario", scenario, "--seed", seed, "--out", p(dir)]);
}

/// Index CSV rows grouped by `(kind, scope)`.
fn read_indices(path: &Path) -> BTreeMap<(String, String), Vec<(u32, f64)>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["week", "date", "value", "kind", "scope"]);
    let mut out: BTreeMap<(String, String), Vec<(u32, f64)>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.unwrap();
        out.entry((row[3].to_string(), row[4].to_string()))
            .or_default()
            .push((row[0].parse().unwrap(), row[2].parse().unwrap()));
    }
    out
}

#[test]
fn usage_and_help_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["synth", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["synth", "--scenario", "lunar", "--out", p(dir.path())])
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("nope.csv");
    let out = run(&[
        "train",
        "--data",
        p(&missing),
        "--registry",
        p(&missing),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["synth", "--out", p(dir.path())]);
    for f in ["sales.csv", "registry.json", "truth.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let expected = generate_synthetic(&Scenario::Standard.config(), 0).unwrap();
    let registry = RegionRegistry::load(&dir.path().join("registry.json")).unwrap();
    assert_eq!(registry, expected.registry);
    let parsed = parse_sales_csv(&dir.path().join("sales.csv"), &registry).unwrap();
    assert!(parsed.rejects.is_empty());
    assert_eq!(parsed.dataset.len(), expected.dataset.len());
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "tiny", "9");
    synth(b.path(), "tiny", "9");
    for f in ["sales.csv", "registry.json", "truth.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    synth(c.path(), "tiny", "10");
    assert_ne!(
        fs::read(a.path().join("sales.csv")).unwrap(),
        fs::read(c.path().join("sales.csv")).unwrap()
    );
}

#[test]
fn env_overrides_mirror_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_densindex"))
        .args(["synth"])
        .env("DENSINDEX_SCENARIO", "tiny")
        .env("DENSINDEX_SEED", "9")
        .env("DENSINDEX_OUT", dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    let flags = tempfile::tempdir().unwrap();
    synth(flags.path(), "tiny", "9");
    assert_eq!(
        fs::read(dir.path().join("sales.csv")).unwrap(),
        fs::read(flags.path().join("sales.csv")).unwrap()
    );
}

#[test]
fn divergent_truth_has_diverging_regional_medians() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "divergent-trends", "1");
    let truth = SyntheticGroundTruth::load(&dir.path().join("truth.json")).unwrap();
    let range = truth.config.week_range();
    let growth: Vec<f64> = truth
        .keys()
        .iter()
        .filter(|k| k.prop_type == PropType::House)
        .map(|k| {
            let start = truth.mixture(k, range.start).quantile(0.5).unwrap();
            let end = truth.mixture(k, range.end).quantile(0.5).unwrap();
            (end - start).exp()
        })
        .collect();
    let hi = growth.iter().copied().fold(f64::MIN, f64::max);
    let lo = growth.iter().copied().fold(f64::MAX, f64::min);
    assert!(hi / lo > 1.2, "{growth:?}");
}

const TRAIN_FLAGS: [&str; 6] = ["--ensemble", "2", "--epochs", "8", "--seed", "5"];

fn train_tiny(dir: &Path) {
    synth(dir, "tiny", "2");
    let data = dir.join("sales.csv");
    let registry = dir.join("registry.json");
    let mut args = vec!["train", "--data", p(&data), "--registry", p(&registry), "--out", p(dir)];
    args.extend(TRAIN_FLAGS);
    run_ok(&args);
}

#[test]
fn train_round_trips_and_logs_final_nll() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny(dir.path());
    let registry = RegionRegistry::load(&dir.path().join("registry.json")).unwrap();
    let data = parse_sales_csv(&dir.path().join("sales.csv"), &registry)
        .unwrap()
        .dataset;
    let loaded = EnsembleModel::load(&dir.path().join("model.json")).unwrap();
    assert_eq!(loaded.len(), 2);

    let cfg = TrainConfig {
        epochs: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let in_memory = train_ensemble(&data, &registry, &cfg, 2).unwrap();
    for key in data.keys() {
        for week in [data.week_range().unwrap().start, data.week_range().unwrap().end] {
            assert_eq!(
                loaded.density(&key, week).unwrap(),
                in_memory.density(&key, week).unwrap()
            );
        }
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("train_summary.json")).unwrap()).unwrap();
    for (i, m) in loaded.members().iter().enumerate() {
        let logged = summary["members"][i]["final_nll"].as_f64().unwrap();
        let recomputed = nll_generalization(m, &data.records, &data.records).unwrap().train;
        assert!((logged - recomputed).abs() < 1e-9, "{logged} vs {recomputed}");
    }
    let log = fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("member,seed,epoch,nll\n"));
    assert_eq!(log.lines().count(), 1 + 2 * 8);
}

#[test]
fn index_quantiles_and_base_date() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny(dir.path());
    let out = dir.path().join("idx");
    run_ok(&[
        "index",
        "--data",
        p(&dir.path().join("sales.csv")),
        "--registry",
        p(&dir.path().join("registry.json")),
        "--model",
        p(&dir.path().join("model.json")),
        "--percentiles",
        "20,80",
        "--out",
        p(&out),
    ]);
    let series = read_indices(&out.join("indices.csv"));
    let q20 = &series[&("d_quantile_0.2".to_string(), "M0".to_string())];
    let q80 = &series[&("d_quantile_0.8".to_string(), "M0".to_string())];
    assert_eq!(q20.len(), q80.len());
    assert!(q20.iter().zip(q80).all(|(a, b)| a.0 == b.0 && a.1 < b.1));
    for kind in ["d_median", "d_gmean", "d_mean_price", "hedonic", "repeat_sales"] {
        assert!(
            series.contains_key(&(kind.to_string(), "M0".to_string())),
            "{kind} missing"
        );
    }
    assert_eq!(series.keys().filter(|k| k.0 == "d_subregion").count(), 3);
    let dumps: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("densities.json")).unwrap()).unwrap();
    assert_eq!(dumps.as_array().unwrap().len(), 4);

    let base = dir.path().join("base");
    // week 1048 starts on 2010-02-01
    run_ok(&[
        "index",
        "--data",
        p(&dir.path().join("sales.csv")),
        "--registry",
        p(&dir.path().join("registry.json")),
        "--model",
        p(&dir.path().join("model.json")),
        "--base-date",
        "2010-02-03",
        "--out",
        p(&base),
    ]);
    for ((kind, scope), values) in read_indices(&base.join("indices.csv")) {
        if let Some((_, v)) = values.iter().find(|(w, _)| *w == 1048) {
            assert!((v - 1.0).abs() < 1e-12, "{kind}/{scope}: {v}");
        }
    }
    let bad = run(&[
        "index",
        "--data",
        p(&dir.path().join("sales.csv")),
        "--registry",
        p(&dir.path().join("registry.json")),
        "--model",
        p(&dir.path().join("model.json")),
        "--percentiles",
        "80,20",
        "--out",
        p(&base),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let missing = run(&[
        "index",
        "--data",
        p(&dir.path().join("sales.csv")),
        "--registry",
        p(&dir.path().join("registry.json")),
        "--model",
        p(&dir.path().join("absent.json")),
        "--out",
        p(&base),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn flat_market_gives_flat_indices() {
    let dir = tempfile::tempdir().unwrap();
    // dense enough that monthly benchmark noise sits well inside 2%
    run_ok(&[
        "synth",
        "--scenario",
        "flat",
        "--seed",
        "4",
        "--sales-rate",
        "40",
        "--out",
        p(dir.path()),
    ]);
    let data = p(&dir.path().join("sales.csv")).to_string();
    let registry = p(&dir.path().join("registry.json")).to_string();
    run_ok(&[
        "train",
        "--data",
        &data,
        "--registry",
        &registry,
        "--ensemble",
        "2",
        "--out",
        p(dir.path()),
    ]);
    run_ok(&[
        "index",
        "--data",
        &data,
        "--registry",
        &registry,
        "--model",
        p(&dir.path().join("model.json")),
        "--out",
        p(dir.path()),
    ]);
    for ((kind, scope), values) in read_indices(&dir.path().join("indices.csv")) {
        let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;
        let worst = values.iter().map(|(_, v)| (v / mean - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 0.02, "{kind}/{scope} moves by {worst}");
    }
}

fn validate(dir: &Path, out: &Path) -> Output {
    run(&[
        "validate",
        "--data",
        p(&dir.join("sales.csv")),
        "--registry",
        p(&dir.join("registry.json")),
        "--ensemble",
        "1",
        "--epochs",
        "6",
        "--folds",
        "3",
        "--out",
        p(out),
    ])
}

#[test]
fn validate_smoke_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tiny", "3");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = validate(dir.path(), out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let headers = [
        ("projection_errors.csv", "scope,kind,mdape,mape,n"),
        ("calibration_metro.csv", "percentile,observed,deviation"),
        ("calibration_regional.csv", "region,percentile,observed,deviation"),
        ("nemenyi_M0.csv", "method,mean_rank,band_low,band_high"),
        ("sparsity.csv", "week,date,control,treatment,departure"),
    ];
    for (file, header) in headers {
        let text = fs::read_to_string(a.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
    }
    for file in [
        "nll.json",
        "calibration_summary.json",
        "persistence.json",
        "friedman.json",
        "sparsity.json",
    ] {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join(file)).unwrap()).unwrap();
        assert!(!v.is_null(), "{file}");
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn validate_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tiny", "3");
    let data = dir.path().join("sales.csv");
    let registry = dir.path().join("registry.json");
    let with = |extra: &[&str]| {
        let mut v = vec![
            "validate",
            "--data",
            p(&data),
            "--registry",
            p(&registry),
            "--out",
            p(dir.path()),
        ];
        v.extend(extra);
        run(&v).status.code()
    };
    assert_eq!(with(&["--folds", "1", "--checks", "kfold"]), Some(1));
    assert_eq!(with(&["--checks", "telepathy"]), Some(1));
    assert_eq!(with(&["--sparsity-region", "R99", "--checks", "sparsity"]), Some(1));
    assert_eq!(with(&["--weights-cutoff", "2010-13-40"]), Some(1));
    assert_eq!(with(&["--components", "0", "--checks", "nll"]), Some(1));
}

#[test]
fn divergent_learning_rate_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "tiny", "3");
    let out = run(&[
        "train",
        "--data",
        p(&dir.path().join("sales.csv")),
        "--registry",
        p(&dir.path().join("registry.json")),
        "--ensemble",
        "1",
        "--learning-rate",
        "1e300",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_key_density_is_an_error_not_a_panic() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny(dir.path());
    let model = EnsembleModel::load(&dir.path().join("model.json")).unwrap();
    let key = FeatureKey::new(densindex::RegionIdx(99), PropType::House);
    assert!(model.density(&key, 1050).is_err());
}
