use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codemix_sentiment::baselines::{
    linear::train_binary_hinge, log_count_ratio, FeatureExtractor, FeatureKind, LinearModel, SvmParams,
};
use codemix_sentiment::corpus::{load_corpus, Polarity};
use codemix_sentiment::train::Metrics;
use serde_json::Value;

fn codemix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codemix"))
        .args(args)
        .output()
        .expect("spawn codemix")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = codemix(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_data(dir: &Path, sentences: usize) -> PathBuf {
    let raw = dir.join("synth.tsv");
    ok(&["synth", "--out", p(&raw), "--sentences", &sentences.to_string(), "--seed", "4"]);
    let data = dir.join("data");
    ok(&["prepare", "--input", p(&raw), "--out-dir", p(&data), "--seed", "2"]);
    data
}

fn write_split(dir: &Path, train: &[(&str, &str)], test: &[(&str, &str)]) {
    fs::create_dir_all(dir).unwrap();
    let lines = |rows: &[(&str, &str)]| rows.iter().map(|(t, l)| format!("{t}\t{l}\n")).collect::<String>();
    fs::write(dir.join("train.tsv"), lines(train)).unwrap();
    fs::write(dir.join("test.tsv"), lines(test)).unwrap();
}

fn tensor_names(checkpoint: &Path) -> Vec<String> {
    let bytes = fs::read(checkpoint).unwrap();
    assert_eq!(&bytes[..8], b"MSENTI01");
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    header["tensors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn prepare_writes_splits_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("in.tsv");
    let mut text = String::new();
    for i in 0..20 {
        text.push_str(&format!("comment number {i}\t{}\n", ["positive", "neutral", "negative"][i % 3]));
    }
    text.push_str("नमस्ते दोस्त\tpositive\n");
    fs::write(&raw, text).unwrap();
    let out = dir.path().join("out");
    let printed = ok(&["prepare", "--input", p(&raw), "--out-dir", p(&out), "--seed", "7"]);
    assert!(printed.contains("train 13 val 3 test 4"), "{printed}");
    for f in ["train.tsv", "val.tsv", "test.tsv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["rejected"]["non_roman"], 1);
    assert_eq!(manifest["sizes"]["test"], 4);
}

#[test]
fn prepare_missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = codemix(&["prepare", "--input", "/nonexistent/in.tsv", "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/in.tsv"));
}

#[test]
fn prepare_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("s.tsv");
    ok(&["synth", "--out", p(&raw), "--sentences", "120"]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["prepare", "--input", p(&raw), "--out-dir", p(&a), "--seed", "3"]);
    ok(&["prepare", "--input", p(&raw), "--out-dir", p(&b), "--seed", "3"]);
    for f in ["train.tsv", "val.tsv", "test.tsv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_two_epochs_then_eval_predict_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_data(dir.path(), 90);
    let model = dir.path().join("m.ckpt");
    let printed = ok(&[
        "train", "--data-dir", p(&data), "--arch", "subword", "--out", p(&model), "--epochs", "2", "--patience", "5",
        "--max-len", "48", "--batch-size", "16",
    ]);
    let epoch_lines: Vec<&str> = printed.lines().filter(|l| l.starts_with("epoch ")).collect();
    assert_eq!(epoch_lines.len(), 2);
    for line in &epoch_lines {
        let fields: Vec<&str> = line.split(' ').collect();
        assert_eq!(fields.len(), 8, "{line}");
        assert_eq!([fields[2], fields[4], fields[6]], ["train_loss", "val_loss", "val_acc"]);
        for v in [fields[3], fields[5], fields[7]] {
            v.parse::<f64>().unwrap();
        }
    }
    assert!(model.exists());
    let history = fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert_eq!(history.lines().next().unwrap(), "epoch,train_loss,train_acc,val_loss,val_acc");
    assert!(tensor_names(&model).iter().any(|n| n.starts_with("conv.")));

    let metrics: Metrics = serde_json::from_str(&ok(&["eval", "--model", p(&model), "--data", p(&data.join("test.tsv"))])).unwrap();
    assert_eq!(metrics.total(), load_corpus(&data.join("test.tsv")).unwrap().len());

    let line = ok(&["predict", "--model", p(&model), "--text", "Trailer dhannnsu hai bhai"]);
    assert_eq!(line.lines().count(), 1);
    let fields: Vec<&str> = line.trim().split(' ').collect();
    assert_eq!(fields[0], "label");
    let probs: Vec<f64> = [3, 5, 7].iter().map(|&i| fields[i].parse().unwrap()).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let csv = dir.path().join("act.csv");
    let text = "bahut acha laga";
    let printed = ok(&["inspect", "--model", p(&model), "--text", text, "--out", p(&csv)]);
    let rows = fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert_eq!(rows, text.len() - 3 + 1);
    assert!(printed.starts_with(&format!("windows {rows} ")));
}

#[test]
fn char_checkpoint_has_no_conv_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_data(dir.path(), 60);
    let model = dir.path().join("c.ckpt");
    ok(&["train", "--data-dir", p(&data), "--arch", "char", "--out", p(&model), "--epochs", "1", "--max-len", "40"]);
    let names = tensor_names(&model);
    assert!(!names.iter().any(|n| n.starts_with("conv.")), "{names:?}");
    assert!(names.contains(&"embedding".to_string()));

    let o = codemix(&["inspect", "--model", p(&model), "--text", "acha", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no convolution layer"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_data(dir.path(), 60);
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{"data_dir": "data", "out": "cfg.ckpt", "max_epochs": 3, "max_len": 40, "embedding_dim": 8, "filters": 8, "hidden": 8}"#,
    )
    .unwrap();
    let printed = ok(&["train", "--config", p(&config), "--epochs", "1"]);
    assert_eq!(printed.lines().filter(|l| l.starts_with("epoch ")).count(), 1);
    assert!(dir.path().join("cfg.ckpt").exists());
    assert!(data.exists());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"data_dir": "d", "out": "m", "learnin_rate": 0.1}"#).unwrap();
    let o = codemix(&["train", "--config", p(&config)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learnin_rate"), "{}", stderr(&o));
}

#[test]
fn baseline_checkpoint_evaluates_perfectly_on_its_train_set() {
    let dir = tempfile::tempdir().unwrap();
    let rows = [
        ("bahut acha movie", "positive"),
        ("bura tha yaar", "negative"),
        ("kal dekhenge", "neutral"),
    ];
    write_split(dir.path(), &rows, &rows);
    let model = dir.path().join("mnb.ckpt");
    ok(&["baseline", "--method", "mnb", "--data-dir", p(dir.path()), "--out", p(&model)]);
    let metrics: Metrics =
        serde_json::from_str(&ok(&["eval", "--model", p(&model), "--data", p(&dir.path().join("train.tsv"))])).unwrap();
    assert_eq!(metrics.accuracy, 1.0);
    assert_eq!(metrics.macro_f1, 1.0);
}

#[test]
fn corrupt_checkpoint_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.ckpt");
    fs::write(&model, b"MSENTI01\x05\x00\x00").unwrap();
    let data = dir.path().join("d.tsv");
    fs::write(&data, "acha\tpositive\n").unwrap();
    let o = codemix(&["eval", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unexpected end of checkpoint"), "{}", stderr(&o));
}

#[test]
fn mnb_hand_corpus_decisions() {
    let dir = tempfile::tempdir().unwrap();
    write_split(
        dir.path(),
        &[("accha accha", "positive"), ("bura", "negative")],
        &[("accha", "positive"), ("bura", "negative")],
    );
    let metrics: Metrics =
        serde_json::from_str(&ok(&["baseline", "--method", "mnb", "--features", "uni", "--data-dir", p(dir.path())]))
            .unwrap();
    assert_eq!(metrics.confusion, [[1, 0, 0], [0, 0, 0], [0, 0, 1]]);

    let model = dir.path().join("m.ckpt");
    ok(&["baseline", "--method", "mnb", "--data-dir", p(dir.path()), "--out", p(&model)]);
    let line = ok(&["predict", "--model", p(&model), "--text", "accha"]);
    let f: Vec<&str> = line.trim().split(' ').collect();
    assert_eq!(f[1], "positive");
    let (neg, pos): (f64, f64) = (f[3].parse().unwrap(), f[7].parse().unwrap());
    assert!((pos / neg - 2.0).abs() < 1e-12);
}

#[test]
fn nbsvm_beta_one_matches_svm_on_scaled_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_data(dir.path(), 150);
    let cli: Metrics = serde_json::from_str(&ok(&[
        "baseline", "--method", "nbsvm", "--features", "uni", "--beta", "1", "--epochs", "5", "--data-dir", p(&data),
    ]))
    .unwrap();

    let train = load_corpus(&data.join("train.tsv")).unwrap();
    let test = load_corpus(&data.join("test.tsv")).unwrap();
    let fx = FeatureExtractor::fit(FeatureKind::Uni, &train);
    let rows: Vec<_> = train.comments.iter().map(|c| (fx.transform(&c.text), c.label)).collect();
    let params = SvmParams {
        epochs: 5,
        ..SvmParams::default()
    };
    let mut model = LinearModel {
        weights: Vec::new(),
        bias: [0.0; 3],
        ratios: Some(Vec::new()),
        params,
    };
    for class in Polarity::ALL {
        let r = log_count_ratio(&rows, fx.dim(), class, 1.0);
        let xs: Vec<_> = rows.iter().map(|(x, _)| x.binarized().scaled_by(&r)).collect();
        let ys: Vec<f64> = rows.iter().map(|(_, y)| if *y == class { 1.0 } else { -1.0 }).collect();
        let (w, b) = train_binary_hinge(&xs, &ys, fx.dim(), params, class.index() as u64);
        model.weights.push(w);
        model.bias[class.index()] = b;
        model.ratios.as_mut().unwrap().push(r);
    }
    let predicted: Vec<_> = test.comments.iter().map(|c| model.predict(&fx.transform(&c.text))).collect();
    let expected = Metrics::from_predictions(&test.labels(), &predicted).unwrap();
    assert_eq!(cli, expected);
}

#[test]
fn unknown_method_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write_split(dir.path(), &[("a", "positive")], &[("a", "positive")]);
    let o = codemix(&["baseline", "--method", "lexicon", "--data-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lexicon"));
}

#[test]
fn kappa_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, "positive\npositive\nnegative\nnegative\n").unwrap();
    fs::write(&b, "x\tpositive\ny\tnegative\nz\tnegative\nw\tnegative\n").unwrap();
    assert_eq!(ok(&["kappa", "--a", p(&a), "--b", p(&a)]).trim(), "1");
    assert_eq!(ok(&["kappa", "--a", p(&a), "--b", p(&b)]).trim(), "0.5");
    fs::write(&b, "positive\n").unwrap();
    assert_eq!(codemix(&["kappa", "--a", p(&a), "--b", p(&b)]).status.code(), Some(1));
}

#[test]
fn help_documents_every_flag_and_unknown_flags_fail() {
    let commands: [(&str, &[&str]); 8] = [
        ("prepare", &["--input", "--out-dir", "--seed", "--max-words"]),
        (
            "train",
            &["--config", "--data-dir", "--arch", "--out", "--history", "--seed", "--epochs", "--batch-size", "--patience", "--learning-rate", "--max-len"],
        ),
        ("eval", &["--model", "--data"]),
        (
            "baseline",
            &["--method", "--features", "--data-dir", "--out", "--alpha", "--beta", "--lambda", "--epochs", "--seed", "--raw-counts"],
        ),
        ("predict", &["--model", "--text"]),
        ("inspect", &["--model", "--text", "--out"]),
        ("kappa", &["--a", "--b"]),
        ("synth", &["--out", "--sentences", "--seed", "--perturb-prob"]),
    ];
    for (cmd, flags) in commands {
        let o = codemix(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        let help = stdout(&o);
        for flag in flags {
            assert!(help.contains(flag), "{cmd} help lacks {flag}");
        }
        let o = codemix(&[cmd, "--no-such-flag"]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
    }
    assert_eq!(codemix(&["--help"]).status.code(), Some(0));
    assert_eq!(codemix(&[]).status.code(), Some(1));
}
