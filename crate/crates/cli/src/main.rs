//! `codemix`: prepare splits, train and evaluate sentiment models, run the
//! sparse baselines, and inspect convolution responses.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 internal invariant
//! violation.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use codemix_sentiment::baselines::{evaluate_baseline, fit_baseline, BaselineConfig, Classifier, FeatureKind, Method};
use codemix_sentiment::corpus::{
    build_char_vocab, class_distribution, cohens_kappa, filter_comments, load_corpus, split_corpus, Corpus,
    Polarity, SplitSet,
};
use codemix_sentiment::nn::ArchitectureKind;
use codemix_sentiment::synthetic::{self, SyntheticConfig};
use codemix_sentiment::train::{
    evaluate, load_checkpoint, predict, save_checkpoint, train_model_with, Checkpoint, TrainConfig,
};
use codemix_sentiment::viz::{conv_activations, export_activation_csv};
use codemix_sentiment::Error;

/// `println!` that ends the process quietly when stdout is a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))
    };
}

fn emit(args: std::fmt::Arguments<'_>) {
    if let Err(e) = writeln!(io::stdout().lock(), "{args}") {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("writing to stdout: {e}");
    }
}

const TRAIN_FILE: &str = "train.tsv";
const VAL_FILE: &str = "val.tsv";
const TEST_FILE: &str = "test.tsv";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "codemix", version, about = "Subword-LSTM sentiment analysis for code-mixed text")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter a labeled TSV corpus and write seeded train/val/test splits.
    Prepare(PrepareArgs),
    /// Train a Subword-LSTM or Char-LSTM and save a checkpoint.
    Train(TrainArgs),
    /// Print metrics JSON for a checkpoint on a labeled TSV file.
    Eval(EvalArgs),
    /// Fit a sparse baseline on train.tsv and print test-split metrics JSON.
    Baseline(BaselineArgs),
    /// Print the predicted label and class scores for one text.
    Predict(PredictArgs),
    /// Export per-window convolution responses for one text as CSV.
    Inspect(InspectArgs),
    /// Print Cohen's kappa between two label files.
    Kappa(KappaArgs),
    /// Write a planted-morpheme synthetic corpus as TSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Labeled corpus, one `text<TAB>label` per line.
    #[arg(long)]
    input: PathBuf,
    /// Directory for train.tsv, val.tsv, test.tsv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comments with more whitespace-separated tokens are dropped.
    #[arg(long, default_value_t = codemix_sentiment::corpus::DEFAULT_MAX_WORDS)]
    max_words: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON run config: any training hyperparameter plus `data_dir`, `out`
    /// and `history`. Unknown keys are rejected; relative paths resolve
    /// against the config file's directory. Flags override config values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding train.tsv and val.tsv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_parser = ["subword", "char"])]
    arch: Option<String>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// History CSV path [default: checkpoint path with extension history.csv].
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Neural or baseline checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Labeled TSV file.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    method: String,
    #[arg(long, default_value = "uni")]
    features: String,
    /// Directory holding train.tsv and test.tsv.
    #[arg(long)]
    data_dir: PathBuf,
    /// Also save the fitted model as a checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additive smoothing for MNB and the NBSVM count ratios.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// NBSVM interpolation weight.
    #[arg(long, default_value_t = 0.25)]
    beta: f64,
    /// L2 regularization strength for SVM and NBSVM.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use raw counts in MNB instead of binarized ones.
    #[arg(long)]
    raw_counts: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Subword-LSTM checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KappaArgs {
    /// Labels, one per line, either bare or as `text<TAB>label`.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    sentences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that a planted morpheme is misspelt.
    #[arg(long, default_value_t = 0.3)]
    perturb_prob: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Invariant(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
        Err(_) => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Kappa(a) => cmd_kappa(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn distribution_json(corpus: &Corpus) -> Value {
    match class_distribution(corpus) {
        Ok(d) => json!({"negative": d[0], "neutral": d[1], "positive": d[2]}),
        Err(_) => Value::Null,
    }
}

fn cmd_prepare(a: PrepareArgs) -> Result<(), Error> {
    let corpus = load_corpus(&a.input)?;
    let (kept, report) = filter_comments(&corpus, a.max_words);
    let splits = split_corpus(&kept, a.seed)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", a.out_dir.display())))?;
    splits.train.write_tsv(&a.out_dir.join(TRAIN_FILE))?;
    splits.validation.write_tsv(&a.out_dir.join(VAL_FILE))?;
    splits.test.write_tsv(&a.out_dir.join(TEST_FILE))?;
    let manifest = json!({
        "seed": a.seed,
        "max_words": a.max_words,
        "input_comments": corpus.len(),
        "rejected": {"non_roman": report.non_roman, "too_long": report.too_long},
        "sizes": {"train": splits.train.len(), "validation": splits.validation.len(), "test": splits.test.len()},
        "class_distribution": {
            "train": distribution_json(&splits.train),
            "validation": distribution_json(&splits.validation),
            "test": distribution_json(&splits.test),
        },
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&a.out_dir.join(MANIFEST_FILE), text)?;
    out!(
        "kept {} rejected non_roman {} too_long {}",
        kept.len(),
        report.non_roman,
        report.too_long
    );
    out!(
        "train {} val {} test {}",
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    Ok(())
}

struct RunConfig {
    train: TrainConfig,
    data_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
}

/// Splits the path keys off a flat JSON object and parses the remainder
/// strictly as [`TrainConfig`].
fn load_run_config(path: &Path) -> Result<RunConfig, Error> {
    let raw = read_file(path)?;
    let value: Value = serde_json::from_str(&raw)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(Error::InvalidInput(format!("{}: expected a JSON object", path.display())));
    };
    let base = path.parent().unwrap_or(Path::new(""));
    let take_path = |key: &str, map: &mut Map<String, Value>| -> Result<Option<PathBuf>, Error> {
        match map.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(base.join(s))),
            Some(other) => Err(Error::InvalidInput(format!(
                "{}: `{key}` must be a string path, got {other}",
                path.display()
            ))),
        }
    };
    let data_dir = take_path("data_dir", &mut map)?;
    let out = take_path("out", &mut map)?;
    let history = take_path("history", &mut map)?;
    let train: TrainConfig = serde_json::from_value(Value::Object(map))
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(RunConfig {
        train,
        data_dir,
        out,
        history,
    })
}

fn load_optional(path: &Path) -> Result<Corpus, Error> {
    if path.exists() {
        load_corpus(path)
    } else {
        Ok(Corpus::new(Vec::new(), path.display().to_string()))
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let mut run = match &a.config {
        Some(p) => load_run_config(p)?,
        None => RunConfig {
            train: TrainConfig::default(),
            data_dir: None,
            out: None,
            history: None,
        },
    };
    if let Some(arch) = &a.arch {
        run.train.arch = arch.parse::<ArchitectureKind>()?;
    }
    if let Some(v) = a.seed {
        run.train.seed = v;
    }
    if let Some(v) = a.epochs {
        run.train.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        run.train.batch_size = v;
    }
    if let Some(v) = a.patience {
        run.train.patience = v;
    }
    if let Some(v) = a.learning_rate {
        run.train.learning_rate = v;
    }
    if let Some(v) = a.max_len {
        run.train.max_len = v;
    }
    let data_dir = a
        .data_dir
        .or(run.data_dir)
        .ok_or_else(|| Error::InvalidInput("--data-dir is required (flag or config `data_dir`)".into()))?;
    let out = a
        .out
        .or(run.out)
        .ok_or_else(|| Error::InvalidInput("--out is required (flag or config `out`)".into()))?;
    let history_path = a
        .history
        .or(run.history)
        .unwrap_or_else(|| out.with_extension("history.csv"));
    let config = run.train;
    config.validate()?;

    let splits = SplitSet {
        train: load_corpus(&data_dir.join(TRAIN_FILE))?,
        validation: load_corpus(&data_dir.join(VAL_FILE))?,
        test: load_optional(&data_dir.join(TEST_FILE))?,
        seed: config.seed,
    };
    let vocab = build_char_vocab(&splits.train)?;
    let outcome = train_model_with(&config, &splits, &vocab, |e| {
        out!(
            "epoch {} train_loss {:.6} val_loss {:.6} val_acc {:.6}",
            e.epoch, e.train_loss, e.val_loss, e.val_acc
        );
    })?;
    save_checkpoint(
        &Checkpoint::Neural {
            params: outcome.params,
            vocab,
        },
        &out,
    )?;
    outcome.history.write_csv(&history_path)?;
    out!(
        "best_epoch {} checkpoint {} history {}",
        outcome.history.best_epoch,
        out.display(),
        history_path.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Error> {
    let checkpoint = load_checkpoint(&a.model)?;
    let corpus = load_corpus(&a.data)?;
    let metrics = match &checkpoint {
        Checkpoint::Neural { params, vocab } => evaluate(params, &corpus, vocab)?,
        Checkpoint::Baseline(model) => evaluate_baseline(model, &corpus)?,
    };
    out!("{}", metrics.to_json());
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), Error> {
    let config = BaselineConfig {
        method: a.method.parse::<Method>()?,
        features: a.features.parse::<FeatureKind>()?,
        alpha: a.alpha,
        beta: a.beta,
        lambda: a.lambda,
        epochs: a.epochs,
        seed: a.seed,
        binarize: !a.raw_counts,
    };
    let train = load_corpus(&a.data_dir.join(TRAIN_FILE))?;
    let test = load_corpus(&a.data_dir.join(TEST_FILE))?;
    let model = fit_baseline(&config, &train)?;
    let metrics = evaluate_baseline(&model, &test)?;
    if let Some(out) = &a.out {
        save_checkpoint(&Checkpoint::Baseline(model), out)?;
    }
    out!("{}", metrics.to_json());
    Ok(())
}

fn scores_line(label: Polarity, prefix: &str, values: [f64; 3]) -> String {
    let mut line = format!("label {label}");
    for (p, v) in Polarity::ALL.iter().zip(values) {
        write!(line, " {prefix}_{p} {v}").expect("write to String");
    }
    line
}

/// `label L p_negative X p_neutral Y p_positive Z` for probabilistic models,
/// `score_*` margins for the linear baselines.
fn cmd_predict(a: PredictArgs) -> Result<(), Error> {
    if a.text.trim().is_empty() {
        return Err(Error::InvalidInput("--text is empty".into()));
    }
    let line = match load_checkpoint(&a.model)? {
        Checkpoint::Neural { params, vocab } => {
            let p = predict(&params, &a.text, &vocab)?;
            scores_line(p.label, "p", p.probabilities)
        }
        Checkpoint::Baseline(model) => {
            let label = model.predict(&a.text);
            let scores = model.scores(&a.text);
            match model.classifier {
                Classifier::Mnb(_) => scores_line(label, "p", scores.map(f64::exp)),
                Classifier::Linear(_) => scores_line(label, "score", scores),
            }
        }
    };
    out!("{line}");
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<(), Error> {
    let Checkpoint::Neural { params, vocab } = load_checkpoint(&a.model)? else {
        return Err(Error::InvalidInput("inspect needs a neural checkpoint".into()));
    };
    let export = conv_activations(&params, &a.text, &vocab)?;
    export_activation_csv(&export, &a.out)?;
    let (filter, window) = export.strongest_window();
    out!(
        "windows {} filters {} strongest_filter {filter} strongest_window {window}",
        export.width(),
        export.responses.len()
    );
    Ok(())
}

fn load_labels(path: &Path) -> Result<Vec<Polarity>, Error> {
    let raw = read_file(path)?;
    let mut labels = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let token = line.rsplit_once('\t').map_or(line, |(_, t)| t);
        let label = token.parse::<Polarity>().map_err(|_| Error::UnknownLabel {
            token: token.trim().to_string(),
            line: i + 1,
        })?;
        labels.push(label);
    }
    Ok(labels)
}

fn cmd_kappa(a: KappaArgs) -> Result<(), Error> {
    let kappa = cohens_kappa(&load_labels(&a.a)?, &load_labels(&a.b)?)?;
    out!("{kappa}");
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Error> {
    let config = SyntheticConfig {
        sentences: a.sentences,
        seed: a.seed,
        perturb_prob: a.perturb_prob,
        ..SyntheticConfig::default()
    };
    let sentences = synthetic::generate(&config)?;
    synthetic::to_corpus(&sentences, "synthetic")?.write_tsv(&a.out)?;
    out!("wrote {} sentences to {}", sentences.len(), a.out.display());
    Ok(())
}
