use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rationmem_core::checkpoint::{load_checkpoint, save_checkpoint};
use rationmem_core::corpus::{
    corpus_stats, kb_path, load_corpus, load_kb, render_stats_table, split,
};
use rationmem_core::evaluation::{evaluate_with_memory, explain_corpus, explain_with_memory};
use rationmem_core::memory::{encode_kb, forward};
use rationmem_core::trainer::{
    build_training_vocab, gradient_check, train, validate_training_data, CheckSample,
};
use rationmem_core::{Category, Corpus, Error, KnowledgeBase, MemoryNetModel, TrainingConfig};

const TRAIN_FRACTION: f64 = 0.8;
const VALIDATION_FRACTION: f64 = 0.1;
/// Samples closer than this to a hinge kink are skipped by `gradcheck`.
const HINGE_EXCLUSION: f64 = 1e-4;

/// Memory-network classifier for unfair Terms of Service clauses.
///
/// Logging is controlled by RATIONMEM_LOG (error, info or debug).
#[derive(Debug, Parser)]
#[command(name = "rationmem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model for one category and write checkpoint, history and metrics to --out.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled corpus.
    Eval(EvalArgs),
    /// Print the unfairness probability of each input line.
    Predict(PredictArgs),
    /// Rank the knowledge-base rationales for one clause.
    Explain(ExplainArgs),
    /// Print per-category clause, document and length statistics of a corpus.
    Stats(StatsArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SupervisionArgs {
    /// TOML file with training settings; absent keys keep their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Weak supervision: labels only, no rationale margin (lambda = 0).
    #[arg(long, conflicts_with = "lambda")]
    weak: bool,
    /// Weight of the rationale margin loss.
    #[arg(long, value_parser = non_negative)]
    lambda: Option<f64>,
    /// Seed for initialization, shuffling and the data split.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled corpus (JSON Lines).
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    /// Directory holding one knowledge-base file per category (<id>.toml).
    #[arg(long, value_name = "PATH")]
    kb_dir: PathBuf,
    /// Category to train: ltd, cr, ter, ch or a.
    #[arg(long, value_name = "ID")]
    category: Category,
    /// Output directory for model.ckpt, history.jsonl and metrics.jsonl.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    supervision: SupervisionArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Labeled corpus (JSON Lines).
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    /// Directory holding the knowledge-base files.
    #[arg(long, value_name = "PATH")]
    kb_dir: PathBuf,
    /// Directory for metrics.jsonl and explanations.jsonl; nothing is written without it.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Directory holding the knowledge-base files.
    #[arg(long, value_name = "PATH")]
    kb_dir: PathBuf,
    /// Text file with one clause per line; `-` reads standard input.
    #[arg(
        long,
        value_name = "PATH",
        required_unless_present = "text",
        conflicts_with = "text"
    )]
    input: Option<PathBuf>,
    /// A single clause.
    #[arg(long)]
    text: Option<String>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Directory holding the knowledge-base files.
    #[arg(long, value_name = "PATH")]
    kb_dir: PathBuf,
    /// Clause text to explain.
    #[arg(
        long,
        required_unless_present = "clause_id",
        conflicts_with = "clause_id"
    )]
    text: Option<String>,
    /// Id of a clause in --corpus to explain.
    #[arg(long, value_name = "ID", requires = "corpus")]
    clause_id: Option<String>,
    /// Corpus to look --clause-id up in.
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Number of rationales to print.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    top_k: u32,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Labeled corpus (JSON Lines).
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Corpus to draw sample clauses and the vocabulary from.
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    /// Directory holding the knowledge-base files.
    #[arg(long, value_name = "PATH")]
    kb_dir: PathBuf,
    /// Category of the model.
    #[arg(long, value_name = "ID")]
    category: Category,
    /// Check this trained model instead of a freshly initialized one.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    eps: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-5, value_parser = positive)]
    tolerance: f64,
    /// Number of clauses to check.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
    #[command(flatten)]
    supervision: SupervisionArgs,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got `{s}`")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number > 0, got `{s}`")),
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Run(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Run(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else if matches!(e, Error::InvalidArgument(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RATIONMEM_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn require_file(path: &Path, what: &str) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Data(format!(
            "{what} `{}` is not a readable file",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Data(format!(
            "{what} `{}` is not a directory",
            path.display()
        )))
    }
}

fn prepare_out(out: &Path) -> Outcome {
    fs::create_dir_all(out).map_err(|e| {
        Failure::Data(format!(
            "cannot create output directory `{}`: {e}",
            out.display()
        ))
    })
}

fn write_out(path: &Path, contents: &[u8]) -> Outcome {
    fs::write(path, contents)
        .map_err(|e| Failure::Data(format!("cannot write `{}`: {e}", path.display())))
}

fn training_config(args: &SupervisionArgs) -> Result<TrainingConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            let src = fs::read_to_string(path)
                .map_err(|e| Failure::Data(format!("cannot read `{}`: {e}", path.display())))?;
            toml::from_str::<TrainingConfig>(&src)
                .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
        }
        None => TrainingConfig::default(),
    };
    if args.weak {
        config.lambda = 0.0;
    }
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| Failure::Data(format!("invalid configuration: {e}")))?;
    Ok(config)
}

/// Loads the category's knowledge base and checks every gold id the corpus
/// references against whichever knowledge bases `kb_dir` provides.
fn load_data(
    corpus: &Path,
    kb_dir: &Path,
    category: Category,
) -> Result<(Corpus, KnowledgeBase), Failure> {
    require_file(corpus, "corpus")?;
    require_dir(kb_dir, "knowledge-base directory")?;
    let own = kb_path(kb_dir, category);
    require_file(&own, "knowledge base")?;
    let corpus = load_corpus(corpus)?;
    let mut kbs = Vec::new();
    for cat in Category::ALL {
        let path = kb_path(kb_dir, cat);
        if path.is_file() {
            kbs.push(load_kb(&path, cat)?);
        }
    }
    corpus.validate_rationales(&kbs.iter().collect::<Vec<_>>())?;
    let kb = kbs
        .into_iter()
        .find(|kb| kb.category() == category)
        .expect("checked above");
    Ok((corpus, kb))
}

fn load_model(
    checkpoint: &Path,
    kb_dir: &Path,
) -> Result<(MemoryNetModel, KnowledgeBase), Failure> {
    require_file(checkpoint, "checkpoint")?;
    require_dir(kb_dir, "knowledge-base directory")?;
    let model = load_checkpoint(checkpoint)?.model;
    let path = kb_path(kb_dir, model.category());
    require_file(&path, "knowledge base")?;
    let kb = load_kb(&path, model.category())?;
    Ok((model, kb))
}

fn jsonl(records: &[serde_json::Value]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

fn cmd_train(args: TrainArgs) -> Outcome {
    let config = training_config(&args.supervision)?;
    let (corpus, kb) = load_data(&args.corpus, &args.kb_dir, args.category)?;
    validate_training_data(&corpus, &kb, config.strong_supervision())?;
    prepare_out(&args.out)?;

    let (train_part, val_part, test_part) =
        split(&corpus, TRAIN_FRACTION, VALIDATION_FRACTION, config.seed)?;
    info!(
        "split: {} / {} / {} clauses",
        train_part.len(),
        val_part.len(),
        test_part.len()
    );
    let (model, history) = train(&train_part, Some(&val_part), &kb, &config)?;

    save_checkpoint(args.out.join("model.ckpt"), &model, Some(&config))?;
    write_out(
        &args.out.join("history.jsonl"),
        history.to_jsonl().as_bytes(),
    )?;

    let mem = encode_kb(&kb, &model)?;
    let mut records = Vec::new();
    let mut stdout = io::stdout().lock();
    for (name, part) in [("validation", &val_part), ("test", &test_part)] {
        let report = evaluate_with_memory(&model, &mem, part, &config.eval)?;
        let mut record = report.to_record();
        record["split"] = name.into();
        records.push(record);
        let _ = writeln!(stdout, "{name}\n{}", report.render_table());
    }
    write_out(&args.out.join("metrics.jsonl"), jsonl(&records).as_bytes())?;
    if let Some(best) = history.best_epoch {
        let _ = writeln!(stdout, "best epoch {best} of {}", history.epochs.len());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Outcome {
    let (model, kb) = load_model(&args.checkpoint, &args.kb_dir)?;
    let (corpus, _) = load_data(&args.corpus, &args.kb_dir, model.category())?;
    let eval = load_checkpoint(&args.checkpoint)?
        .config
        .map(|c| c.eval)
        .unwrap_or_default();
    let mem = encode_kb(&kb, &model)?;
    let report = evaluate_with_memory(&model, &mem, &corpus, &eval)?;
    print!("{}", report.render_table());
    if let Some(out) = &args.out {
        prepare_out(out)?;
        write_out(
            &out.join("metrics.jsonl"),
            jsonl(&[report.to_record()]).as_bytes(),
        )?;
        let explanations =
            explain_corpus(&model, &mem, &corpus, kb.len(), eval.selection_threshold)?;
        let records: Vec<serde_json::Value> = explanations
            .iter()
            .map(|e| serde_json::to_value(e).expect("explanation serializes"))
            .collect();
        write_out(&out.join("explanations.jsonl"), jsonl(&records).as_bytes())?;
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Outcome {
    let (model, kb) = load_model(&args.checkpoint, &args.kb_dir)?;
    let mem = encode_kb(&kb, &model)?;
    let lines: Vec<String> = match (&args.text, &args.input) {
        (Some(t), _) => vec![t.clone()],
        (None, Some(p)) if p.as_os_str() == "-" => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<_>>()
            .map_err(|e| Failure::Data(format!("reading standard input: {e}")))?,
        (None, Some(p)) => {
            require_file(p, "input")?;
            fs::read_to_string(p)
                .map_err(|e| Failure::Data(format!("cannot read `{}`: {e}", p.display())))?
                .lines()
                .map(str::to_string)
                .collect()
        }
        (None, None) => unreachable!("clap requires --text or --input"),
    };
    let mut stdout = io::stdout().lock();
    for line in lines {
        let p = forward(&line, &model, &mem)?.probability;
        let _ = writeln!(stdout, "{p}");
    }
    Ok(())
}

fn cmd_explain(args: ExplainArgs) -> Outcome {
    let (model, kb) = load_model(&args.checkpoint, &args.kb_dir)?;
    let (clause_id, text) = match (&args.text, &args.clause_id, &args.corpus) {
        (Some(t), _, _) => (None, t.clone()),
        (None, Some(id), Some(path)) => {
            require_file(path, "corpus")?;
            let corpus = load_corpus(path)?;
            let clause = corpus
                .clause(id)
                .ok_or_else(|| Failure::Data(format!("no clause `{id}` in {}", path.display())))?;
            (Some(id.clone()), clause.text.clone())
        }
        _ => unreachable!("clap requires --text or --clause-id with --corpus"),
    };
    let threshold = load_checkpoint(&args.checkpoint)?
        .config
        .map(|c| c.eval.selection_threshold)
        .unwrap_or_else(|| rationmem_core::EvalConfig::default().selection_threshold);
    let mem = encode_kb(&kb, &model)?;
    let top_k = (args.top_k as usize).min(kb.len());
    let explanation = explain_with_memory(clause_id, &text, &model, &mem, top_k, threshold)?;
    print!("{}", explanation.render(&kb));
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Outcome {
    require_file(&args.corpus, "corpus")?;
    let corpus = load_corpus(&args.corpus)?;
    print!("{}", render_stats_table(&corpus_stats(&corpus)));
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Outcome {
    let config = training_config(&args.supervision)?;
    let (corpus, kb) = load_data(&args.corpus, &args.kb_dir, args.category)?;
    let model = match &args.checkpoint {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let model = load_checkpoint(path)?.model;
            if model.category() != args.category {
                return Err(Failure::Data(format!(
                    "checkpoint is a `{}` model, not `{}`",
                    model.category(),
                    args.category
                )));
            }
            model
        }
        None => {
            let vocab = build_training_vocab(&corpus, &kb, config.min_token_count)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            MemoryNetModel::init(
                args.category,
                vocab,
                config.embedding_dim,
                config.embedding_init_std,
                &mut rng,
            )?
        }
    };

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let strong = config.strong_supervision();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut stdout = io::stdout().lock();
    for i in order {
        if checked == args.samples {
            break;
        }
        let clause = &corpus.clauses()[i];
        let unfair = clause.is_unfair(args.category);
        let gold: Vec<String> = clause
            .gold(args.category)
            .map(|g| g.iter().cloned().collect())
            .unwrap_or_default();
        if strong && unfair && gold.is_empty() {
            continue;
        }
        let sample = CheckSample {
            text: &clause.text,
            unfair,
            gold: &gold,
        };
        let report = gradient_check(&model, sample, &kb, &config, args.eps, args.tolerance)?;
        if report.min_hinge_gap.is_some_and(|g| g < HINGE_EXCLUSION) {
            info!("skipping {}: too close to a hinge kink", clause.id);
            continue;
        }
        checked += 1;
        let _ = writeln!(stdout, "clause {}", clause.id);
        for p in &report.params {
            let _ = writeln!(
                stdout,
                "  {:<18} {:.3e}  (index {}: analytic {:.6e}, numeric {:.6e})",
                p.name, p.max_relative_error, p.worst_index, p.analytic, p.numeric
            );
        }
        worst = worst.max(report.max_relative_error);
    }
    if checked == 0 {
        return Err(Failure::Data(
            "no clause in the corpus can be checked".into(),
        ));
    }
    let _ = writeln!(
        stdout,
        "max relative error {worst:.3e} over {checked} clause(s), tolerance {:.1e}",
        args.tolerance
    );
    if worst < args.tolerance {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "gradient check failed: {worst:.3e} exceeds tolerance {:.1e}",
            args.tolerance
        )))
    }
}
