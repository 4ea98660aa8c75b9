use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use copydial::corpus::{
    encode_corpus, parse_dialogue_file, serialize_dialogues, synthesize_corpus, synthesize_split,
    KbSpec,
};
use copydial::eval::evaluate_model;
use copydial::train::{random_search, train_model, SearchSpace, TrainOptions};
use copydial::{
    ChatEngine, Checkpoint, EntityLexicon, KnowledgeBase, MetricsReport, TrainConfig, Turn,
    Variant, Vocabulary,
};

use crate::http::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "copydial", version, about = "Copy-augmented dialogue models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and keep the best validation checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a dialogue file.
    Evaluate(EvaluateArgs),
    /// Talk to a checkpoint on the terminal.
    Chat(ChatArgs),
    /// Run the HTTP chat service.
    Serve(ServeArgs),
    /// Write a synthetic restaurant corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML training config; missing keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train_file: PathBuf,
    /// Validation dialogues; the training file is reused when absent.
    #[arg(long)]
    pub dev_file: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Where the best checkpoint is written.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Directory for the report files; defaults to the checkpoint's directory.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// Run a random hyperparameter search with this many trials first.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// The training dialogues the checkpoint's vocabulary was built from.
    #[arg(long)]
    pub train_file: PathBuf,
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    /// Evaluated when no test file is given.
    #[arg(long)]
    pub dev_file: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Config supplying the decoding length cap.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the key-value report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub train_file: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Facts consulted after an api_call response.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Print the attention trace of every reply.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Without a checkpoint the service answers 503 on model routes.
    #[arg(long, requires_all = ["train_file", "lexicon"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub train_file: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Seconds before an unused session is dropped.
    #[arg(long, default_value_t = 1800)]
    pub idle_timeout: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of dialogues (of the training part, with --heldout).
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Also generate this many dialogues over held-out entities.
    #[arg(long)]
    pub heldout: Option<usize>,
    /// Entity and template spec; a built-in restaurant spec by default.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Dialogue output; stdout when absent.
    #[arg(long)]
    pub train_file: Option<PathBuf>,
    /// Held-out dialogue output.
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub kb: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Chat(a) => chat(a),
        Command::Serve(a) => serve_command(a),
        Command::Synth(a) => synth(a),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn load_lexicon(path: &Path) -> anyhow::Result<EntityLexicon> {
    Ok(EntityLexicon::load(path, false)?)
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(variant) = a.variant {
        config.variant = variant;
    }
    config.validate()?;
    let lexicon = load_lexicon(&a.lexicon)?;
    let train_dialogues = parse_dialogue_file(&a.train_file)?;
    let dev_dialogues = match &a.dev_file {
        Some(p) => parse_dialogue_file(p)?,
        None => {
            log::warn!("no --dev-file; validating on the training dialogues");
            train_dialogues.clone()
        }
    };
    let vocab = Vocabulary::build(&train_dialogues);
    let train_set = encode_corpus(&train_dialogues, &vocab, &lexicon);
    let dev_set = encode_corpus(&dev_dialogues, &vocab, &lexicon);
    log::info!(
        "{} training and {} validation responses, vocabulary {}",
        train_set.len(),
        dev_set.len(),
        vocab.len()
    );
    let report_dir = a.report_dir.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    std::fs::create_dir_all(&report_dir)?;
    if let Some(parent) = a.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }

    if let Some(trials) = a.trials {
        let search = random_search(
            &config,
            &SearchSpace::default(),
            trials,
            &vocab,
            &lexicon,
            &train_set,
            &dev_set,
        )?;
        let board: Vec<_> = search
            .leaderboard
            .iter()
            .map(|t| serde_json::json!({ "trial": t.index, "score": t.score, "config": t.config }))
            .collect();
        write(&report_dir.join("leaderboard.json"), &serde_json::to_string_pretty(&board)?)?;
        config = search.best;
    }

    let options = TrainOptions {
        checkpoint_path: Some(a.checkpoint.clone()),
        log_path: Some(report_dir.join("train_log.jsonl")),
    };
    let outcome = train_model(&config, &vocab, &lexicon, &train_set, &dev_set, &options)?;
    if outcome.report.best_checkpoint.is_none() {
        outcome.best.save(&a.checkpoint)?;
    }
    let report = &outcome.report;
    write(
        &report_dir.join("report.json"),
        &serde_json::to_string_pretty(&report.without_timings())?,
    )?;
    write(&report_dir.join("summary.txt"), &report.summary())?;
    write(
        &report_dir.join("timings.json"),
        &serde_json::to_string(&report.epoch_seconds)?,
    )?;
    print!("{}", report.summary());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let config = load_config(a.config.as_deref())?;
    let Some(eval_file) = a.test_file.as_ref().or(a.dev_file.as_ref()) else {
        bail!("one of --test-file or --dev-file is required");
    };
    let lexicon = load_lexicon(&a.lexicon)?;
    let vocab = Vocabulary::build(&parse_dialogue_file(&a.train_file)?);
    let checkpoint = Checkpoint::load(&a.checkpoint, Some(&vocab.hash()))?;
    let dialogues = parse_dialogue_file(eval_file)?;
    let evaluation = evaluate_model(&checkpoint, &vocab, &lexicon, &dialogues, config.max_response_len)?;
    let report = &evaluation.report;
    print!("{report}");
    println!("{}", MetricsReport::table_header());
    println!("{}", report.table_row(checkpoint.params.variant.name()));
    if let Some(path) = &a.report {
        write(path, &report.to_key_values())?;
    }
    Ok(())
}

fn load_engine(
    checkpoint: &Path,
    train_file: &Path,
    lexicon: &Path,
    kb: Option<&Path>,
    config: Option<&Path>,
) -> anyhow::Result<ChatEngine> {
    let config = load_config(config)?;
    let lexicon = load_lexicon(lexicon)?;
    let vocab = Vocabulary::build(&parse_dialogue_file(train_file)?);
    let checkpoint = Checkpoint::load(checkpoint, Some(&vocab.hash()))?;
    let kb = match kb {
        Some(p) => KnowledgeBase::load(p)?,
        None => KnowledgeBase::new(Vec::new()),
    };
    Ok(ChatEngine::new(&checkpoint, vocab, lexicon, kb, config.max_response_len)?)
}

fn chat(a: ChatArgs) -> anyhow::Result<()> {
    let m = &a.model;
    let engine = load_engine(&m.checkpoint, &m.train_file, &m.lexicon, m.kb.as_deref(), m.config.as_deref())?;
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let mut history: Vec<Turn> = Vec::new();
    write!(out, "> ")?;
    out.flush()?;
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            write!(out, "> ")?;
            out.flush()?;
            continue;
        }
        let reply = engine.respond(&history, &line)?;
        writeln!(out, "{}", reply.response)?;
        for kb_line in &reply.turn.kb_results {
            writeln!(out, "  {}", kb_line.join(" "))?;
        }
        if a.trace {
            for f in &reply.trace {
                let top = f
                    .weights
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.total_cmp(y.1))
                    .map(|(i, w)| format!("{} ({w:.2})", f.context[i]))
                    .unwrap_or_default();
                writeln!(out, "  {:>3} {:<24}{} {top}", f.t, f.token, if f.was_copy { " copy" } else { "     " })?;
            }
        }
        history.push(reply.turn);
        write!(out, "> ")?;
        out.flush()?;
    }
    Ok(())
}

fn serve_command(a: ServeArgs) -> anyhow::Result<()> {
    let engine = match (&a.checkpoint, &a.train_file, &a.lexicon) {
        (Some(c), Some(t), Some(l)) => Some(load_engine(c, t, l, a.kb.as_deref(), a.config.as_deref())?),
        _ => {
            log::warn!("no checkpoint loaded; model routes will answer 503");
            None
        }
    };
    let state = Arc::new(AppState::new(engine, Duration::from_secs(a.idle_timeout)));
    tokio::runtime::Runtime::new()?.block_on(serve(state, a.port))
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let spec = match &a.spec {
        Some(p) => KbSpec::load(p)?,
        None => KbSpec::desk_default(),
    };
    let (train, heldout, lexicon) = match a.heldout {
        Some(n_heldout) => {
            let split = synthesize_split(&spec, a.n, n_heldout, a.seed)?;
            (split.train, Some(split.heldout), split.lexicon)
        }
        None => {
            let corpus = synthesize_corpus(&spec, a.n, a.seed)?;
            let lexicon = corpus.lexicon.clone();
            (corpus, None, lexicon)
        }
    };
    match &a.train_file {
        Some(p) => write(p, &train.to_file_string())?,
        None => print!("{}", train.to_file_string()),
    }
    if let Some(held) = &heldout {
        let Some(p) = &a.test_file else {
            bail!("--heldout needs --test-file");
        };
        write(p, &serialize_dialogues(&held.dialogues))?;
    }
    if let Some(p) = &a.lexicon {
        write(p, &lexicon.to_file_string())?;
    }
    if let Some(p) = &a.kb {
        let mut facts = train.kb.facts().to_vec();
        if let Some(held) = &heldout {
            facts.extend(held.kb.facts().iter().cloned());
        }
        write(p, &KnowledgeBase::new(facts).to_file_string())?;
    }
    Ok(())
}
