//! The `seq2seq` command line: `gen-task`, `train`, `translate`, `rescore`,
//! `evaluate` and `analyze`.
//!
//! Data goes to files or standard output and diagnostics to standard error.
//! Exit code 0 means success, 2 a usage error, 1 any other failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use seq2seq_core::analysis::{extract_representations, pca_2d};
use seq2seq_core::corpus::{SentencePair, Vocabulary};
use seq2seq_core::decoding::{check_ensemble, default_max_len, rescore_nbest, translate};
use seq2seq_core::evaluation::{bleu_by_length, bleu_by_rarity, corpus_bleu, perplexity, BleuReport, BucketReport};
use seq2seq_core::model::{ModelConfig, Seq2SeqModel};
use seq2seq_core::synthetic::{generate, lines, TaskKind, TaskSpec};
use seq2seq_core::training::{train, TrainConfig, TrainingProgress};
use seq2seq_core::{Precision, Real};

use crate::io::{
    checkpoint_precision, load_checkpoint, load_parallel_corpus, load_vocab, read_text, read_token_lines,
    save_checkpoint, save_vocab, vocab_from_file, write_lines, write_text,
};
use crate::metrics::{RunObserver, FINAL_CHECKPOINT};
use crate::nbest;
use crate::scatter::export_scatter;

#[derive(Parser, Debug)]
#[command(name = "seq2seq", version, about = "Deep LSTM sequence-to-sequence toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic parallel corpus.
    GenTask(GenTaskArgs),
    /// Train a model and write checkpoints.
    Train(TrainArgs),
    /// Beam-search translations of a source file.
    Translate(TranslateArgs),
    /// Rerank an n-best list with model log-probabilities.
    Rescore(RescoreArgs),
    /// BLEU, breakdowns and perplexity.
    Evaluate(EvaluateArgs),
    /// PCA projection of sentence representations.
    Analyze(AnalyzeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum TaskArg {
    Copy,
    Reverse,
    ToyTranslate,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Copy => TaskKind::Copy,
            TaskArg::Reverse => TaskKind::Reverse,
            TaskArg::ToyTranslate => TaskKind::ToyTranslate,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct GenTaskArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 20)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 1)]
    pub min_len: usize,
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1000)]
    pub num_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// toy-translate only.
    #[arg(long, default_value_t = 1)]
    pub reorder_window: usize,
    /// Output prefix: writes `<out>.src`, `<out>.tgt`, the `.train.*` and
    /// `.heldout.*` splits and `<out>.{src,tgt}.vocab`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_src: PathBuf,
    #[arg(long)]
    pub train_tgt: PathBuf,
    #[arg(long, requires = "heldout_tgt")]
    pub heldout_src: Option<PathBuf>,
    #[arg(long, requires = "heldout_src")]
    pub heldout_tgt: Option<PathBuf>,
    /// Existing source vocabulary; built from the training source otherwise.
    #[arg(long)]
    pub src_vocab: Option<PathBuf>,
    #[arg(long)]
    pub tgt_vocab: Option<PathBuf>,
    /// Size cap (reserved tokens included) for vocabularies built here.
    #[arg(long, default_value_t = 1000)]
    pub max_vocab: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 7.5)]
    pub epochs: f64,
    #[arg(long, default_value_t = 0.7)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub schedule_start: f64,
    #[arg(long, default_value_t = 0.5)]
    pub halving_period: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0.08)]
    pub init_range: f64,
    #[arg(long, default_value_t = 4)]
    pub bucket_width: usize,
    #[arg(long, default_value_t = 0.5)]
    pub record_interval: f64,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feed sources to the encoder last word first.
    #[arg(long, action = ArgAction::Set, default_value_t = true, value_parser = clap::builder::BoolishValueParser::new())]
    pub reverse_source: bool,
    /// Append EOS to every encoder input.
    #[arg(long)]
    pub source_eos: bool,
    #[arg(long)]
    pub no_peepholes: bool,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: PrecisionArg,
    #[arg(long)]
    pub checkpoint_dir: PathBuf,
    /// Defaults to `<checkpoint-dir>/metrics.log`.
    #[arg(long)]
    pub metrics_log: Option<PathBuf>,
    /// Writes the encoder input of the first training pairs to this file.
    #[arg(long)]
    pub debug_dump: Option<PathBuf>,
    /// Keep metric records out of stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Repeat to decode with an ensemble.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    /// Standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional file receiving the log-probability of each output line.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub beam: usize,
    /// Defaults to `2 * source length + 10`.
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RescoreArgs {
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Line `i` holds the source of sentence id `i`.
    #[arg(long)]
    pub sources: PathBuf,
    #[arg(long)]
    pub nbest: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, conflicts_with = "by_rarity", requires = "source")]
    pub by_length: Option<usize>,
    #[arg(long, requires_all = ["source", "src_vocab"])]
    pub by_rarity: Option<usize>,
    /// Source sentences aligned with the hypotheses.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Vocabulary giving the frequency ranks for `--by-rarity`.
    #[arg(long)]
    pub src_vocab: Option<PathBuf>,
    /// Breakdown rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Checkpoints for perplexity; repeat for an ensemble.
    #[arg(long = "checkpoint", requires_all = ["ppl_src", "ppl_tgt"])]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub ppl_src: Option<PathBuf>,
    #[arg(long)]
    pub ppl_tgt: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub phrases: PathBuf,
    /// Writes `<out>.csv` and `<out>.svg`.
    #[arg(long)]
    pub out: PathBuf,
}

/// A user error that should exit with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenTask(a) => gen_task(&a),
        Command::Train(a) => match a.precision {
            PrecisionArg::F32 => train_as::<f32>(&a),
            PrecisionArg::F64 => train_as::<f64>(&a),
        },
        Command::Translate(a) => match ensemble_precision(&a.checkpoints)? {
            Precision::Single => translate_as::<f32>(&a),
            Precision::Double => translate_as::<f64>(&a),
        },
        Command::Rescore(a) => match ensemble_precision(&a.checkpoints)? {
            Precision::Single => rescore_as::<f32>(&a),
            Precision::Double => rescore_as::<f64>(&a),
        },
        Command::Evaluate(a) => evaluate(&a),
        Command::Analyze(a) => match checkpoint_precision(&a.checkpoint)? {
            Precision::Single => analyze_as::<f32>(&a),
            Precision::Double => analyze_as::<f64>(&a),
        },
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

fn gen_task(a: &GenTaskArgs) -> anyhow::Result<()> {
    let spec = TaskSpec {
        task: a.task.into(),
        vocab_size: a.vocab_size,
        min_len: a.min_len,
        max_len: a.max_len,
        num_pairs: a.num_pairs,
        seed: a.seed,
        reorder_window: a.reorder_window,
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let data = generate(&spec)?;
    let (src, tgt) = lines(data.pairs.iter());
    write_text(&with_suffix(&a.out, ".src"), &src)?;
    write_text(&with_suffix(&a.out, ".tgt"), &tgt)?;
    let (src, tgt) = lines(data.train());
    write_text(&with_suffix(&a.out, ".train.src"), &src)?;
    write_text(&with_suffix(&a.out, ".train.tgt"), &tgt)?;
    let (src, tgt) = lines(data.heldout());
    write_text(&with_suffix(&a.out, ".heldout.src"), &src)?;
    write_text(&with_suffix(&a.out, ".heldout.tgt"), &tgt)?;
    let (corpus, heldout) = data.corpora()?;
    save_vocab(&with_suffix(&a.out, ".src.vocab"), &corpus.src_vocab)?;
    save_vocab(&with_suffix(&a.out, ".tgt.vocab"), &corpus.tgt_vocab)?;
    println!(
        "task={} pairs={} train={} heldout={}",
        spec.task.name(),
        data.pairs.len(),
        corpus.pairs.len(),
        heldout.len()
    );
    Ok(())
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lr0: a.lr,
        schedule_start_epoch: a.schedule_start,
        halving_period: a.halving_period,
        total_epochs: a.epochs,
        batch_size: a.batch_size,
        clip_threshold: a.clip,
        init_range: a.init_range,
        seed: a.seed,
        bucket_width: a.bucket_width,
        record_interval: a.record_interval,
        max_steps: a.max_steps,
    }
}

fn train_as<T: Real>(a: &TrainArgs) -> anyhow::Result<()> {
    let config = train_config(a);
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let src_vocab = match &a.src_vocab {
        Some(p) => load_vocab(p)?,
        None => vocab_from_file(&a.train_src, a.max_vocab)?,
    };
    let tgt_vocab = match &a.tgt_vocab {
        Some(p) => load_vocab(p)?,
        None => vocab_from_file(&a.train_tgt, a.max_vocab)?,
    };
    let parsed = load_parallel_corpus(&a.train_src, &a.train_tgt, &src_vocab, &tgt_vocab)?;
    if parsed.dropped_empty > 0 {
        eprintln!("warning: dropped {} training lines with an empty source", parsed.dropped_empty);
    }
    let heldout = match (&a.heldout_src, &a.heldout_tgt) {
        (Some(s), Some(t)) => {
            let h = load_parallel_corpus(s, t, &src_vocab, &tgt_vocab)?;
            if h.dropped_empty > 0 {
                eprintln!("warning: dropped {} held-out lines with an empty source", h.dropped_empty);
            }
            h.corpus.pairs
        }
        _ => Vec::new(),
    };

    let mut model_config = ModelConfig::new(a.layers, a.hidden, a.embed, src_vocab.len(), tgt_vocab.len());
    model_config.reverse_source = a.reverse_source;
    model_config.source_eos = a.source_eos;
    model_config.peepholes = !a.no_peepholes;
    model_config.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut model = Seq2SeqModel::<T>::init(model_config, src_vocab, tgt_vocab, a.init_range, a.seed)?;

    if let Some(path) = &a.debug_dump {
        write_text(path, &debug_dump(&model, &parsed.corpus.pairs))?;
    }

    let log = a.metrics_log.clone().unwrap_or_else(|| a.checkpoint_dir.join("metrics.log"));
    let mut observer = RunObserver::new(Some(&log), Some(&a.checkpoint_dir), !a.quiet)?;
    let result = train(&mut model, &parsed.corpus.pairs, &heldout, &config, &mut observer);
    if let Some(err) = observer.take_failure() {
        return Err(err.into());
    }
    let report = result?;
    let final_path = a.checkpoint_dir.join(FINAL_CHECKPOINT);
    save_checkpoint(&model, &report.progress, &final_path)?;
    eprintln!(
        "trained {} steps ({:.3} epochs); wrote {}",
        report.progress.step,
        report.progress.epoch,
        final_path.display()
    );
    Ok(())
}

/// Source and encoder input ids of the first few training pairs.
fn debug_dump<T: Real>(model: &Seq2SeqModel<T>, pairs: &[SentencePair]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "reverse_source={}", model.config.reverse_source);
    for (i, pair) in pairs.iter().take(5).enumerate() {
        let input = model.encoder_input(&pair.source, model.config.reverse_source);
        let ids = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "pair {i} source: {}", ids(&pair.source));
        let _ = writeln!(out, "pair {i} encoder_input: {}", ids(&input));
    }
    out
}

fn ensemble_precision(paths: &[PathBuf]) -> anyhow::Result<Precision> {
    let mut precision = None;
    for p in paths {
        let here = checkpoint_precision(p)?;
        match precision {
            None => precision = Some(here),
            Some(prev) if prev != here => bail!(seq2seq_core::Error::Config(format!(
                "{} holds {} parameters, earlier checkpoints hold {}",
                p.display(),
                here.name(),
                prev.name()
            ))),
            Some(_) => {}
        }
    }
    precision.context("no checkpoint given")
}

fn load_models<T: Real>(paths: &[PathBuf]) -> anyhow::Result<Vec<Seq2SeqModel<T>>> {
    let models: Vec<Seq2SeqModel<T>> = paths
        .iter()
        .map(|p| load_checkpoint::<T>(p).map(|c| c.model))
        .collect::<Result<_, _>>()?;
    check_ensemble(&models.iter().collect::<Vec<_>>())?;
    Ok(models)
}

fn emit(path: Option<&Path>, lines_out: &[String]) -> anyhow::Result<()> {
    match path {
        Some(p) => write_lines(p, lines_out)?,
        None => {
            for l in lines_out {
                println!("{l}");
            }
        }
    }
    Ok(())
}

fn translate_as<T: Real>(a: &TranslateArgs) -> anyhow::Result<()> {
    let models = load_models::<T>(&a.checkpoints)?;
    let refs: Vec<&Seq2SeqModel<T>> = models.iter().collect();
    let (src_vocab, tgt_vocab) = (&models[0].src_vocab, &models[0].tgt_vocab);
    let mut outputs = Vec::new();
    let mut scores = Vec::new();
    for line in read_text(&a.input)?.lines() {
        let source = src_vocab.encode(line.split_whitespace());
        if source.is_empty() {
            outputs.push(String::new());
            scores.push(String::from("0"));
            continue;
        }
        let max_len = a.max_len.unwrap_or_else(|| default_max_len(source.len()));
        let hyp = translate(&refs, &source, a.beam, max_len)?;
        outputs.push(tgt_vocab.decode(hyp.words()).join(" "));
        scores.push(format!("{:?}", hyp.logprob.as_f64()));
    }
    emit(a.output.as_deref(), &outputs)?;
    if let Some(p) = &a.scores {
        write_lines(p, &scores)?;
    }
    Ok(())
}

fn rescore_as<T: Real>(a: &RescoreArgs) -> anyhow::Result<()> {
    let models = load_models::<T>(&a.checkpoints)?;
    let refs: Vec<&Seq2SeqModel<T>> = models.iter().collect();
    let src_vocab = &models[0].src_vocab;
    let sources: Vec<Vec<usize>> = read_text(&a.sources)?
        .lines()
        .map(|l| src_vocab.encode(l.split_whitespace()))
        .collect();
    let entries = nbest::parse(&read_text(&a.nbest)?).with_context(|| a.nbest.display().to_string())?;
    let rescored = rescore_nbest(&refs, &sources, &entries, a.weight)?;
    let out: Vec<String> = rescored.iter().map(nbest::format_rescored).collect();
    emit(a.output.as_deref(), &out)
}

/// `BLEU = 26.31, 60.0/33.3/20.0/10.0 (BP=1.000, ratio=1.000, hyp_len=10, ref_len=10)`
pub fn format_bleu(r: &BleuReport) -> String {
    let precisions: Vec<String> = r.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
    let ratio = if r.ref_length == 0 {
        0.0
    } else {
        r.hyp_length as f64 / r.ref_length as f64
    };
    format!(
        "BLEU = {:.2}, {} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
        r.bleu,
        precisions.join("/"),
        r.brevity_penalty,
        ratio,
        r.hyp_length,
        r.ref_length
    )
}

fn buckets_csv(buckets: &[BucketReport]) -> String {
    let mut out = String::from("bucket,key_min,key_max,sentences,bleu,brevity_penalty,hyp_length,ref_length\n");
    for (i, b) in buckets.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            i + 1,
            b.key_min,
            b.key_max,
            b.sentences,
            b.report.bleu,
            b.report.brevity_penalty,
            b.report.hyp_length,
            b.report.ref_length
        );
    }
    out
}

fn evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let hyps = read_token_lines(&a.hyp)?;
    let refs = read_token_lines(&a.reference)?;
    let report = corpus_bleu(&hyps, &refs, 4)?;
    println!("{}", format_bleu(&report));

    let buckets = match (a.by_length, a.by_rarity) {
        (Some(n), _) => {
            let sources = read_token_lines(a.source.as_ref().expect("clap enforces --source"))?;
            let ids: Vec<Vec<usize>> = sources.iter().map(|s| vec![0; s.len()]).collect();
            Some(bleu_by_length(&hyps, &refs, &ids, n)?)
        }
        (None, Some(n)) => {
            let sources = read_token_lines(a.source.as_ref().expect("clap enforces --source"))?;
            let vocab: Vocabulary = load_vocab(a.src_vocab.as_ref().expect("clap enforces --src-vocab"))?;
            let ids: Vec<Vec<usize>> = sources.iter().map(|s| vocab.encode(s.iter().map(String::as_str))).collect();
            Some(bleu_by_rarity(&hyps, &refs, &ids, &vocab.frequency_ranks(), n)?)
        }
        _ => None,
    };
    if let Some(buckets) = &buckets {
        for (i, b) in buckets.iter().enumerate() {
            println!(
                "bucket {} keys {}..{} sentences {}: {}",
                i + 1,
                b.key_min,
                b.key_max,
                b.sentences,
                format_bleu(&b.report)
            );
        }
        if let Some(p) = &a.csv {
            write_text(p, &buckets_csv(buckets))?;
        }
    }

    if !a.checkpoints.is_empty() {
        let ppl = match ensemble_precision(&a.checkpoints)? {
            Precision::Single => perplexity_as::<f32>(a)?,
            Precision::Double => perplexity_as::<f64>(a)?,
        };
        println!("perplexity = {ppl}");
    }
    Ok(())
}

fn perplexity_as<T: Real>(a: &EvaluateArgs) -> anyhow::Result<f64> {
    let models = load_models::<T>(&a.checkpoints)?;
    let refs: Vec<&Seq2SeqModel<T>> = models.iter().collect();
    let (src, tgt) = (a.ppl_src.as_ref().expect("clap"), a.ppl_tgt.as_ref().expect("clap"));
    let corpus = load_parallel_corpus(src, tgt, &models[0].src_vocab, &models[0].tgt_vocab)?;
    Ok(perplexity(&refs, &corpus.corpus.pairs)?)
}

fn analyze_as<T: Real>(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let model = load_checkpoint::<T>(&a.checkpoint)?.model;
    let phrases: Vec<Vec<usize>> = read_text(&a.phrases)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| model.src_vocab.encode(l.split_whitespace()))
        .collect();
    let reps = extract_representations(&model, &phrases)?;
    let pca = pca_2d(&reps.vectors)?;
    export_scatter(&pca.projections, &reps.labels, &a.out)?;
    println!(
        "phrases={} dim={} explained_variance={} {}",
        reps.labels.len(),
        reps.vectors.cols(),
        pca.explained_variance[0],
        pca.explained_variance[1]
    );
    Ok(())
}

/// Training progress of a checkpoint, for scripts that resume or inspect.
pub fn checkpoint_progress(path: &Path) -> anyhow::Result<TrainingProgress> {
    Ok(match checkpoint_precision(path)? {
        Precision::Single => load_checkpoint::<f32>(path)?.progress,
        Precision::Double => load_checkpoint::<f64>(path)?.progress,
    })
}
