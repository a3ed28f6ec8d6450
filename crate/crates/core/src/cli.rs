//! The `seqlabel` command line.
//!
//! Exit codes: 0 on success, 1 when a command's contract is violated (bad
//! data, failed check, I/O), 2 on usage errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    bio_chunk_f1, read_blocks, read_conll, token_accuracy, BlockReader, RawBlock, SyntheticTask, VocabSource,
    DEFAULT_AMBIGUITY,
};
use crate::diagnostics::{compare_report, prob_concentration, render_comparison, Thresholds};
use crate::embeddings::{pretrain_embeddings, PretrainConfig, SymbolEmbeddings};
use crate::error::{Error, Result};
use crate::models::{param_count, Architecture, CountDims, Direction};
use crate::serialization::{load_embeddings, load_model, save_embeddings, save_model};
use crate::training::{
    grad_check, train_with_progress, DevMetric, GradCheckConfig, InitialEmbeddings, TrainConfig, TrainReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "seqlabel", version, about = "Recurrent neural network sequence labelers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-train an embedding table with a window language model.
    Pretrain(PretrainArgs),
    /// Train a tagger and write the model plus its epoch log.
    Train(TrainArgs),
    /// Tag a CoNLL or token-per-line file.
    Tag(TagArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Print parameter counts for given layer sizes.
    Params(ParamsArgs),
    /// Write a synthetic tagging task (train/dev/test and metadata).
    Synth(SynthArgs),
    /// Measure how peaked a Jordan model's output distributions are.
    Concentration(ConcentrationArgs),
    /// Rank models by their best dev metric.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 200)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 0.003)]
    lambda: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Embed the label column instead of the words.
    #[arg(long)]
    labels: bool,
    #[arg(long)]
    no_tokenize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long, value_parser = parse_direction, default_value = "forward")]
    direction: Direction,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `key=value` overrides, e.g. `--config hidden=300 lr=0.1`.
    #[arg(long, num_args = 1..)]
    config: Vec<String>,
    #[arg(long)]
    word_emb: Option<PathBuf>,
    #[arg(long)]
    label_emb: Option<PathBuf>,
    #[arg(long)]
    no_tokenize: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_tokenize: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_parser = parse_metric)]
    metric: DevMetric,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Entries sampled per parameter block.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    bidirectional: bool,
}

#[derive(Debug, Args)]
struct ParamsArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Architecture,
    /// `V,D,w,c,H,O`
    #[arg(long, value_parser = parse_dims)]
    dims: CountDims,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    order: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    words: usize,
    #[arg(long, default_value_t = 8)]
    labels: usize,
    #[arg(long, default_value_t = DEFAULT_AMBIGUITY)]
    ambiguity: usize,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 15)]
    max_len: usize,
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    dev: usize,
    #[arg(long, default_value_t = 500)]
    test: usize,
}

#[derive(Debug, Args)]
struct ConcentrationArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    high: f64,
    #[arg(long, default_value_t = 0.001)]
    tail: f64,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    no_tokenize: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Epoch logs written by `train`, or files of `name<TAB>metric` lines.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
}

fn parse_arch(s: &str) -> std::result::Result<Architecture, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<DevMetric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dims(s: &str) -> std::result::Result<CountDims, String> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|_| format!("bad size {x:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match v[..] {
        [vocab, emb_dim, window, context, hidden, labels] => Ok(CountDims {
            vocab,
            emb_dim,
            window,
            context,
            hidden,
            labels,
        }),
        _ => Err(format!("expected 6 comma-separated sizes V,D,w,c,H,O, got {}", v.len())),
    }
}

/// Runs one invocation against the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Pretrain(a) => pretrain(a, out),
        Command::Train(a) => train(a, out, err),
        Command::Tag(a) => tag(a),
        Command::Eval(a) => eval(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Params(a) => params(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Concentration(a) => concentration(a, out),
        Command::Compare(a) => compare(a, out),
    }
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn pretrain(a: PretrainArgs, out: &mut dyn Write) -> Result<i32> {
    let corpus = read_conll(&a.input, VocabSource::Build { min_freq: 1 }, !a.no_tokenize)?;
    let (vocab, sequences): (_, Vec<Vec<usize>>) = if a.labels {
        (
            corpus.label_vocab.clone(),
            corpus.examples.iter().map(|e| e.label_ids().to_vec()).collect(),
        )
    } else {
        (
            corpus.word_vocab.clone(),
            corpus.examples.iter().map(|e| e.word_ids().to_vec()).collect(),
        )
    };
    let config = PretrainConfig {
        dim: a.dim,
        window: a.window,
        hidden: a.hidden,
        epochs: a.epochs,
        lr: a.lr,
        lambda: a.lambda,
        seed: a.seed,
    };
    writeln!(out, "{config:?}").map_err(stdout_err)?;
    let outcome = pretrain_embeddings(&sequences, vocab.len(), &config)?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        writeln!(out, "epoch {epoch}\tperplexity {:.4}", loss.exp()).map_err(stdout_err)?;
    }
    save_embeddings(&SymbolEmbeddings::new(vocab, outcome.table)?, &a.out)?;
    Ok(EXIT_OK)
}

fn log_path(model: &Path, suffix: &str) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut config = TrainConfig::default();
    for assignment in &a.config {
        config.set(assignment)?;
    }
    config.validate()?;
    writeln!(out, "arch={}\ndirection={}\n{config}", a.arch, a.direction).map_err(stdout_err)?;

    let tokenize = !a.no_tokenize;
    let train = read_conll(&a.train, VocabSource::Build { min_freq: 1 }, tokenize)?;
    let dev = read_conll(
        &a.dev,
        VocabSource::Existing {
            words: &train.word_vocab,
            labels: &train.label_vocab,
        },
        tokenize,
    )?;
    let init = InitialEmbeddings {
        words: a.word_emb.as_ref().map(load_embeddings).transpose()?,
        labels: a.label_emb.as_ref().map(load_embeddings).transpose()?,
    };
    let quiet = a.quiet;
    let outcome = train_with_progress(a.arch, a.direction, &train, &dev, &config, &init, &mut |stage, e| {
        if !quiet {
            let _ = writeln!(
                err,
                "{} epoch {}\tloss {:.4}\tdev {:.4}",
                stage.name(),
                e.epoch,
                e.train_loss,
                e.dev_metric
            );
        }
    })?;
    save_model(&outcome.model, &a.out)?;
    outcome.report.write_log(log_path(&a.out, ".log"))?;
    if let Some(backward) = &outcome.backward_report {
        backward.write_log(log_path(&a.out, ".backward.log"))?;
    }
    writeln!(
        out,
        "best epoch {}\tdev {} {:.4}",
        outcome.report.best_epoch,
        config.metric.name(),
        outcome.report.best_dev_metric
    )
    .map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn tag(a: TagArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let input = File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let output = File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut w = BufWriter::new(output);
    let reader = BlockReader::new(BufReader::new(input), a.input.display().to_string()).labels_optional();
    for block in reader {
        let block = block?;
        let tokens: Vec<String> = block.into_iter().map(|(t, _)| t).collect();
        let labels = model.label_names(&model.tag(&model.word_ids(&tokens, !a.no_tokenize))?);
        for (t, l) in tokens.iter().zip(&labels) {
            writeln!(w, "{t}\t{l}").map_err(|e| Error::io(&a.out, e))?;
        }
        writeln!(w).map_err(|e| Error::io(&a.out, e))?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    Ok(EXIT_OK)
}

fn labels_of(blocks: Vec<RawBlock>) -> Vec<Vec<String>> {
    blocks
        .into_iter()
        .map(|b| b.into_iter().map(|(_, l)| l).collect())
        .collect()
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let gold = labels_of(read_blocks(&a.gold)?);
    let pred = labels_of(read_blocks(&a.pred)?);
    let score = match a.metric {
        DevMetric::Accuracy => token_accuracy(&gold, &pred)?,
        DevMetric::ChunkF1 => bio_chunk_f1(&gold, &pred)?.f1,
    };
    writeln!(out, "{score:.4}").map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let config = GradCheckConfig {
        bidirectional: a.bidirectional,
        seed: a.seed,
        ..GradCheckConfig::default()
    };
    let report = grad_check(a.arch, &config, a.samples, a.eps)?;
    for b in &report.blocks {
        writeln!(
            out,
            "{}\t{} checked\tmax relative error {:.3e}",
            b.block, b.checked, b.max_rel_error
        )
        .map_err(stdout_err)?;
    }
    let pass = report.max_rel_error < GRADCHECK_TOLERANCE;
    writeln!(
        out,
        "{}: max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e})",
        if pass { "ok" } else { "FAILED" },
        report.max_rel_error
    )
    .map_err(stdout_err)?;
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}

fn params(a: ParamsArgs, out: &mut dyn Write) -> Result<i32> {
    let c = param_count(a.arch, a.dims);
    writeln!(out, "bias_free\t{}\nwith_biases\t{}", c.bias_free, c.with_biases).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32> {
    if a.min_len == 0 || a.min_len > a.max_len {
        return Err(Error::InvalidInput(format!(
            "bad length range {}..={}",
            a.min_len, a.max_len
        )));
    }
    let task = SyntheticTask::with_ambiguity(a.order, a.words, a.labels, a.ambiguity, a.seed)?;
    let splits = task.splits(a.min_len..=a.max_len, (a.train, a.dev, a.test))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (name, corpus) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        crate::data::write_conll(corpus, a.out_dir.join(format!("{name}.conll")))?;
    }
    let extra = format!(
        "lengths\t{}-{}\nsizes\t{},{},{}\n",
        a.min_len, a.max_len, a.train, a.dev, a.test
    );
    splits.task.write_metadata(a.out_dir.join("synth.meta"), &extra)?;
    write!(out, "{}{extra}", splits.task.metadata()).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn concentration(a: ConcentrationArgs, out: &mut dyn Write) -> Result<i32> {
    let model = load_model(&a.model)?;
    let corpus = read_conll(
        &a.input,
        VocabSource::Existing {
            words: &model.word_vocab,
            labels: &model.label_vocab,
        },
        !a.no_tokenize,
    )?;
    let stats = prob_concentration(
        &model,
        &corpus,
        Thresholds {
            high: a.high,
            tail: a.tail,
        },
    )?;
    let text = if a.json { stats.to_json() } else { stats.summary() };
    writeln!(out, "{text}").map_err(stdout_err)?;
    Ok(EXIT_OK)
}

/// Best dev metric from a training log, or every `name<TAB>metric` line.
fn read_results(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(report) = TrainReport::parse_log(&text) {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .map(|n| n.trim_end_matches(".log").to_owned())
            .unwrap_or_else(|| path.display().to_string());
        return Ok(vec![(name, report.best_dev_metric)]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "expected a training log or name<TAB>metric lines".into(),
            };
            let (name, metric) = line.rsplit_once('\t').ok_or_else(bad)?;
            Ok((name.to_owned(), metric.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn compare(a: CompareArgs, out: &mut dyn Write) -> Result<i32> {
    let mut results = Vec::new();
    for path in &a.results {
        results.extend(read_results(path)?);
    }
    write!(out, "{}", render_comparison(&compare_report(&results)?)).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(
            std::iter::once("seqlabel").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn params_example() {
        let (code, out, _) = invoke(&["params", "--arch", "jordan", "--dims", "2210,200,3,6,100,99"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().next().unwrap(), "bias_free\t651300");
        assert_eq!(out.lines().nth(1).unwrap(), "with_biases\t651499");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(invoke(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(invoke(&["params", "--arch", "jordan"]).0, EXIT_USAGE);
        assert_eq!(
            invoke(&["params", "--arch", "lstm", "--dims", "1,1,1,1,1,1"]).0,
            EXIT_USAGE
        );
        assert_eq!(invoke(&["params", "--arch", "irnn", "--dims", "1,2,3"]).0, EXIT_USAGE);
        assert_eq!(invoke(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn contract_violations_exit_one() {
        let (code, _, err) = invoke(&[
            "eval",
            "--metric",
            "accuracy",
            "--gold",
            "/nonexistent",
            "--pred",
            "/nonexistent",
        ]);
        assert_eq!(code, EXIT_FAILURE);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn gradcheck_passes() {
        let (code, out, _) = invoke(&["gradcheck", "--arch", "irnn"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.lines().last().unwrap().starts_with("ok"));
    }

    #[test]
    fn dims_parser() {
        let d = parse_dims("1, 2,3,4,5,6").unwrap();
        assert_eq!((d.vocab, d.labels), (1, 6));
        assert!(parse_dims("1,2,x,4,5,6").is_err());
    }
}
