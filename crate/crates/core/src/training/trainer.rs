//! Online training with dev-set model selection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::backprop::{backprop_step, cross_entropy, Regularization};
use super::config::{DevMetric, TrainConfig};
use super::optim::MomentumSgd;
use super::report::{EpochStats, TrainReport};
use crate::data::{bio_chunk_f1, token_accuracy, Corpus, Vocabulary, UNK_ID};
use crate::embeddings::{pretrain_embeddings, PretrainConfig, SymbolEmbeddings};
use crate::error::{Error, Result};
use crate::math::{derive_seed, DenseVector};
use crate::models::{
    build_context, decide, run_bidirectional, run_sequence, Architecture, Dims, Direction, RnnParameters, SequenceRun,
    TaggerModel,
};

/// Embeddings to start from instead of random rows; mapped by symbol.
#[derive(Debug, Clone, Default)]
pub struct InitialEmbeddings {
    pub words: Option<SymbolEmbeddings>,
    pub labels: Option<SymbolEmbeddings>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TaggerModel,
    /// Report of the final stage (the forward stage of a bidirectional pair).
    pub report: TrainReport,
    /// Report of the backward network trained first for a bidirectional pair.
    pub backward_report: Option<TrainReport>,
}

/// Which network a progress callback is reporting on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Forward,
    Backward,
    BidirectionalForward,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Forward => "forward",
            Stage::Backward => "backward",
            Stage::BidirectionalForward => "bidirectional",
        }
    }
}

pub fn train(
    arch: Architecture,
    direction: Direction,
    train: &Corpus,
    dev: &Corpus,
    config: &TrainConfig,
    init: &InitialEmbeddings,
) -> Result<TrainOutcome> {
    train_with_progress(arch, direction, train, dev, config, init, &mut |_, _| {})
}

pub fn train_with_progress(
    arch: Architecture,
    direction: Direction,
    train: &Corpus,
    dev: &Corpus,
    config: &TrainConfig,
    init: &InitialEmbeddings,
    progress: &mut dyn FnMut(Stage, &EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidInput("development corpus is empty".into()));
    }
    if train.word_vocab != dev.word_vocab || train.label_vocab != dev.label_vocab {
        return Err(Error::InvalidInput(
            "training and development corpora must share vocabularies".into(),
        ));
    }
    let dims = Dims {
        vocab: train.word_vocab.len(),
        labels: train.label_vocab.len(),
        emb_dim: config.emb_dim,
        hidden: config.hidden,
        window: config.window,
        context: config.context,
    };
    let init = resolve_embeddings(arch, train, config, init)?;
    let trainer = Trainer {
        arch,
        dims,
        train,
        dev,
        config,
        init: &init,
    };

    let (model, report, backward_report) = match direction {
        Direction::Forward => {
            let (p, r) = trainer.stage(Stage::Forward, None, progress)?;
            (
                TaggerModel::new(direction, p, None, words(train), labels(train))?,
                r,
                None,
            )
        }
        Direction::Backward => {
            let (p, r) = trainer.stage(Stage::Backward, None, progress)?;
            (
                TaggerModel::new(direction, p, None, words(train), labels(train))?,
                r,
                None,
            )
        }
        Direction::Bidirectional => {
            let (back, back_report) = trainer.stage(Stage::Backward, None, progress)?;
            let (fwd, r) = trainer.stage(Stage::BidirectionalForward, Some(&back), progress)?;
            let model = TaggerModel::new(direction, fwd, Some(back), words(train), labels(train))?;
            (model, r, Some(back_report))
        }
    };
    Ok(TrainOutcome {
        model,
        report,
        backward_report,
    })
}

fn words(c: &Corpus) -> Vocabulary {
    c.word_vocab.clone()
}

fn labels(c: &Corpus) -> Vocabulary {
    c.label_vocab.clone()
}

/// Pre-trains the tables the caller did not supply, when asked to.
fn resolve_embeddings(
    arch: Architecture,
    train: &Corpus,
    config: &TrainConfig,
    init: &InitialEmbeddings,
) -> Result<InitialEmbeddings> {
    let mut out = init.clone();
    if !config.pretrain {
        return Ok(out);
    }
    let longest = train.examples.iter().map(|e| e.len()).max().unwrap_or(0);
    let pcfg = |epochs, stream| PretrainConfig {
        dim: config.emb_dim,
        window: config.window.clamp(1, longest.max(1)),
        hidden: config.hidden,
        epochs,
        lr: config.lr,
        lambda: config.lambda,
        seed: derive_seed(config.seed, stream),
    };
    if out.words.is_none() {
        let seqs: Vec<Vec<usize>> = train.examples.iter().map(|e| e.word_ids().to_vec()).collect();
        let table = pretrain_embeddings(&seqs, train.word_vocab.len(), &pcfg(config.pretrain_word_epochs, 10))?.table;
        out.words = Some(SymbolEmbeddings::new(train.word_vocab.clone(), table)?);
    }
    if out.labels.is_none() && arch.uses_label_embeddings() {
        let seqs: Vec<Vec<usize>> = train.examples.iter().map(|e| e.label_ids().to_vec()).collect();
        let table = pretrain_embeddings(&seqs, train.label_vocab.len(), &pcfg(config.pretrain_label_epochs, 11))?.table;
        out.labels = Some(SymbolEmbeddings::new(train.label_vocab.clone(), table)?);
    }
    Ok(out)
}

/// Maps reserved label ids to `O` so chunk scoring never sees them.
fn chunk_symbols(vocab: &Vocabulary, ids: &[usize]) -> Vec<String> {
    ids.iter()
        .map(|&id| match vocab.symbol(id) {
            Some(s) if !Vocabulary::is_reserved(id) => s.to_owned(),
            _ => "O".to_owned(),
        })
        .collect()
}

/// Scores `predict` on `corpus`. Sequences are tagged in parallel; the
/// result does not depend on the number of threads.
pub fn evaluate<F>(corpus: &Corpus, metric: DevMetric, predict: F) -> Result<f64>
where
    F: Fn(&[usize]) -> Result<Vec<usize>> + Sync,
{
    let predicted: Vec<Vec<usize>> = corpus
        .examples
        .par_iter()
        .map(|ex| predict(ex.word_ids()))
        .collect::<Result<_>>()?;
    let gold: Vec<Vec<usize>> = corpus.examples.iter().map(|e| e.label_ids().to_vec()).collect();
    match metric {
        DevMetric::Accuracy => token_accuracy(&gold, &predicted),
        DevMetric::ChunkF1 => {
            let vocab = &corpus.label_vocab;
            let g: Vec<Vec<String>> = gold.iter().map(|s| chunk_symbols(vocab, s)).collect();
            let p: Vec<Vec<String>> = predicted.iter().map(|s| chunk_symbols(vocab, s)).collect();
            Ok(bio_chunk_f1(&g, &p)?.f1)
        }
    }
}

pub fn evaluate_model(model: &TaggerModel, corpus: &Corpus, metric: DevMetric) -> Result<f64> {
    evaluate(corpus, metric, |words| model.tag(words))
}

struct Trainer<'a> {
    arch: Architecture,
    dims: Dims,
    train: &'a Corpus,
    dev: &'a Corpus,
    config: &'a TrainConfig,
    init: &'a InitialEmbeddings,
}

impl Trainer<'_> {
    fn initial_params(&self, stage: Stage) -> Result<RnnParameters> {
        let stream = match stage {
            Stage::Forward => 1,
            Stage::Backward => 2,
            Stage::BidirectionalForward => 3,
        };
        let bidirectional = stage == Stage::BidirectionalForward;
        let mut p = RnnParameters::new(
            self.arch,
            self.dims,
            bidirectional,
            derive_seed(self.config.seed, stream),
        );
        p.jordan_feed = self.config.jordan_feed;
        if let Some(e) = &self.init.words {
            e.project_onto(&self.train.word_vocab, &mut p.word_emb)?;
        }
        if let (Some(e), Some(t)) = (&self.init.labels, &mut p.label_emb) {
            e.project_onto(&self.train.label_vocab, t)?;
        }
        Ok(p)
    }

    fn dev_metric(&self, params: &RnnParameters, stage: Stage, backward: Option<&RnnParameters>) -> Result<f64> {
        evaluate(self.dev, self.config.metric, |words| match (stage, backward) {
            (Stage::BidirectionalForward, Some(b)) => Ok(run_bidirectional(params, b, words)?.0.labels),
            (Stage::Backward, _) => Ok(run_sequence(params, words, Direction::Backward, None)?.labels),
            _ => Ok(run_sequence(params, words, Direction::Forward, None)?.labels),
        })
    }

    fn stage(
        &self,
        stage: Stage,
        backward: Option<&RnnParameters>,
        progress: &mut dyn FnMut(Stage, &EpochStats),
    ) -> Result<(RnnParameters, TrainReport)> {
        let config = self.config;
        let mut params = self.initial_params(stage)?;
        let reg = Regularization {
            lambda: config.lambda,
            embeddings: config.l2_embeddings,
        };

        // Future context for the bidirectional forward stage: the backward
        // network's own predictions on each training sequence.
        let futures: Option<Vec<SequenceRun>> = backward
            .map(|b| {
                self.train
                    .examples
                    .par_iter()
                    .map(|ex| run_sequence(b, ex.word_ids(), Direction::Backward, None))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let reverse = stage == Stage::Backward;
        let n_tokens = self.train.n_tokens() as f64;

        if config.epochs == 0 {
            let mut loss = 0.0;
            for (i, ex) in self.train.examples.iter().enumerate() {
                let future = futures.as_ref().map(|f| &f[i]);
                loss += run_training_sequence(
                    &mut params,
                    None,
                    ex.word_ids(),
                    ex.label_ids(),
                    future,
                    reverse,
                    reg,
                    config.teacher_forcing,
                )?;
            }
            let stats = EpochStats {
                epoch: 0,
                train_loss: loss / n_tokens,
                dev_metric: self.dev_metric(&params, stage, backward)?,
            };
            progress(stage, &stats);
            return Ok((params, TrainReport::from_epochs(vec![stats])?));
        }

        let mut opt = MomentumSgd::new(&params, config.lr, config.momentum);
        let mut epochs = Vec::with_capacity(config.epochs);
        let mut best: Option<(f64, RnnParameters)> = None;
        let stage_stream = match stage {
            Stage::Forward => 1_000,
            Stage::Backward => 2_000,
            Stage::BidirectionalForward => 3_000,
        };
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        for epoch in 1..=config.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stage_stream + epoch as u64));
            order.sort_unstable();
            order.shuffle(&mut rng);
            let mut loss = 0.0;
            let mut words = Vec::new();
            for &i in &order {
                let ex = &self.train.examples[i];
                words.clear();
                words.extend(ex.word_ids().iter().map(|&w| {
                    if config.unk_rate > 0.0 && rng.gen::<f64>() < config.unk_rate {
                        UNK_ID
                    } else {
                        w
                    }
                }));
                let future = futures.as_ref().map(|f| &f[i]);
                loss += run_training_sequence(
                    &mut params,
                    Some(&mut opt),
                    &words,
                    ex.label_ids(),
                    future,
                    reverse,
                    reg,
                    config.teacher_forcing,
                )?;
            }
            opt.flush(&mut params);
            if !params.h.is_finite() || !params.o.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "training diverged in epoch {epoch}; lower the learning rate"
                )));
            }
            let dev_metric = self.dev_metric(&params, stage, backward)?;
            let stats = EpochStats {
                epoch,
                train_loss: loss / n_tokens,
                dev_metric,
            };
            progress(stage, &stats);
            epochs.push(stats);
            if best.as_ref().is_none_or(|(m, _)| dev_metric > *m) {
                best = Some((dev_metric, params.clone()));
            }
        }
        let (_, best_params) = best.expect("at least one epoch ran");
        Ok((best_params, TrainReport::from_epochs(epochs)?))
    }
}

/// Runs one sequence left to right (after reversal for a backward network),
/// updating the parameters at every position when an optimizer is given.
/// Returns the summed cross-entropy.
#[allow(clippy::too_many_arguments)]
fn run_training_sequence(
    params: &mut RnnParameters,
    mut opt: Option<&mut MomentumSgd>,
    words: &[usize],
    gold: &[usize],
    future: Option<&SequenceRun>,
    reverse: bool,
    reg: Regularization,
    teacher_forcing: bool,
) -> Result<f64> {
    let (rev_words, rev_gold);
    let (words, gold) = if reverse {
        rev_words = words.iter().rev().copied().collect::<Vec<_>>();
        rev_gold = gold.iter().rev().copied().collect::<Vec<_>>();
        (rev_words.as_slice(), rev_gold.as_slice())
    } else {
        (words, gold)
    };
    let labels = params.dims.labels;
    let keep_outputs = params.arch.uses_output_history();
    let keep_hiddens = params.arch.uses_hidden_history();
    let mut history = SequenceRun::default();
    let mut total = 0.0;
    for (t, &g) in gold.iter().enumerate() {
        let ctx = build_context(params, words, t, &history, future);
        let (ce, trace) = match opt.as_deref_mut() {
            Some(opt) => {
                opt.prepare(params, &ctx);
                let step = backprop_step(params, &ctx, g, reg)?;
                opt.apply(params, &step.grads)?;
                (step.cross_entropy, step.trace)
            }
            None => {
                let trace = params.step(&ctx)?;
                (cross_entropy(&trace.output, g), trace)
            }
        };
        total += ce;
        let (label, output) = if teacher_forcing {
            (g, keep_outputs.then(|| DenseVector::one_hot(labels, g)))
        } else {
            (decide(&trace.output), keep_outputs.then_some(trace.output))
        };
        history.labels.push(label);
        if let Some(o) = output {
            history.outputs.push(o);
        }
        if keep_hiddens {
            history.hiddens.push(trace.hidden);
        }
    }
    Ok(total)
}
