//! Greedy decoding in forward, backward and bidirectional mode.

use super::arch::{Architecture, Direction};
use super::context::{build_context, SequenceRun};
use super::forward::decide;
use super::params::RnnParameters;
use crate::data::Vocabulary;
use crate::error::{Error, Result};

fn run_left_to_right(params: &RnnParameters, words: &[usize], future: Option<&SequenceRun>) -> Result<SequenceRun> {
    let mut run = SequenceRun {
        labels: Vec::with_capacity(words.len()),
        hiddens: Vec::with_capacity(words.len()),
        outputs: Vec::with_capacity(words.len()),
    };
    for t in 0..words.len() {
        let ctx = build_context(params, words, t, &run, future);
        let trace = params.step(&ctx)?;
        run.labels.push(decide(&trace.output));
        run.hiddens.push(trace.hidden);
        run.outputs.push(trace.output);
    }
    Ok(run)
}

/// Decodes `words` greedily, feeding back the network's own predictions.
/// The returned run is in the original order for both directions.
pub fn run_sequence(
    params: &RnnParameters,
    words: &[usize],
    direction: Direction,
    future: Option<&SequenceRun>,
) -> Result<SequenceRun> {
    if words.is_empty() {
        return Err(Error::InvalidInput("cannot tag an empty sequence".into()));
    }
    if params.bidirectional != future.is_some() {
        return Err(Error::Architecture(
            "future context must be given exactly to bidirectional stages".into(),
        ));
    }
    match direction {
        Direction::Forward => run_left_to_right(params, words, future),
        Direction::Backward => {
            if future.is_some() {
                return Err(Error::Architecture("a backward network takes no future context".into()));
            }
            let reversed: Vec<usize> = words.iter().rev().copied().collect();
            Ok(run_left_to_right(params, &reversed, None)?.reversed())
        }
        Direction::Bidirectional => Err(Error::InvalidInput(
            "bidirectional tagging needs both stages; use tag_bidirectional".into(),
        )),
    }
}

pub fn tag_sequence(
    params: &RnnParameters,
    arch: Architecture,
    words: &[usize],
    direction: Direction,
) -> Result<Vec<usize>> {
    check_arch(params, arch)?;
    Ok(run_sequence(params, words, direction, None)?.labels)
}

/// Runs the backward network, then the forward stage conditioned on the
/// backward network's predictions for positions `t+1 … t+c`.
pub fn run_bidirectional(
    forward: &RnnParameters,
    backward: &RnnParameters,
    words: &[usize],
) -> Result<(SequenceRun, SequenceRun)> {
    if !forward.bidirectional || backward.bidirectional {
        return Err(Error::Architecture(
            "bidirectional tagging needs a bidirectional forward stage and a unidirectional backward model".into(),
        ));
    }
    if forward.arch != backward.arch {
        return Err(Error::Architecture(format!(
            "stage architectures differ: {} vs {}",
            forward.arch, backward.arch
        )));
    }
    let back = run_sequence(backward, words, Direction::Backward, None)?;
    let fwd = run_sequence(forward, words, Direction::Forward, Some(&back))?;
    Ok((fwd, back))
}

pub fn tag_bidirectional(
    forward: &RnnParameters,
    backward: &RnnParameters,
    arch: Architecture,
    words: &[usize],
) -> Result<Vec<usize>> {
    check_arch(forward, arch)?;
    Ok(run_bidirectional(forward, backward, words)?.0.labels)
}

fn check_arch(params: &RnnParameters, arch: Architecture) -> Result<()> {
    if params.arch != arch {
        return Err(Error::Architecture(format!(
            "asked to tag with {arch} but parameters are {}",
            params.arch
        )));
    }
    Ok(())
}

/// A complete tagger: one network (forward or backward) or a bidirectional
/// pair, plus the vocabularies it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub direction: Direction,
    /// The forward network, the backward network, or the bidirectional forward stage.
    pub params: RnnParameters,
    /// Backward network feeding a bidirectional forward stage.
    pub backward: Option<RnnParameters>,
    pub word_vocab: Vocabulary,
    pub label_vocab: Vocabulary,
}

impl TaggerModel {
    pub fn new(
        direction: Direction,
        params: RnnParameters,
        backward: Option<RnnParameters>,
        word_vocab: Vocabulary,
        label_vocab: Vocabulary,
    ) -> Result<Self> {
        let model = Self {
            direction,
            params,
            backward,
            word_vocab,
            label_vocab,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn arch(&self) -> Architecture {
        self.params.arch
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let stage_ok = match (self.direction, &self.backward) {
            (Direction::Bidirectional, Some(b)) => {
                b.validate()?;
                self.params.bidirectional
                    && !b.bidirectional
                    && b.arch == self.params.arch
                    && b.dims == self.params.dims
            }
            (Direction::Forward | Direction::Backward, None) => !self.params.bidirectional,
            _ => false,
        };
        if !stage_ok {
            return Err(Error::Architecture(format!(
                "inconsistent stages for a {} tagger",
                self.direction
            )));
        }
        if self.params.dims.vocab != self.word_vocab.len() || self.params.dims.labels != self.label_vocab.len() {
            return Err(Error::dim(
                "vocabulary sizes",
                format!("{} words / {} labels", self.params.dims.vocab, self.params.dims.labels),
                format!("{} words / {} labels", self.word_vocab.len(), self.label_vocab.len()),
            ));
        }
        Ok(())
    }

    /// Final-stage run (labels, hidden states, output distributions).
    pub fn run(&self, words: &[usize]) -> Result<SequenceRun> {
        match (&self.backward, self.direction) {
            (Some(b), Direction::Bidirectional) => Ok(run_bidirectional(&self.params, b, words)?.0),
            _ => run_sequence(&self.params, words, self.direction, None),
        }
    }

    pub fn tag(&self, words: &[usize]) -> Result<Vec<usize>> {
        Ok(self.run(words)?.labels)
    }

    pub fn word_ids(&self, tokens: &[String], tokenize: bool) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| {
                if tokenize {
                    self.word_vocab.id_or_unk(&crate::data::tokenize_word(t))
                } else {
                    self.word_vocab.id_or_unk(t)
                }
            })
            .collect()
    }

    pub fn label_names(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.label_vocab.symbol(id).unwrap_or(crate::data::UNK).to_owned())
            .collect()
    }
}
