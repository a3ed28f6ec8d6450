use super::arch::JordanFeed;
use super::params::RnnParameters;
use crate::data::{BOS_LABEL_ID, PAD_ID};
use crate::math::{argmax, DenseVector};

/// Everything the hidden layer sees at one position besides the parameters.
///
/// Histories are ordered oldest first (most recent last); future blocks are
/// ordered nearest first (`t+1, …, t+c`). Only the parts an architecture
/// uses need to be filled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepContext {
    pub word_window: Vec<usize>,
    pub prev_labels: Vec<usize>,
    pub prev_hiddens: Vec<DenseVector>,
    pub prev_outputs: Vec<DenseVector>,
    pub future_labels: Option<Vec<usize>>,
    pub future_hiddens: Option<Vec<DenseVector>>,
    pub future_outputs: Option<Vec<DenseVector>>,
}

impl StepContext {
    /// Embedding rows read at this step, deduplicated, in first-use order.
    pub fn touched_word_rows(&self) -> Vec<usize> {
        dedup(self.word_window.iter().copied())
    }

    pub fn touched_label_rows(&self) -> Vec<usize> {
        let future = self.future_labels.iter().flatten().copied();
        dedup(self.prev_labels.iter().copied().chain(future))
    }
}

fn dedup(ids: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for id in ids {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// Per-position labels, hidden states and output distributions of one pass
/// over a sequence, in the sequence's original order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceRun {
    pub labels: Vec<usize>,
    pub hiddens: Vec<DenseVector>,
    pub outputs: Vec<DenseVector>,
}

impl SequenceRun {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn reversed(mut self) -> Self {
        self.labels.reverse();
        self.hiddens.reverse();
        self.outputs.reverse();
        self
    }
}

fn feed(mode: JordanFeed, output: &DenseVector) -> DenseVector {
    match mode {
        JordanFeed::Distribution => output.clone(),
        JordanFeed::OneHot => DenseVector::one_hot(output.len(), argmax(output.as_slice())),
    }
}

/// Builds the context for position `t` of `words`.
///
/// `history` must cover at least positions `0..t`; `future` (bidirectional
/// forward stage only) covers the whole sequence. Sequence edges are padded
/// with `<pad>` words, `<bos-label>` labels, one-hot `<bos-label>` outputs
/// and zero hidden vectors.
pub fn build_context(
    params: &RnnParameters,
    words: &[usize],
    t: usize,
    history: &SequenceRun,
    future: Option<&SequenceRun>,
) -> StepContext {
    let dims = &params.dims;
    let arch = params.arch;
    let (w, c) = (dims.window as isize, dims.context);
    let n = words.len();
    let bos_output = || DenseVector::one_hot(dims.labels, BOS_LABEL_ID);

    let word_window = (-w..=w)
        .map(|k| {
            let pos = t as isize + k;
            if pos < 0 || pos as usize >= n {
                PAD_ID
            } else {
                words[pos as usize]
            }
        })
        .collect();

    let past = |k: usize| t.checked_sub(k);
    let ahead = |k: usize| Some(t + k).filter(|&p| p < n);

    let mut ctx = StepContext {
        word_window,
        ..StepContext::default()
    };
    if arch.uses_label_embeddings() {
        ctx.prev_labels = (1..=c)
            .rev()
            .map(|k| past(k).map_or(BOS_LABEL_ID, |p| history.labels[p]))
            .collect();
    }
    if arch.uses_hidden_history() {
        ctx.prev_hiddens = (1..=c)
            .rev()
            .map(|k| past(k).map_or_else(|| DenseVector::zeros(dims.hidden), |p| history.hiddens[p].clone()))
            .collect();
    }
    if arch.uses_output_history() {
        ctx.prev_outputs = (1..=c)
            .rev()
            .map(|k| past(k).map_or_else(bos_output, |p| feed(params.jordan_feed, &history.outputs[p])))
            .collect();
    }
    if params.bidirectional {
        if let Some(fut) = future {
            if arch.uses_label_embeddings() {
                ctx.future_labels = Some(
                    (1..=c)
                        .map(|k| ahead(k).map_or(BOS_LABEL_ID, |p| fut.labels[p]))
                        .collect(),
                );
            }
            if arch.uses_hidden_history() {
                ctx.future_hiddens = Some(
                    (1..=c)
                        .map(|k| ahead(k).map_or_else(|| DenseVector::zeros(dims.hidden), |p| fut.hiddens[p].clone()))
                        .collect(),
                );
            }
            if arch.uses_output_history() {
                ctx.future_outputs = Some(
                    (1..=c)
                        .map(|k| ahead(k).map_or_else(bos_output, |p| feed(params.jordan_feed, &fut.outputs[p])))
                        .collect(),
                );
            }
        }
    }
    ctx
}
