use serde::Serialize;

use super::arch::{Activation, Architecture, JordanFeed};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::{derive_seed, init_matrix, DenseMatrix, DenseVector};

/// Layer sizes shared by every architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    /// Word vocabulary size |V|, reserved symbols included.
    pub vocab: usize,
    /// Label vocabulary size |O|; also the output layer width.
    pub labels: usize,
    /// Embedding width D (words and labels).
    pub emb_dim: usize,
    /// Hidden layer width |H|.
    pub hidden: usize,
    /// Words on each side of the current one.
    pub window: usize,
    /// Length of the label / hidden-state history.
    pub context: usize,
}

impl Dims {
    pub fn window_len(&self) -> usize {
        2 * self.window + 1
    }
}

/// Widths of the blocks that make up the hidden layer's two inputs: the
/// vector multiplied by `H` and the history multiplied by `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub words: usize,
    pub past_labels: usize,
    pub future_labels: usize,
    pub past_recurrent: usize,
    pub future_recurrent: usize,
}

impl InputLayout {
    pub fn new(arch: Architecture, dims: &Dims, bidirectional: bool) -> Self {
        let c = dims.context;
        let label_block = if arch.uses_label_embeddings() {
            c * dims.emb_dim
        } else {
            0
        };
        let recurrent_block = match arch {
            Architecture::Elman | Architecture::IPlusERnn => c * dims.hidden,
            Architecture::Jordan => c * dims.labels,
            Architecture::IRnn => 0,
        };
        let future = |w: usize| if bidirectional { w } else { 0 };
        Self {
            words: dims.window_len() * dims.emb_dim,
            past_labels: label_block,
            future_labels: future(label_block),
            past_recurrent: recurrent_block,
            future_recurrent: future(recurrent_block),
        }
    }

    pub fn hidden_input(&self) -> usize {
        self.words + self.past_labels + self.future_labels
    }

    pub fn recurrent_input(&self) -> usize {
        self.past_recurrent + self.future_recurrent
    }
}

/// Every trainable parameter of one network (one direction).
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParameters {
    pub arch: Architecture,
    pub dims: Dims,
    /// Forward stage of a bidirectional tagger: takes future context too.
    pub bidirectional: bool,
    pub jordan_feed: JordanFeed,
    pub activation: Activation,
    pub word_emb: EmbeddingTable,
    pub label_emb: Option<EmbeddingTable>,
    pub h: DenseMatrix,
    pub hidden_bias: DenseVector,
    pub r: Option<DenseMatrix>,
    pub o: DenseMatrix,
    pub output_bias: DenseVector,
}

impl RnnParameters {
    /// Randomly initialized parameters; biases start at zero.
    pub fn new(arch: Architecture, dims: Dims, bidirectional: bool, seed: u64) -> Self {
        let layout = InputLayout::new(arch, &dims, bidirectional);
        let label_emb = arch
            .uses_label_embeddings()
            .then(|| EmbeddingTable::random(dims.labels, dims.emb_dim, derive_seed(seed, 2)));
        let r = arch
            .has_recurrent_matrix()
            .then(|| init_matrix(layout.recurrent_input(), dims.hidden, derive_seed(seed, 4), None));
        Self {
            arch,
            dims,
            bidirectional,
            jordan_feed: JordanFeed::default(),
            activation: Activation::default(),
            word_emb: EmbeddingTable::random(dims.vocab, dims.emb_dim, derive_seed(seed, 1)),
            label_emb,
            h: init_matrix(layout.hidden_input(), dims.hidden, derive_seed(seed, 3), None),
            hidden_bias: DenseVector::zeros(dims.hidden),
            r,
            o: init_matrix(dims.hidden, dims.labels, derive_seed(seed, 5), None),
            output_bias: DenseVector::zeros(dims.labels),
        }
    }

    /// All parameters zero.
    pub fn zeros(arch: Architecture, dims: Dims, bidirectional: bool) -> Self {
        let mut p = Self::new(arch, dims, bidirectional, 0);
        p.for_each_slice_mut(|_, s| s.iter_mut().for_each(|x| *x = 0.0));
        p
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout::new(self.arch, &self.dims, self.bidirectional)
    }

    /// Checks every shape against the architecture's contract.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let layout = self.layout();
        let shape = |what: &'static str, m: &DenseMatrix, rows: usize, cols: usize| {
            if m.shape() == (rows, cols) {
                Ok(())
            } else {
                Err(Error::dim(
                    what,
                    format!("{rows}x{cols}"),
                    format!("{}x{}", m.rows(), m.cols()),
                ))
            }
        };
        if d.emb_dim == 0 || d.hidden == 0 || d.labels == 0 || d.vocab == 0 {
            return Err(Error::InvalidLayerSize(format!("{d:?}")));
        }
        shape("word embeddings", self.word_emb.matrix(), d.vocab, d.emb_dim)?;
        match (&self.label_emb, self.arch.uses_label_embeddings()) {
            (Some(t), true) => shape("label embeddings", t.matrix(), d.labels, d.emb_dim)?,
            (None, false) => {}
            (Some(_), false) => return Err(Error::Architecture(format!("{} has no label embeddings", self.arch))),
            (None, true) => return Err(Error::Architecture(format!("{} requires label embeddings", self.arch))),
        }
        shape("H", &self.h, layout.hidden_input(), d.hidden)?;
        match (&self.r, self.arch.has_recurrent_matrix()) {
            (Some(r), true) => shape("R", r, layout.recurrent_input(), d.hidden)?,
            (None, false) => {}
            (Some(_), false) => return Err(Error::Architecture(format!("{} has no R matrix", self.arch))),
            (None, true) => return Err(Error::Architecture(format!("{} requires an R matrix", self.arch))),
        }
        shape("O", &self.o, d.hidden, d.labels)?;
        if self.hidden_bias.len() != d.hidden {
            return Err(Error::dim("hidden bias", d.hidden, self.hidden_bias.len()));
        }
        if self.output_bias.len() != d.labels {
            return Err(Error::dim("output bias", d.labels, self.output_bias.len()));
        }
        let mut finite = true;
        self.for_each_slice(|_, s| finite &= s.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::InvalidInput("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Visits every parameter block in serialization order.
    pub fn for_each_slice(&self, mut f: impl FnMut(&'static str, &[f64])) {
        f("word_emb", self.word_emb.matrix().as_slice());
        if let Some(t) = &self.label_emb {
            f("label_emb", t.matrix().as_slice());
        }
        f("H", self.h.as_slice());
        f("hidden_bias", self.hidden_bias.as_slice());
        if let Some(r) = &self.r {
            f("R", r.as_slice());
        }
        f("O", self.o.as_slice());
        f("output_bias", self.output_bias.as_slice());
    }

    pub fn for_each_slice_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64])) {
        f("word_emb", self.word_emb.matrix_mut().as_mut_slice());
        if let Some(t) = &mut self.label_emb {
            f("label_emb", t.matrix_mut().as_mut_slice());
        }
        f("H", self.h.as_mut_slice());
        f("hidden_bias", self.hidden_bias.as_mut_slice());
        if let Some(r) = &mut self.r {
            f("R", r.as_mut_slice());
        }
        f("O", self.o.as_mut_slice());
        f("output_bias", self.output_bias.as_mut_slice());
    }

    /// Number of scalars actually stored, biases included.
    pub fn scalar_count(&self) -> u64 {
        let mut n = 0u64;
        self.for_each_slice(|_, s| n += s.len() as u64);
        n
    }

    /// Sum of squares of the dense layers (H, R, O and biases).
    pub fn dense_sum_of_squares(&self) -> f64 {
        let mut total = self.h.sum_of_squares() + self.o.sum_of_squares();
        total += self.hidden_bias.as_slice().iter().map(|x| x * x).sum::<f64>();
        total += self.output_bias.as_slice().iter().map(|x| x * x).sum::<f64>();
        if let Some(r) = &self.r {
            total += r.sum_of_squares();
        }
        total
    }

    /// Copies rows of a pre-trained table whose symbols exist in the model.
    pub fn install_word_embeddings(&mut self, table: &EmbeddingTable) -> Result<()> {
        install(&mut self.word_emb, table)
    }

    pub fn install_label_embeddings(&mut self, table: &EmbeddingTable) -> Result<()> {
        match &mut self.label_emb {
            Some(t) => install(t, table),
            None => Err(Error::Architecture(format!("{} has no label embeddings", self.arch))),
        }
    }
}

fn install(target: &mut EmbeddingTable, source: &EmbeddingTable) -> Result<()> {
    if target.matrix().shape() != source.matrix().shape() {
        return Err(Error::dim(
            "pre-trained embeddings",
            format!("{}x{}", target.vocab_size(), target.dim()),
            format!("{}x{}", source.vocab_size(), source.dim()),
        ));
    }
    *target = source.clone();
    Ok(())
}

/// Sizes entering the parameter-count formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountDims {
    pub vocab: u64,
    pub emb_dim: u64,
    pub window: u64,
    pub context: u64,
    pub hidden: u64,
    pub labels: u64,
}

impl From<Dims> for CountDims {
    fn from(d: Dims) -> Self {
        Self {
            vocab: d.vocab as u64,
            emb_dim: d.emb_dim as u64,
            window: d.window as u64,
            context: d.context as u64,
            hidden: d.hidden as u64,
            labels: d.labels as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub bias_free: u64,
    pub with_biases: u64,
}

/// Parameter count of a unidirectional network.
pub fn param_count(arch: Architecture, d: CountDims) -> ParamCount {
    let words = (2 * d.window + 1) * d.emb_dim;
    let base = d.vocab * d.emb_dim + d.hidden * d.labels;
    let bias_free = base
        + match arch {
            Architecture::Jordan => (words + d.context * d.labels) * d.hidden,
            Architecture::Elman => (words + d.context * d.hidden) * d.hidden,
            Architecture::IRnn => d.labels * d.emb_dim + (words + d.context * d.emb_dim) * d.hidden,
            Architecture::IPlusERnn => {
                d.labels * d.emb_dim + (words + d.context * d.emb_dim + d.context * d.hidden) * d.hidden
            }
        };
    ParamCount {
        bias_free,
        with_biases: bias_free + d.hidden + d.labels,
    }
}
