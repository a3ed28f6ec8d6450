use super::EmbeddingTable;
use crate::data::PAD_ID;
use crate::error::{Error, Result};
use crate::math::{derive_seed, init_matrix, sigmoid_scalar, softmax_in_place, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub dim: usize,
    /// Symbols on each side of the predicted position.
    pub window: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// L2 weight on the hidden and output layers (embedding rows are not decayed).
    pub lambda: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            window: 3,
            hidden: 100,
            epochs: 20,
            lr: 0.5,
            lambda: 0.003,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub table: EmbeddingTable,
    /// Mean cross-entropy over the corpus before training and after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl PretrainOutcome {
    pub fn final_perplexity(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN).exp()
    }
}

/// Feed-forward model predicting a symbol from the symbols around it
/// (center excluded): embeddings → sigmoid hidden layer → softmax.
#[derive(Debug, Clone)]
pub struct ContextLm {
    pub(crate) emb: EmbeddingTable,
    pub(crate) hidden_w: DenseMatrix,
    pub(crate) hidden_b: Vec<f64>,
    pub(crate) out_w: DenseMatrix,
    pub(crate) out_b: Vec<f64>,
    window: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ContextLmGrads {
    pub emb_rows: Vec<(usize, Vec<f64>)>,
    pub hidden_w: DenseMatrix,
    pub hidden_b: Vec<f64>,
    pub out_w: DenseMatrix,
    pub out_b: Vec<f64>,
}

impl ContextLm {
    pub fn new(vocab_size: usize, config: &PretrainConfig) -> Self {
        let input = 2 * config.window * config.dim;
        Self {
            emb: EmbeddingTable::random(vocab_size, config.dim, derive_seed(config.seed, 1)),
            hidden_w: init_matrix(input, config.hidden, derive_seed(config.seed, 2), None),
            hidden_b: vec![0.0; config.hidden],
            out_w: init_matrix(config.hidden, vocab_size, derive_seed(config.seed, 3), None),
            out_b: vec![0.0; vocab_size],
            window: config.window,
        }
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.emb
    }

    pub fn into_embeddings(self) -> EmbeddingTable {
        self.emb
    }

    fn context(&self, seq: &[usize], t: usize) -> Vec<usize> {
        let w = self.window as isize;
        (-w..=w)
            .filter(|&k| k != 0)
            .map(|k| {
                let pos = t as isize + k;
                if pos < 0 || pos >= seq.len() as isize {
                    PAD_ID
                } else {
                    seq[pos as usize]
                }
            })
            .collect()
    }

    fn forward(&self, context: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dim = self.emb.dim();
        let mut x = Vec::with_capacity(context.len() * dim);
        for &s in context {
            x.extend_from_slice(self.emb.row(s));
        }
        let mut h = self.hidden_b.clone();
        self.hidden_w.accumulate_left_product(&x, &mut h);
        h.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
        let mut y = self.out_b.clone();
        self.out_w.accumulate_left_product(&h, &mut y);
        softmax_in_place(&mut y).expect("vocabulary is non-empty");
        (x, h, y)
    }

    fn position_loss(&self, seq: &[usize], t: usize) -> f64 {
        let (_, _, y) = self.forward(&self.context(seq, t));
        -y[seq[t]].max(1e-300).ln()
    }

    /// Summed cross-entropy over every position of every sequence.
    pub fn corpus_loss(&self, sequences: &[Vec<usize>]) -> f64 {
        sequences
            .iter()
            .map(|seq| (0..seq.len()).map(|t| self.position_loss(seq, t)).sum::<f64>())
            .sum()
    }

    fn position_grads(&self, seq: &[usize], t: usize) -> (f64, ContextLmGrads) {
        let context = self.context(seq, t);
        let (x, h, mut dy) = self.forward(&context);
        let target = seq[t];
        let loss = -dy[target].max(1e-300).ln();
        dy[target] -= 1.0;

        let mut out_w = DenseMatrix::zeros(self.out_w.rows(), self.out_w.cols());
        out_w.add_outer(&h, &dy);
        let mut dh = vec![0.0; h.len()];
        self.out_w.accumulate_right_product(&dy, &mut dh);
        for (d, &hv) in dh.iter_mut().zip(&h) {
            *d *= hv * (1.0 - hv);
        }
        let mut hidden_w = DenseMatrix::zeros(self.hidden_w.rows(), self.hidden_w.cols());
        hidden_w.add_outer(&x, &dh);
        let mut dx = vec![0.0; x.len()];
        self.hidden_w.accumulate_right_product(&dh, &mut dx);

        let dim = self.emb.dim();
        let mut emb_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (k, &s) in context.iter().enumerate() {
            let chunk = &dx[k * dim..(k + 1) * dim];
            match emb_rows.iter_mut().find(|(id, _)| *id == s) {
                Some((_, acc)) => acc.iter_mut().zip(chunk).for_each(|(a, c)| *a += c),
                None => emb_rows.push((s, chunk.to_vec())),
            }
        }
        (
            loss,
            ContextLmGrads {
                emb_rows,
                hidden_w,
                hidden_b: dh,
                out_w,
                out_b: dy,
            },
        )
    }

    /// Gradients of `corpus_loss`, accumulated without updating.
    #[cfg(test)]
    pub(crate) fn corpus_grads(&self, sequences: &[Vec<usize>]) -> ContextLmGrads {
        let mut total = ContextLmGrads {
            emb_rows: Vec::new(),
            hidden_w: DenseMatrix::zeros(self.hidden_w.rows(), self.hidden_w.cols()),
            hidden_b: vec![0.0; self.hidden_b.len()],
            out_w: DenseMatrix::zeros(self.out_w.rows(), self.out_w.cols()),
            out_b: vec![0.0; self.out_b.len()],
        };
        for seq in sequences {
            for t in 0..seq.len() {
                let (_, g) = self.position_grads(seq, t);
                add_into(total.hidden_w.as_mut_slice(), g.hidden_w.as_slice());
                add_into(&mut total.hidden_b, &g.hidden_b);
                add_into(total.out_w.as_mut_slice(), g.out_w.as_slice());
                add_into(&mut total.out_b, &g.out_b);
                for (id, row) in g.emb_rows {
                    match total.emb_rows.iter_mut().find(|(i, _)| *i == id) {
                        Some((_, acc)) => add_into(acc, &row),
                        None => total.emb_rows.push((id, row)),
                    }
                }
            }
        }
        total
    }

    /// One SGD step on a single position; returns its cross-entropy.
    fn train_position(&mut self, seq: &[usize], t: usize, lr: f64, lambda: f64) -> f64 {
        let (loss, g) = self.position_grads(seq, t);
        let decay = |params: &mut [f64], grads: &[f64]| {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= lr * (g + lambda * *p);
            }
        };
        decay(self.hidden_w.as_mut_slice(), g.hidden_w.as_slice());
        decay(&mut self.hidden_b, &g.hidden_b);
        decay(self.out_w.as_mut_slice(), g.out_w.as_slice());
        decay(&mut self.out_b, &g.out_b);
        for (id, row) in &g.emb_rows {
            for (p, g) in self.emb.row_mut(*id).iter_mut().zip(row) {
                *p -= lr * g;
            }
        }
        loss
    }
}

#[cfg(test)]
fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Trains a [`ContextLm`] on symbol sequences, visiting positions in corpus
/// order, and returns its input embedding table.
pub fn pretrain_embeddings(
    sequences: &[Vec<usize>],
    vocab_size: usize,
    config: &PretrainConfig,
) -> Result<PretrainOutcome> {
    if sequences.is_empty() || sequences.iter().all(Vec::is_empty) {
        return Err(Error::InvalidInput("pre-training needs non-empty sequences".into()));
    }
    if config.window == 0 {
        return Err(Error::InvalidInput("pre-training window must be ≥ 1".into()));
    }
    if sequences.iter().all(|s| config.window > s.len()) {
        return Err(Error::InvalidInput(format!(
            "window {} is larger than every sequence",
            config.window
        )));
    }
    if let Some(&bad) = sequences.iter().flatten().find(|&&s| s >= vocab_size) {
        return Err(Error::OutOfRange {
            what: "pre-training vocabulary",
            index: bad,
            size: vocab_size,
        });
    }
    let n_positions: usize = sequences.iter().map(Vec::len).sum();
    let mean_loss = |m: &ContextLm| m.corpus_loss(sequences) / n_positions as f64;

    let mut model = ContextLm::new(vocab_size, config);
    let mut epoch_losses = vec![mean_loss(&model)];
    for _ in 0..config.epochs {
        for seq in sequences {
            for t in 0..seq.len() {
                model.train_position(seq, t, config.lr, config.lambda);
            }
        }
        epoch_losses.push(mean_loss(&model));
    }
    Ok(PretrainOutcome {
        table: model.into_embeddings(),
        epoch_losses,
    })
}
