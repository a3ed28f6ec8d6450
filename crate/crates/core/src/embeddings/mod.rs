//! Embedding tables and the context-window language model that pre-trains them.

mod pretrain;

pub use pretrain::{pretrain_embeddings, ContextLm, PretrainConfig, PretrainOutcome};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::math::{init_matrix, DenseMatrix, DenseVector};

/// One row per vocabulary entry, reserved symbols included.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: DenseMatrix,
}

impl EmbeddingTable {
    /// Uniform rows in `[-1/√dim, 1/√dim]`.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let scale = 1.0 / (dim.max(1) as f64).sqrt();
        Self {
            matrix: init_matrix(vocab_size, dim, seed, Some(scale)),
        }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            matrix: DenseMatrix::zeros(vocab_size, dim),
        }
    }

    pub fn from_matrix(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::InvalidInput("embedding table has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut DenseMatrix {
        &mut self.matrix
    }

    pub fn lookup(&self, id: usize) -> Result<DenseVector> {
        self.try_row(id).map(|r| r.to_vec().into())
    }

    pub fn try_row(&self, id: usize) -> Result<&[f64]> {
        if id >= self.vocab_size() {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: id,
                size: self.vocab_size(),
            });
        }
        Ok(self.matrix.row(id))
    }

    pub(crate) fn row(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }

    pub(crate) fn row_mut(&mut self, id: usize) -> &mut [f64] {
        self.matrix.row_mut(id)
    }

    pub fn set_row(&mut self, id: usize, values: &[f64]) -> Result<()> {
        if id >= self.vocab_size() {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: id,
                size: self.vocab_size(),
            });
        }
        if values.len() != self.dim() {
            return Err(Error::dim("embedding row", self.dim(), values.len()));
        }
        self.matrix.row_mut(id).copy_from_slice(values);
        Ok(())
    }
}

/// A table together with the symbols its rows belong to, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolEmbeddings {
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
}

impl SymbolEmbeddings {
    pub fn new(vocab: Vocabulary, table: EmbeddingTable) -> Result<Self> {
        if vocab.len() != table.vocab_size() {
            return Err(Error::dim("embedding rows", vocab.len(), table.vocab_size()));
        }
        Ok(Self { vocab, table })
    }

    /// Copies rows into `target` (indexed by `target_vocab`) wherever the
    /// symbol exists in both; returns how many rows were copied.
    pub fn project_onto(&self, target_vocab: &Vocabulary, target: &mut EmbeddingTable) -> Result<usize> {
        if target.dim() != self.table.dim() {
            return Err(Error::dim("embedding dimension", target.dim(), self.table.dim()));
        }
        let mut copied = 0;
        for (id, symbol) in target_vocab.symbols().iter().enumerate() {
            if let Some(src) = self.vocab.id(symbol) {
                target.set_row(id, self.table.row(src))?;
                copied += 1;
            }
        }
        Ok(copied)
    }
}
