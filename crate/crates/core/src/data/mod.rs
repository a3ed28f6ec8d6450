//! Corpus ingestion, vocabularies, tokenization, metrics and synthetic tasks.

pub mod conll;
pub mod metrics;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

pub use conll::{
    corpus_from_blocks, read_blocks, read_conll, write_blocks, write_conll, BlockReader, Corpus, RawBlock,
    SequenceExample, VocabSource,
};
pub use metrics::{bio_chunk_f1, extract_chunks, token_accuracy, ChunkScore};
pub use synthetic::{generate_splits, generate_synthetic, SyntheticSplits, SyntheticTask, DEFAULT_AMBIGUITY};
pub use tokenize::{tokenize_word, NUM};
pub use vocab::{Vocabulary, BOS_LABEL, BOS_LABEL_ID, PAD, PAD_ID, RESERVED, UNK, UNK_ID};
