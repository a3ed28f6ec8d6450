//! Synthetic labelling tasks with controllable label-history dependence.
//!
//! Every label is a fixed random function of the current word and of the
//! `order` previous labels, so a labeler has to track exactly that much
//! history to be perfect. The table is drawn with lexical ambiguity in mind:
//! each word owns a few random candidate labels ("readings"), and a random
//! selector over label histories decides which reading applies.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::conll::{Corpus, SequenceExample};
use super::vocab::{Vocabulary, RESERVED};
use crate::error::{Error, Result};
use crate::math::derive_seed;

/// Readings per word unless stated otherwise.
pub const DEFAULT_AMBIGUITY: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticTask {
    order: usize,
    n_words: usize,
    n_labels: usize,
    ambiguity: usize,
    seed: u64,
    /// Indexed by `(history state, word)`; each history slot ranges over
    /// `n_labels + 1` values, the last one standing for "before the start".
    table: Vec<u16>,
}

impl SyntheticTask {
    pub fn new(order: usize, n_words: usize, n_labels: usize, seed: u64) -> Result<Self> {
        Self::with_ambiguity(order, n_words, n_labels, DEFAULT_AMBIGUITY, seed)
    }

    /// `ambiguity` readings per word (capped at `n_labels`).
    pub fn with_ambiguity(order: usize, n_words: usize, n_labels: usize, ambiguity: usize, seed: u64) -> Result<Self> {
        if n_words == 0 || n_labels == 0 || ambiguity == 0 {
            return Err(Error::InvalidInput(
                "synthetic task needs ≥1 word, ≥1 label and ≥1 reading per word".into(),
            ));
        }
        if n_labels >= u16::MAX as usize {
            return Err(Error::InvalidInput("too many synthetic labels".into()));
        }
        let ambiguity = ambiguity.min(n_labels);
        let n_states = (n_labels + 1)
            .checked_pow(order as u32)
            .filter(|&s| s.checked_mul(n_words).is_some_and(|c| c <= 1 << 26))
            .ok_or_else(|| Error::InvalidInput(format!("transition table for order {order} is too large")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7ab1e));
        let readings: Vec<Vec<usize>> = (0..n_words)
            .map(|_| rand::seq::index::sample(&mut rng, n_labels, ambiguity).into_vec())
            .collect();
        let selector: Vec<usize> = (0..n_states).map(|_| rng.gen_range(0..ambiguity)).collect();
        let table = selector
            .iter()
            .flat_map(|&k| readings.iter().map(move |r| r[k] as u16))
            .collect();
        Ok(Self {
            order,
            n_words,
            n_labels,
            ambiguity,
            seed,
            table,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ambiguity(&self) -> usize {
        self.ambiguity
    }

    /// Label (0-based) for `word` given the previous labels, most recent last.
    /// Histories shorter than `order` are padded with the start state.
    pub fn label_for(&self, word: usize, history: &[usize]) -> usize {
        let mut state = 0usize;
        for k in (1..=self.order).rev() {
            let slot = if history.len() >= k {
                history[history.len() - k]
            } else {
                self.n_labels
            };
            state = state * (self.n_labels + 1) + slot;
        }
        self.table[state * self.n_words + word] as usize
    }

    /// Labels the generating table assigns to a 0-based word sequence.
    pub fn replay(&self, words: &[usize]) -> Vec<usize> {
        let mut labels = Vec::with_capacity(words.len());
        for &w in words {
            let l = self.label_for(w, &labels);
            labels.push(l);
        }
        labels
    }

    pub fn word_vocab(&self) -> Vocabulary {
        Vocabulary::from_symbols((0..self.n_words).map(|i| format!("w{i}")))
    }

    pub fn label_vocab(&self) -> Vocabulary {
        Vocabulary::from_symbols((0..self.n_labels).map(|i| format!("L{i}")))
    }

    pub fn sample(&self, n_sequences: usize, lengths: RangeInclusive<usize>, seed: u64) -> Result<Corpus> {
        if lengths.is_empty() || *lengths.start() == 0 {
            return Err(Error::InvalidInput(format!("invalid length range {lengths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n_sequences)
            .map(|_| {
                let len = rng.gen_range(lengths.clone());
                let words: Vec<usize> = (0..len).map(|_| rng.gen_range(0..self.n_words)).collect();
                let labels = self.replay(&words);
                SequenceExample::new(
                    words.iter().map(|w| w + RESERVED).collect(),
                    labels.iter().map(|l| l + RESERVED).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(examples, self.word_vocab(), self.label_vocab())
    }

    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for v in [self.order, self.n_words, self.n_labels] {
            hasher.update((v as u64).to_le_bytes());
        }
        for &l in &self.table {
            hasher.update(l.to_le_bytes());
        }
        hasher.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn metadata(&self) -> String {
        format!(
            "seed\t{}\norder\t{}\nwords\t{}\nlabels\t{}\nambiguity\t{}\nchecksum\t{}\n",
            self.seed,
            self.order,
            self.n_words,
            self.n_labels,
            self.ambiguity,
            self.checksum()
        )
    }

    pub fn write_metadata(&self, path: impl AsRef<Path>, extra: &str) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, format!("{}{extra}", self.metadata())).map_err(|e| Error::io(path, e))
    }
}

/// One corpus drawn from a fresh task; `vocab_sizes` is `(words, labels)`.
pub fn generate_synthetic(
    order: usize,
    vocab_sizes: (usize, usize),
    lengths: RangeInclusive<usize>,
    n_sequences: usize,
    seed: u64,
) -> Result<Corpus> {
    let task = SyntheticTask::new(order, vocab_sizes.0, vocab_sizes.1, seed)?;
    task.sample(n_sequences, lengths, derive_seed(seed, 1))
}

/// Train/dev/test corpora sharing one generating table and vocabularies.
#[derive(Debug, Clone)]
pub struct SyntheticSplits {
    pub task: SyntheticTask,
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

pub fn generate_splits(
    order: usize,
    vocab_sizes: (usize, usize),
    lengths: RangeInclusive<usize>,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SyntheticSplits> {
    SyntheticTask::new(order, vocab_sizes.0, vocab_sizes.1, seed)?.splits(lengths, sizes)
}

impl SyntheticTask {
    /// Train/dev/test samples whose seeds derive from the task's own seed.
    pub fn splits(self, lengths: RangeInclusive<usize>, sizes: (usize, usize, usize)) -> Result<SyntheticSplits> {
        let seed = self.seed;
        let train = self.sample(sizes.0, lengths.clone(), derive_seed(seed, 1))?;
        let dev = self.sample(sizes.1, lengths.clone(), derive_seed(seed, 2))?;
        let test = self.sample(sizes.2, lengths, derive_seed(seed, 3))?;
        Ok(SyntheticSplits {
            task: self,
            train,
            dev,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::metrics::token_accuracy;
    use std::collections::HashMap;

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(2, (10, 4), 3..=8, 50, 7).unwrap();
        let b = generate_synthetic(2, (10, 4), 3..=8, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(2, (10, 4), 3..=8, 50, 8).unwrap());
    }

    #[test]
    fn order_zero_is_a_function_of_the_word() {
        let c = generate_synthetic(0, (10, 5), 1..=12, 300, 3).unwrap();
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for ex in &c.examples {
            for (&w, &l) in ex.word_ids().iter().zip(ex.label_ids()) {
                assert_eq!(*seen.entry(w).or_insert(l), l);
            }
        }
    }

    #[test]
    fn table_replay_scores_perfectly() {
        let task = SyntheticTask::new(2, 20, 8, 11).unwrap();
        let corpus = task.sample(200, 5..=15, 99).unwrap();
        let gold: Vec<Vec<usize>> = corpus.examples.iter().map(|e| e.label_ids().to_vec()).collect();
        let pred: Vec<Vec<usize>> = corpus
            .examples
            .iter()
            .map(|e| {
                let words: Vec<usize> = e.word_ids().iter().map(|w| w - RESERVED).collect();
                task.replay(&words).into_iter().map(|l| l + RESERVED).collect()
            })
            .collect();
        assert_eq!(token_accuracy(&gold, &pred).unwrap(), 1.0);
    }

    #[test]
    fn history_matters_at_order_two() {
        // Both the most recent and the older label must change some decision.
        let task = SyntheticTask::new(2, 20, 8, 5).unwrap();
        let pairs = || (0..8).flat_map(|a| (0..8).map(move |b| (a, b)));
        let recent =
            pairs().any(|(a, b)| (0..20).any(|w| task.label_for(w, &[a, b]) != task.label_for(w, &[a, (b + 1) % 8])));
        let older =
            pairs().any(|(a, b)| (0..20).any(|w| task.label_for(w, &[a, b]) != task.label_for(w, &[(a + 1) % 8, b])));
        assert!(recent && older);
    }

    #[test]
    fn words_keep_to_their_readings() {
        for ambiguity in [1, 2, 3] {
            let task = SyntheticTask::with_ambiguity(2, 12, 8, ambiguity, 4).unwrap();
            let corpus = task.sample(300, 5..=15, 1).unwrap();
            let mut readings: HashMap<usize, Vec<usize>> = HashMap::new();
            for ex in &corpus.examples {
                for (&w, &l) in ex.word_ids().iter().zip(ex.label_ids()) {
                    let r = readings.entry(w).or_default();
                    if !r.contains(&l) {
                        r.push(l);
                    }
                }
            }
            assert!(readings.values().all(|r| r.len() <= ambiguity));
            if ambiguity > 1 {
                assert!(readings.values().any(|r| r.len() > 1));
            }
        }
        assert_eq!(SyntheticTask::with_ambiguity(1, 3, 2, 5, 1).unwrap().ambiguity(), 2);
        assert!(SyntheticTask::with_ambiguity(1, 3, 2, 0, 1).is_err());
    }

    #[test]
    fn checksum_tracks_table() {
        let a = SyntheticTask::new(1, 5, 3, 1).unwrap();
        assert_eq!(a.checksum(), SyntheticTask::new(1, 5, 3, 1).unwrap().checksum());
        assert_ne!(a.checksum(), SyntheticTask::new(1, 5, 3, 2).unwrap().checksum());
        assert_eq!(a.checksum().len(), 64);
    }

    #[test]
    fn splits_share_vocabularies() {
        let s = generate_splits(1, (6, 3), 2..=4, (10, 5, 5), 1).unwrap();
        assert_eq!(s.train.word_vocab, s.dev.word_vocab);
        assert_eq!(s.train.label_vocab, s.test.label_vocab);
    }
}
