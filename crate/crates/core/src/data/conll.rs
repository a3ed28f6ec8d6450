//! Token-per-line corpus files: `token<TAB>label`, blank line between sequences.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::tokenize::tokenize_word;
use super::vocab::{Vocabulary, UNK_ID};
use crate::error::{Error, Result};

/// One raw sequence: `(token, label)` pairs as they appear in the file.
pub type RawBlock = Vec<(String, String)>;

/// Aligned word and label indices for one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceExample {
    word_ids: Vec<usize>,
    label_ids: Vec<usize>,
}

impl SequenceExample {
    pub fn new(word_ids: Vec<usize>, label_ids: Vec<usize>) -> Result<Self> {
        if word_ids.is_empty() {
            return Err(Error::InvalidInput("empty sequence".into()));
        }
        if word_ids.len() != label_ids.len() {
            return Err(Error::dim("sequence example", word_ids.len(), label_ids.len()));
        }
        Ok(Self { word_ids, label_ids })
    }

    pub fn word_ids(&self) -> &[usize] {
        &self.word_ids
    }

    pub fn label_ids(&self) -> &[usize] {
        &self.label_ids
    }

    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub examples: Vec<SequenceExample>,
    pub word_vocab: Vocabulary,
    pub label_vocab: Vocabulary,
}

impl Corpus {
    pub fn new(examples: Vec<SequenceExample>, word_vocab: Vocabulary, label_vocab: Vocabulary) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.word_ids.iter().any(|&w| w >= word_vocab.len())
                || ex.label_ids.iter().any(|&l| l >= label_vocab.len())
            {
                return Err(Error::InvalidInput(format!(
                    "example {i} has indices outside its vocabularies"
                )));
            }
        }
        Ok(Self {
            examples,
            word_vocab,
            label_vocab,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.examples.iter().map(SequenceExample::len).sum()
    }

    pub fn label_symbols(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.label_vocab.symbol(id).unwrap_or("<unk>").to_owned())
            .collect()
    }

    /// Same examples, remapped onto another pair of vocabularies (unknowns → `<unk>`).
    pub fn remap(&self, words: &Vocabulary, labels: &Vocabulary) -> Corpus {
        let map = |from: &Vocabulary, to: &Vocabulary, id: usize| from.symbol(id).map_or(UNK_ID, |s| to.id_or_unk(s));
        let examples = self
            .examples
            .iter()
            .map(|ex| SequenceExample {
                word_ids: ex.word_ids.iter().map(|&w| map(&self.word_vocab, words, w)).collect(),
                label_ids: ex
                    .label_ids
                    .iter()
                    .map(|&l| map(&self.label_vocab, labels, l))
                    .collect(),
            })
            .collect();
        Corpus {
            examples,
            word_vocab: words.clone(),
            label_vocab: labels.clone(),
        }
    }

    pub fn to_blocks(&self) -> Vec<RawBlock> {
        self.examples
            .iter()
            .map(|ex| {
                ex.word_ids
                    .iter()
                    .zip(&ex.label_ids)
                    .map(|(&w, &l)| {
                        (
                            self.word_vocab.symbol(w).unwrap_or_default().to_owned(),
                            self.label_vocab.symbol(l).unwrap_or_default().to_owned(),
                        )
                    })
                    .collect()
            })
            .collect()
    }
}

/// How vocabularies are obtained when turning raw blocks into a corpus.
#[derive(Debug, Clone, Copy)]
pub enum VocabSource<'a> {
    /// Build both vocabularies from this data (training files).
    Build { min_freq: usize },
    /// Map through existing vocabularies; unseen symbols become `<unk>`.
    Existing {
        words: &'a Vocabulary,
        labels: &'a Vocabulary,
    },
}

/// Streams blank-line-delimited blocks from a reader.
pub struct BlockReader<R> {
    lines: std::io::Lines<R>,
    source: String,
    line_no: usize,
    done: bool,
    labels_optional: bool,
}

impl<R: BufRead> BlockReader<R> {
    pub fn new(reader: R, source: impl Into<String>) -> Self {
        Self {
            lines: reader.lines(),
            source: source.into(),
            line_no: 0,
            done: false,
            labels_optional: false,
        }
    }

    /// Accepts token-only lines too, giving them an empty label.
    pub fn labels_optional(mut self) -> Self {
        self.labels_optional = true;
        self
    }

    fn parse_error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line: self.line_no,
            message: message.into(),
        }
    }
}

impl<R: BufRead> Iterator for BlockReader<R> {
    type Item = Result<RawBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut block = RawBlock::new();
        loop {
            let line = match self.lines.next() {
                None => {
                    self.done = true;
                    break;
                }
                Some(Err(e)) => {
                    self.done = true;
                    self.line_no += 1;
                    return Some(Err(self.parse_error(e.to_string())));
                }
                Some(Ok(line)) => line,
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                if block.is_empty() {
                    continue;
                }
                break;
            }
            let mut fields: Vec<&str> = line.split('\t').collect();
            if self.labels_optional && fields.len() == 1 {
                fields.push("");
            }
            if fields.len() != 2 || fields[0].is_empty() || (fields[1].is_empty() && !self.labels_optional) {
                self.done = true;
                return Some(Err(self.parse_error(format!(
                    "expected token<TAB>label, found {} field(s)",
                    fields.len()
                ))));
            }
            block.push((fields[0].to_owned(), fields[1].to_owned()));
        }
        if block.is_empty() {
            None
        } else {
            Some(Ok(block))
        }
    }
}

pub fn read_blocks(path: impl AsRef<Path>) -> Result<Vec<RawBlock>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BlockReader::new(BufReader::new(file), path.display().to_string()).collect()
}

pub fn corpus_from_blocks(blocks: &[RawBlock], source: VocabSource<'_>, tokenize: bool) -> Result<Corpus> {
    let norm = |w: &str| {
        if tokenize {
            tokenize_word(w)
        } else {
            w.to_owned()
        }
    };
    let (word_vocab, label_vocab) = match source {
        VocabSource::Existing { words, labels } => (words.clone(), labels.clone()),
        VocabSource::Build { min_freq } => {
            let mut freq: HashMap<String, usize> = HashMap::new();
            let mut order = Vec::new();
            let mut labels = Vocabulary::new();
            for block in blocks {
                for (w, l) in block {
                    let w = norm(w);
                    let count = freq.entry(w.clone()).or_insert(0);
                    if *count == 0 {
                        order.push(w);
                    }
                    *count += 1;
                    labels.insert(l);
                }
            }
            let words = Vocabulary::from_symbols(order.iter().filter(|w| freq[w.as_str()] >= min_freq));
            (words, labels)
        }
    };
    let examples = blocks
        .iter()
        .map(|block| {
            let words = block.iter().map(|(w, _)| word_vocab.id_or_unk(&norm(w))).collect();
            let labels = block.iter().map(|(_, l)| label_vocab.id_or_unk(l)).collect();
            SequenceExample::new(words, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(examples, word_vocab, label_vocab)
}

pub fn read_conll(path: impl AsRef<Path>, source: VocabSource<'_>, tokenize: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let blocks = read_blocks(path)?;
    if blocks.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "file contains no sequences".into(),
        });
    }
    corpus_from_blocks(&blocks, source, tokenize)
}

pub fn write_block(out: &mut impl Write, block: &[(String, String)]) -> std::io::Result<()> {
    for (w, l) in block {
        writeln!(out, "{w}\t{l}")?;
    }
    writeln!(out)
}

pub fn write_blocks(path: impl AsRef<Path>, blocks: &[RawBlock]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for block in blocks {
        write_block(&mut out, block).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_conll(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_blocks(path, &corpus.to_blocks())
}
