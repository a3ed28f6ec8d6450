//! Binary model and embedding files.
//!
//! Model layout (all integers u64 little-endian, floats f64 little-endian,
//! strings as byte length + UTF-8):
//!
//! ```text
//! "SEQLRNN1"
//! header length
//! header: architecture, direction, D, |H|, |O|, w, c, |V|, flags, stage count
//! per stage: word_emb, [label_emb], H, hidden_bias, [R], O, output_bias
//!            (each matrix: rows, cols, row-major values)
//! word vocabulary, label vocabulary (count + strings)
//! ```
//!
//! A bidirectional model stores its forward stage first, then the backward
//! network. Embedding files hold `"SEQLEMB1"`, a vocabulary and one matrix.

use std::path::Path;

use crate::data::Vocabulary;
use crate::embeddings::{EmbeddingTable, SymbolEmbeddings};
use crate::error::{Error, Result};
use crate::math::{DenseMatrix, DenseVector};
use crate::models::{Activation, Architecture, Dims, Direction, JordanFeed, RnnParameters, TaggerModel};

pub const MODEL_MAGIC: &[u8; 8] = b"SEQLRNN1";
pub const EMBEDDING_MAGIC: &[u8; 8] = b"SEQLEMB1";

const FLAG_ONE_HOT_FEED: u64 = 1;
const FLAG_IDENTITY: u64 = 1 << 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn matrix(&mut self, rows: usize, cols: usize, values: &[f64]) {
        self.u64(rows as u64);
        self.u64(cols as u64);
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn vocab(&mut self, v: &Vocabulary) {
        self.u64(v.len() as u64);
        for s in v.symbols() {
            self.str(s);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Corrupt(format!(
                "truncated file: missing {section} at byte {}",
                self.pos
            ))),
        }
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        let b = self.take(8, section)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn usize(&mut self, section: &str) -> Result<usize> {
        usize::try_from(self.u64(section)?).map_err(|_| Error::Corrupt(format!("{section} does not fit in memory")))
    }

    fn str(&mut self, section: &str) -> Result<String> {
        let n = self.usize(section)?;
        let b = self.take(n, section)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Corrupt(format!("{section} is not UTF-8")))
    }

    fn matrix(&mut self, section: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let (r, c) = (self.usize(section)?, self.usize(section)?);
        if (r, c) != (rows, cols) {
            return Err(Error::Corrupt(format!(
                "{section} is {r}x{c} but the header implies {rows}x{cols}"
            )));
        }
        let n = r
            .checked_mul(c)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Corrupt(format!("{section} size overflows")))?;
        let b = self.take(n, section)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn vocab(&mut self, section: &str, expected: usize) -> Result<Vocabulary> {
        let n = self.usize(section)?;
        if n != expected {
            return Err(Error::Corrupt(format!(
                "{section} has {n} symbols, header says {expected}"
            )));
        }
        let symbols = (0..n).map(|_| self.str(section)).collect::<Result<Vec<_>>>()?;
        Vocabulary::from_full_list(symbols).map_err(|e| Error::Corrupt(format!("{section}: {e}")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after the last section",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn flags(p: &RnnParameters) -> u64 {
    let mut f = 0;
    if p.jordan_feed == JordanFeed::OneHot {
        f |= FLAG_ONE_HOT_FEED;
    }
    if p.activation == Activation::Identity {
        f |= FLAG_IDENTITY;
    }
    f
}

fn write_stage(w: &mut Writer, p: &RnnParameters) {
    let d = &p.dims;
    let emb = |t: &EmbeddingTable| (t.vocab_size(), t.dim());
    let (r, c) = emb(&p.word_emb);
    w.matrix(r, c, p.word_emb.matrix().as_slice());
    if let Some(t) = &p.label_emb {
        let (r, c) = emb(t);
        w.matrix(r, c, t.matrix().as_slice());
    }
    w.matrix(p.h.rows(), p.h.cols(), p.h.as_slice());
    w.matrix(1, d.hidden, p.hidden_bias.as_slice());
    if let Some(r) = &p.r {
        w.matrix(r.rows(), r.cols(), r.as_slice());
    }
    w.matrix(p.o.rows(), p.o.cols(), p.o.as_slice());
    w.matrix(1, d.labels, p.output_bias.as_slice());
}

/// Serializes a model to bytes.
pub fn model_to_bytes(model: &TaggerModel) -> Result<Vec<u8>> {
    model.validate()?;
    let p = &model.params;
    let d = &p.dims;
    let mut header = Writer { buf: Vec::new() };
    header.str(p.arch.name());
    header.str(model.direction.name());
    for v in [d.emb_dim, d.hidden, d.labels, d.window, d.context, d.vocab] {
        header.u64(v as u64);
    }
    header.u64(flags(p));
    header.u64(1 + model.backward.is_some() as u64);

    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.u64(header.buf.len() as u64);
    w.buf.extend_from_slice(&header.buf);
    write_stage(&mut w, p);
    if let Some(b) = &model.backward {
        write_stage(&mut w, b);
    }
    w.vocab(&model.word_vocab);
    w.vocab(&model.label_vocab);
    Ok(w.buf)
}

/// Exact byte size [`model_to_bytes`] produces.
pub fn predicted_size(model: &TaggerModel) -> u64 {
    let p = &model.params;
    let header = 8 + p.arch.name().len() as u64 + 8 + model.direction.name().len() as u64 + 8 * 8;
    let stage = |s: &RnnParameters| {
        let mut matrices = 0u64;
        s.for_each_slice(|_, _| matrices += 1);
        matrices * 16 + s.scalar_count() * 8
    };
    let payload = stage(p) + model.backward.as_ref().map_or(0, stage);
    let vocab = |v: &Vocabulary| 8 + v.symbols().iter().map(|s| 8 + s.len() as u64).sum::<u64>();
    8 + 8 + header + payload + vocab(&model.word_vocab) + vocab(&model.label_vocab)
}

fn read_stage(
    r: &mut Reader<'_>,
    arch: Architecture,
    dims: Dims,
    bidirectional: bool,
    f: u64,
    tag: &str,
) -> Result<RnnParameters> {
    let mut p = RnnParameters::zeros(arch, dims, bidirectional);
    p.jordan_feed = if f & FLAG_ONE_HOT_FEED != 0 {
        JordanFeed::OneHot
    } else {
        JordanFeed::Distribution
    };
    p.activation = if f & FLAG_IDENTITY != 0 {
        Activation::Identity
    } else {
        Activation::Sigmoid
    };
    let section = |name: &str| format!("{tag}{name}");
    let mut read = |name: &str, rows: usize, cols: usize| -> Result<DenseMatrix> {
        let values = r.matrix(&section(name), rows, cols)?;
        DenseMatrix::from_vec(rows, cols, values)
    };
    let (d, h, o) = (dims.emb_dim, dims.hidden, dims.labels);
    p.word_emb = EmbeddingTable::from_matrix(read("word_emb", dims.vocab, d)?)
        .map_err(|e| Error::Corrupt(format!("{}: {e}", section("word_emb"))))?;
    if p.label_emb.is_some() {
        p.label_emb = Some(
            EmbeddingTable::from_matrix(read("label_emb", o, d)?)
                .map_err(|e| Error::Corrupt(format!("{}: {e}", section("label_emb"))))?,
        );
    }
    p.h = read("H", p.h.rows(), h)?;
    p.hidden_bias = DenseVector::from(read("hidden_bias", 1, h)?.as_slice().to_vec());
    if let Some(rows) = p.r.as_ref().map(DenseMatrix::rows) {
        p.r = Some(read("R", rows, h)?);
    }
    p.o = read("O", h, o)?;
    p.output_bias = DenseVector::from(read("output_bias", 1, o)?.as_slice().to_vec());
    p.validate()
        .map_err(|e| Error::Corrupt(format!("{tag}parameters: {e}")))?;
    Ok(p)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TaggerModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MODEL_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(MODEL_MAGIC),
            String::from_utf8_lossy(magic)
        )));
    }
    let header_len = r.usize("header length")?;
    let header_bytes = r.take(header_len, "header")?;
    let mut h = Reader {
        bytes: header_bytes,
        pos: 0,
    };
    let corrupt = |e: Error| Error::Corrupt(format!("header: {e}"));
    let arch: Architecture = h.str("header architecture")?.parse().map_err(corrupt)?;
    let direction: Direction = h.str("header direction")?.parse().map_err(corrupt)?;
    let mut dim = |name: &str| h.usize(name);
    let (emb_dim, hidden, labels) = (dim("header D")?, dim("header |H|")?, dim("header |O|")?);
    let (window, context, vocab) = (dim("header w")?, dim("header c")?, dim("header |V|")?);
    let f = h.u64("header flags")?;
    let stages = h.u64("header stage count")?;
    h.finish().map_err(corrupt)?;
    if f & !(FLAG_ONE_HOT_FEED | FLAG_IDENTITY) != 0 {
        return Err(Error::Corrupt(format!("unknown flags {f:#x}")));
    }
    let expected_stages = if direction == Direction::Bidirectional { 2 } else { 1 };
    if stages != expected_stages {
        return Err(Error::Corrupt(format!(
            "{direction} model needs {expected_stages} stage(s), header says {stages}"
        )));
    }
    if emb_dim == 0 || hidden == 0 || labels == 0 || vocab == 0 {
        return Err(Error::Corrupt("header dimensions must be positive".into()));
    }
    // bound the allocation by what the file could possibly hold
    let dims = Dims {
        vocab,
        labels,
        emb_dim,
        hidden,
        window,
        context,
    };
    let layout = crate::models::InputLayout::new(arch, &dims, direction == Direction::Bidirectional);
    let needed = [
        vocab * emb_dim,
        layout.hidden_input() * hidden,
        layout.recurrent_input() * hidden,
        hidden * labels,
    ]
    .iter()
    .try_fold(0usize, |acc, &n| acc.checked_add(n));
    if needed.is_none_or(|n| n / 8 > bytes.len()) {
        return Err(Error::Corrupt("header dimensions exceed the file size".into()));
    }

    let bidirectional = direction == Direction::Bidirectional;
    let tag = if bidirectional { "forward stage " } else { "" };
    let params = read_stage(&mut r, arch, dims, bidirectional, f, tag)?;
    let backward = if bidirectional {
        Some(read_stage(&mut r, arch, dims, false, f, "backward stage ")?)
    } else {
        None
    };
    let word_vocab = r.vocab("word vocabulary", vocab)?;
    let label_vocab = r.vocab("label vocabulary", labels)?;
    r.finish()?;
    TaggerModel::new(direction, params, backward, word_vocab, label_vocab).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn save_model(model: &TaggerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = model_to_bytes(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TaggerModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

pub fn embeddings_to_bytes(emb: &SymbolEmbeddings) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(EMBEDDING_MAGIC);
    w.vocab(&emb.vocab);
    let m = emb.table.matrix();
    w.matrix(m.rows(), m.cols(), m.as_slice());
    w.buf
}

pub fn embeddings_from_bytes(bytes: &[u8]) -> Result<SymbolEmbeddings> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "not an embedding table (magic {:?})",
            String::from_utf8_lossy(magic)
        )));
    }
    let n = r.usize("vocabulary")?;
    let symbols = (0..n).map(|_| r.str("vocabulary")).collect::<Result<Vec<_>>>()?;
    let vocab = Vocabulary::from_full_list(symbols).map_err(|e| Error::Corrupt(format!("vocabulary: {e}")))?;
    let rows = r.usize("matrix")?;
    let cols = r.usize("matrix")?;
    if rows != n {
        return Err(Error::Corrupt(format!("matrix has {rows} rows for {n} symbols")));
    }
    if cols.checked_mul(rows).is_none_or(|c| c / 8 > bytes.len()) {
        return Err(Error::Corrupt("matrix dimensions exceed the file size".into()));
    }
    r.pos -= 16;
    let values = r.matrix("matrix", rows, cols)?;
    r.finish()?;
    let table = EmbeddingTable::from_matrix(DenseMatrix::from_vec(rows, cols, values)?)
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    SymbolEmbeddings::new(vocab, table)
}

pub fn save_embeddings(emb: &SymbolEmbeddings, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, embeddings_to_bytes(emb)).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<SymbolEmbeddings> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    embeddings_from_bytes(&bytes)
}
