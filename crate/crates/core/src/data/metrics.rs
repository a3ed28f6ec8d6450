use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};

fn check_shapes<A, B>(gold: &[Vec<A>], pred: &[Vec<B>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::dim("sequence count", gold.len(), pred.len()));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::dim(
                "sequence length",
                format!("{} tokens in sequence {i}", g.len()),
                p.len(),
            ));
        }
    }
    Ok(())
}

/// Fraction of positions whose predicted label equals the gold label.
pub fn token_accuracy<T: PartialEq>(gold: &[Vec<T>], pred: &[Vec<T>]) -> Result<f64> {
    check_shapes(gold, pred)?;
    let mut total = 0usize;
    let mut correct = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        total += g.len();
        correct += g.iter().zip(p).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Err(Error::InvalidInput("no tokens to score".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChunkScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl ChunkScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BioTag<'a> {
    Begin(&'a str),
    Inside(&'a str),
    Outside,
}

fn parse_tag(label: &str) -> Result<BioTag<'_>> {
    if label == "O" {
        return Ok(BioTag::Outside);
    }
    match label.split_at_checked(2) {
        Some(("B-", ty)) if !ty.is_empty() => Ok(BioTag::Begin(ty)),
        Some(("I-", ty)) if !ty.is_empty() => Ok(BioTag::Inside(ty)),
        _ => Err(Error::InvalidInput(format!("label {label:?} is not B-X, I-X or O"))),
    }
}

/// A chunk as `(start, end_exclusive, type)`.
pub type Chunk<'a> = (usize, usize, &'a str);

/// Extracts chunks with the conlleval convention: an `I-X` that does not
/// continue a chunk of type X opens a new one.
pub fn extract_chunks<S: AsRef<str>>(labels: &[S]) -> Result<Vec<Chunk<'_>>> {
    let mut chunks = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        match parse_tag(label.as_ref())? {
            BioTag::Outside => {
                if let Some((start, ty)) = open.take() {
                    chunks.push((start, i, ty));
                }
            }
            BioTag::Begin(ty) => {
                if let Some((start, prev)) = open.take() {
                    chunks.push((start, i, prev));
                }
                open = Some((i, ty));
            }
            BioTag::Inside(ty) => match open {
                Some((_, prev)) if prev == ty => {}
                _ => {
                    if let Some((start, prev)) = open.take() {
                        chunks.push((start, i, prev));
                    }
                    open = Some((i, ty));
                }
            },
        }
    }
    if let Some((start, ty)) = open {
        chunks.push((start, labels.len(), ty));
    }
    Ok(chunks)
}

/// Exact-match chunk precision, recall and F1 over BIO-labelled sequences.
pub fn bio_chunk_f1<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<ChunkScore> {
    check_shapes(gold, pred)?;
    let (mut tp, mut n_gold, mut n_pred) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gold_chunks: HashSet<Chunk<'_>> = extract_chunks(g)?.into_iter().collect();
        let pred_chunks = extract_chunks(p)?;
        n_gold += gold_chunks.len();
        n_pred += pred_chunks.len();
        tp += pred_chunks.iter().filter(|c| gold_chunks.contains(c)).count();
    }
    Ok(ChunkScore::from_counts(tp, n_pred - tp, n_gold - tp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(x: &[&[&str]]) -> Vec<Vec<String>> {
        x.iter().map(|s| s.iter().map(|t| t.to_string()).collect()).collect()
    }

    #[test]
    fn accuracy_examples() {
        let g = vec![vec![1, 2], vec![3, 4]];
        assert_eq!(token_accuracy(&g, &g).unwrap(), 1.0);
        assert_eq!(token_accuracy(&g, &[vec![5, 5], vec![5, 5]]).unwrap(), 0.0);
        assert_eq!(token_accuracy(&g, &[vec![1, 2], vec![3, 0]]).unwrap(), 0.75);
        assert!(token_accuracy(&g, &[vec![1, 2]]).is_err());
        assert!(token_accuracy(&g, &[vec![1, 2], vec![3]]).is_err());
    }

    #[test]
    fn perfect_chunking() {
        let g = seqs(&[&["B-a", "I-a", "O"]]);
        let s = bio_chunk_f1(&g, &g).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.true_positives), (1.0, 1.0, 1.0, 1));
    }

    #[test]
    fn split_chunk_counts() {
        let s = bio_chunk_f1(&seqs(&[&["B-a", "I-a"]]), &seqs(&[&["B-a", "B-a"]])).unwrap();
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (0, 2, 1));
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn all_outside_prediction() {
        let s = bio_chunk_f1(&seqs(&[&["O", "B-x", "O"]]), &seqs(&[&["O", "O", "O"]])).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert_eq!(s.false_negatives, 1);
    }

    #[test]
    fn dangling_inside_starts_chunk() {
        let chunks = extract_chunks(&["O", "I-a", "I-a", "I-b", "B-b", "I-b"]).unwrap();
        assert_eq!(chunks, vec![(1, 3, "a"), (3, 4, "b"), (4, 6, "b")]);
    }

    #[test]
    fn rejects_unknown_label_shapes() {
        assert!(extract_chunks(&["NOUN"]).is_err());
        assert!(extract_chunks(&["B-"]).is_err());
        assert!(bio_chunk_f1(&seqs(&[&["O"]]), &seqs(&[&["O", "O"]])).is_err());
    }
}
