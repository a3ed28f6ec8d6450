//! How concentrated a Jordan network's output distributions are, and
//! ranked comparisons of per-architecture results.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::models::{Architecture, TaggerModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Mass the top label (or top three) must exceed.
    pub high: f64,
    /// Bound every probability outside the top three must stay under.
    pub tail: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { high: 0.9, tail: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationStats {
    pub n_positions: usize,
    pub n_max_gt: usize,
    pub n_top3_gt: usize,
    /// Positions where every probability outside the top three is below `thresholds.tail`.
    pub n_tail_small: usize,
    pub thresholds: Thresholds,
}

impl ConcentrationStats {
    pub fn empty(thresholds: Thresholds) -> Self {
        Self {
            n_positions: 0,
            n_max_gt: 0,
            n_top3_gt: 0,
            n_tail_small: 0,
            thresholds,
        }
    }

    /// Counts one output distribution.
    pub fn record(&mut self, dist: &[f64]) {
        let mut sorted = dist.to_vec();
        sorted.sort_unstable_by(|a, b| b.total_cmp(a));
        let top3: f64 = sorted.iter().take(3).sum();
        self.n_positions += 1;
        self.n_max_gt += (sorted.first().copied().unwrap_or(0.0) > self.thresholds.high) as usize;
        self.n_top3_gt += (top3 > self.thresholds.high) as usize;
        self.n_tail_small += sorted.iter().skip(3).all(|&p| p < self.thresholds.tail) as usize;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.n_positions += other.n_positions;
        self.n_max_gt += other.n_max_gt;
        self.n_top3_gt += other.n_top3_gt;
        self.n_tail_small += other.n_tail_small;
        self
    }

    pub fn is_ordered(&self) -> bool {
        self.n_max_gt <= self.n_top3_gt && self.n_top3_gt <= self.n_positions && self.n_tail_small <= self.n_positions
    }

    pub fn max_fraction(&self) -> f64 {
        fraction(self.n_max_gt, self.n_positions)
    }

    pub fn summary(&self) -> String {
        let line = |n: usize| {
            format!(
                "{n}/{} ({:.1}%)",
                self.n_positions,
                100.0 * fraction(n, self.n_positions)
            )
        };
        let t = self.thresholds;
        format!(
            "max probability > {}: {}\ntop-3 mass > {}: {}\nall other probabilities < {}: {}",
            t.high,
            line(self.n_max_gt),
            t.high,
            line(self.n_top3_gt),
            t.tail,
            line(self.n_tail_small)
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numeric record")
    }
}

fn fraction(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Tags `corpus` greedily with a Jordan model and counts how peaked its
/// output distributions are at every position.
pub fn prob_concentration(model: &TaggerModel, corpus: &Corpus, thresholds: Thresholds) -> Result<ConcentrationStats> {
    if model.arch() != Architecture::Jordan {
        return Err(Error::Architecture(format!(
            "concentration statistics need a jordan model, got {}",
            model.arch()
        )));
    }
    let per_sequence = corpus
        .examples
        .par_iter()
        .map(|ex| {
            let run = model.run(ex.word_ids())?;
            let mut s = ConcentrationStats::empty(thresholds);
            for y in &run.outputs {
                s.record(y.as_slice());
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sequence
        .iter()
        .fold(ConcentrationStats::empty(thresholds), |acc, s| acc.merge(s)))
}

/// Sorts results best first; equal metrics are ordered by name.
pub fn compare_report(results: &[(String, f64)]) -> Result<Vec<(String, f64)>> {
    if results.is_empty() {
        return Err(Error::InvalidInput("nothing to compare".into()));
    }
    if let Some((name, _)) = results.iter().find(|(_, m)| m.is_nan()) {
        return Err(Error::InvalidInput(format!("metric for {name} is NaN")));
    }
    let mut rows = results.to_vec();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

pub fn render_comparison(rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("model".len());
    let mut out = format!("rank  {:<width$}  metric\n", "model");
    for (i, (name, metric)) in rows.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  {name:<width$}  {metric:.4}", i + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::models::{Dims, Direction, RnnParameters};
    use proptest::prelude::*;

    fn jordan(corpus: &Corpus, seed: u64) -> TaggerModel {
        let dims = Dims {
            vocab: corpus.word_vocab.len(),
            labels: corpus.label_vocab.len(),
            emb_dim: 4,
            hidden: 6,
            window: 1,
            context: 2,
        };
        let p = RnnParameters::new(Architecture::Jordan, dims, false, seed);
        TaggerModel::new(
            Direction::Forward,
            p,
            None,
            corpus.word_vocab.clone(),
            corpus.label_vocab.clone(),
        )
        .unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let c = generate_synthetic(1, (6, 4), 2..=5, 20, 1).unwrap();
        let mut m = jordan(&c, 1);
        m.params.for_each_slice_mut(|_, s| s.fill(0.0));
        let s = prob_concentration(&m, &c, Thresholds::default()).unwrap();
        assert_eq!(s.n_positions, c.n_tokens());
        assert_eq!(s.n_max_gt, 0);
        assert_eq!(s.n_top3_gt, 0);
        // uniform over 7 labels: the tail holds 1/7 each
        assert_eq!(s.n_tail_small, 0);
    }

    #[test]
    fn saturated_model_fills_every_count() {
        let c = generate_synthetic(1, (6, 4), 2..=5, 20, 1).unwrap();
        let mut m = jordan(&c, 1);
        m.params.output_bias.as_mut_slice()[4] = 50.0;
        let s = prob_concentration(&m, &c, Thresholds::default()).unwrap();
        assert_eq!(
            (s.n_max_gt, s.n_top3_gt, s.n_tail_small),
            (s.n_positions, s.n_positions, s.n_positions)
        );
        assert!(s.summary().lines().count() == 3);
        let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(json["n_positions"], s.n_positions);
    }

    #[test]
    fn rejects_other_architectures() {
        let c = generate_synthetic(1, (6, 4), 2..=5, 5, 1).unwrap();
        let mut m = jordan(&c, 1);
        m.params = RnnParameters::new(Architecture::IRnn, m.params.dims, false, 1);
        assert!(prob_concentration(&m, &c, Thresholds::default()).is_err());
    }

    #[test]
    fn record_examples() {
        let mut s = ConcentrationStats::empty(Thresholds::default());
        s.record(&[0.5, 0.3, 0.15, 0.0005, 0.0495]);
        s.record(&[0.95, 0.02, 0.01, 0.0099, 0.0001]);
        assert_eq!((s.n_positions, s.n_max_gt, s.n_top3_gt, s.n_tail_small), (2, 1, 2, 0));
        s.record(&[0.4, 0.6]);
        assert_eq!(s.n_tail_small, 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn counts_are_ordered_and_additive(seed in 0u64..1000, split in 0usize..30) {
            let c = generate_synthetic(2, (6, 5), 1..=6, 30, seed).unwrap();
            let m = jordan(&c, seed);
            let t = Thresholds { high: 0.3, tail: 0.1 };
            let whole = prob_concentration(&m, &c, t).unwrap();
            prop_assert!(whole.is_ordered());
            let (a, b) = c.examples.split_at(split);
            let part = |ex: &[crate::data::SequenceExample]| Corpus { examples: ex.to_vec(), ..c.clone() };
            let sum = prob_concentration(&m, &part(a), t).unwrap().merge(&prob_concentration(&m, &part(b), t).unwrap());
            prop_assert_eq!(sum, whole);
        }
    }

    #[test]
    fn comparison_sorts_and_breaks_ties_by_name() {
        let rows = compare_report(&[("jordan".into(), 0.7), ("elman".into(), 0.9), ("irnn".into(), 0.9)]).unwrap();
        let names: Vec<&str> = rows.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["elman", "irnn", "jordan"]);
        assert_eq!(compare_report(&[("x".into(), 0.1)]).unwrap().len(), 1);
        assert!(compare_report(&[]).is_err());
        assert!(compare_report(&[("x".into(), f64::NAN)]).is_err());
        let table = render_comparison(&rows);
        assert!(table.lines().nth(1).unwrap().contains("elman"));
    }
}
