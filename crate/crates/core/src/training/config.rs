use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::JordanFeed;

/// Metric used to pick the best epoch on development data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DevMetric {
    Accuracy,
    ChunkF1,
}

impl DevMetric {
    pub fn name(self) -> &'static str {
        match self {
            DevMetric::Accuracy => "accuracy",
            DevMetric::ChunkF1 => "chunk-f1",
        }
    }
}

impl FromStr for DevMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" | "acc" => Ok(DevMetric::Accuracy),
            "chunk-f1" | "f1" => Ok(DevMetric::ChunkF1),
            other => Err(Error::InvalidInput(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub window: usize,
    pub context: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Gold histories while training; self-predicted ones otherwise.
    pub teacher_forcing: bool,
    /// Pre-train word (and label) embeddings before tagging.
    pub pretrain: bool,
    pub pretrain_word_epochs: usize,
    pub pretrain_label_epochs: usize,
    /// Extend L2 to the embedding rows read at each step.
    pub l2_embeddings: bool,
    /// Fraction of training tokens replaced by `<unk>` in each epoch.
    pub unk_rate: f64,
    pub jordan_feed: JordanFeed,
    pub metric: DevMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            emb_dim: 200,
            hidden: 100,
            window: 3,
            context: 6,
            lr: 0.5,
            momentum: 0.9,
            lambda: 0.003,
            epochs: 20,
            seed: 1,
            teacher_forcing: true,
            pretrain: false,
            pretrain_word_epochs: 20,
            pretrain_label_epochs: 10,
            l2_embeddings: false,
            unk_rate: 0.01,
            jordan_feed: JordanFeed::Distribution,
            metric: DevMetric::Accuracy,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidInput(format!("bad value {value:?} for {key}"))),
    }
}

impl TrainConfig {
    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got {assignment:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "emb_dim" | "dim" | "D" => self.emb_dim = parse(key, value)?,
            "hidden" | "H" => self.hidden = parse(key, value)?,
            "window" | "w" => self.window = parse(key, value)?,
            "context" | "c" => self.context = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "teacher_forcing" => self.teacher_forcing = parse_bool(key, value)?,
            "pretrain" => self.pretrain = parse_bool(key, value)?,
            "pretrain_word_epochs" => self.pretrain_word_epochs = parse(key, value)?,
            "pretrain_label_epochs" => self.pretrain_label_epochs = parse(key, value)?,
            "l2_embeddings" => self.l2_embeddings = parse_bool(key, value)?,
            "unk_rate" => self.unk_rate = parse(key, value)?,
            "jordan_feed" => {
                self.jordan_feed = match value {
                    "distribution" | "prob" => JordanFeed::Distribution,
                    "onehot" | "one-hot" => JordanFeed::OneHot,
                    _ => return Err(Error::InvalidInput(format!("bad value {value:?} for {key}"))),
                }
            }
            "metric" => self.metric = value.parse()?,
            _ => return Err(Error::InvalidInput(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Same config with a different hidden layer width.
    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_owned()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be ≥ 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.unk_rate) {
            return bad("unk_rate must lie in [0, 1)");
        }
        if self.emb_dim == 0 || self.hidden == 0 || self.context == 0 {
            return bad("emb_dim, hidden and context must be ≥ 1");
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let feed = match self.jordan_feed {
            JordanFeed::Distribution => "distribution",
            JordanFeed::OneHot => "onehot",
        };
        writeln!(f, "emb_dim={}", self.emb_dim)?;
        writeln!(f, "hidden={}", self.hidden)?;
        writeln!(f, "window={}", self.window)?;
        writeln!(f, "context={}", self.context)?;
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "momentum={}", self.momentum)?;
        writeln!(f, "lambda={}", self.lambda)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "teacher_forcing={}", self.teacher_forcing)?;
        writeln!(f, "pretrain={}", self.pretrain)?;
        writeln!(f, "pretrain_word_epochs={}", self.pretrain_word_epochs)?;
        writeln!(f, "pretrain_label_epochs={}", self.pretrain_label_epochs)?;
        writeln!(f, "l2_embeddings={}", self.l2_embeddings)?;
        writeln!(f, "unk_rate={}", self.unk_rate)?;
        writeln!(f, "jordan_feed={feed}")?;
        write!(f, "metric={}", self.metric.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!((c.emb_dim, c.hidden, c.window, c.context), (200, 100, 3, 6));
        assert_eq!((c.lr, c.lambda, c.epochs), (0.5, 0.003, 20));
        assert_eq!((c.pretrain_word_epochs, c.pretrain_label_epochs), (20, 10));
        c.validate().unwrap();
    }

    #[test]
    fn overrides_round_trip_through_display() {
        let mut c = TrainConfig::default();
        for kv in [
            "hidden=300",
            "lr=0.05",
            "jordan_feed=onehot",
            "metric=chunk-f1",
            "teacher_forcing=off",
        ] {
            c.set(kv).unwrap();
        }
        let mut again = TrainConfig::default();
        for line in c.to_string().lines() {
            again.set(line).unwrap();
        }
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainConfig::default();
        assert!(c.set("nope=1").is_err());
        assert!(c.set("lr").is_err());
        assert!(c.set("epochs=-1").is_err());
        c.set("momentum=1.0").unwrap();
        assert!(c.validate().is_err());
        let c = TrainConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
