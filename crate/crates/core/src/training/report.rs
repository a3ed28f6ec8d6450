use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-token cross-entropy over the epoch's training pass.
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_dev_metric: f64,
}

impl TrainReport {
    /// Builds a report, selecting the first epoch with the highest dev metric.
    pub fn from_epochs(epochs: Vec<EpochStats>) -> Result<Self> {
        let mut best: Option<EpochStats> = None;
        for e in &epochs {
            if best.is_none_or(|b| e.dev_metric > b.dev_metric) {
                best = Some(*e);
            }
        }
        let best = best.ok_or_else(|| Error::InvalidInput("a report needs at least one epoch".into()))?;
        Ok(Self {
            best_epoch: best.epoch,
            best_dev_metric: best.dev_metric,
            epochs,
        })
    }

    /// `epoch<TAB>train_loss<TAB>dev_metric` per epoch, then `best<TAB>epoch<TAB>metric`.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{:?}\t{:?}", e.epoch, e.train_loss, e.dev_metric);
        }
        let _ = writeln!(out, "best\t{}\t{:?}", self.best_epoch, self.best_dev_metric);
        out
    }

    pub fn parse_log(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<report>".into(),
            line,
            message: msg.to_owned(),
        };
        let mut epochs = Vec::new();
        let mut best = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if best.is_some() {
                return Err(bad(n, "content after the best line"));
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(n, "expected three tab-separated fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad epoch index"));
            if fields[0] == "best" {
                best = Some((idx(fields[1])?, num(fields[2])?));
            } else {
                epochs.push(EpochStats {
                    epoch: idx(fields[0])?,
                    train_loss: num(fields[1])?,
                    dev_metric: num(fields[2])?,
                });
            }
        }
        let (best_epoch, best_dev_metric) = best.ok_or_else(|| bad(0, "missing best line"))?;
        Ok(Self {
            epochs,
            best_epoch,
            best_dev_metric,
        })
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_log()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(epoch: usize, dev: f64) -> EpochStats {
        EpochStats {
            epoch,
            train_loss: 1.0 / (epoch + 1) as f64,
            dev_metric: dev,
        }
    }

    #[test]
    fn best_is_first_maximum() {
        let r = TrainReport::from_epochs(vec![stats(1, 0.5), stats(2, 0.7), stats(3, 0.7), stats(4, 0.6)]).unwrap();
        assert_eq!((r.best_epoch, r.best_dev_metric), (2, 0.7));
        assert!(TrainReport::from_epochs(vec![]).is_err());
    }

    #[test]
    fn log_round_trips_exactly() {
        let r = TrainReport::from_epochs(vec![stats(1, 0.1 + 0.2), stats(2, 1.0 / 3.0)]).unwrap();
        let log = r.to_log();
        assert_eq!(log.lines().last().unwrap(), "best\t2\t0.3333333333333333");
        assert_eq!(TrainReport::parse_log(&log).unwrap(), r);
    }

    #[test]
    fn rejects_malformed_logs() {
        assert!(TrainReport::parse_log("1\t0.5\n").is_err());
        assert!(TrainReport::parse_log("1\t0.5\t0.5\n").is_err());
        assert!(TrainReport::parse_log("best\t1\t0.5\n1\t0.5\t0.5\n").is_err());
    }
}
