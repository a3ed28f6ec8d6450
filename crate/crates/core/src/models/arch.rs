use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Architecture {
    /// Hidden-state history through `R`.
    Elman,
    /// Output-distribution history through `R`.
    Jordan,
    /// Label embeddings of previous predictions concatenated to the word input.
    IRnn,
    /// `IRnn` plus an Elman-style hidden-state history.
    IPlusERnn,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Elman,
        Architecture::Jordan,
        Architecture::IRnn,
        Architecture::IPlusERnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Elman => "elman",
            Architecture::Jordan => "jordan",
            Architecture::IRnn => "irnn",
            Architecture::IPlusERnn => "iplus",
        }
    }

    pub fn uses_label_embeddings(self) -> bool {
        matches!(self, Architecture::IRnn | Architecture::IPlusERnn)
    }

    pub fn uses_hidden_history(self) -> bool {
        matches!(self, Architecture::Elman | Architecture::IPlusERnn)
    }

    pub fn uses_output_history(self) -> bool {
        self == Architecture::Jordan
    }

    pub fn has_recurrent_matrix(self) -> bool {
        self != Architecture::IRnn
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "elman" | "e-rnn" => Ok(Architecture::Elman),
            "jordan" | "j-rnn" => Ok(Architecture::Jordan),
            "irnn" | "i-rnn" => Ok(Architecture::IRnn),
            "iplus" | "i+e-rnn" | "iplusernn" => Ok(Architecture::IPlusERnn),
            other => Err(Error::InvalidInput(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Bidirectional => "bidirectional",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            "bidirectional" | "bidir" => Ok(Direction::Bidirectional),
            other => Err(Error::InvalidInput(format!("unknown direction {other:?}"))),
        }
    }
}

/// How a Jordan network feeds its previous outputs back into the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum JordanFeed {
    /// The full softmax distribution.
    #[default]
    Distribution,
    /// A one-hot vector of the decided label.
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Activation {
    #[default]
    Sigmoid,
    /// Linear hidden layer; only used to sanity-check the chain rule.
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => crate::math::sigmoid_scalar(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    pub(crate) fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Identity => 1.0,
        }
    }
}
