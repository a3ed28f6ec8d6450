use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS_LABEL: &str = "<bos-label>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_LABEL_ID: usize = 2;

/// Number of reserved entries at the start of every vocabulary.
pub const RESERVED: usize = 3;

/// Symbol ↔ index map. The first three entries are always `<pad>`, `<unk>`
/// and `<bos-label>`, for word and label vocabularies alike.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut vocab = Self {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for s in [PAD, UNK, BOS_LABEL] {
            vocab.insert(s);
        }
        vocab
    }

    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::new();
        for s in symbols {
            vocab.insert(s.as_ref());
        }
        vocab
    }

    /// Rebuilds a vocabulary from its full symbol list, reserved entries included.
    pub fn from_full_list(symbols: Vec<String>) -> Result<Self> {
        if symbols.len() < RESERVED
            || symbols[PAD_ID] != PAD
            || symbols[UNK_ID] != UNK
            || symbols[BOS_LABEL_ID] != BOS_LABEL
        {
            return Err(Error::InvalidInput(
                "vocabulary must start with <pad>, <unk>, <bos-label>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary symbol {s:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    pub fn insert(&mut self, symbol: &str) -> usize {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len();
        self.symbols.push(symbol.to_owned());
        self.index.insert(symbol.to_owned(), id);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn id_or_unk(&self, symbol: &str) -> usize {
        self.id(symbol).unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_symbols_come_first() {
        let v = Vocabulary::from_symbols(["the", "cat", "the"]);
        assert_eq!(v.symbols()[..3], [PAD, UNK, BOS_LABEL]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("cat"), Some(4));
        assert_eq!(v.id_or_unk("dog"), UNK_ID);
        for (i, s) in v.symbols().iter().enumerate() {
            assert_eq!(v.id(s), Some(i));
        }
    }

    #[test]
    fn full_list_validation() {
        let v = Vocabulary::from_symbols(["a"]);
        assert_eq!(Vocabulary::from_full_list(v.symbols().to_vec()).unwrap(), v);
        assert!(Vocabulary::from_full_list(vec!["a".into()]).is_err());
        let mut dup = v.symbols().to_vec();
        dup.push("a".into());
        assert!(Vocabulary::from_full_list(dup).is_err());
    }
}
