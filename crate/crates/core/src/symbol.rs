//! Interned symbols, alphabets and symbol strings shared by every engine.
//!
//! A [`Symbol`] is an interned integer with a display label. The label is
//! presentation only; no engine logic ever depends on its contents, so
//! compiled triple names like `(1,cell,.)` stay opaque.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Interned symbol identifier, unique within its [`Alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolId(pub u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A symbol: interned id plus its display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub id: SymbolId,
    pub display: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("duplicate display label {0:?}")]
    DuplicateDisplay(String),
    #[error("unknown symbol label {0:?}")]
    UnknownLabel(String),
    #[error("symbol id {0} out of range")]
    UnknownId(SymbolId),
    #[error("alphabet needs at least two symbols, got {0}")]
    TooSmall(usize),
    #[error("halt symbol and end marker must differ")]
    HaltIsEndMarker,
}

/// Ordered set of symbols with a designated halt symbol and optional end marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<Symbol>,
    #[serde(skip)]
    by_display: HashMap<String, SymbolId>,
    halt: SymbolId,
    end_marker: Option<SymbolId>,
}

impl Alphabet {
    /// Builds an alphabet from display labels. `halt` and the optional
    /// `end_marker` must both appear in `labels`.
    pub fn new<S: AsRef<str>>(
        labels: &[S],
        halt: &str,
        end_marker: Option<&str>,
    ) -> Result<Self, AlphabetError> {
        if labels.len() < 2 {
            return Err(AlphabetError::TooSmall(labels.len()));
        }
        let mut symbols = Vec::with_capacity(labels.len());
        let mut by_display = HashMap::new();
        for (i, label) in labels.iter().enumerate() {
            let label = label.as_ref().to_string();
            if by_display.contains_key(&label) {
                return Err(AlphabetError::DuplicateDisplay(label));
            }
            let id = SymbolId(i as u32);
            by_display.insert(label.clone(), id);
            symbols.push(Symbol { id, display: label });
        }
        let halt = *by_display
            .get(halt)
            .ok_or_else(|| AlphabetError::UnknownLabel(halt.to_string()))?;
        let end_marker = match end_marker {
            Some(label) => {
                let id = *by_display
                    .get(label)
                    .ok_or_else(|| AlphabetError::UnknownLabel(label.to_string()))?;
                if id == halt {
                    return Err(AlphabetError::HaltIsEndMarker);
                }
                Some(id)
            }
            None => None,
        };
        Ok(Alphabet { symbols, by_display, halt, end_marker })
    }

    /// Restores the display index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.by_display = self
            .symbols
            .iter()
            .map(|s| (s.display.clone(), s.id))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn halt(&self) -> SymbolId {
        self.halt
    }

    pub fn end_marker(&self) -> Option<SymbolId> {
        self.end_marker
    }

    pub fn symbols(&self) -> impl Iterator<Item = &Symbol> {
        self.symbols.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.symbols.iter().map(|s| s.id)
    }

    pub fn contains(&self, id: SymbolId) -> bool {
        id.index() < self.symbols.len()
    }

    pub fn get(&self, id: SymbolId) -> Result<&Symbol, AlphabetError> {
        self.symbols.get(id.index()).ok_or(AlphabetError::UnknownId(id))
    }

    pub fn display(&self, id: SymbolId) -> &str {
        self.symbols
            .get(id.index())
            .map(|s| s.display.as_str())
            .unwrap_or("?")
    }

    pub fn lookup(&self, label: &str) -> Result<SymbolId, AlphabetError> {
        self.by_display
            .get(label)
            .copied()
            .ok_or_else(|| AlphabetError::UnknownLabel(label.to_string()))
    }
}

/// A finite sequence of symbol ids drawn from one alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymbolString(pub Vec<SymbolId>);

impl SymbolString {
    pub fn new(items: Vec<SymbolId>) -> Self {
        SymbolString(items)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that every id resolves in `alphabet`; returns the first foreign id.
    pub fn check_alphabet(&self, alphabet: &Alphabet) -> Result<(), SymbolId> {
        match self.0.iter().find(|id| !alphabet.contains(**id)) {
            Some(id) => Err(*id),
            None => Ok(()),
        }
    }

    /// Renders the string as whitespace-joined display labels.
    pub fn render(&self, alphabet: &Alphabet) -> String {
        self.0
            .iter()
            .map(|id| alphabet.display(*id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses a whitespace-separated label list.
    pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Self, AlphabetError> {
        let mut items = Vec::new();
        for label in text.split_whitespace() {
            items.push(alphabet.lookup(label)?);
        }
        Ok(SymbolString(items))
    }
}

impl From<Vec<SymbolId>> for SymbolString {
    fn from(items: Vec<SymbolId>) -> Self {
        SymbolString(items)
    }
}
