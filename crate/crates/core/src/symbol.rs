//! Symbol table: dense integer ids for letters and nonterminals.
//!
//! Ids are append-only. The compressor periodically *renames* the letters
//! occurring in its tree so that they form a contiguous id interval; a renamed
//! id is an alias entry that points back to the canonical symbol it stands
//! for. Grammars and serialized output always use canonical ids.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Dense id of a symbol (letter or nonterminal).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolId(pub u32);

impl SymbolId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Where a symbol came from.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Origin {
    /// Parsed from input text.
    Input,
    /// Fresh letter replacing a maximal chain `a^l`.
    Chain,
    /// Fresh letter replacing a 2-chain `ab`.
    Pair,
    /// Fresh letter absorbing constant children.
    Leaf,
    /// Internal letter of the power-of-two chain representation.
    PowerBlock,
    /// Nonterminal introduced by a grammar transformation.
    Nonterminal,
}

impl Origin {
    fn tag(self) -> &'static str {
        match self {
            Origin::Input => "in",
            Origin::Chain => "chain",
            Origin::Pair => "pair",
            Origin::Leaf => "leaf",
            Origin::PowerBlock => "pow",
            Origin::Nonterminal => "nt",
        }
    }

    fn counter_slot(self) -> usize {
        match self {
            Origin::Input => 0,
            Origin::Chain => 1,
            Origin::Pair => 2,
            Origin::Leaf => 3,
            Origin::PowerBlock => 4,
            Origin::Nonterminal => 5,
        }
    }
}

struct Entry {
    /// Empty for alias entries.
    name: String,
    rank: u32,
    origin: Origin,
    /// Canonical symbol this entry stands for; `canon == self` for canonical entries.
    canon: SymbolId,
}

/// Append-only table of symbols shared by trees and grammars.
#[derive(Default)]
pub struct SymbolTable {
    entries: Vec<Entry>,
    by_name: HashMap<String, SymbolId>,
    fresh_counters: [u32; 6],
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("rank conflict for `{name}`: used with arity {existing} and {conflicting}")]
pub struct RankConflict {
    pub name: String,
    pub existing: u32,
    pub conflicting: u32,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Intern `name` with the given rank; same name must keep one arity.
    pub fn intern(
        &mut self,
        name: &str,
        rank: u32,
        origin: Origin,
    ) -> Result<SymbolId, RankConflict> {
        if let Some(&id) = self.by_name.get(name) {
            let existing = self.rank(id);
            if existing != rank {
                return Err(RankConflict {
                    name: name.to_owned(),
                    existing,
                    conflicting: rank,
                });
            }
            return Ok(id);
        }
        let id = SymbolId(self.entries.len() as u32);
        self.entries.push(Entry {
            name: name.to_owned(),
            rank,
            origin,
            canon: id,
        });
        self.by_name.insert(name.to_owned(), id);
        Ok(id)
    }

    /// Look up a symbol by name without creating it.
    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.by_name.get(name).copied()
    }

    /// Create a fresh symbol named `_<origin><counter>`, skipping taken names.
    pub fn fresh(&mut self, origin: Origin, rank: u32) -> SymbolId {
        let slot = origin.counter_slot();
        loop {
            let n = self.fresh_counters[slot];
            self.fresh_counters[slot] += 1;
            let name = format!("_{}{}", origin.tag(), n);
            if !self.by_name.contains_key(&name) {
                let id = SymbolId(self.entries.len() as u32);
                self.entries.push(Entry {
                    name: name.clone(),
                    rank,
                    origin,
                    canon: id,
                });
                self.by_name.insert(name, id);
                return id;
            }
        }
    }

    /// Create an alias id for `of` (used by letter renaming). The alias shares
    /// the canonical symbol's name and rank but never appears in name lookups.
    pub fn alias(&mut self, of: SymbolId) -> SymbolId {
        let canon = self.canon(of);
        let rank = self.rank(of);
        let origin = self.entries[canon.index()].origin;
        let id = SymbolId(self.entries.len() as u32);
        self.entries.push(Entry {
            name: String::new(),
            rank,
            origin,
            canon,
        });
        id
    }

    #[inline]
    pub fn canon(&self, id: SymbolId) -> SymbolId {
        self.entries[id.index()].canon
    }

    #[inline]
    pub fn rank(&self, id: SymbolId) -> u32 {
        self.entries[id.index()].rank
    }

    pub fn origin(&self, id: SymbolId) -> Origin {
        self.entries[id.index()].origin
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.entries[self.canon(id).index()].name
    }
}
