//! Grammar-based compression of ranked ordered trees.
//!
//! The compressor iterates phases of chain compression, unary pair
//! compression and leaf compression on the tree, shrinking it by a constant
//! factor per phase; reversing each replacement yields a straight-line
//! context-free tree grammar for the input. The crate also evaluates
//! (decompresses) such grammars, normalizes arbitrary grammars into handle
//! form, and can verify a compression run by simulating every step on a
//! parallel handle grammar.

pub mod compressor;
pub mod generate;
pub mod grammar;
pub mod handle;
pub mod normalizer;
pub mod radix;
pub mod simulator;
pub mod symbol;
pub mod tree;

pub use compressor::{compress, CompressOutput, PhaseStats};
pub use grammar::{Production, SlcfGrammar};
pub use symbol::{Origin, SymbolId, SymbolTable};
pub use tree::{parse_term, serialize_term, RankedTree};
