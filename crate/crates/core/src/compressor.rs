//! The compressor: iterated phases of chain compression, (up,down)-pair
//! compression and leaf compression, emitting one grammar production per
//! fresh letter. Chains are represented through a shared power-of-two ladder
//! per letter and pass instead of flat `a^l` rules.
//!
//! Working ids: before every compression pass the letters occurring in the
//! tree are renamed onto a fresh contiguous id interval (alias entries in the
//! symbol table), so record sorting can use RadixSort over dense digits.
//! Emitted productions always refer to canonical ids.

use crate::grammar::{Production, SlcfGrammar, Term};
use crate::radix::{radix_sort_fixed, radix_sort_varlen};
use crate::symbol::{Origin, SymbolId, SymbolTable};
use crate::tree::{NodeId, RankedTree};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// Derived bound constant for `represent_chain_lengths`: with
/// S = k + Σ max(1, ceil(log2 gap_i)), the ladder emits at most 2(S - k)
/// nodes, binary expansions at most S, and splice rules at most 2k,
/// so the total emitted size is at most 3S.
pub const CHAIN_REP_COST_FACTOR: usize = 3;

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("chain lengths must be sorted, distinct and >= 2 (got {0})")]
    BadChainLengths(u64),
    #[error("replay table has no entry for {0}")]
    ReplayMiss(String),
    #[error("replay partition is not disjoint")]
    ReplayPartition,
}

/// Per-phase counters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseStats {
    pub phase: usize,
    pub size_start: usize,
    pub size_after_chain: usize,
    pub size_after_pair: usize,
    pub size_after_leaf: usize,
    pub n0: usize,
    pub n1: usize,
    pub n_ge2: usize,
    /// Number of maximal chains (label-agnostic unary runs) at phase start.
    pub maximal_chains: usize,
    pub fresh_chain_letters: usize,
    pub fresh_pair_letters: usize,
    pub fresh_leaf_letters: usize,
    pub chain_representation_cost: usize,
    pub pair_representation_cost: usize,
    pub leaf_representation_cost: usize,
    pub covered_two_chains: usize,
}

/// Fresh-letter key tables for one phase, with symbol names so a trace can be
/// written to and replayed from a file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub phase: usize,
    pub chain: Vec<ChainIntro>,
    pub up: Vec<String>,
    pub down: Vec<String>,
    pub pairs: Vec<PairIntro>,
    pub leaf: Vec<LeafIntro>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainIntro {
    pub letter: String,
    pub len: u64,
    pub fresh: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairIntro {
    pub up: String,
    pub down: String,
    pub fresh: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafIntro {
    pub parent: String,
    /// (1-based child position, constant name) pairs, positions ascending.
    pub absorbed: Vec<(u32, String)>,
    pub fresh: String,
    pub fresh_rank: u32,
}

/// Leaf-compression key: parent letter plus its absorbed (position,
/// constant) pairs, positions ascending and 1-based.
pub type LeafKey = (SymbolId, Vec<(u32, SymbolId)>);

/// Key tables of one phase resolved to canonical symbol ids.
#[derive(Debug, Clone, Default)]
pub struct ResolvedTrace {
    pub chain: HashMap<(SymbolId, u64), SymbolId>,
    pub up: HashSet<SymbolId>,
    pub down: HashSet<SymbolId>,
    pub pairs: HashMap<(SymbolId, SymbolId), SymbolId>,
    pub leaf: HashMap<LeafKey, SymbolId>,
}

impl PhaseTrace {
    /// Intern every symbol named in the trace and build id-keyed tables.
    pub fn resolve(&self, table: &mut SymbolTable) -> Result<ResolvedTrace, CompressError> {
        let mut out = ResolvedTrace::default();
        let get =
            |table: &mut SymbolTable, name: &str, rank: u32| -> Result<SymbolId, CompressError> {
                table
                    .intern(name, rank, Origin::Input)
                    .map_err(|e| CompressError::ReplayMiss(format!("`{}` ({e})", e.name)))
            };
        for c in &self.chain {
            let letter = get(table, &c.letter, 1)?;
            let fresh = get(table, &c.fresh, 1)?;
            out.chain
                .insert((table.canon(letter), c.len), table.canon(fresh));
        }
        for name in &self.up {
            let s = get(table, name, 1)?;
            out.up.insert(table.canon(s));
        }
        for name in &self.down {
            let s = get(table, name, 1)?;
            out.down.insert(table.canon(s));
        }
        if !out.up.is_disjoint(&out.down) {
            return Err(CompressError::ReplayPartition);
        }
        for p in &self.pairs {
            let a = get(table, &p.up, 1)?;
            let b = get(table, &p.down, 1)?;
            let fresh = get(table, &p.fresh, 1)?;
            out.pairs
                .insert((table.canon(a), table.canon(b)), table.canon(fresh));
        }
        for l in &self.leaf {
            let parent = table
                .lookup(&l.parent)
                .ok_or_else(|| CompressError::ReplayMiss(format!("parent `{}`", l.parent)))?;
            let mut absorbed = Vec::with_capacity(l.absorbed.len());
            for (pos, name) in &l.absorbed {
                let a = get(table, name, 0)?;
                absorbed.push((*pos, table.canon(a)));
            }
            let fresh = get(table, &l.fresh, l.fresh_rank)?;
            out.leaf
                .insert((table.canon(parent), absorbed), table.canon(fresh));
        }
        Ok(out)
    }
}

/// Output of the chain-representation scheme for one letter and one pass.
#[derive(Debug)]
pub struct ChainRepresentation {
    /// (length, letter deriving `a^length`), lengths ascending.
    pub letters: Vec<(u64, SymbolId)>,
    pub productions: Vec<Production>,
    /// Total non-parameter nodes of the emitted productions.
    pub cost: usize,
}

/// Emit a sub-grammar defining letters for `a^l` for every l in `lengths`
/// (sorted ascending, each >= 2). Powers of two form a shared ladder
/// `a_{2^i} -> a_{2^{i-1}} a_{2^{i-1}}`; each gap between consecutive lengths
/// is covered by the binary expansion of the gap, and consecutive lengths are
/// spliced. Every represented power is reused within the call.
pub fn represent_chain_lengths(
    table: &mut SymbolTable,
    letter: SymbolId,
    lengths: &[u64],
) -> Result<ChainRepresentation, CompressError> {
    let a = table.canon(letter);
    for (i, &l) in lengths.iter().enumerate() {
        if l < 2 || (i > 0 && lengths[i - 1] >= l) {
            return Err(CompressError::BadChainLengths(l));
        }
    }
    let mut rep: BTreeMap<u64, SymbolId> = BTreeMap::new();
    rep.insert(1, a);
    let mut productions = Vec::new();
    let mut cost = 0usize;

    let mut max_gap = 0u64;
    let mut prev = 0u64;
    for &l in lengths {
        max_gap = max_gap.max(l - prev);
        prev = l;
    }
    let ladder_top = 63 - max_gap.leading_zeros(); // floor(log2 max_gap)
    for i in 1..=ladder_top {
        let p = 1u64 << i;
        let half = rep[&(p >> 1)];
        let fresh = table.fresh(Origin::PowerBlock, 1);
        productions.push(Production {
            lhs: fresh,
            rhs: Term::apply(half, vec![Term::apply(half, vec![Term::param(0)])]),
        });
        cost += 2;
        rep.insert(p, fresh);
    }

    let mut letters = Vec::with_capacity(lengths.len());
    let mut prev = 0u64;
    for &l in lengths {
        let gap = l - prev;
        let gap_sym = match rep.get(&gap) {
            Some(&s) => s,
            None => {
                // Binary expansion of the gap, highest power first.
                let mut rhs = Term::param(0);
                let mut bits = 0usize;
                for i in 0..=ladder_top {
                    if gap & (1 << i) != 0 {
                        rhs = Term::apply(rep[&(1u64 << i)], vec![rhs]);
                        bits += 1;
                    }
                }
                debug_assert!(bits >= 2);
                let fresh = table.fresh(Origin::PowerBlock, 1);
                productions.push(Production { lhs: fresh, rhs });
                cost += bits;
                rep.insert(gap, fresh);
                fresh
            }
        };
        let full = if prev == 0 {
            rep.insert(l, gap_sym);
            gap_sym
        } else {
            match rep.get(&l) {
                Some(&s) => s,
                None => {
                    let below = rep[&prev];
                    let fresh = table.fresh(Origin::Chain, 1);
                    productions.push(Production {
                        lhs: fresh,
                        rhs: Term::apply(gap_sym, vec![Term::apply(below, vec![Term::param(0)])]),
                    });
                    cost += 2;
                    rep.insert(l, fresh);
                    fresh
                }
            }
        };
        letters.push((l, full));
        prev = l;
    }
    Ok(ChainRepresentation {
        letters,
        productions,
        cost,
    })
}

/// Up/down split of the current unary letters plus the covered 2-chain
/// occurrence lists.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Working ids of the letters assigned up / down.
    pub up: Vec<SymbolId>,
    pub down: Vec<SymbolId>,
    /// For each covered pair (a, b), pointers to the upper nodes of all
    /// occurrences of the 2-chain ab, in preorder.
    pub pair_occurrences: Vec<PairOccurrences>,
    pub covered: usize,
    /// Unary node count when the partition was computed.
    pub n1: usize,
    /// Maximal chain count when the partition was computed.
    pub c: usize,
}

#[derive(Debug, Clone)]
pub struct PairOccurrences {
    pub a: SymbolId,
    pub b: SymbolId,
    pub occurrences: Vec<NodeId>,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StepOutcome {
    pub fresh_letters: usize,
    pub representation_cost: usize,
}

/// Result of a full compression run.
pub struct CompressOutput {
    pub grammar: SlcfGrammar,
    pub stats: Vec<PhaseStats>,
    pub traces: Vec<PhaseTrace>,
    /// Instrumented work counter (node and record touches).
    pub node_touches: u64,
}

/// A compression run owns its tree exclusively; one phase executes
/// rename, chain compression, rename, partitioning, pair compression,
/// rename, leaf compression.
pub struct CompressionRun<'t> {
    pub table: &'t mut SymbolTable,
    tree: RankedTree,
    interval_lo: u32,
    productions: Vec<Production>,
    emit: bool,
    touches: u64,
    phases_done: usize,
}

impl<'t> CompressionRun<'t> {
    pub fn new(tree: RankedTree, table: &'t mut SymbolTable) -> Self {
        CompressionRun {
            table,
            tree,
            interval_lo: 0,
            productions: Vec::new(),
            emit: true,
            touches: 0,
            phases_done: 0,
        }
    }

    /// A run that only replays recorded steps (no production emission).
    pub fn replay(tree: RankedTree, table: &'t mut SymbolTable) -> Self {
        let mut run = CompressionRun::new(tree, table);
        run.emit = false;
        run
    }

    pub fn tree(&self) -> &RankedTree {
        &self.tree
    }

    pub fn size(&self) -> usize {
        self.tree.size()
    }

    pub fn node_touches(&self) -> u64 {
        self.touches
    }

    pub fn phases_done(&self) -> usize {
        self.phases_done
    }

    fn touch(&mut self, n: u64) {
        self.touches += n;
    }

    #[inline]
    fn digit(&self, sym: SymbolId) -> u32 {
        debug_assert!(sym.0 >= self.interval_lo);
        sym.0 - self.interval_lo + 1
    }

    fn interval_len(&self) -> u32 {
        self.table.len() as u32 - self.interval_lo
    }

    /// Rename the letters used in the tree so that they form a contiguous id
    /// interval, in first-traversal order. Tree labels become alias ids; the
    /// old-to-new mapping is the alias table, so productions keep referring
    /// to stable canonical symbols.
    pub fn rename_letters_to_interval(&mut self) {
        let window_lo = self.interval_lo as usize;
        let window_len = self.table.len() - window_lo;
        let mut new_ids: Vec<Option<SymbolId>> = vec![None; window_len];
        self.touch(window_len as u64);
        let order: Vec<NodeId> = self.tree.preorder().collect();
        self.interval_lo = self.table.len() as u32;
        for n in order {
            let slot = self.tree.label(n).index() - window_lo;
            let id = match new_ids[slot] {
                Some(id) => id,
                None => {
                    let id = self.table.alias(self.tree.label(n));
                    new_ids[slot] = Some(id);
                    id
                }
            };
            self.tree.set_label(n, id);
            self.touch(1);
        }
    }

    /// Replace every letter-maximal chain of length >= 2. Returns the intro
    /// table plus the maximal-chain count at scan time.
    pub fn step_chain(
        &mut self,
        replay: Option<&ResolvedTrace>,
    ) -> Result<(Vec<ChainIntro>, StepOutcome, usize), CompressError> {
        // Records (letter, length, top), one per a-maximal chain with l >= 2.
        let mut records: Vec<(SymbolId, u64, NodeId)> = Vec::new();
        let mut maximal = 0usize;
        let order: Vec<NodeId> = self.tree.preorder().collect();
        self.touch(order.len() as u64);
        for n in order {
            if self.tree.arity(n) != 1 {
                continue;
            }
            let parent_unary = self
                .tree
                .parent(n)
                .map(|p| self.tree.arity(p) == 1)
                .unwrap_or(false);
            if !parent_unary {
                maximal += 1;
            }
            let a = self.tree.label(n);
            if self
                .tree
                .parent(n)
                .map(|p| self.tree.label(p) == a)
                .unwrap_or(false)
            {
                continue;
            }
            let mut len = 1u64;
            let mut bottom = n;
            loop {
                let child = self.tree.children(bottom)[0];
                if self.tree.arity(child) == 1 && self.tree.label(child) == a {
                    bottom = child;
                    len += 1;
                } else {
                    break;
                }
            }
            self.touch(len);
            if len >= 2 {
                records.push((a, len, n));
            }
        }

        let max_len = records.iter().map(|r| r.1).max().unwrap_or(1);
        let k = (self.interval_len() as u64).max(max_len) as u32;
        self.touch(k as u64 + records.len() as u64);
        let records = radix_sort_fixed(records, 2, k, |r, j| match j {
            0 => self.digit(r.0),
            _ => r.1 as u32,
        })
        .expect("chain record digits in range");

        let mut intros = Vec::new();
        let mut outcome = StepOutcome::default();
        let mut i = 0usize;
        while i < records.len() {
            let letter = records[i].0;
            let mut j = i;
            let mut lengths: Vec<u64> = Vec::new();
            while j < records.len() && records[j].0 == letter {
                if lengths.last() != Some(&records[j].1) {
                    lengths.push(records[j].1);
                }
                j += 1;
            }
            // Letters deriving a^l for each l, freshly represented or looked
            // up from the replay table.
            let mut by_len: HashMap<u64, SymbolId> = HashMap::new();
            let canon_letter = self.table.canon(letter);
            if let Some(trace) = replay {
                for &l in &lengths {
                    let f = trace.chain.get(&(canon_letter, l)).ok_or_else(|| {
                        CompressError::ReplayMiss(format!(
                            "chain ({}, {l})",
                            self.table.name(letter)
                        ))
                    })?;
                    by_len.insert(l, self.table.alias(*f));
                }
            } else {
                let rep = represent_chain_lengths(self.table, canon_letter, &lengths)?;
                outcome.representation_cost += rep.cost;
                if self.emit {
                    self.productions.extend(rep.productions);
                }
                for &(l, sym) in &rep.letters {
                    by_len.insert(l, sym);
                    intros.push(ChainIntro {
                        letter: self.table.name(letter).to_owned(),
                        len: l,
                        fresh: self.table.name(sym).to_owned(),
                    });
                }
                outcome.fresh_letters += rep.letters.len();
            }
            for r in &records[i..j] {
                let fresh = by_len[&r.1];
                let top = r.2;
                let mut bottom = top;
                for _ in 1..r.1 {
                    let next = self.tree.children(bottom)[0];
                    if bottom != top {
                        self.tree.kill(bottom);
                    }
                    bottom = next;
                }
                if bottom != top {
                    self.tree.kill(bottom);
                }
                let below = self.tree.children(bottom)[0];
                self.tree.set_label(top, fresh);
                self.tree.set_children(top, vec![below]);
                self.touch(r.1);
            }
            i = j;
        }
        Ok((intros, outcome, maximal))
    }

    /// Maximal chains as words (preorder of their top nodes).
    fn words(&mut self) -> Vec<Vec<(NodeId, SymbolId)>> {
        let mut words = Vec::new();
        let order: Vec<NodeId> = self.tree.preorder().collect();
        self.touch(order.len() as u64);
        for n in order {
            if self.tree.arity(n) != 1 {
                continue;
            }
            let parent_unary = self
                .tree
                .parent(n)
                .map(|p| self.tree.arity(p) == 1)
                .unwrap_or(false);
            if parent_unary {
                continue;
            }
            let mut word = Vec::new();
            let mut cur = n;
            loop {
                word.push((cur, self.tree.label(cur)));
                let child = self.tree.children(cur)[0];
                if self.tree.arity(child) == 1 {
                    cur = child;
                } else {
                    break;
                }
            }
            self.touch(word.len() as u64);
            words.push(word);
        }
        words
    }

    /// Greedy up/down split of the unary letters covering at least a quarter
    /// of all 2-chains, with per-pair occurrence lists.
    pub fn find_partition(&mut self) -> Partition {
        let words = self.words();
        let n1: usize = words.iter().map(|w| w.len()).sum();
        let c = words.len();
        let k = self.interval_len() as usize;

        // 2-chain records (a, b, upper node).
        let mut recs: Vec<(SymbolId, SymbolId, NodeId)> = Vec::new();
        for w in &words {
            for pair in w.windows(2) {
                recs.push((pair[0].1, pair[1].1, pair[0].0));
            }
        }
        self.touch(recs.len() as u64 + k as u64);
        let total_two_chains = recs.len();

        // Right lists (sorted by (a, b)) and left lists (sorted by (b, a)).
        let right = radix_sort_fixed(recs.clone(), 2, k as u32, |r, j| {
            if j == 0 {
                self.digit(r.0)
            } else {
                self.digit(r.1)
            }
        })
        .expect("pair digits in range");
        let left = radix_sort_fixed(recs, 2, k as u32, |r, j| {
            if j == 0 {
                self.digit(r.1)
            } else {
                self.digit(r.0)
            }
        })
        .expect("pair digits in range");

        let slices = |sorted: &[(SymbolId, SymbolId, NodeId)],
                      key: fn(&(SymbolId, SymbolId, NodeId)) -> SymbolId| {
            let mut bounds: Vec<(SymbolId, usize, usize)> = Vec::new();
            let mut i = 0;
            while i < sorted.len() {
                let s = key(&sorted[i]);
                let mut j = i;
                while j < sorted.len() && key(&sorted[j]) == s {
                    j += 1;
                }
                bounds.push((s, i, j));
                i = j;
            }
            bounds
        };
        let right_groups = slices(&right, |r| r.0);
        let left_groups = slices(&left, |r| r.1);
        let mut right_of: Vec<Option<(usize, usize)>> = vec![None; k];
        for &(s, i, j) in &right_groups {
            right_of[(self.digit(s) - 1) as usize] = Some((i, j));
        }
        let mut left_of: Vec<Option<(usize, usize)>> = vec![None; k];
        for &(s, i, j) in &left_groups {
            left_of[(self.digit(s) - 1) as usize] = Some((i, j));
        }

        // Letters present, ascending by working id.
        let mut present = vec![false; k];
        for w in &words {
            for &(_, s) in w {
                present[(self.digit(s) - 1) as usize] = true;
            }
        }
        self.touch(n1 as u64);

        let mut count_up = vec![0u64; k];
        let mut count_down = vec![0u64; k];
        let mut up_bits = vec![false; k];
        let mut down_bits = vec![false; k];
        for slot in 0..k {
            if !present[slot] {
                continue;
            }
            let choice_up = count_down[slot] >= count_up[slot];
            if choice_up {
                up_bits[slot] = true;
            } else {
                down_bits[slot] = true;
            }
            let bump = |counts: &mut Vec<u64>,
                        range: Option<(usize, usize)>,
                        sorted: &[(SymbolId, SymbolId, NodeId)],
                        other: fn(&(SymbolId, SymbolId, NodeId)) -> SymbolId,
                        me: &Self| {
                if let Some((i, j)) = range {
                    for r in &sorted[i..j] {
                        counts[(me.digit(other(r)) - 1) as usize] += 1;
                    }
                }
            };
            if choice_up {
                bump(&mut count_up, right_of[slot], &right, |r| r.1, self);
                bump(&mut count_up, left_of[slot], &left, |r| r.0, self);
            } else {
                bump(&mut count_down, right_of[slot], &right, |r| r.1, self);
                bump(&mut count_down, left_of[slot], &left, |r| r.0, self);
            }
            self.touch(1);
        }
        self.touch(2 * total_two_chains as u64);

        // Choose the direction that covers more 2-chains.
        let mut ud = 0usize;
        let mut du = 0usize;
        for &(a, b, _) in &right {
            let sa = (self.digit(a) - 1) as usize;
            let sb = (self.digit(b) - 1) as usize;
            if up_bits[sa] && down_bits[sb] {
                ud += 1;
            } else if down_bits[sa] && up_bits[sb] {
                du += 1;
            }
        }
        self.touch(total_two_chains as u64);
        if du > ud {
            std::mem::swap(&mut up_bits, &mut down_bits);
            std::mem::swap(&mut ud, &mut du);
        }

        // Covered pair occurrence lists from the grouped right list.
        let mut pair_occurrences = Vec::new();
        {
            let mut i = 0;
            while i < right.len() {
                let (a, b, _) = right[i];
                let mut j = i;
                while j < right.len() && right[j].0 == a && right[j].1 == b {
                    j += 1;
                }
                let sa = (self.digit(a) - 1) as usize;
                let sb = (self.digit(b) - 1) as usize;
                if up_bits[sa] && down_bits[sb] {
                    pair_occurrences.push(PairOccurrences {
                        a,
                        b,
                        occurrences: right[i..j].iter().map(|r| r.2).collect(),
                    });
                }
                i = j;
            }
        }
        self.touch(total_two_chains as u64);

        let ids = |bits: &[bool], me: &Self| -> Vec<SymbolId> {
            bits.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(slot, _)| SymbolId(me.interval_lo + slot as u32))
                .collect()
        };
        let partition = Partition {
            up: ids(&up_bits, self),
            down: ids(&down_bits, self),
            pair_occurrences,
            covered: ud,
            n1,
            c,
        };
        debug_assert!(4 * partition.covered >= n1.saturating_sub(c));
        partition
    }

    /// Occurrence lists for a partition fixed in advance (replay), matching
    /// letters by canonical id.
    pub fn pair_occurrences_for(
        &mut self,
        up: &HashSet<SymbolId>,
        down: &HashSet<SymbolId>,
    ) -> Vec<PairOccurrences> {
        let words = self.words();
        let mut groups: BTreeMap<(u32, u32), PairOccurrences> = BTreeMap::new();
        for w in &words {
            for pair in w.windows(2) {
                let (na, a) = pair[0];
                let (_, b) = pair[1];
                if up.contains(&self.table.canon(a)) && down.contains(&self.table.canon(b)) {
                    groups
                        .entry((self.digit(a), self.digit(b)))
                        .or_insert_with(|| PairOccurrences {
                            a,
                            b,
                            occurrences: Vec::new(),
                        })
                        .occurrences
                        .push(na);
                }
            }
        }
        groups.into_values().collect()
    }

    /// Replace each covered occurrence of ab with a fresh unary letter.
    pub fn step_pair(
        &mut self,
        occurrences: &[PairOccurrences],
        replay: Option<&ResolvedTrace>,
    ) -> Result<(Vec<PairIntro>, StepOutcome), CompressError> {
        let mut intros = Vec::new();
        let mut outcome = StepOutcome::default();
        for group in occurrences {
            let ca = self.table.canon(group.a);
            let cb = self.table.canon(group.b);
            let fresh = match replay {
                Some(trace) => {
                    let f = trace.pairs.get(&(ca, cb)).ok_or_else(|| {
                        CompressError::ReplayMiss(format!(
                            "pair ({}, {})",
                            self.table.name(ca),
                            self.table.name(cb)
                        ))
                    })?;
                    self.table.alias(*f)
                }
                None => {
                    let f = self.table.fresh(Origin::Pair, 1);
                    if self.emit {
                        self.productions.push(Production {
                            lhs: f,
                            rhs: Term::apply(ca, vec![Term::apply(cb, vec![Term::param(0)])]),
                        });
                    }
                    outcome.fresh_letters += 1;
                    outcome.representation_cost += 2;
                    intros.push(PairIntro {
                        up: self.table.name(ca).to_owned(),
                        down: self.table.name(cb).to_owned(),
                        fresh: self.table.name(f).to_owned(),
                    });
                    f
                }
            };
            for &upper in &group.occurrences {
                debug_assert_eq!(self.tree.label(upper), group.a);
                let lower = self.tree.children(upper)[0];
                debug_assert_eq!(self.tree.label(lower), group.b);
                let below = self.tree.children(lower)[0];
                self.tree.kill(lower);
                self.tree.set_label(upper, fresh);
                self.tree.set_children(upper, vec![below]);
                self.touch(1);
            }
        }
        Ok((intros, outcome))
    }

    /// Absorb, for every node that had constant children at scan time, those
    /// children into a fresh letter of reduced rank. Records are collected in
    /// one full traversal before any replacement, so children that become
    /// constants during the pass are untouched.
    pub fn step_leaf(
        &mut self,
        replay: Option<&ResolvedTrace>,
    ) -> Result<(Vec<LeafIntro>, StepOutcome), CompressError> {
        let mut records: Vec<(Vec<u32>, NodeId)> = Vec::new();
        let mut max_digit = 1u32;
        let order: Vec<NodeId> = self.tree.preorder().collect();
        self.touch(order.len() as u64);
        for n in order {
            let arity = self.tree.arity(n);
            if arity == 0 {
                continue;
            }
            let mut key: Vec<u32> = Vec::new();
            for (i, &ch) in self.tree.children(n).iter().enumerate() {
                if self.tree.arity(ch) == 0 {
                    key.push(i as u32 + 1);
                    key.push(self.digit(self.tree.label(ch)));
                }
            }
            if key.is_empty() {
                continue;
            }
            key.insert(0, self.digit(self.tree.label(n)));
            max_digit = max_digit.max(arity as u32);
            records.push((key, n));
        }
        let k = self.interval_len().max(max_digit);
        self.touch(records.iter().map(|(key, _)| key.len() as u64).sum::<u64>() + k as u64);
        let records = radix_sort_varlen(records, k).expect("leaf record digits in range");

        let mut intros = Vec::new();
        let mut outcome = StepOutcome::default();
        let mut i = 0usize;
        while i < records.len() {
            let mut j = i;
            while j < records.len() && records[j].0 == records[i].0 {
                j += 1;
            }
            // The scan-time key is authoritative: children can become
            // constants during this pass and must not be absorbed.
            let key = records[i].0.clone();
            let node0 = records[i].1;
            let cf = self.table.canon(SymbolId(self.interval_lo + key[0] - 1));
            let rank = self.tree.arity(node0);
            let absorbed: Vec<(u32, SymbolId)> = key[1..]
                .chunks(2)
                .map(|ch| {
                    (
                        ch[0],
                        self.table.canon(SymbolId(self.interval_lo + ch[1] - 1)),
                    )
                })
                .collect();
            let removed = absorbed.len();
            let fresh_rank = (rank - removed) as u32;
            let fresh = match replay {
                Some(trace) => {
                    let key = (cf, absorbed.clone());
                    let f2 = trace.leaf.get(&key).ok_or_else(|| {
                        CompressError::ReplayMiss(format!("leaf ({})", self.table.name(cf)))
                    })?;
                    self.table.alias(*f2)
                }
                None => {
                    let f2 = self.table.fresh(Origin::Leaf, fresh_rank);
                    if self.emit {
                        let mut args = Vec::with_capacity(rank);
                        let mut next_param = 0u32;
                        let mut ai = 0usize;
                        for pos in 1..=rank as u32 {
                            if ai < absorbed.len() && absorbed[ai].0 == pos {
                                args.push(Term::leaf(absorbed[ai].1));
                                ai += 1;
                            } else {
                                args.push(Term::param(next_param));
                                next_param += 1;
                            }
                        }
                        self.productions.push(Production {
                            lhs: f2,
                            rhs: Term::apply(cf, args),
                        });
                    }
                    outcome.fresh_letters += 1;
                    outcome.representation_cost += removed + 1;
                    intros.push(LeafIntro {
                        parent: self.table.name(cf).to_owned(),
                        absorbed: absorbed
                            .iter()
                            .map(|&(pos, s)| (pos, self.table.name(s).to_owned()))
                            .collect(),
                        fresh: self.table.name(f2).to_owned(),
                        fresh_rank,
                    });
                    f2
                }
            };
            for (_, node) in &records[i..j] {
                let node = *node;
                let mut keep: Vec<NodeId> = Vec::with_capacity(rank - removed);
                let mut dead: Vec<NodeId> = Vec::with_capacity(removed);
                let mut ai = 0usize;
                for (idx, &ch) in self.tree.children(node).iter().enumerate() {
                    if ai < absorbed.len() && absorbed[ai].0 as usize == idx + 1 {
                        dead.push(ch);
                        ai += 1;
                    } else {
                        keep.push(ch);
                    }
                }
                for ch in dead {
                    self.tree.kill(ch);
                }
                self.tree.set_label(node, fresh);
                self.tree.set_children(node, keep);
                self.touch(1 + rank as u64);
            }
            i = j;
        }
        Ok((intros, outcome))
    }

    /// One full phase; returns its stats and appends the trace.
    pub fn run_phase(&mut self) -> (PhaseStats, PhaseTrace) {
        let phase = self.phases_done;
        let size_start = self.tree.size();
        let (n0, n1, n_ge2) = {
            let mut n = (0usize, 0usize, 0usize);
            for v in self.tree.preorder() {
                match self.tree.arity(v) {
                    0 => n.0 += 1,
                    1 => n.1 += 1,
                    _ => n.2 += 1,
                }
            }
            n
        };
        self.touch(size_start as u64);

        self.rename_letters_to_interval();
        let (chain_intros, chain_outcome, maximal) = self.step_chain(None).expect("chain step");
        let size_after_chain = self.tree.size();

        self.rename_letters_to_interval();
        let partition = self.find_partition();
        let up_names: Vec<String> = partition
            .up
            .iter()
            .map(|&s| self.table.name(s).to_owned())
            .collect();
        let down_names: Vec<String> = partition
            .down
            .iter()
            .map(|&s| self.table.name(s).to_owned())
            .collect();
        let (pair_intros, pair_outcome) = self
            .step_pair(&partition.pair_occurrences, None)
            .expect("pair step");
        let size_after_pair = self.tree.size();

        self.rename_letters_to_interval();
        let (leaf_intros, leaf_outcome) = self.step_leaf(None).expect("leaf step");
        let size_after_leaf = self.tree.size();

        self.phases_done += 1;
        let stats = PhaseStats {
            phase,
            size_start,
            size_after_chain,
            size_after_pair,
            size_after_leaf,
            n0,
            n1,
            n_ge2,
            maximal_chains: maximal,
            fresh_chain_letters: chain_outcome.fresh_letters,
            fresh_pair_letters: pair_outcome.fresh_letters,
            fresh_leaf_letters: leaf_outcome.fresh_letters,
            chain_representation_cost: chain_outcome.representation_cost,
            pair_representation_cost: pair_outcome.representation_cost,
            leaf_representation_cost: leaf_outcome.representation_cost,
            covered_two_chains: partition.covered,
        };
        let trace = PhaseTrace {
            phase,
            chain: chain_intros,
            up: up_names,
            down: down_names,
            pairs: pair_intros,
            leaf: leaf_intros,
        };
        (stats, trace)
    }

    /// Canonical label of the current root (the surviving letter once the
    /// tree has size 1).
    pub fn root_letter(&self) -> SymbolId {
        self.table.canon(self.tree.label(self.tree.root()))
    }

    pub fn into_productions(self) -> Vec<Production> {
        self.productions
    }
}

/// Upper bound on the number of phases for an input of n nodes:
/// ceil(log_{4/3} n) + 1, computed exactly in integers.
pub fn phase_bound(n: usize) -> usize {
    let n = n as u128;
    if n <= 1 {
        return 1;
    }
    let mut p = 0usize;
    let mut four = 1u128;
    let mut three = 1u128;
    while four < n.saturating_mul(three) {
        p += 1;
        four *= 4;
        three *= 3;
    }
    p + 1
}

/// Compress a tree into an equivalent straight-line grammar: iterate phases
/// until a single node remains, then emit the start rule last.
pub fn compress(tree: RankedTree, table: &mut SymbolTable) -> CompressOutput {
    let mut run = CompressionRun::new(tree, table);
    let mut stats = Vec::new();
    let mut traces = Vec::new();
    while run.size() > 1 {
        let (s, t) = run.run_phase();
        debug_assert!(s.size_after_leaf * 4 < s.size_start * 3 || s.size_start <= 1);
        stats.push(s);
        traces.push(t);
    }
    let touches = run.node_touches();
    let root_letter = run.root_letter();
    let productions = run.into_productions();
    let start = table.fresh(Origin::Nonterminal, 0);
    let mut productions = productions;
    productions.push(Production {
        lhs: start,
        rhs: Term::leaf(root_letter),
    });
    CompressOutput {
        grammar: SlcfGrammar::new(productions, start),
        stats,
        traces,
        node_touches: touches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::DEFAULT_NODE_BUDGET;
    use crate::tree::parse_term;

    fn parse(src: &str) -> (RankedTree, SymbolTable) {
        let mut table = SymbolTable::new();
        let t = parse_term(src, &mut table).unwrap();
        (t, table)
    }

    /// Expand a unary letter defined by `productions` into the string of base
    /// letters it derives (independent of the compressor's own eval path).
    fn expand_unary(productions: &[Production], sym: SymbolId) -> Vec<SymbolId> {
        let by_lhs: HashMap<SymbolId, &Production> =
            productions.iter().map(|p| (p.lhs, p)).collect();
        fn go(by_lhs: &HashMap<SymbolId, &Production>, sym: SymbolId, out: &mut Vec<SymbolId>) {
            match by_lhs.get(&sym) {
                None => out.push(sym),
                Some(p) => {
                    // rhs is a unary chain ending in the parameter.
                    let mut at = p.rhs.root();
                    loop {
                        match p.rhs.node(at) {
                            crate::grammar::TermNode::Apply { sym, children } => {
                                go(by_lhs, *sym, out);
                                at = children[0];
                            }
                            crate::grammar::TermNode::Param(_) => break,
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(&by_lhs, sym, &mut out);
        out
    }

    #[test]
    fn rename_maps_to_fresh_contiguous_interval() {
        let mut table = SymbolTable::new();
        // Take up some ids so the used letters are scattered: ids 5, 9, 7.
        for i in 0..10 {
            let rank = if i == 7 { 0 } else { 1 };
            table
                .intern(&format!("sym{i}"), rank, Origin::Input)
                .unwrap();
        }
        let mut t = RankedTree::new();
        let leaf = t.push_node(SymbolId(7), vec![]);
        let mid = t.push_node(SymbolId(9), vec![leaf]);
        let top = t.push_node(SymbolId(5), vec![mid]);
        t.set_root(top);
        let before_len = table.len() as u32;
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let labels: Vec<u32> = run
            .tree()
            .preorder()
            .map(|n| run.tree().label(n).0)
            .collect();
        // First-traversal order 5, 9, 7 maps to consecutive fresh ids.
        assert_eq!(labels, vec![before_len, before_len + 1, before_len + 2]);
        let canon: Vec<u32> = run
            .tree()
            .preorder()
            .map(|n| run.table.canon(run.tree().label(n)).0)
            .collect();
        assert_eq!(canon, vec![5, 9, 7]);
    }

    #[test]
    fn rename_single_letter_interval_of_one() {
        let (t, mut table) = parse("c");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        run.rename_letters_to_interval();
        let l = run.tree().label(run.tree().root());
        assert_eq!(run.table.name(l), "c");
    }

    #[test]
    fn chain_compress_replaces_spine() {
        let (t, mut table) = parse("b(a(a(a(c))))");
        let a = table.lookup("a").unwrap();
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, outcome, maximal) = run.step_chain(None).unwrap();
        assert_eq!(run.size(), 3);
        assert_eq!(maximal, 1);
        assert_eq!(intros.len(), 1);
        assert_eq!(intros[0].letter, "a");
        assert_eq!(intros[0].len, 3);
        assert_eq!(outcome.fresh_letters, 1);
        // The fresh letter derives exactly a^3.
        let prods = run.into_productions();
        let fresh = table.lookup(&intros[0].fresh).unwrap();
        assert_eq!(expand_unary(&prods, fresh), vec![a, a, a]);
        // No node shares its unary label with its child afterwards.
    }

    #[test]
    fn chain_compress_untouched_without_chains() {
        let (t, mut table) = parse("f(a(b(c)),a(b(d)))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, outcome, maximal) = run.step_chain(None).unwrap();
        assert_eq!(run.size(), 7);
        assert!(intros.is_empty());
        assert_eq!(outcome.fresh_letters, 0);
        assert_eq!(maximal, 2);
    }

    #[test]
    fn chain_compress_groups_lengths_in_one_pass() {
        // a^5 over one child of f, a^2 over the other.
        let (t, mut table) = parse("f(a(a(a(a(a(c))))),a(a(d)))");
        let a = table.lookup("a").unwrap();
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, _outcome, _) = run.step_chain(None).unwrap();
        assert_eq!(intros.len(), 2);
        assert_eq!(run.size(), 5);
        let prods = run.into_productions();
        for intro in &intros {
            let fresh = table.lookup(&intro.fresh).unwrap();
            assert_eq!(expand_unary(&prods, fresh), vec![a; intro.len as usize]);
        }
    }

    #[test]
    fn after_chain_compression_no_equal_adjacent_unary() {
        let (t, mut table) = parse("f(a(a(b(b(b(c))))),b(b(a(d))))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        run.step_chain(None).unwrap();
        let tree = run.tree();
        for n in tree.preorder() {
            if tree.arity(n) == 1 {
                let ch = tree.children(n)[0];
                if tree.arity(ch) == 1 {
                    assert_ne!(tree.label(n), tree.label(ch));
                }
            }
        }
    }

    #[test]
    fn represent_a8_costs_six() {
        let mut table = SymbolTable::new();
        let a = table.intern("a", 1, Origin::Input).unwrap();
        let rep = represent_chain_lengths(&mut table, a, &[8]).unwrap();
        assert_eq!(rep.cost, 6);
        assert_eq!(rep.productions.len(), 3);
        assert_eq!(expand_unary(&rep.productions, rep.letters[0].1), vec![a; 8]);
    }

    #[test]
    fn represent_single_length_two() {
        let mut table = SymbolTable::new();
        let a = table.intern("a", 1, Origin::Input).unwrap();
        let rep = represent_chain_lengths(&mut table, a, &[2]).unwrap();
        assert_eq!(rep.cost, 2);
        assert_eq!(rep.productions.len(), 1);
        assert_eq!(expand_unary(&rep.productions, rep.letters[0].1), vec![a; 2]);
    }

    #[test]
    fn represent_lengths_three_five() {
        let mut table = SymbolTable::new();
        let a = table.intern("a", 1, Origin::Input).unwrap();
        let rep = represent_chain_lengths(&mut table, a, &[3, 5]).unwrap();
        for &(l, sym) in &rep.letters {
            assert_eq!(expand_unary(&rep.productions, sym), vec![a; l as usize]);
        }
        // S = k + ceil(log2 3) + ceil(log2 2) = 2 + 2 + 1.
        assert!(rep.cost <= CHAIN_REP_COST_FACTOR * 5);
    }

    #[test]
    fn represent_rejects_bad_lengths() {
        let mut table = SymbolTable::new();
        let a = table.intern("a", 1, Origin::Input).unwrap();
        assert!(represent_chain_lengths(&mut table, a, &[5, 3]).is_err());
        assert!(represent_chain_lengths(&mut table, a, &[3, 3]).is_err());
        assert!(represent_chain_lengths(&mut table, a, &[1]).is_err());
    }

    #[test]
    fn represent_random_lists_expand_correctly_within_budget() {
        let mut rng = crate::generate::SplitMix64::new(0xc0de);
        for _ in 0..200 {
            let mut table = SymbolTable::new();
            let a = table.intern("a", 1, Origin::Input).unwrap();
            let mut lengths: Vec<u64> = (0..1 + rng.below(8)).map(|_| 2 + rng.below(500)).collect();
            lengths.sort_unstable();
            lengths.dedup();
            let rep = represent_chain_lengths(&mut table, a, &lengths).unwrap();
            let mut budget = lengths.len();
            let mut prev = 0u64;
            for &l in &lengths {
                let gap = l - prev;
                budget += 64
                    - gap.max(2).next_power_of_two().leading_zeros() as usize
                    - if gap.max(2).is_power_of_two() { 1 } else { 0 };
                prev = l;
            }
            assert!(
                rep.cost <= CHAIN_REP_COST_FACTOR * budget,
                "cost {} budget {}",
                rep.cost,
                budget
            );
            for &(l, sym) in &rep.letters {
                assert_eq!(expand_unary(&rep.productions, sym), vec![a; l as usize]);
            }
        }
    }

    #[test]
    fn partition_covers_single_two_chain() {
        // The word "ab" as a unary spine; brute force over all four
        // partitions shows the best covers exactly one occurrence.
        let (t, mut table) = parse("a(b(c))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let p = run.find_partition();
        assert_eq!(p.n1, 2);
        assert_eq!(p.c, 1);
        assert_eq!(p.covered, 1);
        assert_eq!(p.pair_occurrences.len(), 1);
        let best = 1; // enumerating {a,b} x {up,down} by hand: only up={a},down={b} covers ab
        assert_eq!(p.covered, best);
    }

    #[test]
    fn partition_empty_without_unary_letters() {
        let (t, mut table) = parse("f(c,c)");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let p = run.find_partition();
        assert!(p.up.is_empty() && p.down.is_empty());
        assert_eq!(p.covered, 0);
        assert_eq!(p.n1, 0);
    }

    #[test]
    fn partition_on_abab_spine_covers_both_ab() {
        let (t, mut table) = parse("a(b(a(b(c))))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let p = run.find_partition();
        assert_eq!(p.n1, 4);
        assert_eq!(p.c, 1);
        // Greedy assigns a up (tie rule), b down; both ab occurrences covered.
        assert_eq!(p.covered, 2);
        let up_names: Vec<&str> = p.up.iter().map(|&s| run.table.name(s)).collect();
        let down_names: Vec<&str> = p.down.iter().map(|&s| run.table.name(s)).collect();
        assert_eq!(up_names, vec!["a"]);
        assert_eq!(down_names, vec!["b"]);
    }

    #[test]
    fn pair_compress_replaces_ab() {
        let (t, mut table) = parse("a(b(d))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let p = run.find_partition();
        let (intros, outcome) = run.step_pair(&p.pair_occurrences, None).unwrap();
        assert_eq!(run.size(), 2);
        assert_eq!(intros.len(), 1);
        assert_eq!(intros[0].up, "a");
        assert_eq!(intros[0].down, "b");
        assert_eq!(outcome.representation_cost, 2);
        // Rule is c(y) -> a(b(y)).
        let prods = run.into_productions();
        assert_eq!(prods.len(), 1);
        assert_eq!(prods[0].size(), 2);
    }

    #[test]
    fn pair_compress_top_of_abc_spine_only() {
        // With up = {a}, down = {b}, the spine abc compresses at the top only.
        let (t, mut table) = parse("a(b(q(d)))");
        let a = table.lookup("a").unwrap();
        let b = table.lookup("b").unwrap();
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let up: HashSet<SymbolId> = [a].into_iter().collect();
        let down: HashSet<SymbolId> = [b].into_iter().collect();
        let occs = run.pair_occurrences_for(&up, &down);
        assert_eq!(occs.len(), 1);
        run.step_pair(&occs, None).unwrap();
        assert_eq!(run.size(), 3);
        let root = run.tree().root();
        let q = run.tree().children(root)[0];
        assert_eq!(run.table.name(run.tree().label(q)), "q");
    }

    #[test]
    fn leaf_compress_constant_children() {
        let (t, mut table) = parse("f(c,c)");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, outcome) = run.step_leaf(None).unwrap();
        assert_eq!(run.size(), 1);
        assert_eq!(intros.len(), 1);
        assert_eq!(intros[0].fresh_rank, 0);
        assert_eq!(outcome.representation_cost, 3);
        let prods = run.into_productions();
        assert_eq!(prods[0].size(), 3);
    }

    #[test]
    fn leaf_compress_two_branches_get_distinct_letters() {
        let (t, mut table) = parse("f(a(b(c)),a(b(d)))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, _) = run.step_leaf(None).unwrap();
        // b over c and b over d absorb different constants: two fresh letters;
        // f itself has no constant children and is untouched.
        assert_eq!(intros.len(), 2);
        assert_eq!(run.size(), 5);
        assert!(intros.iter().all(|i| i.parent == "b"));
        assert!(intros.iter().all(|i| i.fresh_rank == 0));
        assert_ne!(intros[0].absorbed, intros[1].absorbed);
    }

    #[test]
    fn leaf_compress_identical_records_share_letter() {
        let (t, mut table) = parse("g(f(c,a(d)),f(c,a(d)))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, _) = run.step_leaf(None).unwrap();
        // Both f(c, x) occurrences with non-constant x map to the same fresh
        // letter; both a(d) occurrences share one too.
        let f_intros: Vec<_> = intros.iter().filter(|i| i.parent == "f").collect();
        assert_eq!(f_intros.len(), 1);
        assert_eq!(f_intros[0].fresh_rank, 1);
        let a_intros: Vec<_> = intros.iter().filter(|i| i.parent == "a").collect();
        assert_eq!(a_intros.len(), 1);
    }

    #[test]
    fn leaf_compress_snapshot_semantics() {
        // g(f(c)) where f(c) collapses to a constant mid-pass: g must not
        // absorb it in the same pass.
        let (t, mut table) = parse("g(f(c))");
        let mut run = CompressionRun::new(t, &mut table);
        run.rename_letters_to_interval();
        let (intros, _) = run.step_leaf(None).unwrap();
        assert_eq!(intros.len(), 1);
        assert_eq!(intros[0].parent, "f");
        assert_eq!(run.size(), 2);
    }

    #[test]
    fn phase_on_caterpillar() {
        let mut table = SymbolTable::new();
        let t = crate::generate::caterpillar(17, &mut table);
        let mut run = CompressionRun::new(t, &mut table);
        let (stats, _) = run.run_phase();
        assert_eq!(stats.size_start, 17);
        assert!(stats.size_after_leaf <= 2);
        assert!(4 * stats.size_after_leaf < 3 * stats.size_start);
    }

    #[test]
    fn phase_on_full_binary() {
        let mut table = SymbolTable::new();
        let t = crate::generate::full_binary(3, &mut table);
        assert_eq!(t.size(), 15);
        let mut run = CompressionRun::new(t, &mut table);
        let (stats, _) = run.run_phase();
        assert_eq!(stats.size_after_leaf, 7);
    }

    #[test]
    fn phase_on_two_nodes() {
        let (t, mut table) = parse("a(c)");
        let mut run = CompressionRun::new(t, &mut table);
        let (stats, _) = run.run_phase();
        assert_eq!(stats.size_after_leaf, 1);
    }

    #[test]
    fn compress_single_constant() {
        let (t, mut table) = parse("c");
        let out = compress(t, &mut table);
        assert_eq!(out.grammar.size(), 1);
        assert!(out.stats.is_empty());
        let t2 = out.grammar.eval(DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(crate::tree::serialize_term(&t2, &table), "c");
    }

    #[test]
    fn compress_roundtrips_examples() {
        for src in [
            "c",
            "a(c)",
            "f(c,c)",
            "b(a(a(a(c))))",
            "f(a(b(c)),a(b(d)))",
            "g(f(c,a(d)),f(c,a(d)))",
            "h(p(a(b(b(c))),x(y(z))),c,a(b(c)))",
        ] {
            let mut table = SymbolTable::new();
            let t = parse_term(src, &mut table).unwrap();
            let orig = t.clone();
            let out = compress(t, &mut table);
            out.grammar.validate(&table).unwrap();
            let back = out.grammar.eval(DEFAULT_NODE_BUDGET).unwrap();
            assert!(
                back.structural_eq(&orig, &table),
                "roundtrip failed for {src}"
            );
        }
    }

    #[test]
    fn compress_doubling_spine_gives_logarithmic_grammar() {
        // The word (ab)^1024 over a constant: 2049 nodes.
        let mut src = String::new();
        for _ in 0..1024 {
            src.push_str("a(b(");
        }
        src.push('d');
        for _ in 0..1024 {
            src.push_str("))");
        }
        let mut table = SymbolTable::new();
        let t = parse_term(&src, &mut table).unwrap();
        let orig = t.clone();
        let n = t.size();
        let out = compress(t, &mut table);
        out.grammar.validate(&table).unwrap();
        let back = out.grammar.eval(DEFAULT_NODE_BUDGET).unwrap();
        assert!(back.structural_eq(&orig, &table));
        assert!(
            out.grammar.size() <= 200,
            "grammar size {}",
            out.grammar.size()
        );
        // Phase count within ceil(log_{4/3} n) + 1.
        let bound = crate::compressor::phase_bound(n);
        assert!(
            out.stats.len() <= bound,
            "{} phases for n={n}",
            out.stats.len()
        );
    }

    #[test]
    fn compress_random_trees_roundtrip() {
        let mut rng = crate::generate::SplitMix64::new(77);
        for i in 0..60 {
            let mut table = SymbolTable::new();
            let size = 1 + rng.below(400) as usize;
            let t = crate::generate::random_tree(&mut rng, size, 4, &mut table);
            let orig = t.clone();
            let out = compress(t, &mut table);
            out.grammar.validate(&table).unwrap();
            let back = out.grammar.eval(DEFAULT_NODE_BUDGET).unwrap();
            assert!(back.structural_eq(&orig, &table), "case {i} size {size}");
            for s in &out.stats {
                if s.size_start > 1 {
                    assert!(4 * s.size_after_leaf < 3 * s.size_start);
                }
            }
        }
    }

    #[test]
    fn cleanup_bound_on_compressed_random_tree() {
        let mut rng = crate::generate::SplitMix64::new(5);
        let mut table = SymbolTable::new();
        let t = crate::generate::random_tree(&mut rng, 100, 4, &mut table);
        let orig = t.clone();
        let out = compress(t, &mut table);
        let cleaned = out.grammar.cleanup_reasonable();
        cleaned.validate(&table).unwrap();
        let back = cleaned.eval(DEFAULT_NODE_BUDGET).unwrap();
        assert!(back.structural_eq(&orig, &table));
        assert!(cleaned.size() <= 199, "cleaned size {}", cleaned.size());
    }

    #[test]
    fn fresh_ranks_never_exceed_input_max_rank() {
        let mut rng = crate::generate::SplitMix64::new(11);
        for _ in 0..20 {
            let mut table = SymbolTable::new();
            let t = crate::generate::random_tree(&mut rng, 200, 3, &mut table);
            let before = table.len();
            let _ = compress(t, &mut table);
            for i in before..table.len() {
                assert!(table.rank(SymbolId(i as u32)) <= 3);
            }
        }
    }
}
