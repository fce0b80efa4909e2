//! Verification oracle for a compression run: a handle grammar G is kept in
//! sync with the compressor's tree T by replaying every compression step on
//! G's right-hand sides, with prior uncrossing (Pop before pair compression,
//! RemCrChains before chain compression, GenPop before leaf compression).
//! After every step eval(G) must equal T exactly; the structural invariants
//! GR1-GR5 and the popped-letter counters (the observable stand-in for the
//! credit accounting) are checked as well.

use crate::compressor::{
    ChainIntro, CompressError, CompressionRun, LeafKey, PhaseTrace, ResolvedTrace,
};
use crate::grammar::DEFAULT_NODE_BUDGET;
use crate::handle::{Arm, ArmEnd, HItem, HRhs, HRule, Handle, HandleGrammar, Tail};
use crate::symbol::{Origin, SymbolId, SymbolTable};
use crate::tree::RankedTree;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("eval(G) diverged from T in phase {phase} after the {step} step")]
    Diverged { phase: usize, step: &'static str },
    #[error("grammar invariant violated: {0}")]
    Invariant(String),
    #[error("marked nonterminal `{0}` does not end with a handle")]
    MarkedRuleWithoutHandle(String),
    #[error(transparent)]
    Replay(#[from] CompressError),
    #[error("initial grammar does not derive the initial tree")]
    InitialMismatch,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NtClass {
    N0,
    N1,
    Ntilde0,
}

#[derive(Clone, Copy, Debug)]
pub struct Counters {
    pub g0: usize,
    pub g1: usize,
    pub g0_tilde: usize,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub phase: usize,
    pub step: &'static str,
    /// Credit issued by the uncrossing procedure (2 units per materialized
    /// letter occurrence; for chain uncrossing 2 per popped run).
    pub issued: u64,
    /// Bound checked against (0 when no per-call bound applies).
    pub bound: u64,
    pub counters: Counters,
    pub synced: bool,
}

/// A handle grammar tracked alongside a (replayed) compression run on the
/// tree it derives.
pub struct TrackedPair<'t> {
    pub run: CompressionRun<'t>,
    pub grammar: HandleGrammar,
    classes: HashMap<SymbolId, NtClass>,
    n1_initial: usize,
    max_rank: usize,
    prev: Counters,
    pub reports: Vec<StepReport>,
    phase: usize,
}

impl<'t> TrackedPair<'t> {
    pub fn new(
        tree: RankedTree,
        grammar: HandleGrammar,
        table: &'t mut SymbolTable,
    ) -> Result<Self, SimulateError> {
        let mut max_rank = 1usize;
        for n in tree.preorder() {
            max_rank = max_rank.max(tree.arity(n));
        }
        for r in &grammar.rules {
            for item in &r.rhs.items {
                if let HItem::Handle(h) = item {
                    max_rank = max_rank.max(table.rank(h.head) as usize);
                }
            }
        }
        let mut classes = HashMap::new();
        for r in &grammar.rules {
            let class = if table.rank(r.lhs) == 1 {
                NtClass::N1
            } else {
                NtClass::N0
            };
            classes.insert(r.lhs, class);
        }
        let run = CompressionRun::replay(tree, table);
        let mut tp = TrackedPair {
            run,
            grammar,
            classes,
            n1_initial: 0,
            max_rank,
            prev: Counters {
                g0: usize::MAX,
                g1: usize::MAX,
                g0_tilde: 0,
            },
            reports: Vec::new(),
            phase: 0,
        };
        let c = tp.counters();
        tp.n1_initial = c.g1;
        tp.prev = c;
        if !tp.synced() {
            return Err(SimulateError::InitialMismatch);
        }
        tp.check_invariants()?;
        Ok(tp)
    }

    pub fn counters(&self) -> Counters {
        let occ = self.grammar.occurrence_counts();
        let mut c = Counters {
            g0: 0,
            g1: 0,
            g0_tilde: 0,
        };
        for (sym, n) in occ {
            match self.classes.get(&sym) {
                Some(NtClass::N0) => c.g0 += n,
                Some(NtClass::N1) => c.g1 += n,
                Some(NtClass::Ntilde0) => c.g0_tilde += n,
                None => {}
            }
        }
        c
    }

    pub fn synced(&self) -> bool {
        let slcf = self.grammar.to_slcf(self.run.table);
        match slcf.eval(DEFAULT_NODE_BUDGET) {
            Ok(t) => t.structural_eq(self.run.tree(), self.run.table),
            Err(_) => false,
        }
    }

    /// GR1 (handle shapes), GR3 (g0, g1 never increase), GR4 (occurrence
    /// bound for the fresh rank-0 nonterminals), GR5 (their rule shapes).
    pub fn check_invariants(&mut self) -> Result<(), SimulateError> {
        {
            let table: &SymbolTable = self.run.table;
            for r in &self.grammar.rules {
                let name = table.name(r.lhs);
                let rank = table.rank(r.lhs);
                if rank > 1 {
                    return Err(SimulateError::Invariant(format!(
                        "`{name}` has rank {rank}"
                    )));
                }
                if (rank == 1) != r.rhs.tail.is_none() {
                    return Err(SimulateError::Invariant(format!(
                        "`{name}`: tail presence does not match rank"
                    )));
                }
                if rank == 1 && r.rhs.items.is_empty() {
                    return Err(SimulateError::Invariant(format!(
                        "`{name}`: empty rank-1 rule"
                    )));
                }
                let nt1 = r.rhs.nt1_count();
                if (rank == 1 && nt1 > 2) || (rank == 0 && nt1 > 1) {
                    return Err(SimulateError::Invariant(format!(
                        "`{name}`: {nt1} rank-1 nonterminal occurrences"
                    )));
                }
                for item in &r.rhs.items {
                    match item {
                        HItem::Nt1(s) => {
                            if table.rank(*s) != 1 || !self.grammar.is_nonterminal(*s) {
                                return Err(SimulateError::Invariant(format!(
                                    "`{name}`: bad rank-1 occurrence"
                                )));
                            }
                        }
                        HItem::Handle(h) => {
                            if table.rank(h.head) as usize != h.arms.len() + 1 {
                                return Err(SimulateError::Invariant(format!(
                                    "`{name}`: handle head arity mismatch"
                                )));
                            }
                            for arm in &h.arms {
                                for &u in &arm.chain {
                                    if table.rank(u) != 1 {
                                        return Err(SimulateError::Invariant(format!(
                                            "`{name}`: non-unary chain letter in arm"
                                        )));
                                    }
                                }
                                if table.rank(arm.end.symbol()) != 0 {
                                    return Err(SimulateError::Invariant(format!(
                                        "`{name}`: arm end of positive rank"
                                    )));
                                }
                            }
                        }
                    }
                }
                if let Some(t) = &r.rhs.tail {
                    if table.rank(t.symbol()) != 0 {
                        return Err(SimulateError::Invariant(format!(
                            "`{name}`: tail of positive rank"
                        )));
                    }
                }
                if self.classes.get(&r.lhs) == Some(&NtClass::Ntilde0) {
                    let gr5 = r
                        .rhs
                        .items
                        .iter()
                        .all(|i| matches!(i, HItem::Handle(h) if h.is_bare_unary()))
                        && r.rhs.tail.is_some();
                    if !gr5 {
                        return Err(SimulateError::Invariant(format!(
                            "`{name}`: fresh rank-0 rule not of shape w A or w c"
                        )));
                    }
                }
            }
        }
        let c = self.counters();
        if c.g0 > self.prev.g0 || c.g1 > self.prev.g1 {
            return Err(SimulateError::Invariant(format!(
                "occurrence counters increased: g0 {} -> {}, g1 {} -> {}",
                self.prev.g0, c.g0, self.prev.g1, c.g1
            )));
        }
        if c.g0_tilde > self.n1_initial * self.max_rank.saturating_sub(1) {
            return Err(SimulateError::Invariant(format!(
                "{} fresh rank-0 occurrences exceed n1 (r - 1) = {}",
                c.g0_tilde,
                self.n1_initial * self.max_rank.saturating_sub(1)
            )));
        }
        self.prev = c;
        Ok(())
    }

    fn canon(&self, s: SymbolId) -> SymbolId {
        self.run.table.canon(s)
    }

    /// Replace every occurrence of the rank-1 nonterminal `target` by the
    /// given item sequence; returns the occurrence count.
    fn subst_nt1(grammar: &mut HandleGrammar, target: SymbolId, with: &[HItem]) -> usize {
        let mut occurrences = 0;
        for r in &mut grammar.rules {
            if r.rhs
                .items
                .iter()
                .any(|i| matches!(i, HItem::Nt1(s) if *s == target))
            {
                let mut items = Vec::with_capacity(r.rhs.items.len() + with.len());
                for item in r.rhs.items.drain(..) {
                    match item {
                        HItem::Nt1(s) if s == target => {
                            occurrences += 1;
                            items.extend(with.iter().cloned());
                        }
                        other => items.push(other),
                    }
                }
                r.rhs.items = items;
            }
        }
        occurrences
    }

    /// Replace every occurrence of the rank-0 nonterminal `target` (tails and
    /// arm ends) by a unary prefix followed by `end` (or by `target` itself
    /// when `end` is None). Returns the occurrence count.
    fn subst_nt0(
        grammar: &mut HandleGrammar,
        target: SymbolId,
        prefix: &[SymbolId],
        end: Option<&ArmEnd>,
    ) -> usize {
        let mut occurrences = 0;
        for r in &mut grammar.rules {
            for item in &mut r.rhs.items {
                if let HItem::Handle(h) = item {
                    for arm in &mut h.arms {
                        if matches!(arm.end, ArmEnd::Nt0(s) if s == target) {
                            occurrences += 1;
                            arm.chain.extend_from_slice(prefix);
                            if let Some(e) = end {
                                arm.end = e.clone();
                            }
                        }
                    }
                }
            }
            if matches!(r.rhs.tail, Some(Tail::Nt0(s)) if s == target) {
                occurrences += 1;
                r.rhs
                    .items
                    .extend(prefix.iter().map(|&u| HItem::Handle(Handle::unary(u))));
                if let Some(e) = end {
                    r.rhs.tail = Some(match e {
                        ArmEnd::Const(c) => Tail::Const(*c),
                        ArmEnd::Nt0(d) => Tail::Nt0(*d),
                    });
                }
            }
        }
        occurrences
    }

    fn first_bare_letter(rhs: &HRhs) -> Option<SymbolId> {
        match rhs.items.first() {
            Some(HItem::Handle(h)) if h.is_bare_unary() => Some(h.head),
            _ => None,
        }
    }

    fn last_bare_letter(rhs: &HRhs) -> Option<SymbolId> {
        match rhs.items.last() {
            Some(HItem::Handle(h)) if h.is_bare_unary() => Some(h.head),
            _ => None,
        }
    }

    /// Pop: uncross all 2-chains from up x down. A letter from `down` at the
    /// front of a rule is popped up, a letter from `up` at the end of a
    /// rank-1 rule is popped down; rules reduced to a single letter are
    /// eliminated. Returns the issued credit (2 per materialized letter).
    pub fn pop(
        &mut self,
        up: &HashSet<SymbolId>,
        down: &HashSet<SymbolId>,
    ) -> Result<u64, SimulateError> {
        let mut issued = 0u64;
        let mut idx = 0usize;
        while idx + 1 < self.grammar.rules.len() {
            let lhs = self.grammar.rules[idx].lhs;
            let rank = self.run.table.rank(lhs);
            if let Some(b) = Self::first_bare_letter(&self.grammar.rules[idx].rhs) {
                if down.contains(&self.canon(b)) {
                    if rank == 1 && self.grammar.rules[idx].rhs.items.len() == 1 {
                        self.grammar.rules.remove(idx);
                        let occ = Self::subst_nt1(
                            &mut self.grammar,
                            lhs,
                            &[HItem::Handle(Handle::unary(b))],
                        );
                        issued += 2 * occ as u64;
                        continue;
                    }
                    self.grammar.rules[idx].rhs.items.remove(0);
                    if rank == 1 {
                        let occ = Self::subst_nt1(
                            &mut self.grammar,
                            lhs,
                            &[HItem::Handle(Handle::unary(b)), HItem::Nt1(lhs)],
                        );
                        issued += 2 * occ as u64;
                    } else {
                        let occ = Self::subst_nt0(&mut self.grammar, lhs, &[b], None);
                        issued += 2 * occ as u64;
                    }
                }
            }
            if rank == 1 {
                if let Some(a) = Self::last_bare_letter(&self.grammar.rules[idx].rhs) {
                    if up.contains(&self.canon(a)) {
                        if self.grammar.rules[idx].rhs.items.len() == 1 {
                            self.grammar.rules.remove(idx);
                            let occ = Self::subst_nt1(
                                &mut self.grammar,
                                lhs,
                                &[HItem::Handle(Handle::unary(a))],
                            );
                            issued += 2 * occ as u64;
                            continue;
                        }
                        self.grammar.rules[idx].rhs.items.pop();
                        let occ = Self::subst_nt1(
                            &mut self.grammar,
                            lhs,
                            &[HItem::Nt1(lhs), HItem::Handle(Handle::unary(a))],
                        );
                        issued += 2 * occ as u64;
                    }
                }
            }
            idx += 1;
        }
        Ok(issued)
    }

    /// RemCrChains: pop the full leading run of the first letter (and, for
    /// rank 1, the trailing run of the last letter) so that no unary letter
    /// has a crossing chain. Earlier pops materialize prefixes explicitly,
    /// so the leading run of a rule is exactly the prefix of its evaluation.
    pub fn rem_cr_chains(&mut self) -> Result<u64, SimulateError> {
        let mut issued = 0u64;
        let mut idx = 0usize;
        while idx + 1 < self.grammar.rules.len() {
            let lhs = self.grammar.rules[idx].lhs;
            let rank = self.run.table.rank(lhs);
            if let Some(a) = Self::first_bare_letter(&self.grammar.rules[idx].rhs) {
                let rhs = &self.grammar.rules[idx].rhs;
                let mut p = 0usize;
                while p < rhs.items.len() {
                    match &rhs.items[p] {
                        HItem::Handle(h) if h.is_bare_unary() && h.head == a => p += 1,
                        _ => break,
                    }
                }
                if rank == 1 && p == self.grammar.rules[idx].rhs.items.len() {
                    self.grammar.rules.remove(idx);
                    let with: Vec<HItem> =
                        (0..p).map(|_| HItem::Handle(Handle::unary(a))).collect();
                    let occ = Self::subst_nt1(&mut self.grammar, lhs, &with);
                    issued += 2 * occ as u64;
                    continue;
                }
                self.grammar.rules[idx].rhs.items.drain(..p);
                if rank == 1 {
                    let mut with: Vec<HItem> =
                        (0..p).map(|_| HItem::Handle(Handle::unary(a))).collect();
                    with.push(HItem::Nt1(lhs));
                    let occ = Self::subst_nt1(&mut self.grammar, lhs, &with);
                    issued += 2 * occ as u64;
                } else {
                    let prefix = vec![a; p];
                    let occ = Self::subst_nt0(&mut self.grammar, lhs, &prefix, None);
                    issued += 2 * occ as u64;
                }
            }
            if rank == 1 {
                if let Some(b) = Self::last_bare_letter(&self.grammar.rules[idx].rhs) {
                    let rhs = &self.grammar.rules[idx].rhs;
                    let mut s = 0usize;
                    while s < rhs.items.len() {
                        let at = rhs.items.len() - 1 - s;
                        match &rhs.items[at] {
                            HItem::Handle(h) if h.is_bare_unary() && h.head == b => s += 1,
                            _ => break,
                        }
                    }
                    if s == self.grammar.rules[idx].rhs.items.len() {
                        self.grammar.rules.remove(idx);
                        let with: Vec<HItem> =
                            (0..s).map(|_| HItem::Handle(Handle::unary(b))).collect();
                        let occ = Self::subst_nt1(&mut self.grammar, lhs, &with);
                        issued += 2 * occ as u64;
                        continue;
                    }
                    let keep = self.grammar.rules[idx].rhs.items.len() - s;
                    self.grammar.rules[idx].rhs.items.truncate(keep);
                    let mut with = vec![HItem::Nt1(lhs)];
                    with.extend((0..s).map(|_| HItem::Handle(Handle::unary(b))));
                    let occ = Self::subst_nt1(&mut self.grammar, lhs, &with);
                    issued += 2 * occ as u64;
                }
            }
            idx += 1;
        }
        Ok(issued)
    }

    /// GenPop: eliminate nonterminals deriving bare constants, then pop the
    /// trailing handle from every marked rank-1 nonterminal, introducing
    /// fresh rank-0 nonterminals for the handle's non-constant children.
    pub fn gen_pop(&mut self) -> Result<u64, SimulateError> {
        let mut issued = 0u64;
        let mut idx = 0usize;
        while idx + 1 < self.grammar.rules.len() {
            let r = &self.grammar.rules[idx];
            let is_bare_const = self.run.table.rank(r.lhs) == 0
                && r.rhs.items.is_empty()
                && matches!(r.rhs.tail, Some(Tail::Const(_)));
            if is_bare_const {
                let lhs = r.lhs;
                let a = match r.rhs.tail.as_ref().unwrap() {
                    Tail::Const(a) => *a,
                    Tail::Nt0(_) => unreachable!(),
                };
                self.grammar.rules.remove(idx);
                let occ = Self::subst_nt0(&mut self.grammar, lhs, &[], Some(&ArmEnd::Const(a)));
                issued += 2 * occ as u64;
                continue;
            }
            idx += 1;
        }

        // Marking: a rank-1 nonterminal applied directly to a constant needs
        // to pop down a handle, and so does the trailing nonterminal of any
        // marked rule (descending order propagates transitively).
        let mut marked: HashSet<SymbolId> = HashSet::new();
        for r in &self.grammar.rules {
            if matches!(r.rhs.tail, Some(Tail::Const(_))) {
                if let Some(HItem::Nt1(s)) = r.rhs.items.last() {
                    marked.insert(*s);
                }
            }
        }
        for idx in (0..self.grammar.rules.len().saturating_sub(1)).rev() {
            let r = &self.grammar.rules[idx];
            if marked.contains(&r.lhs) {
                if let Some(HItem::Nt1(s)) = r.rhs.items.last() {
                    marked.insert(*s);
                }
            }
        }

        let mut idx = 0usize;
        while idx + 1 < self.grammar.rules.len() {
            let lhs = self.grammar.rules[idx].lhs;
            if !marked.contains(&lhs) {
                idx += 1;
                continue;
            }
            let handle = match self.grammar.rules[idx].rhs.items.pop() {
                Some(HItem::Handle(h)) => h,
                other => {
                    if let Some(item) = other {
                        self.grammar.rules[idx].rhs.items.push(item);
                    }
                    return Err(SimulateError::MarkedRuleWithoutHandle(
                        self.run.table.name(lhs).to_owned(),
                    ));
                }
            };
            let mut gammas: Vec<Arm> = Vec::with_capacity(handle.arms.len());
            let mut fresh_rules: Vec<HRule> = Vec::new();
            for arm in &handle.arms {
                if arm.chain.is_empty() {
                    if let ArmEnd::Const(c) = arm.end {
                        gammas.push(Arm {
                            chain: vec![],
                            end: ArmEnd::Const(c),
                        });
                        continue;
                    }
                }
                let fresh = self.run.table.fresh(Origin::Nonterminal, 0);
                self.classes.insert(fresh, NtClass::Ntilde0);
                fresh_rules.push(HRule {
                    lhs: fresh,
                    rhs: HRhs {
                        items: arm
                            .chain
                            .iter()
                            .map(|&u| HItem::Handle(Handle::unary(u)))
                            .collect(),
                        tail: Some(match arm.end {
                            ArmEnd::Const(c) => Tail::Const(c),
                            ArmEnd::Nt0(d) => Tail::Nt0(d),
                        }),
                    },
                });
                gammas.push(Arm {
                    chain: vec![],
                    end: ArmEnd::Nt0(fresh),
                });
            }
            let popped = Handle {
                head: handle.head,
                hole: handle.hole,
                arms: gammas,
            };
            let letters = popped.letter_count() as u64;
            let rule_now_empty = self.grammar.rules[idx].rhs.items.is_empty();
            if rule_now_empty {
                // A marked rule that was a single handle: eliminate it and
                // substitute the popped handle directly.
                self.grammar.rules.remove(idx);
            }
            let fresh_count = fresh_rules.len();
            let insert_at = if rule_now_empty { idx } else { idx + 1 };
            for (k, fr) in fresh_rules.into_iter().enumerate() {
                self.grammar.rules.insert(insert_at + k, fr);
            }
            let with: Vec<HItem> = if rule_now_empty {
                vec![HItem::Handle(popped)]
            } else {
                vec![HItem::Nt1(lhs), HItem::Handle(popped)]
            };
            let occ = Self::subst_nt1(&mut self.grammar, lhs, &with);
            issued += 2 * letters * occ as u64;
            if !rule_now_empty {
                idx += 1 + fresh_count;
            } else {
                idx += fresh_count;
            }
        }
        Ok(issued)
    }

    /// TreeChainComp on every right-hand side.
    fn g_chain_comp(
        &mut self,
        chain: &HashMap<(SymbolId, u64), SymbolId>,
    ) -> Result<(), CompressError> {
        let table: &SymbolTable = self.run.table;
        for r in &mut self.grammar.rules {
            let old: Vec<HItem> = r.rhs.items.drain(..).collect();
            let mut items: Vec<HItem> = Vec::with_capacity(old.len());
            let mut i = 0usize;
            while i < old.len() {
                match &old[i] {
                    HItem::Handle(h) if h.is_bare_unary() => {
                        let a = h.head;
                        let mut j = i;
                        while j < old.len() {
                            match &old[j] {
                                HItem::Handle(g) if g.is_bare_unary() && g.head == a => j += 1,
                                _ => break,
                            }
                        }
                        if j - i >= 2 {
                            let fresh =
                                chain
                                    .get(&(table.canon(a), (j - i) as u64))
                                    .ok_or_else(|| {
                                        CompressError::ReplayMiss(format!(
                                            "grammar chain ({}, {})",
                                            table.name(a),
                                            j - i
                                        ))
                                    })?;
                            items.push(HItem::Handle(Handle::unary(*fresh)));
                        } else {
                            items.push(old[i].clone());
                        }
                        i = j;
                    }
                    other => {
                        items.push(other.clone());
                        i += 1;
                    }
                }
            }
            r.rhs.items = items;
            for item in &mut r.rhs.items {
                if let HItem::Handle(h) = item {
                    for arm in &mut h.arms {
                        let mut out: Vec<SymbolId> = Vec::with_capacity(arm.chain.len());
                        let mut i = 0usize;
                        while i < arm.chain.len() {
                            let a = arm.chain[i];
                            let mut j = i;
                            while j < arm.chain.len() && arm.chain[j] == a {
                                j += 1;
                            }
                            if j - i >= 2 {
                                let fresh = chain
                                    .get(&(table.canon(a), (j - i) as u64))
                                    .ok_or_else(|| {
                                        CompressError::ReplayMiss(format!(
                                            "grammar chain in arm ({}, {})",
                                            table.name(a),
                                            j - i
                                        ))
                                    })?;
                                out.push(*fresh);
                            } else {
                                out.push(a);
                            }
                            i = j;
                        }
                        arm.chain = out;
                    }
                }
            }
        }
        Ok(())
    }

    /// TreeUnaryComp on every right-hand side.
    fn g_pair_comp(
        &mut self,
        up: &HashSet<SymbolId>,
        down: &HashSet<SymbolId>,
        pairs: &HashMap<(SymbolId, SymbolId), SymbolId>,
    ) -> Result<(), CompressError> {
        let table: &SymbolTable = self.run.table;
        for r in &mut self.grammar.rules {
            let old: Vec<HItem> = r.rhs.items.drain(..).collect();
            let mut items: Vec<HItem> = Vec::with_capacity(old.len());
            let mut i = 0usize;
            while i < old.len() {
                let bare = |it: &HItem| match it {
                    HItem::Handle(h) if h.is_bare_unary() => Some(h.head),
                    _ => None,
                };
                if let (Some(a), Some(b)) = (bare(&old[i]), old.get(i + 1).and_then(bare)) {
                    let (ca, cb) = (table.canon(a), table.canon(b));
                    if up.contains(&ca) && down.contains(&cb) {
                        let fresh = pairs.get(&(ca, cb)).ok_or_else(|| {
                            CompressError::ReplayMiss(format!(
                                "grammar pair ({}, {})",
                                table.name(a),
                                table.name(b)
                            ))
                        })?;
                        items.push(HItem::Handle(Handle::unary(*fresh)));
                        i += 2;
                        continue;
                    }
                }
                items.push(old[i].clone());
                i += 1;
            }
            r.rhs.items = items;
            for item in &mut r.rhs.items {
                if let HItem::Handle(h) = item {
                    for arm in &mut h.arms {
                        let mut out: Vec<SymbolId> = Vec::with_capacity(arm.chain.len());
                        let mut i = 0usize;
                        while i < arm.chain.len() {
                            if i + 1 < arm.chain.len() {
                                let (ca, cb) =
                                    (table.canon(arm.chain[i]), table.canon(arm.chain[i + 1]));
                                if up.contains(&ca) && down.contains(&cb) {
                                    let fresh = pairs.get(&(ca, cb)).ok_or_else(|| {
                                        CompressError::ReplayMiss(format!(
                                            "grammar pair in arm ({}, {})",
                                            table.name(arm.chain[i]),
                                            table.name(arm.chain[i + 1])
                                        ))
                                    })?;
                                    out.push(*fresh);
                                    i += 2;
                                    continue;
                                }
                            }
                            out.push(arm.chain[i]);
                            i += 1;
                        }
                        arm.chain = out;
                    }
                }
            }
        }
        Ok(())
    }

    /// TreeLeafComp on every right-hand side; all absorption decisions are
    /// taken against the scan-time rule so that children becoming constants
    /// mid-pass are untouched.
    fn g_leaf_comp(&mut self, leaf: &HashMap<LeafKey, SymbolId>) -> Result<(), CompressError> {
        for ri in 0..self.grammar.rules.len() {
            let (old_items, old_tail) = {
                let r = &self.grammar.rules[ri];
                (r.rhs.items.clone(), r.rhs.tail.clone())
            };
            let mut items: Vec<HItem> = Vec::with_capacity(old_items.len());
            let mut tail = old_tail.clone();
            let last = old_items.len();
            for (i, item) in old_items.into_iter().enumerate() {
                let hole_const = if i + 1 == last {
                    match &old_tail {
                        Some(Tail::Const(c)) => Some(*c),
                        _ => None,
                    }
                } else {
                    None
                };
                match item {
                    HItem::Nt1(s) => items.push(HItem::Nt1(s)),
                    HItem::Handle(h) => {
                        let (mut new_items, new_tail) =
                            leaf_compress_handle(h, hole_const, leaf, self.run.table)?;
                        items.append(&mut new_items);
                        if let Some(t) = new_tail {
                            tail = Some(t);
                        }
                    }
                }
            }
            let r = &mut self.grammar.rules[ri];
            r.rhs.items = items;
            r.rhs.tail = tail;
        }
        Ok(())
    }

    fn check_sync(&self, step: &'static str) -> Result<(), SimulateError> {
        if self.synced() {
            Ok(())
        } else {
            Err(SimulateError::Diverged {
                phase: self.phase,
                step,
            })
        }
    }

    fn report(&mut self, step: &'static str, issued: u64, bound: u64) {
        let counters = self.counters();
        let synced = self.synced();
        self.reports.push(StepReport {
            phase: self.phase,
            step,
            issued,
            bound,
            counters,
            synced,
        });
    }

    /// Replay one full phase (chain, pair, leaf) on both sides. With a
    /// recorded `external` trace the tree side also replays from the tables;
    /// otherwise the tree side generates the fresh letters itself.
    pub fn simulate_phase(&mut self, external: Option<&PhaseTrace>) -> Result<(), SimulateError> {
        let resolved: Option<ResolvedTrace> = match external {
            Some(t) => Some(t.resolve(self.run.table)?),
            None => None,
        };

        // Chain compression.
        self.run.rename_letters_to_interval();
        let chain_map: HashMap<(SymbolId, u64), SymbolId> = match &resolved {
            Some(rt) => {
                self.run.step_chain(Some(rt))?;
                rt.chain.clone()
            }
            None => {
                let (intros, _, _) = self.run.step_chain(None)?;
                self.resolve_chain_intros(&intros)
            }
        };
        let issued = self.rem_cr_chains()?;
        self.g_chain_comp(&chain_map)?;
        self.check_sync("chain")?;
        self.check_invariants()?;
        self.report("chain", issued, 0);

        // Pair compression.
        self.run.rename_letters_to_interval();
        let (up, down, pair_map) = match &resolved {
            Some(rt) => {
                let occs = self.run.pair_occurrences_for(&rt.up, &rt.down);
                self.run.step_pair(&occs, Some(rt))?;
                (rt.up.clone(), rt.down.clone(), rt.pairs.clone())
            }
            None => {
                let partition = self.run.find_partition();
                let up: HashSet<SymbolId> = partition.up.iter().map(|&s| self.canon(s)).collect();
                let down: HashSet<SymbolId> =
                    partition.down.iter().map(|&s| self.canon(s)).collect();
                let (intros, _) = self.run.step_pair(&partition.pair_occurrences, None)?;
                let mut map = HashMap::new();
                for p in &intros {
                    let a = self.run.table.lookup(&p.up).expect("trace letter");
                    let b = self.run.table.lookup(&p.down).expect("trace letter");
                    let f = self.run.table.lookup(&p.fresh).expect("trace letter");
                    map.insert((self.canon(a), self.canon(b)), self.canon(f));
                }
                (up, down, map)
            }
        };
        let before = self.counters();
        let issued = self.pop(&up, &down)?;
        let bound = 4 * before.g1 as u64 + 2 * before.g0 as u64 + 2 * before.g0_tilde as u64;
        if issued > bound {
            return Err(SimulateError::Invariant(format!(
                "pop issued {issued} credit, bound {bound}"
            )));
        }
        self.g_pair_comp(&up, &down, &pair_map)?;
        self.check_sync("pair")?;
        self.check_invariants()?;
        self.report("pair", issued, bound);

        // Leaf compression.
        self.run.rename_letters_to_interval();
        let leaf_map: HashMap<LeafKey, SymbolId> = match &resolved {
            Some(rt) => {
                self.run.step_leaf(Some(rt))?;
                rt.leaf.clone()
            }
            None => {
                let (intros, _) = self.run.step_leaf(None)?;
                let mut map = HashMap::new();
                for l in &intros {
                    let parent = self.run.table.lookup(&l.parent).expect("trace letter");
                    let fresh = self.run.table.lookup(&l.fresh).expect("trace letter");
                    let absorbed: Vec<(u32, SymbolId)> = l
                        .absorbed
                        .iter()
                        .map(|(pos, name)| {
                            (
                                *pos,
                                self.canon(self.run.table.lookup(name).expect("trace letter")),
                            )
                        })
                        .collect();
                    map.insert((self.canon(parent), absorbed), self.canon(fresh));
                }
                map
            }
        };
        let before = self.counters();
        let issued = self.gen_pop()?;
        let bound = 2 * before.g1 as u64 * self.max_rank as u64
            + 2 * before.g0 as u64
            + 2 * before.g0_tilde as u64;
        if issued > bound {
            return Err(SimulateError::Invariant(format!(
                "gen_pop issued {issued} credit, bound {bound}"
            )));
        }
        self.g_leaf_comp(&leaf_map)?;
        self.check_sync("leaf")?;
        self.check_invariants()?;
        self.report("leaf", issued, bound);

        self.phase += 1;
        Ok(())
    }

    fn resolve_chain_intros(&self, intros: &[ChainIntro]) -> HashMap<(SymbolId, u64), SymbolId> {
        let mut map = HashMap::new();
        for c in intros {
            let letter = self.run.table.lookup(&c.letter).expect("trace letter");
            let fresh = self.run.table.lookup(&c.fresh).expect("trace letter");
            map.insert((self.canon(letter), c.len), self.canon(fresh));
        }
        map
    }

    /// Replay phases until the tree is a single node or `max_phases` is hit.
    pub fn simulate(&mut self, max_phases: usize) -> Result<usize, SimulateError> {
        let mut phases = 0;
        while self.run.size() > 1 && phases < max_phases {
            self.simulate_phase(None)?;
            phases += 1;
        }
        Ok(phases)
    }
}

/// Leaf compression of one handle occurrence; returns the replacement items
/// and, when the hole child (the tail constant) was absorbed, the new tail.
fn leaf_compress_handle(
    h: Handle,
    hole_const: Option<SymbolId>,
    leaf: &HashMap<LeafKey, SymbolId>,
    table: &SymbolTable,
) -> Result<(Vec<HItem>, Option<Tail>), CompressError> {
    let miss = |what: String| CompressError::ReplayMiss(what);

    // Scan-time decisions, all against the original handle.
    let head_absorbs: Vec<bool> = h
        .arms
        .iter()
        .map(|arm| arm.chain.is_empty() && matches!(arm.end, ArmEnd::Const(_)))
        .collect();
    let chain_absorbs: Vec<bool> = h
        .arms
        .iter()
        .map(|arm| !arm.chain.is_empty() && matches!(arm.end, ArmEnd::Const(_)))
        .collect();

    // Rewrite arms whose bottom chain letter absorbs its constant.
    let mut arms: Vec<Arm> = Vec::with_capacity(h.arms.len());
    for (ai, arm) in h.arms.into_iter().enumerate() {
        if chain_absorbs[ai] {
            let u = *arm.chain.last().unwrap();
            let c = match arm.end {
                ArmEnd::Const(c) => c,
                ArmEnd::Nt0(_) => unreachable!(),
            };
            let key = (table.canon(u), vec![(1u32, table.canon(c))]);
            let fresh = leaf.get(&key).ok_or_else(|| {
                miss(format!(
                    "grammar leaf ({}, {})",
                    table.name(u),
                    table.name(c)
                ))
            })?;
            let mut chain = arm.chain;
            chain.pop();
            arms.push(Arm {
                chain,
                end: ArmEnd::Const(*fresh),
            });
        } else {
            arms.push(arm);
        }
    }

    let absorbs_hole = hole_const.is_some();
    if !head_absorbs.iter().any(|&b| b) && !absorbs_hole {
        return Ok((
            vec![HItem::Handle(Handle {
                head: h.head,
                hole: h.hole,
                arms,
            })],
            None,
        ));
    }

    // The head's record: absorbed (position, constant) pairs in child order.
    let rank = table.rank(h.head) as usize;
    let mut absorbed: Vec<(u32, SymbolId)> = Vec::new();
    let mut remaining: Vec<Option<Arm>> = Vec::new(); // non-absorbed children in order, None = hole
    let mut ai = 0usize;
    for pos in 0..rank {
        if pos == h.hole {
            match hole_const {
                Some(c) => absorbed.push((pos as u32 + 1, table.canon(c))),
                None => remaining.push(None),
            }
        } else {
            if head_absorbs[ai] {
                let c = match &arms[ai].end {
                    ArmEnd::Const(c) => *c,
                    ArmEnd::Nt0(_) => unreachable!(),
                };
                absorbed.push((pos as u32 + 1, table.canon(c)));
            } else {
                remaining.push(Some(arms[ai].clone()));
            }
            ai += 1;
        }
    }
    let key = (table.canon(h.head), absorbed);
    let fresh = *leaf
        .get(&key)
        .ok_or_else(|| miss(format!("grammar leaf ({})", table.name(h.head))))?;

    if !absorbs_hole {
        // Still a handle; the hole shifts left past absorbed positions.
        let hole = remaining
            .iter()
            .position(|c| c.is_none())
            .expect("hole among remaining children");
        let arms = remaining.into_iter().flatten().collect();
        return Ok((
            vec![HItem::Handle(Handle {
                head: fresh,
                hole,
                arms,
            })],
            None,
        ));
    }

    // The hole child was absorbed: the result is a tree, re-normalized as
    // handle + chain + tail along its first child.
    let remaining: Vec<Arm> = remaining.into_iter().flatten().collect();
    if remaining.is_empty() {
        return Ok((vec![], Some(Tail::Const(fresh))));
    }
    let first = remaining[0].clone();
    let rest: Vec<Arm> = remaining[1..].to_vec();
    let mut items = vec![HItem::Handle(Handle {
        head: fresh,
        hole: 0,
        arms: rest,
    })];
    items.extend(first.chain.iter().map(|&u| HItem::Handle(Handle::unary(u))));
    let tail = match first.end {
        ArmEnd::Const(c) => Tail::Const(c),
        ArmEnd::Nt0(d) => Tail::Nt0(d),
    };
    Ok((items, Some(tail)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handle::is_handle;
    use crate::normalizer::normalize;
    use crate::tree::parse_term;

    fn handle_grammar(src: &str, table: &mut SymbolTable) -> HandleGrammar {
        let g = crate::grammar::SlcfGrammar::parse(src, table).unwrap();
        g.validate(table).unwrap();
        is_handle(&g, table).unwrap()
    }

    #[test]
    fn pop_eliminates_single_letter_rule() {
        let mut table = SymbolTable::new();
        let hg = handle_grammar("A1(y1) -> a(y1)\nA2 -> A1(b(c))\n", &mut table);
        let tree = parse_term("a(b(c))", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        let up: HashSet<SymbolId> = [tp.run.table.lookup("a").unwrap()].into_iter().collect();
        let down: HashSet<SymbolId> = [tp.run.table.lookup("b").unwrap()].into_iter().collect();
        let issued = tp.pop(&up, &down).unwrap();
        assert!(issued <= 4 + 0 + 0);
        assert_eq!(tp.grammar.rules.len(), 1);
        assert_eq!(tp.grammar.rules[0].rhs.items.len(), 2);
        assert!(tp.synced());
        tp.check_invariants().unwrap();
    }

    #[test]
    fn pop_without_crossing_keeps_eval() {
        let mut table = SymbolTable::new();
        let hg = handle_grammar("A1(y1) -> b(a(y1))\nA2 -> A1(c)\n", &mut table);
        let tree = parse_term("b(a(c))", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        let up: HashSet<SymbolId> = [tp.run.table.lookup("a").unwrap()].into_iter().collect();
        let down: HashSet<SymbolId> = [tp.run.table.lookup("b").unwrap()].into_iter().collect();
        tp.pop(&up, &down).unwrap();
        assert!(tp.synced());
        tp.check_invariants().unwrap();
    }

    #[test]
    fn pop_materializes_both_neighbours() {
        // A rule starting with a down-letter and ending with an up-letter
        // pops on both sides and disappears.
        let mut table = SymbolTable::new();
        let hg = handle_grammar("A1(y1) -> b(a(y1))\nA2 -> g(A1(c),d)\n", &mut table);
        let tree = parse_term("g(b(a(c)),d)", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        let up: HashSet<SymbolId> = [tp.run.table.lookup("a").unwrap()].into_iter().collect();
        let down: HashSet<SymbolId> = [tp.run.table.lookup("b").unwrap()].into_iter().collect();
        tp.pop(&up, &down).unwrap();
        assert_eq!(tp.grammar.rules.len(), 1);
        assert_eq!(tp.grammar.rules[0].rhs.items.len(), 3);
        assert!(tp.synced());
        tp.check_invariants().unwrap();
    }

    #[test]
    fn rem_cr_chains_pops_full_prefix() {
        let mut table = SymbolTable::new();
        let hg = handle_grammar("A1(y1) -> a(a(y1))\nA2 -> a(A1(a(c)))\n", &mut table);
        let tree = parse_term("a(a(a(a(c))))", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        tp.rem_cr_chains().unwrap();
        assert_eq!(tp.grammar.rules.len(), 1);
        assert_eq!(tp.grammar.rules[0].rhs.items.len(), 4);
        assert!(tp.synced());
        tp.check_invariants().unwrap();
    }

    #[test]
    fn rem_cr_prefix_matches_eval_prefix() {
        // Nested prefixes across two nonterminals: pops cascade bottom-up.
        let mut table = SymbolTable::new();
        let hg = handle_grammar(
            "A1(y1) -> a(a(y1))\nA2(y1) -> A1(a(b(y1)))\nA3 -> a(A2(c))\n",
            &mut table,
        );
        let tree = parse_term("a(a(a(a(b(c)))))", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        tp.rem_cr_chains().unwrap();
        assert!(tp.synced());
        // The start rule now explicitly carries the full a-prefix of length 4.
        let start = tp.grammar.rules.last().unwrap();
        let a = tp.run.table.lookup("a").unwrap();
        let lead = start
            .rhs
            .items
            .iter()
            .take_while(|i| matches!(i, HItem::Handle(h) if h.is_bare_unary() && h.head == a))
            .count();
        assert_eq!(lead, 4);
    }

    #[test]
    fn gen_pop_pops_trailing_handle() {
        let mut table = SymbolTable::new();
        let hg = handle_grammar("A1(y1) -> f(c,y1)\nA2 -> A1(d)\n", &mut table);
        let tree = parse_term("f(c,d)", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        let issued = tp.gen_pop().unwrap();
        // One N1 occurrence, handle of two letters: 4 units, bound 2*1*2.
        assert_eq!(issued, 4);
        assert_eq!(tp.grammar.rules.len(), 1);
        assert!(tp.synced());
        tp.check_invariants().unwrap();
    }

    #[test]
    fn gen_pop_replaces_constant_nonterminals() {
        let mut table = SymbolTable::new();
        let hg = handle_grammar("B -> c\nS -> f(B,B)\n", &mut table);
        let tree = parse_term("f(c,c)", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        let issued = tp.gen_pop().unwrap();
        assert_eq!(issued, 4); // two occurrences of B replaced by c
        assert_eq!(tp.grammar.rules.len(), 1);
        assert!(tp.synced());
    }

    #[test]
    fn gen_pop_creates_fresh_rank0_rules() {
        // Popping f(a(e), y) materializes a fresh rank-0 nonterminal for the
        // non-constant child a(e).
        let mut table = SymbolTable::new();
        let hg = handle_grammar("A1(y1) -> f(a(e),y1)\nA2 -> A1(d)\n", &mut table);
        let tree = parse_term("f(a(e),d)", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        tp.gen_pop().unwrap();
        assert!(tp.synced());
        tp.check_invariants().unwrap();
        let fresh = tp
            .grammar
            .rules
            .iter()
            .find(|r| tp.classes.get(&r.lhs) == Some(&NtClass::Ntilde0))
            .expect("fresh rank-0 rule");
        assert_eq!(fresh.rhs.items.len(), 1);
        assert!(matches!(fresh.rhs.tail, Some(Tail::Const(_))));
    }

    #[test]
    fn simulate_phase_on_literal_start_rule() {
        let mut table = SymbolTable::new();
        let hg = handle_grammar("S -> a(b(c))\n", &mut table);
        let tree = parse_term("a(b(c))", &mut table).unwrap();
        let mut tp = TrackedPair::new(tree, hg, &mut table).unwrap();
        let phases = tp.simulate(10).unwrap();
        assert!(phases <= 2);
        assert_eq!(tp.run.size(), 1);
        assert!(tp.reports.iter().all(|r| r.synced));
    }

    #[test]
    fn simulate_random_pairs() {
        let mut rng = crate::generate::SplitMix64::new(0xabcdef);
        for case in 0..12 {
            let mut table = SymbolTable::new();
            let g = crate::generate::random_grammar(&mut rng, 25, 3, 3_000, &mut table);
            g.validate(&table).unwrap();
            let tree = g.eval(DEFAULT_NODE_BUDGET).unwrap();
            let (hg, audit) = normalize(&g, &mut table);
            assert!(audit.ok());
            let mut tp = TrackedPair::new(tree, hg, &mut table)
                .unwrap_or_else(|e| panic!("case {case}: {e}"));
            tp.simulate(3)
                .unwrap_or_else(|e| panic!("case {case}: {e}"));
            assert!(tp.reports.iter().all(|r| r.synced), "case {case}");
        }
    }
}
