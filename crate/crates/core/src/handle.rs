//! Handle grammars: monadic SLCF grammars whose right-hand sides are
//! sequences of handles and nonterminals.
//!
//! A handle is a one-parameter pattern f(w1(g1),...,y,...,wl(gl)) where every
//! arm is a chain of unary letters ending in a constant or a rank-0
//! nonterminal. Right-hand sides are stored as item sequences (handle or
//! rank-1 nonterminal), with a trailing constant or rank-0 nonterminal for
//! rank-0 left-hand sides. This makes the structural checks and the
//! simulator's string-like operations linear in the rule length.

use crate::grammar::{Production, SlcfGrammar, Term, TermNode};
use crate::symbol::{SymbolId, SymbolTable};
use std::collections::HashMap;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArmEnd {
    Const(SymbolId),
    Nt0(SymbolId),
}

impl ArmEnd {
    pub fn symbol(&self) -> SymbolId {
        match self {
            ArmEnd::Const(s) | ArmEnd::Nt0(s) => *s,
        }
    }
}

/// One non-hole child of a handle head: a (possibly empty) unary chain ending
/// in a constant or rank-0 nonterminal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arm {
    pub chain: Vec<SymbolId>,
    pub end: ArmEnd,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Handle {
    /// Letter of rank >= 1.
    pub head: SymbolId,
    /// 0-based child position of the parameter path.
    pub hole: usize,
    /// The other children, in child order (length = rank(head) - 1).
    pub arms: Vec<Arm>,
}

impl Handle {
    pub fn unary(letter: SymbolId) -> Handle {
        Handle {
            head: letter,
            hole: 0,
            arms: vec![],
        }
    }

    pub fn is_bare_unary(&self) -> bool {
        self.arms.is_empty()
    }

    /// Letter occurrences in this handle (head, chain letters, constant ends).
    pub fn letter_count(&self) -> usize {
        1 + self
            .arms
            .iter()
            .map(|a| a.chain.len() + matches!(a.end, ArmEnd::Const(_)) as usize)
            .sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HItem {
    Handle(Handle),
    Nt1(SymbolId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tail {
    Const(SymbolId),
    Nt0(SymbolId),
}

impl Tail {
    pub fn symbol(&self) -> SymbolId {
        match self {
            Tail::Const(s) | Tail::Nt0(s) => *s,
        }
    }
}

/// Right-hand side of a handle-grammar rule; `tail` is present exactly for
/// rank-0 left-hand sides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HRhs {
    pub items: Vec<HItem>,
    pub tail: Option<Tail>,
}

impl HRhs {
    pub fn nt1_count(&self) -> usize {
        self.items
            .iter()
            .filter(|i| matches!(i, HItem::Nt1(_)))
            .count()
    }
}

#[derive(Clone, Debug)]
pub struct HRule {
    pub lhs: SymbolId,
    pub rhs: HRhs,
}

/// A monadic SLCF grammar in handle form, rules in straight-line order with
/// the start rule last.
#[derive(Clone, Debug)]
pub struct HandleGrammar {
    pub rules: Vec<HRule>,
    pub start: SymbolId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandleViolation {
    pub production: String,
    pub reason: String,
}

impl fmt::Display for HandleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "production `{}`: {}", self.production, self.reason)
    }
}

impl HandleGrammar {
    pub fn rule(&self, sym: SymbolId) -> Option<&HRule> {
        self.rules.iter().find(|r| r.lhs == sym)
    }

    pub fn rule_index(&self, sym: SymbolId) -> Option<usize> {
        self.rules.iter().position(|r| r.lhs == sym)
    }

    pub fn is_nonterminal(&self, sym: SymbolId) -> bool {
        self.rules.iter().any(|r| r.lhs == sym)
    }

    /// Grammar size: non-parameter nodes over all right-hand sides.
    pub fn size(&self) -> usize {
        self.rules
            .iter()
            .map(|r| {
                r.rhs
                    .items
                    .iter()
                    .map(|i| match i {
                        HItem::Handle(h) => {
                            h.letter_count()
                                + h.arms
                                    .iter()
                                    .filter(|a| matches!(a.end, ArmEnd::Nt0(_)))
                                    .count()
                        }
                        HItem::Nt1(_) => 1,
                    })
                    .sum::<usize>()
                    + r.rhs.tail.iter().count()
            })
            .sum()
    }

    /// Occurrences of each nonterminal over all right-hand sides (items,
    /// arm ends and tails).
    pub fn occurrence_counts(&self) -> HashMap<SymbolId, usize> {
        let mut counts: HashMap<SymbolId, usize> = HashMap::new();
        for r in &self.rules {
            for item in &r.rhs.items {
                match item {
                    HItem::Nt1(s) => *counts.entry(*s).or_default() += 1,
                    HItem::Handle(h) => {
                        for arm in &h.arms {
                            if let ArmEnd::Nt0(s) = arm.end {
                                *counts.entry(s).or_default() += 1;
                            }
                        }
                    }
                }
            }
            if let Some(Tail::Nt0(s)) = r.rhs.tail {
                *counts.entry(s).or_default() += 1;
            }
        }
        counts
    }

    /// Convert back to the generic representation (for eval and text output).
    pub fn to_slcf(&self, table: &SymbolTable) -> SlcfGrammar {
        let productions = self
            .rules
            .iter()
            .map(|r| {
                let rank = table.rank(r.lhs);
                let mut acc = match &r.rhs.tail {
                    Some(t) => Term::leaf(t.symbol()),
                    None => {
                        debug_assert_eq!(rank, 1);
                        Term::param(0)
                    }
                };
                for item in r.rhs.items.iter().rev() {
                    acc = match item {
                        HItem::Nt1(s) => Term::apply(*s, vec![acc]),
                        HItem::Handle(h) => handle_to_term(h, acc, table),
                    };
                }
                Production {
                    lhs: r.lhs,
                    rhs: acc,
                }
            })
            .collect();
        SlcfGrammar::new(productions, self.start)
    }

    pub fn eval(
        &self,
        table: &SymbolTable,
        budget: usize,
    ) -> Result<crate::tree::RankedTree, crate::grammar::EvalError> {
        self.to_slcf(table).eval(budget)
    }
}

fn arm_to_term(arm: &Arm) -> Term {
    let mut t = Term::leaf(arm.end.symbol());
    for &u in arm.chain.iter().rev() {
        t = Term::apply(u, vec![t]);
    }
    t
}

fn handle_to_term(h: &Handle, continuation: Term, table: &SymbolTable) -> Term {
    let rank = table.rank(h.head) as usize;
    debug_assert_eq!(h.arms.len() + 1, rank);
    let mut args = Vec::with_capacity(rank);
    let mut arm_iter = h.arms.iter();
    let mut continuation = Some(continuation);
    for pos in 0..rank {
        if pos == h.hole {
            args.push(continuation.take().unwrap());
        } else {
            args.push(arm_to_term(arm_iter.next().unwrap()));
        }
    }
    Term::apply(h.head, args)
}

/// Structural handle-form check: HG1 (nonterminal ranks <= 1), HG2 rule
/// shapes for rank-1 nonterminals (sequence of handles with at most two
/// rank-1 nonterminal occurrences) and HG3 for rank-0 nonterminals (at most
/// one rank-1 occurrence, ending in a constant or rank-0 nonterminal).
/// Returns the parsed handle grammar or the first violation.
pub fn is_handle(g: &SlcfGrammar, table: &SymbolTable) -> Result<HandleGrammar, HandleViolation> {
    let mut rules = Vec::with_capacity(g.productions.len());
    for p in &g.productions {
        let name = table.name(p.lhs).to_owned();
        let fail = |reason: &str| -> HandleViolation {
            HandleViolation {
                production: name.clone(),
                reason: reason.to_owned(),
            }
        };
        let lhs_rank = table.rank(p.lhs);
        if lhs_rank > 1 {
            return Err(fail("nonterminal of rank greater than 1"));
        }
        let rhs = parse_hrhs(&p.rhs, g, table, lhs_rank).map_err(|r| fail(&r))?;
        let nt1 = rhs.nt1_count();
        if lhs_rank == 1 && nt1 > 2 {
            return Err(fail("more than two rank-1 nonterminals in a rank-1 rule"));
        }
        if lhs_rank == 0 && nt1 > 1 {
            return Err(fail("more than one rank-1 nonterminal in a rank-0 rule"));
        }
        rules.push(HRule { lhs: p.lhs, rhs });
    }
    Ok(HandleGrammar {
        rules,
        start: g.start,
    })
}

/// Parse one rhs term into a handle sequence. Walks the spine toward the
/// parameter (rank-1) or the trailing constant/rank-0 nonterminal (rank-0).
fn parse_hrhs(
    rhs: &Term,
    g: &SlcfGrammar,
    table: &SymbolTable,
    lhs_rank: u32,
) -> Result<HRhs, String> {
    let mut items = Vec::new();
    let mut at = rhs.root();
    loop {
        match rhs.node(at) {
            TermNode::Param(0) => {
                if lhs_rank != 1 {
                    return Err("parameter in a rank-0 rule".into());
                }
                return Ok(HRhs { items, tail: None });
            }
            TermNode::Param(_) => return Err("unexpected parameter index".into()),
            TermNode::Apply { sym, children } => {
                let is_nt = g.is_nonterminal(*sym);
                let rank = table.rank(*sym);
                if is_nt {
                    match rank {
                        0 => {
                            return finish_tail(items, Tail::Nt0(*sym), lhs_rank);
                        }
                        1 => {
                            items.push(HItem::Nt1(*sym));
                            at = children[0];
                        }
                        _ => return Err("rank >= 2 nonterminal occurrence".into()),
                    }
                } else if rank == 0 {
                    return finish_tail(items, Tail::Const(*sym), lhs_rank);
                } else {
                    // A letter: a handle. The hole is the child on the spine.
                    let hole = find_hole(rhs, children, g, table, lhs_rank)?;
                    let mut arms = Vec::with_capacity(children.len() - 1);
                    for (i, &c) in children.iter().enumerate() {
                        if i != hole {
                            arms.push(parse_arm(rhs, c, g, table)?);
                        }
                    }
                    items.push(HItem::Handle(Handle {
                        head: *sym,
                        hole,
                        arms,
                    }));
                    at = children[hole];
                }
            }
        }
    }
}

fn finish_tail(items: Vec<HItem>, tail: Tail, lhs_rank: u32) -> Result<HRhs, String> {
    if lhs_rank != 0 {
        return Err("rank-1 rule does not end in its parameter".into());
    }
    Ok(HRhs {
        items,
        tail: Some(tail),
    })
}

/// The hole of a handle occurrence: for rank-1 rules, the unique child whose
/// subtree contains the parameter; for rank-0 rules, the first child that is
/// not arm-shaped, or the last child when all are.
fn find_hole(
    rhs: &Term,
    children: &[u32],
    g: &SlcfGrammar,
    table: &SymbolTable,
    lhs_rank: u32,
) -> Result<usize, String> {
    if lhs_rank == 1 {
        let mut hole = None;
        for (i, &c) in children.iter().enumerate() {
            if subtree_has_param(rhs, c) {
                if hole.is_some() {
                    return Err("parameter occurs in two children".into());
                }
                hole = Some(i);
            }
        }
        hole.ok_or_else(|| "handle head without the parameter below it".into())
    } else {
        for (i, &c) in children.iter().enumerate() {
            if parse_arm(rhs, c, g, table).is_err() {
                return Ok(i);
            }
        }
        Ok(children.len() - 1)
    }
}

fn subtree_has_param(rhs: &Term, at: u32) -> bool {
    let mut stack = vec![at];
    while let Some(id) = stack.pop() {
        match rhs.node(id) {
            TermNode::Param(_) => return true,
            TermNode::Apply { children, .. } => stack.extend(children.iter()),
        }
    }
    false
}

fn parse_arm(rhs: &Term, at: u32, g: &SlcfGrammar, table: &SymbolTable) -> Result<Arm, String> {
    let mut chain = Vec::new();
    let mut at = at;
    loop {
        match rhs.node(at) {
            TermNode::Param(_) => return Err("parameter inside a handle arm".into()),
            TermNode::Apply { sym, children } => {
                let is_nt = g.is_nonterminal(*sym);
                let rank = table.rank(*sym);
                if is_nt {
                    if rank == 0 {
                        return Ok(Arm {
                            chain,
                            end: ArmEnd::Nt0(*sym),
                        });
                    }
                    return Err("nonterminal of positive rank inside a handle arm".into());
                }
                match rank {
                    0 => {
                        return Ok(Arm {
                            chain,
                            end: ArmEnd::Const(*sym),
                        })
                    }
                    1 => {
                        chain.push(*sym);
                        at = children[0];
                    }
                    _ => return Err("branching letter inside a handle arm".into()),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::DEFAULT_NODE_BUDGET;
    use crate::tree::serialize_term;

    fn setup(src: &str) -> (SlcfGrammar, SymbolTable) {
        let mut table = SymbolTable::new();
        let g = SlcfGrammar::parse(src, &mut table).unwrap();
        g.validate(&table).unwrap();
        (g, table)
    }

    #[test]
    fn accepts_handle_rules() {
        let (g, tbl) = setup("A1(y1) -> f(c,a(b(d)),y1)\nA2 -> A1(e)\nS -> g(A2,c)\n");
        let hg = is_handle(&g, &tbl).unwrap();
        assert_eq!(hg.rules.len(), 3);
        let back = hg.to_slcf(&tbl);
        let t0 = g.eval(DEFAULT_NODE_BUDGET).unwrap();
        let t1 = back.eval(DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(serialize_term(&t0, &tbl), serialize_term(&t1, &tbl));
    }

    #[test]
    fn rejects_rank_two_nonterminal() {
        let (g, tbl) = setup("A(y1,y2) -> f(y1,y2)\nS -> A(c,c)\n");
        let err = is_handle(&g, &tbl).unwrap_err();
        assert!(err.reason.contains("rank greater than 1"));
    }

    #[test]
    fn rejects_three_nt1_in_rank1_rule() {
        let (g, tbl) = setup("B(y1) -> a(y1)\nA(y1) -> B(B(B(y1)))\nS -> A(c)\n");
        let err = is_handle(&g, &tbl).unwrap_err();
        assert_eq!(err.production, "A");
    }

    #[test]
    fn rejects_two_nt1_in_rank0_rule() {
        let (g, tbl) = setup("B(y1) -> a(y1)\nS -> B(B(c))\n");
        let err = is_handle(&g, &tbl).unwrap_err();
        assert_eq!(err.production, "S");
    }

    #[test]
    fn rejects_branching_arm() {
        let (g, tbl) = setup("A(y1) -> f(g(c,c),y1)\nS -> A(c)\n");
        let err = is_handle(&g, &tbl).unwrap_err();
        assert!(err.reason.contains("arm"));
    }

    #[test]
    fn bare_unary_letters_are_handles() {
        let (g, tbl) = setup("A(y1) -> a(b(a(y1)))\nS -> A(c)\n");
        let hg = is_handle(&g, &tbl).unwrap();
        assert_eq!(hg.rules[0].rhs.items.len(), 3);
        assert!(hg.rules[0]
            .rhs
            .items
            .iter()
            .all(|i| matches!(i, HItem::Handle(h) if h.is_bare_unary())));
    }

    #[test]
    fn size_matches_generic_size() {
        let (g, tbl) = setup("A1(y1) -> f(c,a(b(d)),y1)\nA2 -> A1(e)\nS -> g(A2,c)\n");
        let hg = is_handle(&g, &tbl).unwrap();
        assert_eq!(hg.size(), g.size());
    }
}
