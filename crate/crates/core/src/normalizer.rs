//! Normalization of arbitrary SLCF grammars into handle form: first Chomsky
//! normal form (two rule shapes), then a bottom-up skeleton construction that
//! yields a monadic handle grammar of size O(r·g).

use crate::grammar::{Production, SlcfGrammar, Term, TermNode};
use crate::handle::{Arm, ArmEnd, HItem, HRhs, HRule, Handle, HandleGrammar, Tail};
use crate::symbol::{Origin, SymbolId, SymbolTable};
use std::collections::HashMap;

/// An SLCF grammar whose rules all match one of the two CNF shapes:
/// `A(y1..yk) -> f(y1..yk)` or
/// `A(y1..yk) -> B(y1..yl, C(y_{l+1}..y_{l'}), y_{l'+1}..yk)`.
pub struct CnfGrammar(pub SlcfGrammar);

/// Classification of a CNF rule.
enum CnfShape {
    Intro(SymbolId),
    Compose {
        b: SymbolId,
        slot: usize,
        c: SymbolId,
    },
}

/// Check the two-shape property; `Err` names the offending production.
pub fn is_cnf(g: &SlcfGrammar, table: &SymbolTable) -> Result<(), String> {
    for p in &g.productions {
        classify(p, g, table).map_err(|e| format!("production `{}`: {e}", table.name(p.lhs)))?;
    }
    Ok(())
}

fn classify(p: &Production, g: &SlcfGrammar, table: &SymbolTable) -> Result<CnfShape, String> {
    let rhs = &p.rhs;
    let root = rhs.root();
    let (sym, children) = match rhs.node(root) {
        TermNode::Apply { sym, children } => (*sym, children),
        TermNode::Param(_) => return Err("bare parameter".into()),
    };
    let mut nested = None;
    let mut next_param = 0u32;
    for (i, &ch) in children.iter().enumerate() {
        match rhs.node(ch) {
            TermNode::Param(ix) => {
                if *ix != next_param {
                    return Err("parameters out of order".into());
                }
                next_param += 1;
            }
            TermNode::Apply {
                sym: c,
                children: cc,
            } => {
                if nested.is_some() {
                    return Err("two nested nonterminals".into());
                }
                if !g.is_nonterminal(*c) || !g.is_nonterminal(sym) {
                    return Err("nesting under or of a letter".into());
                }
                for &gc in cc {
                    match rhs.node(gc) {
                        TermNode::Param(ix) if *ix == next_param => next_param += 1,
                        _ => return Err("nested argument is not a parameter".into()),
                    }
                }
                nested = Some((i, *c));
            }
        }
    }
    match nested {
        None => {
            if g.is_nonterminal(sym) {
                return Err("unit nonterminal application".into());
            }
            if table.rank(sym) as usize != children.len() {
                return Err("rank mismatch".into());
            }
            Ok(CnfShape::Intro(sym))
        }
        Some((slot, c)) => Ok(CnfShape::Compose { b: sym, slot, c }),
    }
}

/// Transform into CNF: unit rules are inlined (via cleanup), then every rule
/// is decomposed into an intro rule per letter plus one composition per
/// non-parameter child, folding left to right.
pub fn to_cnf(g: &SlcfGrammar, table: &mut SymbolTable) -> CnfGrammar {
    let g = g.cleanup_reasonable();
    let mut out: Vec<Production> = Vec::new();
    let mut intro_memo: HashMap<SymbolId, SymbolId> = HashMap::new();

    for p in &g.productions {
        let term = &p.rhs;
        // Children before parents: process ids in reverse preorder.
        let order = term.preorder();
        let mut nt_for: HashMap<u32, SymbolId> = HashMap::new();
        for &at in order.iter().rev() {
            let (sym, children) = match term.node(at) {
                TermNode::Param(_) => continue,
                TermNode::Apply { sym, children } => (*sym, children),
            };
            let is_root = at == term.root();
            let base = if g.is_nonterminal(sym) {
                sym
            } else {
                match intro_memo.get(&sym) {
                    Some(&n) => n,
                    None => {
                        let rank = table.rank(sym);
                        // The root of a cleaned rule is a letter whenever all
                        // children are parameters; reuse the lhs for it.
                        let all_params = children
                            .iter()
                            .all(|&c| matches!(term.node(c), TermNode::Param(_)));
                        if is_root && all_params {
                            sym // handled below, no intro nonterminal needed
                        } else {
                            let n = table.fresh(Origin::Nonterminal, rank);
                            let params = (0..rank).map(Term::param).collect();
                            out.push(Production {
                                lhs: n,
                                rhs: Term::apply(sym, params),
                            });
                            intro_memo.insert(sym, n);
                            n
                        }
                    }
                }
            };

            let folds: Vec<(usize, SymbolId)> = children
                .iter()
                .enumerate()
                .filter_map(|(j, &c)| match term.node(c) {
                    TermNode::Param(_) => None,
                    TermNode::Apply { .. } => Some((j, nt_for[&c])),
                })
                .collect();

            if folds.is_empty() {
                if is_root {
                    // Shape 1 with the production's own lhs.
                    debug_assert!(!g.is_nonterminal(sym));
                    let rank = table.rank(sym);
                    let params = (0..rank).map(Term::param).collect();
                    out.push(Production {
                        lhs: p.lhs,
                        rhs: Term::apply(sym, params),
                    });
                    nt_for.insert(at, p.lhs);
                } else {
                    nt_for.insert(at, base);
                }
                continue;
            }

            // widths[j]: parameters contributed by slot j of the current
            // intermediate nonterminal (1 until folded, then rank of the
            // folded child).
            let mut widths: Vec<usize> = vec![1; children.len()];
            let mut cur = base;
            let mut cur_rank: usize = table.rank(base) as usize;
            for (fold_no, &(j, c_nt)) in folds.iter().enumerate() {
                let rc = table.rank(c_nt) as usize;
                let pos: usize = widths[..j].iter().sum();
                let new_rank = cur_rank - 1 + rc;
                let last = fold_no + 1 == folds.len();
                let lhs = if last && is_root {
                    p.lhs
                } else {
                    table.fresh(Origin::Nonterminal, new_rank as u32)
                };
                let mut args: Vec<Term> = Vec::with_capacity(cur_rank);
                let mut next = 0u32;
                for slot in 0..cur_rank {
                    if slot == pos {
                        let inner = (0..rc).map(|q| Term::param(next + q as u32)).collect();
                        args.push(Term::apply(c_nt, inner));
                        next += rc as u32;
                    } else {
                        args.push(Term::param(next));
                        next += 1;
                    }
                }
                out.push(Production {
                    lhs,
                    rhs: Term::apply(cur, args),
                });
                widths[j] = rc;
                cur = lhs;
                cur_rank = new_rank;
            }
            nt_for.insert(at, cur);
        }
    }
    CnfGrammar(SlcfGrammar::new(out, g.start))
}

// --- Skeletons ---------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
enum SkKind {
    /// Letter of arity >= 2.
    Letter(SymbolId),
    Nt1(SymbolId),
    Nt0(SymbolId),
    Const(SymbolId),
    Param(u32),
}

#[derive(Clone, Debug)]
struct SkNode {
    kind: SkKind,
    children: Vec<usize>,
    parent: Option<usize>,
}

#[derive(Clone, Debug)]
struct Skeleton {
    nodes: Vec<SkNode>,
    root: usize,
}

impl Skeleton {
    fn single(kind: SkKind) -> Skeleton {
        Skeleton {
            nodes: vec![SkNode {
                kind,
                children: vec![],
                parent: None,
            }],
            root: 0,
        }
    }

    fn nt1_over_param(sym: SymbolId) -> Skeleton {
        Skeleton {
            nodes: vec![
                SkNode {
                    kind: SkKind::Nt1(sym),
                    children: vec![1],
                    parent: None,
                },
                SkNode {
                    kind: SkKind::Param(0),
                    children: vec![],
                    parent: Some(0),
                },
            ],
            root: 0,
        }
    }

    fn letter_over_params(sym: SymbolId, rank: usize) -> Skeleton {
        let mut nodes = vec![SkNode {
            kind: SkKind::Letter(sym),
            children: (1..=rank).collect(),
            parent: None,
        }];
        for i in 0..rank {
            nodes.push(SkNode {
                kind: SkKind::Param(i as u32),
                children: vec![],
                parent: Some(0),
            });
        }
        Skeleton { nodes, root: 0 }
    }

    /// Live node ids reachable from the root.
    fn live(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            out.push(i);
            stack.extend(self.nodes[i].children.iter().rev());
        }
        out
    }

    fn find_param(&self, ix: u32) -> usize {
        self.live()
            .into_iter()
            .find(|&i| self.nodes[i].kind == SkKind::Param(ix))
            .expect("parameter present in skeleton")
    }

    fn subtree_has_param(&self, at: usize) -> bool {
        let mut stack = vec![at];
        while let Some(i) = stack.pop() {
            if matches!(self.nodes[i].kind, SkKind::Param(_)) {
                return true;
            }
            stack.extend(self.nodes[i].children.iter());
        }
        false
    }

    /// Replace parameter `q` by `other` (parameters of `other` shifted by q,
    /// own parameters above q shifted by other's rank - 1). Returns the arena
    /// index of the inserted root.
    fn substitute(&mut self, q: u32, other: &Skeleton, other_rank: u32) -> usize {
        for i in self.live() {
            if let SkKind::Param(ix) = self.nodes[i].kind {
                if ix > q {
                    self.nodes[i].kind = SkKind::Param(ix + other_rank - 1);
                }
            }
        }
        let target = self.find_param(q);
        let offset = self.nodes.len();
        for n in &other.nodes {
            let mut n = n.clone();
            if let SkKind::Param(ix) = n.kind {
                n.kind = SkKind::Param(ix + q);
            }
            n.children.iter_mut().for_each(|c| *c += offset);
            n.parent = n.parent.map(|p| p + offset);
            self.nodes.push(n);
        }
        let inserted = other.root + offset;
        let parent = self.nodes[target].parent;
        self.nodes[inserted].parent = parent;
        match parent {
            Some(p) => {
                let slot = self.nodes[p]
                    .children
                    .iter()
                    .position(|&c| c == target)
                    .expect("child slot");
                self.nodes[p].children[slot] = inserted;
            }
            None => self.root = inserted,
        }
        inserted
    }

    /// Collapse a parent/child pair of rank-1 nonterminal nodes into one node
    /// labelled `fresh`: top keeps its place, bottom is spliced out.
    fn collapse_pair(&mut self, top: usize, bottom: usize, fresh: SymbolId) {
        debug_assert_eq!(self.nodes[top].children, vec![bottom]);
        self.nodes[top].kind = SkKind::Nt1(fresh);
        let grand = self.nodes[bottom].children.clone();
        for &g in &grand {
            self.nodes[g].parent = Some(top);
        }
        self.nodes[top].children = grand;
    }
}

/// Construction report: skeleton checks plus size accounting.
#[derive(Debug, Default, Clone)]
pub struct NormalizeAudit {
    pub skeletons_checked: usize,
    pub violations: Vec<String>,
    pub max_skeleton_nodes: usize,
}

impl NormalizeAudit {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, sk: &Skeleton, rank: u32, r: usize, table: &SymbolTable, who: &str) {
        self.skeletons_checked += 1;
        let live = sk.live();
        self.max_skeleton_nodes = self.max_skeleton_nodes.max(live.len());
        let bound = if rank == 0 {
            1
        } else {
            2 * r * (rank as usize - 1) + 2
        };
        if live.len() > bound {
            self.violations.push(format!(
                "{who}: skeleton has {} nodes, bound {bound}",
                live.len()
            ));
        }
        let mut params = Vec::new();
        for &i in &live {
            let node = &sk.nodes[i];
            match &node.kind {
                SkKind::Param(ix) => params.push(*ix),
                SkKind::Nt1(_) => {
                    // SK1: the child of a degree-1 node is a letter of
                    // arity >= 2 (or the parameter itself).
                    let ch = node.children[0];
                    if !matches!(sk.nodes[ch].kind, SkKind::Letter(_) | SkKind::Param(_)) {
                        self.violations.push(format!("{who}: SK1 violated"));
                    }
                }
                SkKind::Letter(sym) => {
                    if table.rank(*sym) < 2 {
                        self.violations.push(format!("{who}: letter of arity < 2"));
                    }
                    let with_params = node
                        .children
                        .iter()
                        .filter(|&&c| sk.subtree_has_param(c))
                        .count();
                    if with_params < 2 {
                        self.violations.push(format!("{who}: SK2 violated"));
                    }
                }
                SkKind::Nt0(_) | SkKind::Const(_) => {}
            }
        }
        params.sort_unstable();
        if params != (0..rank).collect::<Vec<_>>() {
            self.violations.push(format!("{who}: parameters damaged"));
        }
    }
}

/// Build an equivalent handle grammar from a CNF grammar; every intermediate
/// skeleton is checked against SK1/SK2 and the node bound, reported in the
/// audit.
pub fn to_handle(cnf: &CnfGrammar, table: &mut SymbolTable) -> (HandleGrammar, NormalizeAudit) {
    let g = &cnf.0;
    let mut audit = NormalizeAudit::default();
    let r = g
        .productions
        .iter()
        .flat_map(|p| p.rhs.preorder().into_iter().map(move |id| (p, id)))
        .filter_map(|(p, id)| match p.rhs.node(id) {
            TermNode::Apply { sym, .. } if !g.is_nonterminal(*sym) => {
                Some(table.rank(*sym) as usize)
            }
            _ => None,
        })
        .max()
        .unwrap_or(1)
        .max(1);

    let mut sk: HashMap<SymbolId, Skeleton> = HashMap::new();
    let mut rules: Vec<HRule> = Vec::new();

    for p in &g.productions {
        let shape = classify(p, g, table).expect("CNF input");
        let k = table.rank(p.lhs);
        let built = match shape {
            CnfShape::Intro(f) => {
                let fr = table.rank(f);
                match k {
                    0 => {
                        // Bare constant: substituted directly, no wrapper rule.
                        Skeleton::single(SkKind::Const(f))
                    }
                    1 => {
                        rules.push(HRule {
                            lhs: p.lhs,
                            rhs: HRhs {
                                items: vec![HItem::Handle(Handle::unary(f))],
                                tail: None,
                            },
                        });
                        Skeleton::nt1_over_param(p.lhs)
                    }
                    _ => Skeleton::letter_over_params(f, fr as usize),
                }
            }
            CnfShape::Compose { b, slot, c } => {
                let mut s = sk[&b].clone();
                let c_rank = table.rank(c);
                let inserted = s.substitute(slot as u32, &sk[&c], c_rank);
                if c_rank >= 1 {
                    fixup_positive(&mut s, inserted, table, &mut rules);
                } else {
                    fixup_nullary(&mut s, inserted, table, &mut rules);
                }
                s
            }
        };
        audit.check(&built, k, r, table, table.name(p.lhs));
        sk.insert(p.lhs, built);
    }

    // The start skeleton is a single constant or rank-0 nonterminal.
    let start_sk = &sk[&g.start];
    let start = match &start_sk.nodes[start_sk.root].kind {
        SkKind::Nt0(d) if rules.last().map(|r| r.lhs) == Some(*d) => *d,
        SkKind::Nt0(d) => {
            let s0 = table.fresh(Origin::Nonterminal, 0);
            rules.push(HRule {
                lhs: s0,
                rhs: HRhs {
                    items: vec![],
                    tail: Some(Tail::Nt0(*d)),
                },
            });
            s0
        }
        SkKind::Const(c) => {
            let s0 = table.fresh(Origin::Nonterminal, 0);
            rules.push(HRule {
                lhs: s0,
                rhs: HRhs {
                    items: vec![],
                    tail: Some(Tail::Const(*c)),
                },
            });
            s0
        }
        other => unreachable!("start skeleton is {other:?}"),
    };
    (HandleGrammar { rules, start }, audit)
}

/// Substituted a skeleton with parameters: the only possible defect is two
/// adjacent degree-1 nodes at the splice point, merged into a fresh rank-1
/// nonterminal.
fn fixup_positive(
    sk: &mut Skeleton,
    inserted: usize,
    table: &mut SymbolTable,
    rules: &mut Vec<HRule>,
) {
    let parent = sk.nodes[inserted].parent;
    if let (Some(p), SkKind::Nt1(q_sym)) = (parent, sk.nodes[inserted].kind.clone()) {
        if let SkKind::Nt1(p_sym) = sk.nodes[p].kind.clone() {
            let fresh = table.fresh(Origin::Nonterminal, 1);
            rules.push(HRule {
                lhs: fresh,
                rhs: HRhs {
                    items: vec![HItem::Nt1(p_sym), HItem::Nt1(q_sym)],
                    tail: None,
                },
            });
            sk.collapse_pair(p, inserted, fresh);
        }
    }
}

/// Substituted a constant or rank-0 nonterminal. Restores SK1 by wrapping it
/// (with a preceding degree-1 node, if any) into a fresh rank-0 nonterminal,
/// then SK2 by extracting a handle when the letter above lost its second
/// parameter branch.
fn fixup_nullary(
    sk: &mut Skeleton,
    inserted: usize,
    table: &mut SymbolTable,
    rules: &mut Vec<HRule>,
) {
    let gamma = match &sk.nodes[inserted].kind {
        SkKind::Const(c) => Tail::Const(*c),
        SkKind::Nt0(d) => Tail::Nt0(*d),
        other => unreachable!("nullary skeleton root is {other:?}"),
    };
    let parent = sk.nodes[inserted].parent;
    let target = match parent {
        Some(p) if matches!(sk.nodes[p].kind, SkKind::Nt1(_)) => {
            let b = match &sk.nodes[p].kind {
                SkKind::Nt1(b) => *b,
                _ => unreachable!(),
            };
            let fresh = table.fresh(Origin::Nonterminal, 0);
            rules.push(HRule {
                lhs: fresh,
                rhs: HRhs {
                    items: vec![HItem::Nt1(b)],
                    tail: Some(gamma),
                },
            });
            sk.nodes[p].kind = SkKind::Nt0(fresh);
            sk.nodes[p].children.clear();
            p
        }
        _ => {
            // Uniformity: wrap even when the node above is not of arity 1.
            let fresh = table.fresh(Origin::Nonterminal, 0);
            rules.push(HRule {
                lhs: fresh,
                rhs: HRhs {
                    items: vec![],
                    tail: Some(gamma),
                },
            });
            sk.nodes[inserted].kind = SkKind::Nt0(fresh);
            sk.nodes[inserted].children.clear();
            inserted
        }
    };

    let v = match sk.nodes[target].parent {
        None => return, // the whole skeleton is the fresh rank-0 nonterminal
        Some(v) => v,
    };
    debug_assert!(matches!(sk.nodes[v].kind, SkKind::Letter(_)));
    let param_children: Vec<usize> = sk.nodes[v]
        .children
        .iter()
        .copied()
        .filter(|&c| sk.subtree_has_param(c))
        .collect();
    if param_children.len() >= 2 {
        return;
    }
    debug_assert_eq!(param_children.len(), 1);

    // Extract the handle f(g_1, ..., y, ..., g_l) around the remaining
    // parameter branch.
    let f = match &sk.nodes[v].kind {
        SkKind::Letter(f) => *f,
        _ => unreachable!(),
    };
    let spine = param_children[0];
    let mut hole = 0usize;
    let mut arms = Vec::new();
    for (i, &c) in sk.nodes[v].children.clone().iter().enumerate() {
        if c == spine {
            hole = i;
            continue;
        }
        let end = match &sk.nodes[c].kind {
            SkKind::Const(s) => ArmEnd::Const(*s),
            SkKind::Nt0(s) => ArmEnd::Nt0(*s),
            other => unreachable!("parameter-free skeleton subtree is {other:?}"),
        };
        arms.push(Arm { chain: vec![], end });
    }
    let a1 = table.fresh(Origin::Nonterminal, 1);
    rules.push(HRule {
        lhs: a1,
        rhs: HRhs {
            items: vec![HItem::Handle(Handle {
                head: f,
                hole,
                arms,
            })],
            tail: None,
        },
    });
    sk.nodes[v].kind = SkKind::Nt1(a1);
    sk.nodes[v].children = vec![spine];
    sk.nodes[spine].parent = Some(v);

    // SK1 restoration: v, its parent and its child may now form a run of two
    // or three degree-1 nodes; collapse with at most two extra rules.
    let child_nt = matches!(sk.nodes[spine].kind, SkKind::Nt1(_));
    if child_nt {
        let (top_sym, bot_sym) = match (&sk.nodes[v].kind, &sk.nodes[spine].kind) {
            (SkKind::Nt1(a), SkKind::Nt1(b)) => (*a, *b),
            _ => unreachable!(),
        };
        let fresh = table.fresh(Origin::Nonterminal, 1);
        rules.push(HRule {
            lhs: fresh,
            rhs: HRhs {
                items: vec![HItem::Nt1(top_sym), HItem::Nt1(bot_sym)],
                tail: None,
            },
        });
        sk.collapse_pair(v, spine, fresh);
    }
    if let Some(p) = sk.nodes[v].parent {
        if matches!(sk.nodes[p].kind, SkKind::Nt1(_)) {
            let (top_sym, bot_sym) = match (&sk.nodes[p].kind, &sk.nodes[v].kind) {
                (SkKind::Nt1(a), SkKind::Nt1(b)) => (*a, *b),
                _ => unreachable!(),
            };
            let fresh = table.fresh(Origin::Nonterminal, 1);
            rules.push(HRule {
                lhs: fresh,
                rhs: HRhs {
                    items: vec![HItem::Nt1(top_sym), HItem::Nt1(bot_sym)],
                    tail: None,
                },
            });
            sk.collapse_pair(p, v, fresh);
        }
    }
}

/// Full normalization: CNF, then handle form.
pub fn normalize(g: &SlcfGrammar, table: &mut SymbolTable) -> (HandleGrammar, NormalizeAudit) {
    let cnf = to_cnf(g, table);
    debug_assert!(is_cnf(&cnf.0, table).is_ok());
    to_handle(&cnf, table)
}
