//! Straight-line context-free tree grammars: representation, validation,
//! evaluation (decompression), the size metric, and reasonable-grammar
//! cleanup.
//!
//! Text format: one production per line, `A(y1,...,yk) -> term`, parameters
//! written literally; the last line is the start production. A name is a
//! nonterminal exactly when it appears on some left-hand side.

use crate::symbol::{Origin, SymbolId, SymbolTable};
use crate::tree::{self, Lexer, NodeId, RankedTree, TermParseError, Token};
use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::rc::Rc;
use thiserror::Error;

pub const DEFAULT_NODE_BUDGET: usize = 100_000_000;

/// Right-hand-side term over letters, nonterminals and parameters, stored as
/// a flat arena so that deep terms never recurse on drop or traversal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    nodes: Vec<TermNode>,
    root: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermNode {
    Apply {
        sym: SymbolId,
        children: Vec<u32>,
    },
    /// 0-based parameter index (printed as y1, y2, ...).
    Param(u32),
}

impl Term {
    pub fn param(index: u32) -> Term {
        Term {
            nodes: vec![TermNode::Param(index)],
            root: 0,
        }
    }

    pub fn leaf(sym: SymbolId) -> Term {
        Term::apply(sym, vec![])
    }

    pub fn apply(sym: SymbolId, args: Vec<Term>) -> Term {
        let mut nodes = Vec::new();
        let mut children = Vec::with_capacity(args.len());
        for arg in args {
            let offset = nodes.len() as u32;
            children.push(arg.root + offset);
            nodes.extend(arg.nodes.into_iter().map(|n| shift(n, offset)));
        }
        let root = nodes.len() as u32;
        nodes.push(TermNode::Apply { sym, children });
        Term { nodes, root }
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn node(&self, id: u32) -> &TermNode {
        &self.nodes[id as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Preorder ids (root first, children left to right).
    pub fn preorder(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let TermNode::Apply { children, .. } = self.node(id) {
                stack.extend(children.iter().rev());
            }
        }
        out
    }

    pub fn non_param_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TermNode::Apply { .. }))
            .count()
    }

    /// Parameter indices in left-to-right order of occurrence.
    pub fn params_in_order(&self) -> Vec<u32> {
        self.preorder()
            .into_iter()
            .filter_map(|id| match self.node(id) {
                TermNode::Param(i) => Some(*i),
                _ => None,
            })
            .collect()
    }

    /// Rebuild with every `Apply(target, args)` replaced by `rhs` where the
    /// rhs parameter i stands for args[i]; other nodes are copied.
    pub fn substitute(&self, target: SymbolId, rhs: &Term) -> Term {
        let mut out = Term {
            nodes: Vec::new(),
            root: 0,
        };
        out.root = copy_subst(self, self.root, target, rhs, &mut out.nodes);
        out
    }
}

fn shift(node: TermNode, offset: u32) -> TermNode {
    match node {
        TermNode::Apply { sym, mut children } => {
            for c in &mut children {
                *c += offset;
            }
            TermNode::Apply { sym, children }
        }
        p => p,
    }
}

fn copy_subst(src: &Term, at: u32, target: SymbolId, rhs: &Term, out: &mut Vec<TermNode>) -> u32 {
    // On hitting Apply(target, args) in `src`, the args are copied first;
    // `rhs` is then copied with Param(i) resolving to the copied arg roots.
    enum Task<'a> {
        Copy {
            term: &'a Term,
            at: u32,
            env: Option<Rc<Vec<u32>>>,
        },
        Finish {
            sym: SymbolId,
            arity: usize,
        },
        FinishSubst {
            rhs_env_arity: usize,
        },
    }
    let mut tasks: Vec<Task> = vec![Task::Copy {
        term: src,
        at,
        env: None,
    }];
    let mut values: Vec<u32> = Vec::new();
    while let Some(task) = tasks.pop() {
        match task {
            Task::Copy { term, at, env } => match term.node(at) {
                TermNode::Param(i) => {
                    if let Some(env) = env {
                        values.push(env[*i as usize]);
                    } else {
                        let id = out.len() as u32;
                        out.push(TermNode::Param(*i));
                        values.push(id);
                    }
                }
                TermNode::Apply { sym, children } => {
                    let is_target = env.is_none() && *sym == target;
                    if is_target {
                        tasks.push(Task::FinishSubst {
                            rhs_env_arity: children.len(),
                        });
                    } else {
                        tasks.push(Task::Finish {
                            sym: *sym,
                            arity: children.len(),
                        });
                    }
                    for &c in children.iter().rev() {
                        tasks.push(Task::Copy {
                            term,
                            at: c,
                            env: env.clone(),
                        });
                    }
                }
            },
            Task::Finish { sym, arity } => {
                let kids = values.split_off(values.len() - arity);
                let id = out.len() as u32;
                out.push(TermNode::Apply {
                    sym,
                    children: kids,
                });
                values.push(id);
            }
            Task::FinishSubst { rhs_env_arity } => {
                let args = values.split_off(values.len() - rhs_env_arity);
                let env = Rc::new(args);
                tasks.push(Task::Copy {
                    term: rhs,
                    at: rhs.root,
                    env: Some(env),
                });
            }
        }
    }
    debug_assert_eq!(values.len(), 1);
    values.pop().unwrap()
}

/// One production A -> rhs; the lhs rank is the symbol's rank.
#[derive(Clone, Debug)]
pub struct Production {
    pub lhs: SymbolId,
    pub rhs: Term,
}

impl Production {
    /// Non-parameter nodes of the right-hand side.
    pub fn size(&self) -> usize {
        self.rhs.non_param_count()
    }
}

/// Ordered straight-line grammar; the start production is last.
#[derive(Clone, Debug)]
pub struct SlcfGrammar {
    pub productions: Vec<Production>,
    pub start: SymbolId,
    index: HashMap<SymbolId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Name of the offending production's left-hand side.
    pub production: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    DuplicateLhs,
    EmptyRhs,
    MissingParam(u32),
    DuplicateParam(u32),
    ParamOutOfRange(u32),
    ParamsOutOfOrder,
    ForwardOrSelfReference(String),
    RankMismatch {
        symbol: String,
        expected: u32,
        found: usize,
    },
    StartNotNullary,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "production `{}`: ", self.production)?;
        match &self.kind {
            ViolationKind::DuplicateLhs => write!(f, "more than one rule for this nonterminal"),
            ViolationKind::EmptyRhs => write!(f, "right-hand side has no non-parameter node"),
            ViolationKind::MissingParam(i) => write!(f, "parameter y{} does not occur", i + 1),
            ViolationKind::DuplicateParam(i) => {
                write!(f, "parameter y{} occurs more than once", i + 1)
            }
            ViolationKind::ParamOutOfRange(i) => {
                write!(f, "parameter index y{} exceeds the rank", i + 1)
            }
            ViolationKind::ParamsOutOfOrder => write!(f, "parameters do not occur in order y1..yk"),
            ViolationKind::ForwardOrSelfReference(n) => {
                write!(f, "reference to `{n}` breaks the straight-line order")
            }
            ViolationKind::RankMismatch {
                symbol,
                expected,
                found,
            } => {
                write!(
                    f,
                    "`{symbol}` has rank {expected} but is applied to {found} arguments"
                )
            }
            ViolationKind::StartNotNullary => write!(f, "start nonterminal must have rank 0"),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("expansion exceeds the node budget of {budget}")]
    BudgetExceeded { budget: usize },
}

impl SlcfGrammar {
    pub fn new(productions: Vec<Production>, start: SymbolId) -> SlcfGrammar {
        let mut index = HashMap::new();
        for (i, p) in productions.iter().enumerate() {
            index.entry(p.lhs).or_insert(i);
        }
        SlcfGrammar {
            productions,
            start,
            index,
        }
    }

    pub fn production(&self, sym: SymbolId) -> Option<&Production> {
        self.index.get(&sym).map(|&i| &self.productions[i])
    }

    pub fn is_nonterminal(&self, sym: SymbolId) -> bool {
        self.index.contains_key(&sym)
    }

    /// Total number of non-parameter nodes over all right-hand sides.
    pub fn size(&self) -> usize {
        self.productions.iter().map(|p| p.size()).sum()
    }

    /// Checks linearity, parameter order, straight-line order, rank
    /// consistency and the start condition.
    pub fn validate(&self, table: &SymbolTable) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let mut seen: HashMap<SymbolId, usize> = HashMap::new();
        for (i, p) in self.productions.iter().enumerate() {
            let pname = table.name(p.lhs).to_owned();
            if let Some(_prev) = seen.insert(p.lhs, i) {
                violations.push(Violation {
                    production: pname.clone(),
                    kind: ViolationKind::DuplicateLhs,
                });
            }
            if p.rhs.non_param_count() == 0 {
                violations.push(Violation {
                    production: pname.clone(),
                    kind: ViolationKind::EmptyRhs,
                });
            }
            let rank = table.rank(p.lhs);
            let params = p.rhs.params_in_order();
            let mut counts = vec![0usize; rank as usize];
            let mut out_of_range = false;
            for &ix in &params {
                if ix >= rank {
                    violations.push(Violation {
                        production: pname.clone(),
                        kind: ViolationKind::ParamOutOfRange(ix),
                    });
                    out_of_range = true;
                } else {
                    counts[ix as usize] += 1;
                }
            }
            for (ix, &c) in counts.iter().enumerate() {
                if c == 0 {
                    violations.push(Violation {
                        production: pname.clone(),
                        kind: ViolationKind::MissingParam(ix as u32),
                    });
                } else if c > 1 {
                    violations.push(Violation {
                        production: pname.clone(),
                        kind: ViolationKind::DuplicateParam(ix as u32),
                    });
                }
            }
            if !out_of_range
                && counts.iter().all(|&c| c == 1)
                && params.iter().enumerate().any(|(j, &ix)| ix != j as u32)
            {
                violations.push(Violation {
                    production: pname.clone(),
                    kind: ViolationKind::ParamsOutOfOrder,
                });
            }
            for id in 0..p.rhs.len() as u32 {
                if let TermNode::Apply { sym, children } = p.rhs.node(id) {
                    if table.rank(*sym) as usize != children.len() {
                        violations.push(Violation {
                            production: pname.clone(),
                            kind: ViolationKind::RankMismatch {
                                symbol: table.name(*sym).to_owned(),
                                expected: table.rank(*sym),
                                found: children.len(),
                            },
                        });
                    }
                    if let Some(&j) = self.index.get(sym) {
                        if j >= i {
                            violations.push(Violation {
                                production: pname.clone(),
                                kind: ViolationKind::ForwardOrSelfReference(
                                    table.name(*sym).to_owned(),
                                ),
                            });
                        }
                    }
                }
            }
        }
        match self.productions.last() {
            Some(last) if last.lhs == self.start && table.rank(self.start) == 0 => {}
            _ => violations.push(Violation {
                production: table.name(self.start).to_owned(),
                kind: ViolationKind::StartNotNullary,
            }),
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Expand the grammar to the unique tree it derives. Expansion is
    /// top-down with an explicit stack and aborts once `node_budget` arena
    /// nodes have been created.
    pub fn eval(&self, node_budget: usize) -> Result<RankedTree, EvalError> {
        struct Env<'g> {
            /// For parameter i: the argument subtree and its environment.
            args: Vec<(&'g Term, u32, Option<Rc<Env<'g>>>)>,
        }
        enum Job<'g> {
            Expand {
                term: &'g Term,
                at: u32,
                env: Option<Rc<Env<'g>>>,
                parent: Option<NodeId>,
            },
        }
        let mut tree = RankedTree::new();
        let start_prod = self
            .production(self.start)
            .expect("start nonterminal has a production");
        let mut jobs = vec![Job::Expand {
            term: &start_prod.rhs,
            at: start_prod.rhs.root(),
            env: None,
            parent: None,
        }];
        let mut created = 0usize;
        let mut root = None;
        while let Some(Job::Expand {
            term,
            at,
            env,
            parent,
        }) = jobs.pop()
        {
            match term.node(at) {
                TermNode::Param(i) => {
                    let env = env.expect("parameter outside any environment");
                    let (t, a, e) = env.args[*i as usize].clone();
                    jobs.push(Job::Expand {
                        term: t,
                        at: a,
                        env: e,
                        parent,
                    });
                }
                TermNode::Apply { sym, children } => {
                    if let Some(p) = self.production(*sym) {
                        let args = children
                            .iter()
                            .map(|&c| (term, c, env.clone()))
                            .collect::<Vec<_>>();
                        let new_env = Rc::new(Env { args });
                        jobs.push(Job::Expand {
                            term: &p.rhs,
                            at: p.rhs.root(),
                            env: Some(new_env),
                            parent,
                        });
                    } else {
                        created += 1;
                        if created > node_budget {
                            return Err(EvalError::BudgetExceeded {
                                budget: node_budget,
                            });
                        }
                        let node = tree.push_node(*sym, vec![]);
                        match parent {
                            Some(p) => tree.attach(p, node),
                            None => root = Some(node),
                        }
                        for &c in children.iter().rev() {
                            jobs.push(Job::Expand {
                                term,
                                at: c,
                                env: env.clone(),
                                parent: Some(node),
                            });
                        }
                    }
                }
            }
        }
        tree.set_root(root.expect("grammar derives a nonempty tree"));
        Ok(tree)
    }

    /// Removes unit productions (by inlining) and nonterminals unused in the
    /// start derivation. The result derives the same tree and, when that tree
    /// has n >= 1 nodes, has size <= 2n - 1.
    pub fn cleanup_reasonable(&self) -> SlcfGrammar {
        let reachable = self.reachable_set();
        let kept: Vec<&Production> = self
            .productions
            .iter()
            .filter(|p| reachable.contains_key(&p.lhs))
            .collect();

        let mut unit_subst: HashMap<SymbolId, Term> = HashMap::new();
        let mut out: Vec<Production> = Vec::new();
        for (pos, p) in kept.iter().enumerate() {
            let is_start = pos + 1 == kept.len();
            let mut rhs = p.rhs.clone();
            // Inline previously recorded unit rules; each substitution keeps
            // the non-parameter count unchanged, so one pass suffices.
            loop {
                let mut hit = None;
                for id in 0..rhs.len() as u32 {
                    if let TermNode::Apply { sym, .. } = rhs.node(id) {
                        if unit_subst.contains_key(sym) {
                            hit = Some(*sym);
                            break;
                        }
                    }
                }
                match hit {
                    Some(sym) => rhs = rhs.substitute(sym, &unit_subst[&sym]),
                    None => break,
                }
            }
            if !is_start && rhs.non_param_count() == 1 {
                unit_subst.insert(p.lhs, rhs);
                continue;
            }
            if is_start && rhs.non_param_count() == 1 {
                // A unit start whose single node is an emitted nonterminal is
                // inlined; a single letter stays (the derived tree has size 1).
                if let TermNode::Apply { sym, .. } = rhs.node(rhs.root()) {
                    let sym = *sym;
                    if let Some(inner) = out.iter().find(|q| q.lhs == sym) {
                        let inner_rhs = inner.rhs.clone();
                        rhs = rhs.substitute(sym, &inner_rhs);
                    }
                }
            }
            out.push(Production { lhs: p.lhs, rhs });
        }
        let g = SlcfGrammar::new(out, self.start);
        // Inlining can strand nonterminals that were only used by inlined
        // rules; prune them.
        let reachable = g.reachable_set();
        let productions = g
            .productions
            .into_iter()
            .filter(|p| reachable.contains_key(&p.lhs))
            .collect();
        SlcfGrammar::new(productions, self.start)
    }

    fn reachable_set(&self) -> HashMap<SymbolId, ()> {
        let mut reach = HashMap::new();
        let mut stack = vec![self.start];
        while let Some(sym) = stack.pop() {
            if reach.insert(sym, ()).is_some() {
                continue;
            }
            if let Some(p) = self.production(sym) {
                for node in &p.rhs.nodes {
                    if let TermNode::Apply { sym, .. } = node {
                        if self.is_nonterminal(*sym) {
                            stack.push(*sym);
                        }
                    }
                }
            }
        }
        reach
    }

    pub fn to_text(&self, table: &SymbolTable) -> String {
        let mut out = String::new();
        for p in &self.productions {
            let rank = table.rank(p.lhs);
            // Pick a parameter prefix that no symbol in this rhs shadows.
            let mut prefix = "y";
            let candidates = ["y", "_y", "__y"];
            'pick: for cand in candidates {
                for node in &p.rhs.nodes {
                    if let TermNode::Apply { sym, .. } = node {
                        let name = table.name(*sym);
                        if let Some(rest) = name.strip_prefix(cand) {
                            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                                continue 'pick;
                            }
                        }
                    }
                }
                prefix = cand;
                break;
            }
            let _ = write!(out, "{}", table.name(p.lhs));
            if rank > 0 {
                out.push('(');
                for i in 0..rank {
                    if i > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{prefix}{}", i + 1);
                }
                out.push(')');
            }
            out.push_str(" -> ");
            write_term(&mut out, &p.rhs, table, prefix);
            out.push('\n');
        }
        out
    }

    /// Parse the grammar text format; the last line is the start production.
    pub fn parse(src: &str, table: &mut SymbolTable) -> Result<SlcfGrammar, TermParseError> {
        let mut productions = Vec::new();
        for line in src.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut lx = Lexer::new(line, true);
            let (tok, at) = lx.next_token()?;
            let (s, e) = match tok {
                Token::Ident { start, end } => (start, end),
                other => {
                    let (line, col) = lx.line_col(at);
                    return Err(TermParseError::Unexpected {
                        line,
                        col,
                        expected: "a nonterminal name",
                        found: lx.describe(other),
                    });
                }
            };
            let lhs_name = lx.text(s, e).to_owned();
            let mut params: Vec<String> = Vec::new();
            if lx.peek()? == Token::LParen {
                lx.next_token()?;
                loop {
                    let (tok, at) = lx.next_token()?;
                    match tok {
                        Token::Ident { start, end } => params.push(lx.text(start, end).to_owned()),
                        other => {
                            let (line, col) = lx.line_col(at);
                            return Err(TermParseError::Unexpected {
                                line,
                                col,
                                expected: "a parameter name",
                                found: lx.describe(other),
                            });
                        }
                    }
                    let (tok, at) = lx.next_token()?;
                    match tok {
                        Token::Comma => continue,
                        Token::RParen => break,
                        other => {
                            let (line, col) = lx.line_col(at);
                            return Err(TermParseError::Unexpected {
                                line,
                                col,
                                expected: "`,` or `)`",
                                found: lx.describe(other),
                            });
                        }
                    }
                }
            }
            let (tok, at) = lx.next_token()?;
            if tok != Token::Arrow {
                let (line, col) = lx.line_col(at);
                return Err(TermParseError::Unexpected {
                    line,
                    col,
                    expected: "`->`",
                    found: lx.describe(tok),
                });
            }
            let proto = tree::parse_proto(&mut lx)?;
            let (tok, at) = lx.next_token()?;
            if tok != Token::End {
                let (line, col) = lx.line_col(at);
                return Err(TermParseError::Unexpected {
                    line,
                    col,
                    expected: "end of line",
                    found: lx.describe(tok),
                });
            }
            let arities = proto.arities(&lx)?;

            // Interning: lhs first (rank = parameter count), then rhs names;
            // names matching a declared parameter become parameters.
            let lhs = intern_or_err(table, &lhs_name, params.len() as u32, &lx, 0)?;
            let mut kind: Vec<Option<TermNode>> = vec![None; proto.names.len()];
            for (i, name) in proto.names.iter().enumerate() {
                if let Some(pi) = params.iter().position(|p| p == name) {
                    if arities[i] != 0 {
                        let (line, col) = lx.line_col(proto.name_pos[i]);
                        return Err(TermParseError::RankConflict {
                            line,
                            col,
                            name: name.clone(),
                            existing: 0,
                            conflicting: arities[i],
                        });
                    }
                    kind[i] = Some(TermNode::Param(pi as u32));
                } else {
                    let id = intern_or_err(table, name, arities[i] as u32, &lx, proto.name_pos[i])?;
                    kind[i] = Some(TermNode::Apply {
                        sym: id,
                        children: vec![],
                    });
                }
            }
            // Build the Term arena in proto (completion) order.
            let mut nodes: Vec<TermNode> = Vec::with_capacity(proto.nodes.len());
            for (ni, children) in &proto.nodes {
                let mut node = kind[*ni].clone().unwrap();
                if let TermNode::Apply {
                    children: slots, ..
                } = &mut node
                {
                    *slots = children.iter().map(|&c| c as u32).collect();
                }
                nodes.push(node);
            }
            let rhs = Term {
                root: proto.root as u32,
                nodes,
            };
            productions.push(Production { lhs, rhs });
        }
        let start = match productions.last() {
            Some(p) => p.lhs,
            None => return Err(TermParseError::UnexpectedEnd),
        };
        Ok(SlcfGrammar::new(productions, start))
    }
}

fn intern_or_err(
    table: &mut SymbolTable,
    name: &str,
    rank: u32,
    lx: &Lexer<'_>,
    pos: usize,
) -> Result<SymbolId, TermParseError> {
    table.intern(name, rank, Origin::Input).map_err(|e| {
        let (line, col) = lx.line_col(pos);
        TermParseError::RankConflict {
            line,
            col,
            name: e.name,
            existing: e.existing as usize,
            conflicting: e.conflicting as usize,
        }
    })
}

fn write_term(out: &mut String, term: &Term, table: &SymbolTable, param_prefix: &str) {
    enum Step {
        Node(u32),
        Text(&'static str),
    }
    let mut stack = vec![Step::Node(term.root())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Text(s) => out.push_str(s),
            Step::Node(id) => match term.node(id) {
                TermNode::Param(i) => {
                    let _ = write!(out, "{param_prefix}{}", i + 1);
                }
                TermNode::Apply { sym, children } => {
                    let _ = write!(out, "{}", table.name(*sym));
                    if !children.is_empty() {
                        out.push('(');
                        stack.push(Step::Text(")"));
                        for (i, &c) in children.iter().enumerate().rev() {
                            stack.push(Step::Node(c));
                            if i > 0 {
                                stack.push(Step::Text(","));
                            }
                        }
                    }
                }
            },
        }
    }
}
