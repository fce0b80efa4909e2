//! Ranked ordered labelled trees in an arena, with a text term format and
//! chain/leaf enumeration utilities.
//!
//! Term syntax: `name` or `name(t1,...,tk)`, names matching
//! `[A-Za-z_][A-Za-z0-9_]*`; whitespace between tokens is insignificant and a
//! name is used with one consistent arity throughout a document.

use crate::symbol::{Origin, SymbolId, SymbolTable};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Arena index of a tree node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Arena of nodes. Freed ids are tombstoned, never reused, so occurrence
/// records taken before a replacement pass stay valid throughout the pass.
#[derive(Debug, Clone)]
pub struct RankedTree {
    labels: Vec<SymbolId>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Option<NodeId>>,
    alive: Vec<bool>,
    root: NodeId,
    live: usize,
}

impl RankedTree {
    pub fn new() -> Self {
        RankedTree {
            labels: Vec::new(),
            children: Vec::new(),
            parents: Vec::new(),
            alive: Vec::new(),
            root: NodeId(0),
            live: 0,
        }
    }

    /// Add a node whose children already exist; wires their parent pointers.
    pub fn push_node(&mut self, label: SymbolId, children: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.labels.len() as u32);
        for &c in &children {
            self.parents[c.index()] = Some(id);
        }
        self.labels.push(label);
        self.children.push(children);
        self.parents.push(None);
        self.alive.push(true);
        self.live += 1;
        id
    }

    pub fn set_root(&mut self, root: NodeId) {
        self.root = root;
        self.parents[root.index()] = None;
    }

    #[inline]
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Number of live nodes |t|.
    #[inline]
    pub fn size(&self) -> usize {
        self.live
    }

    #[inline]
    pub fn label(&self, n: NodeId) -> SymbolId {
        self.labels[n.index()]
    }

    #[inline]
    pub fn set_label(&mut self, n: NodeId, label: SymbolId) {
        self.labels[n.index()] = label;
    }

    #[inline]
    pub fn children(&self, n: NodeId) -> &[NodeId] {
        &self.children[n.index()]
    }

    #[inline]
    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.parents[n.index()]
    }

    #[inline]
    pub fn is_alive(&self, n: NodeId) -> bool {
        self.alive[n.index()]
    }

    #[inline]
    pub fn arity(&self, n: NodeId) -> usize {
        self.children[n.index()].len()
    }

    /// Append `child` to `parent`'s child list (top-down construction).
    pub fn attach(&mut self, parent: NodeId, child: NodeId) {
        self.children[parent.index()].push(child);
        self.parents[child.index()] = Some(parent);
    }

    pub fn set_children(&mut self, n: NodeId, children: Vec<NodeId>) {
        for &c in &children {
            self.parents[c.index()] = Some(n);
        }
        self.children[n.index()] = children;
    }

    /// Tombstone a node removed by a compression step.
    pub fn kill(&mut self, n: NodeId) {
        debug_assert!(self.alive[n.index()]);
        self.alive[n.index()] = false;
        self.live -= 1;
    }

    /// Preorder traversal of live nodes.
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder {
            tree: self,
            stack: if self.live > 0 {
                vec![self.root]
            } else {
                vec![]
            },
        }
    }

    /// Structural equality with labels compared canonically.
    pub fn structural_eq(&self, other: &RankedTree, table: &SymbolTable) -> bool {
        if self.size() != other.size() {
            return false;
        }
        if self.size() == 0 {
            return true;
        }
        let mut stack = vec![(self.root, other.root)];
        while let Some((a, b)) = stack.pop() {
            if table.canon(self.label(a)) != table.canon(other.label(b)) {
                return false;
            }
            let ca = self.children(a);
            let cb = other.children(b);
            if ca.len() != cb.len() {
                return false;
            }
            stack.extend(ca.iter().copied().zip(cb.iter().copied()));
        }
        true
    }

    /// Consistency check used by tests: ranks match arities, parent pointers
    /// match child lists, exactly one root, live count correct.
    pub fn check_consistency(&self, table: &SymbolTable) -> Result<(), String> {
        let mut seen = 0usize;
        for n in self.preorder() {
            seen += 1;
            if table.rank(self.label(n)) as usize != self.arity(n) {
                return Err(format!(
                    "node {:?} labelled {} has {} children, rank is {}",
                    n,
                    table.name(self.label(n)),
                    self.arity(n),
                    table.rank(self.label(n))
                ));
            }
            for &c in self.children(n) {
                if self.parent(c) != Some(n) {
                    return Err(format!("parent pointer of {:?} inconsistent", c));
                }
                if !self.is_alive(c) {
                    return Err(format!("dead child {:?} reachable", c));
                }
            }
        }
        if seen != self.live {
            return Err(format!(
                "live count {} but traversal saw {}",
                self.live, seen
            ));
        }
        if self.live > 0 && self.parent(self.root).is_some() {
            return Err("root has a parent".into());
        }
        Ok(())
    }
}

impl Default for RankedTree {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Preorder<'a> {
    tree: &'a RankedTree,
    stack: Vec<NodeId>,
}

impl Iterator for Preorder<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let n = self.stack.pop()?;
        self.stack
            .extend(self.tree.children(n).iter().rev().copied());
        Some(n)
    }
}

/// An a-maximal chain: a maximal run of `length` unary nodes all labelled
/// `letter`, from `top` down to `bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chain {
    pub letter: SymbolId,
    pub top: NodeId,
    pub bottom: NodeId,
    pub length: usize,
}

/// Result of chain enumeration: the letter-maximal chains of length >= 2
/// (grouped per letter) plus the count of maximal chains regardless of label.
#[derive(Debug, Clone)]
pub struct ChainReport {
    pub chains: Vec<Chain>,
    pub maximal_chain_count: usize,
}

/// Every maximal run of >= 2 equal unary letters, reported once with its
/// top-most node, grouped per letter; also counts maximal chains (runs of
/// unary nodes regardless of label).
pub fn enumerate_maximal_chains(tree: &RankedTree) -> ChainReport {
    let mut chains = Vec::new();
    let mut maximal = 0usize;
    let mut order = HashMap::new();
    for (pre, n) in tree.preorder().enumerate() {
        order.insert(n, pre);
        if tree.arity(n) != 1 {
            continue;
        }
        let unary_parent = tree.parent(n).map(|p| tree.arity(p) == 1).unwrap_or(false);
        if !unary_parent {
            maximal += 1;
        }
        let a = tree.label(n);
        let same_label_parent = tree.parent(n).map(|p| tree.label(p) == a).unwrap_or(false);
        if same_label_parent {
            continue; // not the top of its a-maximal chain
        }
        let mut bottom = n;
        let mut len = 1usize;
        loop {
            let child = tree.children(bottom)[0];
            if tree.arity(child) == 1 && tree.label(child) == a {
                bottom = child;
                len += 1;
            } else {
                break;
            }
        }
        if len >= 2 {
            chains.push(Chain {
                letter: a,
                top: n,
                bottom,
                length: len,
            });
        }
    }
    chains.sort_by_key(|c| (c.letter, order[&c.top]));
    ChainReport {
        chains,
        maximal_chain_count: maximal,
    }
}

/// Node counts by label rank: (n0, n1, n_ge2).
pub fn count_by_rank(tree: &RankedTree) -> (usize, usize, usize) {
    let mut n = (0usize, 0usize, 0usize);
    for v in tree.preorder() {
        match tree.arity(v) {
            0 => n.0 += 1,
            1 => n.1 += 1,
            _ => n.2 += 1,
        }
    }
    n
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermParseError {
    #[error("line {line}, col {col}: unexpected character `{ch}`")]
    UnexpectedChar { line: usize, col: usize, ch: char },
    #[error("line {line}, col {col}: expected {expected}, found {found}")]
    Unexpected {
        line: usize,
        col: usize,
        expected: &'static str,
        found: String,
    },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error(
        "line {line}, col {col}: rank conflict for `{name}`: arity {existing} vs {conflicting}"
    )]
    RankConflict {
        line: usize,
        col: usize,
        name: String,
        existing: usize,
        conflicting: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Token {
    Ident { start: usize, end: usize },
    LParen,
    RParen,
    Comma,
    Arrow,
    End,
}

pub(crate) struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    peeked: Option<(Token, usize)>,
    allow_arrow: bool,
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(src: &'a str, allow_arrow: bool) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            peeked: None,
            allow_arrow,
        }
    }

    pub(crate) fn line_col(&self, pos: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for b in &self.bytes[..pos.min(self.bytes.len())] {
            if *b == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    pub(crate) fn text(&self, start: usize, end: usize) -> &'a str {
        &self.src[start..end]
    }

    fn lex(&mut self) -> Result<(Token, usize), TermParseError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let at = self.pos;
        if self.pos >= self.bytes.len() {
            return Ok((Token::End, at));
        }
        let b = self.bytes[self.pos];
        match b {
            b'(' => {
                self.pos += 1;
                Ok((Token::LParen, at))
            }
            b')' => {
                self.pos += 1;
                Ok((Token::RParen, at))
            }
            b',' => {
                self.pos += 1;
                Ok((Token::Comma, at))
            }
            b'-' if self.allow_arrow && self.bytes.get(self.pos + 1) == Some(&b'>') => {
                self.pos += 2;
                Ok((Token::Arrow, at))
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric()
                        || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Ok((
                    Token::Ident {
                        start,
                        end: self.pos,
                    },
                    at,
                ))
            }
            _ => {
                let (line, col) = self.line_col(at);
                Err(TermParseError::UnexpectedChar {
                    line,
                    col,
                    ch: self.src[at..].chars().next().unwrap(),
                })
            }
        }
    }

    pub(crate) fn next_token(&mut self) -> Result<(Token, usize), TermParseError> {
        if let Some(t) = self.peeked.take() {
            return Ok(t);
        }
        self.lex()
    }

    pub(crate) fn peek(&mut self) -> Result<Token, TermParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex()?);
        }
        Ok(self.peeked.unwrap().0)
    }

    pub(crate) fn describe(&self, tok: Token) -> String {
        match tok {
            Token::Ident { start, end } => format!("`{}`", &self.src[start..end]),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Arrow => "`->`".into(),
            Token::End => "end of input".into(),
        }
    }
}

/// A raw parsed term: names plus structure, before symbol interning.
pub(crate) struct ProtoTree {
    /// Names in first-occurrence order.
    pub names: Vec<String>,
    pub name_pos: Vec<usize>,
    /// (name index, child proto ids) in completion order; last is the root.
    pub nodes: Vec<(usize, Vec<usize>)>,
    pub root: usize,
}

/// Parses one term from `lx`, stopping at the first token that cannot extend
/// the term (which is left unconsumed only if it is `End`, `Comma`, `RParen`
/// or `Arrow` at nesting depth 0 -- callers check what follows).
pub(crate) fn parse_proto(lx: &mut Lexer<'_>) -> Result<ProtoTree, TermParseError> {
    let mut names: Vec<String> = Vec::new();
    let mut name_idx: HashMap<String, usize> = HashMap::new();
    let mut name_pos: Vec<usize> = Vec::new();
    let mut nodes: Vec<(usize, Vec<usize>)> = Vec::new();
    // Stack of open frames: (name index, children so far).
    let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();

    let mut intern =
        |names: &mut Vec<String>, name_pos: &mut Vec<usize>, s: &str, at: usize| -> usize {
            if let Some(&i) = name_idx.get(s) {
                return i;
            }
            let i = names.len();
            names.push(s.to_owned());
            name_pos.push(at);
            name_idx.insert(s.to_owned(), i);
            i
        };

    loop {
        // Expect a term: an identifier, possibly opening a frame.
        let (tok, at) = lx.next_token()?;
        let (start, end) = match tok {
            Token::Ident { start, end } => (start, end),
            Token::End => return Err(TermParseError::UnexpectedEnd),
            other => {
                let (line, col) = lx.line_col(at);
                return Err(TermParseError::Unexpected {
                    line,
                    col,
                    expected: "a name",
                    found: lx.describe(other),
                });
            }
        };
        let ni = intern(&mut names, &mut name_pos, lx.text(start, end), at);

        let mut completed: usize;
        if lx.peek()? == Token::LParen {
            lx.next_token()?;
            stack.push((ni, Vec::new()));
            continue;
        } else {
            nodes.push((ni, Vec::new()));
            completed = nodes.len() - 1;
        }

        // Reduce completed subterms into their parents.
        loop {
            match stack.last_mut() {
                None => {
                    return Ok(ProtoTree {
                        names,
                        name_pos,
                        root: completed,
                        nodes,
                    });
                }
                Some(frame) => {
                    frame.1.push(completed);
                    let (tok, at) = lx.next_token()?;
                    match tok {
                        Token::Comma => break, // next child
                        Token::RParen => {
                            let (ni, children) = stack.pop().unwrap();
                            nodes.push((ni, children));
                            completed = nodes.len() - 1;
                        }
                        Token::End => return Err(TermParseError::UnexpectedEnd),
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
        }
    }
}

impl ProtoTree {
    /// Arity of each name, checking that every use agrees.
    pub(crate) fn arities(&self, lx: &Lexer<'_>) -> Result<Vec<usize>, TermParseError> {
        let mut arity: Vec<Option<usize>> = vec![None; self.names.len()];
        for (ni, children) in &self.nodes {
            match arity[*ni] {
                None => arity[*ni] = Some(children.len()),
                Some(a) if a == children.len() => {}
                Some(a) => {
                    let (line, col) = lx.line_col(self.name_pos[*ni]);
                    return Err(TermParseError::RankConflict {
                        line,
                        col,
                        name: self.names[*ni].clone(),
                        existing: a.min(children.len()),
                        conflicting: a.max(children.len()),
                    });
                }
            }
        }
        Ok(arity.into_iter().map(|a| a.unwrap()).collect())
    }
}

/// Parse a term into a tree, interning symbols (ids in first-occurrence
/// order, ranks inferred from arity).
pub fn parse_term(src: &str, table: &mut SymbolTable) -> Result<RankedTree, TermParseError> {
    let mut lx = Lexer::new(src, false);
    let proto = parse_proto(&mut lx)?;
    let (tok, at) = lx.next_token()?;
    if tok != Token::End {
        let (line, col) = lx.line_col(at);
        return Err(TermParseError::Unexpected {
            line,
            col,
            expected: "end of input",
            found: lx.describe(tok),
        });
    }
    let arities = proto.arities(&lx)?;
    let mut ids = Vec::with_capacity(proto.names.len());
    for (i, name) in proto.names.iter().enumerate() {
        match table.intern(name, arities[i] as u32, Origin::Input) {
            Ok(id) => ids.push(id),
            Err(e) => {
                let (line, col) = lx.line_col(proto.name_pos[i]);
                return Err(TermParseError::RankConflict {
                    line,
                    col,
                    name: e.name,
                    existing: e.existing as usize,
                    conflicting: e.conflicting as usize,
                });
            }
        }
    }
    Ok(build_tree(&proto, &ids))
}

pub(crate) fn build_tree(proto: &ProtoTree, ids: &[SymbolId]) -> RankedTree {
    // Proto nodes are in completion (post) order, so children precede parents.
    let mut tree = RankedTree::new();
    let mut map = vec![NodeId(0); proto.nodes.len()];
    for (pi, (ni, children)) in proto.nodes.iter().enumerate() {
        let kids = children.iter().map(|&c| map[c]).collect();
        map[pi] = tree.push_node(ids[*ni], kids);
    }
    tree.set_root(map[proto.root]);
    tree
}

/// Serialize a tree to term text; inverse of `parse_term`.
pub fn serialize_term(tree: &RankedTree, table: &SymbolTable) -> String {
    let mut out = String::new();
    if tree.size() == 0 {
        return out;
    }
    enum Step {
        Node(NodeId),
        Text(&'static str),
    }
    let mut stack = vec![Step::Node(tree.root())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Text(s) => out.push_str(s),
            Step::Node(n) => {
                let _ = write!(out, "{}", table.name(tree.label(n)));
                let kids = tree.children(n);
                if !kids.is_empty() {
                    out.push('(');
                    stack.push(Step::Text(")"));
                    for (i, &c) in kids.iter().enumerate().rev() {
                        stack.push(Step::Node(c));
                        if i > 0 {
                            stack.push(Step::Text(","));
                        }
                    }
                }
            }
        }
    }
    out
}
