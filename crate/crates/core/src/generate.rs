//! Deterministic input generators. All randomness flows from a single u64
//! seed through SplitMix64, so identical seeds give byte-identical outputs.

use crate::symbol::{Origin, SymbolId, SymbolTable};
use crate::tree::{NodeId, RankedTree};

/// SplitMix64: tiny, fast, and stable across platforms and versions.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform value in [0, n); n must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for our n and irrelevant for
        // determinism, which is all we promise.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn range(&mut self, lo: u64, hi_inclusive: u64) -> u64 {
        lo + self.below(hi_inclusive - lo + 1)
    }

    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.below(den) < num
    }
}

fn letter(table: &mut SymbolTable, name: &str, rank: u32) -> SymbolId {
    table
        .intern(name, rank, Origin::Input)
        .expect("generator letter rank clash")
}

/// Caterpillar a^(n-1)(c): n nodes.
pub fn caterpillar(n: usize, table: &mut SymbolTable) -> RankedTree {
    assert!(n >= 1);
    let c = letter(table, "c", 0);
    let a = letter(table, "a", 1);
    let mut t = RankedTree::new();
    let mut cur = t.push_node(c, vec![]);
    for _ in 1..n {
        cur = t.push_node(a, vec![cur]);
    }
    t.set_root(cur);
    t
}

/// Full binary tree of f over constant leaves; depth d gives 2^(d+1)-1 nodes.
pub fn full_binary(depth: usize, table: &mut SymbolTable) -> RankedTree {
    let c = letter(table, "c", 0);
    let f = letter(table, "f", 2);
    let mut t = RankedTree::new();
    let mut level: Vec<NodeId> = (0..1usize << depth)
        .map(|_| t.push_node(c, vec![]))
        .collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| t.push_node(f, vec![pair[0], pair[1]]))
            .collect();
    }
    t.set_root(level[0]);
    t
}

/// Comb: f(c, f(c, ... f(c, c)...)), k inner nodes, 2k+1 nodes total.
pub fn comb(k: usize, table: &mut SymbolTable) -> RankedTree {
    let c = letter(table, "c", 0);
    let f = letter(table, "f", 2);
    let mut t = RankedTree::new();
    let mut cur = t.push_node(c, vec![]);
    for _ in 0..k {
        let leaf = t.push_node(c, vec![]);
        cur = t.push_node(f, vec![leaf, cur]);
    }
    t.set_root(cur);
    t
}

/// Random tree with exactly `size` nodes and ranks <= `max_rank`.
/// Two letters per rank keep the alphabet small but non-trivial.
pub fn random_tree(
    rng: &mut SplitMix64,
    size: usize,
    max_rank: usize,
    table: &mut SymbolTable,
) -> RankedTree {
    assert!(size >= 1);
    assert!(max_rank >= 1);
    let mut letters: Vec<Vec<SymbolId>> = Vec::new();
    for r in 0..=max_rank {
        letters.push(vec![
            letter(table, &format!("g{r}_0"), r as u32),
            letter(table, &format!("g{r}_1"), r as u32),
        ]);
    }
    let mut t = RankedTree::new();
    let root = gen_node(rng, size, max_rank, &letters, &mut t);
    t.set_root(root);
    t
}

fn gen_node(
    rng: &mut SplitMix64,
    budget: usize,
    max_rank: usize,
    letters: &[Vec<SymbolId>],
    t: &mut RankedTree,
) -> NodeId {
    // Iterative construction: tasks produce nodes bottom-up via a result stack.
    enum Task {
        Build { budget: usize },
        Finish { rank: usize },
    }
    let mut tasks = vec![Task::Build { budget }];
    let mut results: Vec<NodeId> = Vec::new();
    let mut ranks: Vec<usize> = Vec::new();
    while let Some(task) = tasks.pop() {
        match task {
            Task::Build { budget } => {
                let rank = if budget == 1 {
                    0
                } else {
                    1 + rng.below(max_rank.min(budget - 1) as u64) as usize
                };
                ranks.push(rank);
                tasks.push(Task::Finish { rank });
                if rank > 0 {
                    // Split budget-1 into `rank` parts, each >= 1.
                    let mut remaining = budget - 1;
                    let mut parts = Vec::with_capacity(rank);
                    for i in 0..rank {
                        let left = rank - i - 1;
                        let hi = remaining - left;
                        let part = if i == rank - 1 {
                            remaining
                        } else {
                            1 + rng.below(hi as u64) as usize
                        };
                        parts.push(part);
                        remaining -= part;
                    }
                    // Children build in order; push reversed so the leftmost
                    // child is produced first.
                    for &p in parts.iter().rev() {
                        tasks.push(Task::Build { budget: p });
                    }
                }
            }
            Task::Finish { rank } => {
                let kids = results.split_off(results.len() - rank);
                let choices = &letters[rank];
                let label = choices[rng.below(choices.len() as u64) as usize];
                let _ = ranks.pop();
                results.push(t.push_node(label, kids));
            }
        }
    }
    debug_assert_eq!(results.len(), 1);
    results.pop().unwrap()
}

/// Random valid SLCF grammar of roughly `target_size`, letter ranks up to
/// `max_rank`, whose derived tree has at most `expansion_cap` nodes.
pub fn random_grammar(
    rng: &mut SplitMix64,
    target_size: usize,
    max_rank: usize,
    expansion_cap: u64,
    table: &mut SymbolTable,
) -> crate::grammar::SlcfGrammar {
    use crate::grammar::{Production, SlcfGrammar, Term};

    let mut letters: Vec<Vec<SymbolId>> = Vec::new();
    for r in 0..=max_rank {
        letters.push(vec![
            letter(table, &format!("t{r}_0"), r as u32),
            letter(table, &format!("t{r}_1"), r as u32),
        ]);
    }

    // Pool of generated nonterminals: (symbol, rank, derived non-param nodes).
    let mut pool: Vec<(SymbolId, usize, u64)> = Vec::new();
    let mut productions: Vec<Production> = Vec::new();
    let mut total = 0usize;

    // One rhs with exactly `params` parameters in left-to-right order.
    // `weight` accumulates the derived size; the pool is only consulted for
    // nonterminals that keep the expansion under the cap.
    fn gen(
        rng: &mut SplitMix64,
        letters: &[Vec<SymbolId>],
        pool: &[(SymbolId, usize, u64)],
        params: usize,
        budget: usize,
        next_param: &mut u32,
        weight: &mut u64,
        cap: u64,
        depth: usize,
    ) -> Term {
        let max_rank = letters.len() - 1;
        if depth >= 8 || (budget <= 1 && params == 0) {
            // Wind down: a constant, or a letter over bare parameters.
            if params == 0 {
                *weight += 1;
                return Term::leaf(letters[0][rng.below(2) as usize]);
            }
            debug_assert!(params <= max_rank);
            *weight += 1;
            let sym = letters[params][rng.below(2) as usize];
            let args = (0..params)
                .map(|i| Term::param(*next_param + i as u32))
                .collect();
            *next_param += params as u32;
            return Term::apply(sym, args);
        }
        let lo = if params > 0 || budget > 1 { 1 } else { 0 };
        let hi = max_rank.max(lo);
        let arity = (lo + rng.below((hi - lo + 1) as u64) as usize)
            .max(params.min(max_rank))
            .min(max_rank);

        // A nonterminal of the right rank from the pool, sometimes.
        let candidates: Vec<&(SymbolId, usize, u64)> = pool
            .iter()
            .filter(|(_, r, w)| *r == arity && *weight + *w <= cap)
            .collect();
        let sym = if !candidates.is_empty() && rng.chance(2, 5) {
            let &&(s, _, w) = &candidates[rng.below(candidates.len() as u64) as usize];
            *weight += w;
            s
        } else {
            *weight += 1;
            letters[arity][rng.below(2) as usize]
        };

        if arity == 0 {
            return Term::leaf(sym);
        }
        // Spread the parameters over the children, in order.
        let mut remaining = params;
        let mut args = Vec::with_capacity(arity);
        for slot in 0..arity {
            let slots_left = arity - slot - 1;
            let take = if slots_left == 0 {
                remaining
            } else {
                let hi = remaining;
                rng.below(hi as u64 + 1) as usize
            };
            if take == 1 && rng.chance(1, 2) {
                let p = Term::param(*next_param);
                *next_param += 1;
                args.push(p);
            } else {
                args.push(gen(
                    rng,
                    letters,
                    pool,
                    take,
                    budget / arity,
                    next_param,
                    weight,
                    cap,
                    depth + 1,
                ));
            }
            remaining -= take;
        }
        Term::apply(sym, args)
    }

    while total + 3 < target_size {
        let rank = rng.below((max_rank + 1).min(3) as u64) as usize;
        let mut next_param = 0u32;
        let mut weight = 0u64;
        let budget = 2 + rng.below(5) as usize;
        let rhs = gen(
            rng,
            &letters,
            &pool,
            rank,
            budget,
            &mut next_param,
            &mut weight,
            expansion_cap / 2,
            0,
        );
        if rhs.non_param_count() == 0 {
            continue;
        }
        let lhs = table.fresh(Origin::Nonterminal, rank as u32);
        total += rhs.non_param_count();
        productions.push(Production { lhs, rhs });
        pool.push((lhs, rank, weight.max(1)));
    }

    // Start rule, rank 0.
    let mut next_param = 0u32;
    let mut weight = 0u64;
    let rhs = gen(
        rng,
        &letters,
        &pool,
        0,
        3,
        &mut next_param,
        &mut weight,
        expansion_cap,
        0,
    );
    let start = table.fresh(Origin::Nonterminal, 0);
    productions.push(Production { lhs: start, rhs });
    SlcfGrammar::new(productions, start)
}

/// Deterministic grammar of size about `g_target` whose derived tree has at
/// most `n_cap + 1` nodes: a base context over rank-`r` letters, composed and
/// doubled under the weight cap.
pub fn planted_grammar(
    rng: &mut SplitMix64,
    g_target: usize,
    r: usize,
    n_cap: u64,
    table: &mut SymbolTable,
) -> crate::grammar::SlcfGrammar {
    use crate::grammar::{Production, SlcfGrammar, Term};
    assert!(r >= 1);
    let pc = letter(table, "pc", 0);
    let pa = letter(table, "pa", 1);
    let pb = letter(table, "pb", 1);
    let pf = if r >= 2 {
        Some(letter(table, "pf", r as u32))
    } else {
        None
    };

    let mut productions: Vec<Production> = Vec::new();
    let mut total = 0usize;

    // Base context.
    let c0 = table.fresh(Origin::Nonterminal, 1);
    let (c0_rhs, c0_w) = match pf {
        None => (
            Term::apply(pa, vec![Term::apply(pb, vec![Term::param(0)])]),
            2u64,
        ),
        Some(f) => {
            let mut args: Vec<Term> = (0..r - 1).map(|_| Term::leaf(pc)).collect();
            args.push(Term::apply(pa, vec![Term::param(0)]));
            (Term::apply(f, args), r as u64 + 1)
        }
    };
    total += c0_rhs.non_param_count();
    productions.push(Production {
        lhs: c0,
        rhs: c0_rhs,
    });

    let mut ctx: Vec<(SymbolId, u64)> = vec![(c0, c0_w)];
    while total + 2 < g_target {
        let (last, lw) = *ctx.last().unwrap();
        let fresh = table.fresh(Origin::Nonterminal, 1);
        // Prefer doubling while it fits; otherwise compose with a light
        // earlier context, or pad with a fixed two-letter context.
        let (rhs, w) = if 2 * lw <= n_cap && rng.chance(1, 2) {
            (
                Term::apply(last, vec![Term::apply(last, vec![Term::param(0)])]),
                2 * lw,
            )
        } else {
            let fitting: Vec<&(SymbolId, u64)> =
                ctx.iter().filter(|(_, w)| lw + *w <= n_cap).collect();
            if fitting.is_empty() {
                (
                    Term::apply(
                        pa,
                        vec![Term::apply(
                            last,
                            vec![Term::apply(pb, vec![Term::param(0)])],
                        )],
                    ),
                    lw + 2,
                )
            } else {
                let &&(other, ow) = &fitting[rng.below(fitting.len() as u64) as usize];
                (
                    Term::apply(last, vec![Term::apply(other, vec![Term::param(0)])]),
                    lw + ow,
                )
            }
        };
        if w > n_cap {
            break;
        }
        total += rhs.non_param_count();
        productions.push(Production { lhs: fresh, rhs });
        ctx.push((fresh, w));
    }

    let (last, _) = *ctx.last().unwrap();
    let start = table.fresh(Origin::Nonterminal, 0);
    productions.push(Production {
        lhs: start,
        rhs: Term::apply(last, vec![Term::leaf(pc)]),
    });
    SlcfGrammar::new(productions, start)
}

/// Word set with no two adjacent equal letters: `count` words of lengths in
/// [1..=max_len] over an alphabet of `sigma` letters.
pub fn words_no_adjacent_equal(
    rng: &mut SplitMix64,
    count: usize,
    max_len: usize,
    sigma: u32,
) -> Vec<Vec<u32>> {
    assert!(sigma >= 2);
    (0..count)
        .map(|_| {
            let len = 1 + rng.below(max_len as u64) as usize;
            let mut w = Vec::with_capacity(len);
            let mut prev = u32::MAX;
            for _ in 0..len {
                let mut c = rng.below(sigma as u64) as u32;
                if c == prev {
                    c = (c + 1) % sigma;
                }
                w.push(c);
                prev = c;
            }
            w
        })
        .collect()
}
