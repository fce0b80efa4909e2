//! Command-line front end: encode, decode, verify, stats, bench, normalize,
//! simulate. Exit codes: 2 parse/validation error, 3 I/O error, 4 node
//! budget exceeded, 1 failed verification or divergence.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;
use treecomp::compressor::{phase_bound, PhaseTrace};
use treecomp::generate::{self, SplitMix64};
use treecomp::grammar::{SlcfGrammar, DEFAULT_NODE_BUDGET};
use treecomp::handle::is_handle;
use treecomp::normalizer::normalize;
use treecomp::simulator::TrackedPair;
use treecomp::{compress, parse_term, serialize_term, SymbolTable};

const EXIT_FAILED: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_IO: i32 = 3;
const EXIT_BUDGET: i32 = 4;

#[derive(Parser)]
#[command(
    name = "treecomp",
    version,
    about = "Grammar-based compression of ranked trees"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TermFormat {
    Term,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compress a term file into a straight-line grammar file.
    Encode {
        #[arg(long)]
        input: PathBuf,
        /// Grammar output path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write per-phase statistics as JSON lines.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Write the per-phase fresh-letter tables as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "term")]
        format: TermFormat,
    },
    /// Expand a grammar file back into a term file.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Abort expansion after this many nodes.
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        node_budget: usize,
        #[arg(long, value_enum, default_value = "term")]
        format: TermFormat,
    },
    /// Encode, decode and compare.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
        node_budget: usize,
    },
    /// Compress and print per-phase statistics as JSON lines.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run generated inputs through the compressor and report a JSON summary.
    Bench {
        #[arg(long, value_enum)]
        family: Family,
        /// Comma-separated input sizes (node counts; expansion caps for the
        /// planted family).
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_rank: usize,
        /// Planted grammar size (planted family only).
        #[arg(long, default_value_t = 50)]
        grammar_size: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Include wall-clock timings (off by default so that identical
        /// seeds give byte-identical reports).
        #[arg(long)]
        timings: bool,
    },
    /// Convert an arbitrary grammar into an equivalent handle grammar.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Replay a recorded compression trace against a handle grammar,
    /// checking eval(G) == T after every step.
    Simulate {
        /// Term file with the initial tree.
        #[arg(long)]
        input: PathBuf,
        /// Handle grammar deriving the same tree.
        #[arg(long)]
        grammar: PathBuf,
        /// JSON-lines trace from `encode --trace`.
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Caterpillar,
    Binary,
    Comb,
    Random,
    Planted,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_IO, format!("reading {}: {e}", path.display())))
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| fail(EXIT_IO, format!("writing {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn parse_tree(src: &str, table: &mut SymbolTable) -> Result<treecomp::RankedTree, Failure> {
    parse_term(src, table).map_err(|e| fail(EXIT_PARSE, e.to_string()))
}

fn parse_grammar(src: &str, table: &mut SymbolTable) -> Result<SlcfGrammar, Failure> {
    let g = SlcfGrammar::parse(src, table).map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
    g.validate(table).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(|v| v.to_string()).collect();
        fail(EXIT_PARSE, msgs.join("; "))
    })?;
    Ok(g)
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|it| serde_json::to_string(it).expect("serializable"))
        .map(|l| l + "\n")
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Encode {
            input,
            output,
            stats,
            trace,
            format: TermFormat::Term,
        } => {
            let mut table = SymbolTable::new();
            let tree = parse_tree(&read(&input)?, &mut table)?;
            let out = compress(tree, &mut table);
            write_out(&output, &out.grammar.to_text(&table))?;
            if let Some(p) = stats {
                write_out(&Some(p), &jsonl(&out.stats))?;
            }
            if let Some(p) = trace {
                write_out(&Some(p), &jsonl(&out.traces))?;
            }
            Ok(())
        }
        Cmd::Decode {
            input,
            output,
            node_budget,
            format: TermFormat::Term,
        } => {
            let mut table = SymbolTable::new();
            let g = parse_grammar(&read(&input)?, &mut table)?;
            let tree = g
                .eval(node_budget)
                .map_err(|e| fail(EXIT_BUDGET, e.to_string()))?;
            let mut text = serialize_term(&tree, &table);
            text.push('\n');
            write_out(&output, &text)
        }
        Cmd::Verify { input, node_budget } => {
            let mut table = SymbolTable::new();
            let tree = parse_tree(&read(&input)?, &mut table)?;
            let n = tree.size();
            let orig = tree.clone();
            let out = compress(tree, &mut table);
            let back = out
                .grammar
                .eval(node_budget)
                .map_err(|e| fail(EXIT_BUDGET, e.to_string()))?;
            if back.structural_eq(&orig, &table) {
                println!(
                    "ok: n={n} grammar_size={} phases={}",
                    out.grammar.size(),
                    out.stats.len()
                );
                Ok(())
            } else {
                Err(fail(EXIT_FAILED, "decode(encode(t)) differs from t"))
            }
        }
        Cmd::Stats { input, output } => {
            let mut table = SymbolTable::new();
            let tree = parse_tree(&read(&input)?, &mut table)?;
            let out = compress(tree, &mut table);
            write_out(&output, &jsonl(&out.stats))
        }
        Cmd::Bench {
            family,
            sizes,
            seed,
            max_rank,
            grammar_size,
            output,
            timings,
        } => {
            let sizes: Vec<usize> = sizes
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| fail(EXIT_PARSE, format!("bad size `{s}`: {e}")))
                })
                .collect::<Result<_, _>>()?;
            let report = bench(family, &sizes, seed, max_rank, grammar_size, timings)?;
            let mut text = serde_json::to_string_pretty(&report).expect("serializable");
            text.push('\n');
            write_out(&output, &text)
        }
        Cmd::Normalize { input, output } => {
            let mut table = SymbolTable::new();
            let g = parse_grammar(&read(&input)?, &mut table)?;
            let (hg, audit) = normalize(&g, &mut table);
            if !audit.ok() {
                return Err(fail(
                    EXIT_FAILED,
                    format!("skeleton checks failed: {:?}", audit.violations),
                ));
            }
            let slcf = hg.to_slcf(&table);
            is_handle(&slcf, &table).map_err(|e| fail(EXIT_FAILED, e.to_string()))?;
            write_out(&output, &slcf.to_text(&table))
        }
        Cmd::Simulate {
            input,
            grammar,
            trace,
        } => {
            let mut table = SymbolTable::new();
            let tree = parse_tree(&read(&input)?, &mut table)?;
            let g = parse_grammar(&read(&grammar)?, &mut table)?;
            let hg = is_handle(&g, &table).map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
            let traces: Vec<PhaseTrace> = read(&trace)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    serde_json::from_str(l).map_err(|e| fail(EXIT_PARSE, format!("trace: {e}")))
                })
                .collect::<Result<_, _>>()?;
            let mut tp = TrackedPair::new(tree, hg, &mut table)
                .map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
            for t in &traces {
                if tp.run.size() <= 1 {
                    break;
                }
                tp.simulate_phase(Some(t))
                    .map_err(|e| fail(EXIT_FAILED, e.to_string()))?;
            }
            for r in &tp.reports {
                println!(
                    "phase {} {}: synced={} issued={} bound={} g0={} g1={} g0~={}",
                    r.phase,
                    r.step,
                    r.synced,
                    r.issued,
                    r.bound,
                    r.counters.g0,
                    r.counters.g1,
                    r.counters.g0_tilde
                );
            }
            println!("final tree size: {}", tp.run.size());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct BenchReport {
    family: String,
    seed: u64,
    runs: Vec<BenchRun>,
}

#[derive(Serialize)]
struct BenchRun {
    requested: usize,
    n: usize,
    grammar_size: usize,
    cleaned_size: usize,
    phases: usize,
    phase_bound: usize,
    node_touches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    planted_grammar_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    size_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<u128>,
}

fn bench(
    family: Family,
    sizes: &[usize],
    seed: u64,
    max_rank: usize,
    grammar_size: usize,
    timings: bool,
) -> Result<BenchReport, Failure> {
    let name = match family {
        Family::Caterpillar => "caterpillar",
        Family::Binary => "binary",
        Family::Comb => "comb",
        Family::Random => "random",
        Family::Planted => "planted",
    };
    let mut runs = Vec::new();
    for &requested in sizes {
        let mut table = SymbolTable::new();
        let mut rng = SplitMix64::new(seed ^ requested as u64);
        let mut planted_g = None;
        let tree = match family {
            Family::Caterpillar => generate::caterpillar(requested.max(1), &mut table),
            Family::Binary => {
                let mut depth = 0usize;
                while (1usize << (depth + 2)) - 1 <= requested {
                    depth += 1;
                }
                generate::full_binary(depth, &mut table)
            }
            Family::Comb => generate::comb(requested / 2, &mut table),
            Family::Random => {
                generate::random_tree(&mut rng, requested.max(1), max_rank.max(1), &mut table)
            }
            Family::Planted => {
                let g = generate::planted_grammar(
                    &mut rng,
                    grammar_size,
                    max_rank.max(1),
                    requested as u64,
                    &mut table,
                );
                planted_g = Some(g.size());
                g.eval(DEFAULT_NODE_BUDGET)
                    .map_err(|e| fail(EXIT_BUDGET, e.to_string()))?
            }
        };
        let n = tree.size();
        let start = Instant::now();
        let out = compress(tree, &mut table);
        let wall = start.elapsed().as_millis();
        let cleaned = out.grammar.cleanup_reasonable();
        let size_ratio = planted_g.map(|g| {
            let rg = (max_rank * g) as f64;
            let denom = rg + rg * (n as f64 / rg).log2().max(0.0) + 1.0;
            out.grammar.size() as f64 / denom
        });
        runs.push(BenchRun {
            requested,
            n,
            grammar_size: out.grammar.size(),
            cleaned_size: cleaned.size(),
            phases: out.stats.len(),
            phase_bound: phase_bound(n),
            node_touches: out.node_touches,
            planted_grammar_size: planted_g,
            size_ratio,
            wall_ms: timings.then_some(wall),
        });
    }
    Ok(BenchReport {
        family: name.to_owned(),
        seed,
        runs,
    })
}
