//! Command-line front end for the pebbleworks library: build and check
//! programs, verify and search pebbling strategies, build reduction graphs,
//! run the lower-bound machinery on concrete inputs, and emit check suites.
//!
//! Exit codes separate "no" from "don't know": 0 pass/found, 1 checked and
//! negative, 2 stopped by a resource cap, 3 bad input. Every run is
//! deterministic given its arguments, the seed, and the caps; result
//! documents embed the tool version and a hash of the resolved config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use pebbleworks::bp::{
    self, canonicalize, check_mindepth_thrifty, check_solves, check_thrifty, depth, simulate,
    simulate_nondet, BranchingProgram, CheckConfig, MindepthReport, Problem, StateId,
};
use pebbleworks::construct::{
    build_from_black_pebbling, build_from_bw_pebbling, build_thrifty_det,
};
use pebbleworks::dag::{tree_dag, Dag};
use pebbleworks::minsize::{
    checkpoint_from_json, checkpoint_to_json, resume_minsize_search, run_minsize_search,
    MinsizeLimits, MinsizeOutcome,
};
use pebbleworks::pebble::{
    black_strategy, fig2_strategy, sequence_from_json, sequence_to_json, verify_sequence,
    PebbleSequence, Q, SequenceGame,
};
use pebbleworks::proof::{
    critical_states, forward_supercritical, interadv_decode, interadv_encode,
    relaxed_bound_check, supercritical_at, AdviceString, ProofError,
};
use pebbleworks::reduction::{
    bottleneck_witness, build_g, build_gprime, check_nice, leftmost_path, rightmost_path,
};
use pebbleworks::report::run_suite;
use pebbleworks::search::{feasible_under, min_cost, SearchError, SearchGame, SearchLimits};
use pebbleworks::tree::{
    enumerate_instances, instance_count, instance_from_index, TepInstance, TreeError, TreeShape,
    Val,
};

#[derive(Parser)]
#[command(
    name = "pebbleworks",
    version,
    about = "Tree evaluation workbench: branching programs, pebbling games, reductions",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Cap on internal parallelism (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the machine-readable result document here
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stop exhaustive instance enumerations beyond this count
    #[arg(long, global = true)]
    cap_instances: Option<u128>,
    /// Stop searches after visiting this many configurations
    #[arg(long, global = true)]
    cap_configs: Option<usize>,
    /// Seed for anything sampled (mutant campaigns, sampled checks)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate or enumerate tree evaluation instances
    Tep {
        #[command(subcommand)]
        sub: TepCmd,
    },
    /// Build, run, and check branching programs
    Bp {
        #[command(subcommand)]
        sub: BpCmd,
    },
    /// Verify, search, and emit pebbling strategies
    Pebble {
        #[command(subcommand)]
        sub: PebbleCmd,
    },
    /// Reduction graphs and the niceness machinery
    Dag {
        #[command(subcommand)]
        sub: DagCmd,
    },
    /// Lower-bound machinery on constructed programs
    Proof {
        #[command(subcommand)]
        sub: ProofCmd,
    },
    /// Run a named check suite
    Report {
        /// Suite name; an unknown name lists the available ones
        suite: String,
    },
}

#[derive(Subcommand)]
enum TepCmd {
    /// Evaluate the root value (and the root=1 decision) of one instance
    Eval {
        #[command(flatten)]
        at: InstanceAt,
    },
    /// Count instances of a shape; with --out, write them all
    Enum {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
        #[arg(long, default_value_t = 2)]
        d: usize,
    },
}

/// Where an instance comes from: a JSON file, or (h, k, index) coordinates
/// in the global enumeration order.
#[derive(Args, Clone)]
struct InstanceAt {
    #[arg(long, conflicts_with_all = ["h", "k", "index"])]
    instance: Option<PathBuf>,
    #[arg(long, requires = "k")]
    h: Option<usize>,
    #[arg(long, requires = "h")]
    k: Option<Val>,
    #[arg(long)]
    index: Option<u128>,
}

#[derive(Subcommand)]
enum BpCmd {
    /// Build the recursive solver, or compile one from a pebbling sequence
    Build {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
        /// Compile from this pebbling sequence instead (its game picks the
        /// compiler: black -> deterministic, black-white -> nondeterministic)
        #[arg(long)]
        pebbling: Option<PathBuf>,
    },
    /// Run a program on one instance
    Simulate {
        #[arg(long)]
        program: PathBuf,
        #[command(flatten)]
        at: InstanceAt,
    },
    /// Check that a program solves its problem (and optionally thriftiness)
    Check {
        #[arg(long)]
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = ProblemArg::Ft)]
        problem: ProblemArg,
        /// Fail (exit 1) unless the program is also thrifty
        #[arg(long)]
        thrifty: bool,
    },
    /// Exhaustive search for solvers below the conjectured minimum size
    Minsize {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
        /// Largest size to exhaust (default: (k+1)^h - 1)
        #[arg(long)]
        size_cap: Option<usize>,
        /// Enumeration nodes to spend in this run before checkpointing
        #[arg(long, default_value_t = 100_000_000)]
        node_cap: u64,
        /// Resume from (and rewrite) this checkpoint file
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PebbleCmd {
    /// Replay a sequence file and report its cost
    Verify {
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long, requires = "h")]
        d: Option<usize>,
        #[arg(long, requires = "d")]
        h: Option<usize>,
        /// Verify over this DAG instead of a tree
        #[arg(long, conflicts_with_all = ["d", "h"])]
        dag: Option<PathBuf>,
    },
    /// Find the exact minimum cost (or test a given bound)
    Search {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long, value_enum)]
        game: GameArg,
        /// Denominator for the discretized games
        #[arg(long, default_value_t = 1)]
        c: u32,
        /// Test feasibility under this bound (e.g. "5/2") instead
        #[arg(long)]
        bound: Option<String>,
        /// Search over this DAG instead of a tree
        #[arg(long, conflicts_with = "h")]
        dag: Option<PathBuf>,
    },
    /// Emit a known strategy without searching
    Strategy {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        h: usize,
        #[arg(long, value_enum, default_value_t = StrategyArg::Black)]
        game: StrategyArg,
    },
}

#[derive(Subcommand)]
enum DagCmd {
    /// Build the copy-expanded reduction graph (pruned by default)
    Build {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        c: usize,
        /// Keep the full complete-bipartite connections
        #[arg(long)]
        full: bool,
    },
    /// Check the three niceness properties
    Nice {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        full: bool,
        /// Antichain enumeration cap for property 3 (0 = unlimited)
        #[arg(long, default_value_t = 0)]
        antichain_cap: usize,
    },
    /// Bottleneck set and disjoint source paths for an extreme root path
    Bottleneck {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        c: usize,
        #[arg(long, value_enum, default_value_t = SideArg::Left)]
        side: SideArg,
    },
}

#[derive(Subcommand)]
enum ProofCmd {
    /// Critical states and the backward pebbling configurations
    Critical {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
        #[arg(long)]
        index: u128,
    },
    /// The supercritical state, its node, and the bottleneck set
    Supercritical {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
        #[arg(long)]
        index: u128,
        /// Query height of the supercritical node
        #[arg(long, default_value_t = 2)]
        level: usize,
        /// Use the forward (first-blocking) assignment instead
        #[arg(long, conflicts_with = "level")]
        forward: bool,
    },
    /// Encode an input as advice, or decode advice back (--r with --advice)
    Advice {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
        #[arg(long, conflicts_with_all = ["r", "advice"])]
        index: Option<u128>,
        /// Supercritical state to decode within
        #[arg(long, requires = "advice")]
        r: Option<StateId>,
        /// Comma-separated digits in 1..=k
        #[arg(long, requires = "r")]
        advice: Option<String>,
    },
    /// Measured branching parameters and the relaxed size bounds
    Relaxed {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        k: Val,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Ft,
    Bt,
}

#[derive(Clone, Copy, ValueEnum)]
enum GameArg {
    Black,
    Bw,
    Fractional,
    Noslide,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Black,
    Fractional,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

/// A finished command: exit code, resolved config, result document, and the
/// human-readable summary for stdout.
struct Finished {
    code: u8,
    config: Json,
    result: Json,
    text: String,
}

/// An aborted command: input errors exit 3, resource caps exit 2.
struct Trouble {
    code: u8,
    msg: String,
}

impl Trouble {
    fn input(msg: impl Into<String>) -> Self {
        Trouble { code: 3, msg: msg.into() }
    }

    fn capped(msg: impl Into<String>) -> Self {
        Trouble { code: 2, msg: msg.into() }
    }
}

macro_rules! trouble_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for Trouble {
            fn from(e: $ty) -> Self {
                Trouble::input(e.to_string())
            }
        }
    )*};
}

trouble_from!(
    pebbleworks::bp::BpError,
    pebbleworks::pebble::SequenceError,
    pebbleworks::dag::DagError,
    pebbleworks::reduction::ReductionError,
    pebbleworks::construct::ConstructError,
    pebbleworks::minsize::MinsizeError,
    pebbleworks::report::ReportError,
    std::io::Error,
    serde_json::Error
);

impl From<TreeError> for Trouble {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::CapExceeded { .. } => Trouble::capped(e.to_string()),
            other => Trouble::input(other.to_string()),
        }
    }
}

impl From<SearchError> for Trouble {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::CapExceeded(_) => Trouble::capped(e.to_string()),
            other => Trouble::input(other.to_string()),
        }
    }
}

impl From<ProofError> for Trouble {
    fn from(e: ProofError) -> Self {
        match e {
            ProofError::CapExceeded(_) => Trouble::capped(e.to_string()),
            other => Trouble::input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.common.threads {
        // A duplicate build_global (tests call main-in-process never; only
        // real processes land here) is harmless to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(done) => {
            print!("{}", done.text);
            let doc = envelope(&done.config, &done.result);
            if let Some(path) = &cli.common.out {
                if let Err(e) = std::fs::write(path, render_json(&doc)) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(3);
                }
                println!("wrote {}", path.display());
            }
            ExitCode::from(done.code)
        }
        Err(t) => {
            eprintln!("error: {}", t.msg);
            ExitCode::from(t.code)
        }
    }
}

/// Canonical rendering: serde_json's Value keeps keys sorted, so parsing a
/// document and re-rendering it reproduces the bytes exactly.
fn render_json(doc: &Json) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("value serializes");
    text.push('\n');
    text
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn envelope(config: &Json, result: &Json) -> Json {
    let hash = fnv1a64(render_json(config).as_bytes());
    json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "config_hash": format!("fnv1a64:{hash:016x}"),
        "result": result,
    })
}

/// The resolved experiment configuration embedded in every result document.
fn experiment_config(command: &str, args: Json, common: &Common) -> Json {
    json!({
        "command": command,
        "args": args,
        "caps": {
            "instances": cap_instances(common).to_string(),
            "configs": cap_configs(common),
        },
        "seed": common.seed,
        "threads": common.threads,
        "out": common.out.as_ref().map(|p| p.display().to_string()),
    })
}

/// PEBBLEWORKS_CAP_MB bounds the dominant allocations: visited-configuration
/// tables and materialized instance lists, both near 64 bytes per entry.
fn mem_cap_mb() -> Result<Option<u64>, Trouble> {
    match std::env::var("PEBBLEWORKS_CAP_MB") {
        Ok(text) => text
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Trouble::input(format!("PEBBLEWORKS_CAP_MB={text} is not a number"))),
        Err(_) => Ok(None),
    }
}

fn cap_configs(common: &Common) -> usize {
    let mut cap = common.cap_configs.unwrap_or(SearchLimits::default().cap_configs);
    if let Ok(Some(mb)) = mem_cap_mb() {
        cap = cap.min((mb as usize) << 20 >> 6);
    }
    cap
}

fn cap_instances(common: &Common) -> u128 {
    let mut cap = common.cap_instances.unwrap_or(1 << 24);
    if let Ok(Some(mb)) = mem_cap_mb() {
        cap = cap.min(((mb as u128) << 20) / 64);
    }
    cap
}

fn search_limits(common: &Common) -> SearchLimits {
    SearchLimits { cap_configs: cap_configs(common) }
}

fn check_config(common: &Common) -> CheckConfig {
    CheckConfig { exhaustive_cap: cap_instances(common), seed: common.seed, ..Default::default() }
}

fn read_json(path: &Path) -> Result<Json, Trouble> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Trouble::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Trouble::input(format!("{} is not JSON: {e}", path.display())))
}

/// Accept either the bare artifact schema or a result document wrapping it
/// under result.<key>, so emitted files feed straight back in.
fn read_artifact(path: &Path, key: &str) -> Result<Json, Trouble> {
    let json = read_json(path)?;
    if let Some(inner) = json.get("result").and_then(|r| r.get(key)) {
        return Ok(inner.clone());
    }
    Ok(json)
}

fn load_program(path: &Path) -> Result<BranchingProgram, Trouble> {
    Ok(bp::from_json(&read_artifact(path, "program")?)?)
}

fn load_sequence(path: &Path) -> Result<PebbleSequence, Trouble> {
    Ok(sequence_from_json(&read_artifact(path, "sequence")?)?)
}

fn load_dag(path: &Path) -> Result<Dag, Trouble> {
    Ok(Dag::from_json(&read_artifact(path, "dag")?)?)
}

fn resolve_instance(at: &InstanceAt) -> Result<TepInstance, Trouble> {
    if let Some(path) = &at.instance {
        return Ok(TepInstance::from_json(&read_artifact(path, "instance")?)?);
    }
    let (Some(h), Some(k)) = (at.h, at.k) else {
        return Err(Trouble::input("pass --instance FILE, or --h/--k with --index"));
    };
    let index = at.index.unwrap_or(0);
    let shape = TreeShape::new(2, h)?;
    if let Some(count) = instance_count(shape, k)? {
        if index >= count {
            return Err(Trouble::input(format!("index {index} out of {count} instances")));
        }
    }
    Ok(instance_from_index(shape, k, index))
}

fn parse_bound(text: &str) -> Result<Q, Trouble> {
    text.parse::<Q>().map_err(|e| Trouble::input(format!("bad bound '{text}': {e}")))
}

fn run(cli: &Cli) -> Result<Finished, Trouble> {
    let common = &cli.common;
    match &cli.cmd {
        Cmd::Tep { sub } => match sub {
            TepCmd::Eval { at } => tep_eval(at, common),
            TepCmd::Enum { h, k, d } => tep_enum(*h, *k, *d, common),
        },
        Cmd::Bp { sub } => match sub {
            BpCmd::Build { h, k, pebbling } => bp_build(*h, *k, pebbling.as_deref(), common),
            BpCmd::Simulate { program, at } => bp_simulate(program, at, common),
            BpCmd::Check { program, problem, thrifty } => {
                bp_check(program, *problem, *thrifty, common)
            }
            BpCmd::Minsize { h, k, size_cap, node_cap, checkpoint } => {
                bp_minsize(*h, *k, *size_cap, *node_cap, checkpoint.as_deref(), common)
            }
        },
        Cmd::Pebble { sub } => match sub {
            PebbleCmd::Verify { sequence, d, h, dag } => {
                pebble_verify(sequence, *d, *h, dag.as_deref(), common)
            }
            PebbleCmd::Search { d, h, game, c, bound, dag } => {
                pebble_search(*d, *h, *game, *c, bound.as_deref(), dag.as_deref(), common)
            }
            PebbleCmd::Strategy { d, h, game } => pebble_strategy(*d, *h, *game, common),
        },
        Cmd::Dag { sub } => match sub {
            DagCmd::Build { d, h, c, full } => dag_build(*d, *h, *c, *full, common),
            DagCmd::Nice { d, h, c, full, antichain_cap } => {
                dag_nice(*d, *h, *c, *full, *antichain_cap, common)
            }
            DagCmd::Bottleneck { d, h, c, side } => dag_bottleneck(*d, *h, *c, *side, common),
        },
        Cmd::Proof { sub } => match sub {
            ProofCmd::Critical { h, k, index } => proof_critical(*h, *k, *index, common),
            ProofCmd::Supercritical { h, k, index, level, forward } => {
                proof_supercritical(*h, *k, *index, *level, *forward, common)
            }
            ProofCmd::Advice { h, k, index, r, advice } => {
                proof_advice(*h, *k, *index, *r, advice.as_deref(), common)
            }
            ProofCmd::Relaxed { h, k } => proof_relaxed(*h, *k, common),
        },
        Cmd::Report { suite } => report(suite, common),
    }
}

fn tep_eval(at: &InstanceAt, common: &Common) -> Result<Finished, Trouble> {
    let inst = resolve_instance(at)?;
    let ft = inst.eval_ft();
    let bt = inst.eval_bt();
    let args = json!({
        "instance": at.instance.as_ref().map(|p| p.display().to_string()),
        "h": at.h, "k": at.k, "index": at.index.map(|i| i.to_string()),
    });
    Ok(Finished {
        code: 0,
        config: experiment_config("tep eval", args, common),
        result: json!({ "ft": ft, "bt": bt as u8, "instance": inst.to_json() }),
        text: format!("root value {ft}; root=1 is {bt}\n"),
    })
}

fn tep_enum(h: usize, k: Val, d: usize, common: &Common) -> Result<Finished, Trouble> {
    let shape = TreeShape::new(d, h)?;
    let count = instance_count(shape, k)?;
    let count_text =
        count.map_or_else(|| "more than u128 holds".to_string(), |c| c.to_string());
    let args = json!({ "h": h, "k": k, "d": d });
    let mut result = json!({ "count": count_text });
    let mut text = format!("{count_text} instances of the (d={d}, h={h}, k={k}) shape\n");
    if common.out.is_some() {
        // Materializing is what the instance cap is for; over it is exit 2.
        let instances: Vec<Json> =
            enumerate_instances(shape, k, cap_instances(common))?.map(|i| i.to_json()).collect();
        text.push_str(&format!("materialized all {} of them\n", instances.len()));
        result["instances"] = Json::Array(instances);
    }
    Ok(Finished {
        code: 0,
        config: experiment_config("tep enum", args, common),
        result,
        text,
    })
}

fn bp_build(
    h: usize,
    k: Val,
    pebbling: Option<&Path>,
    common: &Common,
) -> Result<Finished, Trouble> {
    let args = json!({
        "h": h, "k": k,
        "pebbling": pebbling.map(|p| p.display().to_string()),
    });
    let (program, text) = match pebbling {
        None => {
            let program = build_thrifty_det(h, k)?;
            let text = format!(
                "recursive solver for h={h}, k={k}: {} states (= (k+1)^h)\n",
                program.size()
            );
            (program, text)
        }
        Some(path) => {
            let seq = load_sequence(path)?;
            let shape = TreeShape::new(2, h)?;
            match seq.game {
                SequenceGame::Black => {
                    let (program, layers) = build_from_black_pebbling(shape, &seq, k)?;
                    let text = format!(
                        "compiled black pebbling into a deterministic root-value solver: \
                         {} states across {layers} layers\n",
                        program.size()
                    );
                    (program, text)
                }
                SequenceGame::BlackWhite => {
                    let program = build_from_bw_pebbling(shape, &seq, k)?;
                    let text = format!(
                        "compiled black-white pebbling into a nondeterministic root=1 \
                         decider: {} states\n",
                        program.size()
                    );
                    (program, text)
                }
                _ => {
                    return Err(Trouble::input(
                        "only black and black-white sequences compile to programs",
                    ))
                }
            }
        }
    };
    Ok(Finished {
        code: 0,
        config: experiment_config("bp build", args, common),
        result: json!({ "program": bp::to_json(&canonicalize(&program)), "size": program.size() }),
        text,
    })
}

fn bp_simulate(program: &Path, at: &InstanceAt, common: &Common) -> Result<Finished, Trouble> {
    let bp = load_program(program)?;
    // Bare --index is enough here: the program carries its own shape and k.
    let at = InstanceAt {
        instance: at.instance.clone(),
        h: at.h.or(Some(bp.shape.h)),
        k: at.k.or(Some(bp.k)),
        index: at.index,
    };
    let inst = resolve_instance(&at)?;
    if inst.shape != bp.shape || inst.k != bp.k {
        return Err(Trouble::input("instance shape/k do not match the program"));
    }
    let args = json!({
        "program": program.display().to_string(),
        "instance": at.instance.as_ref().map(|p| p.display().to_string()),
        "h": at.h, "k": at.k, "index": at.index.map(|i| i.to_string()),
    });
    let (result, text) = if bp.deterministic {
        let (output, path) = simulate(&bp, &inst)?;
        (
            json!({ "output": output, "path": path }),
            format!("output {output} after {} states\n", path.len()),
        )
    } else {
        let cap = cap_configs(common);
        let runs = simulate_nondet(&bp, &inst, cap)?;
        let mut answers: Vec<Val> = runs.iter().map(|(v, _)| *v).collect();
        answers.sort_unstable();
        answers.dedup();
        (
            json!({ "answers": answers, "accepting_paths": runs.len() }),
            format!("{} terminating paths; answers {answers:?}\n", runs.len()),
        )
    };
    Ok(Finished {
        code: 0,
        config: experiment_config("bp simulate", args, common),
        result,
        text,
    })
}

fn bp_check(
    program: &Path,
    problem: ProblemArg,
    need_thrifty: bool,
    common: &Common,
) -> Result<Finished, Trouble> {
    let bp = load_program(program)?;
    let cfg = check_config(common);
    let problem = match problem {
        ProblemArg::Ft => Problem::FT,
        ProblemArg::Bt => Problem::BT,
    };
    let solves = check_solves(&bp, problem, &cfg);
    let thrifty = check_thrifty(&bp, &cfg);
    let depth = if bp.deterministic { depth(&bp, &cfg).ok() } else { None };
    let mindepth = match check_mindepth_thrifty(&bp, &cfg) {
        MindepthReport::Confirmed => "confirmed".to_string(),
        MindepthReport::NotApplicable(why) => format!("not applicable: {why}"),
        MindepthReport::Falsified { state, .. } => {
            format!("FALSIFIED at state {state:?}")
        }
    };
    let ok = solves.ok && (!need_thrifty || thrifty.ok);
    let args = json!({
        "program": program.display().to_string(),
        "problem": match problem { Problem::FT => "ft", Problem::BT => "bt" },
        "thrifty": need_thrifty,
    });
    let mode = if solves.sampled { "sampled" } else { "exhaustive" };
    let text = format!(
        "solves: {} ({} over {} inputs); thrifty: {}; depth: {}; mindepth-implication: {}\n",
        solves.ok,
        mode,
        solves.checked,
        thrifty.ok,
        depth.map_or("n/a".into(), |d| d.to_string()),
        mindepth,
    );
    Ok(Finished {
        code: u8::from(!ok),
        config: experiment_config("bp check", args, common),
        result: json!({
            "solves": solves.ok,
            "thrifty": thrifty.ok,
            "sampled": solves.sampled,
            "checked": solves.checked,
            "depth": depth,
            "mindepth_implication": mindepth,
            "counterexample": solves
                .counterexample
                .or(if need_thrifty { thrifty.counterexample } else { None })
                .map(|i| i.to_json()),
        }),
        text,
    })
}

fn bp_minsize(
    h: usize,
    k: Val,
    size_cap: Option<usize>,
    node_cap: u64,
    checkpoint: Option<&Path>,
    common: &Common,
) -> Result<Finished, Trouble> {
    let size_cap = size_cap.unwrap_or((k as usize + 1).pow(h as u32) - 1);
    let limits = MinsizeLimits { node_cap };
    let args = json!({
        "h": h, "k": k, "size_cap": size_cap, "node_cap": node_cap,
        "checkpoint": checkpoint.map(|p| p.display().to_string()),
    });
    let config = experiment_config("bp minsize", args, common);

    let resumed = match checkpoint {
        Some(path) if path.exists() => {
            let cp = checkpoint_from_json(&std::fs::read_to_string(path)?)?;
            if (cp.h, cp.k, cp.size_cap) != (h, k, size_cap) {
                return Err(Trouble::input(format!(
                    "checkpoint {} is for (h={}, k={}, size_cap={})",
                    path.display(),
                    cp.h,
                    cp.k,
                    cp.size_cap
                )));
            }
            Some(cp)
        }
        _ => None,
    };
    let outcome = match &resumed {
        Some(cp) => resume_minsize_search(cp, &limits)?,
        None => run_minsize_search(h, k, size_cap, &limits)?,
    };
    match outcome {
        MinsizeOutcome::Found(program) => {
            if let Some(path) = checkpoint {
                let _ = std::fs::remove_file(path);
            }
            let size = program.size();
            let conjectured = (k as usize + 1).pow(h as u32);
            let flavor = if size < conjectured {
                format!(" -- below (k+1)^h = {conjectured}, a refutation artifact!")
            } else {
                String::new()
            };
            Ok(Finished {
                code: 0,
                config,
                result: json!({
                    "outcome": "found",
                    "size": size,
                    "program": bp::to_json(&program),
                }),
                text: format!("found a {size}-state solver (sizes searched up to {size_cap}){flavor}\n"),
            })
        }
        MinsizeOutcome::ExhaustedNoneBetter { size_cap } => {
            if let Some(path) = checkpoint {
                let _ = std::fs::remove_file(path);
            }
            Ok(Finished {
                code: 1,
                config,
                result: json!({ "outcome": "exhausted-none-better", "size_cap": size_cap }),
                text: format!(
                    "no solver of size <= {size_cap} exists; the conjectured minimum stands\n"
                ),
            })
        }
        MinsizeOutcome::Stopped(cp) => {
            if let Some(path) = checkpoint {
                std::fs::write(path, checkpoint_to_json(&cp))?;
            }
            let cp_json: Json = serde_json::to_value(&cp).expect("plain data");
            Ok(Finished {
                code: 2,
                config,
                result: json!({ "outcome": "stopped", "checkpoint": cp_json }),
                text: format!(
                    "node budget exhausted at size {} after {} nodes; sizes {:?} fully \
                     exhausted so far{}\n",
                    cp.current_size,
                    cp.nodes_explored,
                    cp.exhausted_sizes,
                    checkpoint
                        .map(|p| format!("; checkpoint written to {}", p.display()))
                        .unwrap_or_default()
                ),
            })
        }
    }
}

fn pebble_verify(
    sequence: &Path,
    d: Option<usize>,
    h: Option<usize>,
    dag: Option<&Path>,
    common: &Common,
) -> Result<Finished, Trouble> {
    let seq = load_sequence(sequence)?;
    let graph = match (dag, d, h) {
        (Some(path), _, _) => load_dag(path)?,
        (None, Some(d), Some(h)) => tree_dag(TreeShape::new(d, h)?),
        _ => return Err(Trouble::input("pass --d and --h for a tree, or --dag FILE")),
    };
    let args = json!({
        "sequence": sequence.display().to_string(),
        "d": d, "h": h, "dag": dag.map(|p| p.display().to_string()),
    });
    let config = experiment_config("pebble verify", args, common);
    match verify_sequence(&graph, &seq) {
        Ok(cost) => Ok(Finished {
            code: 0,
            config,
            result: json!({ "valid": true, "cost": cost.to_string(), "moves": seq.moves.len() }),
            text: format!("valid complete pebbling, cost {cost}, {} moves\n", seq.moves.len()),
        }),
        Err(e) => Ok(Finished {
            code: 1,
            config,
            result: json!({ "valid": false, "reason": e.to_string() }),
            text: format!("invalid: {e}\n"),
        }),
    }
}

fn pebble_search(
    d: usize,
    h: Option<usize>,
    game: GameArg,
    c: u32,
    bound: Option<&str>,
    dag: Option<&Path>,
    common: &Common,
) -> Result<Finished, Trouble> {
    if c == 0 {
        return Err(Trouble::input("--c must be positive"));
    }
    let graph = match (dag, h) {
        (Some(path), _) => load_dag(path)?,
        (None, Some(h)) => tree_dag(TreeShape::new(d, h)?),
        _ => return Err(Trouble::input("pass --h for a tree, or --dag FILE")),
    };
    let game = match game {
        GameArg::Black => SearchGame::Black,
        GameArg::Bw => SearchGame::BlackWhite,
        GameArg::Fractional => SearchGame::FractionalGrid(c),
        GameArg::Noslide => SearchGame::DiscretizedNoSlide(c),
    };
    let limits = search_limits(common);
    let args = json!({
        "d": d, "h": h, "game": format!("{game:?}"), "c": c,
        "bound": bound, "dag": dag.map(|p| p.display().to_string()),
    });
    let config = experiment_config("pebble search", args, common);
    match bound {
        Some(text) => {
            let bound = parse_bound(text)?;
            match feasible_under(&graph, game, &bound, &limits)? {
                Some(witness) => Ok(Finished {
                    code: 0,
                    config,
                    result: json!({
                        "feasible": true,
                        "bound": bound.to_string(),
                        "sequence": sequence_to_json(&witness),
                    }),
                    text: format!("feasible within {bound} ({} moves)\n", witness.moves.len()),
                }),
                None => Ok(Finished {
                    code: 1,
                    config,
                    result: json!({ "feasible": false, "bound": bound.to_string() }),
                    text: format!("no complete pebbling stays within {bound}\n"),
                }),
            }
        }
        None => {
            let (cost, witness) = min_cost(&graph, game, &limits)?;
            Ok(Finished {
                code: 0,
                config,
                result: json!({
                    "cost": cost.to_string(),
                    "sequence": sequence_to_json(&witness),
                }),
                text: format!("minimum cost {cost} ({} moves)\n", witness.moves.len()),
            })
        }
    }
}

fn pebble_strategy(
    d: usize,
    h: usize,
    game: StrategyArg,
    common: &Common,
) -> Result<Finished, Trouble> {
    let shape = TreeShape::new(d, h)?;
    let seq = match game {
        StrategyArg::Black => black_strategy(shape),
        StrategyArg::Fractional => {
            if (d, h) != (2, 3) {
                return Err(Trouble::input(
                    "the fractional fixture strategy exists for the binary height-3 tree only",
                ));
            }
            fig2_strategy()
        }
    };
    let cost = verify_sequence(&tree_dag(shape), &seq)
        .map_err(|e| Trouble::input(format!("fixture failed to verify: {e}")))?;
    let args = json!({ "d": d, "h": h, "game": match game {
        StrategyArg::Black => "black", StrategyArg::Fractional => "fractional" } });
    Ok(Finished {
        code: 0,
        config: experiment_config("pebble strategy", args, common),
        result: json!({ "cost": cost.to_string(), "sequence": sequence_to_json(&seq) }),
        text: format!("strategy with {} moves at cost {cost}\n", seq.moves.len()),
    })
}

fn dag_build(d: usize, h: usize, c: usize, full: bool, common: &Common) -> Result<Finished, Trouble> {
    let graph = if full { build_g(d, h, c)? } else { build_gprime(d, h, c)? };
    let kind = if full { "full" } else { "pruned" };
    let args = json!({ "d": d, "h": h, "c": c, "full": full });
    Ok(Finished {
        code: 0,
        config: experiment_config("dag build", args, common),
        result: json!({ "dag": graph.to_json(), "nodes": graph.node_count() }),
        text: format!(
            "{kind} reduction graph for (d={d}, h={h}) with {c} copies: {} nodes\n",
            graph.node_count()
        ),
    })
}

fn dag_nice(
    d: usize,
    h: usize,
    c: usize,
    full: bool,
    antichain_cap: usize,
    common: &Common,
) -> Result<Finished, Trouble> {
    let graph = if full { build_g(d, h, c)? } else { build_gprime(d, h, c)? };
    let report = check_nice(&graph, antichain_cap, &search_limits(common))?;
    let args = json!({ "d": d, "h": h, "c": c, "full": full, "antichain_cap": antichain_cap });
    let nice = report.is_nice();
    let text = format!(
        "sibling costs equal: {}; siblings incomparable: {}; disjoint source paths: {}{}{}\n",
        report.property1,
        report.property2,
        report.property3,
        if report.exhaustive { "" } else { " (antichain cap hit, partial)" },
        report
            .counterexample
            .as_ref()
            .map(|ce| format!("; counterexample: {ce}"))
            .unwrap_or_default(),
    );
    Ok(Finished {
        code: u8::from(!nice),
        config: experiment_config("dag nice", args, common),
        result: json!({
            "nice": nice,
            "property1": report.property1,
            "property2": report.property2,
            "property3": report.property3,
            "exhaustive": report.exhaustive,
            "counterexample": report.counterexample,
        }),
        text,
    })
}

fn dag_bottleneck(
    d: usize,
    h: usize,
    c: usize,
    side: SideArg,
    common: &Common,
) -> Result<Finished, Trouble> {
    let graph = build_gprime(d, h, c)?;
    let root = graph.id_of(graph.root());
    let path = match side {
        SideArg::Left => leftmost_path(&graph, root)?,
        SideArg::Right => rightmost_path(&graph, root)?,
    };
    let (set, paths) = bottleneck_witness(&graph, &path)?;
    let args = json!({ "d": d, "h": h, "c": c, "side": match side {
        SideArg::Left => "left", SideArg::Right => "right" } });
    let paths_json: BTreeMap<String, Json> = paths
        .iter()
        .map(|(u, p)| (u.to_string(), json!(p)))
        .collect();
    Ok(Finished {
        code: 0,
        config: experiment_config("dag bottleneck", args, common),
        result: json!({
            "blocked_path": path,
            "bottleneck": set,
            "disjoint_paths": paths_json,
        }),
        text: format!(
            "bottleneck set of {} nodes, each with a disjoint source path\n",
            set.len()
        ),
    })
}

fn built_program_and_instance(
    h: usize,
    k: Val,
    index: u128,
) -> Result<(BranchingProgram, TepInstance), Trouble> {
    let bp = build_thrifty_det(h, k)?;
    let count = instance_count(bp.shape, k)?;
    if let Some(count) = count {
        if index >= count {
            return Err(Trouble::input(format!("index {index} out of {count} instances")));
        }
    }
    let inst = instance_from_index(bp.shape, k, index);
    Ok((bp, inst))
}

/// Falsification findings are checked negatives (exit 1), not input errors.
fn proof_outcome(e: ProofError) -> Result<(u8, Json, String), Trouble> {
    match e {
        ProofError::Falsified(msg) => {
            Ok((1, json!({ "falsified": msg }), format!("FALSIFIED: {msg}\n")))
        }
        other => Err(other.into()),
    }
}

fn proof_critical(h: usize, k: Val, index: u128, common: &Common) -> Result<Finished, Trouble> {
    let (bp, inst) = built_program_and_instance(h, k, index)?;
    let args = json!({ "h": h, "k": k, "index": index.to_string() });
    let config = experiment_config("proof critical", args, common);
    let (code, result, text) = match critical_states(&bp, &inst) {
        Ok(assignment) => {
            let critical: BTreeMap<String, usize> =
                assignment.critical.iter().map(|(n, p)| (n.to_string(), *p)).collect();
            let text = format!(
                "critical states for all {} nodes along a {}-state path\n",
                critical.len(),
                assignment.path.len()
            );
            (
                0,
                json!({
                    "path": assignment.path,
                    "critical_positions": critical,
                    "configs": assignment.configs,
                }),
                text,
            )
        }
        Err(e) => proof_outcome(e)?,
    };
    Ok(Finished { code, config, result, text })
}

fn proof_supercritical(
    h: usize,
    k: Val,
    index: u128,
    level: usize,
    forward: bool,
    common: &Common,
) -> Result<Finished, Trouble> {
    let (bp, inst) = built_program_and_instance(h, k, index)?;
    let args =
        json!({ "h": h, "k": k, "index": index.to_string(), "level": level, "forward": forward });
    let config = experiment_config("proof supercritical", args, common);
    let picked = if forward {
        forward_supercritical(&bp, &inst).map(|r| (r.state, r.position, r.node, r.bottleneck))
    } else {
        supercritical_at(&bp, &inst, level).map(|r| (r.state, r.position, r.node, r.bottleneck))
    };
    let (code, result, text) = match picked {
        Ok((state, position, node, bottleneck)) => {
            let text = format!(
                "supercritical state {state} (path position {position}) queries node {node}; \
                 {} bottleneck nodes\n",
                bottleneck.len()
            );
            (
                0,
                json!({
                    "state": state,
                    "position": position,
                    "node": node,
                    "bottleneck": bottleneck,
                }),
                text,
            )
        }
        Err(e) => proof_outcome(e)?,
    };
    Ok(Finished { code, config, result, text })
}

fn proof_advice(
    h: usize,
    k: Val,
    index: Option<u128>,
    r: Option<StateId>,
    advice: Option<&str>,
    common: &Common,
) -> Result<Finished, Trouble> {
    let bp = build_thrifty_det(h, k)?;
    let cap = cap_instances(common);
    let args = json!({
        "h": h, "k": k, "index": index.map(|i| i.to_string()), "r": r, "advice": advice,
    });
    let config = experiment_config("proof advice", args, common);
    match (index, r, advice) {
        (Some(index), None, None) => {
            let (_, inst) = built_program_and_instance(h, k, index)?;
            let (code, result, text) = match interadv_encode(&bp, &inst, cap) {
                Ok(adv) => {
                    let r = pebbleworks::proof::supercritical(&bp, &inst)?.state;
                    let text =
                        format!("advice for input {index} within class of state {r}: {adv}\n");
                    (
                        0,
                        json!({
                            "advice": adv.to_string(),
                            "digits": adv.0,
                            "r": r,
                            "length": adv.0.len(),
                        }),
                        text,
                    )
                }
                Err(e) => proof_outcome(e)?,
            };
            Ok(Finished { code, config, result, text })
        }
        (None, Some(r), Some(advice)) => {
            let digits: Result<Vec<Val>, _> =
                advice.split(',').map(|d| d.trim().parse::<Val>()).collect();
            let digits =
                digits.map_err(|e| Trouble::input(format!("bad advice digits: {e}")))?;
            if digits.iter().any(|&d| d < 1 || d > k) {
                return Err(Trouble::input(format!("advice digits must lie in 1..={k}")));
            }
            let (code, result, text) =
                match interadv_decode(&bp, r, &AdviceString(digits), cap) {
                    Ok(Some(inst)) => {
                        let text = format!("decoded an input in the class of state {r}\n");
                        (0, json!({ "decoded": true, "instance": inst.to_json() }), text)
                    }
                    Ok(None) => (
                        1,
                        json!({ "decoded": false }),
                        "advice names no input in that class (decoder undefined here)\n"
                            .to_string(),
                    ),
                    Err(e) => proof_outcome(e)?,
                };
            Ok(Finished { code, config, result, text })
        }
        _ => Err(Trouble::input("pass --index to encode, or --r with --advice to decode")),
    }
}

fn proof_relaxed(h: usize, k: Val, common: &Common) -> Result<Finished, Trouble> {
    let bp = build_thrifty_det(h, k)?;
    let report = relaxed_bound_check(&bp, &check_config(common))?;
    let args = json!({ "h": h, "k": k });
    let ok = report.ok();
    Ok(Finished {
        code: u8::from(!ok),
        config: experiment_config("proof relaxed", args, common),
        result: json!({
            "pi": report.pi,
            "w": report.w,
            "size": report.size,
            "height_bound_holds": report.height_bound_holds,
            "wide_bound_holds": report.wide_bound_holds,
        }),
        text: format!(
            "pi={}, w={}, size={}; size >= k^h/pi^(h-2): {}; size >= k^h/pi^w: {}\n",
            report.pi, report.w, report.size, report.height_bound_holds, report.wide_bound_holds,
        ),
    })
}

fn report(suite: &str, common: &Common) -> Result<Finished, Trouble> {
    let report = run_suite(suite, common.seed)?;
    let args = json!({ "suite": suite });
    let passed = report.passed();
    Ok(Finished {
        code: u8::from(!passed),
        config: experiment_config("report", args, common),
        result: report.to_json(),
        text: report.render_text(),
    })
}
