//! k-way branching programs over the tree evaluation variables: simulation,
//! exhaustive semantic checks (solving, thriftiness, wrong-wrong), depth, and
//! the per-state thrifty sets behind the pi/w size bounds.
//!
//! A program is a list of states. Query states are labeled with a variable
//! and carry outedges labeled by values in [k]; deterministic programs have
//! exactly one outedge per label. Output states are labeled with a result.
//! Nondeterministic semantics follow the convention that only computations
//! reaching an output state count: on a given input the activated edges are
//! those matching the queried values, and the program's answers are the
//! output states reachable from the start along activated edges.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value as Json;
use thiserror::Error;

use crate::tree::{
    instance_count, instance_from_index, NodeId, TepInstance, TreeError, TreeShape, Val,
};

pub type StateId = usize;

#[derive(Debug, Error)]
pub enum BpError {
    #[error("bad program structure: {0}")]
    BadStructure(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no terminating computation: deterministic run revisits state {state}")]
    NonTerminating { state: StateId },
    #[error("path enumeration cap of {0} exceeded")]
    EnumerationCap(usize),
    #[error("operation requires a deterministic program")]
    NeedDeterministic,
    #[error("state {0} does not query an internal variable")]
    NotInternalQuery(StateId),
    #[error("bad program json: {0}")]
    BadJson(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    /// l_i for a leaf node i.
    Leaf(NodeId),
    /// f_i(a, b) for an internal node i.
    Internal { node: NodeId, a: Val, b: Val },
}

impl Variable {
    pub fn node(&self) -> NodeId {
        match self {
            Variable::Leaf(i) => *i,
            Variable::Internal { node, .. } => *node,
        }
    }

    /// The variable's value under an instance.
    pub fn value_in(&self, inst: &TepInstance) -> Result<Val, TreeError> {
        match self {
            Variable::Leaf(i) => inst.leaf_value(*i),
            Variable::Internal { node, a, b } => inst.table_entry(*node, &[*a, *b]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateKind {
    /// Outedges sorted by (label, target); nondeterministic programs may
    /// repeat labels.
    Query { var: Variable, edges: Vec<(Val, StateId)> },
    Output { value: Val },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchingProgram {
    pub k: Val,
    pub shape: TreeShape,
    pub states: Vec<StateKind>,
    pub start: StateId,
    pub deterministic: bool,
}

/// Which relation the program is checked against: the root's value in [k],
/// or the 0/1 question "is the root's value 1".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    FT,
    BT,
}

impl Problem {
    pub fn expected(&self, inst: &TepInstance) -> Val {
        match self {
            Problem::FT => inst.eval_ft(),
            Problem::BT => inst.eval_bt() as Val,
        }
    }

    /// The output alphabet, smallest label first.
    pub fn outputs(&self, k: Val) -> Vec<Val> {
        match self {
            Problem::FT => (1..=k).collect(),
            Problem::BT => vec![0, 1],
        }
    }
}

impl BranchingProgram {
    pub fn size(&self) -> usize {
        self.states.len()
    }

    /// Structural validity: edge labels and targets in range, variables match
    /// the tree, determinism means one edge per label in 1..=k.
    pub fn validate(&self) -> Result<(), BpError> {
        if self.shape.d != 2 {
            return Err(BpError::BadStructure("programs query binary trees".into()));
        }
        if self.k < 1 {
            return Err(BpError::BadStructure("k must be at least 1".into()));
        }
        if self.start >= self.states.len() {
            return Err(BpError::BadStructure("start state out of range".into()));
        }
        for (id, state) in self.states.iter().enumerate() {
            match state {
                StateKind::Output { .. } => {}
                StateKind::Query { var, edges } => {
                    match *var {
                        Variable::Leaf(i) => {
                            self.shape.check_node(i)?;
                            if !self.shape.is_leaf(i) {
                                return Err(BpError::BadStructure(format!(
                                    "state {id} queries l_{i} but {i} is internal"
                                )));
                            }
                        }
                        Variable::Internal { node, a, b } => {
                            self.shape.check_node(node)?;
                            if self.shape.is_leaf(node) {
                                return Err(BpError::BadStructure(format!(
                                    "state {id} queries f_{node} but {node} is a leaf"
                                )));
                            }
                            if !(1..=self.k).contains(&a) || !(1..=self.k).contains(&b) {
                                return Err(BpError::BadStructure(format!(
                                    "state {id} query arguments out of range"
                                )));
                            }
                        }
                    }
                    for &(label, target) in edges {
                        if !(1..=self.k).contains(&label) {
                            return Err(BpError::BadStructure(format!(
                                "state {id} edge label {label} out of range"
                            )));
                        }
                        if target >= self.states.len() {
                            return Err(BpError::BadStructure(format!(
                                "state {id} edge to missing state {target}"
                            )));
                        }
                    }
                    if self.deterministic {
                        let labels: Vec<Val> = edges.iter().map(|&(l, _)| l).collect();
                        let want: Vec<Val> = (1..=self.k).collect();
                        if labels != want {
                            return Err(BpError::BadStructure(format!(
                                "state {id} must have one edge per label 1..={}",
                                self.k
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Additionally require the output states to be exactly the problem's
    /// alphabet, one state per label.
    pub fn validate_for(&self, problem: Problem) -> Result<(), BpError> {
        self.validate()?;
        let mut labels: Vec<Val> = self
            .states
            .iter()
            .filter_map(|s| match s {
                StateKind::Output { value } => Some(*value),
                _ => None,
            })
            .collect();
        labels.sort_unstable();
        if labels != problem.outputs(self.k) {
            return Err(BpError::BadStructure(format!(
                "output labels {labels:?} do not form the expected alphabet"
            )));
        }
        Ok(())
    }

    fn query_states(&self) -> impl Iterator<Item = (StateId, &Variable, &Vec<(Val, StateId)>)> {
        self.states.iter().enumerate().filter_map(|(id, s)| match s {
            StateKind::Query { var, edges } => Some((id, var, edges)),
            StateKind::Output { .. } => None,
        })
    }
}

/// Run a deterministic program: the output value and the visited states,
/// output state included.
pub fn simulate(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<(Val, Vec<StateId>), BpError> {
    if !bp.deterministic {
        return Err(BpError::NeedDeterministic);
    }
    let mut path = vec![bp.start];
    loop {
        let cur = *path.last().unwrap();
        match &bp.states[cur] {
            StateKind::Output { value } => return Ok((*value, path)),
            StateKind::Query { var, edges } => {
                let val = var.value_in(inst)?;
                let next = edges
                    .iter()
                    .find(|&&(l, _)| l == val)
                    .map(|&(_, t)| t)
                    .ok_or(BpError::BadStructure(format!("state {cur} lacks edge {val}")))?;
                // A walk longer than the state count must have looped.
                if path.len() > bp.states.len() {
                    return Err(BpError::NonTerminating { state: next });
                }
                path.push(next);
            }
        }
    }
}

/// Enumerate the terminating simple computation paths of a nondeterministic
/// program on one input (paths revisiting a state are pruned).
pub fn simulate_nondet(
    bp: &BranchingProgram,
    inst: &TepInstance,
    cap: usize,
) -> Result<Vec<(Val, Vec<StateId>)>, BpError> {
    let mut found = Vec::new();
    let mut on_path = vec![false; bp.states.len()];
    let mut path = Vec::new();
    dfs(bp, inst, bp.start, &mut on_path, &mut path, &mut found, cap)?;
    return Ok(found);

    fn dfs(
        bp: &BranchingProgram,
        inst: &TepInstance,
        cur: StateId,
        on_path: &mut Vec<bool>,
        path: &mut Vec<StateId>,
        found: &mut Vec<(Val, Vec<StateId>)>,
        cap: usize,
    ) -> Result<(), BpError> {
        if on_path[cur] {
            return Ok(());
        }
        on_path[cur] = true;
        path.push(cur);
        match &bp.states[cur] {
            StateKind::Output { value } => {
                if found.len() >= cap {
                    return Err(BpError::EnumerationCap(cap));
                }
                found.push((*value, path.clone()));
            }
            StateKind::Query { var, edges } => {
                let val = var.value_in(inst)?;
                for &(label, target) in edges {
                    if label == val {
                        dfs(bp, inst, target, on_path, path, found, cap)?;
                    }
                }
            }
        }
        path.pop();
        on_path[cur] = false;
        Ok(())
    }
}

/// States lying on some terminating computation for this input: reachable
/// from the start and co-reachable from an output along activated edges.
/// Exact for any program, cycles included.
fn live_states(bp: &BranchingProgram, inst: &TepInstance) -> Result<Vec<bool>, TreeError> {
    let n = bp.states.len();
    let mut activated: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for (id, var, edges) in bp.query_states() {
        let val = var.value_in(inst)?;
        activated[id] = edges.iter().filter(|&&(l, _)| l == val).map(|&(_, t)| t).collect();
    }
    let mut reach = vec![false; n];
    let mut stack = vec![bp.start];
    reach[bp.start] = true;
    while let Some(x) = stack.pop() {
        for &y in &activated[x] {
            if !reach[y] {
                reach[y] = true;
                stack.push(y);
            }
        }
    }
    let mut rev: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for (x, outs) in activated.iter().enumerate() {
        for &y in outs {
            rev[y].push(x);
        }
    }
    let mut co = vec![false; n];
    let mut stack: Vec<StateId> = (0..n)
        .filter(|&i| matches!(bp.states[i], StateKind::Output { .. }))
        .collect();
    for &i in &stack {
        co[i] = true;
    }
    while let Some(x) = stack.pop() {
        for &y in &rev[x] {
            if !co[y] {
                co[y] = true;
                stack.push(y);
            }
        }
    }
    Ok((0..n).map(|i| reach[i] && co[i]).collect())
}

/// Output values of terminating computations on this input.
fn answers(bp: &BranchingProgram, inst: &TepInstance) -> Result<BTreeSet<Val>, TreeError> {
    let live = live_states(bp, inst)?;
    Ok(bp
        .states
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            StateKind::Output { value } if live[i] => Some(*value),
            _ => None,
        })
        .collect())
}

/// How the exhaustive checks pick the instances to run.
#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    /// Enumerate everything when the instance count is at most this.
    pub exhaustive_cap: u128,
    /// Otherwise check this many seeded random instances.
    pub samples: u64,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { exhaustive_cap: 1 << 24, samples: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub ok: bool,
    /// First failing instance in enumeration order (or first failing sample).
    pub counterexample: Option<TepInstance>,
    /// The offending state for thriftiness-style checks.
    pub state: Option<StateId>,
    pub sampled: bool,
    pub checked: u64,
}

enum Plan {
    Exhaustive(u64),
    Sampled(Vec<TepInstance>),
}

fn plan(shape: TreeShape, k: Val, cfg: &CheckConfig) -> Plan {
    match instance_count(shape, k) {
        Ok(Some(count)) if count <= cfg.exhaustive_cap => Plan::Exhaustive(count as u64),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let layout = crate::tree::VarLayout::new(shape, k).expect("valid shape");
            let samples = (0..cfg.samples)
                .map(|_| {
                    let vars: Vec<Val> =
                        (0..layout.var_count).map(|_| rng.gen_range(1..=k)).collect();
                    TepInstance::from_vars(shape, k, vars).expect("sampled in range")
                })
                .collect();
            Plan::Sampled(samples)
        }
    }
}

/// Shared driver: run `test` over the planned instances in parallel and keep
/// the first failure in enumeration order.
fn sweep<F>(bp: &BranchingProgram, cfg: &CheckConfig, test: F) -> CheckOutcome
where
    F: Fn(&TepInstance) -> Option<Option<StateId>> + Sync,
{
    match plan(bp.shape, bp.k, cfg) {
        Plan::Exhaustive(count) => {
            let hit = (0..count).into_par_iter().find_map_first(|i| {
                let inst = instance_from_index(bp.shape, bp.k, i as u128);
                test(&inst).map(|state| (inst, state))
            });
            CheckOutcome {
                ok: hit.is_none(),
                counterexample: hit.as_ref().map(|(i, _)| i.clone()),
                state: hit.and_then(|(_, s)| s),
                sampled: false,
                checked: count,
            }
        }
        Plan::Sampled(samples) => {
            let checked = samples.len() as u64;
            let hit = samples
                .into_par_iter()
                .map(|inst| {
                    let failure = test(&inst);
                    (inst, failure)
                })
                .find_map_first(|(inst, failure)| failure.map(|state| (inst, state)))
                ;
            CheckOutcome {
                ok: hit.is_none(),
                counterexample: hit.as_ref().map(|(i, _)| i.clone()),
                state: hit.and_then(|(_, s)| s),
                sampled: true,
                checked,
            }
        }
    }
}

/// Does the program answer the problem correctly on every (checked) input?
/// Deterministic runs must terminate with the right output; otherwise every
/// terminating computation must agree with it and at least one must exist.
pub fn check_solves(bp: &BranchingProgram, problem: Problem, cfg: &CheckConfig) -> CheckOutcome {
    sweep(bp, cfg, |inst| {
        let want = problem.expected(inst);
        if bp.deterministic {
            match simulate(bp, inst) {
                Ok((got, _)) if got == want => None,
                _ => Some(None),
            }
        } else {
            match answers(bp, inst) {
                Ok(got) if got.len() == 1 && got.contains(&want) => None,
                _ => Some(None),
            }
        }
    })
}

fn thrifty_violation(
    inst: &TepInstance,
    values: &[Val],
    var: &Variable,
) -> bool {
    let _ = inst;
    match *var {
        Variable::Leaf(_) => false,
        Variable::Internal { node, a, b } => {
            a != values[2 * node] || b != values[2 * node + 1]
        }
    }
}

/// Every internal query made on a (terminating) computation asks for the
/// node's function at exactly its children's values.
pub fn check_thrifty(bp: &BranchingProgram, cfg: &CheckConfig) -> CheckOutcome {
    sweep(bp, cfg, |inst| {
        let values = inst.node_values();
        if bp.deterministic {
            let Ok((_, path)) = simulate(bp, inst) else {
                return Some(None);
            };
            for &id in &path {
                if let StateKind::Query { var, .. } = &bp.states[id] {
                    if thrifty_violation(inst, &values, var) {
                        return Some(Some(id));
                    }
                }
            }
            None
        } else {
            let live = live_states(bp, inst).ok()?;
            for (id, var, _) in bp.query_states() {
                if live[id] && thrifty_violation(inst, &values, var) {
                    return Some(Some(id));
                }
            }
            None
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryClass {
    Thrifty,
    WrongWrong,
    LeftOnlyCorrect,
    RightOnlyCorrect,
}

/// Compare an internal query's arguments against the children's true values.
pub fn classify_query(inst: &TepInstance, var: &Variable) -> Result<QueryClass, BpError> {
    let Variable::Internal { node, a, b } = *var else {
        return Err(BpError::NotInternalQuery(0));
    };
    let values = inst.node_values();
    let left = a == values[2 * node];
    let right = b == values[2 * node + 1];
    Ok(match (left, right) {
        (true, true) => QueryClass::Thrifty,
        (false, false) => QueryClass::WrongWrong,
        (true, false) => QueryClass::LeftOnlyCorrect,
        (false, true) => QueryClass::RightOnlyCorrect,
    })
}

/// Every visited internal query is either thrifty or wrong in both
/// coordinates.
pub fn check_thrifty_or_wrongwrong(bp: &BranchingProgram, cfg: &CheckConfig) -> CheckOutcome {
    let bad = |inst: &TepInstance, var: &Variable| match classify_query(inst, var) {
        Ok(QueryClass::Thrifty) | Ok(QueryClass::WrongWrong) | Err(_) => false,
        Ok(_) => true,
    };
    sweep(bp, cfg, |inst| {
        if bp.deterministic {
            let Ok((_, path)) = simulate(bp, inst) else {
                return Some(None);
            };
            for &id in &path {
                if let StateKind::Query { var: v @ Variable::Internal { .. }, .. } =
                    &bp.states[id]
                {
                    if bad(inst, v) {
                        return Some(Some(id));
                    }
                }
            }
            None
        } else {
            let live = live_states(bp, inst).ok()?;
            for (id, var, _) in bp.query_states() {
                if matches!(var, Variable::Internal { .. }) && live[id] && bad(inst, var) {
                    return Some(Some(id));
                }
            }
            None
        }
    })
}

/// Per-state thrifty sets: for a state querying f_i(a, b), the left set
/// collects the right-child values seen while the left child agrees with a,
/// and the right set collects left-child values seen while the right child
/// agrees with b. Exhaustive over the checked instances.
pub fn thrifty_sets(
    bp: &BranchingProgram,
    q: StateId,
    cfg: &CheckConfig,
) -> Result<(BTreeSet<Val>, BTreeSet<Val>), BpError> {
    let StateKind::Query { var: Variable::Internal { node, a, b }, .. } = bp.states[q] else {
        return Err(BpError::NotInternalQuery(q));
    };
    let pairs = visited_value_pairs(bp, cfg)?;
    let mut left = BTreeSet::new();
    let mut right = BTreeSet::new();
    for &(va, vb) in &pairs[q] {
        let _ = node;
        if va == a {
            left.insert(vb);
        }
        if vb == b {
            right.insert(va);
        }
    }
    Ok((left, right))
}

/// For every state, the set of (left child value, right child value) pairs
/// realized by inputs that visit it on a terminating computation.
fn visited_value_pairs(
    bp: &BranchingProgram,
    cfg: &CheckConfig,
) -> Result<Vec<BTreeSet<(Val, Val)>>, BpError> {
    let per_instance = |inst: &TepInstance| -> Result<Vec<(StateId, (Val, Val))>, BpError> {
        let values = inst.node_values();
        let mut seen = Vec::new();
        let mut record = |id: StateId| {
            if let StateKind::Query { var: Variable::Internal { node, .. }, .. } =
                &bp.states[id]
            {
                seen.push((id, (values[2 * node], values[2 * node + 1])));
            }
        };
        if bp.deterministic {
            let (_, path) = simulate(bp, inst)?;
            path.into_iter().for_each(&mut record);
        } else {
            let live = live_states(bp, inst)?;
            (0..bp.states.len()).filter(|&i| live[i]).for_each(&mut record);
        }
        Ok(seen)
    };

    let fold = |mut acc: Vec<BTreeSet<(Val, Val)>>, inst: &TepInstance| {
        for (id, pair) in per_instance(inst).unwrap_or_default() {
            acc[id].insert(pair);
        }
        acc
    };
    let empty = || vec![BTreeSet::new(); bp.states.len()];
    let merge = |mut a: Vec<BTreeSet<(Val, Val)>>, b: Vec<BTreeSet<(Val, Val)>>| {
        for (x, y) in a.iter_mut().zip(b) {
            x.extend(y);
        }
        a
    };
    Ok(match plan(bp.shape, bp.k, cfg) {
        Plan::Exhaustive(count) => (0..count)
            .into_par_iter()
            .fold(empty, |acc, i| {
                let inst = instance_from_index(bp.shape, bp.k, i as u128);
                fold(acc, &inst)
            })
            .reduce(empty, merge),
        Plan::Sampled(samples) => {
            samples.par_iter().fold(empty, |acc, inst| fold(acc, inst)).reduce(empty, merge)
        }
    })
}

/// The program's branching parameters: pi is the largest thrifty-set size
/// over internal-querying states (1 when there are none); w is the largest
/// number of nodes, over inputs, whose visited queries have a thrifty set
/// bigger than one.
pub fn pi_w_params(bp: &BranchingProgram, cfg: &CheckConfig) -> Result<(usize, usize), BpError> {
    let pairs = visited_value_pairs(bp, cfg)?;
    let mut pi = 1usize;
    let mut wide = vec![false; bp.states.len()];
    for (id, var, _) in bp.query_states() {
        let Variable::Internal { a, b, .. } = *var else { continue };
        let left = pairs[id].iter().filter(|&&(va, _)| va == a).count();
        let right = pairs[id].iter().filter(|&&(_, vb)| vb == b).count();
        pi = pi.max(left).max(right);
        wide[id] = left > 1 || right > 1;
    }

    let count_wide = |inst: &TepInstance| -> usize {
        let visited: Vec<StateId> = if bp.deterministic {
            simulate(bp, inst).map(|(_, p)| p).unwrap_or_default()
        } else {
            match live_states(bp, inst) {
                Ok(live) => (0..bp.states.len()).filter(|&i| live[i]).collect(),
                Err(_) => Vec::new(),
            }
        };
        let nodes: BTreeSet<NodeId> = visited
            .into_iter()
            .filter(|&id| wide[id])
            .map(|id| match &bp.states[id] {
                StateKind::Query { var, .. } => var.node(),
                StateKind::Output { .. } => unreachable!("wide is set on queries only"),
            })
            .collect();
        nodes.len()
    };
    let w = match plan(bp.shape, bp.k, cfg) {
        Plan::Exhaustive(count) => (0..count)
            .into_par_iter()
            .map(|i| {
                let inst = instance_from_index(bp.shape, bp.k, i as u128);
                count_wide(&inst)
            })
            .max()
            .unwrap_or(0),
        Plan::Sampled(samples) => {
            samples.par_iter().map(count_wide).max().unwrap_or(0)
        }
    };
    Ok((pi, w))
}

/// Maximum number of states visited by any input, output state included.
pub fn depth(bp: &BranchingProgram, cfg: &CheckConfig) -> Result<usize, BpError> {
    if !bp.deterministic {
        return Err(BpError::NeedDeterministic);
    }
    let len_of = |inst: &TepInstance| simulate(bp, inst).map(|(_, p)| p.len()).unwrap_or(0);
    Ok(match plan(bp.shape, bp.k, cfg) {
        Plan::Exhaustive(count) => (0..count)
            .into_par_iter()
            .map(|i| {
                let inst = instance_from_index(bp.shape, bp.k, i as u128);
                len_of(&inst)
            })
            .max()
            .unwrap_or(0),
        Plan::Sampled(samples) => samples.par_iter().map(len_of).max().unwrap_or(0),
    })
}

#[derive(Debug, Clone)]
pub enum MindepthReport {
    /// Premises held and the program is indeed thrifty.
    Confirmed,
    /// Premises not met (not deterministic, too deep, or does not solve).
    NotApplicable(String),
    /// Premises held but a non-thrifty query was found; would falsify the
    /// minimum-depth theorem.
    Falsified { counterexample: TepInstance, state: Option<StateId> },
}

/// Check the implication: a deterministic program of depth at most 2^h that
/// solves the problem must be thrifty.
pub fn check_mindepth_thrifty(bp: &BranchingProgram, cfg: &CheckConfig) -> MindepthReport {
    if !bp.deterministic {
        return MindepthReport::NotApplicable("program is nondeterministic".into());
    }
    let problem = if bp.states.iter().any(
        |s| matches!(s, StateKind::Output { value: 0 }),
    ) {
        Problem::BT
    } else {
        Problem::FT
    };
    let d = match depth(bp, cfg) {
        Ok(d) => d,
        Err(e) => return MindepthReport::NotApplicable(format!("depth failed: {e}")),
    };
    let max = 1usize << bp.shape.h;
    if d > max {
        return MindepthReport::NotApplicable(format!("depth {d} exceeds {max}"));
    }
    if !check_solves(bp, problem, cfg).ok {
        return MindepthReport::NotApplicable("program does not solve the problem".into());
    }
    let thrifty = check_thrifty(bp, cfg);
    if thrifty.ok {
        MindepthReport::Confirmed
    } else {
        MindepthReport::Falsified {
            counterexample: thrifty.counterexample.expect("failure carries an instance"),
            state: thrifty.state,
        }
    }
}

/// Random single-defect mutants for testing the checkers' sensitivity:
/// either one outedge is rewired to a different target, or one query state
/// is pointed at a different variable.
pub fn mutate(bp: &BranchingProgram, rng: &mut impl Rng) -> BranchingProgram {
    let mut out = bp.clone();
    let queries: Vec<StateId> = bp
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, StateKind::Query { .. }))
        .map(|(i, _)| i)
        .collect();
    let id = queries[rng.gen_range(0..queries.len())];
    let StateKind::Query { var, edges } = &mut out.states[id] else { unreachable!() };
    if rng.gen_bool(0.5) || bp.states.len() < 2 {
        // Rewire one edge somewhere else.
        let e = rng.gen_range(0..edges.len());
        let old = edges[e].1;
        let mut new = rng.gen_range(0..bp.states.len());
        while new == old {
            new = rng.gen_range(0..bp.states.len());
        }
        edges[e].1 = new;
    } else {
        // Swap the queried variable for a different one.
        let shape = bp.shape;
        let old = *var;
        loop {
            let node = rng.gen_range(1..=shape.node_count());
            let candidate = if shape.is_leaf(node) {
                Variable::Leaf(node)
            } else {
                Variable::Internal {
                    node,
                    a: rng.gen_range(1..=bp.k),
                    b: rng.gen_range(1..=bp.k),
                }
            };
            if candidate != old {
                *var = candidate;
                break;
            }
        }
    }
    out
}

/// Renumber states in breadth-first discovery order from the start (edges in
/// label order), so structurally identical programs serialize identically.
/// Unreachable states keep their relative order at the end.
pub fn canonicalize(bp: &BranchingProgram) -> BranchingProgram {
    let n = bp.states.len();
    let mut order: Vec<StateId> = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([bp.start]);
    seen[bp.start] = true;
    while let Some(x) = queue.pop_front() {
        order.push(x);
        if let StateKind::Query { edges, .. } = &bp.states[x] {
            for &(_, t) in edges {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    for x in 0..n {
        if !seen[x] {
            order.push(x);
        }
    }
    let mut renumber = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        renumber[old] = new;
    }
    let states = order
        .iter()
        .map(|&old| match &bp.states[old] {
            StateKind::Output { value } => StateKind::Output { value: *value },
            StateKind::Query { var, edges } => {
                let mut edges: Vec<(Val, StateId)> =
                    edges.iter().map(|&(l, t)| (l, renumber[t])).collect();
                edges.sort_unstable();
                StateKind::Query { var: *var, edges }
            }
        })
        .collect();
    BranchingProgram { states, start: 0, ..*bp }
}

// Json encoding. Deterministic programs serialize edges as {"label": target};
// repeated labels serialize as {"label": [t1, t2]}.

pub fn to_json(bp: &BranchingProgram) -> Json {
    let states: Vec<Json> = bp
        .states
        .iter()
        .enumerate()
        .map(|(id, state)| {
            let mut obj = serde_json::Map::new();
            match state {
                StateKind::Output { value } => {
                    obj.insert("id".into(), Json::from(id as u64));
                    obj.insert("output".into(), Json::from(*value));
                }
                StateKind::Query { var, edges } => {
                    let mut edge_map = serde_json::Map::new();
                    for label in 1..=bp.k {
                        let targets: Vec<u64> = edges
                            .iter()
                            .filter(|&&(l, _)| l == label)
                            .map(|&(_, t)| t as u64)
                            .collect();
                        match targets.len() {
                            0 => {}
                            1 => {
                                edge_map.insert(label.to_string(), Json::from(targets[0]));
                            }
                            _ => {
                                edge_map.insert(label.to_string(), Json::from(targets));
                            }
                        }
                    }
                    obj.insert("edges".into(), Json::Object(edge_map));
                    obj.insert("id".into(), Json::from(id as u64));
                    let query = match *var {
                        Variable::Leaf(i) => {
                            let mut q = serde_json::Map::new();
                            q.insert("leaf".into(), Json::from(i as u64));
                            Json::Object(q)
                        }
                        Variable::Internal { node, a, b } => {
                            let mut f = serde_json::Map::new();
                            f.insert("a".into(), Json::from(a));
                            f.insert("b".into(), Json::from(b));
                            f.insert("node".into(), Json::from(node as u64));
                            let mut q = serde_json::Map::new();
                            q.insert("f".into(), Json::Object(f));
                            Json::Object(q)
                        }
                    };
                    obj.insert("query".into(), query);
                }
            }
            Json::Object(obj)
        })
        .collect();
    let mut obj = serde_json::Map::new();
    obj.insert("d".into(), Json::from(bp.shape.d as u64));
    obj.insert("deterministic".into(), Json::from(bp.deterministic));
    obj.insert("h".into(), Json::from(bp.shape.h as u64));
    obj.insert("k".into(), Json::from(bp.k));
    obj.insert("start".into(), Json::from(bp.start as u64));
    obj.insert("states".into(), Json::Array(states));
    Json::Object(obj)
}

pub fn from_json(json: &Json) -> Result<BranchingProgram, BpError> {
    let obj = json.as_object().ok_or_else(|| BpError::BadJson("expected object".into()))?;
    let get = |key: &str| {
        obj.get(key).ok_or_else(|| BpError::BadJson(format!("missing \"{key}\"")))
    };
    let d = get("d")?.as_u64().ok_or_else(|| BpError::BadJson("bad d".into()))? as usize;
    let h = get("h")?.as_u64().ok_or_else(|| BpError::BadJson("bad h".into()))? as usize;
    let k = get("k")?.as_u64().ok_or_else(|| BpError::BadJson("bad k".into()))? as Val;
    let shape = TreeShape::new(d, h).map_err(|e| BpError::BadJson(e.to_string()))?;
    let deterministic = get("deterministic")?
        .as_bool()
        .ok_or_else(|| BpError::BadJson("bad deterministic".into()))?;
    let states_json =
        get("states")?.as_array().ok_or_else(|| BpError::BadJson("bad states".into()))?;

    // First pass: map listed ids to indices in listing order.
    let mut id_to_idx = std::collections::HashMap::new();
    for (idx, s) in states_json.iter().enumerate() {
        let id = s
            .as_object()
            .and_then(|m| m.get("id"))
            .and_then(Json::as_u64)
            .ok_or_else(|| BpError::BadJson("state missing id".into()))?;
        if id_to_idx.insert(id, idx).is_some() {
            return Err(BpError::BadJson(format!("duplicate state id {id}")));
        }
    }
    let lookup = |id: u64| {
        id_to_idx
            .get(&id)
            .copied()
            .ok_or_else(|| BpError::BadJson(format!("unknown state id {id}")))
    };

    let mut states = Vec::with_capacity(states_json.len());
    for s in states_json {
        let m = s.as_object().expect("checked above");
        if let Some(v) = m.get("output") {
            let value =
                v.as_u64().ok_or_else(|| BpError::BadJson("bad output label".into()))?;
            states.push(StateKind::Output { value: value as Val });
            continue;
        }
        let qm = m
            .get("query")
            .and_then(Json::as_object)
            .ok_or_else(|| BpError::BadJson("state needs query or output".into()))?;
        let var = if let Some(leaf) = qm.get("leaf") {
            Variable::Leaf(
                leaf.as_u64().ok_or_else(|| BpError::BadJson("bad leaf".into()))? as NodeId
            )
        } else if let Some(f) = qm.get("f").and_then(Json::as_object) {
            let field = |key: &str| {
                f.get(key)
                    .and_then(Json::as_u64)
                    .ok_or_else(|| BpError::BadJson(format!("bad f.{key}")))
            };
            Variable::Internal {
                node: field("node")? as NodeId,
                a: field("a")? as Val,
                b: field("b")? as Val,
            }
        } else {
            return Err(BpError::BadJson("query needs leaf or f".into()));
        };
        let edges_json = m
            .get("edges")
            .and_then(Json::as_object)
            .ok_or_else(|| BpError::BadJson("query state needs edges".into()))?;
        let mut edges = Vec::new();
        for (label, target) in edges_json {
            let label: Val =
                label.parse().map_err(|_| BpError::BadJson("bad edge label".into()))?;
            match target {
                Json::Number(_) => {
                    let t = target.as_u64().ok_or_else(|| BpError::BadJson("bad edge".into()))?;
                    edges.push((label, lookup(t)?));
                }
                Json::Array(ts) => {
                    for t in ts {
                        let t = t.as_u64().ok_or_else(|| BpError::BadJson("bad edge".into()))?;
                        edges.push((label, lookup(t)?));
                    }
                }
                _ => return Err(BpError::BadJson("edge target must be id or ids".into())),
            }
        }
        edges.sort_unstable();
        states.push(StateKind::Query { var, edges });
    }
    let start = get("start")?.as_u64().ok_or_else(|| BpError::BadJson("bad start".into()))?;
    let bp = BranchingProgram { k, shape, states, start: lookup(start)?, deterministic };
    bp.validate()?;
    Ok(bp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::build_thrifty_det;

    fn cfg() -> CheckConfig {
        CheckConfig::default()
    }

    fn inst_h2() -> TepInstance {
        // The worked h=2, k=2 example: f_1 = [2,1,1,2], l_2 = 1, l_3 = 2.
        TepInstance::from_vars(TreeShape::new(2, 2).unwrap(), 2, vec![1, 2, 2, 1, 1, 2])
            .unwrap()
    }

    #[test]
    fn simulate_h1() {
        let bp = build_thrifty_det(1, 2).unwrap();
        let shape = TreeShape::new(2, 1).unwrap();
        let inst = TepInstance::from_vars(shape, 2, vec![2]).unwrap();
        let (out, path) = simulate(&bp, &inst).unwrap();
        assert_eq!(out, 2);
        assert_eq!(path.len(), 2);
    }

    #[test]
    fn simulate_h2_matches_eval() {
        let bp = build_thrifty_det(2, 2).unwrap();
        let inst = inst_h2();
        let (out, _) = simulate(&bp, &inst).unwrap();
        assert_eq!(out, inst.eval_ft());
        assert_eq!(out, 1);
    }

    #[test]
    fn nonterminating_detected() {
        let shape = TreeShape::new(2, 1).unwrap();
        let bp = BranchingProgram {
            k: 2,
            shape,
            states: vec![
                StateKind::Query { var: Variable::Leaf(1), edges: vec![(1, 0), (2, 1)] },
                StateKind::Output { value: 1 },
            ],
            start: 0,
            deterministic: true,
        };
        bp.validate().unwrap();
        let looping = TepInstance::from_vars(shape, 2, vec![1]).unwrap();
        assert!(matches!(simulate(&bp, &looping), Err(BpError::NonTerminating { .. })));
        let fine = TepInstance::from_vars(shape, 2, vec![2]).unwrap();
        assert!(simulate(&bp, &fine).is_ok());
    }

    #[test]
    fn solves_and_thrifty_small() {
        for (h, k) in [(1, 2), (2, 2), (2, 3)] {
            let bp = build_thrifty_det(h, k).unwrap();
            assert!(check_solves(&bp, Problem::FT, &cfg()).ok, "solves ({h},{k})");
            assert!(check_thrifty(&bp, &cfg()).ok, "thrifty ({h},{k})");
        }
    }

    #[test]
    fn rewired_edge_is_caught() {
        let bp = build_thrifty_det(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mutant = mutate(&bp, &mut rng);
        let solves = check_solves(&mutant, Problem::FT, &cfg());
        let thrifty = check_thrifty(&mutant, &cfg());
        assert!(!solves.ok || !thrifty.ok);
        if !solves.ok {
            assert!(solves.counterexample.is_some());
        }
    }

    #[test]
    fn classify_examples() {
        let inst = inst_h2();
        // v_2 = 1, v_3 = 2.
        let q = |a, b| Variable::Internal { node: 1, a, b };
        assert_eq!(classify_query(&inst, &q(1, 2)).unwrap(), QueryClass::Thrifty);
        assert_eq!(classify_query(&inst, &q(2, 1)).unwrap(), QueryClass::WrongWrong);
        assert_eq!(classify_query(&inst, &q(1, 1)).unwrap(), QueryClass::LeftOnlyCorrect);
        assert_eq!(classify_query(&inst, &q(2, 2)).unwrap(), QueryClass::RightOnlyCorrect);
        assert!(classify_query(&inst, &Variable::Leaf(2)).is_err());
    }

    #[test]
    fn two_distinct_root_queries_not_thrifty() {
        let shape = TreeShape::new(2, 2).unwrap();
        let outs = |base: StateId| -> Vec<(Val, StateId)> { vec![(1, base), (2, base + 1)] };
        let bp = BranchingProgram {
            k: 2,
            shape,
            states: vec![
                StateKind::Query {
                    var: Variable::Internal { node: 1, a: 1, b: 1 },
                    edges: vec![(1, 1), (2, 1)],
                },
                StateKind::Query {
                    var: Variable::Internal { node: 1, a: 2, b: 2 },
                    edges: outs(2),
                },
                StateKind::Output { value: 1 },
                StateKind::Output { value: 2 },
            ],
            start: 0,
            deterministic: true,
        };
        bp.validate().unwrap();
        assert!(!check_thrifty(&bp, &cfg()).ok);
        // Either query is wrong-wrong or thrifty only when both coordinates
        // agree; (1,1) vs (2,2) disagree on every input in one coordinate
        // somewhere, so the weaker check fails too on some input.
        assert!(!check_thrifty_or_wrongwrong(&bp, &cfg()).ok);
    }

    #[test]
    fn leaf_only_program_vacuously_thrifty() {
        let shape = TreeShape::new(2, 2).unwrap();
        let bp = BranchingProgram {
            k: 2,
            shape,
            states: vec![
                StateKind::Query { var: Variable::Leaf(2), edges: vec![(1, 1), (2, 2)] },
                StateKind::Output { value: 1 },
                StateKind::Output { value: 2 },
            ],
            start: 0,
            deterministic: true,
        };
        bp.validate().unwrap();
        assert!(check_thrifty(&bp, &cfg()).ok);
        assert!(check_thrifty_or_wrongwrong(&bp, &cfg()).ok);
    }

    #[test]
    fn thrifty_sets_singletons() {
        let bp = build_thrifty_det(2, 2).unwrap();
        for (id, var, _) in bp.query_states() {
            if matches!(var, Variable::Internal { .. }) {
                let (left, right) = thrifty_sets(&bp, id, &cfg()).unwrap();
                assert!(left.len() <= 1 && right.len() <= 1, "state {id}");
            }
        }
        let (pi, w) = pi_w_params(&bp, &cfg()).unwrap();
        assert_eq!((pi, w), (1, 0));
    }

    #[test]
    fn unreachable_state_has_empty_sets() {
        let mut bp = build_thrifty_det(2, 2).unwrap();
        let id = bp.states.len();
        bp.states.push(StateKind::Query {
            var: Variable::Internal { node: 1, a: 1, b: 1 },
            edges: vec![(1, 0), (2, 0)],
        });
        bp.validate().unwrap();
        let (left, right) = thrifty_sets(&bp, id, &cfg()).unwrap();
        assert!(left.is_empty() && right.is_empty());
    }

    #[test]
    fn depth_and_mindepth() {
        let bp = build_thrifty_det(2, 2).unwrap();
        assert_eq!(depth(&bp, &cfg()).unwrap(), 4);
        assert!(matches!(check_mindepth_thrifty(&bp, &cfg()), MindepthReport::Confirmed));
    }

    #[test]
    fn padded_program_not_applicable() {
        // Re-query a leaf before running the real program: still correct,
        // depth 2^h + 1, so the implication has nothing to say.
        let bp = build_thrifty_det(2, 2).unwrap();
        let mut states = bp.states.clone();
        let pad = states.len();
        states.push(StateKind::Query {
            var: Variable::Leaf(2),
            edges: vec![(1, bp.start), (2, bp.start)],
        });
        let padded = BranchingProgram { states, start: pad, ..bp };
        padded.validate().unwrap();
        assert!(check_solves(&padded, Problem::FT, &cfg()).ok);
        assert!(matches!(
            check_mindepth_thrifty(&padded, &cfg()),
            MindepthReport::NotApplicable(_)
        ));
    }

    #[test]
    fn canonical_json_roundtrip() {
        let bp = canonicalize(&build_thrifty_det(2, 2).unwrap());
        let json = to_json(&bp);
        let back = from_json(&json).unwrap();
        assert_eq!(back, bp);
        let again = to_json(&canonicalize(&back));
        assert_eq!(
            serde_json::to_string(&json).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn canonicalize_is_renumber_invariant() {
        let bp = build_thrifty_det(2, 2).unwrap();
        // Reverse the state order, remap everything, re-canonicalize.
        let n = bp.states.len();
        let remap = |id: StateId| n - 1 - id;
        let mut states: Vec<StateKind> = bp
            .states
            .iter()
            .map(|s| match s {
                StateKind::Output { value } => StateKind::Output { value: *value },
                StateKind::Query { var, edges } => StateKind::Query {
                    var: *var,
                    edges: edges.iter().map(|&(l, t)| (l, remap(t))).collect(),
                },
            })
            .collect();
        states.reverse();
        let scrambled = BranchingProgram { states, start: remap(bp.start), ..bp };
        scrambled.validate().unwrap();
        assert_eq!(
            serde_json::to_string(&to_json(&canonicalize(&scrambled))).unwrap(),
            serde_json::to_string(&to_json(&canonicalize(&bp))).unwrap()
        );
    }

    #[test]
    fn validate_for_output_alphabets() {
        let bp = build_thrifty_det(2, 2).unwrap();
        assert!(bp.validate_for(Problem::FT).is_ok());
        assert!(bp.validate_for(Problem::BT).is_err());
    }
}
