//! Executable form of the size lower-bound argument for thrifty programs:
//! per-input critical states, the pebbling sequence they induce, supercritical
//! states, the induced partition of the input space, and the advice
//! encoder/decoder whose injectivity drives the k^h bound. Also the forward
//! variant of the pebbling assignment and its bottleneck-node facts.
//!
//! Everything here is a desk-scale check of proof machinery, not a proof:
//! each function either reproduces a construction on a concrete program and
//! input, or verifies that a claimed property holds exhaustively.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::bp::{
    pi_w_params, simulate, BpError, BranchingProgram, CheckConfig, StateId, StateKind, Variable,
};
use crate::pebble::{q, PebbleMove, PebbleSequence, SequenceGame};
use crate::tree::{
    instance_count, instance_from_index, NodeId, TepInstance, TreeError, TreeShape, Val,
};

#[derive(Debug, Error)]
pub enum ProofError {
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    /// A construction step that the argument guarantees turned out to be
    /// impossible on this program/input. Surfacing it loudly is the point.
    #[error("lower-bound machinery falsified: {0}")]
    Falsified(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("instance space larger than cap {0}")]
    CapExceeded(u128),
}

/// Which node each path state queries, restricted to queries that are
/// thrifty for this input (leaf queries always are). None for output states
/// and for internal queries with off-values.
fn thrifty_nodes(bp: &BranchingProgram, values: &[Val], path: &[StateId]) -> Vec<Option<NodeId>> {
    path.iter()
        .map(|&sid| match &bp.states[sid] {
            StateKind::Output { .. } => None,
            StateKind::Query { var, .. } => match *var {
                Variable::Leaf(i) => Some(i),
                Variable::Internal { node, a, b } => {
                    (values[2 * node] == a && values[2 * node + 1] == b).then_some(node)
                }
            },
        })
        .collect()
}

fn is_antichain(shape: TreeShape, set: &BTreeSet<NodeId>) -> bool {
    // Ancestors in a heap numbering are reached by halving.
    for &i in set {
        let mut a = i;
        while let Some(p) = shape.parent(a) {
            if set.contains(&p) {
                return false;
            }
            a = p;
        }
    }
    true
}

/// The critical states of one input under a deterministic thrifty program,
/// together with the pebbling configuration assigned to every path position.
#[derive(Debug, Clone)]
pub struct CriticalAssignment {
    pub input: TepInstance,
    pub path: Vec<StateId>,
    /// node -> position of its critical state on the path
    pub critical: BTreeMap<NodeId, usize>,
    /// pebbled nodes per path position
    pub configs: Vec<BTreeSet<NodeId>>,
}

impl CriticalAssignment {
    pub fn critical_state(&self, node: NodeId) -> Option<StateId> {
        self.critical.get(&node).map(|&pos| self.path[pos])
    }

    /// Read the assignment forward as a black pebbling: one placement per
    /// critical state, plus the closing root removal that makes the
    /// sequence complete in the game's sense.
    pub fn to_black_sequence(&self, shape: TreeShape) -> PebbleSequence {
        let mut by_pos: Vec<(usize, NodeId)> =
            self.critical.iter().map(|(&node, &pos)| (pos, node)).collect();
        by_pos.sort_unstable();
        let mut moves = Vec::with_capacity(by_pos.len() + 1);
        for (_, node) in by_pos {
            let child_dec = if shape.is_leaf(node) {
                BTreeMap::new()
            } else {
                [(2 * node, q(1, 1)), (2 * node + 1, q(1, 1))].into()
            };
            moves.push(PebbleMove::Combined {
                node,
                white_dec: q(0, 1),
                black_inc: q(1, 1),
                child_dec,
            });
        }
        moves.push(PebbleMove::DecreaseBlack { node: 1, amount: q(1, 1) });
        PebbleSequence { game: SequenceGame::Black, moves }
    }
}

/// Critical states, one per node, built backwards from the last thrifty
/// root query: the critical state of a child is the last query of that
/// child before its parent's critical state. Expects a program that passed
/// the thriftiness check.
pub fn critical_states(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<CriticalAssignment, ProofError> {
    let (_, path) = simulate(bp, inst)?;
    let values = inst.node_values();
    let queried = thrifty_nodes(bp, &values, &path);
    let shape = bp.shape;
    let n = shape.node_count();

    let mut critical: BTreeMap<NodeId, usize> = BTreeMap::new();
    let root_pos = queried
        .iter()
        .rposition(|&x| x == Some(1))
        .ok_or_else(|| ProofError::Falsified("input never queries its thrifty root variable".into()))?;
    critical.insert(1, root_pos);
    // Heap order puts parents first, so each node's bound is already known.
    for i in 1..=n {
        if shape.is_leaf(i) {
            continue;
        }
        let bound = critical[&i];
        for c in [2 * i, 2 * i + 1] {
            let pos = queried[..bound]
                .iter()
                .rposition(|&x| x == Some(c))
                .ok_or_else(|| {
                    ProofError::Falsified(format!(
                        "no query of node {c} precedes the critical state of {i}"
                    ))
                })?;
            critical.insert(c, pos);
        }
    }

    // Assign configurations backwards: the output state holds a lone black
    // pebble on the root; a critical state for i swaps i for its children.
    let crit_at: HashMap<usize, NodeId> =
        critical.iter().map(|(&node, &pos)| (pos, node)).collect();
    if crit_at.len() != critical.len() {
        return Err(ProofError::Falsified("two nodes share a critical state".into()));
    }
    let mut configs = vec![BTreeSet::new(); path.len()];
    configs[path.len() - 1] = BTreeSet::from([1]);
    for t in (0..path.len() - 1).rev() {
        let mut cfg = configs[t + 1].clone();
        if let Some(&i) = crit_at.get(&t) {
            if !cfg.remove(&i) {
                return Err(ProofError::Falsified(format!(
                    "critical state of {i} queries an unpebbled node"
                )));
            }
            if !shape.is_leaf(i) {
                cfg.insert(2 * i);
                cfg.insert(2 * i + 1);
            }
        }
        if !is_antichain(shape, &cfg) {
            return Err(ProofError::Falsified(format!(
                "configuration at position {t} is not an antichain"
            )));
        }
        configs[t] = cfg;
    }
    if !configs[0].is_empty() {
        return Err(ProofError::Falsified("unwinding all critical states left pebbles".into()));
    }

    Ok(CriticalAssignment { input: inst.clone(), path, critical, configs })
}

/// The supercritical state of an input plus what hangs off it.
#[derive(Debug, Clone)]
pub struct SupercriticalReport {
    pub input: TepInstance,
    pub state: StateId,
    pub position: usize,
    /// the supercritical node: the height-`level` node whose critical state
    /// this is
    pub node: NodeId,
    pub bottleneck: BTreeSet<NodeId>,
    /// path from the supercritical node up to the root
    pub bottleneck_path: Vec<NodeId>,
}

pub fn bottleneck_path_of(shape: TreeShape, mut node: NodeId) -> Vec<NodeId> {
    let mut path = vec![node];
    while let Some(p) = shape.parent(node) {
        path.push(p);
        node = p;
    }
    path
}

pub fn supercritical(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<SupercriticalReport, ProofError> {
    supercritical_at(bp, inst, 2)
}

/// The latest critical state (in path order) among nodes of the given
/// height; at height 2 this is the classic supercritical state, and the
/// pebbled set there must hold at least h nodes, the children of the
/// supercritical node among them.
pub fn supercritical_at(
    bp: &BranchingProgram,
    inst: &TepInstance,
    level: usize,
) -> Result<SupercriticalReport, ProofError> {
    let shape = bp.shape;
    if level < 2 || level > shape.h {
        return Err(ProofError::Unsupported(format!(
            "supercritical level {level} outside 2..={}",
            shape.h
        )));
    }
    let ca = critical_states(bp, inst)?;
    let (node, position) = shape
        .nodes_at_height(level)
        .into_iter()
        .map(|i| (i, ca.critical[&i]))
        .max_by_key(|&(_, pos)| pos)
        .expect("level checked above");
    let bottleneck = ca.configs[position].clone();

    for c in [2 * node, 2 * node + 1] {
        if !bottleneck.contains(&c) {
            return Err(ProofError::Falsified(format!(
                "child {c} of the supercritical node is not pebbled"
            )));
        }
    }
    let floor = shape.h - level + 2;
    if bottleneck.len() < floor {
        return Err(ProofError::Falsified(format!(
            "only {} bottleneck nodes, expected at least {floor}",
            bottleneck.len()
        )));
    }

    Ok(SupercriticalReport {
        input: inst.clone(),
        state: ca.path[position],
        position,
        node,
        bottleneck,
        bottleneck_path: bottleneck_path_of(shape, node),
    })
}

/// The partition of the whole input space by supercritical state.
#[derive(Debug, Clone)]
pub struct Partition {
    pub level: usize,
    /// supercritical state -> instance indices (enumeration order)
    pub classes: BTreeMap<StateId, Vec<u128>>,
}

impl Partition {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u128 {
        self.classes.values().map(|v| v.len() as u128).sum()
    }
}

pub fn partition_by_supercritical(
    bp: &BranchingProgram,
    cap: u128,
) -> Result<Partition, ProofError> {
    partition_at(bp, 2, cap)
}

pub fn partition_at(
    bp: &BranchingProgram,
    level: usize,
    cap: u128,
) -> Result<Partition, ProofError> {
    let count = instance_count(bp.shape, bp.k)?
        .filter(|&c| c <= cap)
        .ok_or(ProofError::CapExceeded(cap))?;
    let classes = (0..count as u64)
        .into_par_iter()
        .try_fold(BTreeMap::<StateId, Vec<u128>>::new, |mut acc, i| {
            let inst = instance_from_index(bp.shape, bp.k, i as u128);
            let report = supercritical_at(bp, &inst, level)?;
            acc.entry(report.state).or_default().push(i as u128);
            Ok::<_, ProofError>(acc)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (r, mut idxs) in b {
                a.entry(r).or_default().append(&mut idxs);
            }
            Ok(a)
        })?;
    let mut partition = Partition { level, classes };
    for idxs in partition.classes.values_mut() {
        idxs.sort_unstable();
    }
    Ok(partition)
}

/// One class E_r of the partition, with node values cached for the
/// consistency filtering the advice machinery does constantly.
#[derive(Debug, Clone)]
pub struct SupercriticalClass {
    pub r: StateId,
    pub instances: Vec<TepInstance>,
    values: Vec<Vec<Val>>,
}

impl SupercriticalClass {
    pub fn new(bp: &BranchingProgram, r: StateId, indices: &[u128]) -> SupercriticalClass {
        let instances: Vec<TepInstance> =
            indices.iter().map(|&i| instance_from_index(bp.shape, bp.k, i)).collect();
        let values = instances.iter().map(|inst| inst.node_values()).collect();
        SupercriticalClass { r, instances, values }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Members consistent with a partial node-value commitment, as indices
    /// into `instances`, in enumeration order.
    fn consistent(&self, committed: &BTreeMap<NodeId, Val>) -> Vec<usize> {
        (0..self.instances.len())
            .filter(|&m| committed.iter().all(|(&i, &v)| self.values[m][i] == v))
            .collect()
    }
}

/// Advice digits over [k]; always exactly |Vars| - h of them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AdviceString(pub Vec<Val>);

impl std::fmt::Display for AdviceString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let digits: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", digits.join(","))
    }
}

/// Walk the advice interpreter: start at r, learn uncommitted children for
/// free at internal queries, spend one advice digit on each uncommitted
/// queried node, stop once h nodes are learned, then read the tail as a
/// lexicographic 1-based rank into the members still consistent with the
/// commitments. Returns None when the advice does not name a member.
pub fn decode_in_class(
    bp: &BranchingProgram,
    advice: &AdviceString,
    class: &SupercriticalClass,
) -> Result<Option<TepInstance>, ProofError> {
    let h = bp.shape.h;
    let k = bp.k;
    let mut q = class.r;
    let mut committed: BTreeMap<NodeId, Val> = BTreeMap::new();
    let mut learned: BTreeSet<NodeId> = BTreeSet::new();
    let mut used = 0usize;

    while learned.len() < h {
        let StateKind::Query { var, edges } = &bp.states[q] else {
            return Ok(None);
        };
        let i = var.node();
        if let Variable::Internal { node, a, b } = *var {
            if !committed.contains_key(&(2 * node)) {
                committed.insert(2 * node, a);
                learned.insert(2 * node);
            }
            if !committed.contains_key(&(2 * node + 1)) && learned.len() < h {
                committed.insert(2 * node + 1, b);
                learned.insert(2 * node + 1);
            }
        }
        if !committed.contains_key(&i) {
            let Some(&digit) = advice.0.get(used) else {
                return Ok(None);
            };
            used += 1;
            committed.insert(i, digit);
        }
        if committed.len() != used + learned.len() {
            return Err(ProofError::Falsified(format!(
                "loop invariant broken: {} committed, {} used, {} learned",
                committed.len(),
                used,
                learned.len()
            )));
        }
        let follow = committed[&i];
        let Some(&(_, next)) = edges.iter().find(|&&(l, _)| l == follow) else {
            return Ok(None);
        };
        q = next;
    }

    let layout = crate::tree::VarLayout::new(bp.shape, k)?;
    let tail_len = layout.var_count - committed.len();
    if advice.0.len() < used + tail_len {
        return Ok(None);
    }
    let mut rank: u128 = 0;
    for &digit in &advice.0[used..used + tail_len] {
        if digit < 1 || digit > k {
            return Ok(None);
        }
        rank = rank * k as u128 + (digit - 1) as u128;
    }

    let members = class.consistent(&committed);
    let limit = (k as u128).checked_pow(tail_len as u32);
    if limit.is_some_and(|l| (members.len() as u128) > l) {
        return Err(ProofError::Falsified(format!(
            "{} consistent members exceed k^{tail_len}",
            members.len()
        )));
    }
    Ok(members.get(rank as usize).map(|&m| class.instances[m].clone()))
}

/// Produce the advice under which the decoder reconstructs this input:
/// replay its path from its supercritical state, emit the input's true node
/// value whenever the decoder would spend advice, then append the input's
/// rank among the members consistent with the final commitments.
pub fn encode_in_class(
    bp: &BranchingProgram,
    inst: &TepInstance,
    class: &SupercriticalClass,
) -> Result<AdviceString, ProofError> {
    let h = bp.shape.h;
    let k = bp.k;
    let values = inst.node_values();
    let report = supercritical(bp, inst)?;
    if report.state != class.r {
        return Err(ProofError::Unsupported(
            "input does not belong to this supercritical class".into(),
        ));
    }
    let (_, path) = simulate(bp, inst)?;

    let mut pos = report.position;
    let mut committed: BTreeMap<NodeId, Val> = BTreeMap::new();
    let mut learned: BTreeSet<NodeId> = BTreeSet::new();
    let mut advice: Vec<Val> = Vec::new();

    while learned.len() < h {
        let StateKind::Query { var, .. } = &bp.states[path[pos]] else {
            return Err(ProofError::Falsified(format!(
                "path ended with only {} of {h} nodes learned",
                learned.len()
            )));
        };
        let i = var.node();
        if let Variable::Internal { node, a, b } = *var {
            if values[2 * node] != a || values[2 * node + 1] != b {
                return Err(ProofError::Falsified(format!(
                    "state at position {pos} is not thrifty for this input"
                )));
            }
            if !committed.contains_key(&(2 * node)) {
                committed.insert(2 * node, a);
                learned.insert(2 * node);
            }
            if !committed.contains_key(&(2 * node + 1)) && learned.len() < h {
                committed.insert(2 * node + 1, b);
                learned.insert(2 * node + 1);
            }
        }
        match committed.get(&i) {
            None => {
                advice.push(values[i]);
                committed.insert(i, values[i]);
            }
            Some(&v) if v != values[i] => {
                return Err(ProofError::Falsified(format!(
                    "commitment for node {i} contradicts the input"
                )));
            }
            Some(_) => {}
        }
        pos += 1;
    }

    let layout = crate::tree::VarLayout::new(bp.shape, k)?;
    let tail_len = layout.var_count - committed.len();
    let members = class.consistent(&committed);
    let me = inst.index();
    let rank = members
        .iter()
        .position(|&m| class.instances[m].index() == me)
        .ok_or_else(|| {
            ProofError::Falsified("input inconsistent with its own commitments".into())
        })?;

    let mut tail = vec![1 as Val; tail_len];
    let mut t = rank as u128;
    for slot in (0..tail_len).rev() {
        tail[slot] = (t % k as u128) as Val + 1;
        t /= k as u128;
    }
    if t != 0 {
        return Err(ProofError::Falsified(format!(
            "rank {rank} does not fit in {tail_len} digits"
        )));
    }
    advice.extend(tail);

    let want = layout.var_count - h;
    // The loop invariant forces the exact length; pad defensively anyway.
    while advice.len() < want {
        advice.push(1);
    }
    if advice.len() > want {
        return Err(ProofError::Falsified(format!(
            "advice has {} digits, expected {want}",
            advice.len()
        )));
    }
    Ok(AdviceString(advice))
}

/// Convenience wrappers that materialize E_r from scratch. Fine for one-off
/// CLI use; tests over whole input spaces should reuse a Partition.
pub fn interadv_encode(
    bp: &BranchingProgram,
    inst: &TepInstance,
    cap: u128,
) -> Result<AdviceString, ProofError> {
    let r = supercritical(bp, inst)?.state;
    let partition = partition_by_supercritical(bp, cap)?;
    let class = SupercriticalClass::new(bp, r, &partition.classes[&r]);
    encode_in_class(bp, inst, &class)
}

pub fn interadv_decode(
    bp: &BranchingProgram,
    r: StateId,
    advice: &AdviceString,
    cap: u128,
) -> Result<Option<TepInstance>, ProofError> {
    let partition = partition_by_supercritical(bp, cap)?;
    let Some(indices) = partition.classes.get(&r) else {
        return Err(ProofError::Unsupported(format!("state {r} is supercritical for no input")));
    };
    decode_in_class(bp, advice, &SupercriticalClass::new(bp, r, indices))
}

/// Forward-built pebbling assignment: configurations C_1..C_{t*+1} walked
/// along the thrifty states of the path up to the first thrifty root query.
#[derive(Debug, Clone)]
pub struct ForwardAssignment {
    pub input: TepInstance,
    pub path: Vec<StateId>,
    /// path positions of the thrifty states q_1..q_{t*}
    pub thrifty_positions: Vec<usize>,
    /// configs.len() == thrifty_positions.len() + 1; configs[t-1] pairs
    /// with q_t and the last config follows the root placement
    pub configs: Vec<BTreeSet<NodeId>>,
}

/// Build the forward assignment: the t-th thrifty state gets the t-th
/// configuration, children are dropped unless a later query of the parent
/// still needs them, and a queried node is pebbled only if its value is
/// still live for a later query of its parent.
pub fn forward_pebbling_assignment(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<ForwardAssignment, ProofError> {
    let shape = bp.shape;
    let (_, path) = simulate(bp, inst)?;
    let values = inst.node_values();
    let queried = thrifty_nodes(bp, &values, &path);

    // First thrifty query of some node i at or after `from`, with no
    // thrifty query of `blocker` strictly in between.
    let unblocked_query_after = |from: usize, node: NodeId, blocker: NodeId| -> bool {
        for pos in from..queried.len() {
            match queried[pos] {
                Some(x) if x == node => return true,
                Some(x) if x == blocker => return false,
                _ => {}
            }
        }
        false
    };

    let all_thrifty: Vec<usize> =
        (0..queried.len()).filter(|&pos| queried[pos].is_some()).collect();
    let t_star_idx = all_thrifty
        .iter()
        .position(|&pos| queried[pos] == Some(1))
        .ok_or_else(|| ProofError::Falsified("input never queries its thrifty root variable".into()))?;
    let thrifty_positions: Vec<usize> = all_thrifty[..=t_star_idx].to_vec();

    let mut configs: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new()];
    for (t, &pos) in thrifty_positions.iter().enumerate() {
        let i = queried[pos].unwrap();
        let cur = configs[t].clone();
        if cur.contains(&i) {
            return Err(ProofError::Falsified(format!(
                "node {i} already pebbled when queried at position {pos}"
            )));
        }
        let mut next = cur;
        if i == 1 {
            if t + 1 != thrifty_positions.len() {
                return Err(ProofError::Falsified(
                    "thrifty root query before the end of the prefix".into(),
                ));
            }
            for c in shape.children(1)? {
                if !next.remove(&c) {
                    return Err(ProofError::Falsified(format!(
                        "child {c} of the root unpebbled at the root query"
                    )));
                }
            }
            next.insert(1);
            configs.push(next);
            break;
        }
        if !shape.is_leaf(i) {
            for j in [2 * i, 2 * i + 1] {
                if !next.contains(&j) {
                    return Err(ProofError::Falsified(format!(
                        "child {j} unpebbled at the thrifty query of {i}"
                    )));
                }
                // Keep j only if i is queried again with no fresher j query.
                if !unblocked_query_after(pos + 1, i, j) {
                    next.remove(&j);
                }
            }
        }
        let parent = shape.parent(i).expect("non-root");
        if unblocked_query_after(pos + 1, parent, i) {
            next.insert(i);
        }
        configs.push(next);
    }

    Ok(ForwardAssignment { input: inst.clone(), path, thrifty_positions, configs })
}

impl ForwardAssignment {
    /// The assignment as explicit game moves (placements as combined moves
    /// with their child removals, stray removals on their own), closed out
    /// by draining whatever the final configuration still holds.
    pub fn to_black_sequence(&self) -> PebbleSequence {
        let mut moves = Vec::new();
        for t in 1..self.configs.len() {
            let prev = &self.configs[t - 1];
            let cur = &self.configs[t];
            let added: Vec<NodeId> = cur.difference(prev).copied().collect();
            let removed: Vec<NodeId> = prev.difference(cur).copied().collect();
            match added[..] {
                [] => {
                    for &j in &removed {
                        moves.push(PebbleMove::DecreaseBlack { node: j, amount: q(1, 1) });
                    }
                }
                [node] => {
                    let child_dec: BTreeMap<NodeId, _> =
                        removed.iter().map(|&j| (j, q(1, 1))).collect();
                    moves.push(PebbleMove::Combined {
                        node,
                        white_dec: q(0, 1),
                        black_inc: q(1, 1),
                        child_dec,
                    });
                }
                _ => unreachable!("a step places at most one pebble"),
            }
        }
        for &node in self.configs.last().into_iter().flatten() {
            moves.push(PebbleMove::DecreaseBlack { node, amount: q(1, 1) });
        }
        PebbleSequence { game: SequenceGame::Black, moves }
    }
}

/// Forward-variant supercritical state: at the first configuration blocking
/// every root-leaf path the step before must have placed a leaf; the next
/// thrifty query of that leaf's parent is supercritical.
#[derive(Debug, Clone)]
pub struct ForwardSupercritical {
    pub input: TepInstance,
    pub state: StateId,
    pub position: usize,
    pub node: NodeId,
    pub bottleneck: BTreeSet<NodeId>,
    pub bottleneck_path: Vec<NodeId>,
}

fn blocks_all_paths(shape: TreeShape, cfg: &BTreeSet<NodeId>) -> bool {
    shape.nodes_at_height(1).iter().all(|&leaf| {
        let mut i = leaf;
        loop {
            if cfg.contains(&i) {
                return true;
            }
            match shape.parent(i) {
                Some(p) => i = p,
                None => return false,
            }
        }
    })
}

pub fn forward_supercritical(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<ForwardSupercritical, ProofError> {
    let shape = bp.shape;
    if shape.h < 2 {
        return Err(ProofError::Unsupported("needs height at least 2".into()));
    }
    let fa = forward_pebbling_assignment(bp, inst)?;
    let values = inst.node_values();
    let queried = thrifty_nodes(bp, &values, &fa.path);

    // configs[t] pairs with q_{t+1}; the scan runs over C_1..C_{t*}.
    let t_block = (0..fa.thrifty_positions.len())
        .find(|&t| blocks_all_paths(shape, &fa.configs[t]))
        .ok_or_else(|| {
            ProofError::Falsified("no configuration blocks every root-leaf path".into())
        })?;
    if t_block == 0 {
        return Err(ProofError::Falsified("the empty configuration blocks the tree".into()));
    }
    let placed = queried[fa.thrifty_positions[t_block - 1]].expect("thrifty position");
    if !shape.is_leaf(placed) {
        return Err(ProofError::Falsified(format!(
            "the step into the first blocking configuration queried {placed}, not a leaf"
        )));
    }
    let parent = shape.parent(placed).expect("leaf of a tree with h >= 2");
    let t_super = (t_block..fa.thrifty_positions.len())
        .find(|&t| queried[fa.thrifty_positions[t]] == Some(parent))
        .ok_or_else(|| {
            ProofError::Falsified(format!(
                "no thrifty query of node {parent} after the blocking configuration"
            ))
        })?;
    let position = fa.thrifty_positions[t_super];

    Ok(ForwardSupercritical {
        input: inst.clone(),
        state: fa.path[position],
        position,
        node: parent,
        bottleneck: fa.configs[t_super].clone(),
        bottleneck_path: bottleneck_path_of(shape, parent),
    })
}

/// Check the bottleneck-node criterion: i is a bottleneck node of the input
/// iff i is off the bottleneck path and, on the path from the supercritical
/// state onward, some thrifty query of i's parent comes before any thrifty
/// query of i.
pub fn learn_bn_nodes_fact(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<bool, ProofError> {
    let shape = bp.shape;
    let fs = forward_supercritical(bp, inst)?;
    let values = inst.node_values();
    let (_, path) = simulate(bp, inst)?;
    let queried = thrifty_nodes(bp, &values, &path);
    let on_bnpath: BTreeSet<NodeId> = fs.bottleneck_path.iter().copied().collect();

    for i in 1..=shape.node_count() {
        let lhs = fs.bottleneck.contains(&i);
        let rhs = match shape.parent(i) {
            Some(parent) if !on_bnpath.contains(&i) => {
                let mut verdict = false;
                for pos in fs.position..queried.len() {
                    match queried[pos] {
                        Some(x) if x == i => break,
                        Some(x) if x == parent => {
                            verdict = true;
                            break;
                        }
                        _ => {}
                    }
                }
                verdict
            }
            _ => false,
        };
        if lhs != rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Check the query-order fact along the bottleneck path: for nodes j below
/// j' on the path, the first thrifty query of j after the supercritical
/// state comes before the first thrifty query of j'.
pub fn learn_from_bnpath_fact(
    bp: &BranchingProgram,
    inst: &TepInstance,
) -> Result<bool, ProofError> {
    let fs = forward_supercritical(bp, inst)?;
    let values = inst.node_values();
    let (_, path) = simulate(bp, inst)?;
    let queried = thrifty_nodes(bp, &values, &path);

    let first_query = |node: NodeId| -> Option<usize> {
        (fs.position..queried.len()).find(|&pos| queried[pos] == Some(node))
    };
    // bottleneck_path runs upward, so ancestors follow descendants.
    let firsts: Vec<Option<usize>> =
        fs.bottleneck_path.iter().map(|&j| first_query(j)).collect();
    for w in firsts.windows(2) {
        match (w[0], w[1]) {
            (Some(lo), Some(hi)) if lo < hi => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}

/// The named node sets hanging off a supercritical node.
#[derive(Debug, Clone)]
pub struct NodeSets {
    pub bn_path: Vec<NodeId>,
    pub sibl_bn_path: Vec<NodeId>,
    /// for each sibling, the path down to the rightmost leaf under it
    pub right_paths: BTreeMap<NodeId, Vec<NodeId>>,
    pub learnable: BTreeSet<NodeId>,
    pub learnable_star: BTreeSet<NodeId>,
}

pub fn node_sets(shape: TreeShape, i_sc: NodeId) -> Result<NodeSets, ProofError> {
    shape.check_node(i_sc)?;
    if shape.is_leaf(i_sc) {
        return Err(ProofError::Unsupported("supercritical node must be internal".into()));
    }
    let bn_path = bottleneck_path_of(shape, i_sc);
    let sibl_bn_path: Vec<NodeId> =
        bn_path.iter().filter_map(|&j| shape.sibling(j)).collect();
    let mut right_paths = BTreeMap::new();
    for &i in &sibl_bn_path {
        let mut path = vec![i];
        let mut cur = i;
        while !shape.is_leaf(cur) {
            cur = 2 * cur + 1;
            path.push(cur);
        }
        right_paths.insert(i, path);
    }
    let mut learnable: BTreeSet<NodeId> = BTreeSet::from([2 * i_sc, 2 * i_sc + 1]);
    for path in right_paths.values() {
        learnable.extend(path.iter().copied());
    }
    let mut learnable_star = learnable.clone();
    learnable_star.remove(&(2 * i_sc));
    learnable_star.remove(&(2 * i_sc + 1));
    Ok(NodeSets { bn_path, sibl_bn_path, right_paths, learnable, learnable_star })
}

/// Empirical consistency check of the relaxed size bounds: with measured
/// (pi, w), the size must be at least k^h / pi^(h-2) and k^h / pi^w.
#[derive(Debug, Clone)]
pub struct RelaxedBoundReport {
    pub pi: usize,
    pub w: usize,
    pub size: usize,
    pub height_bound_holds: bool,
    pub wide_bound_holds: bool,
}

impl RelaxedBoundReport {
    pub fn ok(&self) -> bool {
        self.height_bound_holds && self.wide_bound_holds
    }
}

pub fn relaxed_bound_check(
    bp: &BranchingProgram,
    cfg: &CheckConfig,
) -> Result<RelaxedBoundReport, ProofError> {
    let (pi, w) = pi_w_params(bp, cfg)?;
    let size = bp.size() as u128;
    let kh = (bp.k as u128).pow(bp.shape.h as u32);
    // size >= k^h / pi^e, compared multiplied out to stay in integers
    let holds = |e: u32| -> bool {
        (pi as u128).checked_pow(e).is_none_or(|p| size.saturating_mul(p) >= kh)
    };
    Ok(RelaxedBoundReport {
        pi,
        w,
        size: bp.size(),
        height_bound_holds: holds(bp.shape.h.saturating_sub(2) as u32),
        wide_bound_holds: holds(w as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::build_thrifty_det;
    use crate::dag::tree_dag;
    use crate::pebble::verify_sequence;
    use crate::tree::enumerate_instances;

    fn program(h: usize, k: Val) -> BranchingProgram {
        build_thrifty_det(h, k).unwrap()
    }

    fn instances(shape: TreeShape, k: Val) -> Vec<TepInstance> {
        enumerate_instances(shape, k, 1 << 20).unwrap().collect()
    }

    #[test]
    fn h2_critical_states_single_root_query() {
        let bp = program(2, 2);
        for inst in instances(bp.shape, 2) {
            let ca = critical_states(&bp, &inst).unwrap();
            // That program queries the root exactly once per input.
            let root_queries = ca
                .path
                .iter()
                .filter(|&&sid| {
                    matches!(&bp.states[sid],
                        StateKind::Query { var, .. } if var.node() == 1)
                })
                .count();
            assert_eq!(root_queries, 1);
            assert_eq!(ca.critical.len(), 3);
        }
    }

    #[test]
    fn h3_has_one_critical_state_per_node() {
        let bp = program(3, 2);
        let inst = instance_from_index(bp.shape, 2, 40561);
        let ca = critical_states(&bp, &inst).unwrap();
        assert_eq!(ca.critical.len(), 7);
        // Descendants go critical earlier than their ancestors.
        for i in 2..=7usize {
            assert!(ca.critical[&i] < ca.critical[&(i / 2)]);
        }
    }

    #[test]
    fn backward_assignment_replays_as_black_pebbling() {
        let bp = program(2, 2);
        let dag = tree_dag(bp.shape);
        for inst in instances(bp.shape, 2) {
            let ca = critical_states(&bp, &inst).unwrap();
            let seq = ca.to_black_sequence(bp.shape);
            let cost = verify_sequence(&dag, &seq).unwrap();
            assert_eq!(cost, q(2, 1));
        }
    }

    #[test]
    fn h2_supercritical_is_root_critical() {
        let bp = program(2, 2);
        for inst in instances(bp.shape, 2) {
            let ca = critical_states(&bp, &inst).unwrap();
            let sc = supercritical(&bp, &inst).unwrap();
            assert_eq!(sc.position, ca.critical[&1]);
            assert_eq!(sc.node, 1);
            assert!(sc.bottleneck.contains(&2) && sc.bottleneck.contains(&3));
        }
    }

    #[test]
    fn h3_bottleneck_count_and_children() {
        let bp = program(3, 2);
        let count = instance_count(bp.shape, 2).unwrap().unwrap();
        let bad = (0..count as u64).into_par_iter().find_map_first(|i| {
            let inst = instance_from_index(bp.shape, 2, i as u128);
            let sc = supercritical(&bp, &inst).unwrap();
            (sc.bottleneck.len() < 3
                || !sc.bottleneck.contains(&(2 * sc.node))
                || !sc.bottleneck.contains(&(2 * sc.node + 1)))
            .then_some(i)
        });
        assert_eq!(bad, None);
    }

    #[test]
    fn partition_covers_and_meets_kh() {
        for (h, k, want) in [(2, 2, 4usize), (2, 3, 9), (3, 2, 8)] {
            let bp = program(h, k);
            let p = partition_by_supercritical(&bp, 1 << 20).unwrap();
            assert_eq!(Some(p.total()), instance_count(bp.shape, k).unwrap(), "({h},{k})");
            assert!(p.class_count() >= want, "({h},{k}): {}", p.class_count());
            let mut seen = BTreeSet::new();
            for idxs in p.classes.values() {
                for &i in idxs {
                    assert!(seen.insert(i), "index {i} in two classes");
                }
            }
        }
    }

    #[test]
    fn per_height_counts_sum_at_3_2() {
        let bp = program(3, 2);
        let mut total = 0;
        for (level, want) in [(2, 8usize), (3, 4)] {
            let p = partition_at(&bp, level, 1 << 20).unwrap();
            assert!(p.class_count() >= want, "level {level}: {}", p.class_count());
            total += p.class_count();
        }
        assert!(total >= 12);
    }

    #[test]
    fn advice_length_and_roundtrip_2_2() {
        let bp = program(2, 2);
        let p = partition_by_supercritical(&bp, 1 << 20).unwrap();
        let vars = crate::tree::VarLayout::new(bp.shape, 2).unwrap().var_count;
        for (&r, idxs) in &p.classes {
            let class = SupercriticalClass::new(&bp, r, idxs);
            assert!(class.len() as u128 <= (2u128).pow((vars - 2) as u32));
            let mut seen = BTreeSet::new();
            for inst in &class.instances {
                let adv = encode_in_class(&bp, inst, &class).unwrap();
                assert_eq!(adv.0.len(), vars - 2);
                assert!(seen.insert(adv.clone()), "advice collision");
                let back = decode_in_class(&bp, &adv, &class).unwrap().unwrap();
                assert_eq!(back.index(), inst.index());
            }
        }
    }

    #[test]
    fn advice_roundtrip_3_2_exhaustive() {
        let bp = program(3, 2);
        let p = partition_by_supercritical(&bp, 1 << 20).unwrap();
        let vars = crate::tree::VarLayout::new(bp.shape, 2).unwrap().var_count;
        for (&r, idxs) in &p.classes {
            let class = SupercriticalClass::new(&bp, r, idxs);
            let advs: Vec<AdviceString> = class
                .instances
                .par_iter()
                .map(|inst| {
                    let adv = encode_in_class(&bp, inst, &class).unwrap();
                    assert_eq!(adv.0.len(), vars - 3);
                    let back = decode_in_class(&bp, &adv, &class).unwrap().unwrap();
                    assert_eq!(back.index(), inst.index());
                    adv
                })
                .collect();
            let distinct: BTreeSet<&AdviceString> = advs.iter().collect();
            assert_eq!(distinct.len(), class.len(), "encode not injective on E_{r}");
        }
    }

    #[test]
    fn undefined_on_bad_advice() {
        let bp = program(2, 2);
        let p = partition_by_supercritical(&bp, 1 << 20).unwrap();
        let (&r, idxs) = p.classes.iter().next().unwrap();
        let class = SupercriticalClass::new(&bp, r, idxs);
        // Too short: the decoder runs out mid-walk.
        let out = decode_in_class(&bp, &AdviceString(vec![1]), &class).unwrap();
        assert!(out.is_none());
        // A rank beyond the class: all-k tail names position k^m.
        let vars = crate::tree::VarLayout::new(bp.shape, 2).unwrap().var_count;
        let all_max = AdviceString(vec![2; vars - 2]);
        if let Some(found) = decode_in_class(&bp, &all_max, &class).unwrap() {
            // If defined it must round-trip like any member.
            let again = encode_in_class(&bp, &found, &class).unwrap();
            assert_eq!(decode_in_class(&bp, &again, &class).unwrap().unwrap().index(),
                found.index());
        }
    }

    #[test]
    fn forward_assignment_validates_and_matches_backward_supercritical_node_height() {
        let bp = program(2, 2);
        let dag = tree_dag(bp.shape);
        for inst in instances(bp.shape, 2) {
            let fa = forward_pebbling_assignment(&bp, &inst).unwrap();
            let seq = fa.to_black_sequence();
            verify_sequence(&dag, &seq).unwrap();
            let fs = forward_supercritical(&bp, &inst).unwrap();
            assert_eq!(bp.shape.height_of(fs.node).unwrap(), 2);
            assert!(fs.bottleneck.len() >= 2);
        }
    }

    #[test]
    fn learn_bn_nodes_fact_holds_2_2() {
        let bp = program(2, 2);
        for inst in instances(bp.shape, 2) {
            assert!(learn_bn_nodes_fact(&bp, &inst).unwrap());
        }
    }

    #[test]
    fn learn_from_bnpath_fact_holds_3_2() {
        let bp = program(3, 2);
        let count = instance_count(bp.shape, 2).unwrap().unwrap();
        let bad = (0..count as u64).into_par_iter().find_map_first(|i| {
            let inst = instance_from_index(bp.shape, 2, i as u128);
            (!learn_from_bnpath_fact(&bp, &inst).unwrap()).then_some(i)
        });
        assert_eq!(bad, None);
    }

    #[test]
    fn node_sets_shapes() {
        let shape = TreeShape::new(2, 4).unwrap();
        // Height-2 nodes of T^4 run from 4 to 7; take the rightmost.
        let sets = node_sets(shape, 7).unwrap();
        assert_eq!(sets.bn_path, vec![7, 3, 1]);
        assert_eq!(sets.sibl_bn_path, vec![6, 2]);
        assert_eq!(sets.right_paths[&6], vec![6, 13]);
        assert_eq!(sets.right_paths[&2], vec![2, 5, 11]);
        for (&i, path) in &sets.right_paths {
            assert_eq!(path.first(), Some(&i));
            assert!(shape.is_leaf(*path.last().unwrap()));
        }
        // Learnable holds the supercritical children plus the right paths.
        let want: BTreeSet<NodeId> = [14, 15, 6, 13, 2, 5, 11].into();
        assert_eq!(sets.learnable, want);
        assert!(!sets.learnable_star.contains(&14) && sets.learnable_star.contains(&13));
    }

    #[test]
    fn right_paths_hit_bottleneck_nodes_3_2() {
        let bp = program(3, 2);
        let count = instance_count(bp.shape, 2).unwrap().unwrap();
        let bad = (0..count as u64).into_par_iter().find_map_first(|i| {
            let inst = instance_from_index(bp.shape, 2, i as u128);
            let fs = forward_supercritical(&bp, &inst).unwrap();
            let sets = node_sets(bp.shape, fs.node).unwrap();
            let miss = sets.sibl_bn_path.iter().any(|j| {
                sets.right_paths[j].iter().all(|x| !fs.bottleneck.contains(x))
            });
            miss.then_some(i)
        });
        assert_eq!(bad, None);
    }

    #[test]
    fn relaxed_bounds_hold_on_recursive_programs() {
        let cfg = CheckConfig::default();
        for (h, k) in [(2, 2), (3, 2)] {
            let bp = program(h, k);
            let report = relaxed_bound_check(&bp, &cfg).unwrap();
            assert_eq!((report.pi, report.w), (1, 0), "({h},{k})");
            assert!(report.ok(), "({h},{k})");
        }
    }
}
