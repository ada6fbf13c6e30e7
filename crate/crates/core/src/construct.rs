//! Builders that produce branching programs: the recursive (k+1)^h
//! deterministic thrifty program, and compilers that turn a pebbling sequence
//! into a program whose layers mirror the pebbling configurations.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use thiserror::Error;

use crate::bp::{BpError, BranchingProgram, StateId, StateKind, Variable};
use crate::dag::tree_dag;
use crate::pebble::{verify_sequence, PebbleMove, PebbleSequence, SequenceError, SequenceGame};
use crate::tree::{NodeId, TreeShape, Val};

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error("bad pebbling sequence: {0}")]
    Sequence(#[from] SequenceError),
    #[error("{0}")]
    BadInput(String),
}

/// Embedding of T^{h-1} into the subtree of T^h rooted at s (s = 2 for the
/// left child, 3 for the right): node 1 maps to s and children map to
/// children. Returns the image of every inner node, index 0 unused.
fn sigma(s: NodeId, inner_count: usize) -> Vec<NodeId> {
    let mut map = vec![0; inner_count + 1];
    if inner_count >= 1 {
        map[1] = s;
    }
    for j in 2..=inner_count {
        map[j] = 2 * map[j / 2] + j % 2;
    }
    map
}

/// The recursive deterministic thrifty program with exactly (k+1)^h states.
///
/// Height 1 is a single query of the root leaf plus k outputs. For greater
/// heights, one copy of the height h-1 program reads the left subtree and
/// its k outputs merge into the starts of k right-subtree copies; the copy
/// entered after seeing left value a replaces its output state b with a
/// query of f_1(a, b) leading to k fresh outputs. Internally we keep the
/// output states as the last k states, in label order, with start = 0.
pub fn build_thrifty_det(h: usize, k: Val) -> Result<BranchingProgram, BpError> {
    let shape = TreeShape::new(2, h)?;
    if k < 1 {
        return Err(BpError::BadStructure("k must be at least 1".into()));
    }
    let kk = k as usize;
    let states = build_level(h, k, shape);
    debug_assert_eq!(states.len(), (kk + 1).pow(h as u32));
    let bp = BranchingProgram { k, shape, states, start: 0, deterministic: true };
    bp.validate()?;
    return Ok(bp);

    fn build_level(h: usize, k: Val, shape: TreeShape) -> Vec<StateKind> {
        let kk = k as usize;
        if h == 1 {
            let mut states = vec![StateKind::Query {
                var: Variable::Leaf(1),
                edges: (1..=k).map(|v| (v, v as StateId)).collect(),
            }];
            states.extend((1..=k).map(|v| StateKind::Output { value: v }));
            return states;
        }

        let inner_shape = TreeShape::new(2, h - 1).expect("h >= 2");
        let inner = build_level(h - 1, k, inner_shape);
        let s = inner.len();
        let inner_nodes = inner_shape.node_count();
        let left = sigma(2, inner_nodes);
        let right = sigma(3, inner_nodes);

        // Layout: the left-reading copy's s-k non-output states, then k
        // right-reading copies of s states each (their outputs replaced by
        // root queries), then the k outputs.
        let offset_a = |a: usize| (s - kk) + (a - 1) * s;
        let out_base = (s - kk) + kk * s;

        let relabel = |var: &Variable, map: &[NodeId]| match *var {
            Variable::Leaf(i) => Variable::Leaf(map[i]),
            Variable::Internal { node, a, b } => Variable::Internal { node: map[node], a, b },
        };

        let mut states: Vec<StateKind> = Vec::with_capacity((kk + 1) * s);
        // Left copy: output a (inner id s-k+a-1) merges into copy a's start.
        for inner_state in inner.iter().take(s - kk) {
            let StateKind::Query { var, edges } = inner_state else {
                unreachable!("non-output inner states are queries");
            };
            let edges = edges
                .iter()
                .map(|&(l, t)| (l, if t < s - kk { t } else { offset_a(t - (s - kk) + 1) }))
                .collect();
            states.push(StateKind::Query { var: relabel(var, &left), edges });
        }
        for a in 1..=kk {
            let base = offset_a(a);
            for (t, inner_state) in inner.iter().enumerate() {
                match inner_state {
                    StateKind::Query { var, edges } => {
                        let edges = edges.iter().map(|&(l, t)| (l, base + t)).collect();
                        states.push(StateKind::Query { var: relabel(var, &right), edges });
                    }
                    StateKind::Output { value } => {
                        // Left value a, right value b: ask the root function.
                        let b = *value;
                        debug_assert_eq!(base + t, base + (s - kk) + (b as usize - 1));
                        states.push(StateKind::Query {
                            var: Variable::Internal { node: 1, a: a as Val, b },
                            edges: (1..=k).map(|v| (v, out_base + v as usize - 1)).collect(),
                        });
                    }
                }
            }
        }
        states.extend((1..=k).map(|v| StateKind::Output { value: v }));
        let _ = shape;
        states
    }
}

/// Assignment of claimed values to currently pebbled nodes.
type Claim = BTreeMap<NodeId, Val>;

fn fresh_slot<K: Eq + Hash>(
    next: &mut HashMap<K, StateId>,
    states: &mut Vec<StateKind>,
    key: K,
) -> StateId {
    *next.entry(key).or_insert_with(|| {
        states.push(StateKind::Output { value: 0 });
        states.len() - 1
    })
}

/// Register sid as the layer state for key. When two predecessors collapse
/// onto one key (a pebble removal merged their claims), keep the first slot
/// and retarget every edge into the other, which then falls dead.
fn merge_slot<K: Eq + Hash>(
    next: &mut HashMap<K, StateId>,
    states: &mut [StateKind],
    key: K,
    sid: StateId,
) {
    use std::collections::hash_map::Entry;
    match next.entry(key) {
        Entry::Vacant(e) => {
            e.insert(sid);
        }
        Entry::Occupied(e) => {
            let keep = *e.get();
            for state in states.iter_mut() {
                if let StateKind::Query { edges, .. } = state {
                    for edge in edges.iter_mut() {
                        if edge.1 == sid {
                            edge.1 = keep;
                        }
                    }
                }
            }
        }
    }
}

fn query_var(shape: TreeShape, node: NodeId, claim: &Claim) -> Result<Variable, ConstructError> {
    if shape.is_leaf(node) {
        Ok(Variable::Leaf(node))
    } else {
        let fetch = |child: NodeId| {
            claim.get(&child).copied().ok_or_else(|| {
                ConstructError::BadInput(format!("child {child} unpebbled at query of {node}"))
            })
        };
        Ok(Variable::Internal { node, a: fetch(2 * node)?, b: fetch(2 * node + 1)? })
    }
}

/// Compile a complete black pebbling of the tree into a deterministic
/// thrifty program: one query layer per pebble placement, with k^m states
/// tracking the values of the m currently pebbled nodes. Stops at the layer
/// that blackens the root, whose answers are the outputs. Also returns the
/// construction constant C (query layers + 1) in size <= C * k^cost.
pub fn build_from_black_pebbling(
    shape: TreeShape,
    seq: &PebbleSequence,
    k: Val,
) -> Result<(BranchingProgram, usize), ConstructError> {
    if shape.d != 2 {
        return Err(ConstructError::BadInput("programs query binary trees".into()));
    }
    if seq.game != SequenceGame::Black {
        return Err(ConstructError::BadInput("expected a black pebbling".into()));
    }
    verify_sequence(&tree_dag(shape), seq)?;

    let one = crate::pebble::q(1, 1);
    let mut states: Vec<StateKind> = vec![StateKind::Output { value: 0 }];

    // Layer states keyed by claimed values; slot 0 is the start placeholder.
    let mut current: HashMap<Claim, StateId> = HashMap::from([(Claim::new(), 0)]);
    let mut layers = 0usize;
    let mut done = false;

    for mv in &seq.moves {
        let (node, removed) = match mv {
            PebbleMove::DecreaseBlack { node, .. } => {
                let mut next: HashMap<Claim, StateId> = HashMap::new();
                for (mut claim, sid) in std::mem::take(&mut current) {
                    claim.remove(node);
                    merge_slot(&mut next, &mut states, claim, sid);
                }
                current = next;
                continue;
            }
            PebbleMove::IncreaseWhite { .. } => continue,
            PebbleMove::Combined { node, black_inc, child_dec, .. } => {
                let removed: Vec<NodeId> = child_dec
                    .iter()
                    .filter(|&(_, amt)| *amt == one)
                    .map(|(&c, _)| c)
                    .collect();
                if *black_inc != one {
                    let mut next: HashMap<Claim, StateId> = HashMap::new();
                    for (mut claim, sid) in std::mem::take(&mut current) {
                        for r in &removed {
                            claim.remove(r);
                        }
                        merge_slot(&mut next, &mut states, claim, sid);
                    }
                    current = next;
                    continue;
                }
                (*node, removed)
            }
        };
        layers += 1;

        if node == 1 {
            // Root placement: answers are final.
            let base = states.len();
            states.extend((1..=k).map(|v| StateKind::Output { value: v }));
            for (claim, sid) in current.drain() {
                let var = query_var(shape, 1, &claim)?;
                states[sid] = StateKind::Query {
                    var,
                    edges: (1..=k).map(|v| (v, base + v as StateId - 1)).collect(),
                };
            }
            done = true;
            break;
        }

        let mut next: HashMap<Claim, StateId> = HashMap::new();
        let mut pending: Vec<(StateId, Variable, Vec<(Val, StateId)>)> = Vec::new();
        for (claim, sid) in &current {
            let var = query_var(shape, node, claim)?;
            let mut succ = claim.clone();
            for r in &removed {
                succ.remove(r);
            }
            let edges = (1..=k)
                .map(|v| {
                    let mut key = succ.clone();
                    key.insert(node, v);
                    (v, fresh_slot(&mut next, &mut states, key))
                })
                .collect();
            pending.push((*sid, var, edges));
        }
        for (sid, var, edges) in pending {
            states[sid] = StateKind::Query { var, edges };
        }
        current = next;
    }

    if !done {
        return Err(ConstructError::BadInput("root never blackened".into()));
    }
    let bp = BranchingProgram { k, shape, states, start: 0, deterministic: true };
    bp.validate()?;
    Ok((bp, layers + 1))
}

/// Compile a complete whole black-white pebbling into a nondeterministic
/// program for the 0/1 root question. Black placements query; white
/// placements guess the node's value by fanning out of a dummy leaf query;
/// white removals verify, keeping only the edge matching the guess so that
/// wrong guesses never reach an output. The root's answer is carried as a
/// bit and emitted once the whole sequence (all verifications) is replayed.
pub fn build_from_bw_pebbling(
    shape: TreeShape,
    seq: &PebbleSequence,
    k: Val,
) -> Result<BranchingProgram, ConstructError> {
    if shape.d != 2 {
        return Err(ConstructError::BadInput("programs query binary trees".into()));
    }
    if seq.game != SequenceGame::BlackWhite {
        return Err(ConstructError::BadInput("expected a whole black-white pebbling".into()));
    }
    verify_sequence(&tree_dag(shape), seq)?;
    let one = crate::pebble::q(1, 1);

    let dummy = Variable::Leaf(shape.first_leaf());
    let mut states: Vec<StateKind> = vec![StateKind::Output { value: 0 }];
    let mut current: HashMap<(Claim, Option<bool>), StateId> =
        HashMap::from([((Claim::new(), None), 0)]);

    enum Event {
        Query { node: NodeId, removed: Vec<NodeId> },
        Guess { node: NodeId },
        Verify { node: NodeId, keep_black: bool, removed: Vec<NodeId> },
        Drop { node: NodeId },
    }

    for mv in &seq.moves {
        let event = match mv {
            PebbleMove::IncreaseWhite { node, .. } => Event::Guess { node: *node },
            PebbleMove::DecreaseBlack { node, .. } => Event::Drop { node: *node },
            PebbleMove::Combined { node, white_dec, black_inc, child_dec } => {
                let removed: Vec<NodeId> = child_dec
                    .iter()
                    .filter(|&(_, amt)| *amt == one)
                    .map(|(&c, _)| c)
                    .collect();
                if *white_dec == one {
                    Event::Verify { node: *node, keep_black: *black_inc == one, removed }
                } else if *black_inc == one {
                    Event::Query { node: *node, removed }
                } else {
                    // Pure child removals carry no information.
                    let mut next = HashMap::new();
                    for ((mut claim, bit), sid) in std::mem::take(&mut current) {
                        for r in &removed {
                            claim.remove(r);
                        }
                        merge_slot(&mut next, &mut states, (claim, bit), sid);
                    }
                    current = next;
                    continue;
                }
            }
        };

        let mut next: HashMap<(Claim, Option<bool>), StateId> = HashMap::new();
        let mut pending: Vec<(StateId, Variable, Vec<(Val, StateId)>)> = Vec::new();
        for ((claim, bit), sid) in &current {
            let (claim, bit) = (claim.clone(), *bit);
            match &event {
                Event::Drop { node } => {
                    let mut succ = claim;
                    succ.remove(node);
                    merge_slot(&mut next, &mut states, (succ, bit), *sid);
                }
                Event::Query { node, removed } => {
                    let var = query_var(shape, *node, &claim)?;
                    let mut succ = claim;
                    for r in removed {
                        succ.remove(r);
                    }
                    let edges = (1..=k)
                        .map(|v| {
                            let mut key = succ.clone();
                            key.insert(*node, v);
                            let bit =
                                if *node == 1 { Some(v == 1) } else { bit };
                            (v, fresh_slot(&mut next, &mut states, (key, bit)))
                        })
                        .collect();
                    pending.push((*sid, var, edges));
                }
                Event::Guess { node } => {
                    // All guesses are reachable whatever the dummy answers.
                    let mut targets = Vec::new();
                    for g in 1..=k {
                        let mut key = claim.clone();
                        key.insert(*node, g);
                        let bit = if *node == 1 { Some(g == 1) } else { bit };
                        targets.push(fresh_slot(&mut next, &mut states, (key, bit)));
                    }
                    let edges = (1..=k)
                        .flat_map(|v| targets.iter().map(move |&t| (v, t)))
                        .collect();
                    pending.push((*sid, dummy, edges));
                }
                Event::Verify { node, keep_black, removed } => {
                    let var = query_var(shape, *node, &claim)?;
                    let claimed = *claim.get(node).ok_or_else(|| {
                        ConstructError::BadInput(format!("verify of unpebbled {node}"))
                    })?;
                    let mut succ = claim;
                    if !keep_black {
                        succ.remove(node);
                    }
                    for r in removed {
                        succ.remove(r);
                    }
                    // Only the matching answer survives.
                    let target = fresh_slot(&mut next, &mut states, (succ, bit));
                    pending.push((*sid, var, vec![(claimed, target)]));
                }
            }
        }
        for (sid, var, edges) in pending {
            states[sid] = StateKind::Query { var, edges };
        }
        current = next;
    }

    // The sequence ends empty; the survivors carry only the root bit.
    let mut have = [false, false];
    for ((claim, bit), sid) in current {
        debug_assert!(claim.is_empty());
        let bit = bit.ok_or_else(|| ConstructError::BadInput("root never valued".into()))?;
        states[sid] = StateKind::Output { value: bit as Val };
        have[bit as usize] = true;
    }
    for (value, seen) in have.into_iter().enumerate() {
        if !seen {
            states.push(StateKind::Output { value: value as Val });
        }
    }

    let bp = BranchingProgram { k, shape, states, start: 0, deterministic: false };
    bp.validate()?;
    Ok(bp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::{
        check_solves, check_thrifty, depth, simulate, CheckConfig, Problem,
    };
    use crate::pebble::black_strategy;
    use crate::search::{min_cost, SearchGame, SearchLimits};
    use crate::tree::{enumerate_instances, instance_count};

    fn cfg() -> CheckConfig {
        CheckConfig::default()
    }

    #[test]
    fn sizes_match_formula() {
        for h in 1..=5 {
            for k in 1..=4 {
                let bp = build_thrifty_det(h, k).unwrap();
                assert_eq!(bp.size(), (k as usize + 1).pow(h as u32), "h={h} k={k}");
            }
        }
    }

    #[test]
    fn recursive_program_solves_and_is_thrifty() {
        for (h, k) in [(1, 2), (1, 3), (2, 2), (2, 3)] {
            let bp = build_thrifty_det(h, k).unwrap();
            assert!(check_solves(&bp, Problem::FT, &cfg()).ok, "({h},{k})");
            assert!(check_thrifty(&bp, &cfg()).ok, "({h},{k})");
            assert_eq!(depth(&bp, &cfg()).unwrap(), 1 << h, "({h},{k})");
        }
    }

    #[test]
    fn black_compile_solves() {
        let shape = TreeShape::new(2, 2).unwrap();
        let (bp, c) = build_from_black_pebbling(shape, &black_strategy(shape), 2).unwrap();
        assert!(check_solves(&bp, Problem::FT, &cfg()).ok);
        assert!(check_thrifty(&bp, &cfg()).ok);
        // Cost is 2, so the size must fit within C * k^2.
        assert!(bp.size() <= c * 4, "{} vs C={c}", bp.size());
    }

    #[test]
    fn black_compile_thrifty_h3() {
        let shape = TreeShape::new(2, 3).unwrap();
        let (bp, _) = build_from_black_pebbling(shape, &black_strategy(shape), 2).unwrap();
        assert!(check_thrifty(&bp, &cfg()).ok);
        assert!(check_solves(&bp, Problem::FT, &cfg()).ok);
    }

    #[test]
    fn black_compile_degenerate_h1() {
        let shape = TreeShape::new(2, 1).unwrap();
        let (bp, c) = build_from_black_pebbling(shape, &black_strategy(shape), 3).unwrap();
        assert_eq!(bp.size(), 4);
        assert!(bp.size() <= c * 3);
    }

    #[test]
    fn black_compile_agrees_with_recursive() {
        let shape = TreeShape::new(2, 2).unwrap();
        let (compiled, _) = build_from_black_pebbling(shape, &black_strategy(shape), 2).unwrap();
        let recursive = build_thrifty_det(2, 2).unwrap();
        for inst in enumerate_instances(shape, 2, 1 << 10).unwrap() {
            let a = simulate(&compiled, &inst).unwrap().0;
            let b = simulate(&recursive, &inst).unwrap().0;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bw_compile_solves_bt() {
        let shape = TreeShape::new(2, 2).unwrap();
        let (_, witness) =
            min_cost(&tree_dag(shape), SearchGame::BlackWhite, &SearchLimits::default())
                .unwrap();
        let bp = build_from_bw_pebbling(shape, &witness, 2).unwrap();
        assert!(!bp.deterministic);
        assert!(check_solves(&bp, Problem::BT, &cfg()).ok);
        assert!(check_thrifty(&bp, &cfg()).ok);
    }

    #[test]
    fn bw_compile_on_black_sequence_matches_determinized() {
        let shape = TreeShape::new(2, 2).unwrap();
        let black = black_strategy(shape);
        let bw = PebbleSequence { game: SequenceGame::BlackWhite, moves: black.moves.clone() };
        let nondet = build_from_bw_pebbling(shape, &bw, 2).unwrap();
        let (det, _) = build_from_black_pebbling(shape, &black, 2).unwrap();
        assert_eq!(instance_count(shape, 2).unwrap(), Some(64));
        for inst in enumerate_instances(shape, 2, 1 << 10).unwrap() {
            let ft = simulate(&det, &inst).unwrap().0;
            let paths = crate::bp::simulate_nondet(&nondet, &inst, 1 << 16).unwrap();
            let answers: std::collections::BTreeSet<Val> =
                paths.iter().map(|&(v, _)| v).collect();
            assert_eq!(answers.len(), 1);
            assert_eq!(answers.contains(&1), ft == 1);
        }
    }

    #[test]
    fn wrong_games_rejected() {
        let shape = TreeShape::new(2, 2).unwrap();
        let black = black_strategy(shape);
        assert!(matches!(
            build_from_bw_pebbling(shape, &black, 2),
            Err(ConstructError::BadInput(_))
        ));
        let fig2 = crate::pebble::fig2_strategy();
        let shape3 = TreeShape::new(2, 3).unwrap();
        assert!(matches!(
            build_from_black_pebbling(shape3, &fig2, 2),
            Err(ConstructError::BadInput(_))
        ));
    }
}
