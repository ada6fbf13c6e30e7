//! Copy-expansion of a tree into the graphs whose whole-pebble games simulate
//! the tree's discretized fractional game, plus the niceness conditions that
//! let a black-pebbling lower bound transfer to the black-white game.
//!
//! Each tree node v becomes c copies v[1..c]; every tree edge becomes a
//! complete bipartite bundle between the copy groups and a fresh root sits
//! above the c copies of the tree root. The pruned variant removes, at each
//! copy v[i] of an internal tree node, the edges to its i-1 smallest and
//! c-i largest children under the (inorder, copy) node order, which is what
//! makes the disjoint-path arguments below go through.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dag::{Dag, DagError, GParams};
use crate::search::{min_black_cost_to_node, SearchError, SearchLimits};
use crate::tree::{NodeId, TreeError, TreeShape};

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("bad path: {0}")]
    BadPath(String),
    #[error("witness paths are not disjoint: {0}")]
    DisjointnessViolation(String),
    #[error("graph too large for the niceness checker")]
    TooLarge,
}

/// Copy id scheme: tree node v (1-based) copy i (1-based) gets
/// (v-1)*c + (i-1); the added root gets node_count*c.
pub fn copy_id(c: usize, v: NodeId, i: usize) -> NodeId {
    (v - 1) * c + (i - 1)
}

fn build(d: usize, h: usize, c: usize, prime: bool) -> Result<Dag, ReductionError> {
    let shape = TreeShape::new(d, h)?;
    if c == 0 {
        return Err(TreeError::BadShape("need at least one copy per node".into()).into());
    }
    let n = shape.node_count();
    let root_id = n * c;
    let mut ids: Vec<NodeId> = (0..=root_id).collect();
    ids.truncate(root_id + 1);
    let mut meta: Vec<Option<(NodeId, usize)>> = Vec::with_capacity(root_id + 1);
    for v in 1..=n {
        for i in 1..=c {
            meta.push(Some((v, i)));
        }
    }
    meta.push(None);

    let inorder = crate::dag::inorder_ranks(shape);
    let mut edges = Vec::new();
    for v in 1..=n {
        let kids = shape.children(v)?;
        if kids.is_empty() {
            continue;
        }
        // All copies of all tree children, smallest first.
        let mut child_copies: Vec<(u64, NodeId)> = Vec::with_capacity(kids.len() * c);
        for &w in &kids {
            for j in 1..=c {
                child_copies.push((inorder[w] * (c as u64 + 1) + j as u64, copy_id(c, w, j)));
            }
        }
        child_copies.sort();
        for i in 1..=c {
            let parent = copy_id(c, v, i);
            // The pruned graph drops the i-1 smallest and c-i largest.
            let keep = if prime {
                &child_copies[i - 1..child_copies.len() - (c - i)]
            } else {
                &child_copies[..]
            };
            for &(_, child) in keep {
                edges.push((child, parent));
            }
        }
    }
    for i in 1..=c {
        edges.push((copy_id(c, 1, i), root_id));
    }
    Ok(Dag::new(ids, &edges, meta, Some(GParams { d, h, c, prime }))?)
}

/// The full copy-expansion of T_d^h with c copies per node.
pub fn build_g(d: usize, h: usize, c: usize) -> Result<Dag, ReductionError> {
    build(d, h, c, false)
}

/// The edge-pruned variant; with c = 1 nothing is removed.
pub fn build_gprime(d: usize, h: usize, c: usize) -> Result<Dag, ReductionError> {
    build(d, h, c, true)
}

/// Path from a source up to `u`, taking the smallest child at every step.
/// Returned source first, `u` last.
pub fn leftmost_path(dag: &Dag, u: NodeId) -> Result<Vec<NodeId>, ReductionError> {
    extreme_path(dag, u, false)
}

/// Path from a source up to `u`, taking the largest child at every step.
pub fn rightmost_path(dag: &Dag, u: NodeId) -> Result<Vec<NodeId>, ReductionError> {
    extreme_path(dag, u, true)
}

fn extreme_path(dag: &Dag, u: NodeId, largest: bool) -> Result<Vec<NodeId>, ReductionError> {
    let mut idx = dag.idx_of(u)?;
    let mut path = vec![idx];
    while let Some(&next) = if largest {
        dag.children_of(idx).last()
    } else {
        dag.children_of(idx).first()
    } {
        // Children are stored in ascending node order.
        path.push(next);
        idx = next;
    }
    path.reverse();
    Ok(path.into_iter().map(|i| dag.id_of(i)).collect())
}

/// For every same-height pair u < u' with children: the smallest child of u
/// is not a child of u', and the largest child of u' is not a child of u.
/// Holds on the pruned graphs; fails on the full ones for c > 1.
pub fn check_order_fact(dag: &Dag) -> bool {
    let n = dag.node_count();
    for a in 0..n {
        for b in 0..n {
            if a == b
                || dag.height_of(a) != dag.height_of(b)
                || dag.order_rank(a) >= dag.order_rank(b)
            {
                continue;
            }
            let (ka, kb) = (dag.children_of(a), dag.children_of(b));
            if ka.is_empty() || kb.is_empty() {
                continue;
            }
            let smallest_of_a = ka[0];
            let largest_of_b = *kb.last().unwrap();
            if kb.contains(&smallest_of_a) || ka.contains(&largest_of_b) {
                return false;
            }
        }
    }
    true
}

/// Whole-graph black pebbling cost of the pruned graph: c((d-1)(h-1) + 1).
pub fn gprime_black_cost_formula(d: usize, h: usize, c: usize) -> u64 {
    (c * ((d - 1) * (h - 1) + 1)) as u64
}

/// Black cost of pebbling a single node at height l <= h of the pruned
/// graph: c(d-1)(l-1) + 1.
pub fn gprime_node_cost_formula(d: usize, c: usize, l: usize) -> u64 {
    (c * (d - 1) * (l - 1) + 1) as u64
}

/// Upward reachability closure as bitmasks: bit y of `up[x]` says y is x or
/// an ancestor of x.
fn up_masks(dag: &Dag) -> Result<Vec<u64>, ReductionError> {
    let n = dag.node_count();
    if n > 64 {
        return Err(ReductionError::TooLarge);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(dag.height_of(i)));
    let mut up = vec![0u64; n];
    for &i in &order {
        let mut m = 1u64 << i;
        for &p in dag.parents_of(i) {
            m |= up[p];
        }
        up[i] = m;
    }
    Ok(up)
}

fn comparable(up: &[u64], a: usize, b: usize) -> bool {
    up[a] >> b & 1 == 1 || up[b] >> a & 1 == 1
}

/// The bottleneck set for a blocked source-to-root path P: all children of
/// P-nodes that are not on P, each paired with a source path that avoids P
/// and all the others (leftmost if the node sits left of P at its height,
/// rightmost otherwise). Errors if the constructed paths are not disjoint.
pub fn bottleneck_witness(
    dag: &Dag,
    path: &[NodeId],
) -> Result<(Vec<NodeId>, BTreeMap<NodeId, Vec<NodeId>>), ReductionError> {
    let idxs: Vec<usize> =
        path.iter().map(|&id| dag.idx_of(id)).collect::<Result<_, _>>()?;
    if idxs.is_empty() || !dag.is_source(idxs[0]) || *idxs.last().unwrap() != dag.root() {
        return Err(ReductionError::BadPath("path must run source to root".into()));
    }
    for w in idxs.windows(2) {
        if !dag.children_of(w[1]).contains(&w[0]) {
            return Err(ReductionError::BadPath(format!(
                "{} is not a child of {}",
                dag.id_of(w[0]),
                dag.id_of(w[1])
            )));
        }
    }
    // Node of P at height l, assuming the path climbs one height per step.
    let at_height = |l: usize| idxs[l - 1];

    let mut s: Vec<usize> = Vec::new();
    for &p in &idxs {
        for &child in dag.children_of(p) {
            if !idxs.contains(&child) && !s.contains(&child) {
                s.push(child);
            }
        }
    }

    let mut paths: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &u in &s {
        let l = dag.height_of(u);
        let beside = at_height(l);
        let witness = if dag.order_rank(u) < dag.order_rank(beside) {
            leftmost_path(dag, dag.id_of(u))?
        } else {
            rightmost_path(dag, dag.id_of(u))?
        };
        paths.insert(dag.id_of(u), witness);
    }

    // The whole point: {P_u} and P must be mutually node-disjoint.
    let mut seen: BTreeMap<NodeId, NodeId> = path.iter().map(|&p| (p, p)).collect();
    for (&u, witness) in &paths {
        for &x in witness {
            if let Some(&other) = seen.get(&x) {
                return Err(ReductionError::DisjointnessViolation(format!(
                    "node {x} shared by the paths to {u} and {other}"
                )));
            }
            seen.insert(x, u);
        }
    }
    Ok((s.into_iter().map(|i| dag.id_of(i)).collect(), paths))
}

#[derive(Debug, Clone)]
pub struct NiceReport {
    /// Children of a common parent all have the same black pebbling cost.
    pub property1: bool,
    /// No path connects two children of a common parent.
    pub property2: bool,
    /// Every antichain u, u_1..u_m admits node-disjoint source paths to the
    /// u_i avoiding everything comparable with u.
    pub property3: bool,
    /// First violation found, if any.
    pub counterexample: Option<String>,
    /// False when the antichain cap stopped enumeration early.
    pub exhaustive: bool,
}

impl NiceReport {
    pub fn is_nice(&self) -> bool {
        self.property1 && self.property2 && self.property3
    }
}

/// Check the three niceness conditions, enumerating antichains up to
/// `antichain_cap` of them (0 means unlimited).
pub fn check_nice(
    dag: &Dag,
    antichain_cap: usize,
    limits: &SearchLimits,
) -> Result<NiceReport, ReductionError> {
    let n = dag.node_count();
    let up = up_masks(dag)?;
    let mut report = NiceReport {
        property1: true,
        property2: true,
        property3: true,
        counterexample: None,
        exhaustive: true,
    };

    let mut costs: Vec<Option<u64>> = vec![None; n];
    let cost_of = |idx: usize, costs: &mut Vec<Option<u64>>| -> Result<u64, ReductionError> {
        if costs[idx].is_none() {
            costs[idx] = Some(min_black_cost_to_node(dag, dag.id_of(idx), limits)?);
        }
        Ok(costs[idx].unwrap())
    };

    'prop12: for parent in 0..n {
        let kids = dag.children_of(parent);
        for (ai, &a) in kids.iter().enumerate() {
            for &b in &kids[ai + 1..] {
                if comparable(&up, a, b) {
                    report.property2 = false;
                    report.counterexample.get_or_insert(format!(
                        "children {} and {} of {} are connected",
                        dag.id_of(a),
                        dag.id_of(b),
                        dag.id_of(parent)
                    ));
                    break 'prop12;
                }
                let (ca, cb) = (cost_of(a, &mut costs)?, cost_of(b, &mut costs)?);
                if ca != cb {
                    report.property1 = false;
                    report.counterexample.get_or_insert(format!(
                        "children {} and {} of {} cost {} vs {}",
                        dag.id_of(a),
                        dag.id_of(b),
                        dag.id_of(parent),
                        ca,
                        cb
                    ));
                    break 'prop12;
                }
            }
        }
    }

    // Property 3 over all antichains of size >= 2, each element in turn
    // playing the avoided node.
    let mut stack: Vec<usize> = Vec::new();
    let mut visited = 0usize;
    let mut enumerate = AntichainWalk { up: &up, n, cap: antichain_cap };
    enumerate.walk(0, &mut stack, &mut visited, &mut |antichain| {
        for (ui, &u) in antichain.iter().enumerate() {
            let targets: Vec<usize> = antichain
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != ui)
                .map(|(_, &x)| x)
                .collect();
            if !antichain_witness(dag, &up, u, &targets) {
                report.property3 = false;
                report.counterexample.get_or_insert(format!(
                    "no disjoint source paths to {:?} avoiding {}",
                    targets.iter().map(|&t| dag.id_of(t)).collect::<Vec<_>>(),
                    dag.id_of(u)
                ));
                return false;
            }
        }
        true
    });
    if enumerate.overflowed(visited) {
        report.exhaustive = false;
    }
    Ok(report)
}

struct AntichainWalk<'a> {
    up: &'a [u64],
    n: usize,
    cap: usize,
}

impl AntichainWalk<'_> {
    fn overflowed(&self, visited: usize) -> bool {
        self.cap != 0 && visited >= self.cap
    }

    /// Visit antichains of size >= 2 in lexicographic order; the callback
    /// returns false to abort.
    fn walk(
        &mut self,
        start: usize,
        stack: &mut Vec<usize>,
        visited: &mut usize,
        cb: &mut impl FnMut(&[usize]) -> bool,
    ) -> bool {
        for x in start..self.n {
            if stack.iter().any(|&y| comparable(self.up, x, y)) {
                continue;
            }
            stack.push(x);
            if stack.len() >= 2 {
                *visited += 1;
                if !cb(stack) || self.overflowed(*visited) {
                    stack.pop();
                    return false;
                }
            }
            if !self.walk(x + 1, stack, visited, cb) {
                stack.pop();
                return false;
            }
            stack.pop();
        }
        true
    }
}

/// Do node-disjoint source paths to each target exist within the part of the
/// graph that has no path to or from `avoid`? Tries the constructive
/// leftmost/rightmost witnesses first, then falls back to a unit-capacity
/// flow search so a failure of the construction is not mistaken for a
/// failure of the property.
fn antichain_witness(dag: &Dag, up: &[u64], avoid: usize, targets: &[usize]) -> bool {
    let allowed: Vec<bool> = (0..dag.node_count()).map(|x| !comparable(up, x, avoid)).collect();

    let mut used = vec![false; dag.node_count()];
    let mut constructive_ok = true;
    'outer: for &t in targets {
        let path = if dag.order_rank(t) < dag.order_rank(avoid) {
            leftmost_path(dag, dag.id_of(t))
        } else {
            rightmost_path(dag, dag.id_of(t))
        };
        let path = match path {
            Ok(p) => p,
            Err(_) => {
                constructive_ok = false;
                break;
            }
        };
        for id in path {
            let idx = dag.idx_of(id).expect("path node exists");
            if !allowed[idx] || used[idx] {
                constructive_ok = false;
                break 'outer;
            }
            used[idx] = true;
        }
    }
    if constructive_ok {
        return true;
    }
    disjoint_paths_flow(dag, &allowed, targets)
}

/// Unit-capacity max flow deciding whether node-disjoint source-to-target
/// paths exist inside the allowed node set. Nodes are split in/out.
fn disjoint_paths_flow(dag: &Dag, allowed: &[bool], targets: &[usize]) -> bool {
    let n = dag.node_count();
    let size = 2 * n + 2;
    let (s, t) = (2 * n, 2 * n + 1);
    let mut cap = vec![vec![0u8; size]; size];
    for x in 0..n {
        if !allowed[x] {
            continue;
        }
        cap[x][n + x] = 1;
        if dag.is_source(x) {
            cap[s][x] = 1;
        }
        for &p in dag.parents_of(x) {
            if allowed[p] {
                cap[n + x][p] = 1;
            }
        }
    }
    for &target in targets {
        cap[n + target][t] = 1;
    }

    let mut flow = 0;
    loop {
        // BFS augmenting path.
        let mut prev = vec![usize::MAX; size];
        prev[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            for y in 0..size {
                if prev[y] == usize::MAX && cap[x][y] > 0 {
                    prev[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if prev[t] == usize::MAX {
            break;
        }
        let mut y = t;
        while y != s {
            let x = prev[y];
            cap[x][y] -= 1;
            cap[y][x] += 1;
            y = x;
        }
        flow += 1;
    }
    flow == targets.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pebble::q;
    use crate::search::{min_cost, SearchGame};

    fn lim() -> SearchLimits {
        SearchLimits::default()
    }

    #[test]
    fn g_counts() {
        let g = build_g(2, 3, 3).unwrap();
        assert_eq!(g.node_count(), 22);
        assert_eq!(g.edge_count(), 57);
        let tiny = build_g(2, 1, 2).unwrap();
        assert_eq!(tiny.node_count(), 3);
        assert_eq!(tiny.edge_count(), 2);
    }

    #[test]
    fn g_parent_counts() {
        // Every node strictly below the top copy layer has c parents.
        let g = build_g(2, 3, 3).unwrap();
        for idx in 0..g.node_count() {
            if g.height_of(idx) <= 2 {
                assert_eq!(g.parents_of(idx).len(), 3, "node {}", g.id_of(idx));
            }
        }
    }

    #[test]
    fn gprime_child_counts() {
        let gp = build_gprime(2, 3, 3).unwrap();
        for idx in 0..gp.node_count() {
            let kids = gp.children_of(idx).len();
            if idx == gp.root() {
                assert_eq!(kids, 3);
            } else if !gp.is_source(idx) {
                assert_eq!(kids, 4, "node {}", gp.id_of(idx));
            }
        }
    }

    #[test]
    fn gprime_c1_equals_g() {
        let g = build_g(2, 3, 1).unwrap();
        let gp = build_gprime(2, 3, 1).unwrap();
        assert_eq!(serde_json::to_string(&g.to_json()).unwrap().replace("false", "true"),
                   serde_json::to_string(&gp.to_json()).unwrap());
    }

    /// Full adjacency of the pruned graph at d=2, h=3, c=3, worked out by
    /// hand from the removal rule. Copy ids: v[i] = (v-1)*3 + (i-1).
    #[test]
    fn gprime_2_3_3_adjacency() {
        let gp = build_gprime(2, 3, 3).unwrap();
        let want: &[(NodeId, &[NodeId])] = &[
            // 1[1], 1[2], 1[3]: children among copies of 2 and 3.
            (0, &[3, 4, 5, 6]),
            (1, &[4, 5, 6, 7]),
            (2, &[5, 6, 7, 8]),
            // 2[i]: copies of 4 and 5.
            (3, &[9, 10, 11, 12]),
            (4, &[10, 11, 12, 13]),
            (5, &[11, 12, 13, 14]),
            // 3[i]: copies of 6 and 7.
            (6, &[15, 16, 17, 18]),
            (7, &[16, 17, 18, 19]),
            (8, &[17, 18, 19, 20]),
            // Added root keeps all copies of 1.
            (21, &[0, 1, 2]),
        ];
        for &(id, kids) in want {
            let idx = gp.idx_of(id).unwrap();
            let got: Vec<NodeId> =
                gp.children_of(idx).iter().map(|&k| gp.id_of(k)).collect();
            assert_eq!(got, kids, "children of {id}");
        }
    }

    #[test]
    fn extreme_paths() {
        let gp = build_gprime(2, 3, 3).unwrap();
        let root = gp.id_of(gp.root());
        // Smallest child thrice: 1[1], 2[1], 4[1].
        assert_eq!(leftmost_path(&gp, root).unwrap(), vec![9, 3, 0, 21]);
        // Largest child thrice: 1[3], 3[3], 7[3].
        assert_eq!(rightmost_path(&gp, root).unwrap(), vec![20, 8, 2, 21]);
        // A source's path is just itself.
        assert_eq!(leftmost_path(&gp, 9).unwrap(), vec![9]);
    }

    #[test]
    fn order_fact() {
        assert!(check_order_fact(&build_gprime(2, 3, 3).unwrap()));
        assert!(check_order_fact(&build_gprime(2, 3, 2).unwrap()));
        assert!(check_order_fact(&build_gprime(3, 2, 2).unwrap()));
        assert!(!check_order_fact(&build_g(2, 3, 3).unwrap()));
        assert!(!check_order_fact(&build_g(2, 3, 2).unwrap()));
        assert!(check_order_fact(&build_g(2, 3, 1).unwrap()));
    }

    #[test]
    fn formulas() {
        assert_eq!(gprime_black_cost_formula(2, 3, 3), 9);
        assert_eq!(gprime_black_cost_formula(2, 3, 2), 6);
        assert_eq!(gprime_black_cost_formula(2, 1, 5), 5);
        assert_eq!(gprime_node_cost_formula(2, 2, 3), 5);
    }

    #[test]
    fn search_matches_formula_c1() {
        let gp = build_gprime(2, 3, 1).unwrap();
        let (cost, _) = min_cost(&gp, SearchGame::Black, &lim()).unwrap();
        assert_eq!(cost, q(gprime_black_cost_formula(2, 3, 1) as i64, 1));
    }

    #[test]
    fn search_matches_formula_c2() {
        let gp = build_gprime(2, 3, 2).unwrap();
        let (cost, _) = min_cost(&gp, SearchGame::Black, &lim()).unwrap();
        assert_eq!(cost, q(6, 1));
    }

    #[test]
    fn node_costs_match_per_height_formula() {
        let gp = build_gprime(2, 3, 2).unwrap();
        for idx in 0..gp.node_count() {
            let l = gp.height_of(idx);
            if l > 3 {
                continue;
            }
            let cost = min_black_cost_to_node(&gp, gp.id_of(idx), &lim()).unwrap();
            assert_eq!(cost, gprime_node_cost_formula(2, 2, l), "node {}", gp.id_of(idx));
        }
    }

    #[test]
    fn bottleneck_sizes() {
        for (c, want) in [(3, 8), (2, 5)] {
            let gp = build_gprime(2, 3, c).unwrap();
            let root = gp.id_of(gp.root());
            for path in [leftmost_path(&gp, root).unwrap(), rightmost_path(&gp, root).unwrap()]
            {
                let (s, paths) = bottleneck_witness(&gp, &path).unwrap();
                assert_eq!(s.len(), want, "c={c}");
                assert_eq!(paths.len(), want);
            }
        }
    }

    #[test]
    fn bottleneck_rejects_non_paths() {
        let gp = build_gprime(2, 3, 2).unwrap();
        assert!(matches!(
            bottleneck_witness(&gp, &[0, 14]),
            Err(ReductionError::BadPath(_))
        ));
    }

    #[test]
    fn gprime_is_nice_full_is_not() {
        let gp = build_gprime(2, 3, 2).unwrap();
        let report = check_nice(&gp, 0, &lim()).unwrap();
        assert!(report.is_nice(), "{:?}", report.counterexample);
        assert!(report.exhaustive);

        let g = build_g(2, 3, 2).unwrap();
        let report = check_nice(&g, 0, &lim()).unwrap();
        assert!(!report.is_nice());
        assert!(report.counterexample.is_some());
    }

    #[test]
    fn single_node_is_nice() {
        let dag = Dag::new(vec![0], &[], Vec::new(), None).unwrap();
        let report = check_nice(&dag, 0, &lim()).unwrap();
        assert!(report.is_nice());
    }

    #[test]
    fn antichain_cap_flags_partial() {
        let g = build_gprime(2, 3, 2).unwrap();
        let report = check_nice(&g, 3, &lim()).unwrap();
        assert!(!report.exhaustive);
    }
}
