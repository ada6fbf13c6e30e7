//! The generic directed acyclic graph that gets pebbled. Houses balanced trees
//! (via [`tree_dag`]) and the copy-expanded reduction graphs built in
//! [`crate::reduction`]. Edges are stored child -> parent: the children of a
//! node are the nodes that feed it, and the root is the unique node with no
//! parent.

use std::collections::HashMap;

use serde_json::Value as Json;
use thiserror::Error;

use crate::tree::{NodeId, TreeShape};

#[derive(Debug, Error)]
pub enum DagError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("graph has a cycle")]
    Cyclic,
    #[error("graph must have exactly one root (found {0})")]
    RootCount(usize),
    #[error("bad dag json: {0}")]
    BadJson(String),
}

/// Construction parameters carried by reduction graphs so a reloaded dag can
/// reconstruct the node order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GParams {
    pub d: usize,
    pub h: usize,
    pub c: usize,
    pub prime: bool,
}

#[derive(Debug, Clone)]
pub struct Dag {
    ids: Vec<NodeId>,
    index_of: HashMap<NodeId, usize>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    heights: Vec<usize>,
    root: usize,
    /// (tree node, copy index) for reduction-graph nodes.
    meta: Vec<Option<(NodeId, usize)>>,
    /// Total order used for smallest/largest-child selection; lower is smaller.
    order_rank: Vec<u64>,
    pub gparams: Option<GParams>,
}

impl Dag {
    /// Build from public node ids and child->parent edges given as id pairs.
    pub fn new(
        ids: Vec<NodeId>,
        edges: &[(NodeId, NodeId)],
        meta: Vec<Option<(NodeId, usize)>>,
        gparams: Option<GParams>,
    ) -> Result<Self, DagError> {
        let n = ids.len();
        let mut index_of = HashMap::with_capacity(n);
        for (idx, &id) in ids.iter().enumerate() {
            if index_of.insert(id, idx).is_some() {
                return Err(DagError::DuplicateNode(id));
            }
        }
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for &(child, parent) in edges {
            let c = *index_of.get(&child).ok_or(DagError::UnknownNode(child))?;
            let p = *index_of.get(&parent).ok_or(DagError::UnknownNode(parent))?;
            children[p].push(c);
            parents[c].push(p);
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_empty()).collect();
        if roots.len() != 1 {
            return Err(DagError::RootCount(roots.len()));
        }

        // Heights by longest path from a source; also detects cycles.
        let mut heights = vec![0usize; n];
        let mut pending: Vec<usize> = children.iter().map(|c| c.len()).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut seen = 0;
        let mut cursor = 0;
        while cursor < queue.len() {
            let node = queue[cursor];
            cursor += 1;
            seen += 1;
            heights[node] = 1 + children[node].iter().map(|&c| heights[c]).max().unwrap_or(0);
            for &p in &parents[node] {
                pending[p] -= 1;
                if pending[p] == 0 {
                    queue.push(p);
                }
            }
        }
        if seen != n {
            return Err(DagError::Cyclic);
        }

        let meta = if meta.is_empty() { vec![None; n] } else { meta };
        let mut dag = Dag {
            order_rank: (0..n as u64).collect(),
            root: roots[0],
            ids,
            index_of,
            children,
            parents,
            heights,
            meta,
            gparams,
        };
        dag.recompute_order();
        // Deterministic child/parent listings: ascending node order.
        for idx in 0..n {
            let rank = dag.order_rank.clone();
            dag.children[idx].sort_by_key(|&c| rank[c]);
            dag.parents[idx].sort_by_key(|&p| rank[p]);
        }
        Ok(dag)
    }

    /// Order: (inorder rank of the underlying tree node, copy index) when the
    /// metadata is present, plain id order otherwise.
    fn recompute_order(&mut self) {
        let ranks: Option<Vec<u64>> = self.gparams.and_then(|gp| {
            let shape = TreeShape::new(gp.d, gp.h).ok()?;
            let inorder = inorder_ranks(shape);
            self.meta
                .iter()
                .enumerate()
                .map(|(idx, m)| match m {
                    Some((tree_node, copy)) => {
                        let t = inorder.get(*tree_node).copied()?;
                        Some(t * (gp.c as u64 + 1) + *copy as u64)
                    }
                    // The added root is above everything.
                    None => Some(u64::MAX - idx as u64),
                })
                .collect()
        });
        match ranks {
            Some(r) => self.order_rank = r,
            None => {
                let mut ids: Vec<usize> = (0..self.ids.len()).collect();
                ids.sort_by_key(|&i| self.ids[i]);
                let mut rank = vec![0u64; self.ids.len()];
                for (pos, idx) in ids.into_iter().enumerate() {
                    rank[idx] = pos as u64;
                }
                self.order_rank = rank;
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id_of(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn idx_of(&self, id: NodeId) -> Result<usize, DagError> {
        self.index_of.get(&id).copied().ok_or(DagError::UnknownNode(id))
    }

    pub fn children_of(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn parents_of(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn is_source(&self, idx: usize) -> bool {
        self.children[idx].is_empty()
    }

    pub fn height_of(&self, idx: usize) -> usize {
        self.heights[idx]
    }

    pub fn max_height(&self) -> usize {
        self.heights.iter().copied().max().unwrap_or(0)
    }

    pub fn meta_of(&self, idx: usize) -> Option<(NodeId, usize)> {
        self.meta[idx]
    }

    pub fn order_rank(&self, idx: usize) -> u64 {
        self.order_rank[idx]
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(|c| c.len()).sum()
    }

    pub fn to_json(&self) -> Json {
        let mut nodes = Vec::new();
        for idx in 0..self.node_count() {
            let mut obj = serde_json::Map::new();
            obj.insert("id".into(), Json::from(self.ids[idx] as u64));
            if let Some((tree_node, copy)) = self.meta[idx] {
                obj.insert("tree_node".into(), Json::from(tree_node as u64));
                obj.insert("copy".into(), Json::from(copy as u64));
            }
            nodes.push(Json::Object(obj));
        }
        let mut edges = Vec::new();
        for parent in 0..self.node_count() {
            for &child in &self.children[parent] {
                edges.push(Json::Array(vec![
                    Json::from(self.ids[child] as u64),
                    Json::from(self.ids[parent] as u64),
                ]));
            }
        }
        let mut obj = serde_json::Map::new();
        if let Some(gp) = self.gparams {
            obj.insert("c".into(), Json::from(gp.c as u64));
            obj.insert("d".into(), Json::from(gp.d as u64));
            obj.insert("h".into(), Json::from(gp.h as u64));
            obj.insert("prime".into(), Json::from(gp.prime));
        }
        obj.insert("edges".into(), Json::Array(edges));
        obj.insert("nodes".into(), Json::Array(nodes));
        Json::Object(obj)
    }

    pub fn from_json(json: &Json) -> Result<Self, DagError> {
        let obj = json.as_object().ok_or_else(|| DagError::BadJson("expected object".into()))?;
        let nodes = obj
            .get("nodes")
            .and_then(Json::as_array)
            .ok_or_else(|| DagError::BadJson("missing \"nodes\" array".into()))?;
        let mut ids = Vec::new();
        let mut meta = Vec::new();
        for node in nodes {
            let nobj =
                node.as_object().ok_or_else(|| DagError::BadJson("bad node entry".into()))?;
            let id = nobj
                .get("id")
                .and_then(Json::as_u64)
                .ok_or_else(|| DagError::BadJson("node missing \"id\"".into()))?;
            ids.push(id as NodeId);
            let tree_node = nobj.get("tree_node").and_then(Json::as_u64);
            let copy = nobj.get("copy").and_then(Json::as_u64);
            meta.push(match (tree_node, copy) {
                (Some(t), Some(c)) => Some((t as NodeId, c as usize)),
                _ => None,
            });
        }
        let edges_json = obj
            .get("edges")
            .and_then(Json::as_array)
            .ok_or_else(|| DagError::BadJson("missing \"edges\" array".into()))?;
        let mut edges = Vec::new();
        for edge in edges_json {
            let pair = edge.as_array().filter(|a| a.len() == 2);
            let pair = pair.ok_or_else(|| DagError::BadJson("edge must be [child,parent]".into()))?;
            let child = pair[0].as_u64().ok_or_else(|| DagError::BadJson("bad edge id".into()))?;
            let parent = pair[1].as_u64().ok_or_else(|| DagError::BadJson("bad edge id".into()))?;
            edges.push((child as NodeId, parent as NodeId));
        }
        let gparams = match (
            obj.get("d").and_then(Json::as_u64),
            obj.get("h").and_then(Json::as_u64),
            obj.get("c").and_then(Json::as_u64),
        ) {
            (Some(d), Some(h), Some(c)) => Some(GParams {
                d: d as usize,
                h: h as usize,
                c: c as usize,
                prime: obj.get("prime").and_then(Json::as_bool).unwrap_or(false),
            }),
            _ => None,
        };
        Dag::new(ids, &edges, meta, gparams)
    }
}

/// Inorder ranks of T_d^h heap nodes (first child, node, remaining children);
/// index 0 is unused.
pub fn inorder_ranks(shape: TreeShape) -> Vec<u64> {
    fn walk(shape: TreeShape, i: NodeId, next: &mut u64, out: &mut Vec<u64>) {
        let children = shape.children(i).expect("in range");
        match children.split_first() {
            None => {
                out[i] = *next;
                *next += 1;
            }
            Some((&first, rest)) => {
                walk(shape, first, next, out);
                out[i] = *next;
                *next += 1;
                for &c in rest {
                    walk(shape, c, next, out);
                }
            }
        }
    }
    let mut out = vec![0u64; shape.node_count() + 1];
    let mut next = 0;
    walk(shape, 1, &mut next, &mut out);
    out
}

/// T_d^h as a pebble graph: node ids are the heap indices.
pub fn tree_dag(shape: TreeShape) -> Dag {
    let n = shape.node_count();
    let ids: Vec<NodeId> = (1..=n).collect();
    let mut edges = Vec::new();
    for i in 1..=n {
        for c in shape.children(i).expect("in range") {
            edges.push((c, i));
        }
    }
    Dag::new(ids, &edges, Vec::new(), None).expect("trees are valid dags")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_dag_structure() {
        let dag = tree_dag(TreeShape::new(2, 3).unwrap());
        assert_eq!(dag.node_count(), 7);
        assert_eq!(dag.edge_count(), 6);
        let root = dag.root();
        assert_eq!(dag.id_of(root), 1);
        assert_eq!(dag.height_of(root), 3);
        let kids: Vec<NodeId> =
            dag.children_of(root).iter().map(|&c| dag.id_of(c)).collect();
        assert_eq!(kids, vec![2, 3]);
        assert!(dag.is_source(dag.idx_of(5).unwrap()));
        assert_eq!(dag.height_of(dag.idx_of(5).unwrap()), 1);
    }

    #[test]
    fn inorder_binary() {
        // T^2: inorder is 2, 1, 3.
        let ranks = inorder_ranks(TreeShape::new(2, 2).unwrap());
        assert!(ranks[2] < ranks[1] && ranks[1] < ranks[3]);
        // T^3: 4 2 5 1 6 3 7.
        let ranks = inorder_ranks(TreeShape::new(2, 3).unwrap());
        let order: Vec<NodeId> = {
            let mut nodes: Vec<NodeId> = (1..=7).collect();
            nodes.sort_by_key(|&i| ranks[i]);
            nodes
        };
        assert_eq!(order, vec![4, 2, 5, 1, 6, 3, 7]);
    }

    #[test]
    fn cycle_rejected() {
        let err = Dag::new(vec![1, 2], &[(1, 2), (2, 1)], Vec::new(), None);
        assert!(matches!(err, Err(DagError::Cyclic) | Err(DagError::RootCount(_))));
    }

    #[test]
    fn json_roundtrip() {
        let dag = tree_dag(TreeShape::new(2, 2).unwrap());
        let json = dag.to_json();
        let back = Dag::from_json(&json).unwrap();
        assert_eq!(back.node_count(), 3);
        assert_eq!(back.edge_count(), 2);
        assert_eq!(serde_json::to_string(&back.to_json()).unwrap(),
                   serde_json::to_string(&json).unwrap());
    }
}
