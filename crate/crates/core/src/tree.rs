//! Balanced d-ary trees with heap numbering, tree evaluation instances, and the
//! direct recursive evaluator that serves as the correctness oracle for every
//! other module.
//!
//! Nodes are numbered heap style: the root is 1 and the children of node i are
//! d(i-1)+2 ..= di+1 (for d=2 that is 2i and 2i+1). Values are 1-based: [k]
//! means {1, .., k}.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value as Json;
use thiserror::Error;

pub type NodeId = usize;
pub type Val = u16;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("node {node} out of range (tree has {count} nodes)")]
    OutOfRange { node: NodeId, count: usize },
    #[error("node {0} is not an internal node")]
    NotInternal(NodeId),
    #[error("node {0} is not a leaf")]
    NotLeaf(NodeId),
    #[error("bad tree shape: {0}")]
    BadShape(String),
    #[error("value {value} outside [1, {k}]")]
    BadValue { value: u64, k: Val },
    #[error("instance has {count} instances, above the cap {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error("bad instance json: {0}")]
    BadJson(String),
}

/// The balanced d-ary tree T_d^h; h counts levels, so h=1 is a single node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreeShape {
    pub d: usize,
    pub h: usize,
}

impl TreeShape {
    pub fn new(d: usize, h: usize) -> Result<Self, TreeError> {
        if d < 2 {
            return Err(TreeError::BadShape(format!("arity d={d} must be >= 2")));
        }
        if h < 1 {
            return Err(TreeError::BadShape("height h must be >= 1".into()));
        }
        // Reject shapes whose node count cannot be represented.
        let mut count: usize = 0;
        let mut level: usize = 1;
        for _ in 0..h {
            count = count
                .checked_add(level)
                .ok_or_else(|| TreeError::BadShape(format!("T_{d}^{h} is too large")))?;
            level = level
                .checked_mul(d)
                .ok_or_else(|| TreeError::BadShape(format!("T_{d}^{h} is too large")))?;
        }
        Ok(TreeShape { d, h })
    }

    /// (d^h - 1)/(d - 1); for d=2: 2^h - 1.
    pub fn node_count(&self) -> usize {
        let mut count = 0;
        let mut level = 1;
        for _ in 0..self.h {
            count += level;
            level *= self.d;
        }
        count
    }

    /// d^(h-1) nodes on the bottom level.
    pub fn leaf_count(&self) -> usize {
        self.d.pow(self.h as u32 - 1)
    }

    pub fn internal_count(&self) -> usize {
        self.node_count() - self.leaf_count()
    }

    /// Smallest leaf id; leaves occupy a contiguous tail of the numbering.
    pub fn first_leaf(&self) -> NodeId {
        self.internal_count() + 1
    }

    pub fn check_node(&self, i: NodeId) -> Result<(), TreeError> {
        if i < 1 || i > self.node_count() {
            return Err(TreeError::OutOfRange { node: i, count: self.node_count() });
        }
        Ok(())
    }

    pub fn is_leaf(&self, i: NodeId) -> bool {
        i >= self.first_leaf()
    }

    /// Children of i: d(i-1)+2 ..= di+1, or empty for leaves.
    pub fn children(&self, i: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.check_node(i)?;
        if self.is_leaf(i) {
            return Ok(Vec::new());
        }
        Ok((self.d * (i - 1) + 2..=self.d * i + 1).collect())
    }

    pub fn parent(&self, i: NodeId) -> Option<NodeId> {
        if i <= 1 { None } else { Some((i - 2) / self.d + 1) }
    }

    pub fn sibling(&self, i: NodeId) -> Option<NodeId> {
        // Binary only: the other child of parent(i).
        if self.d != 2 {
            return None;
        }
        match i {
            0 | 1 => None,
            _ if i % 2 == 0 => Some(i + 1),
            _ => Some(i - 1),
        }
    }

    /// Height of node i: leaves are at height 1, the root at height h.
    pub fn height_of(&self, i: NodeId) -> Result<usize, TreeError> {
        self.check_node(i)?;
        let (mut start, mut size, mut depth) = (1usize, 1usize, 0usize);
        while i >= start + size {
            start += size;
            size *= self.d;
            depth += 1;
        }
        Ok(self.h - depth)
    }

    /// All nodes at a given height, in ascending id order.
    pub fn nodes_at_height(&self, height: usize) -> Vec<NodeId> {
        let depth = self.h - height;
        let start = {
            let mut s = 1;
            let mut size = 1;
            for _ in 0..depth {
                s += size;
                size *= self.d;
            }
            s
        };
        (start..start + self.d.pow(depth as u32)).collect()
    }
}

impl fmt::Display for TreeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T_{}^{}", self.d, self.h)
    }
}

/// Fixed layout of an instance's variables.
///
/// The global variable order is: leaf variables in ascending node id, then one
/// block of k^d table entries per internal node in ascending node id, each
/// block row-major with the first argument most significant. Everything that
/// needs "a globally fixed order on E" (enumeration, advice indices) uses it.
#[derive(Debug, Clone, Copy)]
pub struct VarLayout {
    pub shape: TreeShape,
    pub k: Val,
    pub table_size: usize,
    pub var_count: usize,
}

impl VarLayout {
    pub fn new(shape: TreeShape, k: Val) -> Result<Self, TreeError> {
        if k < 1 {
            return Err(TreeError::BadShape("alphabet size k must be >= 1".into()));
        }
        let table_size = (k as usize)
            .checked_pow(shape.d as u32)
            .ok_or_else(|| TreeError::BadShape("k^d overflows".into()))?;
        let var_count = shape
            .internal_count()
            .checked_mul(table_size)
            .and_then(|n| n.checked_add(shape.leaf_count()))
            .ok_or_else(|| TreeError::BadShape("variable count overflows".into()))?;
        Ok(VarLayout { shape, k, table_size, var_count })
    }

    pub fn leaf_var(&self, i: NodeId) -> usize {
        debug_assert!(self.shape.is_leaf(i));
        i - self.shape.first_leaf()
    }

    /// Index of the table entry f_i(args) in the flat variable vector.
    pub fn table_var(&self, i: NodeId, args: &[Val]) -> usize {
        debug_assert!(!self.shape.is_leaf(i));
        debug_assert_eq!(args.len(), self.shape.d);
        let mut offset = 0;
        for &a in args {
            offset = offset * self.k as usize + (a as usize - 1);
        }
        self.shape.leaf_count() + (i - 1) * self.table_size + offset
    }
}

/// A tree evaluation instance I: a function table per internal node and a
/// value per leaf, stored flat in the global variable order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TepInstance {
    pub shape: TreeShape,
    pub k: Val,
    vars: Vec<Val>,
}

impl TepInstance {
    pub fn from_vars(shape: TreeShape, k: Val, vars: Vec<Val>) -> Result<Self, TreeError> {
        let layout = VarLayout::new(shape, k)?;
        if vars.len() != layout.var_count {
            return Err(TreeError::BadShape(format!(
                "expected {} variables, got {}",
                layout.var_count,
                vars.len()
            )));
        }
        for &v in &vars {
            if v < 1 || v > k {
                return Err(TreeError::BadValue { value: v as u64, k });
            }
        }
        Ok(TepInstance { shape, k, vars })
    }

    /// Build from per-node tables (flat row-major, k^d entries) and leaf values.
    pub fn from_parts(
        shape: TreeShape,
        k: Val,
        functions: &BTreeMap<NodeId, Vec<Val>>,
        leaves: &BTreeMap<NodeId, Val>,
    ) -> Result<Self, TreeError> {
        let layout = VarLayout::new(shape, k)?;
        let mut vars = vec![0 as Val; layout.var_count];
        for i in 1..shape.first_leaf() {
            let table = functions
                .get(&i)
                .ok_or_else(|| TreeError::BadShape(format!("missing table for node {i}")))?;
            if table.len() != layout.table_size {
                return Err(TreeError::BadShape(format!(
                    "table for node {i} has {} entries, expected {}",
                    table.len(),
                    layout.table_size
                )));
            }
            let base = shape.leaf_count() + (i - 1) * layout.table_size;
            vars[base..base + layout.table_size].copy_from_slice(table);
        }
        for i in shape.first_leaf()..=shape.node_count() {
            let v = *leaves
                .get(&i)
                .ok_or_else(|| TreeError::BadShape(format!("missing value for leaf {i}")))?;
            vars[i - shape.first_leaf()] = v;
        }
        for extra in functions.keys().filter(|i| shape.is_leaf(**i) || **i < 1) {
            return Err(TreeError::NotInternal(*extra));
        }
        for extra in leaves.keys().filter(|i| !shape.is_leaf(**i) || **i > shape.node_count()) {
            return Err(TreeError::NotLeaf(*extra));
        }
        Self::from_vars(shape, k, vars)
    }

    pub fn layout(&self) -> VarLayout {
        VarLayout::new(self.shape, self.k).expect("validated at construction")
    }

    pub fn vars(&self) -> &[Val] {
        &self.vars
    }

    pub fn var(&self, idx: usize) -> Val {
        self.vars[idx]
    }

    /// Returns a copy with one variable overwritten (used by mutation tests).
    pub fn with_var(&self, idx: usize, v: Val) -> TepInstance {
        let mut vars = self.vars.clone();
        vars[idx] = v;
        TepInstance { shape: self.shape, k: self.k, vars }
    }

    pub fn leaf_value(&self, i: NodeId) -> Result<Val, TreeError> {
        self.shape.check_node(i)?;
        if !self.shape.is_leaf(i) {
            return Err(TreeError::NotLeaf(i));
        }
        Ok(self.vars[self.layout().leaf_var(i)])
    }

    pub fn table_entry(&self, i: NodeId, args: &[Val]) -> Result<Val, TreeError> {
        self.shape.check_node(i)?;
        if self.shape.is_leaf(i) {
            return Err(TreeError::NotInternal(i));
        }
        for &a in args {
            if a < 1 || a > self.k {
                return Err(TreeError::BadValue { value: a as u64, k: self.k });
            }
        }
        Ok(self.vars[self.layout().table_var(i, args)])
    }

    /// v_i for every node, computed bottom-up in one pass.
    pub fn node_values(&self) -> Vec<Val> {
        let n = self.shape.node_count();
        let layout = self.layout();
        let mut values = vec![0 as Val; n + 1];
        for i in (1..=n).rev() {
            if self.shape.is_leaf(i) {
                values[i] = self.vars[layout.leaf_var(i)];
            } else {
                let first = self.shape.d * (i - 1) + 2;
                let args: Vec<Val> = (first..first + self.shape.d).map(|c| values[c]).collect();
                values[i] = self.vars[layout.table_var(i, &args)];
            }
        }
        values
    }

    pub fn node_value(&self, i: NodeId) -> Result<Val, TreeError> {
        self.shape.check_node(i)?;
        Ok(self.node_values()[i])
    }

    /// The function tree evaluation problem: the root's value.
    pub fn eval_ft(&self) -> Val {
        self.node_values()[1]
    }

    /// The boolean problem: accept iff the root's value is 1.
    pub fn eval_bt(&self) -> bool {
        self.eval_ft() == 1
    }

    /// Position in the global enumeration order (instance 0 is all-1s).
    pub fn index(&self) -> u128 {
        let mut idx: u128 = 0;
        for &v in &self.vars {
            idx = idx * self.k as u128 + (v as u128 - 1);
        }
        idx
    }
}

/// k^|Vars|, or None if it does not fit in u128.
pub fn instance_count(shape: TreeShape, k: Val) -> Result<Option<u128>, TreeError> {
    let layout = VarLayout::new(shape, k)?;
    let mut count: u128 = 1;
    for _ in 0..layout.var_count {
        count = match count.checked_mul(k as u128) {
            Some(c) => c,
            None => return Ok(None),
        };
    }
    Ok(Some(count))
}

/// The instance at a given position of the enumeration order.
pub fn instance_from_index(shape: TreeShape, k: Val, mut idx: u128) -> TepInstance {
    let layout = VarLayout::new(shape, k).expect("valid shape");
    let mut vars = vec![1 as Val; layout.var_count];
    for slot in (0..layout.var_count).rev() {
        vars[slot] = (idx % k as u128) as Val + 1;
        idx /= k as u128;
    }
    debug_assert_eq!(idx, 0, "index out of range");
    TepInstance { shape, k, vars }
}

/// All k^|Vars| instances exactly once, in the global order (odometer over the
/// variable vector, last variable fastest).
pub fn enumerate_instances(
    shape: TreeShape,
    k: Val,
    cap: u128,
) -> Result<impl Iterator<Item = TepInstance>, TreeError> {
    let count = instance_count(shape, k)?.ok_or(TreeError::CapExceeded { count: u128::MAX, cap })?;
    if count > cap {
        return Err(TreeError::CapExceeded { count, cap });
    }
    Ok((0..count).map(move |idx| instance_from_index(shape, k, idx)))
}

fn json_u64(v: &Json, what: &str) -> Result<u64, TreeError> {
    v.as_u64().ok_or_else(|| TreeError::BadJson(format!("{what} must be a positive integer")))
}

fn parse_table(v: &Json, d: usize, k: Val, out: &mut Vec<Val>) -> Result<(), TreeError> {
    // Function tables nest d deep: level j indexes the j-th argument.
    if d == 0 {
        let value = json_u64(v, "table entry")?;
        if value < 1 || value > k as u64 {
            return Err(TreeError::BadValue { value, k });
        }
        out.push(value as Val);
        return Ok(());
    }
    let arr = v
        .as_array()
        .ok_or_else(|| TreeError::BadJson("function table must be a nested array".into()))?;
    if arr.len() != k as usize {
        return Err(TreeError::BadJson(format!(
            "table dimension has {} entries, expected k={k}",
            arr.len()
        )));
    }
    for inner in arr {
        parse_table(inner, d - 1, k, out)?;
    }
    Ok(())
}

fn emit_table(flat: &[Val], d: usize, k: Val) -> Json {
    if d == 1 {
        return Json::Array(flat.iter().map(|&v| Json::from(v as u64)).collect());
    }
    let chunk = flat.len() / k as usize;
    Json::Array(flat.chunks(chunk).map(|c| emit_table(c, d - 1, k)).collect())
}

impl TepInstance {
    pub fn from_json(json: &Json) -> Result<Self, TreeError> {
        let obj =
            json.as_object().ok_or_else(|| TreeError::BadJson("expected an object".into()))?;
        let get = |key: &str| {
            obj.get(key).ok_or_else(|| TreeError::BadJson(format!("missing key \"{key}\"")))
        };
        let d = json_u64(get("d")?, "d")? as usize;
        let h = json_u64(get("h")?, "h")? as usize;
        let k = json_u64(get("k")?, "k")? as Val;
        let shape = TreeShape::new(d, h)?;
        let layout = VarLayout::new(shape, k)?;

        let mut functions = BTreeMap::new();
        if shape.internal_count() > 0 || obj.contains_key("functions") {
            let fobj = get("functions")?
                .as_object()
                .ok_or_else(|| TreeError::BadJson("\"functions\" must be an object".into()))?;
            for (key, table) in fobj {
                let node: NodeId = key
                    .parse()
                    .map_err(|_| TreeError::BadJson(format!("bad node key {key:?}")))?;
                shape.check_node(node)?;
                if shape.is_leaf(node) {
                    return Err(TreeError::NotInternal(node));
                }
                let mut flat = Vec::with_capacity(layout.table_size);
                parse_table(table, d, k, &mut flat)?;
                functions.insert(node, flat);
            }
        }
        let mut leaves = BTreeMap::new();
        let lobj = get("leaves")?
            .as_object()
            .ok_or_else(|| TreeError::BadJson("\"leaves\" must be an object".into()))?;
        for (key, value) in lobj {
            let node: NodeId =
                key.parse().map_err(|_| TreeError::BadJson(format!("bad leaf key {key:?}")))?;
            shape.check_node(node)?;
            if !shape.is_leaf(node) {
                return Err(TreeError::NotLeaf(node));
            }
            let value = json_u64(value, "leaf value")?;
            if value < 1 || value > k as u64 {
                return Err(TreeError::BadValue { value, k });
            }
            leaves.insert(node, value as Val);
        }
        Self::from_parts(shape, k, &functions, &leaves)
    }

    pub fn to_json(&self) -> Json {
        let layout = self.layout();
        let mut functions = serde_json::Map::new();
        for i in 1..self.shape.first_leaf() {
            let base = self.shape.leaf_count() + (i - 1) * layout.table_size;
            let flat = &self.vars[base..base + layout.table_size];
            functions.insert(i.to_string(), emit_table(flat, self.shape.d, self.k));
        }
        let mut leaves = serde_json::Map::new();
        for i in self.shape.first_leaf()..=self.shape.node_count() {
            leaves.insert(i.to_string(), Json::from(self.vars[layout.leaf_var(i)] as u64));
        }
        let mut obj = serde_json::Map::new();
        obj.insert("d".into(), Json::from(self.shape.d as u64));
        obj.insert("h".into(), Json::from(self.shape.h as u64));
        obj.insert("k".into(), Json::from(self.k));
        obj.insert("functions".into(), Json::Object(functions));
        obj.insert("leaves".into(), Json::Object(leaves));
        Json::Object(obj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: usize, h: usize) -> TreeShape {
        TreeShape::new(d, h).unwrap()
    }

    // Independent oracle for the d-ary numbering: lay nodes out level by level
    // and read children off the layout, without the closed-form formula.
    fn children_by_level_count(d: usize, h: usize, i: NodeId) -> Vec<NodeId> {
        let mut levels: Vec<Vec<NodeId>> = Vec::new();
        let mut next = 1;
        let mut size = 1;
        for _ in 0..h {
            levels.push((next..next + size).collect());
            next += size;
            size *= d;
        }
        for (depth, level) in levels.iter().enumerate() {
            if let Some(pos) = level.iter().position(|&n| n == i) {
                if depth + 1 == levels.len() {
                    return Vec::new();
                }
                return levels[depth + 1][pos * d..(pos + 1) * d].to_vec();
            }
        }
        panic!("node {i} not found");
    }

    #[test]
    fn children_binary() {
        let s = shape(2, 3);
        assert_eq!(s.children(1).unwrap(), vec![2, 3]);
        assert_eq!(s.children(4).unwrap(), Vec::<NodeId>::new());
        assert!(s.children(8).is_err());
    }

    #[test]
    fn children_ternary_matches_level_layout() {
        let s = shape(3, 2);
        assert_eq!(s.children(1).unwrap(), vec![2, 3, 4]);
        for d in 2..=4 {
            for h in 1..=3 {
                let s = shape(d, h);
                for i in 1..=s.node_count() {
                    assert_eq!(
                        s.children(i).unwrap(),
                        children_by_level_count(d, h, i),
                        "d={d} h={h} i={i}"
                    );
                }
            }
        }
    }

    #[test]
    fn parent_inverts_children() {
        for d in 2..=3 {
            for h in 1..=4 {
                let s = shape(d, h);
                for i in 1..=s.node_count() {
                    for c in s.children(i).unwrap() {
                        assert_eq!(s.parent(c), Some(i));
                    }
                }
            }
        }
    }

    #[test]
    fn heights() {
        let s = shape(2, 3);
        assert_eq!(s.height_of(1).unwrap(), 3);
        assert_eq!(s.height_of(2).unwrap(), 2);
        assert_eq!(s.height_of(7).unwrap(), 1);
        assert_eq!(s.nodes_at_height(2), vec![2, 3]);
        assert_eq!(s.nodes_at_height(1), vec![4, 5, 6, 7]);
    }

    fn h2_example() -> TepInstance {
        // f_1(1,1)=2, f_1(1,2)=1, f_1(2,1)=1, f_1(2,2)=2, l_2=1, l_3=2.
        let mut functions = BTreeMap::new();
        functions.insert(1, vec![2, 1, 1, 2]);
        let mut leaves = BTreeMap::new();
        leaves.insert(2, 1);
        leaves.insert(3, 2);
        TepInstance::from_parts(shape(2, 2), 2, &functions, &leaves).unwrap()
    }

    #[test]
    fn node_value_examples() {
        let inst = h2_example();
        assert_eq!(inst.node_value(2).unwrap(), 1);
        assert_eq!(inst.node_value(3).unwrap(), 2);
        assert_eq!(inst.node_value(1).unwrap(), 1); // f_1(1,2)
        assert_eq!(inst.eval_ft(), 1);
        assert!(inst.eval_bt());
    }

    #[test]
    fn constant_tables() {
        let s = shape(2, 3);
        let layout = VarLayout::new(s, 2).unwrap();
        let all_one = TepInstance::from_vars(s, 2, vec![1; layout.var_count]).unwrap();
        assert_eq!(all_one.eval_ft(), 1);
        // Constant-2 tables with arbitrary leaves evaluate to 2 at the root.
        let mut vars = vec![1; layout.var_count];
        for idx in s.leaf_count()..layout.var_count {
            vars[idx] = 2;
        }
        vars[0] = 2;
        let all_two = TepInstance::from_vars(s, 2, vars).unwrap();
        assert_eq!(all_two.eval_ft(), 2);
        assert!(!all_two.eval_bt());
    }

    #[test]
    fn h1_leaf_root() {
        let s = shape(2, 1);
        let inst = TepInstance::from_vars(s, 3, vec![1]).unwrap();
        assert!(inst.eval_bt());
        assert_eq!(inst.eval_ft(), 1);
    }

    #[test]
    fn var_count_formula_binary() {
        for h in 1..=4 {
            for k in 1..=3 {
                let layout = VarLayout::new(shape(2, h), k).unwrap();
                let expected =
                    ((1usize << (h - 1)) - 1) * (k as usize).pow(2) + (1usize << (h - 1));
                assert_eq!(layout.var_count, expected);
            }
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_instances(shape(2, 1), 2, 1 << 24).unwrap().count(), 2);
        assert_eq!(enumerate_instances(shape(2, 2), 2, 1 << 24).unwrap().count(), 64);
        assert_eq!(enumerate_instances(shape(2, 3), 2, 1 << 24).unwrap().count(), 65536);
        match enumerate_instances(shape(2, 3), 2, 100) {
            Err(TreeError::CapExceeded { count, cap }) => {
                assert_eq!(count, 65536);
                assert_eq!(cap, 100);
            }
            _ => panic!("expected cap error"),
        }
    }

    #[test]
    fn enumeration_order_and_index_roundtrip() {
        let s = shape(2, 2);
        let all: Vec<_> = enumerate_instances(s, 2, 1 << 24).unwrap().collect();
        assert_eq!(all[0].vars(), &[1, 1, 1, 1, 1, 1]);
        assert_eq!(all[1].vars(), &[1, 1, 1, 1, 1, 2]); // last variable fastest
        assert_eq!(all[63].vars(), &[2, 2, 2, 2, 2, 2]);
        for (idx, inst) in all.iter().enumerate() {
            assert_eq!(inst.index(), idx as u128);
            assert_eq!(&instance_from_index(s, 2, idx as u128), inst);
        }
    }

    #[test]
    fn unreachable_table_entries_do_not_matter() {
        // Exhaustive over all (2,2) instances: flipping a table entry that is
        // not at the correct child values never changes the evaluation.
        let s = shape(2, 2);
        let layout = VarLayout::new(s, 2).unwrap();
        for inst in enumerate_instances(s, 2, 1 << 24).unwrap() {
            let values = inst.node_values();
            let root = inst.eval_ft();
            for a in 1..=2 as Val {
                for b in 1..=2 as Val {
                    if (a, b) == (values[2], values[3]) {
                        continue;
                    }
                    let idx = layout.table_var(1, &[a, b]);
                    for v in 1..=2 as Val {
                        assert_eq!(inst.with_var(idx, v).eval_ft(), root);
                    }
                }
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let inst = h2_example();
        let json = inst.to_json();
        let text = serde_json::to_string(&json).unwrap();
        assert_eq!(TepInstance::from_json(&json).unwrap(), inst);
        // Canonical: parsing the emitted text and re-emitting is byte-identical.
        let reparsed: Json = serde_json::from_str(&text).unwrap();
        let again = serde_json::to_string(&TepInstance::from_json(&reparsed).unwrap().to_json())
            .unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn json_example_from_interface() {
        let text = r#"{"d":2,"h":2,"k":2,"functions":{"1":[[2,1],[1,2]]},"leaves":{"2":1,"3":2}}"#;
        let inst = TepInstance::from_json(&serde_json::from_str(text).unwrap()).unwrap();
        assert_eq!(inst, h2_example());
        assert_eq!(inst.table_entry(1, &[1, 2]).unwrap(), 1);
        assert_eq!(inst.table_entry(1, &[2, 1]).unwrap(), 1);
        assert_eq!(inst.leaf_value(3).unwrap(), 2);
    }
}
