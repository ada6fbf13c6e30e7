//! Workbench for the tree evaluation problem: balanced-tree instances and their
//! direct evaluator, k-way branching programs (construction, simulation, semantic
//! checks), black / black-white / fractional pebbling with exact rationals,
//! optimal-cost pebbling search, the G/G' DAG reductions with Klawe niceness
//! checks, and the critical-state / advice-encoding lower-bound machinery run as
//! empirical checks at desk scale.

pub mod bp;
pub mod construct;
pub mod dag;
pub mod minsize;
pub mod pebble;
pub mod proof;
pub mod reduction;
pub mod report;
pub mod search;
pub mod tree;
