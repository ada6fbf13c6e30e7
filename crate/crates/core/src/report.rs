//! Named check suites: every headline quantity the library computes is
//! re-measured here and compared against its expected value, one criterion
//! per line. The command-line `report` subcommand and the acceptance test
//! both run these, so a regression shows up identically in either place.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bp::{
    check_solves, check_thrifty, depth, mutate, CheckConfig, Problem,
};
use crate::construct::build_thrifty_det;
use crate::dag::tree_dag;
use crate::minsize::{run_minsize_search, MinsizeLimits, MinsizeOutcome};
use crate::pebble::{fig2_strategy, q, verify_sequence};
use crate::proof::{
    decode_in_class, encode_in_class, partition_at, partition_by_supercritical,
    relaxed_bound_check, AdviceString, ProofError, SupercriticalClass,
};
use crate::reduction::{
    bottleneck_witness, build_g, build_gprime, check_nice, gprime_black_cost_formula,
    leftmost_path,
};
use crate::search::{fract_lower_bound, klawe_bw_bound, min_cost, SearchGame, SearchLimits};
use crate::tree::{TreeShape, Val, VarLayout};

use num::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown suite '{name}'; available: {}", available.join(", "))]
    UnknownSuite { name: String, available: Vec<&'static str> },
}

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub criteria: Vec<Criterion>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.criteria {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag}  {:2}. {}: {}\n", c.id, c.name, c.detail));
        }
        let good = self.criteria.iter().filter(|c| c.passed).count();
        out.push_str(&format!(
            "suite {}: {}/{} criteria passed\n",
            self.suite,
            good,
            self.criteria.len()
        ));
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "suite": self.suite,
            "passed": self.passed(),
            "criteria": self.criteria,
        })
    }
}

pub fn suites() -> &'static [&'static str] {
    &[
        "all",
        "construction",
        "pebbling-numbers",
        "dag-reduction",
        "thrifty-lowerbound",
        "minsize",
        "mutation",
    ]
}

fn criteria_of(suite: &str) -> Option<&'static [usize]> {
    Some(match suite {
        "all" => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        "construction" => &[1, 2, 8],
        "pebbling-numbers" => &[5, 7],
        "dag-reduction" => &[6],
        "thrifty-lowerbound" => &[3, 4],
        "minsize" => &[9],
        "mutation" => &[10],
        _ => return None,
    })
}

/// Run one named suite. The seed fixes the mutation campaign; everything
/// else is deterministic outright.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport, ReportError> {
    let ids = criteria_of(name).ok_or_else(|| ReportError::UnknownSuite {
        name: name.to_string(),
        available: suites().to_vec(),
    })?;
    let criteria = ids.iter().map(|&id| run_criterion(id, seed)).collect();
    Ok(SuiteReport { suite: name.to_string(), criteria })
}

/// Run a single numbered criterion. Ids follow the `all` suite, 1 through 10.
pub fn run_criterion(id: usize, seed: u64) -> Criterion {
    match id {
        1 => construction_size(),
        2 => construction_semantics(),
        3 => supercritical_partition(),
        4 => advice_roundtrip(),
        5 => pebbling_numbers(),
        6 => dag_reduction(),
        7 => bound_consistency(),
        8 => relaxed_model(),
        9 => minsize_exactness(),
        10 => mutation_detection(seed),
        _ => panic!("criteria run from 1 to 10, not {id}"),
    }
}

/// Accumulates measured notes; any failed expectation flips the verdict and
/// the note says which comparison broke.
struct Gauge {
    ok: bool,
    notes: Vec<String>,
}

impl Gauge {
    fn new() -> Self {
        Gauge { ok: true, notes: Vec::new() }
    }

    fn expect(&mut self, cond: bool, note: String) {
        if cond {
            self.notes.push(note);
        } else {
            self.ok = false;
            self.notes.push(format!("VIOLATED {note}"));
        }
    }

    fn fail(&mut self, note: String) {
        self.ok = false;
        self.notes.push(note);
    }

    fn done(self, id: usize, name: &'static str) -> Criterion {
        Criterion { id, name, passed: self.ok, detail: self.notes.join("; ") }
    }
}

fn construction_size() -> Criterion {
    let mut g = Gauge::new();
    let mut cases = 0usize;
    let mut all = true;
    for h in 1..=6usize {
        for k in 2..=5 as Val {
            cases += 1;
            match build_thrifty_det(h, k) {
                Ok(bp) => {
                    let want = (k as usize + 1).pow(h as u32);
                    if bp.size() != want {
                        all = false;
                        g.fail(format!("size({h},{k})={} wanted {want}", bp.size()));
                    }
                }
                Err(e) => {
                    all = false;
                    g.fail(format!("build({h},{k}) failed: {e}"));
                }
            }
        }
    }
    g.expect(all, format!("size = (k+1)^h at all {cases} grid points (h<=6, k in 2..=5)"));
    g.done(1, "construction-size")
}

fn construction_semantics() -> Criterion {
    let mut g = Gauge::new();
    let cfg = CheckConfig::default();
    for (h, k) in [(1usize, 2 as Val), (1, 3), (2, 2), (2, 3), (3, 2)] {
        let bp = match build_thrifty_det(h, k) {
            Ok(bp) => bp,
            Err(e) => {
                g.fail(format!("build({h},{k}) failed: {e}"));
                continue;
            }
        };
        let solves = check_solves(&bp, Problem::FT, &cfg);
        g.expect(
            solves.ok && !solves.sampled,
            format!("({h},{k}) solves exhaustively over {} inputs", solves.checked),
        );
        let thrifty = check_thrifty(&bp, &cfg);
        g.expect(thrifty.ok, format!("({h},{k}) thrifty"));
        match depth(&bp, &cfg) {
            Ok(d) => g.expect(d == 1 << h, format!("depth({h},{k})={d} = 2^h")),
            Err(e) => g.fail(format!("depth({h},{k}) failed: {e}")),
        }
    }
    g.done(2, "construction-semantics")
}

fn supercritical_partition() -> Criterion {
    let mut g = Gauge::new();
    for (h, k, want) in [(2usize, 2 as Val, 4u128), (2, 3, 9), (3, 2, 8)] {
        match build_thrifty_det(h, k)
            .map_err(ProofError::from)
            .and_then(|bp| partition_by_supercritical(&bp, 1 << 20))
        {
            Ok(part) => g.expect(
                part.class_count() as u128 >= want,
                format!("|R|({h},{k})={} >= k^h={want}", part.class_count()),
            ),
            Err(e) => g.fail(format!("partition({h},{k}) failed: {e}")),
        }
    }
    // Summing the class counts over query heights 2..h beats sum of k^l.
    match build_thrifty_det(3, 2) {
        Ok(bp) => {
            let mut total = 0usize;
            let mut parts = Vec::new();
            for level in 2..=3usize {
                match partition_at(&bp, level, 1 << 20) {
                    Ok(p) => {
                        total += p.class_count();
                        parts.push(format!("level {level}: {}", p.class_count()));
                    }
                    Err(e) => g.fail(format!("partition level {level} failed: {e}")),
                }
            }
            g.expect(
                total >= 12,
                format!("per-height counts at (3,2) [{}] sum {total} >= 12", parts.join(", ")),
            );
        }
        Err(e) => g.fail(format!("build(3,2) failed: {e}")),
    }
    g.done(3, "supercritical-partition")
}

fn advice_roundtrip_shape(h: usize, k: Val, g: &mut Gauge) -> Result<(), ProofError> {
    let bp = build_thrifty_det(h, k)?;
    let part = partition_by_supercritical(&bp, 1 << 20)?;
    let want_len = VarLayout::new(bp.shape, k)?.var_count - h;
    let mut round_trips = true;
    let mut injective = true;
    for (&r, indices) in &part.classes {
        let class = SupercriticalClass::new(&bp, r, indices);
        let advice: Vec<AdviceString> = (0..class.len())
            .into_par_iter()
            .map(|m| {
                let inst = &class.instances[m];
                let adv = encode_in_class(&bp, inst, &class)?;
                let back = decode_in_class(&bp, &adv, &class)?;
                let ok = adv.0.len() == want_len && back.as_ref() == Some(inst);
                Ok((ok, adv))
            })
            .collect::<Result<Vec<_>, ProofError>>()?
            .into_iter()
            .map(|(ok, adv)| {
                round_trips &= ok;
                adv
            })
            .collect();
        let distinct: BTreeSet<&AdviceString> = advice.iter().collect();
        injective &= distinct.len() == advice.len();
    }
    g.expect(
        round_trips,
        format!(
            "decode(encode(I))=I with advice length {want_len} for all {} inputs at ({h},{k})",
            part.total()
        ),
    );
    g.expect(injective, format!("encode injective within each of {} classes", part.class_count()));
    Ok(())
}

fn advice_roundtrip() -> Criterion {
    let mut g = Gauge::new();
    for (h, k) in [(2usize, 2 as Val), (3, 2)] {
        if let Err(e) = advice_roundtrip_shape(h, k, &mut g) {
            g.fail(format!("round-trip at ({h},{k}) failed: {e}"));
        }
    }
    g.done(4, "advice-roundtrip")
}

fn pebbling_numbers() -> Criterion {
    let mut g = Gauge::new();
    let limits = SearchLimits::default();
    let tree = |h: usize| tree_dag(TreeShape::new(2, h).expect("small shape"));

    for h in 1..=4usize {
        match min_cost(&tree(h), SearchGame::Black, &limits) {
            Ok((cost, _)) => g.expect(cost == q(h as i64, 1), format!("black(T^{h})={cost}")),
            Err(e) => g.fail(format!("black search T^{h} failed: {e}")),
        }
    }
    for h in 1..=3usize {
        let formula = q(h.div_ceil(2) as i64 + 1, 1);
        match min_cost(&tree(h), SearchGame::BlackWhite, &limits) {
            Ok((cost, _)) if h == 1 => g.expect(
                cost == q(1, 1),
                format!(
                    "bw(T^1)={cost}: single node, one placement; the formula \
                     ceil(h/2)+1={formula} only fits h>=2"
                ),
            ),
            Ok((cost, _)) => g.expect(cost == formula, format!("bw(T^{h})={cost} = ceil(h/2)+1")),
            Err(e) => g.fail(format!("bw search T^{h} failed: {e}")),
        }
    }
    match min_cost(&tree(2), SearchGame::FractionalGrid(2), &limits) {
        Ok((cost, _)) => g.expect(cost == q(2, 1), format!("halves(T^2)={cost}")),
        Err(e) => g.fail(format!("halves search T^2 failed: {e}")),
    }
    match min_cost(&tree(3), SearchGame::FractionalGrid(2), &limits) {
        Ok((cost, _)) => g.expect(cost == q(5, 2), format!("halves(T^3)={cost}")),
        Err(e) => g.fail(format!("halves search T^3 failed: {e}")),
    }
    match verify_sequence(&tree(3), &fig2_strategy()) {
        Ok(cost) => {
            g.expect(cost == q(5, 2), format!("fixture strategy verifies at cost {cost}"))
        }
        Err(e) => g.fail(format!("fixture strategy rejected: {e}")),
    }
    g.done(5, "pebbling-numbers")
}

fn dag_reduction() -> Criterion {
    let mut g = Gauge::new();
    let limits = SearchLimits::default();
    match build_g(2, 3, 3) {
        Ok(full) => g.expect(full.node_count() == 22, format!("G(2,3,3) has {} nodes", full.node_count())),
        Err(e) => g.fail(format!("G(2,3,3) build failed: {e}")),
    }
    for c in [2usize, 3] {
        match build_gprime(2, 3, c) {
            Ok(gp) => {
                let want = c * (2 - 1) + 1;
                let ok = (0..gp.node_count()).all(|idx| {
                    idx == gp.root()
                        || gp.is_source(idx)
                        || gp.children_of(idx).len() == want
                });
                g.expect(ok, format!("G'(2,3,{c}) internal non-root nodes have {want} children"));
            }
            Err(e) => g.fail(format!("G'(2,3,{c}) build failed: {e}")),
        }
    }
    match build_gprime(2, 3, 2) {
        Ok(gp) => {
            match min_cost(&gp, SearchGame::Black, &limits) {
                Ok((cost, _)) => {
                    let formula = gprime_black_cost_formula(2, 3, 2);
                    g.expect(
                        cost == q(formula as i64, 1),
                        format!("black(G'(2,3,2))={cost} = c[(d-1)(h-1)+1]={formula}"),
                    );
                }
                Err(e) => g.fail(format!("black search on G' failed: {e}")),
            }
            match check_nice(&gp, 0, &limits) {
                Ok(rep) => g.expect(rep.is_nice() && rep.exhaustive, "G'(2,3,2) is nice".into()),
                Err(e) => g.fail(format!("niceness check on G' failed: {e}")),
            }
        }
        Err(e) => g.fail(format!("G'(2,3,2) build failed: {e}")),
    }
    match build_g(2, 3, 2) {
        Ok(full) => match check_nice(&full, 0, &limits) {
            Ok(rep) => g.expect(
                !rep.is_nice(),
                format!(
                    "G(2,3,2) is not nice ({})",
                    rep.counterexample.unwrap_or_else(|| "no counterexample".into())
                ),
            ),
            Err(e) => g.fail(format!("niceness check on G failed: {e}")),
        },
        Err(e) => g.fail(format!("G(2,3,2) build failed: {e}")),
    }
    for c in 1..=3usize {
        let want = c * (2 - 1) * (3 - 1) + (c - 1);
        let sized = build_gprime(2, 3, c).ok().and_then(|gp| {
            let root = gp.id_of(gp.root());
            let path = leftmost_path(&gp, root).ok()?;
            let (s, paths) = bottleneck_witness(&gp, &path).ok()?;
            (paths.len() == s.len()).then_some(s.len())
        });
        match sized {
            Some(size) => g.expect(
                size == want,
                format!("bottleneck set of G'(2,3,{c}) has {size} = c(d-1)(h-1)+(c-1) disjoint paths"),
            ),
            None => g.fail(format!("bottleneck witness at c={c} failed")),
        }
    }
    g.done(6, "dag-reduction")
}

fn bound_consistency() -> Criterion {
    let mut g = Gauge::new();
    let limits = SearchLimits::default();
    let mut fract_ok = true;
    let mut measured = Vec::new();
    for d in 2..=3usize {
        for h in 1..=3usize {
            let dag = tree_dag(TreeShape::new(d, h).expect("small shape"));
            let lower = fract_lower_bound(d, h);
            for c in 1..=2u32 {
                match min_cost(&dag, SearchGame::FractionalGrid(c), &limits) {
                    Ok((cost, _)) => {
                        if cost < lower {
                            fract_ok = false;
                            g.fail(format!("grid(d={d},h={h},c={c})={cost} < bound {lower}"));
                        } else {
                            measured.push(format!("({d},{h},{c})={cost}"));
                        }
                    }
                    Err(e) => {
                        fract_ok = false;
                        g.fail(format!("grid search (d={d},h={h},c={c}) failed: {e}"));
                    }
                }
            }
        }
    }
    g.expect(
        fract_ok,
        format!("(d-1)h/2 - d/2 <= measured grid costs [{}]", measured.join(", ")),
    );
    for h in 1..=3usize {
        let dag = tree_dag(TreeShape::new(2, h).expect("small shape"));
        let black = min_cost(&dag, SearchGame::Black, &limits);
        let bw = min_cost(&dag, SearchGame::BlackWhite, &limits);
        match (black, bw) {
            (Ok((b, _)), Ok((w, _))) => {
                let b = b.to_integer().to_u64().unwrap_or(0);
                let bound = klawe_bw_bound(b);
                g.expect(
                    q(bound as i64, 1) <= w,
                    format!("floor(black/2)+1={bound} <= bw(T^{h})={w}"),
                );
            }
            (b, w) => g.fail(format!("searches on T^{h} failed: {b:?} / {w:?}")),
        }
    }
    g.done(7, "bound-consistency")
}

fn relaxed_model() -> Criterion {
    let mut g = Gauge::new();
    let cfg = CheckConfig::default();
    for (h, k) in [(1usize, 2 as Val), (2, 2), (2, 3), (3, 2)] {
        match build_thrifty_det(h, k) {
            Ok(bp) => match relaxed_bound_check(&bp, &cfg) {
                Ok(rep) => {
                    g.expect(
                        (rep.pi, rep.w) == (1, 0),
                        format!("(pi,w)({h},{k})=({},{})", rep.pi, rep.w),
                    );
                    g.expect(
                        rep.ok(),
                        format!("size {} >= k^h/pi^(h-2) and k^h/pi^w at ({h},{k})", rep.size),
                    );
                }
                Err(e) => g.fail(format!("bound check ({h},{k}) failed: {e}")),
            },
            Err(e) => g.fail(format!("build({h},{k}) failed: {e}")),
        }
    }
    g.done(8, "relaxed-model")
}

fn minsize_exactness() -> Criterion {
    let mut g = Gauge::new();
    for k in 2..=3 as Val {
        let below = run_minsize_search(1, k, k as usize, &MinsizeLimits::default());
        g.expect(
            matches!(below, Ok(MinsizeOutcome::ExhaustedNoneBetter { .. })),
            format!("no solver of size <= {k} at h=1,k={k}"),
        );
        let exact = run_minsize_search(1, k, k as usize + 1, &MinsizeLimits::default());
        match exact {
            Ok(MinsizeOutcome::Found(bp)) => g.expect(
                bp.size() == k as usize + 1,
                format!("minimum at h=1,k={k} certified as k+1={}", k + 1),
            ),
            other => g.fail(format!("size-(k+1) search at h=1,k={k} returned {other:?}")),
        }
    }
    g.notes.push(
        "the open (2,2) sub-9-state run is checkpointed: `pebbleworks bp minsize --h 2 --k 2`"
            .into(),
    );
    g.done(9, "minsize-exactness")
}

fn mutation_detection(seed: u64) -> Criterion {
    let mut g = Gauge::new();
    match build_thrifty_det(2, 2) {
        Ok(bp) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mutants: Vec<_> = (0..1000).map(|_| mutate(&bp, &mut rng)).collect();
            let cfg = CheckConfig::default();
            let caught = mutants
                .par_iter()
                .filter(|m| !check_solves(m, Problem::FT, &cfg).ok || !check_thrifty(m, &cfg).ok)
                .count();
            g.expect(
                caught >= 990,
                format!("{caught}/1000 seeded single-defect mutants detected (seed {seed})"),
            );
        }
        Err(e) => g.fail(format!("build(2,2) failed: {e}")),
    }
    g.done(10, "mutation-detection")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_lists_the_rest() {
        let err = run_suite("speling", 0).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("pebbling-numbers") && text.contains("thrifty-lowerbound"));
    }

    #[test]
    fn every_criterion_is_in_some_named_suite() {
        let mut seen = BTreeSet::new();
        for &suite in suites().iter().filter(|&&s| s != "all") {
            seen.extend(criteria_of(suite).unwrap());
        }
        assert_eq!(seen, (1..=10).collect());
        assert_eq!(criteria_of("all").unwrap().len(), 10);
    }

    #[test]
    fn minsize_suite_passes_and_renders() {
        let report = run_suite("minsize", 0).unwrap();
        assert!(report.passed(), "{}", report.render_text());
        let text = report.render_text();
        assert!(text.contains("PASS   9. minsize-exactness"));
        assert!(text.contains("suite minsize: 1/1"));
    }

    #[test]
    fn mutation_suite_passes() {
        let report = run_suite("mutation", 0).unwrap();
        assert!(report.passed(), "{}", report.render_text());
    }

    #[test]
    fn report_json_is_stable_under_reload() {
        let report = run_suite("minsize", 0).unwrap();
        let text = serde_json::to_string_pretty(&report.to_json()).unwrap();
        let reloaded: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string_pretty(&reloaded).unwrap(), text);
    }
}
