//! End-to-end runs of the installed binary: exit code discipline, document
//! shape, byte-stable JSON, and the checkpointed minsize flow.

use std::path::Path;
use std::process::Command;

use serde_json::Value as Json;

fn run(args: &[&str]) -> (i32, String, String) {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pebbleworks"));
    cmd.args(args);
    for (key, val) in env {
        cmd.env(key, val);
    }
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().expect("no signal"),
        String::from_utf8(out.stdout).expect("utf8 stdout"),
        String::from_utf8(out.stderr).expect("utf8 stderr"),
    )
}

fn read_doc(path: &Path) -> Json {
    serde_json::from_str(&std::fs::read_to_string(path).expect("doc written"))
        .expect("doc parses")
}

#[test]
fn exit_codes_separate_no_from_dont_know() {
    let (code, _, err) = run(&["report", "nosuch"]);
    assert_eq!(code, 3, "unknown suite is an input error: {err}");
    assert!(err.contains("thrifty-lowerbound"), "error lists suites: {err}");

    let (code, out, _) = run(&["dag", "nice", "--d", "2", "--h", "3", "--c", "2"]);
    assert_eq!(code, 0, "pruned graph is nice: {out}");
    let (code, out, _) = run(&["dag", "nice", "--d", "2", "--h", "3", "--c", "2", "--full"]);
    assert_eq!(code, 1, "full graph fails a check, negatively: {out}");

    let (code, _, err) = run_env(
        &["pebble", "search", "--d", "3", "--h", "3", "--game", "fractional", "--c", "2"],
        &[("PEBBLEWORKS_CAP_MB", "1")],
    );
    assert_eq!(code, 2, "memory cap turns into a config cap: {err}");
    assert!(err.contains("cap"), "{err}");
}

#[test]
fn eval_enum_and_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["tep", "eval", "--h", "2", "--k", "2", "--index", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("root value 1"), "{out}");

    let (code, out, _) = run(&["tep", "enum", "--h", "2", "--k", "2"]);
    assert_eq!(code, 0);
    assert!(out.contains("64 instances"), "{out}");

    // Materialize, then feed one instance back through a file.
    let listing = dir.path().join("instances.json");
    let (code, _, _) =
        run(&["tep", "enum", "--h", "2", "--k", "2", "--out", listing.to_str().unwrap()]);
    assert_eq!(code, 0);
    let doc = read_doc(&listing);
    let instances = doc["result"]["instances"].as_array().unwrap();
    assert_eq!(instances.len(), 64);

    let one = dir.path().join("one.json");
    std::fs::write(&one, serde_json::to_string_pretty(&instances[63]).unwrap()).unwrap();
    let (code, out, _) = run(&["tep", "eval", "--instance", one.to_str().unwrap()]);
    assert_eq!(code, 0);
    // Instance 63 of (2,2): leaves 2,2 and all-2 tables, so the root is 2.
    assert!(out.contains("root value 2"), "{out}");
}

#[test]
fn build_check_simulate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.json");
    let (code, out, _) =
        run(&["bp", "build", "--h", "2", "--k", "2", "--out", prog.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("9 states"), "{out}");

    // Emitted bytes must re-render identically after a parse.
    let raw = std::fs::read_to_string(&prog).unwrap();
    let parsed: Json = serde_json::from_str(&raw).unwrap();
    let mut again = serde_json::to_string_pretty(&parsed).unwrap();
    again.push('\n');
    assert_eq!(raw, again, "canonical JSON round-trips byte-identically");

    // The embedded program is loadable by the library schema loader.
    let inner = parsed["result"]["program"].clone();
    let loaded = pebbleworks::bp::from_json(&inner).expect("program loads");
    assert_eq!(loaded.size(), 9);

    let (code, out, _) =
        run(&["bp", "check", "--program", prog.to_str().unwrap(), "--thrifty"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("solves: true"), "{out}");

    let (code, out, _) =
        run(&["bp", "simulate", "--program", prog.to_str().unwrap(), "--index", "63"]);
    assert_eq!(code, 0);
    assert!(out.contains("output 2"), "{out}");
}

#[test]
fn compiled_pebbling_program_checks_out() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("black.json");
    let (code, _, _) = run(&[
        "pebble", "strategy", "--d", "2", "--h", "2", "--game", "black", "--out",
        seq.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let prog = dir.path().join("compiled.json");
    let (code, out, _) = run(&[
        "bp", "build", "--h", "2", "--k", "2", "--pebbling", seq.to_str().unwrap(), "--out",
        prog.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");

    let (code, out, _) = run(&["bp", "check", "--program", prog.to_str().unwrap(), "--thrifty"]);
    assert_eq!(code, 0, "compiled program solves and is thrifty: {out}");
}

#[test]
fn minsize_checkpoint_stops_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("cp.json");
    let args = |cap: &'static str| {
        vec![
            "bp", "minsize", "--h", "2", "--k", "2", "--node-cap", cap, "--checkpoint",
            cp.to_str().unwrap(),
        ]
    };
    let (code, out, _) = run(&args("1500"));
    assert_eq!(code, 2, "{out}");
    let first = pebbleworks::minsize::checkpoint_from_json(
        &std::fs::read_to_string(&cp).unwrap(),
    )
    .unwrap();
    assert_eq!(first.exhausted_sizes, vec![1, 2, 3]);

    let (code, out, _) = run(&args("1500"));
    assert_eq!(code, 2, "{out}");
    let second = pebbleworks::minsize::checkpoint_from_json(
        &std::fs::read_to_string(&cp).unwrap(),
    )
    .unwrap();
    assert!(second.nodes_explored > first.nodes_explored);

    // Below the conjectured minimum the search certifies nothing better.
    let (code, out, _) = run(&["bp", "minsize", "--h", "1", "--k", "3"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("no solver of size <= 3"), "{out}");
}

#[test]
fn advice_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("enc.json");
    let (code, _, _) = run(&[
        "proof", "advice", "--h", "2", "--k", "2", "--index", "7", "--out",
        enc.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_doc(&enc);
    let advice = doc["result"]["advice"].as_str().unwrap().to_string();
    let r = doc["result"]["r"].as_u64().unwrap().to_string();
    assert_eq!(doc["result"]["length"].as_u64(), Some(4), "|Vars| - h = 6 - 2");

    let dec = dir.path().join("dec.json");
    let (code, _, _) = run(&[
        "proof", "advice", "--h", "2", "--k", "2", "--r", &r, "--advice", &advice, "--out",
        dec.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let back = read_doc(&dec);
    assert_eq!(back["result"]["decoded"], Json::Bool(true));

    let eval = dir.path().join("eval.json");
    let (code, _, _) = run(&[
        "tep", "eval", "--h", "2", "--k", "2", "--index", "7", "--out", eval.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let expect = read_doc(&eval);
    assert_eq!(back["result"]["instance"], expect["result"]["instance"]);
}

#[test]
fn feasibility_bound_gives_checked_negative() {
    let (code, out, _) = run(&[
        "pebble", "search", "--d", "2", "--h", "3", "--game", "fractional", "--c", "2",
        "--bound", "2",
    ]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("no complete pebbling"), "{out}");

    let (code, out, _) = run(&[
        "pebble", "search", "--d", "2", "--h", "3", "--game", "fractional", "--c", "2",
        "--bound", "5/2",
    ]);
    assert_eq!(code, 0, "{out}");
}

#[test]
fn report_documents_embed_version_and_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let (code, out, _) = run(&[
            "report", "minsize", "--seed", "5", "--out", a.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("PASS"), "{out}");
        bytes.push(std::fs::read(&a).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "same invocation, same seed, same bytes");
    let doc = read_doc(&a);
    assert_eq!(doc["tool_version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    let hash = doc["config_hash"].as_str().unwrap();
    assert!(hash.starts_with("fnv1a64:") && hash.len() == 8 + 16, "{hash}");
    assert_eq!(doc["result"]["passed"], Json::Bool(true));
}
