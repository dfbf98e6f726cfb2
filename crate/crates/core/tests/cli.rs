use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_monoid-embed"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn catalog_lists_counts() {
    let out = run(&["catalog"]);
    assert!(out.status.success());
    let v = json(&out);
    let find = |n: &str| {
        v["lattices"]
            .as_array()
            .unwrap()
            .iter()
            .find(|x| x["name"] == n)
            .cloned()
            .unwrap()
    };
    assert_eq!(find("M3")["elements"], 5);
    assert_eq!(find("M3")["ideals"], 5);
    assert_eq!(find("chain4")["ideals"], 4);
    assert_eq!(find("boolean2")["ideals"], 4);
    assert_eq!(v["lattices"].as_array().unwrap().len(), 8);
}

#[test]
fn verify_chain2_exhaustive() {
    let out = run(&["verify", "--lattice", "chain2", "--depth", "2", "--exhaustive-independence"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["summary"]["status"], "pass");
    for c in v["checks"].as_array().unwrap() {
        for key in ["name", "status", "counts", "witnesses", "millis"] {
            assert!(c.get(key).is_some(), "{key} missing from {c}");
        }
    }
}

#[test]
fn report_file_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run(&["verify", "--lattice", "chain3", "--seed", "5", "--trials", "200", "--report", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let e1 = run(&["embed", "--lattice", "chain2"]);
    let e2 = run(&["embed", "--lattice", "chain2"]);
    assert_eq!(e1.stdout, e2.stdout);
    let v = json(&e1);
    assert_eq!(v["ideals"].as_array().unwrap().len(), 2);
    assert_eq!(v["ideals"][0]["fragment_size"], 1);
}

#[test]
fn embed_m3_distinct_s_sets() {
    let v = json(&run(&["embed", "--lattice", "M3", "--depth", "2"]));
    assert_eq!(v["ideals"].as_array().unwrap().len(), 5);
    assert_eq!(v["distinct_s_sets"], true);
}

#[test]
fn lattice_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.json");
    std::fs::write(
        &p,
        r#"{"elements": ["0", "x", "y", "1"], "covers": [["0","x"],["0","y"],["x","1"],["y","1"]]}"#,
    )
    .unwrap();
    let out = run(&["verify", "--lattice", p.to_str().unwrap(), "--trials", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run(&["verify", "--lattice", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let not_lattice = dir.path().join("v.json");
    std::fs::write(&not_lattice, r#"{"elements": ["a", "b"], "leq": []}"#).unwrap();
    assert_eq!(run(&["verify", "--lattice", not_lattice.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--lattice", "no-such-lattice"]).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_3() {
    assert_eq!(run(&["verify", "--lattice", "M3", "--kappa", "5"]).status.code(), Some(3));
    assert_eq!(run(&["verify", "--lattice", "M3", "--depth", "0"]).status.code(), Some(3));
    // 2^m too large for an explicit ground set: refused, not sampled
    let out = run(&["oracle-compare", "--lattice", "M3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ground"));
}

#[test]
fn oracle_compare_chain2() {
    for depth in ["2", "3"] {
        let out = run(&["oracle-compare", "--lattice", "chain2", "--depth", depth]);
        assert_eq!(out.status.code(), Some(0));
    }
    let v = json(&run(&["oracle-compare", "--lattice", "chain2", "--depth", "2", "--root-scheme", "complementary"]));
    assert_eq!(v["checks"][0]["counts"]["points"], 8);
}

#[test]
fn complementary_root_scheme_is_reported_as_failing() {
    let out = run(&["verify", "--lattice", "M3", "--depth", "2", "--root-scheme", "complementary", "--trials", "300"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["summary"]["status"], "fail");
}
