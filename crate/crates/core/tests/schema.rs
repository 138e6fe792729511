//! Every symbolic trace conforms to the published trace schema.

use std::path::PathBuf;

use serde_json::Value;
use smolsh::trace::TRACE_SCHEMA;
use smolsh::{run_symbolic, SymbolicConfig};

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(TRACE_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn check(v: &jsonschema::Validator, name: &str, src: &[u8], fuel: usize) {
    let trace = run_symbolic(src, &SymbolicConfig { fuel, ..Default::default() });
    let json: Value = serde_json::from_str(&trace.to_json_string()).unwrap();
    let errors: Vec<String> = v.iter_errors(&json).map(|e| format!("{}: {e}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

#[test]
fn corpus_traces_match_schema() {
    let v = validator();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/corpus");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "test") {
            check(&v, &p.display().to_string(), &std::fs::read(&p).unwrap(), 5_000);
            n += 1;
        }
    }
    assert!(n >= 150);
}

#[test]
fn edge_traces_match_schema() {
    let v = validator();
    for (src, fuel) in [("", 10), ("if", 10), ("while true; do :; done", 50), ("x=1; unset x; echo $x >&2", 100)] {
        check(&v, src, src.as_bytes(), fuel);
    }
}

#[test]
fn schema_rejects_malformed_traces() {
    let v = validator();
    assert!(!v.is_valid(&serde_json::json!({"version": 1})));
    assert!(!v.is_valid(&serde_json::json!({"version": 2, "source": "", "steps": [],
        "final": {"status": 0, "stdout": "", "stderr": "", "fuel_exhausted": false}})));
}
