//! Step traces of a symbolic run, serialized as JSON.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

pub const TRACE_VERSION: u64 = 1;

/// One recorded step of the root process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub n: usize,
    /// `"expand"` or `"eval"`.
    pub phase: &'static str,
    pub rule: String,
    /// The command before the step, rendered as shell text.
    pub term: String,
    /// Variables changed by the step; `None` means unset.
    pub env_delta: BTreeMap<String, Option<String>>,
    /// Terminal output written during the step.
    pub stdout: String,
    pub stderr: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalState {
    pub status: u8,
    pub stdout: String,
    pub stderr: String,
    pub fuel_exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub source: String,
    pub steps: Vec<StepRecord>,
    pub final_state: FinalState,
}

impl StepRecord {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("n".into(), json!(self.n));
        m.insert("phase".into(), json!(self.phase));
        m.insert("rule".into(), json!(self.rule));
        m.insert("term".into(), json!(self.term));
        if !self.env_delta.is_empty() {
            let d: Map<String, Value> = self
                .env_delta
                .iter()
                .map(|(k, v)| (k.clone(), v.as_ref().map_or(Value::Null, |s| json!(s))))
                .collect();
            m.insert("env_delta".into(), Value::Object(d));
        }
        m.insert("stdout".into(), json!(self.stdout));
        m.insert("stderr".into(), json!(self.stderr));
        Value::Object(m)
    }
}

impl Trace {
    pub fn to_json(&self) -> Value {
        json!({
            "version": TRACE_VERSION,
            "source": self.source,
            "steps": self.steps.iter().map(StepRecord::to_json).collect::<Vec<_>>(),
            "final": {
                "status": self.final_state.status,
                "stdout": self.final_state.stdout,
                "stderr": self.final_state.stderr,
                "fuel_exhausted": self.final_state.fuel_exhausted,
            }
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("trace values serialize")
    }
}

/// The JSON schema traces conform to.
pub const TRACE_SCHEMA: &str = include_str!("../schema/trace.schema.json");

pub fn lossy(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_delta_is_omitted() {
        let r = StepRecord {
            n: 0,
            phase: "eval",
            rule: "R".into(),
            term: "t".into(),
            env_delta: BTreeMap::new(),
            stdout: String::new(),
            stderr: String::new(),
        };
        let v = r.to_json();
        assert!(v.get("env_delta").is_none());
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["n", "phase", "rule", "term", "stdout", "stderr"]);
    }

    #[test]
    fn schema_is_json() {
        let v: Value = serde_json::from_str(TRACE_SCHEMA).unwrap();
        assert_eq!(v["type"], "object");
    }
}
