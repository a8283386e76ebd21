//! JSON reports, provenance and error output.

use std::path::Path;
use std::process::ExitCode;

use distinguish::rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn input(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<distinguish::Error> for Failure {
    fn from(e: distinguish::Error) -> Self {
        let code = match e.kind() {
            "numerical" => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

pub fn fail(f: Failure) -> ExitCode {
    let body = json!({ "error": { "kind": f.kind, "message": f.message, "exit_code": f.code } });
    eprintln!("{body}");
    ExitCode::from(f.code)
}

/// Reads a whole input file, mapping failures to an `io` error.
pub fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::input("io", format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::input("io", format!("cannot write {}: {e}", path.display())))
}

/// Hex SHA-256 over every input, each prefixed by its length.
pub fn inputs_hash(inputs: &[&[u8]]) -> String {
    let mut buf = Vec::new();
    for i in inputs {
        buf.extend_from_slice(&(i.len() as u64).to_le_bytes());
        buf.extend_from_slice(i);
    }
    rng::digest_hex(&buf)
}

/// Provenance keys followed by the fields of `payload`.
pub fn document(command: &str, seed: Option<u64>, hash: &str, payload: &impl Serialize) -> Result<Value, Failure> {
    let mut map = Map::new();
    map.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    map.insert("command".into(), json!(command));
    map.insert("seed".into(), json!(seed));
    map.insert("inputs_hash".into(), json!(hash));
    let body = serde_json::to_value(payload)
        .map_err(|e| Failure::input("internal", format!("cannot serialize report: {e}")))?;
    match body {
        Value::Object(fields) => {
            for (k, v) in fields {
                map.insert(k, v);
            }
        }
        other => {
            map.insert("result".into(), other);
        }
    }
    Ok(Value::Object(map))
}

/// Pretty-prints to stdout; a closed pipe is not an error.
pub fn print(doc: &Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}
