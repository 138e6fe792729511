//! Run a program symbolically and print its step trace as JSON.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use serde_json::Value;
use smolsh::symbolic::Node;
use smolsh::{run_symbolic, Bytes, SymbolicConfig, DEFAULT_FUEL};

#[derive(Debug, Parser)]
#[command(name = "smolsh-stepper", about = "Step a shell program symbolically and print its trace")]
struct Args {
    /// Program text to run.
    #[arg(long = "cmd", conflicts_with = "script")]
    cmd: Option<String>,
    /// Script file to run.
    script: Option<PathBuf>,
    /// Environment binding, repeatable.
    #[arg(long = "env", value_name = "K=V")]
    env: Vec<String>,
    /// Filesystem spec: a JSON file, or inline JSON starting with `{`.
    #[arg(long = "fs")]
    fs: Option<String>,
    /// Passwd map from user name to home directory, as JSON.
    #[arg(long = "passwd")]
    passwd: Option<String>,
    /// Data on the root process's stdin.
    #[arg(long = "stdin")]
    stdin: Option<String>,
    /// Maximum number of scheduler steps.
    #[arg(long = "fuel", default_value_t = DEFAULT_FUEL)]
    fuel: usize,
}

fn load_json(arg: &str) -> Result<Value, String> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| format!("{arg}: {e}"))?
    };
    serde_json::from_str(&text).map_err(|e| format!("{arg}: {e}"))
}

fn fail(msg: &str) -> ! {
    eprintln!("smolsh-stepper: {msg}");
    std::process::exit(2);
}

fn main() {
    let args = Args::parse();
    let source: Bytes = match (&args.cmd, &args.script) {
        (Some(c), _) => c.as_bytes().to_vec(),
        (None, Some(p)) => std::fs::read(p).unwrap_or_else(|e| fail(&format!("{}: {e}", p.display()))),
        (None, None) => fail("either --cmd or a script file is required"),
    };
    let mut env = Vec::new();
    for kv in &args.env {
        let (k, v) = kv.split_once('=').unwrap_or_else(|| fail(&format!("--env {kv}: expected K=V")));
        env.push((k.as_bytes().to_vec(), v.as_bytes().to_vec()));
    }
    let fs = args.fs.as_deref().map(|a| {
        let v = load_json(a).unwrap_or_else(|e| fail(&e));
        Node::from_spec(&v).unwrap_or_else(|e| fail(&e.to_string()))
    });
    let mut passwd = BTreeMap::new();
    if let Some(a) = &args.passwd {
        let v = load_json(a).unwrap_or_else(|e| fail(&e));
        let obj = v.as_object().unwrap_or_else(|| fail("--passwd must be a JSON object"));
        for (user, home) in obj {
            let home = home.as_str().unwrap_or_else(|| fail("--passwd values must be strings"));
            passwd.insert(user.as_bytes().to_vec(), home.as_bytes().to_vec());
        }
    }
    let cfg = SymbolicConfig {
        env,
        fs,
        passwd,
        stdin: args.stdin.unwrap_or_default().into_bytes(),
        fuel: args.fuel,
    };
    let trace = run_symbolic(&source, &cfg);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", trace.to_json_string());
    let parse_failed = trace.steps.len() == 1 && trace.steps[0].rule == "ParseError";
    std::process::exit(if parse_failed { 2 } else { 0 });
}
