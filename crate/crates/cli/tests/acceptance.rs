//! Acceptance suite: one PASS or FAIL line per criterion.
//!
//! Tolerances are exact unless stated; time budgets are pinned below.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::json;
use smolsh::symbolic::Node;
use smolsh::{run_symbolic, SymbolicConfig, Trace};
use smolsh_cli::harness::{self, RunResult};

const EXAMPLES_BUDGET: Duration = Duration::from_secs(1);
const NEGATION_BUDGET: Duration = Duration::from_secs(10);
const SCHEDULER_BUDGET: Duration = Duration::from_secs(1);
const CORPUS_BUDGET: Duration = Duration::from_secs(60);
const NEGATION_CASES: u32 = 200;
const ARITH_CASES: u32 = 10_000;
const SPLIT_CASES: u32 = 5_000;
const MIN_CORPUS: usize = 150;
const MIN_FREE_SUBSET: usize = 60;
const MAX_DIVERGENCES: usize = 5;
const SCHEDULER_FUEL: usize = 5_000;
/// Generous fuel for whole corpus scripts run symbolically.
const CORPUS_FUEL: usize = 1_000_000;
const REFERENCE_SHELL: &str = "/usr/bin/dash";

type Outcome = Result<String, String>;
type Check = Box<dyn Fn() -> Outcome>;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn shell() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_smolsh"))
}

fn sym(src: &str, cfg: &SymbolicConfig) -> Trace {
    run_symbolic(src.as_bytes(), cfg)
}

fn fuel(n: usize) -> SymbolicConfig {
    SymbolicConfig { fuel: n, ..Default::default() }
}

/// Run `smolsh -c src` in a scratch directory populated with `files`.
fn system(src: &str, files: &[&str]) -> Result<(String, i32), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for f in files {
        std::fs::write(dir.path().join(f), "").map_err(|e| e.to_string())?;
    }
    let out = Command::new(shell())
        .arg("-c")
        .arg(src)
        .current_dir(dir.path())
        .env_clear()
        .env("PATH", "/usr/bin:/bin")
        .env("LC_ALL", "C")
        .stdin(Stdio::null())
        .stderr(Stdio::null())
        .output()
        .map_err(|e| e.to_string())?;
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), out.status.code().unwrap_or(-1)))
}

fn expect_eq(what: &str, got: &str, want: &str) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: expected {want:?}, got {got:?}"))
    }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let r = f()?;
    let t = start.elapsed();
    if t > budget {
        return Err(format!("took {t:.2?}, budget {budget:?}"));
    }
    Ok(format!("{r} in {t:.2?}"))
}

// ---------------------------------------------------------------------------

const AP_FILES: [&str; 6] = ["ap", "app", "appall", "apparition", "appendix", "applejack"];

fn examples_fs() -> Node {
    let files = |names: &[&str]| -> serde_json::Value {
        json!({ "dir": names.iter().map(|n| (n.to_string(), json!({"file": ""}))).collect::<serde_json::Map<_, _>>() })
    };
    let spec = json!({ "dir": { "abc": files(&["a", "b", "c"]), "glob": files(&AP_FILES) } });
    Node::from_spec(&spec).expect("fixture tree")
}

fn expansion_examples() -> Outcome {
    let cfg = SymbolicConfig {
        fs: Some(examples_fs()),
        passwd: BTreeMap::from([(b"root".to_vec(), b"/var/root".to_vec())]),
        fuel: 100_000,
        ..Default::default()
    };
    let transcripts: &[(&str, &str)] = &[
        ("echo ~root", "/var/root\n"),
        ("usr=root; echo ~$usr", "~root\n"),
        ("cd /abc; x=$(ls); echo $x,${#x},${x#*[ab]},${x##*[ab]}.", "a b c,5, b c, c.\n"),
        ("y=42 x=5; echo $((y += $x)); echo $((y)) $y", "47\n47 47\n"),
        ("cd /abc; ls", "a\nb\nc\n"),
        ("cd /abc; x=\"a b\"; ls $x", "a\nb\n"),
        ("cd /glob; echo a*", "ap app appall apparition appendix applejack\n"),
        ("cd /glob; echo ap?", "app\n"),
        ("cd /glob; echo appa*", "appall apparition\n"),
        ("cd /glob; echo ap[=p=]*a*", "appall apparition applejack\n"),
        ("cd /glob; echo \"a*\"", "a*\n"),
    ];
    let mut n = 0;
    for (src, want) in transcripts {
        let t = sym(src, &cfg);
        expect_eq(src, &t.final_state.stdout, want)?;
        n += 1;
    }
    // The quoted operand names one missing file.
    let t = sym("cd /abc; x=\"a b\"; ls \"$x\"", &cfg);
    if !(t.final_state.stdout.is_empty() && t.final_state.status != 0 && t.final_state.stderr.contains("a b")) {
        return Err(format!("ls \"$x\": expected one failing operand, got {:?}", t.final_state));
    }
    n += 1;
    // The same transcripts against real files, except the passwd-backed tilde.
    for (src, want) in &transcripts[1..] {
        let (dir_files, body): (&[&str], &str) = match src.split_once("; ") {
            Some(("cd /abc", rest)) => (&["a", "b", "c"], rest),
            Some(("cd /glob", rest)) => (&AP_FILES, rest),
            _ => (&[], src),
        };
        let (out, _) = system(body, dir_files)?;
        expect_eq(&format!("system: {body}"), &out, want)?;
        n += 1;
    }
    Ok(format!("{n} transcripts exact"))
}

fn negation() -> Outcome {
    oracles::check_negation(NEGATION_CASES).map(|n| format!("{n} scripts"))
}

fn assignment_status() -> Outcome {
    let mut checks = 0;
    for (src, want) in [("x=$(exit 5); echo $?", "5\n"), ("x=hi; echo $?", "0\n")] {
        let t = sym(src, &fuel(10_000));
        expect_eq(src, &t.final_state.stdout, want)?;
        if !t.steps.iter().any(|s| s.rule == "CmdAssignDoneNoCmd") {
            return Err(format!("{src}: rule CmdAssignDoneNoCmd not taken"));
        }
        let (out, _) = system(src, &[])?;
        expect_eq(&format!("system: {src}"), &out, want)?;
        checks += 2;
    }
    Ok(format!("{checks} runs"))
}

fn lexical_control() -> Outcome {
    let script = "f() { break; echo hi; }; while true; do f; break; done; echo end";
    let nonlexical = format!("set -o nonlexicalctrl; {script}");
    for (src, want) in [(script, "hi\nend\n"), (nonlexical.as_str(), "end\n")] {
        let t = sym(src, &fuel(10_000));
        expect_eq(src, &t.final_state.stdout, want)?;
        let (out, _) = system(src, &[])?;
        expect_eq(&format!("system: {src}"), &out, want)?;
    }
    Ok("both modes, symbolic and system".into())
}

fn getopts() -> Outcome {
    let src = "set -- -ab hi -c hello\n\
               getopts ab:c: opt; echo \"$? $opt $OPTIND\"\n\
               getopts ab:c: opt; echo \"$? $opt $OPTARG $OPTIND\"\n\
               getopts ab:c: opt; echo \"$? $opt $OPTARG $OPTIND\"\n\
               getopts ab:c: opt; echo $?\n";
    let want = "0 a 2\n0 b hi 3\n0 c hello 5\n1\n";
    let t = sym(src, &fuel(20_000));
    expect_eq("symbolic", &t.final_state.stdout, want)?;
    let (out, _) = system(src, &[])?;
    expect_eq("system", &out, want)?;
    Ok("four calls exact".into())
}

fn scheduler() -> Outcome {
    let cfg = fuel(SCHEDULER_FUEL);
    let t = timed(SCHEDULER_BUDGET, || {
        let t = sym("while true; do echo 5; done | true", &cfg);
        if t.final_state.fuel_exhausted {
            return Err("writer into true: fuel exhausted".into());
        }
        Ok(format!("into true: {} steps", t.steps.len()))
    })?;
    let r = timed(SCHEDULER_BUDGET, || {
        let t = sym("while true; do echo 5; done | { read x; echo $((x+42)); }", &cfg);
        if t.final_state.fuel_exhausted {
            return Err("writer into reader: fuel exhausted".into());
        }
        expect_eq("writer into reader", &t.final_state.stdout, "47\n")?;
        Ok(format!("into reader: {} steps", t.steps.len()))
    })?;
    Ok(format!("{t}; {r}"))
}

fn corpus() -> Outcome {
    let start = Instant::now();
    let cases = harness::discover(&[corpus_dir()]).map_err(|e| e.to_string())?;
    if cases.len() < MIN_CORPUS {
        return Err(format!("{} tests, need {MIN_CORPUS}", cases.len()));
    }
    let results = harness::run_all(&shell(), &cases);
    let failed: Vec<&str> =
        cases.iter().zip(&results).filter(|(_, (v, _))| !v.is_pass()).map(|(c, _)| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(format!("{} of {} failed: {}", failed.len(), cases.len(), failed.join(", ")));
    }
    if !Path::new(REFERENCE_SHELL).exists() {
        return Err(format!("reference shell {REFERENCE_SHELL} not installed"));
    }
    let notes = corpus_dir().join("DIVERGENCES");
    let documented = harness::documented_divergences(&notes);
    let text = std::fs::read_to_string(&notes).unwrap_or_default();
    for name in &documented {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(name.as_str())).unwrap_or_default();
        if line.split_whitespace().count() < 4 {
            return Err(format!("divergence {name} lacks a justification"));
        }
    }
    let divs = harness::diff_shells(&shell(), Path::new(REFERENCE_SHELL), &cases);
    let undocumented: Vec<&str> =
        divs.iter().filter(|d| !documented.contains(&d.name)).map(|d| d.name.as_str()).collect();
    if !undocumented.is_empty() {
        return Err(format!("undocumented divergences: {}", undocumented.join(", ")));
    }
    if divs.len() > MAX_DIVERGENCES {
        return Err(format!("{} divergences, limit {MAX_DIVERGENCES}", divs.len()));
    }
    let t = start.elapsed();
    if t > CORPUS_BUDGET {
        return Err(format!("took {t:.2?}, budget {CORPUS_BUDGET:?}"));
    }
    Ok(format!("{} tests pass; {} documented divergences from dash; {t:.2?}", cases.len(), divs.len()))
}

fn free_subset() -> Result<Vec<String>, String> {
    let list = std::fs::read_to_string(corpus_dir().join("symbolic.list")).map_err(|e| e.to_string())?;
    Ok(list.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}

fn equivalence() -> Outcome {
    let names = free_subset()?;
    if names.len() < MIN_FREE_SUBSET {
        return Err(format!("{} scripts, need {MIN_FREE_SUBSET}", names.len()));
    }
    let cfg = fuel(CORPUS_FUEL);
    for name in &names {
        let path = corpus_dir().join(format!("{name}.test"));
        let src = std::fs::read(&path).map_err(|e| format!("{name}: {e}"))?;
        let t = run_symbolic(&src, &cfg);
        if t.final_state.fuel_exhausted {
            return Err(format!("{name}: symbolic fuel exhausted"));
        }
        let (stdout, status) = match harness::run_script(&shell(), &path).map_err(|e| e.to_string())? {
            RunResult::Finished { stdout, status } => (stdout, status),
            RunResult::Timeout => return Err(format!("{name}: system run timed out")),
        };
        if t.final_state.stdout.as_bytes() != stdout.as_slice() || t.final_state.status as i32 != status {
            return Err(format!(
                "{name}: symbolic ({:?}, {}) vs system ({:?}, {status})",
                t.final_state.stdout,
                t.final_state.status,
                String::from_utf8_lossy(&stdout)
            ));
        }
    }
    Ok(format!("{} scripts agree", names.len()))
}

fn oracle_suites() -> Outcome {
    let a = oracles::check_arith(ARITH_CASES)?;
    let p = oracles::check_patterns()?;
    let s = oracles::check_split(SPLIT_CASES)?;
    Ok(format!("arith {a} trees, patterns {p} pairs, split {s} cases"))
}

fn determinism() -> Outcome {
    let cases = harness::discover(&[corpus_dir()]).map_err(|e| e.to_string())?;
    let cfg = fuel(CORPUS_FUEL);
    for c in &cases {
        let src = std::fs::read(&c.script).map_err(|e| e.to_string())?;
        if run_symbolic(&src, &cfg).to_json_string() != run_symbolic(&src, &cfg).to_json_string() {
            return Err(format!("{}: traces differ", c.name));
        }
    }
    Ok(format!("{} scripts byte-identical", cases.len()))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("1 expansion examples", Box::new(|| timed(EXAMPLES_BUDGET, expansion_examples))),
        ("2 negation", Box::new(|| timed(NEGATION_BUDGET, negation))),
        ("3 assignment-only status", Box::new(assignment_status)),
        ("4 lexical control", Box::new(lexical_control)),
        ("5 getopts", Box::new(getopts)),
        ("6 scheduler", Box::new(scheduler)),
        ("7 corpus conformance", Box::new(corpus)),
        ("8 symbolic/system equivalence", Box::new(equivalence)),
        ("9 oracle suites", Box::new(oracle_suites)),
        ("10 determinism", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failures);
    std::process::exit(i32::from(failures > 0));
}
