//! The conformance harness: runs `.test` scripts under a shell and compares
//! stdout and exit status with the expected fixtures.
//!
//! A test `name.test` expects its stdout in `name.test.out` and its exit
//! status in `name.test.ec` (a missing `.ec` means 0). A test without a
//! `.out` fixture is broken and excluded from the verdict.

use std::io::{Read, Seek};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use similar::TextDiff;
use thiserror::Error;

pub const TIMEOUT: Duration = Duration::from_secs(10);
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestCase {
    pub name: String,
    pub script: PathBuf,
    pub expected_out: Option<Vec<u8>>,
    pub expected_ec: i32,
}

/// What one shell did with one script.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunResult {
    Finished { stdout: Vec<u8>, status: i32 },
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Broken,
    Timeout,
    Stdout(String),
    Status { expected: i32, actual: i32 },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        *self == Verdict::Pass
    }

    /// The report line, followed by a diff when stdout differs.
    pub fn report(&self, name: &str) -> String {
        match self {
            Verdict::Pass => format!("PASS {name}"),
            Verdict::Broken => format!("BROKEN {name} (missing .out fixture)"),
            Verdict::Timeout => format!("FAIL {name} (timeout)"),
            Verdict::Stdout(diff) => format!("FAIL {name} (stdout)\n{diff}"),
            Verdict::Status { expected, actual } => format!("FAIL {name} (status: expected {expected}, got {actual})"),
        }
    }
}

fn read_opt(p: &Path) -> Result<Option<Vec<u8>>, HarnessError> {
    match std::fs::read(p) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(HarnessError::Io(p.to_path_buf(), e)),
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

impl TestCase {
    pub fn load(script: &Path) -> Result<TestCase, HarnessError> {
        let name = script
            .file_name()
            .map(|n| n.to_string_lossy().trim_end_matches(".test").to_string())
            .unwrap_or_default();
        let expected_out = read_opt(&with_suffix(script, ".out"))?;
        let expected_ec = read_opt(&with_suffix(script, ".ec"))?
            .map(|b| String::from_utf8_lossy(&b).trim().parse().unwrap_or(0))
            .unwrap_or(0);
        Ok(TestCase { name, script: script.to_path_buf(), expected_out, expected_ec })
    }
}

/// All `*.test` files under the given files or directories, sorted by name.
pub fn discover(paths: &[PathBuf]) -> Result<Vec<TestCase>, HarnessError> {
    let mut scripts = Vec::new();
    for p in paths {
        if p.is_dir() {
            let rd = std::fs::read_dir(p).map_err(|e| HarnessError::Io(p.clone(), e))?;
            for e in rd {
                let e = e.map_err(|e| HarnessError::Io(p.clone(), e))?;
                let path = e.path();
                if path.extension().is_some_and(|x| x == "test") {
                    scripts.push(path);
                }
            }
        } else {
            scripts.push(p.clone());
        }
    }
    let mut cases = scripts.iter().map(|s| TestCase::load(s)).collect::<Result<Vec<_>, _>>()?;
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(cases)
}

/// Run a script under `shell` in a fresh temporary directory.
pub fn run_script(shell: &Path, script: &Path) -> Result<RunResult, HarnessError> {
    let io = |e| HarnessError::Io(script.to_path_buf(), e);
    let dir = tempfile::tempdir().map_err(io)?;
    // `sh` inside a test means the shell under test.
    let shim = tempfile::tempdir().map_err(io)?;
    let shell = std::fs::canonicalize(shell).map_err(io)?;
    std::os::unix::fs::symlink(&shell, shim.path().join("sh")).map_err(io)?;
    let script = std::fs::canonicalize(script).map_err(io)?;
    let mut out = tempfile::tempfile().map_err(io)?;
    let mut child = Command::new(&shell)
        .arg(&script)
        .current_dir(dir.path())
        .env_clear()
        .env("PATH", format!("{}:/usr/local/bin:/usr/bin:/bin", shim.path().display()))
        .env("HOME", dir.path())
        .env("LC_ALL", "C")
        .stdin(Stdio::null())
        .stdout(out.try_clone().map_err(io)?)
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()
        .map_err(io)?;
    let start = Instant::now();
    let status = loop {
        if let Some(s) = child.try_wait().map_err(io)? {
            break s;
        }
        if start.elapsed() > TIMEOUT {
            // SAFETY: signals the child's own process group.
            unsafe { libc::kill(-(child.id() as i32), libc::SIGKILL) };
            let _ = child.wait();
            return Ok(RunResult::Timeout);
        }
        std::thread::sleep(POLL);
    };
    // Reap stragglers left in the group, such as background jobs.
    // SAFETY: signals the child's own process group.
    unsafe { libc::kill(-(child.id() as i32), libc::SIGKILL) };
    let status = status.code().unwrap_or_else(|| 128 + status.signal().unwrap_or(0));
    let mut stdout = Vec::new();
    out.rewind().map_err(io)?;
    out.read_to_end(&mut stdout).map_err(io)?;
    Ok(RunResult::Finished { stdout, status })
}

pub fn unified_diff(expected: &[u8], actual: &[u8]) -> String {
    let e = String::from_utf8_lossy(expected);
    let a = String::from_utf8_lossy(actual);
    TextDiff::from_lines(&e, &a).unified_diff().header("expected", "actual").to_string()
}

pub fn judge(case: &TestCase, result: &RunResult) -> Verdict {
    let Some(expected) = &case.expected_out else { return Verdict::Broken };
    match result {
        RunResult::Timeout => Verdict::Timeout,
        RunResult::Finished { stdout, .. } if stdout != expected => Verdict::Stdout(unified_diff(expected, stdout)),
        RunResult::Finished { status, .. } if *status != case.expected_ec => {
            Verdict::Status { expected: case.expected_ec, actual: *status }
        }
        RunResult::Finished { .. } => Verdict::Pass,
    }
}

/// Run every case in parallel; results keep the input order.
pub fn run_all(shell: &Path, cases: &[TestCase]) -> Vec<(Verdict, Option<RunResult>)> {
    cases
        .par_iter()
        .map(|c| {
            if c.expected_out.is_none() {
                return (Verdict::Broken, None);
            }
            match run_script(shell, &c.script) {
                Ok(r) => (judge(c, &r), Some(r)),
                Err(e) => (Verdict::Stdout(format!("harness error: {e}\n")), None),
            }
        })
        .collect()
}

/// A divergence between two shells on one test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub name: String,
    pub what: &'static str,
    pub detail: String,
}

/// Run each case under both shells and report where they differ.
pub fn diff_shells(shell: &Path, reference: &Path, cases: &[TestCase]) -> Vec<Divergence> {
    let per_case: Vec<Option<Divergence>> = cases
        .par_iter()
        .map(|c| {
            let ours = run_script(shell, &c.script).ok()?;
            let theirs = run_script(reference, &c.script).ok()?;
            let div = |what, detail| Some(Divergence { name: c.name.clone(), what, detail });
            match (&ours, &theirs) {
                (RunResult::Finished { stdout: a, status: sa }, RunResult::Finished { stdout: b, status: sb }) => {
                    if a != b {
                        div("stdout", unified_diff(b, a))
                    } else if sa != sb {
                        div("status", format!("reference {sb}, ours {sa}\n"))
                    } else {
                        None
                    }
                }
                (RunResult::Timeout, RunResult::Timeout) => None,
                _ => div("timeout", String::new()),
            }
        })
        .collect();
    per_case.into_iter().flatten().collect()
}

/// Names listed in a divergence notes file: the first word of each
/// non-comment line.
pub fn documented_divergences(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_whitespace().next().map(str::to_string))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judge_outcomes() {
        let case = TestCase { name: "t".into(), script: "t.test".into(), expected_out: Some(b"a\n".to_vec()), expected_ec: 0 };
        assert!(judge(&case, &RunResult::Finished { stdout: b"a\n".to_vec(), status: 0 }).is_pass());
        assert_eq!(judge(&case, &RunResult::Timeout), Verdict::Timeout);
        assert!(matches!(judge(&case, &RunResult::Finished { stdout: b"b\n".to_vec(), status: 0 }), Verdict::Stdout(_)));
        assert_eq!(
            judge(&case, &RunResult::Finished { stdout: b"a\n".to_vec(), status: 3 }),
            Verdict::Status { expected: 0, actual: 3 }
        );
        let broken = TestCase { expected_out: None, ..case };
        assert_eq!(judge(&broken, &RunResult::Timeout), Verdict::Broken);
    }

    #[test]
    fn report_lines() {
        assert_eq!(Verdict::Pass.report("x"), "PASS x");
        assert_eq!(Verdict::Timeout.report("x"), "FAIL x (timeout)");
        assert!(Verdict::Stdout("-a\n+b\n".into()).report("x").starts_with("FAIL x (stdout)\n"));
    }

    #[test]
    fn diff_is_unified() {
        let d = unified_diff(b"a\nb\n", b"a\nc\n");
        assert!(d.contains("-b") && d.contains("+c"), "{d}");
    }
}
