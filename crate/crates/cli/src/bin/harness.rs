//! Run a directory of `.test` scripts under a shell and report results.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use smolsh_cli::harness::{diff_shells, discover, documented_divergences, run_all, Verdict};

#[derive(Debug, Parser)]
#[command(name = "smolsh-harness", about = "Conformance harness for .test scripts")]
struct Args {
    /// Test files or directories of `*.test` files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Shell under test; defaults to the smolsh binary next to this one.
    #[arg(long)]
    shell: Option<PathBuf>,
    /// Compare against a reference shell instead of the fixtures.
    #[arg(long = "diff", value_name = "REF_SHELL")]
    diff: Option<PathBuf>,
    /// Notes file naming expected divergences, one test name per line.
    #[arg(long)]
    divergences: Option<PathBuf>,
    /// Only run tests whose name starts with this prefix.
    #[arg(long)]
    filter: Option<String>,
}

fn default_shell() -> PathBuf {
    let exe = std::env::current_exe().unwrap_or_default();
    exe.with_file_name("smolsh")
}

fn main() -> ExitCode {
    let args = Args::parse();
    let shell = args.shell.unwrap_or_else(default_shell);
    let mut cases = match discover(&args.paths) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("smolsh-harness: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(f) = &args.filter {
        cases.retain(|c| c.name.starts_with(f.as_str()));
    }
    let mut out = std::io::stdout().lock();

    if let Some(reference) = &args.diff {
        let documented = args.divergences.as_deref().map(documented_divergences).unwrap_or_default();
        let divs = diff_shells(&shell, reference, &cases);
        let mut undocumented = 0;
        for d in &divs {
            let known = documented.contains(&d.name);
            undocumented += usize::from(!known);
            let tag = if known { " documented" } else { "" };
            let _ = writeln!(out, "DIVERGE {} ({}){tag}\n{}", d.name, d.what, d.detail);
        }
        let _ = writeln!(out, "{} tests, {} divergences, {} undocumented", cases.len(), divs.len(), undocumented);
        return if undocumented == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    }

    let results = run_all(&shell, &cases);
    let (mut pass, mut fail, mut broken) = (0, 0, 0);
    for (case, (verdict, _)) in cases.iter().zip(&results) {
        match verdict {
            Verdict::Pass => pass += 1,
            Verdict::Broken => broken += 1,
            _ => fail += 1,
        }
        let _ = writeln!(out, "{}", verdict.report(&case.name));
    }
    let _ = writeln!(out, "{pass} passed, {fail} failed, {broken} broken");
    if fail == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
