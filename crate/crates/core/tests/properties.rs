//! Invariants of the parser, state, expansion, patterns and evaluator.

mod support;

use std::path::PathBuf;

use proptest::prelude::*;
use smolsh::arith;
use smolsh::ast::{render, Command, Mode, Side};
use smolsh::parser::parse_program;
use smolsh::pattern::{self, compile, remove_affix};
use smolsh::{run_symbolic, ShellState, SymbolicConfig, Trace};
use support::oracles;

// ---------------------------------------------------------------------------
// Program generator

const WORDS: &[&str] = &[
    "a", "echo", "x1", "\"q $x\"", "'s p'", "$x", "${x:-d}", "${x:=v}", "${#x}", "${x#*a}", "${x%%.c}",
    "$(echo s)", "`echo b`", "$((1 + x * 2))", "a\\ b", "~/p", "~root", "*.c", "\"$@\"", "$*", "x${y}z",
    "\"a${b:+c d}e\"", "'it'\\''s'", "--", "-n", "\"\\$lit\"", "$?", "$#", "${10}",
];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(WORDS).prop_map(str::to_string)
}

fn redir() -> impl Strategy<Value = String> {
    prop_oneof![
        word().prop_map(|w| format!(">{w}")),
        word().prop_map(|w| format!("2>>{w}")),
        word().prop_map(|w| format!("<{w}")),
        Just("2>&1".to_string()),
        Just("3<&-".to_string()),
        Just(">|f".to_string()),
        Just("4<>g".to_string()),
    ]
}

fn simple() -> impl Strategy<Value = String> {
    (
        prop::collection::vec((prop::sample::select(&["v", "w", "PATH"][..]), word()), 0..2),
        prop::collection::vec(word(), 1..4),
        prop::collection::vec(redir(), 0..2),
    )
        .prop_map(|(assigns, mut words, redirs)| {
            if words[0] == "--" || words[0] == "-n" {
                words[0] = "echo".into();
            }
            let mut parts: Vec<String> = assigns.into_iter().map(|(n, v)| format!("{n}={v}")).collect();
            parts.extend(words);
            parts.extend(redirs);
            parts.join(" ")
        })
}

pub fn program() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        4 => simple(),
        1 => simple().prop_map(|s| format!("{{ cat <<EOF; {s}\nbody $x\nEOF\n}}")),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{{ {a}; }} && {{ {b}; }}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{{ {a}; }} || {{ {b}; }}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{{ {a}; }} | {{ {b}; }}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}; {b}")),
            inner.clone().prop_map(|a| format!("! {{ {a}; }}")),
            inner.clone().prop_map(|a| format!("{{ {a} & }}")),
            inner.clone().prop_map(|a| format!("( {a} )")),
            (inner.clone(), redir()).prop_map(|(a, r)| format!("{{ {a}; }} {r}")),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(c, t, e)| format!("if {c}; then {t}; else {e}; fi")),
            (inner.clone(), inner.clone()).prop_map(|(c, b)| format!("while {c}; do {b}; done")),
            (inner.clone(), inner.clone()).prop_map(|(c, b)| format!("until {c}; do {b}; done")),
            (word(), inner.clone()).prop_map(|(w, b)| format!("for i in {w} b; do {b}; done")),
            (word(), inner.clone(), inner.clone()).prop_map(|(w, a, b)| format!("case {w} in a|b) {a};; (*) {b};; esac")),
            inner.prop_map(|b| format!("f() {{ {b}; }}")),
        ]
    })
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/corpus")
}

fn corpus_scripts() -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "test").then(|| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        })
        .collect();
    v.sort();
    v
}

fn roundtrip(src: &[u8]) -> Result<(), String> {
    let Ok(cmds) = parse_program(src) else { return Ok(()) };
    for c in &cmds {
        if !c.is_source() {
            return Err(format!("runtime form from parser: {c:?}"));
        }
        let text = render(c);
        let again = parse_program(&text).map_err(|e| format!("{}: {e}", String::from_utf8_lossy(&text)))?;
        if again != vec![c.clone()] {
            return Err(format!("{:?} rendered as {:?}", String::from_utf8_lossy(src), String::from_utf8_lossy(&text)));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn render_then_parse_is_identity(src in program()) {
        prop_assert!(parse_program(src.as_bytes()).is_ok(), "generator produced bad syntax: {}", src);
        roundtrip(src.as_bytes()).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn parsing_is_deterministic(src in program()) {
        prop_assert_eq!(parse_program(src.as_bytes()), parse_program(src.as_bytes()));
    }

    #[test]
    fn scope_push_pop_is_identity(names in prop::collection::vec("[a-z]{1,3}", 0..5)) {
        let mut st = ShellState::default();
        for n in &names {
            let _ = st.set_global(n.as_bytes(), b"g".to_vec());
        }
        let before = st.clone();
        st.push_scope();
        st.pop_scope();
        prop_assert_eq!(before, st);
    }

    #[test]
    fn set_global_then_lookup(name in "[a-z_][a-z0-9_]{0,4}", v in "[ -~]{0,8}", local in any::<bool>()) {
        let mut st = ShellState::default();
        if local {
            st.push_scope();
            st.set_local(name.as_bytes(), None).unwrap();
        }
        st.set_global(name.as_bytes(), v.clone().into_bytes()).unwrap();
        prop_assert_eq!(st.lookup(name.as_bytes()), Some(v.into_bytes()));
        if local {
            st.pop_scope();
            prop_assert_eq!(st.lookup(name.as_bytes()), None);
        }
    }

    #[test]
    fn readonly_is_permanent(name in "[a-z]{1,4}") {
        let mut st = ShellState::default();
        st.set_global(name.as_bytes(), b"1".to_vec()).unwrap();
        st.set_readonly(name.as_bytes());
        prop_assert!(st.set_global(name.as_bytes(), b"2".to_vec()).is_err());
        prop_assert!(st.unset(name.as_bytes()).is_err());
        st.push_scope();
        prop_assert!(st.set_local(name.as_bytes(), None).is_err());
        prop_assert!(st.is_readonly(name.as_bytes()));
        prop_assert_eq!(st.lookup(name.as_bytes()), Some(b"1".to_vec()));
    }

    #[test]
    fn pure_arithmetic_leaves_variables_alone(t in oracles::tree_strategy()) {
        let mut env = oracles::var_env();
        let before = env.0.clone();
        let _ = arith::eval_str(&mut env, oracles::render_tree(&t).as_bytes());
        prop_assert_eq!(before, env.0);
    }

    #[test]
    fn shortest_affix_leaves_at_least_as_much(p in "[ab*?.]{0,4}", s in "[ab.]{0,8}", suffix in any::<bool>()) {
        let side = if suffix { Side::Suffix } else { Side::Prefix };
        let c = compile(p.as_bytes());
        let short = remove_affix(side, Mode::Shortest, &c, s.as_bytes());
        let long = remove_affix(side, Mode::Longest, &c, s.as_bytes());
        prop_assert!(short.len() >= long.len());
    }

    #[test]
    fn quoted_pattern_matches_only_itself(p in "[ab*?\\[\\]!.\\\\]{0,5}", s in "[ab*?\\[\\]!.\\\\]{0,5}") {
        let c = compile(&pattern::escape(p.as_bytes()));
        prop_assert_eq!(pattern::matches(&c, s.as_bytes()), p == s);
        prop_assert!(pattern::matches(&c, p.as_bytes()));
    }

    #[test]
    fn quoted_at_gives_one_field_per_parameter(params in prop::collection::vec("[a-z *]{0,4}", 0..6)) {
        let quoted: Vec<String> = params.iter().map(|p| format!("'{p}'")).collect();
        let src = format!("set -- {}; n() {{ echo $#; }}; n \"$@\"", quoted.join(" "));
        let t = sym(&src);
        prop_assert_eq!(t.final_state.stdout, format!("{}\n", params.len()));
    }

    #[test]
    fn exit_status_is_reduced_mod_256(n in 0u32..2000) {
        let t = sym(&format!("(exit {n}); echo $?"));
        prop_assert_eq!(t.final_state.stdout, format!("{}\n", n % 256));
    }

    #[test]
    fn break_leaves_min_of_n_and_depth_loops(depth in 1usize..4, n in 1usize..6) {
        let mut src = String::new();
        for d in 0..depth {
            src.push_str(&format!("for i{d} in 1 2; do "));
        }
        src.push_str(&format!("break {n}; "));
        for d in (0..depth).rev() {
            src.push_str(&format!("done; echo out{d}; "));
        }
        let t = sym(&src);
        let left = n.min(depth);
        // Each surviving outer loop runs twice; loops exited by break print once.
        let mut want = String::new();
        fn unroll(level: usize, depth: usize, left: usize, out: &mut String) {
            if level + left == depth {
                return;
            }
            for _ in 0..2 {
                unroll(level + 1, depth, left, out);
                out.push_str(&format!("out{}\n", level + 1));
            }
        }
        unroll(0, depth, left, &mut want);
        want.push_str("out0\n");
        prop_assert_eq!(t.final_state.stdout, want, "{}", src);
    }

    #[test]
    fn condition_context_suppresses_errexit(s in oracles::script_strategy()) {
        let t = sym(&format!("set -e; if {s}; then :; fi; echo ok"));
        prop_assert_eq!(t.final_state.stdout, "ok\n");
    }

    #[test]
    fn symbolic_runs_are_deterministic(s in oracles::script_strategy()) {
        let a = sym(&s).to_json_string();
        let b = sym(&s).to_json_string();
        prop_assert_eq!(a, b);
    }
}

fn sym(src: &str) -> Trace {
    run_symbolic(src.as_bytes(), &SymbolicConfig { fuel: 100_000, ..Default::default() })
}

#[test]
fn corpus_scripts_roundtrip() {
    let scripts = corpus_scripts();
    assert!(scripts.len() >= 150);
    for (name, src) in scripts {
        roundtrip(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn expansion_precedes_redirection_precedes_assignment() {
    for src in ["x=1 echo a >f", "a=$(echo q) b=2 set -- \"$a\" 2>/dev/null </dev/null"] {
        let t = sym(src);
        let rules: Vec<&str> = t.steps.iter().map(|s| s.rule.as_str()).collect();
        let pos = |r: &str| rules.iter().position(|x| *x == r).unwrap_or_else(|| panic!("{r} missing in {rules:?}"));
        assert!(pos("CmdArgsDone") < pos("CmdRedirDone"), "{rules:?}");
        assert!(pos("CmdRedirDone") < pos("CmdAssign"), "{rules:?}");
    }
}

#[test]
fn every_parsed_command_is_a_source_form() {
    for (_, src) in corpus_scripts() {
        if let Ok(cmds) = parse_program(&src) {
            assert!(cmds.iter().all(Command::is_source));
        }
    }
}
