//! Engine components against independent reference implementations.

mod support;

use support::oracles;

#[test]
fn arithmetic_matches_wide_integer_oracle() {
    assert_eq!(oracles::check_arith(10_000), Ok(10_000));
}

#[test]
fn pattern_matching_matches_regex_oracle() {
    let n = oracles::check_patterns().unwrap();
    assert_eq!(n, 4681 * 1093);
}

#[test]
fn field_splitting_matches_brute_force_splitter() {
    assert_eq!(oracles::check_split(5_000), Ok(5_000));
}

#[test]
fn negation_inverts_status() {
    assert_eq!(oracles::check_negation(200), Ok(200));
}

#[test]
fn split_oracle_examples() {
    let s = |ifs: Option<&str>, x: &str| {
        oracles::oracle_split(ifs.map(str::as_bytes), x.as_bytes())
            .into_iter()
            .map(|f| String::from_utf8(f).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(s(None, "  a  b "), ["a", "b"]);
    assert_eq!(s(Some(":"), "a::b:"), ["a", "", "b"]);
    assert_eq!(s(Some(": "), " a : b  c:"), ["a", "b", "c"]);
    assert_eq!(s(Some(""), "a b"), ["a b"]);
    assert_eq!(s(Some(":"), ":"), [""]);
}

#[test]
fn regex_translation_examples() {
    assert_eq!(oracles::pattern_to_regex(b"a*"), r"^(?s-u:a.*)$");
    assert_eq!(oracles::pattern_to_regex(b"[!]a]"), r"^(?s-u:[^\]a])$");
    assert_eq!(oracles::pattern_to_regex(b"[a"), r"^(?s-u:\[a)$");
}
