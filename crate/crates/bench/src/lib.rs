//! Sample workloads shared by the benchmarks.

/// Scripts exercising expansion, arithmetic, loops and pipelines.
pub const SCRIPTS: &[(&str, &str)] = &[
    ("expand", "x='a b c'; y=${x#*[ab]}; z=${x##*[ab]}; echo \"$y\" $z ${#x}"),
    ("arith", "i=0; s=0; while [ $i -lt 50 ]; do s=$((s + i * i)); i=$((i + 1)); done; echo $s"),
    ("functions", "f() { local n=$1; [ $n -le 1 ] && { echo 1; return; }; echo $((n * $(f $((n - 1))))); }; f 6"),
    ("pipeline", "while true; do echo 5; done | { read x; echo $((x + 42)); }"),
];
