use criterion::{criterion_group, criterion_main, Criterion};
use smolsh::{run_symbolic, SymbolicConfig, DEFAULT_FUEL};
use smolsh_bench::SCRIPTS;

fn symbolic(c: &mut Criterion) {
    let cfg = SymbolicConfig { fuel: DEFAULT_FUEL, ..Default::default() };
    let mut g = c.benchmark_group("symbolic");
    for (name, src) in SCRIPTS {
        g.bench_function(*name, |b| b.iter(|| run_symbolic(src.as_bytes(), &cfg)));
    }
    g.finish();
}

fn parse(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse");
    for (name, src) in SCRIPTS {
        g.bench_function(*name, |b| b.iter(|| smolsh::parser::parse_program(src.as_bytes())));
    }
    g.finish();
}

criterion_group!(benches, symbolic, parse);
criterion_main!(benches);
