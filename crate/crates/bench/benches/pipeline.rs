//! End-to-end benchmarks: the analysis pipeline (parse, typecheck, rank,
//! validity) over every corpus file, rank solving alone, and complete
//! min-rank executions of the certified programs.

use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use pilin::{
    check_program, check_validity, check_well_formed, closure_of_all, parse_program_at,
    rank_equations, run, solve_rank, Outcome, Policy, Program, Verdict,
};

const CORPUS: &[&str] = &[
    "buyer_seller",
    "compulsive_buyer",
    "context_free_tree",
    "forwarder",
    "omega",
    "player_machine",
    "slot_machine",
    "work_gather",
];

fn corpus_text(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(format!("{name}.pilin"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn corpus_program(name: &str) -> Program {
    let text = corpus_text(name);
    let prog = parse_program_at(&text, Some(name)).expect("corpus parses").program;
    assert!(check_well_formed(&prog).is_empty());
    prog
}

/// Parse, scope-check, typecheck, solve ranks, and decide validity: the
/// whole road from source text to a verdict.
fn analyze(text: &str, name: &str) -> Verdict {
    let prog = parse_program_at(text, Some(name)).expect("parses").program;
    assert!(check_well_formed(&prog).is_empty());
    let graph = check_program(&prog).expect("quasi-types");
    let ranks = solve_rank(&rank_equations(&prog));
    let closure = closure_of_all(graph.formulas().iter());
    check_validity(&graph, &ranks, &closure)
}

fn bench_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    for name in CORPUS {
        let text = corpus_text(name);
        group.bench_function(*name, |b| b.iter(|| analyze(&text, name)));
    }
    group.finish();
}

fn bench_rank(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank");
    for name in ["buyer_seller", "slot_machine", "context_free_tree"] {
        let prog = corpus_program(name);
        let system = rank_equations(&prog);
        group.bench_function(name, |b| b.iter(|| solve_rank(&system)));
    }
    group.finish();
}

fn bench_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run");
    for name in ["buyer_seller", "forwarder", "context_free_tree", "work_gather"] {
        let prog = corpus_program(name);
        group.bench_function(name, |b| {
            b.iter_batched(
                Policy::min_rank,
                |mut policy| {
                    let trace = run(&prog, &mut policy, 10_000).expect("runs");
                    assert_eq!(trace.outcome, Outcome::Terminated);
                    trace
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pipeline, bench_rank, bench_run);
criterion_main!(benches);
