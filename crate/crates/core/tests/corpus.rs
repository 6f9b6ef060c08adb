//! End-to-end health of the shipped example programs: each one parses,
//! passes well-formedness, and lands on its documented verdict; the
//! certified ones also run to completion.

use std::fs;
use std::path::PathBuf;

use pilin::{
    check_program, check_validity, closure_of_all, oracle_check, parse_program_at, rank_equations,
    run, solve_rank, Outcome, Policy, Process, Verdict,
};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn load(name: &str) -> pilin::Program {
    let path = corpus_dir().join(name);
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    let parsed = parse_program_at(&text, path.to_str()).unwrap_or_else(|e| panic!("{e}"));
    let diagnostics = pilin::check_well_formed(&parsed.program);
    assert!(diagnostics.is_empty(), "{name}: {diagnostics:?}");
    parsed.program
}

fn verdict_of(prog: &pilin::Program) -> Verdict {
    let graph = check_program(prog).unwrap_or_else(|e| panic!("{e}"));
    let ranks = solve_rank(&rank_equations(prog));
    let closure = closure_of_all(graph.formulas().iter());
    let verdict = check_validity(&graph, &ranks, &closure);
    let oracle = oracle_check(&graph, &ranks, &closure, 16);
    assert_eq!(
        std::mem::discriminant(&verdict),
        std::mem::discriminant(&oracle),
        "checker and oracle disagree: {verdict:?} vs {oracle:?}"
    );
    verdict
}

const CERTIFIED: &[&str] = &[
    "buyer_seller.pilin",
    "work_gather.pilin",
    "forwarder.pilin",
    "slot_machine.pilin",
    "context_free_tree.pilin",
];

const REJECTED: &[&str] = &["compulsive_buyer.pilin", "omega.pilin", "player_machine.pilin"];

#[test]
fn certified_programs_are_well_typed_and_terminate() {
    for name in CERTIFIED {
        let prog = load(name);
        assert_eq!(verdict_of(&prog), Verdict::WellTyped, "{name}");
        for (label, mut policy) in [
            ("min-rank", Policy::min_rank()),
            ("random", Policy::random(42, 16)),
        ] {
            let trace = run(&prog, &mut policy, 10_000).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(trace.outcome, Outcome::Terminated, "{name} under {label}");
            assert!(trace.final_soup.channels.is_empty(), "{name}");
            assert!(
                matches!(trace.final_soup.members.as_slice(), [Process::Close(_)]),
                "{name}: final soup is `{}`",
                trace.final_soup
            );
        }
    }
}

#[test]
fn rejected_programs_are_invalid_with_sound_counterexamples() {
    for name in REJECTED {
        let prog = load(name);
        match verdict_of(&prog) {
            Verdict::Invalid(lasso) => {
                assert!(!lasso.cycle.is_empty(), "{name}");
                assert!(!lasso.message.is_empty(), "{name}");
            }
            other => panic!("{name}: expected Invalid, got {other:?}"),
        }
    }
}

#[test]
fn corpus_is_exactly_the_documented_set() {
    let mut found: Vec<String> = fs::read_dir(corpus_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension().and_then(|s| s.to_str()) == Some("pilin"))
                .then(|| p.file_name().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    found.sort();
    let mut expected: Vec<String> =
        CERTIFIED.iter().chain(REJECTED).map(|s| s.to_string()).collect();
    expected.sort();
    assert_eq!(found, expected);
}
