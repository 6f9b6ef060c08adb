//! A linear pi-calculus with (co)recursive session types: parsing, type
//! checking, a decision procedure for fair termination, and a fair executor.
//!
//! The pipeline is: [`parser::parse_program`] to read source,
//! [`ast::check_well_formed`] for scoping and arities, [`typeck::check_program`]
//! to build the (possibly cyclic) derivation graph, [`validity::check_validity`]
//! to decide whether every fair infinite branch of that graph is supported by
//! a sustainable greatest fixpoint, and [`runtime`] to run well-typed
//! programs, which the verdict guarantees terminate under any fair scheduler.

pub mod ast;
pub mod parser;
pub mod rank;
pub mod runtime;
pub mod typeck;
pub mod types;
pub mod validity;

pub use ast::{
    alpha_eq, check_well_formed, free_names, substitute, unfold_call, AstError, Definition,
    Diagnostic, Name, Process, Program, Tag,
};
pub use parser::{
    parse_formula, parse_program, parse_program_at, print_process, print_program, ParseError,
    SourceProgram, Span,
};
pub use rank::{
    rank_equations, rank_of, solve_rank, RankError, RankExpr, RankSystem, RankTable, RankValue,
};
pub use runtime::{
    apply, eligible, fair_choice, probe_termination, refold, refolded_program, run, to_soup,
    Channel, Outcome, Policy, Redex, RunError, Side, Soup, Trace, TraceStep,
};
pub use typeck::{
    check_program, derivation_report, Edge, NodeId, ProofGraph, ProofNode, Rule, SlotOrigin,
    TypeContext, TypeckError,
};
pub use types::{
    closure_of, closure_of_all, dual, min_formula, priority, subformula_leq, subst_formula,
    type_steps, Address, Closure, Dir, Formula, Type, TypesError,
};
pub use validity::{
    build_M, build_N, build_U, check_validity, oracle_check, Buchi, BuchiEdge, Lasso, Parity,
    ParityEdge, Verdict,
};
