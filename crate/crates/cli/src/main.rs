//! The `pilin` command line: check programs, solve their ranks, run them.
//!
//! Exit codes: 0 = certified (or run terminated), 1 = invalid (or the run
//! failed), 2 = ill-typed, 3 = ill-formed or unparseable, 4 = resource
//! limit (or fuel exhausted).  With `--json`, reports go to stdout as
//! schema-versioned JSON and are byte-stable; human diagnostics go to
//! stderr.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pilin::{
    build_M, build_N, build_U, check_program, check_validity, check_well_formed, closure_of_all,
    derivation_report, oracle_check, parse_program_at, rank_equations, solve_rank, Buchi, Closure,
    Formula, Lasso, Outcome, Parity, Policy, ProofGraph, Program, RankTable, RankValue, Verdict,
};

#[derive(Parser)]
#[command(name = "pilin", version, about = "Type checker and fair executor for linear processes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check programs and decide fair termination.
    Check {
        /// Files or directories (directories take every *.pilin inside).
        paths: Vec<PathBuf>,
        /// Print the derivation graph of each certified program.
        #[arg(long)]
        derivation: bool,
        /// Machine-readable report on stdout.
        #[arg(long)]
        json: bool,
        /// Cross-check the decision with the bounded oracle (closed walks
        /// up to this length).
        #[arg(long, value_name = "BOUND")]
        oracle: Option<usize>,
        /// Write the three branch automata (JSON and HOA) into a directory.
        #[arg(long, value_name = "DIR")]
        emit_automata: Option<PathBuf>,
    },
    /// Execute a program under a fair scheduler.
    Run {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Minrank)]
        policy: PolicyArg,
        /// Seed for the random policy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random choices before the random policy turns greedy.
        #[arg(long, default_value_t = 16)]
        patience: u32,
        /// Maximum number of steps (defaults to $PILIN_FUEL or 10000).
        #[arg(long)]
        fuel: Option<u64>,
        /// Print every reduction step.
        #[arg(long)]
        trace: bool,
        /// Skip certification and run anyway.
        #[arg(long)]
        unchecked: bool,
        #[arg(long)]
        json: bool,
    },
    /// Solve the rank equations of a program.
    Rank {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum PolicyArg {
    Minrank,
    Random,
}

/// One checked file, in both human and JSON form.
struct FileReport {
    path: String,
    /// `well-typed`, `invalid`, `ill-typed`, `ill-formed`, `resource-limit`.
    status: &'static str,
    diagnostics: Vec<String>,
    ranks: Option<Vec<(String, RankValue)>>,
    counterexample: Option<Lasso>,
    oracle: Option<(usize, &'static str, bool)>,
    derivation: Option<String>,
}

fn exit_code_of(status: &str) -> u8 {
    match status {
        "well-typed" | "terminated" => 0,
        "invalid" | "failed" | "stuck" => 1,
        "ill-typed" => 2,
        "ill-formed" => 3,
        _ => 4,
    }
}

fn rank_json(v: RankValue) -> Value {
    match v {
        RankValue::Finite(n) => json!(n),
        RankValue::Infinite => json!("inf"),
    }
}

fn verdict_status(v: &Verdict) -> &'static str {
    match v {
        Verdict::WellTyped => "well-typed",
        Verdict::Invalid(_) => "invalid",
        Verdict::ResourceLimit(_) => "resource-limit",
    }
}

/// Everything `check` computes for a file that parses and is well-formed.
struct Checked {
    graph: ProofGraph,
    ranks: RankTable,
    closure: Closure,
}

/// Reads, parses and scope-checks a file; errors are ill-formed (exit 3).
fn load_program(path: &Path) -> Result<Program, Vec<String>> {
    let text =
        fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let parsed = parse_program_at(&text, path.to_str()).map_err(|e| vec![e.to_string()])?;
    let diagnostics = check_well_formed(&parsed.program);
    if !diagnostics.is_empty() {
        return Err(diagnostics.iter().map(|d| format!("{}: {}", path.display(), d)).collect());
    }
    Ok(parsed.program)
}

/// `check` and `run` operate on whole programs: a `main` definition with
/// exactly one parameter of type 1 (the channel handed to the environment).
fn require_main(prog: &Program, path: &Path) -> Result<(), Vec<String>> {
    let Some(main) = &prog.main else {
        return Err(vec![format!("{}: no `main` definition", path.display())]);
    };
    match main.params.as_slice() {
        [(_, Formula::One)] => Ok(()),
        _ => Err(vec![format!(
            "{}: `main` must take exactly one parameter of type 1",
            path.display()
        )]),
    }
}

fn check_file(
    path: &Path,
    want_derivation: bool,
    oracle_bound: Option<usize>,
) -> (FileReport, Option<Checked>) {
    let display = path.display().to_string();
    let prog = match load_program(path).and_then(|p| require_main(&p, path).map(|()| p)) {
        Ok(p) => p,
        Err(diagnostics) => {
            return (
                FileReport {
                    path: display,
                    status: "ill-formed",
                    diagnostics,
                    ranks: None,
                    counterexample: None,
                    oracle: None,
                    derivation: None,
                },
                None,
            );
        }
    };
    let ranks = solve_rank(&rank_equations(&prog));
    let rank_list: Vec<(String, RankValue)> =
        ranks.definitions().iter().map(|(n, v)| (n.clone(), *v)).collect();
    let graph = match check_program(&prog) {
        Ok(g) => g,
        Err(e) => {
            return (
                FileReport {
                    path: display,
                    status: "ill-typed",
                    diagnostics: vec![e.to_string()],
                    ranks: Some(rank_list),
                    counterexample: None,
                    oracle: None,
                    derivation: None,
                },
                None,
            );
        }
    };
    let closure = closure_of_all(graph.formulas().iter());
    let verdict = check_validity(&graph, &ranks, &closure);
    let status = verdict_status(&verdict);
    let mut diagnostics = Vec::new();
    let mut counterexample = None;
    match verdict {
        Verdict::WellTyped => {}
        Verdict::Invalid(lasso) => {
            diagnostics.push(lasso.message.clone());
            counterexample = Some(*lasso);
        }
        Verdict::ResourceLimit(reason) => diagnostics.push(reason),
    }
    let oracle = oracle_bound.map(|b| {
        let o = oracle_check(&graph, &ranks, &closure, b);
        (b, verdict_status(&o), verdict_status(&o) == status)
    });
    let derivation = want_derivation.then(|| derivation_report(&graph));
    (
        FileReport {
            path: display,
            status,
            diagnostics,
            ranks: Some(rank_list),
            counterexample,
            oracle,
            derivation,
        },
        Some(Checked { graph, ranks, closure }),
    )
}

fn report_json(r: &FileReport) -> Value {
    let mut obj = json!({
        "path": r.path,
        "status": r.status,
        "diagnostics": r.diagnostics,
    });
    let map = obj.as_object_mut().unwrap();
    if let Some(ranks) = &r.ranks {
        map.insert(
            "ranks".into(),
            Value::Array(
                ranks.iter().map(|(d, v)| json!({"def": d, "rank": rank_json(*v)})).collect(),
            ),
        );
    }
    if let Some(l) = &r.counterexample {
        map.insert(
            "counterexample".into(),
            json!({
                "prefix": l.prefix,
                "cycle": l.cycle,
                "culprit": l.culprit.as_ref().map(|f| f.to_string()),
                "message": l.message,
            }),
        );
    }
    if let Some((bound, verdict, agrees)) = &r.oracle {
        map.insert(
            "oracle".into(),
            json!({
                "bound": bound,
                "verdict": format!("{verdict} (bounded B={bound})"),
                "agrees": agrees,
            }),
        );
    }
    if let Some(d) = &r.derivation {
        map.insert("derivation".into(), json!(d));
    }
    obj
}

/// Expands directory arguments into their *.pilin files, sorted by name.
fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inside: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| format!("{}: {e}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|s| s.to_str()) == Some("pilin"))
                .collect();
            inside.sort();
            out.extend(inside);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err("no input files".to_string());
    }
    Ok(out)
}

fn cmd_check(
    paths: Vec<PathBuf>,
    derivation: bool,
    json: bool,
    oracle: Option<usize>,
    emit_automata: Option<PathBuf>,
) -> ExitCode {
    let files = match expand_paths(&paths) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("pilin: {e}");
            return ExitCode::from(3);
        }
    };
    let mut reports = Vec::new();
    let mut worst = 0u8;
    for file in &files {
        let (report, checked) = check_file(file, derivation, oracle);
        worst = worst.max(exit_code_of(report.status));
        if let (Some(dir), Some(c)) = (&emit_automata, &checked) {
            if let Err(e) = emit_automata_for(dir, file, c) {
                eprintln!("pilin: {e}");
                return ExitCode::from(4);
            }
        }
        if !json {
            match report.status {
                "well-typed" => println!("{}: well-typed", report.path),
                status => {
                    println!("{}: {status}", report.path);
                    for d in &report.diagnostics {
                        eprintln!("  {d}");
                    }
                }
            }
            if let Some((bound, verdict, agrees)) = &report.oracle {
                println!(
                    "  oracle: {verdict} (bounded B={bound}){}",
                    if *agrees { ", agrees" } else { ", DISAGREES" }
                );
            }
            if let Some(d) = &report.derivation {
                println!("{d}");
            }
        }
        reports.push(report);
    }
    if json {
        let overall = match worst {
            0 => "well-typed",
            1 => "invalid",
            2 => "ill-typed",
            3 => "ill-formed",
            _ => "resource-limit",
        };
        let doc = json!({
            "schema": "pilin/check/1",
            "status": overall,
            "files": reports.iter().map(report_json).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    }
    ExitCode::from(worst)
}

fn fuel_default() -> u64 {
    std::env::var("PILIN_FUEL").ok().and_then(|v| v.parse().ok()).unwrap_or(10_000)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    path: PathBuf,
    policy: PolicyArg,
    seed: u64,
    patience: u32,
    fuel: Option<u64>,
    trace: bool,
    unchecked: bool,
    json: bool,
) -> ExitCode {
    let prog = match load_program(&path).and_then(|p| require_main(&p, &path).map(|()| p)) {
        Ok(p) => p,
        Err(diagnostics) => {
            for d in diagnostics {
                eprintln!("{d}");
            }
            return ExitCode::from(3);
        }
    };
    if !unchecked {
        let graph = match check_program(&prog) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("{}: refusing to run an ill-typed program: {e}", path.display());
                return ExitCode::from(2);
            }
        };
        let ranks = solve_rank(&rank_equations(&prog));
        let closure = closure_of_all(graph.formulas().iter());
        match check_validity(&graph, &ranks, &closure) {
            Verdict::WellTyped => {}
            Verdict::Invalid(lasso) => {
                eprintln!(
                    "{}: refusing to run an invalid program: {}",
                    path.display(),
                    lasso.message
                );
                return ExitCode::from(1);
            }
            Verdict::ResourceLimit(reason) => {
                eprintln!("{}: could not certify: {reason}", path.display());
                return ExitCode::from(4);
            }
        }
    }
    let fuel = fuel.unwrap_or_else(fuel_default);
    let mut policy = match policy {
        PolicyArg::Minrank => Policy::min_rank(),
        PolicyArg::Random => Policy::random(seed, patience),
    };
    let result = match pilin::run(&prog, &mut policy, fuel) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(3);
        }
    };
    let outcome = match result.outcome {
        Outcome::Terminated => "terminated",
        Outcome::Failed => "failed",
        Outcome::StuckUnexpected => "stuck",
        Outcome::FuelExhausted => "fuel-exhausted",
    };
    if json {
        let mut doc = json!({
            "schema": "pilin/run/1",
            "path": path.display().to_string(),
            "outcome": outcome,
            "steps": result.steps.len(),
            "final": result.final_soup.to_string(),
        });
        if trace {
            doc.as_object_mut().unwrap().insert(
                "trace".into(),
                Value::Array(
                    result
                        .steps
                        .iter()
                        .map(|s| {
                            json!({
                                "rule": s.rule,
                                "channel": s.channel,
                                "member": s.member,
                                "side": s.side.map(|d| match d {
                                    pilin::Side::Left => "left",
                                    pilin::Side::Right => "right",
                                }),
                                "detail": s.detail,
                            })
                        })
                        .collect(),
                ),
            );
        }
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        if trace {
            for (i, s) in result.steps.iter().enumerate() {
                println!("[{i}] {}", s.detail);
            }
        }
        println!("{}: {outcome} after {} steps", path.display(), result.steps.len());
        println!("final: {}", result.final_soup);
    }
    let code = match result.outcome {
        Outcome::Terminated => 0,
        Outcome::Failed | Outcome::StuckUnexpected => 1,
        Outcome::FuelExhausted => 4,
    };
    ExitCode::from(code)
}

fn cmd_rank(path: PathBuf, json: bool) -> ExitCode {
    let prog = match load_program(&path) {
        Ok(p) => p,
        Err(diagnostics) => {
            for d in diagnostics {
                eprintln!("{d}");
            }
            return ExitCode::from(3);
        }
    };
    let table = solve_rank(&rank_equations(&prog));
    if json {
        let doc = json!({
            "schema": "pilin/rank/1",
            "path": path.display().to_string(),
            "ranks": table
                .definitions()
                .iter()
                .map(|(d, v)| json!({"def": d, "rank": rank_json(*v)}))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        for (def, value) in table.definitions() {
            println!("{def} = {value}");
        }
    }
    ExitCode::SUCCESS
}

// ---------------------------------------------------------------------------
// Automata emission: JSON plus HOA (one stream with all three automata).

fn buchi_json(a: &Buchi) -> Value {
    json!({
        "states": a.states,
        "initial": a.initial,
        "accepting": a.accepting.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect::<Vec<_>>(),
        "edges": a.edges.iter().map(|e| json!({"from": e.from, "letter": e.letter, "to": e.to})).collect::<Vec<_>>(),
    })
}

fn parity_json(a: &Parity) -> Value {
    json!({
        "states": a.states,
        "initial": a.initial,
        "neutral_priority": a.neutral_priority,
        "edges": a.edges.iter().map(|e| json!({"from": e.from, "letter": e.letter, "to": e.to, "priority": e.priority})).collect::<Vec<_>>(),
    })
}

/// The alphabet of every automaton here is "which node the branch moves
/// to"; HOA labels use the one-hot convention `[k]` = atomic proposition
/// `k` (node k) holds.
fn hoa_buchi(name: &str, a: &Buchi, ap_count: usize) -> String {
    let mut out = String::new();
    writeln!(out, "HOA: v1").unwrap();
    writeln!(out, "name: \"{name}\"").unwrap();
    writeln!(out, "States: {}", a.states.len()).unwrap();
    if let Some(init) = a.initial {
        writeln!(out, "Start: {init}").unwrap();
    }
    let aps: Vec<String> = (0..ap_count).map(|i| format!("\"n{i}\"")).collect();
    writeln!(out, "AP: {} {}", ap_count, aps.join(" ")).unwrap();
    writeln!(out, "acc-name: Buchi").unwrap();
    writeln!(out, "Acceptance: 1 Inf(0)").unwrap();
    writeln!(out, "properties: trans-labels explicit-labels state-acc").unwrap();
    writeln!(out, "--BODY--").unwrap();
    for (i, state) in a.states.iter().enumerate() {
        let acc = if a.accepting[i] { " {0}" } else { "" };
        writeln!(out, "State: {i} \"{state}\"{acc}").unwrap();
        for e in a.edges.iter().filter(|e| e.from == i) {
            writeln!(out, "[{}] {}", e.letter, e.to).unwrap();
        }
    }
    writeln!(out, "--END--").unwrap();
    out
}

/// Remaps the sorted distinct priorities to contiguous colors preserving
/// order and parity, as HOA parity acceptance requires.
fn parity_colors(a: &Parity) -> (Vec<(u32, u32)>, u32) {
    let mut values: Vec<u32> = a.edges.iter().map(|e| e.priority).collect();
    values.sort_unstable();
    values.dedup();
    let mut colors = Vec::new();
    let mut next = 0u32;
    for (i, v) in values.iter().enumerate() {
        if i == 0 {
            next = v % 2;
        } else if v % 2 != colors.last().map(|(p, _): &(u32, u32)| p % 2).unwrap() {
            next += 1;
        } else {
            next += 2;
        }
        colors.push((*v, next));
    }
    let count = next + 1;
    (colors, count)
}

fn parity_min_even_formula(sets: u32) -> String {
    fn go(i: u32, n: u32) -> String {
        if i + 1 == n {
            if i % 2 == 0 {
                format!("Inf({i})")
            } else {
                format!("Fin({i})")
            }
        } else if i % 2 == 0 {
            format!("Inf({i}) | ({})", go(i + 1, n))
        } else {
            format!("Fin({i}) & ({})", go(i + 1, n))
        }
    }
    go(0, sets)
}

fn hoa_parity(name: &str, a: &Parity, ap_count: usize) -> String {
    let (colors, count) = parity_colors(a);
    let color_of = |p: u32| colors.iter().find(|(v, _)| *v == p).unwrap().1;
    let mut out = String::new();
    writeln!(out, "HOA: v1").unwrap();
    writeln!(out, "name: \"{name}\"").unwrap();
    writeln!(out, "States: {}", a.states.len()).unwrap();
    if let Some(init) = a.initial {
        writeln!(out, "Start: {init}").unwrap();
    }
    let aps: Vec<String> = (0..ap_count).map(|i| format!("\"n{i}\"")).collect();
    writeln!(out, "AP: {} {}", ap_count, aps.join(" ")).unwrap();
    writeln!(out, "acc-name: parity min even {count}").unwrap();
    writeln!(out, "Acceptance: {count} {}", parity_min_even_formula(count)).unwrap();
    writeln!(out, "properties: trans-labels explicit-labels trans-acc").unwrap();
    writeln!(out, "--BODY--").unwrap();
    for (i, state) in a.states.iter().enumerate() {
        writeln!(out, "State: {i} \"{state}\"").unwrap();
        for e in a.edges.iter().filter(|e| e.from == i) {
            writeln!(out, "[{}] {} {{{}}}", e.letter, e.to, color_of(e.priority)).unwrap();
        }
    }
    writeln!(out, "--END--").unwrap();
    out
}

fn emit_automata_for(dir: &Path, input: &Path, checked: &Checked) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("program");
    let m = build_M(&checked.graph);
    let u = build_U(&checked.graph, &checked.ranks);
    let n = build_N(&checked.graph, &checked.closure);
    let nodes = checked.graph.nodes.len();

    let json_doc = json!({
        "schema": "pilin/automata/1",
        "alphabet": "letters are target node ids; HOA labels use the one-hot convention",
        "all_branches": buchi_json(&m),
        "unfair_branches": buchi_json(&u),
        "valid_branches": parity_json(&n),
    });
    let json_path = dir.join(format!("{stem}.automata.json"));
    fs::write(&json_path, serde_json::to_string_pretty(&json_doc).unwrap())
        .map_err(|e| format!("{}: {e}", json_path.display()))?;

    let mut hoa = String::new();
    hoa.push_str(&hoa_buchi("all branches", &m, nodes));
    hoa.push('\n');
    hoa.push_str(&hoa_buchi("unfair branches", &u, nodes));
    hoa.push('\n');
    hoa.push_str(&hoa_parity("valid branches", &n, nodes));
    let hoa_path = dir.join(format!("{stem}.hoa"));
    fs::write(&hoa_path, hoa).map_err(|e| format!("{}: {e}", hoa_path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Check { paths, derivation, json, oracle, emit_automata } => {
            cmd_check(paths, derivation, json, oracle, emit_automata)
        }
        Cmd::Run { path, policy, seed, patience, fuel, trace, unchecked, json } => {
            cmd_run(path, policy, seed, patience, fuel, trace, unchecked, json)
        }
        Cmd::Rank { path, json } => cmd_rank(path, json),
    }
}
