//! Ranks: how many choices a process can still traverse, as the least
//! solution of a system of equations over the naturals extended with
//! infinity.
//!
//! Every subterm of every definition body contributes one equation, with
//! subterms identified up to channel names (so unfolding a call or renaming
//! channels never changes a rank). Leaves rank 0; unary prefixes pass their
//! body's rank through; `case` takes the maximum of its branches; a cut or a
//! fork adds its components; a choice is one more than the cheaper branch;
//! a call stands for the callee's body.
//!
//! The scheduler uses ranks for fair choice resolution: always following the
//! smaller-ranked branch of a choice bounds the number of choices ever
//! traversed, which is what makes runs of well-typed programs terminate.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::ast::{Name, Process, Program};

/// A rank: a natural number or infinity. The derived order puts every
/// finite value below `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RankValue {
    Finite(u64),
    Infinite,
}

impl RankValue {
    pub const ZERO: RankValue = RankValue::Finite(0);

    pub fn add(self, other: RankValue) -> RankValue {
        match (self, other) {
            (RankValue::Finite(a), RankValue::Finite(b)) => {
                RankValue::Finite(a.saturating_add(b))
            }
            _ => RankValue::Infinite,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RankValue::Finite(_))
    }
}

impl fmt::Display for RankValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankValue::Finite(n) => write!(f, "{}", n),
            RankValue::Infinite => write!(f, "inf"),
        }
    }
}

/// Right-hand side of a rank equation. Variables are indices into the
/// system's variable table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankExpr {
    Zero,
    Var(usize),
    Sum(Box<RankExpr>, Box<RankExpr>),
    Max(Box<RankExpr>, Box<RankExpr>),
    OnePlusMin(Box<RankExpr>, Box<RankExpr>),
}

impl RankExpr {
    fn eval(&self, value_of: &impl Fn(usize) -> RankValue) -> RankValue {
        match self {
            RankExpr::Zero => RankValue::ZERO,
            RankExpr::Var(v) => value_of(*v),
            RankExpr::Sum(a, b) => a.eval(value_of).add(b.eval(value_of)),
            RankExpr::Max(a, b) => a.eval(value_of).max(b.eval(value_of)),
            RankExpr::OnePlusMin(a, b) => {
                a.eval(value_of).min(b.eval(value_of)).add(RankValue::Finite(1))
            }
        }
    }

    fn vars(&self, out: &mut Vec<usize>) {
        match self {
            RankExpr::Zero => {}
            RankExpr::Var(v) => out.push(*v),
            RankExpr::Sum(a, b) | RankExpr::Max(a, b) | RankExpr::OnePlusMin(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

/// The equation system extracted from a program. Variables are keyed by
/// channel-erased subterms; calls do not get a variable of their own but
/// refer to the callee's body.
#[derive(Debug, Clone)]
pub struct RankSystem {
    /// Erased subterm -> its defining right-hand side, in discovery order.
    pub(crate) vars: IndexMap<Process, RankExpr>,
    /// Definition name -> index of the variable for its (erased) body.
    pub(crate) defs: IndexMap<Name, usize>,
}

impl RankSystem {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// The right-hand sides in variable order (used by test oracles).
    pub fn equations(&self) -> Vec<RankExpr> {
        self.vars.values().cloned().collect()
    }
}

/// The solved system.
#[derive(Debug, Clone)]
pub struct RankTable {
    values: HashMap<Process, RankValue>,
    defs: IndexMap<Name, RankValue>,
    /// Values in the order of the system's variable table.
    by_index: Vec<RankValue>,
}

impl RankTable {
    /// Rank of each definition body, in source order (`main` last).
    pub fn definitions(&self) -> &IndexMap<Name, RankValue> {
        &self.defs
    }

    pub fn values_by_index(&self) -> &[RankValue] {
        &self.by_index
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankError {
    #[error("no rank equation covers the subterm `{0}`")]
    UnknownSubterm(String),
}

/// Replace every channel name (subjects, binders, arguments, cut channels)
/// by `_`, leaving definition names, tags, labels and annotations alone.
pub(crate) fn erase_channels(p: &Process) -> Process {
    let hole = || "_".to_string();
    match p {
        Process::Link(_, _) => Process::Link(hole(), hole()),
        Process::Fail(_) => Process::Fail(hole()),
        Process::Close(_) => Process::Close(hole()),
        Process::Wait(_, body) => Process::Wait(hole(), Box::new(erase_channels(body))),
        Process::Fork { left, right, .. } => Process::Fork {
            subject: hole(),
            left_binder: hole(),
            right_binder: hole(),
            left: Box::new(erase_channels(left)),
            right: Box::new(erase_channels(right)),
        },
        Process::Join { body, .. } => Process::Join {
            subject: hole(),
            left_binder: hole(),
            right_binder: hole(),
            body: Box::new(erase_channels(body)),
        },
        Process::Select { tag, body, .. } => Process::Select {
            subject: hole(),
            tag: *tag,
            binder: hole(),
            body: Box::new(erase_channels(body)),
        },
        Process::Case { labels, left, right, .. } => Process::Case {
            subject: hole(),
            binder: hole(),
            labels: labels.clone(),
            left: Box::new(erase_channels(left)),
            right: Box::new(erase_channels(right)),
        },
        Process::Rec { body, .. } => Process::Rec {
            subject: hole(),
            binder: hole(),
            body: Box::new(erase_channels(body)),
        },
        Process::Corec { body, .. } => Process::Corec {
            subject: hole(),
            binder: hole(),
            body: Box::new(erase_channels(body)),
        },
        Process::Cut { ann, left, right, .. } => Process::Cut {
            channel: hole(),
            ann: ann.clone(),
            left: Box::new(erase_channels(left)),
            right: Box::new(erase_channels(right)),
        },
        Process::Choice(l, r) => Process::choice(erase_channels(l), erase_channels(r)),
        Process::Call(name, args) => {
            Process::Call(name.clone(), args.iter().map(|_| hole()).collect())
        }
    }
}

/// Build the equation system for a program.
///
/// Call targets must resolve (run `check_well_formed` first); an unresolved
/// call is a programming error here and panics.
pub fn rank_equations(prog: &Program) -> RankSystem {
    let mut builder = Builder { prog, vars: IndexMap::new() };
    let mut defs = IndexMap::new();
    for def in prog.all_defs() {
        let idx = builder.ensure(&def.body);
        defs.insert(def.name.clone(), idx);
    }
    let vars = builder
        .vars
        .into_iter()
        .map(|(k, v)| (k, v.expect("every discovered variable gets an equation")))
        .collect();
    RankSystem { vars, defs }
}

struct Builder<'a> {
    prog: &'a Program,
    vars: IndexMap<Process, Option<RankExpr>>,
}

impl Builder<'_> {
    /// Variable index for a non-call subterm (resolving through calls).
    fn ensure(&mut self, p: &Process) -> usize {
        if let Process::Call(name, _) = p {
            // A call is measured by the callee's body, so resolve through it;
            // follow chains of call-only bodies iteratively. A loop among
            // those has no structure to measure and becomes a
            // self-referential variable, whose least value is zero.
            let mut seen: Vec<Name> = Vec::new();
            let mut cur = name.clone();
            loop {
                if seen.contains(&cur) {
                    let arity = self.prog.definitions[&cur].params.len();
                    let key = Process::Call(cur.clone(), vec!["_".to_string(); arity]);
                    if let Some(idx) = self.vars.get_index_of(&key) {
                        return idx;
                    }
                    let idx = self.vars.insert_full(key, None).0;
                    self.vars[idx] = Some(RankExpr::Var(idx));
                    return idx;
                }
                let target = self.prog.definitions.get(&cur).unwrap_or_else(|| {
                    panic!("rank equations: call to unknown definition `{}`", cur)
                });
                if let Process::Call(next, _) = &target.body {
                    seen.push(cur);
                    cur = next.clone();
                } else {
                    // Clone to drop the borrow on self.prog before recursing.
                    let body = target.body.clone();
                    return self.ensure(&body);
                }
            }
        }
        let erased = erase_channels(p);
        if let Some(idx) = self.vars.get_index_of(&erased) {
            return idx;
        }
        let idx = self.vars.insert_full(erased, None).0;
        let expr = match p {
            Process::Link(_, _) | Process::Fail(_) | Process::Close(_) => RankExpr::Zero,
            Process::Wait(_, body) => RankExpr::Var(self.ensure(body)),
            Process::Select { body, .. }
            | Process::Join { body, .. }
            | Process::Rec { body, .. }
            | Process::Corec { body, .. } => RankExpr::Var(self.ensure(body)),
            Process::Case { left, right, .. } => RankExpr::Max(
                Box::new(RankExpr::Var(self.ensure(left))),
                Box::new(RankExpr::Var(self.ensure(right))),
            ),
            Process::Choice(left, right) => RankExpr::OnePlusMin(
                Box::new(RankExpr::Var(self.ensure(left))),
                Box::new(RankExpr::Var(self.ensure(right))),
            ),
            Process::Cut { left, right, .. } | Process::Fork { left, right, .. } => RankExpr::Sum(
                Box::new(RankExpr::Var(self.ensure(left))),
                Box::new(RankExpr::Var(self.ensure(right))),
            ),
            Process::Call(_, _) => unreachable!("calls are resolved above"),
        };
        self.vars[idx] = Some(expr);
        idx
    }
}

/// Solve for the least solution.
///
/// The dependency graph is split into strongly connected components, solved
/// in dependency order. Acyclic components evaluate directly; cyclic ones
/// iterate from zero. A component whose value exceeds the bound
/// `(sum of finite external inputs + #choice-terms + 1) * 2^(#sum-terms)`
/// cannot belong to the finite part of the least solution (finite values in
/// a component are reached through regimes whose cycles carry no gain, so
/// they are bounded by the external contributions, amplified at most once
/// per sum and incremented at most once per choice term) and is pinned to
/// infinity; iteration then continues for the rest. The result is checked to
/// be an exact fixpoint before it is returned.
pub fn solve_rank(system: &RankSystem) -> RankTable {
    let n = system.vars.len();
    let exprs: Vec<&RankExpr> = system.vars.values().collect();
    let mut graph: DiGraph<usize, ()> = DiGraph::new();
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    for (i, expr) in exprs.iter().enumerate() {
        let mut deps = Vec::new();
        expr.vars(&mut deps);
        deps.sort_unstable();
        deps.dedup();
        for d in deps {
            graph.add_edge(nodes[i], nodes[d], ());
        }
    }
    // tarjan_scc returns components with dependencies first, so each
    // component only sees solved values outside itself.
    let sccs = tarjan_scc(&graph);
    let mut solved: Vec<Option<RankValue>> = vec![None; n];
    let mut rounds_guard: u64 = 0;
    for scc in sccs {
        let members: Vec<usize> = scc.iter().map(|ni| graph[*ni]).collect();
        let in_scc = |v: usize| members.contains(&v);
        let cyclic = members.len() > 1 || {
            let mut deps = Vec::new();
            exprs[members[0]].vars(&mut deps);
            deps.contains(&members[0])
        };
        if !cyclic {
            let i = members[0];
            let value = exprs[i].eval(&|v| {
                solved[v].expect("dependency of an acyclic component must be solved")
            });
            solved[i] = Some(value);
            continue;
        }
        // Divergence bound for this component.
        let mut external_sum: u64 = 0;
        let mut plus_terms: u64 = 0;
        let mut sum_terms: u32 = 0;
        for &i in &members {
            let mut stack = vec![exprs[i]];
            while let Some(e) = stack.pop() {
                match e {
                    RankExpr::Zero => {}
                    RankExpr::Var(v) => {
                        if !in_scc(*v) {
                            if let Some(RankValue::Finite(x)) = solved[*v] {
                                external_sum = external_sum.saturating_add(x);
                            }
                        }
                    }
                    RankExpr::Sum(a, b) => {
                        sum_terms += 1;
                        stack.push(a);
                        stack.push(b);
                    }
                    RankExpr::Max(a, b) => {
                        stack.push(a);
                        stack.push(b);
                    }
                    RankExpr::OnePlusMin(a, b) => {
                        plus_terms += 1;
                        stack.push(a);
                        stack.push(b);
                    }
                }
            }
        }
        let bound = external_sum
            .saturating_add(plus_terms)
            .saturating_add(1)
            .saturating_mul(1u64.checked_shl(sum_terms.min(40)).unwrap_or(u64::MAX));

        let mut current: HashMap<usize, RankValue> =
            members.iter().map(|&i| (i, RankValue::ZERO)).collect();
        let mut pinned: Vec<usize> = Vec::new();
        loop {
            rounds_guard += 1;
            assert!(
                rounds_guard < 4_000_000,
                "rank solver exceeded its iteration budget; the equation system is \
                 degenerate (values past {} in a component of {} variables)",
                bound,
                members.len()
            );
            let mut changed = false;
            let mut next = current.clone();
            for &i in &members {
                if pinned.contains(&i) {
                    continue;
                }
                let v = exprs[i].eval(&|d| {
                    if in_scc(d) {
                        current[&d]
                    } else {
                        solved[d].expect("external dependency must be solved")
                    }
                });
                if v != current[&i] {
                    changed = true;
                    next.insert(i, v);
                }
            }
            current = next;
            if !changed {
                break;
            }
            for &i in &members {
                if let RankValue::Finite(x) = current[&i] {
                    if x > bound {
                        current.insert(i, RankValue::Infinite);
                        pinned.push(i);
                    }
                }
            }
        }
        for &i in &members {
            solved[i] = Some(current[&i]);
        }
    }
    let by_index: Vec<RankValue> = solved.into_iter().map(|v| v.unwrap()).collect();
    // The least solution is in particular a solution; anything else is a bug.
    for (i, expr) in exprs.iter().enumerate() {
        let check = expr.eval(&|v| by_index[v]);
        assert_eq!(
            check, by_index[i],
            "rank solver produced a non-fixpoint at equation {}",
            i
        );
    }
    let values = system
        .vars
        .keys()
        .enumerate()
        .map(|(i, k)| (k.clone(), by_index[i]))
        .collect();
    let defs = system
        .defs
        .iter()
        .map(|(name, &idx)| (name.clone(), by_index[idx]))
        .collect();
    RankTable { values, defs, by_index }
}

/// Rank of an arbitrary process appearing during execution: erased subterms
/// of definition bodies stay covered across renaming and unfolding. A call
/// ranks as its callee's body.
pub fn rank_of(table: &RankTable, p: &Process) -> Result<RankValue, RankError> {
    if let Process::Call(name, _) = p {
        return table
            .defs
            .get(name)
            .copied()
            .ok_or_else(|| RankError::UnknownSubterm(p.to_string()));
    }
    table
        .values
        .get(&erase_channels(p))
        .copied()
        .ok_or_else(|| RankError::UnknownSubterm(p.to_string()))
}
