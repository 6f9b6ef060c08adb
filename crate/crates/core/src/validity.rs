//! The fair-termination validity check.
//!
//! A derivation graph certifies its program when every *fair* infinite branch
//! carries a valid thread.  Three automata over branches (their alphabet is
//! the successor node of each step) make this precise:
//!
//! * [`build_M`] — a Büchi automaton accepting every infinite branch;
//! * [`build_U`] — a Büchi automaton accepting the *unfair* branches: those
//!   passing infinitely often through a choice node of finite rank (a fair
//!   scheduler eventually resolves such a choice towards termination, so no
//!   fair run keeps returning to it);
//! * [`build_N`] — a nondeterministic parity automaton accepting the *valid*
//!   branches: those along which some thread of formula occurrences unfolds,
//!   as its smallest recurring fixpoint, a greatest fixpoint.  The automaton
//!   waits, nondeterministically picks up a context slot, follows it through
//!   the slot origins of each edge, and emits the priority of a fixpoint
//!   whenever the thread steps through its unfolding (all other transitions
//!   emit the odd `neutral` priority); it accepts when the smallest priority
//!   seen infinitely often is even.
//!
//! The program is certified iff `L(M) \ L(U) ⊆ L(N)`.  [`check_validity`]
//! decides this exactly: a counterexample, if any, can be taken of the shape
//! `u · v^ω` with `v` a closed walk avoiding the finite-rank choice nodes,
//! and because the waiting state of `N` can defer any pickup by one step,
//! such a lasso is invalid precisely when no run *from the waiting state*
//! accepts `v^ω`.  That last condition is decided by composing, along `v`,
//! per-edge profile matrices whose entries record the achievable minimal
//! priorities between tracker states, and closing the result under walk
//! concatenation; the search enumerates all closed-walk profiles of each
//! strongly connected component, which is finite.
//!
//! [`oracle_check`] answers the same question by entirely different means —
//! enumerating closed walks up to a length bound and inspecting the simple
//! cycles of their thread graphs with the subformula order directly — and is
//! the cross-check harness for the decision procedure.

use std::collections::{HashMap, HashSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::rank::{rank_of, RankTable, RankValue};
use crate::typeck::{NodeId, ProofGraph, ProofNode, Rule};
use crate::types::{min_formula, priority, Closure, Formula};

/// Outcome of a validity check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Every fair infinite branch is valid; the program is certified.
    WellTyped,
    /// A fair branch without a valid thread exists.
    Invalid(Box<Lasso>),
    /// The search exceeded its budget before reaching a decision.
    ResourceLimit(String),
}

/// A concrete fair counterexample branch `prefix · cycle^ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lasso {
    /// Nodes from the root up to and including the cycle's entry point.
    pub prefix: Vec<NodeId>,
    /// The cycle, starting at its entry point (an edge from the last node
    /// back to the first is implied); every node avoids the unfair set.
    pub cycle: Vec<NodeId>,
    /// The smallest least fixpoint recurring on a surviving thread of the
    /// cycle, when some thread makes progress at all.
    pub culprit: Option<Formula>,
    pub message: String,
}

/// A Büchi automaton over branches; the letter of a transition is the node
/// being moved to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buchi {
    pub states: Vec<String>,
    pub initial: Option<usize>,
    pub edges: Vec<BuchiEdge>,
    pub accepting: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuchiEdge {
    pub from: usize,
    pub letter: NodeId,
    pub to: usize,
}

/// A nondeterministic parity automaton over branches with transition-based
/// priorities; acceptance is "the minimum priority seen infinitely often is
/// even".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parity {
    pub states: Vec<String>,
    pub initial: Option<usize>,
    pub edges: Vec<ParityEdge>,
    /// The priority emitted by transitions that touch no fixpoint; it is the
    /// largest priority and odd, so it never helps acceptance.
    pub neutral_priority: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityEdge {
    pub from: usize,
    pub letter: NodeId,
    pub to: usize,
    pub priority: u32,
}

/// Search budget (elementary operations) for [`check_validity`] and
/// [`oracle_check`]; exceeding it yields [`Verdict::ResourceLimit`].
const OP_BUDGET: u64 = 20_000_000;

/// The unfair set: choice nodes whose rank is finite.  A fair scheduler
/// eventually resolves such a choice towards its terminating side, so a fair
/// branch returns to these nodes only finitely often.
fn unfair_set(g: &ProofGraph, ranks: &RankTable) -> Vec<bool> {
    g.nodes
        .iter()
        .map(|n| {
            n.rule == Rule::Choice
                && matches!(
                    rank_of(ranks, &n.process).expect("rank table covers the program"),
                    RankValue::Finite(_)
                )
        })
        .collect()
}

/// Büchi automaton accepting every infinite branch of the graph.
#[allow(non_snake_case)]
pub fn build_M(g: &ProofGraph) -> Buchi {
    let states: Vec<String> = g.nodes.iter().map(|n| format!("n{}", n.id)).collect();
    let mut edges = Vec::new();
    for node in &g.nodes {
        for edge in &node.edges {
            edges.push(BuchiEdge { from: node.id, letter: edge.target, to: edge.target });
        }
    }
    Buchi {
        accepting: vec![true; states.len()],
        initial: g.main_entry().or_else(|| g.entries.values().next().copied()),
        states,
        edges,
    }
}

/// Büchi automaton accepting the unfair branches: same shape as
/// [`build_M`], accepting exactly the finite-rank choice nodes.
#[allow(non_snake_case)]
pub fn build_U(g: &ProofGraph, ranks: &RankTable) -> Buchi {
    let mut a = build_M(g);
    a.accepting = unfair_set(g, ranks);
    a
}

/// Priority bookkeeping: the distinct priorities of the closure's fixpoints
/// plus the neutral priority, in increasing order, with a dense index used
/// as a bit position in profile entries.
struct PrioTable {
    values: Vec<u32>,
    neutral_idx: usize,
    formula_of: HashMap<u32, Formula>,
}

impl PrioTable {
    fn new(c: &Closure) -> PrioTable {
        let mut values = Vec::new();
        let mut formula_of = HashMap::new();
        for f in c.iter() {
            if f.is_fixpoint() {
                let p = priority(c, f).expect("closure member has a priority");
                formula_of.insert(p, f.clone());
                values.push(p);
            }
        }
        let neutral = c.neutral_priority();
        values.push(neutral);
        values.sort_unstable();
        values.dedup();
        let neutral_idx = values.iter().position(|&v| v == neutral).unwrap();
        PrioTable { values, neutral_idx, formula_of }
    }

    fn index_of(&self, p: u32) -> usize {
        self.values.iter().position(|&v| v == p).expect("priority registered")
    }
}

/// Tracker states at a node: `0` is waiting, `1 + slot` tracks a context
/// slot.
fn tracker_count(node: &ProofNode) -> usize {
    1 + node.context.len()
}

/// Transitions of the valid-branch automaton along one graph edge, as
/// `(source tracker, target tracker, dense priority index)` triples.
fn edge_transitions(
    node: &ProofNode,
    edge: &crate::typeck::Edge,
    target: &ProofNode,
    c: &Closure,
    pt: &PrioTable,
) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    // Waiting stays waiting, or picks up any slot of the target.
    out.push((0, 0, pt.neutral_idx));
    for j in 0..target.context.len() {
        out.push((0, 1 + j, pt.neutral_idx));
    }
    // A tracked slot follows the slot origins; unfolding steps emit the
    // priority of the fixpoint being unfolded.
    for (j, origin) in edge.origins.iter().enumerate() {
        if let Some(s) = origin.parent {
            let p = if origin.progressed {
                let f = &node.context[s].formula;
                pt.index_of(priority(c, f).expect("context formula is in the closure"))
            } else {
                pt.neutral_idx
            };
            out.push((1 + s, 1 + j, p));
        }
    }
    out
}

/// Nondeterministic parity automaton accepting the valid branches.
#[allow(non_snake_case)]
pub fn build_N(g: &ProofGraph, c: &Closure) -> Parity {
    let pt = PrioTable::new(c);
    let mut states = Vec::new();
    let mut offsets = Vec::with_capacity(g.nodes.len());
    for node in &g.nodes {
        offsets.push(states.len());
        states.push(format!("n{}:wait", node.id));
        for name in node.context.keys() {
            states.push(format!("n{}:track {}", node.id, name));
        }
    }
    let mut edges = Vec::new();
    for node in &g.nodes {
        for edge in &node.edges {
            let target = g.node(edge.target);
            for (q, q2, p) in edge_transitions(node, edge, target, c, &pt) {
                edges.push(ParityEdge {
                    from: offsets[node.id] + q,
                    letter: edge.target,
                    to: offsets[edge.target] + q2,
                    priority: pt.values[p],
                });
            }
        }
    }
    Parity {
        states,
        initial: g
            .main_entry()
            .or_else(|| g.entries.values().next().copied())
            .map(|n| offsets[n]),
        edges,
        neutral_priority: c.neutral_priority(),
    }
}

/// A profile matrix: entry `(i, j)` is the set (bitmask over dense priority
/// indices) of minimal priorities achievable by tracker runs along the
/// current walk from tracker `i` at the walk's start to tracker `j` at its
/// end.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Profile {
    rows: usize,
    cols: usize,
    bits: Vec<u64>,
}

impl Profile {
    fn empty(rows: usize, cols: usize) -> Profile {
        Profile { rows, cols, bits: vec![0; rows * cols] }
    }

    fn get(&self, i: usize, j: usize) -> u64 {
        self.bits[i * self.cols + j]
    }

    fn or(&mut self, i: usize, j: usize, mask: u64) {
        self.bits[i * self.cols + j] |= mask;
    }
}

/// `min`-composition of two priority sets: all `min(a, b)` with `a` from the
/// first and `b` from the second.  Because bit positions are sorted by
/// priority value, `min` is the smaller index.
fn min_compose_sets(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        return 0;
    }
    let mut out = 0u64;
    let mut a_rest = a;
    while a_rest != 0 {
        let i = a_rest.trailing_zeros() as u64;
        a_rest &= a_rest - 1;
        let mut b_rest = b;
        while b_rest != 0 {
            let j = b_rest.trailing_zeros() as u64;
            b_rest &= b_rest - 1;
            out |= 1u64 << i.min(j);
        }
    }
    out
}

fn compose(a: &Profile, b: &Profile, ops: &mut u64) -> Profile {
    debug_assert_eq!(a.cols, b.rows);
    let mut out = Profile::empty(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let left = a.get(i, k);
            if left == 0 {
                continue;
            }
            for j in 0..b.cols {
                *ops += 1;
                let right = b.get(k, j);
                if right != 0 {
                    out.or(i, j, min_compose_sets(left, right));
                }
            }
        }
    }
    out
}

/// Transitive closure of a square profile under walk concatenation:
/// profiles of `v, v·v, v·v·v, ...`.
fn kleene_plus(v: &Profile, ops: &mut u64) -> Profile {
    let mut closure = v.clone();
    loop {
        let step = compose(&closure, v, ops);
        let mut grew = false;
        let mut merged = closure.clone();
        for idx in 0..merged.bits.len() {
            let joined = merged.bits[idx] | step.bits[idx];
            if joined != merged.bits[idx] {
                merged.bits[idx] = joined;
                grew = true;
            }
        }
        if !grew {
            return merged;
        }
        closure = merged;
    }
}

/// Does some run from the waiting state accept `v^ω`, where `v` has profile
/// `p`?  True iff the waiting state can reach (in one or more laps, or by
/// being it) a tracker that can loop on `v`-powers with an even minimal
/// priority.
fn accepts_from_waiting(p: &Profile, pt: &PrioTable, ops: &mut u64) -> bool {
    let plus = kleene_plus(p, ops);
    let even_mask: u64 = pt
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| *v % 2 == 0)
        .fold(0, |m, (i, _)| m | (1u64 << i));
    for r in 0..p.rows {
        let reachable = r == 0 || plus.get(0, r) != 0;
        if reachable && plus.get(r, r) & even_mask != 0 {
            return true;
        }
    }
    false
}

/// The smallest odd (least-fixpoint) priority recurring on a surviving
/// thread loop of the cycle, for counterexample reporting.
fn cycle_culprit(p: &Profile, pt: &PrioTable, ops: &mut u64) -> Option<Formula> {
    let plus = kleene_plus(p, ops);
    let mut loop_mask = 0u64;
    for r in 0..p.rows {
        loop_mask |= plus.get(r, r);
    }
    let mut best: Option<u32> = None;
    let mut rest = loop_mask;
    while rest != 0 {
        let idx = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if idx != pt.neutral_idx {
            let value = pt.values[idx];
            if value % 2 == 1 && best.map_or(true, |b| value < b) {
                best = Some(value);
            }
        }
    }
    best.map(|v| pt.formula_of[&v].clone())
}

/// Breadth-first reachability from the root with parent pointers; returns
/// the visit order and a parent map for path reconstruction.
fn bfs_from_root(g: &ProofGraph, root: NodeId) -> (Vec<NodeId>, HashMap<NodeId, NodeId>) {
    let mut order = Vec::new();
    let mut parents = HashMap::new();
    let mut seen = vec![false; g.nodes.len()];
    let mut queue = VecDeque::new();
    seen[root] = true;
    queue.push_back(root);
    while let Some(n) = queue.pop_front() {
        order.push(n);
        for edge in &g.node(n).edges {
            if !seen[edge.target] {
                seen[edge.target] = true;
                parents.insert(edge.target, n);
                queue.push_back(edge.target);
            }
        }
    }
    (order, parents)
}

fn path_to(parents: &HashMap<NodeId, NodeId>, root: NodeId, mut n: NodeId) -> Vec<NodeId> {
    let mut path = vec![n];
    while n != root {
        n = parents[&n];
        path.push(n);
    }
    path.reverse();
    path
}

/// Strongly connected component ids of the subgraph avoiding `excluded`;
/// only components with at least one internal edge can carry a cycle.
fn fair_sccs(g: &ProofGraph, excluded: &[bool]) -> (Vec<usize>, Vec<bool>) {
    let mut pg: DiGraph<NodeId, ()> = DiGraph::new();
    let idx: Vec<_> = g.nodes.iter().map(|n| pg.add_node(n.id)).collect();
    for node in &g.nodes {
        if excluded[node.id] {
            continue;
        }
        for edge in &node.edges {
            if !excluded[edge.target] {
                pg.add_edge(idx[node.id], idx[edge.target], ());
            }
        }
    }
    let sccs = tarjan_scc(&pg);
    let mut scc_id = vec![0usize; g.nodes.len()];
    let mut nontrivial = vec![false; sccs.len()];
    for (k, scc) in sccs.iter().enumerate() {
        for ni in scc {
            scc_id[pg[*ni]] = k;
        }
        // No node of this graph has a self-edge, so a cycle needs two nodes.
        nontrivial[k] = scc.len() > 1;
    }
    (scc_id, nontrivial)
}

/// Decides `L(M) \ L(U) ⊆ L(N)` exactly.
///
/// `ranks` must be the solution of the program's rank equations and `c` a
/// closure containing every formula of the graph (see
/// [`ProofGraph::formulas`] and [`crate::types::closure_of_all`]).
pub fn check_validity(g: &ProofGraph, ranks: &RankTable, c: &Closure) -> Verdict {
    let root = match g.main_entry() {
        Some(r) => r,
        // Validity is a whole-program property of `main`'s branches; with no
        // `main` there is nothing to refute.
        None => return Verdict::WellTyped,
    };
    let pt = PrioTable::new(c);
    if pt.values.len() > 64 {
        return Verdict::ResourceLimit(format!(
            "too many distinct priorities ({}) for the profile representation",
            pt.values.len()
        ));
    }
    if g.nodes.iter().any(|n| tracker_count(n) > 64) {
        return Verdict::ResourceLimit("a context is too wide for the profile representation".into());
    }
    let unfair = unfair_set(g, ranks);
    let (order, parents) = bfs_from_root(g, root);
    let (scc_id, nontrivial) = fair_sccs(g, &unfair);

    let mut ops: u64 = 0;
    for &r in &order {
        if unfair[r] || !nontrivial[scc_id[r]] {
            continue;
        }
        // Enumerate every closed-walk profile at r within its component,
        // visiting only nodes with id >= r so each cycle is explored from
        // its smallest node only.
        let eligible = |m: NodeId| !unfair[m] && scc_id[m] == scc_id[r] && m >= r;
        let edge_profile = |n: NodeId, e: &crate::typeck::Edge| -> Profile {
            let node = g.node(n);
            let target = g.node(e.target);
            let mut p = Profile::empty(tracker_count(node), tracker_count(target));
            for (q, q2, pidx) in edge_transitions(node, e, target, c, &pt) {
                p.or(q, q2, 1u64 << pidx);
            }
            p
        };

        struct Frame {
            node: NodeId,
            profile: Option<Profile>,
            next_edge: usize,
        }
        let mut visited: HashSet<(NodeId, Profile)> = HashSet::new();
        let mut stack = vec![Frame { node: r, profile: None, next_edge: 0 }];
        while let Some(frame_pos) = stack.len().checked_sub(1) {
            ops += 1;
            if ops > OP_BUDGET {
                return Verdict::ResourceLimit(format!(
                    "profile search exceeded {OP_BUDGET} operations"
                ));
            }
            let node = stack[frame_pos].node;
            let edge_idx = stack[frame_pos].next_edge;
            let edges = &g.node(node).edges;
            if edge_idx >= edges.len() {
                stack.pop();
                continue;
            }
            stack[frame_pos].next_edge += 1;
            let edge = &edges[edge_idx];
            if !eligible(edge.target) {
                continue;
            }
            let step = edge_profile(node, edge);
            let profile = match &stack[frame_pos].profile {
                None => step,
                Some(p) => compose(p, &step, &mut ops),
            };
            if edge.target == r {
                // A closed walk: does some waiting-state run accept it
                // forever?  If not, it is a fair invalid lasso.
                if !accepts_from_waiting(&profile, &pt, &mut ops) {
                    let culprit = cycle_culprit(&profile, &pt, &mut ops);
                    let cycle: Vec<NodeId> = stack.iter().map(|f| f.node).collect();
                    let message = match &culprit {
                        Some(f) => format!(
                            "fair cycle {:?} admits no valid thread: the smallest fixpoint \
                             recurring on its surviving threads is the least fixpoint `{f}`",
                            cycle
                        ),
                        None => format!(
                            "fair cycle {:?} admits no valid thread: no thread makes progress \
                             along it",
                            cycle
                        ),
                    };
                    return Verdict::Invalid(Box::new(Lasso {
                        prefix: path_to(&parents, root, r),
                        cycle,
                        culprit,
                        message,
                    }));
                }
            }
            let key = (edge.target, profile.clone());
            if !visited.contains(&key) {
                visited.insert(key);
                stack.push(Frame { node: edge.target, profile: Some(profile), next_edge: 0 });
            }
        }
    }
    Verdict::WellTyped
}

/// Bounded independent oracle for the same property.
///
/// Instead of profile matrices it enumerates the closed walks of length at
/// most `bound` through the fair subgraph, builds each walk's thread graph,
/// and inspects its simple cycles with the subformula order directly: a walk
/// is sustained iff some simple thread cycle makes progress and has a
/// greatest fixpoint as its smallest formula.  A [`Verdict::WellTyped`] from
/// this function is therefore a bounded claim; callers should label it with
/// the bound used.  The closure argument is unused — deciding by the
/// subformula order needs no priority assignment — and kept so both checkers
/// are invoked identically.
pub fn oracle_check(g: &ProofGraph, ranks: &RankTable, _c: &Closure, bound: usize) -> Verdict {
    let root = match g.main_entry() {
        Some(r) => r,
        None => return Verdict::WellTyped,
    };
    let unfair = unfair_set(g, ranks);

    // Plain reachability with parents, recomputed here to keep the oracle
    // self-contained.
    let mut order = Vec::new();
    let mut parents: HashMap<NodeId, NodeId> = HashMap::new();
    {
        let mut seen = vec![false; g.nodes.len()];
        let mut queue = VecDeque::new();
        seen[root] = true;
        queue.push_back(root);
        while let Some(n) = queue.pop_front() {
            order.push(n);
            for edge in &g.node(n).edges {
                if !seen[edge.target] {
                    seen[edge.target] = true;
                    parents.insert(edge.target, n);
                    queue.push_back(edge.target);
                }
            }
        }
    }

    let mut ops: u64 = 0;
    for &r in &order {
        if unfair[r] {
            continue;
        }
        // Enumerate closed walks r -> r of length <= bound staying in the
        // fair subgraph, visiting only nodes >= r (each cycle is then seen
        // exactly once, from its smallest node).
        struct Frame {
            node: NodeId,
            next_edge: usize,
        }
        let mut stack = vec![Frame { node: r, next_edge: 0 }];
        // Edges chosen so far, as (node, edge index) pairs.
        let mut walk_edges: Vec<(NodeId, usize)> = Vec::new();
        while let Some(frame_pos) = stack.len().checked_sub(1) {
            ops += 1;
            if ops > OP_BUDGET {
                return Verdict::ResourceLimit(format!(
                    "oracle walk enumeration exceeded {OP_BUDGET} operations"
                ));
            }
            let node = stack[frame_pos].node;
            let edge_idx = stack[frame_pos].next_edge;
            let edges = &g.node(node).edges;
            if edge_idx >= edges.len() || stack.len() > bound {
                stack.pop();
                walk_edges.pop();
                continue;
            }
            stack[frame_pos].next_edge += 1;
            let edge = &edges[edge_idx];
            if unfair[edge.target] || edge.target < r {
                continue;
            }
            if edge.target == r {
                let mut closed: Vec<(NodeId, usize)> = walk_edges.clone();
                closed.push((node, edge_idx));
                if !walk_is_sustained(g, &closed, &mut ops) {
                    let cycle: Vec<NodeId> = closed.iter().map(|(n, _)| *n).collect();
                    let culprit = walk_culprit(g, &closed, &mut ops);
                    let message = match &culprit {
                        Some(f) => format!(
                            "fair cycle {:?} admits no valid thread: the smallest fixpoint \
                             recurring on its surviving threads is the least fixpoint `{f}`",
                            cycle
                        ),
                        None => format!(
                            "fair cycle {:?} admits no valid thread: no thread makes progress \
                             along it",
                            cycle
                        ),
                    };
                    let mut prefix = vec![r];
                    {
                        let mut n = r;
                        while n != root {
                            n = parents[&n];
                            prefix.push(n);
                        }
                        prefix.reverse();
                    }
                    return Verdict::Invalid(Box::new(Lasso { prefix, cycle, culprit, message }));
                }
                continue;
            }
            if stack.len() < bound {
                walk_edges.push((node, edge_idx));
                stack.push(Frame { node: edge.target, next_edge: 0 });
            }
        }
    }
    Verdict::WellTyped
}

/// Thread graph of a closed walk: a node per (walk position, context slot),
/// edges following the slot origins of the walk's edges, wrapping around.
struct ThreadGraph {
    /// Adjacency: `(target thread node, progressed)`.
    adj: Vec<Vec<(usize, bool)>>,
    /// Formula at each thread node.
    formulas: Vec<Formula>,
}

fn thread_graph(g: &ProofGraph, walk: &[(NodeId, usize)]) -> ThreadGraph {
    let k = walk.len();
    let mut slot_counts = Vec::with_capacity(k);
    let mut offsets = Vec::with_capacity(k);
    let mut formulas = Vec::new();
    for &(n, _) in walk {
        offsets.push(formulas.len());
        let node = g.node(n);
        slot_counts.push(node.context.len());
        for ty in node.context.values() {
            formulas.push(ty.formula.clone());
        }
    }
    let mut adj = vec![Vec::new(); formulas.len()];
    for (i, &(n, e)) in walk.iter().enumerate() {
        let next = (i + 1) % k;
        let edge = &g.node(n).edges[e];
        for (j, origin) in edge.origins.iter().enumerate() {
            if let Some(s) = origin.parent {
                if j < slot_counts[next] {
                    adj[offsets[i] + s].push((offsets[next] + j, origin.progressed));
                }
            }
        }
    }
    ThreadGraph { adj, formulas }
}

/// Visits every simple cycle of the thread graph, stopping early when the
/// visitor returns true; returns whether any visit did.
fn any_simple_cycle(
    tg: &ThreadGraph,
    ops: &mut u64,
    mut visit: impl FnMut(&[usize], &[bool]) -> bool,
) -> bool {
    let n = tg.adj.len();
    for start in 0..n {
        // Simple cycles whose smallest node is `start`.
        let mut path = vec![start];
        let mut flags: Vec<bool> = Vec::new();
        let mut cursors = vec![0usize];
        let mut on_path = vec![false; n];
        on_path[start] = true;
        while let Some(pos) = path.len().checked_sub(1) {
            *ops += 1;
            if *ops > OP_BUDGET {
                return false;
            }
            let node = path[pos];
            let cur = cursors[pos];
            if cur >= tg.adj[node].len() {
                path.pop();
                cursors.pop();
                flags.pop();
                on_path[node] = false;
                continue;
            }
            cursors[pos] += 1;
            let (next, progressed) = tg.adj[node][cur];
            if next == start {
                let mut cycle_flags = flags.clone();
                cycle_flags.push(progressed);
                if visit(&path, &cycle_flags) {
                    return true;
                }
                continue;
            }
            if next > start && !on_path[next] {
                on_path[next] = true;
                path.push(next);
                flags.push(progressed);
                cursors.push(0);
            }
        }
    }
    false
}

/// Is the closed walk sustained by a valid thread?  True iff some simple
/// thread cycle makes progress and its smallest formula is a greatest
/// fixpoint.
fn walk_is_sustained(g: &ProofGraph, walk: &[(NodeId, usize)], ops: &mut u64) -> bool {
    let tg = thread_graph(g, walk);
    any_simple_cycle(&tg, ops, |cycle, flags| {
        if !flags.iter().any(|&p| p) {
            return false;
        }
        let formulas: Vec<&Formula> = cycle.iter().map(|&t| &tg.formulas[t]).collect();
        let min = min_formula(formulas.iter().copied());
        match min {
            Some(f) => matches!(f, Formula::Nu(_)),
            None => {
                // A progressing thread cycle always has a smallest formula:
                // every non-unfolding step moves to a subformula and every
                // unfolding starts from a fixpoint below its unfolding.
                panic!(
                    "thread cycle without a smallest formula: {:?}",
                    formulas.iter().map(|f| f.to_string()).collect::<Vec<_>>()
                );
            }
        }
    })
}

/// Smallest (by the subformula order, then syntactically) least fixpoint
/// appearing as the minimum of a progressing thread cycle of the walk.
fn walk_culprit(g: &ProofGraph, walk: &[(NodeId, usize)], ops: &mut u64) -> Option<Formula> {
    let tg = thread_graph(g, walk);
    let mut best: Option<Formula> = None;
    any_simple_cycle(&tg, ops, |cycle, flags| {
        if flags.iter().any(|&p| p) {
            let formulas: Vec<&Formula> = cycle.iter().map(|&t| &tg.formulas[t]).collect();
            if let Some(f) = min_formula(formulas.iter().copied()) {
                if matches!(f, Formula::Mu(_)) {
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            crate::types::subformula_leq(f, b)
                                || (!crate::types::subformula_leq(b, f)
                                    && f.to_string() < b.to_string())
                        }
                    };
                    if better {
                        best = Some(f.clone());
                    }
                }
            }
        }
        false
    });
    best
}
