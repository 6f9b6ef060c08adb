//! Type checking: builds a circular derivation graph for a program.
//!
//! Each definition gets one derivation tree whose root is the definition's
//! *entry node*; calls do not unfold the callee but instead emit a back-edge
//! to its entry, recording how the caller's channels line up with the
//! callee's parameters.  The resulting graph is finite but stands for the
//! infinite unfolding of the derivation, which is what the validity check in
//! [`crate::validity`] inspects.
//!
//! Sequents are `⊢ P : Γ` where `Γ` assigns each free channel of `P` a
//! [`Type`]: a formula together with an address locating the formula
//! occurrence.  Definition parameters and cut channels receive fresh address
//! bases; every logical rule extends the principal address by one letter
//! (`l`/`r` for the two-sided connectives, `i` for fixpoint unfoldings), so
//! addresses in a context are pairwise disjoint — a violation is reported as
//! [`TypeckError::AddressClash`].
//!
//! Channel management is strictly linear and algorithmic: contexts at a
//! tensor or cut are split by the free names of the two branches, and a
//! channel used by neither side is routed towards a branch that contains a
//! `fail` (whose rule absorbs any context) or rejected.
//!
//! Callers are expected to run [`crate::ast::check_well_formed`] first;
//! scoping or arity problems that slip through are still reported here, but
//! with less precise messages.

use crate::ast::{free_names, Name, Process, Program, Tag};
use crate::rank::{rank_equations, rank_of, solve_rank, RankTable, RankValue};
use crate::types::{dual, Address, Dir, Formula, Type};
use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

/// Index of a node in [`ProofGraph::nodes`].
pub type NodeId = usize;

/// A typing context: each free channel of the process, in a fixed order.
pub type TypeContext = IndexMap<Name, Type>;

/// Where a context slot of a child sequent comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOrigin {
    /// Position in the parent context this slot continues, or `None` for a
    /// channel that starts fresh here (the two ends of a cut).
    pub parent: Option<usize>,
    /// True exactly when the step from the parent slot unfolds a fixpoint
    /// (the `mu`/`nu` rules); these are the progress points of a thread.
    pub progressed: bool,
}

/// An edge from a node to one of its premises (or to a callee entry).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub target: NodeId,
    /// One entry per context slot of the target, describing its origin in
    /// this node's context.
    pub origins: Vec<SlotOrigin>,
    /// True for call edges, which point at a definition entry instead of a
    /// structural child.
    pub back_edge: bool,
}

/// The rule applied at a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    Ax,
    Top,
    One,
    Bot,
    Tensor,
    Par,
    Plus(Tag),
    With,
    Mu,
    Nu,
    Cut,
    Choice,
    Call(Name),
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Rule::Ax => "ax",
            Rule::Top => "top",
            Rule::One => "one",
            Rule::Bot => "bot",
            Rule::Tensor => "tensor",
            Rule::Par => "par",
            Rule::Plus(Tag::In1) => "plus_1",
            Rule::Plus(Tag::In2) => "plus_2",
            Rule::With => "with",
            Rule::Mu => "mu",
            Rule::Nu => "nu",
            Rule::Cut => "cut",
            Rule::Choice => "choice",
            Rule::Call(_) => "call",
        };
        f.write_str(s)
    }
}

/// One sequent of the derivation graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofNode {
    pub id: NodeId,
    /// Definition whose derivation this node belongs to.
    pub def: Name,
    pub process: Process,
    pub context: TypeContext,
    pub rule: Rule,
    pub edges: Vec<Edge>,
    /// Rank of `process` under the program's rank assignment.
    pub rank: RankValue,
}

/// The derivation graph of a whole program: one tree per definition, tied
/// together by call back-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofGraph {
    pub nodes: Vec<ProofNode>,
    /// Entry node of each definition, in definition order (`main` last).
    pub entries: IndexMap<Name, NodeId>,
}

impl ProofGraph {
    pub fn node(&self, id: NodeId) -> &ProofNode {
        &self.nodes[id]
    }

    /// Entry node of `main`, if the program has one.
    pub fn main_entry(&self) -> Option<NodeId> {
        self.entries.get("main").copied()
    }

    /// Every distinct formula appearing in some context of the graph.
    /// Feeding these to [`crate::types::closure_of_all`] yields a closure
    /// large enough to assign priorities to every thread the graph carries.
    pub fn formulas(&self) -> IndexSet<Formula> {
        let mut out = IndexSet::new();
        for node in &self.nodes {
            for ty in node.context.values() {
                out.insert(ty.formula.clone());
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TypeckError {
    #[error("in definition `{def}`: {message} (at `{process}`)")]
    IllTyped {
        def: Name,
        process: String,
        message: String,
    },
    #[error("unproductive cycle of definition calls: {}", cycle.join(" -> "))]
    UnproductiveCycle { cycle: Vec<Name> },
    #[error("in definition `{def}`: address clash in context `{context}` (at `{process}`)")]
    AddressClash {
        def: Name,
        process: String,
        context: String,
    },
}

fn display_context(ctx: &TypeContext) -> String {
    if ctx.is_empty() {
        return "·".to_string();
    }
    ctx.iter()
        .map(|(name, ty)| format!("{}: {} @ {}", name, ty.formula, ty.address))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Two addresses clash when one is a (possibly improper) prefix of the other;
/// distinct bases or opposite polarities never clash.
fn addresses_clash(a: &Address, b: &Address) -> bool {
    a == b || a.is_strict_prefix_of(b) || b.is_strict_prefix_of(a)
}

fn check_disjoint(ctx: &TypeContext) -> Result<(), (String, String)> {
    let types: Vec<&Type> = ctx.values().collect();
    for i in 0..types.len() {
        for j in i + 1..types.len() {
            if addresses_clash(&types[i].address, &types[j].address) {
                return Err((types[i].address.to_string(), types[j].address.to_string()));
            }
        }
    }
    Ok(())
}

/// True when the process contains a `fail` outside of any call; such a
/// branch can absorb channels that no branch uses syntactically.
fn contains_fail(p: &Process) -> bool {
    match p {
        Process::Fail(_) => true,
        _ => p.children().iter().any(|c| contains_fail(c)),
    }
}

struct Checker<'a> {
    prog: &'a Program,
    nodes: Vec<Option<ProofNode>>,
    entries: IndexMap<Name, NodeId>,
    next_base: u32,
    ranks: RankTable,
    current_def: Name,
}

/// Where to route channels used by neither branch of a two-premise rule.
enum Leftover {
    Reject,
    ToLeft,
    ToRight,
}

impl<'a> Checker<'a> {
    fn alloc(&mut self) -> NodeId {
        self.nodes.push(None);
        self.nodes.len() - 1
    }

    fn ill<T>(&self, process: &Process, message: String) -> Result<T, TypeckError> {
        Err(TypeckError::IllTyped {
            def: self.current_def.clone(),
            process: process.to_string(),
            message,
        })
    }

    fn lookup<'c>(
        &self,
        ctx: &'c TypeContext,
        name: &Name,
        process: &Process,
    ) -> Result<&'c Type, TypeckError> {
        match ctx.get(name) {
            Some(ty) => Ok(ty),
            None => Err(TypeckError::IllTyped {
                def: self.current_def.clone(),
                process: process.to_string(),
                message: format!("channel `{name}` is not in the typing context"),
            }),
        }
    }

    /// Rejects a binder that would shadow a live channel of the context.
    fn check_binder_fresh(
        &self,
        ctx: &TypeContext,
        skip: &Name,
        binder: &Name,
        process: &Process,
    ) -> Result<(), TypeckError> {
        if binder != skip && ctx.contains_key(binder) {
            return self.ill(
                process,
                format!("binder `{binder}` shadows a live channel of the same name"),
            );
        }
        Ok(())
    }

    /// Context for a unary rule that replaces the principal slot in place.
    fn replace_principal(
        &self,
        ctx: &TypeContext,
        subject: &Name,
        binder: &Name,
        ty: Type,
        progressed: bool,
    ) -> (TypeContext, Vec<SlotOrigin>) {
        let mut out = TypeContext::new();
        let mut origins = Vec::with_capacity(ctx.len());
        for (pos, (name, old)) in ctx.iter().enumerate() {
            if name == subject {
                out.insert(binder.clone(), ty.clone());
                origins.push(SlotOrigin { parent: Some(pos), progressed });
            } else {
                out.insert(name.clone(), old.clone());
                origins.push(SlotOrigin { parent: Some(pos), progressed: false });
            }
        }
        (out, origins)
    }

    /// Splits the non-principal part of a context between the two premises of
    /// a tensor or cut, by free names.  Channels free in both branches are
    /// rejected; channels free in neither are routed to a branch containing a
    /// `fail` (whose rule absorbs them) or rejected.
    #[allow(clippy::type_complexity)]
    fn split_context(
        &self,
        ctx: &TypeContext,
        skip: &Name,
        left_names: &IndexSet<Name>,
        right_names: &IndexSet<Name>,
        left: &Process,
        right: &Process,
        process: &Process,
    ) -> Result<((TypeContext, Vec<SlotOrigin>), (TypeContext, Vec<SlotOrigin>)), TypeckError>
    {
        let mut route = Leftover::Reject;
        for name in ctx.keys() {
            if name != skip && !left_names.contains(name) && !right_names.contains(name) {
                route = if contains_fail(left) {
                    Leftover::ToLeft
                } else if contains_fail(right) {
                    Leftover::ToRight
                } else {
                    return self.ill(process, format!("channel `{name}` is not used"));
                };
                break;
            }
        }
        let mut lctx = TypeContext::new();
        let mut lorg = Vec::new();
        let mut rctx = TypeContext::new();
        let mut rorg = Vec::new();
        for (pos, (name, ty)) in ctx.iter().enumerate() {
            if name == skip {
                continue;
            }
            let in_left = left_names.contains(name);
            let in_right = right_names.contains(name);
            let to_left = match (in_left, in_right) {
                (true, true) => {
                    return self.ill(
                        process,
                        format!("channel `{name}` is used by both branches"),
                    );
                }
                (true, false) => true,
                (false, true) => false,
                (false, false) => match route {
                    Leftover::ToLeft => true,
                    Leftover::ToRight => false,
                    Leftover::Reject => unreachable!("leftover routing decided above"),
                },
            };
            if to_left {
                lctx.insert(name.clone(), ty.clone());
                lorg.push(SlotOrigin { parent: Some(pos), progressed: false });
            } else {
                rctx.insert(name.clone(), ty.clone());
                rorg.push(SlotOrigin { parent: Some(pos), progressed: false });
            }
        }
        Ok(((lctx, lorg), (rctx, rorg)))
    }

    /// Checks `process` against `ctx`, writing the node into arena slot
    /// `slot` and appending fresh slots for its premises.
    fn check(
        &mut self,
        slot: NodeId,
        process: &Process,
        ctx: TypeContext,
    ) -> Result<(), TypeckError> {
        if let Err((a, b)) = check_disjoint(&ctx) {
            return Err(TypeckError::AddressClash {
                def: self.current_def.clone(),
                process: process.to_string(),
                context: format!("{} (clash between {a} and {b})", display_context(&ctx)),
            });
        }
        let rank = rank_of(&self.ranks, process)
            .expect("every derivation node is a subterm of a definition body");

        let (rule, edges) = match process {
            Process::Link(left, right) => {
                let lt = self.lookup(&ctx, left, process)?.clone();
                let rt = self.lookup(&ctx, right, process)?.clone();
                if ctx.len() != 2 {
                    return self.ill(
                        process,
                        "a link must be the only user of exactly its two channels".to_string(),
                    );
                }
                if lt.formula != dual(&rt.formula) {
                    return self.ill(
                        process,
                        format!(
                            "linked channels must have dual types: `{left}` has `{}` but `{right}` has `{}`",
                            lt.formula, rt.formula
                        ),
                    );
                }
                (Rule::Ax, Vec::new())
            }
            Process::Fail(subject) => {
                let ty = self.lookup(&ctx, subject, process)?;
                if ty.formula != Formula::Top {
                    return self.ill(
                        process,
                        format!("fail on `{subject}` requires type `top`, found `{}`", ty.formula),
                    );
                }
                (Rule::Top, Vec::new())
            }
            Process::Close(subject) => {
                let ty = self.lookup(&ctx, subject, process)?;
                if ty.formula != Formula::One {
                    return self.ill(
                        process,
                        format!("close on `{subject}` requires type `1`, found `{}`", ty.formula),
                    );
                }
                if ctx.len() != 1 {
                    let extra = ctx.keys().find(|n| *n != subject).unwrap();
                    return self.ill(
                        process,
                        format!("channel `{extra}` is not used"),
                    );
                }
                (Rule::One, Vec::new())
            }
            Process::Wait(subject, body) => {
                let ty = self.lookup(&ctx, subject, process)?;
                if ty.formula != Formula::Bot {
                    return self.ill(
                        process,
                        format!("wait on `{subject}` requires type `bot`, found `{}`", ty.formula),
                    );
                }
                let mut child = TypeContext::new();
                let mut origins = Vec::new();
                for (pos, (name, t)) in ctx.iter().enumerate() {
                    if name != subject {
                        child.insert(name.clone(), t.clone());
                        origins.push(SlotOrigin { parent: Some(pos), progressed: false });
                    }
                }
                let id = self.alloc();
                self.check(id, body, child)?;
                (Rule::Bot, vec![Edge { target: id, origins, back_edge: false }])
            }
            Process::Fork { subject, left_binder, right_binder, left, right } => {
                let ty = self.lookup(&ctx, subject, process)?.clone();
                let (s, t) = match &ty.formula {
                    Formula::Tensor(s, t) => ((**s).clone(), (**t).clone()),
                    other => {
                        return self.ill(
                            process,
                            format!("send on `{subject}` requires a `*` type, found `{other}`"),
                        )
                    }
                };
                let mut lnames = free_names(left);
                lnames.shift_remove(left_binder);
                let mut rnames = free_names(right);
                rnames.shift_remove(right_binder);
                let ((mut lctx, mut lorg), (mut rctx, mut rorg)) =
                    self.split_context(&ctx, subject, &lnames, &rnames, left, right, process)?;
                let subject_pos = ctx.get_index_of(subject).unwrap();
                self.check_binder_fresh(&lctx, subject, left_binder, process)?;
                self.check_binder_fresh(&rctx, subject, right_binder, process)?;
                lctx.insert(left_binder.clone(), Type::new(s, ty.address.child(Dir::L)));
                lorg.push(SlotOrigin { parent: Some(subject_pos), progressed: false });
                rctx.insert(right_binder.clone(), Type::new(t, ty.address.child(Dir::R)));
                rorg.push(SlotOrigin { parent: Some(subject_pos), progressed: false });
                let lid = self.alloc();
                self.check(lid, left, lctx)?;
                let rid = self.alloc();
                self.check(rid, right, rctx)?;
                (
                    Rule::Tensor,
                    vec![
                        Edge { target: lid, origins: lorg, back_edge: false },
                        Edge { target: rid, origins: rorg, back_edge: false },
                    ],
                )
            }
            Process::Join { subject, left_binder, right_binder, body } => {
                let ty = self.lookup(&ctx, subject, process)?.clone();
                let (s, t) = match &ty.formula {
                    Formula::Par(s, t) => ((**s).clone(), (**t).clone()),
                    other => {
                        return self.ill(
                            process,
                            format!("receive on `{subject}` requires a `par` type, found `{other}`"),
                        )
                    }
                };
                self.check_binder_fresh(&ctx, subject, left_binder, process)?;
                self.check_binder_fresh(&ctx, subject, right_binder, process)?;
                let mut child = TypeContext::new();
                let mut origins = Vec::new();
                for (pos, (name, old)) in ctx.iter().enumerate() {
                    if name == subject {
                        child.insert(
                            left_binder.clone(),
                            Type::new(s.clone(), ty.address.child(Dir::L)),
                        );
                        origins.push(SlotOrigin { parent: Some(pos), progressed: false });
                        child.insert(
                            right_binder.clone(),
                            Type::new(t.clone(), ty.address.child(Dir::R)),
                        );
                        origins.push(SlotOrigin { parent: Some(pos), progressed: false });
                    } else {
                        child.insert(name.clone(), old.clone());
                        origins.push(SlotOrigin { parent: Some(pos), progressed: false });
                    }
                }
                let id = self.alloc();
                self.check(id, body, child)?;
                (Rule::Par, vec![Edge { target: id, origins, back_edge: false }])
            }
            Process::Select { subject, tag, binder, body } => {
                let ty = self.lookup(&ctx, subject, process)?.clone();
                let (s, t) = match &ty.formula {
                    Formula::Plus(s, t) => ((**s).clone(), (**t).clone()),
                    other => {
                        return self.ill(
                            process,
                            format!("selection on `{subject}` requires a `+` type, found `{other}`"),
                        )
                    }
                };
                let chosen = match tag {
                    Tag::In1 => Type::new(s, ty.address.child(Dir::L)),
                    Tag::In2 => Type::new(t, ty.address.child(Dir::R)),
                };
                self.check_binder_fresh(&ctx, subject, binder, process)?;
                let (child, origins) =
                    self.replace_principal(&ctx, subject, binder, chosen, false);
                let id = self.alloc();
                self.check(id, body, child)?;
                (Rule::Plus(*tag), vec![Edge { target: id, origins, back_edge: false }])
            }
            Process::Case { subject, binder, left, right, .. } => {
                let ty = self.lookup(&ctx, subject, process)?.clone();
                let (s, t) = match &ty.formula {
                    Formula::With(s, t) => ((**s).clone(), (**t).clone()),
                    other => {
                        return self.ill(
                            process,
                            format!("case on `{subject}` requires a `&` type, found `{other}`"),
                        )
                    }
                };
                self.check_binder_fresh(&ctx, subject, binder, process)?;
                let (lchild, lorg) = self.replace_principal(
                    &ctx,
                    subject,
                    binder,
                    Type::new(s, ty.address.child(Dir::L)),
                    false,
                );
                let (rchild, rorg) = self.replace_principal(
                    &ctx,
                    subject,
                    binder,
                    Type::new(t, ty.address.child(Dir::R)),
                    false,
                );
                let lid = self.alloc();
                self.check(lid, left, lchild)?;
                let rid = self.alloc();
                self.check(rid, right, rchild)?;
                (
                    Rule::With,
                    vec![
                        Edge { target: lid, origins: lorg, back_edge: false },
                        Edge { target: rid, origins: rorg, back_edge: false },
                    ],
                )
            }
            Process::Rec { subject, binder, body } => {
                let ty = self.lookup(&ctx, subject, process)?.clone();
                let unfolded = match &ty.formula {
                    f @ Formula::Mu(_) => f.unfold().unwrap(),
                    other => {
                        return self.ill(
                            process,
                            format!("unfold on `{subject}` requires a `mu` type, found `{other}`"),
                        )
                    }
                };
                self.check_binder_fresh(&ctx, subject, binder, process)?;
                let (child, origins) = self.replace_principal(
                    &ctx,
                    subject,
                    binder,
                    Type::new(unfolded, ty.address.child(Dir::I)),
                    true,
                );
                let id = self.alloc();
                self.check(id, body, child)?;
                (Rule::Mu, vec![Edge { target: id, origins, back_edge: false }])
            }
            Process::Corec { subject, binder, body } => {
                let ty = self.lookup(&ctx, subject, process)?.clone();
                let unfolded = match &ty.formula {
                    f @ Formula::Nu(_) => f.unfold().unwrap(),
                    other => {
                        return self.ill(
                            process,
                            format!("rec on `{subject}` requires a `nu` type, found `{other}`"),
                        )
                    }
                };
                self.check_binder_fresh(&ctx, subject, binder, process)?;
                let (child, origins) = self.replace_principal(
                    &ctx,
                    subject,
                    binder,
                    Type::new(unfolded, ty.address.child(Dir::I)),
                    true,
                );
                let id = self.alloc();
                self.check(id, body, child)?;
                (Rule::Nu, vec![Edge { target: id, origins, back_edge: false }])
            }
            Process::Cut { channel, ann, left, right } => {
                let mut lnames = free_names(left);
                lnames.shift_remove(channel);
                let mut rnames = free_names(right);
                rnames.shift_remove(channel);
                let ((mut lctx, mut lorg), (mut rctx, mut rorg)) =
                    self.split_context(&ctx, channel, &lnames, &rnames, left, right, process)?;
                if lctx.contains_key(channel) || rctx.contains_key(channel) {
                    return self.ill(
                        process,
                        format!("cut binder `{channel}` shadows a live channel of the same name"),
                    );
                }
                let base = self.next_base;
                self.next_base += 1;
                lctx.insert(
                    channel.clone(),
                    Type::new(ann.clone(), Address::new(base, false)),
                );
                lorg.push(SlotOrigin { parent: None, progressed: false });
                rctx.insert(
                    channel.clone(),
                    Type::new(dual(ann), Address::new(base, true)),
                );
                rorg.push(SlotOrigin { parent: None, progressed: false });
                let lid = self.alloc();
                self.check(lid, left, lctx)?;
                let rid = self.alloc();
                self.check(rid, right, rctx)?;
                (
                    Rule::Cut,
                    vec![
                        Edge { target: lid, origins: lorg, back_edge: false },
                        Edge { target: rid, origins: rorg, back_edge: false },
                    ],
                )
            }
            Process::Choice(left, right) => {
                let origins: Vec<SlotOrigin> = (0..ctx.len())
                    .map(|pos| SlotOrigin { parent: Some(pos), progressed: false })
                    .collect();
                let lid = self.alloc();
                self.check(lid, left, ctx.clone())?;
                let rid = self.alloc();
                self.check(rid, right, ctx.clone())?;
                (
                    Rule::Choice,
                    vec![
                        Edge { target: lid, origins: origins.clone(), back_edge: false },
                        Edge { target: rid, origins, back_edge: false },
                    ],
                )
            }
            Process::Call(name, args) => {
                let def = match self.prog.definitions.get(name) {
                    Some(def) => def,
                    None => {
                        return self.ill(
                            process,
                            format!("call to unknown definition `{name}`"),
                        )
                    }
                };
                if args.len() != def.params.len() {
                    return self.ill(
                        process,
                        format!(
                            "call to `{name}` passes {} channels but the definition takes {}",
                            args.len(),
                            def.params.len()
                        ),
                    );
                }
                let distinct: IndexSet<&Name> = args.iter().collect();
                if distinct.len() != args.len() {
                    return self.ill(
                        process,
                        format!("call to `{name}` passes the same channel twice"),
                    );
                }
                if ctx.len() != args.len() {
                    let extra = ctx
                        .keys()
                        .find(|n| !args.contains(*n))
                        .cloned()
                        .unwrap_or_default();
                    return self.ill(process, format!("channel `{extra}` is not used"));
                }
                let mut origins = Vec::with_capacity(args.len());
                for (arg, (param, formula)) in args.iter().zip(&def.params) {
                    let ty = self.lookup(&ctx, arg, process)?;
                    if &ty.formula != formula {
                        return self.ill(
                            process,
                            format!(
                                "argument `{arg}` of call to `{name}` has type `{}` but parameter `{param}` expects `{formula}`",
                                ty.formula
                            ),
                        );
                    }
                    origins.push(SlotOrigin {
                        parent: Some(ctx.get_index_of(arg).unwrap()),
                        progressed: false,
                    });
                }
                let target = self.entries[name];
                (
                    Rule::Call(name.clone()),
                    vec![Edge { target, origins, back_edge: true }],
                )
            }
        };

        self.nodes[slot] = Some(ProofNode {
            id: slot,
            def: self.current_def.clone(),
            process: process.clone(),
            context: ctx,
            rule,
            edges,
            rank,
        });
        Ok(())
    }
}

/// Detects definitions whose bodies are nothing but a chain of calls looping
/// back on itself; such a graph would carry an infinite branch that touches
/// no formula at all and is rejected outright.
fn find_unproductive_cycle(graph_nodes: &[ProofNode], entries: &IndexMap<Name, NodeId>) -> Option<Vec<Name>> {
    let callee_of = |def: &Name| -> Option<Name> {
        match &graph_nodes[entries[def]].rule {
            Rule::Call(target) => Some(target.clone()),
            _ => None,
        }
    };
    let mut done: IndexSet<Name> = IndexSet::new();
    for start in entries.keys() {
        if done.contains(start) {
            continue;
        }
        let mut path: Vec<Name> = Vec::new();
        let mut cur = start.clone();
        loop {
            if let Some(pos) = path.iter().position(|n| n == &cur) {
                let mut cycle: Vec<Name> = path[pos..].to_vec();
                cycle.push(cur);
                return Some(cycle);
            }
            if done.contains(&cur) {
                break;
            }
            path.push(cur.clone());
            match callee_of(&cur) {
                Some(next) => cur = next,
                None => break,
            }
        }
        for name in path {
            done.insert(name);
        }
    }
    None
}

/// Type-checks every definition of the program and assembles the circular
/// derivation graph.  Expects [`crate::ast::check_well_formed`] to have
/// passed; see the module documentation for the algorithmic conventions.
pub fn check_program(prog: &Program) -> Result<ProofGraph, TypeckError> {
    // Resolve calls up front so that rank equations can be built; the
    // well-formedness pass reports these more precisely.
    for def in prog.all_defs() {
        let mut stack = vec![&def.body];
        while let Some(p) = stack.pop() {
            if let Process::Call(name, args) = p {
                match prog.definitions.get(name) {
                    None => {
                        return Err(TypeckError::IllTyped {
                            def: def.name.clone(),
                            process: p.to_string(),
                            message: format!("call to unknown definition `{name}`"),
                        })
                    }
                    Some(target) if target.params.len() != args.len() => {
                        return Err(TypeckError::IllTyped {
                            def: def.name.clone(),
                            process: p.to_string(),
                            message: format!(
                                "call to `{name}` passes {} channels but the definition takes {}",
                                args.len(),
                                target.params.len()
                            ),
                        })
                    }
                    Some(_) => {}
                }
            }
            stack.extend(p.children());
        }
    }

    let ranks = solve_rank(&rank_equations(prog));
    let defs: Vec<_> = prog.all_defs().collect();
    let mut checker = Checker {
        prog,
        nodes: defs.iter().map(|_| None).collect(),
        entries: defs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.clone(), i))
            .collect(),
        next_base: 0,
        ranks,
        current_def: Name::new(),
    };

    for (i, def) in defs.iter().enumerate() {
        checker.current_def = def.name.clone();
        let mut ctx = TypeContext::new();
        for (param, formula) in &def.params {
            let base = checker.next_base;
            checker.next_base += 1;
            ctx.insert(param.clone(), Type::new(formula.clone(), Address::new(base, false)));
        }
        if ctx.len() != def.params.len() {
            return Err(TypeckError::IllTyped {
                def: def.name.clone(),
                process: def.body.to_string(),
                message: "definition parameters must be distinct".to_string(),
            });
        }
        checker.check(i, &def.body, ctx)?;
    }

    let nodes: Vec<ProofNode> = checker
        .nodes
        .into_iter()
        .map(|n| n.expect("every allocated slot is filled"))
        .collect();

    if let Some(cycle) = find_unproductive_cycle(&nodes, &checker.entries) {
        return Err(TypeckError::UnproductiveCycle { cycle });
    }

    Ok(ProofGraph { nodes, entries: checker.entries })
}

/// Renders the derivation graph as an indented text report: one tree per
/// definition, with the rule, sequent, and rank at every node, and call
/// back-edges shown as `↩ Callee` instead of being expanded.
pub fn derivation_report(graph: &ProofGraph) -> String {
    fn walk(graph: &ProofGraph, id: NodeId, depth: usize, out: &mut String) {
        let node = graph.node(id);
        let indent = "  ".repeat(depth);
        let back = node
            .edges
            .iter()
            .find(|e| e.back_edge)
            .map(|e| format!(" ↩ {}", graph.node(e.target).def))
            .unwrap_or_default();
        out.push_str(&format!(
            "{indent}[{id}] {}{back}: ⊢ {} : {}   (rank {})\n",
            node.rule,
            node.process,
            display_context(&node.context),
            node.rank
        ));
        for edge in &node.edges {
            if !edge.back_edge {
                walk(graph, edge.target, depth + 1, out);
            }
        }
    }

    let mut out = String::new();
    for (name, &entry) in &graph.entries {
        out.push_str(&format!("definition {name} (entry node {entry}):\n"));
        walk(graph, entry, 1, &mut out);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    const BUYER_SELLER: &str = "\
def Buyer(x: mu X. X + 1) =
  unfold x. (x.in1. Buyer(x) (+) x.in2. close x)

def Seller(x: nu X. X & bot, y: 1) =
  rec x. case x { in1: Seller(x, y); in2: wait x. close y }

def main(y: 1) =
  new (x: mu X. X + 1) (Buyer(x) | Seller(x, y))
";

    fn graph_of(src: &str) -> ProofGraph {
        let prog = parse_program(src).expect("parse").program;
        assert!(crate::ast::check_well_formed(&prog).is_empty());
        check_program(&prog).expect("type check")
    }

    fn err_of(src: &str) -> TypeckError {
        let prog = parse_program(src).expect("parse").program;
        check_program(&prog).expect_err("expected a type error")
    }

    #[test]
    fn buyer_seller_builds_the_expected_graph() {
        let graph = graph_of(BUYER_SELLER);
        assert_eq!(
            graph.entries.keys().cloned().collect::<Vec<_>>(),
            vec!["Buyer".to_string(), "Seller".to_string(), "main".to_string()]
        );

        // Buyer: mu, then choice, then the two selections.
        let buyer = graph.node(graph.entries["Buyer"]);
        assert_eq!(buyer.rule, Rule::Mu);
        assert_eq!(buyer.context.len(), 1);
        assert_eq!(buyer.context[0].address.to_string(), "a");
        assert_eq!(buyer.rank, crate::rank::RankValue::Finite(1));
        let mu_edge = &buyer.edges[0];
        assert!(mu_edge.origins[0].progressed);
        let choice = graph.node(mu_edge.target);
        assert_eq!(choice.rule, Rule::Choice);
        assert_eq!(choice.context[0].address.to_string(), "ai");

        let sel1 = graph.node(choice.edges[0].target);
        assert_eq!(sel1.rule, Rule::Plus(Tag::In1));
        let call = graph.node(sel1.edges[0].target);
        assert_eq!(call.rule, Rule::Call("Buyer".to_string()));
        assert_eq!(call.context[0].address.to_string(), "ail");
        let back = &call.edges[0];
        assert!(back.back_edge);
        assert_eq!(back.target, graph.entries["Buyer"]);
        assert_eq!(back.origins, vec![SlotOrigin { parent: Some(0), progressed: false }]);

        let sel2 = graph.node(choice.edges[1].target);
        assert_eq!(sel2.rule, Rule::Plus(Tag::In2));
        assert_eq!(graph.node(sel2.edges[0].target).rule, Rule::One);

        // main: a cut whose right side carries both y and the dual end of x.
        let main = graph.node(graph.main_entry().unwrap());
        assert_eq!(main.rule, Rule::Cut);
        let left = graph.node(main.edges[0].target);
        assert_eq!(left.rule, Rule::Call("Buyer".to_string()));
        assert_eq!(left.context[0].address.to_string(), "e");
        let right = graph.node(main.edges[1].target);
        assert_eq!(right.rule, Rule::Call("Seller".to_string()));
        assert_eq!(
            right.context.keys().cloned().collect::<Vec<_>>(),
            vec!["y".to_string(), "x".to_string()]
        );
        assert_eq!(right.context[1].address.to_string(), "~e");
        // Seller's entry takes (x, y), so the back-edge maps entry slot 0 to
        // caller slot 1 and entry slot 1 to caller slot 0.
        assert_eq!(
            right.edges[0].origins,
            vec![
                SlotOrigin { parent: Some(1), progressed: false },
                SlotOrigin { parent: Some(0), progressed: false },
            ]
        );
        // The new cut channel starts a thread on both sides.
        assert_eq!(main.edges[0].origins.last().unwrap().parent, None);
        assert_eq!(main.edges[1].origins.last().unwrap().parent, None);
    }

    #[test]
    fn seller_types_with_nu_progress() {
        let graph = graph_of(BUYER_SELLER);
        let seller = graph.node(graph.entries["Seller"]);
        assert_eq!(seller.rule, Rule::Nu);
        assert!(seller.edges[0].origins.iter().any(|o| o.progressed));
        let case = graph.node(seller.edges[0].target);
        assert_eq!(case.rule, Rule::With);
        assert_eq!(case.edges.len(), 2);
    }

    #[test]
    fn detects_unproductive_call_cycles() {
        let err = err_of(
            "def A(x: 1) = B(x)\ndef B(x: 1) = A(x)\ndef main(y: 1) = close y",
        );
        match err {
            TypeckError::UnproductiveCycle { cycle } => {
                assert!(cycle.len() >= 3);
                assert_eq!(cycle.first(), cycle.last());
                assert!(cycle.contains(&"A".to_string()) && cycle.contains(&"B".to_string()));
            }
            other => panic!("expected UnproductiveCycle, got {other}"),
        }
    }

    #[test]
    fn self_call_is_unproductive() {
        let err = err_of("def A(x: 1) = A(x)\ndef main(y: 1) = close y");
        assert!(matches!(err, TypeckError::UnproductiveCycle { .. }));
    }

    #[test]
    fn choice_of_calls_is_not_unproductive() {
        // A choice node intervenes, so the cycle is left to the validity
        // check (which will reject it for having no progressing thread).
        let src = "def Omega(x: 0) = Omega(x) (+) Omega(x)\ndef main(y: 1) = new (x: 0) (Omega(x) | fail x)";
        let graph = graph_of(src);
        assert_eq!(graph.node(graph.entries["Omega"]).rule, Rule::Choice);
        assert_eq!(graph.node(graph.entries["Omega"]).rank, crate::rank::RankValue::Infinite);
        // main's leftover channel y is absorbed by the fail branch.
        let main = graph.node(graph.main_entry().unwrap());
        let right = graph.node(main.edges[1].target);
        assert_eq!(right.rule, Rule::Top);
        assert!(right.context.contains_key("y"));
    }

    #[test]
    fn rejects_basic_type_mismatches() {
        let cases: &[(&str, &str)] = &[
            ("def main(y: bot) = close y", "requires type `1`"),
            ("def main(y: 1) = wait y. close y", "requires type `bot`"),
            ("def main(y: 1) = unfold y. close y", "requires a `mu` type"),
            ("def main(x: 1, y: 1) = close x", "`y` is not used"),
            (
                "def main(y: 1) = new (x: 1) (link x y | wait x. close x)",
                "dual types",
            ),
            (
                "def main(w: top, z: 1) = new (x: 1) (fail w | fail w)",
                "both branches",
            ),
        ];
        for (src, needle) in cases {
            let err = err_of(src);
            let msg = err.to_string();
            assert!(
                msg.contains(needle),
                "error for `{src}` should mention {needle:?}, got: {msg}"
            );
        }
    }

    #[test]
    fn link_types_across_a_cut() {
        let graph = graph_of(
            "def main(y: 1) = new (x: bot) (link x y | close x)",
        );
        let main = graph.node(graph.main_entry().unwrap());
        assert_eq!(main.rule, Rule::Cut);
        let left = graph.node(main.edges[0].target);
        assert_eq!(left.rule, Rule::Ax);
        let right = graph.node(main.edges[1].target);
        assert_eq!(right.rule, Rule::One);
        assert_eq!(right.context[0].address.to_string(), "~b");
    }

    #[test]
    fn binder_shadowing_is_rejected() {
        let err = err_of(
            "def A(x: mu X. X + 1, y: 1) = unfold x (y). close y\ndef main(z: 1) = close z",
        );
        assert!(err.to_string().contains("shadows"));
    }

    #[test]
    fn address_disjointness_helper_detects_prefixes() {
        let base = Address::new(0, false);
        let mut ctx = TypeContext::new();
        ctx.insert("a".to_string(), Type::new(Formula::One, base.clone()));
        ctx.insert("b".to_string(), Type::new(Formula::Bot, base.child(Dir::L)));
        assert!(check_disjoint(&ctx).is_err());

        let mut ok = TypeContext::new();
        ok.insert("a".to_string(), Type::new(Formula::One, base.child(Dir::L)));
        ok.insert("b".to_string(), Type::new(Formula::Bot, base.child(Dir::R)));
        ok.insert("c".to_string(), Type::new(Formula::Bot, base.dual()));
        assert!(check_disjoint(&ok).is_ok());
    }

    #[test]
    fn derivation_report_shows_rules_addresses_and_backedges() {
        let graph = graph_of(BUYER_SELLER);
        let report = derivation_report(&graph);
        assert!(report.contains("definition Buyer (entry node 0):"));
        assert!(report.contains("↩ Buyer"));
        assert!(report.contains("↩ Seller"));
        assert!(report.contains("mu:"));
        assert!(report.contains("@ ai"));
        assert!(report.contains("(rank 1)"));
        assert!(report.contains("cut:"));
        // Every definition appears as a section.
        for name in ["Buyer", "Seller", "main"] {
            assert!(report.contains(&format!("definition {name} ")));
        }
    }
}
