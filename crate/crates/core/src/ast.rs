//! Process syntax, free names, capture-avoiding substitution, definition
//! unfolding and syntactic well-formedness checks.
//!
//! Channel names are plain strings; binders shadow. `Rec` is the least-
//! fixpoint (output) side and is written `unfold x. P` in the concrete
//! syntax; `Corec` is the greatest-fixpoint (input) side, written
//! `rec x. P`. See the parser module for the grammar.

use std::collections::HashMap;
use std::fmt;

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::types::Formula;

pub type Name = String;

/// Tag carried by a select; the two external-choice labels are positional,
/// so arbitrary case labels normalize to these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    In1,
    In2,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::In1 => write!(f, "in1"),
            Tag::In2 => write!(f, "in2"),
        }
    }
}

/// A process term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Process {
    /// `link x y` — forward between two channels.
    Link(Name, Name),
    /// `fail x` — the `top` rule; never fires at runtime.
    Fail(Name),
    /// `close x` — output the unit on `x`.
    Close(Name),
    /// `wait x. P` — input the unit on `x`.
    Wait(Name, Box<Process>),
    /// `send x (y, z) (P | Q)` — output a pair on `x`; `y` is bound in the
    /// left component `P`, `z` in the right component `Q`.
    Fork {
        subject: Name,
        left_binder: Name,
        right_binder: Name,
        left: Box<Process>,
        right: Box<Process>,
    },
    /// `recv x (y, z). P` — input a pair on `x`; both `y` and `z` are bound
    /// in `P`.
    Join {
        subject: Name,
        left_binder: Name,
        right_binder: Name,
        body: Box<Process>,
    },
    /// `x.in1 (y). P` — select a summand on `x`, continuing as `y`.
    Select {
        subject: Name,
        tag: Tag,
        binder: Name,
        body: Box<Process>,
    },
    /// `case x (y) { l1: P; l2: Q }` — offer both branches on `x`. The two
    /// labels are kept for printing; branch order is what types them.
    Case {
        subject: Name,
        binder: Name,
        labels: [String; 2],
        left: Box<Process>,
        right: Box<Process>,
    },
    /// `unfold x (y). P` — step a least fixpoint (output role).
    Rec {
        subject: Name,
        binder: Name,
        body: Box<Process>,
    },
    /// `rec x (y). P` — step a greatest fixpoint (input role).
    Corec {
        subject: Name,
        binder: Name,
        body: Box<Process>,
    },
    /// `new (x: F) (P | Q)` — a cut: `x` is bound in both components, typed
    /// `F` on the left and the dual of `F` on the right.
    Cut {
        channel: Name,
        ann: Formula,
        left: Box<Process>,
        right: Box<Process>,
    },
    /// `P (+) Q` — non-deterministic choice.
    Choice(Box<Process>, Box<Process>),
    /// `A(x1, ..., xn)` — call a definition.
    Call(Name, Vec<Name>),
}

impl Process {
    pub fn wait(x: impl Into<Name>, p: Process) -> Process {
        Process::Wait(x.into(), Box::new(p))
    }
    pub fn choice(p: Process, q: Process) -> Process {
        Process::Choice(Box::new(p), Box::new(q))
    }

    /// The immediate subprocesses, in left-to-right order.
    pub fn children(&self) -> Vec<&Process> {
        match self {
            Process::Link(_, _)
            | Process::Fail(_)
            | Process::Close(_)
            | Process::Call(_, _) => Vec::new(),
            Process::Wait(_, body) => vec![body],
            Process::Join { body, .. }
            | Process::Select { body, .. }
            | Process::Rec { body, .. }
            | Process::Corec { body, .. } => vec![body],
            Process::Fork { left, right, .. }
            | Process::Case { left, right, .. }
            | Process::Cut { left, right, .. } => vec![left, right],
            Process::Choice(left, right) => vec![left, right],
        }
    }
}

/// A named definition `def A(x1: F1, ..., xn: Fn) = P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub name: Name,
    pub params: Vec<(Name, Formula)>,
    pub body: Process,
}

/// A program: the callable definitions plus the distinguished `main`
/// definition (the one literally named `main`), kept separate because it can
/// be run but not called.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub definitions: IndexMap<Name, Definition>,
    pub main: Option<Definition>,
}

impl Program {
    /// Every definition, `main` last.
    pub fn all_defs(&self) -> impl Iterator<Item = &Definition> {
        self.definitions.values().chain(self.main.iter())
    }
}

/// Free names of a process, in order of first occurrence.
pub fn free_names(p: &Process) -> IndexSet<Name> {
    let mut out = IndexSet::new();
    collect_free(p, &mut Vec::new(), &mut out);
    out
}

fn collect_free(p: &Process, bound: &mut Vec<Name>, out: &mut IndexSet<Name>) {
    let visit = |name: &Name, bound: &Vec<Name>, out: &mut IndexSet<Name>| {
        if !bound.contains(name) {
            out.insert(name.clone());
        }
    };
    match p {
        Process::Link(x, y) => {
            visit(x, bound, out);
            visit(y, bound, out);
        }
        Process::Fail(x) | Process::Close(x) => visit(x, bound, out),
        Process::Wait(x, body) => {
            visit(x, bound, out);
            collect_free(body, bound, out);
        }
        Process::Fork { subject, left_binder, right_binder, left, right } => {
            visit(subject, bound, out);
            bound.push(left_binder.clone());
            collect_free(left, bound, out);
            bound.pop();
            bound.push(right_binder.clone());
            collect_free(right, bound, out);
            bound.pop();
        }
        Process::Join { subject, left_binder, right_binder, body } => {
            visit(subject, bound, out);
            bound.push(left_binder.clone());
            bound.push(right_binder.clone());
            collect_free(body, bound, out);
            bound.pop();
            bound.pop();
        }
        Process::Select { subject, binder, body, .. } => {
            visit(subject, bound, out);
            bound.push(binder.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Process::Case { subject, binder, left, right, .. } => {
            visit(subject, bound, out);
            bound.push(binder.clone());
            collect_free(left, bound, out);
            collect_free(right, bound, out);
            bound.pop();
        }
        Process::Rec { subject, binder, body } | Process::Corec { subject, binder, body } => {
            visit(subject, bound, out);
            bound.push(binder.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Process::Cut { channel, left, right, .. } => {
            bound.push(channel.clone());
            collect_free(left, bound, out);
            collect_free(right, bound, out);
            bound.pop();
        }
        Process::Choice(left, right) => {
            collect_free(left, bound, out);
            collect_free(right, bound, out);
        }
        Process::Call(_, args) => {
            for a in args {
                visit(a, bound, out);
            }
        }
    }
}

/// Replace every free occurrence of `old` by `new`, renaming binders where
/// they would capture `new`.
pub fn substitute(p: &Process, new: &str, old: &str) -> Process {
    if new == old {
        return p.clone();
    }
    let mut map = HashMap::new();
    map.insert(old.to_string(), new.to_string());
    rename_free(p, &map)
}

/// Simultaneous capture-avoiding renaming of free names. Entries whose key
/// is not free in `p` have no effect (substitution acts on free names only).
pub fn rename_free(p: &Process, map: &HashMap<Name, Name>) -> Process {
    if map.is_empty() {
        return p.clone();
    }
    let fv = free_names(p);
    if map.keys().any(|k| !fv.contains(k)) {
        let live: HashMap<Name, Name> = map
            .iter()
            .filter(|(k, _)| fv.contains(*k))
            .map(|(a, b)| (a.clone(), b.clone()))
            .collect();
        if live.is_empty() {
            return p.clone();
        }
        return rename_free(p, &live);
    }
    let ren = |x: &Name| -> Name { map.get(x).cloned().unwrap_or_else(|| x.clone()) };
    match p {
        Process::Link(x, y) => Process::Link(ren(x), ren(y)),
        Process::Fail(x) => Process::Fail(ren(x)),
        Process::Close(x) => Process::Close(ren(x)),
        Process::Wait(x, body) => Process::Wait(ren(x), Box::new(rename_free(body, map))),
        Process::Fork { subject, left_binder, right_binder, left, right } => {
            let subject = ren(subject);
            let (lb, left) = rename_under(&[left_binder.clone()], left, map);
            let (rb, right) = rename_under(&[right_binder.clone()], right, map);
            Process::Fork {
                subject,
                left_binder: lb.into_iter().next().unwrap(),
                right_binder: rb.into_iter().next().unwrap(),
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        Process::Join { subject, left_binder, right_binder, body } => {
            let subject = ren(subject);
            let (bs, body) =
                rename_under(&[left_binder.clone(), right_binder.clone()], body, map);
            let mut it = bs.into_iter();
            Process::Join {
                subject,
                left_binder: it.next().unwrap(),
                right_binder: it.next().unwrap(),
                body: Box::new(body),
            }
        }
        Process::Select { subject, tag, binder, body } => {
            let subject = ren(subject);
            let (bs, body) = rename_under(&[binder.clone()], body, map);
            Process::Select {
                subject,
                tag: *tag,
                binder: bs.into_iter().next().unwrap(),
                body: Box::new(body),
            }
        }
        Process::Case { subject, binder, labels, left, right } => {
            let subject = ren(subject);
            let (binder, mut bodies) = rename_under_shared(binder, &[left, right], map);
            let right = bodies.pop().unwrap();
            let left = bodies.pop().unwrap();
            Process::Case {
                subject,
                binder,
                labels: labels.clone(),
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        Process::Rec { subject, binder, body } => {
            let subject = ren(subject);
            let (bs, body) = rename_under(&[binder.clone()], body, map);
            Process::Rec {
                subject,
                binder: bs.into_iter().next().unwrap(),
                body: Box::new(body),
            }
        }
        Process::Corec { subject, binder, body } => {
            let subject = ren(subject);
            let (bs, body) = rename_under(&[binder.clone()], body, map);
            Process::Corec {
                subject,
                binder: bs.into_iter().next().unwrap(),
                body: Box::new(body),
            }
        }
        Process::Cut { channel, ann, left, right } => {
            let (channel, mut bodies) = rename_under_shared(channel, &[left, right], map);
            let right = bodies.pop().unwrap();
            let left = bodies.pop().unwrap();
            Process::Cut {
                channel,
                ann: ann.clone(),
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        Process::Choice(left, right) => Process::choice(rename_free(left, map), rename_free(right, map)),
        Process::Call(name, args) => Process::Call(name.clone(), args.iter().map(ren).collect()),
    }
}

/// Rename under a binder group scoping a single body.
///
/// Shadowed entries are dropped from the renaming, but a shadowed binder is
/// itself renamed along when that is harmless: `unfold x. P` renamed by
/// `x -> w` becomes `unfold w. P{w/x}` rather than `unfold w (x). P`, which
/// keeps the subject-equals-binder sugar of definitions intact across
/// unfolding. A binder that would capture an incoming name is freshened.
fn rename_under(
    binders: &[Name],
    body: &Process,
    map: &HashMap<Name, Name>,
) -> (Vec<Name>, Process) {
    let inner: HashMap<Name, Name> = map
        .iter()
        .filter(|(old, _)| !binders.contains(old))
        .map(|(a, b)| (a.clone(), b.clone()))
        .collect();
    let mut body = body.clone();
    let mut out_binders: Vec<Name> = binders.to_vec();
    for idx in 0..out_binders.len() {
        let b = out_binders[idx].clone();
        if let Some(n) = map.get(&b) {
            // `b` is shadowed here; adopting its new name is sound when `n`
            // is not otherwise in play under this binder.
            let clash = n == &b
                || free_names(&body).contains(n)
                || inner.values().any(|v| v == n)
                || out_binders.iter().enumerate().any(|(j, ob)| j != idx && ob == n);
            if !clash {
                body = substitute(&body, n, &b);
                out_binders[idx] = n.clone();
            }
        }
    }
    for idx in 0..out_binders.len() {
        let b = out_binders[idx].clone();
        if inner.values().any(|new| new == &b) {
            let avoid: IndexSet<Name> = free_names(&body)
                .into_iter()
                .chain(inner.keys().cloned())
                .chain(inner.values().cloned())
                .chain(out_binders.iter().cloned())
                .collect();
            let fresh = fresh_prime(&b, &avoid);
            body = substitute(&body, &fresh, &b);
            out_binders[idx] = fresh;
        }
    }
    (out_binders, rename_free(&body, &inner))
}

/// Same, for one binder scoping several bodies (case branches, cut sides):
/// every body sees the same, possibly renamed, binder.
fn rename_under_shared(
    binder: &Name,
    bodies: &[&Process],
    map: &HashMap<Name, Name>,
) -> (Name, Vec<Process>) {
    let inner: HashMap<Name, Name> = map
        .iter()
        .filter(|(old, _)| *old != binder)
        .map(|(a, b)| (a.clone(), b.clone()))
        .collect();
    let mut out_bodies: Vec<Process> = bodies.iter().map(|b| (*b).clone()).collect();
    let mut binder = binder.clone();
    if let Some(n) = map.get(&binder) {
        let clash = *n == binder
            || out_bodies.iter().any(|b| free_names(b).contains(n))
            || inner.values().any(|v| v == n);
        if !clash {
            for b in &mut out_bodies {
                *b = substitute(b, n, &binder);
            }
            binder = n.clone();
        }
    }
    if inner.values().any(|new| *new == binder) {
        let avoid: IndexSet<Name> = out_bodies
            .iter()
            .flat_map(free_names)
            .chain(inner.keys().cloned())
            .chain(inner.values().cloned())
            .chain(std::iter::once(binder.clone()))
            .collect();
        let fresh = fresh_prime(&binder, &avoid);
        for b in &mut out_bodies {
            *b = substitute(b, &fresh, &binder);
        }
        binder = fresh;
    }
    let out_bodies = out_bodies.iter().map(|b| rename_free(b, &inner)).collect();
    (binder, out_bodies)
}

fn fresh_prime(base: &Name, avoid: &IndexSet<Name>) -> Name {
    let mut fresh = format!("{}'", base);
    while avoid.contains(&fresh) {
        fresh.push('\'');
    }
    fresh
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("call to unknown definition `{0}`")]
    UnknownDefinition(Name),
    #[error("definition `{name}` takes {expected} argument(s), call passes {found}")]
    ArityMismatch { name: Name, expected: usize, found: usize },
}

/// The body of definition `name` with its parameters simultaneously renamed
/// to `args`.
pub fn unfold_call(prog: &Program, name: &str, args: &[Name]) -> Result<Process, AstError> {
    let def = prog
        .definitions
        .get(name)
        .ok_or_else(|| AstError::UnknownDefinition(name.to_string()))?;
    if def.params.len() != args.len() {
        return Err(AstError::ArityMismatch {
            name: name.to_string(),
            expected: def.params.len(),
            found: args.len(),
        });
    }
    let map: HashMap<Name, Name> = def
        .params
        .iter()
        .zip(args)
        .filter(|((p, _), a)| p != *a)
        .map(|((p, _), a)| (p.clone(), a.clone()))
        .collect();
    Ok(rename_free(&def.body, &map))
}

/// A syntactic problem reported by `check_well_formed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Definition the problem was found in.
    pub def: Name,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in `{}`: {}", self.def, self.message)
    }
}

/// Syntactic well-formedness: every name in scope, call targets known with
/// matching arity and distinct arguments, fork components not sharing the
/// other side's binder, parameters distinct, annotations closed. Linearity
/// itself is the type checker's job. Returns every problem found; an empty
/// list means well-formed.
pub fn check_well_formed(prog: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for def in prog.all_defs() {
        let mut seen = IndexSet::new();
        for (p, f) in &def.params {
            if !seen.insert(p.clone()) {
                out.push(Diagnostic {
                    def: def.name.clone(),
                    message: format!("duplicate parameter `{}`", p),
                });
            }
            if !f.is_closed() {
                out.push(Diagnostic {
                    def: def.name.clone(),
                    message: format!("parameter `{}` has an open type annotation", p),
                });
            }
        }
        let params: Vec<Name> = def.params.iter().map(|(p, _)| p.clone()).collect();
        check_process(prog, def, &def.body, &params, &mut out);
    }
    out
}

fn check_process(
    prog: &Program,
    def: &Definition,
    p: &Process,
    scope: &[Name],
    out: &mut Vec<Diagnostic>,
) {
    let report = |message: String, out: &mut Vec<Diagnostic>| {
        out.push(Diagnostic { def: def.name.clone(), message });
    };
    let check_name = |x: &Name, scope: &[Name], out: &mut Vec<Diagnostic>| {
        if !scope.contains(x) {
            out.push(Diagnostic {
                def: def.name.clone(),
                message: format!("name `{}` is not in scope", x),
            });
        }
    };
    let extend = |scope: &[Name], more: &[&Name]| -> Vec<Name> {
        let mut s = scope.to_vec();
        for m in more {
            s.push((*m).clone());
        }
        s
    };
    match p {
        Process::Link(x, y) => {
            check_name(x, scope, out);
            check_name(y, scope, out);
        }
        Process::Fail(x) | Process::Close(x) => check_name(x, scope, out),
        Process::Wait(x, body) => {
            check_name(x, scope, out);
            check_process(prog, def, body, scope, out);
        }
        Process::Fork { subject, left_binder, right_binder, left, right } => {
            check_name(subject, scope, out);
            if free_names(right).contains(left_binder) {
                report(
                    format!(
                        "fork on `{}`: left binder `{}` appears free in the right component",
                        subject, left_binder
                    ),
                    out,
                );
            }
            if free_names(left).contains(right_binder) {
                report(
                    format!(
                        "fork on `{}`: right binder `{}` appears free in the left component",
                        subject, right_binder
                    ),
                    out,
                );
            }
            check_process(prog, def, left, &extend(scope, &[left_binder]), out);
            check_process(prog, def, right, &extend(scope, &[right_binder]), out);
        }
        Process::Join { subject, left_binder, right_binder, body } => {
            check_name(subject, scope, out);
            if left_binder == right_binder {
                report(
                    format!("join on `{}` binds `{}` twice", subject, left_binder),
                    out,
                );
            }
            check_process(prog, def, body, &extend(scope, &[left_binder, right_binder]), out);
        }
        Process::Select { subject, binder, body, .. } => {
            check_name(subject, scope, out);
            check_process(prog, def, body, &extend(scope, &[binder]), out);
        }
        Process::Case { subject, binder, left, right, .. } => {
            check_name(subject, scope, out);
            let inner = extend(scope, &[binder]);
            check_process(prog, def, left, &inner, out);
            check_process(prog, def, right, &inner, out);
        }
        Process::Rec { subject, binder, body } | Process::Corec { subject, binder, body } => {
            check_name(subject, scope, out);
            check_process(prog, def, body, &extend(scope, &[binder]), out);
        }
        Process::Cut { channel, ann, left, right } => {
            if !ann.is_closed() {
                report(format!("cut on `{}` has an open type annotation", channel), out);
            }
            let inner = extend(scope, &[channel]);
            check_process(prog, def, left, &inner, out);
            check_process(prog, def, right, &inner, out);
        }
        Process::Choice(left, right) => {
            check_process(prog, def, left, scope, out);
            check_process(prog, def, right, scope, out);
        }
        Process::Call(name, args) => {
            let mut seen = IndexSet::new();
            for a in args {
                check_name(a, scope, out);
                if !seen.insert(a.clone()) {
                    report(
                        format!("call to `{}` passes `{}` more than once", name, a),
                        out,
                    );
                }
            }
            match prog.definitions.get(name) {
                None => report(format!("call to unknown definition `{}`", name), out),
                Some(target) => {
                    if target.params.len() != args.len() {
                        report(
                            format!(
                                "call to `{}` passes {} argument(s), definition takes {}",
                                name,
                                args.len(),
                                target.params.len()
                            ),
                            out,
                        );
                    }
                }
            }
        }
    }
}

/// Alpha-equivalence of processes: equal up to consistent renaming of bound
/// names. Free names must match exactly.
pub fn alpha_eq(p: &Process, q: &Process) -> bool {
    fn go(p: &Process, q: &Process, sp: &mut Vec<Name>, sq: &mut Vec<Name>) -> bool {
        // A name matches when both resolve to the same binder depth, or both
        // are free and equal.
        let name_eq = |x: &Name, y: &Name, sp: &Vec<Name>, sq: &Vec<Name>| -> bool {
            let dx = sp.iter().rposition(|b| b == x);
            let dy = sq.iter().rposition(|b| b == y);
            match (dx, dy) {
                (Some(i), Some(j)) => i == j,
                (None, None) => x == y,
                _ => false,
            }
        };
        match (p, q) {
            (Process::Link(a, b), Process::Link(c, d)) => {
                name_eq(a, c, sp, sq) && name_eq(b, d, sp, sq)
            }
            (Process::Fail(a), Process::Fail(b)) | (Process::Close(a), Process::Close(b)) => {
                name_eq(a, b, sp, sq)
            }
            (Process::Wait(a, pb), Process::Wait(b, qb)) => {
                name_eq(a, b, sp, sq) && go(pb, qb, sp, sq)
            }
            (
                Process::Fork { subject: s1, left_binder: l1, right_binder: r1, left: pl, right: pr },
                Process::Fork { subject: s2, left_binder: l2, right_binder: r2, left: ql, right: qr },
            ) => {
                name_eq(s1, s2, sp, sq) && {
                    sp.push(l1.clone());
                    sq.push(l2.clone());
                    let ok = go(pl, ql, sp, sq);
                    sp.pop();
                    sq.pop();
                    ok
                } && {
                    sp.push(r1.clone());
                    sq.push(r2.clone());
                    let ok = go(pr, qr, sp, sq);
                    sp.pop();
                    sq.pop();
                    ok
                }
            }
            (
                Process::Join { subject: s1, left_binder: l1, right_binder: r1, body: pb },
                Process::Join { subject: s2, left_binder: l2, right_binder: r2, body: qb },
            ) => {
                name_eq(s1, s2, sp, sq) && {
                    sp.push(l1.clone());
                    sp.push(r1.clone());
                    sq.push(l2.clone());
                    sq.push(r2.clone());
                    let ok = go(pb, qb, sp, sq);
                    sp.truncate(sp.len() - 2);
                    sq.truncate(sq.len() - 2);
                    ok
                }
            }
            (
                Process::Select { subject: s1, tag: t1, binder: b1, body: pb },
                Process::Select { subject: s2, tag: t2, binder: b2, body: qb },
            ) => {
                t1 == t2 && name_eq(s1, s2, sp, sq) && {
                    sp.push(b1.clone());
                    sq.push(b2.clone());
                    let ok = go(pb, qb, sp, sq);
                    sp.pop();
                    sq.pop();
                    ok
                }
            }
            (
                Process::Case { subject: s1, binder: b1, left: pl, right: pr, .. },
                Process::Case { subject: s2, binder: b2, left: ql, right: qr, .. },
            ) => {
                name_eq(s1, s2, sp, sq) && {
                    sp.push(b1.clone());
                    sq.push(b2.clone());
                    let ok = go(pl, ql, sp, sq) && go(pr, qr, sp, sq);
                    sp.pop();
                    sq.pop();
                    ok
                }
            }
            (
                Process::Rec { subject: s1, binder: b1, body: pb },
                Process::Rec { subject: s2, binder: b2, body: qb },
            )
            | (
                Process::Corec { subject: s1, binder: b1, body: pb },
                Process::Corec { subject: s2, binder: b2, body: qb },
            ) => {
                name_eq(s1, s2, sp, sq) && {
                    sp.push(b1.clone());
                    sq.push(b2.clone());
                    let ok = go(pb, qb, sp, sq);
                    sp.pop();
                    sq.pop();
                    ok
                }
            }
            (
                Process::Cut { channel: c1, ann: a1, left: pl, right: pr },
                Process::Cut { channel: c2, ann: a2, left: ql, right: qr },
            ) => {
                a1 == a2 && {
                    sp.push(c1.clone());
                    sq.push(c2.clone());
                    let ok = go(pl, ql, sp, sq) && go(pr, qr, sp, sq);
                    sp.pop();
                    sq.pop();
                    ok
                }
            }
            (Process::Choice(pl, pr), Process::Choice(ql, qr)) => {
                go(pl, ql, sp, sq) && go(pr, qr, sp, sq)
            }
            (Process::Call(n1, a1), Process::Call(n2, a2)) => {
                n1 == n2
                    && a1.len() == a2.len()
                    && a1.iter().zip(a2).all(|(x, y)| name_eq(x, y, sp, sq))
            }
            _ => false,
        }
    }
    go(p, q, &mut Vec::new(), &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Formula as F;

    fn sel(subject: &str, tag: Tag, body: Process) -> Process {
        Process::Select {
            subject: subject.into(),
            tag,
            binder: subject.into(),
            body: Box::new(body),
        }
    }

    /// `unfold x. (x.in1. Buyer(x) (+) x.in2. close x)`
    fn buyer_body() -> Process {
        Process::Rec {
            subject: "x".into(),
            binder: "x".into(),
            body: Box::new(Process::choice(
                sel("x", Tag::In1, Process::Call("Buyer".into(), vec!["x".into()])),
                sel("x", Tag::In2, Process::Close("x".into())),
            )),
        }
    }

    fn buyer_program() -> Program {
        let mut prog = Program::default();
        prog.definitions.insert(
            "Buyer".into(),
            Definition {
                name: "Buyer".into(),
                params: vec![("x".into(), F::mu(F::plus(F::Var(0), F::One)))],
                body: buyer_body(),
            },
        );
        prog
    }

    #[test]
    fn free_names_respects_binders() {
        let p = Process::Cut {
            channel: "x".into(),
            ann: F::One,
            left: Box::new(Process::Close("x".into())),
            right: Box::new(Process::wait("x", Process::Close("y".into()))),
        };
        let fv = free_names(&p);
        assert_eq!(fv.into_iter().collect::<Vec<_>>(), vec!["y".to_string()]);

        assert_eq!(
            free_names(&buyer_body()).into_iter().collect::<Vec<_>>(),
            vec!["x".to_string()]
        );
    }

    #[test]
    fn substitute_renames_free_occurrences_only() {
        // (x)(close x | wait x. close y): x is bound, y free.
        let p = Process::Cut {
            channel: "x".into(),
            ann: F::One,
            left: Box::new(Process::Close("x".into())),
            right: Box::new(Process::wait("x", Process::Close("y".into()))),
        };
        let q = substitute(&p, "z", "y");
        assert_eq!(
            free_names(&q).into_iter().collect::<Vec<_>>(),
            vec!["z".to_string()]
        );
        let r = substitute(&p, "z", "x");
        assert_eq!(r, p, "bound names are untouched");
    }

    #[test]
    fn substitute_avoids_capture() {
        // z.in1 (y). link y x — substituting y for x must not let the binder
        // capture the incoming name.
        let p = Process::Select {
            subject: "z".into(),
            tag: Tag::In1,
            binder: "y".into(),
            body: Box::new(Process::Link("y".into(), "x".into())),
        };
        let q = substitute(&p, "y", "x");
        let expected = Process::Select {
            subject: "z".into(),
            tag: Tag::In1,
            binder: "w".into(),
            body: Box::new(Process::Link("w".into(), "y".into())),
        };
        assert!(alpha_eq(&q, &expected), "got {:?}", q);
        let fv = free_names(&q);
        assert!(fv.contains("y") && fv.contains("z") && !fv.contains("x"));
    }

    #[test]
    fn unfold_call_renames_parameters() {
        let prog = buyer_program();
        let got = unfold_call(&prog, "Buyer", &["w".into()]).unwrap();
        let expected = Process::Rec {
            subject: "w".into(),
            binder: "w".into(),
            body: Box::new(Process::choice(
                sel("w", Tag::In1, Process::Call("Buyer".into(), vec!["w".into()])),
                sel("w", Tag::In2, Process::Close("w".into())),
            )),
        };
        assert_eq!(got, expected);
    }

    #[test]
    fn unfold_call_is_simultaneous() {
        let mut prog = Program::default();
        prog.definitions.insert(
            "Id".into(),
            Definition {
                name: "Id".into(),
                params: vec![("x".into(), F::One), ("y".into(), F::Bot)],
                body: Process::Link("x".into(), "y".into()),
            },
        );
        // Swapping arguments must swap, not collapse.
        let got = unfold_call(&prog, "Id", &["y".into(), "x".into()]).unwrap();
        assert_eq!(got, Process::Link("y".into(), "x".into()));
    }

    #[test]
    fn unfold_call_errors() {
        let prog = buyer_program();
        assert_eq!(
            unfold_call(&prog, "Nope", &[]),
            Err(AstError::UnknownDefinition("Nope".into()))
        );
        assert_eq!(
            unfold_call(&prog, "Buyer", &[]),
            Err(AstError::ArityMismatch { name: "Buyer".into(), expected: 1, found: 0 })
        );
    }

    #[test]
    fn well_formed_accepts_buyer() {
        assert_eq!(check_well_formed(&buyer_program()), Vec::new());
    }

    #[test]
    fn well_formed_catches_scoping_and_call_errors() {
        let mut prog = buyer_program();
        prog.definitions.insert(
            "Bad".into(),
            Definition {
                name: "Bad".into(),
                params: vec![("x".into(), F::One)],
                body: Process::choice(
                    Process::Close("zz".into()),
                    Process::Call("Buyer".into(), vec!["x".into(), "x".into()]),
                ),
            },
        );
        let diags = check_well_formed(&prog);
        let messages: Vec<String> = diags.iter().map(|d| d.message.clone()).collect();
        assert!(messages.iter().any(|m| m.contains("`zz` is not in scope")));
        assert!(messages.iter().any(|m| m.contains("passes `x` more than once")));
        assert!(messages.iter().any(|m| m.contains("passes 2 argument(s)")));
    }

    #[test]
    fn well_formed_catches_fork_binder_leak() {
        let mut prog = Program::default();
        prog.definitions.insert(
            "Leak".into(),
            Definition {
                name: "Leak".into(),
                params: vec![("x".into(), F::tensor(F::One, F::One))],
                body: Process::Fork {
                    subject: "x".into(),
                    left_binder: "y".into(),
                    right_binder: "z".into(),
                    left: Box::new(Process::Close("y".into())),
                    right: Box::new(Process::Close("y".into())),
                },
            },
        );
        let diags = check_well_formed(&prog);
        assert!(diags
            .iter()
            .any(|d| d.message.contains("left binder `y` appears free in the right component")));
        // The leak is also a scope error in the right component.
        assert!(diags.iter().any(|d| d.message.contains("`y` is not in scope")));
    }

    #[test]
    fn alpha_eq_quotient_binders_only() {
        let p = buyer_body();
        let q = Process::Rec {
            subject: "x".into(),
            binder: "v".into(),
            body: Box::new(Process::choice(
                Process::Select {
                    subject: "v".into(),
                    tag: Tag::In1,
                    binder: "w".into(),
                    body: Box::new(Process::Call("Buyer".into(), vec!["w".into()])),
                },
                Process::Select {
                    subject: "v".into(),
                    tag: Tag::In2,
                    binder: "u".into(),
                    body: Box::new(Process::Close("u".into())),
                },
            )),
        };
        assert!(alpha_eq(&p, &q));
        assert!(!alpha_eq(&p, &Process::Close("x".into())));
        // Different free names are different processes.
        assert!(!alpha_eq(
            &Process::Close("x".into()),
            &Process::Close("y".into())
        ));
    }
}
