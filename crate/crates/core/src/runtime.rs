//! Execution: a certified program runs as a *soup* of parallel members
//! connected by channels, reduced step by step under a fair scheduler.
//!
//! Each cut becomes a channel with two endpoint names — `x#3` for the side
//! typed by the annotation and `x#3~` for its dual — so members never share
//! a name and [`refold`] can rebuild a well-scoped process (and hence a
//! checkable program) from any intermediate soup without guessing cut
//! orientations.
//!
//! The default scheduler fires the oldest enabled channel redex (falling
//! back to the first choice or call member when no channel can fire).  That
//! policy is fair: a channel fires at most once and only finitely many
//! channels precede any given one, so an enabled communication cannot be
//! overtaken forever, and runs of pure channel steps strictly shrink the
//! soup, so pending choices and calls are always reached.  Fair termination
//! of certified programs therefore applies to every run produced here, for
//! any way of resolving the internal choices.
//!
//! Choices are resolved by a [`Policy`]: always towards the smaller rank
//! ([`Policy::min_rank`]), randomly with a patience bound after which the
//! policy turns greedy ([`Policy::random`]), or following a recorded script
//! ([`Policy::script`]), which makes traces replayable.

use std::collections::VecDeque;
use std::fmt;

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{free_names, substitute, unfold_call, AstError, Definition, Name, Process, Program, Tag};
use crate::rank::{rank_equations, rank_of, solve_rank, RankTable, RankValue};
use crate::types::{dual, Formula};

/// Which branch of a choice to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A cut channel: the key of the soup's channel map is the endpoint name
/// typed by `ann`; `right` is the endpoint name typed by the dual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub right: Name,
    pub ann: Formula,
}

/// A running program: parallel members, the channels connecting them (in
/// creation order), and the one external channel owned by the environment.
#[derive(Debug, Clone)]
pub struct Soup {
    pub members: Vec<Process>,
    pub channels: IndexMap<Name, Channel>,
    pub external: Name,
    fresh: u64,
}

impl Soup {
    fn fresh_pair(&mut self, base: &Name) -> (Name, Name) {
        let n = self.fresh;
        self.fresh += 1;
        (format!("{base}#{n}"), format!("{base}#{n}~"))
    }

    /// The soup has reached its unique terminal shape: nothing left but
    /// closing the external channel.
    pub fn is_terminated(&self) -> bool {
        self.channels.is_empty()
            && self.members.len() == 1
            && self.members[0] == Process::Close(self.external.clone())
    }
}

impl fmt::Display for Soup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<String> = self.members.iter().map(|m| m.to_string()).collect();
        write!(f, "{}", members.join("  |  "))?;
        if !self.channels.is_empty() {
            let chans: Vec<String> = self
                .channels
                .iter()
                .map(|(l, c)| format!("{l} <-> {} : {}", c.right, c.ann))
                .collect();
            write!(f, "   [{}]", chans.join(", "))?;
        }
        Ok(())
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Exactly `close` on the external channel remained.
    Terminated,
    /// No redex remained and some member is a `fail`: the program aborted
    /// through its absorbing branch.
    Failed,
    /// No redex remained in a shape a certified program cannot reach.
    StuckUnexpected,
    /// The step budget ran out first.
    FuelExhausted,
}

/// An enabled reduction.  Channel redexes fire a communication on a cut
/// channel (identified by its left endpoint name); member redexes resolve a
/// choice or unfold a call at a member position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Redex {
    Link { channel: Name },
    Unit { channel: Name },
    Pair { channel: Name },
    Sum { channel: Name },
    RecUnfold { channel: Name },
    Choice { member: usize },
    Call { member: usize },
}

/// One reduction as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    /// `r-link`, `r-unit`, `r-pair`, `r-sum`, `r-rec`, `r-choice` or
    /// `s-call`.
    pub rule: &'static str,
    pub channel: Option<Name>,
    pub member: Option<usize>,
    pub side: Option<Side>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub final_soup: Soup,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("program is not runnable: {reason}")]
    NotRunnable { reason: String },
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error("soup is malformed: {reason}")]
    Malformed { reason: String },
    #[error("soup cannot be refolded: {reason}")]
    Refold { reason: String },
}

/// Choice resolution strategy.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Always keep the branch of smaller rank (ties go left): the greedy
    /// fair strategy that heads for termination directly.
    MinRank,
    /// Resolve the first `patience` choices uniformly at random, then fall
    /// back to the min-rank rule so every run settles within bounded fuel.
    Random { rng: ChaCha8Rng, patience: u32, resolved: u32 },
    /// Follow a recorded list of sides, then fall back to the min-rank
    /// rule; replaying a trace's sides reproduces its run exactly.
    Script { sides: VecDeque<Side> },
}

impl Policy {
    pub fn min_rank() -> Policy {
        Policy::MinRank
    }

    pub fn random(seed: u64, patience: u32) -> Policy {
        Policy::Random { rng: ChaCha8Rng::seed_from_u64(seed), patience, resolved: 0 }
    }

    pub fn script(sides: impl IntoIterator<Item = Side>) -> Policy {
        Policy::Script { sides: sides.into_iter().collect() }
    }

    fn resolve(&mut self, left: &Process, right: &Process, ranks: &RankTable) -> Side {
        match self {
            Policy::MinRank => fair_choice(left, right, ranks),
            Policy::Random { rng, patience, resolved } => {
                if resolved < patience {
                    *resolved += 1;
                    if rng.gen_bool(0.5) {
                        Side::Left
                    } else {
                        Side::Right
                    }
                } else {
                    fair_choice(left, right, ranks)
                }
            }
            Policy::Script { sides } => {
                sides.pop_front().unwrap_or_else(|| fair_choice(left, right, ranks))
            }
        }
    }
}

/// The fair resolution of a choice: keep the branch of smaller rank; on a
/// tie keep the left one.
pub fn fair_choice(left: &Process, right: &Process, ranks: &RankTable) -> Side {
    let rl = rank_of(ranks, left).unwrap_or(RankValue::Infinite);
    let rr = rank_of(ranks, right).unwrap_or(RankValue::Infinite);
    if rl <= rr {
        Side::Left
    } else {
        Side::Right
    }
}

/// Registers `p` as members of the soup, flattening top-level cuts into
/// channels; returns how many members were added.
fn flatten_into(soup: &mut Soup, p: Process) -> usize {
    match p {
        Process::Cut { channel, ann, left, right } => {
            let (ln, rn) = soup.fresh_pair(&channel);
            soup.channels.insert(ln.clone(), Channel { right: rn.clone(), ann });
            let a = flatten_into(soup, substitute(&left, &ln, &channel));
            let b = flatten_into(soup, substitute(&right, &rn, &channel));
            a + b
        }
        other => {
            soup.members.push(other);
            1
        }
    }
}

/// Builds the initial soup of a program.  The program must define
/// `main(y: 1)`: one external channel of unit type.
pub fn to_soup(prog: &Program) -> Result<Soup, RunError> {
    let main = prog.main.as_ref().ok_or_else(|| RunError::NotRunnable {
        reason: "no `main` definition".into(),
    })?;
    if main.params.len() != 1 || main.params[0].1 != Formula::One {
        return Err(RunError::NotRunnable {
            reason: format!(
                "`main` must have exactly one channel of type 1, it has ({})",
                main.params
                    .iter()
                    .map(|(n, f)| format!("{n}: {f}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        });
    }
    let mut soup = Soup {
        members: Vec::new(),
        channels: IndexMap::new(),
        external: main.params[0].0.clone(),
        fresh: 0,
    };
    flatten_into(&mut soup, main.body.clone());
    Ok(soup)
}

/// What a member does at channel name `x`, when `x` is its subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Lnk,
    Cls,
    Wt,
    Fk,
    Jn,
    Sel,
    Cs,
    Rc,
    Crc,
    Fl,
}

fn action_at(p: &Process, x: &Name) -> Option<Act> {
    match p {
        Process::Link(a, b) if a == x || b == x => Some(Act::Lnk),
        Process::Close(a) if a == x => Some(Act::Cls),
        Process::Wait(a, _) if a == x => Some(Act::Wt),
        Process::Fail(a) if a == x => Some(Act::Fl),
        Process::Fork { subject, .. } if subject == x => Some(Act::Fk),
        Process::Join { subject, .. } if subject == x => Some(Act::Jn),
        Process::Select { subject, .. } if subject == x => Some(Act::Sel),
        Process::Case { subject, .. } if subject == x => Some(Act::Cs),
        Process::Rec { subject, .. } if subject == x => Some(Act::Rc),
        Process::Corec { subject, .. } if subject == x => Some(Act::Crc),
        _ => None,
    }
}

fn member_with_free(soup: &Soup, name: &Name) -> Option<usize> {
    soup.members.iter().position(|m| free_names(m).contains(name))
}

/// Every enabled redex, in the order the default scheduler considers them:
/// channels in creation order first, then choice and call members by
/// position.
pub fn eligible(soup: &Soup) -> Vec<Redex> {
    let mut out = Vec::new();
    for (ln, chan) in &soup.channels {
        let (Some(il), Some(ir)) = (member_with_free(soup, ln), member_with_free(soup, &chan.right))
        else {
            continue;
        };
        if il == ir {
            continue;
        }
        let al = action_at(&soup.members[il], ln);
        let ar = action_at(&soup.members[ir], &chan.right);
        let redex = match (al, ar) {
            (Some(Act::Lnk), _) | (_, Some(Act::Lnk)) => Some(Redex::Link { channel: ln.clone() }),
            (Some(Act::Cls), Some(Act::Wt)) | (Some(Act::Wt), Some(Act::Cls)) => {
                Some(Redex::Unit { channel: ln.clone() })
            }
            (Some(Act::Fk), Some(Act::Jn)) | (Some(Act::Jn), Some(Act::Fk)) => {
                Some(Redex::Pair { channel: ln.clone() })
            }
            (Some(Act::Sel), Some(Act::Cs)) | (Some(Act::Cs), Some(Act::Sel)) => {
                Some(Redex::Sum { channel: ln.clone() })
            }
            (Some(Act::Rc), Some(Act::Crc)) | (Some(Act::Crc), Some(Act::Rc)) => {
                Some(Redex::RecUnfold { channel: ln.clone() })
            }
            _ => None,
        };
        if let Some(r) = redex {
            out.push(r);
        }
    }
    for (i, m) in soup.members.iter().enumerate() {
        match m {
            Process::Choice(_, _) => out.push(Redex::Choice { member: i }),
            Process::Call(_, _) => out.push(Redex::Call { member: i }),
            _ => {}
        }
    }
    out
}

/// The tensor shape of a channel annotation, looking through duality.
fn tensor_components(ann: &Formula) -> Option<(Formula, Formula)> {
    match ann {
        Formula::Tensor(a, b) => Some((*a.clone(), *b.clone())),
        _ => match dual(ann) {
            Formula::Tensor(a, b) => Some((*a, *b)),
            _ => None,
        },
    }
}

fn plus_components(ann: &Formula) -> Option<(Formula, Formula)> {
    match ann {
        Formula::Plus(a, b) => Some((*a.clone(), *b.clone())),
        _ => match dual(ann) {
            Formula::Plus(a, b) => Some((*a, *b)),
            _ => None,
        },
    }
}

fn mu_form(ann: &Formula) -> Option<Formula> {
    match ann {
        Formula::Mu(_) => Some(ann.clone()),
        Formula::Nu(_) => Some(dual(ann)),
        _ => None,
    }
}

fn remove_two(soup: &mut Soup, i: usize, j: usize) -> (Process, Process) {
    debug_assert_ne!(i, j);
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    let phi = soup.members.remove(hi);
    let plo = soup.members.remove(lo);
    if i > j {
        (phi, plo)
    } else {
        (plo, phi)
    }
}

fn malformed(reason: impl Into<String>) -> RunError {
    RunError::Malformed { reason: reason.into() }
}

/// Applies a redex.  `side` is consulted only for choices.  New members are
/// appended (left-hand sides first) and new channels registered in a fixed
/// order, so applications are deterministic.
pub fn apply(
    prog: &Program,
    soup: &mut Soup,
    redex: &Redex,
    side: Option<Side>,
) -> Result<TraceStep, RunError> {
    match redex {
        Redex::Link { channel } => {
            let chan = soup
                .channels
                .get(channel)
                .cloned()
                .ok_or_else(|| malformed(format!("no channel `{channel}`")))?;
            let il = member_with_free(soup, channel)
                .ok_or_else(|| malformed(format!("`{channel}` has no left endpoint")))?;
            let ir = member_with_free(soup, &chan.right)
                .ok_or_else(|| malformed(format!("`{}` has no right endpoint", chan.right)))?;
            if il == ir {
                return Err(malformed("link endpoints in one member"));
            }
            // One endpoint is the link; the other is the arbitrary peer.
            let (link_idx, link_name, peer_idx, peer_name) =
                if action_at(&soup.members[il], channel) == Some(Act::Lnk) {
                    (il, channel.clone(), ir, chan.right.clone())
                } else if action_at(&soup.members[ir], &chan.right) == Some(Act::Lnk) {
                    (ir, chan.right.clone(), il, channel.clone())
                } else {
                    return Err(malformed(format!("no link endpoint on `{channel}`")));
                };
            let Process::Link(a, b) = soup.members[link_idx].clone() else {
                return Err(malformed("link member changed shape"));
            };
            let other = if a == link_name { b } else { a };
            let (_, peer) = remove_two(soup, link_idx, peer_idx);
            soup.channels.shift_remove(channel);
            let renamed = substitute(&peer, &other, &peer_name);
            flatten_into(soup, renamed);
            Ok(TraceStep {
                rule: "r-link",
                channel: Some(channel.clone()),
                member: None,
                side: None,
                detail: format!("r-link on {channel}: forwarded to {other}"),
            })
        }
        Redex::Unit { channel } => {
            let chan = soup
                .channels
                .get(channel)
                .cloned()
                .ok_or_else(|| malformed(format!("no channel `{channel}`")))?;
            let il = member_with_free(soup, channel)
                .ok_or_else(|| malformed(format!("`{channel}` has no left endpoint")))?;
            let ir = member_with_free(soup, &chan.right)
                .ok_or_else(|| malformed(format!("`{}` has no right endpoint", chan.right)))?;
            let (ml, mr) = remove_two(soup, il, ir);
            let body = match (ml, mr) {
                (Process::Close(_), Process::Wait(_, b)) | (Process::Wait(_, b), Process::Close(_)) => *b,
                _ => return Err(malformed(format!("`{channel}` is not a close/wait pair"))),
            };
            soup.channels.shift_remove(channel);
            flatten_into(soup, body);
            Ok(TraceStep {
                rule: "r-unit",
                channel: Some(channel.clone()),
                member: None,
                side: None,
                detail: format!("r-unit on {channel}"),
            })
        }
        Redex::Pair { channel } => {
            let chan = soup
                .channels
                .get(channel)
                .cloned()
                .ok_or_else(|| malformed(format!("no channel `{channel}`")))?;
            let il = member_with_free(soup, channel)
                .ok_or_else(|| malformed(format!("`{channel}` has no left endpoint")))?;
            let ir = member_with_free(soup, &chan.right)
                .ok_or_else(|| malformed(format!("`{}` has no right endpoint", chan.right)))?;
            let (ml, mr) = remove_two(soup, il, ir);
            let (fork, join) = match (&ml, &mr) {
                (Process::Fork { .. }, Process::Join { .. }) => (ml, mr),
                (Process::Join { .. }, Process::Fork { .. }) => (mr, ml),
                _ => return Err(malformed(format!("`{channel}` is not a fork/join pair"))),
            };
            let Process::Fork { left_binder: fy, right_binder: fz, left: p1, right: p2, .. } = fork
            else {
                unreachable!()
            };
            let Process::Join { left_binder: jy, right_binder: jz, body: q, .. } = join else {
                unreachable!()
            };
            let (a, b) = tensor_components(&chan.ann)
                .ok_or_else(|| malformed(format!("`{channel}: {}` cannot carry a pair", chan.ann)))?;
            let (ly, ry) = soup.fresh_pair(&fy);
            let (lz, rz) = soup.fresh_pair(&fz);
            soup.channels.shift_remove(channel);
            soup.channels.insert(ly.clone(), Channel { right: ry.clone(), ann: a });
            soup.channels.insert(lz.clone(), Channel { right: rz.clone(), ann: b });
            let p1 = substitute(&p1, &ly, &fy);
            let p2 = substitute(&p2, &lz, &fz);
            let q = substitute(&substitute(&q, &ry, &jy), &rz, &jz);
            flatten_into(soup, p1);
            flatten_into(soup, p2);
            flatten_into(soup, q);
            Ok(TraceStep {
                rule: "r-pair",
                channel: Some(channel.clone()),
                member: None,
                side: None,
                detail: format!("r-pair on {channel}: opened {ly} and {lz}"),
            })
        }
        Redex::Sum { channel } => {
            let chan = soup
                .channels
                .get(channel)
                .cloned()
                .ok_or_else(|| malformed(format!("no channel `{channel}`")))?;
            let il = member_with_free(soup, channel)
                .ok_or_else(|| malformed(format!("`{channel}` has no left endpoint")))?;
            let ir = member_with_free(soup, &chan.right)
                .ok_or_else(|| malformed(format!("`{}` has no right endpoint", chan.right)))?;
            let (ml, mr) = remove_two(soup, il, ir);
            let (sel, cas) = match (&ml, &mr) {
                (Process::Select { .. }, Process::Case { .. }) => (ml, mr),
                (Process::Case { .. }, Process::Select { .. }) => (mr, ml),
                _ => return Err(malformed(format!("`{channel}` is not a select/case pair"))),
            };
            let Process::Select { tag, binder: sw, body: sbody, .. } = sel else { unreachable!() };
            let Process::Case { binder: cw, left: cl, right: cr, .. } = cas else { unreachable!() };
            let (a1, a2) = plus_components(&chan.ann)
                .ok_or_else(|| malformed(format!("`{channel}: {}` cannot carry a tag", chan.ann)))?;
            let (chosen_ann, branch) = match tag {
                Tag::In1 => (a1, *cl),
                Tag::In2 => (a2, *cr),
            };
            let (lw, rw) = soup.fresh_pair(&sw);
            soup.channels.shift_remove(channel);
            soup.channels.insert(lw.clone(), Channel { right: rw.clone(), ann: chosen_ann });
            let sbody = substitute(&sbody, &lw, &sw);
            let branch = substitute(&branch, &rw, &cw);
            flatten_into(soup, sbody);
            flatten_into(soup, branch);
            Ok(TraceStep {
                rule: "r-sum",
                channel: Some(channel.clone()),
                member: None,
                side: None,
                detail: format!("r-sum on {channel}: took {tag}, opened {lw}"),
            })
        }
        Redex::RecUnfold { channel } => {
            let chan = soup
                .channels
                .get(channel)
                .cloned()
                .ok_or_else(|| malformed(format!("no channel `{channel}`")))?;
            let il = member_with_free(soup, channel)
                .ok_or_else(|| malformed(format!("`{channel}` has no left endpoint")))?;
            let ir = member_with_free(soup, &chan.right)
                .ok_or_else(|| malformed(format!("`{}` has no right endpoint", chan.right)))?;
            let (ml, mr) = remove_two(soup, il, ir);
            let (rec, corec) = match (&ml, &mr) {
                (Process::Rec { .. }, Process::Corec { .. }) => (ml, mr),
                (Process::Corec { .. }, Process::Rec { .. }) => (mr, ml),
                _ => return Err(malformed(format!("`{channel}` is not a rec/corec pair"))),
            };
            let Process::Rec { binder: rb, body: rbody, .. } = rec else { unreachable!() };
            let Process::Corec { binder: cb, body: cbody, .. } = corec else { unreachable!() };
            let mu = mu_form(&chan.ann)
                .ok_or_else(|| malformed(format!("`{channel}: {}` cannot be unfolded", chan.ann)))?;
            let unfolded = mu.unfold().expect("a least fixpoint unfolds");
            let (lw, rw) = soup.fresh_pair(&rb);
            soup.channels.shift_remove(channel);
            soup.channels.insert(lw.clone(), Channel { right: rw.clone(), ann: unfolded });
            let rbody = substitute(&rbody, &lw, &rb);
            let cbody = substitute(&cbody, &rw, &cb);
            flatten_into(soup, rbody);
            flatten_into(soup, cbody);
            Ok(TraceStep {
                rule: "r-rec",
                channel: Some(channel.clone()),
                member: None,
                side: None,
                detail: format!("r-rec on {channel}: opened {lw}"),
            })
        }
        Redex::Choice { member } => {
            let side = side.ok_or_else(|| malformed("a choice redex needs a side"))?;
            let Some(Process::Choice(l, r)) = soup.members.get(*member).cloned() else {
                return Err(malformed(format!("member {member} is not a choice")));
            };
            soup.members.remove(*member);
            let kept = match side {
                Side::Left => *l,
                Side::Right => *r,
            };
            flatten_into(soup, kept);
            Ok(TraceStep {
                rule: "r-choice",
                channel: None,
                member: Some(*member),
                side: Some(side),
                detail: format!(
                    "r-choice at member {member}: kept the {} branch",
                    match side {
                        Side::Left => "left",
                        Side::Right => "right",
                    }
                ),
            })
        }
        Redex::Call { member } => {
            let Some(Process::Call(name, args)) = soup.members.get(*member).cloned() else {
                return Err(malformed(format!("member {member} is not a call")));
            };
            let body = unfold_call(prog, &name, &args)?;
            soup.members.remove(*member);
            flatten_into(soup, body);
            Ok(TraceStep {
                rule: "s-call",
                channel: None,
                member: Some(*member),
                side: None,
                detail: format!("s-call at member {member}: unfolded {name}"),
            })
        }
    }
}

/// Runs a program to an outcome, resolving choices with `policy` and firing
/// at most `fuel` steps.
pub fn run(prog: &Program, policy: &mut Policy, fuel: u64) -> Result<Trace, RunError> {
    let ranks = solve_rank(&rank_equations(prog));
    let mut soup = to_soup(prog)?;
    let mut steps = Vec::new();
    for _ in 0..fuel {
        if soup.is_terminated() {
            return Ok(Trace { steps, outcome: Outcome::Terminated, final_soup: soup });
        }
        let redexes = eligible(&soup);
        let Some(redex) = redexes.first() else {
            let outcome = if soup.members.iter().any(|m| matches!(m, Process::Fail(_))) {
                Outcome::Failed
            } else {
                Outcome::StuckUnexpected
            };
            return Ok(Trace { steps, outcome, final_soup: soup });
        };
        let side = match redex {
            Redex::Choice { member } => {
                let Process::Choice(l, r) = &soup.members[*member] else { unreachable!() };
                Some(policy.resolve(l, r, &ranks))
            }
            _ => None,
        };
        match apply(prog, &mut soup, redex, side) {
            Ok(step) => steps.push(step),
            Err(RunError::Malformed { .. }) => {
                return Ok(Trace { steps, outcome: Outcome::StuckUnexpected, final_soup: soup })
            }
            Err(e) => return Err(e),
        }
    }
    let outcome = if soup.is_terminated() { Outcome::Terminated } else { Outcome::FuelExhausted };
    Ok(Trace { steps, outcome, final_soup: soup })
}

/// Runs a copy of the soup to completion under the min-rank policy; the
/// original is untouched.  Useful to confirm that an intermediate state can
/// still terminate.
pub fn probe_termination(prog: &Program, soup: &Soup, fuel: u64) -> Outcome {
    let ranks = solve_rank(&rank_equations(prog));
    let mut probe = soup.clone();
    for _ in 0..fuel {
        if probe.is_terminated() {
            return Outcome::Terminated;
        }
        let redexes = eligible(&probe);
        let Some(redex) = redexes.first().cloned() else {
            return if probe.members.iter().any(|m| matches!(m, Process::Fail(_))) {
                Outcome::Failed
            } else {
                Outcome::StuckUnexpected
            };
        };
        let side = match &redex {
            Redex::Choice { member } => {
                let Process::Choice(l, r) = &probe.members[*member] else { unreachable!() };
                Some(fair_choice(l, r, &ranks))
            }
            _ => None,
        };
        if apply(prog, &mut probe, &redex, side).is_err() {
            return Outcome::StuckUnexpected;
        }
    }
    if probe.is_terminated() {
        Outcome::Terminated
    } else {
        Outcome::FuelExhausted
    }
}

/// Rebuilds a single process from the soup by folding every channel back
/// into a cut (newest first).  The result has only the external channel
/// free; substituting it for `main`'s body yields a program that can be
/// type-checked again, which is how runs are audited mid-flight.
pub fn refold(soup: &Soup) -> Result<Process, RunError> {
    let mut members = soup.members.clone();
    for (ln, chan) in soup.channels.iter().rev() {
        let il = members
            .iter()
            .position(|m| free_names(m).contains(ln))
            .ok_or_else(|| RunError::Refold { reason: format!("`{ln}` has no left endpoint") })?;
        let ir = members
            .iter()
            .position(|m| free_names(m).contains(&chan.right))
            .ok_or_else(|| RunError::Refold {
                reason: format!("`{}` has no right endpoint", chan.right),
            })?;
        if il == ir {
            return Err(RunError::Refold {
                reason: format!("both endpoints of `{ln}` are in one member"),
            });
        }
        let (hi, lo) = if il > ir { (il, ir) } else { (ir, il) };
        let second = members.remove(hi);
        let first = members.remove(lo);
        let (left, right) = if il < ir { (first, second) } else { (second, first) };
        members.push(Process::Cut {
            channel: ln.clone(),
            ann: chan.ann.clone(),
            left: Box::new(left),
            right: Box::new(substitute(&right, ln, &chan.right)),
        });
    }
    match members.len() {
        1 => Ok(members.pop().unwrap()),
        n => Err(RunError::Refold { reason: format!("soup is split into {n} disconnected parts") }),
    }
}

/// The program whose `main` body is the refolded soup: the whole-program
/// snapshot of an intermediate state, ready for re-checking.
pub fn refolded_program(prog: &Program, soup: &Soup) -> Result<Program, RunError> {
    let main = prog.main.as_ref().ok_or_else(|| RunError::NotRunnable {
        reason: "no `main` definition".into(),
    })?;
    let body = refold(soup)?;
    Ok(Program {
        definitions: prog.definitions.clone(),
        main: Some(Definition {
            name: main.name.clone(),
            params: main.params.clone(),
            body,
        }),
    })
}
