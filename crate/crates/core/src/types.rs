//! Formulas, addresses and the operations on them that the checker is built
//! from: duality, unfolding, the step relation on located types, the
//! subformula order, Fischer-Ladner closures and the priority assignment.
//!
//! Binders use de Bruijn indices internally, so structural equality *is*
//! alpha-equivalence and the derived `Eq`/`Hash`/`Ord` are the semantic ones.
//! Variable names only exist at the parser/printer boundary.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// A session type formula. `Var(k)` is a de Bruijn index: `k` enclosing
/// `Mu`/`Nu` binders up.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    /// `0` — empty choice, no rule can introduce it.
    Zero,
    /// `top` — consumes any context.
    Top,
    /// `1` — close.
    One,
    /// `bot` — wait.
    Bot,
    /// `+` — internal choice (select).
    Plus(Box<Formula>, Box<Formula>),
    /// `&` — external choice (case).
    With(Box<Formula>, Box<Formula>),
    /// `*` — pair output (fork).
    Tensor(Box<Formula>, Box<Formula>),
    /// `par` — pair input (join).
    Par(Box<Formula>, Box<Formula>),
    /// `mu X. body` — least fixpoint, the output role.
    Mu(Box<Formula>),
    /// `nu X. body` — greatest fixpoint, the input role.
    Nu(Box<Formula>),
    Var(u32),
}

impl Formula {
    /// Convenience constructors that keep call sites free of `Box::new`.
    pub fn plus(a: Formula, b: Formula) -> Formula {
        Formula::Plus(Box::new(a), Box::new(b))
    }
    pub fn with(a: Formula, b: Formula) -> Formula {
        Formula::With(Box::new(a), Box::new(b))
    }
    pub fn tensor(a: Formula, b: Formula) -> Formula {
        Formula::Tensor(Box::new(a), Box::new(b))
    }
    pub fn par(a: Formula, b: Formula) -> Formula {
        Formula::Par(Box::new(a), Box::new(b))
    }
    pub fn mu(body: Formula) -> Formula {
        Formula::Mu(Box::new(body))
    }
    pub fn nu(body: Formula) -> Formula {
        Formula::Nu(Box::new(body))
    }

    pub fn is_fixpoint(&self) -> bool {
        matches!(self, Formula::Mu(_) | Formula::Nu(_))
    }

    /// Number of nodes in the syntax tree.
    pub fn size(&self) -> usize {
        match self {
            Formula::Zero | Formula::Top | Formula::One | Formula::Bot | Formula::Var(_) => 1,
            Formula::Plus(a, b)
            | Formula::With(a, b)
            | Formula::Tensor(a, b)
            | Formula::Par(a, b) => 1 + a.size() + b.size(),
            Formula::Mu(a) | Formula::Nu(a) => 1 + a.size(),
        }
    }

    /// True when no `Var` escapes its binder.
    pub fn is_closed(&self) -> bool {
        fn go(f: &Formula, depth: u32) -> bool {
            match f {
                Formula::Var(k) => *k < depth,
                Formula::Zero | Formula::Top | Formula::One | Formula::Bot => true,
                Formula::Plus(a, b)
                | Formula::With(a, b)
                | Formula::Tensor(a, b)
                | Formula::Par(a, b) => go(a, depth) && go(b, depth),
                Formula::Mu(a) | Formula::Nu(a) => go(a, depth + 1),
            }
        }
        go(self, 0)
    }

    /// One unfolding of a fixpoint: `mu X. body` becomes `body[mu X. body / X]`
    /// (and likewise for `nu`). Returns `None` on non-fixpoints.
    pub fn unfold(&self) -> Option<Formula> {
        match self {
            Formula::Mu(body) | Formula::Nu(body) => Some(subst_formula(body, 0, self)),
            _ => None,
        }
    }
}

/// Dual of a formula: swaps `0`/`top`, `1`/`bot`, `+`/`&`, `*`/`par` and
/// `mu`/`nu`, leaving variables fixed.
pub fn dual(f: &Formula) -> Formula {
    match f {
        Formula::Zero => Formula::Top,
        Formula::Top => Formula::Zero,
        Formula::One => Formula::Bot,
        Formula::Bot => Formula::One,
        Formula::Plus(a, b) => Formula::with(dual(a), dual(b)),
        Formula::With(a, b) => Formula::plus(dual(a), dual(b)),
        Formula::Tensor(a, b) => Formula::par(dual(a), dual(b)),
        Formula::Par(a, b) => Formula::tensor(dual(a), dual(b)),
        Formula::Mu(a) => Formula::Nu(Box::new(dual(a))),
        Formula::Nu(a) => Formula::Mu(Box::new(dual(a))),
        Formula::Var(k) => Formula::Var(*k),
    }
}

/// Capture-free substitution of `replacement` for the variable bound `var`
/// binders above `body`'s root. The replacement must be closed, which is the
/// only case unfolding ever needs; closedness makes index shifting a no-op.
pub fn subst_formula(body: &Formula, var: u32, replacement: &Formula) -> Formula {
    debug_assert!(replacement.is_closed());
    match body {
        Formula::Var(k) if *k == var => replacement.clone(),
        Formula::Var(k) => Formula::Var(*k),
        Formula::Zero | Formula::Top | Formula::One | Formula::Bot => body.clone(),
        Formula::Plus(a, b) => Formula::plus(
            subst_formula(a, var, replacement),
            subst_formula(b, var, replacement),
        ),
        Formula::With(a, b) => Formula::with(
            subst_formula(a, var, replacement),
            subst_formula(b, var, replacement),
        ),
        Formula::Tensor(a, b) => Formula::tensor(
            subst_formula(a, var, replacement),
            subst_formula(b, var, replacement),
        ),
        Formula::Par(a, b) => Formula::par(
            subst_formula(a, var, replacement),
            subst_formula(b, var, replacement),
        ),
        Formula::Mu(a) => Formula::mu(subst_formula(a, var + 1, replacement)),
        Formula::Nu(a) => Formula::nu(subst_formula(a, var + 1, replacement)),
    }
}

/// One letter of an address word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    /// Fixpoint unfolding.
    I,
    /// Left component of a binary connective.
    L,
    /// Right component.
    R,
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dir::I => write!(f, "i"),
            Dir::L => write!(f, "l"),
            Dir::R => write!(f, "r"),
        }
    }
}

/// The address of a located type: an atomic base (possibly dualized) followed
/// by a word over `{i, l, r}`. Dualization sits on the base only; stepping
/// into components extends the word on both a type and its dual alike.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub base: u32,
    pub dualized: bool,
    pub word: Vec<Dir>,
}

impl Address {
    pub fn new(base: u32, dualized: bool) -> Address {
        Address { base, dualized, word: Vec::new() }
    }

    /// The address with one more letter.
    pub fn child(&self, d: Dir) -> Address {
        let mut word = self.word.clone();
        word.push(d);
        Address { base: self.base, dualized: self.dualized, word }
    }

    /// Dual address: flips the bar on the base, keeps the word.
    pub fn dual(&self) -> Address {
        Address { base: self.base, dualized: !self.dualized, word: self.word.clone() }
    }

    /// True iff `self` is a strict prefix of `other` (same base, same bar,
    /// strictly shorter word that `other`'s word extends).
    pub fn is_strict_prefix_of(&self, other: &Address) -> bool {
        self.base == other.base
            && self.dualized == other.dualized
            && self.word.len() < other.word.len()
            && other.word[..self.word.len()] == self.word[..]
    }
}

/// Base names avoid the word letters `i`, `l`, `r` so a printed address reads
/// unambiguously.
fn base_name(base: u32) -> String {
    const LETTERS: &[char] = &[
        'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'j', 'k', 'm', 'n', 'o', 'p', 'q', 's', 't', 'u',
        'v', 'w', 'x', 'y', 'z',
    ];
    let idx = base as usize;
    let letter = LETTERS[idx % LETTERS.len()];
    if idx < LETTERS.len() {
        letter.to_string()
    } else {
        format!("{}{}", letter, idx / LETTERS.len())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dualized {
            write!(f, "~")?;
        }
        write!(f, "{}", base_name(self.base))?;
        for d in &self.word {
            write!(f, "{}", d)?;
        }
        Ok(())
    }
}

/// A located type: a formula together with the address recording where in the
/// original annotation it came from. Threads are sequences of these.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Type {
    pub formula: Formula,
    pub address: Address,
}

impl Type {
    pub fn new(formula: Formula, address: Address) -> Type {
        Type { formula, address }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.formula, self.address)
    }
}

/// The immediate successors of a located type under the step relation:
/// binary connectives step to their components at `l`/`r`, fixpoints to their
/// unfolding at `i`, units and variables to nothing. Never reflexive.
pub fn type_steps(t: &Type) -> Vec<Type> {
    match &t.formula {
        Formula::Plus(a, b)
        | Formula::With(a, b)
        | Formula::Tensor(a, b)
        | Formula::Par(a, b) => vec![
            Type::new((**a).clone(), t.address.child(Dir::L)),
            Type::new((**b).clone(), t.address.child(Dir::R)),
        ],
        Formula::Mu(_) | Formula::Nu(_) => {
            vec![Type::new(t.formula.unfold().unwrap(), t.address.child(Dir::I))]
        }
        Formula::Zero | Formula::Top | Formula::One | Formula::Bot | Formula::Var(_) => Vec::new(),
    }
}

/// The subformula order: `a` is a subterm of `b` up to renaming of bound
/// variables. Reflexive. On de Bruijn trees the renaming is already quotiented
/// away, so this is a plain subtree search.
pub fn subformula_leq(a: &Formula, b: &Formula) -> bool {
    if a == b {
        return true;
    }
    match b {
        Formula::Zero | Formula::Top | Formula::One | Formula::Bot | Formula::Var(_) => false,
        Formula::Plus(l, r)
        | Formula::With(l, r)
        | Formula::Tensor(l, r)
        | Formula::Par(l, r) => subformula_leq(a, l) || subformula_leq(a, r),
        Formula::Mu(body) | Formula::Nu(body) => subformula_leq(a, body),
    }
}

/// The minimum of a set of formulas under the subformula order, if it has
/// one: the element below every other. Returns `None` when the set is empty
/// or no element is comparable to all the rest.
pub fn min_formula<'a, I>(set: I) -> Option<&'a Formula>
where
    I: IntoIterator<Item = &'a Formula>,
{
    let items: Vec<&Formula> = set.into_iter().collect();
    items
        .iter()
        .find(|cand| items.iter().all(|other| subformula_leq(cand, other)))
        .copied()
}

/// A Fischer-Ladner closure: the finite set of formulas reachable from a seed
/// by taking components of connectives and unfoldings of fixpoints. Element
/// order is the deterministic discovery order from the seed.
#[derive(Debug, Clone)]
pub struct Closure {
    elements: Vec<Formula>,
    index: HashMap<Formula, usize>,
}

impl Closure {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.index.contains_key(f)
    }

    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Formula> {
        self.elements.iter()
    }

    /// The neutral priority: one more than twice the closure size, odd and
    /// strictly larger than the priority of any formula in the closure.
    pub fn neutral_priority(&self) -> u32 {
        2 * self.len() as u32 + 1
    }
}

/// Closure of a single seed formula.
pub fn closure_of(seed: &Formula) -> Closure {
    closure_of_all(std::iter::once(seed))
}

/// Closure of several seeds at once (a derivation contributes every
/// annotation, and the dual of each, as seeds).
pub fn closure_of_all<'a, I>(seeds: I) -> Closure
where
    I: IntoIterator<Item = &'a Formula>,
{
    let mut elements: Vec<Formula> = Vec::new();
    let mut index: HashMap<Formula, usize> = HashMap::new();
    let mut queue: Vec<Formula> = Vec::new();
    let push = |f: Formula,
                    elements: &mut Vec<Formula>,
                    index: &mut HashMap<Formula, usize>,
                    queue: &mut Vec<Formula>| {
        if !index.contains_key(&f) {
            index.insert(f.clone(), elements.len());
            elements.push(f.clone());
            queue.push(f);
        }
    };
    for seed in seeds {
        debug_assert!(seed.is_closed(), "closure seeds must be closed formulas");
        push(seed.clone(), &mut elements, &mut index, &mut queue);
    }
    let mut cursor = 0;
    while cursor < queue.len() {
        let f = queue[cursor].clone();
        cursor += 1;
        match &f {
            Formula::Plus(a, b)
            | Formula::With(a, b)
            | Formula::Tensor(a, b)
            | Formula::Par(a, b) => {
                push((**a).clone(), &mut elements, &mut index, &mut queue);
                push((**b).clone(), &mut elements, &mut index, &mut queue);
            }
            Formula::Mu(_) | Formula::Nu(_) => {
                push(f.unfold().unwrap(), &mut elements, &mut index, &mut queue);
            }
            _ => {}
        }
    }
    Closure { elements, index }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypesError {
    #[error("formula {0} is not in the closure")]
    FormulaNotInClosure(String),
}

/// Priority of a formula relative to a closure.
///
/// Fixpoint formulas are topologically sorted extending the subformula order
/// (ties broken by size, then by display string, so the assignment is
/// deterministic); a fixpoint at position `p` gets priority `2p` if it is a
/// `nu` and `2p + 1` if it is a `mu`. Everything else gets the odd neutral
/// priority `2 * |closure| + 1`. Smaller priorities are more significant, and
/// the minimum priority seen infinitely often decides: even means the
/// dominant formula is a `nu`.
pub fn priority(c: &Closure, f: &Formula) -> Result<u32, TypesError> {
    if !c.contains(f) {
        return Err(TypesError::FormulaNotInClosure(f.to_string()));
    }
    if !f.is_fixpoint() {
        return Ok(c.neutral_priority());
    }
    let order = fixpoint_order(c);
    let pos = order
        .iter()
        .position(|g| g == f)
        .expect("fixpoint in closure must appear in the fixpoint order") as u32;
    let parity = match f {
        Formula::Nu(_) => 0,
        Formula::Mu(_) => 1,
        _ => unreachable!(),
    };
    Ok(2 * pos + parity)
}

/// Kahn topological sort of the closure's fixpoints under strict subformula
/// containment, picking the smallest ready node (by size, then display) at
/// every step.
fn fixpoint_order(c: &Closure) -> Vec<Formula> {
    let fixpoints: Vec<&Formula> = c.iter().filter(|f| f.is_fixpoint()).collect();
    let n = fixpoints.len();
    // precedes[j] lists the positions that must come before j.
    let mut indegree = vec![0usize; n];
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && subformula_leq(fixpoints[i], fixpoints[j]) {
                succs[i].push(j);
                indegree[j] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while !ready.is_empty() {
        ready.sort_by_key(|&i| (fixpoints[i].size(), fixpoints[i].to_string()));
        let next = ready.remove(0);
        out.push(fixpoints[next].clone());
        for &j in &succs[next] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.push(j);
            }
        }
    }
    debug_assert_eq!(out.len(), n, "subformula order on fixpoints must be acyclic");
    out
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn var_display(level: u32) -> String {
    const NAMES: &[&str] = &["X", "Y", "Z", "U", "V", "W"];
    let idx = level as usize;
    if idx < NAMES.len() {
        NAMES[idx].to_string()
    } else {
        format!("{}{}", NAMES[idx % NAMES.len()], idx / NAMES.len())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Precedence: 0 = fixpoint bodies (maximally right), 1 = `+`/`&`,
        // 2 = `*`/`par`, 3 = atoms. Binary operators are left-associative;
        // mixing different operators of the same level is always
        // parenthesized so the output never relies on that associativity.
        fn go(
            x: &Formula,
            depth: u32,
            min_prec: u8,
            out: &mut fmt::Formatter<'_>,
        ) -> fmt::Result {
            let prec = match x {
                Formula::Mu(_) | Formula::Nu(_) => 0,
                Formula::Plus(_, _) | Formula::With(_, _) => 1,
                Formula::Tensor(_, _) | Formula::Par(_, _) => 2,
                _ => 3,
            };
            let parens = prec < min_prec;
            if parens {
                write!(out, "(")?;
            }
            match x {
                Formula::Zero => write!(out, "0")?,
                Formula::Top => write!(out, "top")?,
                Formula::One => write!(out, "1")?,
                Formula::Bot => write!(out, "bot")?,
                Formula::Var(k) => {
                    let level = depth
                        .checked_sub(k + 1)
                        .expect("free de Bruijn index escaped its binder while printing");
                    write!(out, "{}", var_display(level))?
                }
                Formula::Plus(a, b) | Formula::With(a, b) => {
                    let op = if matches!(x, Formula::Plus(_, _)) { "+" } else { "&" };
                    // Same operator on the left keeps level 1; anything else
                    // is forced up a level (i.e. parenthesized if binary).
                    // A `par` under an additive is always parenthesized: it
                    // is a word, and `bot par X & bot` reads badly.
                    let sub_min = |c: &Formula, dflt: u8| {
                        if matches!(c, Formula::Par(_, _)) { 3 } else { dflt }
                    };
                    let left_min = if same_op(a, x) { 1 } else { sub_min(a, 2) };
                    go(a, depth, left_min, out)?;
                    write!(out, " {} ", op)?;
                    go(b, depth, sub_min(b, 2), out)?;
                }
                Formula::Tensor(a, b) | Formula::Par(a, b) => {
                    let op = if matches!(x, Formula::Tensor(_, _)) { "*" } else { "par" };
                    let left_min = if same_op(a, x) { 2 } else { 3 };
                    go(a, depth, left_min, out)?;
                    write!(out, " {} ", op)?;
                    go(b, depth, 3, out)?;
                }
                Formula::Mu(body) | Formula::Nu(body) => {
                    let kw = if matches!(x, Formula::Mu(_)) { "mu" } else { "nu" };
                    write!(out, "{} {}. ", kw, var_display(depth))?;
                    go(body, depth + 1, 0, out)?;
                }
            }
            if parens {
                write!(out, ")")?;
            }
            Ok(())
        }
        fn same_op(child: &Formula, parent: &Formula) -> bool {
            matches!(
                (child, parent),
                (Formula::Plus(_, _), Formula::Plus(_, _))
                    | (Formula::With(_, _), Formula::With(_, _))
                    | (Formula::Tensor(_, _), Formula::Tensor(_, _))
                    | (Formula::Par(_, _), Formula::Par(_, _))
            )
        }
        go(self, 0, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Formula as F;

    /// `mu X. X + 1` — the buyer protocol.
    fn mu_x_plus_one() -> Formula {
        F::mu(F::plus(F::Var(0), F::One))
    }

    /// `nu X. X & bot` — its dual.
    fn nu_x_with_bot() -> Formula {
        F::nu(F::with(F::Var(0), F::Bot))
    }

    #[test]
    fn duality_on_units_and_connectives() {
        assert_eq!(dual(&F::Zero), F::Top);
        assert_eq!(dual(&F::Top), F::Zero);
        assert_eq!(dual(&F::One), F::Bot);
        assert_eq!(dual(&F::Bot), F::One);
        assert_eq!(
            dual(&F::plus(F::One, F::tensor(F::One, F::One))),
            F::with(F::Bot, F::par(F::Bot, F::Bot))
        );
        assert_eq!(dual(&mu_x_plus_one()), nu_x_with_bot());
    }

    #[test]
    fn unfolding_substitutes_the_whole_fixpoint() {
        let phi = mu_x_plus_one();
        assert_eq!(phi.unfold().unwrap(), F::plus(phi.clone(), F::One));
        let psi = nu_x_with_bot();
        assert_eq!(psi.unfold().unwrap(), F::with(psi.clone(), F::Bot));
    }

    #[test]
    fn type_steps_extend_addresses_one_letter_at_a_time() {
        let phi = mu_x_plus_one();
        let a = Address::new(0, false);
        let t0 = Type::new(phi.clone(), a.clone());

        let s1 = type_steps(&t0);
        assert_eq!(s1.len(), 1);
        assert_eq!(s1[0].formula, F::plus(phi.clone(), F::One));
        assert_eq!(s1[0].address, a.child(Dir::I));

        let s2 = type_steps(&s1[0]);
        assert_eq!(s2.len(), 2);
        assert_eq!(s2[0], Type::new(phi.clone(), a.child(Dir::I).child(Dir::L)));
        assert_eq!(s2[1], Type::new(F::One, a.child(Dir::I).child(Dir::R)));

        assert!(type_steps(&s2[1]).is_empty());
    }

    #[test]
    fn address_display_and_duality() {
        let a = Address::new(0, false).child(Dir::I).child(Dir::L);
        assert_eq!(a.to_string(), "ail");
        assert_eq!(a.dual().to_string(), "~ail");
        assert_eq!(a.dual().dual(), a);
        assert!(Address::new(0, false).is_strict_prefix_of(&a));
        assert!(!a.is_strict_prefix_of(&a));
        assert!(!Address::new(1, false).is_strict_prefix_of(&a));
    }

    #[test]
    fn closure_of_buyer_protocol() {
        let phi = mu_x_plus_one();
        let c = closure_of(&phi);
        let expected = vec![phi.clone(), F::plus(phi.clone(), F::One), F::One];
        assert_eq!(c.iter().cloned().collect::<Vec<_>>(), expected);
        assert_eq!(c.neutral_priority(), 7);
    }

    #[test]
    fn closure_of_seller_protocol() {
        let psi = nu_x_with_bot();
        let c = closure_of(&psi);
        let expected = vec![psi.clone(), F::with(psi.clone(), F::Bot), F::Bot];
        assert_eq!(c.iter().cloned().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn subformula_order_distinguishes_nested_fixpoints() {
        // phi = mu X. nu Y. X + Y  and  psi = nu Y. phi + Y (its unfolding's
        // outer nu): phi is a subformula of psi, but not conversely.
        let phi = F::mu(F::nu(F::plus(F::Var(1), F::Var(0))));
        let psi = F::nu(F::plus(phi.clone(), F::Var(0)));
        assert!(subformula_leq(&phi, &psi));
        assert!(!subformula_leq(&psi, &phi));
        assert!(subformula_leq(&phi, &phi));
        assert!(subformula_leq(&F::One, &F::plus(F::Bot, F::One)));
        assert!(!subformula_leq(&F::plus(F::Bot, F::One), &F::One));
    }

    #[test]
    fn min_formula_on_thread_recurrence_sets() {
        // phi = nu X. mu Y. X + Y, psi = mu Y. phi + Y. A thread that hits
        // {phi, psi, phi + psi} infinitely often has minimum phi (a nu); one
        // that hits {psi, phi + psi} has minimum psi (a mu).
        let phi = F::nu(F::mu(F::plus(F::Var(1), F::Var(0))));
        let psi = F::mu(F::plus(phi.clone(), F::Var(0)));
        let sum = F::plus(phi.clone(), psi.clone());

        let set1 = [phi.clone(), psi.clone(), sum.clone()];
        assert_eq!(min_formula(set1.iter()), Some(&phi));
        let set2 = [psi.clone(), sum.clone()];
        assert_eq!(min_formula(set2.iter()), Some(&psi));

        // Incomparable elements: no minimum.
        let set3 = [F::One, F::Bot];
        assert_eq!(min_formula(set3.iter()), None);
        assert_eq!(min_formula(std::iter::empty()), None);
    }

    #[test]
    fn priorities_follow_the_fixpoint_order() {
        let phi = F::nu(F::mu(F::plus(F::Var(1), F::Var(0))));
        let psi = F::mu(F::plus(phi.clone(), F::Var(0)));
        let c = closure_of(&phi);
        // Closure: {phi, psi, phi + psi}; fixpoints phi (nu, outermost) then
        // psi, so phi gets 0 and psi gets 3; the sum is neutral.
        assert_eq!(c.len(), 3);
        assert_eq!(priority(&c, &phi), Ok(0));
        assert_eq!(priority(&c, &psi), Ok(3));
        assert_eq!(priority(&c, &F::plus(phi.clone(), psi.clone())), Ok(7));
        assert_eq!(
            priority(&c, &F::Zero),
            Err(TypesError::FormulaNotInClosure("0".into()))
        );

        // The min-priority parity reproduces the min-formula verdicts above.
        let even_min = [0u32, 3, 7].iter().min().unwrap() % 2 == 0;
        assert!(even_min);
        let odd_min = [3u32, 7].iter().min().unwrap() % 2 == 1;
        assert!(odd_min);
    }

    #[test]
    fn display_round_trips_precedence() {
        let phi = mu_x_plus_one();
        assert_eq!(phi.to_string(), "mu X. X + 1");
        assert_eq!(F::plus(phi.clone(), F::One).to_string(), "(mu X. X + 1) + 1");
        assert_eq!(
            F::mu(F::plus(F::tensor(F::One, F::Var(0)), F::One)).to_string(),
            "mu X. 1 * X + 1"
        );
        assert_eq!(
            F::nu(F::with(F::par(F::Bot, F::Var(0)), F::Bot)).to_string(),
            "nu X. (bot par X) & bot"
        );
        assert_eq!(
            F::mu(F::nu(F::plus(F::Var(1), F::Var(0)))).to_string(),
            "mu X. nu Y. X + Y"
        );
        assert_eq!(
            F::plus(F::plus(F::One, F::Bot), F::One).to_string(),
            "1 + bot + 1"
        );
        assert_eq!(
            F::plus(F::One, F::plus(F::Bot, F::One)).to_string(),
            "1 + (bot + 1)"
        );
        assert_eq!(
            F::with(F::plus(F::One, F::One), F::Bot).to_string(),
            "(1 + 1) & bot"
        );
    }

    #[test]
    fn closure_is_closed_under_type_steps() {
        let seeds = [
            mu_x_plus_one(),
            F::nu(F::mu(F::plus(F::Var(1), F::Var(0)))),
            F::mu(F::plus(F::One, F::tensor(F::Var(0), F::Var(0)))),
        ];
        for seed in &seeds {
            let c = closure_of(seed);
            for f in c.iter() {
                let t = Type::new(f.clone(), Address::new(0, false));
                for succ in type_steps(&t) {
                    assert!(
                        c.contains(&succ.formula),
                        "step of closure element left the closure: {} -> {}",
                        f,
                        succ.formula
                    );
                }
            }
        }
    }
}
