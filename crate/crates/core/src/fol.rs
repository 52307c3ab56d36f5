//! Many-sorted first-order formulas, grounding over a finite universe, and
//! propositional validity over `Permitted` atoms.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{Action, Asset, PolicyId, Subject};
use crate::env::Environment;
use crate::num::{format_rational, Rational, TimePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Subjects,
    Actions,
    Assets,
    PolIds,
    SetPolIds,
    Reals,
    Times,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub name: Arc<str>,
    pub sort: Sort,
}

impl Var {
    pub fn new(name: impl Into<Arc<str>>, sort: Sort) -> Self {
        Var {
            name: name.into(),
            sort,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const { name: Arc<str>, sort: Sort },
    Var(Var),
    IdSet(BTreeSet<PolicyId>),
    Count(Box<Term>, Box<Term>),
    Sum(Vec<Term>),
    Lit(Box<Rational>, Sort),
    Infinity,
}

impl Term {
    pub fn subject(s: &Subject) -> Self {
        Term::Const {
            name: s.shared(),
            sort: Sort::Subjects,
        }
    }

    pub fn action(a: Action) -> Self {
        Term::Const {
            name: Arc::from(a.name()),
            sort: Sort::Actions,
        }
    }

    pub fn asset(a: &Asset) -> Self {
        Term::Const {
            name: a.shared(),
            sort: Sort::Assets,
        }
    }

    pub fn policy_id(id: &PolicyId) -> Self {
        Term::Const {
            name: id.shared(),
            sort: Sort::PolIds,
        }
    }

    pub fn var(v: &Var) -> Self {
        Term::Var(v.clone())
    }

    pub fn time(t: &TimePoint) -> Self {
        match t {
            TimePoint::At(r) => Term::Lit(Box::new(r.clone()), Sort::Times),
            TimePoint::Infinity => Term::Infinity,
        }
    }

    pub fn sort(&self) -> Sort {
        match self {
            Term::Const { sort, .. } | Term::Lit(_, sort) => *sort,
            Term::Var(v) => v.sort,
            Term::IdSet(_) => Sort::SetPolIds,
            Term::Count(..) | Term::Sum(_) => Sort::Reals,
            Term::Infinity => Sort::Times,
        }
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Count(a, b) => a.is_closed() && b.is_closed(),
            Term::Sum(ts) => ts.iter().all(Term::is_closed),
            _ => true,
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Count(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::Sum(ts) => ts.iter().for_each(|t| t.collect_vars(out)),
            _ => {}
        }
    }

    fn substitute(&self, var: &Var, value: &Term) -> Term {
        match self {
            Term::Var(v) if v == var => value.clone(),
            Term::Count(a, b) => Term::Count(
                Box::new(a.substitute(var, value)),
                Box::new(b.substitute(var, value)),
            ),
            Term::Sum(ts) => Term::Sum(ts.iter().map(|t| t.substitute(var, value)).collect()),
            _ => self.clone(),
        }
    }

    fn resolve(&self, bindings: &[(&Var, &Term)]) -> Term {
        match self {
            Term::Var(v) => bindings
                .iter()
                .rev()
                .find(|(b, _)| *b == v)
                .map_or_else(|| self.clone(), |(_, t)| (*t).clone()),
            Term::Count(a, b) => {
                Term::Count(Box::new(a.resolve(bindings)), Box::new(b.resolve(bindings)))
            }
            Term::Sum(ts) => Term::Sum(ts.iter().map(|t| t.resolve(bindings)).collect()),
            _ => self.clone(),
        }
    }

    /// The term itself, or its binding when it is a bound variable.
    fn lookup<'a>(&'a self, bindings: &[(&'a Var, &'a Term)]) -> &'a Term {
        match self {
            Term::Var(v) => bindings
                .iter()
                .rev()
                .find(|(b, _)| *b == v)
                .map_or(self, |(_, t)| *t),
            _ => self,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Permitted(Term, Term, Term),
    Paid(Term, Term, Term),
    Attributed(Term, Term),
    Eq(Term, Term),
    Lt(Term, Term),
    Leq(Term, Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Var, Box<Formula>),
    Exists(Var, Box<Formula>),
}

/// A ground `Permitted` literal, ordered by subject, then action, then asset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub subject: Subject,
    pub action: Action,
    pub asset: Asset,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(Permitted {} {} {})",
            self.subject, self.action, self.asset
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FolError {
    #[error("validity check exceeded the cap of {cap} explored assignments")]
    CapExceeded { cap: u64 },
    #[error("cannot ground a quantifier over sort {0}")]
    UnsupportedSort(Sort),
    #[error("not a ground Permitted-free literal: {0}")]
    NotGroundLiteral(String),
    #[error("not a ground Permitted atom: {0}")]
    NotAtom(String),
    #[error("ill-sorted formula: {0}")]
    IllSorted(String),
}

/// Default bound on the number of partial assignments explored by
/// [`propositional_valid`].
pub const DEFAULT_MAX_ASSIGNMENTS: u64 = 1 << 20;

pub fn and_all(mut fs: Vec<Formula>) -> Formula {
    match fs.len() {
        0 => Formula::True,
        1 => fs.pop().unwrap(),
        _ => Formula::And(fs),
    }
}

pub fn or_all(mut fs: Vec<Formula>) -> Formula {
    match fs.len() {
        0 => Formula::False,
        1 => fs.pop().unwrap(),
        _ => Formula::Or(fs),
    }
}

pub fn not(f: Formula) -> Formula {
    Formula::Not(Box::new(f))
}

pub fn implies(a: Formula, b: Formula) -> Formula {
    Formula::Implies(Box::new(a), Box::new(b))
}

pub fn forall(v: Var, f: Formula) -> Formula {
    Formula::Forall(v, Box::new(f))
}

pub fn exists(v: Var, f: Formula) -> Formula {
    Formula::Exists(v, Box::new(f))
}

pub fn permitted(subject: Term, action: Action, asset: &Asset) -> Formula {
    Formula::Permitted(subject, Term::action(action), Term::asset(asset))
}

impl Formula {
    /// Number of nodes, counting terms as one.
    pub fn size(&self) -> usize {
        match self {
            Formula::Not(f) | Formula::Forall(_, f) | Formula::Exists(_, f) => 1 + f.size(),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(Formula::size).sum::<usize>(),
            Formula::Implies(a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }

    pub fn quantifier_depth(&self) -> usize {
        match self {
            Formula::Forall(_, f) | Formula::Exists(_, f) => 1 + f.quantifier_depth(),
            Formula::Not(f) => f.quantifier_depth(),
            Formula::And(fs) | Formula::Or(fs) => {
                fs.iter().map(Formula::quantifier_depth).max().unwrap_or(0)
            }
            Formula::Implies(a, b) => a.quantifier_depth().max(b.quantifier_depth()),
            _ => 0,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Permitted(a, b, c) | Formula::Paid(a, b, c) => {
                a.collect_vars(out);
                b.collect_vars(out);
                c.collect_vars(out);
            }
            Formula::Attributed(a, b)
            | Formula::Eq(a, b)
            | Formula::Lt(a, b)
            | Formula::Leq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Formula::Not(f) => f.collect_free(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_free(out)),
            Formula::Implies(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            Formula::Forall(v, f) | Formula::Exists(v, f) => {
                let mut inner = BTreeSet::new();
                f.collect_free(&mut inner);
                inner.remove(v);
                out.extend(inner);
            }
        }
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    /// Replaces free occurrences of `var` by the closed term `value`. Since
    /// `value` has no variables, no capture can occur.
    pub fn substitute(&self, var: &Var, value: &Term) -> Formula {
        assert!(value.is_closed(), "substitution of an open term");
        let sub = |t: &Term| t.substitute(var, value);
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Permitted(a, b, c) => Formula::Permitted(sub(a), sub(b), sub(c)),
            Formula::Paid(a, b, c) => Formula::Paid(sub(a), sub(b), sub(c)),
            Formula::Attributed(a, b) => Formula::Attributed(sub(a), sub(b)),
            Formula::Eq(a, b) => Formula::Eq(sub(a), sub(b)),
            Formula::Lt(a, b) => Formula::Lt(sub(a), sub(b)),
            Formula::Leq(a, b) => Formula::Leq(sub(a), sub(b)),
            Formula::Not(f) => not(f.substitute(var, value)),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.substitute(var, value)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.substitute(var, value)).collect()),
            Formula::Implies(a, b) => implies(a.substitute(var, value), b.substitute(var, value)),
            Formula::Forall(v, _) | Formula::Exists(v, _) if v == var => self.clone(),
            Formula::Forall(v, f) => forall(v.clone(), f.substitute(var, value)),
            Formula::Exists(v, f) => exists(v.clone(), f.substitute(var, value)),
        }
    }

    /// Checks argument sorts against the predicate signatures.
    pub fn check_sorts(&self) -> Result<(), FolError> {
        fn expect(t: &Term, sorts: &[Sort], ctx: &str) -> Result<(), FolError> {
            check_term(t)?;
            if sorts.contains(&t.sort()) {
                Ok(())
            } else {
                Err(FolError::IllSorted(format!(
                    "{} has sort {} in {ctx}",
                    term_sexpr(t),
                    t.sort()
                )))
            }
        }
        fn check_term(t: &Term) -> Result<(), FolError> {
            match t {
                Term::Count(s, id) => {
                    expect(s, &[Sort::Subjects], "count")?;
                    expect(id, &[Sort::PolIds], "count")
                }
                Term::Sum(ts) => ts.iter().try_for_each(|t| expect(t, &[Sort::Reals], "sum")),
                Term::Lit(_, s) if !matches!(s, Sort::Reals | Sort::Times) => {
                    Err(FolError::IllSorted(format!("numeric literal of sort {s}")))
                }
                _ => Ok(()),
            }
        }
        const NUMERIC: &[Sort] = &[Sort::Reals, Sort::Times];
        match self {
            Formula::True | Formula::False => Ok(()),
            Formula::Permitted(s, act, a) => {
                expect(s, &[Sort::Subjects], "Permitted")?;
                expect(act, &[Sort::Actions], "Permitted")?;
                expect(a, &[Sort::Assets], "Permitted")
            }
            Formula::Paid(r, i, t) => {
                expect(r, &[Sort::Reals], "Paid")?;
                expect(i, &[Sort::SetPolIds], "Paid")?;
                expect(t, &[Sort::Times], "Paid")
            }
            Formula::Attributed(s, t) => {
                expect(s, &[Sort::Subjects], "Attributed")?;
                expect(t, &[Sort::Times], "Attributed")
            }
            Formula::Eq(a, b) => {
                check_term(a)?;
                check_term(b)?;
                let (sa, sb) = (a.sort(), b.sort());
                if sa == sb || (NUMERIC.contains(&sa) && NUMERIC.contains(&sb)) {
                    Ok(())
                } else {
                    Err(FolError::IllSorted(format!(
                        "equality between {sa} and {sb}"
                    )))
                }
            }
            Formula::Lt(a, b) | Formula::Leq(a, b) => {
                expect(a, NUMERIC, "comparison")?;
                expect(b, NUMERIC, "comparison")
            }
            Formula::Not(f) | Formula::Forall(_, f) | Formula::Exists(_, f) => f.check_sorts(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().try_for_each(Formula::check_sorts),
            Formula::Implies(a, b) => {
                a.check_sorts()?;
                b.check_sorts()
            }
        }
    }

    /// Every `Permitted` atom occurring in a ground formula.
    pub fn atoms(&self) -> Result<BTreeSet<Atom>, FolError> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out)?;
        Ok(out)
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) -> Result<(), FolError> {
        match self {
            Formula::Permitted(..) => {
                out.insert(atom_of(self)?);
                Ok(())
            }
            Formula::Not(f) | Formula::Forall(_, f) | Formula::Exists(_, f) => f.collect_atoms(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().try_for_each(|f| f.collect_atoms(out)),
            Formula::Implies(a, b) => {
                a.collect_atoms(out)?;
                b.collect_atoms(out)
            }
            _ => Ok(()),
        }
    }
}

/// Reads a ground `Permitted(s, act, a)` formula as an atom.
pub fn atom_of(f: &Formula) -> Result<Atom, FolError> {
    let bad = || FolError::NotAtom(to_sexpr(f));
    let Formula::Permitted(s, act, a) = f else {
        return Err(bad());
    };
    match (s, act, a) {
        (
            Term::Const {
                name: s,
                sort: Sort::Subjects,
            },
            Term::Const {
                name: act,
                sort: Sort::Actions,
            },
            Term::Const {
                name: a,
                sort: Sort::Assets,
            },
        ) => Ok(Atom {
            subject: Subject::new(Arc::clone(s)),
            action: Action::from_name(act).ok_or_else(bad)?,
            asset: Asset::new(Arc::clone(a)),
        }),
        _ => Err(bad()),
    }
}

pub fn atom_formula(atom: &Atom) -> Formula {
    permitted(Term::subject(&atom.subject), atom.action, &atom.asset)
}

/// Finite per-sort sets of closed terms over which quantifiers range.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermUniverse {
    terms: BTreeMap<Sort, BTreeSet<Term>>,
}

impl TermUniverse {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Term) {
        debug_assert!(t.is_closed());
        self.terms.entry(t.sort()).or_default().insert(t);
    }

    fn insert_ref(&mut self, t: &Term) {
        let set = self.terms.entry(t.sort()).or_default();
        if !set.contains(t) {
            set.insert(t.clone());
        }
    }

    pub fn of(&self, sort: Sort) -> impl Iterator<Item = &Term> {
        self.terms.get(&sort).into_iter().flatten()
    }

    pub fn len_of(&self, sort: Sort) -> usize {
        self.terms.get(&sort).map_or(0, BTreeSet::len)
    }

    /// Adds every closed term occurring in `f` (including subterms).
    pub fn add_formula(&mut self, f: &Formula) {
        let mut terms = Vec::new();
        collect_terms(f, &mut terms);
        for t in terms {
            self.add_term(t);
        }
    }

    fn add_term(&mut self, t: &Term) {
        match t {
            Term::Var(_) => {}
            Term::Count(a, b) => {
                self.add_term(a);
                self.add_term(b);
            }
            Term::Sum(ts) => ts.iter().for_each(|t| self.add_term(t)),
            _ => self.insert_ref(t),
        }
    }

    /// Adds the subjects and time stamps mentioned by the environment.
    pub fn add_environment(&mut self, env: &Environment) {
        for s in env.subjects() {
            self.insert(Term::subject(&s));
        }
        for t in env.times() {
            self.insert(Term::Lit(Box::new(t), Sort::Times));
        }
    }

    /// The universe mentioned by a formula together with an environment.
    pub fn for_formula(f: &Formula, env: &Environment) -> Self {
        let mut u = Self::new();
        u.add_formula(f);
        u.add_environment(env);
        u
    }
}

fn collect_terms<'a>(f: &'a Formula, out: &mut Vec<&'a Term>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Permitted(a, b, c) | Formula::Paid(a, b, c) => out.extend([a, b, c]),
        Formula::Attributed(a, b) | Formula::Eq(a, b) | Formula::Lt(a, b) | Formula::Leq(a, b) => {
            out.extend([a, b])
        }
        Formula::Not(g) | Formula::Forall(_, g) | Formula::Exists(_, g) => collect_terms(g, out),
        Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| collect_terms(g, out)),
        Formula::Implies(a, b) => {
            collect_terms(a, out);
            collect_terms(b, out);
        }
    }
}

fn groundable(sort: Sort) -> Result<(), FolError> {
    match sort {
        Sort::Subjects | Sort::Times => Ok(()),
        other => Err(FolError::UnsupportedSort(other)),
    }
}

/// Replaces `forall` by a conjunction and `exists` by a disjunction over the
/// universe of the bound variable's sort.
pub fn ground(f: &Formula, u: &TermUniverse) -> Result<Formula, FolError> {
    Ok(match f {
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            groundable(v.sort)?;
            let items = u
                .of(v.sort)
                .map(|t| ground(&body.substitute(v, t), u))
                .collect::<Result<Vec<_>, _>>()?;
            if matches!(f, Formula::Forall(..)) {
                and_all(items)
            } else {
                or_all(items)
            }
        }
        Formula::Not(g) => not(ground(g, u)?),
        Formula::And(gs) => {
            Formula::And(gs.iter().map(|g| ground(g, u)).collect::<Result<_, _>>()?)
        }
        Formula::Or(gs) => Formula::Or(gs.iter().map(|g| ground(g, u)).collect::<Result<_, _>>()?),
        Formula::Implies(a, b) => implies(ground(a, u)?, ground(b, u)?),
        _ => f.clone(),
    })
}

#[derive(Debug, PartialEq, Eq)]
enum Value<'a> {
    Name(&'a str),
    Ids(&'a BTreeSet<PolicyId>),
    Num(Cow<'a, Rational>),
    Infinity,
}

fn eval_term<'a>(
    t: &'a Term,
    bindings: &[(&'a Var, &'a Term)],
    env: &Environment,
) -> Option<Value<'a>> {
    Some(match t.lookup(bindings) {
        Term::Const { name, .. } => Value::Name(name),
        Term::Var(_) => return None,
        Term::IdSet(ids) => Value::Ids(ids),
        Term::Count(s, id) => {
            let (Value::Name(s), Value::Name(id)) =
                (eval_term(s, bindings, env)?, eval_term(id, bindings, env)?)
            else {
                return None;
            };
            let n = env.lookup_count(&Subject::new(s), &PolicyId::new(id));
            Value::Num(Cow::Owned(Rational::from_integer(n.into())))
        }
        Term::Sum(ts) => {
            let mut total = Rational::from_integer(0.into());
            for t in ts {
                match eval_term(t, bindings, env)? {
                    Value::Num(r) => total += r.as_ref(),
                    Value::Infinity => return Some(Value::Infinity),
                    _ => return None,
                }
            }
            Value::Num(Cow::Owned(total))
        }
        Term::Lit(r, _) => Value::Num(Cow::Borrowed(r)),
        Term::Infinity => Value::Infinity,
    })
}

/// Truth value of a ground, `Permitted`-free literal under the closed-world
/// reading of `env`.
pub fn eval_ground_literal(lit: &Formula, env: &Environment) -> Result<bool, FolError> {
    eval_literal_in(lit, &[], env)
}

fn eval_literal_in<'a>(
    lit: &'a Formula,
    bindings: &[(&'a Var, &'a Term)],
    env: &Environment,
) -> Result<bool, FolError> {
    let bad = || FolError::NotGroundLiteral(to_sexpr(lit));
    let eval = |t: &'a Term| eval_term(t, bindings, env).ok_or_else(bad);
    // Infinity orders after every number.
    let num = |t: &'a Term| match eval(t)? {
        Value::Num(r) => Ok(Some(r)),
        Value::Infinity => Ok(None),
        _ => Err(bad()),
    };
    let order = |a: &'a Term, b: &'a Term| -> Result<std::cmp::Ordering, FolError> {
        Ok(match (num(a)?, num(b)?) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        })
    };
    match lit {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Paid(r, i, t) => {
            let (Value::Num(r), Value::Ids(ids)) = (eval(r)?, eval(i)?) else {
                return Err(bad());
            };
            Ok(match num(t)? {
                Some(t) => env.paid_at(&r, ids, &t),
                None => false,
            })
        }
        Formula::Attributed(s, t) => {
            let Value::Name(s) = eval(s)? else {
                return Err(bad());
            };
            Ok(match num(t)? {
                Some(t) => env.attributed_at(s, &t),
                None => false,
            })
        }
        Formula::Eq(a, b) => Ok(eval(a)? == eval(b)?),
        Formula::Lt(a, b) => Ok(order(a, b)?.is_lt()),
        Formula::Leq(a, b) => Ok(order(a, b)?.is_le()),
        _ => Err(bad()),
    }
}

/// Constant folding of `true`/`false` through the connectives.
pub fn simplify(f: &Formula) -> Formula {
    match f {
        Formula::Not(g) => simplify_not(simplify(g)),
        Formula::And(gs) => simplify_and(gs.iter().map(simplify)),
        Formula::Or(gs) => simplify_or(gs.iter().map(simplify)),
        Formula::Implies(a, b) => simplify_implies(simplify(a), simplify(b)),
        Formula::Forall(v, g) => forall(v.clone(), simplify(g)),
        Formula::Exists(v, g) => exists(v.clone(), simplify(g)),
        _ => f.clone(),
    }
}

fn simplify_not(g: Formula) -> Formula {
    match g {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Not(h) => *h,
        other => not(other),
    }
}

fn simplify_and(items: impl Iterator<Item = Formula>) -> Formula {
    let mut out = Vec::new();
    for g in items {
        match g {
            Formula::True => {}
            Formula::False => return Formula::False,
            other => out.push(other),
        }
    }
    and_all(out)
}

fn simplify_or(items: impl Iterator<Item = Formula>) -> Formula {
    let mut out = Vec::new();
    for g in items {
        match g {
            Formula::False => {}
            Formula::True => return Formula::True,
            other => out.push(other),
        }
    }
    or_all(out)
}

fn simplify_implies(a: Formula, b: Formula) -> Formula {
    match (a, b) {
        (Formula::False, _) | (_, Formula::True) => Formula::True,
        (Formula::True, b) => b,
        (a, Formula::False) => simplify_not(a),
        (a, b) => implies(a, b),
    }
}

/// Replaces every `Permitted`-free literal of a ground formula by its truth
/// value in `env` and folds constants.
pub fn reduce_literals(f: &Formula, env: &Environment) -> Result<Formula, FolError> {
    Ok(match f {
        Formula::True | Formula::False | Formula::Permitted(..) => f.clone(),
        Formula::Paid(..)
        | Formula::Attributed(..)
        | Formula::Eq(..)
        | Formula::Lt(..)
        | Formula::Leq(..) => {
            if eval_ground_literal(f, env)? {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Not(g) => simplify_not(reduce_literals(g, env)?),
        Formula::And(gs) => simplify_and(
            gs.iter()
                .map(|g| reduce_literals(g, env))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter(),
        ),
        Formula::Or(gs) => simplify_or(
            gs.iter()
                .map(|g| reduce_literals(g, env))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter(),
        ),
        Formula::Implies(a, b) => {
            simplify_implies(reduce_literals(a, env)?, reduce_literals(b, env)?)
        }
        Formula::Forall(..) | Formula::Exists(..) => {
            return Err(FolError::NotGroundLiteral(to_sexpr(f)))
        }
    })
}

/// Grounds `f` over `u` and reduces its `Permitted`-free literals against
/// `env` in one pass. Equal to `reduce_literals(&ground(f, u)?, env)` but
/// never materializes the full expansion.
pub fn ground_reduce(
    f: &Formula,
    u: &TermUniverse,
    env: &Environment,
) -> Result<Formula, FolError> {
    let mut bindings = Vec::new();
    ground_reduce_in(f, u, env, &mut bindings)
}

fn ground_reduce_in<'a>(
    f: &'a Formula,
    u: &'a TermUniverse,
    env: &Environment,
    bindings: &mut Vec<(&'a Var, &'a Term)>,
) -> Result<Formula, FolError> {
    Ok(match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Permitted(a, b, c) => Formula::Permitted(
            a.resolve(bindings),
            b.resolve(bindings),
            c.resolve(bindings),
        ),
        Formula::Eq(a, b) => match (a.lookup(bindings), b.lookup(bindings)) {
            (Term::Const { name: x, .. }, Term::Const { name: y, .. }) => truth(x == y),
            _ => truth(eval_literal_in(f, bindings, env)?),
        },
        Formula::Paid(..) | Formula::Attributed(..) | Formula::Lt(..) | Formula::Leq(..) => {
            truth(eval_literal_in(f, bindings, env)?)
        }
        Formula::Not(g) => simplify_not(ground_reduce_in(g, u, env, bindings)?),
        Formula::And(gs) => {
            let mut out = Vec::new();
            for g in gs {
                match ground_reduce_in(g, u, env, bindings)? {
                    Formula::True => {}
                    Formula::False => return Ok(Formula::False),
                    other => out.push(other),
                }
            }
            and_all(out)
        }
        Formula::Or(gs) => {
            let mut out = Vec::new();
            for g in gs {
                match ground_reduce_in(g, u, env, bindings)? {
                    Formula::False => {}
                    Formula::True => return Ok(Formula::True),
                    other => out.push(other),
                }
            }
            or_all(out)
        }
        Formula::Implies(a, b) => {
            let a = ground_reduce_in(a, u, env, bindings)?;
            if a == Formula::False {
                return Ok(Formula::True);
            }
            simplify_implies(a, ground_reduce_in(b, u, env, bindings)?)
        }
        Formula::Forall(v, body) | Formula::Exists(v, body) => {
            groundable(v.sort)?;
            let universal = matches!(f, Formula::Forall(..));
            let mut out = Vec::new();
            for t in u.of(v.sort) {
                bindings.push((v, t));
                let g = ground_reduce_in(body, u, env, bindings);
                bindings.pop();
                match (g?, universal) {
                    (Formula::True, true) | (Formula::False, false) => {}
                    (Formula::False, true) => return Ok(Formula::False),
                    (Formula::True, false) => return Ok(Formula::True),
                    (other, _) => out.push(other),
                }
            }
            if universal {
                and_all(out)
            } else {
                or_all(out)
            }
        }
    })
}

fn truth(b: bool) -> Formula {
    if b {
        Formula::True
    } else {
        Formula::False
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Prop {
    Const(bool),
    Atom(usize),
    Not(Box<Prop>),
    And(Vec<Prop>),
    Or(Vec<Prop>),
}

fn to_prop(f: &Formula, index: &BTreeMap<Atom, usize>) -> Result<Prop, FolError> {
    Ok(match f {
        Formula::True => Prop::Const(true),
        Formula::False => Prop::Const(false),
        Formula::Permitted(..) => Prop::Atom(index[&atom_of(f)?]),
        Formula::Not(g) => Prop::Not(Box::new(to_prop(g, index)?)),
        Formula::And(gs) => Prop::And(
            gs.iter()
                .map(|g| to_prop(g, index))
                .collect::<Result<_, _>>()?,
        ),
        Formula::Or(gs) => Prop::Or(
            gs.iter()
                .map(|g| to_prop(g, index))
                .collect::<Result<_, _>>()?,
        ),
        Formula::Implies(a, b) => Prop::Or(vec![
            Prop::Not(Box::new(to_prop(a, index)?)),
            to_prop(b, index)?,
        ]),
        other => return Err(FolError::NotAtom(to_sexpr(other))),
    })
}

fn assign(p: &Prop, atom: usize, value: bool) -> Prop {
    match p {
        Prop::Const(_) => p.clone(),
        Prop::Atom(a) if *a == atom => Prop::Const(value),
        Prop::Atom(_) => p.clone(),
        Prop::Not(q) => match assign(q, atom, value) {
            Prop::Const(b) => Prop::Const(!b),
            other => Prop::Not(Box::new(other)),
        },
        Prop::And(qs) | Prop::Or(qs) => {
            let is_and = matches!(p, Prop::And(_));
            let mut out = Vec::with_capacity(qs.len());
            for q in qs {
                match assign(q, atom, value) {
                    Prop::Const(b) if b == is_and => {}
                    Prop::Const(b) => return Prop::Const(b),
                    other => out.push(other),
                }
            }
            match out.len() {
                0 => Prop::Const(is_and),
                1 => out.pop().unwrap(),
                _ if is_and => Prop::And(out),
                _ => Prop::Or(out),
            }
        }
    }
}

fn min_atom(p: &Prop) -> Option<usize> {
    match p {
        Prop::Const(_) => None,
        Prop::Atom(a) => Some(*a),
        Prop::Not(q) => min_atom(q),
        Prop::And(qs) | Prop::Or(qs) => qs.iter().filter_map(min_atom).min(),
    }
}

/// Decides whether a ground formula over `Permitted` atoms holds under every
/// assignment. Splits on the least remaining atom (in subject, action, asset
/// order) and folds constants after each split; `max_assignments` bounds
/// the number of partial assignments visited.
pub fn propositional_valid(f: &Formula, max_assignments: u64) -> Result<bool, FolError> {
    let atoms: Vec<Atom> = f.atoms()?.into_iter().collect();
    let index: BTreeMap<Atom, usize> = atoms
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, a)| (a, i))
        .collect();
    let root = assign(&to_prop(f, &index)?, usize::MAX, false);
    let mut visited = 0u64;
    valid_rec(&root, &mut visited, max_assignments)
}

fn valid_rec(p: &Prop, visited: &mut u64, cap: u64) -> Result<bool, FolError> {
    *visited += 1;
    if *visited > cap {
        return Err(FolError::CapExceeded { cap });
    }
    match p {
        Prop::Const(b) => Ok(*b),
        _ => {
            let a = min_atom(p).expect("non-constant formula has an atom");
            Ok(valid_rec(&assign(p, a, false), visited, cap)?
                && valid_rec(&assign(p, a, true), visited, cap)?)
        }
    }
}

/// Evaluates a ground formula over `Permitted` atoms under an assignment.
pub fn eval_propositional(f: &Formula, model: &dyn Fn(&Atom) -> bool) -> Result<bool, FolError> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Permitted(..) => model(&atom_of(f)?),
        Formula::Not(g) => !eval_propositional(g, model)?,
        Formula::And(gs) => {
            for g in gs {
                if !eval_propositional(g, model)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Or(gs) => {
            for g in gs {
                if eval_propositional(g, model)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Implies(a, b) => !eval_propositional(a, model)? || eval_propositional(b, model)?,
        other => return Err(FolError::NotAtom(to_sexpr(other))),
    })
}

/// Satisfiability by trying all `2^k` assignments of the formula's atoms.
pub fn satisfiable_exhaustive(f: &Formula) -> Result<bool, FolError> {
    let atoms: Vec<Atom> = f.atoms()?.into_iter().collect();
    assert!(
        atoms.len() <= 24,
        "exhaustive enumeration over {} atoms",
        atoms.len()
    );
    for bits in 0u64..(1u64 << atoms.len()) {
        let model = |a: &Atom| {
            let i = atoms.binary_search(a).expect("atom of f");
            bits >> i & 1 == 1
        };
        if eval_propositional(f, &model)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn term_sexpr(t: &Term) -> String {
    match t {
        Term::Const { name, .. } => name.to_string(),
        Term::Var(v) => v.name.to_string(),
        Term::IdSet(ids) => {
            let mut s = String::from("(set");
            for id in ids {
                s.push(' ');
                s.push_str(id.as_str());
            }
            s.push(')');
            s
        }
        Term::Count(s, id) => format!("(count {} {})", term_sexpr(s), term_sexpr(id)),
        Term::Sum(ts) => {
            let parts: Vec<String> = ts.iter().map(term_sexpr).collect();
            format!("(+ {})", parts.join(" "))
        }
        Term::Lit(r, _) => format_rational(r),
        Term::Infinity => "inf".into(),
    }
}

/// Canonical single-line s-expression.
pub fn to_sexpr(f: &Formula) -> String {
    let mut out = String::new();
    write_flat(f, &mut out);
    out
}

fn head_and_children(f: &Formula) -> Option<(String, Vec<&Formula>)> {
    Some(match f {
        Formula::Not(g) => ("not".into(), vec![&**g]),
        Formula::And(gs) => ("and".into(), gs.iter().collect()),
        Formula::Or(gs) => ("or".into(), gs.iter().collect()),
        Formula::Implies(a, b) => ("implies".into(), vec![&**a, &**b]),
        Formula::Forall(v, g) => (format!("forall ({} {})", v.name, v.sort), vec![&**g]),
        Formula::Exists(v, g) => (format!("exists ({} {})", v.name, v.sort), vec![&**g]),
        _ => return None,
    })
}

fn write_flat(f: &Formula, out: &mut String) {
    let atom = |name: &str, ts: &[&Term]| {
        let parts: Vec<String> = ts.iter().map(|t| term_sexpr(t)).collect();
        format!("({name} {})", parts.join(" "))
    };
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Permitted(a, b, c) => out.push_str(&atom("Permitted", &[a, b, c])),
        Formula::Paid(a, b, c) => out.push_str(&atom("Paid", &[a, b, c])),
        Formula::Attributed(a, b) => out.push_str(&atom("Attributed", &[a, b])),
        Formula::Eq(a, b) => out.push_str(&atom("=", &[a, b])),
        Formula::Lt(a, b) => out.push_str(&atom("<", &[a, b])),
        Formula::Leq(a, b) => out.push_str(&atom("<=", &[a, b])),
        _ => {
            let (head, children) = head_and_children(f).expect("connective");
            out.push('(');
            out.push_str(&head);
            for c in children {
                out.push(' ');
                write_flat(c, out);
            }
            out.push(')');
        }
    }
}

/// Indented rendering: a connective stays on one line when it fits in 80
/// columns, otherwise each argument goes on its own line.
pub fn to_sexpr_pretty(f: &Formula) -> String {
    let mut out = String::new();
    write_pretty(f, 0, &mut out);
    out.push('\n');
    out
}

fn write_pretty(f: &Formula, indent: usize, out: &mut String) {
    let flat = to_sexpr(f);
    match head_and_children(f) {
        Some((head, children)) if indent + flat.len() > 80 => {
            out.push('(');
            out.push_str(&head);
            for c in children {
                out.push('\n');
                out.push_str(&" ".repeat(indent + 2));
                write_pretty(c, indent + 2, out);
            }
            out.push(')');
        }
        _ => out.push_str(&flat),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_sexpr(self))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&term_sexpr(self))
    }
}
