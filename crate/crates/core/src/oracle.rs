//! Reference semantics by model enumeration.
//!
//! A model relevant to an environment is fixed on every `Paid`,
//! `Attributed` and `count` literal by the environment itself, so models
//! differ only in their `Permitted` atoms. Validity is checked by trying
//! every assignment of those atoms, 64 at a time.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::in_fragment_q1;
use crate::engine::{answer_general, answer_tractable, EngineError, EngineOptions, Query, Verdict};
use crate::env::Environment;
use crate::fol::{eval_ground_literal, ground, Atom, FolError, Formula, Term, TermUniverse};
use crate::num::TimePoint;
use crate::translate::{query_formulas, SeqInterpretation};

/// Largest atom universe the oracle enumerates.
pub const MAX_ATOMS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{0} Permitted atoms exceed the enumeration limit of {MAX_ATOMS}")]
    TooManyAtoms(usize),
    #[error(transparent)]
    Fol(#[from] FolError),
    #[error("{0}")]
    Engine(String),
}

/// One relevant model, given by its `Permitted` atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSketch {
    pub assignment: BTreeMap<Atom, bool>,
}

/// Universe of closed terms for a query: everything its `f+` mentions,
/// the environment's subjects and times, and the times 0 and infinity.
pub fn query_universe(q: &Query, mode: SeqInterpretation) -> TermUniverse {
    let (fplus, _) = query_formulas(&q.agreements, &q.subject, q.action, &q.asset, mode);
    let mut u = TermUniverse::for_formula(&fplus, &q.env);
    u.insert(Term::time(&TimePoint::zero()));
    u.insert(Term::Infinity);
    u
}

/// Every `Permitted(s, act, a)` over the constants of the universe.
pub fn atom_universe(u: &TermUniverse) -> Result<Vec<Atom>, OracleError> {
    let mut atoms = Vec::new();
    for s in u.of(crate::fol::Sort::Subjects) {
        for act in u.of(crate::fol::Sort::Actions) {
            for a in u.of(crate::fol::Sort::Assets) {
                atoms.push(crate::fol::atom_of(&Formula::Permitted(
                    s.clone(),
                    act.clone(),
                    a.clone(),
                ))?);
            }
        }
    }
    atoms.sort();
    Ok(atoms)
}

/// All relevant models of the query, or none when the environment is
/// inconsistent.
pub fn enumerate_models(
    q: &Query,
    mode: SeqInterpretation,
) -> Result<Vec<ModelSketch>, OracleError> {
    let atoms = atom_universe(&query_universe(q, mode))?;
    if atoms.len() > MAX_ATOMS {
        return Err(OracleError::TooManyAtoms(atoms.len()));
    }
    if !q.env.check_consistent() {
        return Ok(Vec::new());
    }
    Ok((0u64..1 << atoms.len())
        .map(|bits| ModelSketch {
            assignment: atoms
                .iter()
                .enumerate()
                .map(|(i, a)| (a.clone(), bits >> i & 1 == 1))
                .collect(),
        })
        .collect())
}

#[derive(Debug)]
enum Node {
    Const(bool),
    Atom(usize),
    Not(Box<Node>),
    And(Vec<Node>),
    Or(Vec<Node>),
}

/// Compiles a ground formula, replacing environment literals by their
/// truth values and folding constants.
fn compile(f: &Formula, q: &Query, atoms: &mut Vec<Atom>) -> Result<Node, OracleError> {
    Ok(match f {
        Formula::True => Node::Const(true),
        Formula::False => Node::Const(false),
        Formula::Permitted(..) => {
            let atom = crate::fol::atom_of(f)?;
            let i = match atoms.iter().position(|a| a == &atom) {
                Some(i) => i,
                None => {
                    atoms.push(atom);
                    atoms.len() - 1
                }
            };
            Node::Atom(i)
        }
        Formula::Paid(..)
        | Formula::Attributed(..)
        | Formula::Eq(..)
        | Formula::Lt(..)
        | Formula::Leq(..) => Node::Const(eval_ground_literal(f, &q.env)?),
        Formula::Not(g) => match compile(g, q, atoms)? {
            Node::Const(b) => Node::Const(!b),
            n => Node::Not(Box::new(n)),
        },
        Formula::And(gs) => fold(
            gs.iter()
                .map(|g| compile(g, q, atoms))
                .collect::<Result<_, _>>()?,
            true,
        ),
        Formula::Or(gs) => fold(
            gs.iter()
                .map(|g| compile(g, q, atoms))
                .collect::<Result<_, _>>()?,
            false,
        ),
        Formula::Implies(a, b) => {
            let na = match compile(a, q, atoms)? {
                Node::Const(b) => Node::Const(!b),
                n => Node::Not(Box::new(n)),
            };
            fold(vec![na, compile(b, q, atoms)?], false)
        }
        Formula::Forall(..) | Formula::Exists(..) => {
            return Err(FolError::NotGroundLiteral(f.to_string()).into());
        }
    })
}

fn fold(items: Vec<Node>, conj: bool) -> Node {
    let mut kept = Vec::new();
    for n in items {
        match n {
            Node::Const(b) if b == conj => {}
            Node::Const(b) => return Node::Const(b),
            n => kept.push(n),
        }
    }
    if kept.is_empty() {
        Node::Const(conj)
    } else if conj {
        Node::And(kept)
    } else {
        Node::Or(kept)
    }
}

/// Evaluates 64 assignments at once; bit `j` of each word is assignment `j`.
fn eval_words(n: &Node, words: &[u64]) -> u64 {
    match n {
        Node::Const(true) => !0,
        Node::Const(false) => 0,
        Node::Atom(i) => words[*i],
        Node::Not(m) => !eval_words(m, words),
        Node::And(ms) => {
            let mut acc = !0;
            for m in ms {
                acc &= eval_words(m, words);
                if acc == 0 {
                    break;
                }
            }
            acc
        }
        Node::Or(ms) => {
            let mut acc = 0;
            for m in ms {
                acc |= eval_words(m, words);
                if acc == !0 {
                    break;
                }
            }
            acc
        }
    }
}

const LOW_PATTERNS: [u64; 6] = [
    0xAAAA_AAAA_AAAA_AAAA,
    0xCCCC_CCCC_CCCC_CCCC,
    0xF0F0_F0F0_F0F0_F0F0,
    0xFF00_FF00_FF00_FF00,
    0xFFFF_0000_FFFF_0000,
    0xFFFF_FFFF_0000_0000,
];

/// True iff `node` holds under all `2^k` assignments of its `k` atoms.
fn holds_everywhere(node: &Node, k: usize) -> bool {
    let blocks = if k <= 6 { 1u64 } else { 1u64 << (k - 6) };
    let mask = if k >= 6 {
        !0
    } else {
        (1u64 << (1u64 << k)) - 1
    };
    let mut words = vec![0u64; k];
    for b in 0..blocks {
        for (i, w) in words.iter_mut().enumerate() {
            *w = if i < 6 {
                LOW_PATTERNS[i]
            } else if b >> (i - 6) & 1 == 1 {
                !0
            } else {
                0
            };
        }
        if eval_words(node, &words) & mask != mask {
            return false;
        }
    }
    true
}

/// Whether `f` holds in every model relevant to the query's environment.
pub fn evalid(f: &Formula, q: &Query, mode: SeqInterpretation) -> Result<bool, OracleError> {
    let u = query_universe(q, mode);
    let universe = atom_universe(&u)?;
    if universe.len() > MAX_ATOMS {
        return Err(OracleError::TooManyAtoms(universe.len()));
    }
    if !q.env.check_consistent() {
        return Ok(true);
    }
    let mut atoms = Vec::new();
    let node = compile(&ground(f, &u)?, q, &mut atoms)?;
    Ok(holds_everywhere(&node, atoms.len()))
}

/// Verdict of a query computed from the definitions alone.
pub fn oracle_answer(q: &Query, mode: SeqInterpretation) -> Result<Verdict, OracleError> {
    let (fplus, fminus) = query_formulas(&q.agreements, &q.subject, q.action, &q.asset, mode);
    Ok(Verdict::from_bits(
        evalid(&fplus, q, mode)?,
        evalid(&fminus, q, mode)?,
    ))
}

/// Verdicts of the three deciders on one query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    /// `None` when the query is outside the tractable fragment.
    pub tractable: Option<Verdict>,
    pub general: Verdict,
    pub oracle: Verdict,
}

/// Runs the tractable path (when applicable), the general path and the
/// oracle; returns their verdicts if they disagree.
pub fn compare(q: &Query, opts: &EngineOptions) -> Result<Option<Divergence>, OracleError> {
    let tractable = in_fragment_q1(&q.agreements).then(|| answer_tractable(q, opts).verdict);
    let (plus, minus) = answer_general(q, opts).map_err(|e| match e {
        EngineError::Fol(e) => OracleError::Fol(e),
        other => OracleError::Engine(other.to_string()),
    })?;
    let general = Verdict::from_bits(plus, minus);
    let oracle = oracle_answer(q, opts.mode)?;
    let agree = general == oracle && tractable.is_none_or(|t| t == general);
    Ok((!agree).then_some(Divergence {
        tractable,
        general,
        oracle,
    }))
}

/// Greedily drops agreements and environment facts while `fails` keeps
/// returning true.
pub fn minimize(mut q: Query, fails: impl Fn(&Query) -> bool) -> Query {
    loop {
        let mut changed = false;
        let mut i = 0;
        while q.agreements.len() > 1 && i < q.agreements.len() {
            let mut smaller = q.clone();
            smaller.agreements.remove(i);
            if fails(&smaller) {
                q = smaller;
                changed = true;
            } else {
                i += 1;
            }
        }
        for fact in q.env.facts() {
            let rest = q.env.facts().into_iter().filter(|f| f != &fact);
            let smaller = Query {
                env: Environment::from_facts(rest),
                ..q.clone()
            };
            if fails(&smaller) {
                q = smaller;
                changed = true;
            }
        }
        if !changed {
            return q;
        }
    }
}
