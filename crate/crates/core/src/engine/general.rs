use crate::fol::{
    ground_reduce, implies, not, permitted, propositional_valid, simplify, Formula, Term,
    TermUniverse,
};
use crate::num::TimePoint;
use crate::translate::translate_agreement;

use super::{EngineError, EngineOptions, Query};

/// Ground `f+` and `f-` of a query with every environment literal already
/// evaluated, or `None` when the environment is inconsistent.
pub fn general_formulas(
    q: &Query,
    opts: &EngineOptions,
) -> Result<Option<(Formula, Formula)>, EngineError> {
    if !q.env.check_consistent() {
        return Ok(None);
    }
    let translated: Vec<Formula> = q
        .agreements
        .iter()
        .map(|a| translate_agreement(a, opts.mode))
        .collect();
    let goal = permitted(Term::subject(&q.subject), q.action, &q.asset);
    let mut u = TermUniverse::new();
    for f in translated.iter().chain([&goal]) {
        u.add_formula(f);
    }
    u.add_environment(&q.env);
    u.insert(Term::time(&TimePoint::zero()));
    u.insert(Term::Infinity);

    let theory: Vec<Formula> = translated
        .iter()
        .map(|f| ground_reduce(f, &u, &q.env))
        .collect::<Result<_, _>>()?;
    let theory = simplify(&Formula::And(theory));
    Ok(Some((
        entails(&theory, goal.clone()),
        entails(&theory, not(goal)),
    )))
}

/// `theory => goal` for an already simplified theory.
fn entails(theory: &Formula, goal: Formula) -> Formula {
    match theory {
        Formula::True => goal,
        Formula::False => Formula::True,
        t => implies(t.clone(), goal),
    }
}

/// E-validity of `f+` and `f-` by grounding and exhaustive case splitting.
pub fn answer_general(q: &Query, opts: &EngineOptions) -> Result<(bool, bool), EngineError> {
    match general_formulas(q, opts)? {
        None => Ok((true, true)),
        Some((fplus, fminus)) => Ok((
            propositional_valid(&fplus, opts.max_assignments)?,
            propositional_valid(&fminus, opts.max_assignments)?,
        )),
    }
}
