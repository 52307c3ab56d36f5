//! Compositional translation of agreements into first-order formulas.

use std::borrow::Cow;
use std::collections::BTreeSet;

use itertools::Itertools;

use crate::ast::{
    Action, Agreement, Asset, Constraint, Policy, PolicyId, PolicySet, Prerequisite, Principal,
    Requirement, Subject,
};
use crate::fol::{
    and_all, exists, forall, implies, not, or_all, permitted, Formula, Sort, Term, Var,
};
use crate::num::{rational_from_u64, Rational};

/// How a sequence nested inside `anySeq` is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SeqInterpretation {
    /// `inSeq` only orders its members; other events may interleave.
    #[default]
    Overlapping,
    /// `anySeq` splits its interval into consecutive slots, one per member.
    Consecutive,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationContext<'p> {
    pub ids: BTreeSet<PolicyId>,
    /// The principal prerequisites apply to (overridden inside `forEachMember`).
    pub prin: Cow<'p, Principal>,
    pub user: &'p Principal,
    pub asset: Asset,
    pub x: Var,
}

impl<'p> TranslationContext<'p> {
    pub fn new(user: &'p Principal, asset: &Asset, ids: BTreeSet<PolicyId>) -> Self {
        Self::with_var(user, asset, ids, Var::new("x", Sort::Subjects))
    }

    fn with_var(user: &'p Principal, asset: &Asset, ids: BTreeSet<PolicyId>, x: Var) -> Self {
        TranslationContext {
            ids,
            prin: Cow::Borrowed(user),
            user,
            asset: asset.clone(),
            x,
        }
    }
}

/// Carries fresh-variable counters through one agreement's translation.
#[derive(Clone, Debug, Default)]
pub struct Translator {
    mode: SeqInterpretation,
    next_time: usize,
    next_subject: usize,
}

impl Translator {
    pub fn new(mode: SeqInterpretation) -> Self {
        Translator {
            mode,
            ..Self::default()
        }
    }

    fn fresh_time(&mut self) -> Var {
        self.next_time += 1;
        Var::new(format!("t{}", self.next_time), Sort::Times)
    }

    fn fresh_subject(&mut self) -> Var {
        self.next_subject += 1;
        Var::new(format!("x{}", self.next_subject), Sort::Subjects)
    }

    pub fn agreement(&mut self, agr: &Agreement) -> Formula {
        self.policy_set(
            &agr.body,
            &agr.user,
            &agr.asset,
            &Var::new("x", Sort::Subjects),
        )
    }

    pub fn policy_set(
        &mut self,
        ps: &PolicySet,
        user: &Principal,
        asset: &Asset,
        x: &Var,
    ) -> Formula {
        match ps {
            PolicySet::Primitive {
                prq,
                policy,
                exclusive,
            } => {
                let ctx = TranslationContext::with_var(user, asset, policy.ids(), x.clone());
                let guard = Formula::And(vec![
                    principal_formula(user, x),
                    self.prerequisite(prq, &ctx),
                ]);
                let grant = forall(
                    x.clone(),
                    implies(guard, self.policy_positive(policy, &ctx)),
                );
                if *exclusive {
                    let outsider = not(principal_formula(user, x));
                    let deny = forall(
                        x.clone(),
                        implies(outsider, policy_negative(policy, asset, x)),
                    );
                    Formula::And(vec![grant, deny])
                } else {
                    grant
                }
            }
            PolicySet::And(items) => and_all(
                items
                    .iter()
                    .map(|p| self.policy_set(p, user, asset, x))
                    .collect(),
            ),
        }
    }

    /// Positive reading of a policy; each primitive policy's prerequisite
    /// is translated with its own id as the id set.
    pub fn policy_positive(&mut self, p: &Policy, ctx: &TranslationContext) -> Formula {
        match p {
            Policy::Primitive { prq, id, action } => {
                let inner = TranslationContext::with_var(
                    ctx.user,
                    &ctx.asset,
                    BTreeSet::from([id.clone()]),
                    ctx.x.clone(),
                );
                implies(
                    self.prerequisite(prq, &inner),
                    permitted(Term::var(&ctx.x), *action, &ctx.asset),
                )
            }
            Policy::And(items) => {
                and_all(items.iter().map(|q| self.policy_positive(q, ctx)).collect())
            }
        }
    }

    pub fn prerequisite(&mut self, prq: &Prerequisite, ctx: &TranslationContext) -> Formula {
        match prq {
            Prerequisite::True => Formula::True,
            Prerequisite::Constraint(c) => self.constraint(c, ctx),
            Prerequisite::Requirement(r) => self.requirement(
                r,
                &ctx.ids,
                &Term::Lit(Box::new(rational_from_u64(0)), Sort::Times),
                &Term::Infinity,
            ),
            Prerequisite::NotPolicySet(ps) => {
                let x = self.fresh_subject();
                not(self.policy_set(ps, ctx.user, &ctx.asset, &x))
            }
            Prerequisite::NotConstraint(c) => not(self.constraint(c, ctx)),
            Prerequisite::And(ps) => {
                and_all(ps.iter().map(|p| self.prerequisite(p, ctx)).collect())
            }
            Prerequisite::Or(ps) => or_all(ps.iter().map(|p| self.prerequisite(p, ctx)).collect()),
            Prerequisite::Xor(ps) => {
                let parts: Vec<Formula> = ps.iter().map(|p| self.prerequisite(p, ctx)).collect();
                or_all(
                    (0..parts.len())
                        .map(|i| {
                            let mut conj = vec![parts[i].clone()];
                            conj.extend(
                                parts
                                    .iter()
                                    .enumerate()
                                    .filter(|(j, _)| *j != i)
                                    .map(|(_, f)| not(f.clone())),
                            );
                            and_all(conj)
                        })
                        .collect(),
                )
            }
        }
    }

    fn constraint(&mut self, c: &Constraint, ctx: &TranslationContext) -> Formula {
        match c {
            Constraint::Principal(p) => principal_formula(p, &ctx.x),
            Constraint::ForEachMember { prin, constraints } => {
                let mut out = Vec::new();
                for member in prin.principals() {
                    let inner = TranslationContext {
                        prin: Cow::Owned(member),
                        ..ctx.clone()
                    };
                    for c in constraints {
                        out.push(self.constraint(c, &inner));
                    }
                }
                and_all(out)
            }
            Constraint::Count(n) => count_below(&ctx.ids, &ctx.prin.subjects(), *n),
            Constraint::PrinCount { prin, n } => count_below(&ctx.ids, &prin.subjects(), *n),
        }
    }

    /// The requirement holds within `[lo, hi)`.
    pub fn requirement(
        &mut self,
        r: &Requirement,
        ids: &BTreeSet<PolicyId>,
        lo: &Term,
        hi: &Term,
    ) -> Formula {
        match r {
            Requirement::PrePay(amount) => {
                let t = self.fresh_time();
                let event = Formula::Paid(
                    Term::Lit(Box::new(amount.clone()), Sort::Reals),
                    Term::IdSet(ids.clone()),
                    Term::var(&t),
                );
                self.within(t, lo, hi, event)
            }
            Requirement::Attribution(s) => {
                let t = self.fresh_time();
                let event = Formula::Attributed(Term::subject(s), Term::var(&t));
                self.within(t, lo, hi, event)
            }
            Requirement::InSeq(rs) if rs.len() == 1 => self.requirement(&rs[0], ids, lo, hi),
            Requirement::InSeq(rs) => {
                let (vars, mut body) = self.chain(rs.len(), lo, hi);
                let bounds = slots(&vars, lo, hi);
                for (r, (a, b)) in rs.iter().zip(&bounds) {
                    body.push(self.requirement(r, ids, a, b));
                }
                close_exists(vars, Formula::And(body))
            }
            Requirement::AnySeq(rs) if rs.len() == 1 => self.requirement(&rs[0], ids, lo, hi),
            Requirement::AnySeq(rs) => match self.mode {
                SeqInterpretation::Overlapping => and_all(
                    rs.iter()
                        .map(|r| self.requirement(r, ids, lo, hi))
                        .collect(),
                ),
                SeqInterpretation::Consecutive => {
                    let (vars, mut body) = self.chain(rs.len(), lo, hi);
                    let bounds = slots(&vars, lo, hi);
                    let mut alternatives = Vec::new();
                    for perm in (0..rs.len()).permutations(rs.len()) {
                        let parts = perm
                            .iter()
                            .zip(&bounds)
                            .map(|(&i, (a, b))| self.requirement(&rs[i], ids, a, b))
                            .collect();
                        alternatives.push(Formula::And(parts));
                    }
                    body.push(or_all(alternatives));
                    close_exists(vars, Formula::And(body))
                }
            },
        }
    }

    fn within(&mut self, t: Var, lo: &Term, hi: &Term, event: Formula) -> Formula {
        let tv = Term::var(&t);
        exists(
            t,
            Formula::And(vec![
                Formula::Leq(lo.clone(), tv.clone()),
                Formula::Lt(tv, hi.clone()),
                event,
            ]),
        )
    }

    /// Allocates `k - 1` split points and the strict chain `lo < t2 < ... < hi`.
    fn chain(&mut self, k: usize, lo: &Term, hi: &Term) -> (Vec<Var>, Vec<Formula>) {
        let vars: Vec<Var> = (1..k).map(|_| self.fresh_time()).collect();
        let mut points = vec![lo.clone()];
        points.extend(vars.iter().map(Term::var));
        points.push(hi.clone());
        let chain = points
            .windows(2)
            .map(|w| Formula::Lt(w[0].clone(), w[1].clone()))
            .collect();
        (vars, chain)
    }
}

fn slots(vars: &[Var], lo: &Term, hi: &Term) -> Vec<(Term, Term)> {
    let mut points = vec![lo.clone()];
    points.extend(vars.iter().map(Term::var));
    points.push(hi.clone());
    points
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect()
}

fn close_exists(vars: Vec<Var>, body: Formula) -> Formula {
    vars.into_iter().rev().fold(body, |f, v| exists(v, f))
}

fn count_below(ids: &BTreeSet<PolicyId>, subjects: &BTreeSet<Subject>, n: u64) -> Formula {
    let mut terms: Vec<Term> = subjects
        .iter()
        .flat_map(|s| {
            ids.iter().map(move |id| {
                Term::Count(Box::new(Term::subject(s)), Box::new(Term::policy_id(id)))
            })
        })
        .collect();
    let sum = match terms.len() {
        0 => Term::Lit(Box::new(Rational::from_integer(0.into())), Sort::Reals),
        1 => terms.pop().unwrap(),
        _ => Term::Sum(terms),
    };
    Formula::Lt(sum, Term::Lit(Box::new(rational_from_u64(n)), Sort::Reals))
}

/// `x` denotes a subject in `p`.
pub fn principal_formula(p: &Principal, x: &Var) -> Formula {
    match p {
        Principal::Subject(s) => Formula::Eq(Term::var(x), Term::subject(s)),
        Principal::Group(ms) => or_all(ms.iter().map(|m| principal_formula(m, x)).collect()),
    }
}

/// Negative reading of a policy: every action it mentions is forbidden.
pub fn policy_negative(p: &Policy, asset: &Asset, x: &Var) -> Formula {
    match p {
        Policy::Primitive { action, .. } => not(permitted(Term::var(x), *action, asset)),
        Policy::And(items) => and_all(items.iter().map(|q| policy_negative(q, asset, x)).collect()),
    }
}

pub fn translate_agreement(agr: &Agreement, mode: SeqInterpretation) -> Formula {
    Translator::new(mode).agreement(agr)
}

pub fn translate_policy_positive(p: &Policy, ctx: &TranslationContext) -> Formula {
    Translator::default().policy_positive(p, ctx)
}

pub fn translate_policy_negative(p: &Policy, ctx: &TranslationContext) -> Formula {
    policy_negative(p, &ctx.asset, &ctx.x)
}

pub fn translate_prerequisite(
    prq: &Prerequisite,
    ctx: &TranslationContext,
    mode: SeqInterpretation,
) -> Formula {
    Translator::new(mode).prerequisite(prq, ctx)
}

pub fn translate_requirement(
    r: &Requirement,
    ids: &BTreeSet<PolicyId>,
    lo: &Term,
    hi: &Term,
    mode: SeqInterpretation,
) -> Formula {
    Translator::new(mode).requirement(r, ids, lo, hi)
}

/// `f+` and `f-` of a query: the conjunction of the agreements implies,
/// respectively, the permission and its negation.
pub fn query_formulas(
    agreements: &[Agreement],
    subject: &Subject,
    action: Action,
    asset: &Asset,
    mode: SeqInterpretation,
) -> (Formula, Formula) {
    let theory = and_all(
        agreements
            .iter()
            .map(|a| translate_agreement(a, mode))
            .collect(),
    );
    let goal = permitted(Term::subject(subject), action, asset);
    (
        implies(theory.clone(), goal.clone()),
        implies(theory, not(goal)),
    )
}
