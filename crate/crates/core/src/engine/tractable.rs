//! Polynomial decision procedure for agreement sets without `not[ps]`.

use std::collections::BTreeSet;

use itertools::Itertools;

use crate::ast::{
    Action, Agreement, Asset, Constraint, PolicyId, PolicySet, Prerequisite, Principal,
    Requirement, Subject,
};
use crate::env::{Environment, Window};
use crate::num::Rational;
use crate::translate::SeqInterpretation;

use super::{Answer, EngineOptions, Path, Query, Verdict};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplusTuple {
    pub prq: Prerequisite,
    pub ids: BTreeSet<PolicyId>,
    pub policy_prq: Prerequisite,
    pub id: PolicyId,
    pub action: Action,
}

/// Grants and exclusive prohibitions of one policy set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolicySetIndex {
    /// One tuple per (primitive policy set, primitive policy inside it).
    pub splus: Vec<SplusTuple>,
    /// Actions of policies inside exclusive policy sets.
    pub sminus: BTreeSet<Action>,
}

impl PolicySetIndex {
    pub fn build(ps: &PolicySet) -> Self {
        let mut idx = PolicySetIndex::default();
        ps.for_each_primitive(&mut |prq, policy, exclusive| {
            let ids = policy.ids();
            policy.for_each_primitive(&mut |policy_prq, id, action| {
                idx.splus.push(SplusTuple {
                    prq: normalize_prerequisite(prq),
                    ids: ids.clone(),
                    policy_prq: normalize_prerequisite(policy_prq),
                    id: id.clone(),
                    action,
                });
                if exclusive {
                    idx.sminus.insert(action);
                }
            });
        });
        idx
    }
}

/// Removes `forEachMember` nested inside `forEachMember`; the inner one
/// overrides the principal, so it does not depend on the outer member.
pub fn normalize_prerequisite(prq: &Prerequisite) -> Prerequisite {
    match prq {
        Prerequisite::Constraint(c) => normalize_constraint(c),
        Prerequisite::NotConstraint(c) => match normalize_constraint(c) {
            Prerequisite::Constraint(c) => Prerequisite::NotConstraint(c),
            Prerequisite::And(parts) => Prerequisite::Or(
                parts
                    .into_iter()
                    .map(|p| match p {
                        Prerequisite::Constraint(c) => Prerequisite::NotConstraint(c),
                        other => unreachable!("normalized constraint {other:?}"),
                    })
                    .collect(),
            ),
            other => unreachable!("normalized constraint {other:?}"),
        },
        Prerequisite::And(ps) => Prerequisite::And(ps.iter().map(normalize_prerequisite).collect()),
        Prerequisite::Or(ps) => Prerequisite::Or(ps.iter().map(normalize_prerequisite).collect()),
        Prerequisite::Xor(ps) => Prerequisite::Xor(ps.iter().map(normalize_prerequisite).collect()),
        other => other.clone(),
    }
}

/// A constraint or a flat `and` of constraints.
fn normalize_constraint(c: &Constraint) -> Prerequisite {
    let mut flat = Vec::new();
    flatten_for_each(c, &mut flat);
    if flat.len() == 1 {
        Prerequisite::Constraint(flat.pop().unwrap())
    } else {
        Prerequisite::And(flat.into_iter().map(Prerequisite::Constraint).collect())
    }
}

fn flatten_for_each(c: &Constraint, out: &mut Vec<Constraint>) {
    let Constraint::ForEachMember { prin, constraints } = c else {
        out.push(c.clone());
        return;
    };
    let (nested, others): (Vec<&Constraint>, Vec<&Constraint>) = constraints
        .iter()
        .partition(|c| matches!(c, Constraint::ForEachMember { .. }));
    if !others.is_empty() {
        out.push(Constraint::ForEachMember {
            prin: prin.clone(),
            constraints: others.into_iter().cloned().collect(),
        });
    }
    for n in nested {
        flatten_for_each(n, out);
    }
}

/// Whether `prq` holds for subject `s`, with `ids` the policies it guards
/// and `prin` the principal counts range over.
///
/// # Panics
/// On `not[ps]`, which lies outside the fragment this procedure handles.
pub fn holds(
    prq: &Prerequisite,
    s: &Subject,
    ids: &BTreeSet<PolicyId>,
    prin: &Principal,
    env: &Environment,
    opts: &EngineOptions,
) -> bool {
    match prq {
        Prerequisite::True => true,
        Prerequisite::Constraint(c) => constraint_holds(c, s, ids, prin, env),
        Prerequisite::NotConstraint(c) => !constraint_holds(c, s, ids, prin, env),
        Prerequisite::Requirement(r) => req_holds(r, ids, env, &Window::all(), opts).is_some(),
        Prerequisite::And(ps) => ps.iter().all(|p| holds(p, s, ids, prin, env, opts)),
        Prerequisite::Or(ps) => ps.iter().any(|p| holds(p, s, ids, prin, env, opts)),
        Prerequisite::Xor(ps) => {
            ps.iter()
                .filter(|p| holds(p, s, ids, prin, env, opts))
                .count()
                == 1
        }
        Prerequisite::NotPolicySet(_) => panic!("holds: not[ps] is outside the tractable fragment"),
    }
}

fn constraint_holds(
    c: &Constraint,
    s: &Subject,
    ids: &BTreeSet<PolicyId>,
    prin: &Principal,
    env: &Environment,
) -> bool {
    match c {
        Constraint::Principal(p) => p.contains(s),
        Constraint::ForEachMember {
            prin: group,
            constraints,
        } => group.principals().iter().all(|member| {
            constraints
                .iter()
                .all(|c| constraint_holds(c, s, ids, member, env))
        }),
        Constraint::Count(n) => count_total(ids, prin, env) < u128::from(*n),
        Constraint::PrinCount { prin: p, n } => count_total(ids, p, env) < u128::from(*n),
    }
}

fn count_total(ids: &BTreeSet<PolicyId>, prin: &Principal, env: &Environment) -> u128 {
    prin.subjects()
        .iter()
        .flat_map(|s2| {
            ids.iter()
                .map(move |id| u128::from(env.lookup_count(s2, id)))
        })
        .sum()
}

/// Earliest completion time of `req` inside `window`, or `None`.
///
/// `inSeq` is greedy: taking the earliest completion of a member leaves
/// the most room for the members after it, so no solution is lost.
pub fn req_holds(
    req: &Requirement,
    ids: &BTreeSet<PolicyId>,
    env: &Environment,
    window: &Window,
    opts: &EngineOptions,
) -> Option<Rational> {
    match req {
        Requirement::PrePay(amount) => env.paid_exists(amount, ids, window),
        Requirement::Attribution(s) => env.attributed_exists(s, window),
        Requirement::InSeq(rs) => in_seq(rs.iter(), ids, env, window, opts),
        Requirement::AnySeq(rs) => match opts.mode {
            SeqInterpretation::Overlapping => {
                let mut latest = None;
                for r in rs {
                    let t = req_holds(r, ids, env, window, opts)?;
                    latest = latest.max(Some(t));
                }
                latest.or_else(|| Some(window.from.clone()))
            }
            SeqInterpretation::Consecutive => (0..rs.len())
                .permutations(rs.len())
                .filter_map(|perm| in_seq(perm.into_iter().map(|i| &rs[i]), ids, env, window, opts))
                .min(),
        },
    }
}

fn in_seq<'a>(
    rs: impl Iterator<Item = &'a Requirement>,
    ids: &BTreeSet<PolicyId>,
    env: &Environment,
    window: &Window,
    opts: &EngineOptions,
) -> Option<Rational> {
    let mut current = window.clone();
    let mut witness = None;
    for r in rs {
        let t = req_holds(r, ids, env, &current, opts)?;
        current = Window {
            from: t.clone(),
            from_exclusive: opts.inseq_strict,
            until: window.until.clone(),
        };
        witness = Some(t);
    }
    witness.or_else(|| Some(window.from.clone()))
}

fn tuple_holds(
    t: &SplusTuple,
    s: &Subject,
    user: &Principal,
    env: &Environment,
    opts: &EngineOptions,
) -> bool {
    holds(&t.prq, s, &t.ids, user, env, opts)
        && holds(
            &t.policy_prq,
            s,
            &BTreeSet::from([t.id.clone()]),
            user,
            env,
            opts,
        )
}

/// The grant clause of `agr` for `(s, act, a)` fires, given consistent `env`.
fn grants(
    agr: &Agreement,
    idx: &PolicySetIndex,
    s: &Subject,
    act: Action,
    a: &Asset,
    env: &Environment,
    opts: &EngineOptions,
) -> bool {
    agr.user.contains(s)
        && &agr.asset == a
        && idx
            .splus
            .iter()
            .any(|t| t.action == act && tuple_holds(t, s, &agr.user, env, opts))
}

fn forbids(agr: &Agreement, idx: &PolicySetIndex, s: &Subject, act: Action, a: &Asset) -> bool {
    !agr.user.contains(s) && &agr.asset == a && idx.sminus.contains(&act)
}

pub fn fplus_valid_single(
    agr: &Agreement,
    s: &Subject,
    act: Action,
    a: &Asset,
    env: &Environment,
    opts: &EngineOptions,
) -> bool {
    !env.check_consistent() || grants(agr, &PolicySetIndex::build(&agr.body), s, act, a, env, opts)
}

pub fn fminus_valid_single(
    agr: &Agreement,
    s: &Subject,
    act: Action,
    a: &Asset,
    env: &Environment,
) -> bool {
    !env.check_consistent() || forbids(agr, &PolicySetIndex::build(&agr.body), s, act, a)
}

/// A conflicting pair: (forbidding agreement, granting agreement, subject, action).
type Conflict = (usize, usize, Subject, Action);

fn find_conflict(
    agreements: &[Agreement],
    indexes: &[PolicySetIndex],
    env: &Environment,
    opts: &EngineOptions,
) -> Option<Conflict> {
    for (i, (agr, idx)) in agreements.iter().zip(indexes).enumerate() {
        for (j, (other, other_idx)) in agreements.iter().zip(indexes).enumerate() {
            if agr.asset != other.asset {
                continue;
            }
            let outsiders: Vec<Subject> = other
                .user
                .subjects()
                .difference(&agr.user.subjects())
                .cloned()
                .collect();
            for &act in &idx.sminus {
                for s in &outsiders {
                    if grants(other, other_idx, s, act, &other.asset, env, opts) {
                        return Some((i, j, s.clone(), act));
                    }
                }
            }
        }
    }
    None
}

/// Whether the agreements hold together in some model relevant to `env`.
pub fn jointly_satisfiable(
    agreements: &[Agreement],
    env: &Environment,
    opts: &EngineOptions,
) -> bool {
    let indexes: Vec<PolicySetIndex> = agreements
        .iter()
        .map(|a| PolicySetIndex::build(&a.body))
        .collect();
    env.check_consistent() && find_conflict(agreements, &indexes, env, opts).is_none()
}

pub fn answer_tractable(q: &Query, opts: &EngineOptions) -> Answer {
    let inconsistent = |note: String| Answer {
        verdict: Verdict::Inconsistent,
        path: Path::Tractable,
        fplus_valid: true,
        fminus_valid: true,
        provenance: vec![note],
    };
    if !q.env.check_consistent() {
        return inconsistent(
            "environment assigns two different counts to one subject and policy".into(),
        );
    }
    let indexes: Vec<PolicySetIndex> = q
        .agreements
        .iter()
        .map(|a| PolicySetIndex::build(&a.body))
        .collect();
    if let Some((i, j, s, act)) = find_conflict(&q.agreements, &indexes, &q.env, opts) {
        return inconsistent(format!(
            "agreement {} forbids {s} to {act} {} while agreement {} permits it",
            i + 1,
            q.agreements[i].asset,
            j + 1
        ));
    }
    let mut provenance = Vec::new();
    let mut fplus_valid = false;
    let mut fminus_valid = false;
    for (k, (agr, idx)) in q.agreements.iter().zip(&indexes).enumerate() {
        if grants(agr, idx, &q.subject, q.action, &q.asset, &q.env, opts) {
            fplus_valid = true;
            provenance.push(format!("agreement {} grants the permission", k + 1));
        }
        if forbids(agr, idx, &q.subject, q.action, &q.asset) {
            fminus_valid = true;
            provenance.push(format!(
                "agreement {} grants {} exclusively to its user",
                k + 1,
                q.action
            ));
        }
    }
    Answer {
        verdict: Verdict::from_bits(fplus_valid, fminus_valid),
        path: Path::Tractable,
        fplus_valid,
        fminus_valid,
        provenance,
    }
}
