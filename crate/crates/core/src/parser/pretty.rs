use std::fmt::Write;

use crate::ast::{Agreement, Constraint, Policy, PolicySet, Prerequisite, Principal, Requirement};
use crate::num::format_rational;

/// Renders an agreement on one line. Policy-set arrows are always explicit,
/// so the output re-parses to the same value.
pub fn pretty(agr: &Agreement) -> String {
    let mut out = String::new();
    write!(
        out,
        "agreement for {} about {} with {}",
        principal(&agr.user),
        agr.asset,
        pretty_policy_set(&agr.body)
    )
    .unwrap();
    out
}

/// One agreement per line, each terminated by `.`.
pub fn pretty_agreements(agrs: &[Agreement]) -> String {
    agrs.iter().map(|a| format!("{}.\n", pretty(a))).collect()
}

fn principal(p: &Principal) -> String {
    match p {
        Principal::Subject(s) => s.to_string(),
        Principal::Group(ms) => format!("{{{}}}", join(ms.iter().map(principal))),
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(", ")
}

pub fn pretty_policy_set(ps: &PolicySet) -> String {
    match ps {
        PolicySet::Primitive {
            prq,
            policy,
            exclusive,
        } => format!(
            "{} {} ({})",
            pretty_prerequisite(prq),
            if *exclusive { "|->" } else { "-->" },
            pretty_policy(policy)
        ),
        PolicySet::And(items) => format!("and[{}]", join(items.iter().map(pretty_policy_set))),
    }
}

pub fn pretty_policy(p: &Policy) -> String {
    match p {
        Policy::Primitive { prq, id, action } => {
            format!("{} ==>_{} {}", pretty_prerequisite(prq), id, action)
        }
        Policy::And(items) => format!("and[{}]", join(items.iter().map(pretty_policy))),
    }
}

fn constraint(c: &Constraint) -> String {
    match c {
        Constraint::Principal(p) => principal(p),
        Constraint::ForEachMember { prin, constraints } => format!(
            "forEachMember[{}; {}]",
            principal(prin),
            join(constraints.iter().map(constraint))
        ),
        Constraint::Count(n) => format!("count[{n}]"),
        Constraint::PrinCount { prin, n } => format!("{}<count[{n}]>", principal(prin)),
    }
}

fn requirement(r: &Requirement) -> String {
    match r {
        Requirement::PrePay(amount) => format!("prePay[{}]", format_rational(amount)),
        Requirement::Attribution(s) => format!("attribution[{s}]"),
        Requirement::InSeq(rs) => format!("inSeq[{}]", join(rs.iter().map(requirement))),
        Requirement::AnySeq(rs) => format!("anySeq[{}]", join(rs.iter().map(requirement))),
    }
}

pub fn pretty_prerequisite(prq: &Prerequisite) -> String {
    match prq {
        Prerequisite::True => "true".into(),
        Prerequisite::Constraint(c) => constraint(c),
        Prerequisite::Requirement(r) => requirement(r),
        Prerequisite::NotPolicySet(ps) => format!("not[{}]", pretty_policy_set(ps)),
        Prerequisite::NotConstraint(c) => format!("not[{}]", constraint(c)),
        Prerequisite::And(ps) => format!("and[{}]", join(ps.iter().map(pretty_prerequisite))),
        Prerequisite::Or(ps) => format!("or[{}]", join(ps.iter().map(pretty_prerequisite))),
        Prerequisite::Xor(ps) => format!("xor[{}]", join(ps.iter().map(pretty_prerequisite))),
    }
}
