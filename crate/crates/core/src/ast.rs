//! Abstract syntax of agreements, policy sets, policies and prerequisites.
//!
//! Values are immutable once built. Groups are kept in canonical order so
//! that structural equality coincides with set equality of members.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::num::Rational;

macro_rules! name_type {
    ($(#[$m:meta])* $ty:ident) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $ty(Arc<str>);

        impl $ty {
            pub fn new(name: impl Into<Arc<str>>) -> Self {
                let name = name.into();
                debug_assert!(!name.is_empty(), concat!(stringify!($ty), " names are nonempty"));
                $ty(name)
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn shared(&self) -> Arc<str> {
                Arc::clone(&self.0)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $ty {
            fn from(s: &str) -> Self {
                $ty::new(s)
            }
        }
    };
}

name_type!(
    /// An atomic agent. Names are case-sensitive.
    Subject
);
name_type!(Asset);
name_type!(
    /// Identifier of a primitive policy; anchors usage counting.
    PolicyId
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("empty group")]
    EmptyGroup,
    #[error("empty `{0}` list")]
    EmptyList(&'static str),
    #[error("duplicate policy id `{0}`")]
    DuplicatePolicyId(PolicyId),
}

/// A subject or a (nonempty) group of principals.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Principal {
    Subject(Subject),
    Group(Vec<Principal>),
}

impl Principal {
    pub fn subject(name: impl Into<Arc<str>>) -> Self {
        Principal::Subject(Subject::new(name))
    }

    /// Builds a group, sorting and deduplicating its members.
    pub fn group(members: impl IntoIterator<Item = Principal>) -> Result<Self, AstError> {
        let set: BTreeSet<Principal> = members.into_iter().collect();
        if set.is_empty() {
            return Err(AstError::EmptyGroup);
        }
        Ok(Principal::Group(set.into_iter().collect()))
    }

    /// Group of plain subjects; panics on an empty list.
    pub fn subjects_group<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        Principal::group(names.into_iter().map(Principal::subject)).expect("nonempty group")
    }

    /// All leaf subjects, flattened.
    pub fn subjects(&self) -> BTreeSet<Subject> {
        let mut out = BTreeSet::new();
        self.collect_subjects(&mut out);
        out
    }

    fn collect_subjects(&self, out: &mut BTreeSet<Subject>) {
        match self {
            Principal::Subject(s) => {
                out.insert(s.clone());
            }
            Principal::Group(ms) => ms.iter().for_each(|m| m.collect_subjects(out)),
        }
    }

    /// Immediate members; a subject is its own only member.
    pub fn principals(&self) -> BTreeSet<Principal> {
        match self {
            Principal::Subject(_) => BTreeSet::from([self.clone()]),
            Principal::Group(ms) => ms.iter().cloned().collect(),
        }
    }

    pub fn contains(&self, s: &Subject) -> bool {
        match self {
            Principal::Subject(t) => t == s,
            Principal::Group(ms) => ms.iter().any(|m| m.contains(s)),
        }
    }

    /// Re-establishes canonical order bottom-up.
    pub fn normalized(&self) -> Result<Self, AstError> {
        match self {
            Principal::Subject(_) => Ok(self.clone()),
            Principal::Group(ms) => Principal::group(
                ms.iter()
                    .map(|m| m.normalized())
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Play,
    Print,
    Display,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Play, Action::Print, Action::Display];

    pub fn name(self) -> &'static str {
        match self {
            Action::Play => "play",
            Action::Print => "print",
            Action::Display => "display",
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Requirement {
    PrePay(Rational),
    Attribution(Subject),
    InSeq(Vec<Requirement>),
    AnySeq(Vec<Requirement>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Constraint {
    Principal(Principal),
    ForEachMember {
        prin: Principal,
        constraints: Vec<Constraint>,
    },
    Count(u64),
    PrinCount {
        prin: Principal,
        n: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Prerequisite {
    True,
    Constraint(Constraint),
    Requirement(Requirement),
    NotPolicySet(Box<PolicySet>),
    NotConstraint(Constraint),
    And(Vec<Prerequisite>),
    Or(Vec<Prerequisite>),
    Xor(Vec<Prerequisite>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    Primitive {
        prq: Prerequisite,
        id: PolicyId,
        action: Action,
    },
    And(Vec<Policy>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PolicySet {
    Primitive {
        prq: Prerequisite,
        policy: Policy,
        exclusive: bool,
    },
    And(Vec<PolicySet>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Agreement {
    pub user: Principal,
    pub asset: Asset,
    pub body: PolicySet,
}

impl Policy {
    /// Ids of the primitive policies mentioned in this policy.
    pub fn ids(&self) -> BTreeSet<PolicyId> {
        let mut out = BTreeSet::new();
        self.for_each_primitive(&mut |_, id, _| {
            out.insert(id.clone());
        });
        out
    }

    pub fn for_each_primitive<'a>(
        &'a self,
        f: &mut impl FnMut(&'a Prerequisite, &'a PolicyId, Action),
    ) {
        match self {
            Policy::Primitive { prq, id, action } => f(prq, id, *action),
            Policy::And(ps) => ps.iter().for_each(|p| p.for_each_primitive(f)),
        }
    }
}

impl PolicySet {
    /// `true --> p`, the expansion of a bare policy.
    pub fn of_policy(policy: Policy) -> Self {
        PolicySet::Primitive {
            prq: Prerequisite::True,
            policy,
            exclusive: false,
        }
    }

    pub fn for_each_primitive<'a>(
        &'a self,
        f: &mut impl FnMut(&'a Prerequisite, &'a Policy, bool),
    ) {
        match self {
            PolicySet::Primitive {
                prq,
                policy,
                exclusive,
            } => f(prq, policy, *exclusive),
            PolicySet::And(ss) => ss.iter().for_each(|s| s.for_each_primitive(f)),
        }
    }

    fn mentions_not_policy_set(&self) -> bool {
        let mut found = false;
        self.for_each_primitive(&mut |prq, policy, _| {
            found |= prq.mentions_not_policy_set();
            policy.for_each_primitive(&mut |p, _, _| found |= p.mentions_not_policy_set());
        });
        found
    }
}

impl Prerequisite {
    pub fn mentions_not_policy_set(&self) -> bool {
        match self {
            Prerequisite::NotPolicySet(_) => true,
            Prerequisite::And(ps) | Prerequisite::Or(ps) | Prerequisite::Xor(ps) => {
                ps.iter().any(Prerequisite::mentions_not_policy_set)
            }
            _ => false,
        }
    }

    pub fn principal(prin: Principal) -> Self {
        Prerequisite::Constraint(Constraint::Principal(prin))
    }
}

impl Agreement {
    /// Every policy id in the agreement, including those of policy sets
    /// nested under `not[...]`, in order of appearance.
    pub fn all_policy_ids(&self) -> Vec<PolicyId> {
        let mut out = Vec::new();
        collect_ps_ids(&self.body, &mut out);
        out
    }

    pub fn validate(&self) -> Result<(), AstError> {
        validate_principal(&self.user)?;
        validate_policy_set(&self.body)?;
        let mut seen = BTreeSet::new();
        for id in self.all_policy_ids() {
            if !seen.insert(id.clone()) {
                return Err(AstError::DuplicatePolicyId(id));
            }
        }
        Ok(())
    }

    pub fn mentions_not_policy_set(&self) -> bool {
        self.body.mentions_not_policy_set()
    }
}

/// True iff no agreement uses a `not[ps]` condition anywhere.
pub fn in_fragment_q1(agreements: &[Agreement]) -> bool {
    !agreements.iter().any(Agreement::mentions_not_policy_set)
}

fn collect_ps_ids(ps: &PolicySet, out: &mut Vec<PolicyId>) {
    ps.for_each_primitive(&mut |prq, policy, _| {
        collect_prq_ids(prq, out);
        policy.for_each_primitive(&mut |p, id, _| {
            collect_prq_ids(p, out);
            out.push(id.clone());
        });
    });
}

fn collect_prq_ids(prq: &Prerequisite, out: &mut Vec<PolicyId>) {
    match prq {
        Prerequisite::NotPolicySet(ps) => collect_ps_ids(ps, out),
        Prerequisite::And(ps) | Prerequisite::Or(ps) | Prerequisite::Xor(ps) => {
            ps.iter().for_each(|p| collect_prq_ids(p, out))
        }
        _ => {}
    }
}

fn validate_principal(p: &Principal) -> Result<(), AstError> {
    match p {
        Principal::Subject(_) => Ok(()),
        Principal::Group(ms) if ms.is_empty() => Err(AstError::EmptyGroup),
        Principal::Group(ms) => ms.iter().try_for_each(validate_principal),
    }
}

fn validate_constraint(c: &Constraint) -> Result<(), AstError> {
    match c {
        Constraint::Principal(p) | Constraint::PrinCount { prin: p, .. } => validate_principal(p),
        Constraint::ForEachMember { prin, constraints } => {
            validate_principal(prin)?;
            if constraints.is_empty() {
                return Err(AstError::EmptyList("forEachMember"));
            }
            constraints.iter().try_for_each(validate_constraint)
        }
        Constraint::Count(_) => Ok(()),
    }
}

fn validate_requirement(r: &Requirement) -> Result<(), AstError> {
    match r {
        Requirement::PrePay(_) | Requirement::Attribution(_) => Ok(()),
        Requirement::InSeq(rs) | Requirement::AnySeq(rs) => {
            if rs.is_empty() {
                return Err(AstError::EmptyList(if matches!(r, Requirement::InSeq(_)) {
                    "inSeq"
                } else {
                    "anySeq"
                }));
            }
            rs.iter().try_for_each(validate_requirement)
        }
    }
}

fn validate_prerequisite(p: &Prerequisite) -> Result<(), AstError> {
    match p {
        Prerequisite::True => Ok(()),
        Prerequisite::Constraint(c) | Prerequisite::NotConstraint(c) => validate_constraint(c),
        Prerequisite::Requirement(r) => validate_requirement(r),
        Prerequisite::NotPolicySet(ps) => validate_policy_set(ps),
        Prerequisite::And(ps) | Prerequisite::Or(ps) | Prerequisite::Xor(ps) => {
            if ps.is_empty() {
                return Err(AstError::EmptyList("prerequisite"));
            }
            ps.iter().try_for_each(validate_prerequisite)
        }
    }
}

fn validate_policy(p: &Policy) -> Result<(), AstError> {
    match p {
        Policy::Primitive { prq, .. } => validate_prerequisite(prq),
        Policy::And(ps) if ps.is_empty() => Err(AstError::EmptyList("policy")),
        Policy::And(ps) => ps.iter().try_for_each(validate_policy),
    }
}

fn validate_policy_set(ps: &PolicySet) -> Result<(), AstError> {
    match ps {
        PolicySet::Primitive { prq, policy, .. } => {
            validate_prerequisite(prq)?;
            validate_policy(policy)
        }
        PolicySet::And(ss) if ss.is_empty() => Err(AstError::EmptyList("policy set")),
        PolicySet::And(ss) => ss.iter().try_for_each(validate_policy_set),
    }
}

/// Every subject named anywhere in the agreement.
pub fn agreement_subjects(agr: &Agreement) -> BTreeSet<Subject> {
    let mut out = agr.user.subjects();
    ps_subjects(&agr.body, &mut out);
    out
}

fn ps_subjects(ps: &PolicySet, out: &mut BTreeSet<Subject>) {
    ps.for_each_primitive(&mut |prq, policy, _| {
        prq_subjects(prq, out);
        policy.for_each_primitive(&mut |p, _, _| prq_subjects(p, out));
    });
}

fn prq_subjects(prq: &Prerequisite, out: &mut BTreeSet<Subject>) {
    match prq {
        Prerequisite::True => {}
        Prerequisite::Constraint(c) | Prerequisite::NotConstraint(c) => cons_subjects(c, out),
        Prerequisite::Requirement(r) => req_subjects(r, out),
        Prerequisite::NotPolicySet(ps) => ps_subjects(ps, out),
        Prerequisite::And(ps) | Prerequisite::Or(ps) | Prerequisite::Xor(ps) => {
            ps.iter().for_each(|p| prq_subjects(p, out))
        }
    }
}

fn cons_subjects(c: &Constraint, out: &mut BTreeSet<Subject>) {
    match c {
        Constraint::Principal(p) | Constraint::PrinCount { prin: p, .. } => {
            out.extend(p.subjects())
        }
        Constraint::ForEachMember { prin, constraints } => {
            out.extend(prin.subjects());
            constraints.iter().for_each(|c| cons_subjects(c, out));
        }
        Constraint::Count(_) => {}
    }
}

fn req_subjects(r: &Requirement, out: &mut BTreeSet<Subject>) {
    match r {
        Requirement::PrePay(_) => {}
        Requirement::Attribution(s) => {
            out.insert(s.clone());
        }
        Requirement::InSeq(rs) | Requirement::AnySeq(rs) => {
            rs.iter().for_each(|r| req_subjects(r, out))
        }
    }
}

/// Actions regulated anywhere in the agreement (including under `not[...]`).
pub fn agreement_actions(agr: &Agreement) -> BTreeSet<Action> {
    let mut out = BTreeSet::new();
    ps_actions(&agr.body, &mut out);
    out
}

fn ps_actions(ps: &PolicySet, out: &mut BTreeSet<Action>) {
    ps.for_each_primitive(&mut |prq, policy, _| {
        prq_actions(prq, out);
        policy.for_each_primitive(&mut |p, _, act| {
            out.insert(act);
            prq_actions(p, out);
        });
    });
}

fn prq_actions(prq: &Prerequisite, out: &mut BTreeSet<Action>) {
    match prq {
        Prerequisite::NotPolicySet(ps) => ps_actions(ps, out),
        Prerequisite::And(ps) | Prerequisite::Or(ps) | Prerequisite::Xor(ps) => {
            ps.iter().for_each(|p| prq_actions(p, out))
        }
        _ => {}
    }
}
