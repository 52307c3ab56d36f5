//! Seeded random agreements, environments and queries for differential
//! testing.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ast::{
    Action, Agreement, Asset, Constraint, Policy, PolicyId, PolicySet, Prerequisite, Principal,
    Requirement, Subject,
};
use crate::engine::Query;
use crate::env::{Environment, Fact};
use crate::num::Rational;

pub const SUBJECTS: [&str; 3] = ["Alice", "Bob", "Charlie"];
/// Appears only as a query subject, never in agreements.
pub const OUTSIDER: &str = "Dana";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub max_agreements: usize,
    pub max_group: usize,
    pub max_depth: usize,
    pub max_facts: usize,
    /// Allow `not[ps]` prerequisites (leaves the tractable fragment).
    pub not_policy_sets: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_agreements: 4,
            max_group: 3,
            max_depth: 2,
            max_facts: 6,
            not_policy_sets: false,
        }
    }
}

/// Allocates `g{k}_{j}` policy ids and remembers the id sets prerequisites
/// are checked against, so payments can mention them.
#[derive(Clone, Debug, Default)]
pub struct IdSupply {
    agreement: usize,
    next: usize,
    pub id_sets: Vec<BTreeSet<PolicyId>>,
}

impl IdSupply {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start_agreement(&mut self) {
        self.agreement += 1;
        self.next = 0;
    }

    fn fresh(&mut self) -> PolicyId {
        self.next += 1;
        PolicyId::new(format!("g{}_{}", self.agreement.max(1), self.next))
    }

    pub fn all_ids(&self) -> BTreeSet<PolicyId> {
        self.id_sets.iter().flatten().cloned().collect()
    }
}

/// Shape limits for one generation run.
#[derive(Clone, Debug)]
pub struct Shape {
    pub cfg: GenConfig,
    pub actions: Vec<Action>,
}

impl Shape {
    pub fn new(cfg: GenConfig) -> Self {
        Shape {
            cfg,
            actions: Action::ALL.to_vec(),
        }
    }
}

pub fn random_subject(rng: &mut impl Rng) -> Subject {
    Subject::new(*SUBJECTS.choose(rng).unwrap())
}

pub fn random_principal(rng: &mut impl Rng, max_group: usize, nest: bool) -> Principal {
    if rng.gen_bool(0.4) {
        return Principal::Subject(random_subject(rng));
    }
    let size = rng.gen_range(1..=max_group.max(1));
    let mut members: Vec<Principal> = SUBJECTS
        .choose_multiple(rng, size.min(SUBJECTS.len()))
        .map(|s| Principal::subject(*s))
        .collect();
    if nest && rng.gen_bool(0.2) {
        members.push(random_principal(rng, 2, false));
    }
    Principal::group(members).expect("nonempty group")
}

fn random_time(rng: &mut impl Rng) -> Rational {
    Rational::new(rng.gen_range(0..=6).into(), 2.into())
}

fn random_amount(rng: &mut impl Rng) -> Rational {
    Rational::from_integer(if rng.gen_bool(0.5) { 5 } else { 10 }.into())
}

pub fn random_requirement(rng: &mut impl Rng, depth: usize) -> Requirement {
    let choice = if depth == 0 {
        rng.gen_range(0..2)
    } else {
        rng.gen_range(0..4)
    };
    match choice {
        0 => Requirement::PrePay(random_amount(rng)),
        1 => Requirement::Attribution(random_subject(rng)),
        k => {
            let n = rng.gen_range(1..=3);
            let items = (0..n).map(|_| random_requirement(rng, depth - 1)).collect();
            if k == 2 {
                Requirement::InSeq(items)
            } else {
                Requirement::AnySeq(items)
            }
        }
    }
}

pub fn random_constraint(rng: &mut impl Rng, shape: &Shape, depth: usize) -> Constraint {
    let max_group = shape.cfg.max_group;
    match rng.gen_range(0..if depth == 0 { 3 } else { 4 }) {
        0 => Constraint::Principal(random_principal(rng, max_group, true)),
        1 => Constraint::Count(rng.gen_range(0..=4)),
        2 => Constraint::PrinCount {
            prin: random_principal(rng, max_group, true),
            n: rng.gen_range(0..=4),
        },
        _ => {
            let n = rng.gen_range(1..=2);
            Constraint::ForEachMember {
                prin: random_principal(rng, max_group, true),
                constraints: (0..n)
                    .map(|_| random_constraint(rng, shape, depth - 1))
                    .collect(),
            }
        }
    }
}

pub fn random_prerequisite(
    rng: &mut impl Rng,
    shape: &Shape,
    ids: &mut IdSupply,
    depth: usize,
) -> Prerequisite {
    let leaf_kinds = 4;
    let kinds = if depth == 0 {
        leaf_kinds
    } else {
        leaf_kinds + 4
    };
    match rng.gen_range(0..kinds) {
        0 => Prerequisite::True,
        1 => Prerequisite::Constraint(random_constraint(rng, shape, depth)),
        2 => Prerequisite::Requirement(random_requirement(rng, depth)),
        3 => Prerequisite::NotConstraint(random_constraint(rng, shape, depth)),
        7 if shape.cfg.not_policy_sets => {
            Prerequisite::NotPolicySet(Box::new(random_policy_set(rng, shape, ids, depth - 1)))
        }
        k => {
            let n = rng.gen_range(1..=3);
            let items = (0..n)
                .map(|_| random_prerequisite(rng, shape, ids, depth - 1))
                .collect();
            match k {
                4 => Prerequisite::And(items),
                5 => Prerequisite::Or(items),
                _ => Prerequisite::Xor(items),
            }
        }
    }
}

pub fn random_policy(
    rng: &mut impl Rng,
    shape: &Shape,
    ids: &mut IdSupply,
    depth: usize,
) -> Policy {
    if depth > 0 && rng.gen_bool(0.3) {
        let n = rng.gen_range(1..=2);
        return Policy::And(
            (0..n)
                .map(|_| random_policy(rng, shape, ids, depth - 1))
                .collect(),
        );
    }
    let id = ids.fresh();
    ids.id_sets.push(BTreeSet::from([id.clone()]));
    Policy::Primitive {
        prq: random_prerequisite(rng, shape, ids, depth.min(1)),
        id,
        action: *shape.actions.choose(rng).unwrap(),
    }
}

pub fn random_policy_set(
    rng: &mut impl Rng,
    shape: &Shape,
    ids: &mut IdSupply,
    depth: usize,
) -> PolicySet {
    if depth > 0 && rng.gen_bool(0.25) {
        let n = rng.gen_range(1..=2);
        return PolicySet::And(
            (0..n)
                .map(|_| random_policy_set(rng, shape, ids, depth - 1))
                .collect(),
        );
    }
    let policy = random_policy(rng, shape, ids, depth.min(1));
    ids.id_sets.push(policy.ids());
    PolicySet::Primitive {
        prq: random_prerequisite(rng, shape, ids, depth),
        policy,
        exclusive: rng.gen_bool(0.35),
    }
}

pub fn random_agreement(
    rng: &mut impl Rng,
    shape: &Shape,
    ids: &mut IdSupply,
    asset: &Asset,
) -> Agreement {
    ids.start_agreement();
    Agreement {
        user: random_principal(rng, shape.cfg.max_group, true),
        asset: asset.clone(),
        body: random_policy_set(rng, shape, ids, shape.cfg.max_depth),
    }
}

/// Facts over the generated ids and subjects, at half-integer times in
/// `[0, 3]`; occasionally two different counts for one subject and id.
pub fn random_env(rng: &mut impl Rng, ids: &IdSupply, max_facts: usize) -> Environment {
    let all_ids: Vec<PolicyId> = ids.all_ids().into_iter().collect();
    let mut env = Environment::new();
    let target = rng.gen_range(0..=max_facts);
    while env.facts().len() < target {
        match rng.gen_range(0..3) {
            0 if !ids.id_sets.is_empty() => env.add(Fact::Paid {
                amount: random_amount(rng),
                ids: ids.id_sets.choose(rng).unwrap().clone(),
                time: random_time(rng),
            }),
            1 => env.add(Fact::Attributed {
                subject: random_subject(rng),
                time: random_time(rng),
            }),
            _ if !all_ids.is_empty() => {
                let subject = random_subject(rng);
                let id = all_ids.choose(rng).unwrap().clone();
                let n = rng.gen_range(0..=3);
                env.add(Fact::Count {
                    subject: subject.clone(),
                    id: id.clone(),
                    n,
                });
                if env.facts().len() < target && rng.gen_bool(0.03) {
                    env.add(Fact::Count {
                        subject,
                        id,
                        n: n + 1,
                    });
                }
            }
            _ => env.add(Fact::Attributed {
                subject: random_subject(rng),
                time: random_time(rng),
            }),
        }
    }
    env
}

/// A random query. A second asset is used now and then; the actions are
/// then limited to two so the atom universe stays within 20.
pub fn random_query(rng: &mut impl Rng, cfg: &GenConfig) -> Query {
    let n = rng.gen_range(1..=cfg.max_agreements.max(1));
    random_query_sized(rng, cfg, n)
}

/// Like [`random_query`] with exactly `n` agreements.
pub fn random_query_sized(rng: &mut impl Rng, cfg: &GenConfig, n: usize) -> Query {
    let mut shape = Shape::new(*cfg);
    let two_assets = rng.gen_bool(0.15);
    let assets = if two_assets {
        shape.actions = vec![Action::Print, Action::Display];
        vec![Asset::new("f"), Asset::new("g")]
    } else {
        vec![Asset::new("f")]
    };
    let mut ids = IdSupply::new();
    let agreements = (0..n)
        .map(|_| {
            let asset = assets.choose(rng).unwrap().clone();
            random_agreement(rng, &shape, &mut ids, &asset)
        })
        .collect();
    let env = random_env(rng, &ids, cfg.max_facts);
    let subject = if rng.gen_bool(0.15) {
        Subject::new(OUTSIDER)
    } else {
        random_subject(rng)
    };
    Query {
        agreements,
        subject,
        action: *shape.actions.choose(rng).unwrap(),
        asset: assets.choose(rng).unwrap().clone(),
        env,
    }
}
