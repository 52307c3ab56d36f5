//! Checks shared by the property suite and the acceptance target.
//!
//! Each check returns `Ok(count)` with the number of cases examined, or
//! `Err` describing the first counterexample.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use itertools::Itertools;
use odrl_core::ast::{
    in_fragment_q1, Action, Agreement, Asset, Policy, PolicyId, PolicySet, Prerequisite, Principal,
    Subject,
};
use odrl_core::engine::{
    answer, answer_general, answer_tractable, general_formulas, holds, jointly_satisfiable,
    req_holds, EngineOptions, PolicySetIndex, Query, Verdict,
};
use odrl_core::env::{Environment, Fact, Window};
use odrl_core::fol::{
    ground, ground_reduce, implies, not, propositional_valid, reduce_literals,
    satisfiable_exhaustive, simplify, to_sexpr, to_sexpr_pretty, Formula, Sort, Term, TermUniverse,
    Var, DEFAULT_MAX_ASSIGNMENTS,
};
use odrl_core::gen::{
    random_agreement, random_env, random_policy, random_policy_set, random_prerequisite,
    random_principal, random_query, random_query_sized, random_requirement, GenConfig, IdSupply,
    Shape, OUTSIDER, SUBJECTS,
};
use odrl_core::num::{Rational, TimePoint};
use odrl_core::oracle::{atom_universe, enumerate_models, evalid, oracle_answer, query_universe};
use odrl_core::parser::{parse_agreement, parse_agreements, pretty_agreements};
use odrl_core::reduction::{reduce, sat_bruteforce, Cnf3, Lit};
use odrl_core::translate::{
    translate_agreement, translate_prerequisite, translate_requirement, SeqInterpretation,
    TranslationContext, Translator,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type Check = Result<usize, String>;

pub const MODES: [SeqInterpretation; 2] = [
    SeqInterpretation::Overlapping,
    SeqInterpretation::Consecutive,
];

pub fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Independent stream for case `i` of a run seeded with `seed`.
pub fn case_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn opts(mode: SeqInterpretation) -> EngineOptions {
    EngineOptions {
        mode,
        ..EngineOptions::default()
    }
}

fn half(k: i64) -> Rational {
    Rational::new(k.into(), 2.into())
}

/// Runs `case` on `0..n` in parallel and reports the lowest failing index.
fn par_cases(n: usize, case: impl Fn(usize) -> Result<(), String> + Sync) -> Check {
    let failures: Vec<(usize, String)> = (0..n)
        .into_par_iter()
        .filter_map(|i| case(i).err().map(|e| (i, e)))
        .collect();
    match failures.into_iter().min_by_key(|(i, _)| *i) {
        None => Ok(n),
        Some((i, e)) => Err(format!("case {i}: {e}")),
    }
}

/// Truth value of a closed, `Permitted`-free formula under `env`, via
/// grounding over the formula's constants and the environment.
pub fn ground_truth(f: &Formula, env: &Environment) -> bool {
    let mut u = TermUniverse::for_formula(f, env);
    u.insert(Term::time(&TimePoint::zero()));
    u.insert(Term::Infinity);
    match simplify(&ground_reduce(f, &u, env).expect("groundable")) {
        Formula::True => true,
        Formula::False => false,
        other => panic!("undecided ground formula {}", to_sexpr(&other)),
    }
}

fn verdict_general(q: &Query, o: &EngineOptions) -> Result<Verdict, String> {
    let (p, m) = answer_general(q, o).map_err(|e| e.to_string())?;
    Ok(Verdict::from_bits(p, m))
}

fn show(q: &Query) -> String {
    format!(
        "{}env: {:?}\nquery: {} {} {}",
        pretty_agreements(&q.agreements),
        q.env
            .facts()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>(),
        q.subject,
        q.action.name(),
        q.asset
    )
}

// ---------------------------------------------------------------- examples

pub struct ExampleCase {
    pub label: &'static str,
    pub agreements: &'static str,
    pub env: Option<&'static str>,
    pub subject: &'static str,
    pub action: Action,
    pub asset: &'static str,
    pub expected: Verdict,
}

pub fn example_cases() -> Vec<ExampleCase> {
    let print_case = |label, agreements, expected| ExampleCase {
        label,
        agreements,
        env: None,
        subject: "Charlie",
        action: Action::Print,
        asset: "file",
        expected,
    };
    let jingle_case = |label, env, subject, expected| ExampleCase {
        label,
        agreements: "jingle.odrl",
        env: Some(env),
        subject,
        action: Action::Play,
        asset: "latestJingle",
        expected,
    };
    vec![
        print_case("pair {agr, agr'}", "print_pair.odrl", Verdict::Inconsistent),
        print_case("singleton {agr}", "print_alice.odrl", Verdict::Unregulated),
        print_case(
            "singleton {agr'}",
            "print_bob_exclusive.odrl",
            Verdict::Unregulated,
        ),
        jingle_case("jingle Alice", "jingle.env", "Alice", Verdict::Granted),
        jingle_case("jingle Dana", "jingle.env", "Dana", Verdict::Denied),
        jingle_case("jingle Bob", "jingle.env", "Bob", Verdict::Unregulated),
        jingle_case(
            "jingle Alice, swapped times",
            "jingle_swapped.env",
            "Alice",
            Verdict::Unregulated,
        ),
    ]
}

/// Outcome per example: the verdict obtained and the time it took.
pub fn run_example(case: &ExampleCase) -> (Verdict, Duration) {
    let agreements = parse_agreements(&fixture(case.agreements)).expect("fixture parses");
    let env = case
        .env
        .map(|e| Environment::parse(&fixture(e)).expect("fixture env parses"))
        .unwrap_or_default();
    let q = Query::new(agreements, case.subject, case.action, case.asset, env);
    let start = Instant::now();
    let a = answer(&q, &EngineOptions::default()).expect("answer");
    (a.verdict, start.elapsed())
}

// ---------------------------------------------------------------- goldens

/// Drops `;` comment lines and collapses whitespace.
pub fn normalize_sexpr(text: &str) -> String {
    let body: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with(';'))
        .collect();
    body.join(" ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace("( ", "(")
        .replace(" )", ")")
}

pub fn golden(odrl: &str, golden: &str) -> Result<(), String> {
    let agr = parse_agreement(&fixture(odrl)).map_err(|d| format!("{d:?}"))?;
    let f = translate_agreement(&agr, SeqInterpretation::Overlapping);
    let expected = normalize_sexpr(&fixture(golden));
    if to_sexpr(&f) != expected {
        return Err(format!(
            "{odrl}: flat form differs\n got {}\nwant {expected}",
            to_sexpr(&f)
        ));
    }
    if normalize_sexpr(&to_sexpr_pretty(&f)) != expected {
        return Err(format!("{odrl}: indented form differs"));
    }
    Ok(())
}

// ---------------------------------------------------------------- reduction

pub fn reduction_iff(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let vars = rng.gen_range(3..=8);
        let clauses = rng.gen_range(1..=12);
        let phi = Cnf3::random(&mut rng, vars, clauses);
        let q = reduce(&phi).map_err(|e| e.to_string())?;
        if in_fragment_q1(&q.agreements) {
            return Err("reduction output lies inside Q1".into());
        }
        let (fplus, _) =
            answer_general(&q, &EngineOptions::default()).map_err(|e| e.to_string())?;
        let sat = sat_bruteforce(&phi).map_err(|e| e.to_string())?;
        if sat == fplus {
            return Err(format!("{phi}: satisfiable = {sat}, f+ valid = {fplus}"));
        }
        Ok(())
    })
}

/// Unsatisfiable: clauses `(P_i | P_{m-1} | P_m)` for `i < m - 2` plus all
/// eight sign patterns over the last three variables.
pub fn hard_unsat(m: usize) -> Cnf3 {
    let mut clauses: Vec<[Lit; 3]> = (1..m - 2)
        .map(|i| [Lit::pos(i), Lit::pos(m - 1), Lit::pos(m)])
        .collect();
    for bits in 0..8u32 {
        let l = |k: u32, var: usize| Lit {
            var,
            positive: bits >> k & 1 == 1,
        };
        clauses.push([l(0, m - 2), l(1, m - 1), l(2, m)]);
    }
    Cnf3::new(m, clauses).expect("well-formed")
}

// ---------------------------------------------------------------- deciders

/// Tractable, general and oracle verdicts agree on random Q1 queries.
pub fn tractable_equivalence(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let q = random_query(&mut rng, &GenConfig::default());
        let mode = if i % 4 == 3 {
            SeqInterpretation::Consecutive
        } else {
            SeqInterpretation::Overlapping
        };
        let o = opts(mode);
        let t = answer_tractable(&q, &o).verdict;
        let g = verdict_general(&q, &o)?;
        let w = oracle_answer(&q, mode).map_err(|e| e.to_string())?;
        if t != g || g != w {
            return Err(format!(
                "tractable {t:?}, general {g:?}, oracle {w:?} ({mode:?})\n{}",
                show(&q)
            ));
        }
        Ok(())
    })
}

/// General path and oracle agree beyond Q1, where `not[ps]` may occur.
pub fn general_vs_oracle_with_not(n: usize, seed: u64) -> Check {
    let cfg = GenConfig {
        not_policy_sets: true,
        max_agreements: 2,
        ..GenConfig::default()
    };
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let q = random_query(&mut rng, &cfg);
        let mode = MODES[i % 2];
        let g = verdict_general(&q, &opts(mode))?;
        let w = oracle_answer(&q, mode).map_err(|e| e.to_string())?;
        if g != w {
            return Err(format!("general {g:?}, oracle {w:?}\n{}", show(&q)));
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- timing

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

/// Median per-query time of the tractable path on `n`-agreement queries.
pub fn tractable_median(n: usize, samples: usize, seed: u64) -> Duration {
    let cfg = GenConfig::default();
    let o = EngineOptions::default();
    let reps = 20;
    let times = (0..samples)
        .map(|i| {
            let q = random_query_sized(&mut case_rng(seed, i), &cfg, n);
            let start = Instant::now();
            for _ in 0..reps {
                std::hint::black_box(answer_tractable(std::hint::black_box(&q), &o));
            }
            start.elapsed() / reps
        })
        .collect();
    median(times)
}

/// Median time of the general path on `reduce(hard_unsat(m))`, or `None`
/// when the assignment cap is hit.
pub fn reduction_median(m: usize, runs: usize) -> Result<Option<Duration>, String> {
    let q = reduce(&hard_unsat(m)).map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    // One untimed run first, so allocator warm-up is not attributed to the smaller instance.
    for run in 0..=runs {
        let start = Instant::now();
        match answer_general(&q, &EngineOptions::default()) {
            Ok((true, _)) if run > 0 => times.push(start.elapsed()),
            Ok((true, _)) => {}
            Ok((false, _)) => {
                return Err(format!(
                    "f+ of the unsatisfiable {m}-variable family is not valid"
                ))
            }
            Err(e) if e.is_cap() => return Ok(None),
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(Some(median(times)))
}

// ---------------------------------------------------------------- sequencing

/// Verdicts for `anySeq[inSeq[r1, r2], r3]` with the three events at the
/// times given by `order` (a permutation of event indices).
pub fn sequencing_accepts(order: &[usize], mode: SeqInterpretation) -> Result<bool, String> {
    let agr = parse_agreement(
        "agreement for Alice about f with \
         anySeq[inSeq[prePay[5], attribution[Bob]], attribution[Charlie]] --> (Alice ==>_id print)",
    )
    .map_err(|d| format!("{d:?}"))?;
    let mut env = Environment::new();
    for (slot, &event) in order.iter().enumerate() {
        let time = Rational::from_integer((slot as i64 + 1).into());
        env.add(match event {
            0 => Fact::Paid {
                amount: Rational::from_integer(5.into()),
                ids: BTreeSet::from([PolicyId::new("id")]),
                time,
            },
            1 => Fact::Attributed {
                subject: Subject::new("Bob"),
                time,
            },
            _ => Fact::Attributed {
                subject: Subject::new("Charlie"),
                time,
            },
        });
    }
    let q = Query::new(vec![agr], "Alice", Action::Print, "f", env);
    let o = opts(mode);
    let verdicts = [
        answer(&q, &o).map_err(|e| e.to_string())?.verdict,
        verdict_general(&q, &o)?,
        oracle_answer(&q, mode).map_err(|e| e.to_string())?,
    ];
    if verdicts.iter().any(|v| *v != verdicts[0]) {
        return Err(format!("deciders disagree on {order:?}: {verdicts:?}"));
    }
    match verdicts[0] {
        Verdict::Granted => Ok(true),
        Verdict::Unregulated => Ok(false),
        v => Err(format!("unexpected verdict {v:?} for {order:?}")),
    }
}

pub fn sequencing_check() -> Result<(), String> {
    for mode in MODES {
        let mut accepted = Vec::new();
        for order in (0..3).permutations(3) {
            if sequencing_accepts(&order, mode)? {
                accepted.push(
                    order
                        .iter()
                        .map(|e| format!("r{}", e + 1))
                        .collect::<String>(),
                );
            }
        }
        let expected: &[&str] = match mode {
            SeqInterpretation::Consecutive => &["r1r2r3", "r3r1r2"],
            SeqInterpretation::Overlapping => &["r1r2r3", "r1r3r2", "r3r1r2"],
        };
        if accepted != expected {
            return Err(format!(
                "{mode:?} accepts {accepted:?}, expected {expected:?}"
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- invariants

fn shape() -> Shape {
    Shape::new(GenConfig::default())
}

/// Random agreements (with `not[ps]`) survive printing and reparsing.
pub fn parse_round_trip(n: usize, seed: u64) -> Check {
    let cfg = GenConfig {
        not_policy_sets: true,
        ..GenConfig::default()
    };
    let shape = Shape::new(cfg);
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let mut ids = IdSupply::new();
        let agr = random_agreement(&mut rng, &shape, &mut ids, &Asset::new("f"));
        let text = pretty_agreements(std::slice::from_ref(&agr));
        let parsed = parse_agreements(&text).map_err(|d| format!("{text}: {d:?}"))?;
        if parsed != vec![agr] {
            return Err(format!("reparse differs: {text}"));
        }
        if pretty_agreements(&parsed) != text {
            return Err(format!("printing is not stable: {text}"));
        }
        Ok(())
    })
}

pub fn principal_laws(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let p = random_principal(&mut rng, 3, true);
        let wrapped = Principal::Group(vec![p.clone()]);
        if wrapped.subjects() != p.subjects() {
            return Err(format!("subjects changes under wrapping: {p:?}"));
        }
        let union: BTreeSet<Subject> = p
            .principals()
            .iter()
            .flat_map(Principal::subjects)
            .collect();
        if union != p.subjects() {
            return Err(format!("subjects is not the union over principals: {p:?}"));
        }
        Ok(())
    })
}

pub fn ids_distribute(n: usize, seed: u64) -> Check {
    let shape = shape();
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let mut ids = IdSupply::new();
        ids.start_agreement();
        let parts: Vec<Policy> = (0..rng.gen_range(1..=4))
            .map(|_| random_policy(&mut rng, &shape, &mut ids, 2))
            .collect();
        let union: BTreeSet<PolicyId> = parts.iter().flat_map(Policy::ids).collect();
        if Policy::And(parts).ids() != union {
            return Err("ids(and[...]) differs from the union".into());
        }
        Ok(())
    })
}

/// `xor[true, not[ps]]` and `ps` are equivalent on every ground instance.
pub fn xor_not_equivalence(n: usize, seed: u64) -> Check {
    let shape = shape();
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let mode = MODES[i % 2];
        let mut ids = IdSupply::new();
        ids.start_agreement();
        let ps = random_policy_set(&mut rng, &shape, &mut ids, 2);
        let user = random_principal(&mut rng, 3, true);
        let asset = Asset::new("f");
        let env = random_env(&mut rng, &ids, 6);
        if !env.check_consistent() {
            return Ok(());
        }
        let prq = Prerequisite::Xor(vec![
            Prerequisite::True,
            Prerequisite::NotPolicySet(Box::new(ps.clone())),
        ]);
        let ctx = TranslationContext::new(&user, &asset, BTreeSet::new());
        let lhs = translate_prerequisite(&prq, &ctx, mode);
        let rhs =
            Translator::new(mode).policy_set(&ps, &user, &asset, &Var::new("y", Sort::Subjects));
        let iff = Formula::And(vec![implies(lhs.clone(), rhs.clone()), implies(rhs, lhs)]);
        let mut u = TermUniverse::for_formula(&iff, &env);
        u.insert(Term::time(&TimePoint::zero()));
        u.insert(Term::Infinity);
        let g = ground_reduce(&iff, &u, &env).map_err(|e| e.to_string())?;
        if !propositional_valid(&g, DEFAULT_MAX_ASSIGNMENTS).map_err(|e| e.to_string())? {
            return Err(format!(
                "not equivalent for {}",
                pretty_agreements(&[Agreement {
                    user,
                    asset,
                    body: ps
                }])
            ));
        }
        Ok(())
    })
}

/// A random prerequisite setting: the id sets of one agreement, a user, a
/// subject and a consistent environment.
struct Setting {
    shape: Shape,
    ids: IdSupply,
    user: Principal,
    subject: Subject,
    env: Environment,
}

fn setting(rng: &mut ChaCha8Rng) -> Setting {
    let shape = shape();
    let mut ids = IdSupply::new();
    let agr = random_agreement(rng, &shape, &mut ids, &Asset::new("f"));
    let env = loop {
        let env = random_env(rng, &ids, 6);
        if env.check_consistent() {
            break env;
        }
    };
    let subject = if rng.gen_bool(0.15) {
        Subject::new(OUTSIDER)
    } else {
        Subject::new(*SUBJECTS.choose(rng).unwrap())
    };
    Setting {
        shape,
        ids,
        user: agr.user,
        subject,
        env,
    }
}

pub fn holds_vs_grounding(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let mut st = setting(&mut rng);
        let ids = st.ids.id_sets.choose(&mut rng).unwrap().clone();
        let prq = random_prerequisite(&mut rng, &st.shape, &mut st.ids, 2);
        let mode = MODES[i % 2];
        let ctx = TranslationContext::new(&st.user, &Asset::new("f"), ids.clone());
        let f = translate_prerequisite(&prq, &ctx, mode)
            .substitute(&ctx.x, &Term::subject(&st.subject));
        let fast = holds(&prq, &st.subject, &ids, &st.user, &st.env, &opts(mode));
        let slow = ground_truth(&f, &st.env);
        if fast != slow {
            return Err(format!(
                "holds = {fast}, grounding = {slow} for {prq:?}, subject {}, user {:?}, env {:?} ({mode:?})",
                st.subject,
                st.user,
                st.env.facts().iter().map(ToString::to_string).collect::<Vec<_>>()
            ));
        }
        Ok(())
    })
}

pub fn req_holds_vs_grounding(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let st = setting(&mut rng);
        let ids = st.ids.id_sets.choose(&mut rng).unwrap().clone();
        let req = random_requirement(&mut rng, 2);
        let mode = MODES[i % 2];
        // Every other case uses a random finite or open-ended window.
        let (lo, hi) = if i % 4 < 2 {
            (Rational::from_integer(0.into()), TimePoint::Infinity)
        } else {
            let lo = half(rng.gen_range(0..=6));
            let hi = if rng.gen_bool(0.3) {
                TimePoint::Infinity
            } else {
                TimePoint::At(half(rng.gen_range(0..=7)))
            };
            (lo, hi)
        };
        let window = Window {
            from: lo.clone(),
            from_exclusive: false,
            until: hi.clone(),
        };
        let fast = req_holds(&req, &ids, &st.env, &window, &opts(mode));
        let f = translate_requirement(
            &req,
            &ids,
            &Term::time(&TimePoint::At(lo)),
            &Term::time(&hi),
            mode,
        );
        let slow = ground_truth(&f, &st.env);
        if fast.is_some() != slow {
            return Err(format!(
                "req_holds = {fast:?}, grounding = {slow} for {req:?} in {window:?}, env {:?} ({mode:?})",
                st.env.facts().iter().map(ToString::to_string).collect::<Vec<_>>()
            ));
        }
        if let Some(t) = fast {
            if !window.contains(&t) {
                return Err(format!("witness {t} outside {window:?}"));
            }
        }
        Ok(())
    })
}

/// On jointly satisfiable Q1 sets, validity over the set is the OR of
/// validity over single agreements. Returns the number of qualifying sets.
pub fn or_decomposition(n: usize, seed: u64) -> Check {
    let qualifying: Vec<Result<bool, String>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, i);
            let q = random_query(&mut rng, &GenConfig::default());
            let o = opts(MODES[i % 2]);
            if !q.env.check_consistent() || !jointly_satisfiable(&q.agreements, &q.env, &o) {
                return Ok(false);
            }
            let whole = answer_general(&q, &o).map_err(|e| e.to_string())?;
            let mut any = (false, false);
            for agr in &q.agreements {
                let single = Query {
                    agreements: vec![agr.clone()],
                    ..q.clone()
                };
                let (p, m) = answer_general(&single, &o).map_err(|e| e.to_string())?;
                any = (any.0 || p, any.1 || m);
            }
            if whole != any {
                return Err(format!("set {whole:?}, singletons {any:?}\n{}", show(&q)));
            }
            Ok(true)
        })
        .collect();
    let mut count = 0;
    for r in qualifying {
        count += usize::from(r?);
    }
    Ok(count)
}

/// Adding an exclusive set for the same user keeps a granted member granted.
pub fn exclusivity_monotone(n: usize, seed: u64) -> Check {
    let shape = shape();
    let granted: Vec<Result<bool, String>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, i);
            let mut ids = IdSupply::new();
            let user = random_principal(&mut rng, 3, true);
            let asset = Asset::new("f");
            let mut agreements: Vec<Agreement> = (0..rng.gen_range(1..=2))
                .map(|_| Agreement {
                    user: user.clone(),
                    ..random_agreement(&mut rng, &shape, &mut ids, &asset)
                })
                .collect();
            let env = random_env(&mut rng, &ids, 6);
            let subject = user
                .subjects()
                .into_iter()
                .collect::<Vec<_>>()
                .choose(&mut rng)
                .unwrap()
                .clone();
            let action = *Action::ALL.choose(&mut rng).unwrap();
            let o = opts(MODES[i % 2]);
            let q = Query::new(
                agreements.clone(),
                subject.as_str(),
                action,
                "f",
                env.clone(),
            );
            if answer(&q, &o).map_err(|e| e.to_string())?.verdict != Verdict::Granted {
                return Ok(false);
            }
            ids.start_agreement();
            let extra = match random_policy_set(&mut rng, &shape, &mut ids, 1) {
                PolicySet::Primitive { prq, policy, .. } => PolicySet::Primitive {
                    prq,
                    policy,
                    exclusive: true,
                },
                PolicySet::And(mut items) => {
                    items.push(PolicySet::Primitive {
                        prq: Prerequisite::True,
                        policy: random_policy(&mut rng, &shape, &mut ids, 0),
                        exclusive: true,
                    });
                    PolicySet::And(items)
                }
            };
            agreements.push(Agreement {
                user,
                asset,
                body: extra,
            });
            let q2 = Query { agreements, ..q };
            let after = answer(&q2, &o).map_err(|e| e.to_string())?.verdict;
            let general = verdict_general(&q2, &o)?;
            if after != Verdict::Granted || general != Verdict::Granted {
                return Err(format!(
                    "verdict became {after:?} / {general:?}\n{}",
                    show(&q2)
                ));
            }
            Ok(true)
        })
        .collect();
    let mut count = 0;
    for r in granted {
        count += usize::from(r?);
    }
    Ok(count)
}

/// Fused grounding agrees with grounding followed by literal evaluation.
pub fn ground_reduce_matches(n: usize, seed: u64) -> Check {
    let cfg = GenConfig {
        not_policy_sets: true,
        max_agreements: 2,
        max_facts: 4,
        ..GenConfig::default()
    };
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let q = random_query(&mut rng, &cfg);
        let mode = MODES[i % 2];
        let u = query_universe(&q, mode);
        for agr in &q.agreements {
            let f = translate_agreement(agr, mode);
            let fused = ground_reduce(&f, &u, &q.env).map_err(|e| e.to_string())?;
            let staged = reduce_literals(&ground(&f, &u).map_err(|e| e.to_string())?, &q.env)
                .map_err(|e| e.to_string())?;
            let iff = Formula::And(vec![
                implies(fused.clone(), staged.clone()),
                implies(staged, fused),
            ]);
            if !propositional_valid(&iff, DEFAULT_MAX_ASSIGNMENTS).map_err(|e| e.to_string())? {
                return Err(format!("fused and staged grounding differ\n{}", show(&q)));
            }
        }
        Ok(())
    })
}

/// Case-splitting validity agrees with truth-table satisfiability of the
/// negation.
pub fn validity_matches_exhaustive(n: usize, seed: u64) -> Check {
    let cfg = GenConfig {
        not_policy_sets: true,
        max_agreements: 3,
        ..GenConfig::default()
    };
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let q = random_query(&mut rng, &cfg);
        let Some((fplus, fminus)) =
            general_formulas(&q, &opts(MODES[i % 2])).map_err(|e| e.to_string())?
        else {
            return Ok(());
        };
        for f in [fplus, fminus] {
            let valid =
                propositional_valid(&f, DEFAULT_MAX_ASSIGNMENTS).map_err(|e| e.to_string())?;
            let counter = satisfiable_exhaustive(&not(f)).map_err(|e| e.to_string())?;
            if valid == counter {
                return Err(format!(
                    "valid = {valid}, negation satisfiable = {counter}\n{}",
                    show(&q)
                ));
            }
        }
        Ok(())
    })
}

fn subject_nesting(f: &Formula) -> usize {
    match f {
        Formula::Forall(v, g) | Formula::Exists(v, g) => {
            usize::from(v.sort == Sort::Subjects) + subject_nesting(g)
        }
        Formula::Not(g) => subject_nesting(g),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().map(subject_nesting).max().unwrap_or(0),
        Formula::Implies(a, b) => subject_nesting(a).max(subject_nesting(b)),
        _ => 0,
    }
}

/// Translations are closed and well-sorted, nest at most one subject
/// quantifier in Q1, and ground within the size bound.
pub fn translation_shape(n: usize, seed: u64) -> Check {
    let cfg = GenConfig {
        not_policy_sets: true,
        max_facts: 4,
        ..GenConfig::default()
    };
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let q = random_query(&mut rng, &cfg);
        let mode = MODES[i % 2];
        for agr in &q.agreements {
            let f = translate_agreement(agr, mode);
            f.check_sorts().map_err(|e| e.to_string())?;
            if !f.is_closed() {
                return Err(format!("free variables {:?}", f.free_vars()));
            }
            if !agr.mentions_not_policy_set() && subject_nesting(&f) != 1 {
                return Err(format!(
                    "subject quantifier nesting {} in Q1",
                    subject_nesting(&f)
                ));
            }
            let mut u = TermUniverse::for_formula(&f, &q.env);
            u.insert(Term::time(&TimePoint::zero()));
            u.insert(Term::Infinity);
            let width = u.len_of(Sort::Subjects).max(u.len_of(Sort::Times)).max(1);
            let g = ground(&f, &u).map_err(|e| e.to_string())?;
            let bound = (f.size() as f64) * (width as f64).powi(f.quantifier_depth() as i32);
            if g.size() as f64 > bound {
                return Err(format!("ground size {} exceeds {bound}", g.size()));
            }
        }
        Ok(())
    })
}

/// Conjunctions translate to conjunctions, and a bare policy translates
/// like its `true -->` expansion.
pub fn translation_homomorphism(n: usize, seed: u64) -> Check {
    let shape = shape();
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let mode = MODES[i % 2];
        let mut ids = IdSupply::new();
        ids.start_agreement();
        let user = random_principal(&mut rng, 3, true);
        let asset = Asset::new("f");
        let x = Var::new("x", Sort::Subjects);
        let parts: Vec<PolicySet> = (0..rng.gen_range(2..=3))
            .map(|_| random_policy_set(&mut rng, &shape, &mut ids, 1))
            .collect();
        let whole =
            Translator::new(mode).policy_set(&PolicySet::And(parts.clone()), &user, &asset, &x);
        let mut t = Translator::new(mode);
        let pieces = Formula::And(
            parts
                .iter()
                .map(|p| t.policy_set(p, &user, &asset, &x))
                .collect(),
        );
        if whole != pieces {
            return Err("and[ps...] is not the conjunction of its parts".into());
        }

        let policy = random_policy(&mut rng, &shape, &mut ids, 1);
        let prqs: Vec<Prerequisite> = (0..2)
            .map(|_| random_prerequisite(&mut rng, &shape, &mut ids, 1))
            .collect();
        let ctx = TranslationContext::new(&user, &asset, policy.ids());
        let whole = translate_prerequisite(&Prerequisite::And(prqs.clone()), &ctx, mode);
        let mut t = Translator::new(mode);
        let pieces = Formula::And(prqs.iter().map(|p| t.prerequisite(p, &ctx)).collect());
        if whole != pieces {
            return Err("and[prq...] is not the conjunction of its parts".into());
        }

        let policy = loop {
            if let p @ Policy::Primitive { .. } = random_policy(&mut rng, &shape, &mut ids, 0) {
                break p;
            }
        };
        let full = odrl_core::parser::pretty(&Agreement {
            user: user.clone(),
            asset: asset.clone(),
            body: PolicySet::of_policy(policy.clone()),
        });
        let head = &full[..full.find(" with ").unwrap() + " with ".len()];
        let body = odrl_core::parser::pretty_policy(&policy);
        let bare = parse_agreement(&format!("{head}{body}")).map_err(|d| format!("{d:?}"))?;
        let expanded =
            parse_agreement(&format!("{head}true --> ({body})")).map_err(|d| format!("{d:?}"))?;
        if translate_agreement(&bare, mode) != translate_agreement(&expanded, mode) {
            return Err(format!("abbreviation differs for {body}"));
        }
        Ok(())
    })
}

/// Ground literals read the environment under the closed world, checked
/// against the fact list directly.
pub fn closed_world_literals(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let st = setting(&mut rng);
        let facts = st.env.facts();
        let time = half(rng.gen_range(0..=7));
        let subject = Subject::new(*SUBJECTS.choose(&mut rng).unwrap());
        let ids = st.ids.id_sets.choose(&mut rng).unwrap().clone();
        let amount = Rational::from_integer(if rng.gen_bool(0.5) { 5 } else { 10 }.into());

        let paid = Formula::Paid(
            Term::Lit(Box::new(amount.clone()), Sort::Reals),
            Term::IdSet(ids.clone()),
            Term::Lit(Box::new(time.clone()), Sort::Times),
        );
        let expected = facts.contains(&Fact::Paid {
            amount: amount.clone(),
            ids: ids.clone(),
            time: time.clone(),
        });
        let attributed = Formula::Attributed(
            Term::subject(&subject),
            Term::Lit(Box::new(time.clone()), Sort::Times),
        );
        let expected_attr = facts.contains(&Fact::Attributed {
            subject: subject.clone(),
            time: time.clone(),
        });
        let id = ids.iter().next().unwrap().clone();
        let n_bound = rng.gen_range(0..=4u64);
        let count = Formula::Lt(
            Term::Count(
                Box::new(Term::subject(&subject)),
                Box::new(Term::policy_id(&id)),
            ),
            Term::Lit(
                Box::new(Rational::from_integer(n_bound.into())),
                Sort::Reals,
            ),
        );
        let recorded = facts
            .iter()
            .find_map(|f| match f {
                Fact::Count {
                    subject: s,
                    id: j,
                    n,
                } if *s == subject && *j == id => Some(*n),
                _ => None,
            })
            .unwrap_or(0);
        if st.env.lookup_count(&subject, &id) != recorded {
            return Err("lookup_count disagrees with the facts".into());
        }
        for (lit, want) in [
            (paid, expected),
            (attributed, expected_attr),
            (count, recorded < n_bound),
        ] {
            let got =
                odrl_core::fol::eval_ground_literal(&lit, &st.env).map_err(|e| e.to_string())?;
            if got != want || got != odrl_core::fol::eval_ground_literal(&lit, &st.env).unwrap() {
                return Err(format!(
                    "{} evaluates to {got}, expected {want}",
                    to_sexpr(&lit)
                ));
            }
        }

        // Half-open windows: an event at the upper bound never matches.
        let window = Window {
            from: Rational::from_integer(0.into()),
            from_exclusive: false,
            until: TimePoint::At(time.clone()),
        };
        if let Some(t) = st.env.paid_exists(&amount, &ids, &window) {
            if t >= time {
                return Err(format!("payment at {t} matched window ending at {time}"));
            }
        }
        if expected {
            let closed_at = Window {
                from: time.clone(),
                from_exclusive: false,
                until: TimePoint::At(time.clone() + Rational::from_integer(1.into())),
            };
            if st.env.paid_exists(&amount, &ids, &closed_at).is_none() {
                return Err("payment at the lower bound did not match".into());
            }
        }

        let text = st.env.to_string();
        if Environment::parse(&text).map_err(|e| e.to_string())? != st.env {
            return Err(format!("environment text does not round-trip:\n{text}"));
        }
        Ok(())
    })
}

/// A `Permitted`-free closed formula has the same truth value in every
/// relevant model.
pub fn model_independence(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let q = random_query(&mut rng, &GenConfig::default());
        if !q.env.check_consistent() {
            return Ok(());
        }
        let mode = MODES[i % 2];
        for agr in &q.agreements {
            for t in PolicySetIndex::build(&agr.body).splus {
                let ctx = TranslationContext::new(&agr.user, &agr.asset, t.ids.clone());
                let f = translate_prerequisite(&t.prq, &ctx, mode)
                    .substitute(&ctx.x, &Term::subject(&q.subject));
                let yes = evalid(&f, &q, mode).map_err(|e| e.to_string())?;
                let no = evalid(&not(f), &q, mode).map_err(|e| e.to_string())?;
                if yes == no {
                    return Err(format!(
                        "prerequisite truth varies across models\n{}",
                        show(&q)
                    ));
                }
            }
        }
        Ok(())
    })
}

/// Consistent environments have `2^k` relevant models for `k` atoms, and
/// inconsistent ones none.
pub fn model_count(n: usize, seed: u64) -> Check {
    let cfg = GenConfig {
        max_agreements: 2,
        max_group: 2,
        ..GenConfig::default()
    };
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let mut q = random_query(&mut rng, &cfg);
        if i % 5 == 0 {
            if let Some(id) = q.agreements[0].all_policy_ids().first() {
                q.env.add(Fact::Count {
                    subject: Subject::new("Alice"),
                    id: id.clone(),
                    n: 1,
                });
                q.env.add(Fact::Count {
                    subject: Subject::new("Alice"),
                    id: id.clone(),
                    n: 2,
                });
            }
        }
        let mode = MODES[i % 2];
        let k = atom_universe(&query_universe(&q, mode))
            .map_err(|e| e.to_string())?
            .len();
        if k > 12 {
            return Ok(());
        }
        let models = enumerate_models(&q, mode).map_err(|e| e.to_string())?.len();
        let expected = if q.env.check_consistent() {
            1usize << k
        } else {
            0
        };
        if models != expected {
            return Err(format!("{models} models, expected {expected} (k = {k})"));
        }
        Ok(())
    })
}

pub const TOKENS: &[&str] = &[
    "agreement",
    "for",
    "about",
    "with",
    "-->",
    "|->",
    "==>_id",
    "==>_p1",
    "==>",
    "and[",
    "or[",
    "xor[",
    "not[",
    "[",
    "]",
    "(",
    ")",
    "{",
    "}",
    ",",
    ".",
    "Alice",
    "Bob",
    "{Alice, Bob}",
    "<count[",
    "]>",
    "count[",
    "3",
    "5.00",
    "-1",
    "prePay[",
    "attribution[",
    "inSeq[",
    "anySeq[",
    "forEachMember[",
    ";",
    "print",
    "play",
    "display",
    "true",
    "file",
    "# note\n",
    "\n",
    "@",
    "\"",
    "é",
    "_",
    "0.",
    "1e9",
    "99999999999999999999999",
];

/// Every diagnostic lies inside its input.
pub fn diagnostics_in_bounds(text: &str) -> Result<(), String> {
    if let Err(diags) = parse_agreements(text) {
        if diags.is_empty() {
            return Err(format!("rejected without a diagnostic: {text:?}"));
        }
        for d in diags {
            let s = d.span;
            if s.start > s.end || s.end > text.len() || s.line == 0 || s.column == 0 {
                return Err(format!("span {s:?} outside {text:?}"));
            }
        }
    }
    let _ = odrl_core::parser::parse_query(text);
    let _ = Environment::parse(text);
    Ok(())
}

/// Random token streams and random text produce diagnostics, never panics.
pub fn parser_fuzz(n: usize, seed: u64) -> Check {
    par_cases(n, |i| {
        let mut rng = case_rng(seed, i);
        let len = rng.gen_range(0..40);
        let text = if i % 4 == 0 {
            (0..len)
                .map(|_| rng.gen_range(' '..='~'))
                .collect::<String>()
        } else {
            (0..len)
                .map(|_| *TOKENS.choose(&mut rng).unwrap())
                .join(" ")
        };
        std::panic::catch_unwind(|| diagnostics_in_bounds(&text))
            .map_err(|_| format!("parser panicked on {text:?}"))?
    })
}
