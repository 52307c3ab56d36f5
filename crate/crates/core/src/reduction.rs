//! Encoding 3-CNF satisfiability as a permission query.
//!
//! A formula is satisfiable exactly when `f+` of the produced query is not
//! valid relative to the (empty) environment.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::ast::{Action, Agreement, Asset, Policy, PolicyId, PolicySet, Prerequisite, Principal};
use crate::engine::Query;
use crate::env::Environment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lit {
    /// 1-based variable index.
    pub var: usize,
    pub positive: bool,
}

impl Lit {
    pub fn pos(var: usize) -> Self {
        Lit {
            var,
            positive: true,
        }
    }

    pub fn neg(var: usize) -> Self {
        Lit {
            var,
            positive: false,
        }
    }

    fn dimacs(self) -> i64 {
        if self.positive {
            self.var as i64
        } else {
            -(self.var as i64)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf3 {
    pub num_vars: usize,
    pub clauses: Vec<[Lit; 3]>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReductionError {
    #[error("clause {0} contains a variable and its negation")]
    ValidClause(usize),
    #[error("clause {clause} mentions variable {var}, but there are only {num_vars}")]
    VariableOutOfRange {
        clause: usize,
        var: usize,
        num_vars: usize,
    },
    #[error("{0} variables is too many for truth-table search (at most 20)")]
    TooManyVariables(usize),
    #[error("line {line}: {message}")]
    Dimacs { line: usize, message: String },
}

impl Cnf3 {
    pub fn new(num_vars: usize, clauses: Vec<[Lit; 3]>) -> Result<Self, ReductionError> {
        let cnf = Cnf3 { num_vars, clauses };
        cnf.validate()?;
        Ok(cnf)
    }

    pub fn validate(&self) -> Result<(), ReductionError> {
        for (i, clause) in self.clauses.iter().enumerate() {
            for l in clause {
                if l.var == 0 || l.var > self.num_vars {
                    return Err(ReductionError::VariableOutOfRange {
                        clause: i + 1,
                        var: l.var,
                        num_vars: self.num_vars,
                    });
                }
            }
            if clause.iter().any(|a| {
                clause
                    .iter()
                    .any(|b| a.var == b.var && a.positive != b.positive)
            }) {
                return Err(ReductionError::ValidClause(i + 1));
            }
        }
        Ok(())
    }

    pub fn eval(&self, assignment: u64) -> bool {
        self.clauses.iter().all(|c| {
            c.iter()
                .any(|l| (assignment >> (l.var - 1) & 1 == 1) == l.positive)
        })
    }

    /// Random clauses over three distinct variables each.
    ///
    /// # Panics
    /// If `num_vars < 3`.
    pub fn random(rng: &mut impl Rng, num_vars: usize, num_clauses: usize) -> Self {
        assert!(num_vars >= 3);
        let clauses = (0..num_clauses)
            .map(|_| {
                let vars = rand::seq::index::sample(rng, num_vars, 3);
                let mut it = vars.iter().map(|v| Lit {
                    var: v + 1,
                    positive: rng.gen(),
                });
                [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
            })
            .collect();
        Cnf3 { num_vars, clauses }
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            out.push_str(&format!(
                "{} {} {} 0\n",
                c[0].dimacs(),
                c[1].dimacs(),
                c[2].dimacs()
            ));
        }
        out
    }

    /// Reads DIMACS CNF where every clause has exactly three literals.
    pub fn parse_dimacs(text: &str) -> Result<Self, ReductionError> {
        let err = |line: usize, message: String| ReductionError::Dimacs { line, message };
        let mut header: Option<(usize, usize)> = None;
        let mut clauses = Vec::new();
        let mut pending: Vec<(i64, usize)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts.as_slice() {
                    ["cnf", v, c] => {
                        let v = v
                            .parse()
                            .map_err(|_| err(n, format!("bad variable count {v:?}")))?;
                        let c = c
                            .parse()
                            .map_err(|_| err(n, format!("bad clause count {c:?}")))?;
                        header = Some((v, c));
                    }
                    _ => return Err(err(n, "expected `p cnf <vars> <clauses>`".into())),
                }
                continue;
            }
            if header.is_none() {
                return Err(err(n, "clause before the `p cnf` header".into()));
            }
            for tok in line.split_whitespace() {
                let v: i64 = tok
                    .parse()
                    .map_err(|_| err(n, format!("bad literal {tok:?}")))?;
                if v != 0 {
                    pending.push((v, n));
                    continue;
                }
                if pending.len() != 3 {
                    return Err(err(
                        n,
                        format!("clause has {} literals, expected 3", pending.len()),
                    ));
                }
                let lits: Vec<Lit> = pending
                    .drain(..)
                    .map(|(v, _)| Lit {
                        var: v.unsigned_abs() as usize,
                        positive: v > 0,
                    })
                    .collect();
                clauses.push([lits[0], lits[1], lits[2]]);
            }
        }
        if let Some(&(_, line)) = pending.first() {
            return Err(err(line, "clause is not terminated by 0".into()));
        }
        let (num_vars, num_clauses) =
            header.ok_or_else(|| err(0, "missing `p cnf` header".into()))?;
        if clauses.len() != num_clauses {
            return Err(err(
                0,
                format!(
                    "header declares {num_clauses} clauses, found {}",
                    clauses.len()
                ),
            ));
        }
        Cnf3::new(num_vars, clauses)
    }
}

impl fmt::Display for Cnf3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let clauses: Vec<String> = self
            .clauses
            .iter()
            .map(|c| {
                let lits: Vec<String> = c
                    .iter()
                    .map(|l| format!("{}P{}", if l.positive { "" } else { "¬" }, l.var))
                    .collect();
                format!("({})", lits.join(" ∨ "))
            })
            .collect();
        if clauses.is_empty() {
            f.write_str("true")
        } else {
            f.write_str(&clauses.join(" ∧ "))
        }
    }
}

/// Truth-table satisfiability.
pub fn sat_bruteforce(phi: &Cnf3) -> Result<bool, ReductionError> {
    if phi.num_vars > 20 {
        return Err(ReductionError::TooManyVariables(phi.num_vars));
    }
    Ok((0..1u64 << phi.num_vars).any(|a| phi.eval(a)))
}

/// Name of subject `s_i`; zero-padded so that name order is index order.
pub fn subject_name(i: usize, num_vars: usize) -> String {
    let width = num_vars.to_string().len();
    format!("s{i:0width$}")
}

/// One agreement per clause; the query asks whether `s0` may display `a`.
pub fn reduce(phi: &Cnf3) -> Result<Query, ReductionError> {
    phi.validate()?;
    let m = phi.num_vars;
    let user = Principal::subjects_group(
        (0..=m)
            .map(|i| subject_name(i, m))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str),
    );
    let s0 = Prerequisite::principal(Principal::subject(subject_name(0, m)));
    let agreements = phi
        .clauses
        .iter()
        .enumerate()
        .map(|(i, clause)| {
            let prqs = clause
                .iter()
                .enumerate()
                .map(|(j, lit)| {
                    let inner = PolicySet::of_policy(Policy::Primitive {
                        prq: Prerequisite::principal(Principal::subject(subject_name(lit.var, m))),
                        id: PolicyId::new(format!("c{}_l{}", i + 1, j + 1)),
                        action: Action::Print,
                    });
                    let not_ps = Prerequisite::NotPolicySet(Box::new(inner));
                    let cond = if lit.positive {
                        not_ps
                    } else {
                        Prerequisite::Xor(vec![Prerequisite::True, not_ps])
                    };
                    Prerequisite::And(vec![s0.clone(), cond])
                })
                .collect();
            Agreement {
                user: user.clone(),
                asset: Asset::new("a"),
                body: PolicySet::of_policy(Policy::Primitive {
                    prq: Prerequisite::And(prqs),
                    id: PolicyId::new(format!("c{}", i + 1)),
                    action: Action::Display,
                }),
            }
        })
        .collect();
    Ok(Query::new(
        agreements,
        &subject_name(0, m),
        Action::Display,
        "a",
        Environment::new(),
    ))
}
