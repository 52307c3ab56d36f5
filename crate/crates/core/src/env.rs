//! Ground facts about payments, attributions and usage counts.
//!
//! Lookups follow a closed world: a fact that is not stored does not hold
//! and a missing count is zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::ast::{PolicyId, Subject};
use crate::num::{format_rational, parse_rational, Rational, TimePoint};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fact {
    Paid {
        amount: Rational,
        ids: BTreeSet<PolicyId>,
        time: Rational,
    },
    Attributed {
        subject: Subject,
        time: Rational,
    },
    Count {
        subject: Subject,
        id: PolicyId,
        n: u64,
    },
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::Paid { amount, ids, time } => {
                let ids: Vec<&str> = ids.iter().map(PolicyId::as_str).collect();
                write!(
                    f,
                    "paid {} {{{}}} @ {}",
                    format_rational(amount),
                    ids.join(", "),
                    format_rational(time)
                )
            }
            Fact::Attributed { subject, time } => {
                write!(f, "attributed {subject} @ {}", format_rational(time))
            }
            Fact::Count { subject, id, n } => write!(f, "count {subject} {id} = {n}"),
        }
    }
}

/// A time interval `[from, until)`, or `(from, until)` when `from_exclusive`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub from: Rational,
    pub from_exclusive: bool,
    pub until: TimePoint,
}

impl Window {
    pub fn all() -> Self {
        Window {
            from: Rational::from_integer(0.into()),
            from_exclusive: false,
            until: TimePoint::Infinity,
        }
    }

    pub fn contains(&self, t: &Rational) -> bool {
        let above = if self.from_exclusive {
            t > &self.from
        } else {
            t >= &self.from
        };
        above && TimePoint::At(t.clone()) < self.until
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct EnvParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Environment {
    paid: BTreeSet<(Rational, BTreeSet<PolicyId>, Rational)>,
    attributed: BTreeSet<(Subject, Rational)>,
    counts: BTreeMap<(Subject, PolicyId), BTreeSet<u64>>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Self {
        let mut env = Self::new();
        for f in facts {
            env.add(f);
        }
        env
    }

    pub fn add(&mut self, fact: Fact) {
        match fact {
            Fact::Paid { amount, ids, time } => {
                self.paid.insert((amount, ids, time));
            }
            Fact::Attributed { subject, time } => {
                self.attributed.insert((subject, time));
            }
            Fact::Count { subject, id, n } => {
                self.counts.entry((subject, id)).or_default().insert(n);
            }
        }
    }

    /// A copy of this environment with one more fact.
    pub fn with(&self, fact: Fact) -> Self {
        let mut env = self.clone();
        env.add(fact);
        env
    }

    /// Stored facts in canonical order. Duplicate payment and attribution
    /// facts are merged.
    pub fn facts(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for (amount, ids, time) in &self.paid {
            out.push(Fact::Paid {
                amount: amount.clone(),
                ids: ids.clone(),
                time: time.clone(),
            });
        }
        for (subject, time) in &self.attributed {
            out.push(Fact::Attributed {
                subject: subject.clone(),
                time: time.clone(),
            });
        }
        for ((subject, id), ns) in &self.counts {
            for &n in ns {
                out.push(Fact::Count {
                    subject: subject.clone(),
                    id: id.clone(),
                    n,
                });
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.paid.is_empty() && self.attributed.is_empty() && self.counts.is_empty()
    }

    /// False iff some `(subject, id)` has two different counts.
    pub fn check_consistent(&self) -> bool {
        self.counts.values().all(|ns| ns.len() <= 1)
    }

    /// Every `(subject, id)` with more than one count, and those counts.
    pub fn conflicts(&self) -> Vec<(Subject, PolicyId, Vec<u64>)> {
        self.counts
            .iter()
            .filter(|(_, ns)| ns.len() > 1)
            .map(|((s, id), ns)| (s.clone(), id.clone(), ns.iter().copied().collect()))
            .collect()
    }

    /// The stored count, or 0. On an inconsistent environment the smallest
    /// stored value is returned.
    pub fn lookup_count(&self, s: &Subject, id: &PolicyId) -> u64 {
        self.counts
            .get(&(s.clone(), id.clone()))
            .and_then(|ns| ns.iter().next().copied())
            .unwrap_or(0)
    }

    /// Earliest time of a payment of exactly `amount` towards exactly `ids`
    /// inside the window.
    pub fn paid_exists(
        &self,
        amount: &Rational,
        ids: &BTreeSet<PolicyId>,
        w: &Window,
    ) -> Option<Rational> {
        self.paid
            .iter()
            .filter(|(r, i, t)| r == amount && i == ids && w.contains(t))
            .map(|(_, _, t)| t.clone())
            .min()
    }

    pub fn paid_at(&self, amount: &Rational, ids: &BTreeSet<PolicyId>, time: &Rational) -> bool {
        self.paid
            .iter()
            .any(|(r, i, t)| t == time && r == amount && i == ids)
    }

    pub fn attributed_exists(&self, s: &Subject, w: &Window) -> Option<Rational> {
        self.attributed
            .iter()
            .filter(|(who, t)| who == s && w.contains(t))
            .map(|(_, t)| t.clone())
            .min()
    }

    pub fn attributed_at(&self, s: &str, time: &Rational) -> bool {
        self.attributed
            .iter()
            .any(|(who, t)| t == time && who.as_str() == s)
    }

    /// Every time stamp mentioned by a fact.
    pub fn times(&self) -> BTreeSet<Rational> {
        let mut out: BTreeSet<Rational> = self.paid.iter().map(|(_, _, t)| t.clone()).collect();
        out.extend(self.attributed.iter().map(|(_, t)| t.clone()));
        out
    }

    pub fn subjects(&self) -> BTreeSet<Subject> {
        let mut out: BTreeSet<Subject> = self.attributed.iter().map(|(s, _)| s.clone()).collect();
        out.extend(self.counts.keys().map(|(s, _)| s.clone()));
        out
    }

    pub fn parse(text: &str) -> Result<Self, EnvParseError> {
        let mut env = Environment::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let fact = parse_fact(line).map_err(|message| EnvParseError {
                line: idx + 1,
                message,
            })?;
            env.add(fact);
        }
        Ok(env)
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in self.facts() {
            writeln!(f, "{fact}")?;
        }
        Ok(())
    }
}

fn parse_fact(line: &str) -> Result<Fact, String> {
    let mut spaced = String::with_capacity(line.len() + 8);
    for c in line.chars() {
        if matches!(c, '{' | '}' | ',' | '@' | '=') {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    let toks: Vec<&str> = spaced.split_whitespace().collect();
    let number =
        |s: &str, what: &str| parse_rational(s).ok_or_else(|| format!("invalid {what} `{s}`"));
    let name = |s: &str, what: &str| {
        let valid = s
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && s.chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'');
        if valid {
            Ok(s.to_string())
        } else {
            Err(format!("invalid {what} `{s}`"))
        }
    };
    match toks.as_slice() {
        ["paid", amount, "{", rest @ ..] => {
            let close = rest
                .iter()
                .position(|t| *t == "}")
                .ok_or("expected `}` after policy ids")?;
            let mut ids = BTreeSet::new();
            for (k, t) in rest[..close].iter().enumerate() {
                if k % 2 == 1 {
                    if *t != "," {
                        return Err(format!("expected `,` between policy ids, found `{t}`"));
                    }
                } else {
                    ids.insert(PolicyId::new(name(t, "policy id")?));
                }
            }
            if ids.is_empty() {
                return Err("empty policy id set".into());
            }
            match &rest[close + 1..] {
                ["@", time] => Ok(Fact::Paid {
                    amount: number(amount, "amount")?,
                    ids,
                    time: number(time, "time")?,
                }),
                _ => Err("expected `@ <time>` after policy ids".into()),
            }
        }
        ["attributed", who, "@", time] => Ok(Fact::Attributed {
            subject: Subject::new(name(who, "subject")?),
            time: number(time, "time")?,
        }),
        ["count", who, id, "=", n] => Ok(Fact::Count {
            subject: Subject::new(name(who, "subject")?),
            id: PolicyId::new(name(id, "policy id")?),
            n: n.parse()
                .map_err(|_| format!("count `{n}` is not a natural number"))?,
        }),
        _ => Err(format!("unrecognized fact `{}`", line.trim())),
    }
}
