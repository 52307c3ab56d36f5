//! Four-way query answering.

mod general;
mod tractable;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{in_fragment_q1, Action, Agreement, Asset, PolicyId, Subject};
use crate::env::Environment;
use crate::fol::{FolError, DEFAULT_MAX_ASSIGNMENTS};
use crate::translate::SeqInterpretation;

pub use general::{answer_general, general_formulas};
pub use tractable::{
    answer_tractable, fminus_valid_single, fplus_valid_single, holds, jointly_satisfiable,
    normalize_prerequisite, req_holds, PolicySetIndex, SplusTuple,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub agreements: Vec<Agreement>,
    pub subject: Subject,
    pub action: Action,
    pub asset: Asset,
    pub env: Environment,
}

impl Query {
    pub fn new(
        agreements: Vec<Agreement>,
        subject: &str,
        action: Action,
        asset: &str,
        env: Environment,
    ) -> Self {
        Query {
            agreements,
            subject: Subject::new(subject),
            action,
            asset: Asset::new(asset),
            env,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Granted,
    Denied,
    Unregulated,
    Inconsistent,
}

impl Verdict {
    pub fn from_bits(fplus_valid: bool, fminus_valid: bool) -> Self {
        match (fplus_valid, fminus_valid) {
            (true, true) => Verdict::Inconsistent,
            (true, false) => Verdict::Granted,
            (false, true) => Verdict::Denied,
            (false, false) => Verdict::Unregulated,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Verdict::Inconsistent => (true, true),
            Verdict::Granted => (true, false),
            Verdict::Denied => (false, true),
            Verdict::Unregulated => (false, false),
        }
    }

    pub fn phrase(self) -> &'static str {
        match self {
            Verdict::Granted => "Permission granted",
            Verdict::Denied => "Permission denied",
            Verdict::Unregulated => "Permission unregulated",
            Verdict::Inconsistent => "Query inconsistent",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Granted => 0,
            Verdict::Denied => 1,
            Verdict::Unregulated => 2,
            Verdict::Inconsistent => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    General,
    Tractable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Answer {
    pub verdict: Verdict,
    pub path: Path,
    pub fplus_valid: bool,
    pub fminus_valid: bool,
    /// Human-readable notes on what decided the verdict.
    pub provenance: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineOptions {
    pub mode: SeqInterpretation,
    /// Successive `inSeq` members must happen strictly later.
    pub inseq_strict: bool,
    pub max_assignments: u64,
    pub force_general: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mode: SeqInterpretation::Overlapping,
            inseq_strict: true,
            max_assignments: DEFAULT_MAX_ASSIGNMENTS,
            force_general: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("policy id {0} is used by more than one policy")]
    DuplicatePolicyId(PolicyId),
    #[error(transparent)]
    Fol(#[from] FolError),
}

impl EngineError {
    pub fn is_cap(&self) -> bool {
        matches!(self, EngineError::Fol(FolError::CapExceeded { .. }))
    }
}

fn check_ids(agreements: &[Agreement]) -> Result<(), EngineError> {
    let mut seen = BTreeSet::new();
    for id in agreements.iter().flat_map(Agreement::all_policy_ids) {
        if !seen.insert(id.clone()) {
            return Err(EngineError::DuplicatePolicyId(id));
        }
    }
    Ok(())
}

/// Answers a query, taking the polynomial path when no agreement uses
/// `not[ps]` (unless `force_general` is set).
pub fn answer(q: &Query, opts: &EngineOptions) -> Result<Answer, EngineError> {
    check_ids(&q.agreements)?;
    if !opts.force_general && in_fragment_q1(&q.agreements) {
        Ok(answer_tractable(q, opts))
    } else {
        let (fplus_valid, fminus_valid) = answer_general(q, opts)?;
        let mut provenance = Vec::new();
        if !q.env.check_consistent() {
            provenance
                .push("environment assigns two different counts to one subject and policy".into());
        }
        Ok(Answer {
            verdict: Verdict::from_bits(fplus_valid, fminus_valid),
            path: Path::General,
            fplus_valid,
            fminus_valid,
            provenance,
        })
    }
}
