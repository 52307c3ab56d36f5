//! Text syntax for agreements and queries.
//!
//! The grammar (EBNF) is documented in `docs/grammar.md`. Parsing happens in
//! two steps: a small recursive-descent parser builds an untyped expression
//! tree, and a classifier turns that tree into an [`Agreement`] depending on
//! the position each expression occupies. The `and[...]` combinator appears
//! at the policy-set, policy and prerequisite levels, so position alone
//! decides which one is meant.

mod lexer;
mod pretty;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::ast::{
    Action, Agreement, Asset, Constraint, Policy, PolicyId, PolicySet, Prerequisite, Principal,
    Requirement, Subject,
};
use crate::num::parse_rational;
use lexer::{tokenize, Tok, Token};

pub use pretty::{
    pretty, pretty_agreements, pretty_policy, pretty_policy_set, pretty_prerequisite,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    pub(crate) fn new(src: &str, start: usize, end: usize) -> Self {
        let before = &src[..start];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map_or(start, |nl| start - nl - 1) + 1;
        SourceSpan {
            start,
            end,
            line,
            column,
        }
    }

    fn to(self, other: SourceSpan) -> SourceSpan {
        SourceSpan {
            end: other.end.max(self.end),
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub message: String,
    pub severity: Severity,
}

impl ParseDiagnostic {
    fn error(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            span,
            message: message.into(),
            severity: Severity::Error,
        }
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {sev}: {}",
            self.span.line, self.span.column, self.message
        )
    }
}

pub type Diagnostics = Vec<ParseDiagnostic>;

/// A parsed permission question: may `subject` do `action` to `asset`?
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryTriple {
    pub subject: Subject,
    pub action: Action,
    pub asset: Asset,
}

const KEYWORDS: &[&str] = &[
    "agreement",
    "for",
    "about",
    "with",
    "true",
    "and",
    "or",
    "xor",
    "not",
    "forEachMember",
    "count",
    "prePay",
    "attribution",
    "inSeq",
    "anySeq",
    "play",
    "print",
    "display",
    "may",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parses a single agreement. Unannotated primitive policies receive ids
/// `agr1_p<j>`.
pub fn parse_agreement(text: &str) -> Result<Agreement, Diagnostics> {
    let mut agrs = parse_agreements(text)?;
    if agrs.len() != 1 {
        let span = SourceSpan::new(text, 0, text.len());
        return Err(vec![ParseDiagnostic::error(
            span,
            format!("expected exactly one agreement, found {}", agrs.len()),
        )]);
    }
    Ok(agrs.remove(0))
}

/// Parses one or more agreements, optionally terminated by `.`.
pub fn parse_agreements(text: &str) -> Result<Vec<Agreement>, Diagnostics> {
    parse_agreements_numbered(text, 1)
}

/// Like [`parse_agreements`], numbering auto-generated ids from
/// `agr<first_index>` so that several files can be loaded together.
pub fn parse_agreements_numbered(
    text: &str,
    first_index: usize,
) -> Result<Vec<Agreement>, Diagnostics> {
    let tokens = tokenize(text).map_err(|d| vec![d])?;
    let mut p = Parser { tokens, pos: 0 };
    let mut raw = Vec::new();
    while p.peek() != &Tok::Eof {
        raw.push(p.agreement().map_err(|d| vec![d])?);
    }
    if raw.is_empty() {
        return Err(vec![ParseDiagnostic::error(
            SourceSpan::new(text, text.len(), text.len()),
            "expected `agreement`",
        )]);
    }
    let mut explicit = BTreeSet::new();
    for r in &raw {
        r.body.collect_explicit_ids(&mut explicit);
    }
    let mut out = Vec::with_capacity(raw.len());
    for (k, r) in raw.iter().enumerate() {
        let mut cx = Classifier {
            agreement_index: first_index + k,
            next_auto: 1,
            explicit: &explicit,
        };
        let agr = cx.agreement(r).map_err(|d| vec![d])?;
        if let Err(e) = agr.validate() {
            return Err(vec![ParseDiagnostic::error(r.span, e.to_string())]);
        }
        out.push(agr);
    }
    Ok(out)
}

/// Parses `may <subject> <action> <asset>`.
pub fn parse_query(text: &str) -> Result<QueryTriple, Diagnostics> {
    let tokens = tokenize(text).map_err(|d| vec![d])?;
    let mut p = Parser { tokens, pos: 0 };
    p.query().map_err(|d| vec![d])
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    span: SourceSpan,
}

#[derive(Clone, Debug)]
enum ArrowKind {
    Set,
    ExclusiveSet,
    Policy(Option<String>),
}

#[derive(Clone, Debug)]
enum NodeKind {
    Ident(String),
    Number(String),
    Group(Vec<Node>),
    Call {
        head: String,
        args: Vec<Node>,
        /// whether the first argument was separated from the rest by `;`
        semi: bool,
    },
    PrinCount {
        prin: Box<Node>,
        bound: Box<Node>,
    },
    Arrow {
        kind: ArrowKind,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Paren(Box<Node>),
}

impl Node {
    fn collect_explicit_ids(&self, out: &mut BTreeSet<String>) {
        match &self.kind {
            NodeKind::Ident(_) | NodeKind::Number(_) => {}
            NodeKind::Group(ns) | NodeKind::Call { args: ns, .. } => {
                ns.iter().for_each(|n| n.collect_explicit_ids(out))
            }
            NodeKind::PrinCount { prin, bound } => {
                prin.collect_explicit_ids(out);
                bound.collect_explicit_ids(out);
            }
            NodeKind::Arrow { kind, lhs, rhs } => {
                if let ArrowKind::Policy(Some(id)) = kind {
                    out.insert(id.clone());
                }
                lhs.collect_explicit_ids(out);
                rhs.collect_explicit_ids(out);
            }
            NodeKind::Paren(n) => n.collect_explicit_ids(out),
        }
    }

    fn ident(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Ident(s) => Some(s),
            _ => None,
        }
    }

    fn describe(&self) -> String {
        match &self.kind {
            NodeKind::Ident(s) => format!("`{s}`"),
            NodeKind::Number(s) => format!("number `{s}`"),
            NodeKind::Group(_) => "group".into(),
            NodeKind::Call { head, .. } => format!("`{head}[...]`"),
            NodeKind::PrinCount { .. } => "count constraint".into(),
            NodeKind::Arrow { .. } => "arrow expression".into(),
            NodeKind::Paren(_) => "parenthesized expression".into(),
        }
    }
}

struct RawAgreement {
    user: Node,
    asset: Node,
    body: Node,
    span: SourceSpan,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseDiagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn prev_span(&self) -> SourceSpan {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseDiagnostic {
        ParseDiagnostic::error(
            self.span(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<SourceSpan> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<SourceSpan> {
        match self.peek() {
            Tok::Ident(s) if s == kw => Ok(self.bump().span),
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn agreement(&mut self) -> PResult<RawAgreement> {
        let start = self.expect_keyword("agreement")?;
        self.expect_keyword("for")?;
        let user = self.primary()?;
        self.expect_keyword("about")?;
        let asset = self.primary()?;
        self.expect_keyword("with")?;
        let body = self.expr()?;
        let span = start.to(self.prev_span());
        match self.peek() {
            Tok::Dot => {
                self.bump();
            }
            Tok::Eof => {}
            Tok::Ident(s) if s == "agreement" => {}
            _ => return Err(self.unexpected("`.`, `agreement` or end of input")),
        }
        Ok(RawAgreement {
            user,
            asset,
            body,
            span,
        })
    }

    fn query(&mut self) -> PResult<QueryTriple> {
        self.expect_keyword("may")?;
        let subject = self.name("subject")?;
        let act_span = self.span();
        let action = match self.bump().tok {
            Tok::Ident(s) => Action::from_name(&s)
                .ok_or_else(|| ParseDiagnostic::error(act_span, format!("unknown action `{s}`")))?,
            other => {
                return Err(ParseDiagnostic::error(
                    act_span,
                    format!("expected action, found {}", other.describe()),
                ))
            }
        };
        let asset = self.name("asset")?;
        if *self.peek() == Tok::Question {
            self.bump();
        }
        if *self.peek() != Tok::Eof {
            return Err(self.unexpected("end of query"));
        }
        Ok(QueryTriple {
            subject: Subject::new(subject),
            action,
            asset: Asset::new(asset),
        })
    }

    fn name(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn expr(&mut self) -> PResult<Node> {
        let lhs = self.postfix()?;
        let kind = match self.peek().clone() {
            Tok::SetArrow => ArrowKind::Set,
            Tok::ExclusiveArrow => ArrowKind::ExclusiveSet,
            Tok::PolicyArrow(id) => ArrowKind::Policy(id),
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.expr()?;
        let span = lhs.span.to(rhs.span);
        Ok(Node {
            kind: NodeKind::Arrow {
                kind,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        })
    }

    fn postfix(&mut self) -> PResult<Node> {
        let prin = self.primary()?;
        if *self.peek() != Tok::Lt {
            return Ok(prin);
        }
        self.bump();
        self.expect_keyword("count")?;
        self.expect(Tok::LBracket, "`[`")?;
        let bound = self.primary()?;
        self.expect(Tok::RBracket, "`]`")?;
        let end = self.expect(Tok::Gt, "`>`")?;
        let span = prin.span.to(end);
        Ok(Node {
            kind: NodeKind::PrinCount {
                prin: Box::new(prin),
                bound: Box::new(bound),
            },
            span,
        })
    }

    fn primary(&mut self) -> PResult<Node> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                if *self.peek() != Tok::LBracket {
                    return Ok(Node {
                        kind: NodeKind::Ident(s),
                        span: start,
                    });
                }
                self.bump();
                let mut args = vec![self.expr()?];
                let mut semi = false;
                if *self.peek() == Tok::Semi {
                    self.bump();
                    semi = true;
                    args.push(self.expr()?);
                }
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                let end = self.expect(Tok::RBracket, "`,` or `]`")?;
                Ok(Node {
                    kind: NodeKind::Call {
                        head: s,
                        args,
                        semi,
                    },
                    span: start.to(end),
                })
            }
            Tok::Number(n) => {
                self.bump();
                Ok(Node {
                    kind: NodeKind::Number(n),
                    span: start,
                })
            }
            Tok::LBrace => {
                self.bump();
                if *self.peek() == Tok::RBrace {
                    let end = self.bump().span;
                    return Err(ParseDiagnostic::error(start.to(end), "empty group"));
                }
                let mut items = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    items.push(self.expr()?);
                }
                let end = self.expect(Tok::RBrace, "`,` or `}`")?;
                Ok(Node {
                    kind: NodeKind::Group(items),
                    span: start.to(end),
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                let end = self.expect(Tok::RParen, "`)`")?;
                Ok(Node {
                    kind: NodeKind::Paren(Box::new(inner)),
                    span: start.to(end),
                })
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

struct Classifier<'a> {
    agreement_index: usize,
    next_auto: usize,
    explicit: &'a BTreeSet<String>,
}

fn err(node: &Node, msg: impl Into<String>) -> ParseDiagnostic {
    ParseDiagnostic::error(node.span, msg)
}

impl Classifier<'_> {
    fn fresh_id(&mut self) -> PolicyId {
        loop {
            let id = format!("agr{}_p{}", self.agreement_index, self.next_auto);
            self.next_auto += 1;
            if !self.explicit.contains(&id) {
                return PolicyId::new(id);
            }
        }
    }

    fn agreement(&mut self, raw: &RawAgreement) -> PResult<Agreement> {
        let user = self.principal(&raw.user)?;
        let asset = match raw.asset.ident() {
            Some(s) if !is_keyword(s) => Asset::new(s),
            _ => {
                return Err(err(
                    &raw.asset,
                    format!("expected asset name, found {}", raw.asset.describe()),
                ))
            }
        };
        let body = self.policy_set(&raw.body)?;
        Ok(Agreement { user, asset, body })
    }

    fn principal(&self, node: &Node) -> PResult<Principal> {
        match &node.kind {
            NodeKind::Ident(s) if !is_keyword(s) => Ok(Principal::subject(s.as_str())),
            NodeKind::Group(items) => {
                let members = items
                    .iter()
                    .map(|n| self.principal(n))
                    .collect::<PResult<Vec<_>>>()?;
                Principal::group(members).map_err(|e| err(node, e.to_string()))
            }
            _ => Err(err(
                node,
                format!("expected principal, found {}", node.describe()),
            )),
        }
    }

    fn natural(&self, node: &Node) -> PResult<u64> {
        match &node.kind {
            NodeKind::Number(n) => n
                .parse::<u64>()
                .map_err(|_| err(node, format!("count bound `{n}` is not a natural number"))),
            _ => Err(err(
                node,
                format!(
                    "count bound must be a natural number, found {}",
                    node.describe()
                ),
            )),
        }
    }

    fn is_constraint_form(node: &Node) -> bool {
        match &node.kind {
            NodeKind::Ident(s) => !is_keyword(s),
            NodeKind::Group(_) | NodeKind::PrinCount { .. } => true,
            NodeKind::Call { head, .. } => head == "forEachMember" || head == "count",
            NodeKind::Paren(inner) => Self::is_constraint_form(inner),
            _ => false,
        }
    }

    fn constraint(&self, node: &Node) -> PResult<Constraint> {
        match &node.kind {
            NodeKind::Ident(_) | NodeKind::Group(_) => {
                Ok(Constraint::Principal(self.principal(node)?))
            }
            NodeKind::PrinCount { prin, bound } => Ok(Constraint::PrinCount {
                prin: self.principal(prin)?,
                n: self.natural(bound)?,
            }),
            NodeKind::Call { head, args, semi } if head == "count" => {
                if *semi || args.len() != 1 {
                    return Err(err(node, "`count` takes exactly one argument"));
                }
                Ok(Constraint::Count(self.natural(&args[0])?))
            }
            NodeKind::Call { head, args, semi } if head == "forEachMember" => {
                if !*semi || args.len() < 2 {
                    return Err(err(
                        node,
                        "expected `forEachMember[principal; constraint, ...]`",
                    ));
                }
                let prin = self.principal(&args[0])?;
                let constraints = args[1..]
                    .iter()
                    .map(|a| self.constraint(a))
                    .collect::<PResult<Vec<_>>>()?;
                Ok(Constraint::ForEachMember { prin, constraints })
            }
            NodeKind::Paren(inner) => self.constraint(inner),
            _ => Err(err(
                node,
                format!("expected constraint, found {}", node.describe()),
            )),
        }
    }

    fn requirement(&self, node: &Node) -> PResult<Requirement> {
        match &node.kind {
            NodeKind::Call {
                head,
                args,
                semi: false,
            } => match head.as_str() {
                "prePay" => {
                    let [arg] = args.as_slice() else {
                        return Err(err(node, "`prePay` takes exactly one amount"));
                    };
                    match &arg.kind {
                        NodeKind::Number(n) => parse_rational(n)
                            .map(Requirement::PrePay)
                            .ok_or_else(|| err(arg, format!("invalid amount `{n}`"))),
                        _ => Err(err(
                            arg,
                            format!("expected amount, found {}", arg.describe()),
                        )),
                    }
                }
                "attribution" => {
                    let [arg] = args.as_slice() else {
                        return Err(err(node, "`attribution` takes exactly one subject"));
                    };
                    match arg.ident() {
                        Some(s) if !is_keyword(s) => Ok(Requirement::Attribution(Subject::new(s))),
                        _ => Err(err(
                            arg,
                            format!("expected subject, found {}", arg.describe()),
                        )),
                    }
                }
                "inSeq" | "anySeq" => {
                    let rs = args
                        .iter()
                        .map(|a| self.requirement(a))
                        .collect::<PResult<Vec<_>>>()?;
                    Ok(if head == "inSeq" {
                        Requirement::InSeq(rs)
                    } else {
                        Requirement::AnySeq(rs)
                    })
                }
                _ => Err(err(
                    node,
                    format!("expected requirement, found {}", node.describe()),
                )),
            },
            NodeKind::Paren(inner) => self.requirement(inner),
            _ => Err(err(
                node,
                format!("expected requirement, found {}", node.describe()),
            )),
        }
    }

    fn prerequisite(&mut self, node: &Node) -> PResult<Prerequisite> {
        if node.ident() == Some("true") {
            return Ok(Prerequisite::True);
        }
        if Self::is_constraint_form(node) {
            return Ok(Prerequisite::Constraint(self.constraint(node)?));
        }
        match &node.kind {
            NodeKind::Call { head, args, semi } => {
                if *semi {
                    return Err(err(node, format!("unexpected `;` in `{head}[...]`")));
                }
                match head.as_str() {
                    "prePay" | "attribution" | "inSeq" | "anySeq" => {
                        Ok(Prerequisite::Requirement(self.requirement(node)?))
                    }
                    "not" => {
                        let [arg] = args.as_slice() else {
                            return Err(err(node, "`not` takes exactly one argument"));
                        };
                        if Self::is_constraint_form(arg) {
                            Ok(Prerequisite::NotConstraint(self.constraint(arg)?))
                        } else {
                            Ok(Prerequisite::NotPolicySet(Box::new(self.policy_set(arg)?)))
                        }
                    }
                    "and" | "or" | "xor" => {
                        let items = args
                            .iter()
                            .map(|a| self.prerequisite(a))
                            .collect::<PResult<Vec<_>>>()?;
                        Ok(match head.as_str() {
                            "and" => Prerequisite::And(items),
                            "or" => Prerequisite::Or(items),
                            _ => Prerequisite::Xor(items),
                        })
                    }
                    _ => Err(err(node, format!("unknown prerequisite `{head}`"))),
                }
            }
            NodeKind::Paren(inner) => self.prerequisite(inner),
            _ => Err(err(
                node,
                format!("expected prerequisite, found {}", node.describe()),
            )),
        }
    }

    fn action(&self, node: &Node) -> PResult<Action> {
        match &node.kind {
            NodeKind::Ident(s) => {
                Action::from_name(s).ok_or_else(|| err(node, format!("unknown action `{s}`")))
            }
            NodeKind::Paren(inner) => self.action(inner),
            _ => Err(err(
                node,
                format!("expected action, found {}", node.describe()),
            )),
        }
    }

    fn policy(&mut self, node: &Node) -> PResult<Policy> {
        match &node.kind {
            NodeKind::Arrow {
                kind: ArrowKind::Policy(id),
                lhs,
                rhs,
            } => {
                let prq = self.prerequisite(lhs)?;
                let action = self.action(rhs)?;
                let id = match id {
                    Some(id) => PolicyId::new(id.as_str()),
                    None => self.fresh_id(),
                };
                Ok(Policy::Primitive { prq, id, action })
            }
            NodeKind::Ident(_) => {
                let action = self.action(node)?;
                Ok(Policy::Primitive {
                    prq: Prerequisite::True,
                    id: self.fresh_id(),
                    action,
                })
            }
            NodeKind::Call {
                head,
                args,
                semi: false,
            } if head == "and" => Ok(Policy::And(
                args.iter()
                    .map(|a| self.policy(a))
                    .collect::<PResult<Vec<_>>>()?,
            )),
            NodeKind::Paren(inner) => self.policy(inner),
            _ => Err(err(
                node,
                format!("expected policy, found {}", node.describe()),
            )),
        }
    }

    fn is_set_form(node: &Node) -> bool {
        match &node.kind {
            NodeKind::Arrow {
                kind: ArrowKind::Set | ArrowKind::ExclusiveSet,
                ..
            } => true,
            NodeKind::Call { head, args, .. } if head == "and" => {
                args.iter().any(Self::is_set_form)
            }
            NodeKind::Paren(inner) => Self::is_set_form(inner),
            _ => false,
        }
    }

    fn policy_set(&mut self, node: &Node) -> PResult<PolicySet> {
        if !Self::is_set_form(node) {
            return Ok(PolicySet::of_policy(self.policy(node)?));
        }
        match &node.kind {
            NodeKind::Arrow { kind, lhs, rhs } => {
                let exclusive = matches!(kind, ArrowKind::ExclusiveSet);
                let prq = self.prerequisite(lhs)?;
                let policy = self.policy(rhs)?;
                Ok(PolicySet::Primitive {
                    prq,
                    policy,
                    exclusive,
                })
            }
            NodeKind::Call { args, .. } => Ok(PolicySet::And(
                args.iter()
                    .map(|a| self.policy_set(a))
                    .collect::<PResult<Vec<_>>>()?,
            )),
            NodeKind::Paren(inner) => self.policy_set(inner),
            _ => unreachable!("set forms are arrows, conjunctions or parentheses"),
        }
    }
}
