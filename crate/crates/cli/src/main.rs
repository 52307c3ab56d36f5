use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use odrl_core::ast::Agreement;
use odrl_core::engine::{answer, EngineOptions, Query};
use odrl_core::env::Environment;
use odrl_core::fol::{to_sexpr, to_sexpr_pretty, DEFAULT_MAX_ASSIGNMENTS};
use odrl_core::gen::{random_query, GenConfig};
use odrl_core::oracle::{compare, minimize};
use odrl_core::parser::{parse_agreements_numbered, parse_query, pretty_agreements, Diagnostics};
use odrl_core::reduction::{reduce, Cnf3};
use odrl_core::translate::{translate_agreement, SeqInterpretation};

const EXIT_INCONSISTENT: u8 = 3;
const EXIT_CAP: u8 = 10;
const EXIT_DIVERGENCE: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "odrl",
    version,
    about = "Decide permission queries over rights-expression agreements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeqMode {
    Overlapping,
    Consecutive,
}

impl From<SeqMode> for SeqInterpretation {
    fn from(m: SeqMode) -> Self {
        match m {
            SeqMode::Overlapping => SeqInterpretation::Overlapping,
            SeqMode::Consecutive => SeqInterpretation::Consecutive,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse agreement files and print them in canonical form
    Parse {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the first-order translation of each agreement
    Translate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "overlapping")]
        seq_mode: SeqMode,
        /// One line per formula instead of the indented layout
        #[arg(long)]
        flat: bool,
    },
    /// Answer `may SUBJECT ACTION ASSET` against agreement files
    Query {
        /// Agreement files followed by the query text
        #[arg(required = true, num_args = 2..)]
        args: Vec<String>,
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "overlapping")]
        seq_mode: SeqMode,
        /// Let later inSeq members happen at the same time as earlier ones
        #[arg(long)]
        inseq_nonstrict: bool,
        /// Skip the polynomial path even when it applies
        #[arg(long)]
        force_general: bool,
        /// Print which path and which agreements decided
        #[arg(long)]
        explain: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_ASSIGNMENTS, value_parser = clap::value_parser!(u64).range(1..))]
        max_assignments: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Check an environment file for conflicting counts
    CheckConsistency { env: PathBuf },
    /// Turn a 3-CNF in DIMACS format into agreements and a query
    #[command(name = "reduce-3sat")]
    Reduce3sat {
        cnf: PathBuf,
        /// Write OUT.odrl and OUT.query instead of printing
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare the tractable path, the general path and the oracle on random queries
    OracleCheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        /// Also generate not[ps] prerequisites
        #[arg(long)]
        with_not: bool,
        #[arg(long, value_enum, default_value = "overlapping")]
        seq_mode: SeqMode,
    },
    /// Print random queries with their verdicts
    Fuzz {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long)]
        with_not: bool,
    },
}

macro_rules! say {
    ($out:expr, $($t:tt)*) => {{
        use std::fmt::Write as _;
        let _ = writeln!($out, $($t)*);
    }};
}

macro_rules! put {
    ($out:expr, $($t:tt)*) => {{
        use std::fmt::Write as _;
        let _ = write!($out, $($t)*);
    }};
}

/// An error with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: format!("{e:#}"),
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn diagnostics(origin: &str, d: Diagnostics) -> anyhow::Error {
    let lines: Vec<String> = d.iter().map(|d| format!("{origin}:{d}")).collect();
    anyhow!(lines.join("\n"))
}

fn load_agreements(paths: &[PathBuf]) -> anyhow::Result<Vec<Agreement>> {
    let mut all = Vec::new();
    for path in paths {
        let text = read(path)?;
        let agrs = parse_agreements_numbered(&text, all.len() + 1)
            .map_err(|d| diagnostics(&path.display().to_string(), d))?;
        all.extend(agrs);
    }
    Ok(all)
}

fn load_env(path: Option<&Path>) -> anyhow::Result<Environment> {
    match path {
        None => Ok(Environment::new()),
        Some(p) => Environment::parse(&read(p)?).map_err(|e| anyhow!("{}:{e}", p.display())),
    }
}

#[derive(Serialize)]
struct JsonAnswer<'a> {
    verdict: odrl_core::engine::Verdict,
    message: &'static str,
    path: odrl_core::engine::Path,
    fplus_valid: bool,
    fminus_valid: bool,
    provenance: &'a [String],
    subject: &'a str,
    action: &'static str,
    asset: &'a str,
}

fn run(cli: Cli, out: &mut String) -> Result<u8, Failure> {
    match cli.command {
        Command::Parse { files } => {
            put!(out, "{}", pretty_agreements(&load_agreements(&files)?));
            Ok(0)
        }
        Command::Translate {
            files,
            seq_mode,
            flat,
        } => {
            for agr in load_agreements(&files)? {
                let f = translate_agreement(&agr, seq_mode.into());
                if flat {
                    say!(out, "{}", to_sexpr(&f));
                } else {
                    put!(out, "{}", to_sexpr_pretty(&f));
                }
            }
            Ok(0)
        }
        Command::Query {
            mut args,
            env,
            seq_mode,
            inseq_nonstrict,
            force_general,
            explain,
            max_assignments,
            format,
        } => {
            let text = args.pop().expect("at least two arguments");
            let files: Vec<PathBuf> = args.into_iter().map(PathBuf::from).collect();
            let agreements = load_agreements(&files)?;
            let triple = parse_query(&text).map_err(|d| diagnostics("query", d))?;
            let q = Query {
                agreements,
                subject: triple.subject,
                action: triple.action,
                asset: triple.asset,
                env: load_env(env.as_deref())?,
            };
            let opts = EngineOptions {
                mode: seq_mode.into(),
                inseq_strict: !inseq_nonstrict,
                max_assignments,
                force_general,
            };
            let ans = answer(&q, &opts).map_err(|e| Failure {
                code: if e.is_cap() { EXIT_CAP } else { EXIT_USAGE },
                message: e.to_string(),
            })?;
            match format {
                Format::Json => {
                    let json = JsonAnswer {
                        verdict: ans.verdict,
                        message: ans.verdict.phrase(),
                        path: ans.path,
                        fplus_valid: ans.fplus_valid,
                        fminus_valid: ans.fminus_valid,
                        provenance: &ans.provenance,
                        subject: q.subject.as_str(),
                        action: q.action.name(),
                        asset: q.asset.as_str(),
                    };
                    say!(
                        out,
                        "{}",
                        serde_json::to_string_pretty(&json).expect("serializable")
                    );
                }
                Format::Text => {
                    say!(out, "{}", ans.verdict.phrase());
                    if explain {
                        say!(out, "path: {:?}", ans.path);
                        say!(
                            out,
                            "f+ valid: {}, f- valid: {}",
                            ans.fplus_valid,
                            ans.fminus_valid
                        );
                        for note in &ans.provenance {
                            say!(out, "  {note}");
                        }
                    }
                }
            }
            Ok(ans.verdict.exit_code() as u8)
        }
        Command::CheckConsistency { env } => {
            let env = load_env(Some(&env))?;
            let conflicts = env.conflicts();
            if conflicts.is_empty() {
                say!(out, "consistent");
                return Ok(0);
            }
            say!(out, "inconsistent");
            for (s, id, ns) in conflicts {
                let ns: Vec<String> = ns.iter().map(u64::to_string).collect();
                say!(out, "  count {s} {id} has values {}", ns.join(", "));
            }
            Ok(EXIT_INCONSISTENT)
        }
        Command::Reduce3sat { cnf, out: target } => {
            let phi =
                Cnf3::parse_dimacs(&read(&cnf)?).map_err(|e| anyhow!("{}:{e}", cnf.display()))?;
            let q = reduce(&phi).map_err(|e| anyhow!("{}: {e}", cnf.display()))?;
            let dsl = pretty_agreements(&q.agreements);
            let query = format!("may {} {} {}\n", q.subject, q.action, q.asset);
            match target {
                Some(prefix) => {
                    let odrl = prefix.with_extension("odrl");
                    let qpath = prefix.with_extension("query");
                    std::fs::write(&odrl, dsl)
                        .with_context(|| format!("cannot write {}", odrl.display()))?;
                    std::fs::write(&qpath, query)
                        .with_context(|| format!("cannot write {}", qpath.display()))?;
                    say!(out, "wrote {} and {}", odrl.display(), qpath.display());
                }
                None => {
                    put!(out, "{dsl}");
                    put!(out, "# {query}");
                }
            }
            Ok(0)
        }
        Command::OracleCheck {
            seed,
            cases,
            with_not,
            seq_mode,
        } => {
            let seed = seed.unwrap_or_else(|| rand::thread_rng().gen());
            say!(out, "seed {seed}");
            let cfg = GenConfig {
                not_policy_sets: with_not,
                ..GenConfig::default()
            };
            let opts = EngineOptions {
                mode: seq_mode.into(),
                ..EngineOptions::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let queries: Vec<Query> = (0..cases).map(|_| random_query(&mut rng, &cfg)).collect();
            let diverges = |q: &Query| matches!(compare(q, &opts), Ok(Some(_)));
            let first = queries
                .par_iter()
                .enumerate()
                .filter_map(|(i, q)| match compare(q, &opts) {
                    Ok(None) => None,
                    Ok(Some(d)) => Some(Ok((i, d))),
                    Err(e) => Some(Err((i, e))),
                })
                .min_by_key(|r| match r {
                    Ok((i, _)) | Err((i, _)) => *i,
                });
            match first {
                None => {
                    say!(out, "{cases} queries: all deciders agree");
                    Ok(0)
                }
                Some(Err((i, e))) => Err(Failure {
                    code: EXIT_CAP,
                    message: format!("case {i}: {e}"),
                }),
                Some(Ok((i, d))) => {
                    let small = minimize(queries[i].clone(), diverges);
                    say!(
                        out,
                        "case {i} diverges: tractable {:?}, general {:?}, oracle {:?}",
                        d.tractable,
                        d.general,
                        d.oracle
                    );
                    say!(out, "--- agreements");
                    put!(out, "{}", pretty_agreements(&small.agreements));
                    say!(out, "--- environment");
                    put!(out, "{}", small.env);
                    say!(out, "--- query");
                    say!(
                        out,
                        "may {} {} {}",
                        small.subject,
                        small.action,
                        small.asset
                    );
                    Ok(EXIT_DIVERGENCE)
                }
            }
        }
        Command::Fuzz {
            seed,
            cases,
            with_not,
        } => {
            let seed = seed.unwrap_or_else(|| rand::thread_rng().gen());
            say!(out, "# seed {seed}");
            let cfg = GenConfig {
                not_policy_sets: with_not,
                ..GenConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..cases {
                let q = random_query(&mut rng, &cfg);
                say!(out, "# case {i}");
                put!(out, "{}", pretty_agreements(&q.agreements));
                for fact in q.env.facts() {
                    say!(out, "# env: {fact}");
                }
                let verdict = match answer(&q, &EngineOptions::default()) {
                    Ok(a) => a.verdict.phrase().to_string(),
                    Err(e) => e.to_string(),
                };
                say!(
                    out,
                    "# may {} {} {} => {verdict}",
                    q.subject,
                    q.action,
                    q.asset
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let mut out = String::new();
    let result = run(cli, &mut out);
    // a closed pipe is not an error worth reporting
    let _ = std::io::stdout().write_all(out.as_bytes());
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
