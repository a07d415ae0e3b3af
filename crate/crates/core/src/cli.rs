//! Command implementations behind the `probrel` binary.
//!
//! Each command returns a [`Report`]: an exit status, human-readable text
//! and a JSON outcome. [`record`] wraps an outcome into the versioned result
//! record written by `--json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use crate::dsl::{self, parse_event, parse_goal, parse_system, print_comp, print_expr, SystemFile};
use crate::exact::{eval_joint, prob_event_in, ExactError};
use crate::rules::{parse_script, run_script, ProofState, RuleError, Verdict};
use crate::sampling::{estimate_prob, SampleConfig};
use crate::terms::{Goal, Relation};
use crate::value::Num;

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    NotEstablished = 1,
    UserError = 2,
    Internal = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub exit: Exit,
    pub text: String,
    pub outcome: Json,
}

impl Report {
    fn ok(text: String, outcome: Json) -> Report {
        Report {
            exit: Exit::Success,
            text,
            outcome,
        }
    }

    pub fn user_error(message: impl Into<String>) -> Report {
        let message = message.into();
        Report {
            exit: Exit::UserError,
            text: format!("error: {message}"),
            outcome: json!({"kind": "error", "category": "user", "message": message}),
        }
    }

    pub fn internal_error(message: impl Into<String>) -> Report {
        let message = message.into();
        Report {
            exit: Exit::Internal,
            text: format!("internal error: {message}"),
            outcome: json!({"kind": "error", "category": "internal", "message": message}),
        }
    }
}

/// Exact probability of an event on a finite-discrete system.
pub fn cmd_eval(sys: &SystemFile, event: &str) -> Report {
    let event = match parse_event(event, sys) {
        Ok(e) => e,
        Err(e) => return Report::user_error(format!("event: {e}")),
    };
    let joint = match eval_joint(&sys.comp, &sys.ctx) {
        Ok(j) => j,
        Err(e @ ExactError::ContinuousDistributionPresent(_)) => {
            return Report::user_error(format!("{e} (try `simulate`)"))
        }
        Err(e) => return Report::user_error(e.to_string()),
    };
    let p = match prob_event_in(&joint, &event, &sys.ctx) {
        Ok(p) => p,
        Err(e) => return Report::user_error(e.to_string()),
    };
    let text = format!("Pr({}) = {}", print_expr(&event.predicate), show_num(&p));
    Report::ok(
        text,
        json!({
            "kind": "value",
            "event": print_expr(&event.predicate),
            "value": p.to_string(),
            "value_f64": p.to_f64(),
            "exact": p.is_exact(),
        }),
    )
}

fn show_num(n: &Num) -> String {
    let s = n.to_string();
    if n.is_exact() && s.contains('/') {
        format!("{s} (~{:.12})", n.to_f64())
    } else {
        s
    }
}

/// Monte-Carlo estimate of an event with a Wilson interval.
pub fn cmd_simulate(sys: &SystemFile, event: &str, cfg: &SampleConfig) -> Report {
    let event = match parse_event(event, sys) {
        Ok(e) => e,
        Err(e) => return Report::user_error(format!("event: {e}")),
    };
    match estimate_prob(&sys.comp, &sys.ctx, &event, cfg) {
        Ok(est) => {
            let text = format!(
                "Pr({}) ~ {:.6} +/- {:.6} ({}% Wilson interval [{:.6}, {:.6}], n = {}, seed = {})",
                print_expr(&event.predicate),
                est.p_hat,
                est.half_width,
                est.gamma * 100.0,
                est.ci_low(),
                est.ci_high(),
                est.n,
                est.seed
            );
            let mut outcome = est.to_json();
            outcome["kind"] = json!("estimate");
            outcome["event"] = json!(print_expr(&event.predicate));
            Report::ok(text, outcome)
        }
        Err(e) => Report::user_error(e.to_string()),
    }
}

/// Apply a proof script to the system body and print the resulting term.
/// `event` fixes which variables must stay observable.
pub fn cmd_rewrite(sys: &SystemFile, script: &str, base_dir: Option<&Path>, event: &str) -> Report {
    let invs = match parse_script(script) {
        Ok(i) => i,
        Err(e) => return Report::user_error(format!("script: {e}")),
    };
    let event = match parse_event(event, sys) {
        Ok(e) => e,
        Err(e) => return Report::user_error(format!("event: {e}")),
    };
    let goal = Goal::new(sys.comp.clone(), event, Relation::Le, Num::one());
    let mut ps = ProofState::new(goal, sys.ctx.clone());
    ps.base_dir = base_dir.map(Path::to_path_buf);
    match run_script(&ps, &invs) {
        Ok(done) => {
            let term = print_comp(&done.root().comp);
            Report::ok(
                term.trim_end().to_string(),
                json!({"kind": "rewrite", "term": term, "trace": done.trace_json(), "steps": invs.len()}),
            )
        }
        Err(f) => {
            let message = format!("step {} (`{}`): {}", f.step, f.invocation, f.error);
            let mut r = Report::user_error(message);
            r.outcome["step"] = json!(f.step);
            r.outcome["term"] = json!(print_comp(&f.state.root().comp));
            r.outcome["trace"] = f.state.trace_json();
            r
        }
    }
}

/// Try to establish a goal with an optional script. A script that stops on
/// a false numeric obligation yields `not-established`, not an error.
pub fn cmd_check(sys: &SystemFile, goal: &str, script: Option<&str>, base_dir: Option<&Path>) -> Report {
    let goal = match parse_goal(goal, sys) {
        Ok(g) => g,
        Err(e) => return Report::user_error(format!("goal: {e}")),
    };
    let invs = match script.map(parse_script).transpose() {
        Ok(i) => i.unwrap_or_default(),
        Err(e) => return Report::user_error(format!("script: {e}")),
    };
    let goal_text = dsl::print_goal(&goal);
    let mut ps = ProofState::new(goal, sys.ctx.clone());
    ps.base_dir = base_dir.map(Path::to_path_buf);
    let (state, failure) = match run_script(&ps, &invs) {
        Ok(s) => (s, None),
        Err(f) if matches!(f.error, RuleError::ObligationFalse { .. }) => {
            let note = format!("step {} (`{}`): {}", f.step, f.invocation, f.error);
            (*f.state, Some(note))
        }
        Err(f) => {
            let mut r = Report::user_error(format!("step {} (`{}`): {}", f.step, f.invocation, f.error));
            r.outcome["step"] = json!(f.step);
            return r;
        }
    };
    let verdict = state.verdict();
    let mut outcome = state.to_json();
    outcome["kind"] = json!("proof");
    outcome["goal"] = json!(goal_text);
    outcome["trace"] = state.trace_json();
    outcome["failed_obligation"] = json!(failure);
    let mut text = match verdict {
        Verdict::Established => format!("established: {goal_text}"),
        Verdict::NotEstablished => format!("not established: {goal_text}"),
    };
    if let Some(v) = state.value_of(0) {
        text.push_str(&format!("\n  value: {}", show_num(&v)));
    }
    if state.uses_assumption(0) {
        text.push_str("\n  relies on external assumptions");
    }
    if let Some(note) = failure {
        text.push_str(&format!("\n  {note}"));
    }
    let residual = state.residual();
    if verdict == Verdict::NotEstablished && !residual.is_empty() {
        text.push_str(&format!("\n  open goals: {residual:?}"));
    }
    Report {
        exit: match verdict {
            Verdict::Established => Exit::Success,
            Verdict::NotEstablished => Exit::NotEstablished,
        },
        text,
        outcome,
    }
}

/// SHA-256 over the inputs of a command, separated by NUL bytes.
pub fn inputs_digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Versioned result record. Keys are sorted (serde_json's default map).
pub fn record(command: &str, digest: &str, report: &Report, elapsed_ms: Option<f64>) -> Json {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "inputs_digest": digest,
        "exit_code": report.exit as i32,
        "outcome": report.outcome,
        "timings": {"elapsed_ms": elapsed_ms},
    })
}

#[derive(Debug, Parser)]
#[command(name = "probrel", version, about = "Reliability bounds for monadic probabilistic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact probability of an event (finite-discrete systems only).
    Eval {
        /// System file, or `bundled:<name>`.
        system: String,
        /// Event expression, or a file containing one.
        #[arg(long)]
        event: String,
        /// Write the JSON result record here (`-` for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Monte-Carlo estimate of an event.
    Simulate {
        system: String,
        #[arg(long)]
        event: String,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        /// Run on one thread (results are identical either way).
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Rewrite the system body with a proof script.
    Rewrite {
        system: String,
        #[arg(long)]
        script: String,
        /// Event whose variables must survive the rewrite.
        #[arg(long, default_value = "true")]
        event: String,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Try to establish `pr(<event>) < eps` with an optional proof script.
    Check {
        system: String,
        #[arg(long)]
        goal: String,
        #[arg(long)]
        script: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// System text from a path or `bundled:<name>`.
fn read_system(arg: &str) -> Result<String, Report> {
    if let Some(name) = arg.strip_prefix("bundled:") {
        return crate::models::source(name)
            .map(str::to_string)
            .ok_or_else(|| Report::user_error(format!("no bundled system `{name}`")));
    }
    std::fs::read_to_string(arg).map_err(|e| Report::user_error(format!("{arg}: {e}")))
}

/// An argument that is either inline text or the path of a file holding it.
fn inline_or_file(arg: &str) -> String {
    match std::fs::read_to_string(arg) {
        Ok(text) if Path::new(arg).is_file() => text.trim().to_string(),
        _ => arg.to_string(),
    }
}

fn read_script(arg: &str) -> Result<(String, Option<PathBuf>), Report> {
    if let Some(name) = arg.strip_prefix("bundled:") {
        let text = crate::models::SCRIPTS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| s.to_string())
            .ok_or_else(|| Report::user_error(format!("no bundled script `{name}`")))?;
        return Ok((text, None));
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Report::user_error(format!("{arg}: {e}")))?;
    Ok((text, Path::new(arg).parent().map(Path::to_path_buf)))
}

fn load(arg: &str) -> Result<(String, SystemFile), Report> {
    let text = read_system(arg)?;
    let sys = parse_system(&text).map_err(|e| Report::user_error(format!("{arg}:{e}")))?;
    Ok((text, sys))
}

/// Run one command. Returns the report and the full JSON record.
pub fn execute(cmd: &Command) -> (Report, Json) {
    let start = Instant::now();
    let (name, digest, report) = match dispatch(cmd) {
        Ok(v) => v,
        Err(r) => (command_name(cmd), String::new(), r),
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let rec = record(name, &digest, &report, Some(elapsed));
    (report, rec)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Eval { .. } => "eval",
        Command::Simulate { .. } => "simulate",
        Command::Rewrite { .. } => "rewrite",
        Command::Check { .. } => "check",
    }
}

fn dispatch(cmd: &Command) -> Result<(&'static str, String, Report), Report> {
    let name = command_name(cmd);
    Ok(match cmd {
        Command::Eval { system, event, .. } => {
            let (text, sys) = load(system)?;
            let event = inline_or_file(event);
            (name, inputs_digest(&[name, &text, &event]), cmd_eval(&sys, &event))
        }
        Command::Simulate {
            system,
            event,
            n,
            seed,
            gamma,
            serial,
            ..
        } => {
            let (text, sys) = load(system)?;
            let event = inline_or_file(event);
            let mut cfg = SampleConfig::new(*n, *seed).with_gamma(*gamma);
            if *serial {
                cfg = cfg.serial();
            }
            let params = format!("n={n} seed={seed} gamma={gamma}");
            (name, inputs_digest(&[name, &text, &event, &params]), cmd_simulate(&sys, &event, &cfg))
        }
        Command::Rewrite {
            system, script, event, ..
        } => {
            let (text, sys) = load(system)?;
            let (script_text, base) = read_script(script)?;
            let event = inline_or_file(event);
            let report = cmd_rewrite(&sys, &script_text, base.as_deref(), &event);
            (name, inputs_digest(&[name, &text, &script_text, &event]), report)
        }
        Command::Check {
            system, goal, script, ..
        } => {
            let (text, sys) = load(system)?;
            let goal = inline_or_file(goal);
            let (script_text, base) = match script {
                Some(s) => {
                    let (t, b) = read_script(s)?;
                    (Some(t), b)
                }
                None => (None, None),
            };
            let report = cmd_check(&sys, &goal, script_text.as_deref(), base.as_deref());
            let digest = inputs_digest(&[name, &text, &goal, script_text.as_deref().unwrap_or("")]);
            (name, digest, report)
        }
    })
}

fn json_target(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Eval { json, .. }
        | Command::Simulate { json, .. }
        | Command::Rewrite { json, .. }
        | Command::Check { json, .. } => json.as_deref(),
    }
}

/// Execute, print and write the JSON record; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let (report, rec) = execute(&cli.command);
    let pretty = serde_json::to_string_pretty(&rec).expect("records serialize");
    match json_target(&cli.command) {
        Some(p) if p == Path::new("-") => println!("{pretty}"),
        Some(p) => {
            print_report(&report);
            if let Err(e) = std::fs::write(p, pretty + "\n") {
                eprintln!("error: writing {}: {e}", p.display());
                return Exit::UserError as i32;
            }
        }
        None => print_report(&report),
    }
    report.exit as i32
}

fn print_report(r: &Report) {
    match r.exit {
        Exit::UserError | Exit::Internal => eprintln!("{}", r.text),
        _ => println!("{}", r.text),
    }
}
