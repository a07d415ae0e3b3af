//! Proof scripts: one rule invocation per line,
//! `rule-name @path key=value ...`, with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path as FsPath;

use crate::numeric::{GridSpec, PiecewiseDensity};
use crate::terms::Context;
use crate::value::Num;

use super::goal::{EnvelopeSource, GoalRule};
use super::proof::ProofState;
use super::rewrite::TermRule;
use super::{Path, RuleError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub rule: String,
    pub goal: usize,
    pub path: Path,
    pub params: BTreeMap<String, String>,
}

impl Invocation {
    pub fn new(rule: &str) -> Invocation {
        Invocation {
            rule: rule.to_string(),
            goal: 0,
            path: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn at(mut self, path: &[usize]) -> Invocation {
        self.path = path.to_vec();
        self
    }

    pub fn on_goal(mut self, goal: usize) -> Invocation {
        self.goal = goal;
        self
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Invocation {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rule)?;
        if !self.path.is_empty() {
            write!(f, " @{}", format_path(&self.path))?;
        }
        if self.goal != 0 {
            write!(f, " goal={}", self.goal)?;
        }
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

fn format_path(p: &[usize]) -> String {
    p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
}

fn parse_path(text: &str) -> Result<Path, RuleError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split('.')
        .map(|s| s.parse().map_err(|_| RuleError::BadPath(format!("`{text}` is not a dotted index path"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScriptSyntaxError {
    pub line: usize,
    pub message: String,
}

/// Parse script text into invocations.
pub fn parse_script(text: &str) -> Result<Vec<Invocation>, ScriptSyntaxError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScriptSyntaxError { line: n + 1, message };
        let mut words = line.split_whitespace();
        let mut inv = Invocation::new(words.next().expect("non-empty line"));
        for w in words {
            if let Some(p) = w.strip_prefix('@') {
                inv.path = parse_path(p).map_err(|e| err(e.to_string()))?;
            } else if let Some((k, v)) = w.split_once('=') {
                if k == "goal" {
                    inv.goal = v.parse().map_err(|_| err(format!("bad goal index `{v}`")))?;
                } else if inv.params.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(err(format!("parameter `{k}` given twice")));
                }
            } else {
                return Err(err(format!("expected `@path` or `key=value`, found `{w}`")));
            }
        }
        out.push(inv);
    }
    Ok(out)
}

pub(crate) enum Resolved {
    Term(TermRule),
    Goal(GoalRule),
    Assume(String),
}

struct Params<'a> {
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn new(inv: &'a Invocation) -> Self {
        Params {
            map: inv.params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn num(&mut self, key: &str) -> Result<Option<Num>, RuleError> {
        self.take(key)
            .map(|v| Num::parse_decimal(v).map_err(|e| RuleError::BadParam(format!("{key}={v}: {e}"))))
            .transpose()
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>, RuleError> {
        self.take(key)
            .map(|v| v.parse::<f64>().map_err(|e| RuleError::BadParam(format!("{key}={v}: {e}"))))
            .transpose()
    }

    fn finish(self, rule: &str) -> Result<(), RuleError> {
        match self.map.keys().next() {
            Some(k) => Err(RuleError::BadParam(format!("{rule} does not take `{k}`"))),
            None => Ok(()),
        }
    }
}

fn envelope_source(p: &mut Params<'_>, base: Option<&FsPath>) -> Result<EnvelopeSource, RuleError> {
    if let Some(file) = p.take("envelope") {
        let path = match base {
            Some(b) => b.join(file),
            None => file.into(),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| RuleError::BadParam(format!("envelope {}: {e}", path.display())))?;
        let d: PiecewiseDensity = serde_json::from_str(&text)
            .map_err(|e| RuleError::BadParam(format!("envelope {}: {e}", path.display())))?;
        return Ok(EnvelopeSource::Given(d));
    }
    let k = p.float("k")?.unwrap_or(GridSpec::default().k);
    let spec = match (p.float("width")?, p.take("pieces")) {
        (Some(_), Some(_)) => return Err(RuleError::BadParam("give either width or pieces".into())),
        (Some(w), None) => GridSpec::with_width(k, w)?,
        (None, Some(n)) => GridSpec {
            k,
            pieces: n.parse().map_err(|_| RuleError::BadParam(format!("pieces={n}")))?,
        },
        (None, None) => GridSpec { k, ..GridSpec::default() },
    };
    Ok(EnvelopeSource::Grid(spec))
}

fn term_rule(name: &str, p: &mut Params<'_>) -> Result<TermRule, RuleError> {
    if name == "congruence" {
        let len = match p.take("len") {
            Some(v) => v.parse().map_err(|_| RuleError::BadParam(format!("len={v}")))?,
            None => 1,
        };
        let sub_name = p
            .take("rule")
            .ok_or_else(|| RuleError::BadParam("congruence needs rule=<term rule>".into()))?;
        let sub = term_rule(sub_name, p)?;
        let at = parse_path(p.take("at").unwrap_or("0"))?;
        return Ok(TermRule::Congruence {
            len,
            sub: Box::new(sub),
            at,
        });
    }
    TermRule::from_name(name).ok_or_else(|| RuleError::UnknownRule(name.to_string()))
}

pub(crate) fn resolve(inv: &Invocation, ctx: &Context, base: Option<&FsPath>) -> Result<Resolved, RuleError> {
    let mut p = Params::new(inv);
    let resolved = match inv.rule.as_str() {
        "assume" => Resolved::Assume(p.take("reason").unwrap_or("external assumption").to_string()),
        "discrete-prob" => {
            let ground = match p.take("mode").unwrap_or("ground") {
                "ground" => true,
                "step" => false,
                m => return Err(RuleError::BadParam(format!("mode={m} (expected ground or step)"))),
            };
            Resolved::Goal(GoalRule::DiscreteProb { ground })
        }
        "event-approx-upper" => Resolved::Goal(GoalRule::EventApproxUpper(envelope_source(&mut p, base)?)),
        "event-approx-lower" => Resolved::Goal(GoalRule::EventApproxLower(envelope_source(&mut p, base)?)),
        "range-split" => Resolved::Goal(GoalRule::RangeSplit {
            eps1: p.num("eps1")?,
            eps2: p.num("eps2")?,
        }),
        "normal-monotone" => Resolved::Goal(GoalRule::NormalMonotone {
            premise_variance: p
                .num("premise_variance")?
                .ok_or_else(|| RuleError::BadParam("normal-monotone needs premise_variance=<number>".into()))?,
        }),
        "event-weakening" => {
            let text = p
                .take("dist")
                .ok_or_else(|| RuleError::BadParam("event-weakening needs dist=<name or table>".into()))?;
            let dist = crate::dsl::parse_dist(text, ctx).map_err(|e| RuleError::BadParam(format!("dist={text}: {e}")))?;
            Resolved::Goal(GoalRule::EventWeakening { dist })
        }
        name => Resolved::Term(term_rule(name, &mut p)?),
    };
    p.finish(&inv.rule)?;
    Ok(resolved)
}

/// A script that stopped at a failing step, with the state reached so far.
#[derive(Debug, Clone, thiserror::Error)]
#[error("step {step} (`{invocation}`): {error}")]
pub struct ScriptFailure {
    pub step: usize,
    pub invocation: Invocation,
    pub error: RuleError,
    pub state: Box<ProofState>,
}

/// Apply every invocation in order; stop at the first error.
pub fn run_script(ps: &ProofState, script: &[Invocation]) -> Result<ProofState, ScriptFailure> {
    let mut state = ps.clone();
    for (k, inv) in script.iter().enumerate() {
        match state.apply(inv) {
            Ok(next) => state = next,
            Err(error) => {
                return Err(ScriptFailure {
                    step: k + 1,
                    invocation: inv.clone(),
                    error,
                    state: Box::new(state),
                })
            }
        }
    }
    Ok(state)
}
