use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::numeric::EnvelopeRole;
use crate::terms::{Context, Goal, Relation};
use crate::value::Num;

use super::goal::{apply_goal_rule, GoalOutcome};
use super::rewrite::apply as apply_term_rule;
use super::script::{resolve, Invocation, Resolved};
use super::{Path, RuleError};

/// Side condition left to (or discharged by) numeric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NumericObligation {
    /// `P_A(a) < eps` (upper) or `1 - P_A(a) < eps` (lower).
    CdfBound {
        role: EnvelopeRole,
        threshold: f64,
        value: f64,
        relation: Relation,
        bound: f64,
    },
    /// Pointwise dominance of the envelope, discharged by its certificate.
    EnvelopePremise {
        role: EnvelopeRole,
        pieces: usize,
        integral: f64,
    },
    Arithmetic { description: String, holds: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObligationRecord {
    pub goal: usize,
    pub obligation: NumericObligation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Combine {
    /// Closed once all children are closed.
    All,
    /// Probability is the weighted sum of the children's probabilities.
    Weighted(Vec<Num>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoalStatus {
    Open,
    Reduced {
        rule: String,
        children: Vec<usize>,
        combine: Combine,
    },
    /// Exact probability known.
    Evaluated { rule: String, value: Num },
    /// Closed by discharged numeric obligations.
    Discharged { rule: String, obligations: Vec<usize> },
    /// Closed by an external assumption, never by the engine itself.
    Assumed { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalEntry {
    pub goal: Goal,
    pub status: GoalStatus,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rule: String,
    pub goal: usize,
    pub path: Path,
    pub params: BTreeMap<String, String>,
    pub before: String,
    pub after: String,
}

impl TraceEntry {
    pub fn invocation(&self) -> Invocation {
        Invocation {
            rule: self.rule.clone(),
            goal: self.goal,
            path: self.path.clone(),
            params: self.params.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Established,
    NotEstablished,
}

/// Goals, their reductions, the obligations discharged along the way and
/// the trace of applied rules.
#[derive(Debug, Clone)]
pub struct ProofState {
    pub ctx: Context,
    pub goals: Vec<GoalEntry>,
    pub obligations: Vec<ObligationRecord>,
    pub trace: Vec<TraceEntry>,
    /// Directory that relative file parameters are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl ProofState {
    pub fn new(goal: Goal, ctx: Context) -> ProofState {
        ProofState {
            ctx,
            goals: vec![GoalEntry {
                goal,
                status: GoalStatus::Open,
                parent: None,
            }],
            obligations: Vec::new(),
            trace: Vec::new(),
            base_dir: None,
        }
    }

    pub fn root(&self) -> &Goal {
        &self.goals[0].goal
    }

    /// SHA-256 over goals, statuses and obligations.
    pub fn digest(&self) -> String {
        let text = format!("{:?}|{:?}", self.goals, self.obligations);
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Exact probability of goal `i`, if known.
    pub fn value_of(&self, i: usize) -> Option<Num> {
        match &self.goals.get(i)?.status {
            GoalStatus::Evaluated { value, .. } => Some(value.clone()),
            GoalStatus::Reduced {
                children,
                combine: Combine::Weighted(ws),
                ..
            } => {
                let mut total = Num::zero();
                for (c, w) in children.iter().zip(ws) {
                    total = total.add(&w.mul(&self.value_of(*c)?).ok()?).ok()?;
                }
                Some(total)
            }
            _ => None,
        }
    }

    pub fn is_closed(&self, i: usize) -> bool {
        let Some(entry) = self.goals.get(i) else { return false };
        match &entry.status {
            GoalStatus::Open => false,
            GoalStatus::Discharged { .. } | GoalStatus::Assumed { .. } => true,
            GoalStatus::Reduced {
                children,
                combine: Combine::All,
                ..
            } => children.iter().all(|c| self.is_closed(*c)),
            GoalStatus::Reduced { .. } | GoalStatus::Evaluated { .. } => self
                .value_of(i)
                .is_some_and(|v| entry.goal.relation.holds(&v, &entry.goal.bound)),
        }
    }

    /// Whether closing goal `i` relied on an external assumption.
    pub fn uses_assumption(&self, i: usize) -> bool {
        match &self.goals[i].status {
            GoalStatus::Assumed { .. } => true,
            GoalStatus::Reduced { children, .. } => children.iter().any(|c| self.uses_assumption(*c)),
            _ => false,
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.is_closed(0) {
            Verdict::Established
        } else {
            Verdict::NotEstablished
        }
    }

    /// Goals below the root that are neither closed nor reduced.
    pub fn residual(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            match &self.goals[i].status {
                GoalStatus::Reduced { children, .. } => stack.extend(children.iter().rev()),
                _ if self.is_closed(i) => {}
                _ => out.push(i),
            }
        }
        out.sort_unstable();
        out
    }

    /// Apply one invocation, returning the new state.
    pub fn apply(&self, inv: &Invocation) -> Result<ProofState, RuleError> {
        let entry = self.goals.get(inv.goal).ok_or(RuleError::BadGoal(inv.goal))?;
        let resolved = resolve(inv, &self.ctx, self.base_dir.as_deref())?;
        let mut next = self.clone();
        if let Resolved::Assume(reason) = &resolved {
            if entry.status != GoalStatus::Open {
                return Err(RuleError::GoalNotOpen(inv.goal));
            }
            next.goals[inv.goal].status = GoalStatus::Assumed { reason: reason.clone() };
            return Ok(next.traced(self, inv));
        }
        if entry.status != GoalStatus::Open {
            return Err(RuleError::GoalNotOpen(inv.goal));
        }
        let goal = &entry.goal;
        match resolved {
            Resolved::Term(rule) => {
                let observed = goal.event.vars();
                let comp = apply_term_rule(&rule, &goal.comp, &inv.path, &observed)?;
                next.goals[inv.goal].goal.comp = comp;
            }
            Resolved::Goal(rule) => {
                let outcome = apply_goal_rule(&rule, goal, &self.ctx)?;
                let name = rule.name().to_string();
                let status = match outcome {
                    GoalOutcome::Value(value) => GoalStatus::Evaluated { rule: name, value },
                    GoalOutcome::Weighted(children) => {
                        let (ws, gs): (Vec<Num>, Vec<Goal>) = children.into_iter().unzip();
                        let ids = next.push_children(inv.goal, gs);
                        GoalStatus::Reduced {
                            rule: name,
                            children: ids,
                            combine: Combine::Weighted(ws),
                        }
                    }
                    GoalOutcome::Discharged(obs) => {
                        let ids = next.push_obligations(inv.goal, obs);
                        GoalStatus::Discharged {
                            rule: name,
                            obligations: ids,
                        }
                    }
                    GoalOutcome::Subgoals(gs, obs) => {
                        next.push_obligations(inv.goal, obs);
                        let ids = next.push_children(inv.goal, gs);
                        GoalStatus::Reduced {
                            rule: name,
                            children: ids,
                            combine: Combine::All,
                        }
                    }
                };
                next.goals[inv.goal].status = status;
            }
            Resolved::Assume(_) => unreachable!("handled above"),
        }
        Ok(next.traced(self, inv))
    }

    fn push_children(&mut self, parent: usize, gs: Vec<Goal>) -> Vec<usize> {
        gs.into_iter()
            .map(|goal| {
                self.goals.push(GoalEntry {
                    goal,
                    status: GoalStatus::Open,
                    parent: Some(parent),
                });
                self.goals.len() - 1
            })
            .collect()
    }

    fn push_obligations(&mut self, goal: usize, obs: Vec<NumericObligation>) -> Vec<usize> {
        obs.into_iter()
            .map(|obligation| {
                self.obligations.push(ObligationRecord { goal, obligation });
                self.obligations.len() - 1
            })
            .collect()
    }

    fn traced(mut self, before: &ProofState, inv: &Invocation) -> ProofState {
        let entry = TraceEntry {
            rule: inv.rule.clone(),
            goal: inv.goal,
            path: inv.path.clone(),
            params: inv.params.clone(),
            before: before.digest(),
            after: self.digest(),
        };
        self.trace.push(entry);
        self
    }

    /// Re-run a recorded trace from `self`, checking every digest.
    pub fn replay(&self, trace: &[TraceEntry]) -> Result<ProofState, RuleError> {
        let mut state = self.clone();
        for (k, entry) in trace.iter().enumerate() {
            if state.digest() != entry.before {
                return Err(RuleError::ReplayMismatch(k));
            }
            state = state.apply(&entry.invocation())?;
            if state.digest() != entry.after {
                return Err(RuleError::ReplayMismatch(k));
            }
        }
        Ok(state)
    }

    pub fn trace_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.trace).expect("trace serializes")
    }

    /// Summary of goals and obligations for reports.
    pub fn to_json(&self) -> serde_json::Value {
        let goals: Vec<serde_json::Value> = self
            .goals
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (status, detail) = match &e.status {
                    GoalStatus::Open => ("open", json!(null)),
                    GoalStatus::Reduced { rule, children, .. } => ("reduced", json!({"rule": rule, "children": children})),
                    GoalStatus::Evaluated { rule, value } => ("evaluated", json!({"rule": rule, "value": value.to_string(), "value_f64": value.to_f64()})),
                    GoalStatus::Discharged { rule, obligations } => {
                        ("discharged", json!({"rule": rule, "obligations": obligations}))
                    }
                    GoalStatus::Assumed { reason } => ("assumed", json!({"reason": reason})),
                };
                json!({
                    "index": i,
                    "parent": e.parent,
                    "relation": e.goal.relation.symbol(),
                    "bound": e.goal.bound.to_string(),
                    "status": status,
                    "detail": detail,
                    "closed": self.is_closed(i),
                    "value": self.value_of(i).map(|v| v.to_string()),
                })
            })
            .collect();
        json!({
            "goals": goals,
            "obligations": serde_json::to_value(&self.obligations).expect("obligations serialize"),
            "residual": self.residual(),
            "verdict": serde_json::to_value(self.verdict()).expect("verdict serializes"),
            "uses_assumption": self.uses_assumption(0),
        })
    }
}
