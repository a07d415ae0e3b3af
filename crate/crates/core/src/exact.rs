//! Exact enumeration semantics for finite-support computations.
//!
//! [`eval_joint`] builds the full joint distribution over every variable a
//! computation defines. Masses stay exact rationals as long as every weight
//! in the input is a literal.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use crate::terms::{linearize, Comp, Context, DistValue, Event, EvalError, Step, Update, UpdateBody};
use crate::value::{Num, Value};

pub const DEFAULT_SIZE_LIMIT: usize = 10_000_000;

/// Tolerance for comparing floating-point masses.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExactError {
    #[error("continuous distribution in update of `{0}`; use Monte-Carlo simulation instead")]
    ContinuousDistributionPresent(String),
    #[error("undefined function symbol `{0}`")]
    UndefinedSymbol(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("enumeration exceeded {limit} valuations")]
    SizeLimitExceeded { limit: usize },
    #[error(transparent)]
    Independence(#[from] crate::terms::IndependenceViolation),
    #[error("evaluation error: {0}")]
    Evaluation(EvalError),
}

impl From<EvalError> for ExactError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UndefinedSymbol(s) => ExactError::UndefinedSymbol(s),
            EvalError::UnknownVariable(v) => ExactError::UnknownVariable(v),
            other => ExactError::Evaluation(other),
        }
    }
}

/// Total assignment of values to variables, ordered by variable name.
pub type Valuation = BTreeMap<String, Value>;

/// Finite-support joint distribution over full valuations.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    vars: BTreeSet<String>,
    entries: BTreeMap<Valuation, Num>,
}

impl JointTable {
    /// The distribution putting all mass on the empty valuation.
    pub fn unit() -> JointTable {
        JointTable {
            vars: BTreeSet::new(),
            entries: BTreeMap::from([(Valuation::new(), Num::one())]),
        }
    }

    pub fn point(valuation: Valuation) -> JointTable {
        JointTable {
            vars: valuation.keys().cloned().collect(),
            entries: BTreeMap::from([(valuation, Num::one())]),
        }
    }

    pub fn vars(&self) -> &BTreeSet<String> {
        &self.vars
    }

    pub fn entries(&self) -> &BTreeMap<Valuation, Num> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass_of(&self, valuation: &Valuation) -> Num {
        self.entries.get(valuation).cloned().unwrap_or_else(Num::zero)
    }

    pub fn is_exact(&self) -> bool {
        self.entries.values().all(Num::is_exact)
    }

    /// Marginal joint over a subset of the variables.
    pub fn project(&self, keep: &BTreeSet<String>) -> Result<JointTable, ExactError> {
        if let Some(v) = keep.iter().find(|v| !self.vars.contains(*v)) {
            return Err(ExactError::UnknownVariable(v.clone()));
        }
        let mut entries: BTreeMap<Valuation, Num> = BTreeMap::new();
        for (val, m) in &self.entries {
            let key: Valuation = val
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            accumulate(&mut entries, key, m.clone());
        }
        Ok(JointTable {
            vars: keep.clone(),
            entries,
        })
    }

    /// Entry-wise comparison: same variables, same support (ignoring zero
    /// masses) and masses equal within `tol` (exactly when both are exact).
    pub fn approx_eq(&self, other: &JointTable, tol: f64) -> bool {
        if self.vars != other.vars {
            return false;
        }
        let keys: BTreeSet<&Valuation> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter().all(|k| {
            let a = self.mass_of(k);
            let b = other.mass_of(k);
            if a.is_exact() && b.is_exact() {
                a == b
            } else {
                (a.to_f64() - b.to_f64()).abs() <= tol
            }
        })
    }

    /// Deterministic JSON: variables sorted, entries in valuation order.
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|(val, m)| {
                let valuation: serde_json::Map<String, serde_json::Value> =
                    val.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                json!({ "valuation": valuation, "mass": m.to_f64(), "exact": exact_repr(m) })
            })
            .collect();
        json!({ "vars": self.vars, "entries": entries, "total_mass": total_mass(self).to_f64() })
    }
}

fn exact_repr(m: &Num) -> serde_json::Value {
    match m.as_rational() {
        Some(r) => json!(format!("{}/{}", r.numer(), r.denom())),
        None => serde_json::Value::Null,
    }
}

fn accumulate(entries: &mut BTreeMap<Valuation, Num>, key: Valuation, mass: Num) {
    match entries.get_mut(&key) {
        Some(slot) => {
            // addition of exact or finite floats cannot fail
            *slot = slot.add(&mass).expect("finite mass");
        }
        None => {
            entries.insert(key, mass);
        }
    }
}

/// Evaluation settings for [`eval_joint_with`].
#[derive(Debug, Clone, Copy)]
pub struct ExactConfig {
    pub size_limit: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            size_limit: DEFAULT_SIZE_LIMIT,
        }
    }
}

/// Joint distribution after running `c` from the empty state.
pub fn eval_joint(c: &Comp, ctx: &Context) -> Result<JointTable, ExactError> {
    eval_joint_with(c, ctx, ExactConfig::default())
}

pub fn eval_joint_with(c: &Comp, ctx: &Context, cfg: ExactConfig) -> Result<JointTable, ExactError> {
    run(c, JointTable::unit(), ctx, cfg)
}

/// Run `c` starting from an existing joint distribution.
pub fn run(c: &Comp, start: JointTable, ctx: &Context, cfg: ExactConfig) -> Result<JointTable, ExactError> {
    let c = if c.has_par() { linearize(c)? } else { c.clone() };
    let mut table = start;
    for step in &c.steps {
        match step {
            Step::Update(u) => table = apply_update(&table, u, ctx, cfg)?,
            Step::Par(_) => unreachable!("linearized"),
        }
    }
    Ok(table)
}

fn apply_update(table: &JointTable, u: &Update, ctx: &Context, cfg: ExactConfig) -> Result<JointTable, ExactError> {
    let mut entries: BTreeMap<Valuation, Num> = BTreeMap::new();
    for (val, mass) in &table.entries {
        let outcomes = update_outcomes(u, val, ctx, cfg)?;
        for (value, w) in outcomes {
            if w.is_zero() {
                continue;
            }
            let mut next = val.clone();
            next.insert(u.target.clone(), value);
            accumulate(&mut entries, next, mass.mul(&w).map_err(EvalError::from)?);
            if entries.len() > cfg.size_limit {
                return Err(ExactError::SizeLimitExceeded { limit: cfg.size_limit });
            }
        }
    }
    let mut vars = table.vars.clone();
    vars.insert(u.target.clone());
    Ok(JointTable { vars, entries })
}

/// Finite distribution of the updated value under one valuation.
pub fn update_outcomes(
    u: &Update,
    val: &Valuation,
    ctx: &Context,
    cfg: ExactConfig,
) -> Result<Vec<(Value, Num)>, ExactError> {
    match &u.body {
        UpdateBody::Dist(d) => match d.eval(val, ctx)? {
            DistValue::Finite(items) => Ok(items),
            DistValue::Normal { .. } => Err(ExactError::ContinuousDistributionPresent(u.target.clone())),
        },
        UpdateBody::Scope { comp, result } => {
            let inner = run(comp, JointTable::point(val.clone()), ctx, cfg)?;
            let mut out: Vec<(Value, Num)> = Vec::new();
            for (ival, m) in &inner.entries {
                let v = ival
                    .get(result)
                    .cloned()
                    .ok_or_else(|| ExactError::UnknownVariable(result.clone()))?;
                match out.iter_mut().find(|(x, _)| *x == v) {
                    Some(slot) => slot.1 = slot.1.add(m).map_err(EvalError::from)?,
                    None => out.push((v, m.clone())),
                }
            }
            Ok(out)
        }
    }
}

/// Per-variable distribution obtained by summing out everything else.
pub fn marginal(j: &JointTable, var: &str) -> Result<Vec<(Value, Num)>, ExactError> {
    if !j.vars.contains(var) {
        return Err(ExactError::UnknownVariable(var.to_string()));
    }
    let mut acc: BTreeMap<Value, Num> = BTreeMap::new();
    for (val, m) in &j.entries {
        let v = val[var].clone();
        match acc.get_mut(&v) {
            Some(slot) => *slot = slot.add(m).map_err(EvalError::from)?,
            None => {
                acc.insert(v, m.clone());
            }
        }
    }
    Ok(acc.into_iter().collect())
}

/// Probability of `e` holding under `j`.
pub fn prob_event(j: &JointTable, e: &Event) -> Result<Num, ExactError> {
    prob_event_in(j, e, &Context::default())
}

/// [`prob_event`] with function symbols resolved against `ctx`.
pub fn prob_event_in(j: &JointTable, e: &Event, ctx: &Context) -> Result<Num, ExactError> {
    if let Some(v) = e.vars().into_iter().find(|v| !j.vars.contains(v)) {
        return Err(ExactError::UnknownVariable(v));
    }
    let mut hits: Vec<&Num> = Vec::new();
    for (val, m) in &j.entries {
        if e.predicate.eval_bool(val, ctx)? {
            hits.push(m);
        }
    }
    Ok(Num::sum(hits))
}

pub fn total_mass(j: &JointTable) -> Num {
    Num::sum(j.entries.values())
}
