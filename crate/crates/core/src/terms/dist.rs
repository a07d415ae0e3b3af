use std::collections::{BTreeMap, BTreeSet};

use crate::terms::context::Context;
use crate::terms::expr::{Env, EvalError, Expr};
use crate::value::{Num, Value};

/// Distribution-valued term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dist {
    /// All mass on a single value.
    Point(Expr),
    /// Uniform over the members of a named finite carrier.
    Uniform(String),
    /// Normal distribution given by mean and *variance*.
    Normal { mean: Expr, variance: Expr },
    /// Finite weighted table; total mass may deviate from one.
    Table(Vec<(Value, Num)>),
    /// Guarded choice between distributions.
    Cond {
        arms: Vec<(Expr, Dist)>,
        otherwise: Box<Dist>,
    },
}

/// A distribution term evaluated under a concrete valuation.
#[derive(Debug, Clone, PartialEq)]
pub enum DistValue {
    /// Support with weights; values are distinct.
    Finite(Vec<(Value, Num)>),
    Normal { mean: f64, variance: f64 },
}

impl DistValue {
    pub fn total_mass(&self) -> Num {
        match self {
            DistValue::Finite(items) => Num::sum(items.iter().map(|(_, w)| w)),
            DistValue::Normal { .. } => Num::one(),
        }
    }

    /// Weight of `v` (zero if absent); `None` for continuous distributions.
    pub fn weight_of(&self, v: &Value) -> Option<Num> {
        match self {
            DistValue::Finite(items) => Some(
                items
                    .iter()
                    .find(|(x, _)| x.semantic_eq(v) == Some(true))
                    .map(|(_, w)| w.clone())
                    .unwrap_or_else(Num::zero),
            ),
            DistValue::Normal { .. } => None,
        }
    }
}

impl Dist {
    pub fn point(e: Expr) -> Dist {
        Dist::Point(e)
    }

    pub fn normal(mean: Expr, variance: Expr) -> Dist {
        Dist::Normal { mean, variance }
    }

    pub fn uniform(carrier: impl Into<String>) -> Dist {
        Dist::Uniform(carrier.into())
    }

    pub fn table(entries: Vec<(Value, Num)>) -> Dist {
        Dist::Table(entries)
    }

    pub fn cond(arms: Vec<(Expr, Dist)>, otherwise: Dist) -> Dist {
        assert!(!arms.is_empty(), "guard chains need at least one arm");
        Dist::Cond {
            arms,
            otherwise: Box::new(otherwise),
        }
    }

    /// Every expression occurring in the term, guards included.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Dist::Point(e) => vec![e],
            Dist::Uniform(_) | Dist::Table(_) => vec![],
            Dist::Normal { mean, variance } => vec![mean, variance],
            Dist::Cond { arms, otherwise } => arms
                .iter()
                .flat_map(|(g, d)| std::iter::once(g).chain(d.exprs()))
                .chain(otherwise.exprs())
                .collect(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for e in self.exprs() {
            e.collect_vars(&mut out);
        }
        out
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.exprs().iter().any(|e| e.mentions(var))
    }

    pub fn map_exprs(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Dist {
        match self {
            Dist::Point(e) => Dist::Point(f(e)),
            Dist::Uniform(_) | Dist::Table(_) => self.clone(),
            Dist::Normal { mean, variance } => Dist::Normal {
                mean: f(mean),
                variance: f(variance),
            },
            Dist::Cond { arms, otherwise } => Dist::Cond {
                arms: arms.iter().map(|(g, d)| (f(g), d.map_exprs(f))).collect(),
                otherwise: Box::new(otherwise.map_exprs(f)),
            },
        }
    }

    pub fn rename_vars(&self, map: &BTreeMap<String, String>) -> Dist {
        self.map_exprs(&mut |e| e.rename_vars(map))
    }

    pub fn is_continuous(&self) -> bool {
        match self {
            Dist::Normal { .. } => true,
            Dist::Cond { arms, otherwise } => {
                arms.iter().any(|(_, d)| d.is_continuous()) || otherwise.is_continuous()
            }
            _ => false,
        }
    }

    /// Statically proper: every reachable table sums to exactly one.
    pub fn is_proper(&self) -> bool {
        match self {
            Dist::Table(entries) => Num::sum(entries.iter().map(|(_, w)| w)).num_eq(&Num::one()),
            Dist::Cond { arms, otherwise } => {
                arms.iter().all(|(_, d)| d.is_proper()) && otherwise.is_proper()
            }
            _ => true,
        }
    }

    pub fn eval(&self, env: &dyn Env, ctx: &Context) -> Result<DistValue, EvalError> {
        match self {
            Dist::Point(e) => Ok(DistValue::Finite(vec![(e.eval(env, ctx)?, Num::one())])),
            Dist::Uniform(carrier) => {
                let members = ctx.finite_members(carrier)?;
                if members.is_empty() {
                    return Err(EvalError::InvalidDistribution(format!(
                        "uniform over empty carrier `{carrier}`"
                    )));
                }
                let w = Num::ratio(1, members.len() as i64);
                Ok(DistValue::Finite(members.into_iter().map(|v| (v, w.clone())).collect()))
            }
            Dist::Normal { mean, variance } => {
                let mean = mean.eval_num(env, ctx)?.to_f64();
                let variance = variance.eval_num(env, ctx)?.to_f64();
                if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
                    return Err(EvalError::InvalidDistribution(format!(
                        "normal variance must be positive and finite, got {variance}"
                    )));
                }
                Ok(DistValue::Normal { mean, variance })
            }
            Dist::Table(entries) => {
                let mut merged: Vec<(Value, Num)> = Vec::with_capacity(entries.len());
                for (v, w) in entries {
                    if w.is_negative() || !w.to_f64().is_finite() {
                        return Err(EvalError::InvalidDistribution(format!(
                            "table weight {w} for `{v}` must be finite and non-negative"
                        )));
                    }
                    match merged.iter_mut().find(|(x, _)| x.semantic_eq(v) == Some(true)) {
                        Some(slot) => slot.1 = slot.1.add(w)?,
                        None => merged.push((v.clone(), w.clone())),
                    }
                }
                Ok(DistValue::Finite(merged))
            }
            Dist::Cond { arms, otherwise } => {
                for (guard, dist) in arms {
                    if guard.eval_bool(env, ctx)? {
                        return dist.eval(env, ctx);
                    }
                }
                otherwise.eval(env, ctx)
            }
        }
    }
}
