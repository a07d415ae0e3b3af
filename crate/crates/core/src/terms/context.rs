use std::collections::BTreeMap;

use crate::terms::dist::Dist;
use crate::terms::expr::{EvalError, Expr};
use crate::value::Value;

/// Carrier of a declared variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Carrier {
    /// Named finite enumeration (also used for `bool`).
    Finite(Vec<Value>),
    Int,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunDef {
    pub params: Vec<String>,
    /// `None` keeps the symbol uninterpreted.
    pub body: Option<Expr>,
}

impl FunDef {
    pub fn uninterpreted(params: Vec<String>) -> Self {
        FunDef { params, body: None }
    }

    pub fn defined(params: Vec<String>, body: Expr) -> Self {
        FunDef {
            params,
            body: Some(body),
        }
    }
}

/// Declarations a computation is interpreted against: carrier types,
/// variables, function symbols and named distributions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Context {
    pub types: BTreeMap<String, Carrier>,
    pub vars: BTreeMap<String, String>,
    pub functions: BTreeMap<String, FunDef>,
    pub dists: BTreeMap<String, Dist>,
}

pub const BUILTIN_TYPES: [&str; 3] = ["bool", "int", "real"];

impl Context {
    pub fn new() -> Self {
        Context::default()
    }

    pub fn carrier(&self, name: &str) -> Option<Carrier> {
        match name {
            "bool" => Some(Carrier::Finite(vec![Value::Bool(false), Value::Bool(true)])),
            "int" => Some(Carrier::Int),
            "real" => Some(Carrier::Real),
            _ => self.types.get(name).cloned(),
        }
    }

    /// Members of a finite carrier, in declaration order.
    pub fn finite_members(&self, name: &str) -> Result<Vec<Value>, EvalError> {
        match self.carrier(name) {
            Some(Carrier::Finite(vs)) => Ok(vs),
            Some(_) => Err(EvalError::NotFinite(name.to_string())),
            None => Err(EvalError::UnknownType(name.to_string())),
        }
    }

    pub fn function(&self, name: &str) -> Option<&FunDef> {
        self.functions.get(name)
    }

    pub fn define_type(&mut self, name: impl Into<String>, members: Vec<Value>) -> &mut Self {
        self.types.insert(name.into(), Carrier::Finite(members));
        self
    }

    pub fn declare_var(&mut self, name: impl Into<String>, ty: impl Into<String>) -> &mut Self {
        self.vars.insert(name.into(), ty.into());
        self
    }

    pub fn define_function(&mut self, name: impl Into<String>, def: FunDef) -> &mut Self {
        self.functions.insert(name.into(), def);
        self
    }

    pub fn define_dist(&mut self, name: impl Into<String>, dist: Dist) -> &mut Self {
        self.dists.insert(name.into(), dist);
        self
    }

    /// The enumeration type a symbol belongs to, if any.
    pub fn symbol_type(&self, sym: &str) -> Option<&str> {
        self.types.iter().find_map(|(name, c)| match c {
            Carrier::Finite(vs) if vs.iter().any(|v| matches!(v, Value::Sym(s) if s == sym)) => {
                Some(name.as_str())
            }
            _ => None,
        })
    }
}
