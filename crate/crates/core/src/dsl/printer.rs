use std::fmt::Write;

use crate::terms::{Carrier, Comp, Dist, Expr, Goal, Step, Update, UpdateBody};
use crate::value::{Num, Value};

use super::SystemFile;

const INDENT: &str = "    ";

fn num(n: &Num) -> String {
    match n {
        Num::Rat(r) => Num::terminating_decimal(r).unwrap_or_else(|| format!("rat({}, {})", r.numer(), r.denom())),
        Num::Real(v) => format!("real({v:?})"),
    }
}

pub fn print_value(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Num(n) => num(n),
        Value::Sym(s) => s.clone(),
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Cond { .. } => 0,
        Expr::Or(..) => 1,
        Expr::And(..) => 2,
        Expr::Not(_) => 3,
        Expr::Cmp(..) => 4,
        Expr::Arith(op, ..) if matches!(op, crate::terms::ArithOp::Add | crate::terms::ArithOp::Sub) => 5,
        Expr::Arith(..) => 6,
        Expr::Neg(_) => 7,
        _ => 8,
    }
}

fn expr_at(e: &Expr, min: u8, out: &mut String) {
    if prec(e) < min {
        out.push('(');
        expr_into(e, out);
        out.push(')');
    } else {
        expr_into(e, out);
    }
}

fn expr_into(e: &Expr, out: &mut String) {
    match e {
        Expr::Const(v) => out.push_str(&print_value(v)),
        Expr::Var(v) => out.push_str(v),
        Expr::Neg(a) => {
            out.push_str("-(");
            expr_into(a, out);
            out.push(')');
        }
        Expr::Arith(op, a, b) => {
            let p = prec(e);
            expr_at(a, p, out);
            let _ = write!(out, " {} ", op.symbol());
            expr_at(b, p + 1, out);
        }
        Expr::Cmp(op, a, b) => {
            expr_at(a, 5, out);
            let _ = write!(out, " {} ", op.symbol());
            expr_at(b, 5, out);
        }
        Expr::And(a, b) => {
            expr_at(a, 2, out);
            out.push_str(" and ");
            expr_at(b, 3, out);
        }
        Expr::Or(a, b) => {
            expr_at(a, 1, out);
            out.push_str(" or ");
            expr_at(b, 2, out);
        }
        Expr::Not(a) => {
            out.push_str("not ");
            expr_at(a, 3, out);
        }
        Expr::Cond { arms, otherwise } => {
            for (k, (g, t)) in arms.iter().enumerate() {
                out.push_str(if k == 0 { "if " } else { " elif " });
                expr_at(g, 1, out);
                out.push_str(" then ");
                expr_at(t, 1, out);
            }
            out.push_str(" else ");
            expr_into(otherwise, out);
        }
        Expr::Call(f, args) => {
            out.push_str(f);
            if !args.is_empty() {
                out.push('(');
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    expr_into(a, out);
                }
                out.push(')');
            }
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr_into(e, &mut s);
    s
}

fn dist_into(d: &Dist, out: &mut String) {
    match d {
        Dist::Point(e) => {
            out.push_str("point(");
            expr_into(e, out);
            out.push(')');
        }
        Dist::Uniform(t) => {
            let _ = write!(out, "uniform({t})");
        }
        Dist::Normal { mean, variance } => {
            out.push_str("normal(");
            expr_into(mean, out);
            out.push_str(", ");
            expr_into(variance, out);
            out.push(')');
        }
        Dist::Table(entries) => {
            out.push('{');
            for (k, (v, w)) in entries.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{}: {}", print_value(v), num(w));
            }
            out.push('}');
        }
        Dist::Cond { arms, otherwise } => {
            for (k, (g, t)) in arms.iter().enumerate() {
                out.push_str(if k == 0 { "if " } else { " elif " });
                expr_at(g, 1, out);
                out.push_str(" then ");
                if matches!(t, Dist::Cond { .. }) {
                    out.push('(');
                    dist_into(t, out);
                    out.push(')');
                } else {
                    dist_into(t, out);
                }
            }
            out.push_str(" else ");
            dist_into(otherwise, out);
        }
    }
}

pub fn print_dist(d: &Dist) -> String {
    let mut s = String::new();
    dist_into(d, &mut s);
    s
}

fn update_into(u: &Update, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    match &u.body {
        UpdateBody::Dist(d) => {
            let _ = writeln!(out, "{pad}{} ~ {};", u.target, print_dist(d));
        }
        UpdateBody::Scope { comp, result } => {
            let _ = writeln!(out, "{pad}{} ~ scope({result}) {{", u.target);
            steps_into(comp, depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

fn steps_into(c: &Comp, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    for step in &c.steps {
        match step {
            Step::Update(u) => update_into(u, depth, out),
            Step::Par(block) => {
                let _ = writeln!(out, "{pad}par {{");
                for u in block {
                    update_into(u, depth + 1, out);
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

/// Steps of a computation, one update per line.
pub fn print_comp(c: &Comp) -> String {
    let mut s = String::new();
    steps_into(c, 0, &mut s);
    s
}

pub fn print_goal(g: &Goal) -> String {
    format!("pr({}) {} {}", print_expr(&g.event.predicate), g.relation.symbol(), num(&g.bound))
}

pub fn print_system(sys: &SystemFile) -> String {
    let ctx = &sys.ctx;
    let mut out = String::new();
    for (name, carrier) in &ctx.types {
        if let Carrier::Finite(members) = carrier {
            let ms: Vec<String> = members.iter().map(print_value).collect();
            let _ = writeln!(out, "type {name} = {{{}}};", ms.join(", "));
        }
    }
    for (name, ty) in &ctx.vars {
        let _ = writeln!(out, "var {name} : {ty};");
    }
    for (name, def) in &ctx.functions {
        out.push_str("fun ");
        out.push_str(name);
        if !def.params.is_empty() {
            let _ = write!(out, "({})", def.params.join(", "));
        }
        if let Some(body) = &def.body {
            let _ = write!(out, " = {}", print_expr(body));
        }
        out.push_str(";\n");
    }
    for (name, d) in &ctx.dists {
        let _ = writeln!(out, "dist {name} = {};", print_dist(d));
    }
    out.push_str("system {\n");
    steps_into(&sys.comp, 1, &mut out);
    out.push_str("}\n");
    out
}
