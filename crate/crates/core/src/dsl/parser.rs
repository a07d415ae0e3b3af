use std::collections::BTreeSet;

use crate::terms::{unroll_loop, ArithOp, CmpOp, Comp, Context, Dist, Event, Expr, FunDef, Goal, Relation, Step, Update};
use crate::value::{Num, Value};

use super::lexer::{lex, Tok, Token};
use super::{ParseError, SystemFile};

const KEYWORDS: [&str; 23] = [
    "type", "var", "dist", "fun", "system", "point", "uniform", "normal", "scope", "par", "unit", "repeat", "if",
    "then", "elif", "else", "and", "or", "not", "true", "false", "rat", "pr",
];

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    pub ctx: Context,
    known_vars: BTreeSet<String>,
    functions: BTreeSet<String>,
    params: Vec<String>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    pub fn new(src: &str, ctx: Context, known_vars: BTreeSet<String>) -> PResult<Parser> {
        let toks = lex(src)?;
        let functions = ctx.functions.keys().cloned().collect();
        Ok(Parser {
            toks,
            pos: 0,
            ctx,
            known_vars,
            functions,
            params: Vec::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.error(format!("expected `{w}`, found {}", self.describe()))
        }
    }

    /// Any identifier, keywords included (used for type names).
    fn any_ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn name(&mut self) -> PResult<String> {
        if let Tok::Ident(s) = self.peek() {
            if KEYWORDS.contains(&s.as_str()) {
                return self.error(format!("`{s}` is a keyword"));
            }
        }
        self.any_ident()
    }

    pub fn expect_eof(&self) -> PResult<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => self.error(format!("unexpected {} after the end", self.describe())),
        }
    }

    /// Collect assignment targets and function names ahead of parsing, so
    /// identifiers resolve wherever they appear.
    fn prescan(&mut self) {
        for w in self.toks.windows(2) {
            match (&w[0].tok, &w[1].tok) {
                (Tok::Ident(n), Tok::Punct("~")) => {
                    self.known_vars.insert(n.clone());
                }
                (Tok::Ident(kw), Tok::Ident(n)) if kw == "fun" => {
                    self.functions.insert(n.clone());
                }
                _ => {}
            }
        }
    }

    pub fn system(mut self) -> PResult<SystemFile> {
        self.prescan();
        loop {
            match self.peek().clone() {
                Tok::Ident(w) if w == "type" => self.type_decl()?,
                Tok::Ident(w) if w == "var" => self.var_decl()?,
                Tok::Ident(w) if w == "dist" => self.dist_decl()?,
                Tok::Ident(w) if w == "fun" => self.fun_decl()?,
                Tok::Ident(w) if w == "system" => {
                    self.bump();
                    self.expect_punct("{")?;
                    let steps = self.steps()?;
                    self.expect_punct("}")?;
                    self.eat_punct(";");
                    self.expect_eof()?;
                    return Ok(SystemFile {
                        ctx: self.ctx,
                        comp: Comp::from_steps(steps),
                    });
                }
                Tok::Eof => return self.error("missing `system { ... }` block"),
                _ => return self.error(format!("expected a declaration or `system`, found {}", self.describe())),
            }
        }
    }

    fn type_decl(&mut self) -> PResult<()> {
        self.expect_word("type")?;
        let name = self.name()?;
        if self.ctx.carrier(&name).is_some() {
            return self.error(format!("type `{name}` is already defined"));
        }
        self.expect_punct("=")?;
        self.expect_punct("{")?;
        let mut members = Vec::new();
        loop {
            // members are fresh symbols or literal numbers and booleans
            let m = match self.peek() {
                Tok::Ident(w) if !KEYWORDS.contains(&w.as_str()) => {
                    let m = self.name()?;
                    if self.ctx.symbol_type(&m).is_some() || members.contains(&Value::Sym(m.clone())) {
                        return self.error(format!("symbol `{m}` is already a member of a type"));
                    }
                    Value::Sym(m)
                }
                _ => self.literal()?,
            };
            if members.iter().any(|v| v.semantic_eq(&m) == Some(true)) {
                return self.error(format!("`{m}` is listed twice"));
            }
            members.push(m);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct("}")?;
        self.expect_punct(";")?;
        self.ctx.define_type(name, members);
        Ok(())
    }

    fn var_decl(&mut self) -> PResult<()> {
        self.expect_word("var")?;
        let mut names = vec![self.name()?];
        while self.eat_punct(",") {
            names.push(self.name()?);
        }
        self.expect_punct(":")?;
        let ty = self.any_ident()?;
        if self.ctx.carrier(&ty).is_none() {
            return self.error(format!("unknown type `{ty}`"));
        }
        self.expect_punct(";")?;
        for n in names {
            self.known_vars.insert(n.clone());
            self.ctx.declare_var(n, ty.clone());
        }
        Ok(())
    }

    fn dist_decl(&mut self) -> PResult<()> {
        self.expect_word("dist")?;
        let name = self.name()?;
        self.expect_punct("=")?;
        let d = self.dist()?;
        self.expect_punct(";")?;
        self.ctx.define_dist(name, d);
        Ok(())
    }

    fn fun_decl(&mut self) -> PResult<()> {
        self.expect_word("fun")?;
        let name = self.name()?;
        if self.ctx.functions.contains_key(&name) {
            return self.error(format!("function `{name}` is already defined"));
        }
        let mut params = Vec::new();
        if self.eat_punct("(") && !self.eat_punct(")") {
            loop {
                params.push(self.name()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(")")?;
        }
        let def = if self.eat_punct("=") {
            self.params = params.clone();
            let body = self.expr();
            self.params.clear();
            FunDef::defined(params, body?)
        } else {
            FunDef::uninterpreted(params)
        };
        self.expect_punct(";")?;
        self.ctx.define_function(name, def);
        Ok(())
    }

    fn steps(&mut self) -> PResult<Vec<Step>> {
        let mut steps = Vec::new();
        while !self.is_punct("}") {
            if self.eat_word("par") || self.eat_word("unit") {
                self.expect_punct("{")?;
                let mut block = Vec::new();
                while !self.is_punct("}") {
                    block.push(self.update()?);
                }
                self.expect_punct("}")?;
                self.eat_punct(";");
                steps.push(Step::Par(block));
            } else if self.eat_word("repeat") {
                let n = match self.bump() {
                    Tok::Number(n) => n.parse::<usize>().or_else(|_| self.error("repeat count must be a natural number"))?,
                    _ => return self.error("expected a repeat count"),
                };
                self.expect_punct("{")?;
                let body = Comp::from_steps(self.steps()?);
                self.expect_punct("}")?;
                self.eat_punct(";");
                steps.extend(unroll_loop(&body, n).steps);
            } else {
                steps.push(Step::Update(self.update()?));
            }
        }
        Ok(steps)
    }

    fn update(&mut self) -> PResult<Update> {
        let target = self.name()?;
        self.expect_punct("~")?;
        if self.eat_word("scope") {
            self.expect_punct("(")?;
            let result = self.name()?;
            self.expect_punct(")")?;
            self.expect_punct("{")?;
            let comp = Comp::from_steps(self.steps()?);
            self.expect_punct("}")?;
            self.eat_punct(";");
            return Ok(Update::scope(target, comp, result));
        }
        let d = self.dist()?;
        self.expect_punct(";")?;
        Ok(Update::dist(target, d))
    }

    pub fn dist(&mut self) -> PResult<Dist> {
        if self.eat_word("point") {
            self.expect_punct("(")?;
            let e = self.expr()?;
            self.expect_punct(")")?;
            return Ok(Dist::Point(e));
        }
        if self.eat_word("uniform") {
            self.expect_punct("(")?;
            let ty = self.any_ident()?;
            if let Err(e) = self.ctx.finite_members(&ty) {
                return self.error(e.to_string());
            }
            self.expect_punct(")")?;
            return Ok(Dist::Uniform(ty));
        }
        if self.eat_word("normal") {
            self.expect_punct("(")?;
            let mean = self.expr()?;
            self.expect_punct(",")?;
            let variance = self.expr()?;
            self.expect_punct(")")?;
            return Ok(Dist::normal(mean, variance));
        }
        if self.eat_word("if") {
            let mut arms = Vec::new();
            loop {
                let g = self.expr()?;
                self.expect_word("then")?;
                arms.push((g, self.dist()?));
                if !self.eat_word("elif") {
                    break;
                }
            }
            self.expect_word("else")?;
            let otherwise = self.dist()?;
            return Ok(Dist::cond(arms, otherwise));
        }
        if self.eat_punct("(") {
            let d = self.dist()?;
            self.expect_punct(")")?;
            return Ok(d);
        }
        if self.eat_punct("{") {
            let mut entries = Vec::new();
            while !self.is_punct("}") {
                let v = self.literal()?;
                self.expect_punct(":")?;
                let w = match self.literal()? {
                    Value::Num(n) if !n.is_negative() => n,
                    _ => return self.error("table weights must be non-negative numbers"),
                };
                entries.push((v, w));
                if !self.is_punct("}") {
                    self.expect_punct(",")?;
                }
            }
            self.expect_punct("}")?;
            return Ok(Dist::table(entries));
        }
        if let Tok::Ident(n) = self.peek().clone() {
            if let Some(d) = self.ctx.dists.get(&n).cloned() {
                self.bump();
                return Ok(d);
            }
        }
        self.error(format!("expected a distribution, found {}", self.describe()))
    }

    fn integer(&mut self) -> PResult<i64> {
        let neg = self.eat_punct("-");
        match self.bump() {
            Tok::Number(n) => match n.parse::<i64>() {
                Ok(v) => Ok(if neg { -v } else { v }),
                Err(_) => self.error(format!("`{n}` is not an integer")),
            },
            _ => self.error("expected an integer"),
        }
    }

    fn literal(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Punct("-") => {
                self.bump();
                match self.bump() {
                    Tok::Number(n) => self.decimal(&format!("-{n}")).map(Value::Num),
                    _ => self.error("expected a number after `-`"),
                }
            }
            Tok::Number(n) => {
                self.bump();
                self.decimal(&n).map(Value::Num)
            }
            Tok::Ident(w) if w == "true" || w == "false" => {
                self.bump();
                Ok(Value::Bool(w == "true"))
            }
            Tok::Ident(w) if w == "rat" || w == "real" => match self.primary()? {
                Expr::Const(v) => Ok(v),
                _ => unreachable!("rat/real literals are constants"),
            },
            Tok::Ident(w) if self.ctx.symbol_type(&w).is_some() => {
                self.bump();
                Ok(Value::Sym(w))
            }
            _ => self.error(format!("expected a literal value, found {}", self.describe())),
        }
    }

    fn decimal(&self, text: &str) -> PResult<Num> {
        Num::parse_decimal(text).or_else(|e| self.error(e.to_string()))
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.and_expr()?;
        while self.eat_word("or") {
            e = Expr::or(e, self.and_expr()?);
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut e = self.not_expr()?;
        while self.eat_word("and") {
            e = Expr::and(e, self.not_expr()?);
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_word("not") {
            return Ok(Expr::not(self.not_expr()?));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let a = self.add_expr()?;
        let op = match self.peek() {
            Tok::Punct("=") => CmpOp::Eq,
            Tok::Punct("!=") => CmpOp::Ne,
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("<=") => CmpOp::Le,
            Tok::Punct(">") => CmpOp::Gt,
            Tok::Punct(">=") => CmpOp::Ge,
            _ => return Ok(a),
        };
        self.bump();
        let b = self.add_expr()?;
        Ok(Expr::cmp(op, a, b))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut e = self.mul_expr()?;
        loop {
            let op = if self.eat_punct("+") {
                ArithOp::Add
            } else if self.eat_punct("-") {
                ArithOp::Sub
            } else {
                return Ok(e);
            };
            e = Expr::arith(op, e, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat_punct("*") {
                ArithOp::Mul
            } else if self.eat_punct("/") {
                ArithOp::Div
            } else {
                return Ok(e);
            };
            e = Expr::arith(op, e, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_punct("-") {
            if let Tok::Number(n) = self.peek().clone() {
                self.bump();
                return Ok(Expr::num(self.decimal(&format!("-{n}"))?));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::num(self.decimal(&n)?))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Expr::bool(w == "true"))
                }
                "rat" if self.peek_at(1) == &Tok::Punct("(") => {
                    self.bump();
                    self.bump();
                    let n = self.integer()?;
                    self.expect_punct(",")?;
                    let d = self.integer()?;
                    if d <= 0 {
                        return self.error("rat denominator must be positive");
                    }
                    self.expect_punct(")")?;
                    Ok(Expr::num(Num::ratio(n, d)))
                }
                "real" if self.peek_at(1) == &Tok::Punct("(") => {
                    self.bump();
                    self.bump();
                    let neg = self.eat_punct("-");
                    let v = match self.bump() {
                        Tok::Number(n) => n.parse::<f64>().or_else(|_| self.error(format!("bad real `{n}`")))?,
                        _ => return self.error("expected a number"),
                    };
                    self.expect_punct(")")?;
                    Ok(Expr::num(Num::real(if neg { -v } else { v })))
                }
                "if" => {
                    self.bump();
                    let mut arms = Vec::new();
                    loop {
                        let g = self.expr()?;
                        self.expect_word("then")?;
                        arms.push((g, self.expr()?));
                        if !self.eat_word("elif") {
                            break;
                        }
                    }
                    self.expect_word("else")?;
                    let otherwise = self.expr()?;
                    Ok(Expr::cond(arms, otherwise))
                }
                _ => self.identifier(),
            },
            _ => self.error(format!("expected an expression, found {}", self.describe())),
        }
    }

    fn identifier(&mut self) -> PResult<Expr> {
        let name = self.name()?;
        if self.is_punct("(") {
            if !self.functions.contains(&name) {
                return self.error(format!("unknown function `{name}`"));
            }
            self.bump();
            let mut args = Vec::new();
            if !self.eat_punct(")") {
                loop {
                    args.push(self.expr()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(")")?;
            }
            if let Some(def) = self.ctx.function(&name) {
                if def.params.len() != args.len() {
                    return self.error(format!(
                        "`{name}` expects {} argument(s), got {}",
                        def.params.len(),
                        args.len()
                    ));
                }
            }
            return Ok(Expr::call(name, args));
        }
        if self.params.contains(&name) || self.known_vars.contains(&name) {
            return Ok(Expr::var(name));
        }
        if self.functions.contains(&name) {
            return Ok(Expr::call(name, vec![]));
        }
        if self.ctx.symbol_type(&name).is_some() {
            return Ok(Expr::sym(name));
        }
        // report at the identifier itself
        self.pos -= 1;
        self.error(format!("unknown identifier `{name}`"))
    }

    pub fn goal(&mut self) -> PResult<Goal> {
        if !(self.eat_word("pr") || self.eat_word("Pr")) {
            return self.error("a goal starts with `pr(`");
        }
        self.expect_punct("(")?;
        let e = self.expr()?;
        self.expect_punct(")")?;
        let rel = match self.bump() {
            Tok::Punct("<") => Relation::Lt,
            Tok::Punct("<=") => Relation::Le,
            Tok::Punct("=") => Relation::Eq,
            _ => {
                self.pos -= 1;
                return self.error("expected `<`, `<=` or `=` after the event");
            }
        };
        let bound = match self.literal()? {
            Value::Num(n) => n,
            _ => return self.error("the bound must be a number"),
        };
        if rel != Relation::Eq && (bound.is_negative() || bound.cmp_num(&Num::one()).is_gt()) {
            return self.error("the bound must lie in [0, 1]");
        }
        Ok(Goal::new(Comp::empty(), Event::new(e), rel, bound))
    }
}
