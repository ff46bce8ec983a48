use crate::model::*;

use super::lexer::{lex, Kw, Tok, Token};

/// Expression nesting beyond this depth is rejected rather than risking the
/// native stack.
const MAX_DEPTH: usize = 256;

/// Parses a `.bip` source. Always returns a model; declarations that failed
/// to parse are left out of it and described by the diagnostics.
pub fn parse(src: &str) -> (Model, Vec<Diagnostic>) {
    let (toks, lex_errors) = lex(src);
    let mut p = Parser {
        toks,
        pos: 0,
        diags: lex_errors
            .into_iter()
            .map(|(m, s)| Diagnostic::error("syntax", m, s))
            .collect(),
        depth: 0,
    };
    let model = p.model();
    (model, p.diags)
}

/// Parses a single expression, as used on the command line and in tests.
pub fn parse_expr(src: &str) -> Result<Expr, Vec<Diagnostic>> {
    let (toks, lex_errors) = lex(src);
    let mut p = Parser {
        toks,
        pos: 0,
        diags: lex_errors
            .into_iter()
            .map(|(m, s)| Diagnostic::error("syntax", m, s))
            .collect(),
        depth: 0,
    };
    let e = p.expr();
    if e.is_ok() && p.peek() != &Tok::Eof {
        let t = p.toks[p.pos].clone();
        p.diags.push(Diagnostic::error(
            "syntax",
            format!("expected end of expression, found {}", t.tok),
            t.span,
        ));
    }
    match e {
        Ok(e) if p.diags.is_empty() => Ok(e),
        _ => Err(p.diags),
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
    depth: usize,
}

/// A syntax error has been recorded; unwind to the enclosing declaration.
struct Bail;

type PResult<T> = Result<T, Bail>;

fn is_top_keyword(t: &Tok) -> bool {
    matches!(
        t,
        Tok::Kw(Kw::Atom | Kw::Compound | Kw::Architecture | Kw::Property)
    )
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn at_kw(&self, k: Kw) -> bool {
        self.peek() == &Tok::Kw(k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: Kw) -> bool {
        if self.at_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn fail<T>(&mut self, expected: &str) -> PResult<T> {
        let t = &self.toks[self.pos];
        self.diags.push(Diagnostic::error(
            "syntax",
            format!("expected {expected}, found {}", t.tok),
            t.span,
        ));
        Err(Bail)
    }

    fn expect_sym(&mut self, s: &str) -> PResult<Span> {
        if self.at_sym(s) {
            Ok(self.bump().span)
        } else {
            self.fail(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: Kw) -> PResult<Span> {
        if self.at_kw(k) {
            Ok(self.bump().span)
        } else {
            self.fail(&format!("`{}`", k.text()))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.bump().span)),
            _ => self.fail("identifier"),
        }
    }

    fn path(&mut self) -> PResult<(Vec<String>, Span)> {
        let (first, start) = self.ident()?;
        let mut parts = vec![first];
        while self.at_sym(".") {
            self.bump();
            parts.push(self.ident()?.0);
        }
        Ok((parts, start.to(self.prev_span())))
    }

    fn ty(&mut self) -> PResult<Type> {
        if self.eat_kw(Kw::IntTy) {
            Ok(Type::Int)
        } else if self.eat_kw(Kw::BoolTy) {
            Ok(Type::Bool)
        } else {
            self.fail("`int` or `bool`")
        }
    }

    fn duplicate(&mut self, code: &'static str, what: &str, name: &str, span: Span) {
        self.diags.push(Diagnostic::error(
            code,
            format!("{what} `{name}` is declared twice"),
            span,
        ));
    }

    fn model(&mut self) -> Model {
        let mut m = Model::default();
        while self.peek() != &Tok::Eof {
            let start = self.pos;
            self.depth = 0;
            let ok = match self.peek() {
                Tok::Kw(Kw::Atom) => self.atom().map(|a| {
                    if let Some(a) = a {
                        m.atoms.push(a)
                    }
                }),
                Tok::Kw(Kw::Compound) => self.compound().map(|c| m.compounds.push(c)),
                Tok::Kw(Kw::Architecture) => self.architecture().map(|a| {
                    if let Some(a) = a {
                        m.architectures.push(a)
                    }
                }),
                Tok::Kw(Kw::Property) => self.property().map(|p| m.properties.push(p)),
                _ => self.fail("`atom`, `compound`, `architecture` or `property`"),
            };
            if ok.is_err() {
                // skip to the next declaration keyword
                if self.pos == start {
                    self.bump();
                }
                while self.peek() != &Tok::Eof && !is_top_keyword(self.peek()) {
                    self.bump();
                }
            }
        }
        m
    }

    fn atom(&mut self) -> PResult<Option<AtomType>> {
        let start = self.expect_kw(Kw::Atom)?;
        let (name, name_span) = self.ident()?;
        self.expect_sym("{")?;
        let mut ports: Vec<Port> = Vec::new();
        let mut vars: Vec<VarDecl> = Vec::new();
        let mut states: Vec<StateDecl> = Vec::new();
        let mut init: Option<Init> = None;
        let mut transitions = Vec::new();
        loop {
            match self.peek() {
                Tok::Sym("}") => break,
                Tok::Kw(Kw::Port) => {
                    let s = self.bump().span;
                    let (pname, pspan) = self.ident()?;
                    let mut pvars = Vec::new();
                    if self.eat_sym("(") {
                        if !self.at_sym(")") {
                            pvars.push(self.ident()?.0);
                            while self.eat_sym(",") {
                                pvars.push(self.ident()?.0);
                            }
                        }
                        self.expect_sym(")")?;
                    }
                    if ports.iter().any(|p| p.name == pname) {
                        self.duplicate("duplicate-port", "port", &pname, pspan);
                    } else {
                        ports.push(Port {
                            name: pname,
                            vars: pvars,
                            span: s.to(self.prev_span()),
                        });
                    }
                }
                Tok::Kw(Kw::Var) => {
                    let s = self.bump().span;
                    let ty = self.ty()?;
                    let (vname, vspan) = self.ident()?;
                    if vars.iter().any(|v| v.name == vname) {
                        self.duplicate("duplicate-var", "variable", &vname, vspan);
                    } else {
                        vars.push(VarDecl {
                            name: vname,
                            ty,
                            span: s.to(vspan),
                        });
                    }
                }
                Tok::Kw(Kw::State) => {
                    let s = self.bump().span;
                    let (sname, sspan) = self.ident()?;
                    if states.iter().any(|x| x.name == sname) {
                        self.duplicate("duplicate-state", "state", &sname, sspan);
                    } else {
                        states.push(StateDecl {
                            name: sname,
                            span: s.to(sspan),
                        });
                    }
                }
                Tok::Kw(Kw::Init) => {
                    let s = self.bump().span;
                    let guard = if self.eat_kw(Kw::Provided) {
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    let action = if self.eat_kw(Kw::Do) {
                        self.action()?
                    } else {
                        Vec::new()
                    };
                    self.expect_sym("->")?;
                    let (target, tspan) = self.ident()?;
                    if init.is_some() {
                        self.diags.push(Diagnostic::error(
                            "duplicate-init",
                            format!("atom `{name}` has more than one init"),
                            s,
                        ));
                    } else {
                        init = Some(Init {
                            guard,
                            action,
                            target,
                            span: s.to(tspan),
                        });
                    }
                }
                Tok::Kw(Kw::On) => {
                    let s = self.bump().span;
                    let (port, _) = self.ident()?;
                    self.expect_kw(Kw::From)?;
                    let (from, _) = self.ident()?;
                    self.expect_kw(Kw::To)?;
                    let (to, _) = self.ident()?;
                    let guard = if self.eat_kw(Kw::Provided) {
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    let action = if self.eat_kw(Kw::Do) {
                        self.action()?
                    } else {
                        Vec::new()
                    };
                    transitions.push(Transition {
                        port,
                        from,
                        to,
                        guard,
                        action,
                        span: s.to(self.prev_span()),
                    });
                }
                _ => return self.fail("`port`, `var`, `state`, `init`, `on` or `}`"),
            }
        }
        let end = self.bump().span;
        let Some(init) = init else {
            self.diags.push(Diagnostic::error(
                "missing-init",
                format!("atom `{name}` has no init"),
                name_span,
            ));
            return Ok(None);
        };
        Ok(Some(AtomType {
            name,
            ports,
            vars,
            states,
            init,
            transitions,
            span: start.to(end),
        }))
    }

    fn end(&mut self) -> PResult<End> {
        let (path, span) = self.path()?;
        let trigger = self.eat_sym("'");
        Ok(End {
            path,
            trigger,
            span: span.to(self.prev_span()),
        })
    }

    fn connector(&mut self) -> PResult<Connector> {
        let start = self.expect_kw(Kw::Connector)?;
        let (name, _) = self.ident()?;
        self.expect_sym("(")?;
        let mut ends = vec![self.end()?];
        while self.eat_sym(",") {
            ends.push(self.end()?);
        }
        self.expect_sym(")")?;
        let mut export = None;
        if self.at_kw(Kw::Export) {
            let s = self.bump().span;
            let (ename, _) = self.ident()?;
            let mut evars = Vec::new();
            if self.eat_sym("(") {
                while !self.at_sym(")") {
                    evars.push(self.ident()?.0);
                    self.eat_sym(",");
                }
                self.bump();
            }
            export = Some(ExportPort {
                name: ename,
                vars: evars,
                span: s.to(self.prev_span()),
            });
        }
        let mut vars = Vec::new();
        while self.at_kw(Kw::Var) {
            let s = self.bump().span;
            let ty = self.ty()?;
            let (vname, vspan) = self.ident()?;
            vars.push(VarDecl {
                name: vname,
                ty,
                span: s.to(vspan),
            });
        }
        let guard = if self.eat_kw(Kw::Provided) {
            Some(self.expr()?)
        } else {
            None
        };
        let up = if self.eat_kw(Kw::Up) {
            self.action()?
        } else {
            Vec::new()
        };
        let down = if self.eat_kw(Kw::Down) {
            self.action()?
        } else {
            Vec::new()
        };
        Ok(Connector {
            name,
            ends,
            export,
            vars,
            guard,
            up,
            down,
            span: start.to(self.prev_span()),
        })
    }

    fn pattern(&mut self) -> PResult<PriorityPattern> {
        let (connector, s) = self.ident()?;
        let mut mask = None;
        if self.eat_sym("[") {
            let mut m = vec![self.path()?.0];
            while self.eat_sym(",") {
                m.push(self.path()?.0);
            }
            self.expect_sym("]")?;
            mask = Some(m);
        }
        Ok(PriorityPattern {
            connector,
            mask,
            span: s.to(self.prev_span()),
        })
    }

    fn priority(&mut self) -> PResult<PriorityRule> {
        let s = self.expect_kw(Kw::Priority)?;
        let low = self.pattern()?;
        self.expect_sym("<")?;
        let high = self.pattern()?;
        Ok(PriorityRule {
            low,
            high,
            span: s.to(self.prev_span()),
        })
    }

    fn instance(&mut self, kw: Kw) -> PResult<Instance> {
        let s = self.expect_kw(kw)?;
        let (name, _) = self.ident()?;
        self.expect_sym(":")?;
        let (type_name, _) = self.ident()?;
        Ok(Instance {
            name,
            type_name,
            span: s.to(self.prev_span()),
        })
    }

    fn compound(&mut self) -> PResult<CompoundType> {
        let start = self.expect_kw(Kw::Compound)?;
        let (name, _) = self.ident()?;
        self.expect_sym("{")?;
        let mut c = CompoundType::empty(name);
        loop {
            match self.peek() {
                Tok::Sym("}") => break,
                Tok::Kw(Kw::Component) => {
                    let i = self.instance(Kw::Component)?;
                    c.instances.push(i);
                }
                Tok::Kw(Kw::Connector) => {
                    let k = self.connector()?;
                    c.connectors.push(k);
                }
                Tok::Kw(Kw::Priority) => {
                    let r = self.priority()?;
                    c.priorities.push(r);
                }
                Tok::Kw(Kw::Export) => {
                    let s = self.bump().span;
                    let (port, _) = self.ident()?;
                    c.exports.push(CompoundExport {
                        port,
                        span: s.to(self.prev_span()),
                    });
                }
                _ => return self.fail("`component`, `connector`, `priority`, `export` or `}`"),
            }
        }
        c.span = start.to(self.bump().span);
        Ok(c)
    }

    fn architecture(&mut self) -> PResult<Option<ArchitectureDef>> {
        let start = self.expect_kw(Kw::Architecture)?;
        let (name, name_span) = self.ident()?;
        self.expect_sym("{")?;
        let mut params = Vec::new();
        let mut coordinators = Vec::new();
        let mut connectors = Vec::new();
        let mut priorities = Vec::new();
        let mut property: Option<String> = None;
        loop {
            match self.peek() {
                Tok::Sym("}") => break,
                Tok::Kw(Kw::Param) => {
                    let s = self.bump().span;
                    let (pname, _) = self.ident()?;
                    self.expect_sym(":")?;
                    self.expect_sym("{")?;
                    let mut ports = vec![self.ident()?.0];
                    while self.eat_sym(",") {
                        ports.push(self.ident()?.0);
                    }
                    self.expect_sym("}")?;
                    params.push(ParamDecl {
                        name: pname,
                        ports,
                        span: s.to(self.prev_span()),
                    });
                }
                Tok::Kw(Kw::Coordinator) => coordinators.push(self.instance(Kw::Coordinator)?),
                Tok::Kw(Kw::Connector) => connectors.push(self.connector()?),
                Tok::Kw(Kw::Priority) => priorities.push(self.priority()?),
                Tok::Kw(Kw::Property) => {
                    let s = self.bump().span;
                    let (p, _) = self.ident()?;
                    if property.is_some() {
                        self.diags.push(Diagnostic::error(
                            "duplicate-property",
                            format!("architecture `{name}` names more than one property"),
                            s,
                        ));
                    } else {
                        property = Some(p);
                    }
                }
                _ => {
                    return self.fail(
                        "`param`, `coordinator`, `connector`, `priority`, `property` or `}`",
                    )
                }
            }
        }
        let end = self.bump().span;
        let Some(property) = property else {
            self.diags.push(Diagnostic::error(
                "missing-property",
                format!("architecture `{name}` has no characteristic property"),
                name_span,
            ));
            return Ok(None);
        };
        Ok(Some(ArchitectureDef {
            name,
            params,
            coordinators,
            connectors,
            priorities,
            property,
            span: start.to(end),
        }))
    }

    fn property(&mut self) -> PResult<PropertyDef> {
        let s = self.expect_kw(Kw::Property)?;
        let (name, _) = self.ident()?;
        self.expect_sym("{")?;
        let predicate = self.expr()?;
        let end = self.expect_sym("}")?;
        Ok(PropertyDef {
            name,
            predicate,
            span: s.to(end),
        })
    }

    fn action(&mut self) -> PResult<Action> {
        let mut out = vec![self.assign()?];
        while self.eat_sym(";") {
            out.push(self.assign()?);
        }
        Ok(out)
    }

    fn assign(&mut self) -> PResult<Assign> {
        let (path, span) = self.path()?;
        self.expect_sym(":=")?;
        let value = self.expr()?;
        Ok(Assign {
            target: VarRef { path, span },
            value,
        })
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else {
            return None;
        };
        Some(match *s {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Mod,
            _ => return None,
        })
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let span = self.span();
            self.diags.push(Diagnostic::error("syntax", "expression nested too deeply", span));
            return Err(Bail);
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min: u8) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        self.enter()?;
        let e = if self.at_sym("-") {
            self.bump();
            if let Tok::Int(v) = *self.peek() {
                self.bump();
                Expr::int((-(v as i128)) as i64)
            } else {
                Expr::unary(UnOp::Neg, self.unary()?)
            }
        } else if self.eat_sym("!") {
            Expr::unary(UnOp::Not, self.unary()?)
        } else {
            self.primary()?
        };
        self.depth -= 1;
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                let span = self.bump().span;
                if v > i64::MAX as u128 {
                    self.diags
                        .push(Diagnostic::error("syntax", "integer literal out of range", span));
                    return Err(Bail);
                }
                Ok(Expr::int(v as i64))
            }
            Tok::Kw(Kw::True) => {
                self.bump();
                Ok(Expr::bool(true))
            }
            Tok::Kw(Kw::False) => {
                self.bump();
                Ok(Expr::bool(false))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (path, span) = self.path()?;
                if self.eat_sym("@") {
                    let (state, s2) = self.ident()?;
                    Ok(Expr::InState(StateRef {
                        path,
                        state,
                        span: span.to(s2),
                    }))
                } else {
                    Ok(Expr::Var(VarRef { path, span }))
                }
            }
            _ => self.fail("expression"),
        }
    }
}
