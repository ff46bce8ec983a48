use std::fmt::Write;

use crate::model::*;

const WIDTH: usize = 80;

/// Canonical text for `m`. Declarations appear in the order atoms,
/// compounds, properties, architectures; members within a block follow a
/// fixed order.
pub fn pretty_print(m: &Model) -> String {
    let mut blocks = Vec::new();
    for a in &m.atoms {
        blocks.push(block(&format!("atom {}", a.name), atom_members(a)));
    }
    for c in &m.compounds {
        blocks.push(block(&format!("compound {}", c.name), compound_members(c)));
    }
    for p in &m.properties {
        blocks.push(block(&format!("property {}", p.name), vec![print_expr(&p.predicate)]));
    }
    for a in &m.architectures {
        blocks.push(block(&format!("architecture {}", a.name), arch_members(a)));
    }
    let mut out = blocks.join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

fn block(head: &str, members: Vec<String>) -> String {
    let one = if members.is_empty() {
        format!("{head} {{ }}")
    } else {
        format!("{head} {{ {} }}", members.join(" "))
    };
    if one.len() <= WIDTH && !one.contains('\n') {
        return one;
    }
    let mut s = format!("{head} {{\n");
    for m in members {
        let _ = writeln!(s, "  {m}");
    }
    s.push('}');
    s
}

fn atom_members(a: &AtomType) -> Vec<String> {
    let mut out = Vec::new();
    for p in &a.ports {
        if p.vars.is_empty() {
            out.push(format!("port {}", p.name));
        } else {
            out.push(format!("port {}({})", p.name, p.vars.join(", ")));
        }
    }
    for v in &a.vars {
        out.push(format!("var {} {}", v.ty, v.name));
    }
    for s in &a.states {
        out.push(format!("state {}", s.name));
    }
    let mut init = "init".to_string();
    if let Some(g) = &a.init.guard {
        let _ = write!(init, " provided {}", print_expr(g));
    }
    if !a.init.action.is_empty() {
        let _ = write!(init, " do {}", print_action(&a.init.action));
    }
    let _ = write!(init, " -> {}", a.init.target);
    out.push(init);
    for t in &a.transitions {
        let mut s = format!("on {} from {} to {}", t.port, t.from, t.to);
        if let Some(g) = &t.guard {
            let _ = write!(s, " provided {}", print_expr(g));
        }
        if !t.action.is_empty() {
            let _ = write!(s, " do {}", print_action(&t.action));
        }
        out.push(s);
    }
    out
}

pub fn print_connector(c: &Connector) -> String {
    let ends: Vec<String> = c
        .ends
        .iter()
        .map(|e| format!("{}{}", e.dotted(), if e.trigger { "'" } else { "" }))
        .collect();
    let mut s = format!("connector {}({})", c.name, ends.join(", "));
    if let Some(x) = &c.export {
        let _ = write!(s, " export {}", x.name);
        if !x.vars.is_empty() {
            let _ = write!(s, "({})", x.vars.join(" "));
        }
    }
    for v in &c.vars {
        let _ = write!(s, " var {} {}", v.ty, v.name);
    }
    if let Some(g) = &c.guard {
        let _ = write!(s, " provided {}", print_expr(g));
    }
    if !c.up.is_empty() {
        let _ = write!(s, " up {}", print_action(&c.up));
    }
    if !c.down.is_empty() {
        let _ = write!(s, " down {}", print_action(&c.down));
    }
    s
}

fn print_priority(r: &PriorityRule) -> String {
    format!("priority {} < {}", r.low, r.high)
}

fn compound_members(c: &CompoundType) -> Vec<String> {
    let mut out = Vec::new();
    for i in &c.instances {
        out.push(format!("component {} : {}", i.name, i.type_name));
    }
    // Compound exports go before the connectors: after a connector without
    // trailing clauses, `export` would bind to that connector.
    for e in &c.exports {
        out.push(format!("export {}", e.port));
    }
    out.extend(c.connectors.iter().map(print_connector));
    out.extend(c.priorities.iter().map(print_priority));
    out
}

fn arch_members(a: &ArchitectureDef) -> Vec<String> {
    let mut out = Vec::new();
    for p in &a.params {
        out.push(format!("param {} : {{{}}}", p.name, p.ports.join(", ")));
    }
    for c in &a.coordinators {
        out.push(format!("coordinator {} : {}", c.name, c.type_name));
    }
    out.extend(a.connectors.iter().map(print_connector));
    out.extend(a.priorities.iter().map(print_priority));
    out.push(format!("property {}", a.property));
    out
}

pub fn print_action(a: &Action) -> String {
    a.iter()
        .map(|x| format!("{} := {}", x.target.dotted(), print_expr(&x.value)))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Prints with the fewest parentheses that re-parse to the same tree.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

const UNARY_LEVEL: u8 = 6;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        _ => UNARY_LEVEL,
    }
}

fn write_expr(s: &mut String, e: &Expr) {
    match e {
        Expr::Const(v) => {
            let _ = write!(s, "{v}");
        }
        Expr::Var(r) => s.push_str(&r.dotted()),
        Expr::InState(r) => {
            let _ = write!(s, "{}@{}", r.path.join("."), r.state);
        }
        Expr::Unary(op, inner) => {
            s.push_str(match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            });
            // `-5` would re-parse as a constant
            let literal = matches!(**inner, Expr::Const(Value::Int(_)));
            if level(inner) < UNARY_LEVEL || (*op == UnOp::Neg && literal) {
                s.push('(');
                write_expr(s, inner);
                s.push(')');
            } else {
                write_expr(s, inner);
            }
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            wrap(s, l, level(l) < p);
            let _ = write!(s, " {} ", op.symbol());
            wrap(s, r, level(r) <= p);
        }
    }
}

fn wrap(s: &mut String, e: &Expr, paren: bool) {
    if paren {
        s.push('(');
    }
    write_expr(s, e);
    if paren {
        s.push(')');
    }
}
