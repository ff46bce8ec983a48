//! Random model generators and brute-force oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use bip_core::model::*;
use bip_core::textlang::parse;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const MODELS: &[(&str, &str)] = &[
    ("traffic_light", include_str!("../../../../models/traffic_light.bip")),
    ("mutex", include_str!("../../../../models/mutex.bip")),
    ("broken_mutex", include_str!("../../../../models/broken_mutex.bip")),
    ("payload_hk", include_str!("../../../../models/payload_hk.bip")),
    ("cubeth_reduced", include_str!("../../../../models/cubeth_reduced.bip")),
];

pub fn bundled(name: &str) -> Model {
    let src = MODELS.iter().find(|(n, _)| *n == name).expect("bundled model").1;
    let (m, d) = parse(src);
    assert!(d.is_empty(), "{name}: {d:?}");
    m
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---- syntactic models ------------------------------------------------------

fn name(r: &mut StdRng, prefix: &str) -> String {
    format!("{prefix}{}", r.gen_range(0..6))
}

fn path(r: &mut StdRng) -> Vec<String> {
    (0..r.gen_range(1..=3)).map(|_| name(r, "n")).collect()
}

fn sp() -> Span {
    Span::default()
}

pub fn expr(r: &mut StdRng, depth: u32) -> Expr {
    let leaf = depth == 0 || r.gen_bool(0.3);
    if leaf {
        return match r.gen_range(0..5) {
            0 => Expr::int(r.gen_range(-20..20)),
            1 => Expr::int(*[i64::MIN, i64::MAX, 0].choose(r).unwrap()),
            2 => Expr::bool(r.gen()),
            3 => Expr::Var(VarRef::new(path(r))),
            _ => Expr::InState(StateRef {
                path: path(r),
                state: name(r, "s"),
                span: sp(),
            }),
        };
    }
    if r.gen_bool(0.25) {
        let op = if r.gen() { UnOp::Neg } else { UnOp::Not };
        return Expr::unary(op, expr(r, depth - 1));
    }
    let ops = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::And,
        BinOp::Or,
    ];
    Expr::binary(*ops.choose(r).unwrap(), expr(r, depth - 1), expr(r, depth - 1))
}

fn action(r: &mut StdRng) -> Action {
    (0..r.gen_range(0..3))
        .map(|_| Assign {
            target: VarRef::new(path(r)),
            value: expr(r, 2),
        })
        .collect()
}

fn opt_expr(r: &mut StdRng) -> Option<Expr> {
    r.gen_bool(0.5).then(|| expr(r, 3))
}

/// Distinct names from `prefix0..prefixN`, at most `max` of them.
fn distinct(r: &mut StdRng, prefix: &str, min: usize, max: usize) -> Vec<String> {
    let mut all: Vec<String> = (0..8).map(|i| format!("{prefix}{i}")).collect();
    all.shuffle(r);
    all.truncate(r.gen_range(min..=max));
    all
}

fn connector(r: &mut StdRng) -> Connector {
    Connector {
        name: name(r, "c"),
        ends: (0..r.gen_range(1..4))
            .map(|_| End {
                path: path(r),
                trigger: r.gen(),
                span: sp(),
            })
            .collect(),
        export: r.gen_bool(0.3).then(|| ExportPort {
            name: name(r, "e"),
            vars: (0..r.gen_range(0..3)).map(|_| name(r, "v")).collect(),
            span: sp(),
        }),
        vars: (0..r.gen_range(0..2))
            .map(|_| VarDecl {
                name: name(r, "v"),
                ty: if r.gen() { Type::Int } else { Type::Bool },
                span: sp(),
            })
            .collect(),
        guard: opt_expr(r),
        up: action(r),
        down: action(r),
        span: sp(),
    }
}

fn pattern(r: &mut StdRng) -> PriorityPattern {
    PriorityPattern {
        connector: name(r, "c"),
        mask: r
            .gen_bool(0.3)
            .then(|| (0..r.gen_range(1..3)).map(|_| path(r)).collect()),
        span: sp(),
    }
}

fn priority(r: &mut StdRng) -> PriorityRule {
    PriorityRule {
        low: pattern(r),
        high: pattern(r),
        span: sp(),
    }
}

fn instance(r: &mut StdRng) -> Instance {
    Instance {
        name: name(r, "i"),
        type_name: name(r, "T"),
        span: sp(),
    }
}

/// A random model in abstract syntax. It need not be well-formed, but it
/// only uses shapes the parser keeps (one init, distinct atom members).
pub fn syntactic_model(r: &mut StdRng) -> Model {
    let mut m = Model::default();
    for _ in 0..r.gen_range(0..3) {
        let states = distinct(r, "s", 1, 3);
        m.atoms.push(AtomType {
            name: name(r, "A"),
            ports: distinct(r, "p", 0, 3)
                .into_iter()
                .map(|p| Port {
                    name: p,
                    vars: (0..r.gen_range(0..3)).map(|_| name(r, "v")).collect(),
                    span: sp(),
                })
                .collect(),
            vars: distinct(r, "v", 0, 3)
                .into_iter()
                .map(|v| VarDecl {
                    name: v,
                    ty: if r.gen() { Type::Int } else { Type::Bool },
                    span: sp(),
                })
                .collect(),
            states: states
                .iter()
                .map(|s| StateDecl {
                    name: s.clone(),
                    span: sp(),
                })
                .collect(),
            init: Init {
                guard: opt_expr(r),
                action: action(r),
                target: states[0].clone(),
                span: sp(),
            },
            transitions: (0..r.gen_range(0..4))
                .map(|_| Transition {
                    port: name(r, "p"),
                    from: states.choose(r).unwrap().clone(),
                    to: states.choose(r).unwrap().clone(),
                    guard: opt_expr(r),
                    action: action(r),
                    span: sp(),
                })
                .collect(),
            span: sp(),
        });
    }
    for _ in 0..r.gen_range(0..3) {
        m.compounds.push(CompoundType {
            name: name(r, "K"),
            instances: (0..r.gen_range(0..3)).map(|_| instance(r)).collect(),
            connectors: (0..r.gen_range(0..3)).map(|_| connector(r)).collect(),
            priorities: (0..r.gen_range(0..2)).map(|_| priority(r)).collect(),
            exports: (0..r.gen_range(0..2))
                .map(|_| CompoundExport {
                    port: name(r, "e"),
                    span: sp(),
                })
                .collect(),
            span: sp(),
        });
    }
    for _ in 0..r.gen_range(0..2) {
        m.properties.push(PropertyDef {
            name: name(r, "phi"),
            predicate: expr(r, 4),
            span: sp(),
        });
    }
    for _ in 0..r.gen_range(0..2) {
        m.architectures.push(ArchitectureDef {
            name: name(r, "arch"),
            params: (0..r.gen_range(0..3))
                .map(|_| ParamDecl {
                    name: name(r, "q"),
                    ports: (0..r.gen_range(1..3)).map(|_| name(r, "p")).collect(),
                    span: sp(),
                })
                .collect(),
            coordinators: (0..r.gen_range(0..2)).map(|_| instance(r)).collect(),
            connectors: (0..r.gen_range(0..3)).map(|_| connector(r)).collect(),
            priorities: (0..r.gen_range(0..2)).map(|_| priority(r)).collect(),
            property: name(r, "phi"),
            span: sp(),
        });
    }
    m
}

// ---- small well-formed systems ---------------------------------------------

/// Source of a random closed model with at most five atoms of at most four
/// control states each, bounded data, and a safety property `phi`.
pub fn small_system_source(r: &mut StdRng) -> String {
    let n = r.gen_range(1..=5);
    let mut src = String::new();
    let mut atoms = Vec::new();
    for a in 0..n {
        let states = r.gen_range(1..=4);
        let ports = r.gen_range(1..=3);
        let has_var = r.gen_bool(0.4);
        let pv = if has_var { "(x)" } else { "" };
        src.push_str(&format!("atom T{a} {{\n"));
        for p in 0..ports {
            src.push_str(&format!("  port p{p}{pv}\n"));
        }
        if has_var {
            src.push_str("  var int x\n");
        }
        for s in 0..states {
            src.push_str(&format!("  state s{s}\n"));
        }
        src.push_str("  init -> s0\n");
        for _ in 0..r.gen_range(1..=6) {
            let (p, f, t) = (
                r.gen_range(0..ports),
                r.gen_range(0..states),
                r.gen_range(0..states),
            );
            src.push_str(&format!("  on p{p} from s{f} to s{t}"));
            if has_var && r.gen_bool(0.4) {
                let g = ["x < 2", "x != 1", "x == 0"].choose(r).unwrap();
                src.push_str(&format!(" provided {g}"));
            }
            if has_var && r.gen_bool(0.5) {
                src.push_str(" do x := (x + 1) % 3");
            }
            src.push('\n');
        }
        src.push_str("}\n\n");
        atoms.push((states, ports, has_var));
    }
    src.push_str("compound Sys {\n");
    for a in 0..n {
        src.push_str(&format!("  component i{a} : T{a}\n"));
    }
    let conns = r.gen_range(1..=5);
    for c in 0..conns {
        let mut members: Vec<usize> = (0..n).collect();
        members.shuffle(r);
        members.truncate(r.gen_range(1..=n.min(3)));
        let ends: Vec<String> = members
            .iter()
            .map(|&a| {
                let trig = if r.gen_bool(0.3) { "'" } else { "" };
                format!("i{a}.p{}{trig}", r.gen_range(0..atoms[a].1))
            })
            .collect();
        src.push_str(&format!("  connector c{c}({})", ends.join(", ")));
        let first = members[0];
        if atoms[first].2 && r.gen_bool(0.3) {
            src.push_str(&format!(" provided i{first}.x != 2"));
        }
        src.push('\n');
    }
    for _ in 0..r.gen_range(0..=2) {
        let a = r.gen_range(0..conns);
        let b = r.gen_range(0..conns);
        if a < b {
            src.push_str(&format!("  priority c{a} < c{b}\n"));
        }
    }
    src.push_str("}\n\n");
    let a = r.gen_range(0..n);
    let b = r.gen_range(0..n);
    let sa = r.gen_range(0..atoms[a].0);
    let sb = r.gen_range(0..atoms[b].0);
    src.push_str(&format!("property phi {{ !(i{a}@s{sa} && i{b}@s{sb}) }}\n"));
    src
}

// ---- architectures -----------------------------------------------------------

/// A model declaring three architectures `A0..A2` over a shared pool of
/// parameters, each with random coordinators, glue and priorities.
pub fn architecture_source(r: &mut StdRng) -> String {
    let pool = ["t0", "t1", "t2"];
    let iface = ["a", "b", "c"];
    let mut src = String::new();
    let mut archs = String::new();
    for k in 0..3 {
        let mut params: Vec<&str> = pool.to_vec();
        params.shuffle(r);
        params.truncate(r.gen_range(1..=3));
        params.sort();
        let coords = r.gen_range(0..=2);
        let mut ports: Vec<String> = Vec::new();
        for p in &params {
            for i in iface {
                ports.push(format!("{p}.{i}"));
            }
        }
        let mut body = String::new();
        for p in &params {
            body.push_str(&format!("  param {p} : {{a, b, c}}\n"));
        }
        for j in 0..coords {
            let ty = format!("Coord{k}_{j}");
            src.push_str(&format!(
                "atom {ty} {{ port q0 port q1 state w state z init -> w \
                 on q0 from w to z on q1 from z to w }}\n"
            ));
            body.push_str(&format!("  coordinator K{j} : {ty}\n"));
            ports.push(format!("K{j}.q0"));
            ports.push(format!("K{j}.q1"));
        }
        let mut seen = BTreeSet::new();
        let mut names = Vec::new();
        for c in 0..r.gen_range(1..=4) {
            let mut ends = ports.clone();
            ends.shuffle(r);
            ends.truncate(r.gen_range(1..=ports.len().min(3)));
            ends.sort();
            if !seen.insert(ends.clone()) {
                continue;
            }
            let marked: Vec<String> = ends
                .iter()
                .map(|e| if r.gen_bool(0.2) { format!("{e}'") } else { e.clone() })
                .collect();
            body.push_str(&format!("  connector g{c}({})\n", marked.join(", ")));
            names.push(format!("g{c}"));
        }
        if names.len() > 1 && r.gen_bool(0.5) {
            body.push_str(&format!("  priority {} < {}\n", names[0], names[1]));
        }
        body.push_str(&format!("  property phi{k}\n"));
        let pred = if coords > 0 { "!K0@z || true" } else { "true" };
        src.push_str(&format!("property phi{k} {{ {pred} }}\n"));
        archs.push_str(&format!("architecture A{k} {{\n{body}}}\n"));
    }
    src + &archs
}

// ---- oracles -----------------------------------------------------------------

/// Interactions of a flat connector over ports `a`, `b`, `c`, by definition:
/// every nonempty subset if some end is a trigger and the subset contains
/// one, otherwise only the full set.
pub fn flat_interactions(triggers: &[bool; 3]) -> BTreeSet<String> {
    let labels = ['a', 'b', 'c'];
    let mut out = BTreeSet::new();
    for mask in 1u8..8 {
        let subset: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let ok = if triggers.iter().any(|&t| t) {
            subset.iter().any(|&i| triggers[i])
        } else {
            subset.len() == 3
        };
        if ok {
            out.insert(subset.iter().map(|&i| labels[i]).collect());
        }
    }
    out
}

/// Reachable (task1, task2, coordinator) control states of the two-task
/// mutex, computed from its rules: `bXt` needs the task asleep and the
/// coordinator free, `fXr` the task working and the coordinator taken.
pub fn mutex_reachable() -> HashSet<(bool, bool, bool)> {
    // (task1 works, task2 works, coordinator taken)
    let start = (false, false, false);
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some((w1, w2, taken)) = queue.pop_front() {
        let mut next = Vec::new();
        if !w1 && !taken {
            next.push((true, w2, true));
        }
        if !w2 && !taken {
            next.push((w1, true, true));
        }
        if w1 && taken {
            next.push((false, w2, false));
        }
        if w2 && taken {
            next.push((w1, false, false));
        }
        for s in next {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
    }
    seen
}

/// Reachable traffic-light states under "switch whenever possible": the
/// timer ticks while `t < n`; at `t >= n` the light advances and hands the
/// following phase's duration to the timer.
pub fn traffic_light_reachable() -> usize {
    // (t, n, d, phase, m); m is the duration the light will hand over next
    let next_m = [56, 60, 4];
    let start = (0i64, 60i64, 0i64, 0usize, 4i64);
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some((t, n, d, phase, m)) = queue.pop_front() {
        let succ = if t >= n {
            let d = m;
            (0, d, 0, (phase + 1) % 3, next_m[phase])
        } else {
            (t + 1, n, d, phase, m)
        };
        if seen.insert(succ) {
            queue.push_back(succ);
        }
    }
    seen.len()
}
