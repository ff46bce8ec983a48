//! Interaction sets of connectors, enabledness on a configuration, and
//! execution of one interaction (up-flow, down-flow, atom transitions).

use std::collections::BTreeSet;

use crate::model::{eval, EvalError, Value};
use crate::system::{
    AtomId, ConnAssign, ConnExpr, ConnVar, Configuration, EndKind, InteractionId, LocalExpr,
    NodeId, System,
};

/// The interactions a connector defines, as sets of `instance.port` labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionSet {
    pub connector: String,
    pub members: BTreeSet<BTreeSet<String>>,
}

pub fn enumerate_interactions(sys: &System, node: NodeId) -> InteractionSet {
    InteractionSet {
        connector: sys.nodes[node].name.clone(),
        members: sys
            .interaction_labels(node)
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
    }
}

/// An enabled interaction with the connector variable values its up-flow
/// produced, per participating node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundInteraction {
    pub id: InteractionId,
    pub values: Vec<(NodeId, Vec<Value>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FireError {
    #[error("evaluation failed in `{connector}`: {error}")]
    Eval { connector: String, error: EvalError },
    #[error("no transition of `{atom}` on port `{port}` is enabled after the down-flow")]
    NoEnabledTransition { atom: String, port: String },
}

/// Why an interaction cannot fire in a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Disabled {
    /// A participant offers no transition with a true guard.
    Port,
    /// A connector guard evaluated to false.
    Guard,
    /// A guard or up-flow failed to evaluate.
    Error(EvalError),
}

/// Scratch values of the connector variables during one firing, indexed
/// by node. Non-participating nodes keep their defaults.
pub(crate) struct Scratch {
    pub vals: Vec<Vec<Value>>,
}

impl Scratch {
    pub fn new(sys: &System) -> Self {
        Scratch {
            vals: sys
                .nodes
                .iter()
                .map(|n| System::default_vars(&n.vars))
                .collect(),
        }
    }
}

fn read(
    sys: &System,
    node: NodeId,
    atoms: &Configuration,
    scratch: &Scratch,
    v: ConnVar,
) -> Value {
    match v {
        ConnVar::Own(i) => scratch.vals[node][i],
        ConnVar::End { end, var } => match sys.nodes[node].ends[end].kind {
            EndKind::Port { atom, .. } => atoms.atoms[atom].vars[var],
            EndKind::Node(child) => scratch.vals[child][var],
        },
    }
}

fn eval_conn(
    sys: &System,
    node: NodeId,
    cfg: &Configuration,
    scratch: &Scratch,
    e: &ConnExpr,
) -> Result<Value, EvalError> {
    eval(
        e,
        &|v: &ConnVar| Ok(read(sys, node, cfg, scratch, *v)),
        &|s| match *s {},
    )
}

pub(crate) fn eval_local(e: &LocalExpr, vars: &[Value]) -> Result<Value, EvalError> {
    eval(e, &|&i: &usize| Ok(vars[i]), &|s| match *s {})
}

fn guard_holds(e: &Option<LocalExpr>, vars: &[Value]) -> Result<bool, EvalError> {
    match e {
        None => Ok(true),
        Some(g) => eval_local(g, vars)?.as_bool(),
    }
}

/// True if every end this assignment touches takes part.
fn applies(a: &ConnAssign, member: &[Option<usize>]) -> bool {
    a.ends.iter().all(|&e| member[e].is_some())
}

/// Runs reset and up-flow for interaction `id` and checks every connector
/// guard on the way up.
pub(crate) fn up_flow(
    sys: &System,
    cfg: &Configuration,
    id: InteractionId,
    scratch: &mut Scratch,
) -> Result<bool, (String, EvalError)> {
    let inter = &sys.interactions[id];
    for &(n, _) in &inter.nodes {
        for (slot, (_, ty)) in scratch.vals[n].iter_mut().zip(&sys.nodes[n].vars) {
            *slot = Value::default_for(*ty);
        }
    }
    for &(n, m) in &inter.nodes {
        let node = &sys.nodes[n];
        let member = &node.members[m];
        let err = |e| (node.name.clone(), e);
        for a in &node.up {
            if !applies(a, member) {
                continue;
            }
            let v = eval_conn(sys, n, cfg, scratch, &a.value).map_err(err)?;
            if let ConnVar::Own(i) = a.target {
                scratch.vals[n][i] = v;
            }
        }
        if let Some(g) = &node.guard {
            if !eval_conn(sys, n, cfg, scratch, g)
                .and_then(Value::as_bool)
                .map_err(err)?
            {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Each participant offers a transition on its port whose guard holds on
/// the current valuation.
pub(crate) fn ports_ready(
    sys: &System,
    cfg: &Configuration,
    id: InteractionId,
) -> Result<bool, EvalError> {
    for &(a, p) in &sys.interactions[id].participants {
        let atom = &sys.atoms[a];
        let st = &cfg.atoms[a];
        let mut any = false;
        for &t in &atom.offers[st.state][p] {
            if guard_holds(&atom.transitions[t].guard, &st.vars)? {
                any = true;
                break;
            }
        }
        if !any {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Decides whether interaction `id` is enabled in `cfg`.
pub fn check_enabled(
    sys: &System,
    cfg: &Configuration,
    id: InteractionId,
) -> Result<BoundInteraction, Disabled> {
    match ports_ready(sys, cfg, id) {
        Ok(true) => {}
        Ok(false) => return Err(Disabled::Port),
        Err(e) => return Err(Disabled::Error(e)),
    }
    let mut scratch = Scratch::new(sys);
    match up_flow(sys, cfg, id, &mut scratch) {
        Ok(true) => Ok(BoundInteraction {
            id,
            values: sys.interactions[id]
                .nodes
                .iter()
                .map(|&(n, _)| (n, scratch.vals[n].clone()))
                .collect(),
        }),
        Ok(false) => Err(Disabled::Guard),
        Err((_, e)) => Err(Disabled::Error(e)),
    }
}

/// All enabled interactions in interaction order, before priority filtering.
/// Interactions whose guard or up-flow fails to evaluate are left out.
pub fn enabled_interactions(sys: &System, cfg: &Configuration) -> Vec<BoundInteraction> {
    let mut out = Vec::new();
    for id in 0..sys.interactions.len() {
        match check_enabled(sys, cfg, id) {
            Ok(b) => out.push(b),
            Err(Disabled::Error(e)) => {
                let i = &sys.interactions[id];
                log::warn!(
                    "interaction {} of `{}` disabled: {e}",
                    sys.port_labels(i).join("+"),
                    sys.nodes[i.top].name
                );
            }
            Err(_) => {}
        }
    }
    out
}

/// Executes interaction `id`: up-flow, down-flow, then one transition per
/// participant. On error `cfg` is left as it was.
pub fn fire(sys: &System, cfg: &Configuration, id: InteractionId) -> Result<Configuration, FireError> {
    let mut scratch = Scratch::new(sys);
    let mut next = cfg.clone();
    fire_into(sys, &mut next, id, &mut scratch)?;
    Ok(next)
}

pub(crate) fn fire_into(
    sys: &System,
    cfg: &mut Configuration,
    id: InteractionId,
    scratch: &mut Scratch,
) -> Result<(), FireError> {
    let inter = &sys.interactions[id];
    up_flow(sys, cfg, id, scratch)
        .map_err(|(connector, error)| FireError::Eval { connector, error })?;
    for &(n, m) in inter.nodes.iter().rev() {
        let node = &sys.nodes[n];
        let member = &node.members[m];
        for a in &node.down {
            if !applies(a, member) {
                continue;
            }
            let v = eval_conn(sys, n, cfg, scratch, &a.value).map_err(|error| FireError::Eval {
                connector: node.name.clone(),
                error,
            })?;
            match a.target {
                ConnVar::Own(i) => scratch.vals[n][i] = v,
                ConnVar::End { end, var } => match node.ends[end].kind {
                    EndKind::Port { atom, .. } => cfg.atoms[atom].vars[var] = v,
                    EndKind::Node(child) => scratch.vals[child][var] = v,
                },
            }
        }
    }
    let connector = &sys.nodes[inter.top].name;
    for &(a, p) in &inter.participants {
        step_atom(sys, cfg, a, p).map_err(|e| match e {
            None => FireError::NoEnabledTransition {
                atom: sys.atoms[a].path.clone(),
                port: sys.atoms[a].ports[p].name.clone(),
            },
            Some(error) => FireError::Eval {
                connector: connector.clone(),
                error,
            },
        })?;
    }
    Ok(())
}

/// Takes the first transition on `port` whose guard holds; `Err(None)` when
/// there is none.
fn step_atom(
    sys: &System,
    cfg: &mut Configuration,
    a: AtomId,
    port: usize,
) -> Result<(), Option<EvalError>> {
    let atom = &sys.atoms[a];
    let st = &mut cfg.atoms[a];
    for &t in &atom.offers[st.state][port] {
        let tr = &atom.transitions[t];
        if guard_holds(&tr.guard, &st.vars).map_err(Some)? {
            for asg in &tr.action {
                let v = eval_local(&asg.value, &st.vars).map_err(Some)?;
                st.vars[asg.target] = v;
            }
            st.state = tr.to;
            return Ok(());
        }
    }
    Err(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textlang::parse;

    fn system(src: &str) -> System {
        let (m, d) = parse(src);
        assert!(d.is_empty(), "{d:?}");
        System::build(&m).unwrap()
    }

    fn config(sys: &System, states: &[&str]) -> Configuration {
        Configuration {
            atoms: sys
                .atoms
                .iter()
                .zip(states)
                .map(|(a, s)| crate::system::AtomState {
                    state: a.state_index(s).unwrap(),
                    vars: System::default_vars(&a.vars),
                })
                .collect(),
        }
    }

    const PAIR: &str = "atom A { port p(v) var int v state s init -> s \
                        on p from s to s do v := v + 1 } \
                        compound C { component a : A component b : A \
                        connector k(a.p, b.p') var int x up x := a.v + b.v \
                        down a.v := x * 10; b.v := x }";

    #[test]
    fn skipped_assignments_for_absent_ends() {
        let sys = system(PAIR);
        let mut cfg = config(&sys, &["s", "s"]);
        cfg.atoms[0].vars[0] = Value::Int(2);
        cfg.atoms[1].vars[0] = Value::Int(3);
        let mut out = Vec::new();
        for id in 0..sys.interactions.len() {
            out.push((sys.port_labels(&sys.interactions[id]), fire(&sys, &cfg, id).unwrap()));
        }
        let b_alone = out.iter().find(|(l, _)| l == &["b.p"]).unwrap();
        // x := a.v + b.v refers to the absent a, so x stays 0 and b.v := 0
        assert_eq!(b_alone.1.atoms[0], cfg.atoms[0]);
        assert_eq!(b_alone.1.atoms[1].vars[0], Value::Int(1));
        let both = out.iter().find(|(l, _)| l.len() == 2).unwrap();
        assert_eq!(both.1.atoms[0].vars[0], Value::Int(51));
        assert_eq!(both.1.atoms[1].vars[0], Value::Int(6));
    }

    #[test]
    fn division_by_zero_disables_and_fire_is_transactional() {
        let sys = system(
            "atom A { port p(v) var int v state s init -> s on p from s to s } \
             compound C { component a : A connector k(a.p) var int x up x := 1 / a.v }",
        );
        let cfg = config(&sys, &["s"]);
        assert!(enabled_interactions(&sys, &cfg).is_empty());
        let before = cfg.clone();
        assert!(matches!(fire(&sys, &cfg, 0), Err(FireError::Eval { .. })));
        assert_eq!(cfg, before);
    }

    #[test]
    fn guard_recheck_after_down_flow() {
        let sys = system(
            "atom A { port p(v) var int v state s state t init -> s \
             on p from s to t provided v == 0 } \
             compound C { component a : A connector k(a.p) down a.v := 1 }",
        );
        let cfg = config(&sys, &["s"]);
        assert_eq!(enabled_interactions(&sys, &cfg).len(), 1);
        assert!(matches!(
            fire(&sys, &cfg, 0),
            Err(FireError::NoEnabledTransition { .. })
        ));
    }

    #[test]
    fn first_declared_transition_wins() {
        let sys = system(
            "atom A { port p var int v state s state t state u init -> s \
             on p from s to t on p from s to u } \
             compound C { component a : A connector k(a.p) }",
        );
        let cfg = config(&sys, &["s"]);
        let next = fire(&sys, &cfg, 0).unwrap();
        assert_eq!(sys.atoms[0].states[next.atoms[0].state], "t");
    }
}
