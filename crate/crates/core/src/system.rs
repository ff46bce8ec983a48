//! Instantiation of a root compound into flat, index-based runtime tables.
//!
//! Atom instances are identified by their dotted instance path and stored in
//! path order, which is also the canonical order of configurations. Connectors
//! become nodes of a forest; the roots of that forest (connectors that are not
//! an end of another connector) are the ones that define interactions.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::fmt;

use crate::model::validate::{resolve_end, EndTarget};
use crate::model::{
    self, validate_model, Action, AtomType, CompoundType, Diagnostic, Expr, Model, PropertyDef,
    Span, StateRef, Type, Value, VarRef,
};

pub type AtomId = usize;
pub type NodeId = usize;
pub type InteractionId = usize;

/// Atom-local expression: variables are indices into the atom's variables.
pub type LocalExpr = Expr<usize, Infallible>;
pub type LocalAction = Action<usize, Infallible>;

#[derive(Clone, Debug)]
pub struct PortInfo {
    pub name: String,
    pub vars: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CompiledTransition {
    pub from: usize,
    pub port: usize,
    pub guard: Option<LocalExpr>,
    pub action: LocalAction,
    pub to: usize,
}

#[derive(Clone, Debug)]
pub struct AtomInstance {
    pub path: String,
    pub type_name: String,
    pub states: Vec<String>,
    pub vars: Vec<(String, Type)>,
    pub ports: Vec<PortInfo>,
    pub init_guard: Option<LocalExpr>,
    pub init_action: LocalAction,
    pub init_target: usize,
    pub transitions: Vec<CompiledTransition>,
    /// `offers[state][port]`: transition indices in declaration order.
    pub offers: Vec<Vec<Vec<usize>>>,
}

impl AtomInstance {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|(n, _)| n == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn port_label(&self, port: usize) -> String {
        format!("{}.{}", self.path, self.ports[port].name)
    }
}

/// A variable reference inside a connector's guard or dataflow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConnVar {
    Own(usize),
    /// Variable `var` of end `end`: an atom variable index for port ends, the
    /// child connector's own variable index for nested ends.
    End { end: usize, var: usize },
}

pub type ConnExpr = Expr<ConnVar, Infallible>;

#[derive(Clone, Debug)]
pub struct ConnAssign {
    pub target: ConnVar,
    pub value: ConnExpr,
    /// Ends read or written by this assignment; it only executes when all
    /// of them take part in the interaction.
    pub ends: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndKind {
    Port { atom: AtomId, port: usize },
    Node(NodeId),
}

#[derive(Clone, Debug)]
pub struct NodeEnd {
    pub kind: EndKind,
    pub trigger: bool,
    pub label: String,
}

/// One way of taking part in a connector: per end, `None` when the end is
/// absent, otherwise `Some(0)` for a port end or `Some(k)` for member `k` of
/// the child connector.
pub type Member = Vec<Option<usize>>;

#[derive(Clone, Debug)]
pub struct ConnectorNode {
    pub name: String,
    pub ends: Vec<NodeEnd>,
    pub vars: Vec<(String, Type)>,
    pub guard: Option<ConnExpr>,
    pub up: Vec<ConnAssign>,
    pub down: Vec<ConnAssign>,
    pub parent: Option<NodeId>,
    pub members: Vec<Member>,
}

/// A structural interaction of a top-level connector.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub top: NodeId,
    pub member: usize,
    /// Participating (atom, port) pairs in atom order.
    pub participants: Vec<(AtomId, usize)>,
    /// Participating nodes with their member index, children before parents.
    pub nodes: Vec<(NodeId, usize)>,
    /// Participating end indices of the top connector.
    pub mask: Vec<usize>,
    /// Index into the top connector's masked priority patterns, if one matches.
    pub pattern: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct Priorities {
    /// Transitive closure between top connectors: `less[a]` holds every
    /// connector strictly preferred over `a`.
    pub less: HashMap<NodeId, Vec<NodeId>>,
    /// Per connector, the masks appearing in within-connector rules and the
    /// closure between them (`mask_less[node][i]` are the patterns above `i`).
    pub masks: HashMap<NodeId, Vec<Vec<usize>>>,
    pub mask_less: HashMap<NodeId, Vec<Vec<usize>>>,
}

impl Priorities {
    pub fn is_empty(&self) -> bool {
        self.less.is_empty() && self.masks.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct System {
    pub name: String,
    pub atoms: Vec<AtomInstance>,
    pub nodes: Vec<ConnectorNode>,
    pub top: Vec<NodeId>,
    pub interactions: Vec<Interaction>,
    pub priorities: Priorities,
}

#[derive(Debug, thiserror::Error)]
#[error("model is not well-formed:\n{}", render(.0))]
pub struct BuildError(pub Vec<Diagnostic>);

fn render(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// Upper bound on the interactions one connector may define.
pub const MAX_MEMBERS: usize = 1 << 16;

impl System {
    /// Validates `model` and instantiates its root compound. A model without
    /// compounds yields the empty system.
    pub fn build(model: &Model) -> Result<System, BuildError> {
        match model.root() {
            Some(root) => {
                let root = root.clone();
                Self::build_root(model, &root)
            }
            None => {
                let diags = validate_model(model);
                if model::has_errors(&diags) {
                    return Err(BuildError(diags));
                }
                Self::build_root(model, &CompoundType::empty("main"))
            }
        }
    }

    pub fn build_root(model: &Model, root: &CompoundType) -> Result<System, BuildError> {
        let diags = validate_model(model);
        if model::has_errors(&diags) {
            return Err(BuildError(diags));
        }
        let mut b = Builder {
            model,
            atoms: Vec::new(),
            nodes: Vec::new(),
            rules: Vec::new(),
        };
        b.instantiate(root, "")?;
        b.finish(root.name.clone())
    }

    pub fn atom_by_path(&self, path: &str) -> Option<AtomId> {
        self.atoms
            .binary_search_by(|a| a.path.as_str().cmp(path))
            .ok()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Port labels (`instance.port`) of `i`, in atom order.
    pub fn port_labels(&self, i: &Interaction) -> Vec<String> {
        i.participants
            .iter()
            .map(|&(a, p)| self.atoms[a].port_label(p))
            .collect()
    }

    /// True if `low` is strictly dominated by `high` under the priority order.
    pub fn dominated(&self, low: InteractionId, high: InteractionId) -> bool {
        if low == high {
            return false;
        }
        let (l, h) = (&self.interactions[low], &self.interactions[high]);
        if l.top != h.top {
            return self
                .priorities
                .less
                .get(&l.top)
                .is_some_and(|above| above.contains(&h.top));
        }
        match (l.pattern, h.pattern) {
            (Some(a), Some(b)) => self
                .priorities
                .mask_less
                .get(&l.top)
                .is_some_and(|m| m[a].contains(&b)),
            _ => false,
        }
    }

    /// The interaction set of connector `node` as sets of port labels.
    pub fn interaction_labels(&self, node: NodeId) -> Vec<Vec<String>> {
        (0..self.nodes[node].members.len())
            .map(|m| {
                let mut ps = Vec::new();
                let mut ns = Vec::new();
                self.unfold(node, m, &mut ps, &mut ns);
                ps.sort();
                ps.iter().map(|&(a, p)| self.atoms[a].port_label(p)).collect()
            })
            .collect()
    }

    fn unfold(
        &self,
        node: NodeId,
        member: usize,
        ports: &mut Vec<(AtomId, usize)>,
        nodes: &mut Vec<(NodeId, usize)>,
    ) {
        let n = &self.nodes[node];
        for (end, choice) in n.ends.iter().zip(&n.members[member]) {
            match (end.kind, choice) {
                (_, None) => {}
                (EndKind::Port { atom, port }, Some(_)) => ports.push((atom, port)),
                (EndKind::Node(child), Some(k)) => self.unfold(child, *k, ports, nodes),
            }
        }
        nodes.push((node, member));
    }

    pub fn default_vars(vars: &[(String, Type)]) -> Vec<Value> {
        vars.iter().map(|(_, t)| Value::default_for(*t)).collect()
    }

    /// Compiles a property predicate against this system's instance paths.
    pub fn compile_property(&self, prop: &PropertyDef) -> Result<SafetyProperty, String> {
        let predicate = prop.predicate.map_refs(
            &mut |r: &VarRef| -> Result<(AtomId, usize), String> {
                let (prefix, var) = r.path.split_at(r.path.len().saturating_sub(1));
                let a = self
                    .atom_by_path(&prefix.join("."))
                    .ok_or_else(|| format!("no atom `{}`", prefix.join(".")))?;
                let v = self.atoms[a]
                    .var_index(&var[0])
                    .ok_or_else(|| format!("no variable `{}`", r.dotted()))?;
                Ok((a, v))
            },
            &mut |s: &StateRef| -> Result<(AtomId, usize), String> {
                let path = s.path.join(".");
                let a = self
                    .atom_by_path(&path)
                    .ok_or_else(|| format!("no atom `{path}`"))?;
                let st = self.atoms[a]
                    .state_index(&s.state)
                    .ok_or_else(|| format!("atom `{path}` has no state `{}`", s.state))?;
                Ok((a, st))
            },
        )?;
        Ok(SafetyProperty {
            name: prop.name.clone(),
            predicate,
        })
    }
}

/// A state predicate compiled against a system.
#[derive(Clone, Debug)]
pub struct SafetyProperty {
    pub name: String,
    pub predicate: Expr<(AtomId, usize), (AtomId, usize)>,
}

impl SafetyProperty {
    pub fn always_true() -> Self {
        SafetyProperty {
            name: "true".into(),
            predicate: Expr::bool(true),
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} atoms, {} connectors, {} interactions",
            self.name,
            self.atoms.len(),
            self.top.len(),
            self.interactions.len()
        )
    }
}

struct RawRule {
    scope: String,
    low: model::PriorityPattern,
    high: model::PriorityPattern,
}

struct Builder<'m> {
    model: &'m Model,
    atoms: Vec<AtomInstance>,
    nodes: Vec<PendingNode<'m>>,
    rules: Vec<RawRule>,
}

struct PendingNode<'m> {
    name: String,
    scope: &'m CompoundType,
    prefix: String,
    conn: &'m model::Connector,
    ends: Vec<(End2, bool, String)>,
}

enum End2 {
    Atom(String, String),
    /// Qualified name of the child connector.
    Node(String),
}

fn internal(msg: impl Into<String>) -> BuildError {
    BuildError(vec![Diagnostic::error("internal", msg, Span::default())])
}

impl<'m> Builder<'m> {
    fn instantiate(&mut self, c: &'m CompoundType, prefix: &str) -> Result<(), BuildError> {
        for inst in &c.instances {
            match self.model.component_type(&inst.type_name) {
                Some(model::TypeRef::Atom(a)) => {
                    let atom = compile_atom(a, format!("{prefix}{}", inst.name))?;
                    self.atoms.push(atom);
                }
                Some(model::TypeRef::Compound(sub)) => {
                    self.instantiate(sub, &format!("{prefix}{}.", inst.name))?;
                }
                None => return Err(internal(format!("unknown type `{}`", inst.type_name))),
            }
        }
        for conn in &c.connectors {
            let mut ends = Vec::new();
            for end in &conn.ends {
                let t = resolve_end(self.model, c, end).map_err(internal)?;
                let kind = match t {
                    EndTarget::AtomPort { instance, port, .. } => {
                        End2::Atom(format!("{prefix}{}", instance.name), port.name.clone())
                    }
                    EndTarget::SubExport {
                        instance, connector, ..
                    } => End2::Node(format!("{prefix}{}.{}", instance.name, connector.name)),
                    EndTarget::Local { connector } => {
                        End2::Node(format!("{prefix}{}", connector.name))
                    }
                };
                ends.push((kind, end.trigger, end.dotted()));
            }
            self.nodes.push(PendingNode {
                name: format!("{prefix}{}", conn.name),
                scope: c,
                prefix: prefix.to_string(),
                conn,
                ends,
            });
        }
        for r in &c.priorities {
            self.rules.push(RawRule {
                scope: prefix.to_string(),
                low: r.low.clone(),
                high: r.high.clone(),
            });
        }
        Ok(())
    }

    fn finish(mut self, name: String) -> Result<System, BuildError> {
        self.atoms.sort_by(|a, b| a.path.cmp(&b.path));
        let atom_ix: HashMap<&str, AtomId> = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.path.as_str(), i))
            .collect();
        let node_ix: HashMap<String, NodeId> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.clone(), i))
            .collect();

        let mut nodes: Vec<ConnectorNode> = Vec::with_capacity(self.nodes.len());
        for p in &self.nodes {
            let mut ends = Vec::new();
            for (kind, trigger, label) in &p.ends {
                let kind = match kind {
                    End2::Atom(path, port) => {
                        let a = *atom_ix.get(path.as_str()).ok_or_else(|| internal(path.clone()))?;
                        let pi = self.atoms[a]
                            .ports
                            .iter()
                            .position(|x| &x.name == port)
                            .ok_or_else(|| internal(port.clone()))?;
                        EndKind::Port { atom: a, port: pi }
                    }
                    End2::Node(q) => EndKind::Node(*node_ix.get(q).ok_or_else(|| internal(q.clone()))?),
                };
                ends.push(NodeEnd {
                    kind,
                    trigger: *trigger,
                    label: label.clone(),
                });
            }
            nodes.push(ConnectorNode {
                name: p.name.clone(),
                ends,
                vars: p.conn.vars.iter().map(|v| (v.name.clone(), v.ty)).collect(),
                guard: None,
                up: Vec::new(),
                down: Vec::new(),
                parent: None,
                members: Vec::new(),
            });
        }
        for i in 0..nodes.len() {
            for e in 0..nodes[i].ends.len() {
                if let EndKind::Node(child) = nodes[i].ends[e].kind {
                    nodes[child].parent = Some(i);
                }
            }
        }
        // dataflow, resolved against end tables
        for (i, p) in self.nodes.iter().enumerate() {
            let conn = p.conn;
            let node = &nodes[i];
            let resolve = |r: &VarRef| -> Result<ConnVar, BuildError> {
                if let [v] = r.path.as_slice() {
                    return conn
                        .vars
                        .iter()
                        .position(|d| &d.name == v)
                        .map(ConnVar::Own)
                        .ok_or_else(|| internal(format!("connector var {v}")));
                }
                let (prefix, var) = r.path.split_at(r.path.len() - 1);
                let e = conn
                    .ends
                    .iter()
                    .position(|e| e.var_prefix() == prefix)
                    .ok_or_else(|| internal(format!("end {}", prefix.join("."))))?;
                let v = match node.ends[e].kind {
                    EndKind::Port { atom, .. } => self.atoms[atom].var_index(&var[0]),
                    EndKind::Node(child) => nodes[child].vars.iter().position(|(n, _)| n == &var[0]),
                };
                Ok(ConnVar::End {
                    end: e,
                    var: v.ok_or_else(|| internal(r.dotted()))?,
                })
            };
            let compile_expr = |e: &Expr| -> Result<ConnExpr, BuildError> {
                e.map_refs(&mut |r| resolve(r), &mut |_| Err(internal("state test in connector")))
            };
            let compile_action = |a: &Action| -> Result<Vec<ConnAssign>, BuildError> {
                a.iter()
                    .map(|asg| {
                        let target = resolve(&asg.target)?;
                        let value = compile_expr(&asg.value)?;
                        let mut ends = Vec::new();
                        if let ConnVar::End { end, .. } = target {
                            ends.push(end);
                        }
                        value.visit_vars(&mut |v| {
                            if let ConnVar::End { end, .. } = v {
                                ends.push(*end);
                            }
                        });
                        ends.sort_unstable();
                        ends.dedup();
                        Ok(ConnAssign { target, value, ends })
                    })
                    .collect()
            };
            let guard = conn.guard.as_ref().map(compile_expr).transpose()?;
            let up = compile_action(&conn.up)?;
            let down = compile_action(&conn.down)?;
            let _ = (&p.scope, &p.prefix);
            nodes[i].guard = guard;
            nodes[i].up = up;
            nodes[i].down = down;
        }

        // members, children first
        let mut done = vec![false; nodes.len()];
        for i in 0..nodes.len() {
            compute_members(&mut nodes, i, &mut done)?;
        }

        let top: Vec<NodeId> = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        let priorities = self.priorities(&nodes)?;

        let mut sys = System {
            name,
            atoms: std::mem::take(&mut self.atoms),
            nodes,
            top,
            interactions: Vec::new(),
            priorities,
        };
        let mut interactions = Vec::new();
        for &t in &sys.top {
            for m in 0..sys.nodes[t].members.len() {
                let mut participants = Vec::new();
                let mut ns = Vec::new();
                sys.unfold(t, m, &mut participants, &mut ns);
                participants.sort_unstable();
                let mask: Vec<usize> = sys.nodes[t].members[m]
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| c.map(|_| i))
                    .collect();
                let pattern = sys
                    .priorities
                    .masks
                    .get(&t)
                    .and_then(|ms| ms.iter().position(|x| *x == mask));
                interactions.push(Interaction {
                    top: t,
                    member: m,
                    participants,
                    nodes: ns,
                    mask,
                    pattern,
                });
            }
        }
        sys.interactions = interactions;
        Ok(sys)
    }

    fn priorities(&self, nodes: &[ConnectorNode]) -> Result<Priorities, BuildError> {
        let find = |scope: &str, name: &str| -> Result<NodeId, BuildError> {
            let q = format!("{scope}{name}");
            nodes
                .iter()
                .position(|n| n.name == q)
                .ok_or_else(|| internal(format!("priority connector {q}")))
        };
        let mut direct: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut masks: HashMap<NodeId, Vec<Vec<usize>>> = HashMap::new();
        let mut mask_edges: HashMap<NodeId, Vec<(usize, usize)>> = HashMap::new();
        for r in &self.rules {
            let lo = find(&r.scope, &r.low.connector)?;
            let hi = find(&r.scope, &r.high.connector)?;
            if lo != hi {
                direct.entry(lo).or_default().push(hi);
                continue;
            }
            let node = &nodes[lo];
            let mut to_mask = |m: &Option<Vec<Vec<String>>>| -> usize {
                let mut idx: Vec<usize> = m
                    .iter()
                    .flatten()
                    .filter_map(|p| {
                        let label = p.join(".");
                        node.ends.iter().position(|e| e.label == label)
                    })
                    .collect();
                idx.sort_unstable();
                idx.dedup();
                let list = masks.entry(lo).or_default();
                match list.iter().position(|x| *x == idx) {
                    Some(i) => i,
                    None => {
                        list.push(idx);
                        list.len() - 1
                    }
                }
            };
            let a = to_mask(&r.low.mask);
            let b = to_mask(&r.high.mask);
            mask_edges.entry(lo).or_default().push((a, b));
        }
        let mut less = HashMap::new();
        for &start in direct.keys() {
            let mut seen = vec![false; nodes.len()];
            let mut stack = direct[&start].clone();
            let mut out = Vec::new();
            while let Some(n) = stack.pop() {
                if std::mem::replace(&mut seen[n], true) {
                    continue;
                }
                out.push(n);
                if let Some(next) = direct.get(&n) {
                    stack.extend(next);
                }
            }
            out.sort_unstable();
            less.insert(start, out);
        }
        let mut mask_less = HashMap::new();
        for (node, list) in &masks {
            let edges = &mask_edges[node];
            let closure: Vec<Vec<usize>> = (0..list.len())
                .map(|start| {
                    let mut seen = vec![false; list.len()];
                    let mut stack: Vec<usize> =
                        edges.iter().filter(|e| e.0 == start).map(|e| e.1).collect();
                    while let Some(n) = stack.pop() {
                        if !std::mem::replace(&mut seen[n], true) {
                            stack.extend(edges.iter().filter(|e| e.0 == n).map(|e| e.1));
                        }
                    }
                    (0..list.len()).filter(|&i| seen[i]).collect()
                })
                .collect();
            mask_less.insert(*node, closure);
        }
        Ok(Priorities {
            less,
            masks,
            mask_less,
        })
    }
}

fn compute_members(
    nodes: &mut [ConnectorNode],
    i: NodeId,
    done: &mut [bool],
) -> Result<(), BuildError> {
    if done[i] {
        return Ok(());
    }
    let children: Vec<NodeId> = nodes[i]
        .ends
        .iter()
        .filter_map(|e| match e.kind {
            EndKind::Node(c) => Some(c),
            _ => None,
        })
        .collect();
    for c in children {
        compute_members(nodes, c, done)?;
    }
    // options per end: the ways the end can take part when present
    let options: Vec<usize> = nodes[i]
        .ends
        .iter()
        .map(|e| match e.kind {
            EndKind::Port { .. } => 1,
            EndKind::Node(c) => nodes[c].members.len(),
        })
        .collect();
    let triggers: Vec<bool> = nodes[i].ends.iter().map(|e| e.trigger).collect();
    let members = enumerate_members(&options, &triggers);
    if members.len() > MAX_MEMBERS {
        return Err(BuildError(vec![Diagnostic::error(
            "too-many-interactions",
            format!("connector `{}` defines more than {MAX_MEMBERS} interactions", nodes[i].name),
            Span::default(),
        )]));
    }
    nodes[i].members = members;
    done[i] = true;
    Ok(())
}

/// The flat rule applied over ends whose present alternatives are counted in
/// `options`: with only synchrons every end takes part; otherwise every
/// combination in which at least one trigger takes part.
pub fn enumerate_members(options: &[usize], triggers: &[bool]) -> Vec<Member> {
    let n = options.len();
    let any_trigger = triggers.iter().any(|t| *t);
    let mut out = Vec::new();
    // choice digits: 0 = absent, k = present with alternative k-1
    let mut digits = vec![0usize; n];
    if !any_trigger {
        digits.iter_mut().for_each(|d| *d = 1);
    }
    if options.contains(&0) && !any_trigger {
        return out;
    }
    loop {
        let present_trigger = (0..n).any(|i| digits[i] > 0 && triggers[i]);
        let all_present = digits.iter().all(|&d| d > 0);
        if (any_trigger && present_trigger) || (!any_trigger && all_present) {
            out.push(digits.iter().map(|&d| d.checked_sub(1)).collect());
        }
        // odometer increment; synchron-only connectors never use digit 0
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            let lo = if any_trigger { 0 } else { 1 };
            if digits[i] < options[i] {
                digits[i] += 1;
                break;
            }
            digits[i] = lo;
            i += 1;
        }
        if out.len() > MAX_MEMBERS {
            return out;
        }
    }
}

pub(crate) fn compile_atom(a: &AtomType, path: String) -> Result<AtomInstance, BuildError> {
    let vars: Vec<(String, Type)> = a.vars.iter().map(|v| (v.name.clone(), v.ty)).collect();
    let states: Vec<String> = a.states.iter().map(|s| s.name.clone()).collect();
    let var = |r: &VarRef| -> Result<usize, BuildError> {
        a.vars
            .iter()
            .position(|v| r.path.len() == 1 && v.name == r.path[0])
            .ok_or_else(|| internal(format!("variable {}", r.dotted())))
    };
    let expr = |e: &Expr| -> Result<LocalExpr, BuildError> {
        e.map_refs(&mut |r| var(r), &mut |_| Err(internal("state test in atom")))
    };
    let action = |act: &Action| -> Result<LocalAction, BuildError> {
        act.iter()
            .map(|x| {
                Ok(model::Assign {
                    target: var(&x.target)?,
                    value: expr(&x.value)?,
                })
            })
            .collect()
    };
    let state = |s: &str| {
        states
            .iter()
            .position(|x| x == s)
            .ok_or_else(|| internal(format!("state {s}")))
    };
    let ports: Vec<PortInfo> = a
        .ports
        .iter()
        .map(|p| {
            Ok(PortInfo {
                name: p.name.clone(),
                vars: p
                    .vars
                    .iter()
                    .map(|v| var(&VarRef::new([v.as_str()])))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect::<Result<_, BuildError>>()?;
    let mut transitions = Vec::new();
    for t in &a.transitions {
        transitions.push(CompiledTransition {
            from: state(&t.from)?,
            port: a
                .ports
                .iter()
                .position(|p| p.name == t.port)
                .ok_or_else(|| internal(format!("port {}", t.port)))?,
            guard: t.guard.as_ref().map(expr).transpose()?,
            action: action(&t.action)?,
            to: state(&t.to)?,
        });
    }
    let mut offers = vec![vec![Vec::new(); ports.len()]; states.len()];
    for (i, t) in transitions.iter().enumerate() {
        offers[t.from][t.port].push(i);
    }
    Ok(AtomInstance {
        path,
        type_name: a.name.clone(),
        init_guard: a.init.guard.as_ref().map(expr).transpose()?,
        init_action: action(&a.init.action)?,
        init_target: state(&a.init.target)?,
        states,
        vars,
        ports,
        transitions,
        offers,
    })
}

/// The control state and variable valuation of one atom instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomState {
    pub state: usize,
    pub vars: Vec<Value>,
}

/// A global configuration: one entry per atom instance, in path order. The
/// derived equality and hash serve as the canonical state encoding.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub atoms: Vec<AtomState>,
}

impl Configuration {
    pub fn in_state(&self, atom: AtomId, state: usize) -> bool {
        self.atoms[atom].state == state
    }

    /// Human-readable rendering: `path@state{var=value,...}` per atom.
    pub fn describe(&self, sys: &System) -> String {
        let mut parts = Vec::new();
        for (a, st) in sys.atoms.iter().zip(&self.atoms) {
            let mut s = format!("{}@{}", a.path, a.states[st.state]);
            if !st.vars.is_empty() {
                let vals: Vec<String> = a
                    .vars
                    .iter()
                    .zip(&st.vars)
                    .map(|((n, _), v)| format!("{n}={v}"))
                    .collect();
                s.push_str(&format!("{{{}}}", vals.join(",")));
            }
            parts.push(s);
        }
        parts.join(" ")
    }
}

impl SafetyProperty {
    pub fn holds(&self, cfg: &Configuration) -> Result<bool, model::EvalError> {
        model::eval(
            &self.predicate,
            &|&(a, v): &(AtomId, usize)| Ok(cfg.atoms[a].vars[v]),
            &|&(a, s): &(AtomId, usize)| Ok(cfg.atoms[a].state == s),
        )?
        .as_bool()
    }
}
