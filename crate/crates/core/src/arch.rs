//! Property-enforcing architectures: coordinators plus glue over parameter
//! interfaces, their composition, and application to operand components.
//!
//! An architecture is kept in a canonical form built from ordered maps and
//! sets, so structural equality ignores declaration order.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    self, validate_model, ArchitectureDef, AtomType, BinOp, CompoundType, Connector, End, Expr,
    Instance, Model, PriorityPattern, PriorityRule, PropertyDef, Span, StateRef, TypeRef, VarDecl,
    VarRef,
};
use crate::engine::InitError;
use crate::system::{BuildError, System};
use crate::verify::{check_deadlock, check_safety, explore, Limits, Status, Verdict};

/// (origin architecture, local name).
pub type Key = (String, String);

/// A port an architecture can see: one of an operand's, by parameter name,
/// or one of a coordinator's.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortId {
    Operand { param: String, port: String },
    Coordinator { coordinator: Key, port: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// Names of the architectures this one was composed from.
    pub names: BTreeSet<String>,
    pub params: BTreeMap<String, BTreeSet<String>>,
    pub coordinators: BTreeMap<Key, AtomType>,
    /// Ports whose interactions this architecture restricts.
    pub controlled: BTreeSet<PortId>,
    /// Connector definitions by (origin, name); glue connectors are built
    /// from these.
    pub fragments: BTreeMap<Key, Connector>,
    /// Each glue connector is the set of fragments it merges.
    pub glue: BTreeSet<BTreeSet<Key>>,
    /// Priorities between fragments: low before high.
    pub priorities: BTreeSet<(Key, Key)>,
    /// Characteristic property conjuncts by (origin, property name).
    pub property: BTreeMap<Key, Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ArchError {
    #[error("architecture `{0}` is not declared")]
    UnknownArchitecture(String),
    #[error("architecture `{arch}` is malformed: {message}")]
    Invalid { arch: String, message: String },
    #[error("expected {expected} operands, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("operand for `{param}` lacks ports {missing:?}")]
    InterfaceMismatch { param: String, missing: Vec<String> },
    #[error("component type `{0}` is not declared")]
    UnknownOperand(String),
    #[error("parameter `{0}` is declared with different interfaces")]
    ParameterInterfaceConflict(String),
    #[error("conflicting definitions of {0}")]
    DefinitionConflict(String),
    #[error("the composed model is not well-formed:\n{0}")]
    IllFormed(String),
}

fn invalid(arch: &str, message: impl Into<String>) -> ArchError {
    ArchError::Invalid {
        arch: arch.to_string(),
        message: message.into(),
    }
}

impl Architecture {
    /// Reads architecture `name` from `model`.
    pub fn from_model(model: &Model, name: &str) -> Result<Self, ArchError> {
        let def = model
            .architecture(name)
            .ok_or_else(|| ArchError::UnknownArchitecture(name.to_string()))?;
        Self::from_def(model, def)
    }

    pub fn from_def(model: &Model, def: &ArchitectureDef) -> Result<Self, ArchError> {
        let origin = &def.name;
        let key = |n: &str| (origin.clone(), n.to_string());
        let mut params = BTreeMap::new();
        for p in &def.params {
            if params
                .insert(p.name.clone(), p.ports.iter().cloned().collect::<BTreeSet<_>>())
                .is_some()
            {
                return Err(invalid(origin, format!("parameter `{}` declared twice", p.name)));
            }
        }
        let mut coordinators = BTreeMap::new();
        let mut controlled = BTreeSet::new();
        for c in &def.coordinators {
            let atom = model
                .atom(&c.type_name)
                .ok_or_else(|| invalid(origin, format!("coordinator type `{}` is not an atom", c.type_name)))?;
            if params.contains_key(&c.name) {
                return Err(invalid(origin, format!("`{}` is both parameter and coordinator", c.name)));
            }
            for p in &atom.ports {
                controlled.insert(PortId::Coordinator {
                    coordinator: key(&c.name),
                    port: p.name.clone(),
                });
            }
            if coordinators.insert(key(&c.name), atom.clone()).is_some() {
                return Err(invalid(origin, format!("coordinator `{}` declared twice", c.name)));
            }
        }
        let mut fragments = BTreeMap::new();
        let mut glue = BTreeSet::new();
        let mut seen_ports = BTreeSet::new();
        for conn in &def.connectors {
            let mut ports = BTreeSet::new();
            for e in &conn.ends {
                let id = resolve_port(origin, &params, &coordinators, e)?;
                if let PortId::Operand { .. } = &id {
                    controlled.insert(id.clone());
                }
                ports.insert(id);
            }
            if !seen_ports.insert(ports) {
                return Err(invalid(
                    origin,
                    format!("connector `{}` repeats the ports of another connector", conn.name),
                ));
            }
            if fragments.insert(key(&conn.name), conn.clone()).is_some() {
                return Err(invalid(origin, format!("connector `{}` declared twice", conn.name)));
            }
            glue.insert(BTreeSet::from([key(&conn.name)]));
        }
        let mut priorities = BTreeSet::new();
        for r in &def.priorities {
            if r.low.mask.is_some() || r.high.mask.is_some() {
                return Err(invalid(origin, "priorities relate whole connectors"));
            }
            for c in [&r.low.connector, &r.high.connector] {
                if !fragments.contains_key(&key(c)) {
                    return Err(invalid(origin, format!("priority names unknown connector `{c}`")));
                }
            }
            priorities.insert((key(&r.low.connector), key(&r.high.connector)));
        }
        let prop = model
            .property(&def.property)
            .ok_or_else(|| invalid(origin, format!("property `{}` is not declared", def.property)))?;
        Ok(Architecture {
            names: BTreeSet::from([origin.clone()]),
            params,
            coordinators,
            controlled,
            fragments,
            glue,
            priorities,
            property: BTreeMap::from([(key(&def.property), prop.predicate.clone())]),
        })
    }

    fn fragment_ports(&self, k: &Key) -> BTreeSet<PortId> {
        let conn = &self.fragments[k];
        conn.ends
            .iter()
            .filter_map(|e| resolve_port(&k.0, &self.params, &self.coordinators, e).ok())
            .collect()
    }

    /// Ports of a glue connector.
    pub fn glue_ports(&self, g: &BTreeSet<Key>) -> BTreeSet<PortId> {
        g.iter().flat_map(|k| self.fragment_ports(k)).collect()
    }
}

fn resolve_port(
    origin: &str,
    params: &BTreeMap<String, BTreeSet<String>>,
    coordinators: &BTreeMap<Key, AtomType>,
    e: &End,
) -> Result<PortId, ArchError> {
    let [inst, port] = e.path.as_slice() else {
        return Err(invalid(origin, format!("end `{}` is not `instance.port`", e.dotted())));
    };
    if let Some(ps) = params.get(inst) {
        if !ps.contains(port) {
            return Err(invalid(origin, format!("`{port}` is not in the interface of `{inst}`")));
        }
        return Ok(PortId::Operand {
            param: inst.clone(),
            port: port.clone(),
        });
    }
    let k = (origin.to_string(), inst.clone());
    match coordinators.get(&k) {
        Some(a) if a.port(port).is_some() => Ok(PortId::Coordinator {
            coordinator: k,
            port: port.clone(),
        }),
        Some(_) => Err(invalid(origin, format!("coordinator `{inst}` has no port `{port}`"))),
        None => Err(invalid(origin, format!("`{inst}` is neither parameter nor coordinator"))),
    }
}

fn union_maps<K: Ord + Clone + std::fmt::Debug, V: PartialEq + Clone>(
    a: &BTreeMap<K, V>,
    b: &BTreeMap<K, V>,
    what: &str,
) -> Result<BTreeMap<K, V>, ArchError> {
    let mut out = a.clone();
    for (k, v) in b {
        match out.get(k) {
            Some(existing) if existing != v => {
                return Err(ArchError::DefinitionConflict(format!("{what} {k:?}")))
            }
            Some(_) => {}
            None => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    Ok(out)
}

/// The composition `a ⊕ b`. Glue connectors are paired when they agree on
/// the ports both architectures control; a connector touching no port of
/// the other side is kept on its own.
pub fn compose(a: &Architecture, b: &Architecture) -> Result<Architecture, ArchError> {
    let mut params = a.params.clone();
    for (k, v) in &b.params {
        match params.get(k) {
            Some(x) if x != v => return Err(ArchError::ParameterInterfaceConflict(k.clone())),
            Some(_) => {}
            None => {
                params.insert(k.clone(), v.clone());
            }
        }
    }
    let coordinators = union_maps(&a.coordinators, &b.coordinators, "coordinator")?;
    let fragments = union_maps(&a.fragments, &b.fragments, "connector")?;
    let property = union_maps(&a.property, &b.property, "property")?;

    let empty = BTreeSet::new();
    let side = |arch: &Architecture| -> Vec<(BTreeSet<Key>, BTreeSet<PortId>)> {
        std::iter::once((empty.clone(), BTreeSet::new()))
            .chain(arch.glue.iter().map(|g| (g.clone(), arch.glue_ports(g))))
            .collect()
    };
    let (ga, gb) = (side(a), side(b));
    let mut glue = BTreeSet::new();
    for (g1, p1) in &ga {
        let seen_by_b: BTreeSet<&PortId> = p1.intersection(&b.controlled).collect();
        for (g2, p2) in &gb {
            let seen_by_a: BTreeSet<&PortId> = p2.intersection(&a.controlled).collect();
            if seen_by_a == seen_by_b {
                let g: BTreeSet<Key> = g1.union(g2).cloned().collect();
                if !g.is_empty() {
                    glue.insert(g);
                }
            }
        }
    }
    Ok(Architecture {
        names: a.names.union(&b.names).cloned().collect(),
        params,
        coordinators,
        controlled: a.controlled.union(&b.controlled).cloned().collect(),
        fragments,
        glue,
        priorities: a.priorities.union(&b.priorities).cloned().collect(),
        property,
    })
}

/// Result of applying an architecture: a model whose root compound is the
/// coordinated system, and the characteristic property over it.
#[derive(Clone, Debug)]
pub struct Application {
    pub model: Model,
    pub root: String,
    pub property: PropertyDef,
    /// Parameter name to operand type.
    pub binding: BTreeMap<String, String>,
}

impl Architecture {
    fn composite(&self) -> bool {
        self.names.len() > 1
    }

    /// Instance name of a coordinator in applied models.
    pub fn coordinator_instance(&self, k: &Key) -> String {
        if self.composite() {
            format!("{}_{}", k.1, k.0)
        } else {
            k.1.clone()
        }
    }

    fn fragment_label(&self, k: &Key) -> String {
        let clash = self.fragments.keys().filter(|o| o.1 == k.1).count() > 1;
        if clash {
            format!("{}_{}", k.1, k.0)
        } else {
            k.1.clone()
        }
    }

    /// Name given to a glue connector in applied models.
    pub fn glue_name(&self, g: &BTreeSet<Key>) -> String {
        g.iter()
            .map(|k| self.fragment_label(k))
            .collect::<Vec<_>>()
            .join("__")
    }

    pub fn property_name(&self) -> String {
        self.property
            .keys()
            .map(|k| k.1.clone())
            .collect::<Vec<_>>()
            .join("_and_")
    }

    fn rename_path(&self, origin: &str, path: &[String]) -> Vec<String> {
        let mut out = path.to_vec();
        if let Some(first) = out.first_mut() {
            let k = (origin.to_string(), first.clone());
            if self.coordinators.contains_key(&k) {
                *first = self.coordinator_instance(&k);
            }
        }
        out
    }

    /// Rewrites a fragment expression: coordinator prefixes become instance
    /// names and, in merged connectors, own variables get the fragment prefix.
    fn rename_expr(&self, k: &Key, own: &dyn Fn(&str) -> Option<String>, e: &Expr) -> Expr {
        e.map_refs::<_, _, std::convert::Infallible>(
            &mut |r: &VarRef| {
                let path = match r.path.as_slice() {
                    [v] => vec![own(v).unwrap_or_else(|| v.clone())],
                    p => self.rename_path(&k.0, p),
                };
                Ok(VarRef { path, span: r.span })
            },
            &mut |s: &StateRef| {
                Ok(StateRef {
                    path: self.rename_path(&k.0, &s.path),
                    state: s.state.clone(),
                    span: s.span,
                })
            },
        )
        .unwrap_or_else(|e| match e {})
    }

    /// The connector realizing glue connector `g`.
    pub fn realize(&self, g: &BTreeSet<Key>) -> Connector {
        let merged = g.len() > 1;
        let mut ends: Vec<End> = Vec::new();
        let mut vars = Vec::new();
        let mut guard: Option<Expr> = None;
        let mut up = Vec::new();
        let mut down = Vec::new();
        let trigger_everywhere = |path: &[String]| {
            g.iter().all(|k| {
                self.fragments[k].ends.iter().all(|e| {
                    self.rename_path(&k.0, &e.path) != path || e.trigger
                })
            })
        };
        for k in g {
            let frag = &self.fragments[k];
            let label = self.fragment_label(k);
            let own = |v: &str| -> Option<String> {
                frag.var(v)
                    .map(|_| if merged { format!("{label}_{v}") } else { v.to_string() })
            };
            for e in &frag.ends {
                let path = self.rename_path(&k.0, &e.path);
                if !ends.iter().any(|x| x.path == path) {
                    ends.push(End {
                        trigger: trigger_everywhere(&path),
                        path,
                        span: Span::default(),
                    });
                }
            }
            for v in &frag.vars {
                vars.push(VarDecl {
                    name: own(&v.name).expect("declared"),
                    ty: v.ty,
                    span: Span::default(),
                });
            }
            if let Some(gd) = &frag.guard {
                let gd = self.rename_expr(k, &own, gd);
                guard = Some(match guard {
                    None => gd,
                    Some(prev) => Expr::binary(BinOp::And, prev, gd),
                });
            }
            let action = |a: &model::Action| -> model::Action {
                a.iter()
                    .map(|x| model::Assign {
                        target: match self.rename_expr(k, &own, &Expr::Var(x.target.clone())) {
                            Expr::Var(v) => v,
                            _ => unreachable!("variables rename to variables"),
                        },
                        value: self.rename_expr(k, &own, &x.value),
                    })
                    .collect()
            };
            up.extend(action(&frag.up));
            down.extend(action(&frag.down));
        }
        Connector {
            name: self.glue_name(g),
            ends,
            export: None,
            vars,
            guard,
            up,
            down,
            span: Span::default(),
        }
    }

    /// Conjunction of the property conjuncts over applied instance names.
    pub fn property_expr(&self) -> Expr {
        let mut out: Option<Expr> = None;
        for (k, e) in &self.property {
            let e = self.rename_expr(k, &|_| None, e);
            out = Some(match out {
                None => e,
                Some(prev) => Expr::binary(BinOp::And, prev, e),
            });
        }
        out.unwrap_or(Expr::bool(true))
    }

    /// Builds `A[C1, ..., Cn]`: operands bind to parameters in sorted
    /// parameter order; instances are named after their parameter.
    pub fn apply(&self, model: &Model, operands: &[&str]) -> Result<Application, ArchError> {
        if operands.len() != self.params.len() {
            return Err(ArchError::ArityMismatch {
                expected: self.params.len(),
                got: operands.len(),
            });
        }
        let mut out = Model::default();
        let mut binding = BTreeMap::new();
        let mut root = CompoundType::empty(self.root_name());
        for ((param, iface), &op) in self.params.iter().zip(operands) {
            let offered: BTreeSet<String> = match model.component_type(op) {
                Some(TypeRef::Atom(a)) => a.ports.iter().map(|p| p.name.clone()).collect(),
                Some(TypeRef::Compound(c)) => c.exports.iter().map(|e| e.port.clone()).collect(),
                None => return Err(ArchError::UnknownOperand(op.to_string())),
            };
            let missing: Vec<String> = iface.difference(&offered).cloned().collect();
            if !missing.is_empty() {
                return Err(ArchError::InterfaceMismatch {
                    param: param.clone(),
                    missing,
                });
            }
            copy_type(model, op, &mut out)?;
            binding.insert(param.clone(), op.to_string());
            root.instances.push(Instance {
                name: param.clone(),
                type_name: op.to_string(),
                span: Span::default(),
            });
        }
        for (k, atom) in &self.coordinators {
            add_atom(&mut out, atom)?;
            root.instances.push(Instance {
                name: self.coordinator_instance(k),
                type_name: atom.name.clone(),
                span: Span::default(),
            });
        }
        let mut owners: BTreeMap<&Key, Vec<String>> = BTreeMap::new();
        for g in &self.glue {
            let c = self.realize(g);
            for k in g {
                owners.entry(k).or_default().push(c.name.clone());
            }
            root.connectors.push(c);
        }
        let mut rules = BTreeSet::new();
        for (lo, hi) in &self.priorities {
            for l in owners.get(lo).into_iter().flatten() {
                for h in owners.get(hi).into_iter().flatten() {
                    if l != h {
                        rules.insert((l.clone(), h.clone()));
                    }
                }
            }
        }
        for (l, h) in rules {
            let pat = |c: String| PriorityPattern {
                connector: c,
                mask: None,
                span: Span::default(),
            };
            root.priorities.push(PriorityRule {
                low: pat(l),
                high: pat(h),
                span: Span::default(),
            });
        }
        let property = PropertyDef {
            name: self.property_name(),
            predicate: self.property_expr(),
            span: Span::default(),
        };
        let root_name = root.name.clone();
        if out.component_type(&root_name).is_some() {
            return Err(ArchError::DefinitionConflict(format!("type `{root_name}`")));
        }
        out.compounds.push(root);
        out.properties.push(property.clone());
        let diags = validate_model(&out);
        if model::has_errors(&diags) {
            let text: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            return Err(ArchError::IllFormed(text.join("\n")));
        }
        Ok(Application {
            model: out,
            root: root_name,
            property,
            binding,
        })
    }

    fn root_name(&self) -> String {
        let names: Vec<&str> = self.names.iter().map(String::as_str).collect();
        format!("{}_system", names.join("_"))
    }
}

fn add_atom(out: &mut Model, atom: &AtomType) -> Result<(), ArchError> {
    match out.atom(&atom.name) {
        Some(existing) if existing != atom => {
            Err(ArchError::DefinitionConflict(format!("atom type `{}`", atom.name)))
        }
        Some(_) => Ok(()),
        None if out.compound(&atom.name).is_some() => {
            Err(ArchError::DefinitionConflict(format!("type `{}`", atom.name)))
        }
        None => {
            out.atoms.push(atom.clone());
            Ok(())
        }
    }
}

/// Copies type `name` and everything it instantiates from `src` into `out`.
fn copy_type(src: &Model, name: &str, out: &mut Model) -> Result<(), ArchError> {
    match src.component_type(name) {
        Some(TypeRef::Atom(a)) => add_atom(out, a),
        Some(TypeRef::Compound(c)) => {
            if out.compound(name).is_some() {
                return Ok(());
            }
            for i in &c.instances {
                copy_type(src, &i.type_name, out)?;
            }
            out.compounds.push(c.clone());
            Ok(())
        }
        None => Err(ArchError::UnknownOperand(name.to_string())),
    }
}

/// Safety and deadlock verdicts for an applied architecture.
#[derive(Debug)]
pub struct Certificate {
    pub application: Application,
    pub safety: Verdict,
    pub deadlock: Verdict,
}

impl Certificate {
    /// The weaker of the two verdicts.
    pub fn status(&self) -> Status {
        let rank = |s: Status| match s {
            Status::Holds => 0,
            Status::ResourceLimit => 1,
            Status::PotentialViolation => 2,
            Status::Violated => 3,
        };
        if rank(self.safety.status) >= rank(self.deadlock.status) {
            self.safety.status
        } else {
            self.deadlock.status
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("property does not compile: {0}")]
    Property(String),
}

/// Applies `arch` and checks its characteristic property and deadlock
/// freedom on the result by exact exploration.
pub fn certify(
    arch: &Architecture,
    model: &Model,
    operands: &[&str],
    limits: Limits,
) -> Result<Certificate, CertifyError> {
    let application = arch.apply(model, operands)?;
    let root = application.model.compound(&application.root).expect("root was added").clone();
    let sys = System::build_root(&application.model, &root)?;
    let prop = sys
        .compile_property(&application.property)
        .map_err(CertifyError::Property)?;
    let space = explore(&sys, limits)?;
    Ok(Certificate {
        safety: check_safety(&sys, &space, &prop),
        deadlock: check_deadlock(&sys, &space),
        application,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textlang::parse;

    const SRC: &str = include_str!("../../../models/mutex.bip");

    fn model() -> Model {
        let (m, d) = parse(SRC);
        assert!(d.is_empty(), "{d:?}");
        m
    }

    #[test]
    fn single_architecture_keeps_plain_names() {
        let m = model();
        let a = Architecture::from_model(&m, "mutex").unwrap();
        let app = a.apply(&m, &["Task1", "Task2"]).unwrap();
        let root = app.model.compound(&app.root).unwrap();
        let names: Vec<&str> = root.connectors.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["b1t", "b2t", "f1r", "f2r"]);
        assert_eq!(app.property.name, "mutual_exclusion");
    }

    #[test]
    fn arity_and_interface_errors() {
        let m = model();
        let a = Architecture::from_model(&m, "mutex").unwrap();
        assert_eq!(
            a.apply(&m, &["Task1"]).unwrap_err(),
            ArchError::ArityMismatch { expected: 2, got: 1 }
        );
        // Task2 offers b2/f2, not b1/f1
        assert_eq!(
            a.apply(&m, &["Task2", "Task2"]).unwrap_err(),
            ArchError::InterfaceMismatch {
                param: "task1".into(),
                missing: vec!["b1".into(), "f1".into()]
            }
        );
    }

    #[test]
    fn composed_glue_pairs_shared_ports() {
        let m = model();
        let a = Architecture::from_model(&m, "mutex").unwrap();
        let b = Architecture::from_model(&m, "precedence").unwrap();
        let ab = compose(&a, &b).unwrap();
        let names: BTreeSet<String> = ab.glue.iter().map(|g| ab.glue_name(g)).collect();
        let expect: BTreeSet<String> = ["b1t__again", "b1t__first", "b2t__go", "f1r", "f2r"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(names, expect);
        assert_eq!(compose(&ab, &ab).unwrap(), ab);
    }

    #[test]
    fn certified_instances() {
        let m = model();
        let mutex = Architecture::from_model(&m, "mutex").unwrap();
        let c = certify(&mutex, &m, &["Task1", "Task2"], Limits::default()).unwrap();
        assert_eq!((c.safety.status, c.deadlock.status), (Status::Holds, Status::Holds));
        let c = certify(&mutex, &m, &["StuckTask", "Task2"], Limits::default()).unwrap();
        assert_eq!(c.safety.status, Status::Holds);
        assert_eq!(c.deadlock.status, Status::Violated);
        assert_eq!(c.status(), Status::Violated);
        let prec = Architecture::from_model(&m, "precedence").unwrap();
        let both = compose(&mutex, &prec).unwrap();
        let c = certify(&both, &m, &["Task1", "Task2"], Limits::default()).unwrap();
        assert_eq!(c.application.property.name, "mutual_exclusion_and_task1_first");
        assert_eq!(c.safety.status, Status::Holds);
    }

    #[test]
    fn conflicting_parameter_interfaces() {
        let m = model();
        let a = Architecture::from_model(&m, "mutex").unwrap();
        let mut b = a.clone();
        b.names = BTreeSet::from(["other".to_string()]);
        b.params.insert("task1".into(), BTreeSet::from(["b1".to_string()]));
        assert_eq!(
            compose(&a, &b).unwrap_err(),
            ArchError::ParameterInterfaceConflict("task1".into())
        );
    }
}
