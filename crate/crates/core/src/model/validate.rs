use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::*;

/// What a connector end refers to, resolved in the scope of one compound type.
pub(crate) enum EndTarget<'m> {
    AtomPort {
        instance: &'m Instance,
        atom: &'m AtomType,
        port: &'m Port,
    },
    /// A port re-exported by a sub-compound instance.
    SubExport {
        instance: &'m Instance,
        compound: &'m CompoundType,
        connector: &'m Connector,
    },
    /// The exported port of a sibling connector.
    Local { connector: &'m Connector },
}

impl EndTarget<'_> {
    /// Variables visible through this end, with their types.
    pub(crate) fn exported_vars(&self) -> Vec<(String, Option<Type>)> {
        match self {
            EndTarget::AtomPort { atom, port, .. } => port
                .vars
                .iter()
                .map(|v| (v.clone(), atom.var(v).map(|d| d.ty)))
                .collect(),
            EndTarget::SubExport { connector, .. } | EndTarget::Local { connector } => connector
                .export
                .iter()
                .flat_map(|x| x.vars.iter())
                .map(|v| (v.clone(), connector.var(v).map(|d| d.ty)))
                .collect(),
        }
    }
}

pub(crate) fn resolve_end<'m>(
    model: &'m Model,
    scope: &'m CompoundType,
    end: &End,
) -> Result<EndTarget<'m>, String> {
    match end.path.as_slice() {
        [conn] => {
            let connector = scope
                .connector(conn)
                .ok_or_else(|| format!("no connector or port `{conn}` in `{}`", scope.name))?;
            if connector.export.is_none() {
                return Err(format!("connector `{conn}` has no exported port"));
            }
            Ok(EndTarget::Local { connector })
        }
        [inst, port] => {
            let instance = scope
                .instances
                .iter()
                .find(|i| &i.name == inst)
                .ok_or_else(|| format!("no component `{inst}` in `{}`", scope.name))?;
            match model.component_type(&instance.type_name) {
                Some(TypeRef::Atom(atom)) => {
                    let port = atom
                        .port(port)
                        .ok_or_else(|| format!("atom type `{}` has no port `{port}`", atom.name))?;
                    Ok(EndTarget::AtomPort {
                        instance,
                        atom,
                        port,
                    })
                }
                Some(TypeRef::Compound(compound)) => {
                    let connector = compound.exported_connector(port).ok_or_else(|| {
                        format!("compound type `{}` exports no port `{port}`", compound.name)
                    })?;
                    Ok(EndTarget::SubExport {
                        instance,
                        compound,
                        connector,
                    })
                }
                None => Err(format!("unknown component type `{}`", instance.type_name)),
            }
        }
        _ => Err(format!("malformed end `{}`", end.dotted())),
    }
}

/// Checks every well-formedness rule of the model and returns all violations.
/// An empty list means the model is well-formed.
pub fn validate_model(model: &Model) -> Vec<Diagnostic> {
    let mut v = Validator {
        model,
        diags: Vec::new(),
    };
    v.check_names();
    for atom in &model.atoms {
        v.check_atom(atom);
    }
    let acyclic = v.check_compound_graph();
    for compound in &model.compounds {
        v.check_compound(compound);
    }
    let arch_props: HashSet<&str> = model
        .architectures
        .iter()
        .map(|a| a.property.as_str())
        .collect();
    for prop in &model.properties {
        if !arch_props.contains(prop.name.as_str()) && acyclic {
            v.check_root_property(prop);
        }
    }
    for arch in &model.architectures {
        v.check_architecture(arch);
    }
    v.diags
}

struct Validator<'m> {
    model: &'m Model,
    diags: Vec<Diagnostic>,
}

/// Variables visible through one connector end, typed when known.
type EndVars = Vec<(String, Option<Type>)>;

fn dups<'a>(
    items: impl IntoIterator<Item = (&'a str, Span)>,
) -> impl Iterator<Item = (&'a str, Span)> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(move |(name, _)| !seen.insert(*name))
}

impl<'m> Validator<'m> {
    fn err(&mut self, code: &'static str, msg: impl Into<String>, span: Span) {
        self.diags.push(Diagnostic::error(code, msg, span));
    }

    fn check_names(&mut self) {
        let m = self.model;
        let types = m
            .atoms
            .iter()
            .map(|a| (a.name.as_str(), a.span))
            .chain(m.compounds.iter().map(|c| (c.name.as_str(), c.span)));
        for (name, span) in dups(types).collect::<Vec<_>>() {
            self.err("duplicate-type", format!("component type `{name}` is defined twice"), span);
        }
        for (name, span) in dups(m.properties.iter().map(|p| (p.name.as_str(), p.span))).collect::<Vec<_>>() {
            self.err("duplicate-property", format!("property `{name}` is defined twice"), span);
        }
        for (name, span) in dups(m.architectures.iter().map(|a| (a.name.as_str(), a.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-architecture",
                format!("architecture `{name}` is defined twice"),
                span,
            );
        }
    }

    fn check_atom(&mut self, atom: &AtomType) {
        for (name, span) in dups(atom.ports.iter().map(|p| (p.name.as_str(), p.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-port",
                format!("port `{name}` is declared twice in atom `{}`", atom.name),
                span,
            );
        }
        for (name, span) in dups(atom.vars.iter().map(|p| (p.name.as_str(), p.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-var",
                format!("variable `{name}` is declared twice in atom `{}`", atom.name),
                span,
            );
        }
        for (name, span) in dups(atom.states.iter().map(|p| (p.name.as_str(), p.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-state",
                format!("state `{name}` is declared twice in atom `{}`", atom.name),
                span,
            );
        }
        if atom.states.is_empty() {
            self.err("no-states", format!("atom `{}` declares no state", atom.name), atom.span);
        }
        for port in &atom.ports {
            for v in &port.vars {
                if atom.var(v).is_none() {
                    self.err(
                        "export-var",
                        format!("port `{}` exports undeclared variable `{v}`", port.name),
                        port.span,
                    );
                }
            }
        }
        let var_ty = |r: &VarRef| -> Result<Type, String> {
            match r.path.as_slice() {
                [name] => atom
                    .var(name)
                    .map(|d| d.ty)
                    .ok_or_else(|| format!("undeclared variable `{name}`")),
                _ => Err(format!("`{}` is not a local variable", r.dotted())),
            }
        };
        let init = &atom.init;
        if !atom.has_state(&init.target) {
            self.err(
                "unknown-state",
                format!("init targets undeclared state `{}`", init.target),
                init.span,
            );
        }
        self.check_guard(init.guard.as_ref(), &var_ty, init.span);
        self.check_action(&init.action, &var_ty, &var_ty, init.span);
        for t in &atom.transitions {
            if atom.port(&t.port).is_none() {
                self.err(
                    "unknown-port",
                    format!("transition on undeclared port `{}`", t.port),
                    t.span,
                );
            }
            for s in [&t.from, &t.to] {
                if !atom.has_state(s) {
                    self.err(
                        "unknown-state",
                        format!("transition refers to undeclared state `{s}`"),
                        t.span,
                    );
                }
            }
            self.check_guard(t.guard.as_ref(), &var_ty, t.span);
            self.check_action(&t.action, &var_ty, &var_ty, t.span);
        }
    }

    fn check_guard(
        &mut self,
        guard: Option<&Expr>,
        var_ty: &impl Fn(&VarRef) -> Result<Type, String>,
        span: Span,
    ) {
        if let Some(g) = guard {
            match type_of(g, var_ty, &no_state_tests) {
                Ok(Type::Bool) => {}
                Ok(t) => self.err("type-error", format!("guard has type {t}, expected bool"), span),
                Err(e) => self.err("type-error", e, span),
            }
        }
    }

    fn check_action(
        &mut self,
        action: &Action,
        read_ty: &impl Fn(&VarRef) -> Result<Type, String>,
        write_ty: &impl Fn(&VarRef) -> Result<Type, String>,
        span: Span,
    ) {
        for a in action {
            let target = match write_ty(&a.target) {
                Ok(t) => Some(t),
                Err(e) => {
                    self.err("assign-target", e, span);
                    None
                }
            };
            match type_of(&a.value, read_ty, &no_state_tests) {
                Ok(t) => {
                    if let Some(want) = target {
                        if want != t {
                            self.err(
                                "type-error",
                                format!("assigning {t} to `{}` of type {want}", a.target.dotted()),
                                span,
                            );
                        }
                    }
                }
                Err(e) => self.err("type-error", e, span),
            }
        }
    }

    /// Reports instantiation cycles; returns true if there are none.
    fn check_compound_graph(&mut self) -> bool {
        let m = self.model;
        let mut ok = true;
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark: HashMap<&str, u8> = HashMap::new();
        fn visit<'a>(
            m: &'a Model,
            c: &'a CompoundType,
            mark: &mut HashMap<&'a str, u8>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<&'a str>> {
            match mark.get(c.name.as_str()) {
                Some(2) => return None,
                Some(1) => {
                    let pos = stack.iter().position(|n| *n == c.name).unwrap_or(0);
                    let mut cycle = stack[pos..].to_vec();
                    cycle.push(&c.name);
                    return Some(cycle);
                }
                _ => {}
            }
            mark.insert(&c.name, 1);
            stack.push(&c.name);
            for inst in &c.instances {
                if let Some(sub) = m.compound(&inst.type_name) {
                    if let Some(cycle) = visit(m, sub, mark, stack) {
                        return Some(cycle);
                    }
                }
            }
            stack.pop();
            mark.insert(&c.name, 2);
            None
        }
        for c in &m.compounds {
            let mut stack = Vec::new();
            if let Some(cycle) = visit(m, c, &mut mark, &mut stack) {
                self.err(
                    "compound-cycle",
                    format!("compound instantiation cycle {}", cycle.join("→")),
                    c.span,
                );
                ok = false;
                break;
            }
        }
        ok
    }

    fn check_compound(&mut self, c: &'m CompoundType) {
        let m = self.model;
        for (name, span) in dups(c.instances.iter().map(|i| (i.name.as_str(), i.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-instance",
                format!("component `{name}` is declared twice in `{}`", c.name),
                span,
            );
        }
        for (name, span) in dups(c.connectors.iter().map(|i| (i.name.as_str(), i.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-connector",
                format!("connector `{name}` is declared twice in `{}`", c.name),
                span,
            );
        }
        for (name, span) in dups(c.exports.iter().map(|e| (e.port.as_str(), e.span))).collect::<Vec<_>>() {
            self.err("duplicate-export", format!("port `{name}` is exported twice"), span);
        }
        for inst in &c.instances {
            if m.component_type(&inst.type_name).is_none() {
                self.err(
                    "unknown-type",
                    format!("unknown component type `{}`", inst.type_name),
                    inst.span,
                );
            }
        }
        let export_names: Vec<(&str, Span)> = c
            .connectors
            .iter()
            .filter_map(|k| k.export.as_ref().map(|x| (x.name.as_str(), x.span)))
            .collect();
        for (name, span) in dups(export_names.iter().copied()).collect::<Vec<_>>() {
            self.err(
                "duplicate-export",
                format!("two connectors export a port named `{name}`"),
                span,
            );
        }
        for e in &c.exports {
            if !export_names.iter().any(|(n, _)| *n == e.port) {
                self.err(
                    "unknown-port",
                    format!("no connector in `{}` exports a port `{}`", c.name, e.port),
                    e.span,
                );
            }
        }

        let mut uses: HashMap<Vec<String>, Vec<Span>> = HashMap::new();
        for conn in &c.connectors {
            self.check_connector(c, conn);
            for end in &conn.ends {
                let key = match resolve_end(m, c, end) {
                    Ok(EndTarget::Local { connector }) => vec![connector.name.clone()],
                    Ok(EndTarget::SubExport { instance, connector, .. }) => {
                        vec![instance.name.clone(), connector.name.clone()]
                    }
                    _ => continue,
                };
                uses.entry(key).or_default().push(end.span);
            }
        }
        let mut multi: Vec<_> = uses.into_iter().filter(|(_, s)| s.len() > 1).collect();
        multi.sort_by(|a, b| a.0.cmp(&b.0));
        for (key, spans) in multi {
            self.err(
                "multiple-parents",
                format!(
                    "connector `{}` participates in {} parent connectors",
                    key.join("."),
                    spans.len()
                ),
                spans[1],
            );
        }

        self.check_priorities(c, &c.priorities, &|name| {
            let conn = c.connector(name)?;
            let nested = c.connectors.iter().any(|o| {
                o.ends.iter().any(|e| e.path.len() == 1 && e.path[0] == name)
            });
            let exported = conn
                .export
                .as_ref()
                .is_some_and(|x| c.exports.iter().any(|e| e.port == x.name));
            Some((conn, nested || exported))
        });
    }

    fn check_connector(&mut self, scope: &'m CompoundType, conn: &Connector) {
        let m = self.model;
        if conn.ends.is_empty() {
            self.err("empty-connector", format!("connector `{}` has no ends", conn.name), conn.span);
        }
        for (name, span) in dups(conn.vars.iter().map(|v| (v.name.as_str(), v.span))).collect::<Vec<_>>() {
            self.err(
                "duplicate-var",
                format!("variable `{name}` is declared twice in connector `{}`", conn.name),
                span,
            );
        }
        if let Some(x) = &conn.export {
            for v in &x.vars {
                if conn.var(v).is_none() {
                    self.err(
                        "export-var",
                        format!("exported port `{}` names undeclared variable `{v}`", x.name),
                        x.span,
                    );
                }
            }
        }
        let mut ends: Vec<(Vec<String>, EndVars)> = Vec::new();
        for end in &conn.ends {
            if end.path.len() == 1 && end.path[0] == conn.name {
                self.err("connector-cycle", format!("connector `{}` uses itself", conn.name), end.span);
                continue;
            }
            match resolve_end(m, scope, end) {
                Ok(t) => ends.push((end.var_prefix().to_vec(), t.exported_vars())),
                Err(e) => self.err("unknown-port", e, end.span),
            }
        }
        for (prefix, span) in dups(
            conn.ends
                .iter()
                .map(|e| (e.var_prefix().last().map(String::as_str).unwrap_or(""), e.span)),
        )
        .collect::<Vec<_>>()
        {
            let _ = prefix;
            self.err(
                "one-port-per-atom",
                format!(
                    "connector `{}` uses two ports of the same component; at most one port per atomic component may take part in a connector",
                    conn.name
                ),
                span,
            );
        }
        // atoms reachable through nested connectors
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut stack = Vec::new();
        for end in &conn.ends {
            let mut atoms = BTreeSet::new();
            if collect_atoms(m, scope, end, "", &mut atoms, &mut stack).is_err() {
                self.err(
                    "connector-cycle",
                    format!("connector hierarchy below `{}` is cyclic", conn.name),
                    end.span,
                );
                return;
            }
            for a in atoms {
                *seen.entry(a).or_default() += 1;
            }
        }
        for (atom, n) in &seen {
            if *n > 1 && !conn.ends.iter().all(|e| e.path.len() == 2) {
                self.err(
                    "one-port-per-atom",
                    format!(
                        "atom `{atom}` takes part {n} times in the hierarchy of connector `{}`; at most one port per atomic component",
                        conn.name
                    ),
                    conn.span,
                );
            }
        }

        let read_ty = |r: &VarRef| -> Result<Type, String> {
            match r.path.as_slice() {
                [name] => conn
                    .var(name)
                    .map(|d| d.ty)
                    .ok_or_else(|| format!("undeclared connector variable `{name}`")),
                path => {
                    let (prefix, var) = path.split_at(path.len() - 1);
                    let (_, vars) = ends
                        .iter()
                        .find(|(p, _)| p.as_slice() == prefix)
                        .ok_or_else(|| format!("`{}` is not an end of this connector", prefix.join(".")))?;
                    vars.iter()
                        .find(|(n, _)| n == &var[0])
                        .and_then(|(_, t)| *t)
                        .ok_or_else(|| {
                            format!("`{}` is not exported by that end", r.dotted())
                        })
                }
            }
        };
        let own_only = |r: &VarRef| -> Result<Type, String> {
            match r.path.as_slice() {
                [name] => conn
                    .var(name)
                    .map(|d| d.ty)
                    .ok_or_else(|| format!("undeclared connector variable `{name}`")),
                _ => Err(format!(
                    "upward computation may only assign connector variables, not `{}`",
                    r.dotted()
                )),
            }
        };
        self.check_guard(conn.guard.as_ref(), &read_ty, conn.span);
        self.check_action(&conn.up, &read_ty, &own_only, conn.span);
        self.check_action(&conn.down, &read_ty, &read_ty, conn.span);
    }

    fn check_priorities<'c>(
        &mut self,
        scope: &CompoundType,
        rules: &[PriorityRule],
        lookup: &dyn Fn(&str) -> Option<(&'c Connector, bool)>,
    ) {
        let mut bad = false;
        for rule in rules {
            for pat in [&rule.low, &rule.high] {
                match lookup(&pat.connector) {
                    None => {
                        self.err(
                            "unknown-connector",
                            format!("priority names unknown connector `{}` in `{}`", pat.connector, scope.name),
                            pat.span,
                        );
                        bad = true;
                    }
                    Some((_, true)) => {
                        self.err(
                            "priority-pattern",
                            format!("priority on nested or exported connector `{}`", pat.connector),
                            pat.span,
                        );
                        bad = true;
                    }
                    Some((conn, false)) => {
                        if let Some(mask) = &pat.mask {
                            for p in mask {
                                if !conn.ends.iter().any(|e| &e.path == p) {
                                    self.err(
                                        "priority-pattern",
                                        format!("`{}` is not an end of connector `{}`", p.join("."), conn.name),
                                        pat.span,
                                    );
                                    bad = true;
                                }
                            }
                        }
                    }
                }
            }
            let same = rule.low.connector == rule.high.connector;
            let masked = (rule.low.mask.is_some(), rule.high.mask.is_some());
            if same && masked != (true, true) {
                self.err(
                    "priority-pattern",
                    "a priority within one connector must give end masks on both sides",
                    rule.span,
                );
                bad = true;
            } else if !same && masked != (false, false) {
                self.err(
                    "priority-pattern",
                    "end masks are only allowed in priorities within one connector",
                    rule.span,
                );
                bad = true;
            }
        }
        if bad {
            return;
        }
        for cycle in priority_cycles(rules) {
            self.err(
                "priority-cycle",
                format!("priority cycle {}", cycle.join("→")),
                rules
                    .iter()
                    .find(|r| r.low.to_string() == cycle[0])
                    .map(|r| r.span)
                    .unwrap_or_default(),
            );
        }
    }

    fn check_root_property(&mut self, prop: &PropertyDef) {
        let m = self.model;
        let Some(root) = m.root() else {
            self.err(
                "unknown-instance",
                format!("property `{}` has no compound to refer to", prop.name),
                prop.span,
            );
            return;
        };
        let atom_at = |path: &[String]| -> Result<&AtomType, String> {
            let mut scope = root;
            for (i, seg) in path.iter().enumerate() {
                let inst = scope
                    .instances
                    .iter()
                    .find(|x| &x.name == seg)
                    .ok_or_else(|| format!("no component `{}`", path[..=i].join(".")))?;
                match m.component_type(&inst.type_name) {
                    Some(TypeRef::Atom(a)) if i + 1 == path.len() => return Ok(a),
                    Some(TypeRef::Compound(c)) if i + 1 < path.len() => scope = c,
                    _ => return Err(format!("`{}` is not an atom", path[..=i].join("."))),
                }
            }
            Err("empty path".into())
        };
        let var_ty = |r: &VarRef| -> Result<Type, String> {
            let (prefix, var) = r.path.split_at(r.path.len().saturating_sub(1));
            let atom = atom_at(prefix)?;
            atom.var(&var[0])
                .map(|d| d.ty)
                .ok_or_else(|| format!("atom `{}` has no variable `{}`", atom.name, var[0]))
        };
        let state_ok = |s: &StateRef| -> Result<(), String> {
            let atom = atom_at(&s.path)?;
            if atom.has_state(&s.state) {
                Ok(())
            } else {
                Err(format!("atom `{}` has no state `{}`", atom.name, s.state))
            }
        };
        match type_of(&prop.predicate, &var_ty, &state_ok) {
            Ok(Type::Bool) => {}
            Ok(t) => self.err("type-error", format!("property has type {t}, expected bool"), prop.span),
            Err(e) => self.err("type-error", e, prop.span),
        }
    }

    fn check_architecture(&mut self, arch: &'m ArchitectureDef) {
        let m = self.model;
        for (name, span) in dups(
            arch.params
                .iter()
                .map(|p| (p.name.as_str(), p.span))
                .chain(arch.coordinators.iter().map(|c| (c.name.as_str(), c.span))),
        )
        .collect::<Vec<_>>()
        {
            self.err(
                "duplicate-param",
                format!("`{name}` is declared twice in architecture `{}`", arch.name),
                span,
            );
        }
        let mut coords: HashMap<&str, &AtomType> = HashMap::new();
        for c in &arch.coordinators {
            match m.atom(&c.type_name) {
                Some(a) => {
                    coords.insert(&c.name, a);
                }
                None => self.err(
                    "unknown-type",
                    format!("coordinator type `{}` is not an atom type", c.type_name),
                    c.span,
                ),
            }
        }
        let mut port_sets: Vec<(BTreeSet<Vec<String>>, Span)> = Vec::new();
        for conn in &arch.connectors {
            if conn.export.is_some() {
                self.err(
                    "architecture-connector",
                    "architecture connectors cannot export ports",
                    conn.span,
                );
            }
            let mut ends = Vec::new();
            for end in &conn.ends {
                match end.path.as_slice() {
                    [head, port] => {
                        if let Some(p) = arch.params.iter().find(|p| &p.name == head) {
                            if !p.ports.contains(port) {
                                self.err(
                                    "unknown-port",
                                    format!("parameter `{head}` has no port `{port}` in its interface"),
                                    end.span,
                                );
                            }
                            ends.push((head.clone(), Vec::new()));
                        } else if let Some(atom) = coords.get(head.as_str()) {
                            match atom.port(port) {
                                Some(p) => ends.push((
                                    head.clone(),
                                    p.vars
                                        .iter()
                                        .map(|v| (v.clone(), atom.var(v).map(|d| d.ty)))
                                        .collect::<Vec<_>>(),
                                )),
                                None => self.err(
                                    "unknown-port",
                                    format!("coordinator `{head}` has no port `{port}`"),
                                    end.span,
                                ),
                            }
                        } else {
                            self.err(
                                "unknown-instance",
                                format!("`{head}` is neither a parameter nor a coordinator"),
                                end.span,
                            );
                        }
                    }
                    _ => self.err(
                        "architecture-connector",
                        format!("architecture end `{}` must be `component.port`", end.dotted()),
                        end.span,
                    ),
                }
            }
            for (_, span) in dups(conn.ends.iter().map(|e| (e.path[0].as_str(), e.span))).collect::<Vec<_>>() {
                self.err(
                    "one-port-per-atom",
                    format!("connector `{}` uses two ports of the same component", conn.name),
                    span,
                );
            }
            let read_ty = |r: &VarRef| -> Result<Type, String> {
                match r.path.as_slice() {
                    [name] => conn
                        .var(name)
                        .map(|d| d.ty)
                        .ok_or_else(|| format!("undeclared connector variable `{name}`")),
                    [head, var] => ends
                        .iter()
                        .find(|(h, _)| h == head)
                        .and_then(|(_, vars)| vars.iter().find(|(n, _)| n == var))
                        .and_then(|(_, t)| *t)
                        .ok_or_else(|| format!("`{}` is not an exported coordinator variable", r.dotted())),
                    _ => Err(format!("malformed reference `{}`", r.dotted())),
                }
            };
            let own_only = |r: &VarRef| -> Result<Type, String> {
                match r.path.as_slice() {
                    [name] => conn
                        .var(name)
                        .map(|d| d.ty)
                        .ok_or_else(|| format!("undeclared connector variable `{name}`")),
                    _ => Err(format!("upward computation may only assign connector variables, not `{}`", r.dotted())),
                }
            };
            self.check_guard(conn.guard.as_ref(), &read_ty, conn.span);
            self.check_action(&conn.up, &read_ty, &own_only, conn.span);
            self.check_action(&conn.down, &read_ty, &read_ty, conn.span);
            let set: BTreeSet<Vec<String>> = conn.ends.iter().map(|e| e.path.clone()).collect();
            if let Some((_, _)) = port_sets.iter().find(|(s, _)| *s == set) {
                self.err(
                    "duplicate-glue",
                    format!("connector `{}` synchronises the same ports as another glue connector", conn.name),
                    conn.span,
                );
            }
            port_sets.push((set, conn.span));
        }
        for (name, span) in dups(arch.connectors.iter().map(|c| (c.name.as_str(), c.span))).collect::<Vec<_>>() {
            self.err("duplicate-connector", format!("connector `{name}` is declared twice"), span);
        }
        let scope = CompoundType {
            name: arch.name.clone(),
            ..CompoundType::empty("")
        };
        self.check_priorities(&scope, &arch.priorities, &|name| {
            arch.connectors.iter().find(|c| c.name == name).map(|c| (c, false))
        });
        for rule in &arch.priorities {
            if rule.low.connector == rule.high.connector {
                self.err(
                    "priority-pattern",
                    "architecture priorities must relate distinct connectors",
                    rule.span,
                );
            }
        }
        match m.property(&arch.property) {
            None => self.err(
                "unknown-property",
                format!("architecture `{}` names unknown property `{}`", arch.name, arch.property),
                arch.span,
            ),
            Some(prop) => {
                let mut bad = Vec::new();
                prop.predicate.visit_vars(&mut |r: &VarRef| {
                    if !arch.params.iter().any(|p| p.name == r.path[0])
                        && !coords.contains_key(r.path[0].as_str())
                    {
                        bad.push(r.dotted());
                    }
                });
                prop.predicate.visit_states(&mut |s: &StateRef| {
                    let head = s.path.first().map(String::as_str).unwrap_or("");
                    if let Some(atom) = coords.get(head) {
                        if !atom.has_state(&s.state) {
                            bad.push(format!("{}@{}", s.path.join("."), s.state));
                        }
                    } else if !arch.params.iter().any(|p| p.name == head) {
                        bad.push(format!("{}@{}", s.path.join("."), s.state));
                    }
                });
                for b in bad {
                    self.err(
                        "unknown-instance",
                        format!("property `{}` refers to `{b}` outside architecture `{}`", prop.name, arch.name),
                        prop.span,
                    );
                }
            }
        }
    }
}

fn no_state_tests(s: &StateRef) -> Result<(), String> {
    Err(format!(
        "state test `{}@{}` is only allowed in properties",
        s.path.join("."),
        s.state
    ))
}

/// Collects the instance paths of the atoms below `end`, relative to the
/// compound `scope` (prefixed with `prefix`). Errors on a cyclic hierarchy.
fn collect_atoms<'m>(
    m: &'m Model,
    scope: &'m CompoundType,
    end: &End,
    prefix: &str,
    out: &mut BTreeSet<String>,
    stack: &mut Vec<(String, String)>,
) -> Result<(), ()> {
    let Ok(target) = resolve_end(m, scope, end) else {
        return Ok(());
    };
    let (sub_scope, conn, sub_prefix) = match target {
        EndTarget::AtomPort { instance, .. } => {
            out.insert(format!("{prefix}{}", instance.name));
            return Ok(());
        }
        EndTarget::SubExport {
            instance,
            compound,
            connector,
        } => (compound, connector, format!("{prefix}{}.", instance.name)),
        EndTarget::Local { connector } => (scope, connector, prefix.to_string()),
    };
    let key = (sub_prefix.clone(), conn.name.clone());
    if stack.contains(&key) {
        return Err(());
    }
    stack.push(key);
    for e in &conn.ends {
        collect_atoms(m, sub_scope, e, &sub_prefix, out, stack)?;
    }
    stack.pop();
    Ok(())
}

/// Node of the priority graph: a connector name plus an optional sorted mask.
fn pattern_key(p: &PriorityPattern) -> String {
    let mut p = p.clone();
    if let Some(mask) = &mut p.mask {
        mask.sort();
    }
    p.to_string()
}

/// Finds one cycle per strongly connected component of the priority graph
/// (edges run from the lower to the higher pattern).
pub(crate) fn priority_cycles(rules: &[PriorityRule]) -> Vec<Vec<String>> {
    let mut nodes: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut id = |k: String, nodes: &mut Vec<String>| -> usize {
        *index.entry(k.clone()).or_insert_with(|| {
            nodes.push(k);
            nodes.len() - 1
        })
    };
    let mut edges: Vec<Vec<usize>> = Vec::new();
    for r in rules {
        let a = id(pattern_key(&r.low), &mut nodes);
        let b = id(pattern_key(&r.high), &mut nodes);
        edges.resize(nodes.len(), Vec::new());
        if !edges[a].contains(&b) {
            edges[a].push(b);
        }
    }
    edges.resize(nodes.len(), Vec::new());
    let comp = tarjan(&edges);
    let mut reported = HashSet::new();
    let mut cycles = Vec::new();
    for start in 0..nodes.len() {
        let c = comp[start];
        let in_cycle = edges[start].iter().any(|&n| comp[n] == c);
        if !in_cycle || !reported.insert(c) {
            continue;
        }
        // walk inside the component back to start
        let path = cycle_from(start, &edges, &comp);
        cycles.push(path.into_iter().map(|i| nodes[i].clone()).collect());
    }
    cycles
}

fn cycle_from(start: usize, edges: &[Vec<usize>], comp: &[usize]) -> Vec<usize> {
    // BFS for the shortest path start -> ... -> start within the SCC
    let mut prev = vec![usize::MAX; edges.len()];
    let mut queue = std::collections::VecDeque::new();
    for &n in &edges[start] {
        if comp[n] == comp[start] && prev[n] == usize::MAX {
            prev[n] = start;
            queue.push_back(n);
        }
    }
    while let Some(n) = queue.pop_front() {
        if n == start {
            break;
        }
        for &k in &edges[n] {
            if comp[k] == comp[start] && prev[k] == usize::MAX {
                prev[k] = n;
                queue.push_back(k);
            }
        }
    }
    let mut path = vec![start];
    let mut cur = prev[start];
    while cur != start && cur != usize::MAX {
        path.push(cur);
        cur = prev[cur];
    }
    path.push(start);
    path.reverse();
    path
}

fn tarjan(edges: &[Vec<usize>]) -> Vec<usize> {
    struct T<'a> {
        edges: &'a [Vec<usize>],
        index: Vec<usize>,
        low: Vec<usize>,
        on: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next: usize,
        ncomp: usize,
    }
    impl T<'_> {
        fn go(&mut self, v: usize) {
            self.index[v] = self.next;
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on[v] = true;
            for i in 0..self.edges[v].len() {
                let w = self.edges[v][i];
                if self.index[w] == usize::MAX {
                    self.go(w);
                    self.low[v] = self.low[v].min(self.low[w]);
                } else if self.on[w] {
                    self.low[v] = self.low[v].min(self.index[w]);
                }
            }
            if self.low[v] == self.index[v] {
                while let Some(w) = self.stack.pop() {
                    self.on[w] = false;
                    self.comp[w] = self.ncomp;
                    if w == v {
                        break;
                    }
                }
                self.ncomp += 1;
            }
        }
    }
    let n = edges.len();
    let mut t = T {
        edges,
        index: vec![usize::MAX; n],
        low: vec![0; n],
        on: vec![false; n],
        stack: Vec::new(),
        comp: vec![0; n],
        next: 0,
        ncomp: 0,
    };
    for v in 0..n {
        if t.index[v] == usize::MAX {
            t.go(v);
        }
    }
    t.comp
}
