//! In-memory model: atom and compound types, connectors, priorities,
//! properties and architecture declarations, as produced by the front end.

pub mod expr;
pub(crate) mod validate;

use std::fmt;

pub use expr::{
    eval, eval_expression, type_of, Action, Assign, BinOp, EvalError, Expr, StateRef, Type, UnOp,
    Valuation, Value, VarRef,
};
pub use validate::validate_model;

/// A source region: byte offsets plus the 1-based line and column of `start`.
///
/// Spans never take part in equality or hashing, so two trees that differ
/// only in source positions compare equal.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span {
            start: self.start,
            end: other.end.max(self.start),
            line: self.line,
            col: self.col,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Port {
    pub name: String,
    pub vars: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub name: String,
    pub ty: Type,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateDecl {
    pub name: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Init {
    pub guard: Option<Expr>,
    pub action: Action,
    pub target: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    pub port: String,
    pub from: String,
    pub to: String,
    pub guard: Option<Expr>,
    pub action: Action,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AtomType {
    pub name: String,
    pub ports: Vec<Port>,
    pub vars: Vec<VarDecl>,
    pub states: Vec<StateDecl>,
    pub init: Init,
    pub transitions: Vec<Transition>,
    pub span: Span,
}

impl AtomType {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.states.iter().any(|s| s.name == name)
    }
}

/// `component name : type` inside a compound, or `coordinator name : type`
/// inside an architecture.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Instance {
    pub name: String,
    pub type_name: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct End {
    pub path: Vec<String>,
    pub trigger: bool,
    pub span: Span,
}

impl End {
    pub fn dotted(&self) -> String {
        self.path.join(".")
    }

    /// The instance prefix used to name this end's variables in connector
    /// expressions: the path without its port, or the whole path for a
    /// nested connector.
    pub fn var_prefix(&self) -> &[String] {
        if self.path.len() > 1 {
            &self.path[..self.path.len() - 1]
        } else {
            &self.path
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExportPort {
    pub name: String,
    pub vars: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Connector {
    pub name: String,
    pub ends: Vec<End>,
    pub export: Option<ExportPort>,
    pub vars: Vec<VarDecl>,
    pub guard: Option<Expr>,
    pub up: Action,
    pub down: Action,
    pub span: Span,
}

impl Connector {
    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }
}

/// One side of a priority rule: a connector, optionally restricted to the
/// interactions in which exactly the listed ends participate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PriorityPattern {
    pub connector: String,
    pub mask: Option<Vec<Vec<String>>>,
    pub span: Span,
}

impl fmt::Display for PriorityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.connector)?;
        if let Some(mask) = &self.mask {
            let parts: Vec<String> = mask.iter().map(|p| p.join(".")).collect();
            write!(f, "[{}]", parts.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PriorityRule {
    pub low: PriorityPattern,
    pub high: PriorityPattern,
    pub span: Span,
}

/// `export name` inside a compound: re-exports a connector's exported port.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompoundExport {
    pub port: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompoundType {
    pub name: String,
    pub instances: Vec<Instance>,
    pub connectors: Vec<Connector>,
    pub priorities: Vec<PriorityRule>,
    pub exports: Vec<CompoundExport>,
    pub span: Span,
}

impl CompoundType {
    pub fn empty(name: impl Into<String>) -> Self {
        CompoundType {
            name: name.into(),
            instances: Vec::new(),
            connectors: Vec::new(),
            priorities: Vec::new(),
            exports: Vec::new(),
            span: Span::default(),
        }
    }

    pub fn connector(&self, name: &str) -> Option<&Connector> {
        self.connectors.iter().find(|c| c.name == name)
    }

    /// The connector whose exported port is re-exported under `port`.
    pub fn exported_connector(&self, port: &str) -> Option<&Connector> {
        if !self.exports.iter().any(|e| e.port == port) {
            return None;
        }
        self.connectors
            .iter()
            .find(|c| c.export.as_ref().is_some_and(|x| x.name == port))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PropertyDef {
    pub name: String,
    pub predicate: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParamDecl {
    pub name: String,
    pub ports: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ArchitectureDef {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub coordinators: Vec<Instance>,
    pub connectors: Vec<Connector>,
    pub priorities: Vec<PriorityRule>,
    pub property: String,
    pub span: Span,
}

/// Everything declared in one `.bip` source.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Model {
    pub atoms: Vec<AtomType>,
    pub compounds: Vec<CompoundType>,
    pub properties: Vec<PropertyDef>,
    pub architectures: Vec<ArchitectureDef>,
}

pub enum TypeRef<'a> {
    Atom(&'a AtomType),
    Compound(&'a CompoundType),
}

impl Model {
    pub fn atom(&self, name: &str) -> Option<&AtomType> {
        self.atoms.iter().find(|a| a.name == name)
    }

    pub fn compound(&self, name: &str) -> Option<&CompoundType> {
        self.compounds.iter().find(|c| c.name == name)
    }

    pub fn component_type(&self, name: &str) -> Option<TypeRef<'_>> {
        self.atom(name)
            .map(TypeRef::Atom)
            .or_else(|| self.compound(name).map(TypeRef::Compound))
    }

    pub fn property(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn architecture(&self, name: &str) -> Option<&ArchitectureDef> {
        self.architectures.iter().find(|a| a.name == name)
    }

    /// The top of the instance hierarchy: the last declared compound that no
    /// other compound instantiates.
    pub fn root(&self) -> Option<&CompoundType> {
        self.compounds.iter().rev().find(|c| {
            !self
                .compounds
                .iter()
                .any(|o| o.instances.iter().any(|i| i.type_name == c.name))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    pub fn error(code: &'static str, message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            span,
        }
    }

    pub fn warning(code: &'static str, message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code,
            message: message.into(),
            span,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {sev}[{}]: {}", self.span, self.code, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
