//! Guard and update-action expression language.
//!
//! Expressions are generic over how they refer to variables (`V`) and to
//! control-state membership tests (`S`). Source-level models use dotted
//! paths; the runtime compiles them to slot indices with [`Expr::map_refs`]
//! and evaluates both forms with the same [`eval`] function.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use super::Span;

/// A runtime value: a 64-bit wrapping integer or a boolean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn default_for(ty: Type) -> Value {
        match ty {
            Type::Int => Value::Int(0),
            Type::Bool => Value::Bool(false),
        }
    }

    pub fn ty(self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Bool(_) => Type::Bool,
        }
    }

    pub fn as_bool(self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(EvalError::TypeMismatch("expected bool, found int".into())),
        }
    }

    pub fn as_int(self) -> Result<i64, EvalError> {
        match self {
            Value::Int(i) => Ok(i),
            Value::Bool(_) => Err(EvalError::TypeMismatch("expected int, found bool".into())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Value::Int(i) => s.serialize_i64(i),
            Value::Bool(b) => s.serialize_bool(b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Int,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter. All levels are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 5,
        }
    }
}

/// A dotted variable reference such as `Timer.t` or `x`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub path: Vec<String>,
    pub span: Span,
}

impl VarRef {
    pub fn new<I, S>(parts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        VarRef {
            path: parts.into_iter().map(Into::into).collect(),
            span: Span::default(),
        }
    }

    pub fn dotted(&self) -> String {
        self.path.join(".")
    }
}

/// A control-state membership test `path@state`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateRef {
    pub path: Vec<String>,
    pub state: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr<V = VarRef, S = StateRef> {
    Const(Value),
    Var(V),
    InState(S),
    Unary(UnOp, Box<Expr<V, S>>),
    Binary(BinOp, Box<Expr<V, S>>, Box<Expr<V, S>>),
}

impl<V, S> Expr<V, S> {
    pub fn int(i: i64) -> Self {
        Expr::Const(Value::Int(i))
    }

    pub fn bool(b: bool) -> Self {
        Expr::Const(Value::Bool(b))
    }

    pub fn unary(op: UnOp, e: Self) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinOp, l: Self, r: Self) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Rewrites every reference, keeping the tree shape.
    pub fn map_refs<V2, S2, E>(
        &self,
        var: &mut impl FnMut(&V) -> Result<V2, E>,
        state: &mut impl FnMut(&S) -> Result<S2, E>,
    ) -> Result<Expr<V2, S2>, E> {
        Ok(match self {
            Expr::Const(v) => Expr::Const(*v),
            Expr::Var(r) => Expr::Var(var(r)?),
            Expr::InState(s) => Expr::InState(state(s)?),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_refs(var, state)?)),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.map_refs(var, state)?),
                Box::new(r.map_refs(var, state)?),
            ),
        })
    }

    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a V)) {
        match self {
            Expr::Const(_) | Expr::InState(_) => {}
            Expr::Var(r) => f(r),
            Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Binary(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
        }
    }

    pub fn visit_states<'a>(&'a self, f: &mut impl FnMut(&'a S)) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::InState(s) => f(s),
            Expr::Unary(_, e) => e.visit_states(f),
            Expr::Binary(_, l, r) => {
                l.visit_states(f);
                r.visit_states(f);
            }
        }
    }

    /// True if evaluation may fail with [`EvalError::DivisionByZero`].
    pub fn may_divide(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::InState(_) => false,
            Expr::Unary(_, e) => e.may_divide(),
            Expr::Binary(op, l, r) => {
                matches!(op, BinOp::Div | BinOp::Mod) || l.may_divide() || r.may_divide()
            }
        }
    }

    pub fn is_true_constant(&self) -> bool {
        matches!(self, Expr::Const(Value::Bool(true)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

/// Strict evaluation. Integer arithmetic wraps at 64 bits; division truncates
/// toward zero and `%` takes the sign of the dividend.
pub fn eval<V, S>(
    e: &Expr<V, S>,
    var: &impl Fn(&V) -> Result<Value, EvalError>,
    state: &impl Fn(&S) -> Result<bool, EvalError>,
) -> Result<Value, EvalError> {
    match e {
        Expr::Const(v) => Ok(*v),
        Expr::Var(r) => var(r),
        Expr::InState(s) => state(s).map(Value::Bool),
        Expr::Unary(op, inner) => {
            let v = eval(inner, var, state)?;
            apply_unary(*op, v)
        }
        Expr::Binary(op, l, r) => {
            let a = eval(l, var, state)?;
            let b = eval(r, var, state)?;
            apply_binary(*op, a, b)
        }
    }
}

pub fn apply_unary(op: UnOp, v: Value) -> Result<Value, EvalError> {
    match op {
        UnOp::Neg => Ok(Value::Int(v.as_int()?.wrapping_neg())),
        UnOp::Not => Ok(Value::Bool(!v.as_bool()?)),
    }
}

pub fn apply_binary(op: BinOp, a: Value, b: Value) -> Result<Value, EvalError> {
    use BinOp::*;
    Ok(match op {
        Add => Value::Int(a.as_int()?.wrapping_add(b.as_int()?)),
        Sub => Value::Int(a.as_int()?.wrapping_sub(b.as_int()?)),
        Mul => Value::Int(a.as_int()?.wrapping_mul(b.as_int()?)),
        Div => {
            let (x, y) = (a.as_int()?, b.as_int()?);
            if y == 0 {
                return Err(EvalError::DivisionByZero);
            }
            Value::Int(x.wrapping_div(y))
        }
        Mod => {
            let (x, y) = (a.as_int()?, b.as_int()?);
            if y == 0 {
                return Err(EvalError::DivisionByZero);
            }
            Value::Int(x.wrapping_rem(y))
        }
        Lt => Value::Bool(a.as_int()? < b.as_int()?),
        Le => Value::Bool(a.as_int()? <= b.as_int()?),
        Gt => Value::Bool(a.as_int()? > b.as_int()?),
        Ge => Value::Bool(a.as_int()? >= b.as_int()?),
        Eq | Ne => {
            if a.ty() != b.ty() {
                return Err(EvalError::TypeMismatch(format!(
                    "cannot compare {} with {}",
                    a.ty(),
                    b.ty()
                )));
            }
            Value::Bool((a == b) == (op == Eq))
        }
        And => Value::Bool(a.as_bool()? && b.as_bool()?),
        Or => Value::Bool(a.as_bool()? || b.as_bool()?),
    })
}

/// A valuation keyed by dotted variable path, with state tests keyed by
/// `path@state`.
pub type Valuation = BTreeMap<String, Value>;

/// Evaluates a source-level expression against a flat valuation.
pub fn eval_expression(e: &Expr, env: &Valuation) -> Result<Value, EvalError> {
    eval(
        e,
        &|r: &VarRef| {
            let key = r.dotted();
            env.get(&key).copied().ok_or(EvalError::UnboundVariable(key))
        },
        &|s: &StateRef| {
            let key = format!("{}@{}", s.path.join("."), s.state);
            match env.get(&key) {
                Some(v) => v.as_bool(),
                None => Err(EvalError::UnboundVariable(key)),
            }
        },
    )
}

/// Static type of `e`, given the types of its references. Returns the first
/// type error found as a message.
pub fn type_of<V, S>(
    e: &Expr<V, S>,
    var: &impl Fn(&V) -> Result<Type, String>,
    state: &impl Fn(&S) -> Result<(), String>,
) -> Result<Type, String> {
    match e {
        Expr::Const(v) => Ok(v.ty()),
        Expr::Var(r) => var(r),
        Expr::InState(s) => state(s).map(|_| Type::Bool),
        Expr::Unary(op, inner) => {
            let t = type_of(inner, var, state)?;
            let want = match op {
                UnOp::Neg => Type::Int,
                UnOp::Not => Type::Bool,
            };
            if t != want {
                return Err(format!(
                    "operator `{}` expects {want}, found {t}",
                    if *op == UnOp::Neg { "-" } else { "!" }
                ));
            }
            Ok(want)
        }
        Expr::Binary(op, l, r) => {
            let a = type_of(l, var, state)?;
            let b = type_of(r, var, state)?;
            use BinOp::*;
            let (operand, result) = match op {
                Add | Sub | Mul | Div | Mod => (Some(Type::Int), Type::Int),
                Lt | Le | Gt | Ge => (Some(Type::Int), Type::Bool),
                And | Or => (Some(Type::Bool), Type::Bool),
                Eq | Ne => (None, Type::Bool),
            };
            match operand {
                Some(t) if a != t || b != t => Err(format!(
                    "operator `{}` expects {t} operands, found {a} and {b}",
                    op.symbol()
                )),
                None if a != b => Err(format!(
                    "operator `{}` compares {a} with {b}",
                    op.symbol()
                )),
                _ => Ok(result),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assign<V = VarRef, S = StateRef> {
    pub target: V,
    pub value: Expr<V, S>,
}

/// An ordered list of assignments, executed left to right.
pub type Action<V = VarRef, S = StateRef> = Vec<Assign<V, S>>;
