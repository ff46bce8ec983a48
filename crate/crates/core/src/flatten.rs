//! Flattening a closed system into its reachable product automaton, a fixed
//! binary image of it, and a small interpreter that executes the image with
//! the engine's choice scheme so that both produce the same trace.

use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use crate::engine::{EngineConfig, InitError, Rng, RunStatus, TraceEvent, SCHEME_ID};
use crate::model::expr::{apply_binary, apply_unary};
use crate::model::{BinOp, EvalError, Expr, UnOp, Value};
use crate::system::{ConnVar, EndKind, InteractionId, System};
use crate::verify::{explore, Limits, Target};

pub const MAGIC: &[u8; 4] = b"BIPF";
pub const VERSION: u16 = 1;
/// Edge target marking an interaction whose execution fails.
pub const FAULT: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

/// One stack-machine instruction. Programs end with `Ret`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Push(Value),
    Load(u32),
    Store(u32),
    Unary(UnOp),
    Binary(BinOp),
    /// Pops a bool; the program yields `false` when it is false.
    Guard,
    /// Pops a bool and jumps to the absolute address when it is false.
    JumpIfNot(u32),
    Jump(u32),
    /// Aborts with the interned message.
    Fail(u32),
    Ret,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatInteraction {
    pub connector: u32,
    pub ports: Vec<u32>,
    /// Participant variable slots, reported when they change.
    pub watch: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlatEdge {
    pub interaction: u32,
    pub guard: u32,
    pub action: u32,
    /// Target state, or [`FAULT`].
    pub target: u32,
    /// Interned error message for fault edges.
    pub fault: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatAutomaton {
    pub scheme: u32,
    pub strings: Vec<String>,
    /// Name of each variable slot; the first `atom_slots` hold atom
    /// variables, the rest connector scratch variables.
    pub slot_names: Vec<u32>,
    pub atom_slots: u32,
    /// Slot values in the initial state.
    pub init: Vec<Value>,
    pub interactions: Vec<FlatInteraction>,
    pub code: Vec<Op>,
    /// Per state, its maximal enabled interactions in engine order.
    pub states: Vec<Vec<FlatEdge>>,
}

#[derive(Debug, thiserror::Error)]
pub enum FlattenError {
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("state space exceeds the limits after {states} states")]
    ResourceLimit { states: usize },
}

struct Compiler {
    strings: Vec<String>,
    interned: HashMap<String, u32>,
    code: Vec<Op>,
    pool: HashMap<Vec<Op>, u32>,
}

impl Compiler {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.interned.get(s) {
            return i;
        }
        let i = self.strings.len() as u32;
        self.strings.push(s.to_string());
        self.interned.insert(s.to_string(), i);
        i
    }

    /// Places `prog` (addresses relative to its start) in the pool.
    fn add(&mut self, mut prog: Vec<Op>) -> u32 {
        prog.push(Op::Ret);
        if let Some(&at) = self.pool.get(&prog) {
            return at;
        }
        let at = self.code.len() as u32;
        self.code.extend(prog.iter().map(|op| match *op {
            Op::JumpIfNot(t) => Op::JumpIfNot(t + at),
            Op::Jump(t) => Op::Jump(t + at),
            op => op,
        }));
        self.pool.insert(prog, at);
        at
    }
}

fn expr<V, S>(out: &mut Vec<Op>, e: &Expr<V, S>, slot: &dyn Fn(&V) -> u32) {
    match e {
        Expr::Const(v) => out.push(Op::Push(*v)),
        Expr::Var(v) => out.push(Op::Load(slot(v))),
        Expr::InState(_) => unreachable!("runtime expressions carry no state tests"),
        Expr::Unary(op, a) => {
            expr(out, a, slot);
            out.push(Op::Unary(*op));
        }
        Expr::Binary(op, a, b) => {
            expr(out, a, slot);
            expr(out, b, slot);
            out.push(Op::Binary(*op));
        }
    }
}

struct Layout {
    atom_base: Vec<u32>,
    node_base: Vec<u32>,
}

impl Layout {
    fn conn_slot(&self, sys: &System, node: usize, v: ConnVar) -> u32 {
        match v {
            ConnVar::Own(i) => self.node_base[node] + i as u32,
            ConnVar::End { end, var } => match sys.nodes[node].ends[end].kind {
                EndKind::Port { atom, .. } => self.atom_base[atom] + var as u32,
                EndKind::Node(child) => self.node_base[child] + var as u32,
            },
        }
    }
}

/// Reset, up-flow and connector guards of an interaction.
fn guard_program(sys: &System, lay: &Layout, id: InteractionId) -> Vec<Op> {
    let inter = &sys.interactions[id];
    let mut p = Vec::new();
    for &(n, _) in &inter.nodes {
        for (i, (_, ty)) in sys.nodes[n].vars.iter().enumerate() {
            p.push(Op::Push(Value::default_for(*ty)));
            p.push(Op::Store(lay.node_base[n] + i as u32));
        }
    }
    for &(n, m) in &inter.nodes {
        let node = &sys.nodes[n];
        let member = &node.members[m];
        let slot = |v: &ConnVar| lay.conn_slot(sys, n, *v);
        for a in &node.up {
            // up-flow only writes the connector's own variables
            let own = matches!(a.target, ConnVar::Own(_));
            if own && a.ends.iter().all(|&e| member[e].is_some()) {
                expr(&mut p, &a.value, &slot);
                p.push(Op::Store(slot(&a.target)));
            }
        }
        if let Some(g) = &node.guard {
            expr(&mut p, g, &slot);
            p.push(Op::Guard);
        }
    }
    p
}

/// Down-flow, then per participant the first offered transition whose guard
/// holds in `states[atom]`.
fn action_program(
    sys: &System,
    lay: &Layout,
    c: &mut Compiler,
    id: InteractionId,
    states: &[usize],
) -> Vec<Op> {
    let inter = &sys.interactions[id];
    let mut p = Vec::new();
    for &(n, m) in inter.nodes.iter().rev() {
        let node = &sys.nodes[n];
        let member = &node.members[m];
        let slot = |v: &ConnVar| lay.conn_slot(sys, n, *v);
        for a in &node.down {
            if a.ends.iter().all(|&e| member[e].is_some()) {
                expr(&mut p, &a.value, &slot);
                p.push(Op::Store(slot(&a.target)));
            }
        }
    }
    for &(a, port) in &inter.participants {
        let atom = &sys.atoms[a];
        let base = lay.atom_base[a];
        let slot = |&i: &usize| base + i as u32;
        let mut ends = Vec::new();
        for &t in &atom.offers[states[a]][port] {
            let tr = &atom.transitions[t];
            let skip = match &tr.guard {
                Some(g) => {
                    expr(&mut p, g, &slot);
                    p.push(Op::JumpIfNot(0));
                    Some(p.len() - 1)
                }
                None => None,
            };
            for asg in &tr.action {
                expr(&mut p, &asg.value, &slot);
                p.push(Op::Store(slot(&asg.target)));
            }
            ends.push(p.len());
            p.push(Op::Jump(0));
            if let Some(at) = skip {
                p[at] = Op::JumpIfNot(p.len() as u32);
            }
        }
        let msg = c.intern(&format!(
            "no transition of `{}` on port `{}` is enabled after the down-flow",
            atom.path, atom.ports[port].name
        ));
        p.push(Op::Fail(msg));
        let done = p.len() as u32;
        for at in ends {
            p[at] = Op::Jump(done);
        }
    }
    p
}

/// Explores the reachable configurations of `sys` and compiles them with
/// their maximal interactions into tables.
pub fn flatten(sys: &System, limits: Limits) -> Result<FlatAutomaton, FlattenError> {
    let space = explore(sys, limits)?;
    if space.truncated {
        return Err(FlattenError::ResourceLimit {
            states: space.states.len(),
        });
    }
    let mut c = Compiler {
        strings: Vec::new(),
        interned: HashMap::new(),
        code: Vec::new(),
        pool: HashMap::new(),
    };
    let mut slot_names = Vec::new();
    let mut init = Vec::new();
    let mut atom_base = Vec::new();
    for (a, atom) in sys.atoms.iter().enumerate() {
        atom_base.push(slot_names.len() as u32);
        for (i, (name, _)) in atom.vars.iter().enumerate() {
            slot_names.push(c.intern(&format!("{}.{name}", atom.path)));
            init.push(space.states[0].atoms[a].vars[i]);
        }
    }
    let atom_slots = slot_names.len() as u32;
    let mut node_base = Vec::new();
    for node in &sys.nodes {
        node_base.push(slot_names.len() as u32);
        for (name, ty) in &node.vars {
            slot_names.push(c.intern(&format!("{}.{name}", node.name)));
            init.push(Value::default_for(*ty));
        }
    }
    let lay = Layout {
        atom_base,
        node_base,
    };
    let interactions = sys
        .interactions
        .iter()
        .map(|inter| FlatInteraction {
            connector: c.intern(&sys.nodes[inter.top].name),
            ports: sys.port_labels(inter).iter().map(|l| c.intern(l)).collect(),
            watch: inter
                .participants
                .iter()
                .flat_map(|&(a, _)| {
                    let base = lay.atom_base[a];
                    (0..sys.atoms[a].vars.len() as u32).map(move |i| base + i)
                })
                .collect(),
        })
        .collect();
    let guards: Vec<u32> = (0..sys.interactions.len())
        .map(|id| {
            let p = guard_program(sys, &lay, id);
            c.add(p)
        })
        .collect();
    let mut states = Vec::with_capacity(space.states.len());
    for (cfg, edges) in space.states.iter().zip(&space.edges) {
        let control: Vec<usize> = cfg.atoms.iter().map(|a| a.state).collect();
        let mut out = Vec::with_capacity(edges.len());
        for e in edges {
            let prog = action_program(sys, &lay, &mut c, e.interaction, &control);
            let action = c.add(prog);
            let (target, fault) = match &e.target {
                Target::State(j) => (*j as u32, NONE),
                Target::Fault(msg) => (FAULT, c.intern(msg)),
            };
            out.push(FlatEdge {
                interaction: e.interaction as u32,
                guard: guards[e.interaction],
                action,
                target,
                fault,
            });
        }
        states.push(out);
    }
    Ok(FlatAutomaton {
        scheme: SCHEME_ID,
        strings: c.strings,
        slot_names,
        atom_slots,
        init,
        interactions,
        code: c.code,
        states,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Fail(String),
    #[error("malformed program at {0}")]
    Malformed(u32),
}

impl FlatAutomaton {
    /// Runs the program at `pc` on `mem`; `Ok(false)` when a guard fails.
    pub fn exec(&self, mut pc: u32, mem: &mut [Value]) -> Result<bool, ProgramError> {
        let mut stack: Vec<Value> = Vec::with_capacity(16);
        let pop = |stack: &mut Vec<Value>, pc| stack.pop().ok_or(ProgramError::Malformed(pc));
        loop {
            let op = *self
                .code
                .get(pc as usize)
                .ok_or(ProgramError::Malformed(pc))?;
            pc += 1;
            match op {
                Op::Push(v) => stack.push(v),
                Op::Load(s) => stack.push(*mem.get(s as usize).ok_or(ProgramError::Malformed(pc))?),
                Op::Store(s) => {
                    let v = pop(&mut stack, pc)?;
                    *mem.get_mut(s as usize).ok_or(ProgramError::Malformed(pc))? = v;
                }
                Op::Unary(u) => {
                    let v = pop(&mut stack, pc)?;
                    stack.push(apply_unary(u, v)?);
                }
                Op::Binary(b) => {
                    let r = pop(&mut stack, pc)?;
                    let l = pop(&mut stack, pc)?;
                    stack.push(apply_binary(b, l, r)?);
                }
                Op::Guard => {
                    if !pop(&mut stack, pc)?.as_bool()? {
                        return Ok(false);
                    }
                }
                Op::JumpIfNot(t) => {
                    if !pop(&mut stack, pc)?.as_bool()? {
                        pc = t;
                    }
                }
                Op::Jump(t) => pc = t,
                Op::Fail(m) => {
                    let msg = self.strings.get(m as usize).cloned().unwrap_or_default();
                    return Err(ProgramError::Fail(msg));
                }
                Op::Ret => return Ok(true),
            }
        }
    }

    pub fn edge_count(&self) -> usize {
        self.states.iter().map(Vec::len).sum()
    }

    /// States without outgoing interactions.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&s| self.states[s].is_empty())
            .collect()
    }
}

// ---- image -----------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("not an automaton image")]
    BadMagic,
    #[error("image format version {found} is not supported (expected {VERSION})")]
    VersionMismatch { found: u16 },
    #[error("image checksum does not match its contents")]
    ChecksumMismatch,
    #[error("malformed image: {0}")]
    Malformed(String),
}

const HEADER: usize = 4 + 2 + 8;

fn content_hash(payload: &[u8]) -> u64 {
    let d = Sha256::digest(payload);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("table sizes fit in u32"));
    }
    fn value(&mut self, v: Value) {
        match v {
            Value::Int(i) => {
                self.u8(0);
                self.0.extend_from_slice(&i.to_le_bytes());
            }
            Value::Bool(b) => {
                self.u8(1);
                self.0.extend_from_slice(&(b as i64).to_le_bytes());
            }
        }
    }
}

const UNOPS: [UnOp; 2] = [UnOp::Neg, UnOp::Not];
const BINOPS: [BinOp; 13] = [
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

/// Serializes `f`: magic, version, content hash, then little-endian tables.
pub fn emit(f: &FlatAutomaton) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u32(f.scheme);
    w.len(f.strings.len());
    for s in &f.strings {
        w.len(s.len());
        w.0.extend_from_slice(s.as_bytes());
    }
    w.u32(f.atom_slots);
    w.len(f.slot_names.len());
    for (name, v) in f.slot_names.iter().zip(&f.init) {
        w.u32(*name);
        w.value(*v);
    }
    w.len(f.interactions.len());
    for i in &f.interactions {
        w.u32(i.connector);
        w.len(i.ports.len());
        i.ports.iter().for_each(|&p| w.u32(p));
        w.len(i.watch.len());
        i.watch.iter().for_each(|&p| w.u32(p));
    }
    w.len(f.code.len());
    for op in &f.code {
        match *op {
            Op::Push(v) => {
                w.u8(0);
                w.value(v);
            }
            Op::Load(s) => {
                w.u8(1);
                w.u32(s);
            }
            Op::Store(s) => {
                w.u8(2);
                w.u32(s);
            }
            Op::Unary(u) => {
                w.u8(3);
                w.u8(UNOPS.iter().position(|&x| x == u).expect("listed") as u8);
            }
            Op::Binary(b) => {
                w.u8(4);
                w.u8(BINOPS.iter().position(|&x| x == b).expect("listed") as u8);
            }
            Op::Guard => w.u8(5),
            Op::JumpIfNot(t) => {
                w.u8(6);
                w.u32(t);
            }
            Op::Jump(t) => {
                w.u8(7);
                w.u32(t);
            }
            Op::Fail(m) => {
                w.u8(8);
                w.u32(m);
            }
            Op::Ret => w.u8(9),
        }
    }
    w.len(f.states.len());
    for edges in &f.states {
        w.len(edges.len());
        for e in edges {
            for v in [e.interaction, e.guard, e.action, e.target, e.fault] {
                w.u32(v);
            }
        }
    }
    let payload = w.0;
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&content_hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Reader<'b> {
    buf: &'b [u8],
    at: usize,
}

fn malformed(m: impl Into<String>) -> ImageError {
    ImageError::Malformed(m.into())
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ImageError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| malformed("unexpected end of data"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ImageError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ImageError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    /// A table length, bounded by the bytes left so corrupt counts cannot
    /// trigger huge allocations.
    fn len(&mut self) -> Result<usize, ImageError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.at {
            return Err(malformed("table length exceeds image size"));
        }
        Ok(n)
    }
    fn value(&mut self) -> Result<Value, ImageError> {
        let tag = self.u8()?;
        let raw = i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        match (tag, raw) {
            (0, i) => Ok(Value::Int(i)),
            (1, 0) => Ok(Value::Bool(false)),
            (1, 1) => Ok(Value::Bool(true)),
            _ => Err(malformed("bad value encoding")),
        }
    }
    fn u32s(&mut self) -> Result<Vec<u32>, ImageError> {
        let n = self.len()?;
        (0..n).map(|_| self.u32()).collect()
    }
}

/// Parses and validates an image produced by [`emit`].
pub fn load(bytes: &[u8]) -> Result<FlatAutomaton, ImageError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ImageError::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(ImageError::ChecksumMismatch);
    }
    let found = u16::from_le_bytes([bytes[4], bytes[5]]);
    if found != VERSION {
        return Err(ImageError::VersionMismatch { found });
    }
    if bytes.len() < HEADER {
        return Err(ImageError::ChecksumMismatch);
    }
    let hash = u64::from_le_bytes(bytes[6..HEADER].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER..];
    if content_hash(payload) != hash {
        return Err(ImageError::ChecksumMismatch);
    }
    let mut r = Reader { buf: payload, at: 0 };
    let scheme = r.u32()?;
    if scheme != SCHEME_ID {
        return Err(malformed(format!("unknown choice scheme {scheme}")));
    }
    let n = r.len()?;
    let mut strings = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.len()?;
        let s = std::str::from_utf8(r.take(len)?).map_err(|_| malformed("string is not UTF-8"))?;
        strings.push(s.to_string());
    }
    let atom_slots = r.u32()?;
    let n = r.len()?;
    let (mut slot_names, mut init) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        slot_names.push(r.u32()?);
        init.push(r.value()?);
    }
    let n = r.len()?;
    let mut interactions = Vec::with_capacity(n);
    for _ in 0..n {
        interactions.push(FlatInteraction {
            connector: r.u32()?,
            ports: r.u32s()?,
            watch: r.u32s()?,
        });
    }
    let n = r.len()?;
    let mut code = Vec::with_capacity(n);
    for _ in 0..n {
        code.push(match r.u8()? {
            0 => Op::Push(r.value()?),
            1 => Op::Load(r.u32()?),
            2 => Op::Store(r.u32()?),
            3 => Op::Unary(*UNOPS.get(r.u8()? as usize).ok_or_else(|| malformed("bad operator"))?),
            4 => Op::Binary(*BINOPS.get(r.u8()? as usize).ok_or_else(|| malformed("bad operator"))?),
            5 => Op::Guard,
            6 => Op::JumpIfNot(r.u32()?),
            7 => Op::Jump(r.u32()?),
            8 => Op::Fail(r.u32()?),
            9 => Op::Ret,
            op => return Err(malformed(format!("unknown opcode {op}"))),
        });
    }
    let n = r.len()?;
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let m = r.len()?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            edges.push(FlatEdge {
                interaction: r.u32()?,
                guard: r.u32()?,
                action: r.u32()?,
                target: r.u32()?,
                fault: r.u32()?,
            });
        }
        states.push(edges);
    }
    if r.at != payload.len() {
        return Err(malformed("trailing bytes"));
    }
    let f = FlatAutomaton {
        scheme,
        strings,
        slot_names,
        atom_slots,
        init,
        interactions,
        code,
        states,
    };
    check_tables(&f)?;
    Ok(f)
}

fn check_tables(f: &FlatAutomaton) -> Result<(), ImageError> {
    let strings = f.strings.len() as u32;
    let slots = f.slot_names.len() as u32;
    let code = f.code.len() as u32;
    let ok = |cond: bool, what: &str| if cond { Ok(()) } else { Err(malformed(what.to_string())) };
    ok(f.states.is_empty() || f.states.len() < FAULT as usize, "too many states")?;
    ok(f.atom_slots <= slots, "atom slot count")?;
    ok(f.slot_names.iter().all(|&s| s < strings), "slot name index")?;
    for i in &f.interactions {
        ok(i.connector < strings && i.ports.iter().all(|&p| p < strings), "string index")?;
        ok(i.watch.iter().all(|&w| w < f.atom_slots), "watched slot")?;
    }
    for op in &f.code {
        match *op {
            Op::Load(s) | Op::Store(s) => ok(s < slots, "slot index")?,
            Op::Jump(t) | Op::JumpIfNot(t) => ok(t < code, "jump target")?,
            Op::Fail(m) => ok(m < strings, "message index")?,
            _ => {}
        }
    }
    for edges in &f.states {
        for e in edges {
            ok((e.interaction as usize) < f.interactions.len(), "interaction index")?;
            ok(e.guard < code && e.action < code, "program offset")?;
            if e.target == FAULT {
                ok(e.fault < strings, "fault message")?;
            } else {
                ok((e.target as usize) < f.states.len(), "edge target")?;
            }
        }
    }
    Ok(())
}

// ---- interpreter -----------------------------------------------------------

/// Executes a flat automaton with the engine's seeded choice.
pub struct Interpreter<'f> {
    f: &'f FlatAutomaton,
    state: usize,
    mem: Vec<Value>,
    rng: Rng,
    step: u64,
}

pub enum Step {
    Fired(TraceEvent),
    Deadlock,
    Error(String),
}

impl<'f> Interpreter<'f> {
    pub fn new(f: &'f FlatAutomaton, seed: u64) -> Self {
        Interpreter {
            f,
            state: 0,
            mem: f.init.clone(),
            rng: Rng::new(seed),
            step: 0,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Atom variable values, in slot order.
    pub fn atom_values(&self) -> &[Value] {
        &self.mem[..self.f.atom_slots as usize]
    }

    pub fn step(&mut self) -> Step {
        let f = self.f;
        let Some(edges) = f.states.get(self.state) else {
            return Step::Deadlock;
        };
        if edges.is_empty() {
            return Step::Deadlock;
        }
        let e = edges[self.rng.choose(edges.len())];
        if e.target == FAULT {
            return Step::Error(f.strings[e.fault as usize].clone());
        }
        let inter = &f.interactions[e.interaction as usize];
        let before: Vec<Value> = inter.watch.iter().map(|&s| self.mem[s as usize]).collect();
        let mut next = self.mem.clone();
        match f.exec(e.guard, &mut next) {
            Ok(true) => {}
            Ok(false) => return Step::Error("image guard is false on a listed edge".into()),
            Err(err) => return Step::Error(err.to_string()),
        }
        if let Err(err) = f.exec(e.action, &mut next) {
            return Step::Error(err.to_string());
        }
        let mut writes = BTreeMap::new();
        for (&s, old) in inter.watch.iter().zip(before) {
            if next[s as usize] != old {
                writes.insert(f.strings[f.slot_names[s as usize] as usize].clone(), next[s as usize]);
            }
        }
        let ev = TraceEvent {
            step: self.step,
            connector: f.strings[inter.connector as usize].clone(),
            ports: inter.ports.iter().map(|&p| f.strings[p as usize].clone()).collect(),
            writes,
        };
        self.mem = next;
        self.state = e.target as usize;
        self.step += 1;
        Step::Fired(ev)
    }
}

/// Runs like [`crate::engine::run`], with the same step bound and statuses.
pub fn interpret(f: &FlatAutomaton, cfg: &EngineConfig, mut sink: impl FnMut(&TraceEvent)) -> RunStatus {
    let mut it = Interpreter::new(f, cfg.seed);
    loop {
        if cfg.max_steps.is_some_and(|m| it.step >= m) {
            return RunStatus::Completed { steps: it.step };
        }
        match it.step() {
            Step::Fired(ev) => sink(&ev),
            Step::Deadlock => return RunStatus::Deadlock { step: it.step },
            Step::Error(message) => {
                return RunStatus::Error {
                    step: it.step,
                    message,
                }
            }
        }
    }
}
