//! Explicit-state verification: breadth-first exploration under the engine's
//! semantics, deadlock and safety checks with shortest counterexamples, and a
//! compositional deadlock check over an abstraction of control states.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::engine::{self, filter_maximal, trace_event, InitError, TraceEvent};
use crate::interaction::{self, fire_into, Scratch};
use crate::system::{AtomId, Configuration, InteractionId, SafetyProperty, System};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub max_states: usize,
    pub max_seconds: Option<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: 1_000_000,
            max_seconds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    State(usize),
    /// Firing failed; the message is the engine's error.
    Fault(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub interaction: InteractionId,
    pub target: Target,
}

/// Reachable configurations in breadth-first discovery order; state 0 is
/// the initial configuration.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub states: Vec<Configuration>,
    /// Outgoing edges of the first `edges.len()` states, in the order the
    /// engine would list them.
    pub edges: Vec<Vec<Edge>>,
    /// BFS tree: predecessor and interaction of every state but the first.
    pub parent: Vec<Option<(usize, InteractionId)>>,
    pub truncated: bool,
    pub elapsed: Duration,
}

impl StateSpace {
    pub fn expanded(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn faults(&self) -> usize {
        self.edges
            .iter()
            .flatten()
            .filter(|e| matches!(e.target, Target::Fault(_)))
            .count()
    }

    pub fn index(&self) -> HashMap<&Configuration, usize> {
        self.states.iter().enumerate().map(|(i, s)| (s, i)).collect()
    }
}

pub fn explore(sys: &System, limits: Limits) -> Result<StateSpace, InitError> {
    let start = Instant::now();
    let init = engine::initialize(sys)?;
    let mut index: HashMap<Configuration, usize> = HashMap::new();
    index.insert(init.clone(), 0);
    let mut space = StateSpace {
        states: vec![init],
        edges: Vec::new(),
        parent: vec![None],
        truncated: false,
        elapsed: Duration::ZERO,
    };
    let mut scratch = Scratch::new(sys);
    'bfs: while space.edges.len() < space.states.len() {
        let i = space.edges.len();
        if i.is_multiple_of(256) {
            if let Some(max) = limits.max_seconds {
                if start.elapsed().as_secs_f64() > max {
                    space.truncated = true;
                    break;
                }
            }
        }
        let cfg = space.states[i].clone();
        let choices = filter_maximal(sys, interaction::enabled_interactions(sys, &cfg));
        let mut out = Vec::with_capacity(choices.len());
        for b in choices {
            let mut next = cfg.clone();
            let target = match fire_into(sys, &mut next, b.id, &mut scratch) {
                Err(e) => Target::Fault(e.to_string()),
                Ok(()) => match index.get(&next) {
                    Some(&j) => Target::State(j),
                    None => {
                        if space.states.len() >= limits.max_states {
                            space.truncated = true;
                            break 'bfs;
                        }
                        let j = space.states.len();
                        index.insert(next.clone(), j);
                        space.states.push(next);
                        space.parent.push(Some((i, b.id)));
                        Target::State(j)
                    }
                },
            };
            out.push(Edge {
                interaction: b.id,
                target,
            });
        }
        space.edges.push(out);
    }
    space.elapsed = start.elapsed();
    Ok(space)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Holds,
    Violated,
    PotentialViolation,
    ResourceLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Holds => "Holds",
            Status::Violated => "Violated",
            Status::PotentialViolation => "PotentialViolation",
            Status::ResourceLimit => "ResourceLimit",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub trace: Vec<TraceEvent>,
    /// The violating configuration, rendered as `path@state{var=value}`.
    pub state: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub property: String,
    pub status: Status,
    pub states_explored: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    /// Abstract control states that the compositional check could not rule out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Verdict {
    fn new(property: &str, status: Status, space: &StateSpace) -> Self {
        Verdict {
            property: property.to_string(),
            status,
            states_explored: space.states.len(),
            counterexample: None,
            candidates: None,
            elapsed: space.elapsed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdicts always serialize")
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {}", self.property, self.status);
        if let Some(c) = &self.candidates {
            s.push_str(&format!(", {} candidates", c.len()));
        }
        s.push_str(&format!(" ({} states)", self.states_explored));
        if let Some(cx) = &self.counterexample {
            s.push_str(&format!(", counterexample of {} steps", cx.trace.len()));
        }
        s
    }
}

/// The trace of BFS-tree interactions leading to state `target`.
pub fn path_to(sys: &System, space: &StateSpace, target: usize) -> Vec<TraceEvent> {
    let mut ids = Vec::new();
    let mut cur = target;
    while let Some((p, id)) = space.parent[cur] {
        ids.push((p, id, cur));
        cur = p;
    }
    ids.reverse();
    ids.iter()
        .enumerate()
        .map(|(step, &(p, id, c))| {
            trace_event(sys, step as u64, id, &space.states[p], &space.states[c])
        })
        .collect()
}

fn counterexample(sys: &System, space: &StateSpace, target: usize) -> Counterexample {
    Counterexample {
        trace: path_to(sys, space, target),
        state: space.states[target].describe(sys),
    }
}

/// Shortest path to an expanded state without outgoing edges.
pub fn check_deadlock(sys: &System, space: &StateSpace) -> Verdict {
    if let Some(i) = space.edges.iter().position(Vec::is_empty) {
        let mut v = Verdict::new("deadlock", Status::Violated, space);
        v.counterexample = Some(counterexample(sys, space, i));
        return v;
    }
    let status = if space.truncated {
        Status::ResourceLimit
    } else {
        Status::Holds
    };
    Verdict::new("deadlock", status, space)
}

/// Shortest path to a reachable state where `prop` is false. A predicate
/// that fails to evaluate counts as false.
pub fn check_safety(sys: &System, space: &StateSpace, prop: &SafetyProperty) -> Verdict {
    if let Some(i) = space
        .states
        .iter()
        .position(|s| !prop.holds(s).unwrap_or(false))
    {
        let mut v = Verdict::new(&prop.name, Status::Violated, space);
        v.counterexample = Some(counterexample(sys, space, i));
        return v;
    }
    let status = if space.truncated {
        Status::ResourceLimit
    } else {
        Status::Holds
    };
    Verdict::new(&prop.name, status, space)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("step {step}: `{connector}` with {ports:?} is not a maximal enabled interaction")]
    NotEnabled {
        step: usize,
        connector: String,
        ports: Vec<String>,
    },
    #[error("step {step}: firing failed: {message}")]
    Fault { step: usize, message: String },
    #[error("step {step}: recorded writes differ from the replayed ones")]
    Diverged { step: usize },
}

/// Replays `trace` through the engine semantics, checking each event, and
/// returns the final configuration.
pub fn replay(sys: &System, trace: &[TraceEvent]) -> Result<Configuration, ReplayError> {
    let mut cfg = engine::initialize(sys)?;
    for (step, ev) in trace.iter().enumerate() {
        let enabled = engine::maximal_enabled(sys, &cfg);
        let chosen = enabled.iter().find(|b| {
            let i = &sys.interactions[b.id];
            sys.nodes[i.top].name == ev.connector && sys.port_labels(i) == ev.ports
        });
        let Some(b) = chosen else {
            return Err(ReplayError::NotEnabled {
                step,
                connector: ev.connector.clone(),
                ports: ev.ports.clone(),
            });
        };
        let next = interaction::fire(sys, &cfg, b.id).map_err(|e| ReplayError::Fault {
            step,
            message: e.to_string(),
        })?;
        let got = trace_event(sys, ev.step, b.id, &cfg, &next);
        if got.writes != ev.writes {
            return Err(ReplayError::Diverged { step });
        }
        cfg = next;
    }
    Ok(cfg)
}

/// Upper bound on abstract states visited by the compositional search.
pub const SEARCH_BUDGET: usize = 200_000;
/// Candidates listed in a verdict; the search stops once this many are known.
pub const MAX_CANDIDATES: usize = 64;

/// The data-blind abstraction used by the compositional check.
struct Abstraction<'s> {
    sys: &'s System,
    /// Locally reachable control states per atom.
    reach: Vec<Vec<usize>>,
    /// Place index of (atom, state).
    place: Vec<Vec<usize>>,
    places: usize,
    initial: Vec<usize>,
    /// Per interaction and participant: (from, to) place pairs of the atom
    /// transitions it may use.
    moves: Vec<Vec<Vec<(usize, usize)>>>,
    /// Interactions enabled whatever the data, as required control states
    /// per participant.
    sure: Vec<Vec<(AtomId, Vec<bool>)>>,
}

impl<'s> Abstraction<'s> {
    fn new(sys: &'s System) -> Self {
        let mut used = vec![Vec::new(); sys.atoms.len()];
        for (a, atom) in sys.atoms.iter().enumerate() {
            used[a] = vec![false; atom.ports.len()];
        }
        for i in &sys.interactions {
            for &(a, p) in &i.participants {
                used[a][p] = true;
            }
        }
        let mut reach = Vec::new();
        for (a, atom) in sys.atoms.iter().enumerate() {
            let mut seen = vec![false; atom.states.len()];
            let mut stack = vec![atom.init_target];
            while let Some(s) = stack.pop() {
                if std::mem::replace(&mut seen[s], true) {
                    continue;
                }
                for t in &atom.transitions {
                    if t.from == s && used[a][t.port] {
                        stack.push(t.to);
                    }
                }
            }
            reach.push((0..atom.states.len()).filter(|&s| seen[s]).collect());
        }
        let mut place = Vec::new();
        let mut n = 0;
        for atom in &sys.atoms {
            place.push((n..n + atom.states.len()).collect::<Vec<_>>());
            n += atom.states.len();
        }
        let initial = sys
            .atoms
            .iter()
            .enumerate()
            .map(|(a, atom)| place[a][atom.init_target])
            .collect();
        let moves = sys
            .interactions
            .iter()
            .map(|i| {
                i.participants
                    .iter()
                    .map(|&(a, p)| {
                        sys.atoms[a]
                            .transitions
                            .iter()
                            .filter(|t| t.port == p)
                            .map(|t| (place[a][t.from], place[a][t.to]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let sure = sys
            .interactions
            .iter()
            .map(|i| {
                let data_free = i.nodes.iter().all(|&(n, _)| {
                    let node = &sys.nodes[n];
                    node.guard.as_ref().is_none_or(|g| g.is_true_constant())
                        && node.up.iter().all(|a| !a.value.may_divide())
                });
                if !data_free {
                    return Vec::new();
                }
                i.participants
                    .iter()
                    .map(|&(a, p)| {
                        let atom = &sys.atoms[a];
                        let mut ok = vec![false; atom.states.len()];
                        for t in &atom.transitions {
                            if t.port == p && t.guard.as_ref().is_none_or(|g| g.is_true_constant())
                            {
                                ok[t.from] = true;
                            }
                        }
                        (a, ok)
                    })
                    .collect()
            })
            .collect();
        Abstraction {
            sys,
            reach,
            place,
            places: n,
            initial,
            moves,
            sure,
        }
    }

    /// Largest trap of the control net avoiding the places in `avoid`.
    fn max_trap(&self, avoid: &[usize]) -> Vec<bool> {
        let mut s = vec![true; self.places];
        for &p in avoid {
            s[p] = false;
        }
        loop {
            let mut changed = false;
            for parts in &self.moves {
                // a firing that leaves the trap needs every participant to
                // have a move whose target lies outside it
                if parts.iter().any(|m| m.iter().all(|&(_, to)| s[to])) {
                    continue;
                }
                for m in parts {
                    for &(from, to) in m {
                        if s[from] && !s[to] {
                            s[from] = false;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return s;
            }
        }
    }

    /// True if a marked trap proves the control vector unreachable.
    fn excluded(&self, vector: &[usize]) -> Option<Vec<bool>> {
        let avoid: Vec<usize> = vector
            .iter()
            .enumerate()
            .map(|(a, &s)| self.place[a][s])
            .collect();
        let trap = self.max_trap(&avoid);
        self.initial.iter().any(|&p| trap[p]).then_some(trap)
    }

    fn surely_enabled(&self, i: usize, vector: &[Option<usize>]) -> Option<bool> {
        let req = &self.sure[i];
        if req.is_empty() {
            return Some(false);
        }
        let mut all = true;
        for (a, ok) in req {
            match vector[*a] {
                Some(s) if !ok[s] => return Some(false),
                Some(_) => {}
                None => all = false,
            }
        }
        all.then_some(true)
    }
}

/// Result of the abstract search.
pub struct Candidates {
    pub vectors: Vec<Vec<usize>>,
    /// The search budget ran out before the product was covered.
    pub incomplete: bool,
}

/// Control vectors in the product of locally reachable states where no
/// interaction is enabled independently of data and no initially marked trap
/// excludes the vector.
pub fn deadlock_candidates(sys: &System) -> Candidates {
    let abs = Abstraction::new(sys);
    let order = search_order(sys);
    let mut search = Search {
        abs: &abs,
        order: &order,
        vector: vec![None; sys.atoms.len()],
        traps: Vec::new(),
        found: Vec::new(),
        visited: 0,
        incomplete: false,
    };
    search.go(0);
    Candidates {
        vectors: search.found,
        incomplete: search.incomplete,
    }
}

/// Atoms ordered so that each is connected to earlier ones where possible.
fn search_order(sys: &System) -> Vec<AtomId> {
    let n = sys.atoms.len();
    let mut adj = vec![vec![0usize; n]; n];
    for i in &sys.interactions {
        for &(a, _) in &i.participants {
            for &(b, _) in &i.participants {
                if a != b {
                    adj[a][b] += 1;
                }
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    while order.len() < n {
        let next = (0..n)
            .filter(|&a| !placed[a])
            .max_by_key(|&a| {
                let link: usize = order.iter().map(|&b| adj[a][b]).sum();
                let degree: usize = adj[a].iter().sum();
                (link, degree, std::cmp::Reverse(a))
            })
            .expect("unplaced atom exists");
        placed[next] = true;
        order.push(next);
    }
    order
}

struct Search<'a, 's> {
    abs: &'a Abstraction<'s>,
    order: &'a [AtomId],
    vector: Vec<Option<usize>>,
    traps: Vec<Vec<bool>>,
    found: Vec<Vec<usize>>,
    visited: usize,
    incomplete: bool,
}

impl Search<'_, '_> {
    fn stop(&self) -> bool {
        self.incomplete || self.found.len() >= MAX_CANDIDATES
    }

    /// A known trap avoids every completion of the current partial vector.
    fn trapped(&self, depth: usize) -> bool {
        self.traps.iter().any(|t| {
            self.order.iter().enumerate().all(|(k, &a)| {
                if k < depth {
                    let s = self.vector[a].expect("assigned");
                    !t[self.abs.place[a][s]]
                } else {
                    self.abs.reach[a].iter().all(|&s| !t[self.abs.place[a][s]])
                }
            })
        })
    }

    fn go(&mut self, depth: usize) {
        if self.stop() {
            return;
        }
        self.visited += 1;
        if self.visited > SEARCH_BUDGET {
            self.incomplete = true;
            return;
        }
        for i in 0..self.abs.sys.interactions.len() {
            if self.abs.surely_enabled(i, &self.vector) == Some(true) {
                return;
            }
        }
        if self.trapped(depth) {
            return;
        }
        if depth == self.order.len() {
            let v: Vec<usize> = self.vector.iter().map(|s| s.expect("complete")).collect();
            match self.abs.excluded(&v) {
                Some(trap) => self.traps.push(trap),
                None => self.found.push(v),
            }
            return;
        }
        let a = self.order[depth];
        for k in 0..self.abs.reach[a].len() {
            self.vector[a] = Some(self.abs.reach[a][k]);
            self.go(depth + 1);
            if self.stop() {
                break;
            }
        }
        self.vector[a] = None;
    }
}

fn describe_vector(sys: &System, v: &[usize]) -> String {
    sys.atoms
        .iter()
        .zip(v)
        .map(|(a, &s)| format!("{}@{}", a.path, a.states[s]))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deadlock check over the control abstraction. Candidates that survive the
/// abstraction are settled by exact exploration within `limits`; if that
/// does not finish, they are reported as potential violations.
pub fn check_deadlock_compositional(sys: &System, limits: Limits) -> Result<Verdict, InitError> {
    let start = Instant::now();
    let cands = deadlock_candidates(sys);
    let listed: Vec<String> = cands
        .vectors
        .iter()
        .map(|v| describe_vector(sys, v))
        .collect();
    if cands.vectors.is_empty() && !cands.incomplete {
        return Ok(Verdict {
            property: "deadlock".into(),
            status: Status::Holds,
            states_explored: 0,
            counterexample: None,
            candidates: Some(Vec::new()),
            elapsed: start.elapsed(),
        });
    }
    let space = explore(sys, limits)?;
    let mut v = check_deadlock(sys, &space);
    if v.status == Status::ResourceLimit {
        v.status = Status::PotentialViolation;
    }
    v.candidates = Some(listed);
    v.elapsed = start.elapsed();
    Ok(v)
}
