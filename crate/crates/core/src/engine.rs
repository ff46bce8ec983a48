//! The execution engine: initialization, priority filtering, seeded choice
//! among maximal interactions, and trace emission.

use std::collections::BTreeMap;
use std::io::Write;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::Serialize;

use crate::interaction::{self, fire_into, BoundInteraction, FireError, Scratch};
use crate::model::{EvalError, Value};
use crate::system::{AtomState, Configuration, InteractionId, System};

/// Identifies the PRNG and the way a choice index is drawn from it:
/// xoshiro256** seeded through SplitMix64, index = high 64 bits of
/// `next_u64() * n`.
pub const SCHEME_ID: u32 = 1;

/// The engine's source of nondeterministic choices.
#[derive(Clone, Debug)]
pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    /// Uniform index in `0..n`; `n` must be nonzero.
    pub fn choose(&mut self, n: usize) -> usize {
        ((self.0.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InitError {
    #[error("init guard of `{0}` is false")]
    InitGuardFalse(String),
    #[error("init of `{atom}` failed: {error}")]
    Eval { atom: String, error: EvalError },
}

/// Defaults every variable, checks each init guard and runs each init action.
pub fn initialize(sys: &System) -> Result<Configuration, InitError> {
    let mut atoms = Vec::with_capacity(sys.atoms.len());
    for a in &sys.atoms {
        let mut vars = System::default_vars(&a.vars);
        let err = |error| InitError::Eval {
            atom: a.path.clone(),
            error,
        };
        if let Some(g) = &a.init_guard {
            if !interaction::eval_local(g, &vars)
                .and_then(Value::as_bool)
                .map_err(err)?
            {
                return Err(InitError::InitGuardFalse(a.path.clone()));
            }
        }
        for asg in &a.init_action {
            vars[asg.target] = interaction::eval_local(&asg.value, &vars).map_err(err)?;
        }
        atoms.push(AtomState {
            state: a.init_target,
            vars,
        });
    }
    Ok(Configuration { atoms })
}

/// Enabled interactions not dominated by another enabled interaction, in
/// interaction order.
pub fn maximal_enabled(sys: &System, cfg: &Configuration) -> Vec<BoundInteraction> {
    let enabled = interaction::enabled_interactions(sys, cfg);
    filter_maximal(sys, enabled)
}

pub fn filter_maximal(sys: &System, enabled: Vec<BoundInteraction>) -> Vec<BoundInteraction> {
    if sys.priorities.is_empty() {
        return enabled;
    }
    let ids: Vec<InteractionId> = enabled.iter().map(|b| b.id).collect();
    enabled
        .into_iter()
        .filter(|b| !ids.iter().any(|&o| sys.dominated(b.id, o)))
        .collect()
}

/// One line of the execution trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub step: u64,
    pub connector: String,
    pub ports: Vec<String>,
    /// Variables whose value changed, keyed `instance.var`.
    pub writes: BTreeMap<String, Value>,
}

impl TraceEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace events always serialize")
    }
}

/// Builds the trace event for firing `id` from `before` to `after`.
pub fn trace_event(
    sys: &System,
    step: u64,
    id: InteractionId,
    before: &Configuration,
    after: &Configuration,
) -> TraceEvent {
    let inter = &sys.interactions[id];
    let mut writes = BTreeMap::new();
    for &(a, _) in &inter.participants {
        let atom = &sys.atoms[a];
        for (i, (name, _)) in atom.vars.iter().enumerate() {
            let v = after.atoms[a].vars[i];
            if v != before.atoms[a].vars[i] {
                writes.insert(format!("{}.{name}", atom.path), v);
            }
        }
    }
    TraceEvent {
        step,
        connector: sys.nodes[inter.top].name.clone(),
        ports: sys.port_labels(inter),
        writes,
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Fired(TraceEvent),
    Deadlock,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("step {step}: {error}")]
    Fire { step: u64, error: FireError },
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

/// A running engine over one system.
pub struct Engine<'s> {
    sys: &'s System,
    cfg: Configuration,
    rng: Rng,
    scratch: Scratch,
    step: u64,
}

impl<'s> Engine<'s> {
    pub fn new(sys: &'s System, seed: u64) -> Result<Self, InitError> {
        Ok(Engine {
            sys,
            cfg: initialize(sys)?,
            rng: Rng::new(seed),
            scratch: Scratch::new(sys),
            step: 0,
        })
    }

    pub fn configuration(&self) -> &Configuration {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Fires one uniformly chosen maximal interaction.
    pub fn step(&mut self) -> Result<StepOutcome, FireError> {
        let choices = maximal_enabled(self.sys, &self.cfg);
        if choices.is_empty() {
            return Ok(StepOutcome::Deadlock);
        }
        let id = choices[self.rng.choose(choices.len())].id;
        let mut next = self.cfg.clone();
        fire_into(self.sys, &mut next, id, &mut self.scratch)?;
        let ev = trace_event(self.sys, self.step, id, &self.cfg, &next);
        self.cfg = next;
        self.step += 1;
        Ok(StepOutcome::Fired(ev))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed { steps: u64 },
    Deadlock { step: u64 },
    Error { step: u64, message: String },
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::Completed { steps } => write!(f, "completed after {steps} steps"),
            RunStatus::Deadlock { step } => write!(f, "deadlock at step {step}"),
            RunStatus::Error { step, message } => write!(f, "error at step {step}: {message}"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EngineConfig {
    pub seed: u64,
    pub max_steps: Option<u64>,
}

/// Runs until `max_steps`, a deadlock or an error, sending each event to
/// `sink`. Without a step bound the run only ends on deadlock or error.
pub fn run(
    sys: &System,
    cfg: &EngineConfig,
    mut sink: impl FnMut(&TraceEvent),
) -> Result<RunStatus, InitError> {
    let mut engine = Engine::new(sys, cfg.seed)?;
    loop {
        if cfg.max_steps.is_some_and(|m| engine.step >= m) {
            return Ok(RunStatus::Completed { steps: engine.step });
        }
        match engine.step() {
            Ok(StepOutcome::Fired(ev)) => sink(&ev),
            Ok(StepOutcome::Deadlock) => return Ok(RunStatus::Deadlock { step: engine.step }),
            Err(e) => {
                return Ok(RunStatus::Error {
                    step: engine.step,
                    message: e.to_string(),
                })
            }
        }
    }
}

/// Runs and writes the trace as newline-delimited JSON.
pub fn run_to_writer(
    sys: &System,
    cfg: &EngineConfig,
    out: &mut impl Write,
) -> Result<RunStatus, EngineError> {
    let mut io_err = None;
    let status = run(sys, cfg, |ev| {
        if io_err.is_none() {
            if let Err(e) = writeln!(out, "{}", ev.to_json()) {
                io_err = Some(e);
            }
        }
    })?;
    match io_err {
        Some(e) => Err(e.into()),
        None => Ok(status),
    }
}
