mod common;

use bip_core::arch::{certify, Architecture};
use bip_core::engine::{self, initialize, maximal_enabled, EngineConfig, InitError, RunStatus};
use bip_core::interaction::{enabled_interactions, fire};
use bip_core::model::{validate_model, Value};
use bip_core::system::{Configuration, System};
use bip_core::textlang::parse;
use bip_core::verify::{check_deadlock, check_safety, explore, Limits, Status};

use common::*;

fn system(src: &str) -> System {
    let (m, d) = parse(src);
    assert!(d.is_empty(), "{d:?}");
    System::build(&m).unwrap()
}

fn codes(src: &str) -> Vec<&'static str> {
    let (m, d) = parse(src);
    assert!(d.is_empty(), "{d:?}");
    validate_model(&m).iter().map(|d| d.code).collect()
}

fn set_var(sys: &System, cfg: &mut Configuration, atom: &str, var: &str, v: i64) {
    let a = sys.atom_by_path(atom).unwrap();
    let i = sys.atoms[a].var_index(var).unwrap();
    cfg.atoms[a].vars[i] = Value::Int(v);
}

fn var(sys: &System, cfg: &Configuration, atom: &str, var: &str) -> i64 {
    let a = sys.atom_by_path(atom).unwrap();
    let i = sys.atoms[a].var_index(var).unwrap();
    cfg.atoms[a].vars[i].as_int().unwrap()
}

fn state<'s>(sys: &'s System, cfg: &Configuration, atom: &str) -> &'s str {
    let a = sys.atom_by_path(atom).unwrap();
    &sys.atoms[a].states[cfg.atoms[a].state]
}

fn labels(sys: &System, ids: impl IntoIterator<Item = usize>) -> Vec<String> {
    let mut out: Vec<String> = ids
        .into_iter()
        .map(|id| sys.port_labels(&sys.interactions[id]).join("+"))
        .collect();
    out.sort();
    out
}

const TWO_PORTS: &str = "atom A { port p port q state s init -> s on p from s to s on q from s to s }
compound M { component a : A connector c(a.p, a.q) }";

const CYCLE: &str = "atom A { port p state s init -> s on p from s to s }
compound M {
  component x : A component y : A component z : A
  connector a(x.p) connector b(y.p) connector c(z.p)
  priority a < b priority b < c priority c < a
}";

#[test]
fn validation_examples() {
    assert!(validate_model(&bundled("traffic_light")).is_empty());
    assert_eq!(codes(TWO_PORTS), ["one-port-per-atom"]);
    let (m, _) = parse(CYCLE);
    let d = validate_model(&m);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].code, "priority-cycle");
    assert!(d[0].message.contains("a→b→c→a"), "{}", d[0].message);
}

#[test]
fn traffic_light_structure() {
    let m = bundled("traffic_light");
    let c = m.root().unwrap();
    let atoms: Vec<&str> = m.atoms.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(atoms, ["Timer", "Light"]);
    let tick = c.connector("tick").unwrap();
    assert_eq!(tick.ends.len(), 1);
    assert_eq!(tick.ends[0].dotted(), "Timer.timer");
    let sync = c.connector("sync").unwrap();
    let ends: Vec<String> = sync.ends.iter().map(|e| e.dotted()).collect();
    assert_eq!(ends, ["Timer.switch", "Light.switch"]);
    assert_eq!(sync.vars[0].name, "x");
    assert_eq!(c.priorities[0].to_string_pair(), ("tick".into(), "sync".into()));
}

trait Pair {
    fn to_string_pair(&self) -> (String, String);
}

impl Pair for bip_core::model::PriorityRule {
    fn to_string_pair(&self) -> (String, String) {
        (self.low.to_string(), self.high.to_string())
    }
}

#[test]
fn traffic_light_enabledness_and_firing() {
    let sys = System::build(&bundled("traffic_light")).unwrap();
    let init = initialize(&sys).unwrap();
    assert_eq!(state(&sys, &init, "Light"), "green");
    assert_eq!((var(&sys, &init, "Timer", "t"), var(&sys, &init, "Timer", "n")), (0, 60));
    let ids = |cfg: &Configuration| enabled_interactions(&sys, cfg).into_iter().map(|b| b.id);
    assert_eq!(labels(&sys, ids(&init)), ["Timer.timer"]);

    let mut at_bound = init.clone();
    set_var(&sys, &mut at_bound, "Timer", "t", 60);
    assert_eq!(labels(&sys, ids(&at_bound)), ["Light.switch+Timer.switch", "Timer.timer"]);
    let max: Vec<usize> = maximal_enabled(&sys, &at_bound).into_iter().map(|b| b.id).collect();
    assert_eq!(labels(&sys, max), ["Light.switch+Timer.switch"]);

    let sync = sys
        .interactions
        .iter()
        .position(|i| sys.nodes[i.top].name == "sync")
        .unwrap();
    let after = fire(&sys, &at_bound, sync).unwrap();
    assert_eq!(state(&sys, &after, "Light"), "yellow");
    // the duration carried by the light when it left green becomes n
    assert_eq!(var(&sys, &after, "Timer", "n"), 4);
    assert_eq!(var(&sys, &after, "Timer", "t"), 0);
    assert_eq!(var(&sys, &after, "Light", "m"), 56);

    let tick = sys
        .interactions
        .iter()
        .position(|i| sys.nodes[i.top].name == "tick")
        .unwrap();
    let after = fire(&sys, &init, tick).unwrap();
    let light = sys.atom_by_path("Light").unwrap();
    assert_eq!(after.atoms[light], init.atoms[light]);
    assert_eq!(var(&sys, &after, "Timer", "t"), 1);
}

#[test]
fn mutex_enabledness_and_firing() {
    let sys = System::build(&bundled("mutex")).unwrap();
    let init = initialize(&sys).unwrap();
    for (a, s) in [("task1", "sleep"), ("task2", "sleep"), ("C", "free")] {
        assert_eq!(state(&sys, &init, a), s);
    }
    let ids = enabled_interactions(&sys, &init).into_iter().map(|b| b.id);
    assert_eq!(labels(&sys, ids), ["C.t+task1.b1", "C.t+task2.b2"]);
    let b1t = sys
        .interactions
        .iter()
        .position(|i| sys.nodes[i.top].name == "b1t")
        .unwrap();
    let next = fire(&sys, &init, b1t).unwrap();
    assert_eq!(state(&sys, &next, "task1"), "work");
    assert_eq!(state(&sys, &next, "C"), "taken");
    let t2 = sys.atom_by_path("task2").unwrap();
    assert_eq!(next.atoms[t2], init.atoms[t2]);
}

#[test]
fn initialization_failures() {
    let (m, _) = parse("atom A { state s init provided false -> s } compound M { component a : A }");
    let sys = System::build(&m).unwrap();
    assert_eq!(initialize(&sys), Err(InitError::InitGuardFalse("a".into())));
}

#[test]
fn no_priorities_filters_nothing() {
    let sys = system(
        "atom A { port p state s init -> s on p from s to s }
         compound M { component a : A component b : A component c : A
           connector x(a.p) connector y(b.p) connector z(c.p) }",
    );
    let init = initialize(&sys).unwrap();
    assert_eq!(maximal_enabled(&sys, &init).len(), 3);
}

#[test]
fn stuck_atom_deadlocks_at_step_zero() {
    let sys = system(
        "atom A { port p state s state t init -> s on p from t to t }
         compound M { component a : A connector c(a.p) }",
    );
    let status = engine::run(&sys, &EngineConfig { seed: 1, max_steps: Some(10) }, |_| {}).unwrap();
    assert_eq!(status, RunStatus::Deadlock { step: 0 });
}

#[test]
fn traffic_light_schedule_follows_the_durations() {
    let sys = System::build(&bundled("traffic_light")).unwrap();
    let mut connectors = Vec::new();
    let cfg = EngineConfig {
        seed: 1,
        max_steps: Some(10_000),
    };
    let status = engine::run(&sys, &cfg, |e| connectors.push(e.connector.clone())).unwrap();
    assert_eq!(status, RunStatus::Completed { steps: 10_000 });
    // the first phase lasts 60 ticks, then the light follows 4, 56, 60, ...
    let durations = [60usize, 4, 56];
    let mut at = 0;
    let mut phase = 0;
    while at + durations[phase % 3] < connectors.len() {
        let d = durations[phase % 3];
        assert!(connectors[at..at + d].iter().all(|c| c == "tick"), "phase {phase}");
        assert_eq!(connectors[at + d], "sync", "phase {phase}");
        at += d + 1;
        phase += 1;
    }
    assert!(phase > 100);
}

#[test]
fn mutex_runs_keep_exclusion_and_never_deadlock() {
    let m = bundled("mutex");
    let sys = System::build(&m).unwrap();
    let prop = sys.compile_property(m.property("mutual_exclusion").unwrap()).unwrap();
    for seed in 0..5 {
        let mut eng = engine::Engine::new(&sys, seed).unwrap();
        for _ in 0..10_000 {
            match eng.step().unwrap() {
                engine::StepOutcome::Fired(_) => {}
                engine::StepOutcome::Deadlock => panic!("deadlock with seed {seed}"),
            }
            assert!(prop.holds(eng.configuration()).unwrap());
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let sys = System::build(&bundled("payload_hk")).unwrap();
    let cfg = EngineConfig {
        seed: 99,
        max_steps: Some(3000),
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    engine::run_to_writer(&sys, &cfg, &mut a).unwrap();
    engine::run_to_writer(&sys, &cfg, &mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3000);
}

#[test]
fn explorer_matches_brute_force_on_mutex() {
    let sys = System::build(&bundled("mutex")).unwrap();
    let space = explore(&sys, Limits::default()).unwrap();
    let oracle = mutex_reachable();
    assert_eq!(space.states.len(), oracle.len());
    let shape: std::collections::HashSet<(bool, bool, bool)> = space
        .states
        .iter()
        .map(|c| {
            (
                state(&sys, c, "task1") == "work",
                state(&sys, c, "task2") == "work",
                state(&sys, c, "C") == "taken",
            )
        })
        .collect();
    assert_eq!(shape, oracle);
}

#[test]
fn broken_mutex_leaves_task2_stuck_at_work() {
    let sys = System::build(&bundled("broken_mutex")).unwrap();
    let space = explore(&sys, Limits::default()).unwrap();
    let v = check_deadlock(&sys, &space);
    assert_eq!(v.status, Status::Violated);
    let cx = v.counterexample.unwrap();
    assert!(cx.state.contains("task2@work"), "{}", cx.state);
    assert!(cx.state.contains("C@taken"), "{}", cx.state);
}

#[test]
fn two_tasks_without_coordinator_violate_exclusion() {
    let src = "atom T { port b port f state sleep state work init -> sleep
                 on b from sleep to work on f from work to sleep }
               compound Free { component task1 : T component task2 : T
                 connector b1(task1.b) connector f1(task1.f)
                 connector b2(task2.b) connector f2(task2.f) }
               property mutual_exclusion { !(task1@work && task2@work) }
               property trivially { true }";
    let (m, d) = parse(src);
    assert!(d.is_empty());
    let sys = System::build(&m).unwrap();
    let space = explore(&sys, Limits::default()).unwrap();
    let me = sys.compile_property(m.property("mutual_exclusion").unwrap()).unwrap();
    let v = check_safety(&sys, &space, &me);
    assert_eq!(v.status, Status::Violated);
    assert!(v.counterexample.unwrap().trace.len() <= 2);
    let t = sys.compile_property(m.property("trivially").unwrap()).unwrap();
    assert_eq!(check_safety(&sys, &space, &t).status, Status::Holds);
}

#[test]
fn applied_mutex_matches_the_hand_written_compound() {
    let m = bundled("mutex");
    let a = Architecture::from_model(&m, "mutex").unwrap();
    let app = a.apply(&m, &["Task1", "Task2"]).unwrap();
    let built = System::build_root(&app.model, app.model.compound(&app.root).unwrap()).unwrap();
    let hand = System::build(&m).unwrap();
    // same atoms and the same interactions, connector for connector
    let atoms = |s: &System| s.atoms.iter().map(|a| (a.path.clone(), a.type_name.clone())).collect::<Vec<_>>();
    assert_eq!(atoms(&built), atoms(&hand));
    let inter = |s: &System| {
        let mut v: Vec<(String, Vec<String>)> = s
            .interactions
            .iter()
            .map(|i| (s.nodes[i.top].name.clone(), s.port_labels(i)))
            .collect();
        v.sort();
        v
    };
    assert_eq!(inter(&built), inter(&hand));
    // operands are copied unchanged
    for op in ["Task1", "Task2"] {
        assert_eq!(app.model.atom(op), m.atom(op));
    }
}

#[test]
fn composed_certificate_covers_both_properties() {
    let m = bundled("mutex");
    let both = bip_core::arch::compose(
        &Architecture::from_model(&m, "mutex").unwrap(),
        &Architecture::from_model(&m, "precedence").unwrap(),
    )
    .unwrap();
    let cert = certify(&both, &m, &["Task1", "Task2"], Limits::default()).unwrap();
    assert_eq!(cert.safety.status, Status::Holds);
    // each conjunct checked on its own agrees
    let sys = System::build_root(&cert.application.model, cert.application.model.compound(&cert.application.root).unwrap()).unwrap();
    let space = explore(&sys, Limits::default()).unwrap();
    for e in both.property.values() {
        let def = bip_core::model::PropertyDef {
            name: "part".into(),
            predicate: e.clone(),
            span: Default::default(),
        };
        // conjuncts of a composite refer to renamed coordinators
        if let Ok(p) = sys.compile_property(&def) {
            assert_eq!(check_safety(&sys, &space, &p).status, Status::Holds);
        }
    }
}
