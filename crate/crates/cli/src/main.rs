//! `bip`: check, simulate, verify, compose and flatten `.bip` models.
//!
//! Machine-readable output (trace lines, verdict JSON, model text) goes to
//! stdout or `--out`; human summaries go to stderr.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bip_core::arch::{self, Architecture};
use bip_core::engine::{self, EngineConfig, RunStatus, TraceEvent};
use bip_core::flatten;
use bip_core::model::{has_errors, validate_model, Model};
use bip_core::system::{SafetyProperty, System};
use bip_core::textlang::{parse, pretty_print};
use bip_core::verify::{self, Limits, Status, Verdict};
use clap::{Parser, Subcommand, ValueEnum};

const OK: u8 = 0;
const FOUND: u8 = 1;
const USAGE: u8 = 2;
const LIMIT: u8 = 3;
const INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "bip", version, about = "Component-based models: simulation, verification, composition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct LimitArgs {
    /// Maximum number of states to explore.
    #[arg(long, env = "BIP_MAX_STATES", default_value_t = 1_000_000)]
    max_states: usize,
    /// Wall-clock budget for exploration.
    #[arg(long)]
    max_seconds: Option<f64>,
}

impl LimitArgs {
    fn limits(&self) -> Limits {
        Limits {
            max_states: self.max_states,
            max_seconds: self.max_seconds,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Compositional,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a model, listing diagnostics.
    Check { path: PathBuf },
    /// Run the model and print its trace as JSON lines.
    Simulate {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        steps: Option<u64>,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a safety property or deadlock freedom.
    Verify {
        path: PathBuf,
        #[arg(long, conflicts_with = "deadlock", required_unless_present = "deadlock")]
        property: Option<String>,
        #[arg(long)]
        deadlock: bool,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Apply an architecture, or a composition `a+b+...`, to operand types.
    Apply {
        path: PathBuf,
        #[arg(long)]
        arch: String,
        /// Operand component types, bound to parameters in name order.
        #[arg(long, value_delimiter = ',')]
        operands: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also model-check the property and deadlock freedom of the result.
        #[arg(long)]
        certify: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Compile the reachable product automaton into an image file.
    Flatten {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Execute an image with the engine's scheduling.
    RunImage {
        image: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

/// A failure with its exit status.
struct Fail(u8, String);

type Outcome = Result<u8, Fail>;

fn usage(msg: impl Into<String>) -> Fail {
    Fail(USAGE, msg.into())
}

fn internal(msg: impl std::fmt::Display) -> Fail {
    Fail(INTERNAL, msg.to_string())
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Model, Fail> {
    let src = read(path)?;
    let (m, mut diags) = parse(&src);
    diags.extend(validate_model(&m));
    for d in &diags {
        eprintln!("{}:{d}", path.display());
    }
    if has_errors(&diags) {
        return Err(usage(format!("{}: model has errors", path.display())));
    }
    Ok(m)
}

fn load_system(path: &Path) -> Result<(Model, System), Fail> {
    let m = load_model(path)?;
    let sys = System::build(&m).map_err(|e| usage(e.to_string()))?;
    Ok((m, sys))
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Holds => OK,
        Status::Violated => FOUND,
        Status::PotentialViolation | Status::ResourceLimit => LIMIT,
    }
}

fn report(v: &Verdict) -> u8 {
    println!("{}", v.to_json());
    eprintln!("{}", v.summary());
    if let Some(cx) = &v.counterexample {
        for ev in &cx.trace {
            eprintln!("  {}: {} [{}]", ev.step, ev.connector, ev.ports.join(", "));
        }
        eprintln!("  reaches {}", cx.state);
    }
    if let Some(c) = &v.candidates {
        for s in c {
            eprintln!("  candidate {s}");
        }
    }
    status_code(v.status)
}

fn run_status(s: &RunStatus) -> u8 {
    eprintln!("{s}");
    match s {
        RunStatus::Completed { .. } => OK,
        RunStatus::Deadlock { .. } => FOUND,
        RunStatus::Error { .. } => INTERNAL,
    }
}

fn trace_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Fail> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Runs `f` with a sink writing trace lines, then flushes.
fn with_trace(
    path: &Option<PathBuf>,
    f: impl FnOnce(&mut dyn FnMut(&TraceEvent)) -> Result<RunStatus, Fail>,
) -> Outcome {
    let mut out = trace_sink(path)?;
    let mut io_err = None;
    let status = f(&mut |ev| {
        if io_err.is_none() {
            if let Err(e) = writeln!(out, "{}", ev.to_json()) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(internal(format!("writing trace: {e}")));
    }
    out.flush().map_err(|e| internal(format!("writing trace: {e}")))?;
    Ok(run_status(&status))
}

fn check(path: &Path) -> Outcome {
    let (m, sys) = load_system(path)?;
    eprintln!(
        "{}: ok ({} atom types, {} compound types, {} atoms, {} connectors, {} interactions)",
        path.display(),
        m.atoms.len(),
        m.compounds.len(),
        sys.atoms.len(),
        sys.top.len(),
        sys.interactions.len()
    );
    Ok(OK)
}

fn verify_cmd(path: &Path, property: Option<String>, mode: Mode, limits: Limits) -> Outcome {
    let (m, sys) = load_system(path)?;
    let verdict = match (property, mode) {
        (None, Mode::Exact) => {
            let space = verify::explore(&sys, limits).map_err(internal)?;
            verify::check_deadlock(&sys, &space)
        }
        (None, Mode::Compositional) => {
            verify::check_deadlock_compositional(&sys, limits).map_err(internal)?
        }
        (Some(_), Mode::Compositional) => {
            return Err(usage("compositional mode checks deadlock freedom only"))
        }
        (Some(name), Mode::Exact) => {
            let def = m
                .property(&name)
                .ok_or_else(|| usage(format!("property `{name}` is not declared")))?;
            let prop: SafetyProperty = sys.compile_property(def).map_err(usage)?;
            let space = verify::explore(&sys, limits).map_err(internal)?;
            verify::check_safety(&sys, &space, &prop)
        }
    };
    Ok(report(&verdict))
}

fn apply_cmd(
    path: &Path,
    arch_names: &str,
    operands: &[String],
    out: Option<PathBuf>,
    certify: bool,
    limits: Limits,
) -> Outcome {
    let m = load_model(path)?;
    let mut composite: Option<Architecture> = None;
    for name in arch_names.split('+') {
        let a = Architecture::from_model(&m, name.trim()).map_err(|e| usage(e.to_string()))?;
        composite = Some(match composite {
            None => a,
            Some(c) => arch::compose(&c, &a).map_err(|e| usage(e.to_string()))?,
        });
    }
    let a = composite.ok_or_else(|| usage("no architecture given"))?;
    let ops: Vec<&str> = operands.iter().map(String::as_str).collect();
    let app = a.apply(&m, &ops).map_err(|e| usage(e.to_string()))?;
    let text = pretty_print(&app.model);
    match &out {
        Some(p) => fs::write(p, &text).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    let bound: Vec<String> = app.binding.iter().map(|(p, t)| format!("{p}={t}")).collect();
    eprintln!(
        "applied {} as `{}` ({}), property `{}`",
        arch_names,
        app.root,
        bound.join(", "),
        app.property.name
    );
    if !certify {
        return Ok(OK);
    }
    let cert = arch::certify(&a, &m, &ops, limits).map_err(internal)?;
    for v in [&cert.safety, &cert.deadlock] {
        eprintln!("{}", v.summary());
        if out.is_some() {
            println!("{}", v.to_json());
        }
    }
    Ok(status_code(cert.status()))
}

fn flatten_cmd(path: &Path, out: &Path, limits: Limits) -> Outcome {
    let (_, sys) = load_system(path)?;
    let flat = match flatten::flatten(&sys, limits) {
        Ok(f) => f,
        Err(e @ flatten::FlattenError::ResourceLimit { .. }) => return Err(Fail(LIMIT, e.to_string())),
        Err(e) => return Err(internal(e)),
    };
    let img = flatten::emit(&flat);
    fs::write(out, &img).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    eprintln!(
        "{}: {} states, {} edges, {} code words, {} bytes",
        out.display(),
        flat.states.len(),
        flat.edge_count(),
        flat.code.len(),
        img.len()
    );
    Ok(OK)
}

fn run(cli: Cli) -> Outcome {
    match cli.cmd {
        Cmd::Check { path } => check(&path),
        Cmd::Simulate {
            path,
            seed,
            steps,
            trace,
        } => {
            let (_, sys) = load_system(&path)?;
            let cfg = EngineConfig {
                seed,
                max_steps: steps,
            };
            with_trace(&trace, |sink| engine::run(&sys, &cfg, sink).map_err(internal))
        }
        Cmd::Verify {
            path,
            property,
            deadlock: _,
            mode,
            limits,
        } => verify_cmd(&path, property, mode, limits.limits()),
        Cmd::Apply {
            path,
            arch,
            operands,
            out,
            certify,
            limits,
        } => apply_cmd(&path, &arch, &operands, out, certify, limits.limits()),
        Cmd::Flatten { path, out, limits } => flatten_cmd(&path, &out, limits.limits()),
        Cmd::RunImage {
            image,
            seed,
            steps,
            trace,
        } => {
            let bytes = fs::read(&image).map_err(|e| usage(format!("{}: {e}", image.display())))?;
            let flat = flatten::load(&bytes).map_err(|e| usage(format!("{}: {e}", image.display())))?;
            let cfg = EngineConfig {
                seed,
                max_steps: steps,
            };
            with_trace(&trace, |sink| Ok(flatten::interpret(&flat, &cfg, sink)))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
