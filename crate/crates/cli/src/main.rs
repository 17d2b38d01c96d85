use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use remodyc::ast::{AgentDefinition, Model};
use remodyc::interp::{
    run_in_directory, Simulation, SimulationConfig, SimulationError, MODEL_FILE,
};
use remodyc::memory::{
    format_value, read_meta, Address, FileBackend, MemoryBackend, MemoryError, StorageBackend,
    StorageError, TraceFrame,
};
use remodyc::parser::{parse_model, pretty_print};
use remodyc::typecheck::check_model;

/// Type-check, run and inspect multi-agent population models.
#[derive(Parser)]
#[command(name = "remodyc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and type-check a model.
    Check { model: PathBuf },
    /// Run a model and print the population of every stage per tick.
    Run {
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::File)]
        backend: Backend,
    },
    /// Print every attribute of every agent at one tick of a recorded run.
    Replay {
        run: PathBuf,
        #[arg(long)]
        tick: u32,
    },
    /// Write the population of one stage per tick as CSV.
    Chart {
        run: PathBuf,
        #[arg(long)]
        stage: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite a model file in canonical layout.
    Fmt { model: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    File,
    Memory,
}

/// Exit statuses.
const MODEL_ERROR: u8 = 1;
const IO_ERROR: u8 = 2;
const RUNTIME_ABORT: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(IO_ERROR, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail(IO_ERROR, format!("{}: {e}", path.display())))
}

fn storage_failure(e: StorageError) -> Failure {
    match e {
        StorageError::OutOfRange { .. } => fail(MODEL_ERROR, e.to_string()),
        _ => fail(IO_ERROR, e.to_string()),
    }
}

/// Parses and type-checks, reporting diagnostics prefixed with the path.
fn load_model(path: &Path) -> Result<(Model, String), Failure> {
    let source = read(path)?;
    let model = parse_model(&source)
        .map_err(|e| fail(MODEL_ERROR, format!("{}:{e}", path.display())))?;
    let report = check_model(&model);
    for w in &report.warnings {
        eprintln!("{}:{w}", path.display());
    }
    if !report.is_ok() {
        let lines: Vec<String> = report
            .errors
            .iter()
            .map(|e| format!("{}:{e}", path.display()))
            .collect();
        return Err(fail(MODEL_ERROR, lines.join("\n")));
    }
    Ok((model, source))
}

fn check(path: &Path) -> Result<(), Failure> {
    load_model(path).map(|_| ())
}

fn simulation_failure(e: SimulationError) -> Failure {
    let code = match &e {
        SimulationError::Model(_) | SimulationError::Config(_) => MODEL_ERROR,
        SimulationError::Runtime(_) => RUNTIME_ABORT,
        SimulationError::Memory(MemoryError::Storage(_)) => IO_ERROR,
        SimulationError::Memory(_) => RUNTIME_ABORT,
    };
    fail(code, e.to_string())
}

fn run(model_path: &Path, config_path: &Path, out: &Path, backend: Backend) -> Result<(), Failure> {
    let (model, source) = load_model(model_path)?;
    let config = SimulationConfig::parse(&read(config_path)?)
        .map_err(|e| fail(MODEL_ERROR, format!("{}: {e}", config_path.display())))?;
    let problems = config.check_against(&model);
    if !problems.is_empty() {
        let lines: Vec<String> = problems
            .iter()
            .map(|e| format!("{}: {e}", config_path.display()))
            .collect();
        return Err(fail(MODEL_ERROR, lines.join("\n")));
    }
    match backend {
        Backend::File => {
            let summary = run_in_directory(&model, &source, &config, out).map_err(simulation_failure)?;
            print!("{}", summary.to_csv());
        }
        Backend::Memory => {
            let mut sim = Simulation::new(&model, config, MemoryBackend::default())
                .map_err(simulation_failure)?;
            let outcome = sim.run();
            if let Err(e) = outcome {
                print!("{}", sim.summary().to_csv());
                return Err(simulation_failure(e));
            }
            print!("{}", sim.summary().to_csv());
        }
    }
    Ok(())
}

/// A recorded run with the model it was produced from.
struct RunDirectory {
    model: Model,
    backend: FileBackend,
    /// Base addresses of the world and the patches, in layout order.
    statics: Vec<(Address, usize)>,
}

impl RunDirectory {
    fn open(dir: &Path) -> Result<RunDirectory, Failure> {
        let meta = read_meta(dir).map_err(|e| fail(IO_ERROR, e.to_string()))?;
        let version = meta.get("version").map(String::as_str);
        if version != Some(&remodyc::interp::TRACE_VERSION.to_string()) {
            return Err(fail(
                IO_ERROR,
                format!("{}: unsupported trace version {version:?}", dir.display()),
            ));
        }
        let model_path = dir.join(MODEL_FILE);
        let model = parse_model(&read(&model_path)?)
            .map_err(|e| fail(IO_ERROR, format!("{}:{e}", model_path.display())))?;
        let number = |key: &str| -> Result<f64, Failure> {
            meta.get(key)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| fail(IO_ERROR, format!("{}: meta.txt lacks `{key}`", dir.display())))
        };
        let edge = number("patch_size")?;
        let cols = (number("world_width")? / edge).round() as usize;
        let rows = (number("world_height")? / edge).round() as usize;

        let mut statics = Vec::new();
        let mut next = Address::FIRST;
        if let Some(world) = model.world() {
            statics.push((next, 0));
            next = next.offset(world.size());
        }
        if let Some(patch) = model.patch() {
            for i in 0..cols * rows {
                statics.push((next, i));
                next = next.offset(patch.size());
            }
        }
        let backend = FileBackend::open(dir).map_err(storage_failure)?;
        Ok(RunDirectory {
            model,
            backend,
            statics,
        })
    }

    fn frame(&self, tick: u32) -> Result<TraceFrame, Failure> {
        self.backend.load_frame(tick).map_err(storage_failure)
    }

    /// The agent owning `a`, its display name and the slot offset.
    fn owner<'a>(&'a self, frame: &'a TraceFrame, a: Address) -> Option<(&'a AgentDefinition, String, usize)> {
        if let Some((base, (stage, index))) = frame.animats.range(..=a).next_back() {
            let def = self.model.stage(stage)?;
            let offset = (a.get() - base.get()) as usize;
            if offset < def.size() {
                return Some((def, format!("{stage} #{index}"), offset));
            }
        }
        let world_size = self.model.world().map_or(0, |w| w.size());
        if let Some(world) = self.model.world() {
            if (a.get() as usize) <= world_size {
                return Some((world, "World".to_string(), a.get() as usize - 1));
            }
        }
        let patch = self.model.patch()?;
        let (base, i) = self.statics.iter().rev().find(|(base, _)| *base <= a)?;
        let offset = (a.get() - base.get()) as usize;
        (offset < patch.size()).then(|| (patch, format!("Patch {i}"), offset))
    }
}

fn replay(dir: &Path, tick: u32) -> Result<(), Failure> {
    let run = RunDirectory::open(dir)?;
    let frame = run.frame(tick)?;
    let mut out = String::from("address,stage,attribute,value\n");
    for (a, v) in &frame.values {
        let Some((def, name, offset)) = run.owner(&frame, *a) else {
            return Err(fail(IO_ERROR, format!("address {a} belongs to no agent")));
        };
        let slots = def.slots();
        let slot = &slots[offset];
        let shown = format_value(v / slot.unit.unit.scale());
        let value = if slot.unit.text.is_empty() {
            shown
        } else {
            format!("{shown} {}", slot.unit.text)
        };
        let _ = writeln!(out, "{a},{name},{},{value}", slot.identifier);
    }
    print!("{out}");
    Ok(())
}

fn chart(dir: &Path, stage: &str, out: &Path) -> Result<(), Failure> {
    let run = RunDirectory::open(dir)?;
    if run.model.stage(stage).is_none() {
        return Err(fail(MODEL_ERROR, format!("the model has no stage `{stage}`")));
    }
    let mut text = String::from("tick,count\n");
    for t in 1..=run.backend.frame_count() {
        let frame = run.frame(t)?;
        let n = frame.animats.values().filter(|(s, _)| s == stage).count();
        let _ = writeln!(text, "{t},{n}");
    }
    write(out, &text)
}

fn format_file(path: &Path) -> Result<(), Failure> {
    let source = read(path)?;
    let model = parse_model(&source)
        .map_err(|e| fail(MODEL_ERROR, format!("{}:{e}", path.display())))?;
    let canonical = pretty_print(&model);
    if canonical != source {
        write(path, &canonical)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Check { model } => check(model),
        Command::Run {
            model,
            config,
            out,
            backend,
        } => run(model, config, out, *backend),
        Command::Replay { run, tick } => replay(run, *tick),
        Command::Chart { run, stage, out } => chart(run, stage, out),
        Command::Fmt { model } => format_file(model),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
