//! Model execution.
//!
//! Each tick runs every task in declaration order; within a task the
//! performers go in ascending base address; within an action the attribute
//! definitions come first, in order, then the lifecycle directives. Stage
//! changes, births and deaths are applied after all tasks, so they only
//! show up in the next frame.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::ast::*;
use crate::memory::{
    format_value, Address, FileBackend, Memory, MemoryError, StorageBackend, StorageError,
};
use crate::rng::RngState;
use crate::typecheck::{check_model, TypeError};

mod config;
mod eval;

pub use config::{ConfigError, SimulationConfig};
use eval::Evaluator;

/// Version of the run directory format.
pub const TRACE_VERSION: u32 = 1;
/// Upper bound on animats spawned by one directive in one tick.
pub const MAX_SPAWN: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub struct RuntimeError {
    /// Frame the run was computing from.
    pub tick: u32,
    pub agent: String,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: runtime error at tick {} in {}: {}",
            self.span, self.tick, self.agent, self.message
        )
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("{}", join_lines(.0))]
    Model(Vec<TypeError>),
    #[error("{}", join_lines(.0))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Runtime(RuntimeError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl From<StorageError> for SimulationError {
    fn from(e: StorageError) -> Self {
        SimulationError::Memory(MemoryError::Storage(e))
    }
}

fn join_lines<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Where the environment lives in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub world: Option<Address>,
    /// Patch base addresses, row-major with row 0 at y = 0.
    pub patches: Vec<Address>,
    pub cols: usize,
    pub rows: usize,
    pub edge: f64,
}

impl Layout {
    pub fn patch(&self, col: usize, row: usize) -> Address {
        self.patches[row * self.cols + col]
    }

    /// Cell containing (x, y), clamped to the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, n: usize| ((v / self.edge).floor().max(0.0) as usize).min(n - 1);
        (clamp(x, self.cols), clamp(y, self.rows))
    }

    pub fn cell_of(&self, base: Address) -> Option<(usize, usize)> {
        let i = self.patches.iter().position(|&a| a == base)?;
        Some((i % self.cols, i / self.cols))
    }

    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.edge,
            (row as f64 + 0.5) * self.edge,
        )
    }
}

/// Population of every stage at every recorded tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub counts: Vec<(u32, String, usize)>,
    pub final_tick: u32,
}

impl RunSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,stage,count\n");
        for (tick, stage, count) in &self.counts {
            let _ = writeln!(out, "{tick},{stage},{count}");
        }
        out
    }

    pub fn count(&self, tick: u32, stage: &str) -> Option<usize> {
        self.counts
            .iter()
            .find(|(t, s, _)| *t == tick && s == stage)
            .map(|(_, _, c)| *c)
    }
}

/// Replaces every placeholder of the task's action by its bound expression.
pub fn instantiate_task(model: &Model, task: &TaskDefinition) -> Option<ActionDefinition> {
    let action = model.action(&task.action)?;
    let bindings = task.binding_map();
    Some(action.map_expressions(|e| e.substitute(&bindings)))
}

struct Task<'m> {
    performer: &'m AgentDefinition,
    action: ActionDefinition,
}

enum Lifecycle {
    Die(Address),
    Become(Address, String),
    Spawn(Address, String, u64, Span),
}

pub struct Simulation<'m, B: StorageBackend> {
    model: &'m Model,
    config: SimulationConfig,
    tasks: Vec<Task<'m>>,
    layout: Layout,
    memory: Memory<B>,
    rng: RngState,
    summary: RunSummary,
}

impl<'m, B: StorageBackend> Simulation<'m, B> {
    /// Checks the model and configuration and lays out the environment.
    /// Nothing is stored until [`Simulation::initialize`].
    pub fn new(
        model: &'m Model,
        config: SimulationConfig,
        backend: B,
    ) -> Result<Simulation<'m, B>, SimulationError> {
        let report = check_model(model);
        if !report.is_ok() {
            return Err(SimulationError::Model(report.errors));
        }
        let mut problems = config.check_against(model);
        if let Err(e) = config.validate() {
            problems.insert(0, e);
        }
        if !problems.is_empty() {
            return Err(SimulationError::Config(problems));
        }
        let tasks = model
            .tasks
            .iter()
            .map(|t| Task {
                performer: model.agent(&t.agent).expect("checked"),
                action: instantiate_task(model, t).expect("checked"),
            })
            .collect();
        let (cols, rows) = config.grid();
        Ok(Simulation {
            model,
            rng: RngState::seeded(config.seed),
            config,
            tasks,
            layout: Layout {
                world: None,
                patches: Vec::new(),
                cols,
                rows,
                edge: 0.0,
            },
            memory: Memory::new(backend),
            summary: RunSummary::default(),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn memory(&self) -> &Memory<B> {
        &self.memory
    }

    pub fn backend(&self) -> &B {
        &self.memory.backend
    }

    pub fn into_backend(self) -> B {
        self.memory.backend
    }

    pub fn rng(&self) -> RngState {
        self.rng
    }

    pub fn summary(&self) -> &RunSummary {
        &self.summary
    }

    /// Current frame number (0 before initialization).
    pub fn tick(&self) -> u32 {
        self.memory.image.ticks()
    }

    fn runtime(&self, tick: u32, base: Option<Address>, span: Span, message: String) -> SimulationError {
        let agent = match base {
            None => "setup".to_string(),
            Some(base) => self.describe(base),
        };
        SimulationError::Runtime(RuntimeError {
            tick,
            agent,
            span,
            message,
        })
    }

    fn describe(&self, base: Address) -> String {
        if Some(base) == self.layout.world {
            return "World".to_string();
        }
        if let Some((c, r)) = self.layout.cell_of(base) {
            return format!("Patch ({c}, {r})");
        }
        match self.memory.image.animat(base) {
            Some(a) => format!("{} #{} (address {base})", a.stage, a.index),
            None => format!("address {base}"),
        }
    }

    /// Slot values of a new agent: position first when given, then copied
    /// values, then initializers, then 0.
    fn initial_values(
        &mut self,
        def: &AgentDefinition,
        position: Option<(f64, f64)>,
        copied: &BTreeMap<String, f64>,
    ) -> Result<Vec<f64>, SimulationError> {
        let tick = self.tick();
        let mut values = Vec::with_capacity(def.size());
        if def.is_stage() {
            let (x, y) = match position {
                Some(p) => p,
                None => {
                    let x = self.rng.uniform(0.0, self.config.world_width);
                    let y = self.rng.uniform(0.0, self.config.world_height);
                    (x.expect("positive extent"), y.expect("positive extent"))
                }
            };
            values.push(x);
            values.push(y);
        }
        for decl in &def.attributes {
            if let Some(v) = copied.get(&decl.identifier) {
                values.push(*v);
                continue;
            }
            let Some(init) = &decl.initial else {
                values.push(0.0);
                continue;
            };
            let outcome = Evaluator::new(
                self.model,
                &self.layout,
                &self.memory.image,
                &mut self.rng,
                self.config.delta_time,
                None,
                &[],
            )
            .eval(init);
            values.push(outcome.map_err(|m| self.runtime(tick, None, decl.span, m))?);
        }
        Ok(values)
    }

    fn place(&mut self, base: Address, values: &[f64]) -> Result<(), SimulationError> {
        for (i, v) in values.iter().enumerate() {
            self.memory.image.write(base.offset(i), *v)?;
        }
        Ok(())
    }

    fn spawn(
        &mut self,
        def: &AgentDefinition,
        position: Option<(f64, f64)>,
        copied: &BTreeMap<String, f64>,
    ) -> Result<Address, SimulationError> {
        let values = self.initial_values(def, position, copied)?;
        let stage = def.name();
        let index = self.memory.image.next_index(stage);
        let base = self.memory.image.allocate(stage, def.size(), index);
        self.place(base, &values)?;
        Ok(base)
    }

    /// Lays out the world, the patch grid and the initial populations and
    /// stores frame 1.
    pub fn initialize(&mut self) -> Result<(), SimulationError> {
        let model = self.model;
        let (cols, rows) = self.config.grid();
        self.layout.edge = self.config.patch_size;
        let none = BTreeMap::new();
        if let Some(world) = model.world() {
            let values = self.initial_values(world, None, &none)?;
            let base = self.memory.image.allocate_static(world.size());
            self.layout.world = Some(base);
            self.place(base, &values)?;
        }
        if let Some(patch) = model.patch() {
            for _ in 0..cols * rows {
                let values = self.initial_values(patch, None, &none)?;
                let base = self.memory.image.allocate_static(patch.size());
                self.layout.patches.push(base);
                self.place(base, &values)?;
            }
        }
        for (count, stage) in self.config.populations.clone() {
            let def = model.stage(&stage).expect("checked");
            for _ in 0..count {
                self.spawn(def, None, &none)?;
            }
        }
        self.commit()
    }

    fn commit(&mut self) -> Result<(), SimulationError> {
        self.memory.store(self.rng)?;
        let tick = self.tick();
        for stage in self.model.stages() {
            let name = stage.name();
            let count = self
                .memory
                .image
                .animats()
                .filter(|(_, a)| a.stage == name)
                .count();
            self.summary.counts.push((tick, name.to_string(), count));
        }
        self.summary.final_tick = tick;
        Ok(())
    }

    fn performers(&self, def: &AgentDefinition) -> Vec<Address> {
        match def.kind {
            AgentKind::World => self.layout.world.into_iter().collect(),
            AgentKind::Patch => self.layout.patches.clone(),
            AgentKind::Stage { .. } => self
                .memory
                .image
                .animats()
                .filter(|(_, a)| a.stage == def.name())
                .map(|(base, _)| base)
                .collect(),
        }
    }

    /// Computes and stores the next frame.
    pub fn step(&mut self) -> Result<(), SimulationError> {
        let tick = self.tick();
        let dt = self.config.delta_time;
        let mut lifecycle = Vec::new();
        let tasks = std::mem::take(&mut self.tasks);
        let result = self.run_tasks(&tasks, tick, dt, &mut lifecycle);
        self.tasks = tasks;
        result?;
        self.apply_lifecycle(tick, lifecycle)?;
        self.commit()
    }

    fn run_tasks(
        &mut self,
        tasks: &[Task<'m>],
        tick: u32,
        dt: f64,
        lifecycle: &mut Vec<Lifecycle>,
    ) -> Result<(), SimulationError> {
        for task in tasks {
            for base in self.performers(task.performer) {
                let mut writes = Vec::with_capacity(task.action.definitions.len());
                let mut ev = Evaluator::new(
                    self.model,
                    &self.layout,
                    &self.memory.image,
                    &mut self.rng,
                    dt,
                    Some((task.performer, base)),
                    &task.action.utilities,
                );
                let mut failure = None;
                for d in &task.action.definitions {
                    let outcome = ev.eval(&d.expression).and_then(|v| {
                        let a = ev.address(&d.variable)?;
                        let (v, delta) = match d.decorator {
                            Decorator::Assign => (v, false),
                            Decorator::Delta => (v, true),
                            Decorator::Differential => (v * dt, true),
                        };
                        if v.is_finite() {
                            Ok((a, delta, v))
                        } else {
                            Err(format!("non-finite result {v}"))
                        }
                    });
                    match outcome {
                        Ok(w) => writes.push(w),
                        Err(m) => {
                            failure = Some((d.span, m));
                            break;
                        }
                    }
                }
                if failure.is_none() {
                    for l in &task.action.lifecycle {
                        match lifecycle_directive(&mut ev, base, l) {
                            Ok(Some(op)) => lifecycle.push(op),
                            Ok(None) => {}
                            Err(m) => {
                                failure = Some((l.span(), m));
                                break;
                            }
                        }
                    }
                }
                drop(ev);
                if let Some((span, message)) = failure {
                    return Err(self.runtime(tick, Some(base), span, message));
                }
                for (a, delta, v) in writes {
                    if delta {
                        self.memory.image.write_delta(a, v)?;
                    } else {
                        self.memory.image.write(a, v)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Deaths first; then stage changes (the first one per animat, none
    /// for the dead) and births in the order they were issued.
    fn apply_lifecycle(&mut self, tick: u32, ops: Vec<Lifecycle>) -> Result<(), SimulationError> {
        let model = self.model;
        let mut dead = HashSet::new();
        for op in &ops {
            if let Lifecycle::Die(base) = op {
                self.memory.image.kill(*base)?;
                dead.insert(*base);
            }
        }
        for op in ops {
            match op {
                Lifecycle::Die(_) => {}
                Lifecycle::Become(base, target) => {
                    if !dead.insert(base) {
                        continue;
                    }
                    let old = self.memory.image.animat(base).expect("live animat").clone();
                    let old_def = model.stage(&old.stage).expect("checked");
                    let mut copied = BTreeMap::new();
                    for (i, slot) in old_def.slots().iter().enumerate() {
                        copied.insert(
                            slot.identifier.to_string(),
                            self.memory.image.pending(base.offset(i))?,
                        );
                    }
                    let position = (copied["x"], copied["y"]);
                    self.memory.image.kill(base)?;
                    let def = model.stage(&target).expect("checked");
                    self.spawn(def, Some(position), &copied)?;
                }
                Lifecycle::Spawn(parent, stage, count, span) => {
                    if count > MAX_SPAWN {
                        return Err(self.runtime(
                            tick,
                            Some(parent),
                            span,
                            format!("spawn count {count} exceeds {MAX_SPAWN}"),
                        ));
                    }
                    let position = (
                        self.memory.image.pending(parent)?,
                        self.memory.image.pending(parent.offset(1))?,
                    );
                    let def = model.stage(&stage).expect("checked");
                    for _ in 0..count {
                        self.spawn(def, Some(position), &BTreeMap::new())?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs until `frames` frames are stored, initializing first if needed.
    pub fn run_until(&mut self, frames: u32) -> Result<(), SimulationError> {
        if self.tick() == 0 {
            self.initialize()?;
        }
        while self.tick() < frames {
            self.step()?;
        }
        Ok(())
    }

    /// Initial frame plus the configured number of steps.
    pub fn run(&mut self) -> Result<RunSummary, SimulationError> {
        self.run_until(self.config.steps + 1)?;
        Ok(self.summary.clone())
    }

    /// Returns to frame `t`, discarding later frames, so the run can be
    /// continued from there.
    pub fn rewind(&mut self, t: u32) -> Result<(), SimulationError> {
        self.rng = self.memory.load(t)?;
        self.memory.backend.truncate(t)?;
        self.summary.counts.retain(|(tick, _, _)| *tick <= t);
        self.summary.final_tick = t;
        Ok(())
    }
}

fn lifecycle_directive(
    ev: &mut Evaluator<'_>,
    base: Address,
    l: &LifecycleDirective,
) -> Result<Option<Lifecycle>, String> {
    if let Some(g) = l.guard() {
        let left = ev.eval(&g.left)?;
        let right = ev.eval(&g.right)?;
        if !g.op.holds(left, right) {
            return Ok(None);
        }
    }
    Ok(Some(match l {
        LifecycleDirective::Die { .. } => Lifecycle::Die(base),
        LifecycleDirective::Become { target, .. } => Lifecycle::Become(base, target.clone()),
        LifecycleDirective::Spawn {
            stage, count, span, ..
        } => {
            let n = ev.eval(count)?;
            if n < 0.0 {
                return Err(format!("negative spawn count {n}"));
            }
            Lifecycle::Spawn(base, stage.clone(), n.trunc() as u64, *span)
        }
    }))
}

/// `meta.txt` entries describing a run.
pub fn meta_entries(config: &SimulationConfig, status: &str) -> Vec<(String, String)> {
    let mut entries = vec![
        ("version", TRACE_VERSION.to_string()),
        ("seed", config.seed.to_string()),
        ("delta_time", format_value(config.delta_time)),
        ("steps", config.steps.to_string()),
        ("world_width", format_value(config.world_width)),
        ("world_height", format_value(config.world_height)),
        ("patch_size", format_value(config.patch_size)),
        ("rng", "splitmix64 single stream".to_string()),
        ("status", status.to_string()),
    ];
    for (count, stage) in &config.populations {
        entries.push(("populate", format!("{count} {stage}")));
    }
    entries
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

pub const MODEL_FILE: &str = "model.rmd";

/// Runs a model into a run directory: the trace files, `meta.txt` with the
/// final status, and a copy of the model source. On a runtime abort the
/// frames computed so far stay on disk.
pub fn run_in_directory(
    model: &Model,
    model_source: &str,
    config: &SimulationConfig,
    dir: &Path,
) -> Result<RunSummary, SimulationError> {
    let backend = FileBackend::create(dir)?;
    let mut sim = Simulation::new(model, config.clone(), backend)?;
    let write = |path: &Path, text: &str| {
        fs::write(path, text).map_err(|source| StorageError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    write(&dir.join(MODEL_FILE), model_source)?;
    crate::memory::write_meta(dir, &meta_entries(config, "running"))?;
    let outcome = sim.run();
    let status = match &outcome {
        Ok(_) => "completed".to_string(),
        Err(e) => format!("aborted: {}", e.to_string().replace('\n', " ")),
    };
    crate::memory::write_meta(dir, &meta_entries(config, &status))?;
    outcome
}

#[cfg(test)]
mod tests;
