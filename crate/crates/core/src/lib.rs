//! A multi-agent modeling language for population dynamics.
//!
//! Models declare agents (the world, patches of a rectangular grid, and the
//! life-history stages of species), actions that define the next values of
//! attributes, and tasks that bind actions to agents. Every number carries a
//! measurement unit which is checked statically by dimension. Execution uses
//! synchronous updates: within a time step every read sees the previous
//! step's values and all writes land in separate next/delta slots. Every
//! attribute of every agent is recorded at every step, and a seeded random
//! stream makes runs reproducible.

pub mod ast;
pub mod interp;
pub mod memory;
pub mod parser;
pub mod rng;
pub mod typecheck;
pub mod units;

#[cfg(any(test, feature = "proptest"))]
pub mod testing;
