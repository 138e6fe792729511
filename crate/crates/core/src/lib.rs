//! An executable small-step semantics for the POSIX shell.
//!
//! Word expansion and command evaluation are written as single-step
//! functions over an abstract [`os::Os`]. Two OS instances exist: real
//! syscalls ([`os::SystemOs`]) and a deterministic simulation
//! ([`symbolic::SymbolicOs`]) that records a step trace.

pub mod arith;
pub mod ast;
pub mod builtins;
pub mod eval;
pub mod expansion;
pub mod os;
pub mod parser;
pub mod pattern;
pub mod state;
pub mod symbolic;
pub mod trace;

pub use ast::{Bytes, Command, Fd, Pid};
pub use os::{Os, SystemOs};
pub use state::{ShellOption, ShellState};
pub use symbolic::{run_symbolic, Node, SymbolicConfig, SymbolicOs, DEFAULT_FUEL};
pub use trace::{FinalState, StepRecord, Trace};
