//! Benchmark harness: runs a matrix of environments and methods over seeded
//! replicates, persists every trace, and aggregates them into tables.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{Backend, BackendSpec, BenchmarkConfig, DmSpec};
pub use error::{BenchError, Result};
pub use report::{emit_tables, AggregateReport, Stats, TableFormat};
pub use run::{run_benchmark, run_job, Job, RunOutcome};
