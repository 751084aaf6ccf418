//! Scenario files, the 30 Hz closed loop and trace output.

mod run;
mod scenario;
mod trace;

pub use run::{run_scenario, run_scenario_with, run_seeds, FrameView, RunOptions, RunResult};
pub use scenario::{OcclusionSpec, Plant, PoseSpec, Scenario, BUILTIN_SCENARIOS};
pub use trace::{emit_summary, emit_trace, trace_to_csv, RunSummary, TraceRecord, CSV_HEADER};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Converged,
    Timeout,
    TrackLostUnrecovered,
}

impl Outcome {
    /// Process exit status reported by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::Timeout => 2,
            Outcome::TrackLostUnrecovered => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 64,
            HarnessError::Io(_) => 74,
        }
    }
}
