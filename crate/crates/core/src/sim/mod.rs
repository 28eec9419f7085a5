//! Deterministic discrete-event simulation of mixed CAN XL / Ethernet
//! networks.
//!
//! Events run in `(time, insertion sequence)` order with integer
//! nanosecond time, so a configuration always produces the same trace.

pub mod config;
mod engine;
pub mod node;
pub mod report;
pub mod trace;

pub use config::{ConfigError, TopologyConfig};
pub use engine::{flow_payload, MAX_EVENTS};
pub use report::Report;
pub use trace::TraceRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("configuration error at {0}")]
    Config(#[from] ConfigError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub report: Report,
}

impl SimOutput {
    pub fn trace_jsonl(&self) -> String {
        trace::to_jsonl(&self.trace)
    }

    pub fn report_json(&self) -> String {
        self.report.to_json()
    }
}

/// Validates `config` and runs it until `config.run.t_end`.
pub fn run(config: &TopologyConfig) -> Result<SimOutput, SimError> {
    engine::Engine::new(config)?.run()
}

#[cfg(test)]
mod tests;
