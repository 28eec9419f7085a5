//! Aggregate results of one run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::switch::{EfdbEntry, PortRole, SwitchCounters};

use super::node::NodeCounters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatencyStats {
    pub min_ns: u64,
    pub mean_ns: u64,
    pub max_ns: u64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[u64]) -> Option<Self> {
        let min_ns = *samples.iter().min()?;
        let max_ns = *samples.iter().max()?;
        let sum: u128 = samples.iter().map(|&s| s as u128).sum();
        Some(LatencyStats {
            min_ns,
            mean_ns: (sum / samples.len() as u128) as u64,
            max_ns,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlowReport {
    pub sent: u64,
    /// Messages delivered at least once.
    pub delivered: u64,
    /// Undelivered messages by the last reason recorded for them.
    pub drops: BTreeMap<String, u64>,
    /// Every accepted copy, including those at further broadcast receivers.
    pub deliveries: u64,
    /// Copies a node received more than once.
    pub duplicates: u64,
    /// Copies whose payload differed from what was sent.
    pub corrupted: u64,
    /// Copies accepted by a node that was not a destination.
    pub misdelivered: u64,
    pub deliveries_by_node: BTreeMap<String, u64>,
    pub latency: Option<LatencyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediumReport {
    pub kind: &'static str,
    pub frames: u64,
    pub busy_ns: u64,
    pub utilization: f64,
    pub clashes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchReport {
    pub counters: SwitchCounters,
    pub port_roles: BTreeMap<String, PortRole>,
    pub root_id: Option<u64>,
    pub efdb: Vec<EfdbEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub t_end_ns: u64,
    pub events: u64,
    pub flows: BTreeMap<String, FlowReport>,
    pub media: BTreeMap<String, MediumReport>,
    pub switches: BTreeMap<String, SwitchReport>,
    pub nodes: BTreeMap<String, NodeCounters>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}
