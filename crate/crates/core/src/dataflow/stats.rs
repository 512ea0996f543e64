use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::ExecutionMode;

use super::channel::ChannelStats;
use super::OperatorKind;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OperatorStats {
    pub name: String,
    pub kind: OperatorKind,
    pub items_in: u64,
    pub items_out: u64,
    pub busy_ns: u64,
    pub idle_ns: u64,
    pub park_count: u64,
    /// Operator-specific counters, e.g. the batch-size histogram of the inference stage.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EdgeStats {
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub channel: ChannelStats,
}

/// Ingest-to-sink latency, microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
    pub mean_us: f64,
}

impl LatencySummary {
    pub fn from_ns(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let us = |ns: u64| ns as f64 / 1e3;
        let sum: u128 = samples.iter().map(|&v| v as u128).sum();
        Self {
            p50_us: us(percentile(samples, 50.0)),
            p95_us: us(percentile(samples, 95.0)),
            p99_us: us(percentile(samples, 99.0)),
            max_us: us(*samples.last().unwrap()),
            mean_us: sum as f64 / samples.len() as f64 / 1e3,
        }
    }
}

/// Nearest-rank percentile of sorted, non-empty `sorted`.
pub fn percentile(sorted: &[u64], pct: f64) -> u64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineStats {
    pub mode: ExecutionMode,
    pub operators: Vec<OperatorStats>,
    pub edges: Vec<EdgeStats>,
    pub frames_ingested: u64,
    pub frames_emitted: u64,
    /// Frames that entered but never reached the sink; non-zero only after an abort.
    pub in_flight: u64,
    /// Sink arrivals whose seq id was not greater than the previous one.
    pub order_violations: u64,
    pub latency: LatencySummary,
    pub wall_ns: u64,
    pub fps: f64,
    pub completed: bool,
}

impl PipelineStats {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn operator(&self, name: &str) -> Option<&OperatorStats> {
        self.operators.iter().find(|o| o.name == name)
    }

    pub fn max_edge_depth(&self) -> usize {
        self.edges.iter().map(|e| e.channel.max_depth).max().unwrap_or(0)
    }

    /// Edge depth never exceeded capacity, and items_out of each stage equals
    /// items_in of the next.
    pub fn is_consistent(&self) -> bool {
        let bounded = self.edges.iter().all(|e| e.channel.max_depth <= e.channel.capacity);
        let chained = self
            .operators
            .windows(2)
            .all(|w| w[0].items_out == w[1].items_in);
        bounded && (!self.completed || chained)
    }
}
