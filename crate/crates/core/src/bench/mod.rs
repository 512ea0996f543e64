//! Throughput benchmarks for the live engine and the two oracles they are
//! judged against: a closed-form bottleneck model ([`predict_throughput`])
//! and a discrete-event replay of the batching rules ([`simulate_policy`]).
//!
//! A [`BenchProfile`] fixes a latency model for every stage and a matrix of
//! configurations to sweep. Stage latencies are floors: the live stages pad
//! their real work up to the modeled time, so the models stay valid as long
//! as the host has CPU headroom.

mod harness;
mod predict;
mod sim;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExecutionMode, PipelineConfig, SchedulerConfig, SourcePacing, StagePads};
use crate::error::{Error, Result};
use crate::synth::SynthParams;

pub use harness::{
    measure_config, render_table, run_bench, write_report, BenchReport, ConfigReport, ConfigStatus, RatioReport,
    REPORT_FILE,
};
pub use predict::{infer_time_per_item_us, predict_config, predict_throughput, Prediction};
pub use sim::{simulate_policy, SimResult};

/// Smallest frame count accepted for an FPS measurement.
pub const MIN_FRAMES: u64 = 100;
/// Smallest number of repetitions per configuration.
pub const MIN_REPETITIONS: u32 = 3;

/// Modeled time of each stage, microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageLatency {
    pub source_us: u64,
    pub source_pacing: SourcePacing,
    pub resize_us: u64,
    pub infer_overhead_us: u64,
    pub infer_per_item_us: u64,
    pub parse_us: u64,
    pub sink_us: u64,
}

impl Default for StageLatency {
    fn default() -> Self {
        Self {
            source_us: 0,
            source_pacing: SourcePacing::Fixed,
            resize_us: 2000,
            infer_overhead_us: 8000,
            infer_per_item_us: 1000,
            parse_us: 6000,
            sink_us: 0,
        }
    }
}

impl StageLatency {
    /// Modeled duration of one inference call on `batch` items.
    pub fn infer_us(&self, batch: usize) -> u64 {
        self.infer_overhead_us + batch as u64 * self.infer_per_item_us
    }
}

/// One row of the configuration matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub name: String,
    pub mode: ExecutionMode,
    pub scheduler: bool,
    pub batch_max: u32,
    pub linger_us: u64,
    /// Replaces the profile's `latency.source_us` for this row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_us: Option<u64>,
    /// Name of the row this one's speedup is reported against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    /// Smallest acceptable speedup over `baseline`, checked per repetition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_ratio: Option<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            mode: ExecutionMode::Pipelined,
            scheduler: true,
            batch_max: 8,
            linger_us: 0,
            source_us: None,
            baseline: None,
            min_ratio: None,
        }
    }
}

impl BenchConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            enabled: self.scheduler,
            batch_max: if self.scheduler { self.batch_max } else { 1 },
            linger_us: self.linger_us,
        }
    }

    /// Largest batch the row can dispatch.
    pub fn effective_batch_max(&self) -> u32 {
        if self.scheduler && self.mode == ExecutionMode::Pipelined {
            self.batch_max.max(1)
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchProfile {
    pub name: String,
    pub frames: u64,
    pub repetitions: u32,
    pub input_w: u32,
    pub input_h: u32,
    pub channel_capacity: u32,
    pub watchdog_s: u64,
    /// Seed for procedural scenes and Poisson pacing.
    pub seed: u64,
    pub latency: StageLatency,
    #[serde(rename = "config")]
    pub configs: Vec<BenchConfig>,
}

impl Default for BenchProfile {
    fn default() -> Self {
        Self::scheduler_gain()
    }
}

impl BenchProfile {
    /// Batching against a per-call overhead: 8 ms + 1 ms per item at the
    /// inference stage, a saturating source, and 2 ms / 6 ms floors on resize
    /// and parse. Scheduler off is bound by inference at 9 ms per frame; with
    /// batches of up to 8 the bound moves to parse at 6 ms.
    pub fn scheduler_gain() -> Self {
        Self {
            name: "scheduler-gain".into(),
            frames: 1000,
            repetitions: 3,
            input_w: 640,
            input_h: 360,
            channel_capacity: 4,
            watchdog_s: 30,
            seed: 0,
            latency: StageLatency::default(),
            configs: vec![
                BenchConfig {
                    scheduler: false,
                    batch_max: 1,
                    ..BenchConfig::named("scheduler-off")
                },
                BenchConfig {
                    baseline: Some("scheduler-off".into()),
                    min_ratio: Some(1.3),
                    ..BenchConfig::named("scheduler-on")
                },
            ],
        }
    }

    /// Three stages of 3, 9 and 6 ms (resize, inference, parse) run one frame
    /// at a time and then pipelined.
    pub fn pipelining() -> Self {
        Self {
            name: "pipelining".into(),
            latency: StageLatency {
                resize_us: 3000,
                infer_overhead_us: 9000,
                infer_per_item_us: 0,
                parse_us: 6000,
                ..StageLatency::default()
            },
            configs: vec![
                BenchConfig {
                    mode: ExecutionMode::Sequential,
                    scheduler: false,
                    batch_max: 1,
                    ..BenchConfig::named("sequential")
                },
                BenchConfig {
                    scheduler: false,
                    batch_max: 1,
                    baseline: Some("sequential".into()),
                    min_ratio: Some(1.5),
                    ..BenchConfig::named("pipelined")
                },
            ],
            ..Self::scheduler_gain()
        }
    }

    /// The pipelining stages with and without a 5 ms source in front.
    pub fn io_masking() -> Self {
        let base = Self::pipelining();
        Self {
            name: "io-masking".into(),
            configs: vec![
                BenchConfig {
                    scheduler: false,
                    batch_max: 1,
                    source_us: Some(0),
                    ..BenchConfig::named("source-0us")
                },
                BenchConfig {
                    scheduler: false,
                    batch_max: 1,
                    source_us: Some(5000),
                    baseline: Some("source-0us".into()),
                    ..BenchConfig::named("source-5000us")
                },
            ],
            ..base
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Config(format!("bench profile: {}", e.message())))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("bench profiles always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames < MIN_FRAMES {
            return bad(format!("frames must be >= {MIN_FRAMES}, got {}", self.frames));
        }
        if self.repetitions < MIN_REPETITIONS {
            return bad(format!("repetitions must be >= {MIN_REPETITIONS}, got {}", self.repetitions));
        }
        if self.configs.is_empty() {
            return bad("at least one [[config]] is required".into());
        }
        let mut names = BTreeSet::new();
        for c in &self.configs {
            if c.name.is_empty() {
                return bad("every config needs a name".into());
            }
            if !names.insert(c.name.as_str()) {
                return bad(format!("duplicate config name `{}`", c.name));
            }
            if c.batch_max == 0 {
                return bad(format!("config `{}`: batch_max must be >= 1", c.name));
            }
            if c.min_ratio.is_some() && c.baseline.is_none() {
                return bad(format!("config `{}`: min_ratio needs a baseline", c.name));
            }
        }
        for c in &self.configs {
            if let Some(b) = &c.baseline {
                if !names.contains(b.as_str()) || b == &c.name {
                    return bad(format!("config `{}`: unknown baseline `{b}`", c.name));
                }
            }
            self.pipeline_config(c, Path::new("."))?.validate()?;
        }
        Ok(())
    }

    /// Stage latencies with the row's overrides applied.
    pub fn latency_for(&self, config: &BenchConfig) -> StageLatency {
        StageLatency {
            source_us: config.source_us.unwrap_or(self.latency.source_us),
            ..self.latency.clone()
        }
    }

    pub fn config(&self, name: &str) -> Option<&BenchConfig> {
        self.configs.iter().find(|c| c.name == name)
    }

    /// The live pipeline for one row, writing to `out`.
    pub fn pipeline_config(&self, config: &BenchConfig, out: &Path) -> Result<PipelineConfig> {
        let lat = self.latency_for(config);
        let synth = SynthParams {
            batch_overhead_us: lat.infer_overhead_us,
            per_item_us: lat.infer_per_item_us,
            max_batch: SynthParams::default().max_batch.max(config.batch_max),
            seed: self.seed,
            ..SynthParams::default()
        };
        Ok(PipelineConfig {
            input_w: self.input_w,
            input_h: self.input_h,
            channel_capacity: self.channel_capacity,
            mode: config.mode,
            frames: Some(self.frames),
            source_latency_us: lat.source_us,
            source_pacing: lat.source_pacing,
            source_seed: self.seed,
            out: out.to_owned(),
            watchdog_s: self.watchdog_s,
            scheduler: config.scheduler_config(),
            pads: StagePads {
                resize_us: lat.resize_us,
                parse_us: lat.parse_us,
                sink_us: lat.sink_us,
            },
            synth,
            ..PipelineConfig::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles_validate() {
        for p in [BenchProfile::scheduler_gain(), BenchProfile::pipelining(), BenchProfile::io_masking()] {
            p.validate().unwrap();
            assert!(p.configs.len() >= 2);
        }
    }

    #[test]
    fn toml_round_trip() {
        let p = BenchProfile::io_masking();
        assert_eq!(BenchProfile::from_toml_str(&p.to_toml_string()).unwrap(), p);
    }

    #[test]
    fn too_few_frames_or_repetitions_rejected() {
        let mut p = BenchProfile::default();
        p.frames = 0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
        let mut p = BenchProfile::default();
        p.repetitions = 1;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_baseline_rejected() {
        let mut p = BenchProfile::default();
        p.configs[1].baseline = Some("nope".into());
        assert!(p.validate().is_err());
    }

    #[test]
    fn partial_profile_fills_defaults() {
        let p = BenchProfile::from_toml_str(
            r#"
            name = "tiny"
            frames = 200
            [latency]
            parse_us = 4000
            [[config]]
            name = "a"
            "#,
        )
        .unwrap();
        assert_eq!(p.latency.parse_us, 4000);
        assert_eq!(p.latency.infer_overhead_us, 8000);
        assert_eq!(p.configs[0].batch_max, 8);
    }

    #[test]
    fn row_maps_onto_pipeline_config() {
        let p = BenchProfile::io_masking();
        let cfg = p.pipeline_config(&p.configs[1], Path::new("o")).unwrap();
        assert_eq!(cfg.source_latency_us, 5000);
        assert_eq!(cfg.pads.parse_us, 6000);
        assert_eq!(cfg.synth.call_latency_us(1), 9000);
        assert!(!cfg.scheduler.enabled);
    }
}
