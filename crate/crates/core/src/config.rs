//! Pipeline configuration, loaded from TOML and overridable field by field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::ParserParams;
use crate::synth::SynthParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub enabled: bool,
    pub batch_max: u32,
    /// 0 disables the linger timer.
    pub linger_us: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            batch_max: 8,
            linger_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayStyle {
    pub radius: u32,
    pub thickness: u32,
    /// Draw each person's score next to their first keypoint.
    pub labels: bool,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            radius: 3,
            thickness: 2,
            labels: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourcePacing {
    /// Each frame takes exactly `source_latency_us` to produce.
    #[default]
    Fixed,
    /// Exponential gaps with mean `source_latency_us`.
    Poisson,
}

/// Minimum per-frame time of the non-inference stages, used to emulate
/// heavier pre/post-processing in benchmarks. 0 leaves a stage unpadded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagePads {
    pub resize_us: u64,
    pub parse_us: u64,
    pub sink_us: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    /// One worker per operator.
    #[default]
    Pipelined,
    /// All operators on the calling thread, one frame at a time.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_w: u32,
    pub input_h: u32,
    pub channel_capacity: u32,
    /// `coco18` or a path to a topology TOML file.
    pub topology: String,
    /// `<kind>:<argument>`, e.g. `synth:procedural` or `file:maps/`.
    pub backend: String,
    pub parser: String,
    pub mode: ExecutionMode,
    /// Stop after this many frames.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<u64>,
    /// Directory of PPM frames; without it the source emits blank frames.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub source_latency_us: u64,
    pub source_pacing: SourcePacing,
    pub source_seed: u64,
    pub out: PathBuf,
    pub out_overlay: bool,
    /// Also write every inferred map set as an HPT1 file into this directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_maps: Option<PathBuf>,
    pub progress: bool,
    /// Abort the run if it has not drained after this many seconds; 0 disables.
    pub watchdog_s: u64,
    pub scheduler: SchedulerConfig,
    pub pads: StagePads,
    pub paf: ParserParams,
    pub synth: SynthParams,
    pub overlay: OverlayStyle,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_w: 640,
            input_h: 360,
            channel_capacity: 4,
            topology: "coco18".into(),
            backend: "synth:procedural".into(),
            parser: "paf".into(),
            mode: ExecutionMode::Pipelined,
            frames: None,
            input: None,
            source_latency_us: 0,
            source_pacing: SourcePacing::Fixed,
            source_seed: 0,
            out: PathBuf::from("out"),
            out_overlay: false,
            dump_maps: None,
            progress: false,
            watchdog_s: 0,
            scheduler: SchedulerConfig::default(),
            pads: StagePads::default(),
            paf: ParserParams::default(),
            synth: SynthParams::default(),
            overlay: OverlayStyle::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Checks that do not need the filesystem or a backend.
    pub fn validate(&self) -> Result<()> {
        if self.input_w == 0 || self.input_h == 0 {
            return Err(Error::Config("input_w and input_h must be >= 1".into()));
        }
        if self.channel_capacity == 0 {
            return Err(Error::Config("channel_capacity must be >= 1".into()));
        }
        if self.scheduler.batch_max == 0 {
            return Err(Error::Config("scheduler.batch_max must be >= 1".into()));
        }
        if self.overlay.radius == 0 || self.overlay.thickness == 0 {
            return Err(Error::Config("overlay.radius and overlay.thickness must be >= 1".into()));
        }
        if self.source_pacing == SourcePacing::Poisson && self.source_latency_us == 0 {
            return Err(Error::Config("poisson pacing needs source_latency_us > 0".into()));
        }
        self.paf.validate()?;
        self.synth.validate()?;
        let s = self.synth.stride;
        if self.input_w % s != 0 || self.input_h % s != 0 {
            return Err(Error::Config(format!(
                "input {}x{} is not a multiple of synth.stride {s}",
                self.input_w, self.input_h
            )));
        }
        Ok(())
    }

    /// Batch size the inference stage dispatches at most.
    pub fn effective_batch_max(&self) -> u32 {
        if self.scheduler.enabled {
            self.scheduler.batch_max
        } else {
            1
        }
    }
}
