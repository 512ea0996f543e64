//! Deterministic synthetic inference: renders confidence and PAF maps from
//! known poses so the whole pipeline can be checked without a trained network.

mod procedural;
mod render;
mod scene;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use procedural::{canonical_figure, procedural_scene, MIN_SEPARATION_SIGMAS};
pub use render::render_feature_maps;
pub use scene::{GroundTruthHuman, GroundTruthScene, SceneCorpus, SceneRegistry, SceneSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Gaussian radius in feature cells.
    pub sigma_conf: f32,
    /// PAF corridor half-width in feature cells.
    pub paf_halfwidth: f32,
    pub stride: u32,
    /// Fixed latency added to every backend call.
    pub service_delay_us: u64,
    pub batch_overhead_us: u64,
    pub per_item_us: u64,
    pub max_batch: u32,
    /// Seed for procedural scenes.
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sigma_conf: 2.0,
            paf_halfwidth: 1.0,
            stride: 8,
            service_delay_us: 0,
            batch_overhead_us: 0,
            per_item_us: 0,
            max_batch: 32,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_conf > 0.0) || !(self.paf_halfwidth > 0.0) {
            return Err(Error::Config(
                "synth.sigma_conf and synth.paf_halfwidth must be positive".into(),
            ));
        }
        if self.stride == 0 {
            return Err(Error::Config("synth.stride must be >= 1".into()));
        }
        if self.max_batch == 0 {
            return Err(Error::Config("synth.max_batch must be >= 1".into()));
        }
        Ok(())
    }

    /// Modeled device time for one call with `batch` items.
    pub fn call_latency_us(&self, batch: usize) -> u64 {
        self.service_delay_us + self.batch_overhead_us + batch as u64 * self.per_item_us
    }
}
