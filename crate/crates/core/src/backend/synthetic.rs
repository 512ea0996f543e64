use std::path::Path;
use std::time::{Duration, Instant};

use crate::clock::ServiceTimer;
use crate::error::{Error, Result};
use crate::pose::FeatureMaps;
use crate::synth::{render_feature_maps, SceneCorpus, SceneRegistry, SceneSource, SynthParams};
use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

use super::{BackendContext, InferenceBackend};

/// Renders maps from registered scenes and emulates device latency.
///
/// Each call takes `service_delay + batch_overhead + B * per_item`
/// microseconds measured from its start; rendering time counts toward that.
pub struct SynthBackend {
    topo: SkeletonTopology,
    params: SynthParams,
    scenes: SceneRegistry,
    input_w: u32,
    input_h: u32,
    timer: ServiceTimer,
}

impl SynthBackend {
    pub fn new(
        topo: SkeletonTopology,
        params: SynthParams,
        scenes: SceneRegistry,
        input_w: u32,
        input_h: u32,
    ) -> Result<Self> {
        params.validate()?;
        let timer = ServiceTimer::new(Duration::from_micros(params.call_latency_us(1)));
        Ok(Self {
            timer,
            topo,
            params,
            scenes,
            input_w,
            input_h,
        })
    }

    /// `procedural[:seed]` or a path to a scene corpus.
    pub fn from_arg(arg: &str, ctx: &BackendContext<'_>) -> Result<Self> {
        let cfg = ctx.config;
        let source = scene_source(arg, ctx.topology, cfg.input_w, cfg.input_h, cfg.synth.seed)?;
        Self::new(
            ctx.topology.clone(),
            cfg.synth.clone(),
            SceneRegistry::new(source, cfg.input_w, cfg.input_h),
            cfg.input_w,
            cfg.input_h,
        )
    }

    pub fn render(&self, seq_id: u64) -> Result<FeatureMaps> {
        let scene = self.scenes.scene_for(seq_id, &self.topo, &self.params)?;
        let mut maps = render_feature_maps(&scene, &self.topo, &self.params)
            .map_err(|e| e.into_backend([seq_id]))?;
        maps.frame_ref = seq_id;
        Ok(maps)
    }

    pub fn scenes(&self) -> &SceneRegistry {
        &self.scenes
    }
}

/// Resolve the argument of a `synth:` backend spec.
pub fn scene_source(arg: &str, topo: &SkeletonTopology, w: u32, h: u32, default_seed: u64) -> Result<SceneSource> {
    if arg.is_empty() || arg == "procedural" {
        return Ok(SceneSource::Procedural { seed: default_seed });
    }
    if let Some(seed) = arg.strip_prefix("procedural:") {
        let seed = seed
            .parse()
            .map_err(|_| Error::Config(format!("invalid procedural seed `{seed}`")))?;
        return Ok(SceneSource::Procedural { seed });
    }
    let corpus = SceneCorpus::load(Path::new(arg), topo, w, h)?;
    Ok(SceneSource::Cycle(corpus.scenes))
}

impl InferenceBackend for SynthBackend {
    fn name(&self) -> &str {
        "synth"
    }

    fn max_batch(&self) -> u32 {
        self.params.max_batch
    }

    fn infer(&mut self, batch: &TensorF32, seq_ids: &[u64]) -> Result<Vec<FeatureMaps>> {
        let start = Instant::now();
        let dims = batch.dims();
        let expected = [seq_ids.len() as u32, 3, self.input_h, self.input_w];
        if seq_ids.is_empty() || dims != expected {
            return Err(Error::backend(
                seq_ids,
                format!("batch dims {dims:?}, expected {expected:?}"),
            ));
        }
        let out = seq_ids
            .iter()
            .map(|&s| self.render(s))
            .collect::<Result<Vec<_>>>()?;
        let latency = Duration::from_micros(self.params.call_latency_us(seq_ids.len()));
        self.timer.sleep_until(start + latency);
        Ok(out)
    }
}
