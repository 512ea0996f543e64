//! The five pose-pipeline operators and the builder that wires them:
//! decode -> resize -> infer -> parse -> visualize/export.
//!
//! "Decode" reads PPM files (or synthesizes blank frames); there is no video
//! codec.

mod infer;
mod packet;
mod postprocess;
mod resize;
mod sink;
mod source;
mod visualize;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

pub use infer::InferOp;
pub use packet::{Packet, Payload};
pub use postprocess::ParseOp;
pub use resize::{resize_into, resize_to_chw, ResizeOp};
pub use sink::{overlay_path, ExportSink, POSES_FILE, STATS_FILE};
pub use source::{DecodeSource, FrameInput, Pacer};
pub use visualize::{draw_overlay, part_color};

use crate::backend::{BackendContext, BackendRegistry, DumpingBackend, InferenceBackend};
use crate::config::PipelineConfig;
use crate::dataflow::{build_pipeline, GraphOptions, OperatorSpec, Paced, PacedSink, PipelineGraph, RunOutcome};
use crate::error::{Error, Result};
use crate::parser::ParserRegistry;
use crate::scheduler::SchedulerPolicy;
use crate::tensor::BufferPool;
use crate::topology::SkeletonTopology;

pub const OPERATOR_NAMES: [&str; 5] = ["decode", "resize", "infer", "parse", "visualize"];

/// A fully validated pose pipeline whose output files are already open.
pub struct PosePipeline {
    graph: PipelineGraph<Packet>,
    out_dir: PathBuf,
    topology: Arc<SkeletonTopology>,
}

fn pad(us: u64) -> Option<Duration> {
    (us > 0).then(|| Duration::from_micros(us))
}

impl PosePipeline {
    /// Resolve everything in `cfg` using the built-in backends and parsers.
    pub fn build(cfg: &PipelineConfig) -> Result<Self> {
        Self::build_with(cfg, &BackendRegistry::with_builtins(), &ParserRegistry::with_builtins())
    }

    pub fn build_with(cfg: &PipelineConfig, backends: &BackendRegistry, parsers: &ParserRegistry) -> Result<Self> {
        cfg.validate()?;
        let topology = SkeletonTopology::resolve(&cfg.topology)?;
        let ctx = BackendContext {
            topology: &topology,
            config: cfg,
        };
        let backend = backends.create(&cfg.backend, &ctx)?;
        Self::assemble(cfg, topology, backend, parsers)
    }

    /// Like [`build`](Self::build) but with a caller-supplied backend.
    pub fn build_with_backend(cfg: &PipelineConfig, backend: Box<dyn InferenceBackend>) -> Result<Self> {
        cfg.validate()?;
        let topology = SkeletonTopology::resolve(&cfg.topology)?;
        Self::assemble(cfg, topology, backend, &ParserRegistry::with_builtins())
    }

    fn assemble(
        cfg: &PipelineConfig,
        topology: SkeletonTopology,
        mut backend: Box<dyn InferenceBackend>,
        parsers: &ParserRegistry,
    ) -> Result<Self> {
        let topology = Arc::new(topology);
        let parser = parsers.create(&cfg.parser, cfg)?;
        if let Some(dir) = &cfg.dump_maps {
            backend = Box::new(DumpingBackend::new(backend, dir.clone())?);
        }
        // Enough idle buffers for every network input that can be in flight.
        let pool = BufferPool::new(2 * cfg.channel_capacity as usize + cfg.effective_batch_max() as usize + 2);
        let infer = InferOp::with_pool(backend, SchedulerPolicy::from_config(&cfg.scheduler), pool.clone())?;

        let input = match &cfg.input {
            Some(dir) if !dir.is_dir() => {
                return Err(Error::Config(format!("input directory {} does not exist", dir.display())))
            }
            Some(dir) => FrameInput::ppm_dir(dir)?,
            None => FrameInput::Blank {
                width: cfg.input_w,
                height: cfg.input_h,
            },
        };
        if cfg.input.is_none() && cfg.frames.is_none() {
            return Err(Error::Config("blank-frame input needs a frame count (`frames`)".into()));
        }
        let pacer = Pacer::new(cfg.source_pacing, cfg.source_latency_us, cfg.source_seed)?;
        let source = DecodeSource::new(input, cfg.frames, pacer);

        let sink = ExportSink::create(
            &cfg.out,
            Arc::clone(&topology),
            cfg.out_overlay.then(|| cfg.overlay.clone()),
            cfg.input_w,
            cfg.input_h,
        )?;

        let [n_decode, n_resize, n_infer, n_parse, n_vis] = OPERATOR_NAMES;
        let resize = ResizeOp {
            width: cfg.input_w,
            height: cfg.input_h,
            pool,
        };
        let parse = ParseOp::new(parser, Arc::clone(&topology));
        let ops = vec![
            OperatorSpec::source(n_decode, source),
            match pad(cfg.pads.resize_us) {
                Some(d) => OperatorSpec::transform(n_resize, Paced::new(resize, d)),
                None => OperatorSpec::transform(n_resize, resize),
            },
            OperatorSpec::transform(n_infer, infer),
            match pad(cfg.pads.parse_us) {
                Some(d) => OperatorSpec::transform(n_parse, Paced::new(parse, d)),
                None => OperatorSpec::transform(n_parse, parse),
            },
            match pad(cfg.pads.sink_us) {
                Some(d) => OperatorSpec::sink(n_vis, PacedSink::new(sink, d)),
                None => OperatorSpec::sink(n_vis, sink),
            },
        ];
        let graph = build_pipeline(GraphOptions::from_config(cfg), ops)?;
        Ok(Self {
            graph,
            out_dir: cfg.out.clone(),
            topology,
        })
    }

    pub fn topology(&self) -> &SkeletonTopology {
        &self.topology
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Runs to completion and writes `stats.json`, also after a failure.
    pub fn run(self) -> RunOutcome {
        let mut outcome = self.graph.run();
        let path = self.out_dir.join(STATS_FILE);
        if let Err(e) = std::fs::write(&path, outcome.stats.to_json_pretty()) {
            outcome.error.get_or_insert(Error::io_path(&path, e));
        }
        outcome
    }
}

/// Build and run in one step.
pub fn run_pose_pipeline(cfg: &PipelineConfig) -> Result<crate::dataflow::PipelineStats> {
    let outcome = PosePipeline::build(cfg)?.run();
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(outcome.stats),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(out: &Path, frames: u64) -> PipelineConfig {
        PipelineConfig {
            input_w: 128,
            input_h: 96,
            frames: Some(frames),
            out: out.to_owned(),
            watchdog_s: 30,
            ..Default::default()
        }
    }

    #[test]
    fn three_frames_give_three_lines_and_stats() {
        let dir = tempfile::tempdir().unwrap();
        let stats = run_pose_pipeline(&cfg(dir.path(), 3)).unwrap();
        let text = std::fs::read_to_string(dir.path().join(POSES_FILE)).unwrap();
        let ids: Vec<u64> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["frame_id"].as_u64().unwrap())
            .collect();
        assert_eq!(ids, [0, 1, 2]);
        assert_eq!(stats.frames_emitted, 3);
        assert!(dir.path().join(STATS_FILE).is_file());
        assert!(!overlay_path(dir.path(), 0).exists());
    }

    #[test]
    fn overlays_written_when_enabled() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path(), 2);
        c.out_overlay = true;
        run_pose_pipeline(&c).unwrap();
        assert!(overlay_path(dir.path(), 0).is_file());
        assert!(overlay_path(dir.path(), 1).is_file());
    }

    #[test]
    fn unwritable_output_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = PosePipeline::build(&cfg(&blocker.join("sub"), 3)).err().unwrap();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn batch_max_above_backend_limit_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path(), 1);
        c.scheduler.batch_max = 64;
        assert!(matches!(PosePipeline::build(&c), Err(Error::Config(_))));
    }

    #[test]
    fn backend_failure_aborts_with_operator_name() {
        let dir = tempfile::tempdir().unwrap();
        let maps = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path(), 5);
        c.backend = format!("file:{}", maps.path().display());
        let err = run_pose_pipeline(&c).unwrap_err();
        assert_eq!(err.operator(), Some("infer"));
    }
}
