//! Inference backends behind one trait, selected by name at runtime.
//!
//! A backend spec string has the form `<name>:<argument>`, for example
//! `synth:procedural`, `synth:scenes.toml` or `file:dumps/`.

mod file;
mod synthetic;

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pose::FeatureMaps;
use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

pub use file::{dump_path, write_dump, DumpingBackend, FileBackend};
pub use synthetic::SynthBackend;

pub trait InferenceBackend: Send {
    fn name(&self) -> &str;

    /// Largest batch a single [`infer`](Self::infer) call accepts.
    fn max_batch(&self) -> u32;

    /// `batch` is `[B, 3, H, W]`; returns exactly `B` maps in input order.
    fn infer(&mut self, batch: &TensorF32, seq_ids: &[u64]) -> Result<Vec<FeatureMaps>>;
}

/// Parsed `<kind>:<argument>` backend selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendSpec {
    pub kind: String,
    pub arg: String,
}

impl BackendSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
        if kind.is_empty() {
            return Err(Error::Config(format!("invalid backend spec `{spec}`")));
        }
        Ok(Self {
            kind: kind.to_owned(),
            arg: arg.to_owned(),
        })
    }
}

pub struct BackendContext<'a> {
    pub topology: &'a SkeletonTopology,
    pub config: &'a PipelineConfig,
}

pub type BackendFactory = fn(&str, &BackendContext<'_>) -> Result<Box<dyn InferenceBackend>>;

pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("synth", |arg, ctx| Ok(Box::new(SynthBackend::from_arg(arg, ctx)?)));
        r.register("file", |arg, ctx| {
            if arg.is_empty() {
                return Err(Error::Config("file backend needs a directory: file:<dir>".into()));
            }
            Ok(Box::new(FileBackend::new(
                PathBuf::from(arg),
                ctx.topology.clone(),
                ctx.config.input_w,
                ctx.config.input_h,
            )?))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: BackendFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, spec: &str, ctx: &BackendContext<'_>) -> Result<Box<dyn InferenceBackend>> {
        let spec = BackendSpec::parse(spec)?;
        let factory = self.factories.get(&spec.kind).ok_or_else(|| {
            Error::Config(format!(
                "unknown backend `{}` (available: {})",
                spec.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(&spec.arg, ctx)
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!(
            BackendSpec::parse("synth:a/b.toml").unwrap(),
            BackendSpec { kind: "synth".into(), arg: "a/b.toml".into() }
        );
        assert_eq!(BackendSpec::parse("file:C:/x").unwrap().arg, "C:/x");
        assert!(BackendSpec::parse(":x").is_err());
    }

    #[test]
    fn unknown_backend_is_config_error() {
        let topo = SkeletonTopology::coco18();
        let cfg = PipelineConfig::default();
        let ctx = BackendContext { topology: &topo, config: &cfg };
        let err = BackendRegistry::with_builtins().create("gpu:0", &ctx).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
    }
}
