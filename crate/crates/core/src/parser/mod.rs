//! Pose parsers: turn feature maps into people. Parsers are looked up by
//! name so other decoder families can sit next to the PAF one.

pub mod paf;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pose::{FeatureMaps, HumanPose};
use crate::topology::SkeletonTopology;

pub use paf::{PafParser, ParserParams};

pub trait PoseParser: Send + Sync {
    fn name(&self) -> &str;

    /// Must be a pure function of `(maps, topo)` and the parser's own settings.
    fn parse(&self, maps: &FeatureMaps, topo: &SkeletonTopology) -> Result<Vec<HumanPose>>;
}

pub type ParserFactory = fn(&PipelineConfig) -> Result<Arc<dyn PoseParser>>;

pub struct ParserRegistry {
    factories: BTreeMap<String, ParserFactory>,
}

impl ParserRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("paf", |cfg| {
            cfg.paf.validate()?;
            Ok(Arc::new(PafParser::new(cfg.paf.clone())))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: ParserFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, cfg: &PipelineConfig) -> Result<Arc<dyn PoseParser>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown parser `{name}` (available: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(cfg)
    }
}

impl Default for ParserRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
