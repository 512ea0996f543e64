use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::topology::SkeletonTopology;

use super::procedural::procedural_scene;
use super::SynthParams;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthHuman {
    /// Input-pixel `(x, y)` per keypoint, `None` when absent.
    pub keypoints: Vec<Option<(f32, f32)>>,
}

impl GroundTruthHuman {
    pub fn n_present(&self) -> usize {
        self.keypoints.iter().filter(|k| k.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    pub humans: Vec<GroundTruthHuman>,
    pub input_w: u32,
    pub input_h: u32,
    pub seed: u64,
}

impl GroundTruthScene {
    pub fn empty(input_w: u32, input_h: u32) -> Self {
        Self {
            humans: Vec::new(),
            input_w,
            input_h,
            seed: 0,
        }
    }

    /// Every keypoint inside `[0, W) x [0, H)` and every keypoint list of length `K`.
    pub fn validate(&self, topo: &SkeletonTopology) -> Result<()> {
        let (w, h) = (self.input_w as f32, self.input_h as f32);
        for (n, human) in self.humans.iter().enumerate() {
            if human.keypoints.len() != topo.num_keypoints() {
                return Err(Error::Contract(format!(
                    "human {n} has {} keypoint slots, topology has {}",
                    human.keypoints.len(),
                    topo.num_keypoints()
                )));
            }
            for (part, kp) in human.keypoints.iter().enumerate() {
                if let Some((x, y)) = *kp {
                    if !(0.0..w).contains(&x) || !(0.0..h).contains(&y) {
                        return Err(Error::Contract(format!(
                            "human {n} keypoint {} at ({x}, {y}) is outside {w}x{h}",
                            topo.keypoint_name(part)
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    #[serde(default)]
    scenes: Vec<SceneEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneEntry {
    #[serde(default)]
    humans: Vec<BTreeMap<String, [f32; 2]>>,
}

/// Scenes loaded from a TOML corpus:
///
/// ```toml
/// [[scenes]]
/// [[scenes.humans]]
/// nose = [320.0, 60.0]
/// neck = [320.0, 90.0]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCorpus {
    pub scenes: Vec<GroundTruthScene>,
}

impl SceneCorpus {
    pub fn from_toml_str(text: &str, topo: &SkeletonTopology, input_w: u32, input_h: u32) -> Result<Self> {
        let file: CorpusFile =
            toml::from_str(text).map_err(|e| Error::Format(format!("scene corpus TOML: {e}")))?;
        let mut scenes = Vec::with_capacity(file.scenes.len());
        for (idx, entry) in file.scenes.into_iter().enumerate() {
            let mut humans = Vec::with_capacity(entry.humans.len());
            for named in entry.humans {
                let mut keypoints = vec![None; topo.num_keypoints()];
                for (name, [x, y]) in named {
                    let part = topo.keypoint_index(&name).ok_or_else(|| {
                        Error::Format(format!("scene {idx}: unknown keypoint `{name}`"))
                    })?;
                    keypoints[part] = Some((x, y));
                }
                humans.push(GroundTruthHuman { keypoints });
            }
            let scene = GroundTruthScene {
                humans,
                input_w,
                input_h,
                seed: idx as u64,
            };
            scene.validate(topo)?;
            scenes.push(scene);
        }
        if scenes.is_empty() {
            return Err(Error::Format("scene corpus has no scenes".into()));
        }
        Ok(Self { scenes })
    }

    pub fn load(path: &Path, topo: &SkeletonTopology, input_w: u32, input_h: u32) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
        Self::from_toml_str(&text, topo, input_w, input_h)
    }
}

/// Where scenes for seq ids not registered explicitly come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneSource {
    None,
    /// Frame `n` uses scene `n % len`.
    Cycle(Vec<GroundTruthScene>),
    /// Seeded procedural scene per seq id.
    Procedural { seed: u64 },
}

/// Maps seq ids to scenes. Read-only once the pipeline starts.
#[derive(Debug, Clone)]
pub struct SceneRegistry {
    explicit: BTreeMap<u64, GroundTruthScene>,
    fallback: SceneSource,
    input_w: u32,
    input_h: u32,
}

impl SceneRegistry {
    pub fn new(fallback: SceneSource, input_w: u32, input_h: u32) -> Self {
        Self {
            explicit: BTreeMap::new(),
            fallback,
            input_w,
            input_h,
        }
    }

    pub fn insert(&mut self, seq_id: u64, scene: GroundTruthScene) {
        self.explicit.insert(seq_id, scene);
    }

    pub fn fallback(&self) -> &SceneSource {
        &self.fallback
    }

    pub fn scene_for(&self, seq_id: u64, topo: &SkeletonTopology, params: &SynthParams) -> Result<GroundTruthScene> {
        if let Some(s) = self.explicit.get(&seq_id) {
            return Ok(s.clone());
        }
        match &self.fallback {
            SceneSource::None => Err(Error::backend([seq_id], "no scene registered")),
            SceneSource::Cycle(scenes) => Ok(scenes[(seq_id % scenes.len() as u64) as usize].clone()),
            SceneSource::Procedural { seed } => {
                procedural_scene(*seed, seq_id, topo, self.input_w, self.input_h, params)
            }
        }
    }
}
