//! Skeleton topologies: keypoint names, limbs and the PAF channel of each limb.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

const COCO18_TOML: &str = include_str!("../data/coco18.toml");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("topology has no keypoints")]
    NoKeypoints,
    #[error("topology has no limbs")]
    NoLimbs,
    #[error("duplicate keypoint name `{0}`")]
    DuplicateName(String),
    #[error("limb {limb} joins keypoint {part} to itself")]
    SelfLoop { limb: usize, part: u32 },
    #[error("limb {limb} references keypoint {part} but only {count} exist")]
    KeypointOutOfRange { limb: usize, part: u32, count: usize },
    #[error("expected {expected} paf channel pairs, got {got}")]
    PafChannelCount { expected: usize, got: usize },
    #[error("limb {limb} uses paf channel {channel}, outside 0..{bound}")]
    PafChannelOutOfRange { limb: usize, channel: u32, bound: usize },
    #[error("paf channel {channel} is used more than once (limb {limb})")]
    PafChannelReused { limb: usize, channel: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limb {
    pub a: u32,
    pub b: u32,
}

/// Keypoint layout that parametrizes rendering and parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    keypoint_names: Vec<String>,
    limbs: Vec<Limb>,
    paf_channels: Vec<(u32, u32)>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    keypoints: Vec<String>,
    limbs: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paf_channels: Option<Vec<[u32; 2]>>,
}

impl SkeletonTopology {
    pub fn new(
        keypoint_names: Vec<String>,
        limbs: Vec<Limb>,
        paf_channels: Option<Vec<(u32, u32)>>,
    ) -> Result<Self, TopologyError> {
        let paf_channels = paf_channels.unwrap_or_else(|| {
            (0..limbs.len() as u32).map(|l| (2 * l, 2 * l + 1)).collect()
        });
        let topo = Self {
            keypoint_names,
            limbs,
            paf_channels,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// The built-in 18-keypoint, 19-limb body layout.
    pub fn coco18() -> Self {
        Self::from_toml_str(COCO18_TOML).expect("bundled coco18 topology is valid")
    }

    pub fn bundled_source() -> &'static str {
        COCO18_TOML
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: TopologyFile =
            toml::from_str(text).map_err(|e| Error::Format(format!("topology TOML: {e}")))?;
        let limbs = file.limbs.iter().map(|&[a, b]| Limb { a, b }).collect();
        let paf = file
            .paf_channels
            .map(|v| v.iter().map(|&[x, y]| (x, y)).collect());
        Ok(Self::new(file.keypoints, limbs, paf)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolve `"coco18"` to the bundled layout, anything else as a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if name_or_path == "coco18" {
            Ok(Self::coco18())
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn to_toml_string(&self) -> String {
        let file = TopologyFile {
            keypoints: self.keypoint_names.clone(),
            limbs: self.limbs.iter().map(|l| [l.a, l.b]).collect(),
            paf_channels: Some(self.paf_channels.iter().map(|&(x, y)| [x, y]).collect()),
        };
        toml::to_string(&file).expect("topology serializes")
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let k = self.keypoint_names.len();
        if k == 0 {
            return Err(TopologyError::NoKeypoints);
        }
        if self.limbs.is_empty() {
            return Err(TopologyError::NoLimbs);
        }
        let mut names = BTreeSet::new();
        for name in &self.keypoint_names {
            if !names.insert(name.as_str()) {
                return Err(TopologyError::DuplicateName(name.clone()));
            }
        }
        for (limb, l) in self.limbs.iter().enumerate() {
            for part in [l.a, l.b] {
                if part as usize >= k {
                    return Err(TopologyError::KeypointOutOfRange { limb, part, count: k });
                }
            }
            if l.a == l.b {
                return Err(TopologyError::SelfLoop { limb, part: l.a });
            }
        }
        if self.paf_channels.len() != self.limbs.len() {
            return Err(TopologyError::PafChannelCount {
                expected: self.limbs.len(),
                got: self.paf_channels.len(),
            });
        }
        let bound = 2 * self.limbs.len();
        let mut used = BTreeSet::new();
        for (limb, &(cx, cy)) in self.paf_channels.iter().enumerate() {
            for channel in [cx, cy] {
                if channel as usize >= bound {
                    return Err(TopologyError::PafChannelOutOfRange { limb, channel, bound });
                }
                if !used.insert(channel) {
                    return Err(TopologyError::PafChannelReused { limb, channel });
                }
            }
        }
        if !self.is_connected() {
            log::warn!("skeleton limb graph is not connected over its keypoints");
        }
        Ok(())
    }

    /// Whether the limb graph is connected over the keypoints it touches.
    pub fn is_connected(&self) -> bool {
        let k = self.keypoint_names.len();
        let touched: BTreeSet<u32> = self.limbs.iter().flat_map(|l| [l.a, l.b]).collect();
        let Some(&start) = touched.iter().next() else {
            return true;
        };
        let mut seen = vec![false; k];
        let mut stack = vec![start];
        seen[start as usize] = true;
        while let Some(p) = stack.pop() {
            for l in &self.limbs {
                let next = if l.a == p {
                    l.b
                } else if l.b == p {
                    l.a
                } else {
                    continue;
                };
                if !seen[next as usize] {
                    seen[next as usize] = true;
                    stack.push(next);
                }
            }
        }
        touched.iter().all(|&p| seen[p as usize])
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoint_names.len()
    }

    pub fn num_limbs(&self) -> usize {
        self.limbs.len()
    }

    pub fn keypoint_names(&self) -> &[String] {
        &self.keypoint_names
    }

    pub fn keypoint_name(&self, part: usize) -> &str {
        &self.keypoint_names[part]
    }

    pub fn keypoint_index(&self, name: &str) -> Option<usize> {
        self.keypoint_names.iter().position(|n| n == name)
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub fn paf_channels(&self) -> &[(u32, u32)] {
        &self.paf_channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn coco18_shape() {
        let t = SkeletonTopology::coco18();
        assert_eq!(t.num_keypoints(), 18);
        assert_eq!(t.num_limbs(), 19);
        assert_eq!(t.paf_channels()[3], (6, 7));
        assert!(t.is_connected());
        assert_eq!(t.keypoint_index("neck"), Some(1));
    }

    #[test]
    fn toml_round_trip() {
        let t = SkeletonTopology::coco18();
        let back = SkeletonTopology::from_toml_str(&t.to_toml_string()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_self_loop() {
        let e = SkeletonTopology::new(names(3), vec![Limb { a: 1, b: 1 }], None).unwrap_err();
        assert_eq!(e, TopologyError::SelfLoop { limb: 0, part: 1 });
    }

    #[test]
    fn rejects_out_of_range_keypoint() {
        let e = SkeletonTopology::new(names(2), vec![Limb { a: 0, b: 2 }], None).unwrap_err();
        assert!(matches!(e, TopologyError::KeypointOutOfRange { part: 2, .. }));
    }

    #[test]
    fn rejects_bad_paf_channels() {
        let limbs = vec![Limb { a: 0, b: 1 }, Limb { a: 1, b: 2 }];
        let e = SkeletonTopology::new(names(3), limbs.clone(), Some(vec![(0, 1), (1, 2)])).unwrap_err();
        assert_eq!(e, TopologyError::PafChannelReused { limb: 1, channel: 1 });
        let e = SkeletonTopology::new(names(3), limbs.clone(), Some(vec![(0, 1), (2, 4)])).unwrap_err();
        assert!(matches!(e, TopologyError::PafChannelOutOfRange { channel: 4, .. }));
        let e = SkeletonTopology::new(names(3), limbs, Some(vec![(0, 1)])).unwrap_err();
        assert!(matches!(e, TopologyError::PafChannelCount { expected: 2, got: 1 }));
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert_eq!(
            SkeletonTopology::new(vec![], vec![], None).unwrap_err(),
            TopologyError::NoKeypoints
        );
        let e = SkeletonTopology::new(vec!["a".into(), "a".into()], vec![Limb { a: 0, b: 1 }], None)
            .unwrap_err();
        assert_eq!(e, TopologyError::DuplicateName("a".into()));
    }

    #[test]
    fn disconnected_is_allowed() {
        let limbs = vec![Limb { a: 0, b: 1 }, Limb { a: 2, b: 3 }];
        let t = SkeletonTopology::new(names(4), limbs, None).unwrap();
        assert!(!t.is_connected());
    }

    #[test]
    fn malformed_toml_is_format_error() {
        assert!(matches!(
            SkeletonTopology::from_toml_str("keypoints = 3"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            SkeletonTopology::from_toml_str("keypoints = [\"a\", \"b\"]\nlimbs = [[0, 0]]"),
            Err(Error::Topology(TopologyError::SelfLoop { .. }))
        ));
    }
}
