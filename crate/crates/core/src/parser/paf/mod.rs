//! Part-affinity-field parsing: peak NMS on confidence maps, line-integral
//! limb scoring on the PAF, greedy per-limb matching, and assembly of limbs
//! into people.
//!
//! Peaks stay on integer cells (no sub-pixel refinement) and PAF samples use
//! nearest-cell lookup. Limb scores have no length penalty. Every tie is
//! broken by an explicit total order, so output never depends on iteration
//! order or thread schedule.

mod assemble;
mod limbs;
mod nms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{FeatureMaps, HumanPose};
use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

use super::PoseParser;

pub use assemble::assemble_humans;
pub use limbs::{connect_limbs, score_limb};
pub use nms::{extract_peaks, nms_peaks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserParams {
    pub conf_threshold: f32,
    pub nms_window: u32,
    pub n_samples: u32,
    pub sample_dot_threshold: f32,
    pub good_fraction_min: f32,
    pub min_parts: u32,
    pub min_human_score: f32,
}

impl Default for ParserParams {
    fn default() -> Self {
        Self {
            conf_threshold: 0.10,
            nms_window: 3,
            n_samples: 10,
            sample_dot_threshold: 0.05,
            good_fraction_min: 0.8,
            min_parts: 4,
            min_human_score: 0.2,
        }
    }
}

impl ParserParams {
    pub fn validate(&self) -> Result<()> {
        if self.nms_window < 3 || self.nms_window % 2 == 0 {
            return Err(Error::Config(format!(
                "paf.nms_window must be odd and >= 3, got {}",
                self.nms_window
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::Config(format!(
                "paf.n_samples must be >= 2, got {}",
                self.n_samples
            )));
        }
        for (name, v) in [
            ("conf_threshold", self.conf_threshold),
            ("sample_dot_threshold", self.sample_dot_threshold),
            ("good_fraction_min", self.good_fraction_min),
            ("min_human_score", self.min_human_score),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("paf.{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Borrowed view of one `[H', W']` channel.
#[derive(Debug, Clone, Copy)]
pub struct MapView<'a> {
    pub height: usize,
    pub width: usize,
    pub data: &'a [f32],
}

impl<'a> MapView<'a> {
    pub fn new(height: usize, width: usize, data: &'a [f32]) -> Self {
        assert_eq!(data.len(), height * width, "map view extent mismatch");
        Self { height, width, data }
    }

    /// View of a rank-2 tensor.
    pub fn from_tensor(t: &'a TensorF32) -> Self {
        match t.dims() {
            &[h, w] => Self::new(h as usize, w as usize, t.data()),
            d => panic!("expected a rank-2 map, got {d:?}"),
        }
    }

    /// View of channel `c` of a rank-3 `[C, H', W']` tensor.
    pub fn channel(t: &'a TensorF32, c: usize) -> Self {
        let d = t.dims();
        Self::new(d[1] as usize, d[2] as usize, t.outer(c))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.width + j]
    }
}

/// Keypoint candidate on an integer feature cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub part: u32,
    pub i: u32,
    pub j: u32,
    pub score: f32,
    pub id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbConnection {
    pub limb: u32,
    pub peak_a: u32,
    pub peak_b: u32,
    pub score: f32,
    pub good_fraction: f32,
}

/// Full parse: NMS → limb matching → assembly.
pub fn parse(maps: &FeatureMaps, topo: &SkeletonTopology, params: &ParserParams) -> Result<Vec<HumanPose>> {
    maps.check(topo)?;
    let peaks = extract_peaks(&maps.conf, topo.num_keypoints(), params);
    let connections = connect_limbs(&peaks, &maps.paf, topo, params);
    Ok(assemble_humans(&connections, &peaks, topo, params, maps.stride))
}

#[derive(Debug, Clone, Default)]
pub struct PafParser {
    params: ParserParams,
}

impl PafParser {
    pub fn new(params: ParserParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ParserParams {
        &self.params
    }
}

impl PoseParser for PafParser {
    fn name(&self) -> &str {
        "paf"
    }

    fn parse(&self, maps: &FeatureMaps, topo: &SkeletonTopology) -> Result<Vec<HumanPose>> {
        parse(maps, topo, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ParserParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_even_window_and_short_sampling() {
        let p = ParserParams { nms_window: 4, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ParserParams { n_samples: 1, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ParserParams { good_fraction_min: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_maps_parse_to_nothing() {
        let topo = SkeletonTopology::coco18();
        let maps = FeatureMaps {
            conf: TensorF32::zeros(vec![19, 8, 8]),
            paf: TensorF32::zeros(vec![38, 8, 8]),
            stride: 8,
            frame_ref: 0,
        };
        assert!(parse(&maps, &topo, &ParserParams::default()).unwrap().is_empty());
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let topo = SkeletonTopology::coco18();
        let maps = FeatureMaps {
            conf: TensorF32::zeros(vec![18, 8, 8]),
            paf: TensorF32::zeros(vec![38, 8, 8]),
            stride: 8,
            frame_ref: 0,
        };
        assert!(matches!(parse(&maps, &topo, &ParserParams::default()), Err(Error::Contract(_))));
    }
}
