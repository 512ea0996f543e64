//! Feature maps, parsed poses, the cell/pixel coordinate convention, and the
//! per-frame JSON record.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

/// Input-pixel center of feature cell `(i, j)`: `x = (j + 0.5) * stride - 0.5`.
pub fn cell_to_pixel(i: u32, j: u32, stride: u32) -> (f32, f32) {
    let s = stride as f32;
    ((j as f32 + 0.5) * s - 0.5, (i as f32 + 0.5) * s - 0.5)
}

/// Inverse of [`cell_to_pixel`] in continuous cell units, returned as `(row, col)`.
pub fn pixel_to_cell(x: f32, y: f32, stride: u32) -> (f32, f32) {
    let s = stride as f32;
    ((y + 0.5) / s - 0.5, (x + 0.5) / s - 0.5)
}

/// Network output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    /// `[K + 1, H', W']`, channel `K` is background.
    pub conf: TensorF32,
    /// `[2L, H', W']`.
    pub paf: TensorF32,
    pub stride: u32,
    pub frame_ref: u64,
}

impl FeatureMaps {
    pub fn height(&self) -> u32 {
        self.conf.dims()[1]
    }

    pub fn width(&self) -> u32 {
        self.conf.dims()[2]
    }

    /// Check the channel counts against `topo` and that both maps share extents.
    pub fn check(&self, topo: &SkeletonTopology) -> Result<()> {
        let k = topo.num_keypoints() as u32;
        let l = topo.num_limbs() as u32;
        let (cd, pd) = (self.conf.dims(), self.paf.dims());
        if cd.len() != 3 || pd.len() != 3 {
            return Err(Error::Contract(format!(
                "feature maps must be rank 3, got conf {cd:?} paf {pd:?}"
            )));
        }
        if cd[0] != k + 1 {
            return Err(Error::Contract(format!(
                "conf has {} channels, topology needs {}",
                cd[0],
                k + 1
            )));
        }
        if pd[0] != 2 * l {
            return Err(Error::Contract(format!(
                "paf has {} channels, topology needs {}",
                pd[0],
                2 * l
            )));
        }
        if cd[1..] != pd[1..] {
            return Err(Error::Contract(format!(
                "conf extents {:?} differ from paf extents {:?}",
                &cd[1..],
                &pd[1..]
            )));
        }
        if self.stride == 0 {
            return Err(Error::Contract("stride must be positive".into()));
        }
        Ok(())
    }

    /// Concatenate conf and paf channels into one `[K + 1 + 2L, H', W']` tensor.
    pub fn to_stacked(&self) -> TensorF32 {
        let d = self.conf.dims();
        let channels = d[0] + self.paf.dims()[0];
        let mut data = Vec::with_capacity(self.conf.len() + self.paf.len());
        data.extend_from_slice(self.conf.data());
        data.extend_from_slice(self.paf.data());
        TensorF32::new(vec![channels, d[1], d[2]], data).expect("consistent feature maps")
    }

    /// Split a stacked tensor back into conf and paf using `topo`'s channel counts.
    pub fn from_stacked(
        stacked: TensorF32,
        topo: &SkeletonTopology,
        stride: u32,
        frame_ref: u64,
    ) -> Result<Self> {
        let k1 = topo.num_keypoints() as u32 + 1;
        let l2 = 2 * topo.num_limbs() as u32;
        let d = stacked.dims().to_vec();
        if d.len() != 3 || d[0] != k1 + l2 {
            return Err(Error::Contract(format!(
                "stacked maps {d:?} do not match topology ({k1} + {l2} channels)"
            )));
        }
        let mut data = stacked.into_data();
        let split = (k1 * d[1] * d[2]) as usize;
        let paf = data.split_off(split);
        Ok(Self {
            conf: TensorF32::new(vec![k1, d[1], d[2]], data)?,
            paf: TensorF32::new(vec![l2, d[1], d[2]], paf)?,
            stride,
            frame_ref,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub score: f32,
}

/// One parsed person in network-input pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanPose {
    pub keypoints: Vec<Option<Keypoint>>,
    pub score: f32,
    pub n_parts: u32,
}

impl HumanPose {
    pub fn present(&self) -> impl Iterator<Item = (usize, &Keypoint)> {
        self.keypoints
            .iter()
            .enumerate()
            .filter_map(|(p, k)| k.as_ref().map(|k| (p, k)))
    }
}

#[derive(Debug, Serialize)]
pub struct KeypointRecord<'a> {
    pub part: &'a str,
    pub x: f32,
    pub y: f32,
    pub score: f32,
}

#[derive(Debug, Serialize)]
pub struct HumanRecord<'a> {
    pub score: f32,
    pub keypoints: Vec<KeypointRecord<'a>>,
}

/// One line of `poses.jsonl`.
#[derive(Debug, Serialize)]
pub struct FrameRecord<'a> {
    pub frame_id: u64,
    pub humans: Vec<HumanRecord<'a>>,
}

impl<'a> FrameRecord<'a> {
    pub fn new(frame_id: u64, humans: &[HumanPose], topo: &'a SkeletonTopology) -> Self {
        let humans = humans
            .iter()
            .map(|h| HumanRecord {
                score: h.score,
                keypoints: h
                    .present()
                    .map(|(p, k)| KeypointRecord {
                        part: topo.keypoint_name(p),
                        x: k.x,
                        y: k.y,
                        score: k.score,
                    })
                    .collect(),
            })
            .collect();
        Self { frame_id, humans }
    }

    /// Single-line JSON without trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame record serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_pixel_round_trip() {
        for stride in [1, 4, 8] {
            for i in 0..5 {
                for j in 0..5 {
                    let (x, y) = cell_to_pixel(i, j, stride);
                    let (ci, cj) = pixel_to_cell(x, y, stride);
                    assert_eq!((ci, cj), (i as f32, j as f32));
                }
            }
        }
        assert_eq!(cell_to_pixel(0, 0, 8), (3.5, 3.5));
    }

    #[test]
    fn json_record_key_order() {
        let topo = SkeletonTopology::coco18();
        let mut kps = vec![None; 18];
        kps[1] = Some(Keypoint { x: 1.5, y: 2.0, score: 0.25 });
        let h = HumanPose { keypoints: kps, score: 0.5, n_parts: 1 };
        let line = FrameRecord::new(7, &[h], &topo).to_json_line();
        assert_eq!(
            line,
            r#"{"frame_id":7,"humans":[{"score":0.5,"keypoints":[{"part":"neck","x":1.5,"y":2.0,"score":0.25}]}]}"#
        );
    }

    #[test]
    fn stacked_round_trip_and_check() {
        let topo = SkeletonTopology::coco18();
        let maps = FeatureMaps {
            conf: TensorF32::filled(vec![19, 2, 3], 0.25),
            paf: TensorF32::filled(vec![38, 2, 3], -0.5),
            stride: 8,
            frame_ref: 3,
        };
        maps.check(&topo).unwrap();
        let back = FeatureMaps::from_stacked(maps.to_stacked(), &topo, 8, 3).unwrap();
        assert_eq!(back, maps);

        let bad = FeatureMaps { paf: TensorF32::zeros(vec![36, 2, 3]), ..maps };
        assert!(matches!(bad.check(&topo), Err(Error::Contract(_))));
    }
}
