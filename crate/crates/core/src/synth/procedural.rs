use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::topology::SkeletonTopology;

use super::{GroundTruthHuman, GroundTruthScene, SynthParams};

/// People in a procedural scene are at least this many `sigma_conf * stride`
/// pixels apart (bounding-box distance).
pub const MIN_SEPARATION_SIGMAS: f32 = 6.0;

const MAX_HUMANS: usize = 5;
const PLACEMENT_ATTEMPTS: usize = 400;
const MARGIN_PX: f32 = 2.0;

/// Stick figure in units of body height, `(x, y)` from the top-left of its box.
/// The head is drawn large so that face limbs span a couple of feature cells.
const CANONICAL: [(&str, f32, f32); 18] = [
    ("nose", 0.50, 0.15),
    ("neck", 0.50, 0.30),
    ("right_shoulder", 0.32, 0.31),
    ("right_elbow", 0.25, 0.48),
    ("right_wrist", 0.20, 0.64),
    ("left_shoulder", 0.68, 0.31),
    ("left_elbow", 0.75, 0.48),
    ("left_wrist", 0.80, 0.64),
    ("right_hip", 0.40, 0.62),
    ("right_knee", 0.38, 0.80),
    ("right_ankle", 0.37, 0.98),
    ("left_hip", 0.60, 0.62),
    ("left_knee", 0.62, 0.80),
    ("left_ankle", 0.63, 0.98),
    ("right_eye", 0.42, 0.04),
    ("left_eye", 0.58, 0.04),
    ("right_ear", 0.30, 0.10),
    ("left_ear", 0.70, 0.10),
];

/// Canonical figure mapped onto `topo`'s keypoint order, in unit-height coordinates.
pub fn canonical_figure(topo: &SkeletonTopology) -> Result<Vec<(f32, f32)>> {
    topo.keypoint_names()
        .iter()
        .map(|name| {
            CANONICAL
                .iter()
                .find(|(n, _, _)| n == name)
                .map(|&(_, x, y)| (x, y))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "procedural scenes need the coco18 keypoints; `{name}` has no canonical position"
                    ))
                })
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Box2 {
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
}

impl Box2 {
    fn distance(&self, o: &Box2) -> f32 {
        let gx = (o.x0 - self.x1).max(self.x0 - o.x1).max(0.0);
        let gy = (o.y0 - self.y1).max(self.y0 - o.y1).max(0.0);
        (gx * gx + gy * gy).sqrt()
    }
}

/// Seeded scene of 1 to 5 scaled and translated copies of the canonical
/// figure, pairwise separated by at least [`MIN_SEPARATION_SIGMAS`] `* sigma * stride` px.
/// The same `(seed, seq_id)` always yields the same scene.
pub fn procedural_scene(
    seed: u64,
    seq_id: u64,
    topo: &SkeletonTopology,
    input_w: u32,
    input_h: u32,
    params: &SynthParams,
) -> Result<GroundTruthScene> {
    let figure = canonical_figure(topo)?;
    let (fx0, fx1) = extent(figure.iter().map(|p| p.0));
    let (fy0, fy1) = extent(figure.iter().map(|p| p.1));
    let (w, h) = (input_w as f32, input_h as f32);
    let separation = MIN_SEPARATION_SIGMAS * params.sigma_conf * params.stride as f32;

    let fit = ((h - 2.0 * MARGIN_PX) / (fy1 - fy0)).min((w - 2.0 * MARGIN_PX) / (fx1 - fx0));
    let h_max = fit.min(150.0);
    let h_min = (0.75 * h_max).min(110.0);
    if h_max < 8.0 {
        return Err(Error::Contract(format!(
            "input {input_w}x{input_h} is too small for procedural scenes"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(seq_id);
    let wanted = rng.random_range(1..=MAX_HUMANS);

    let mut boxes: Vec<Box2> = Vec::new();
    let mut humans = Vec::new();
    for _ in 0..PLACEMENT_ATTEMPTS {
        if humans.len() == wanted {
            break;
        }
        let scale = rng.random_range(h_min..=h_max);
        let (bw, bh) = ((fx1 - fx0) * scale, (fy1 - fy0) * scale);
        let free_x = w - 2.0 * MARGIN_PX - bw;
        let free_y = h - 2.0 * MARGIN_PX - bh;
        if free_x < 0.0 || free_y < 0.0 {
            continue;
        }
        let x0 = MARGIN_PX + rng.random_range(0.0..=free_x);
        let y0 = MARGIN_PX + rng.random_range(0.0..=free_y);
        let candidate = Box2 {
            x0,
            y0,
            x1: x0 + bw,
            y1: y0 + bh,
        };
        if boxes.iter().any(|b| b.distance(&candidate) < separation) {
            continue;
        }
        boxes.push(candidate);
        let keypoints = figure
            .iter()
            .map(|&(px, py)| {
                let x = (x0 + (px - fx0) * scale).clamp(0.0, w - 1.0);
                let y = (y0 + (py - fy0) * scale).clamp(0.0, h - 1.0);
                Some((x, y))
            })
            .collect();
        humans.push(GroundTruthHuman { keypoints });
    }

    Ok(GroundTruthScene {
        humans,
        input_w,
        input_h,
        seed: seq_id,
    })
}

fn extent(values: impl Iterator<Item = f32>) -> (f32, f32) {
    values.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
