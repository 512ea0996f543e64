//! Scoring parsed poses against the ground truth that produced the maps.

use serde::Serialize;

use crate::error::Result;
use crate::parser::paf::{parse, ParserParams};
use crate::pose::HumanPose;
use crate::synth::{procedural_scene, render_feature_maps, GroundTruthScene, SynthParams};
use crate::topology::SkeletonTopology;

/// Predicted humans with at least this many parts that match no ground-truth
/// human count as false detections.
pub const FALSE_HUMAN_MIN_PARTS: usize = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RecoveryStats {
    pub frames: u64,
    pub gt_humans: u64,
    pub gt_keypoints: u64,
    pub recovered_keypoints: u64,
    pub predicted_humans: u64,
    pub false_humans: u64,
}

impl RecoveryStats {
    pub fn recall(&self) -> f64 {
        if self.gt_keypoints == 0 {
            1.0
        } else {
            self.recovered_keypoints as f64 / self.gt_keypoints as f64
        }
    }

    fn add(&mut self, o: &RecoveryStats) {
        self.frames += o.frames;
        self.gt_humans += o.gt_humans;
        self.gt_keypoints += o.gt_keypoints;
        self.recovered_keypoints += o.recovered_keypoints;
        self.predicted_humans += o.predicted_humans;
        self.false_humans += o.false_humans;
    }
}

fn close_parts(gt: &[Option<(f32, f32)>], pred: &HumanPose, tol: f32) -> usize {
    gt.iter()
        .zip(&pred.keypoints)
        .filter(|(g, p)| match (g, p) {
            (Some((gx, gy)), Some(k)) => (k.x - gx).hypot(k.y - gy) <= tol,
            _ => false,
        })
        .count()
}

/// One-to-one assignment of predictions to ground-truth humans, greedily by
/// the number of parts within `tol_px` (ties to the lower indices). A ground
/// truth keypoint counts as recovered when its assigned prediction has that
/// part within tolerance. A prediction matches when at least half of its
/// parts lie within tolerance of the human it is assigned to.
pub fn match_frame(gt: &GroundTruthScene, poses: &[HumanPose], tol_px: f32) -> RecoveryStats {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (g, h) in gt.humans.iter().enumerate() {
        for (p, pose) in poses.iter().enumerate() {
            let n = close_parts(&h.keypoints, pose, tol_px);
            if n > 0 {
                pairs.push((n, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut gt_used = vec![false; gt.humans.len()];
    let mut pred_match = vec![false; poses.len()];
    let mut recovered = 0;
    for (n, g, p) in pairs {
        if gt_used[g] || pred_match[p] {
            continue;
        }
        gt_used[g] = true;
        recovered += n;
        pred_match[p] = 2 * n >= poses[p].present().count();
    }
    let false_humans = poses
        .iter()
        .zip(&pred_match)
        .filter(|(pose, &m)| !m && pose.present().count() >= FALSE_HUMAN_MIN_PARTS)
        .count();
    RecoveryStats {
        frames: 1,
        gt_humans: gt.humans.len() as u64,
        gt_keypoints: gt.humans.iter().map(|h| h.n_present() as u64).sum(),
        recovered_keypoints: recovered as u64,
        predicted_humans: poses.len() as u64,
        false_humans: false_humans as u64,
    }
}

/// Render and parse `scenes` procedural scenes (seq ids `0..scenes`) and
/// accumulate recovery at a tolerance of `2 * stride` px.
pub fn procedural_recovery(
    scenes: u64,
    seed: u64,
    topo: &SkeletonTopology,
    synth: &SynthParams,
    params: &ParserParams,
    input_w: u32,
    input_h: u32,
) -> Result<RecoveryStats> {
    let tol = 2.0 * synth.stride as f32;
    let mut total = RecoveryStats::default();
    for seq in 0..scenes {
        let scene = procedural_scene(seed, seq, topo, input_w, input_h, synth)?;
        let maps = render_feature_maps(&scene, topo, synth)?;
        let poses = parse(&maps, topo, params)?;
        total.add(&match_frame(&scene, &poses, tol));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;
    use crate::synth::GroundTruthHuman;

    fn pose_at(points: &[Option<(f32, f32)>]) -> HumanPose {
        HumanPose {
            keypoints: points.iter().map(|p| p.map(|(x, y)| Keypoint { x, y, score: 1.0 })).collect(),
            score: 1.0,
            n_parts: points.iter().flatten().count() as u32,
        }
    }

    #[test]
    fn exact_prediction_recovers_everything() {
        let pts: Vec<_> = (0..8).map(|k| Some((10.0 * k as f32, 5.0))).collect();
        let scene = GroundTruthScene {
            humans: vec![GroundTruthHuman { keypoints: pts.clone() }],
            ..GroundTruthScene::empty(100, 100)
        };
        let s = match_frame(&scene, &[pose_at(&pts)], 16.0);
        assert_eq!((s.recovered_keypoints, s.gt_keypoints, s.false_humans), (8, 8, 0));
    }

    #[test]
    fn far_away_prediction_is_false_human() {
        let gt: Vec<_> = (0..8).map(|k| Some((10.0 * k as f32, 5.0))).collect();
        let far: Vec<_> = (0..8).map(|k| Some((10.0 * k as f32, 90.0))).collect();
        let scene = GroundTruthScene {
            humans: vec![GroundTruthHuman { keypoints: gt }],
            ..GroundTruthScene::empty(100, 100)
        };
        let s = match_frame(&scene, &[pose_at(&far)], 16.0);
        assert_eq!((s.recovered_keypoints, s.false_humans), (0, 1));
    }
}
