use std::cmp::Ordering;

use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

use super::{LimbConnection, MapView, ParserParams, Peak};

/// Line-integral score of a candidate limb from `a` to `b`.
///
/// Samples `n_samples` evenly spaced points on the segment (endpoints
/// included), looks up the nearest PAF cell, and projects the field onto the
/// unit vector `a -> b`. Returns `(mean projection, fraction of samples with
/// projection >= sample_dot_threshold)`. Coincident peaks score `(0, 0)`.
pub fn score_limb(
    paf: &TensorF32,
    channels: (u32, u32),
    a: &Peak,
    b: &Peak,
    params: &ParserParams,
) -> (f32, f32) {
    let fx = MapView::channel(paf, channels.0 as usize);
    let fy = MapView::channel(paf, channels.1 as usize);
    let (ai, aj) = (a.i as f32, a.j as f32);
    let (di, dj) = (b.i as f32 - ai, b.j as f32 - aj);
    let norm = (di * di + dj * dj).sqrt();
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let (vx, vy) = (dj / norm, di / norm);

    let n = params.n_samples.max(2);
    let last = (n - 1) as f32;
    let mut sum = 0.0f32;
    let mut good = 0u32;
    for u in 0..n {
        let t = u as f32 / last;
        let i = ((ai + t * di).round() as usize).min(fx.height - 1);
        let j = ((aj + t * dj).round() as usize).min(fx.width - 1);
        let d = fx.at(i, j) * vx + fy.at(i, j) * vy;
        sum += d;
        if d >= params.sample_dot_threshold {
            good += 1;
        }
    }
    (sum / n as f32, good as f32 / n as f32)
}

/// Per-limb greedy matching of peak pairs.
///
/// Candidates need `good_fraction >= good_fraction_min` and a positive score.
/// They are taken in order of score (descending), then `(id_a, id_b)`
/// ascending; a candidate is accepted when neither endpoint is already used
/// by this limb type. Output is grouped by limb in topology order.
pub fn connect_limbs(
    peaks: &[Vec<Peak>],
    paf: &TensorF32,
    topo: &SkeletonTopology,
    params: &ParserParams,
) -> Vec<LimbConnection> {
    let mut out = Vec::new();
    for (limb_idx, (limb, &channels)) in topo.limbs().iter().zip(topo.paf_channels()).enumerate() {
        let (side_a, side_b) = (&peaks[limb.a as usize], &peaks[limb.b as usize]);
        if side_a.is_empty() || side_b.is_empty() {
            continue;
        }
        let mut candidates = Vec::new();
        for pa in side_a {
            for pb in side_b {
                let (score, good_fraction) = score_limb(paf, channels, pa, pb, params);
                if good_fraction >= params.good_fraction_min && score > 0.0 {
                    candidates.push(LimbConnection {
                        limb: limb_idx as u32,
                        peak_a: pa.id,
                        peak_b: pb.id,
                        score,
                        good_fraction,
                    });
                }
            }
        }
        candidates.sort_by(candidate_order);

        let mut used_a = Vec::new();
        let mut used_b = Vec::new();
        let cap = side_a.len().min(side_b.len());
        for c in candidates {
            if used_a.contains(&c.peak_a) || used_b.contains(&c.peak_b) {
                continue;
            }
            used_a.push(c.peak_a);
            used_b.push(c.peak_b);
            out.push(c);
            if used_a.len() == cap {
                break;
            }
        }
    }
    out
}

/// Score descending, then `(peak_a, peak_b)` ascending.
pub(crate) fn candidate_order(x: &LimbConnection, y: &LimbConnection) -> Ordering {
    y.score
        .total_cmp(&x.score)
        .then_with(|| (x.peak_a, x.peak_b).cmp(&(y.peak_a, y.peak_b)))
}
