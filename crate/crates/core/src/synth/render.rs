use crate::error::{Error, Result};
use crate::pose::{pixel_to_cell, FeatureMaps};
use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

use super::{GroundTruthScene, SynthParams};

/// Render the confidence and PAF maps a perfect network would produce.
///
/// Confidence channel `k` holds, per cell, the max over people of
/// `exp(-d^2 / (2 sigma^2))` with `d` in cell units; the background channel is
/// `1 - max_k conf_k`. Each limb writes its unit direction into every cell
/// within `paf_halfwidth` of the segment; cells covered by several people's
/// copies of the same limb get the average, clamped to magnitude 1.
pub fn render_feature_maps(
    scene: &GroundTruthScene,
    topo: &SkeletonTopology,
    params: &SynthParams,
) -> Result<FeatureMaps> {
    let stride = params.stride;
    if stride == 0 || scene.input_w % stride != 0 || scene.input_h % stride != 0 {
        return Err(Error::Contract(format!(
            "input {}x{} is not divisible by stride {stride}",
            scene.input_w, scene.input_h
        )));
    }
    scene.validate(topo)?;
    let (h, w) = ((scene.input_h / stride) as usize, (scene.input_w / stride) as usize);
    let k = topo.num_keypoints();
    let l = topo.num_limbs();

    let mut conf = TensorF32::zeros(vec![k as u32 + 1, h as u32, w as u32]);
    let two_sigma_sq = 2.0 * params.sigma_conf * params.sigma_conf;
    let mut gy = vec![0.0f32; h];
    let mut gx = vec![0.0f32; w];
    for human in &scene.humans {
        for (part, kp) in human.keypoints.iter().enumerate() {
            let Some((x, y)) = *kp else { continue };
            let (ci, cj) = pixel_to_cell(x, y, stride);
            for (i, g) in gy.iter_mut().enumerate() {
                let d = i as f32 - ci;
                *g = (-d * d / two_sigma_sq).exp();
            }
            for (j, g) in gx.iter_mut().enumerate() {
                let d = j as f32 - cj;
                *g = (-d * d / two_sigma_sq).exp();
            }
            let channel = conf.outer_mut(part);
            for (row, &g_row) in channel.chunks_exact_mut(w).zip(&gy) {
                for (cell, &g) in row.iter_mut().zip(&gx) {
                    let v = g_row * g;
                    *cell = if v > *cell { v } else { *cell };
                }
            }
        }
    }
    let mut background = vec![0.0f32; h * w];
    for part in 0..k {
        for (b, &v) in background.iter_mut().zip(conf.outer(part)) {
            *b = if v > *b { v } else { *b };
        }
    }
    for (dst, m) in conf.outer_mut(k).iter_mut().zip(background) {
        *dst = 1.0 - m;
    }

    let mut paf = TensorF32::zeros(vec![2 * l as u32, h as u32, w as u32]);
    let mut acc = vec![(0.0f32, 0.0f32, 0u16); h * w];
    for (limb, &(cx, cy)) in topo.limbs().iter().zip(topo.paf_channels()) {
        let mut bbox: Option<CellBox> = None;
        for human in &scene.humans {
            let (Some(pa), Some(pb)) = (human.keypoints[limb.a as usize], human.keypoints[limb.b as usize]) else {
                continue;
            };
            let a = pixel_to_cell(pa.0, pa.1, stride);
            let b = pixel_to_cell(pb.0, pb.1, stride);
            if let Some(bb) = splat_segment(a, b, params.paf_halfwidth, h, w, &mut acc) {
                bbox = Some(bbox.map_or(bb, |cur| cur.union(&bb)));
            }
        }
        let Some(bb) = bbox else { continue };
        for i in bb.i_lo..=bb.i_hi {
            for c in i * w + bb.j_lo..=i * w + bb.j_hi {
                let (sx, sy, n) = std::mem::take(&mut acc[c]);
                if n == 0 {
                    continue;
                }
                let n = n as f32;
                let (mut vx, mut vy) = (sx / n, sy / n);
                let mag = (vx * vx + vy * vy).sqrt();
                if mag > 1.0 {
                    vx /= mag;
                    vy /= mag;
                }
                paf.outer_mut(cx as usize)[c] = vx;
                paf.outer_mut(cy as usize)[c] = vy;
            }
        }
    }

    Ok(FeatureMaps {
        conf,
        paf,
        stride,
        frame_ref: scene.seed,
    })
}

/// Inclusive cell rectangle.
#[derive(Clone, Copy)]
struct CellBox {
    i_lo: usize,
    i_hi: usize,
    j_lo: usize,
    j_hi: usize,
}

impl CellBox {
    fn union(&self, o: &CellBox) -> CellBox {
        CellBox {
            i_lo: self.i_lo.min(o.i_lo),
            i_hi: self.i_hi.max(o.i_hi),
            j_lo: self.j_lo.min(o.j_lo),
            j_hi: self.j_hi.max(o.j_hi),
        }
    }
}

/// Add the unit vector `a -> b` to every cell within `halfwidth` of the
/// segment, accumulating `(sum_x, sum_y, count)`. Points are `(row, col)` in
/// cell units. Returns the scanned rectangle if anything was written.
fn splat_segment(
    a: (f32, f32),
    b: (f32, f32),
    halfwidth: f32,
    h: usize,
    w: usize,
    acc: &mut [(f32, f32, u16)],
) -> Option<CellBox> {
    let (di, dj) = (b.0 - a.0, b.1 - a.1);
    let len_sq = di * di + dj * dj;
    if len_sq <= f32::EPSILON {
        return None;
    }
    let len = len_sq.sqrt();
    let (vx, vy) = (dj / len, di / len);

    let bb = CellBox {
        i_lo: (a.0.min(b.0) - halfwidth).floor().max(0.0) as usize,
        i_hi: ((a.0.max(b.0) + halfwidth).ceil().max(0.0) as usize).min(h - 1),
        j_lo: (a.1.min(b.1) - halfwidth).floor().max(0.0) as usize,
        j_hi: ((a.1.max(b.1) + halfwidth).ceil().max(0.0) as usize).min(w - 1),
    };
    let hw_sq = halfwidth * halfwidth;
    let mut wrote = false;
    for i in bb.i_lo..=bb.i_hi {
        for j in bb.j_lo..=bb.j_hi {
            let (pi, pj) = (i as f32 - a.0, j as f32 - a.1);
            let t = ((pi * di + pj * dj) / len_sq).clamp(0.0, 1.0);
            let (ei, ej) = (pi - t * di, pj - t * dj);
            if ei * ei + ej * ej <= hw_sq {
                let cell = &mut acc[i * w + j];
                cell.0 += vx;
                cell.1 += vy;
                cell.2 += 1;
                wrote = true;
            }
        }
    }
    wrote.then_some(bb)
}
