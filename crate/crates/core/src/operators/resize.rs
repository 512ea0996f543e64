use crate::dataflow::{Emit, TransformOp};
use crate::error::{Error, Result};
use crate::image::image_extents;
use crate::tensor::{BufferPool, TensorF32};

use super::{Packet, Payload};

/// Bilinear resize of an `[H, W, 3]` image to `[3, out_h, out_w]` (channel-first).
///
/// Pixel centers are aligned: output pixel `x` samples source coordinate
/// `(x + 0.5) * W / out_w - 0.5`, clamped to the image. At equal size this
/// reduces to a pure layout permutation.
pub fn resize_to_chw(image: &TensorF32, out_w: u32, out_h: u32) -> Result<TensorF32> {
    resize_into(image, out_w, out_h, Vec::new())
}

/// [`resize_to_chw`] writing into a reused buffer.
pub fn resize_into(image: &TensorF32, out_w: u32, out_h: u32, mut out: Vec<f32>) -> Result<TensorF32> {
    let (h, w) = image_extents(image)?;
    if out_w == 0 || out_h == 0 {
        return Err(Error::Contract(format!("resize target {out_w}x{out_h} has zero area")));
    }
    let (h, w, oh, ow) = (h as usize, w as usize, out_h as usize, out_w as usize);
    let src = image.data();
    out.clear();
    out.resize(3 * oh * ow, 0.0);
    let plane = oh * ow;

    if h == oh && w == ow {
        let (r, rest) = out.split_at_mut(plane);
        let (g, b) = rest.split_at_mut(plane);
        for (((px, r), g), b) in src.chunks_exact(3).zip(r).zip(g).zip(b) {
            *r = px[0];
            *g = px[1];
            *b = px[2];
        }
        return TensorF32::new(vec![3, out_h, out_w], out);
    }

    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f32 / n_out as f32;
        (0..n_out)
            .map(|o| {
                let s = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f32);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f32)
            })
            .collect()
    };
    let xs = taps(w, ow);
    let ys = taps(h, oh);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        let (r0, r1) = (&src[y0 * w * 3..(y0 + 1) * w * 3], &src[y1 * w * 3..(y1 + 1) * w * 3]);
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let top = r0[x0 * 3 + c] * (1.0 - fx) + r0[x1 * 3 + c] * fx;
                let bottom = r1[x0 * 3 + c] * (1.0 - fx) + r1[x1 * 3 + c] * fx;
                out[c * plane + oy * ow + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    TensorF32::new(vec![3, out_h, out_w], out)
}

/// Operator 2: resize and re-layout to the network input. Output buffers
/// come from `pool`, which the inference stage refills.
pub struct ResizeOp {
    pub width: u32,
    pub height: u32,
    pub pool: BufferPool,
}

impl TransformOp<Packet> for ResizeOp {
    fn process(&mut self, mut item: Packet, emit: &mut Emit<'_, Packet>) -> Result<()> {
        let input = resize_into(&item.frame.image, self.width, self.height, self.pool.take())?;
        item.payload = Payload::NetInput(input);
        emit(item)
    }
}
