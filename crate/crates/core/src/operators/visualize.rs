use crate::config::OverlayStyle;
use crate::error::Result;
use crate::image::image_extents;
use crate::pose::HumanPose;
use crate::tensor::TensorF32;
use crate::topology::SkeletonTopology;

/// Saturated color for index `i`, hues spaced by the golden angle.
pub fn part_color(i: usize) -> [f32; 3] {
    let h = (i as f32 * 137.507_77) % 360.0 / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as u32 {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

struct Canvas<'a> {
    w: i64,
    h: i64,
    data: &'a mut [f32],
}

impl Canvas<'_> {
    fn put(&mut self, x: i64, y: i64, color: [f32; 3]) {
        if x < 0 || y < 0 || x >= self.w || y >= self.h {
            return;
        }
        let at = ((y * self.w + x) * 3) as usize;
        self.data[at..at + 3].copy_from_slice(&color);
    }

    fn stamp(&mut self, x: i64, y: i64, size: i64, color: [f32; 3]) {
        let lo = -(size - 1) / 2;
        for dy in lo..lo + size {
            for dx in lo..lo + size {
                self.put(x + dx, y + dy, color);
            }
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), thickness: i64, color: [f32; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.stamp(x, y, thickness, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn disc(&mut self, cx: i64, cy: i64, r: i64, color: [f32; 3]) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx + dx, cy + dy, color);
                }
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, color: [f32; 3]) {
        let mut cx = x;
        for ch in s.chars() {
            if let Some(rows) = glyph(ch) {
                for (ry, bits) in rows.iter().enumerate() {
                    for rx in 0..3 {
                        if bits & (0b100 >> rx) != 0 {
                            self.put(cx + rx, y + ry as i64, color);
                        }
                    }
                }
            }
            cx += 4;
        }
    }
}

/// 3x5 bitmaps for the characters of a score label.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => return None,
    })
}

/// Draws `poses` (network-input coordinates, `net_w` x `net_h`) onto a copy of `image`.
///
/// Coordinates are mapped back with the inverse of the resize sampling, per
/// axis. All limbs are drawn first in topology order, then all keypoints by
/// part index, then optional score labels, so later marks cover earlier ones.
/// Marks are clipped at the image border.
pub fn draw_overlay(
    image: &TensorF32,
    poses: &[HumanPose],
    topo: &SkeletonTopology,
    style: &OverlayStyle,
    net_w: u32,
    net_h: u32,
) -> Result<TensorF32> {
    let (h, w) = image_extents(image)?;
    let mut out = image.clone();
    if poses.is_empty() {
        return Ok(out);
    }
    let (sx, sy) = (w as f32 / net_w as f32, h as f32 / net_h as f32);
    let to_px = |x: f32, y: f32| {
        (
            ((x + 0.5) * sx - 0.5).round() as i64,
            ((y + 0.5) * sy - 0.5).round() as i64,
        )
    };
    let mut canvas = Canvas {
        w: w as i64,
        h: h as i64,
        data: out.data_mut(),
    };

    for (li, limb) in topo.limbs().iter().enumerate() {
        for pose in poses {
            if let (Some(a), Some(b)) = (&pose.keypoints[limb.a as usize], &pose.keypoints[limb.b as usize]) {
                canvas.line(to_px(a.x, a.y), to_px(b.x, b.y), style.thickness as i64, part_color(li));
            }
        }
    }
    for part in 0..topo.num_keypoints() {
        for pose in poses {
            if let Some(k) = &pose.keypoints[part] {
                let (x, y) = to_px(k.x, k.y);
                canvas.disc(x, y, style.radius as i64, part_color(part));
            }
        }
    }
    if style.labels {
        for pose in poses {
            if let Some((_, k)) = pose.present().next() {
                let (x, y) = to_px(k.x, k.y);
                let r = style.radius as i64;
                canvas.text(x + r + 1, y - r - 5, &format!("{:.2}", pose.score), [1.0, 1.0, 1.0]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;

    fn single(topo: &SkeletonTopology, part: usize, x: f32, y: f32) -> HumanPose {
        let mut keypoints = vec![None; topo.num_keypoints()];
        keypoints[part] = Some(Keypoint { x, y, score: 1.0 });
        HumanPose {
            keypoints,
            score: 1.0,
            n_parts: 1,
        }
    }

    fn changed(a: &TensorF32, b: &TensorF32) -> Vec<(usize, usize)> {
        let w = a.dims()[1] as usize;
        let mut px: Vec<(usize, usize)> = a
            .data()
            .chunks(3)
            .zip(b.data().chunks(3))
            .enumerate()
            .filter(|(_, (p, q))| p != q)
            .map(|(i, _)| (i / w, i % w))
            .collect();
        px.dedup();
        px
    }

    #[test]
    fn no_poses_leaves_image_untouched() {
        let topo = SkeletonTopology::coco18();
        let img = TensorF32::filled(vec![6, 8, 3], 0.25);
        let out = draw_overlay(&img, &[], &topo, &OverlayStyle::default(), 8, 6).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn radius_one_disc_touches_exactly_five_pixels() {
        let topo = SkeletonTopology::coco18();
        let img = TensorF32::zeros(vec![9, 9, 3]);
        let style = OverlayStyle {
            radius: 1,
            ..Default::default()
        };
        let out = draw_overlay(&img, &[single(&topo, 3, 4.0, 4.0)], &topo, &style, 9, 9).unwrap();
        let mut got = changed(&img, &out);
        got.sort();
        assert_eq!(got, [(3, 4), (4, 3), (4, 4), (4, 5), (5, 4)]);
    }

    #[test]
    fn marks_at_the_border_are_clipped() {
        let topo = SkeletonTopology::coco18();
        let img = TensorF32::zeros(vec![4, 4, 3]);
        let mut pose = single(&topo, 1, 0.0, 0.0);
        pose.keypoints[2] = Some(Keypoint { x: 3.0, y: 3.0, score: 1.0 });
        let style = OverlayStyle {
            radius: 5,
            thickness: 3,
            labels: true,
        };
        let out = draw_overlay(&img, &[pose], &topo, &style, 4, 4).unwrap();
        assert_eq!(out.dims(), img.dims());
    }

    #[test]
    fn coordinates_scale_back_to_frame_size() {
        let topo = SkeletonTopology::coco18();
        let img = TensorF32::zeros(vec![8, 8, 3]);
        let style = OverlayStyle {
            radius: 1,
            ..Default::default()
        };
        // network pixel 1 of 4 covers frame pixels 2..=3; its center maps to 2.5, which rounds away to 3
        let out = draw_overlay(&img, &[single(&topo, 0, 1.0, 1.0)], &topo, &style, 4, 4).unwrap();
        assert!(changed(&img, &out).contains(&(3, 3)));
    }

    #[test]
    fn drawing_is_deterministic() {
        let topo = SkeletonTopology::coco18();
        let img = TensorF32::filled(vec![20, 20, 3], 0.5);
        let mut pose = single(&topo, 1, 5.0, 5.0);
        pose.keypoints[2] = Some(Keypoint { x: 15.0, y: 12.0, score: 0.5 });
        let style = OverlayStyle { labels: true, ..Default::default() };
        let a = draw_overlay(&img, &[pose.clone()], &topo, &style, 20, 20).unwrap();
        let b = draw_overlay(&img, &[pose], &topo, &style, 20, 20).unwrap();
        let (mut pa, mut pb) = (vec![], vec![]);
        crate::image::write_ppm(&a, &mut pa).unwrap();
        crate::image::write_ppm(&b, &mut pb).unwrap();
        assert_eq!(pa, pb);
    }
}
