//! Slow, direct reference implementations that the fast parser code is
//! checked against.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::parser::paf::{nms_peaks, score_limb, MapView, ParserParams, Peak};
use crate::tensor::TensorF32;

/// Exhaustive local-maximum search over an `h x w` row-major map.
///
/// A cell qualifies when it reaches the threshold, no cell of its clipped
/// window is larger, and no equal cell of the window comes before it in
/// row-major order. Returned as `(i, j)` sorted by value descending, then
/// position ascending.
pub fn nms_oracle(map: &[f32], h: usize, w: usize, params: &ParserParams) -> Vec<(usize, usize)> {
    let r = (params.nms_window / 2) as isize;
    let mut found = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let v = map[i * w + j];
            if v < params.conf_threshold {
                continue;
            }
            let mut keep = true;
            for di in -r..=r {
                for dj in -r..=r {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize || (di == 0 && dj == 0) {
                        continue;
                    }
                    let u = map[ni as usize * w + nj as usize];
                    if u > v || (u == v && (ni, nj) < (i as isize, j as isize)) {
                        keep = false;
                    }
                }
            }
            if keep {
                found.push((i, j));
            }
        }
    }
    found.sort_by(|a, b| {
        map[b.0 * w + b.1]
            .total_cmp(&map[a.0 * w + a.1])
            .then(a.cmp(b))
    });
    found
}

/// Mean projection of the field onto the unit direction `a -> b`, from
/// `samples` evenly spaced nearest-cell lookups accumulated in f64.
/// `fx` and `fy` are `h x w` row-major; points are `(i, j)` cells.
pub fn dense_limb_score(
    fx: &[f32],
    fy: &[f32],
    h: usize,
    w: usize,
    a: (u32, u32),
    b: (u32, u32),
    samples: usize,
) -> f64 {
    let (ai, aj) = (a.0 as f64, a.1 as f64);
    let (di, dj) = (b.0 as f64 - ai, b.1 as f64 - aj);
    let len = di.hypot(dj);
    if len == 0.0 {
        return 0.0;
    }
    let (ux, uy) = (dj / len, di / len);
    let mut total = 0.0;
    for s in 0..samples {
        let t = s as f64 / (samples - 1) as f64;
        let i = ((ai + t * di).round() as usize).min(h - 1);
        let j = ((aj + t * dj).round() as usize).min(w - 1);
        total += fx[i * w + j] as f64 * ux + fy[i * w + j] as f64 * uy;
    }
    total / samples as f64
}

/// Random map for peak tests. Every other map is quantized to tenths so that
/// plateaus and ties inside a window are common.
pub fn random_peak_map(rng: &mut impl Rng, h: usize, w: usize, quantized: bool) -> Vec<f32> {
    (0..h * w)
        .map(|_| {
            let v: f32 = rng.random_range(0.0..1.0);
            if quantized {
                (v * 10.0).floor() / 10.0
            } else {
                v
            }
        })
        .collect()
}

/// Field with components in `[-1, 1]` built from three random plane waves of
/// at most one cycle per 16 cells.
pub fn smooth_field(rng: &mut impl Rng, h: usize, w: usize) -> (Vec<f32>, Vec<f32>) {
    let mut component = || {
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..1.0),
                    rng.random_range(-1.0..1.0) / 16.0,
                    rng.random_range(-1.0..1.0) / 16.0,
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        let total: f64 = waves.iter().map(|w| w.0).sum::<f64>().max(1e-9);
        let mut out = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let v: f64 = waves
                    .iter()
                    .map(|&(amp, fi, fj, ph)| amp * (TAU * (fi * i as f64 + fj * j as f64) + ph).sin())
                    .sum();
                out.push((v / total) as f32);
            }
        }
        out
    };
    let fx = component();
    let fy = component();
    (fx, fy)
}

/// Number of maps (out of `cases` random 16x16 maps) on which [`nms_peaks`]
/// disagrees with [`nms_oracle`] in position or order.
pub fn nms_mismatches(cases: usize, seed: u64, params: &ParserParams) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (16, 16);
    (0..cases)
        .filter(|&n| {
            let map = random_peak_map(&mut rng, h, w, n % 2 == 0);
            let fast: Vec<(usize, usize)> = nms_peaks(MapView::new(h, w, &map), 0, params)
                .iter()
                .map(|p| (p.i as usize, p.j as usize))
                .collect();
            fast != nms_oracle(&map, h, w, params)
        })
        .count()
}

fn random_endpoints(rng: &mut impl Rng, h: usize, w: usize) -> ((u32, u32), (u32, u32)) {
    loop {
        let a = (rng.random_range(0..h as u32), rng.random_range(0..w as u32));
        let b = (rng.random_range(0..h as u32), rng.random_range(0..w as u32));
        if a != b {
            return (a, b);
        }
    }
}

fn peak_at(part: u32, (i, j): (u32, u32)) -> Peak {
    Peak {
        part,
        i,
        j,
        score: 1.0,
        id: part,
    }
}

/// Largest absolute difference between [`score_limb`] with the parser's
/// sample count and [`dense_limb_score`] with 1000 samples over `cases`
/// random segments on 16x16 fields. Constant fields draw one random vector
/// per case; otherwise fields come from [`smooth_field`].
pub fn limb_score_max_error(cases: usize, seed: u64, constant: bool, params: &ParserParams) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (16usize, 16usize);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (fx, fy) = if constant {
            let (x, y): (f32, f32) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (vec![x; h * w], vec![y; h * w])
        } else {
            smooth_field(&mut rng, h, w)
        };
        let (a, b) = random_endpoints(&mut rng, h, w);
        let mut data = fx.clone();
        data.extend_from_slice(&fy);
        let paf = TensorF32::new(vec![2, h as u32, w as u32], data).expect("field shape");
        let (fast, _) = score_limb(&paf, (0, 1), &peak_at(0, a), &peak_at(1, b), params);
        let dense = dense_limb_score(&fx, &fy, h, w, a, b, 1000);
        worst = worst.max((fast as f64 - dense).abs());
    }
    worst
}
