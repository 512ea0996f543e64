//! Built-in self checks: the fast parser against its oracles, end-to-end
//! recovery on procedural scenes, ordering through a live pipeline, and the
//! file formats.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::procedural_recovery;
use crate::image::{encode_channel, read_ppm, write_ppm};
use crate::operators::run_pose_pipeline;
use crate::oracle::{limb_score_max_error, nms_mismatches};
use crate::parser::paf::ParserParams;
use crate::synth::SynthParams;
use crate::tensor::{read_tensor, write_tensor, TensorF32};
use crate::topology::SkeletonTopology;

const SEED: u64 = 0x5e1f;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn from_outcome(name: &'static str, outcome: Result<String>) -> Self {
        match outcome {
            Ok(detail) => Self {
                name,
                passed: true,
                detail,
            },
            Err(e) => Self {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }

    pub fn line(&self) -> String {
        format!("{} {:<16} {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn fail(msg: String) -> Error {
    Error::Contract(msg)
}

fn check_topology(topology: &str) -> Result<String> {
    let topo = SkeletonTopology::resolve(topology)?;
    Ok(format!(
        "{topology}: {} keypoints, {} limbs",
        topo.num_keypoints(),
        topo.num_limbs()
    ))
}

fn check_config_round_trip() -> Result<String> {
    let cfg = PipelineConfig::default();
    let text = cfg.to_toml_string();
    let back = PipelineConfig::from_toml_str(&text)?;
    if back != cfg || back.to_toml_string() != text {
        return Err(fail("default config does not survive a TOML round trip".into()));
    }
    Ok(format!("{} bytes", text.len()))
}

fn check_nms() -> Result<String> {
    let n = nms_mismatches(200, SEED, &ParserParams::default());
    if n != 0 {
        return Err(fail(format!("{n} of 200 maps differ from the exhaustive search")));
    }
    Ok("200 random 16x16 maps match".into())
}

fn check_limb_score() -> Result<String> {
    let p = ParserParams::default();
    let constant = limb_score_max_error(100, SEED, true, &p);
    let smooth = limb_score_max_error(100, SEED, false, &p);
    let detail = format!("max error {constant:.2e} (constant), {smooth:.3} (smooth)");
    if constant > 1e-6 || smooth > 0.15 {
        return Err(fail(detail));
    }
    Ok(detail)
}

fn check_recovery() -> Result<String> {
    let topo = SkeletonTopology::coco18();
    let stats = procedural_recovery(
        50,
        SEED,
        &topo,
        &SynthParams::default(),
        &ParserParams::default(),
        640,
        360,
    )?;
    let detail = format!(
        "recall {:.4} over {} keypoints, {} false humans",
        stats.recall(),
        stats.gt_keypoints,
        stats.false_humans
    );
    if stats.recall() < 0.95 || stats.false_humans != 0 {
        return Err(fail(detail));
    }
    Ok(detail)
}

struct TempDir(PathBuf);

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn check_ordering() -> Result<String> {
    let dir = TempDir(std::env::temp_dir().join(format!("posestream-selftest-{}", std::process::id())));
    let frames = 200;
    let mut cfg = PipelineConfig {
        input_w: 128,
        input_h: 96,
        frames: Some(frames),
        out: dir.0.clone(),
        watchdog_s: 30,
        ..PipelineConfig::default()
    };
    cfg.synth.batch_overhead_us = 200;
    let stats = run_pose_pipeline(&cfg)?;
    if stats.order_violations != 0 || stats.frames_emitted != frames || !stats.is_consistent() {
        return Err(fail(format!(
            "{} of {frames} frames out, {} order violations, max edge depth {}",
            stats.frames_emitted,
            stats.order_violations,
            stats.max_edge_depth()
        )));
    }
    Ok(format!(
        "{frames} frames in order, max edge depth {} <= {}",
        stats.max_edge_depth(),
        cfg.channel_capacity
    ))
}

fn check_hpt1() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for n in 0..100 {
        let dims: Vec<u32> = (0..rng.random_range(0..4)).map(|_| rng.random_range(1..6)).collect();
        let len = dims.iter().product::<u32>() as usize;
        let data: Vec<f32> = (0..len).map(|_| f32::from_bits(rng.random::<u32>())).collect();
        let t = TensorF32::new(dims, data)?;
        let mut bytes = Vec::new();
        write_tensor(&t, &mut bytes)?;
        let back = read_tensor(bytes.as_slice())?;
        let same_bits = back.dims() == t.dims()
            && back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same_bits {
            return Err(fail(format!("instance {n} (dims {:?}) changed", t.dims())));
        }
    }
    Ok("100 random tensors bit-exact".into())
}

fn check_ppm() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for n in 0..100 {
        let (h, w) = (rng.random_range(1..12u32), rng.random_range(1..12u32));
        let data: Vec<f32> = (0..3 * h * w).map(|_| rng.random_range(0.0..=1.0)).collect();
        let img = TensorF32::new(vec![h, w, 3], data)?;
        let mut bytes = Vec::new();
        write_ppm(&img, &mut bytes)?;
        let back = read_ppm(bytes.as_slice())?;
        let exact = back.dims() == img.dims()
            && back
                .data()
                .iter()
                .zip(img.data())
                .all(|(&b, &a)| encode_channel(b) == encode_channel(a) && (a - b).abs() <= 0.5 / 255.0 + 1e-6);
        if !exact {
            return Err(fail(format!("instance {n} ({w}x{h}) changed beyond quantization")));
        }
    }
    Ok("100 random images within quantization".into())
}

/// Run every check in a fixed order. `topology` is `coco18` or a path to a
/// topology file to validate.
pub fn run_selftest(topology: &str) -> Vec<CheckResult> {
    let checks: [(&'static str, Box<dyn Fn() -> Result<String>>); 8] = [
        ("topology", Box::new(|| check_topology(topology))),
        ("config-roundtrip", Box::new(check_config_round_trip)),
        ("nms-oracle", Box::new(check_nms)),
        ("limb-oracle", Box::new(check_limb_score)),
        ("recovery", Box::new(check_recovery)),
        ("ordering", Box::new(check_ordering)),
        ("hpt1-roundtrip", Box::new(check_hpt1)),
        ("ppm-roundtrip", Box::new(check_ppm)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| CheckResult::from_outcome(name, f()))
        .collect()
}
