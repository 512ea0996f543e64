mod common;

use common::{pose_config, run_and_read};
use posestream::bench::{measure_config, simulate_policy, BenchConfig, BenchProfile, StageLatency};
use posestream::config::SourcePacing;
use posestream::dataflow::PipelineStats;

fn batch_histogram(stats: &PipelineStats) -> Vec<u64> {
    let v = stats.operator("infer").unwrap().extras["batch_histogram"].clone();
    serde_json::from_value(v).unwrap()
}

/// Inference at 8 ms + 1 ms per item serves 111 frames/s one at a time; the
/// source offers 222 frames/s with exponential gaps.
fn poisson_profile() -> BenchProfile {
    BenchProfile {
        name: "poisson".into(),
        frames: 600,
        repetitions: 3,
        seed: 11,
        latency: StageLatency {
            source_us: 4500,
            source_pacing: SourcePacing::Poisson,
            resize_us: 0,
            parse_us: 0,
            ..StageLatency::default()
        },
        configs: vec![BenchConfig::named("poisson-batched")],
        ..BenchProfile::scheduler_gain()
    }
}

#[test]
fn poisson_overload_matches_the_simulator() {
    let profile = poisson_profile();
    let config = &profile.configs[0];
    let dir = tempfile::tempdir().unwrap();
    let live = measure_config(&profile, config, dir.path()).unwrap();
    let sim = simulate_policy(&profile, config);
    let dev = live.fps / sim.fps - 1.0;
    eprintln!("poisson: live {:.1} fps, simulated {:.1} fps ({:+.1}%)", live.fps, sim.fps, 100.0 * dev);
    assert!(dev.abs() <= 0.25, "live {:.1} fps vs simulated {:.1} fps", live.fps, sim.fps);
    // Arrivals outpace single-frame service, so batches must form.
    let h = batch_histogram(&live);
    let mean = h.iter().enumerate().map(|(b, &n)| (b as u64 * n) as f64).sum::<f64>() / h.iter().sum::<u64>() as f64;
    assert!(mean > 1.2, "mean batch {mean:.2}");
}

#[test]
fn idle_inference_dispatches_every_frame_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pose_config(dir.path(), 40, 128, 96);
    cfg.source_latency_us = 15_000;
    cfg.synth.batch_overhead_us = 2_000;
    let (stats, _) = run_and_read(&cfg);
    let h = batch_histogram(&stats);
    assert_eq!(h.iter().sum::<u64>(), 40);
    assert_eq!(h[1], 40, "{h:?}");
}

#[test]
fn busy_inference_batches_up_to_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pose_config(dir.path(), 200, 128, 96);
    cfg.synth.batch_overhead_us = 8_000;
    cfg.synth.per_item_us = 1_000;
    cfg.scheduler.batch_max = 4;
    let (stats, _) = run_and_read(&cfg);
    let h = batch_histogram(&stats);
    assert!(h.len() <= 5, "{h:?}");
    assert!(h[4] * 4 >= 150, "{h:?}");
}

#[test]
fn batch_size_never_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut reference = None;
    for (enabled, batch_max) in [(false, 1), (true, 1), (true, 3), (true, 8)] {
        let mut cfg = pose_config(&dir.path().join(format!("{enabled}-{batch_max}")), 200, 320, 184);
        cfg.scheduler.enabled = enabled;
        cfg.scheduler.batch_max = batch_max;
        cfg.synth.batch_overhead_us = 1_500;
        let (stats, poses) = run_and_read(&cfg);
        assert_eq!(stats.order_violations, 0);
        match &reference {
            None => reference = Some(poses),
            Some(r) => assert!(r == &poses, "output differs at scheduler={enabled} batch_max={batch_max}"),
        }
    }
}
