//! Live runs against the closed-form model and the simulator on shortened
//! versions of the built-in profiles.

use std::sync::Mutex;

use posestream::bench::{run_bench, BenchProfile, BenchReport};

/// Timed runs share one core poorly; only one may run at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn shortened(mut p: BenchProfile, frames: u64) -> BenchProfile {
    p.frames = frames;
    p
}

fn check_report(report: &BenchReport) {
    assert!(report.all_completed);
    for c in &report.configs {
        assert!(
            c.simulated_deviation.abs() <= 0.25,
            "{}: live {:.1} fps vs simulated {:.1} fps",
            c.name,
            c.mean_fps,
            c.simulated.fps
        );
    }
    for r in &report.ratios {
        for &x in &r.per_repetition {
            assert!(
                (x / r.ratio - 1.0).abs() <= 0.15,
                "{} / {}: repetition ratio {x:.3} vs mean {:.3}",
                r.config,
                r.baseline,
                r.ratio
            );
        }
    }
}

#[test]
fn scheduler_gain_rows_track_the_simulator() {
    let _guard = SERIAL.lock().unwrap_or_else(|p| p.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let report = run_bench(&shortened(BenchProfile::scheduler_gain(), 400), dir.path()).unwrap();
    check_report(&report);
    assert!(report.passed());
}

#[test]
fn pipelined_is_never_slower_than_sequential() {
    let _guard = SERIAL.lock().unwrap_or_else(|p| p.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let report = run_bench(&shortened(BenchProfile::pipelining(), 200), dir.path()).unwrap();
    check_report(&report);
    let seq = report.config("sequential").unwrap().mean_fps;
    let pipe = report.config("pipelined").unwrap().mean_fps;
    assert!(pipe >= 0.9 * seq, "pipelined {pipe:.1} vs sequential {seq:.1}");
}
