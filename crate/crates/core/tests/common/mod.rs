#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use posestream::dataflow::PipelineStats;
use posestream::operators::{run_pose_pipeline, POSES_FILE};
use posestream::PipelineConfig;

/// User plus system CPU time of the whole process so far.
pub fn process_cpu_time() -> Duration {
    // SAFETY: getrusage only writes into the struct it is given.
    let usage = unsafe {
        let mut u: libc::rusage = std::mem::zeroed();
        assert_eq!(libc::getrusage(libc::RUSAGE_SELF, &mut u), 0);
        u
    };
    let tv = |t: libc::timeval| Duration::from_secs(t.tv_sec as u64) + Duration::from_micros(t.tv_usec as u64);
    tv(usage.ru_utime) + tv(usage.ru_stime)
}

/// Blank-input procedural-backend run with a 30 s watchdog.
pub fn pose_config(out: &Path, frames: u64, w: u32, h: u32) -> PipelineConfig {
    PipelineConfig {
        input_w: w,
        input_h: h,
        frames: Some(frames),
        out: out.to_owned(),
        watchdog_s: 30,
        ..PipelineConfig::default()
    }
}

/// Run and return the stats plus the bytes of `poses.jsonl`.
pub fn run_and_read(cfg: &PipelineConfig) -> (PipelineStats, Vec<u8>) {
    let stats = run_pose_pipeline(cfg).unwrap_or_else(|e| panic!("run failed: {e}"));
    let poses = std::fs::read(cfg.out.join(POSES_FILE)).unwrap();
    (stats, poses)
}
