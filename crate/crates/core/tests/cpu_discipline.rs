//! Process-wide CPU measurements. Kept in their own test binary with a single
//! test so that no other test threads run while they are taken.

mod common;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::{pose_config, process_cpu_time, run_and_read};
use posestream::dataflow::Channel;

fn idle_receiver_share() -> f64 {
    let ch = Arc::new(Channel::<u64>::new(4));
    let receiver = {
        let ch = Arc::clone(&ch);
        thread::spawn(move || ch.receive())
    };
    thread::sleep(Duration::from_millis(50));
    let (cpu0, t0) = (process_cpu_time(), Instant::now());
    thread::sleep(Duration::from_secs(1));
    let share = (process_cpu_time() - cpu0).as_secs_f64() / t0.elapsed().as_secs_f64();
    ch.close();
    assert_eq!(receiver.join().unwrap(), None);
    share
}

fn starved_pipeline_share() -> (f64, u64) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pose_config(dir.path(), 50, 640, 360);
    cfg.source_latency_us = 100_000;
    let (cpu0, t0) = (process_cpu_time(), Instant::now());
    let (stats, _) = run_and_read(&cfg);
    let share = (process_cpu_time() - cpu0).as_secs_f64() / t0.elapsed().as_secs_f64();
    (share, stats.frames_emitted)
}

#[test]
fn parked_workers_do_not_burn_cpu() {
    let idle = idle_receiver_share();
    assert!(idle < 0.01, "idle receiver used {:.2}% CPU", idle * 100.0);

    let (share, frames) = starved_pipeline_share();
    assert_eq!(frames, 50);
    assert!(share < 0.15, "starved pipeline used {:.1}% CPU", share * 100.0);
    eprintln!("idle receiver {:.3}% CPU, starved pipeline {:.2}% CPU", idle * 100.0, share * 100.0);
}
