use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::ExecutionMode;
use crate::dataflow::{LatencySummary, PipelineStats};
use crate::error::{Error, Result};
use crate::operators::run_pose_pipeline;

use super::{infer_time_per_item_us, predict_config, simulate_policy, BenchConfig, BenchProfile, Prediction, SimResult};

pub const REPORT_FILE: &str = "bench_report.json";
pub const TABLE_FILE: &str = "bench_table.txt";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "state", content = "reason")]
pub enum ConfigStatus {
    Completed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigReport {
    pub name: String,
    pub mode: ExecutionMode,
    pub scheduler: bool,
    pub batch_max: u32,
    pub linger_us: u64,
    pub source_us: u64,
    pub status: ConfigStatus,
    /// One entry per completed repetition.
    pub fps: Vec<f64>,
    pub mean_fps: f64,
    pub min_fps: f64,
    pub max_fps: f64,
    /// Percentiles averaged over repetitions.
    pub latency: LatencySummary,
    /// Summed over repetitions; `batch_histogram[b]` counts batches of size `b`.
    pub batch_histogram: Vec<u64>,
    pub mean_batch: f64,
    /// Inference time per frame implied by the measured batch sizes.
    pub infer_per_item_us: f64,
    pub predicted: Prediction,
    /// `(mean_fps - predicted) / predicted`.
    pub predicted_deviation: f64,
    pub simulated: SimResult,
    /// `(mean_fps - simulated) / simulated`.
    pub simulated_deviation: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub config: String,
    pub baseline: String,
    /// Ratio of mean FPS.
    pub ratio: f64,
    /// Ratio within each repetition.
    pub per_repetition: Vec<f64>,
    pub predicted: f64,
    pub simulated: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_ratio: Option<f64>,
    /// Every repetition reached `min_ratio` (true when there is no minimum).
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub profile: BenchProfile,
    pub configs: Vec<ConfigReport>,
    pub ratios: Vec<RatioReport>,
    pub all_completed: bool,
    pub wall_s: f64,
}

impl BenchReport {
    pub fn config(&self, name: &str) -> Option<&ConfigReport> {
        self.configs.iter().find(|c| c.name == name)
    }

    pub fn ratio(&self, config: &str) -> Option<&RatioReport> {
        self.ratios.iter().find(|r| r.config == config)
    }

    /// All configurations completed and every ratio gate passed.
    pub fn passed(&self) -> bool {
        self.all_completed && self.ratios.iter().all(|r| r.pass)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// One live run of `config`, writing its outputs under `out`.
pub fn measure_config(profile: &BenchProfile, config: &BenchConfig, out: &Path) -> Result<PipelineStats> {
    let cfg = profile.pipeline_config(config, out)?;
    let stats = run_pose_pipeline(&cfg)?;
    if !stats.completed || stats.frames_emitted != profile.frames {
        return Err(Error::Graph(format!(
            "{} of {} frames reached the sink",
            stats.frames_emitted, profile.frames
        )));
    }
    Ok(stats)
}

fn batch_histogram(stats: &PipelineStats) -> Vec<u64> {
    stats
        .operator("infer")
        .and_then(|o| o.extras.get("batch_histogram"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

fn add_histogram(into: &mut Vec<u64>, h: &[u64]) {
    if into.len() < h.len() {
        into.resize(h.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(h) {
        *a += b;
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn mean_latency(xs: &[LatencySummary]) -> LatencySummary {
    let avg = |f: fn(&LatencySummary) -> f64| mean(&xs.iter().map(f).collect::<Vec<_>>());
    LatencySummary {
        p50_us: avg(|l| l.p50_us),
        p95_us: avg(|l| l.p95_us),
        p99_us: avg(|l| l.p99_us),
        max_us: xs.iter().map(|l| l.max_us).fold(0.0, f64::max),
        mean_us: avg(|l| l.mean_us),
    }
}

fn deviation(measured: f64, oracle: f64) -> f64 {
    if oracle.is_finite() && oracle > 0.0 {
        (measured - oracle) / oracle
    } else {
        0.0
    }
}

struct Runs {
    fps: Vec<f64>,
    latency: Vec<LatencySummary>,
    histogram: Vec<u64>,
    failure: Option<String>,
    wall_s: f64,
}

/// Runs every configuration `repetitions` times, interleaved so that slow
/// drift of the host affects all rows alike, and compares the means with
/// both oracles. Live outputs go to `report_dir/runs/<config>/`; the report
/// and table are written to `report_dir`. A run that errors or trips the
/// watchdog marks its configuration FAILED and is not repeated.
pub fn run_bench(profile: &BenchProfile, report_dir: &Path) -> Result<BenchReport> {
    profile.validate()?;
    std::fs::create_dir_all(report_dir).map_err(|e| Error::io_path(report_dir, e))?;
    let started = std::time::Instant::now();
    let mut runs: Vec<Runs> = profile
        .configs
        .iter()
        .map(|_| Runs {
            fps: Vec::new(),
            latency: Vec::new(),
            histogram: Vec::new(),
            failure: None,
            wall_s: 0.0,
        })
        .collect();

    for rep in 0..profile.repetitions {
        for (config, r) in profile.configs.iter().zip(&mut runs) {
            if r.failure.is_some() {
                continue;
            }
            let out = report_dir.join("runs").join(&config.name);
            let t = std::time::Instant::now();
            match measure_config(profile, config, &out) {
                Ok(stats) => {
                    log::info!("{} rep {}: {:.1} fps", config.name, rep + 1, stats.fps);
                    r.fps.push(stats.fps);
                    r.latency.push(stats.latency);
                    add_histogram(&mut r.histogram, &batch_histogram(&stats));
                }
                Err(e) => {
                    log::warn!("{} rep {}: FAILED: {e}", config.name, rep + 1);
                    r.failure = Some(e.to_string());
                }
            }
            r.wall_s += t.elapsed().as_secs_f64();
        }
    }

    let configs: Vec<ConfigReport> = profile
        .configs
        .iter()
        .zip(runs)
        .map(|(c, r)| {
            let lat = profile.latency_for(c);
            let predicted = predict_config(&lat, c);
            let simulated = simulate_policy(profile, c);
            let mean_fps = mean(&r.fps);
            let batches: u64 = r.histogram.iter().sum();
            let items: u64 = r.histogram.iter().enumerate().map(|(b, n)| b as u64 * n).sum();
            ConfigReport {
                name: c.name.clone(),
                mode: c.mode,
                scheduler: c.scheduler,
                batch_max: c.effective_batch_max(),
                linger_us: c.linger_us,
                source_us: lat.source_us,
                status: match r.failure {
                    None => ConfigStatus::Completed,
                    Some(m) => ConfigStatus::Failed(m),
                },
                mean_fps,
                min_fps: r.fps.iter().copied().fold(f64::INFINITY, f64::min).min(mean_fps),
                max_fps: r.fps.iter().copied().fold(0.0, f64::max),
                fps: r.fps,
                latency: mean_latency(&r.latency),
                mean_batch: if batches == 0 { 0.0 } else { items as f64 / batches as f64 },
                infer_per_item_us: infer_time_per_item_us(&lat, &r.histogram),
                batch_histogram: r.histogram,
                predicted_deviation: deviation(mean_fps, predicted.fps),
                predicted,
                simulated_deviation: deviation(mean_fps, simulated.fps),
                simulated,
                wall_s: r.wall_s,
            }
        })
        .collect();

    let ratios = profile
        .configs
        .iter()
        .filter_map(|c| {
            let base = c.baseline.as_ref()?;
            let (num, den) = (
                configs.iter().find(|r| r.name == c.name)?,
                configs.iter().find(|r| &r.name == base)?,
            );
            let per_repetition: Vec<f64> = num.fps.iter().zip(&den.fps).map(|(a, b)| a / b).collect();
            let completed = num.status == ConfigStatus::Completed && den.status == ConfigStatus::Completed;
            Some(RatioReport {
                config: c.name.clone(),
                baseline: base.clone(),
                ratio: if den.mean_fps > 0.0 { num.mean_fps / den.mean_fps } else { 0.0 },
                pass: completed && c.min_ratio.is_none_or(|m| per_repetition.iter().all(|&r| r >= m)),
                per_repetition,
                predicted: num.predicted.fps / den.predicted.fps,
                simulated: num.simulated.fps / den.simulated.fps,
                min_ratio: c.min_ratio,
            })
        })
        .collect();

    let report = BenchReport {
        profile: profile.clone(),
        all_completed: configs.iter().all(|c| c.status == ConfigStatus::Completed),
        configs,
        ratios,
        wall_s: started.elapsed().as_secs_f64(),
    };
    write_report(&report, report_dir)?;
    Ok(report)
}

/// Writes `bench_report.json` and `bench_table.txt` into `dir`.
pub fn write_report(report: &BenchReport, dir: &Path) -> Result<()> {
    let json = dir.join(REPORT_FILE);
    std::fs::write(&json, report.to_json_pretty()).map_err(|e| Error::io_path(&json, e))?;
    let table = dir.join(TABLE_FILE);
    std::fs::write(&table, render_table(report)).map_err(|e| Error::io_path(&table, e))
}

fn signed_pct(x: f64) -> String {
    format!("{:+.1}%", 100.0 * x)
}

/// Human-readable summary of a report.
pub fn render_table(report: &BenchReport) -> String {
    let p = &report.profile;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "profile `{}`: {} frames x {} repetitions, {}x{}, channel capacity {}",
        p.name, p.frames, p.repetitions, p.input_w, p.input_h, p.channel_capacity
    );
    let _ = writeln!(
        s,
        "{:<16} {:<10} {:>5} {:>4} {:>8} {:>8} {:>8} {:>9} {:>7} {:>9} {:>7} {:>6} {:>8} {:>8}  status",
        "config", "mode", "sched", "bmax", "fps", "min", "max", "predicted", "dev", "simulated", "dev", "batch", "p50 ms", "p99 ms"
    );
    for c in &report.configs {
        let status = match &c.status {
            ConfigStatus::Completed => "ok".to_string(),
            ConfigStatus::Failed(m) => format!("FAILED: {m}"),
        };
        let mode = match c.mode {
            ExecutionMode::Pipelined => "pipelined",
            ExecutionMode::Sequential => "sequential",
        };
        let _ = writeln!(
            s,
            "{:<16} {:<10} {:>5} {:>4} {:>8.1} {:>8.1} {:>8.1} {:>9.1} {:>7} {:>9.1} {:>7} {:>6.2} {:>8.2} {:>8.2}  {}",
            c.name,
            mode,
            if c.scheduler { "on" } else { "off" },
            c.batch_max,
            c.mean_fps,
            c.min_fps,
            c.max_fps,
            c.predicted.fps,
            signed_pct(c.predicted_deviation),
            c.simulated.fps,
            signed_pct(c.simulated_deviation),
            c.mean_batch,
            c.latency.p50_us / 1e3,
            c.latency.p99_us / 1e3,
            status
        );
    }
    for r in &report.ratios {
        let reps: Vec<String> = r.per_repetition.iter().map(|x| format!("{x:.2}")).collect();
        let gate = match r.min_ratio {
            Some(m) => format!(" >= {m:.2}: {}", if r.pass { "PASS" } else { "FAIL" }),
            None => String::new(),
        };
        let _ = writeln!(
            s,
            "{} / {}: {:.2}x (per repetition {}; predicted {:.2}x, simulated {:.2}x){}",
            r.config,
            r.baseline,
            r.ratio,
            reps.join(" "),
            r.predicted,
            r.simulated,
            gate
        );
    }
    let _ = writeln!(s, "total {:.1} s", report.wall_s);
    s
}
