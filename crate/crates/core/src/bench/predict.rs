use serde::Serialize;

use crate::config::ExecutionMode;

use super::{BenchConfig, BenchProfile, StageLatency};

/// Closed-form throughput of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub name: String,
    pub fps: f64,
    /// Stage that sets the rate.
    pub bottleneck: &'static str,
    /// Inference time per frame at the batch size the row saturates at.
    pub infer_per_item_us: f64,
    /// Smallest batch size with which inference keeps up with the other
    /// stages, capped at the row's batch limit.
    pub expected_batch: f64,
}

fn fps_from_us(period_us: f64) -> f64 {
    if period_us > 0.0 {
        1e6 / period_us
    } else {
        f64::INFINITY
    }
}

/// Mean inference time per frame over a batch-size histogram
/// (`histogram[b]` = number of batches of size `b`).
pub fn infer_time_per_item_us(lat: &StageLatency, histogram: &[u64]) -> f64 {
    let (mut time, mut items) = (0.0, 0u64);
    for (b, &n) in histogram.iter().enumerate().skip(1) {
        time += n as f64 * lat.infer_us(b) as f64;
        items += n * b as u64;
    }
    if items == 0 {
        0.0
    } else {
        time / items as f64
    }
}

/// Sequential rows take the sum of all stage times per frame. Pipelined rows
/// run at the slowest stage, where inference costs `(overhead + b * per_item) / b`
/// per frame at `b` = the row's batch limit: once inference is the bottleneck
/// the slot fills up to that limit.
pub fn predict_config(lat: &StageLatency, config: &BenchConfig) -> Prediction {
    let per_stage = [
        ("source", lat.source_us as f64),
        ("resize", lat.resize_us as f64),
        ("parse", lat.parse_us as f64),
        ("sink", lat.sink_us as f64),
    ];
    let b_max = config.effective_batch_max() as f64;
    let infer_pi = (lat.infer_overhead_us as f64 + b_max * lat.infer_per_item_us as f64) / b_max;
    let slowest_other = per_stage
        .iter()
        .copied()
        .fold(("source", 0.0), |a, s| if s.1 > a.1 { s } else { a });

    let (o, p, t) = (lat.infer_overhead_us as f64, lat.infer_per_item_us as f64, slowest_other.1);
    let expected_batch = if o + p <= t {
        1.0
    } else if t > p {
        (o / (t - p)).clamp(1.0, b_max)
    } else {
        b_max
    };

    let (fps, bottleneck) = match config.mode {
        ExecutionMode::Sequential => {
            let total: f64 = per_stage.iter().map(|s| s.1).sum::<f64>() + lat.infer_us(1) as f64;
            (fps_from_us(total), "all")
        }
        ExecutionMode::Pipelined => {
            if infer_pi >= slowest_other.1 {
                (fps_from_us(infer_pi), "infer")
            } else {
                (fps_from_us(slowest_other.1), slowest_other.0)
            }
        }
    };
    Prediction {
        name: config.name.clone(),
        fps,
        bottleneck,
        infer_per_item_us: if config.mode == ExecutionMode::Sequential {
            lat.infer_us(1) as f64
        } else {
            infer_pi
        },
        expected_batch: if config.mode == ExecutionMode::Sequential { 1.0 } else { expected_batch },
    }
}

/// [`predict_config`] for every row of `profile`.
pub fn predict_throughput(profile: &BenchProfile) -> Vec<Prediction> {
    profile
        .configs
        .iter()
        .map(|c| predict_config(&profile.latency_for(c), c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 0.05
    }

    #[test]
    fn three_six_nine_stages() {
        let p = predict_throughput(&BenchProfile::pipelining());
        assert!(approx(p[0].fps, 55.6), "{}", p[0].fps);
        assert!(approx(p[1].fps, 111.1), "{}", p[1].fps);
        assert_eq!(p[1].bottleneck, "infer");
    }

    #[test]
    fn batching_amortizes_overhead() {
        let lat = StageLatency {
            resize_us: 0,
            parse_us: 0,
            ..StageLatency::default()
        };
        let on = predict_config(&lat, &BenchConfig::named("on"));
        let off = predict_config(
            &lat,
            &BenchConfig {
                scheduler: false,
                ..BenchConfig::named("off")
            },
        );
        assert_eq!(on.infer_per_item_us, 2000.0);
        assert_eq!(off.infer_per_item_us, 9000.0);
        assert!((on.fps / off.fps - 4.5).abs() < 1e-9);
    }

    #[test]
    fn acceptance_profile_gain_clears_threshold() {
        let p = predict_throughput(&BenchProfile::scheduler_gain());
        let ratio = p[1].fps / p[0].fps;
        assert!((ratio - 1.5).abs() < 1e-9, "{ratio}");
        assert_eq!(p[1].bottleneck, "parse");
        assert!((p[1].expected_batch - 1.6).abs() < 1e-9);
    }

    #[test]
    fn histogram_average() {
        let lat = StageLatency::default();
        // two batches of 1 and one of 8: (2 * 9 + 16) ms over 10 items
        let mut h = vec![0; 9];
        h[1] = 2;
        h[8] = 1;
        assert!((infer_time_per_item_us(&lat, &h) - 3400.0).abs() < 1e-9);
        assert_eq!(infer_time_per_item_us(&lat, &[]), 0.0);
    }

    #[test]
    fn zero_latency_is_unbounded() {
        let lat = StageLatency {
            resize_us: 0,
            infer_overhead_us: 0,
            infer_per_item_us: 0,
            parse_us: 0,
            ..StageLatency::default()
        };
        assert!(predict_config(&lat, &BenchConfig::named("z")).fps.is_infinite());
    }
}
