//! Streaming engine: operators joined by bounded FIFO channels into a static
//! linear chain, one worker thread per operator.
//!
//! A source's exhaustion closes its output edge, closure propagates down the
//! chain as each stage drains, and the run returns once the sink has seen
//! end-of-stream. A failing or panicking operator aborts every edge so the
//! remaining workers unblock and exit; the run then reports that operator.

mod channel;
mod graph;
mod pace;
mod stats;
pub mod testkit;

use serde::Serialize;

pub use channel::{Channel, ChannelClosed, ChannelStats, TryRecv, Wait};
pub use graph::{
    build_pipeline, run_pipeline, Emit, Extras, GraphOptions, InputPort, OperatorBody, OperatorSpec, OutputPort,
    PipelineGraph, RunOutcome, SinkOp, SourceOp, TransformOp,
};
pub use pace::{Paced, PacedSink};
pub use stats::{percentile, EdgeStats, LatencySummary, OperatorStats, PipelineStats};

/// Items flowing through a pipeline carry their sequence number and the
/// monotonic time they entered it.
pub trait Traced {
    fn seq_id(&self) -> u64;
    fn ingest_ns(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    #[default]
    Source,
    Transform,
    Sink,
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::testkit::*;
    use super::*;
    use crate::config::ExecutionMode;
    use crate::error::Error;

    fn chain(n: u64, sink: CollectSink, stages: Vec<OperatorSpec<Token>>) -> Vec<OperatorSpec<Token>> {
        let mut ops = vec![OperatorSpec::source("src", TokenSource::new(n, Duration::ZERO))];
        ops.extend(stages);
        ops.push(OperatorSpec::sink("sink", sink));
        ops
    }

    #[test]
    fn five_operator_chain_has_four_edges() {
        let ops = chain(
            0,
            CollectSink::default(),
            vec![
                OperatorSpec::transform("resize", Delay(Duration::ZERO)),
                OperatorSpec::transform("infer", Delay(Duration::ZERO)),
                OperatorSpec::transform("parse", Delay(Duration::ZERO)),
            ],
        );
        let g = build_pipeline(GraphOptions::default(), ops).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.operator_names(), ["src", "resize", "infer", "parse", "sink"]);
    }

    #[test]
    fn malformed_chains_are_rejected() {
        assert!(matches!(
            build_pipeline::<Token>(GraphOptions::default(), vec![]),
            Err(Error::Graph(_))
        ));
        let two_sinks = vec![
            OperatorSpec::source("src", TokenSource::new(1, Duration::ZERO)),
            OperatorSpec::sink("a", CollectSink::default()),
            OperatorSpec::sink("b", CollectSink::default()),
        ];
        assert!(matches!(build_pipeline(GraphOptions::default(), two_sinks), Err(Error::Graph(_))));
        let dup = chain(1, CollectSink::default(), vec![OperatorSpec::transform("src", Delay(Duration::ZERO))]);
        assert!(matches!(build_pipeline(GraphOptions::default(), dup), Err(Error::Graph(_))));
        let backwards = vec![
            OperatorSpec::sink("sink", CollectSink::default()),
            OperatorSpec::source("src", TokenSource::new(1, Duration::ZERO)),
        ];
        assert!(matches!(build_pipeline(GraphOptions::default(), backwards), Err(Error::Graph(_))));
    }

    #[test]
    fn empty_source_drains_immediately() {
        for mode in [ExecutionMode::Pipelined, ExecutionMode::Sequential] {
            let sink = CollectSink::default();
            let ops = chain(0, sink.clone(), vec![OperatorSpec::transform("id", Delay(Duration::ZERO))]);
            let opts = GraphOptions { mode, ..Default::default() };
            let stats = run_pipeline(build_pipeline(opts, ops).unwrap()).unwrap();
            assert!(stats.operators.iter().all(|o| o.items_out == 0 && o.items_in == 0));
            assert!(sink.seq_ids().is_empty());
        }
    }

    #[test]
    fn identity_chain_preserves_order_in_both_modes() {
        for mode in [ExecutionMode::Pipelined, ExecutionMode::Sequential] {
            let sink = CollectSink::default();
            let ops = chain(
                1000,
                sink.clone(),
                vec![
                    OperatorSpec::transform("a", Delay(Duration::ZERO)),
                    OperatorSpec::transform("b", Delay(Duration::ZERO)),
                ],
            );
            let opts = GraphOptions {
                mode,
                channel_capacity: 2,
                ..Default::default()
            };
            let stats = run_pipeline(build_pipeline(opts, ops).unwrap()).unwrap();
            assert_eq!(sink.seq_ids(), (0..1000).collect::<Vec<_>>());
            assert_eq!(stats.frames_ingested, 1000);
            assert_eq!(stats.frames_emitted, 1000);
            assert_eq!(stats.order_violations, 0);
            assert!(stats.is_consistent());
            assert!(stats.max_edge_depth() <= 2);
        }
    }

    #[test]
    fn failure_names_operator_and_accounts_in_flight() {
        for panic in [false, true] {
            let ops = chain(100, CollectSink::default(), vec![OperatorSpec::transform("bad", FailAt { seq_id: 10, panic })]);
            let outcome = build_pipeline(GraphOptions::default(), ops).unwrap().run();
            let err = outcome.error.expect("run fails");
            assert_eq!(err.operator(), Some("bad"));
            let s = &outcome.stats;
            assert!(!s.completed);
            assert_eq!(s.frames_ingested, s.frames_emitted + s.in_flight);
        }
    }

    #[test]
    fn sequential_failure_names_operator() {
        let ops = chain(20, CollectSink::default(), vec![
            OperatorSpec::transform("ok", Delay(Duration::ZERO)),
            OperatorSpec::transform("bad", FailAt { seq_id: 3, panic: false }),
        ]);
        let opts = GraphOptions { mode: ExecutionMode::Sequential, ..Default::default() };
        let err = run_pipeline(build_pipeline(opts, ops).unwrap()).unwrap_err();
        assert_eq!(err.operator(), Some("bad"));
    }

    #[test]
    fn watchdog_aborts_a_stalled_run() {
        let ops = chain(1000, CollectSink::default(), vec![OperatorSpec::transform("slow", Delay(Duration::from_millis(20)))]);
        let opts = GraphOptions {
            watchdog: Some(Duration::from_millis(100)),
            ..Default::default()
        };
        let err = run_pipeline(build_pipeline(opts, ops).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Watchdog(_)));
    }

    #[test]
    fn paced_stage_enforces_minimum_service_time() {
        let sink = CollectSink::default();
        let ops = chain(5, sink.clone(), vec![OperatorSpec::transform("p", Paced::new(Delay(Duration::ZERO), Duration::from_millis(10)))]);
        let t = std::time::Instant::now();
        run_pipeline(build_pipeline(GraphOptions::default(), ops).unwrap()).unwrap();
        assert!(t.elapsed() >= Duration::from_millis(50));
        assert_eq!(sink.seq_ids().len(), 5);
    }
}
