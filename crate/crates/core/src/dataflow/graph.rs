use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::clock::monotonic_ns;
use crate::config::{ExecutionMode, PipelineConfig};
use crate::error::{Error, Result};

use super::channel::{Channel, TryRecv, Wait};
use super::stats::{EdgeStats, LatencySummary, OperatorStats, PipelineStats};
use super::{OperatorKind, Traced};

pub type Extras = BTreeMap<String, serde_json::Value>;

/// Callback through which a transform hands results downstream.
pub type Emit<'e, T> = dyn FnMut(T) -> Result<()> + 'e;

pub trait SourceOp<T>: Send {
    /// Next item, or `None` when the stream is exhausted.
    fn next_item(&mut self) -> Result<Option<T>>;

    fn extras(&self) -> Extras {
        Extras::new()
    }
}

pub trait TransformOp<T>: Send {
    fn process(&mut self, item: T, emit: &mut Emit<'_, T>) -> Result<()>;

    /// Called once after the input reached end-of-stream.
    fn finish(&mut self, _emit: &mut Emit<'_, T>) -> Result<()> {
        Ok(())
    }

    /// Worker loop in pipelined mode. Operators that need to look at their
    /// input channel directly (the batching inference stage) override this.
    fn run(&mut self, input: &InputPort<'_, T>, output: &OutputPort<'_, T>) -> Result<()>
    where
        T: Send,
    {
        while let Some(item) = input.receive() {
            self.process(item, &mut |x| output.send(x))?;
        }
        self.finish(&mut |x| output.send(x))
    }

    fn extras(&self) -> Extras {
        Extras::new()
    }
}

pub trait SinkOp<T>: Send {
    fn consume(&mut self, item: T) -> Result<()>;

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }

    fn extras(&self) -> Extras {
        Extras::new()
    }
}

pub enum OperatorBody<T> {
    Source(Box<dyn SourceOp<T>>),
    Transform(Box<dyn TransformOp<T>>),
    Sink(Box<dyn SinkOp<T>>),
}

pub struct OperatorSpec<T> {
    pub name: String,
    pub body: OperatorBody<T>,
}

impl<T> OperatorSpec<T> {
    pub fn source(name: impl Into<String>, op: impl SourceOp<T> + 'static) -> Self {
        Self {
            name: name.into(),
            body: OperatorBody::Source(Box::new(op)),
        }
    }

    pub fn transform(name: impl Into<String>, op: impl TransformOp<T> + 'static) -> Self {
        Self {
            name: name.into(),
            body: OperatorBody::Transform(Box::new(op)),
        }
    }

    pub fn sink(name: impl Into<String>, op: impl SinkOp<T> + 'static) -> Self {
        Self {
            name: name.into(),
            body: OperatorBody::Sink(Box::new(op)),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self.body {
            OperatorBody::Source(_) => OperatorKind::Source,
            OperatorBody::Transform(_) => OperatorKind::Transform,
            OperatorBody::Sink(_) => OperatorKind::Sink,
        }
    }

    fn extras(&self) -> Extras {
        match &self.body {
            OperatorBody::Source(op) => op.extras(),
            OperatorBody::Transform(op) => op.extras(),
            OperatorBody::Sink(op) => op.extras(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphOptions {
    pub channel_capacity: usize,
    pub mode: ExecutionMode,
    /// Abort the run when it has not drained in time.
    pub watchdog: Option<Duration>,
    /// Print a progress line to stderr once per second.
    pub progress: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            channel_capacity: 4,
            mode: ExecutionMode::Pipelined,
            watchdog: None,
            progress: false,
        }
    }
}

impl GraphOptions {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Self {
            channel_capacity: cfg.channel_capacity as usize,
            mode: cfg.mode,
            watchdog: (cfg.watchdog_s > 0).then(|| Duration::from_secs(cfg.watchdog_s)),
            progress: cfg.progress,
        }
    }
}

/// A validated linear chain `source -> transforms* -> sink` with its edges
/// allocated. Nothing runs until [`PipelineGraph::run`].
pub struct PipelineGraph<T> {
    ops: Vec<OperatorSpec<T>>,
    edges: Vec<Channel<T>>,
    options: GraphOptions,
}

pub fn build_pipeline<T>(options: GraphOptions, ops: Vec<OperatorSpec<T>>) -> Result<PipelineGraph<T>> {
    if ops.is_empty() {
        return Err(Error::Graph("pipeline has no operators".into()));
    }
    if options.channel_capacity == 0 {
        return Err(Error::Graph("channel capacity must be >= 1".into()));
    }
    let mut names = BTreeSet::new();
    for op in &ops {
        if !names.insert(op.name.as_str()) {
            return Err(Error::Graph(format!("duplicate operator name `{}`", op.name)));
        }
    }
    let count = |k| ops.iter().filter(|o| o.kind() == k).count();
    let (sources, sinks) = (count(OperatorKind::Source), count(OperatorKind::Sink));
    if sources != 1 || sinks != 1 {
        return Err(Error::Graph(format!(
            "a chain needs exactly one source and one sink, got {sources} and {sinks}"
        )));
    }
    if ops[0].kind() != OperatorKind::Source || ops[ops.len() - 1].kind() != OperatorKind::Sink {
        return Err(Error::Graph("the source must come first and the sink last".into()));
    }
    let edges = (0..ops.len() - 1)
        .map(|_| Channel::new(options.channel_capacity))
        .collect();
    Ok(PipelineGraph { ops, edges, options })
}

/// Runs the graph and returns its stats, or the first operator failure.
pub fn run_pipeline<T: Traced + Send>(graph: PipelineGraph<T>) -> Result<PipelineStats> {
    let outcome = graph.run();
    match outcome.error {
        None => Ok(outcome.stats),
        Some(e) => Err(e),
    }
}

pub struct RunOutcome {
    pub stats: PipelineStats,
    pub error: Option<Error>,
}

#[derive(Default)]
pub(crate) struct StageCounters {
    items_in: AtomicU64,
    items_out: AtomicU64,
    idle_ns: AtomicU64,
    busy_ns: AtomicU64,
}

fn add(counter: &AtomicU64, v: u64) {
    counter.fetch_add(v, Ordering::Relaxed);
}

fn elapsed_ns(since: Instant) -> u64 {
    since.elapsed().as_nanos() as u64
}

/// Receiving end of an operator's input edge, with idle-time accounting.
pub struct InputPort<'a, T> {
    ch: &'a Channel<T>,
    counters: &'a StageCounters,
}

impl<T> InputPort<'_, T> {
    fn record(&self, waited: Instant, got_item: bool) {
        add(&self.counters.idle_ns, elapsed_ns(waited));
        if got_item {
            add(&self.counters.items_in, 1);
        }
    }

    pub fn receive(&self) -> Option<T> {
        let t = Instant::now();
        let r = self.ch.receive();
        self.record(t, r.is_some());
        r
    }

    pub fn try_receive(&self) -> TryRecv<T> {
        let r = self.ch.try_receive();
        if matches!(r, TryRecv::Item(_)) {
            add(&self.counters.items_in, 1);
        }
        r
    }

    pub fn receive_until(&self, deadline: Option<Instant>, wake: &dyn Fn() -> bool) -> Wait<T> {
        let t = Instant::now();
        let r = self.ch.receive_until(deadline, wake);
        self.record(t, matches!(r, Wait::Item(_)));
        r
    }

    /// Wake this port's receiver so it re-checks its wake condition.
    pub fn notify(&self) {
        self.ch.notify_receiver();
    }

    /// Tear down the edge; the upstream operator's next send fails.
    pub fn abort(&self) {
        self.ch.abort();
    }

    pub fn is_aborted(&self) -> bool {
        self.ch.is_aborted()
    }
}

pub struct OutputPort<'a, T> {
    ch: &'a Channel<T>,
    counters: &'a StageCounters,
}

impl<T> OutputPort<'_, T> {
    /// Blocks while the edge is full.
    pub fn send(&self, item: T) -> Result<()> {
        let t = Instant::now();
        let r = self.ch.send(item).map_err(|_| Error::ChannelClosed);
        add(&self.counters.idle_ns, elapsed_ns(t));
        if r.is_ok() {
            add(&self.counters.items_out, 1);
        }
        r
    }
}

/// Order and latency bookkeeping at the sink.
#[derive(Default)]
struct SinkMonitor {
    last: Option<u64>,
    violations: u64,
    latencies: Vec<u64>,
}

impl SinkMonitor {
    fn observe<T: Traced>(&mut self, item: &T) {
        let seq = item.seq_id();
        if self.last.is_some_and(|l| seq <= l) {
            self.violations += 1;
        }
        self.last = Some(seq);
        self.latencies.push(monotonic_ns().saturating_sub(item.ingest_ns()));
    }
}

struct Completion {
    done: Mutex<bool>,
    cv: Condvar,
}

impl Completion {
    fn signal(&self) {
        *self.done.lock().unwrap_or_else(|p| p.into_inner()) = true;
        self.cv.notify_all();
    }

    /// Waits up to `timeout`; true once the run completed.
    fn wait(&self, timeout: Duration) -> bool {
        let guard = self.done.lock().unwrap_or_else(|p| p.into_inner());
        let (guard, _) = self
            .cv
            .wait_timeout_while(guard, timeout, |d| !*d)
            .unwrap_or_else(|p| p.into_inner());
        *guard
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic payload".into()
    }
}

/// Picks the error to report: the first one that is not a knock-on
/// `ChannelClosed` from the teardown of a neighbour.
fn root_cause(mut errors: Vec<Error>) -> Option<Error> {
    let is_knock_on =
        |e: &Error| matches!(e, Error::Operator { cause, .. } if matches!(**cause, Error::ChannelClosed));
    let pos = errors.iter().position(|e| !is_knock_on(e)).unwrap_or(0);
    (!errors.is_empty()).then(|| errors.swap_remove(pos))
}

impl<T: Traced + Send> PipelineGraph<T> {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn operator_names(&self) -> Vec<&str> {
        self.ops.iter().map(|o| o.name.as_str()).collect()
    }

    pub fn options(&self) -> &GraphOptions {
        &self.options
    }

    pub fn run(mut self) -> RunOutcome {
        let counters: Vec<StageCounters> = self.ops.iter().map(|_| StageCounters::default()).collect();
        let start = Instant::now();
        let (monitor, worker_ns, errors) = match self.options.mode {
            ExecutionMode::Pipelined => self.run_pipelined(&counters),
            ExecutionMode::Sequential => self.run_sequential(&counters),
        };
        let wall_ns = elapsed_ns(start);
        self.assemble(&counters, monitor, worker_ns, errors, wall_ns)
    }

    fn run_pipelined(&mut self, counters: &[StageCounters]) -> (SinkMonitor, Vec<u64>, Vec<Error>) {
        let edges = &self.edges;
        let errors = Mutex::new(Vec::new());
        let completion = Completion {
            done: Mutex::new(false),
            cv: Condvar::new(),
        };
        let watchdog_fired = AtomicBool::new(false);
        let abort_all = || edges.iter().for_each(Channel::abort);
        let mut monitor = SinkMonitor::default();
        let mut worker_ns = vec![0u64; self.ops.len()];

        thread::scope(|s| {
            let mut handles = Vec::new();
            for (idx, op) in self.ops.iter_mut().enumerate() {
                let input = idx.checked_sub(1).map(|e| InputPort {
                    ch: &edges[e],
                    counters: &counters[idx],
                });
                let output = edges.get(idx).map(|ch| OutputPort {
                    ch,
                    counters: &counters[idx],
                });
                let (errors, abort_all) = (&errors, &abort_all);
                let handle = thread::Builder::new()
                    .name(format!("op-{}", op.name))
                    .spawn_scoped(s, move || {
                        let t0 = Instant::now();
                        let mut mon = SinkMonitor::default();
                        let result = catch_unwind(AssertUnwindSafe(|| {
                            drive_worker(&mut op.body, input.as_ref(), output.as_ref(), &mut mon)
                        }));
                        let failure = match result {
                            Ok(Ok(())) => None,
                            Ok(Err(cause)) => Some(Error::Operator {
                                operator: op.name.clone(),
                                cause: Box::new(cause),
                            }),
                            Err(payload) => Some(Error::Panic {
                                operator: op.name.clone(),
                                message: panic_message(payload.as_ref()),
                            }),
                        };
                        match failure {
                            None => {
                                if let Some(out) = &output {
                                    out.ch.close();
                                }
                            }
                            Some(e) => {
                                log::debug!("{e}");
                                errors.lock().unwrap_or_else(|p| p.into_inner()).push(e);
                                abort_all();
                            }
                        }
                        (mon, elapsed_ns(t0))
                    })
                    .expect("spawn operator worker");
                handles.push(handle);
            }

            if let Some(limit) = self.options.watchdog {
                let (completion, fired, abort_all) = (&completion, &watchdog_fired, &abort_all);
                s.spawn(move || {
                    if !completion.wait(limit) {
                        fired.store(true, Ordering::SeqCst);
                        abort_all();
                    }
                });
            }
            if self.options.progress {
                let sink_counters = &counters[counters.len() - 1];
                let completion = &completion;
                s.spawn(move || {
                    let t0 = Instant::now();
                    while !completion.wait(Duration::from_secs(1)) {
                        let frames = sink_counters.items_in.load(Ordering::Relaxed);
                        let secs = t0.elapsed().as_secs_f64();
                        let depth: Vec<String> = edges.iter().map(|e| e.len().to_string()).collect();
                        eprintln!("frames={frames} fps={:.1} depth={}", frames as f64 / secs, depth.join(","));
                    }
                });
            }

            let last = handles.len() - 1;
            for (idx, h) in handles.into_iter().enumerate() {
                let (mon, ns) = h.join().expect("operator worker result");
                worker_ns[idx] = ns;
                if idx == last {
                    monitor = mon;
                }
            }
            completion.signal();
        });

        let mut errors = errors.into_inner().unwrap_or_else(|p| p.into_inner());
        if watchdog_fired.load(Ordering::SeqCst) {
            errors.insert(0, Error::Watchdog(self.options.watchdog.unwrap_or_default()));
        }
        (monitor, worker_ns, errors)
    }

    fn run_sequential(&mut self, counters: &[StageCounters]) -> (SinkMonitor, Vec<u64>, Vec<Error>) {
        let mut monitor = SinkMonitor::default();
        let n = self.ops.len();
        let names: Vec<String> = self.ops.iter().map(|o| o.name.clone()).collect();
        let (first, rest) = self.ops.split_first_mut().expect("validated chain");
        let (last, middle) = rest.split_last_mut().expect("validated chain");
        let OperatorBody::Source(source) = &mut first.body else {
            unreachable!("validated chain starts with a source")
        };
        let OperatorBody::Sink(sink) = &mut last.body else {
            unreachable!("validated chain ends with a sink")
        };
        let mut stages: Vec<&mut Stage<T>> = middle
            .iter_mut()
            .map(|o| match &mut o.body {
                OperatorBody::Transform(t) => t.as_mut(),
                _ => unreachable!("validated chain has only transforms in the middle"),
            })
            .collect();
        let sink: &mut dyn SinkOp<T> = sink.as_mut();

        let mut chain = SequentialChain {
            counters: &counters[1..],
            sink,
            monitor: &mut monitor,
        };
        let result = catch_unwind(AssertUnwindSafe(|| -> std::result::Result<(), (usize, Error)> {
            loop {
                let t = Instant::now();
                let item = source.next_item().map_err(|e| (0, e))?;
                add(&counters[0].busy_ns, elapsed_ns(t));
                let Some(item) = item else { break };
                add(&counters[0].items_out, 1);
                chain.push(&mut stages, item)?;
            }
            for k in 0..stages.len() {
                chain.finish_stage(&mut stages[k..])?;
            }
            let t = Instant::now();
            chain.sink.finish().map_err(|e| (n - 1, e))?;
            add(&counters[n - 1].busy_ns, elapsed_ns(t));
            Ok(())
        }));
        let errors = match result {
            Ok(Ok(())) => vec![],
            Ok(Err((idx, cause))) => vec![Error::Operator {
                operator: names[idx].clone(),
                cause: Box::new(cause),
            }],
            Err(payload) => vec![Error::Panic {
                operator: "sequential".into(),
                message: panic_message(payload.as_ref()),
            }],
        };
        let worker_ns = counters.iter().map(|c| c.busy_ns.load(Ordering::Relaxed)).collect();
        (monitor, worker_ns, errors)
    }

    fn assemble(
        &self,
        counters: &[StageCounters],
        mut monitor: SinkMonitor,
        worker_ns: Vec<u64>,
        errors: Vec<Error>,
        wall_ns: u64,
    ) -> RunOutcome {
        let edge_stats: Vec<_> = self.edges.iter().map(Channel::stats).collect();
        let n = self.ops.len();
        let operators: Vec<OperatorStats> = self
            .ops
            .iter()
            .enumerate()
            .map(|(i, op)| {
                let c = &counters[i];
                let idle = c.idle_ns.load(Ordering::Relaxed);
                let parks = if i > 0 { edge_stats[i - 1].receive_parks } else { 0 }
                    + if i + 1 < n { edge_stats[i].send_parks } else { 0 };
                OperatorStats {
                    name: op.name.clone(),
                    kind: op.kind(),
                    items_in: if i == 0 { 0 } else { c.items_in.load(Ordering::Relaxed) },
                    items_out: c.items_out.load(Ordering::Relaxed),
                    busy_ns: worker_ns[i].saturating_sub(idle),
                    idle_ns: idle,
                    park_count: parks,
                    extras: op.extras(),
                }
            })
            .collect();
        let edges = edge_stats
            .into_iter()
            .enumerate()
            .map(|(i, channel)| EdgeStats {
                from: self.ops[i].name.clone(),
                to: self.ops[i + 1].name.clone(),
                channel,
            })
            .collect();
        let frames_ingested = operators[0].items_out;
        let frames_emitted = operators[n - 1].items_in;
        let error = root_cause(errors);
        let stats = PipelineStats {
            mode: self.options.mode,
            operators,
            edges,
            frames_ingested,
            frames_emitted,
            in_flight: frames_ingested.saturating_sub(frames_emitted),
            order_violations: monitor.violations,
            latency: LatencySummary::from_ns(&mut monitor.latencies),
            wall_ns,
            fps: if wall_ns > 0 {
                frames_emitted as f64 / (wall_ns as f64 / 1e9)
            } else {
                0.0
            },
            completed: error.is_none(),
        };
        RunOutcome { stats, error }
    }
}

fn drive_worker<T: Traced + Send>(
    body: &mut OperatorBody<T>,
    input: Option<&InputPort<'_, T>>,
    output: Option<&OutputPort<'_, T>>,
    monitor: &mut SinkMonitor,
) -> Result<()> {
    match body {
        OperatorBody::Source(op) => {
            let out = output.expect("source has an output edge");
            while let Some(item) = op.next_item()? {
                out.send(item)?;
            }
            Ok(())
        }
        OperatorBody::Transform(op) => op.run(
            input.expect("transform has an input edge"),
            output.expect("transform has an output edge"),
        ),
        OperatorBody::Sink(op) => {
            let input = input.expect("sink has an input edge");
            while let Some(item) = input.receive() {
                monitor.observe(&item);
                op.consume(item)?;
            }
            if input.is_aborted() {
                return Ok(());
            }
            op.finish()
        }
    }
}

type Stage<T> = dyn TransformOp<T> + 'static;

/// Pushes one item at a time through the transforms on the calling thread.
struct SequentialChain<'a, T> {
    /// Counters of the transforms followed by the sink.
    counters: &'a [StageCounters],
    sink: &'a mut dyn SinkOp<T>,
    monitor: &'a mut SinkMonitor,
}

impl<T: Traced + Send> SequentialChain<'_, T> {
    fn push(&mut self, stages: &mut [&mut Stage<T>], item: T) -> std::result::Result<(), (usize, Error)> {
        let depth = self.counters.len() - 1 - stages.len();
        let counters = self.counters;
        let c = &counters[depth];
        add(&c.items_in, 1);
        let Some((stage, rest)) = stages.split_first_mut() else {
            self.monitor.observe(&item);
            let t = Instant::now();
            let r = self.sink.consume(item);
            add(&c.busy_ns, elapsed_ns(t));
            return r.map_err(|e| (depth + 1, e));
        };
        let t = Instant::now();
        let mut downstream_ns = 0;
        let mut downstream_err = None;
        let r = stage.process(item, &mut |x| {
            add(&c.items_out, 1);
            let t = Instant::now();
            let r = self.push(rest, x);
            downstream_ns += elapsed_ns(t);
            r.map_err(|e| {
                downstream_err = Some(e);
                Error::ChannelClosed
            })
        });
        add(&c.busy_ns, elapsed_ns(t).saturating_sub(downstream_ns));
        if let Some(e) = downstream_err {
            return Err(e);
        }
        r.map_err(|e| (depth + 1, e))
    }

    /// Flush `stages[0]`, pushing what it emits through `stages[1..]`.
    fn finish_stage(&mut self, stages: &mut [&mut Stage<T>]) -> std::result::Result<(), (usize, Error)> {
        let depth = self.counters.len() - 1 - stages.len();
        let counters = self.counters;
        let c = &counters[depth];
        let (stage, rest) = stages.split_first_mut().expect("non-empty");
        let mut downstream_err = None;
        let r = stage.finish(&mut |x| {
            add(&c.items_out, 1);
            self.push(rest, x).map_err(|e| {
                downstream_err = Some(e);
                Error::ChannelClosed
            })
        });
        if let Some(e) = downstream_err {
            return Err(e);
        }
        r.map_err(|e| (depth + 1, e))
    }
}
