//! Discrete-event replay of the live pipeline.
//!
//! Every worker of the pipelined engine is a small state machine here: the
//! source, the fixed-time stages, and the two halves of the batched inference
//! stage (accumulator and executor, joined by a one-slot handoff). Edges are
//! bounded FIFOs with blocking sends. Time advances from one timer to the
//! next; between timers every machine is stepped until none can move, which
//! plays the role of the wakeups in the live engine. CPU time is not modeled.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::config::ExecutionMode;
use crate::dataflow::LatencySummary;
use crate::operators::Pacer;
use crate::scheduler::BatchStats;

use super::{BenchConfig, BenchProfile, StageLatency};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub frames: u64,
    /// Frames that reached the sink; equals `frames` unless the model deadlocked.
    pub completed: u64,
    pub wall_us: f64,
    pub fps: f64,
    pub batches: BatchStats,
    pub latency: LatencySummary,
    pub max_edge_depth: usize,
}

#[derive(Debug, Clone, Copy)]
struct Item {
    seq: u64,
    ingest: u64,
}

struct Fifo<T> {
    items: VecDeque<T>,
    cap: usize,
    closed: bool,
    max_depth: usize,
}

impl<T> Fifo<T> {
    fn new(cap: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(cap),
            cap,
            closed: false,
            max_depth: 0,
        }
    }

    fn has_room(&self) -> bool {
        self.items.len() < self.cap
    }

    fn push(&mut self, x: T) {
        debug_assert!(self.has_room());
        self.items.push_back(x);
        self.max_depth = self.max_depth.max(self.items.len());
    }

    fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    fn drained(&self) -> bool {
        self.closed && self.items.is_empty()
    }
}

enum Source {
    Waiting(u64),
    Holding(Item),
    Done,
}

enum Stage {
    Idle,
    Busy(u64, Item),
    Holding(Item),
    Done,
}

enum Executor {
    Idle,
    Busy(u64, Vec<Item>),
    Sending(VecDeque<Item>),
    Done,
}

struct Accumulator {
    pending: Vec<Item>,
    first_at: u64,
    holding: Option<Vec<Item>>,
    done: bool,
    stats: BatchStats,
}

struct Model {
    now: u64,
    timers: BinaryHeap<Reverse<u64>>,
    frames: u64,
    pacer: Pacer,
    // stage floors, ns
    resize: u64,
    parse: u64,
    sink: u64,
    overhead: u64,
    per_item: u64,
    batch_max: usize,
    linger: u64,

    next_seq: u64,
    source: Source,
    resize_st: Stage,
    acc: Accumulator,
    exec: Executor,
    outstanding: usize,
    parse_st: Stage,
    sink_st: Stage,
    // decode->resize, resize->infer, infer->parse, parse->sink
    edges: [Fifo<Item>; 4],
    handoff: Fifo<Vec<Item>>,
    latencies: Vec<u64>,
    last_done: u64,
}

const US: u64 = 1000;

impl Model {
    fn timer(&mut self, at: u64) {
        self.timers.push(Reverse(at));
    }

    fn gap(&mut self) -> u64 {
        self.pacer.next_gap().as_nanos() as u64
    }

    fn step_source(&mut self) -> bool {
        match self.source {
            Source::Waiting(until) if self.now >= until => {
                self.source = Source::Holding(Item {
                    seq: self.next_seq,
                    ingest: self.now,
                });
                self.next_seq += 1;
                true
            }
            Source::Holding(item) if self.edges[0].has_room() => {
                self.edges[0].push(item);
                if self.next_seq == self.frames {
                    self.edges[0].closed = true;
                    self.source = Source::Done;
                } else {
                    let until = self.now + self.gap();
                    self.timer(until);
                    self.source = Source::Waiting(until);
                }
                true
            }
            _ => false,
        }
    }

    /// One fixed-time stage reading edge `input`; `output` is `None` for the sink.
    fn step_stage(&mut self, which: usize) -> bool {
        let (input, output, floor) = match which {
            0 => (0, Some(1), self.resize),
            1 => (2, Some(3), self.parse),
            _ => (3, None, self.sink),
        };
        let mut state = std::mem::replace(self.stage_mut(which), Stage::Done);
        let moved = match state {
            Stage::Idle => {
                if let Some(item) = self.edges[input].pop() {
                    let until = self.now + floor;
                    self.timer(until);
                    state = Stage::Busy(until, item);
                    true
                } else if self.edges[input].drained() {
                    if let Some(o) = output {
                        self.edges[o].closed = true;
                    }
                    state = Stage::Done;
                    true
                } else {
                    false
                }
            }
            Stage::Busy(until, item) if self.now >= until => {
                match output {
                    Some(_) => state = Stage::Holding(item),
                    None => {
                        self.latencies.push(self.now - item.ingest);
                        self.last_done = self.now;
                        state = Stage::Idle;
                    }
                }
                true
            }
            Stage::Holding(item) => {
                let o = output.expect("only forwarding stages hold items");
                if self.edges[o].has_room() {
                    self.edges[o].push(item);
                    state = Stage::Idle;
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        *self.stage_mut(which) = state;
        moved
    }

    fn stage_mut(&mut self, which: usize) -> &mut Stage {
        match which {
            0 => &mut self.resize_st,
            1 => &mut self.parse_st,
            _ => &mut self.sink_st,
        }
    }

    fn accept(&mut self, item: Item) {
        if self.acc.pending.is_empty() {
            self.acc.first_at = self.now;
            if self.linger > 0 {
                self.timer(self.now + self.linger);
            }
        }
        self.acc.pending.push(item);
    }

    fn dispatch(&mut self) {
        let batch = std::mem::take(&mut self.acc.pending);
        self.acc.stats.record(batch.len());
        self.outstanding += 1;
        self.acc.holding = Some(batch);
    }

    /// Mirrors `BatchSlot::accumulate_batch` followed by the handoff send.
    fn step_accumulator(&mut self) -> bool {
        if self.acc.done {
            return false;
        }
        if let Some(batch) = self.acc.holding.take() {
            if !self.handoff.has_room() {
                self.acc.holding = Some(batch);
                return false;
            }
            self.handoff.push(batch);
            return true;
        }
        let mut moved = false;
        loop {
            if self.acc.pending.len() >= self.batch_max {
                self.dispatch();
                return true;
            }
            if self.acc.pending.is_empty() {
                if let Some(x) = self.edges[1].pop() {
                    self.accept(x);
                    moved = true;
                    continue;
                }
                if self.edges[1].drained() {
                    self.handoff.closed = true;
                    self.acc.done = true;
                    return true;
                }
                return moved;
            }
            if self.outstanding == 0 && self.linger == 0 {
                while self.acc.pending.len() < self.batch_max {
                    match self.edges[1].pop() {
                        Some(x) => self.accept(x),
                        None => break,
                    }
                }
                self.dispatch();
                return true;
            }
            // a queued item wins over an expired deadline, as in the channel
            if let Some(x) = self.edges[1].pop() {
                self.accept(x);
                moved = true;
                continue;
            }
            let expired = self.linger > 0 && self.now >= self.acc.first_at + self.linger;
            if self.edges[1].drained() || expired {
                self.dispatch();
                return true;
            }
            return moved;
        }
    }

    fn step_executor(&mut self) -> bool {
        match std::mem::replace(&mut self.exec, Executor::Done) {
            Executor::Idle => {
                if let Some(batch) = self.handoff.pop() {
                    let until = self.now + self.overhead + batch.len() as u64 * self.per_item;
                    self.timer(until);
                    self.exec = Executor::Busy(until, batch);
                    true
                } else if self.handoff.drained() {
                    self.edges[2].closed = true;
                    true
                } else {
                    self.exec = Executor::Idle;
                    false
                }
            }
            Executor::Busy(until, mut batch) if self.now >= until => {
                batch.sort_by_key(|i| i.seq);
                self.exec = Executor::Sending(batch.into());
                true
            }
            Executor::Sending(mut rest) => {
                let mut moved = false;
                while self.edges[2].has_room() {
                    let Some(item) = rest.pop_front() else { break };
                    self.edges[2].push(item);
                    moved = true;
                }
                if rest.is_empty() {
                    self.outstanding -= 1;
                    self.exec = Executor::Idle;
                    true
                } else {
                    self.exec = Executor::Sending(rest);
                    moved
                }
            }
            other => {
                self.exec = other;
                false
            }
        }
    }

    fn settle(&mut self) {
        loop {
            let mut moved = self.step_source();
            moved |= self.step_stage(0);
            moved |= self.step_accumulator();
            moved |= self.step_executor();
            moved |= self.step_stage(1);
            moved |= self.step_stage(2);
            if !moved {
                break;
            }
        }
    }

    fn run(mut self) -> SimResult {
        let first = self.gap();
        self.timer(first);
        self.source = Source::Waiting(first);
        loop {
            self.settle();
            if self.latencies.len() as u64 == self.frames {
                break;
            }
            match self.timers.pop() {
                Some(Reverse(t)) => self.now = self.now.max(t),
                None => break,
            }
        }
        let max_edge_depth = self
            .edges
            .iter()
            .map(|e| e.max_depth)
            .max()
            .unwrap_or(0);
        finish(self.frames, self.last_done, &mut self.latencies, self.acc.stats, max_edge_depth)
    }
}

fn finish(frames: u64, wall_ns: u64, latencies: &mut [u64], batches: BatchStats, max_edge_depth: usize) -> SimResult {
    let completed = latencies.len() as u64;
    SimResult {
        frames,
        completed,
        wall_us: wall_ns as f64 / 1e3,
        fps: if wall_ns == 0 {
            f64::INFINITY
        } else {
            completed as f64 / (wall_ns as f64 / 1e9)
        },
        batches,
        latency: LatencySummary::from_ns(latencies),
        max_edge_depth,
    }
}

/// One frame at a time through every stage, batch size 1.
fn run_sequential(lat: &StageLatency, frames: u64, mut pacer: Pacer) -> SimResult {
    let mut now = 0u64;
    let mut latencies = Vec::with_capacity(frames as usize);
    let mut batches = BatchStats::default();
    let rest = (lat.resize_us + lat.infer_us(1) + lat.parse_us + lat.sink_us) * US;
    for _ in 0..frames {
        now += pacer.next_gap().as_nanos() as u64;
        let ingest = now;
        now += rest;
        latencies.push(now - ingest);
        batches.record(1);
    }
    finish(frames, now, &mut latencies, batches, 0)
}

/// Replays `config` of `profile` without running it.
/// Deterministic: Poisson gaps come from the same seeded generator the live
/// source uses.
pub fn simulate_policy(profile: &BenchProfile, config: &BenchConfig) -> SimResult {
    let lat = profile.latency_for(config);
    let pacer = Pacer::new(lat.source_pacing, lat.source_us, profile.seed).unwrap_or(Pacer::Immediate);
    if config.mode == ExecutionMode::Sequential {
        return run_sequential(&lat, profile.frames, pacer);
    }
    let cap = profile.channel_capacity.max(1) as usize;
    let model = Model {
        now: 0,
        timers: BinaryHeap::new(),
        frames: profile.frames,
        pacer,
        resize: lat.resize_us * US,
        parse: lat.parse_us * US,
        sink: lat.sink_us * US,
        overhead: lat.infer_overhead_us * US,
        per_item: lat.infer_per_item_us * US,
        batch_max: config.effective_batch_max() as usize,
        linger: if config.scheduler { config.linger_us * US } else { 0 },
        next_seq: 0,
        source: Source::Done,
        resize_st: Stage::Idle,
        acc: Accumulator {
            pending: Vec::new(),
            first_at: 0,
            holding: None,
            done: false,
            stats: BatchStats::default(),
        },
        exec: Executor::Idle,
        outstanding: 0,
        parse_st: Stage::Idle,
        sink_st: Stage::Idle,
        edges: std::array::from_fn(|_| Fifo::new(cap)),
        handoff: Fifo::new(1),
        latencies: Vec::with_capacity(profile.frames as usize),
        last_done: 0,
    };
    if profile.frames == 0 {
        return finish(0, 0, &mut [], BatchStats::default(), 0);
    }
    model.run()
}
