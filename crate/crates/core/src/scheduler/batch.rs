use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::config::SchedulerConfig;
use crate::dataflow::{Channel, InputPort, OutputPort, TryRecv, Wait};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerPolicy {
    pub enabled: bool,
    pub batch_max: u32,
    pub linger: Duration,
}

impl SchedulerPolicy {
    pub fn from_config(cfg: &SchedulerConfig) -> Self {
        Self {
            enabled: cfg.enabled,
            batch_max: cfg.batch_max.max(1),
            linger: Duration::from_micros(cfg.linger_us),
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            batch_max: 1,
            linger: Duration::ZERO,
        }
    }

    /// Largest batch this policy dispatches; always 1 when disabled.
    pub fn batch_max(&self) -> usize {
        if self.enabled {
            self.batch_max as usize
        } else {
            1
        }
    }
}

/// Number of dispatched batches the executor has not finished yet.
/// The stage counts as busy while this is non-zero.
#[derive(Debug, Default)]
pub struct BusyFlag {
    outstanding: AtomicUsize,
}

impl BusyFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_busy(&self) -> bool {
        self.outstanding.load(Ordering::SeqCst) > 0
    }

    pub fn begin(&self) {
        self.outstanding.fetch_add(1, Ordering::SeqCst);
    }

    pub fn end(&self) {
        self.outstanding.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Where the slot pulls items from: an operator's input port, or a bare channel in tests.
pub trait BatchInbox<T> {
    fn receive_until(&self, deadline: Option<Instant>, wake: &dyn Fn() -> bool) -> Wait<T>;
    fn try_receive(&self) -> TryRecv<T>;
}

impl<T> BatchInbox<T> for Channel<T> {
    fn receive_until(&self, deadline: Option<Instant>, wake: &dyn Fn() -> bool) -> Wait<T> {
        Channel::receive_until(self, deadline, wake)
    }

    fn try_receive(&self) -> TryRecv<T> {
        Channel::try_receive(self)
    }
}

impl<T> BatchInbox<T> for InputPort<'_, T> {
    fn receive_until(&self, deadline: Option<Instant>, wake: &dyn Fn() -> bool) -> Wait<T> {
        InputPort::receive_until(self, deadline, wake)
    }

    fn try_receive(&self) -> TryRecv<T> {
        InputPort::try_receive(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchStats {
    /// `histogram[b]` counts dispatched batches of size `b`.
    pub histogram: Vec<u64>,
    pub batches: u64,
    pub items: u64,
}

impl BatchStats {
    pub fn record(&mut self, size: usize) {
        if self.histogram.len() <= size {
            self.histogram.resize(size + 1, 0);
        }
        self.histogram[size] += 1;
        self.batches += 1;
        self.items += size as u64;
    }

    pub fn mean_batch(&self) -> f64 {
        if self.batches == 0 {
            0.0
        } else {
            self.items as f64 / self.batches as f64
        }
    }
}

pub struct BatchSlot<T> {
    policy: SchedulerPolicy,
    pending: Vec<T>,
    first_at: Option<Instant>,
    stats: BatchStats,
}

impl<T> BatchSlot<T> {
    pub fn new(policy: SchedulerPolicy) -> Self {
        Self {
            pending: Vec::with_capacity(policy.batch_max()),
            policy,
            first_at: None,
            stats: BatchStats::default(),
        }
    }

    pub fn stats(&self) -> &BatchStats {
        &self.stats
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn take(&mut self) -> Vec<T> {
        self.first_at = None;
        let batch = std::mem::replace(&mut self.pending, Vec::with_capacity(self.policy.batch_max()));
        self.stats.record(batch.len());
        batch
    }

    fn push(&mut self, item: T) {
        if self.pending.is_empty() {
            self.first_at = Some(Instant::now());
        }
        self.pending.push(item);
    }

    /// Blocks until the next batch is due and returns it (size `1..=batch_max`),
    /// or `None` once the input has ended and nothing is pending.
    pub fn accumulate_batch(&mut self, inbox: &dyn BatchInbox<T>, busy: &BusyFlag) -> Option<Vec<T>> {
        let max = self.policy.batch_max();
        let linger = if self.policy.enabled { self.policy.linger } else { Duration::ZERO };
        let never = || false;
        let freed = || !busy.is_busy();
        loop {
            if self.pending.len() >= max {
                return Some(self.take());
            }
            let (deadline, wake): (Option<Instant>, &dyn Fn() -> bool) = if self.pending.is_empty() {
                (None, &never)
            } else if !busy.is_busy() {
                if linger.is_zero() {
                    while self.pending.len() < max {
                        match inbox.try_receive() {
                            TryRecv::Item(x) => self.push(x),
                            TryRecv::Empty | TryRecv::EndOfStream => break,
                        }
                    }
                    return Some(self.take());
                }
                (self.first_at.map(|t| t + linger), &never)
            } else {
                let deadline = (!linger.is_zero()).then(|| self.first_at.map(|t| t + linger)).flatten();
                (deadline, &freed)
            };
            match inbox.receive_until(deadline, wake) {
                Wait::Item(x) => self.push(x),
                Wait::Woken => {}
                Wait::TimedOut => return Some(self.take()),
                Wait::EndOfStream => {
                    return (!self.pending.is_empty()).then(|| self.take());
                }
            }
        }
    }
}

/// Pairs a batch's outputs with its seq ids, in ascending seq order.
pub fn split_batch_results<O>(outputs: Vec<O>, seq_ids: &[u64]) -> Result<Vec<(u64, O)>> {
    if outputs.len() != seq_ids.len() {
        return Err(Error::backend(
            seq_ids,
            format!("backend returned {} outputs for a batch of {}", outputs.len(), seq_ids.len()),
        ));
    }
    let mut paired: Vec<(u64, O)> = seq_ids.iter().copied().zip(outputs).collect();
    paired.sort_by_key(|(s, _)| *s);
    Ok(paired)
}

/// Worker loop of a batched stage: this thread accumulates, a scoped helper
/// thread runs `execute` on each batch and sends its results downstream in order.
pub fn run_batched<T: Send>(
    input: &InputPort<'_, T>,
    output: &OutputPort<'_, T>,
    policy: SchedulerPolicy,
    execute: &mut (dyn FnMut(Vec<T>) -> Result<Vec<T>> + Send),
) -> Result<BatchStats> {
    let busy = BusyFlag::new();
    let handoff: Channel<Vec<T>> = Channel::new(1);
    let mut slot = BatchSlot::new(policy);

    thread::scope(|s| {
        let (busy, handoff) = (&busy, &handoff);
        let executor = s.spawn(move || -> Result<()> {
            let result = (|| {
                while let Some(batch) = handoff.receive() {
                    let out = execute(batch)?;
                    for item in out {
                        output.send(item)?;
                    }
                    busy.end();
                    input.notify();
                }
                Ok(())
            })();
            if result.is_err() {
                handoff.abort();
                input.abort();
            }
            result
        });

        loop {
            let Some(batch) = slot.accumulate_batch(input, busy) else { break };
            if input.is_aborted() {
                break;
            }
            busy.begin();
            if handoff.send(batch).is_err() {
                busy.end();
                break;
            }
        }
        handoff.close();
        let exec = executor.join().unwrap_or_else(|p| std::panic::resume_unwind(p));
        exec?;
        if input.is_aborted() {
            return Err(Error::ChannelClosed);
        }
        Ok(())
    })?;
    Ok(slot.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn policy(batch_max: u32, linger_us: u64) -> SchedulerPolicy {
        SchedulerPolicy {
            enabled: true,
            batch_max,
            linger: Duration::from_micros(linger_us),
        }
    }

    #[test]
    fn idle_downstream_dispatches_single_item_at_once() {
        let ch = Channel::new(8);
        ch.send(1u64).unwrap();
        let mut slot = BatchSlot::new(policy(8, 0));
        let t = Instant::now();
        assert_eq!(slot.accumulate_batch(&ch, &BusyFlag::new()), Some(vec![1]));
        assert!(t.elapsed() < Duration::from_millis(5));
    }

    #[test]
    fn busy_downstream_accumulates_until_free() {
        let ch = Arc::new(Channel::new(8));
        let busy = Arc::new(BusyFlag::new());
        busy.begin();
        ch.send(0u64).unwrap();
        let feeder = {
            let (ch, busy) = (Arc::clone(&ch), Arc::clone(&busy));
            thread::spawn(move || {
                for i in 1..4 {
                    thread::sleep(Duration::from_millis(3));
                    ch.send(i).unwrap();
                }
                thread::sleep(Duration::from_millis(8));
                busy.end();
                ch.notify_receiver();
            })
        };
        let mut slot = BatchSlot::new(policy(8, 0));
        assert_eq!(slot.accumulate_batch(&*ch, &busy), Some(vec![0, 1, 2, 3]));
        feeder.join().unwrap();
        assert_eq!(slot.stats().histogram[4], 1);
    }

    #[test]
    fn busy_downstream_dispatches_at_batch_max() {
        let ch = Channel::new(16);
        for i in 0..10u64 {
            ch.send(i).unwrap();
        }
        let busy = BusyFlag::new();
        busy.begin();
        let mut slot = BatchSlot::new(policy(8, 0));
        assert_eq!(slot.accumulate_batch(&ch, &busy).unwrap().len(), 8);
    }

    #[test]
    fn linger_seals_batch_while_busy() {
        let ch = Channel::new(4);
        ch.send(7u64).unwrap();
        let busy = BusyFlag::new();
        busy.begin();
        let mut slot = BatchSlot::new(policy(8, 5_000));
        let t = Instant::now();
        assert_eq!(slot.accumulate_batch(&ch, &busy), Some(vec![7]));
        let waited = t.elapsed();
        assert!(waited >= Duration::from_millis(5) && waited < Duration::from_millis(50));
    }

    #[test]
    fn end_of_stream_flushes_partial_batch() {
        let ch = Channel::new(4);
        ch.send(1u64).unwrap();
        ch.send(2).unwrap();
        ch.close();
        let busy = BusyFlag::new();
        busy.begin();
        let mut slot = BatchSlot::new(policy(8, 0));
        assert_eq!(slot.accumulate_batch(&ch, &busy), Some(vec![1, 2]));
        assert_eq!(slot.accumulate_batch(&ch, &busy), None);
    }

    #[test]
    fn disabled_policy_always_dispatches_one() {
        let ch = Channel::new(4);
        for i in 0..3u64 {
            ch.send(i).unwrap();
        }
        ch.close();
        let mut slot = BatchSlot::new(SchedulerPolicy::disabled());
        let busy = BusyFlag::new();
        busy.begin();
        let mut sizes = vec![];
        while let Some(b) = slot.accumulate_batch(&ch, &busy) {
            sizes.push(b.len());
        }
        assert_eq!(sizes, [1, 1, 1]);
    }

    #[test]
    fn split_orders_by_seq_and_checks_count() {
        let out = split_batch_results(vec!['a', 'b', 'c'], &[5, 6, 7]).unwrap();
        assert_eq!(out, [(5, 'a'), (6, 'b'), (7, 'c')]);
        let shuffled = split_batch_results(vec!['x', 'y'], &[9, 8]).unwrap();
        assert_eq!(shuffled, [(8, 'y'), (9, 'x')]);
        let err = split_batch_results(vec![1, 2], &[0, 1, 2]).unwrap_err();
        assert!(matches!(err, Error::Backend { ref seq_ids, .. } if seq_ids == &[0, 1, 2]));
    }
}
