//! Adaptive batching in front of the inference stage.
//!
//! The stage runs as two threads: an accumulator that pulls items off the
//! input edge into a [`BatchSlot`], and an executor that runs batches. While
//! the executor is idle, whatever has arrived is dispatched at once; while it
//! is busy, the slot keeps collecting until the executor frees up, `batch_max`
//! is reached, or the linger timer runs out.
//!
//! Idle workers never spin. Every wait is a condition-variable park on a
//! channel, and the executor's "no longer busy" transition wakes the
//! accumulator through [`InputPort::notify`].

mod batch;

pub use batch::{
    run_batched, split_batch_results, BatchInbox, BatchSlot, BatchStats, BusyFlag, SchedulerPolicy,
};
