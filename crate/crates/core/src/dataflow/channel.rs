//! Bounded single-producer/single-consumer FIFO used between operators.
//!
//! Both sides park on condition variables: a sender blocks while the queue is
//! full, a receiver while it is empty and open. End-of-stream is channel
//! state, not an in-band item.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Instant;

use serde::Serialize;

/// Returned by [`Channel::send`] on a closed or aborted channel, carrying the item back.
#[derive(PartialEq, Eq)]
pub struct ChannelClosed<T>(pub T);

impl<T> fmt::Debug for ChannelClosed<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ChannelClosed(..)")
    }
}

impl<T> fmt::Display for ChannelClosed<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("send on closed channel")
    }
}

impl<T> std::error::Error for ChannelClosed<T> {}

#[derive(Debug, PartialEq, Eq)]
pub enum TryRecv<T> {
    Item(T),
    Empty,
    EndOfStream,
}

/// Outcome of [`Channel::receive_until`].
#[derive(Debug, PartialEq, Eq)]
pub enum Wait<T> {
    Item(T),
    /// The caller's wake condition became true.
    Woken,
    TimedOut,
    EndOfStream,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChannelStats {
    pub capacity: usize,
    pub sent: u64,
    pub received: u64,
    pub max_depth: usize,
    /// `depth_histogram[d]` counts enqueues that left `d` items queued.
    pub depth_histogram: Vec<u64>,
    pub send_parks: u64,
    pub receive_parks: u64,
    /// Items still queued when the stats were taken.
    pub residual: usize,
}

struct State<T> {
    queue: VecDeque<T>,
    closed: bool,
    aborted: bool,
    stats: ChannelStats,
}

pub struct Channel<T> {
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
    capacity: usize,
}

impl<T> Channel<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "channel capacity must be >= 1");
        Self {
            state: Mutex::new(State {
                queue: VecDeque::with_capacity(capacity),
                closed: false,
                aborted: false,
                stats: ChannelStats {
                    capacity,
                    depth_histogram: vec![0; capacity + 1],
                    ..Default::default()
                },
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn lock(&self) -> MutexGuard<'_, State<T>> {
        // a panicking operator must not wedge its neighbours
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Enqueue, blocking while the channel is full.
    pub fn send(&self, item: T) -> Result<(), ChannelClosed<T>> {
        let mut st = self.lock();
        loop {
            if st.closed || st.aborted {
                return Err(ChannelClosed(item));
            }
            if st.queue.len() < self.capacity {
                break;
            }
            st.stats.send_parks += 1;
            st = self.not_full.wait(st).unwrap_or_else(|p| p.into_inner());
        }
        st.queue.push_back(item);
        let depth = st.queue.len();
        st.stats.sent += 1;
        st.stats.depth_histogram[depth] += 1;
        st.stats.max_depth = st.stats.max_depth.max(depth);
        drop(st);
        self.not_empty.notify_one();
        Ok(())
    }

    /// Next item in FIFO order, or `None` once the channel is closed and
    /// drained (or aborted). Parks while empty.
    pub fn receive(&self) -> Option<T> {
        let mut st = self.lock();
        loop {
            if st.aborted {
                return None;
            }
            if let Some(item) = self.pop(&mut st) {
                return Some(item);
            }
            if st.closed {
                return None;
            }
            st.stats.receive_parks += 1;
            st = self.not_empty.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    pub fn try_receive(&self) -> TryRecv<T> {
        let mut st = self.lock();
        if st.aborted {
            return TryRecv::EndOfStream;
        }
        match self.pop(&mut st) {
            Some(item) => TryRecv::Item(item),
            None if st.closed => TryRecv::EndOfStream,
            None => TryRecv::Empty,
        }
    }

    /// Like [`receive`](Self::receive), but also returns when `wake()` holds
    /// or `deadline` passes. `wake` is evaluated under the channel lock;
    /// whoever makes it true must call [`notify_receiver`](Self::notify_receiver)
    /// afterwards.
    pub fn receive_until(&self, deadline: Option<Instant>, wake: &dyn Fn() -> bool) -> Wait<T> {
        let mut st = self.lock();
        loop {
            if st.aborted {
                return Wait::EndOfStream;
            }
            if let Some(item) = self.pop(&mut st) {
                return Wait::Item(item);
            }
            if st.closed {
                return Wait::EndOfStream;
            }
            if wake() {
                return Wait::Woken;
            }
            st.stats.receive_parks += 1;
            match deadline {
                None => st = self.not_empty.wait(st).unwrap_or_else(|p| p.into_inner()),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Wait::TimedOut;
                    }
                    st = self
                        .not_empty
                        .wait_timeout(st, d - now)
                        .unwrap_or_else(|p| p.into_inner())
                        .0;
                }
            }
        }
    }

    fn pop(&self, st: &mut State<T>) -> Option<T> {
        let item = st.queue.pop_front()?;
        st.stats.received += 1;
        self.not_full.notify_one();
        Some(item)
    }

    /// Wake a receiver parked in [`receive_until`](Self::receive_until) so it
    /// re-evaluates its wake condition.
    pub fn notify_receiver(&self) {
        let _guard = self.lock();
        self.not_empty.notify_all();
    }

    /// Producer is done: receivers drain what is queued, then see end-of-stream.
    pub fn close(&self) {
        self.lock().closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    /// Tear down: both sides return immediately, queued items are abandoned.
    pub fn abort(&self) {
        self.lock().aborted = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn is_aborted(&self) -> bool {
        self.lock().aborted
    }

    pub fn is_closed(&self) -> bool {
        let st = self.lock();
        st.closed || st.aborted
    }

    pub fn len(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> ChannelStats {
        let st = self.lock();
        let mut s = st.stats.clone();
        s.residual = st.queue.len();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;
    use std::time::Duration;

    #[test]
    fn send_into_empty_capacity_one_returns_immediately() {
        let ch = Channel::new(1);
        ch.send(1).unwrap();
        assert_eq!(ch.len(), 1);
    }

    #[test]
    fn send_on_full_blocks_until_receive() {
        let ch = Arc::new(Channel::new(1));
        ch.send(1).unwrap();
        let consumer = {
            let ch = Arc::clone(&ch);
            thread::spawn(move || {
                thread::sleep(Duration::from_millis(50));
                ch.receive()
            })
        };
        let t0 = Instant::now();
        ch.send(2).unwrap();
        assert!(t0.elapsed() >= Duration::from_millis(40));
        assert_eq!(consumer.join().unwrap(), Some(1));
        assert_eq!(ch.receive(), Some(2));
        assert!(ch.stats().send_parks >= 1);
    }

    #[test]
    fn closed_empty_is_end_of_stream() {
        let ch: Channel<u8> = Channel::new(2);
        ch.close();
        assert_eq!(ch.receive(), None);
        assert_eq!(ch.send(1), Err(ChannelClosed(1)));
    }

    #[test]
    fn queued_item_survives_close() {
        let ch = Channel::new(2);
        ch.send(9).unwrap();
        ch.close();
        assert_eq!(ch.receive(), Some(9));
        assert_eq!(ch.receive(), None);
    }

    #[test]
    fn abort_abandons_queue() {
        let ch = Channel::new(2);
        ch.send(9).unwrap();
        ch.abort();
        assert_eq!(ch.receive(), None);
        assert_eq!(ch.stats().residual, 1);
    }

    #[test]
    fn fifo_order_over_many_items() {
        let ch = Arc::new(Channel::new(4));
        let producer = {
            let ch = Arc::clone(&ch);
            thread::spawn(move || {
                for i in 0..100_000u64 {
                    ch.send(i).unwrap();
                }
                ch.close();
            })
        };
        let mut expected = 0u64;
        while let Some(v) = ch.receive() {
            assert_eq!(v, expected);
            expected += 1;
        }
        producer.join().unwrap();
        assert_eq!(expected, 100_000);
        let s = ch.stats();
        assert!(s.max_depth <= 4);
        assert_eq!(s.sent, s.received);
    }

    #[test]
    fn receive_until_wakes_on_condition() {
        use std::sync::atomic::{AtomicBool, Ordering};
        let ch: Arc<Channel<u8>> = Arc::new(Channel::new(1));
        let flag = Arc::new(AtomicBool::new(false));
        let setter = {
            let (ch, flag) = (Arc::clone(&ch), Arc::clone(&flag));
            thread::spawn(move || {
                thread::sleep(Duration::from_millis(20));
                flag.store(true, Ordering::SeqCst);
                ch.notify_receiver();
            })
        };
        let f = Arc::clone(&flag);
        assert_eq!(ch.receive_until(None, &move || f.load(Ordering::SeqCst)), Wait::Woken);
        setter.join().unwrap();
        let soon = Instant::now() + Duration::from_millis(5);
        assert_eq!(ch.receive_until(Some(soon), &|| false), Wait::TimedOut);
    }
}
