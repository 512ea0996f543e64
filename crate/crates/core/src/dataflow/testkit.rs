//! Minimal operators over sequence-numbered tokens, for exercising the
//! engine and the scheduler without images or maps.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::clock::{monotonic_ns, sleep_until};
use crate::error::{Error, Result};

use super::graph::{Emit, SinkOp, SourceOp, TransformOp};
use super::Traced;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub seq_id: u64,
    pub ingest_ns: u64,
}

impl Traced for Token {
    fn seq_id(&self) -> u64 {
        self.seq_id
    }

    fn ingest_ns(&self) -> u64 {
        self.ingest_ns
    }
}

/// Emits `count` tokens, each taking `period` to produce.
pub struct TokenSource {
    next: u64,
    count: u64,
    period: Duration,
    last: Option<Instant>,
}

impl TokenSource {
    pub fn new(count: u64, period: Duration) -> Self {
        Self {
            next: 0,
            count,
            period,
            last: None,
        }
    }
}

impl SourceOp<Token> for TokenSource {
    fn next_item(&mut self) -> Result<Option<Token>> {
        if self.next >= self.count {
            return Ok(None);
        }
        if !self.period.is_zero() {
            let from = self.last.unwrap_or_else(Instant::now);
            sleep_until(from + self.period);
            self.last = Some(Instant::now());
        }
        let t = Token {
            seq_id: self.next,
            ingest_ns: monotonic_ns(),
        };
        self.next += 1;
        Ok(Some(t))
    }
}

/// Passes tokens through after `delay` of (sleeping) service time.
pub struct Delay(pub Duration);

impl TransformOp<Token> for Delay {
    fn process(&mut self, item: Token, emit: &mut Emit<'_, Token>) -> Result<()> {
        if !self.0.is_zero() {
            std::thread::sleep(self.0);
        }
        emit(item)
    }
}

/// Fails (or panics) on a given seq id.
pub struct FailAt {
    pub seq_id: u64,
    pub panic: bool,
}

impl TransformOp<Token> for FailAt {
    fn process(&mut self, item: Token, emit: &mut Emit<'_, Token>) -> Result<()> {
        if item.seq_id == self.seq_id {
            if self.panic {
                panic!("injected panic at {}", item.seq_id);
            }
            return Err(Error::Contract(format!("injected failure at {}", item.seq_id)));
        }
        emit(item)
    }
}

/// Records the seq ids it receives.
#[derive(Clone, Default)]
pub struct CollectSink {
    pub seen: Arc<Mutex<Vec<u64>>>,
}

impl CollectSink {
    pub fn seq_ids(&self) -> Vec<u64> {
        self.seen.lock().unwrap().clone()
    }
}

impl SinkOp<Token> for CollectSink {
    fn consume(&mut self, item: Token) -> Result<()> {
        self.seen.lock().unwrap().push(item.seq_id);
        Ok(())
    }
}
