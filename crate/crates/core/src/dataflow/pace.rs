use std::time::{Duration, Instant};

use crate::clock::ServiceTimer;
use crate::error::Result;

use super::graph::{Emit, Extras, SinkOp, TransformOp};

/// Holds each result of the wrapped transform back until `min` has passed
/// since its input arrived. Models a stage with a known service time; wake-up
/// lateness is evened out by a [`ServiceTimer`].
pub struct Paced<T> {
    inner: Box<dyn TransformOp<T>>,
    min: Duration,
    timer: ServiceTimer,
}

impl<T: Send> Paced<T> {
    pub fn new(inner: impl TransformOp<T> + 'static, min: Duration) -> Self {
        Self {
            inner: Box::new(inner),
            min,
            timer: ServiceTimer::new(min),
        }
    }
}

impl<T: Send> TransformOp<T> for Paced<T> {
    fn process(&mut self, item: T, emit: &mut Emit<'_, T>) -> Result<()> {
        let start = Instant::now();
        let mut held = Vec::with_capacity(1);
        self.inner.process(item, &mut |x| {
            held.push(x);
            Ok(())
        })?;
        self.timer.sleep_until(start + self.min);
        held.into_iter().try_for_each(emit)
    }

    fn finish(&mut self, emit: &mut Emit<'_, T>) -> Result<()> {
        self.inner.finish(emit)
    }

    fn extras(&self) -> Extras {
        self.inner.extras()
    }
}

/// Sink counterpart of [`Paced`].
pub struct PacedSink<T> {
    inner: Box<dyn SinkOp<T>>,
    min: Duration,
    timer: ServiceTimer,
}

impl<T> PacedSink<T> {
    pub fn new(inner: impl SinkOp<T> + 'static, min: Duration) -> Self {
        Self {
            inner: Box::new(inner),
            min,
            timer: ServiceTimer::new(min),
        }
    }
}

impl<T> SinkOp<T> for PacedSink<T> {
    fn consume(&mut self, item: T) -> Result<()> {
        let start = Instant::now();
        self.inner.consume(item)?;
        self.timer.sleep_until(start + self.min);
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.inner.finish()
    }

    fn extras(&self) -> Extras {
        self.inner.extras()
    }
}
