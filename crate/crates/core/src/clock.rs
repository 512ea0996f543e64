use std::sync::OnceLock;
use std::time::{Duration, Instant};

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

/// Nanoseconds on a process-wide monotonic clock.
pub fn monotonic_ns() -> u64 {
    Instant::now().duration_since(epoch()).as_nanos() as u64
}

/// Sleep until `deadline`; returns immediately if it has passed.
pub fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        std::thread::sleep(deadline - now);
    }
}

/// Deadline sleeper for stages that emulate a fixed service time.
///
/// The OS wakes a sleeping thread late by a variable amount (often a
/// millisecond on a busy single core). The timer remembers how late each
/// wake-up was and shortens the following sleeps by that much, so the mean
/// time per call converges on the requested service time. Carried lateness is
/// capped at `max_debt`, which bounds how many calls can run early after a
/// long stall.
#[derive(Debug, Clone)]
pub struct ServiceTimer {
    debt: Duration,
    max_debt: Duration,
}

impl ServiceTimer {
    pub fn new(max_debt: Duration) -> Self {
        Self {
            debt: Duration::ZERO,
            max_debt,
        }
    }

    /// Lateness carried into the next sleep.
    pub fn debt(&self) -> Duration {
        self.debt
    }

    /// Sleep until `deadline`, less any carried lateness. Returns at once if
    /// the deadline has already passed; time spent working past a deadline
    /// is not lateness and is never repaid.
    pub fn sleep_until(&mut self, deadline: Instant) {
        let now = Instant::now();
        if deadline <= now {
            return;
        }
        let credit = self.debt.min(deadline - now);
        self.debt -= credit;
        let target = deadline - credit;
        if target > now {
            std::thread::sleep(target - now);
            let late = Instant::now().saturating_duration_since(target);
            self.debt = (self.debt + late).min(self.max_debt);
        }
    }
}

pub fn micros(us: u64) -> Duration {
    Duration::from_micros(us)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passed_deadline_returns_immediately_without_debt() {
        let mut t = ServiceTimer::new(Duration::from_millis(5));
        let past = Instant::now();
        std::thread::sleep(Duration::from_millis(2));
        let before = Instant::now();
        t.sleep_until(past);
        assert!(before.elapsed() < Duration::from_millis(1));
        assert_eq!(t.debt(), Duration::ZERO);
    }

    #[test]
    fn mean_service_time_tracks_the_request() {
        let pad = Duration::from_millis(2);
        let mut t = ServiceTimer::new(pad);
        let begin = Instant::now();
        for _ in 0..100 {
            let start = Instant::now();
            t.sleep_until(start + pad);
        }
        let total = begin.elapsed();
        assert!(total >= Duration::from_millis(190), "{total:?}");
        assert!(total <= Duration::from_millis(215), "{total:?}");
        assert!(t.debt() <= pad);
    }
}
