//! Time and identifier sources. Both are injectable so whole runs can be replayed.

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, TimeZone, Utc};
use ulid::Ulid;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock that advances a fixed step on every read.
#[derive(Debug)]
pub struct SteppingClock {
    millis: AtomicI64,
    step_ms: i64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            millis: AtomicI64::new(start.timestamp_millis()),
            step_ms,
        }
    }

    /// 2026-01-01T00:00:00Z, one second per tick.
    pub fn epoch() -> Self {
        Self::new(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(), 1_000)
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let ms = self.millis.fetch_add(self.step_ms, Ordering::SeqCst);
        Utc.timestamp_millis_opt(ms).single().unwrap_or_else(Utc::now)
    }
}

/// Sortable opaque ids (`<prefix>_<ULID>`), monotonic within one generator.
#[derive(Debug)]
pub struct IdGen {
    entropy: u128,
    counter: AtomicU64,
    last_ms: Mutex<u64>,
}

impl IdGen {
    pub fn random() -> Self {
        Self::with_entropy(Ulid::generate().random() & !(u64::MAX as u128))
    }

    /// Fully deterministic ids for a given clock sequence.
    pub fn seeded(seed: u64) -> Self {
        Self::with_entropy((seed as u128) << 64)
    }

    fn with_entropy(entropy: u128) -> Self {
        Self {
            entropy,
            counter: AtomicU64::new(0),
            last_ms: Mutex::new(0),
        }
    }

    /// Skip `n` counter values, e.g. after replaying a log of `n` events.
    pub fn advance(&self, n: u64) {
        self.counter.fetch_add(n, Ordering::SeqCst);
    }

    pub fn next(&self, prefix: &str, at: DateTime<Utc>) -> String {
        let mut last = self.last_ms.lock().expect("id generator poisoned");
        let ms = (at.timestamp_millis().max(0) as u64).max(*last);
        *last = ms;
        let count = self.counter.fetch_add(1, Ordering::SeqCst) as u128;
        let random = (self.entropy | count) & ((1u128 << 80) - 1);
        format!("{prefix}_{}", Ulid::from_parts(ms, random))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_sort_in_creation_order() {
        let clock = SteppingClock::epoch();
        let ids = IdGen::seeded(7);
        let a = ids.next("art", clock.now());
        let b = ids.next("art", clock.now());
        assert!(a < b);
        let again = IdGen::seeded(7);
        let clock2 = SteppingClock::epoch();
        assert_eq!(again.next("art", clock2.now()), a);
    }

    #[test]
    fn ids_stay_monotonic_when_clock_goes_backwards() {
        let ids = IdGen::seeded(1);
        let late = Utc.with_ymd_and_hms(2026, 5, 1, 0, 0, 0).unwrap();
        let early = Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap();
        let a = ids.next("x", late);
        let b = ids.next("x", early);
        assert!(a < b);
    }
}
