//! Time sources and deferred timers.
//!
//! The engine never reads the system clock directly. Production servers use
//! [`SystemClock`]; tests and the worker simulator use [`VirtualClock`], which
//! only moves when told to, so every timing decision is reproducible.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::Millis;

pub trait Clock: Send + Sync {
    /// Milliseconds since the clock's origin. Never decreases.
    fn now_ms(&self) -> Millis;

    /// Unix time (ms) of the clock's origin, stored once per session so that
    /// session-relative timestamps can be mapped back to wall time.
    fn wall_anchor_unix_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
    anchor: u64,
}

impl SystemClock {
    pub fn new() -> Self {
        let anchor = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            origin: Instant::now(),
            anchor,
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        self.origin.elapsed().as_millis() as Millis
    }

    fn wall_anchor_unix_ms(&self) -> u64 {
        self.anchor
    }
}

/// A clock that advances only through explicit calls.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
    anchor: u64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_anchor(anchor_unix_ms: u64) -> Self {
        Self {
            now: AtomicU64::new(0),
            anchor: anchor_unix_ms,
        }
    }

    pub fn advance(&self, by: Millis) -> Millis {
        self.now.fetch_add(by, Ordering::SeqCst) + by
    }

    /// Moves the clock forward to `t`. Earlier targets are ignored.
    pub fn advance_to(&self, t: Millis) -> Millis {
        self.now.fetch_max(t, Ordering::SeqCst).max(t)
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> Millis {
        self.now.load(Ordering::SeqCst)
    }

    fn wall_anchor_unix_ms(&self) -> u64 {
        self.anchor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId {
    at: Millis,
    seq: u64,
}

impl TimerId {
    pub fn due_at(&self) -> Millis {
        self.at
    }
}

/// Deferred callbacks keyed by absolute due time. Timers due at the same
/// instant fire in scheduling order.
#[derive(Debug)]
pub struct TimerQueue<T> {
    pending: BTreeMap<TimerId, T>,
    next_seq: u64,
}

impl<T> Default for TimerQueue<T> {
    fn default() -> Self {
        Self {
            pending: BTreeMap::new(),
            next_seq: 0,
        }
    }
}

impl<T> TimerQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, at: Millis, item: T) -> TimerId {
        let id = TimerId {
            at,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.pending.insert(id, item);
        id
    }

    pub fn cancel(&mut self, id: TimerId) -> Option<T> {
        self.pending.remove(&id)
    }

    pub fn next_due(&self) -> Option<Millis> {
        self.pending.keys().next().map(|id| id.at)
    }

    /// Removes and returns every timer due at or before `now`.
    pub fn pop_due(&mut self, now: Millis) -> Vec<(Millis, T)> {
        let later = self.pending.split_off(&TimerId {
            at: now.saturating_add(1),
            seq: 0,
        });
        let due = std::mem::replace(&mut self.pending, later);
        due.into_iter().map(|(id, item)| (id.at, item)).collect()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}
