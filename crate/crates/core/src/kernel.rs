//! Event scheduler and simulation clock.
//!
//! Events are ordered by `(fire_at, seq)`, where `seq` is a per-queue
//! insertion counter, so two events scheduled for the same instant fire in
//! the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use thiserror::Error;

/// Horizon used when a scenario does not set one.
pub const DEFAULT_HORIZON: SimTime = SimTime(1200.0);

/// A point on the simulated timeline, in seconds.
///
/// Always finite and non-negative, so it is totally ordered.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input; use [`SimTime::try_from_secs`]
    /// for untrusted values.
    pub fn from_secs(secs: f64) -> Self {
        Self::try_from_secs(secs).expect("SimTime must be finite and non-negative")
    }

    pub fn try_from_secs(secs: f64) -> Option<Self> {
        // Adding +0.0 turns -0.0 into +0.0.
        (secs.is_finite() && secs >= 0.0).then_some(SimTime(secs + 0.0))
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialEq for SimTime {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: f64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;

    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

/// Handle returned by [`Scheduler::schedule`], used for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("cannot schedule event at {at} before current clock {now}")]
    InPast { at: SimTime, now: SimTime },
    #[error("run limit {limit} is before current clock {now}")]
    LimitInPast { limit: SimTime, now: SimTime },
    #[error("dispatch of event #{seq} at {at} failed: {event}: {reason}")]
    Dispatch {
        at: SimTime,
        seq: u64,
        event: String,
        reason: String,
    },
}

struct Entry<E> {
    fire_at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; reverse so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .total_cmp(&self.fire_at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Single-threaded pending-event set plus the simulation clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    pending: HashSet<u64>,
    processed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events still pending (cancelled ones excluded).
    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Number of events dispatched so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<EventHandle, KernelError> {
        if at < self.now {
            return Err(KernelError::InPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            fire_at: at,
            seq,
            event,
        });
        self.pending.insert(seq);
        Ok(EventHandle(seq))
    }

    /// Schedules `event` `delay` seconds from now.
    pub fn schedule_in(&mut self, delay: f64, event: E) -> Result<EventHandle, KernelError> {
        let at = self.now + delay;
        self.schedule(at, event)
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Fire time of the earliest live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.drop_cancelled_head();
        self.heap.peek().map(|e| e.fire_at)
    }

    fn drop_cancelled_head(&mut self) {
        while let Some(head) = self.heap.peek() {
            if self.pending.contains(&head.seq) {
                break;
            }
            self.heap.pop();
        }
    }

    /// Pops the earliest live event if it fires at or before `limit`,
    /// advancing the clock to its fire time.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<(SimTime, u64, E)> {
        self.drop_cancelled_head();
        let head = self.heap.peek()?;
        if head.fire_at > limit {
            return None;
        }
        let entry = self.heap.pop().expect("peeked");
        self.pending.remove(&entry.seq);
        self.now = entry.fire_at;
        self.processed += 1;
        Some((entry.fire_at, entry.seq, entry.event))
    }

    /// Processes every event with `fire_at <= limit` and leaves the clock at
    /// `limit`. The dispatcher may schedule further events through the
    /// scheduler it is handed.
    pub fn run_until<F, DE>(&mut self, limit: SimTime, mut dispatch: F) -> Result<SimTime, KernelError>
    where
        E: fmt::Debug,
        DE: fmt::Display,
        F: FnMut(&mut Scheduler<E>, SimTime, &E) -> Result<(), DE>,
    {
        if limit < self.now {
            return Err(KernelError::LimitInPast {
                limit,
                now: self.now,
            });
        }
        while let Some((at, seq, event)) = self.pop_until(limit) {
            if let Err(err) = dispatch(self, at, &event) {
                return Err(KernelError::Dispatch {
                    at,
                    seq,
                    event: format!("{event:?}"),
                    reason: err.to_string(),
                });
            }
        }
        self.now = limit;
        Ok(self.now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn drain(q: &mut Scheduler<&'static str>, limit: f64) -> Vec<&'static str> {
        let mut seen = Vec::new();
        q.run_until(t(limit), |_, _, e| {
            seen.push(*e);
            Ok::<(), KernelError>(())
        })
        .unwrap();
        seen
    }

    #[test]
    fn pops_in_time_order() {
        let mut q = Scheduler::new();
        q.schedule(t(5.0), "b").unwrap();
        q.schedule(t(3.0), "a").unwrap();
        assert_eq!(drain(&mut q, 10.0), vec!["a", "b"]);
    }

    #[test]
    fn equal_times_keep_insertion_order() {
        let mut q = Scheduler::new();
        q.schedule(t(7.0), "first").unwrap();
        q.schedule(t(7.0), "second").unwrap();
        q.schedule(t(7.0), "third").unwrap();
        assert_eq!(drain(&mut q, 7.0), vec!["first", "second", "third"]);
    }

    #[test]
    fn events_past_horizon_never_fire() {
        let mut q = Scheduler::new();
        q.schedule(t(1200.5), "late").unwrap();
        assert!(drain(&mut q, 1200.0).is_empty());
        assert_eq!(q.now(), t(1200.0));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn cancel_semantics() {
        let mut q = Scheduler::new();
        let h = q.schedule(t(1.0), "x").unwrap();
        assert!(q.cancel(h));
        assert!(!q.cancel(h));
        assert!(drain(&mut q, 2.0).is_empty());

        let h = q.schedule(t(3.0), "y").unwrap();
        assert_eq!(drain(&mut q, 4.0), vec!["y"]);
        assert!(!q.cancel(h));
    }

    #[test]
    fn empty_queue_advances_clock_to_limit() {
        let mut q: Scheduler<&str> = Scheduler::new();
        assert!(drain(&mut q, 1200.0).is_empty());
        assert_eq!(q.now().secs(), 1200.0);
    }

    #[test]
    fn limit_is_inclusive() {
        let mut q = Scheduler::new();
        for (s, name) in [(1.0, "a"), (2.0, "b"), (2.0, "c"), (3.0, "d")] {
            q.schedule(t(s), name).unwrap();
        }
        assert_eq!(drain(&mut q, 2.0), vec!["a", "b", "c"]);
        assert_eq!(q.now().secs(), 2.0);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut q = Scheduler::new();
        q.schedule(t(5.0), "a").unwrap();
        let err = q
            .run_until(t(10.0), |q, _, _| q.schedule(t(1.0), "back").map(|_| ()))
            .unwrap_err();
        match err {
            KernelError::Dispatch { at, event, .. } => {
                assert_eq!(at, t(5.0));
                assert!(event.contains('a'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn run_limit_before_clock_is_rejected() {
        let mut q: Scheduler<()> = Scheduler::new();
        q.run_until(t(10.0), |_, _, _| Ok::<(), KernelError>(())).unwrap();
        assert!(matches!(
            q.run_until(t(5.0), |_, _, _| Ok::<(), KernelError>(())),
            Err(KernelError::LimitInPast { .. })
        ));
    }

    #[test]
    fn dispatcher_can_chain_events() {
        let mut q = Scheduler::new();
        q.schedule(t(0.0), 0u32).unwrap();
        let mut times = Vec::new();
        q.run_until(t(10.0), |q, at, n| {
            times.push(at.secs());
            if *n < 4 {
                q.schedule_in(2.5, n + 1)?;
            }
            Ok::<(), KernelError>(())
        })
        .unwrap();
        assert_eq!(times, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
    }

    proptest::proptest! {
        #[test]
        fn processed_times_are_non_decreasing(times in proptest::collection::vec(0.0f64..100.0, 1..200)) {
            let mut q = Scheduler::new();
            for (i, s) in times.iter().enumerate() {
                q.schedule(t(*s), i).unwrap();
            }
            let mut seen = Vec::new();
            q.run_until(t(50.0), |_, at, i| { seen.push((at.secs(), *i)); Ok::<(), KernelError>(()) }).unwrap();
            for w in seen.windows(2) {
                proptest::prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
            }
            let expected = times.iter().filter(|s| **s <= 50.0).count();
            proptest::prop_assert_eq!(seen.len(), expected);
        }
    }
}
