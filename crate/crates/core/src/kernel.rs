//! Discrete-event kernel: fixed-point clock, `(time, seq)`-ordered event
//! queue and labelled random streams.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};
use thiserror::Error;

const MICROS_PER_SEC: u64 = 1_000_000;

/// Simulated time in whole microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SEC)
    }

    /// Rounds to the nearest microsecond; negative or NaN input clamps to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime(0);
        }
        SimTime((s * MICROS_PER_SEC as f64).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Parses the `%.6f` rendering produced by `Display` (and any shorter
    /// fractional part). Exactly representable, no float round trip.
    pub fn parse_secs(s: &str) -> Option<SimTime> {
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty() || frac.len() > 6 || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let secs: u64 = whole.parse().ok()?;
        let mut micros = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        secs.checked_mul(MICROS_PER_SEC)?.checked_add(micros).map(SimTime)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("invalid uniform interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Handle returned by [`Scheduler::schedule`], usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ticket(u64);

/// An event popped from the queue.
#[derive(Debug)]
pub struct Scheduled<E> {
    pub at: SimTime,
    pub seq: u64,
    pub payload: E,
}

struct Entry<E> {
    at: SimTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Event queue with a virtual clock. Events at equal times are dispatched in
/// the order they were scheduled.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: HashSet<u64>,
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
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of queued events, including cancelled ones not yet discarded.
    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, at: SimTime, payload: E) -> Result<Ticket, KernelError> {
        if at < self.now {
            return Err(KernelError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Entry { at, seq, payload }));
        Ok(Ticket(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> Ticket {
        let at = self.now + delay;
        // Cannot be in the past.
        self.schedule(at, payload).expect("relative schedule")
    }

    pub fn cancel(&mut self, ticket: Ticket) {
        self.cancelled.insert(ticket.0);
    }

    /// Pops the next live event with `at <= end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Scheduled<E>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.at > end {
                return None;
            }
            let Reverse(entry) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.now = entry.at;
            return Some(Scheduled {
                at: entry.at,
                seq: entry.seq,
                payload: entry.payload,
            });
        }
    }

    /// Moves the clock to `end` once the queue holds nothing due before it.
    pub fn advance_to(&mut self, end: SimTime) {
        if end > self.now {
            self.now = end;
        }
    }

    /// Dispatches every event due at or before `end` and leaves the clock at
    /// `end`. Returns the number of dispatched events.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Scheduled<E>),
    {
        let mut count = 0;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev);
            count += 1;
        }
        self.advance_to(end);
        count
    }
}

/// Purpose of a random stream; each purpose draws from its own sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Mobility,
    Traffic,
    MediumJitter,
    ProtocolJitter,
}

impl StreamLabel {
    fn salt(self) -> u64 {
        match self {
            StreamLabel::Mobility => 1,
            StreamLabel::Traffic => 2,
            StreamLabel::MediumJitter => 3,
            StreamLabel::ProtocolJitter => 4,
        }
    }
}

/// Reproducible random stream: xoshiro256** seeded through SplitMix64 from
/// `root_seed` and the stream label.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: Xoshiro256StarStar,
}

impl RngStream {
    pub fn new(root_seed: u64, label: StreamLabel) -> Self {
        let seed = root_seed ^ label.salt().wrapping_mul(0x9E37_79B9_7F4A_7C15);
        RngStream {
            rng: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, KernelError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(KernelError::InvalidInterval { lo, hi });
        }
        if lo == hi {
            return Ok(lo);
        }
        Ok((lo + (hi - lo) * self.unit()).min(hi))
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Uniform duration in `[0, max]`, in whole microseconds.
    pub fn jitter(&mut self, max: SimTime) -> SimTime {
        if max == SimTime::ZERO {
            return SimTime::ZERO;
        }
        SimTime::from_micros(self.below(max.as_micros() + 1))
    }
}
