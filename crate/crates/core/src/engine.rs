// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event core.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is a monotone insertion
//! counter, so two events scheduled for the same instant are dispatched in the
//! order they were scheduled. The engine is generic over the payload type and
//! knows nothing about nodes or protocols.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nodes::NodeId;

/// Simulated time in integer milliseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn after(self, delay_ms: u64) -> SimTime {
        SimTime(self.0.saturating_add(delay_ms))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Handle returned by [`Engine::schedule`]; equal to the event's sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Clone, Debug)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

impl<P> Event<P> {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

/// One dispatched event as recorded in the optional trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
}

/// Returned by a dispatch handler to keep going or stop the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    /// Stop after this event; everything still queued is discarded.
    Stop,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("negative delay {0}ms")]
    NegativeDelay(i64),
    #[error("cannot move clock backwards from {now} to {target}")]
    ClockBackwards { now: SimTime, target: SimTime },
    #[error("cannot advance to {target}: event pending at {pending}")]
    PendingEvent { target: SimTime, pending: SimTime },
    #[error("engine finalized")]
    Finalized,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    pub scheduled: u64,
    pub dispatched: u64,
    pub discarded: u64,
}

struct Queued<P> {
    fire_at: SimTime,
    seq: u64,
    target: NodeId,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl<P> Queued<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.fire_at, self.seq)
    }
}

pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    queued: HashSet<u64>,
    cancelled: HashSet<u64>,
    stats: EngineStats,
    trace: Option<Vec<TraceEntry>>,
    finalized: bool,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            queued: HashSet::new(),
            cancelled: HashSet::new(),
            stats: EngineStats::default(),
            trace: None,
            finalized: false,
        }
    }

    /// Records every dispatched event's `(fire_at, seq, target)`.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// Number of live (not cancelled) queued events.
    pub fn pending(&self) -> usize {
        self.queued.len()
    }

    pub fn schedule(
        &mut self,
        delay_ms: i64,
        target: NodeId,
        payload: P,
    ) -> Result<EventId, EngineError> {
        if delay_ms < 0 {
            return Err(EngineError::NegativeDelay(delay_ms));
        }
        self.schedule_after(delay_ms as u64, target, payload)
    }

    /// Same as [`Engine::schedule`] for delays that are unsigned by construction.
    pub fn schedule_after(
        &mut self,
        delay_ms: u64,
        target: NodeId,
        payload: P,
    ) -> Result<EventId, EngineError> {
        if self.finalized {
            return Err(EngineError::Finalized);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queued.insert(seq);
        self.queue.push(Reverse(Queued {
            fire_at: self.now.after(delay_ms),
            seq,
            target,
            payload,
        }));
        self.stats.scheduled += 1;
        Ok(EventId(seq))
    }

    /// Cancels a queued event. Returns false if it was already dispatched,
    /// discarded or cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if !self.queued.remove(&id.0) {
            return false;
        }
        self.cancelled.insert(id.0);
        self.stats.discarded += 1;
        true
    }

    fn drop_cancelled_head(&mut self) {
        while let Some(Reverse(head)) = self.queue.peek() {
            if self.cancelled.remove(&head.seq) {
                self.queue.pop();
            } else {
                break;
            }
        }
    }

    /// Fire time of the next live event.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.drop_cancelled_head();
        self.queue.peek().map(|Reverse(q)| q.fire_at)
    }

    /// Pops the next live event and moves the clock to its fire time.
    pub fn pop(&mut self) -> Option<Event<P>> {
        self.drop_cancelled_head();
        let Reverse(q) = self.queue.pop()?;
        self.queued.remove(&q.seq);
        debug_assert!(q.fire_at >= self.now);
        self.now = q.fire_at;
        self.stats.dispatched += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                fire_at: q.fire_at,
                seq: q.seq,
                target: q.target,
            });
        }
        Some(Event {
            fire_at: q.fire_at,
            seq: q.seq,
            target: q.target,
            payload: q.payload,
        })
    }

    /// Drops every queued event, counting live ones as discarded.
    pub fn discard_pending(&mut self) -> u64 {
        let live = self.pending() as u64;
        self.queue.clear();
        self.queued.clear();
        self.cancelled.clear();
        self.stats.discarded += live;
        live
    }

    /// Dispatches events in `(fire_at, seq)` order until the queue is empty
    /// or the handler returns [`Flow::Stop`]. Returns the final clock value.
    pub fn run_until_idle<H>(&mut self, handler: H) -> SimTime
    where
        H: FnMut(&mut Self, Event<P>) -> Flow,
    {
        self.run_before(None, handler)
    }

    /// Like [`Engine::run_until_idle`], but events firing at or after
    /// `horizon` are discarded instead of dispatched.
    pub fn run_until_horizon<H>(&mut self, horizon: SimTime, handler: H) -> SimTime
    where
        H: FnMut(&mut Self, Event<P>) -> Flow,
    {
        self.run_before(Some(horizon), handler)
    }

    fn run_before<H>(&mut self, horizon: Option<SimTime>, mut handler: H) -> SimTime
    where
        H: FnMut(&mut Self, Event<P>) -> Flow,
    {
        loop {
            let Some(next) = self.peek_time() else { break };
            if horizon.is_some_and(|h| next >= h) {
                self.discard_pending();
                break;
            }
            let event = self.pop().expect("peeked event");
            if handler(self, event) == Flow::Stop {
                self.discard_pending();
                break;
            }
        }
        self.now
    }

    /// Moves the clock forward to `t` without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) -> Result<SimTime, EngineError> {
        if t < self.now {
            return Err(EngineError::ClockBackwards {
                now: self.now,
                target: t,
            });
        }
        if let Some(pending) = self.peek_time() {
            if pending < t {
                return Err(EngineError::PendingEvent { target: t, pending });
            }
        }
        self.now = t;
        Ok(t)
    }

    /// Discards anything still queued and rejects further scheduling.
    pub fn finalize(&mut self) -> EngineStats {
        self.discard_pending();
        self.finalized = true;
        self.stats
    }
}
