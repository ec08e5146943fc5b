use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    OrderArrival,
    AmrArrivedAtDock,
    AmrArrivedAtLane,
    AmrReleased,
    AmrArrivedAtStation,
    ChargeComplete,
    ChargeInterrupted,
    DecisionRequest,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::OrderArrival => "OrderArrival",
            EventKind::AmrArrivedAtDock => "AMRArrivedAtDock",
            EventKind::AmrArrivedAtLane => "AMRArrivedAtLane",
            EventKind::AmrReleased => "AMRReleased",
            EventKind::AmrArrivedAtStation => "AMRArrivedAtStation",
            EventKind::ChargeComplete => "ChargeComplete",
            EventKind::ChargeInterrupted => "ChargeInterrupted",
            EventKind::DecisionRequest => "DecisionRequest",
        }
    }

    pub fn from_name(s: &str) -> Option<EventKind> {
        use EventKind::*;
        [
            OrderArrival,
            AmrArrivedAtDock,
            AmrArrivedAtLane,
            AmrReleased,
            AmrArrivedAtStation,
            ChargeComplete,
            ChargeInterrupted,
            DecisionRequest,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ids of the entities an event refers to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Payload {
    pub order: Option<u64>,
    pub amr: Option<usize>,
    pub station: Option<usize>,
    /// Charging session, for charge events.
    pub session: u64,
}

impl Payload {
    pub fn order(id: u64) -> Self {
        Self {
            order: Some(id),
            ..Self::default()
        }
    }

    pub fn amr_order(amr: usize, order: u64) -> Self {
        Self {
            order: Some(order),
            amr: Some(amr),
            ..Self::default()
        }
    }

    pub fn amr(amr: usize) -> Self {
        Self {
            amr: Some(amr),
            ..Self::default()
        }
    }

    pub fn charge(amr: usize, station: usize, session: u64) -> Self {
        Self {
            amr: Some(amr),
            station: Some(station),
            session,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Payload,
}

// Min-heap order on (time, seq).
impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Future events ordered by time, ties in insertion order.
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    clock: f64,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts an event; returns its sequence number.
    pub fn schedule(&mut self, time: f64, kind: EventKind, payload: Payload) -> Result<u64> {
        if !(time >= self.clock) {
            return Err(Error::Causality {
                at: time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent {
            time,
            seq,
            kind,
            payload,
        });
        Ok(seq)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<SimEvent> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.time >= self.clock);
        self.clock = ev.time;
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    #[cfg(test)]
    pub(crate) fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn earlier_time_first() {
        let mut q = EventQueue::new();
        q.schedule(5.0, EventKind::OrderArrival, Payload::order(0))
            .unwrap();
        q.schedule(3.0, EventKind::OrderArrival, Payload::order(1))
            .unwrap();
        assert_eq!(q.pop().unwrap().time, 3.0);
        assert_eq!(q.clock(), 3.0);
        assert_eq!(q.pop().unwrap().time, 5.0);
        assert!(q.pop().is_none());
    }

    #[test]
    fn ties_in_insertion_order() {
        let mut q = EventQueue::new();
        let a = q
            .schedule(7.0, EventKind::ChargeComplete, Payload::default())
            .unwrap();
        let b = q
            .schedule(7.0, EventKind::OrderArrival, Payload::default())
            .unwrap();
        assert!(a < b);
        assert_eq!(q.pop().unwrap().seq, a);
        assert_eq!(q.pop().unwrap().seq, b);
    }

    #[test]
    fn past_events_rejected() {
        let mut q = EventQueue::new();
        q.set_clock(4.0);
        assert!(matches!(
            q.schedule(2.0, EventKind::OrderArrival, Payload::default()),
            Err(Error::Causality { .. })
        ));
        assert!(q
            .schedule(f64::NAN, EventKind::OrderArrival, Payload::default())
            .is_err());
        assert!(q
            .schedule(4.0, EventKind::OrderArrival, Payload::default())
            .is_ok());
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in [
            EventKind::OrderArrival,
            EventKind::AmrArrivedAtDock,
            EventKind::AmrArrivedAtLane,
            EventKind::AmrReleased,
            EventKind::AmrArrivedAtStation,
            EventKind::ChargeComplete,
            EventKind::ChargeInterrupted,
            EventKind::DecisionRequest,
        ] {
            assert_eq!(EventKind::from_name(k.name()), Some(k));
        }
    }

    proptest! {
        #[test]
        fn pops_lexicographic(times in proptest::collection::vec(0u32..50, 1..200)) {
            let mut q = EventQueue::new();
            for t in &times {
                q.schedule(f64::from(*t), EventKind::OrderArrival, Payload::default()).unwrap();
            }
            let mut last = (f64::NEG_INFINITY, 0u64);
            let mut n = 0;
            while let Some(e) = q.pop() {
                prop_assert!(e.time > last.0 || (e.time == last.0 && e.seq > last.1));
                last = (e.time, e.seq);
                n += 1;
            }
            prop_assert_eq!(n, times.len());
        }
    }
}
