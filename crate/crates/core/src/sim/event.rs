//! Time-ordered event queue. Events pop in `(at, seq)` order; `seq` is a
//! monotone insertion counter, so simultaneous events keep insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::Timestamp;

#[derive(Debug)]
pub struct SimEvent<K> {
    pub at: Timestamp,
    pub seq: u64,
    pub kind: K,
}

impl<K> PartialEq for SimEvent<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K> Eq for SimEvent<K> {}

impl<K> PartialOrd for SimEvent<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for SimEvent<K> {
    // Reversed so the max-heap yields the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<SimEvent<K>>,
    next_seq: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, at: Timestamp, kind: K) {
        debug_assert!(at.secs().is_finite(), "event time must be finite");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { at, seq, kind });
    }

    pub fn pop(&mut self) -> Option<SimEvent<K>> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|e| e.at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SimEvent<K>> {
        self.heap.iter()
    }
}
