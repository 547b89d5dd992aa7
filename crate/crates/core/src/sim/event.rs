use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Millis, NodeId, TaskId, TaskSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    Arrival(TaskSpec),
    Completion(TaskId),
    CapacityChange { node: NodeId, scale: f64 },
}

impl EventKind {
    // Completion < CapacityChange < Arrival at equal times.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Completion(_) => 0,
            EventKind::CapacityChange { .. } => 1,
            EventKind::Arrival(_) => 2,
        }
    }

    fn key_id(&self) -> u64 {
        match self {
            EventKind::Completion(id) => *id,
            EventKind::CapacityChange { node, .. } => *node as u64,
            EventKind::Arrival(spec) => spec.task_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimEvent {
    pub time: Millis,
    pub kind: EventKind,
}

impl SimEvent {
    pub fn capacity_change(time: Millis, node: NodeId, scale: f64) -> Self {
        SimEvent {
            time,
            kind: EventKind::CapacityChange { node, scale },
        }
    }
}

struct Entry {
    time: Millis,
    rank: u8,
    id: u64,
    seq: u64,
    event: SimEvent,
}

impl Entry {
    fn key(&self) -> (Millis, u8, u64, u64) {
        (self.time, self.rank, self.id, self.seq)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Time-ordered event collection with a total, deterministic tie order.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
    // Arrivals + completions still pending.
    work_events: usize,
}

impl EventQueue {
    pub fn push(&mut self, event: SimEvent) {
        if !matches!(event.kind, EventKind::CapacityChange { .. }) {
            self.work_events += 1;
        }
        let entry = Entry {
            time: event.time,
            rank: event.kind.rank(),
            id: event.kind.key_id(),
            seq: self.next_seq,
            event,
        };
        self.next_seq += 1;
        self.heap.push(entry);
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let e = self.heap.pop()?.event;
        if !matches!(e.kind, EventKind::CapacityChange { .. }) {
            self.work_events -= 1;
        }
        Some(e)
    }

    pub fn peek_time(&self) -> Option<Millis> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn pending_work(&self) -> usize {
        self.work_events
    }

    /// All pending events in pop order (allocates; for inspection and dumps).
    pub fn sorted(&self) -> Vec<&SimEvent> {
        let mut v: Vec<&Entry> = self.heap.iter().collect();
        v.sort_by_key(|e| e.key());
        v.into_iter().map(|e| &e.event).collect()
    }
}
