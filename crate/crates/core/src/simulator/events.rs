use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::allocator::JobId;

/// Event kinds in tie-break order: at equal timestamps completions are
/// processed first, then arrivals, ticks, restart completions and
/// exploration window boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    JobCompletion,
    JobArrival,
    ScheduleTick,
    RestartComplete,
    ExploreWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub timestamp: f64,
    pub kind: EventKind,
    pub job: Option<JobId>,
    /// Per-job generation; an event whose generation is stale is dropped.
    pub generation: u64,
}

impl SimEvent {
    fn key(&self) -> (EventKind, Option<JobId>, u64) {
        (self.kind, self.job, self.generation)
    }
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.timestamp.total_cmp(&other.timestamp).then_with(|| self.key().cmp(&other.key()))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of events.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<SimEvent>>,
}

impl EventQueue {
    pub fn push(&mut self, event: SimEvent) {
        self.heap.push(std::cmp::Reverse(event));
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|r| r.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, kind: EventKind, job: u64) -> SimEvent {
        SimEvent { timestamp: t, kind, job: Some(JobId(job)), generation: 0 }
    }

    #[test]
    fn ordering_by_time_then_kind_then_job() {
        let mut q = EventQueue::default();
        q.push(ev(5.0, EventKind::ScheduleTick, 0));
        q.push(ev(5.0, EventKind::JobArrival, 2));
        q.push(ev(5.0, EventKind::JobArrival, 1));
        q.push(ev(5.0, EventKind::JobCompletion, 9));
        q.push(ev(1.0, EventKind::RestartComplete, 3));
        q.push(ev(5.0, EventKind::RestartComplete, 0));
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| (e.kind, e.job.unwrap().0)).collect();
        assert_eq!(
            order,
            vec![
                (EventKind::RestartComplete, 3),
                (EventKind::JobCompletion, 9),
                (EventKind::JobArrival, 1),
                (EventKind::JobArrival, 2),
                (EventKind::ScheduleTick, 0),
                (EventKind::RestartComplete, 0),
            ]
        );
    }
}
