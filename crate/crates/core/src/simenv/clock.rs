use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::domain::SimTime;

use super::SimError;

struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
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

/// Virtual clock plus a pending-event queue ordered by `(time, insertion)`.
///
/// Time never moves backwards; events due at the same instant fire in the
/// order they were scheduled.
pub struct SimClock<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
}

impl<E> SimClock<E> {
    pub fn new(start: SimTime) -> Self {
        SimClock {
            now: start,
            next_seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    pub fn schedule(&mut self, event: E, at: SimTime) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Entry { at, seq, event }));
        Ok(())
    }

    /// Pops the next event due at or before `t`, moving the clock to it.
    pub fn pop_due(&mut self, t: SimTime) -> Option<(SimTime, E)> {
        if self.next_event_time()? > t {
            return None;
        }
        let Reverse(entry) = self.queue.pop()?;
        self.now = entry.at;
        Some((entry.at, entry.event))
    }

    /// Fires everything due up to `t` and leaves the clock at `t`.
    pub fn advance_to(&mut self, t: SimTime) -> Result<Vec<(SimTime, E)>, SimError> {
        if t < self.now {
            return Err(SimError::SchedulingInPast {
                at: t,
                now: self.now,
            });
        }
        let mut fired = Vec::new();
        while let Some(ev) = self.pop_due(t) {
            fired.push(ev);
        }
        self.now = t;
        Ok(fired)
    }
}
