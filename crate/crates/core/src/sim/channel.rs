//! Bounded elastic channel between two processes.
//!
//! Pushes made during a cycle are staged and become visible to the consumer
//! at the end of the cycle. Space is counted against the occupancy at the
//! start of the cycle, so a pop does not free room until the next cycle.
//! This makes a cycle's outcome independent of the order processes run in.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct Channel {
    pub capacity: usize,
    buf: VecDeque<i64>,
    staged: Vec<i64>,
    start_len: usize,
    /// Largest `start_len + pushes` seen in any cycle.
    pub high_water: usize,
    pub pushes: u64,
    pub pops: u64,
}

impl Channel {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            buf: VecDeque::new(),
            staged: Vec::new(),
            start_len: 0,
            high_water: 0,
            pushes: 0,
            pops: 0,
        }
    }

    pub fn begin_cycle(&mut self) {
        self.start_len = self.buf.len();
    }

    pub fn space(&self) -> usize {
        self.capacity.saturating_sub(self.start_len + self.staged.len())
    }

    /// Words the consumer may pop this cycle.
    pub fn available(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, w: i64) {
        debug_assert!(self.space() > 0, "push into full channel");
        self.staged.push(w);
        self.pushes += 1;
    }

    pub fn pop(&mut self) -> i64 {
        self.pops += 1;
        self.buf.pop_front().expect("pop from empty channel")
    }

    /// Words visible at the end of the cycle. Returns true if anything moved.
    pub fn commit(&mut self) -> bool {
        let moved = !self.staged.is_empty() || self.buf.len() != self.start_len;
        self.high_water = self.high_water.max(self.start_len + self.staged.len());
        self.buf.extend(self.staged.drain(..));
        moved
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staged_words_are_invisible_until_commit() {
        let mut c = Channel::new(2);
        c.begin_cycle();
        c.push(1);
        assert_eq!(c.available(), 0);
        assert_eq!(c.space(), 1);
        c.commit();
        c.begin_cycle();
        assert_eq!(c.available(), 1);
        assert_eq!(c.pop(), 1);
        // The pop frees room only next cycle.
        assert_eq!(c.space(), 1);
        c.push(2);
        c.commit();
        assert_eq!(c.high_water, 2);
    }

    #[test]
    fn fifo_order() {
        let mut c = Channel::new(8);
        c.begin_cycle();
        for i in 0..5 {
            c.push(i);
        }
        c.commit();
        c.begin_cycle();
        let out: Vec<i64> = (0..5).map(|_| c.pop()).collect();
        assert_eq!(out, [0, 1, 2, 3, 4]);
    }
}
