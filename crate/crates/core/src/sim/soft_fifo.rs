//! FIFO held in off-chip memory and moved in chunks by two DMA engines.
//!
//! Words from the producer collect in an on-chip staging buffer. Once a
//! chunk is complete (or the frame ends, in which case the chunk is
//! zero-padded), the write engine copies it to memory. The read engine copies
//! the oldest stored chunk back into an egress buffer, trimming any padding,
//! and the consumer drains from there. A chunk can only be read after it has
//! been fully written. Both engines run concurrently and split the off-chip
//! bandwidth evenly.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::perf::PlatformSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SoftFifoConfig {
    /// Chunks the off-chip memory holds.
    pub depth: usize,
    /// Words per chunk.
    pub chunk_size: usize,
}

/// Cycle cost of DMA transfers.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DmaTiming {
    /// Words per cycle each engine moves.
    pub words_per_cycle: f64,
    /// Words per burst; shorter transfers still pay for a whole burst.
    pub burst: usize,
    /// Fixed cycles to set up one transfer.
    pub setup: u64,
}

/// Setup cycles charged per DMA transfer.
pub const DMA_SETUP_CYCLES: u64 = 16;

impl DmaTiming {
    pub fn from_platform(platform: &PlatformSpec, a_bits: u32) -> Self {
        Self {
            words_per_cycle: platform.offchip_words_per_cycle(a_bits) / 2.0,
            burst: platform.dma_burst.max(1) as usize,
            setup: DMA_SETUP_CYCLES,
        }
    }

    pub fn transfer_cycles(&self, words: usize) -> u64 {
        let burst_words = words.div_ceil(self.burst) * self.burst;
        self.setup + libm::ceil(burst_words as f64 / self.words_per_cycle) as u64
    }
}

impl Default for DmaTiming {
    fn default() -> Self {
        Self { words_per_cycle: 8.0, burst: 16, setup: DMA_SETUP_CYCLES }
    }
}

#[derive(Debug, Clone)]
struct Engine {
    busy_until: u64,
    chunk: Option<(Vec<i64>, usize)>,
}

impl Engine {
    fn idle() -> Self {
        Self { busy_until: 0, chunk: None }
    }
}

/// Off-chip FIFO seen as a channel: producers push into staging, consumers
/// pop from egress.
#[derive(Debug, Clone)]
pub struct SoftFifo {
    cfg: SoftFifoConfig,
    timing: DmaTiming,
    frame_words: u64,
    staging: VecDeque<i64>,
    staged: Vec<i64>,
    start_len: usize,
    /// Lengths of complete chunks waiting in staging.
    formed: VecDeque<usize>,
    fill: usize,
    frame_pos: u64,
    memory: VecDeque<(Vec<i64>, usize)>,
    egress: VecDeque<i64>,
    egress_start: usize,
    write: Engine,
    read: Engine,
    pub chunks_written: u64,
    pub chunks_read: u64,
    pub pushes: u64,
    pub pops: u64,
    /// Largest number of words held anywhere in the FIFO.
    pub high_water: usize,
    pub peak_words_per_cycle: f64,
}

impl SoftFifo {
    /// `frame_words` marks where a partial final chunk is flushed.
    pub fn new(cfg: SoftFifoConfig, timing: DmaTiming, frame_words: u64) -> Self {
        assert!(cfg.depth >= 1 && cfg.chunk_size >= 1, "soft FIFO needs depth and chunk of at least 1");
        Self {
            cfg,
            timing,
            frame_words: frame_words.max(1),
            staging: VecDeque::new(),
            staged: Vec::new(),
            start_len: 0,
            formed: VecDeque::new(),
            fill: 0,
            frame_pos: 0,
            memory: VecDeque::new(),
            egress: VecDeque::new(),
            egress_start: 0,
            write: Engine::idle(),
            read: Engine::idle(),
            chunks_written: 0,
            chunks_read: 0,
            pushes: 0,
            pops: 0,
            high_water: 0,
            peak_words_per_cycle: 0.0,
        }
    }

    pub fn config(&self) -> SoftFifoConfig {
        self.cfg
    }

    fn staging_cap(&self) -> usize {
        2 * self.cfg.chunk_size
    }

    pub fn begin_cycle(&mut self) {
        self.start_len = self.staging.len();
        self.egress_start = self.egress.len();
    }

    pub fn space(&self) -> usize {
        self.staging_cap().saturating_sub(self.start_len + self.staged.len())
    }

    pub fn available(&self) -> usize {
        self.egress.len()
    }

    pub fn push(&mut self, w: i64) {
        debug_assert!(self.space() > 0);
        self.staged.push(w);
        self.pushes += 1;
    }

    pub fn pop(&mut self) -> i64 {
        self.pops += 1;
        self.egress.pop_front().expect("pop from empty soft FIFO")
    }

    /// True while a DMA transfer is in flight.
    pub fn busy(&self, now: u64) -> bool {
        (self.write.chunk.is_some() && self.write.busy_until > now)
            || (self.read.chunk.is_some() && self.read.busy_until > now)
    }

    pub fn words_held(&self) -> usize {
        self.staging.len()
            + self.egress.len()
            + self.memory.iter().map(|c| c.1).sum::<usize>()
            + self.write.chunk.as_ref().map_or(0, |c| c.1)
            + self.read.chunk.as_ref().map_or(0, |c| c.1)
    }

    /// End-of-cycle update. Returns true if any word or chunk moved.
    pub fn commit(&mut self, now: u64) -> bool {
        let mut moved = !self.staged.is_empty() || self.egress.len() != self.egress_start;
        for w in core::mem::take(&mut self.staged) {
            self.staging.push_back(w);
            self.fill += 1;
            self.frame_pos += 1;
            if self.fill == self.cfg.chunk_size || self.frame_pos == self.frame_words {
                self.formed.push_back(self.fill);
                self.fill = 0;
                if self.frame_pos == self.frame_words {
                    self.frame_pos = 0;
                }
            }
        }
        if self.write.chunk.is_some() && self.write.busy_until <= now + 1 {
            let c = self.write.chunk.take().expect("chunk");
            self.memory.push_back(c);
            self.chunks_written += 1;
            moved = true;
        }
        if self.read.chunk.is_some() && self.read.busy_until <= now + 1 {
            let (data, len) = self.read.chunk.take().expect("chunk");
            self.egress.extend(data.into_iter().take(len));
            self.chunks_read += 1;
            moved = true;
        }
        let chunk = self.cfg.chunk_size;
        let in_memory = self.memory.len() + usize::from(self.write.chunk.is_some());
        if self.write.chunk.is_none() && in_memory < self.cfg.depth {
            if let Some(len) = self.formed.pop_front() {
                let mut data: Vec<i64> = self.staging.drain(..len).collect();
                data.resize(chunk, 0);
                self.write = Engine { busy_until: now + 1 + self.timing.transfer_cycles(chunk), chunk: Some((data, len)) };
                moved = true;
            }
        }
        if self.read.chunk.is_none() && self.egress.len() + chunk <= 2 * chunk {
            if let Some(c) = self.memory.pop_front() {
                self.read = Engine { busy_until: now + 1 + self.timing.transfer_cycles(chunk), chunk: Some(c) };
                moved = true;
            }
        }
        let active = usize::from(self.write.chunk.is_some()) + usize::from(self.read.chunk.is_some());
        self.peak_words_per_cycle = self.peak_words_per_cycle.max(active as f64 * self.timing.words_per_cycle);
        self.high_water = self.high_water.max(self.words_held());
        moved
    }
}

/// Cycle-level outcome of streaming through a FIFO model.
#[derive(Debug, Clone, PartialEq)]
pub struct FifoRun {
    pub output: Vec<i64>,
    pub cycles: u64,
    /// Cycles the producer had a word but the FIFO had no room.
    pub producer_stalls: u64,
    /// Cycles between the first and last output when the consumer was ready
    /// but nothing was available.
    pub consumer_gaps: u64,
    pub peak_words_per_cycle: f64,
}

impl FifoRun {
    pub fn stall_cycles(&self) -> u64 {
        self.producer_stalls + self.consumer_gaps
    }
}

/// Producer and consumer activity per cycle; `true` means willing.
pub trait Schedule {
    fn producer_valid(&self, cycle: u64) -> bool;
    fn consumer_ready(&self, cycle: u64) -> bool;
}

/// Always willing on both sides.
#[derive(Debug, Clone, Copy, Default)]
pub struct FreeRunning;

impl Schedule for FreeRunning {
    fn producer_valid(&self, _: u64) -> bool {
        true
    }
    fn consumer_ready(&self, _: u64) -> bool {
        true
    }
}

/// Explicit stall windows `[start, end)` for each side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StallWindows {
    pub producer: Vec<(u64, u64)>,
    pub consumer: Vec<(u64, u64)>,
}

impl Schedule for StallWindows {
    fn producer_valid(&self, c: u64) -> bool {
        !self.producer.iter().any(|&(a, b)| (a..b).contains(&c))
    }
    fn consumer_ready(&self, c: u64) -> bool {
        !self.consumer.iter().any(|&(a, b)| (a..b).contains(&c))
    }
}

const RUN_LIMIT: u64 = 1 << 32;

fn drive(
    stream: &[i64],
    schedule: &dyn Schedule,
    mut space: impl FnMut() -> usize,
    mut push: impl FnMut(i64),
    mut available: impl FnMut() -> usize,
    mut pop: impl FnMut() -> i64,
    mut step: impl FnMut(u64),
) -> FifoRun {
    let mut out = Vec::with_capacity(stream.len());
    let (mut sent, mut stalls, mut gaps) = (0usize, 0u64, 0u64);
    let mut pending_gaps = 0u64;
    let mut cycle = 0u64;
    while out.len() < stream.len() && cycle < RUN_LIMIT {
        if sent < stream.len() && schedule.producer_valid(cycle) {
            if space() > 0 {
                push(stream[sent]);
                sent += 1;
            } else {
                stalls += 1;
            }
        }
        if schedule.consumer_ready(cycle) {
            if available() > 0 {
                out.push(pop());
                gaps += pending_gaps;
                pending_gaps = 0;
            } else if !out.is_empty() {
                pending_gaps += 1;
            }
        }
        step(cycle);
        cycle += 1;
    }
    FifoRun { output: out, cycles: cycle, producer_stalls: stalls, consumer_gaps: gaps, peak_words_per_cycle: 0.0 }
}

/// Stream `stream` through a soft FIFO, one word per cycle at most on each
/// side, under `schedule`.
pub fn run_soft_fifo(cfg: SoftFifoConfig, timing: DmaTiming, stream: &[i64], schedule: &dyn Schedule) -> FifoRun {
    let fifo = core::cell::RefCell::new(SoftFifo::new(cfg, timing, stream.len() as u64));
    fifo.borrow_mut().begin_cycle();
    let mut run = drive(
        stream,
        schedule,
        || fifo.borrow().space(),
        |w| fifo.borrow_mut().push(w),
        || fifo.borrow().available(),
        || fifo.borrow_mut().pop(),
        |now| {
            let mut f = fifo.borrow_mut();
            f.commit(now);
            f.begin_cycle();
        },
    );
    run.peak_words_per_cycle = fifo.borrow().peak_words_per_cycle;
    run
}

/// Reference: an on-chip FIFO of `capacity` words with one cycle of latency.
pub fn run_ideal_fifo(capacity: usize, stream: &[i64], schedule: &dyn Schedule) -> FifoRun {
    let ch = core::cell::RefCell::new(super::channel::Channel::new(capacity));
    ch.borrow_mut().begin_cycle();
    drive(
        stream,
        schedule,
        || ch.borrow().space(),
        |w| ch.borrow_mut().push(w),
        || ch.borrow().available(),
        || ch.borrow_mut().pop(),
        |_| {
            let mut c = ch.borrow_mut();
            c.commit();
            c.begin_cycle();
        },
    )
}

/// Pass a word stream through the soft FIFO with free-running endpoints and
/// default DMA timing. A stream that does not fill a whole number of chunks
/// has its last chunk zero-padded internally; the padding never reaches the
/// output.
pub fn simulate_soft_fifo(cfg: SoftFifoConfig, stream: &[i64]) -> Vec<i64> {
    run_soft_fifo(cfg, DmaTiming::default(), stream, &FreeRunning).output
}

/// Stall cycles the soft FIFO adds over an ideal FIFO of the same capacity.
pub fn added_stall_cycles(
    cfg: SoftFifoConfig,
    timing: DmaTiming,
    stream: &[i64],
    schedule: &dyn Schedule,
) -> (u64, FifoRun, FifoRun) {
    let soft = run_soft_fifo(cfg, timing, stream, schedule);
    let ideal = run_ideal_fifo(cfg.depth * cfg.chunk_size, stream, schedule);
    (soft.stall_cycles().saturating_sub(ideal.stall_cycles()), soft, ideal)
}

/// Zero-length chunks are never formed; this is the number of chunks a
/// stream of `words` occupies.
pub fn chunks_for(words: usize, chunk_size: usize) -> usize {
    words.div_ceil(chunk_size).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_on_whole_chunks() {
        let s: Vec<i64> = (0..1024).collect();
        assert_eq!(simulate_soft_fifo(SoftFifoConfig { depth: 4, chunk_size: 256 }, &s), s);
    }

    #[test]
    fn partial_chunk_is_trimmed() {
        let s: Vec<i64> = (1..=1000).collect();
        assert_eq!(simulate_soft_fifo(SoftFifoConfig { depth: 4, chunk_size: 256 }, &s), s);
        let s: Vec<i64> = (0..7).collect();
        assert_eq!(simulate_soft_fifo(SoftFifoConfig { depth: 1, chunk_size: 10 }, &s), s);
    }

    #[test]
    fn consumer_stall_mid_stream() {
        let s: Vec<i64> = (0..1024).collect();
        let sched = StallWindows { producer: vec![], consumer: vec![(400, 1400)] };
        let cfg = SoftFifoConfig { depth: 4, chunk_size: 256 };
        let timing = DmaTiming { words_per_cycle: 8.0, burst: 64, setup: 16 };
        let run = run_soft_fifo(cfg, timing, &s, &sched);
        assert_eq!(run.output, s);
        assert!(run.cycles > 1400);
    }

    #[test]
    fn large_chunks_add_no_stall() {
        let s: Vec<i64> = (0..4096).collect();
        let cfg = SoftFifoConfig { depth: 16, chunk_size: 256 };
        let timing = DmaTiming { words_per_cycle: 8.0, burst: 256, setup: 16 };
        let (added, soft, ideal) = added_stall_cycles(cfg, timing, &s, &FreeRunning);
        assert_eq!(added, 0, "{soft:?} {ideal:?}");
    }

    #[test]
    fn chunks_below_burst_stall() {
        let s: Vec<i64> = (0..4096).collect();
        let cfg = SoftFifoConfig { depth: 512, chunk_size: 8 };
        let timing = DmaTiming { words_per_cycle: 8.0, burst: 256, setup: 16 };
        let (added, ..) = added_stall_cycles(cfg, timing, &s, &FreeRunning);
        assert!(added > 0);
    }

    #[test]
    fn transfer_cost_rounds_to_bursts() {
        let t = DmaTiming { words_per_cycle: 8.0, burst: 64, setup: 16 };
        assert_eq!(t.transfer_cycles(64), 24);
        assert_eq!(t.transfer_cycles(1), 24);
        assert_eq!(t.transfer_cycles(65), 32);
    }
}
