//! One process per graph node. Each cycle a process consumes at most `p`
//! words from each input port and emits at most `p` words on each output
//! port, subject to channel occupancy.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::Link;
use crate::fixed;
use crate::golden::RefTensor;
use crate::graph::{EdgeId, NodeId, TensorShape, Window};
use crate::plan::ConvQuant;

/// Output stage: words wait here until their ready cycle, then leave at up to
/// `p` per cycle. With several output edges every word is broadcast and only
/// leaves when all of them have room.
#[derive(Debug, Clone)]
pub(crate) struct Emitter {
    q: VecDeque<(u64, i64)>,
    cap: usize,
}

impl Emitter {
    pub(crate) fn new(cap: usize) -> Self {
        Self { q: VecDeque::new(), cap }
    }

    pub(crate) fn room(&self) -> usize {
        self.cap.saturating_sub(self.q.len())
    }

    pub(crate) fn push(&mut self, ready: u64, w: i64) {
        self.q.push_back((ready, w));
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// True if a word is waiting on its ready time.
    pub(crate) fn pending_timer(&self, now: u64) -> bool {
        self.q.front().is_some_and(|&(r, _)| r > now)
    }

    pub(crate) fn blocked(&self, now: u64) -> bool {
        self.q.front().is_some_and(|&(r, _)| r <= now)
    }

    pub(crate) fn drain(&mut self, now: u64, p: usize, links: &mut [Link], outs: &[EdgeId]) -> usize {
        let mut n = 0;
        while n < p {
            match self.q.front() {
                Some(&(r, w)) if r <= now => {
                    if outs.iter().any(|e| links[e.0].space() == 0) {
                        break;
                    }
                    for e in outs {
                        links[e.0].push(w);
                    }
                    self.q.pop_front();
                    n += 1;
                }
                _ => break,
            }
        }
        n
    }
}

/// Sliding-window engine shared by convolution and max pooling.
///
/// Input words are addressed by their position in the unbounded stream of
/// frames. Words before the start of the next window can never be needed
/// again and are dropped, which bounds storage to `(K-1)·W·C + K·C` words.
/// When every word of the next window has arrived it is latched into the
/// compute register and the next window becomes current.
#[derive(Debug, Clone)]
pub(crate) struct WindowEngine {
    pub(crate) window: Window,
    pub(crate) inp: TensorShape,
    pub(crate) out: TensorShape,
    pub(crate) conv: Option<ConvQuant>,
    pub(crate) bits: u32,
    store: VecDeque<i64>,
    /// Stream position of `store[0]`.
    base: u64,
    received: u64,
    /// Next output pixel: frame, row, column.
    frame: u64,
    oy: usize,
    ox: usize,
    busy_until: u64,
    pub(crate) bound: usize,
    pub(crate) peak: usize,
}

impl WindowEngine {
    pub(crate) fn new(window: Window, inp: TensorShape, out: TensorShape, conv: Option<ConvQuant>, bits: u32) -> Self {
        let k = window.kernel;
        Self {
            window,
            inp,
            out,
            conv,
            bits,
            store: VecDeque::new(),
            base: 0,
            received: 0,
            frame: 0,
            oy: 0,
            ox: 0,
            busy_until: 0,
            bound: (k - 1) * inp.w * inp.c + k * inp.c,
            peak: 0,
        }
    }

    fn frame_words(&self) -> u64 {
        self.inp.elements() as u64
    }

    fn clip_start(&self) -> u64 {
        let s = self.window.stride as isize;
        let r = (self.oy as isize * s - self.window.padding.top as isize).max(0) as u64;
        let c = (self.ox as isize * s - self.window.padding.left as isize).max(0) as u64;
        let (w, ch) = (self.inp.w as u64, self.inp.c as u64);
        self.frame * self.frame_words() + (r.min(self.inp.h as u64) * w + c.min(w)) * ch
    }

    /// Stream position one past the last word the current window reads.
    fn window_end(&self) -> u64 {
        let s = self.window.stride as isize;
        let k = self.window.kernel as isize;
        let r = self.oy as isize * s - self.window.padding.top as isize + k - 1;
        let c = self.ox as isize * s - self.window.padding.left as isize + k - 1;
        let base = self.frame * self.frame_words();
        if r < 0 || c < 0 {
            return base;
        }
        let r = (r as u64).min(self.inp.h as u64 - 1);
        let c = (c as u64).min(self.inp.w as u64 - 1);
        base + (r * self.inp.w as u64 + c + 1) * self.inp.c as u64
    }

    /// Start of the earliest word still needed.
    fn first_needed(&self) -> u64 {
        // The next output row may reread the left edge of rows the current
        // window has already moved past.
        let next_row = ((self.oy + 1) * self.window.stride) as isize - self.window.padding.top as isize;
        let next_row = next_row.max(0) as u64;
        let next = if self.oy + 1 < self.out.h && next_row < self.inp.h as u64 {
            self.frame * self.frame_words() + next_row * (self.inp.w * self.inp.c) as u64
        } else {
            u64::MAX
        };
        self.clip_start().min(next)
    }

    fn held(&self) -> usize {
        self.store.len()
    }

    fn evict(&mut self) {
        let keep = self.first_needed();
        while self.base < keep && !self.store.is_empty() {
            self.store.pop_front();
            self.base += 1;
        }
        if self.store.is_empty() && self.base < keep {
            self.base = keep.min(self.received);
        }
    }

    pub(crate) fn can_accept(&self) -> bool {
        self.received < self.first_needed() || self.held() < self.bound
    }

    pub(crate) fn accept(&mut self, w: i64) {
        if self.received >= self.first_needed() {
            if self.store.is_empty() {
                self.base = self.received;
            }
            self.store.push_back(w);
        }
        self.received += 1;
        self.peak = self.peak.max(self.held());
    }

    fn word(&self, y: usize, x: usize, c: usize) -> i64 {
        let pos = self.frame * self.frame_words() + ((y * self.inp.w + x) * self.inp.c + c) as u64;
        debug_assert!(pos >= self.base, "pos {pos} base {} y {y} x {x} c {c} oy {} ox {} frame {} win {:?} inp {:?} out {:?}", self.base, self.oy, self.ox, self.frame, self.window, self.inp, self.out);
        self.store[(pos - self.base) as usize]
    }

    pub(crate) fn busy(&self, now: u64) -> bool {
        self.busy_until > now
    }

    /// Words one latch produces.
    pub(crate) fn block(&self) -> usize {
        self.out.c
    }

    /// Latch and evaluate the current window if it is complete. Returns the
    /// output words and the cycles the compute unit stays busy.
    pub(crate) fn try_latch(&mut self, now: u64, p: usize) -> Option<(Vec<i64>, u64)> {
        if self.busy(now) || self.received < self.window_end() {
            return None;
        }
        let (k, s) = (self.window.kernel, self.window.stride);
        let (pt, pl) = (self.window.padding.top as isize, self.window.padding.left as isize);
        let tap = |o: usize, d: usize, pad: isize, extent: usize| {
            let i = (o * s) as isize + d as isize - pad;
            (i >= 0 && (i as usize) < extent).then_some(i as usize)
        };
        let c_in = self.inp.c;
        let mut out = Vec::with_capacity(self.out.c);
        let cycles = match &self.conv {
            Some(cq) => {
                for f in 0..self.out.c {
                    let mut acc: i128 = 0;
                    for c in 0..c_in {
                        for ky in 0..k {
                            let Some(iy) = tap(self.oy, ky, pt, self.inp.h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = tap(self.ox, kx, pl, self.inp.w) else { continue };
                                let wi = ((f * c_in + c) * k + ky) * k + kx;
                                acc += self.word(iy, ix, c) as i128 * cq.weights.effective(wi) as i128;
                            }
                        }
                    }
                    out.push(fixed::saturate(cq.requant.apply(acc), self.bits));
                }
                (c_in * self.out.c).div_ceil(p)
            }
            None => {
                for c in 0..c_in {
                    let mut m = i64::MIN;
                    for ky in 0..k {
                        let Some(iy) = tap(self.oy, ky, pt, self.inp.h) else { continue };
                        for kx in 0..k {
                            let Some(ix) = tap(self.ox, kx, pl, self.inp.w) else { continue };
                            m = m.max(self.word(iy, ix, c));
                        }
                    }
                    out.push(m);
                }
                c_in.div_ceil(p)
            }
        };
        let cycles = cycles.max(1) as u64;
        self.busy_until = now + cycles;
        self.ox += 1;
        if self.ox == self.out.w {
            self.ox = 0;
            self.oy += 1;
            if self.oy == self.out.h {
                self.oy = 0;
                self.frame += 1;
            }
        }
        self.evict();
        Some((out, cycles))
    }

    /// Words of the current frame not yet received.
    pub(crate) fn waiting_input(&self) -> bool {
        self.received < self.window_end()
    }
}

/// Nearest-neighbour upsampling with a two-row cache: one complete row being
/// replayed while the next fills.
#[derive(Debug, Clone)]
pub(crate) struct ResizeEngine {
    pub(crate) scale: usize,
    pub(crate) w: usize,
    pub(crate) c: usize,
    rows: VecDeque<Vec<i64>>,
    filling: Vec<i64>,
    k: usize,
}

impl ResizeEngine {
    pub(crate) fn new(scale: usize, w: usize, c: usize) -> Self {
        Self { scale, w, c, rows: VecDeque::new(), filling: Vec::new(), k: 0 }
    }

    fn row_words(&self) -> usize {
        self.w * self.c
    }

    pub(crate) fn can_accept(&self) -> bool {
        self.rows.len() < 2 && !(self.rows.len() == 1 && self.filling.len() == self.row_words())
    }

    pub(crate) fn accept(&mut self, w: i64) {
        self.filling.push(w);
        if self.filling.len() == self.row_words() {
            self.rows.push_back(core::mem::take(&mut self.filling));
        }
    }

    pub(crate) fn next(&mut self) -> Option<i64> {
        let row = self.rows.front()?;
        let out_w = self.w * self.scale;
        let per_row = out_w * self.c;
        let i = self.k % per_row;
        let (x, ch) = (i / self.c, i % self.c);
        let v = row[(x / self.scale) * self.c + ch];
        self.k += 1;
        if self.k == per_row * self.scale {
            self.k = 0;
            self.rows.pop_front();
        }
        Some(v)
    }

    pub(crate) fn stored(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() + self.filling.len()
    }
}

/// Per-port state shared by the split demultiplexer and the concat
/// multiplexer: channel range sizes and the position within a pixel.
#[derive(Debug, Clone)]
pub(crate) struct PortCursor {
    pub(crate) sizes: Vec<usize>,
    port: usize,
    count: usize,
}

impl PortCursor {
    pub(crate) fn new(sizes: Vec<usize>) -> Self {
        Self { sizes, port: 0, count: 0 }
    }

    pub(crate) fn port(&self) -> usize {
        self.port
    }

    pub(crate) fn advance(&mut self) {
        self.count += 1;
        if self.count == self.sizes[self.port] {
            self.count = 0;
            self.port = (self.port + 1) % self.sizes.len();
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Behavior {
    Source { frames: Vec<RefTensor<i64>>, frame: usize, pos: usize },
    Sink { shape: TensorShape, current: Vec<i64>, frames: Vec<RefTensor<i64>>, done: Vec<u64> },
    Window(WindowEngine),
    Resize(ResizeEngine),
    Split { cursor: PortCursor, ports: Vec<Emitter> },
    Concat { cursor: PortCursor, buffers: Vec<VecDeque<i64>>, caps: Vec<usize>, fracs: Vec<i32>, frac: i32 },
    Add { fracs: Vec<i32>, frac: i32 },
    HardSwish { frac: i32 },
    LeakyRelu { slope: i64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Process {
    pub(crate) node: NodeId,
    pub(crate) p: usize,
    pub(crate) c_fix: u64,
    pub(crate) bits: u32,
    pub(crate) inputs: Vec<EdgeId>,
    pub(crate) outputs: Vec<EdgeId>,
    pub(crate) emit: Emitter,
    pub(crate) behavior: Behavior,
    pub(crate) consumed: u64,
    pub(crate) produced: u64,
}

impl Process {
    /// Advance one cycle. Returns true if the process has a timer running.
    pub(crate) fn step(&mut self, now: u64, links: &mut [Link]) -> bool {
        let p = self.p;
        let ready = now + self.c_fix;
        let bits = self.bits;
        let mut timer = false;
        if !matches!(self.behavior, Behavior::Split { .. }) {
            self.produced += self.emit.drain(now, p, links, &self.outputs) as u64;
        }
        match &mut self.behavior {
            Behavior::Source { frames, frame, pos } => {
                let mut n = 0;
                while n < p && *frame < frames.len() && self.emit.room() > 0 {
                    let t = &frames[*frame];
                    self.emit.push(ready, t.data[*pos]);
                    *pos += 1;
                    if *pos == t.data.len() {
                        *pos = 0;
                        *frame += 1;
                    }
                    n += 1;
                }
            }
            Behavior::Sink { shape, current, frames, done } => {
                let e = self.inputs[0];
                let n = p.min(links[e.0].available());
                for _ in 0..n {
                    current.push(links[e.0].pop());
                    self.consumed += 1;
                    if current.len() == shape.elements() {
                        let data = core::mem::take(current);
                        frames.push(RefTensor { shape: *shape, data });
                        done.push(ready);
                    }
                }
            }
            Behavior::Window(engine) => {
                let e = self.inputs[0];
                let mut n = 0;
                while n < p && links[e.0].available() > 0 && engine.can_accept() {
                    engine.accept(links[e.0].pop());
                    self.consumed += 1;
                    n += 1;
                }
                if self.emit.room() >= engine.block() {
                    if let Some((words, cycles)) = engine.try_latch(now, p) {
                        for w in words {
                            self.emit.push(ready + cycles, w);
                        }
                    }
                }
                timer |= engine.busy(now);
            }
            Behavior::Resize(engine) => {
                let e = self.inputs[0];
                let mut n = 0;
                while n < p && links[e.0].available() > 0 && engine.can_accept() {
                    engine.accept(links[e.0].pop());
                    self.consumed += 1;
                    n += 1;
                }
                let mut n = 0;
                while n < p && self.emit.room() > 0 {
                    let Some(v) = engine.next() else { break };
                    self.emit.push(ready, v);
                    n += 1;
                }
            }
            Behavior::Split { cursor, ports } => {
                for (i, port) in ports.iter_mut().enumerate() {
                    self.produced += port.drain(now, p, links, &self.outputs[i..=i]) as u64;
                }
                let e = self.inputs[0];
                let mut n = 0;
                while n < p && links[e.0].available() > 0 && ports[cursor.port()].room() > 0 {
                    let w = links[e.0].pop();
                    ports[cursor.port()].push(ready, w);
                    cursor.advance();
                    self.consumed += 1;
                    n += 1;
                }
            }
            Behavior::Concat { cursor, buffers, caps, fracs, frac } => {
                for (i, e) in self.inputs.iter().enumerate() {
                    let mut n = 0;
                    while n < p && links[e.0].available() > 0 && buffers[i].len() < caps[i] {
                        buffers[i].push_back(links[e.0].pop());
                        self.consumed += 1;
                        n += 1;
                    }
                }
                let mut n = 0;
                while n < p && self.emit.room() > 0 {
                    let i = cursor.port();
                    let Some(v) = buffers[i].pop_front() else { break };
                    self.emit.push(ready, fixed::saturate(fixed::rescale(v, fracs[i], *frac), bits));
                    cursor.advance();
                    n += 1;
                }
            }
            Behavior::Add { fracs, frac } => {
                let avail = self.inputs.iter().map(|e| links[e.0].available()).min().unwrap_or(0);
                let n = p.min(avail).min(self.emit.room());
                for _ in 0..n {
                    let mut sum: i128 = 0;
                    for (i, e) in self.inputs.iter().enumerate() {
                        sum += fixed::rescale(links[e.0].pop(), fracs[i], *frac);
                    }
                    self.consumed += self.inputs.len() as u64;
                    self.emit.push(ready, fixed::saturate(sum, bits));
                }
            }
            Behavior::HardSwish { frac } => {
                let e = self.inputs[0];
                let n = p.min(links[e.0].available()).min(self.emit.room());
                for _ in 0..n {
                    let v = links[e.0].pop();
                    self.emit.push(ready, fixed::hardswish(v, *frac, bits));
                }
                self.consumed += n as u64;
            }
            Behavior::LeakyRelu { slope } => {
                let e = self.inputs[0];
                let n = p.min(links[e.0].available()).min(self.emit.room());
                for _ in 0..n {
                    let v = links[e.0].pop();
                    self.emit.push(ready, fixed::leaky_relu(v, *slope, bits));
                }
                self.consumed += n as u64;
            }
        }
        timer |= match &self.behavior {
            Behavior::Split { ports, .. } => ports.iter().any(|p| p.pending_timer(now)),
            _ => self.emit.pending_timer(now),
        };
        timer
    }

    /// Words held inside the process.
    pub(crate) fn internal_words(&self) -> usize {
        let own = self.emit.q.len();
        own + match &self.behavior {
            Behavior::Window(e) => e.held(),
            Behavior::Resize(r) => r.stored(),
            Behavior::Split { ports, .. } => ports.iter().map(|p| p.q.len()).sum(),
            Behavior::Concat { buffers, .. } => buffers.iter().map(VecDeque::len).sum(),
            Behavior::Sink { current, .. } => current.len(),
            _ => 0,
        }
    }

    /// Short description of why the process cannot move.
    pub(crate) fn stall_reason(&self, now: u64, links: &[Link]) -> Option<&'static str> {
        let out_full = self.outputs.iter().any(|e| links[e.0].space() == 0);
        let blocked_out = match &self.behavior {
            Behavior::Split { ports, .. } => ports.iter().any(|p| p.blocked(now)),
            _ => self.emit.blocked(now),
        };
        if blocked_out && out_full {
            return Some("output full");
        }
        let starving = self.inputs.iter().any(|e| links[e.0].available() == 0);
        if starving {
            return Some("input empty");
        }
        if let Behavior::Window(w) = &self.behavior {
            if w.waiting_input() {
                return Some("window incomplete");
            }
        }
        None
    }
}
