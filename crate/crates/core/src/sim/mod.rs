//! Cycle-stepped simulator of the streaming pipeline.
//!
//! Every node becomes a process and every edge a bounded ready/valid
//! channel carrying NHWC words. Off-chip skip edges become soft FIFOs.
//! Arithmetic follows the quantization plan exactly, so outputs match
//! [`crate::golden::run_reference_quantized`] bit for bit.

pub mod channel;
mod process;
pub mod soft_fifo;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dse::{DepthReport, DepthSource};
use crate::golden::RefTensor;
use crate::graph::{EdgeId, NetworkGraph, NodeId, Op, OpKind, TensorShape};
use crate::perf::{self, DesignPoint, Placement};
use crate::plan::QuantPlan;

pub use channel::Channel;
use process::{Behavior, Emitter, PortCursor, Process, ResizeEngine, WindowEngine};
pub use soft_fifo::{
    added_stall_cycles, run_ideal_fifo, run_soft_fifo, simulate_soft_fifo, DmaTiming, FifoRun, FreeRunning,
    Schedule, SoftFifo, SoftFifoConfig, StallWindows,
};

/// A channel as seen by processes: either on-chip or off-chip.
#[derive(Debug, Clone)]
pub enum Link {
    OnChip(Channel),
    OffChip(Box<SoftFifo>),
}

impl Link {
    fn begin_cycle(&mut self) {
        match self {
            Link::OnChip(c) => c.begin_cycle(),
            Link::OffChip(f) => f.begin_cycle(),
        }
    }

    pub fn space(&self) -> usize {
        match self {
            Link::OnChip(c) => c.space(),
            Link::OffChip(f) => f.space(),
        }
    }

    pub fn available(&self) -> usize {
        match self {
            Link::OnChip(c) => c.available(),
            Link::OffChip(f) => f.available(),
        }
    }

    pub fn push(&mut self, w: i64) {
        match self {
            Link::OnChip(c) => c.push(w),
            Link::OffChip(f) => f.push(w),
        }
    }

    pub fn pop(&mut self) -> i64 {
        match self {
            Link::OnChip(c) => c.pop(),
            Link::OffChip(f) => f.pop(),
        }
    }

    fn commit(&mut self, now: u64) -> bool {
        match self {
            Link::OnChip(c) => c.commit(),
            Link::OffChip(f) => f.commit(now),
        }
    }

    fn busy(&self, now: u64) -> bool {
        matches!(self, Link::OffChip(f) if f.busy(now))
    }

    pub fn occupancy(&self) -> usize {
        match self {
            Link::OnChip(c) => c.len(),
            Link::OffChip(f) => f.words_held(),
        }
    }

    pub fn capacity(&self) -> usize {
        match self {
            Link::OnChip(c) => c.capacity,
            Link::OffChip(f) => f.config().depth * f.config().chunk_size,
        }
    }

    pub fn high_water(&self) -> usize {
        match self {
            Link::OnChip(c) => c.high_water,
            Link::OffChip(f) => f.high_water,
        }
    }

    pub fn pushes(&self) -> u64 {
        match self {
            Link::OnChip(c) => c.pushes,
            Link::OffChip(f) => f.pushes,
        }
    }

    pub fn pops(&self) -> u64 {
        match self {
            Link::OnChip(c) => c.pops,
            Link::OffChip(f) => f.pops,
        }
    }

    pub fn is_off_chip(&self) -> bool {
        matches!(self, Link::OffChip(_))
    }
}

/// Capacity given to skip-edge channels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SkipCapacity {
    /// Same as every other channel.
    #[default]
    Default,
    /// Large enough never to fill; used to measure required depths.
    Unbounded,
    /// At least the given depth per skip edge.
    Depths(DepthReport),
}

/// Words per soft-FIFO chunk unless configured otherwise.
pub const DEFAULT_CHUNK: usize = 256;

/// Capacity used for channels that must never exert back-pressure.
pub const UNBOUNDED: usize = usize::MAX / 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub skip_capacity: SkipCapacity,
    pub chunk_size: usize,
    pub dma: DmaTiming,
    /// Per-edge capacity overrides applied last.
    pub capacity: BTreeMap<EdgeId, usize>,
    /// Record per-cycle occupancy changes.
    pub trace: bool,
    /// Give up after this many cycles.
    pub max_cycles: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            skip_capacity: SkipCapacity::Default,
            chunk_size: DEFAULT_CHUNK,
            dma: DmaTiming::default(),
            capacity: BTreeMap::new(),
            trace: false,
            max_cycles: 1 << 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimError {
    Unshaped,
    Unsupported { node: String, reason: String },
    Parallelism { node: String, p: u64, max: u64 },
    Coverage,
    MissingPlan(String),
    InputShape { expected: TensorShape, found: TensorShape },
    CycleLimit(u64),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Unshaped => f.write_str("graph shapes have not been inferred"),
            SimError::Unsupported { node, reason } => write!(f, "cannot simulate `{node}`: {reason}"),
            SimError::Parallelism { node, p, max } => {
                write!(f, "parallelism {p} of `{node}` does not divide its workload dimension {max}")
            }
            SimError::Coverage => f.write_str("design point does not cover every node"),
            SimError::MissingPlan(n) => write!(f, "quantization plan has no entry for `{n}`"),
            SimError::InputShape { expected, found } => {
                write!(f, "input tensor is {found}, network expects {expected}")
            }
            SimError::CycleLimit(c) => write!(f, "simulation exceeded {c} cycles"),
        }
    }
}

impl core::error::Error for SimError {}

/// Ready-to-run simulation: processes and the links between them.
#[derive(Debug, Clone)]
pub struct Pipeline {
    graph: NetworkGraph,
    procs: Vec<Process>,
    links: Vec<Link>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn process_count(&self) -> usize {
        self.procs.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn soft_fifo_count(&self) -> usize {
        self.links.iter().filter(|l| l.is_off_chip()).count()
    }

    pub fn capacity(&self, e: EdgeId) -> usize {
        self.links[e.0].capacity()
    }

    /// Resize an on-chip channel.
    pub fn set_capacity(&mut self, e: EdgeId, cap: usize) {
        if let Link::OnChip(c) = &mut self.links[e.0] {
            c.capacity = cap;
        }
    }
}

/// Default channel capacity: two cycles' worth of words at the faster end.
pub fn default_capacity(dp: &DesignPoint, graph: &NetworkGraph, e: EdgeId) -> usize {
    let edge = graph.edge(e);
    2 * dp.p(edge.from).max(dp.p(edge.to)) as usize
}

/// Instantiate one process per node and one link per edge.
pub fn build_pipeline(
    graph: &NetworkGraph,
    dp: &DesignPoint,
    plan: &QuantPlan,
    config: &PipelineConfig,
) -> Result<Pipeline, SimError> {
    if !graph.is_shaped() {
        return Err(SimError::Unshaped);
    }
    if dp.parallelism.len() != graph.len() {
        return Err(SimError::Coverage);
    }
    let bits = plan.config.a_bits;
    let mut procs = Vec::with_capacity(graph.len());
    for n in graph.node_ids() {
        let node = graph.node(n);
        let p = dp.p(n);
        if !perf::valid_parallelism(graph, n, p) {
            return Err(SimError::Parallelism {
                node: node.name.clone(),
                p,
                max: perf::max_parallelism(graph, n),
            });
        }
        let p = p as usize;
        let c_fix = perf::fixed_depth(node.kind());
        let inp = graph.input_shape(n);
        let out = graph.output_shape(n).ok_or(SimError::Unshaped)?;
        let in_fracs: Vec<i32> = node.inputs.iter().map(|e| plan.frac(graph.edge(*e).from)).collect();
        let stage = p * (c_fix as usize + 1);
        let (behavior, cap) = match &node.op {
            Op::Input { .. } => (Behavior::Source { frames: Vec::new(), frame: 0, pos: 0 }, stage),
            Op::Output => (
                Behavior::Sink { shape: out, current: Vec::new(), frames: Vec::new(), done: Vec::new() },
                stage,
            ),
            Op::Convolution { window, .. } | Op::MaxPool { window } => {
                let inp = inp.ok_or(SimError::Unshaped)?;
                let conv = match node.kind() {
                    OpKind::Convolution => {
                        Some(plan.conv(n).ok_or_else(|| SimError::MissingPlan(node.name.clone()))?.clone())
                    }
                    _ => None,
                };
                let engine = WindowEngine::new(*window, inp, out, conv, bits);
                let block = engine.block();
                (Behavior::Window(engine), 2 * block + stage)
            }
            Op::Resize { scale } => {
                let inp = inp.ok_or(SimError::Unshaped)?;
                if *scale == 0 {
                    return Err(SimError::Unsupported { node: node.name.clone(), reason: "zero scale".into() });
                }
                (Behavior::Resize(ResizeEngine::new(*scale, inp.w, inp.c)), stage)
            }
            Op::Split { .. } => {
                let inp = inp.ok_or(SimError::Unshaped)?;
                let sizes = graph.split_channels(n, inp.c).ok_or_else(|| SimError::Unsupported {
                    node: node.name.clone(),
                    reason: "channel partition does not match outputs".into(),
                })?;
                let ports = sizes.iter().map(|&c| Emitter::new(c.max(stage))).collect();
                (Behavior::Split { cursor: PortCursor::new(sizes), ports }, 0)
            }
            Op::Concat => {
                let shapes = graph.input_shapes(n).ok_or(SimError::Unshaped)?;
                let sizes: Vec<usize> = shapes.iter().map(|s| s.c).collect();
                let caps = sizes.iter().map(|&c| c.max(p)).collect();
                let buffers = sizes.iter().map(|_| VecDeque::new()).collect();
                (
                    Behavior::Concat {
                        cursor: PortCursor::new(sizes),
                        buffers,
                        caps,
                        fracs: in_fracs,
                        frac: plan.frac(n),
                    },
                    stage,
                )
            }
            Op::Add => (Behavior::Add { fracs: in_fracs, frac: plan.frac(n) }, stage),
            Op::HardSwish => (Behavior::HardSwish { frac: in_fracs[0] }, stage),
            Op::LeakyRelu { .. } => {
                let slope = plan.slope(n).ok_or_else(|| SimError::MissingPlan(node.name.clone()))?;
                (Behavior::LeakyRelu { slope }, stage)
            }
        };
        procs.push(Process {
            node: n,
            p,
            c_fix,
            bits,
            inputs: node.inputs.clone(),
            outputs: node.outputs.clone(),
            emit: Emitter::new(cap),
            behavior,
            consumed: 0,
            produced: 0,
        });
    }
    let mut links = Vec::with_capacity(graph.edges().len());
    for e in graph.edge_ids() {
        let mut cap = default_capacity(dp, graph, e);
        let skip = graph.is_skip_edge(e);
        if skip {
            match &config.skip_capacity {
                SkipCapacity::Default => {}
                SkipCapacity::Unbounded => cap = UNBOUNDED,
                SkipCapacity::Depths(d) => cap = cap.max(d.get(e).unwrap_or(0) as usize),
            }
        }
        if let Some(&c) = config.capacity.get(&e) {
            cap = c;
        }
        let off = skip && dp.placement(e) == Placement::Off && config.skip_capacity != SkipCapacity::Unbounded;
        let link = if off {
            let words = graph.edge_shape(e).map(|s| s.elements()).unwrap_or(1);
            let chunk = config.chunk_size.max(1);
            let cfg = SoftFifoConfig { depth: soft_fifo::chunks_for(words, chunk), chunk_size: chunk };
            Link::OffChip(Box::new(SoftFifo::new(cfg, config.dma, words as u64)))
        } else {
            Link::OnChip(Channel::new(cap))
        };
        links.push(link);
    }
    Ok(Pipeline { graph: graph.clone(), procs, links, config: config.clone() })
}

/// One channel involved in a deadlock.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockedChannel {
    pub edge: String,
    pub occupancy: usize,
    pub capacity: usize,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Deadlock {
    pub cycle: u64,
    /// Processes with unfinished work and why they cannot move.
    pub blocked_nodes: Vec<(String, String)>,
    pub channels: Vec<BlockedChannel>,
}

impl fmt::Display for Deadlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "deadlock at cycle {}:", self.cycle)?;
        for (n, why) in &self.blocked_nodes {
            write!(f, " {n} ({why});")?;
        }
        for c in &self.channels {
            write!(f, " {} {}/{} {};", c.edge, c.occupancy, c.capacity, c.state)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TracePoint {
    pub cycle: u64,
    pub edge: u32,
    pub occupancy: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Per `Output` node, one tensor per completed frame.
    pub outputs: BTreeMap<NodeId, Vec<RefTensor<i64>>>,
    /// Cycle at which the last frame left the pipeline.
    pub cycles_total: u64,
    /// Interval between the last two frame completions; with one frame, the
    /// span between the first and last output word.
    pub cycles_steady: u64,
    /// Completion cycle of each frame (latest over all outputs).
    pub frame_done: Vec<u64>,
    /// High-water occupancy of every skip edge.
    pub depths: DepthReport,
    /// High-water occupancy per edge.
    pub high_water: Vec<usize>,
    pub pushes: Vec<u64>,
    pub pops: Vec<u64>,
    /// Peak words held by each windowed node's line buffer.
    pub window_peak: BTreeMap<NodeId, usize>,
    /// Words consumed and produced per node.
    pub flow: Vec<(u64, u64)>,
    pub deadlock: Option<Deadlock>,
    pub trace: Vec<TracePoint>,
    /// Largest off-chip words per cycle moved by soft FIFOs together.
    pub offchip_peak_words_per_cycle: f64,
}

impl SimResult {
    pub fn deadlocked(&self) -> bool {
        self.deadlock.is_some()
    }

    /// Output tensors of the first frame.
    pub fn first_frame(&self) -> BTreeMap<NodeId, RefTensor<i64>> {
        self.outputs.iter().filter_map(|(n, f)| f.first().map(|t| (*n, t.clone()))).collect()
    }
}

/// Stream `frames` through the pipeline until every output has every frame
/// or nothing can move.
pub fn run_sim(pipeline: &Pipeline, frames: &[RefTensor<i64>]) -> Result<SimResult, SimError> {
    let mut pl = pipeline.clone();
    let graph = &pipeline.graph;
    let input = graph.input_node().ok_or(SimError::Unshaped)?;
    let expected = graph.output_shape(input).ok_or(SimError::Unshaped)?;
    for f in frames {
        if f.shape != expected {
            return Err(SimError::InputShape { expected, found: f.shape });
        }
    }
    for proc in &mut pl.procs {
        if let Behavior::Source { frames: src, .. } = &mut proc.behavior {
            *src = frames.to_vec();
        }
    }
    let target = frames.len();
    let mut trace = Vec::new();
    let mut last_occ: Vec<usize> = vec![0; pl.links.len()];
    let mut first_out: Option<u64> = None;
    let mut last_out = 0u64;
    let mut now = 0u64;
    let mut deadlock = None;
    let sinks_done = |procs: &[Process]| {
        procs.iter().all(|p| match &p.behavior {
            Behavior::Sink { frames, .. } => frames.len() >= target,
            _ => true,
        })
    };
    while !sinks_done(&pl.procs) {
        if now >= pl.config.max_cycles {
            return Err(SimError::CycleLimit(now));
        }
        for l in &mut pl.links {
            l.begin_cycle();
        }
        let mut timers = false;
        for proc in &mut pl.procs {
            let before = proc.consumed;
            timers |= proc.step(now, &mut pl.links);
            if matches!(proc.behavior, Behavior::Sink { .. }) && proc.consumed > before {
                first_out.get_or_insert(now);
                last_out = now;
            }
        }
        let mut moved = false;
        for (i, l) in pl.links.iter_mut().enumerate() {
            moved |= l.commit(now);
            timers |= l.busy(now);
            if pl.config.trace {
                let occ = l.occupancy();
                if occ != last_occ[i] {
                    trace.push(TracePoint { cycle: now, edge: i as u32, occupancy: occ as u32 });
                    last_occ[i] = occ;
                }
            }
        }
        if !moved && !timers && !sinks_done(&pl.procs) {
            deadlock = Some(diagnose(&pl, now));
            break;
        }
        now += 1;
    }
    Ok(collect(pl, now, first_out, last_out, deadlock, trace))
}

fn diagnose(pl: &Pipeline, now: u64) -> Deadlock {
    let g = &pl.graph;
    let mut blocked_nodes = Vec::new();
    let mut edges = alloc::collections::BTreeSet::new();
    for proc in &pl.procs {
        let finished = match &proc.behavior {
            Behavior::Source { frames, frame, .. } => *frame >= frames.len() && proc.emit.is_empty(),
            Behavior::Sink { .. } => false,
            _ => proc.internal_words() == 0 && proc.inputs.iter().all(|e| pl.links[e.0].available() == 0),
        };
        if finished {
            continue;
        }
        if let Some(why) = proc.stall_reason(now, &pl.links) {
            blocked_nodes.push((g.node(proc.node).name.clone(), why.into()));
            edges.extend(proc.inputs.iter().chain(&proc.outputs).copied());
        }
    }
    let channels = edges
        .into_iter()
        .filter_map(|e: EdgeId| {
            let l = &pl.links[e.0];
            let state = if l.space() == 0 {
                "full"
            } else if l.available() == 0 {
                "empty"
            } else {
                return None;
            };
            Some(BlockedChannel {
                edge: g.edge_name(e),
                occupancy: l.occupancy(),
                capacity: l.capacity(),
                state: state.into(),
            })
        })
        .collect();
    Deadlock { cycle: now, blocked_nodes, channels }
}

fn collect(
    pl: Pipeline,
    now: u64,
    first_out: Option<u64>,
    last_out: u64,
    deadlock: Option<Deadlock>,
    trace: Vec<TracePoint>,
) -> SimResult {
    let g = &pl.graph;
    let mut outputs = BTreeMap::new();
    let mut frame_done: Vec<u64> = Vec::new();
    let mut window_peak = BTreeMap::new();
    for proc in &pl.procs {
        match &proc.behavior {
            Behavior::Sink { frames, done, .. } => {
                outputs.insert(proc.node, frames.clone());
                for (i, &d) in done.iter().enumerate() {
                    if i < frame_done.len() {
                        frame_done[i] = frame_done[i].max(d);
                    } else {
                        frame_done.push(d);
                    }
                }
            }
            Behavior::Window(w) => {
                window_peak.insert(proc.node, w.peak);
            }
            _ => {}
        }
    }
    let cycles_total = frame_done.last().copied().unwrap_or(now);
    let cycles_steady = match frame_done.len() {
        0 => 0,
        1 => last_out - first_out.unwrap_or(0) + 1,
        n => frame_done[n - 1] - frame_done[n - 2],
    };
    let depths = DepthReport {
        depths: g.skip_edges().into_iter().map(|e| (e, pl.links[e.0].high_water() as u64)).collect(),
        source: DepthSource::Measured,
    };
    let offchip_peak_words_per_cycle = pl
        .links
        .iter()
        .map(|l| match l {
            Link::OffChip(f) => f.peak_words_per_cycle,
            _ => 0.0,
        })
        .sum();
    SimResult {
        outputs,
        cycles_total,
        cycles_steady,
        frame_done,
        depths,
        high_water: pl.links.iter().map(Link::high_water).collect(),
        pushes: pl.links.iter().map(Link::pushes).collect(),
        pops: pl.links.iter().map(Link::pops).collect(),
        window_peak,
        flow: pl.procs.iter().map(|p| (p.consumed, p.produced)).collect(),
        deadlock,
        trace,
        offchip_peak_words_per_cycle,
    }
}

/// Required skip-buffer depths: run with unbounded skip channels (all other
/// channels at their normal capacity) and record each one's high-water mark.
/// Re-running with those capacities reproduces the same schedule.
pub fn measure_fifo_depths(
    graph: &NetworkGraph,
    dp: &DesignPoint,
    plan: &QuantPlan,
    frames: &[RefTensor<i64>],
) -> Result<(DepthReport, SimResult), SimError> {
    let cfg = PipelineConfig { skip_capacity: SkipCapacity::Unbounded, ..Default::default() };
    let pl = build_pipeline(graph, dp, plan, &cfg)?;
    let res = run_sim(&pl, frames)?;
    Ok((res.depths.clone(), res))
}
