//! Analytic models of latency, DSP usage, on-chip memory and off-chip bandwidth
//! for a design point.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::dse::DepthReport;
use crate::graph::{EdgeId, NetworkGraph, NodeId, Op, OpKind, TensorShape};
use crate::quant::QuantConfig;

/// FPGA resource budget.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlatformSpec {
    pub dsp_total: u64,
    pub onchip_bits: u64,
    /// Hz.
    pub f_clk: f64,
    /// bits/s.
    pub offchip_bw: f64,
    /// Words per DMA burst.
    pub dma_burst: u64,
}

impl PlatformSpec {
    pub fn check(&self) -> Result<(), PerfError> {
        let ok = self.dsp_total > 0
            && self.onchip_bits > 0
            && self.f_clk > 0.0
            && self.f_clk.is_finite()
            && self.offchip_bw > 0.0
            && self.offchip_bw.is_finite()
            && self.dma_burst > 0;
        if ok {
            Ok(())
        } else {
            Err(PerfError::Platform)
        }
    }

    /// Off-chip words of `bits` width transferable per clock cycle.
    pub fn offchip_words_per_cycle(&self, bits: u32) -> f64 {
        self.offchip_bw / (bits as f64 * self.f_clk)
    }
}

/// Where a skip-connection buffer lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Placement {
    On,
    Off,
}

/// Decision variables: per-node parallelism and per-skip-edge placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignPoint {
    /// Indexed by node id.
    pub parallelism: Vec<u64>,
    pub buffers: BTreeMap<EdgeId, Placement>,
}

impl DesignPoint {
    /// All parallelism 1, every skip buffer on-chip.
    pub fn baseline(graph: &NetworkGraph) -> Self {
        Self {
            parallelism: alloc::vec![1; graph.len()],
            buffers: graph.skip_edges().into_iter().map(|e| (e, Placement::On)).collect(),
        }
    }

    pub fn p(&self, n: NodeId) -> u64 {
        self.parallelism[n.0]
    }

    pub fn placement(&self, e: EdgeId) -> Placement {
        self.buffers.get(&e).copied().unwrap_or(Placement::On)
    }

    /// Check coverage, divisor rule and the skip-edge key set.
    pub fn check(&self, graph: &NetworkGraph) -> Result<(), PerfError> {
        if self.parallelism.len() != graph.len() {
            return Err(PerfError::Coverage);
        }
        for n in graph.node_ids() {
            let p = self.p(n);
            if !valid_parallelism(graph, n, p) {
                return Err(PerfError::Parallelism {
                    node: graph.node(n).name.clone(),
                    p,
                    max: max_parallelism(graph, n),
                });
            }
        }
        let skips = graph.skip_edges();
        if self.buffers.len() != skips.len() || skips.iter().any(|e| !self.buffers.contains_key(e)) {
            return Err(PerfError::BufferKeys);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerfError {
    Platform,
    Unshaped,
    Coverage,
    Parallelism { node: String, p: u64, max: u64 },
    BufferKeys,
    MissingDepth(String),
}

impl fmt::Display for PerfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerfError::Platform => f.write_str("platform fields must all be strictly positive"),
            PerfError::Unshaped => f.write_str("graph shapes have not been inferred"),
            PerfError::Coverage => f.write_str("design point does not cover every node"),
            PerfError::Parallelism { node, p, max } => {
                write!(f, "parallelism {p} of `{node}` must divide its workload dimension {max}")
            }
            PerfError::BufferKeys => f.write_str("buffer placements must cover exactly the skip edges"),
            PerfError::MissingDepth(e) => write!(f, "no buffer depth for on-chip skip edge `{e}`"),
        }
    }
}

impl core::error::Error for PerfError {}

/// Fixed pipeline latency per kind, in cycles.
pub const fn fixed_depth(kind: OpKind) -> u64 {
    if kind.is_routing() {
        2
    } else {
        4
    }
}

fn shapes(graph: &NetworkGraph, n: NodeId) -> (TensorShape, TensorShape) {
    let inp = graph.input_shape(n).or_else(|| graph.output_shape(n)).expect("shaped graph");
    let out = graph.output_shape(n).unwrap_or(inp);
    (inp, out)
}

/// Largest useful parallelism: the dimension `p` unrolls.
pub fn max_parallelism(graph: &NetworkGraph, n: NodeId) -> u64 {
    let (inp, out) = shapes(graph, n);
    match &graph.node(n).op {
        Op::Convolution { filters, .. } => (inp.c * filters) as u64,
        Op::Concat | Op::Resize { .. } | Op::Input { .. } => out.c as u64,
        _ => inp.c as u64,
    }
}

pub fn valid_parallelism(graph: &NetworkGraph, n: NodeId, p: u64) -> bool {
    p >= 1 && max_parallelism(graph, n).is_multiple_of(p)
}

/// Valid parallelism values for a node, ascending.
pub fn parallelism_options(graph: &NetworkGraph, n: NodeId) -> Vec<u64> {
    let m = max_parallelism(graph, n);
    (1..=m).filter(|d| m.is_multiple_of(*d)).collect()
}

/// Words of work for one frame at parallelism 1. A windowed node is bounded by
/// reading its input and by producing its outputs; the two coincide for
/// stride-1 same-padded layers.
pub fn workload(graph: &NetworkGraph, n: NodeId) -> u64 {
    let (inp, out) = shapes(graph, n);
    let w = match &graph.node(n).op {
        Op::Convolution { filters, .. } => {
            inp.elements().max(out.h * out.w * inp.c * filters)
        }
        Op::MaxPool { .. } => inp.elements().max(out.elements()),
        Op::Resize { .. } | Op::Concat | Op::Input { .. } => out.elements(),
        _ => inp.elements(),
    };
    w as u64
}

/// Cycles for one frame through node `n` at parallelism `p`.
pub fn node_latency_cycles(graph: &NetworkGraph, n: NodeId, p: u64) -> f64 {
    workload(graph, n) as f64 / p as f64
}

/// Seconds for one frame through node `n`.
pub fn node_latency(graph: &NetworkGraph, n: NodeId, p: u64, f_clk: f64) -> f64 {
    node_latency_cycles(graph, n, p) / f_clk
}

/// Words a node must receive before it can emit its first output.
pub fn fill_words(graph: &NetworkGraph, n: NodeId) -> u64 {
    let (inp, _) = shapes(graph, n);
    match &graph.node(n).op {
        Op::Convolution { window, .. } | Op::MaxPool { window } => {
            let rows = (window.kernel - 1).saturating_sub(window.padding.top);
            let cols = window.kernel.saturating_sub(window.padding.left).max(1);
            ((rows * inp.w + cols) * inp.c) as u64
        }
        Op::Resize { .. } => (inp.w * inp.c) as u64,
        _ => 0,
    }
}

/// Pipeline depth in cycles: window fill at `p` words per cycle plus a fixed
/// per-kind latency.
pub fn pipeline_depth(graph: &NetworkGraph, n: NodeId, p: u64) -> u64 {
    let kind = graph.node(n).kind();
    fill_words(graph, n).div_ceil(p) + fixed_depth(kind)
}

/// Pipeline depth of every node in context. The window fill arrives no
/// faster than the slowest upstream node can produce it, so a node fed by a
/// slow producer waits `fill · l_up / input_words` cycles rather than
/// `fill / p`. Equals [`pipeline_depth`] whenever the upstream keeps up.
pub fn stream_depths(graph: &NetworkGraph, p: &[u64]) -> Vec<u64> {
    let mut up = vec![0.0f64; graph.len()];
    let mut depth = vec![0u64; graph.len()];
    for &n in graph.topo_order() {
        up[n.0] = graph
            .node(n)
            .inputs
            .iter()
            .map(|e| {
                let m = graph.edge(*e).from;
                up[m.0].max(node_latency_cycles(graph, m, p[m.0]))
            })
            .fold(0.0, f64::max);
        let fill = fill_words(graph, n);
        let own = pipeline_depth(graph, n, p[n.0]);
        let inp = shapes(graph, n).0.elements() as f64;
        let fed = libm::ceil(fill as f64 * up[n.0] / inp.max(1.0)) as u64 + fixed_depth(graph.node(n).kind());
        depth[n.0] = own.max(fed);
    }
    depth
}

/// End-to-end seconds: slowest node plus the in-context depth of every node.
pub fn total_latency(graph: &NetworkGraph, dp: &DesignPoint, platform: &PlatformSpec) -> f64 {
    let d = stream_depths(graph, &dp.parallelism);
    total_latency_with(graph, dp, platform.f_clk, |n| d[n.0] as f64)
}

/// As [`total_latency`] with pipeline depths supplied by the caller, for
/// example from simulator measurements.
pub fn total_latency_with(
    graph: &NetworkGraph,
    dp: &DesignPoint,
    f_clk: f64,
    depth: impl Fn(NodeId) -> f64,
) -> f64 {
    let (max, sum) = graph.node_ids().fold((0.0f64, 0.0f64), |(max, sum), n| {
        (max.max(node_latency_cycles(graph, n, dp.p(n))), sum + depth(n))
    });
    (max + sum) / f_clk
}

/// Bottleneck node and its cycle count.
pub fn bottleneck(graph: &NetworkGraph, dp: &DesignPoint) -> (NodeId, f64) {
    graph
        .node_ids()
        .map(|n| (n, node_latency_cycles(graph, n, dp.p(n))))
        .fold((NodeId(0), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

pub fn dsp_usage(graph: &NetworkGraph, n: NodeId, p: u64) -> u64 {
    match &graph.node(n).op {
        Op::Convolution { window, .. } => (window.kernel * window.kernel) as u64 * p,
        Op::HardSwish => 2 * p,
        Op::LeakyRelu { .. } => p,
        _ => 0,
    }
}

pub fn total_dsp(graph: &NetworkGraph, dp: &DesignPoint) -> u64 {
    graph.node_ids().map(|n| dsp_usage(graph, n, dp.p(n))).sum()
}

/// Off-chip traffic of one buffer: written once and read once per frame.
pub fn buffer_bandwidth(words: u64, placement: Placement, latency: f64, a_bits: u32) -> f64 {
    match placement {
        Placement::Off => 2.0 * words as f64 * a_bits as f64 / latency,
        Placement::On => 0.0,
    }
}

/// On-chip bits of one skip buffer.
pub fn buffer_size(depth: u64, placement: Placement, a_bits: u32) -> u64 {
    match placement {
        Placement::On => depth * a_bits as u64,
        Placement::Off => 0,
    }
}

/// Bits of the fixed (placement-independent) memory classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StaticMemory {
    pub weights: u64,
    /// Sliding-window line buffers.
    pub line_buffers: u64,
    /// Per-input channel buffers of `Concat` nodes.
    pub concat_buffers: u64,
}

impl StaticMemory {
    pub fn window(&self) -> u64 {
        self.line_buffers + self.concat_buffers
    }

    pub fn total(&self) -> u64 {
        self.weights + self.window()
    }
}

pub fn static_memory(graph: &NetworkGraph, qc: &QuantConfig) -> StaticMemory {
    let mut m = StaticMemory::default();
    let (ww, wa) = (qc.w_bits as u64, qc.a_bits as u64);
    for n in graph.node_ids() {
        let (inp, _) = shapes(graph, n);
        match &graph.node(n).op {
            Op::Convolution { window, filters, .. } => {
                let k = window.kernel as u64;
                m.weights += *filters as u64 * inp.c as u64 * k * k * ww;
                m.line_buffers += (k - 1) * (inp.w * inp.c) as u64 * wa;
            }
            Op::MaxPool { window } => {
                m.line_buffers += (window.kernel as u64 - 1) * (inp.w * inp.c) as u64 * wa;
            }
            Op::Concat => {
                let ins = graph.input_shapes(n).unwrap_or_default();
                m.concat_buffers += ins.iter().map(|s| s.c as u64).sum::<u64>() * wa;
            }
            _ => {}
        }
    }
    m
}

/// On-chip memory left for skip buffers.
pub fn available_for_skip(graph: &NetworkGraph, platform: &PlatformSpec, qc: &QuantConfig) -> i128 {
    platform.onchip_bits as i128 - static_memory(graph, qc).total() as i128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemoryBreakdown {
    pub weights: u64,
    /// Line buffers plus concat channel buffers.
    pub window: u64,
    pub concat: u64,
    pub skip: u64,
}

impl MemoryBreakdown {
    pub fn total(&self) -> u64 {
        self.weights + self.window + self.skip
    }

    /// Fractions of the total for weights, window and skip memory.
    pub fn shares(&self) -> [f64; 3] {
        let t = self.total().max(1) as f64;
        [self.weights as f64 / t, self.window as f64 / t, self.skip as f64 / t]
    }
}

pub fn memory_breakdown(
    graph: &NetworkGraph,
    dp: &DesignPoint,
    qc: &QuantConfig,
    depths: &DepthReport,
) -> Result<MemoryBreakdown, PerfError> {
    let st = static_memory(graph, qc);
    let mut skip = 0;
    for e in graph.skip_edges() {
        let placement = dp.placement(e);
        if placement == Placement::Off {
            continue;
        }
        let q = depths.get(e).ok_or_else(|| PerfError::MissingDepth(graph.edge_name(e)))?;
        skip += buffer_size(q, placement, qc.a_bits);
    }
    Ok(MemoryBreakdown { weights: st.weights, window: st.window(), concat: st.concat_buffers, skip })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodePerf {
    pub name: String,
    pub kind: String,
    pub parallelism: u64,
    pub latency_s: f64,
    pub latency_cycles: f64,
    pub depth_cycles: u64,
    pub dsp: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgePerf {
    pub name: String,
    pub placement: Placement,
    /// Words per frame crossing the edge.
    pub words: u64,
    /// Required buffer depth in words.
    pub depth: u64,
    pub onchip_bits: u64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerfReport {
    pub nodes: Vec<NodePerf>,
    pub total_latency: f64,
    pub bottleneck: String,
    pub dsp_used: u64,
    pub dsp_total: u64,
    pub memory: MemoryBreakdown,
    pub mem_total: u64,
    pub onchip_bits: u64,
    /// Weight, window and skip fractions of `mem_total`.
    pub shares: [f64; 3],
    /// Equivalent count of 36 Kbit block RAMs (informational).
    pub bram36: u64,
    /// Input and output streams.
    pub io_bandwidth: f64,
    pub offchip_bw_used: f64,
    pub edges: Vec<EdgePerf>,
}

pub const BRAM36_BITS: u64 = 36 * 1024;

/// Full model evaluation of a design point.
pub fn evaluate(
    graph: &NetworkGraph,
    dp: &DesignPoint,
    platform: &PlatformSpec,
    qc: &QuantConfig,
    depths: &DepthReport,
) -> Result<PerfReport, PerfError> {
    if !graph.is_shaped() {
        return Err(PerfError::Unshaped);
    }
    dp.check(graph)?;
    let latency = total_latency(graph, dp, platform);
    let depth = stream_depths(graph, &dp.parallelism);
    let nodes: Vec<NodePerf> = graph
        .node_ids()
        .map(|n| {
            let p = dp.p(n);
            NodePerf {
                name: graph.node(n).name.clone(),
                kind: graph.node(n).kind().name().into(),
                parallelism: p,
                latency_s: node_latency(graph, n, p, platform.f_clk),
                latency_cycles: node_latency_cycles(graph, n, p),
                depth_cycles: depth[n.0],
                dsp: dsp_usage(graph, n, p),
            }
        })
        .collect();
    let memory = memory_breakdown(graph, dp, qc, depths)?;
    let edges: Vec<EdgePerf> = graph
        .skip_edges()
        .into_iter()
        .map(|e| {
            let placement = dp.placement(e);
            let words = graph.edge_shape(e).map(|s| s.elements() as u64).unwrap_or(0);
            let depth = depths.get(e).unwrap_or(0);
            EdgePerf {
                name: graph.edge_name(e),
                placement,
                words,
                depth,
                onchip_bits: buffer_size(depth, placement, qc.a_bits),
                bandwidth: buffer_bandwidth(words, placement, latency, qc.a_bits),
            }
        })
        .collect();
    let io_bandwidth = io_bandwidth(graph, latency, qc.a_bits);
    let offchip_bw_used = io_bandwidth + edges.iter().map(|e| e.bandwidth).sum::<f64>();
    let (b, _) = bottleneck(graph, dp);
    let mem_total = memory.total();
    Ok(PerfReport {
        nodes,
        total_latency: latency,
        bottleneck: graph.node(b).name.clone(),
        dsp_used: total_dsp(graph, dp),
        dsp_total: platform.dsp_total,
        memory,
        mem_total,
        onchip_bits: platform.onchip_bits,
        shares: memory.shares(),
        bram36: mem_total.div_ceil(BRAM36_BITS),
        io_bandwidth,
        offchip_bw_used,
        edges,
    })
}

/// Bandwidth of streaming the input frame in and every output back out.
pub fn io_bandwidth(graph: &NetworkGraph, latency: f64, a_bits: u32) -> f64 {
    let words: usize = graph
        .node_ids()
        .filter(|&n| matches!(graph.node(n).kind(), OpKind::Input | OpKind::Output))
        .filter_map(|n| graph.output_shape(n))
        .map(|s| s.elements())
        .sum();
    words as f64 * a_bits as f64 / latency
}
