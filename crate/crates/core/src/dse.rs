//! Design space exploration: greedy DSP allocation, largest-first skip-buffer
//! eviction, exhaustive oracles for both, and analytic skip-buffer depths.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::graph::{EdgeId, NetworkGraph, NodeId};
use crate::perf::{
    self, available_for_skip, dsp_usage, node_latency_cycles, parallelism_options, stream_depths, total_dsp,
    DesignPoint, Placement, PlatformSpec,
};
use crate::quant::QuantConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DseConfig {
    pub lambda: f64,
    pub max_iterations: usize,
}

impl Default for DseConfig {
    fn default() -> Self {
        Self { lambda: 0.0, max_iterations: 1_000_000 }
    }
}

/// How a depth report was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DepthSource {
    #[default]
    Analytic,
    Measured,
}

/// Required buffer depth in words per skip edge.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DepthReport {
    pub depths: BTreeMap<EdgeId, u64>,
    pub source: DepthSource,
}

impl DepthReport {
    pub fn get(&self, e: EdgeId) -> Option<u64> {
        self.depths.get(&e).copied()
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn covers(&self, graph: &NetworkGraph) -> bool {
        let skips = graph.skip_edges();
        skips.len() == self.depths.len() && skips.iter().all(|e| self.depths.contains_key(e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DseError {
    /// The all-ones design already needs more DSPs than available.
    DspInfeasible { required: u64, available: u64 },
    /// Static memory alone exceeds the on-chip capacity.
    MemoryInfeasible { static_bits: u64, available: u64 },
    MissingDepth(EdgeId),
    SearchTooLarge { size: u128, bound: u128 },
    Unshaped,
}

impl fmt::Display for DseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DseError::DspInfeasible { required, available } => write!(
                f,
                "infeasible: minimum design needs {required} DSPs but only {available} are available (deficit {})",
                required - available
            ),
            DseError::MemoryInfeasible { static_bits, available } => write!(
                f,
                "infeasible: weights and window buffers need {static_bits} bits, on-chip capacity is {available}"
            ),
            DseError::MissingDepth(e) => write!(f, "no depth for skip edge {}", e.0),
            DseError::SearchTooLarge { size, bound } => {
                write!(f, "search space of {size} candidates exceeds bound {bound}")
            }
            DseError::Unshaped => f.write_str("graph shapes have not been inferred"),
        }
    }
}

impl core::error::Error for DseError {}

fn check_minimum(graph: &NetworkGraph, platform: &PlatformSpec) -> Result<(), DseError> {
    if !graph.is_shaped() {
        return Err(DseError::Unshaped);
    }
    let required = total_dsp(graph, &DesignPoint::baseline(graph));
    if required > platform.dsp_total {
        return Err(DseError::DspInfeasible { required, available: platform.dsp_total });
    }
    Ok(())
}

/// Give every node that uses no DSPs the smallest valid parallelism that
/// keeps it at or below the slowest DSP-consuming node (its largest option if
/// none does). Such nodes cost nothing to widen, so they follow the compute
/// nodes instead of throttling them. Without DSP-consuming nodes nothing
/// changes.
pub fn match_rates(graph: &NetworkGraph, p: &mut [u64]) {
    let target = graph
        .node_ids()
        .filter(|&n| dsp_usage(graph, n, 1) > 0)
        .map(|n| node_latency_cycles(graph, n, p[n.0]))
        .fold(f64::NAN, f64::max);
    if target.is_nan() {
        return;
    }
    for n in graph.node_ids().filter(|&n| dsp_usage(graph, n, 1) == 0) {
        let opts = parallelism_options(graph, n);
        p[n.0] = opts
            .iter()
            .copied()
            .find(|&o| node_latency_cycles(graph, n, o) <= target * (1.0 + 1e-12))
            .unwrap_or(*opts.last().expect("at least parallelism 1"));
    }
}

/// Total latency in cycles of a parallelism vector.
pub fn latency_cycles(graph: &NetworkGraph, p: &[u64]) -> f64 {
    let max = graph.node_ids().map(|n| node_latency_cycles(graph, n, p[n.0])).fold(0.0, f64::max);
    max + stream_depths(graph, p).iter().sum::<u64>() as f64
}

fn next_option(graph: &NetworkGraph, n: NodeId, p: u64) -> Option<u64> {
    let max = perf::max_parallelism(graph, n);
    (p + 1..=max).find(|d| max.is_multiple_of(*d))
}

/// Per-iteration record of the greedy allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    pub node: NodeId,
    pub parallelism: u64,
    pub latency_cycles: f64,
    pub bottleneck_cycles: f64,
    pub dsp_used: u64,
}

/// Greedy DSP allocation. Each iteration raises the parallelism of the node
/// whose next valid step most reduces total latency, among steps that fit
/// the budget and consume DSPs. Ties go to the lowest node index. Nodes that
/// use no DSPs are rate-matched after every step (see [`match_rates`]).
pub fn allocate_dsp(
    graph: &NetworkGraph,
    platform: &PlatformSpec,
    cfg: &DseConfig,
) -> Result<Vec<u64>, DseError> {
    allocate_dsp_traced(graph, platform, cfg).map(|(p, _)| p)
}

pub fn allocate_dsp_traced(
    graph: &NetworkGraph,
    platform: &PlatformSpec,
    cfg: &DseConfig,
) -> Result<(Vec<u64>, Vec<GreedyStep>), DseError> {
    check_minimum(graph, platform)?;
    let mut p = vec![1u64; graph.len()];
    match_rates(graph, &mut p);
    let mut used: u64 = graph.node_ids().map(|n| dsp_usage(graph, n, 1)).sum();
    let mut trace = Vec::new();
    let eval = |p: &[u64]| {
        let mut m = p.to_vec();
        match_rates(graph, &mut m);
        latency_cycles(graph, &m)
    };
    for _ in 0..cfg.max_iterations {
        let base = eval(&p);
        let tol = base * 1e-12;
        let mut best: Option<(NodeId, u64, f64, u64)> = None;
        for n in graph.node_ids() {
            let cur = dsp_usage(graph, n, p[n.0]);
            if cur == 0 {
                continue;
            }
            let Some(next) = next_option(graph, n, p[n.0]) else { continue };
            let new_used = used - cur + dsp_usage(graph, n, next);
            if new_used > platform.dsp_total {
                continue;
            }
            let old = p[n.0];
            p[n.0] = next;
            let delta = base - eval(&p);
            p[n.0] = old;
            if best.is_none_or(|(_, _, d, _)| delta > d + tol) {
                best = Some((n, next, delta, new_used));
            }
        }
        let Some((n, next, _, new_used)) = best else { break };
        p[n.0] = next;
        match_rates(graph, &mut p);
        used = new_used;
        let bottleneck = graph.node_ids().map(|m| node_latency_cycles(graph, m, p[m.0])).fold(0.0, f64::max);
        trace.push(GreedyStep {
            node: n,
            parallelism: next,
            latency_cycles: latency_cycles(graph, &p),
            bottleneck_cycles: bottleneck,
            dsp_used: used,
        });
    }
    Ok((p, trace))
}

/// Default bound on the number of vectors the exhaustive search enumerates.
pub const EXHAUSTIVE_BOUND: u128 = 1_000_000;

/// Enumerate every divisor-valid parallelism vector within the DSP budget
/// and return the one with minimum total latency (first in lexicographic
/// order on ties). Nodes that consume no DSPs are rate-matched as in
/// [`allocate_dsp`].
pub fn exhaustive_dsp_search(
    graph: &NetworkGraph,
    platform: &PlatformSpec,
    bound: u128,
) -> Result<Vec<u64>, DseError> {
    check_minimum(graph, platform)?;
    let vars: Vec<(NodeId, Vec<u64>)> = graph
        .node_ids()
        .filter(|&n| dsp_usage(graph, n, 1) > 0)
        .map(|n| (n, parallelism_options(graph, n)))
        .collect();
    let size = vars.iter().fold(1u128, |a, (_, o)| a.saturating_mul(o.len() as u128));
    if size > bound {
        return Err(DseError::SearchTooLarge { size, bound });
    }
    let mut p = vec![1u64; graph.len()];
    let mut best = (f64::INFINITY, p.clone());
    search(graph, platform.dsp_total, &vars, 0, 0, &mut p, &mut best);
    Ok(best.1)
}

fn search(
    graph: &NetworkGraph,
    budget: u64,
    vars: &[(NodeId, Vec<u64>)],
    i: usize,
    used: u64,
    p: &mut Vec<u64>,
    best: &mut (f64, Vec<u64>),
) {
    if i == vars.len() {
        let mut m = p.clone();
        match_rates(graph, &mut m);
        let l = latency_cycles(graph, &m);
        if l < best.0 * (1.0 - 1e-12) {
            *best = (l, m);
        }
        return;
    }
    let (n, opts) = &vars[i];
    // DSPs still needed by later variables at parallelism 1.
    let rest: u64 = vars[i + 1..].iter().map(|(m, _)| dsp_usage(graph, *m, 1)).sum();
    for &o in opts {
        let u = used + dsp_usage(graph, *n, o);
        if u + rest > budget {
            break;
        }
        p[n.0] = o;
        search(graph, budget, vars, i + 1, u, p, best);
    }
    p[n.0] = 1;
}

/// Largest-first eviction over raw sizes: indices sorted by decreasing size
/// (stable), flipped OFF while the ON total exceeds `available`. Returns ON
/// flags per input position, or `None` when even all-OFF does not fit.
pub fn evict_largest_first(sizes: &[u64], available: i128) -> Option<Vec<bool>> {
    if available < 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut on = vec![true; sizes.len()];
    let mut total: i128 = sizes.iter().map(|&s| s as i128).sum();
    for i in order {
        if total <= available {
            break;
        }
        on[i] = false;
        total -= sizes[i] as i128;
    }
    Some(on)
}

/// Skip-buffer placement: start all on-chip and move the largest buffers
/// off-chip until the rest fit in the memory left after weights and windows.
pub fn allocate_buffers(
    graph: &NetworkGraph,
    depths: &DepthReport,
    platform: &PlatformSpec,
    qc: &QuantConfig,
) -> Result<BTreeMap<EdgeId, Placement>, DseError> {
    let skips = graph.skip_edges();
    let mut sizes = Vec::with_capacity(skips.len());
    for &e in &skips {
        let q = depths.get(e).ok_or(DseError::MissingDepth(e))?;
        sizes.push(perf::buffer_size(q, Placement::On, qc.a_bits));
    }
    let available = available_for_skip(graph, platform, qc);
    let on = evict_largest_first(&sizes, available).ok_or(DseError::MemoryInfeasible {
        static_bits: perf::static_memory(graph, qc).total(),
        available: platform.onchip_bits,
    })?;
    Ok(skips
        .into_iter()
        .zip(on)
        .map(|(e, on)| (e, if on { Placement::On } else { Placement::Off }))
        .collect())
}

/// What the exhaustive placement search minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlacementObjective {
    /// Off-chip bandwidth (in bits per frame) plus `lambda` per off-chip buffer.
    Weighted { lambda: f64 },
    /// Number of off-chip buffers, then off-chip words.
    MinCount,
}

/// Brute-force placement over at most 20 buffers. `sizes` are on-chip bits,
/// `words` the feature-map words crossing each edge. Returns ON flags.
pub fn exhaustive_placement(
    sizes: &[u64],
    words: &[u64],
    available: i128,
    a_bits: u32,
    objective: PlacementObjective,
) -> Option<Vec<bool>> {
    assert!(sizes.len() == words.len() && sizes.len() <= 20, "at most 20 buffers");
    let n = sizes.len();
    let mut best: Option<((f64, f64), u32)> = None;
    for mask in 0u32..(1 << n) {
        // bit set = OFF
        let on_bits: i128 = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| sizes[i] as i128).sum();
        if on_bits > available {
            continue;
        }
        let count = mask.count_ones() as f64;
        let traffic: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| 2.0 * (words[i] * a_bits as u64) as f64).sum();
        let key = match objective {
            PlacementObjective::Weighted { lambda } => (traffic + lambda * count, count),
            PlacementObjective::MinCount => (count, traffic),
        };
        if best.is_none_or(|(k, _)| key < k) {
            best = Some((key, mask));
        }
    }
    best.map(|(_, mask)| (0..n).map(|i| mask & (1 << i) == 0).collect())
}

/// Model-only skip-buffer depths.
///
/// Each node lags the graph input by the fraction of a frame it must absorb
/// before emitting (its window fill over its input size); lags accumulate
/// along the slowest path. At a join, an input arriving `d` frames early must
/// hold `d` of a frame. That requirement is charged to the nearest upstream
/// skip edge of the early branch.
pub fn analytic_depths(graph: &NetworkGraph) -> DepthReport {
    let mut lag = vec![0.0f64; graph.len()];
    for &n in graph.topo_order() {
        let pred = graph.node(n).inputs.iter().map(|e| lag[graph.edge(*e).from.0]).fold(0.0, f64::max);
        let inp = graph.input_shape(n).map(|s| s.elements()).unwrap_or(1).max(1);
        lag[n.0] = pred + perf::fill_words(graph, n) as f64 / inp as f64;
    }
    let skips = graph.skip_edges();
    let mut need: BTreeMap<EdgeId, f64> = skips.iter().map(|&e| (e, 0.0)).collect();
    for n in graph.node_ids() {
        let ins = &graph.node(n).inputs;
        if ins.len() < 2 {
            continue;
        }
        let top = ins.iter().map(|e| lag[graph.edge(*e).from.0]).fold(0.0, f64::max);
        for &e in ins {
            let slack = top - lag[graph.edge(e).from.0];
            if slack <= 0.0 {
                continue;
            }
            if let Some(s) = upstream_skip(graph, e) {
                let v = need.get_mut(&s).expect("skip edge");
                *v = v.max(slack);
            }
        }
    }
    let depths = need
        .into_iter()
        .map(|(e, frac)| {
            let words = graph.edge_shape(e).map(|s| s.elements() as u64).unwrap_or(0);
            (e, (libm::ceil(frac * words as f64) as u64).min(words))
        })
        .collect();
    DepthReport { depths, source: DepthSource::Analytic }
}

fn upstream_skip(graph: &NetworkGraph, mut e: EdgeId) -> Option<EdgeId> {
    loop {
        if graph.is_skip_edge(e) {
            return Some(e);
        }
        let node = graph.node(graph.edge(e).from);
        if node.inputs.len() != 1 {
            return None;
        }
        e = node.inputs[0];
    }
}

/// Greedy DSP allocation followed by buffer placement.
pub fn explore(
    graph: &NetworkGraph,
    depths: &DepthReport,
    platform: &PlatformSpec,
    qc: &QuantConfig,
    cfg: &DseConfig,
) -> Result<DesignPoint, DseError> {
    let parallelism = allocate_dsp(graph, platform, cfg)?;
    let buffers = allocate_buffers(graph, depths, platform, qc)?;
    Ok(DesignPoint { parallelism, buffers })
}
