//! One function per subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use yoloflow_core::dse::{self, analytic_depths, DepthReport, DseConfig, DseError};
use yoloflow_core::gen::random_input;
use yoloflow_core::golden::{run_reference_quantized, RefTensor};
use yoloflow_core::graph::{infer_shapes, validate_graph, NetworkGraph, NodeId};
use yoloflow_core::perf::{buffer_size, evaluate, DesignPoint, PerfReport, Placement, PlatformSpec};
use yoloflow_core::plan::QuantPlan;
use yoloflow_core::quant::{quantize_tensor_with, QuantConfig, QuantizedTensor};
use yoloflow_core::sim::soft_fifo::DmaTiming;
use yoloflow_core::sim::{build_pipeline, run_sim, PipelineConfig, SimError, SimResult, SkipCapacity};
use yoloflow_core::weights::{resolve_weights, Tensor4};

use crate::container::{encode_quantized, encode_tensors, FixedTensor};
use crate::error::{CliError, ExitKind, Result};
use crate::formats::{self, depth_doc, design_doc};
use crate::network::load_network;
use crate::output::{config_hash, OutDir, RunManifest};
use crate::svg;

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub network: PathBuf,
    pub platform: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub w_bits: u32,
    pub a_bits: u32,
    pub seed: u64,
}

/// Shaped, validated network with resolved weights.
pub struct Loaded {
    pub name: Option<String>,
    pub graph: NetworkGraph,
    pub weights: BTreeMap<String, Tensor4>,
    pub qc: QuantConfig,
}

struct Run {
    out: OutDir,
    manifest: RunManifest,
}

impl Run {
    fn begin(command: &str, common: &Common, inputs: &[(&str, &Path)], extra: &[(&str, serde_json::Value)]) -> Result<Self> {
        let mut files = BTreeMap::from([("network".to_string(), common.network.display().to_string())]);
        for (role, p) in inputs {
            files.insert(role.to_string(), p.display().to_string());
        }
        let mut options = BTreeMap::from([
            ("w_bits".to_string(), json!(common.w_bits)),
            ("a_bits".to_string(), json!(common.a_bits)),
            ("seed".to_string(), json!(common.seed)),
        ]);
        for (k, v) in extra {
            options.insert(k.to_string(), v.clone());
        }
        let platform = common.platform.as_ref().map(|p| p.display().to_string());
        let hash = config_hash(command, &options, &files, platform.as_deref())?;
        let out = OutDir::create(&common.out_dir, hash.clone())?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash: hash,
            inputs: files,
            platform,
            options,
            timings_ms: Vec::new(),
            artifacts: Vec::new(),
        };
        Ok(Self { out, manifest })
    }

    fn finish(self) -> Result<()> {
        self.out.finish(self.manifest)
    }
}

pub fn load(common: &Common) -> Result<Loaded> {
    let doc = load_network(&common.network)?;
    let bad = |m: String| CliError::input("validate", m);
    let shape = doc
        .graph
        .declared_input_shape()
        .ok_or_else(|| bad("the Input node needs a `shape` of [h, w, c]".into()))?;
    let graph = infer_shapes(&doc.graph, shape).map_err(|e| bad(e.to_string()))?;
    let violations = validate_graph(&graph);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(bad(list.join("; ")));
    }
    let qc = QuantConfig::new(common.w_bits, common.a_bits).map_err(|e| CliError::input("quantize", e.to_string()))?;
    let weights = resolve_weights(&graph, common.seed).map_err(|e| CliError::input("weights", e.to_string()))?;
    Ok(Loaded { name: doc.name, graph, weights, qc })
}

fn need_platform(common: &Common) -> Result<PlatformSpec> {
    let p = common
        .platform
        .as_ref()
        .ok_or_else(|| CliError::input("platform", "this command needs --platform"))?;
    formats::load_platform(p)
}

fn input_shape(g: &NetworkGraph) -> yoloflow_core::graph::TensorShape {
    g.output_shape(g.input_node().expect("validated graph has an input")).expect("shaped")
}

/// Calibrate on a seeded random input in [-1, 1).
pub fn calibrate(l: &Loaded, seed: u64) -> Result<QuantPlan> {
    let x = random_input(&mut ChaCha8Rng::seed_from_u64(seed), input_shape(&l.graph));
    QuantPlan::calibrate(&l.graph, &l.weights, l.qc, &x)
        .map_err(|e| CliError::new("quantize", ExitKind::Failure, e.to_string()))
}

fn dse_error(stage: &'static str, e: DseError) -> CliError {
    let kind = match e {
        DseError::DspInfeasible { .. } | DseError::MemoryInfeasible { .. } => ExitKind::Infeasible,
        _ => ExitKind::Failure,
    };
    CliError::new(stage, kind, e.to_string())
}

fn sim_error(e: SimError) -> CliError {
    let kind = match e {
        SimError::Parallelism { .. } | SimError::Coverage | SimError::InputShape { .. } => ExitKind::Input,
        _ => ExitKind::Failure,
    };
    CliError::new("simulate", kind, e.to_string())
}

fn depths_or_analytic(g: &NetworkGraph, path: Option<&Path>) -> Result<DepthReport> {
    match path {
        Some(p) => formats::load_depths(g, p),
        None => Ok(analytic_depths(g)),
    }
}

fn fixed_outputs(g: &NetworkGraph, plan: &QuantPlan, outs: &BTreeMap<NodeId, RefTensor<i64>>) -> BTreeMap<String, FixedTensor> {
    outs.iter()
        .map(|(n, t)| (g.node(*n).name.clone(), FixedTensor { frac: plan.frac(*n), tensor: t.clone() }))
        .collect()
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    network: Option<&'a str>,
    depth_source: dse::DepthSource,
    #[serde(flatten)]
    report: &'a PerfReport,
}

fn evaluate_design(l: &Loaded, dp: &DesignPoint, platform: &PlatformSpec, depths: &DepthReport) -> Result<PerfReport> {
    evaluate(&l.graph, dp, platform, &l.qc, depths).map_err(|e| CliError::input("report", e.to_string()))
}

/// Report JSON, node and edge CSVs, memory and latency charts.
fn emit_report(out: &mut OutDir, l: &Loaded, report: &PerfReport, depths: &DepthReport) -> Result<()> {
    out.json("report.json", &ReportDoc { network: l.name.as_deref(), depth_source: depths.source, report })?;
    out.csv("nodes.csv", &report.nodes)?;
    out.csv("edges.csv", &report.edges)?;
    let m = &report.memory;
    let labels: Vec<String> = ["weights", "window", "concat", "skip"].iter().map(|s| s.to_string()).collect();
    let values = [m.weights, m.window - m.concat, m.concat, m.skip].map(|v| v as f64);
    out.bytes("memory.svg", svg::bar_chart("On-chip memory", "bits", &labels, &values, out.hash()).as_bytes())?;
    let labels: Vec<String> = report.nodes.iter().map(|n| n.name.clone()).collect();
    let values: Vec<f64> = report.nodes.iter().map(|n| n.latency_cycles).collect();
    let chart = svg::bar_chart("Per-node latency", "cycles", &labels, &values, out.hash());
    out.bytes("latency.svg", chart.as_bytes())
}

pub fn validate(common: &Common) -> Result<()> {
    let mut run = Run::begin("validate", common, &[], &[])?;
    run.out.stage("validate");
    let l = load(common)?;
    let g = &l.graph;
    let nodes: Vec<_> = g
        .node_ids()
        .map(|n| {
            let s = g.output_shape(n).expect("shaped");
            json!({"id": g.node(n).name, "kind": g.node(n).kind().name(), "inputs": g.producer_names(n), "shape": [s.h, s.w, s.c]})
        })
        .collect();
    let skips: Vec<String> = g.skip_edges().into_iter().map(|e| g.edge_name(e)).collect();
    run.out.json("validate.json", &json!({"network": l.name, "nodes": nodes, "skip_edges": skips}))?;
    run.finish()
}

/// Quantized convolution weights, keyed by weights reference.
fn quantize_weights(l: &Loaded) -> Result<BTreeMap<String, QuantizedTensor>> {
    l.weights
        .iter()
        .map(|(k, w)| {
            let values: Vec<f64> = w.values.iter().map(|&v| v as f64).collect();
            quantize_tensor_with(&values, &w.dims, l.qc.w_bits, l.qc.rounding)
                .map(|q| (k.clone(), q))
                .map_err(|e| CliError::new("quantize", ExitKind::Failure, format!("`{k}`: {e}")))
        })
        .collect()
}

/// `weights.satq` and `quant_plan.json`. Activation scales are included
/// only when a calibrated plan is given.
fn write_quantization(out: &mut OutDir, l: &Loaded, plan: Option<&QuantPlan>) -> Result<()> {
    let g = &l.graph;
    let quantized = quantize_weights(l)?;
    out.bytes("weights.satq", &encode_quantized(&quantized))?;
    let convs: Vec<_> = g
        .node_ids()
        .filter_map(|n| g.weights_key(n).map(|k| (n, k)))
        .map(|(n, k)| {
            let p = &quantized[k].params;
            let mut o = json!({"id": g.node(n).name, "weights": k, "scale": p.scale, "zero_point": p.zero_point, "bits": p.bits});
            if let Some(c) = plan.and_then(|pl| pl.conv(n)) {
                o["requant_mult"] = json!(c.requant.mult);
                o["requant_shift"] = json!(c.requant.shift);
            }
            o
        })
        .collect();
    let mut doc = json!({"w_bits": l.qc.w_bits, "a_bits": l.qc.a_bits, "convolutions": convs});
    if let Some(plan) = plan {
        doc["activations"] = g.node_ids().map(|n| json!({"id": g.node(n).name, "frac": plan.frac(n)})).collect();
    }
    out.json("quant_plan.json", &doc)
}

pub fn quantize(common: &Common) -> Result<()> {
    let mut run = Run::begin("quantize", common, &[], &[])?;
    run.out.stage("validate");
    let l = load(common)?;
    run.out.stage("quantize");
    let plan = calibrate(&l, common.seed)?;
    write_quantization(&mut run.out, &l, Some(&plan))?;
    let x = random_input(&mut ChaCha8Rng::seed_from_u64(common.seed), input_shape(&l.graph));
    let input = l.graph.input_node().expect("input");
    let t = FixedTensor { frac: plan.frac(input), tensor: plan.quantize_input(&l.graph, &x) };
    let name = l.graph.node(input).name.clone();
    run.out.bytes("input.sati", &encode_tensors(&BTreeMap::from([(name, t)])))?;
    run.finish()
}

fn seeded_frames(l: &Loaded, plan: &QuantPlan, seed: u64, frames: usize) -> Vec<RefTensor<i64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..frames.max(1))
        .map(|_| plan.quantize_input(&l.graph, &random_input(&mut rng, input_shape(&l.graph))))
        .collect()
}

fn measure(l: &Loaded, dp: &DesignPoint, plan: &QuantPlan, frames: &[RefTensor<i64>]) -> Result<DepthReport> {
    let (depths, res) = yoloflow_core::sim::measure_fifo_depths(&l.graph, dp, plan, frames).map_err(sim_error)?;
    match res.deadlock {
        Some(d) => Err(CliError::new("depths", ExitKind::Deadlock, d.to_string())),
        None => Ok(depths),
    }
}

pub fn depths(common: &Common, simulate: bool, design: Option<&Path>, frames: usize) -> Result<()> {
    let inputs: Vec<(&str, &Path)> = design.map(|d| ("design", d)).into_iter().collect();
    let mut run = Run::begin("depths", common, &inputs, &[("simulate", json!(simulate)), ("frames", json!(frames))])?;
    run.out.stage("validate");
    let l = load(common)?;
    run.out.stage("depths");
    let report = if simulate {
        let dp = match design {
            Some(p) => formats::load_design(&l.graph, p)?,
            None => DesignPoint::baseline(&l.graph),
        };
        let plan = calibrate(&l, common.seed)?;
        measure(&l, &dp, &plan, &seeded_frames(&l, &plan, common.seed, frames))?
    } else {
        analytic_depths(&l.graph)
    };
    run.out.json("depths.json", &depth_doc(&l.graph, &report))?;
    run.finish()
}

pub fn dse(common: &Common, depths: Option<&Path>) -> Result<()> {
    let inputs: Vec<(&str, &Path)> = depths.map(|d| ("depths", d)).into_iter().collect();
    let mut run = Run::begin("dse", common, &inputs, &[])?;
    let platform = need_platform(common)?;
    run.out.stage("validate");
    let l = load(common)?;
    let d = depths_or_analytic(&l.graph, depths)?;
    run.out.stage("dse");
    let dp = dse::explore(&l.graph, &d, &platform, &l.qc, &DseConfig::default()).map_err(|e| dse_error("dse", e))?;
    run.out.json("design.json", &design_doc(&l.graph, &dp))?;
    run.out.stage("report");
    let report = evaluate_design(&l, &dp, &platform, &d)?;
    emit_report(&mut run.out, &l, &report, &d)?;
    run.finish()
}

pub fn report(common: &Common, design: &Path, depths: Option<&Path>) -> Result<()> {
    let mut inputs = vec![("design", design)];
    inputs.extend(depths.map(|d| ("depths", d)));
    let mut run = Run::begin("report", common, &inputs, &[])?;
    let platform = need_platform(common)?;
    run.out.stage("validate");
    let l = load(common)?;
    let dp = formats::load_design(&l.graph, design)?;
    let d = depths_or_analytic(&l.graph, depths)?;
    run.out.stage("report");
    let report = evaluate_design(&l, &dp, &platform, &d)?;
    emit_report(&mut run.out, &l, &report, &d)?;
    run.finish()
}

pub struct SimulateArgs<'a> {
    pub design: &'a Path,
    pub input: Option<&'a Path>,
    pub depths: Option<&'a Path>,
    pub frames: usize,
    pub check: bool,
    pub trace: bool,
}

#[derive(Serialize)]
struct OccupancyRow {
    edge: String,
    skip: bool,
    off_chip: bool,
    capacity: usize,
    high_water: usize,
    pushes: u64,
    pops: u64,
}

#[derive(Serialize)]
struct TraceRow {
    cycle: u64,
    edge: String,
    occupancy: u32,
}

fn occupancy_rows(g: &NetworkGraph, pl: &yoloflow_core::sim::Pipeline, res: &SimResult) -> Vec<OccupancyRow> {
    g.edge_ids()
        .map(|e| OccupancyRow {
            edge: g.edge_name(e),
            skip: g.is_skip_edge(e),
            off_chip: pl.links()[e.0].is_off_chip(),
            capacity: pl.capacity(e).min(u32::MAX as usize),
            high_water: res.high_water[e.0],
            pushes: res.pushes[e.0],
            pops: res.pops[e.0],
        })
        .collect()
}

/// Index and values of the first differing word per output, if any.
fn compare(g: &NetworkGraph, got: &BTreeMap<NodeId, RefTensor<i64>>, want: &BTreeMap<NodeId, RefTensor<i64>>) -> Option<String> {
    for (n, w) in want {
        let name = &g.node(*n).name;
        let Some(t) = got.get(n) else { return Some(format!("output `{name}` produced nothing")) };
        if t.shape != w.shape {
            return Some(format!("output `{name}` has shape {}, reference {}", t.shape, w.shape));
        }
        let diff = t.data.iter().zip(&w.data).filter(|(a, b)| a != b).count();
        if let Some(i) = t.data.iter().zip(&w.data).position(|(a, b)| a != b) {
            return Some(format!(
                "output `{name}` differs from the reference in {diff} words, first at {i}: {} != {}",
                t.data[i], w.data[i]
            ));
        }
    }
    None
}

pub fn simulate(common: &Common, args: &SimulateArgs) -> Result<()> {
    let mut inputs = vec![("design", args.design)];
    inputs.extend(args.input.map(|p| ("input", p)));
    inputs.extend(args.depths.map(|p| ("depths", p)));
    let opts = [("frames", json!(args.frames)), ("check", json!(args.check)), ("trace", json!(args.trace))];
    let mut run = Run::begin("simulate", common, &inputs, &opts)?;
    let platform = common.platform.as_ref().map(|p| formats::load_platform(p)).transpose()?;
    run.out.stage("validate");
    let l = load(common)?;
    let g = &l.graph;
    let dp = formats::load_design(g, args.design)?;
    run.out.stage("quantize");
    let plan = calibrate(&l, common.seed)?;
    let mut frames = seeded_frames(&l, &plan, common.seed, args.frames);
    if let Some(p) = args.input {
        let x = formats::load_input(p)?;
        let expected = input_shape(g);
        if x.shape != expected {
            return Err(CliError::input("tensor", format!("input tensor is {}, network expects {expected}", x.shape)));
        }
        let xq = plan.quantize_input(g, &x);
        frames.iter_mut().for_each(|f| *f = xq.clone());
    }
    run.out.stage("simulate");
    let skip_capacity = match args.depths {
        Some(p) => SkipCapacity::Depths(formats::load_depths(g, p)?),
        None => SkipCapacity::Unbounded,
    };
    let cfg = PipelineConfig {
        skip_capacity,
        dma: platform.as_ref().map(|p| DmaTiming::from_platform(p, l.qc.a_bits)).unwrap_or_default(),
        trace: args.trace,
        ..Default::default()
    };
    let pl = build_pipeline(g, &dp, &plan, &cfg).map_err(sim_error)?;
    let res = run_sim(&pl, &frames).map_err(sim_error)?;
    run.out.csv("occupancy.csv", &occupancy_rows(g, &pl, &res))?;
    if args.trace {
        let rows: Vec<TraceRow> = res
            .trace
            .iter()
            .map(|t| TraceRow { cycle: t.cycle, edge: g.edge_name(yoloflow_core::graph::EdgeId(t.edge as usize)), occupancy: t.occupancy })
            .collect();
        run.out.csv("trace.csv", &rows)?;
    }
    let mismatch = if args.check && !res.deadlocked() {
        run.out.stage("check");
        let want = run_reference_quantized(g, &plan, &frames[0])
            .map_err(|e| CliError::new("check", ExitKind::Failure, e.to_string()))?;
        Some(compare(g, &res.first_frame(), &want))
    } else {
        None
    };
    let summary = json!({
        "cycles_total": res.cycles_total,
        "cycles_steady": res.cycles_steady,
        "frame_done": res.frame_done,
        "offchip_peak_words_per_cycle": res.offchip_peak_words_per_cycle,
        "soft_fifos": pl.soft_fifo_count(),
        "check": mismatch.as_ref().map(|m| if m.is_none() { "pass" } else { "fail" }),
        "deadlock": res.deadlock,
    });
    run.out.json("sim.json", &summary)?;
    if !res.deadlocked() {
        run.out.json("depths.json", &depth_doc(g, &res.depths))?;
        run.out.bytes("outputs.sati", &encode_tensors(&fixed_outputs(g, &plan, &res.first_frame())))?;
    }
    let deadlock = res.deadlock.clone();
    run.finish()?;
    if let Some(d) = deadlock {
        return Err(CliError::new("simulate", ExitKind::Deadlock, d.to_string()));
    }
    if let Some(Some(m)) = mismatch {
        return Err(CliError::new("check", ExitKind::Failure, m));
    }
    Ok(())
}

/// Design point and report of the full pipeline.
pub struct FlowResult {
    pub design: DesignPoint,
    pub depths: DepthReport,
    pub report: PerfReport,
}

pub fn flow(common: &Common, simulate: bool, frames: usize) -> Result<FlowResult> {
    let mut run = Run::begin("flow", common, &[], &[("simulate", json!(simulate)), ("frames", json!(frames))])?;
    let platform = need_platform(common)?;
    run.out.stage("validate");
    let l = load(common)?;
    run.out.stage("quantize");
    // The analytic path needs no activation scales; calibrating runs the
    // whole reference, which is slow on full-size networks.
    let plan = if simulate { Some(calibrate(&l, common.seed)?) } else { None };
    write_quantization(&mut run.out, &l, plan.as_ref())?;
    run.out.stage("allocate_dsp");
    let parallelism =
        dse::allocate_dsp(&l.graph, &platform, &DseConfig::default()).map_err(|e| dse_error("dse", e))?;
    let mut dp = DesignPoint { parallelism, ..DesignPoint::baseline(&l.graph) };
    run.out.stage("depths");
    let depths = if let Some(plan) = &plan {
        measure(&l, &dp, plan, &seeded_frames(&l, plan, common.seed, frames))?
    } else {
        analytic_depths(&l.graph)
    };
    run.out.json("depths.json", &depth_doc(&l.graph, &depths))?;
    run.out.stage("allocate_buffers");
    dp.buffers = dse::allocate_buffers(&l.graph, &depths, &platform, &l.qc).map_err(|e| dse_error("dse", e))?;
    run.out.json("design.json", &design_doc(&l.graph, &dp))?;
    run.out.stage("report");
    let report = evaluate_design(&l, &dp, &platform, &depths)?;
    emit_report(&mut run.out, &l, &report, &depths)?;
    run.finish()?;
    Ok(FlowResult { design: dp, depths, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub k: usize,
    pub mem_skip: u64,
    pub mem_total: u64,
    pub offchip_bw: f64,
}

/// Skip edges ordered by on-chip buffer size, largest first.
pub fn largest_buffers(g: &NetworkGraph, depths: &DepthReport, a_bits: u32) -> Vec<yoloflow_core::graph::EdgeId> {
    let mut skips = g.skip_edges();
    skips.sort_by_key(|&e| std::cmp::Reverse(buffer_size(depths.get(e).unwrap_or(0), Placement::On, a_bits)));
    skips
}

/// Rows for k = 0..=top_k with the k largest skip buffers forced off-chip
/// and every other skip buffer on-chip.
pub fn ablation_rows(
    l: &Loaded,
    platform: &PlatformSpec,
    depths: &DepthReport,
    top_k: usize,
) -> Result<(Vec<AblationRow>, Vec<String>)> {
    let parallelism = dse::allocate_dsp(&l.graph, platform, &DseConfig::default()).map_err(|e| dse_error("ablation", e))?;
    let order = largest_buffers(&l.graph, depths, l.qc.a_bits);
    let mut dp = DesignPoint { parallelism, ..DesignPoint::baseline(&l.graph) };
    let mut rows = Vec::new();
    for k in 0..=top_k.min(order.len()) {
        if k > 0 {
            dp.buffers.insert(order[k - 1], Placement::Off);
        }
        let r = evaluate_design(l, &dp, platform, depths)?;
        rows.push(AblationRow { k, mem_skip: r.memory.skip, mem_total: r.mem_total, offchip_bw: r.offchip_bw_used });
    }
    let names = order.iter().take(top_k).map(|&e| l.graph.edge_name(e)).collect();
    Ok((rows, names))
}

pub fn ablation(common: &Common, top_k: usize, depths: Option<&Path>) -> Result<Vec<AblationRow>> {
    let inputs: Vec<(&str, &Path)> = depths.map(|d| ("depths", d)).into_iter().collect();
    let mut run = Run::begin("ablation", common, &inputs, &[("top_k", json!(top_k))])?;
    let platform = need_platform(common)?;
    run.out.stage("validate");
    let l = load(common)?;
    let d = depths_or_analytic(&l.graph, depths)?;
    let skips = l.graph.skip_edges().len();
    if skips < top_k {
        eprintln!("warning[ablation]: only {skips} skip edges, sweeping k = 0..{skips}");
    }
    run.out.stage("ablation");
    let (rows, evicted) = ablation_rows(&l, &platform, &d, top_k)?;
    run.out.csv("ablation.csv", &rows)?;
    run.out.json("ablation.json", &json!({"depth_source": d.source, "evicted": evicted, "rows": rows}))?;
    let labels: Vec<String> = rows.iter().map(|r| format!("k={}", r.k)).collect();
    let chart = svg::grouped_bars(
        "Skip buffers moved off-chip",
        "bits",
        &labels,
        &[("skip", rows.iter().map(|r| r.mem_skip as f64).collect()), ("total", rows.iter().map(|r| r.mem_total as f64).collect())],
        Some(("off-chip bandwidth", "bit/s", rows.iter().map(|r| r.offchip_bw).collect())),
        run.out.hash(),
    );
    run.out.bytes("ablation.svg", chart.as_bytes())?;
    run.finish()?;
    Ok(rows)
}
