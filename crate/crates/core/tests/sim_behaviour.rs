use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use yoloflow_core::gen::{random_design, random_graph, random_input, GenParams};
use yoloflow_core::golden::{run_reference_quantized, RefTensor};
use yoloflow_core::graph::{infer_shapes, GraphBuilder, NetworkGraph, Op, TensorShape};
use yoloflow_core::perf::{pipeline_depth, DesignPoint, Placement};
use yoloflow_core::plan::QuantPlan;
use yoloflow_core::quant::QuantConfig;
use yoloflow_core::sim::{
    build_pipeline, measure_fifo_depths, run_sim, PipelineConfig, SimError, SkipCapacity,
};
use yoloflow_core::weights::{resolve_weights, Tensor4};

fn prepared(g: &NetworkGraph, seed: u64) -> (QuantPlan, RefTensor<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = resolve_weights(g, seed).unwrap();
    let shape = g.output_shape(g.input_node().unwrap()).unwrap();
    let x = random_input(&mut rng, shape);
    let plan = QuantPlan::calibrate(g, &w, QuantConfig::default(), &x).unwrap();
    let xq = plan.quantize_input(g, &x);
    (plan, xq)
}

fn identity_conv(shape: TensorShape) -> NetworkGraph {
    let c = shape.c;
    let mut values = vec![0.0f32; c * c];
    for i in 0..c {
        values[i * c + i] = 1.0;
    }
    let mut b = GraphBuilder::new();
    b.node("in", Op::Input { shape: None }, &[]);
    let mut op = Op::conv(1, 1, 0, c);
    if let Op::Convolution { weights_ref, .. } = &mut op {
        *weights_ref = Some("eye".into());
    }
    b.node("conv", op, &["in"]);
    b.node("out", Op::Output, &["conv"]);
    b.weight("eye", Tensor4::new([c, c, 1, 1], values).unwrap());
    infer_shapes(&b.build().unwrap(), shape).unwrap()
}

/// `in` forks into a 3x3 convolution and a wire; both meet at an add.
fn fork_join(shape: TensorShape) -> NetworkGraph {
    let mut b = GraphBuilder::new();
    b.node("in", Op::Input { shape: None }, &[]);
    b.node("conv", Op::conv(3, 1, 1, shape.c), &["in"]);
    b.node("add", Op::Add, &["conv", "in"]);
    b.node("out", Op::Output, &["add"]);
    infer_shapes(&b.build().unwrap(), shape).unwrap()
}

#[test]
fn identity_convolution_passes_input_through() {
    let shape = TensorShape::new(4, 4, 3);
    let g = identity_conv(shape);
    let (plan, xq) = prepared(&g, 1);
    let mut dp = DesignPoint::baseline(&g);
    // C lanes over a C x C product: one input word per cycle.
    dp.parallelism[g.find("conv").unwrap().0] = shape.c as u64;
    let pl = build_pipeline(&g, &dp, &plan, &PipelineConfig::default()).unwrap();
    let res = run_sim(&pl, std::slice::from_ref(&xq)).unwrap();
    assert!(!res.deadlocked());
    let out = res.first_frame().into_values().next().unwrap();
    assert_eq!(out.data, xq.data);
    // One word per cycle at the input, plus the fixed latencies along the chain.
    let words = shape.elements() as u64;
    let fill: u64 = g.node_ids().map(|n| pipeline_depth(&g, n, dp.p(n))).sum();
    assert!(res.cycles_total >= words, "{}", res.cycles_total);
    assert!(res.cycles_total <= words + fill + 8, "{} vs {}", res.cycles_total, words + fill);
}

#[test]
fn chain_builds_one_process_per_node() {
    let g = identity_conv(TensorShape::new(2, 2, 2));
    let (plan, _) = prepared(&g, 2);
    let pl = build_pipeline(&g, &DesignPoint::baseline(&g), &plan, &PipelineConfig::default()).unwrap();
    assert_eq!(pl.process_count(), 3);
    assert_eq!(pl.links().len(), 2);
    assert_eq!(pl.soft_fifo_count(), 0);
}

#[test]
fn off_chip_skip_edge_becomes_soft_fifo() {
    let g = fork_join(TensorShape::new(4, 6, 2));
    let (plan, xq) = prepared(&g, 3);
    let mut dp = DesignPoint::baseline(&g);
    let skip = g.find_edge("in", "add").unwrap();
    dp.buffers.insert(skip, Placement::Off);
    let cfg = PipelineConfig { chunk_size: 8, ..Default::default() };
    let pl = build_pipeline(&g, &dp, &plan, &cfg).unwrap();
    assert_eq!(pl.soft_fifo_count(), 1);
    assert!(pl.links()[skip.0].is_off_chip());
    let res = run_sim(&pl, std::slice::from_ref(&xq)).unwrap();
    assert!(!res.deadlocked(), "{:?}", res.deadlock);
    let want = run_reference_quantized(&g, &plan, &xq).unwrap();
    assert_eq!(res.first_frame(), want);
}

#[test]
fn parallelism_must_divide_workload() {
    let mut b = GraphBuilder::new();
    b.node("in", Op::Input { shape: None }, &[]);
    b.node("conv", Op::conv(3, 1, 1, 4), &["in"]);
    b.node("out", Op::Output, &["conv"]);
    let g = infer_shapes(&b.build().unwrap(), TensorShape::new(4, 4, 2)).unwrap();
    let (plan, _) = prepared(&g, 4);
    let mut dp = DesignPoint::baseline(&g);
    dp.parallelism[g.find("conv").unwrap().0] = 3;
    let err = build_pipeline(&g, &dp, &plan, &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err, SimError::Parallelism { p: 3, max: 8, .. }), "{err:?}");
}

#[test]
fn undersized_join_channel_deadlocks() {
    let g = fork_join(TensorShape::new(6, 12, 2));
    let (plan, xq) = prepared(&g, 5);
    let dp = DesignPoint::baseline(&g);
    let pl = build_pipeline(&g, &dp, &plan, &PipelineConfig::default()).unwrap();
    let res = run_sim(&pl, std::slice::from_ref(&xq)).unwrap();
    let d = res.deadlock.as_ref().expect("short branch cannot hold the imbalance");
    assert!(d.channels.iter().any(|c| c.edge == "in->add" && c.state == "full"), "{d}");
    assert!(res.outputs.values().all(|f| f.is_empty()));
}

#[test]
fn fork_depth_matches_branch_imbalance() {
    // One word per cycle; the convolution branch needs 94 + 2 words before
    // its first window closes, plus its fixed latency: 100 cycles.
    let g = {
        let mut b = GraphBuilder::new();
        b.node("in", Op::Input { shape: None }, &[]);
        b.node("conv", Op::conv(3, 1, 1, 1), &["in"]);
        b.node("add", Op::Add, &["conv", "in"]);
        b.node("out", Op::Output, &["add"]);
        infer_shapes(&b.build().unwrap(), TensorShape::new(4, 94, 1)).unwrap()
    };
    let (plan, xq) = prepared(&g, 6);
    let dp = DesignPoint::baseline(&g);
    let conv = g.find("conv").unwrap();
    assert_eq!(pipeline_depth(&g, conv, dp.p(conv)), 100);
    let frames = vec![xq.clone(), xq];
    let (depths, free) = measure_fifo_depths(&g, &dp, &plan, &frames).unwrap();
    assert!(!free.deadlocked());
    let skip = g.find_edge("in", "add").unwrap();
    let q = depths.get(skip).unwrap();
    assert!((100..=108).contains(&q), "q = {q}");

    let cfg = PipelineConfig { skip_capacity: SkipCapacity::Depths(depths.clone()), ..Default::default() };
    let pl = build_pipeline(&g, &dp, &plan, &cfg).unwrap();
    let sized = run_sim(&pl, &frames).unwrap();
    assert!(!sized.deadlocked(), "{:?}", sized.deadlock);
    assert_eq!(sized.outputs, free.outputs);
    let (a, b) = (free.cycles_steady as f64, sized.cycles_steady as f64);
    assert!((a - b).abs() <= 0.01 * a, "{a} vs {b}");
}

#[test]
fn chain_has_no_skip_depths() {
    let g = identity_conv(TensorShape::new(3, 3, 2));
    let (plan, xq) = prepared(&g, 7);
    let (depths, _) = measure_fifo_depths(&g, &DesignPoint::baseline(&g), &plan, &[xq]).unwrap();
    assert!(depths.is_empty());
}

#[test]
fn identical_branches_need_little_buffering() {
    let mut b = GraphBuilder::new();
    b.node("in", Op::Input { shape: None }, &[]);
    b.node("a", Op::HardSwish, &["in"]);
    b.node("b", Op::HardSwish, &["in"]);
    b.node("add", Op::Add, &["a", "b"]);
    b.node("out", Op::Output, &["add"]);
    let g = infer_shapes(&b.build().unwrap(), TensorShape::new(8, 8, 4)).unwrap();
    let (plan, xq) = prepared(&g, 8);
    let (depths, res) = measure_fifo_depths(&g, &DesignPoint::baseline(&g), &plan, &[xq]).unwrap();
    assert!(!res.deadlocked());
    assert_eq!(depths.len(), 2);
    for &q in depths.depths.values() {
        assert!(q <= 4, "q = {q}");
    }
}

#[test]
fn window_storage_and_flow_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..40 {
        let g = random_graph(&mut rng, GenParams::default());
        let (plan, xq) = prepared(&g, 100 + i);
        let dp = random_design(&mut rng, &g);
        let frames = vec![xq.clone(), xq];
        let (_, res) = measure_fifo_depths(&g, &dp, &plan, &frames).unwrap();
        assert!(!res.deadlocked());
        for (n, &peak) in &res.window_peak {
            let w = g.node(*n).op.window().unwrap();
            let s = g.input_shape(*n).unwrap();
            let bound = (w.kernel - 1) * s.w * s.c + w.kernel * s.c;
            assert!(peak <= bound, "graph {i}: {peak} > {bound}");
        }
        for n in g.node_ids() {
            let (consumed, produced) = res.flow[n.0];
            let ins: usize = g.input_shapes(n).unwrap().iter().map(|s| s.elements()).sum();
            let outs = if g.node(n).outputs.is_empty() { 0 } else { g.output_shape(n).unwrap().elements() };
            let split = g.node(n).outputs.len() > 1 && matches!(g.node(n).op, Op::Split { .. });
            let outs = if split { ins } else { outs };
            assert_eq!(consumed, 2 * ins as u64, "graph {i} node {}", g.node(n).name);
            assert_eq!(produced, 2 * outs as u64, "graph {i} node {}", g.node(n).name);
        }
        for e in g.edge_ids() {
            assert_eq!(res.pushes[e.0], res.pops[e.0], "graph {i}: words left on {}", g.edge_name(e));
        }
    }
}

#[test]
fn smaller_channels_never_change_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..30 {
        let g = random_graph(&mut rng, GenParams::default());
        let (plan, xq) = prepared(&g, 200 + i);
        let dp = random_design(&mut rng, &g);
        let want = run_reference_quantized(&g, &plan, &xq).unwrap();
        let tight: BTreeMap<_, _> = g.edge_ids().map(|e| (e, 1usize)).collect();
        let cfg = PipelineConfig { capacity: tight, ..Default::default() };
        let pl = build_pipeline(&g, &dp, &plan, &cfg).unwrap();
        let res = run_sim(&pl, std::slice::from_ref(&xq)).unwrap();
        if res.deadlocked() {
            assert!(res.outputs.values().any(|f| f.is_empty()), "graph {i}");
        } else {
            assert_eq!(res.first_frame(), want, "graph {i}");
        }
    }
}

#[test]
fn input_shape_is_checked() {
    let g = identity_conv(TensorShape::new(2, 2, 2));
    let (plan, _) = prepared(&g, 11);
    let pl = build_pipeline(&g, &DesignPoint::baseline(&g), &plan, &PipelineConfig::default()).unwrap();
    let wrong = RefTensor::filled(TensorShape::new(2, 2, 3), 0i64);
    assert!(matches!(run_sim(&pl, &[wrong]), Err(SimError::InputShape { .. })));
}
