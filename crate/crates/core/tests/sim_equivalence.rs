use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use yoloflow_core::gen::{random_design, random_graph, random_input, GenParams};
use yoloflow_core::golden::run_reference_quantized;
use yoloflow_core::plan::QuantPlan;
use yoloflow_core::quant::QuantConfig;
use yoloflow_core::sim::{build_pipeline, measure_fifo_depths, run_sim, PipelineConfig};
use yoloflow_core::weights::resolve_weights;

#[test]
fn random_graphs_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..60 {
        let g = random_graph(&mut rng, GenParams::default());
        let w = resolve_weights(&g, i).unwrap();
        let shape = g.output_shape(g.input_node().unwrap()).unwrap();
        let x = random_input(&mut rng, shape);
        let plan = QuantPlan::calibrate(&g, &w, QuantConfig::default(), &x).unwrap();
        let xq = plan.quantize_input(&g, &x);
        let want = run_reference_quantized(&g, &plan, &xq).unwrap();
        let dp = random_design(&mut rng, &g);
        let (_, res) = measure_fifo_depths(&g, &dp, &plan, std::slice::from_ref(&xq)).unwrap();
        assert!(res.deadlock.is_none(), "graph {i}: {:?}", res.deadlock);
        assert_eq!(res.first_frame(), want, "graph {i}");
        let pl = build_pipeline(&g, &dp, &plan, &PipelineConfig::default()).unwrap();
        let _ = run_sim(&pl, std::slice::from_ref(&xq)).unwrap();
    }
}
