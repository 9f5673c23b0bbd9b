use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use yoloflow::network::{parse_network, serialize_network, NetworkDoc};
use yoloflow_core::gen::{random_graph, GenParams};
use yoloflow_core::graph::infer_shapes;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialized_graphs_parse_back(seed in any::<u64>(), max_nodes in 2usize..12) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), GenParams { max_nodes, max_dim: 16 });
        let shape = g.output_shape(g.input_node().unwrap()).unwrap();
        let doc = NetworkDoc { name: Some(format!("g{seed}")), weights_file: None, graph: g.clone() };
        let text = serialize_network(&doc);
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(&back.name, &doc.name);
        prop_assert_eq!(serialize_network(&back), text);
        let shaped = infer_shapes(&back.graph, shape).unwrap();
        prop_assert_eq!(shaped, g);
    }
}
