//! Random small networks, design points and inputs for property tests and
//! acceptance runs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::golden::RefTensor;
use crate::graph::{infer_shapes, GraphBuilder, NetworkGraph, Op, Padding, TensorShape, Window};
use crate::perf::{parallelism_options, DesignPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    /// Total nodes including `Input` and `Output`.
    pub max_nodes: usize,
    /// Largest height, width or channel count of any tensor.
    pub max_dim: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { max_nodes: 8, max_dim: 16 }
    }
}

#[derive(Debug, Clone)]
struct Tensor {
    producer: String,
    shape: TensorShape,
    /// Split ports may feed exactly one consumer.
    port: bool,
    uses: usize,
}

fn window_out(h: usize, k: usize, s: usize, pad: usize) -> Option<usize> {
    (h + 2 * pad >= k).then(|| (h + 2 * pad - k) / s + 1)
}

/// A random valid, shaped graph with at most `params.max_nodes` nodes.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, params: GenParams) -> NetworkGraph {
    let d = params.max_dim.max(2);
    let shape = TensorShape::new(rng.random_range(2..=d.min(8)), rng.random_range(2..=d.min(8)), rng.random_range(1..=d.min(8)));
    let mut b = GraphBuilder::new();
    b.node("in", Op::Input { shape: None }, &[]);
    let mut tensors = alloc::vec![Tensor { producer: "in".into(), shape, port: false, uses: 0 }];
    let mut nodes = 1usize;
    let dangling = |ts: &[Tensor]| ts.iter().filter(|t| t.uses == 0).count();
    let mut id = 0usize;
    for _attempt in 0..40 {
        if nodes + dangling(&tensors) >= params.max_nodes {
            break;
        }
        // Split ports take channel ranges in consumer order, so they are
        // handed out first to last.
        let usable: Vec<usize> = (0..tensors.len())
            .filter(|&i| {
                let t = &tensors[i];
                !t.port || (t.uses == 0 && !tensors[..i].iter().any(|u| u.producer == t.producer && u.uses == 0))
            })
            .collect();
        let &a = usable.choose(rng).expect("input tensor is always usable");
        let s = tensors[a].shape;
        let name = format!("n{id}");
        let choice = rng.random_range(0..8);
        let mut inputs = alloc::vec![a];
        let (op, outs): (Op, Vec<TensorShape>) = match choice {
            0 | 1 => {
                let k = rng.random_range(1..=3usize);
                let stride = if rng.random_bool(0.25) { 2 } else { 1 };
                let pad = if rng.random_bool(0.6) { k / 2 } else { 0 };
                let f = rng.random_range(1..=d.min(8));
                let (Some(h), Some(w)) = (window_out(s.h, k, stride, pad), window_out(s.w, k, stride, pad)) else {
                    continue;
                };
                if h > d || w > d {
                    continue;
                }
                (Op::conv(k, stride, pad, f), alloc::vec![TensorShape::new(h, w, f)])
            }
            2 => {
                let (k, stride, pad) = *[(2, 2, 0), (3, 1, 1), (2, 1, 0), (3, 2, 1)].choose(rng).expect("options");
                let (Some(h), Some(w)) = (window_out(s.h, k, stride, pad), window_out(s.w, k, stride, pad)) else {
                    continue;
                };
                (Op::max_pool(k, stride, pad), alloc::vec![TensorShape::new(h, w, s.c)])
            }
            3 => {
                if s.h * 2 > d || s.w * 2 > d {
                    continue;
                }
                (Op::Resize { scale: 2 }, alloc::vec![TensorShape::new(s.h * 2, s.w * 2, s.c)])
            }
            4 => {
                if s.c < 2 {
                    continue;
                }
                let c1 = rng.random_range(1..s.c);
                (
                    Op::Split { channels: Some(alloc::vec![c1, s.c - c1]) },
                    alloc::vec![TensorShape::new(s.h, s.w, c1), TensorShape::new(s.h, s.w, s.c - c1)],
                )
            }
            5 => {
                let partners: Vec<usize> = usable
                    .iter()
                    .copied()
                    .filter(|&j| j != a && tensors[j].producer != tensors[a].producer && tensors[j].shape == s)
                    .collect();
                let Some(&j) = partners.choose(rng) else { continue };
                inputs.push(j);
                (Op::Add, alloc::vec![s])
            }
            6 => {
                let partners: Vec<usize> = usable
                    .iter()
                    .copied()
                    .filter(|&j| {
                        let t = tensors[j].shape;
                        j != a && tensors[j].producer != tensors[a].producer && t.h == s.h && t.w == s.w && t.c + s.c <= d
                    })
                    .collect();
                let Some(&j) = partners.choose(rng) else { continue };
                inputs.push(j);
                let c = s.c + tensors[j].shape.c;
                (Op::Concat, alloc::vec![TensorShape::new(s.h, s.w, c)])
            }
            _ => {
                if rng.random_bool(0.5) {
                    (Op::HardSwish, alloc::vec![s])
                } else {
                    (Op::LeakyRelu { slope: 0.1 }, alloc::vec![s])
                }
            }
        };
        // Projected node count: this node plus all unconsumed tensors afterwards.
        let freed = inputs.iter().filter(|&&i| tensors[i].uses == 0).count();
        if nodes + 1 + dangling(&tensors) - freed + outs.len() > params.max_nodes {
            continue;
        }
        let names: Vec<String> = inputs.iter().map(|&i| tensors[i].producer.clone()).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        b.node(&name, op, &refs);
        for &i in &inputs {
            tensors[i].uses += 1;
        }
        let port = outs.len() > 1;
        for o in outs {
            tensors.push(Tensor { producer: name.clone(), shape: o, port, uses: 0 });
        }
        nodes += 1;
        id += 1;
    }
    for (out_id, t) in tensors.iter().filter(|t| t.uses == 0).enumerate() {
        b.node(&format!("out{out_id}"), Op::Output, &[t.producer.as_str()]);
    }
    let g = b.build().expect("generated graph is acyclic with unique names");
    infer_shapes(&g, shape).expect("generated shapes are consistent")
}

/// A straight chain of `len` nodes drawn from the per-pixel and windowed
/// kinds, all stride 1 with same padding.
pub fn random_chain<R: Rng + ?Sized>(rng: &mut R, len: usize, shape: TensorShape) -> NetworkGraph {
    let mut b = GraphBuilder::new();
    b.node("in", Op::Input { shape: None }, &[]);
    let mut prev = String::from("in");
    for i in 0..len {
        let name = format!("n{i}");
        let op = match rng.random_range(0..4) {
            0 | 1 => {
                let k = *[1usize, 3].choose(rng).expect("options");
                Op::conv(k, 1, k / 2, rng.random_range(1..=8))
            }
            2 => Op::Convolution {
                window: Window { kernel: 3, stride: 1, padding: Padding::uniform(1) },
                filters: shape.c,
                weights_ref: None,
            },
            _ => Op::HardSwish,
        };
        b.node(&name, op, &[prev.as_str()]);
        prev = name;
    }
    b.node("out", Op::Output, &[prev.as_str()]);
    infer_shapes(&b.build().expect("chain"), shape).expect("chain shapes")
}

/// Random divisor-valid parallelism for every node, all skip buffers on-chip.
pub fn random_design<R: Rng + ?Sized>(rng: &mut R, graph: &NetworkGraph) -> DesignPoint {
    let mut dp = DesignPoint::baseline(graph);
    for n in graph.node_ids() {
        let opts = parallelism_options(graph, n);
        dp.parallelism[n.0] = *opts[..opts.len().min(4)].choose(rng).expect("at least one option");
    }
    dp
}

/// Uniform real input in `[-1, 1)`.
pub fn random_input<R: Rng + ?Sized>(rng: &mut R, shape: TensorShape) -> RefTensor<f64> {
    let data = (0..shape.elements()).map(|_| rng.random_range(-1.0..1.0)).collect();
    RefTensor { shape, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_graphs_are_valid_and_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let g = random_graph(&mut rng, GenParams::default());
            assert!(g.len() <= 8, "{} nodes", g.len());
            assert!(validate_graph(&g).is_empty(), "{:?}", validate_graph(&g));
            for e in g.edge_ids() {
                let s = g.edge_shape(e).unwrap();
                assert!(s.h <= 16 && s.w <= 16 && s.c <= 16);
            }
        }
    }
}
