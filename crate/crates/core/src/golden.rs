//! Straight-line functional reference for every building block and for whole
//! graphs. Deliberately naive: dense loops, one node at a time, no streaming.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fixed;
use crate::graph::{NetworkGraph, NodeId, Op, OpKind, TensorShape, Window};
use crate::plan::QuantPlan;
use crate::weights::Tensor4;

/// Dense feature map in NHWC order.
#[derive(Debug, Clone, PartialEq)]
pub struct RefTensor<T> {
    pub shape: TensorShape,
    pub data: Vec<T>,
}

impl<T: Copy> RefTensor<T> {
    pub fn new(shape: TensorShape, data: Vec<T>) -> Option<Self> {
        (data.len() == shape.elements()).then_some(Self { shape, data })
    }

    pub fn filled(shape: TensorShape, v: T) -> Self {
        Self { shape, data: vec![v; shape.elements()] }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.w + x) * self.shape.c + c
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.idx(y, x, c)]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> RefTensor<U> {
        RefTensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefError {
    Unshaped,
    Arity { node: String, expected: usize, found: usize },
    Shape { node: String },
    MissingWeights { node: String },
    MissingPlan { node: String },
    InputShape { expected: TensorShape, found: TensorShape },
}

impl fmt::Display for RefError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefError::Unshaped => f.write_str("graph shapes have not been inferred"),
            RefError::Arity { node, expected, found } => {
                write!(f, "`{node}` expects {expected} input(s), got {found}")
            }
            RefError::Shape { node } => write!(f, "input shapes do not fit `{node}`"),
            RefError::MissingWeights { node } => write!(f, "no weights for `{node}`"),
            RefError::MissingPlan { node } => write!(f, "quantization plan has no entry for `{node}`"),
            RefError::InputShape { expected, found } => {
                write!(f, "input tensor is {found}, graph expects {expected}")
            }
        }
    }
}

impl core::error::Error for RefError {}

pub fn hardswish(x: f64) -> f64 {
    x * (x + 3.0).clamp(0.0, 6.0) / 6.0
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// `x * sigmoid(x)`.
pub fn silu_ref(x: f64) -> f64 {
    x / (1.0 + libm::exp(-x))
}

/// Input coordinate for window tap `k` of output coordinate `o`, or `None` in
/// the padding.
#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let p = (o * stride + k).checked_sub(pad)?;
    (p < extent).then_some(p)
}

/// Extra per-kind data a kernel needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct KernelArgs<'a> {
    pub weights: Option<&'a Tensor4>,
    /// Channel groups of a `Split`.
    pub split: Option<&'a [usize]>,
}

fn check_arity(name: &str, op: &Op, found: usize) -> Result<(), RefError> {
    let ok = match op.kind() {
        OpKind::Concat | OpKind::Add => found >= 2,
        OpKind::Input => found == 1,
        _ => found == 1,
    };
    if ok {
        Ok(())
    } else {
        let expected = if matches!(op.kind(), OpKind::Concat | OpKind::Add) { 2 } else { 1 };
        Err(RefError::Arity { node: name.into(), expected, found })
    }
}

fn window_out(name: &str, w: &Window, s: TensorShape) -> Result<(usize, usize), RefError> {
    w.output_hw(s.h, s.w).ok_or(RefError::Shape { node: name.into() })
}

/// Real-valued semantics of one operation. `Input`/`Output` are identities.
/// Returns one tensor per output port (several for `Split`).
pub fn eval_kernel(
    name: &str,
    op: &Op,
    inputs: &[&RefTensor<f64>],
    args: KernelArgs<'_>,
) -> Result<Vec<RefTensor<f64>>, RefError> {
    check_arity(name, op, inputs.len())?;
    let x = inputs[0];
    let s = x.shape;
    let out = match op {
        Op::Input { .. } | Op::Output => x.clone(),
        Op::Convolution { window, filters, .. } => {
            let w = args.weights.ok_or(RefError::MissingWeights { node: name.into() })?;
            if w.dims != [*filters, s.c, window.kernel, window.kernel] {
                return Err(RefError::Shape { node: name.into() });
            }
            let (oh, ow) = window_out(name, window, s)?;
            let mut out = RefTensor::filled(TensorShape::new(oh, ow, *filters), 0.0);
            for oy in 0..oh {
                for ox in 0..ow {
                    for f in 0..*filters {
                        let mut acc = 0.0;
                        for c in 0..s.c {
                            for ky in 0..window.kernel {
                                let Some(iy) = tap(oy, ky, window.stride, window.padding.top, s.h) else {
                                    continue;
                                };
                                for kx in 0..window.kernel {
                                    let Some(ix) = tap(ox, kx, window.stride, window.padding.left, s.w)
                                    else {
                                        continue;
                                    };
                                    acc += x.at(iy, ix, c) * w.get(f, c, ky, kx) as f64;
                                }
                            }
                        }
                        let i = out.idx(oy, ox, f);
                        out.data[i] = acc;
                    }
                }
            }
            out
        }
        Op::MaxPool { window } => {
            let (oh, ow) = window_out(name, window, s)?;
            let mut out = RefTensor::filled(TensorShape::new(oh, ow, s.c), f64::NEG_INFINITY);
            for oy in 0..oh {
                for ox in 0..ow {
                    for c in 0..s.c {
                        let mut m = f64::NEG_INFINITY;
                        for ky in 0..window.kernel {
                            let Some(iy) = tap(oy, ky, window.stride, window.padding.top, s.h) else { continue };
                            for kx in 0..window.kernel {
                                let Some(ix) = tap(ox, kx, window.stride, window.padding.left, s.w) else {
                                    continue;
                                };
                                m = m.max(x.at(iy, ix, c));
                            }
                        }
                        let i = out.idx(oy, ox, c);
                        out.data[i] = m;
                    }
                }
            }
            out
        }
        Op::Resize { scale } => resize(x, *scale),
        Op::Split { .. } => {
            let groups = args.split.ok_or(RefError::Shape { node: name.into() })?;
            return split(name, x, groups);
        }
        Op::Concat => concat(name, inputs, |v, _| v)?,
        Op::Add => {
            if inputs.iter().any(|t| t.shape != s) {
                return Err(RefError::Shape { node: name.into() });
            }
            let mut out = x.clone();
            for t in &inputs[1..] {
                for (o, v) in out.data.iter_mut().zip(&t.data) {
                    *o += v;
                }
            }
            out
        }
        Op::HardSwish => x.map(hardswish),
        Op::LeakyRelu { slope } => x.map(|v| leaky_relu(v, *slope)),
    };
    Ok(vec![out])
}

fn resize<T: Copy>(x: &RefTensor<T>, scale: usize) -> RefTensor<T> {
    let s = x.shape;
    let shape = TensorShape::new(s.h * scale, s.w * scale, s.c);
    let mut data = Vec::with_capacity(shape.elements());
    for y in 0..shape.h {
        for xx in 0..shape.w {
            for c in 0..s.c {
                data.push(x.at(y / scale, xx / scale, c));
            }
        }
    }
    RefTensor { shape, data }
}

fn split<T: Copy>(name: &str, x: &RefTensor<T>, groups: &[usize]) -> Result<Vec<RefTensor<T>>, RefError> {
    let s = x.shape;
    if groups.iter().sum::<usize>() != s.c {
        return Err(RefError::Shape { node: name.into() });
    }
    let mut outs = Vec::new();
    let mut start = 0;
    for &g in groups {
        let shape = TensorShape::new(s.h, s.w, g);
        let mut data = Vec::with_capacity(shape.elements());
        for y in 0..s.h {
            for xx in 0..s.w {
                for c in start..start + g {
                    data.push(x.at(y, xx, c));
                }
            }
        }
        outs.push(RefTensor { shape, data });
        start += g;
    }
    Ok(outs)
}

fn concat<T: Copy, U>(
    name: &str,
    inputs: &[&RefTensor<T>],
    f: impl Fn(T, usize) -> U,
) -> Result<RefTensor<U>, RefError> {
    let s = inputs[0].shape;
    if inputs.iter().any(|t| t.shape.h != s.h || t.shape.w != s.w) {
        return Err(RefError::Shape { node: name.into() });
    }
    let c: usize = inputs.iter().map(|t| t.shape.c).sum();
    let mut data = Vec::with_capacity(s.h * s.w * c);
    for y in 0..s.h {
        for x in 0..s.w {
            for (i, t) in inputs.iter().enumerate() {
                for ch in 0..t.shape.c {
                    data.push(f(t.at(y, x, ch), i));
                }
            }
        }
    }
    Ok(RefTensor { shape: TensorShape::new(s.h, s.w, c), data })
}

/// Integer semantics of one operation under a quantization plan. `fracs` are
/// the fractional bits of each input; `node` selects the plan entry.
pub fn eval_kernel_quantized(
    graph: &NetworkGraph,
    node: NodeId,
    plan: &QuantPlan,
    inputs: &[&RefTensor<i64>],
    fracs: &[i32],
) -> Result<Vec<RefTensor<i64>>, RefError> {
    let n = graph.node(node);
    let name = n.name.as_str();
    check_arity(name, &n.op, inputs.len())?;
    let bits = plan.config.a_bits;
    let fo = plan.frac(node);
    let x = inputs[0];
    let s = x.shape;
    let out = match &n.op {
        Op::Input { .. } | Op::Output => x.clone(),
        Op::Convolution { window, filters, .. } => {
            let cq = plan.conv(node).ok_or(RefError::MissingPlan { node: name.into() })?;
            let w = &cq.weights;
            if w.dims != [*filters, s.c, window.kernel, window.kernel] {
                return Err(RefError::Shape { node: name.into() });
            }
            let k = window.kernel;
            let (oh, ow) = window_out(name, window, s)?;
            let mut out = RefTensor::filled(TensorShape::new(oh, ow, *filters), 0i64);
            for oy in 0..oh {
                for ox in 0..ow {
                    for f in 0..*filters {
                        let mut acc: i128 = 0;
                        for c in 0..s.c {
                            for ky in 0..k {
                                let Some(iy) = tap(oy, ky, window.stride, window.padding.top, s.h) else {
                                    continue;
                                };
                                for kx in 0..k {
                                    let Some(ix) = tap(ox, kx, window.stride, window.padding.left, s.w)
                                    else {
                                        continue;
                                    };
                                    let wi = ((f * s.c + c) * k + ky) * k + kx;
                                    acc += x.at(iy, ix, c) as i128 * w.effective(wi) as i128;
                                }
                            }
                        }
                        let i = out.idx(oy, ox, f);
                        out.data[i] = fixed::saturate(cq.requant.apply(acc), bits);
                    }
                }
            }
            out
        }
        Op::MaxPool { window } => {
            let (oh, ow) = window_out(name, window, s)?;
            let mut out = RefTensor::filled(TensorShape::new(oh, ow, s.c), i64::MIN);
            for oy in 0..oh {
                for ox in 0..ow {
                    for c in 0..s.c {
                        let mut m = i64::MIN;
                        for ky in 0..window.kernel {
                            let Some(iy) = tap(oy, ky, window.stride, window.padding.top, s.h) else { continue };
                            for kx in 0..window.kernel {
                                let Some(ix) = tap(ox, kx, window.stride, window.padding.left, s.w) else {
                                    continue;
                                };
                                m = m.max(x.at(iy, ix, c));
                            }
                        }
                        let i = out.idx(oy, ox, c);
                        out.data[i] = m;
                    }
                }
            }
            out
        }
        Op::Resize { scale } => resize(x, *scale),
        Op::Split { .. } => {
            let groups = graph.split_channels(node, s.c).ok_or(RefError::Shape { node: name.into() })?;
            return split(name, x, &groups);
        }
        Op::Concat => concat(name, inputs, |v, i| fixed::saturate(fixed::rescale(v, fracs[i], fo), bits))?,
        Op::Add => {
            if inputs.iter().any(|t| t.shape != s) {
                return Err(RefError::Shape { node: name.into() });
            }
            let mut data = Vec::with_capacity(s.elements());
            for i in 0..s.elements() {
                let sum: i128 = inputs.iter().zip(fracs).map(|(t, &f)| fixed::rescale(t.data[i], f, fo)).sum();
                data.push(fixed::saturate(sum, bits));
            }
            RefTensor { shape: s, data }
        }
        Op::HardSwish => x.map(|v| fixed::hardswish(v, fracs[0], bits)),
        Op::LeakyRelu { .. } => {
            let slope = plan.slope(node).ok_or(RefError::MissingPlan { node: name.into() })?;
            x.map(|v| fixed::leaky_relu(v, slope, bits))
        }
    };
    Ok(vec![out])
}

/// Tensor on every edge, by edge id, and the value reaching each `Output`.
pub type EdgeValues<T> = (Vec<RefTensor<T>>, BTreeMap<NodeId, RefTensor<T>>);

/// Run a shaped graph in real arithmetic. Returns the tensor carried by every
/// edge, indexed by edge id, plus the value reaching each `Output`.
pub fn run_reference_edges(
    graph: &NetworkGraph,
    weights: &BTreeMap<String, Tensor4>,
    input: &RefTensor<f64>,
) -> Result<EdgeValues<f64>, RefError> {
    run_generic(graph, input, |n, ins| {
        let node = graph.node(n);
        let weights = match graph.weights_key(n) {
            Some(k) => Some(weights.get(k).ok_or(RefError::MissingWeights { node: node.name.clone() })?),
            None => None,
        };
        let split = if node.kind() == OpKind::Split {
            graph.split_channels(n, ins[0].shape.c)
        } else {
            None
        };
        eval_kernel(&node.name, &node.op, ins, KernelArgs { weights, split: split.as_deref() })
    })
}

/// Real-arithmetic outputs of each `Output` node.
pub fn run_reference(
    graph: &NetworkGraph,
    weights: &BTreeMap<String, Tensor4>,
    input: &RefTensor<f64>,
) -> Result<BTreeMap<NodeId, RefTensor<f64>>, RefError> {
    run_reference_edges(graph, weights, input).map(|(_, out)| out)
}

/// Quantized outputs, bit-exact with the dataflow simulator.
pub fn run_reference_quantized(
    graph: &NetworkGraph,
    plan: &QuantPlan,
    input: &RefTensor<i64>,
) -> Result<BTreeMap<NodeId, RefTensor<i64>>, RefError> {
    run_generic(graph, input, |n, ins| {
        let fracs: Vec<i32> =
            graph.node(n).inputs.iter().map(|e| plan.frac(graph.edge(*e).from)).collect();
        eval_kernel_quantized(graph, n, plan, ins, &fracs)
    })
    .map(|(_, out)| out)
}

fn run_generic<T: Copy>(
    graph: &NetworkGraph,
    input: &RefTensor<T>,
    mut eval: impl FnMut(NodeId, &[&RefTensor<T>]) -> Result<Vec<RefTensor<T>>, RefError>,
) -> Result<EdgeValues<T>, RefError> {
    if !graph.is_shaped() {
        return Err(RefError::Unshaped);
    }
    let mut edge_vals: Vec<Option<RefTensor<T>>> = vec![None; graph.edges().len()];
    let mut outputs = BTreeMap::new();
    for &n in graph.topo_order() {
        let node = graph.node(n);
        let produced = if node.kind() == OpKind::Input {
            let expected = graph.output_shape(n).ok_or(RefError::Unshaped)?;
            if input.shape != expected {
                return Err(RefError::InputShape { expected, found: input.shape });
            }
            vec![input.clone()]
        } else {
            let ins: Vec<&RefTensor<T>> =
                node.inputs.iter().map(|e| edge_vals[e.0].as_ref().expect("topological order")).collect();
            eval(n, &ins)?
        };
        if node.kind() == OpKind::Output {
            outputs.insert(n, produced.into_iter().next().expect("one output"));
            continue;
        }
        if produced.len() == 1 {
            for e in &node.outputs {
                edge_vals[e.0] = Some(produced[0].clone());
            }
        } else {
            for (e, t) in node.outputs.iter().zip(produced) {
                edge_vals[e.0] = Some(t);
            }
        }
    }
    Ok((edge_vals.into_iter().map(|v| v.expect("every edge evaluated")).collect(), outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{infer_shapes, GraphBuilder, Padding};

    fn t(h: usize, w: usize, c: usize, v: &[f64]) -> RefTensor<f64> {
        RefTensor::new(TensorShape::new(h, w, c), v.to_vec()).unwrap()
    }

    #[test]
    fn conv_all_ones_counts_window() {
        let x = t(3, 3, 1, &[1.0; 9]);
        let w = Tensor4 { dims: [1, 1, 3, 3], values: vec![1.0; 9] };
        let op = Op::conv(3, 1, 0, 1);
        let out = eval_kernel("c", &op, &[&x], KernelArgs { weights: Some(&w), split: None }).unwrap();
        assert_eq!(out[0].shape, TensorShape::new(1, 1, 1));
        assert_eq!(out[0].data, vec![9.0]);
    }

    #[test]
    fn resize_duplicates() {
        let x = t(2, 2, 1, &[1.0, 2.0, 3.0, 4.0]);
        let out = eval_kernel("r", &Op::Resize { scale: 2 }, &[&x], KernelArgs::default()).unwrap();
        assert_eq!(
            out[0].data,
            vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }

    #[test]
    fn hardswish_points() {
        let got: Vec<f64> = [-3.0, 0.0, 1.0, 3.0].iter().map(|&x| hardswish(x)).collect();
        assert_eq!(got[0], 0.0);
        assert_eq!(got[1], 0.0);
        assert!((got[2] - 0.6667).abs() < 1e-4);
        assert_eq!(got[3], 3.0);
    }

    #[test]
    fn maxpool_two_by_two() {
        let x = t(2, 2, 1, &[1.0, 2.0, 3.0, 4.0]);
        let out = eval_kernel("p", &Op::max_pool(2, 2, 0), &[&x], KernelArgs::default()).unwrap();
        assert_eq!(out[0].data, vec![4.0]);
    }

    #[test]
    fn maxpool_ignores_padding() {
        let x = t(1, 1, 1, &[-5.0]);
        let op = Op::MaxPool { window: Window { kernel: 3, stride: 1, padding: Padding::uniform(1) } };
        let out = eval_kernel("p", &op, &[&x], KernelArgs::default()).unwrap();
        assert_eq!(out[0].data, vec![-5.0]);
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu_ref(0.0), 0.0);
        assert!((silu_ref(10.0) - 9.999_546).abs() < 1e-5);
    }

    #[test]
    fn split_concat_identity() {
        let mut b = GraphBuilder::new();
        b.node("in", Op::Input { shape: None }, &[])
            .node("s", Op::Split { channels: Some(vec![1, 2]) }, &["in"])
            .node("cat", Op::Concat, &["s", "s2"])
            .node("s2", Op::HardSwish, &["s"])
            .node("out", Op::Output, &["cat"]);
        let g = infer_shapes(&b.build().unwrap(), TensorShape::new(2, 2, 3)).unwrap();
        let x = t(2, 2, 3, &[-1.0, 4.0, 5.0, 2.0, 3.0, 4.0, 0.0, 6.0, 7.0, 1.0, 8.0, 9.0]);
        let out = run_reference(&g, &BTreeMap::new(), &x).unwrap();
        let o = out.values().next().unwrap();
        assert_eq!(o.shape, TensorShape::new(2, 2, 3));
        assert_eq!(o.data, x.data);
    }

    #[test]
    fn arity_errors() {
        let x = t(1, 1, 1, &[1.0]);
        let err = eval_kernel("a", &Op::Add, &[&x], KernelArgs::default()).unwrap_err();
        assert!(matches!(err, RefError::Arity { .. }));
        let err = eval_kernel("c", &Op::conv(1, 1, 0, 1), &[&x], KernelArgs::default()).unwrap_err();
        assert!(matches!(err, RefError::MissingWeights { .. }));
    }
}
