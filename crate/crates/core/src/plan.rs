//! Quantization plan: quantized weights, requantization multipliers and the
//! per-node activation scale. Built once, then read by both the quantized
//! reference and the simulator so their arithmetic matches bit for bit.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fixed::{self, Requant};
use crate::golden::{self, RefError, RefTensor};
use crate::graph::{NetworkGraph, NodeId, Op, OpKind};
use crate::quant::{quantize_tensor_with, QuantConfig, QuantError, QuantizedTensor};
use crate::weights::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvQuant {
    pub weights: QuantizedTensor,
    pub requant: Requant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantPlan {
    pub config: QuantConfig,
    /// Fractional bits of each node's output, indexed by node id.
    fracs: Vec<i32>,
    conv: BTreeMap<NodeId, ConvQuant>,
    slopes: BTreeMap<NodeId, i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanError {
    Quant { node: String, source: QuantError },
    Reference(RefError),
    MissingWeights(String),
}

impl core::fmt::Display for PlanError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PlanError::Quant { node, source } => write!(f, "quantizing `{node}`: {source}"),
            PlanError::Reference(e) => write!(f, "calibration run failed: {e}"),
            PlanError::MissingWeights(n) => write!(f, "no weights for `{n}`"),
        }
    }
}

impl core::error::Error for PlanError {}

impl From<RefError> for PlanError {
    fn from(e: RefError) -> Self {
        PlanError::Reference(e)
    }
}

impl QuantPlan {
    /// Choose activation scales from the dynamic range seen when running
    /// `calibration` through the real-valued reference.
    pub fn calibrate(
        graph: &NetworkGraph,
        weights: &BTreeMap<String, Tensor4>,
        config: QuantConfig,
        calibration: &RefTensor<f64>,
    ) -> Result<Self, PlanError> {
        let (edges, outputs) = golden::run_reference_edges(graph, weights, calibration)?;
        let mut range = vec![0.0f64; graph.len()];
        for (i, e) in graph.edges().iter().enumerate() {
            let m = edges[i].data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
            range[e.from.0] = range[e.from.0].max(m);
        }
        for (n, t) in &outputs {
            range[n.0] = t.data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        }
        Self::from_ranges(graph, weights, config, &range)
    }

    /// Build from the largest magnitude seen at each node's output.
    pub fn from_ranges(
        graph: &NetworkGraph,
        weights: &BTreeMap<String, Tensor4>,
        config: QuantConfig,
        max_abs: &[f64],
    ) -> Result<Self, PlanError> {
        let mut fracs = vec![0i32; graph.len()];
        let mut conv = BTreeMap::new();
        let mut slopes = BTreeMap::new();
        for &n in graph.topo_order() {
            let node = graph.node(n);
            let input_frac = node.inputs.first().map(|e| fracs[graph.edge(*e).from.0]);
            let from_range = fixed::frac_for_range(max_abs[n.0], config.a_bits);
            fracs[n.0] = match node.kind() {
                OpKind::Input | OpKind::Convolution | OpKind::Add | OpKind::Concat => from_range,
                _ => input_frac.unwrap_or(from_range),
            };
            match &node.op {
                Op::Convolution { .. } => {
                    let key = graph.weights_key(n).expect("conv key");
                    let w = weights.get(key).ok_or_else(|| PlanError::MissingWeights(node.name.clone()))?;
                    let values: Vec<f64> = w.values.iter().map(|&v| v as f64).collect();
                    let q = quantize_tensor_with(&values, &w.dims, config.w_bits, config.rounding)
                        .map_err(|source| PlanError::Quant { node: node.name.clone(), source })?;
                    let fi = input_frac.unwrap_or(0);
                    let factor = q.params.scale * libm::exp2((fracs[n.0] - fi) as f64);
                    conv.insert(n, ConvQuant { weights: q, requant: Requant::from_real(factor) });
                }
                Op::LeakyRelu { slope } => {
                    slopes.insert(n, fixed::slope_q16(*slope));
                }
                _ => {}
            }
        }
        Ok(Self { config, fracs, conv, slopes })
    }

    pub fn frac(&self, n: NodeId) -> i32 {
        self.fracs[n.0]
    }

    pub fn fracs(&self) -> &[i32] {
        &self.fracs
    }

    pub fn conv(&self, n: NodeId) -> Option<&ConvQuant> {
        self.conv.get(&n)
    }

    pub fn slope(&self, n: NodeId) -> Option<i64> {
        self.slopes.get(&n).copied()
    }

    pub fn conv_entries(&self) -> impl Iterator<Item = (NodeId, &ConvQuant)> {
        self.conv.iter().map(|(k, v)| (*k, v))
    }

    /// Quantize a real input tensor at the `Input` node's scale.
    pub fn quantize_input(&self, graph: &NetworkGraph, x: &RefTensor<f64>) -> RefTensor<i64> {
        let f = graph.input_node().map(|n| self.frac(n)).unwrap_or(0);
        x.map(|v| fixed::to_fixed(v, f, self.config.a_bits))
    }
}
