//! Network intermediate representation.
//!
//! A [`NetworkGraph`] is a DAG of operation nodes. Edges are stored in a
//! canonical order: by consumer declaration order, then by the position of the
//! producer in the consumer's input list. A `Split` node assigns its channel
//! ranges to its outgoing edges in that order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::weights::Tensor4;

/// Feature-map shape in NHWC order (batch implied).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorShape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl TensorShape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    /// Number of words streamed for one frame.
    pub const fn elements(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_valid(&self) -> bool {
        self.h >= 1 && self.w >= 1 && self.c >= 1
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.h, self.w, self.c)
    }
}

/// Zero padding applied on each side of the spatial dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn uniform(p: usize) -> Self {
        Self { top: p, bottom: p, left: p, right: p }
    }

    pub const fn is_uniform(&self) -> bool {
        self.top == self.bottom && self.top == self.left && self.top == self.right
    }
}

/// Window geometry shared by convolution and max pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl Window {
    /// Output spatial size, or `None` when a derived dimension is non-positive.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + self.padding.top + self.padding.bottom;
        let pw = w + self.padding.left + self.padding.right;
        if self.stride == 0 || ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some(((ph - self.kernel) / self.stride + 1, (pw - self.kernel) / self.stride + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Input,
    Output,
    Convolution,
    MaxPool,
    Resize,
    Split,
    Concat,
    Add,
    HardSwish,
    LeakyRelu,
}

impl OpKind {
    pub const ALL: [OpKind; 10] = [
        OpKind::Input,
        OpKind::Output,
        OpKind::Convolution,
        OpKind::MaxPool,
        OpKind::Resize,
        OpKind::Split,
        OpKind::Concat,
        OpKind::Add,
        OpKind::HardSwish,
        OpKind::LeakyRelu,
    ];

    /// Name used in network description documents.
    pub const fn name(&self) -> &'static str {
        match self {
            OpKind::Input => "Input",
            OpKind::Output => "Output",
            OpKind::Convolution => "Convolution",
            OpKind::MaxPool => "MaxPool",
            OpKind::Resize => "Resize",
            OpKind::Split => "Split",
            OpKind::Concat => "Concat",
            OpKind::Add => "Add",
            OpKind::HardSwish => "HardSwish",
            OpKind::LeakyRelu => "LeakyReLU",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Kinds whose hardware contains a sliding-window line buffer.
    pub const fn is_windowed(&self) -> bool {
        matches!(self, OpKind::Convolution | OpKind::MaxPool)
    }

    /// Kinds that only route words (no arithmetic on values).
    pub const fn is_routing(&self) -> bool {
        matches!(
            self,
            OpKind::Input | OpKind::Output | OpKind::Resize | OpKind::Split | OpKind::Concat
        )
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operation carried by a node, with its kind-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input {
        /// Declared input shape, if the document carries one.
        shape: Option<TensorShape>,
    },
    Output,
    Convolution {
        window: Window,
        filters: usize,
        weights_ref: Option<String>,
    },
    MaxPool {
        window: Window,
    },
    Resize {
        scale: usize,
    },
    Split {
        /// Channel count per output, in edge order. Equal partition when absent.
        channels: Option<Vec<usize>>,
    },
    Concat,
    Add,
    HardSwish,
    LeakyRelu {
        slope: f64,
    },
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Input { .. } => OpKind::Input,
            Op::Output => OpKind::Output,
            Op::Convolution { .. } => OpKind::Convolution,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::Resize { .. } => OpKind::Resize,
            Op::Split { .. } => OpKind::Split,
            Op::Concat => OpKind::Concat,
            Op::Add => OpKind::Add,
            Op::HardSwish => OpKind::HardSwish,
            Op::LeakyRelu { .. } => OpKind::LeakyRelu,
        }
    }

    pub fn window(&self) -> Option<&Window> {
        match self {
            Op::Convolution { window, .. } | Op::MaxPool { window } => Some(window),
            _ => None,
        }
    }

    pub fn conv(kernel: usize, stride: usize, pad: usize, filters: usize) -> Self {
        Op::Convolution {
            window: Window { kernel, stride, padding: Padding::uniform(pad) },
            filters,
            weights_ref: None,
        }
    }

    pub fn max_pool(kernel: usize, stride: usize, pad: usize) -> Self {
        Op::MaxPool { window: Window { kernel, stride, padding: Padding::uniform(pad) } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    /// Incoming edges in declared input order.
    pub inputs: Vec<EdgeId>,
    /// Outgoing edges in canonical edge order.
    pub outputs: Vec<EdgeId>,
}

impl Node {
    pub fn kind(&self) -> OpKind {
        self.op.kind()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    /// Filled in by [`infer_shapes`].
    pub shape: Option<TensorShape>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    DuplicateId(String),
    UnknownProducer { node: String, producer: String },
    DuplicateInput { node: String, producer: String },
    Cycle(String),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::DuplicateId(id) => write!(f, "duplicate node id `{id}`"),
            GraphError::UnknownProducer { node, producer } => {
                write!(f, "node `{node}` reads from unknown node `{producer}`")
            }
            GraphError::DuplicateInput { node, producer } => {
                write!(f, "node `{node}` lists input `{producer}` more than once")
            }
            GraphError::Cycle(id) => write!(f, "cycle detected through node `{id}`"),
        }
    }
}

impl core::error::Error for GraphError {}

/// The toolflow IR. Immutable once built; shape inference returns a new graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    topo: Vec<NodeId>,
    pub weights: BTreeMap<String, Tensor4>,
}

/// Incremental constructor that resolves producer names once all nodes exist.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<(String, Op, Vec<String>)>,
    weights: BTreeMap<String, Tensor4>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, name: &str, op: Op, inputs: &[&str]) -> &mut Self {
        self.nodes.push((name.to_string(), op, inputs.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn push(&mut self, name: String, op: Op, inputs: Vec<String>) -> &mut Self {
        self.nodes.push((name, op, inputs));
        self
    }

    pub fn weight(&mut self, name: &str, tensor: Tensor4) -> &mut Self {
        self.weights.insert(name.to_string(), tensor);
        self
    }

    pub fn build(&self) -> Result<NetworkGraph, GraphError> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, (name, _, _)) in self.nodes.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(GraphError::DuplicateId(name.clone()));
            }
        }
        let mut nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|(name, op, _)| Node {
                name: name.clone(),
                op: op.clone(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            })
            .collect();
        let mut edges = Vec::new();
        for (to, (name, _, inputs)) in self.nodes.iter().enumerate() {
            for (pos, producer) in inputs.iter().enumerate() {
                let Some(&from) = index.get(producer.as_str()) else {
                    return Err(GraphError::UnknownProducer {
                        node: name.clone(),
                        producer: producer.clone(),
                    });
                };
                if inputs[..pos].contains(producer) {
                    return Err(GraphError::DuplicateInput {
                        node: name.clone(),
                        producer: producer.clone(),
                    });
                }
                let id = EdgeId(edges.len());
                edges.push(Edge { from: NodeId(from), to: NodeId(to), shape: None });
                nodes[to].inputs.push(id);
                nodes[from].outputs.push(id);
            }
        }
        let topo = topo_sort(&nodes, &edges)?;
        Ok(NetworkGraph { nodes, edges, topo, weights: self.weights.clone() })
    }
}

fn topo_sort(nodes: &[Node], edges: &[Edge]) -> Result<Vec<NodeId>, GraphError> {
    let mut indegree: Vec<usize> = nodes.iter().map(|n| n.inputs.len()).collect();
    // Lowest declaration index first keeps the order deterministic.
    let mut ready: alloc::collections::BTreeSet<usize> =
        (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(n) = ready.pop_first() {
        order.push(NodeId(n));
        for e in &nodes[n].outputs {
            let to = edges[e.0].to.0;
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.insert(to);
            }
        }
    }
    if order.len() != nodes.len() {
        let stuck = (0..nodes.len()).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(GraphError::Cycle(nodes[stuck].name.clone()));
    }
    Ok(order)
}

impl NetworkGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(EdgeId)
    }

    /// Nodes in a deterministic topological order.
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn find_edge(&self, from: &str, to: &str) -> Option<EdgeId> {
        let (f, t) = (self.find(from)?, self.find(to)?);
        self.edges.iter().position(|e| e.from == f && e.to == t).map(EdgeId)
    }

    /// `producer->consumer`, the key used for edges in design and depth files.
    pub fn edge_name(&self, id: EdgeId) -> String {
        let e = &self.edges[id.0];
        format!("{}->{}", self.nodes[e.from.0].name, self.nodes[e.to.0].name)
    }

    pub fn edge_by_name(&self, name: &str) -> Option<EdgeId> {
        let (from, to) = name.split_once("->")?;
        self.find_edge(from.trim(), to.trim())
    }

    pub fn inputs_of_kind(&self, kind: OpKind) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(move |&n| self.node(n).kind() == kind)
    }

    pub fn input_node(&self) -> Option<NodeId> {
        self.inputs_of_kind(OpKind::Input).next()
    }

    pub fn output_nodes(&self) -> Vec<NodeId> {
        self.inputs_of_kind(OpKind::Output).collect()
    }

    /// Edges leaving a node with fan-out of two or more. These carry the
    /// buffering needed when the branches reconverge.
    pub fn skip_edges(&self) -> Vec<EdgeId> {
        self.edge_ids()
            .filter(|&e| self.nodes[self.edges[e.0].from.0].outputs.len() >= 2)
            .collect()
    }

    pub fn is_skip_edge(&self, e: EdgeId) -> bool {
        self.nodes[self.edges[e.0].from.0].outputs.len() >= 2
    }

    /// Shapes of the incoming edges, in input order. `None` before inference.
    pub fn input_shapes(&self, n: NodeId) -> Option<Vec<TensorShape>> {
        self.nodes[n.0].inputs.iter().map(|e| self.edges[e.0].shape).collect()
    }

    pub fn input_shape(&self, n: NodeId) -> Option<TensorShape> {
        self.nodes[n.0].inputs.first().and_then(|e| self.edges[e.0].shape)
    }

    /// Full (unsplit) output shape of a node. For `Split` this is its input
    /// shape; for `Output` it is the shape it receives.
    pub fn output_shape(&self, n: NodeId) -> Option<TensorShape> {
        let node = &self.nodes[n.0];
        match node.kind() {
            OpKind::Output | OpKind::Split => self.input_shape(n),
            _ => match node.outputs.first() {
                Some(e) => self.edges[e.0].shape,
                None => None,
            },
        }
    }

    pub fn edge_shape(&self, e: EdgeId) -> Option<TensorShape> {
        self.edges[e.0].shape
    }

    pub fn is_shaped(&self) -> bool {
        self.edges.iter().all(|e| e.shape.is_some())
    }

    /// Name of the weight tensor a convolution reads (its own name when no
    /// explicit reference is given).
    pub fn weights_key(&self, n: NodeId) -> Option<&str> {
        match &self.nodes[n.0].op {
            Op::Convolution { weights_ref, .. } => {
                Some(weights_ref.as_deref().unwrap_or(self.nodes[n.0].name.as_str()))
            }
            _ => None,
        }
    }

    /// Replace the weight store.
    pub fn with_weights(mut self, weights: BTreeMap<String, Tensor4>) -> Self {
        self.weights = weights;
        self
    }

    /// Declared shape of the `Input` node, if any.
    pub fn declared_input_shape(&self) -> Option<TensorShape> {
        self.input_node().and_then(|n| match &self.nodes[n.0].op {
            Op::Input { shape } => *shape,
            _ => None,
        })
    }

    /// Names of each node's producers, in input order.
    pub fn producer_names(&self, n: NodeId) -> Vec<&str> {
        self.nodes[n.0]
            .inputs
            .iter()
            .map(|e| self.nodes[self.edges[e.0].from.0].name.as_str())
            .collect()
    }

    /// Rebuild as a builder, preserving node order and inputs.
    pub fn to_builder(&self) -> GraphBuilder {
        let mut b = GraphBuilder::new();
        for n in self.node_ids() {
            let node = self.node(n);
            let inputs = self.producer_names(n).into_iter().map(String::from).collect();
            b.push(node.name.clone(), node.op.clone(), inputs);
        }
        b.weights = self.weights.clone();
        b
    }

    /// Channel counts for each output of a split node with `c` input channels.
    pub fn split_channels(&self, n: NodeId, c: usize) -> Option<Vec<usize>> {
        let node = &self.nodes[n.0];
        let Op::Split { channels } = &node.op else { return None };
        match channels {
            Some(ch) => Some(ch.clone()),
            None => {
                let k = node.outputs.len();
                if k == 0 || !c.is_multiple_of(k) {
                    None
                } else {
                    Some(vec![c / k; k])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeError {
    NoInput,
    Mismatch { node: String, detail: String },
    NonPositive { node: String },
    BadSplit { node: String, detail: String },
    Arity { node: String, expected: &'static str, found: usize },
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeError::NoInput => f.write_str("graph has no Input node"),
            ShapeError::Mismatch { node, detail } => write!(f, "shape mismatch at `{node}`: {detail}"),
            ShapeError::NonPositive { node } => {
                write!(f, "non-positive derived dimension at `{node}`")
            }
            ShapeError::BadSplit { node, detail } => write!(f, "invalid split at `{node}`: {detail}"),
            ShapeError::Arity { node, expected, found } => {
                write!(f, "`{node}` expects {expected} input(s), found {found}")
            }
        }
    }
}

impl core::error::Error for ShapeError {}

/// Annotate every edge with its shape, starting from `input_shape` at the
/// `Input` node.
pub fn infer_shapes(graph: &NetworkGraph, input_shape: TensorShape) -> Result<NetworkGraph, ShapeError> {
    let mut g = graph.clone();
    for e in &mut g.edges {
        e.shape = None;
    }
    if g.input_node().is_none() {
        return Err(ShapeError::NoInput);
    }
    if !input_shape.is_valid() {
        return Err(ShapeError::NonPositive { node: "<input>".to_string() });
    }
    let order = g.topo.clone();
    for n in order {
        let node = g.nodes[n.0].clone();
        let name = node.name.clone();
        let ins: Vec<TensorShape> = node
            .inputs
            .iter()
            .map(|e| g.edges[e.0].shape.expect("producer shaped before consumer"))
            .collect();
        let arity = |expected: &'static str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ShapeError::Arity { node: name.clone(), expected, found: ins.len() })
            }
        };
        let out: Vec<TensorShape> = match &node.op {
            Op::Input { .. } => {
                arity("0", ins.is_empty())?;
                vec![input_shape; node.outputs.len()]
            }
            Op::Output => {
                arity("1", ins.len() == 1)?;
                Vec::new()
            }
            Op::Convolution { window, filters, .. } => {
                arity("1", ins.len() == 1)?;
                let s = ins[0];
                let (h, w) = window
                    .output_hw(s.h, s.w)
                    .ok_or(ShapeError::NonPositive { node: name.clone() })?;
                if *filters == 0 || window.kernel == 0 {
                    return Err(ShapeError::NonPositive { node: name.clone() });
                }
                vec![TensorShape::new(h, w, *filters); node.outputs.len()]
            }
            Op::MaxPool { window } => {
                arity("1", ins.len() == 1)?;
                let s = ins[0];
                let (h, w) = window
                    .output_hw(s.h, s.w)
                    .ok_or(ShapeError::NonPositive { node: name.clone() })?;
                if window.kernel == 0 {
                    return Err(ShapeError::NonPositive { node: name.clone() });
                }
                vec![TensorShape::new(h, w, s.c); node.outputs.len()]
            }
            Op::Resize { scale } => {
                arity("1", ins.len() == 1)?;
                if *scale == 0 {
                    return Err(ShapeError::NonPositive { node: name.clone() });
                }
                let s = ins[0];
                vec![TensorShape::new(s.h * scale, s.w * scale, s.c); node.outputs.len()]
            }
            Op::Split { .. } => {
                arity("1", ins.len() == 1)?;
                let s = ins[0];
                let parts = g.split_channels(n, s.c).ok_or_else(|| ShapeError::BadSplit {
                    node: name.clone(),
                    detail: format!("{} channels do not divide across {} outputs", s.c, node.outputs.len()),
                })?;
                if parts.len() != node.outputs.len() {
                    return Err(ShapeError::BadSplit {
                        node: name.clone(),
                        detail: format!("{} channel groups for {} outputs", parts.len(), node.outputs.len()),
                    });
                }
                if parts.iter().sum::<usize>() != s.c || parts.contains(&0) {
                    return Err(ShapeError::BadSplit {
                        node: name.clone(),
                        detail: format!("channel groups {parts:?} do not partition {}", s.c),
                    });
                }
                parts.iter().map(|&c| TensorShape::new(s.h, s.w, c)).collect()
            }
            Op::Concat => {
                arity(">=2", ins.len() >= 2)?;
                let first = ins[0];
                if let Some(bad) = ins.iter().find(|s| s.h != first.h || s.w != first.w) {
                    return Err(ShapeError::Mismatch {
                        node: name.clone(),
                        detail: format!("Concat spatial dims {first} vs {bad}"),
                    });
                }
                let c = ins.iter().map(|s| s.c).sum();
                vec![TensorShape::new(first.h, first.w, c); node.outputs.len()]
            }
            Op::Add => {
                arity(">=2", ins.len() >= 2)?;
                let first = ins[0];
                if let Some(bad) = ins.iter().find(|s| **s != first) {
                    return Err(ShapeError::Mismatch {
                        node: name.clone(),
                        detail: format!("Add shape mismatch {first} vs {bad}"),
                    });
                }
                vec![first; node.outputs.len()]
            }
            Op::HardSwish | Op::LeakyRelu { .. } => {
                arity("1", ins.len() == 1)?;
                vec![ins[0]; node.outputs.len()]
            }
        };
        for (e, s) in node.outputs.iter().zip(out) {
            if !s.is_valid() {
                return Err(ShapeError::NonPositive { node: name.clone() });
            }
            g.edges[e.0].shape = Some(s);
        }
    }
    Ok(g)
}

/// One broken structural rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Node name, edge name, or `graph`.
    pub subject: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

/// Check all structural invariants. Shape rules are only checked on edges that
/// carry shapes.
pub fn validate_graph(graph: &NetworkGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: &str, rule: String| out.push(Violation { subject: subject.to_string(), rule });

    let n_inputs = graph.inputs_of_kind(OpKind::Input).count();
    if n_inputs != 1 {
        push("graph", format!("exactly one Input node required, found {n_inputs}"));
    }
    if graph.inputs_of_kind(OpKind::Output).count() == 0 {
        push("graph", "at least one Output node required".to_string());
    }

    for n in graph.node_ids() {
        let node = graph.node(n);
        let name = node.name.as_str();
        let (ni, no) = (node.inputs.len(), node.outputs.len());
        match node.kind() {
            OpKind::Input => {
                if ni != 0 {
                    push(name, format!("Input must have no inputs, found {ni}"));
                }
            }
            OpKind::Concat | OpKind::Add => {
                if ni < 2 {
                    push(name, format!("{} requires at least 2 inputs, found {ni}", node.kind()));
                }
            }
            _ => {
                if ni != 1 {
                    push(name, format!("{} requires exactly 1 input, found {ni}", node.kind()));
                }
            }
        }
        match node.kind() {
            OpKind::Output => {
                if no != 0 {
                    push(name, "Output must not feed other nodes".to_string());
                }
            }
            OpKind::Split => {
                if no < 2 {
                    push(name, format!("Split requires at least 2 outputs, found {no}"));
                }
            }
            _ => {
                if no == 0 {
                    push(name, "result is never consumed".to_string());
                }
            }
        }
        match &node.op {
            Op::Convolution { window, filters, .. } => {
                if window.kernel == 0 {
                    push(name, "kernel_size must be >= 1".to_string());
                }
                if *filters == 0 {
                    push(name, "filters must be >= 1".to_string());
                }
                if window.stride == 0 {
                    push(name, "stride must be >= 1".to_string());
                }
            }
            Op::MaxPool { window } => {
                if window.kernel == 0 {
                    push(name, "kernel_size must be >= 1".to_string());
                }
                if window.stride == 0 {
                    push(name, "stride must be >= 1".to_string());
                }
            }
            Op::Resize { scale } if *scale == 0 => push(name, "scale_factor must be >= 1".to_string()),
            Op::Split { channels: Some(ch) } if ch.len() != no => {
                push(name, format!("{} channel groups for {no} outputs", ch.len()));
            }
            Op::LeakyRelu { slope } if !slope.is_finite() => push(name, "slope must be finite".to_string()),
            _ => {}
        }

        let Some(shapes) = graph.input_shapes(n) else { continue };
        match node.kind() {
            OpKind::Add if shapes.len() >= 2 => {
                if shapes.iter().any(|s| *s != shapes[0]) {
                    let list: Vec<String> = shapes.iter().map(|s| s.to_string()).collect();
                    push(name, format!("Add shape mismatch: {}", list.join(" vs ")));
                }
            }
            OpKind::Concat if shapes.len() >= 2
                && shapes.iter().any(|s| s.h != shapes[0].h || s.w != shapes[0].w) => {
                    let list: Vec<String> = shapes.iter().map(|s| s.to_string()).collect();
                    push(name, format!("Concat spatial mismatch: {}", list.join(" vs ")));
                }
            _ => {}
        }
    }
    for e in graph.edge_ids() {
        if let Some(s) = graph.edge_shape(e) {
            if !s.is_valid() {
                push(&graph.edge_name(e), format!("non-positive shape {s}"));
            }
        }
    }
    out
}
