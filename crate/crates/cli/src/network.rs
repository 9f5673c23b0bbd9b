//! JSON network descriptions.
//!
//! ```json
//! { "name": "net", "weights_file": "net.satw",
//!   "nodes": [
//!     { "id": "input", "kind": "Input", "shape": [8, 8, 3] },
//!     { "id": "c1", "kind": "Convolution", "inputs": ["input"],
//!       "kernel_size": 3, "stride": 1, "padding": 1, "filters": 16 },
//!     { "id": "out", "kind": "Output", "inputs": ["c1"] } ] }
//! ```
//!
//! `padding` is one integer or `[top, bottom, left, right]`. `stride`
//! defaults to 1 and `padding` to 0.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use yoloflow_core::graph::{GraphBuilder, NetworkGraph, Op, OpKind, Padding, TensorShape, Window};

use crate::container;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDoc {
    pub name: Option<String>,
    pub weights_file: Option<String>,
    pub graph: NetworkGraph,
}

fn err(msg: impl Into<String>) -> CliError {
    CliError::input("network", msg)
}

fn allowed_fields(kind: OpKind) -> &'static [&'static str] {
    match kind {
        OpKind::Input => &["shape"],
        OpKind::Convolution => &["kernel_size", "stride", "padding", "filters", "weights_ref"],
        OpKind::MaxPool => &["kernel_size", "stride", "padding"],
        OpKind::Resize => &["scale_factor"],
        OpKind::Split => &["channels"],
        OpKind::LeakyRelu => &["slope"],
        OpKind::Output | OpKind::Concat | OpKind::Add | OpKind::HardSwish => &[],
    }
}

struct Fields<'a> {
    id: &'a str,
    obj: &'a Map<String, Value>,
}

impl Fields<'_> {
    fn get(&self, field: &str) -> Option<&Value> {
        self.obj.get(field)
    }

    fn required(&self, field: &str) -> Result<&Value> {
        self.get(field).ok_or_else(|| err(format!("node `{}`: missing required field `{field}`", self.id)))
    }

    fn bad(&self, field: &str, want: &str) -> CliError {
        err(format!("node `{}`: field `{field}` must be {want}", self.id))
    }

    fn positive(&self, field: &str, v: &Value) -> Result<usize> {
        match v.as_u64() {
            Some(x) if x >= 1 => Ok(x as usize),
            _ => Err(self.bad(field, "a positive integer")),
        }
    }

    fn req_positive(&self, field: &str) -> Result<usize> {
        let v = self.required(field)?;
        self.positive(field, v)
    }

    fn opt_positive(&self, field: &str, default: usize) -> Result<usize> {
        self.get(field).map_or(Ok(default), |v| self.positive(field, v))
    }

    fn padding(&self) -> Result<Padding> {
        let Some(v) = self.get("padding") else { return Ok(Padding::default()) };
        if let Some(p) = v.as_u64() {
            return Ok(Padding::uniform(p as usize));
        }
        let want = "a non-negative integer or [top, bottom, left, right]";
        let arr = v.as_array().filter(|a| a.len() == 4).ok_or_else(|| self.bad("padding", want))?;
        let mut s = [0usize; 4];
        for (i, x) in arr.iter().enumerate() {
            s[i] = x.as_u64().ok_or_else(|| self.bad("padding", want))? as usize;
        }
        Ok(Padding { top: s[0], bottom: s[1], left: s[2], right: s[3] })
    }

    fn window(&self) -> Result<Window> {
        Ok(Window { kernel: self.req_positive("kernel_size")?, stride: self.opt_positive("stride", 1)?, padding: self.padding()? })
    }

    fn usize_list(&self, field: &str, len: Option<usize>) -> Result<Option<Vec<usize>>> {
        let Some(v) = self.get(field) else { return Ok(None) };
        let want = match len {
            Some(3) => "[h, w, c] of positive integers",
            _ => "an array of positive integers",
        };
        let arr = v.as_array().ok_or_else(|| self.bad(field, want))?;
        if len.is_some_and(|n| n != arr.len()) {
            return Err(self.bad(field, want));
        }
        arr.iter().map(|x| self.positive(field, x).map_err(|_| self.bad(field, want))).collect::<Result<_>>().map(Some)
    }
}

fn parse_op(f: &Fields, kind: OpKind) -> Result<Op> {
    Ok(match kind {
        OpKind::Input => Op::Input { shape: f.usize_list("shape", Some(3))?.map(|s| TensorShape::new(s[0], s[1], s[2])) },
        OpKind::Output => Op::Output,
        OpKind::Convolution => {
            let weights_ref = match f.get("weights_ref") {
                None => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(_) => return Err(f.bad("weights_ref", "a string")),
            };
            Op::Convolution { window: f.window()?, filters: f.req_positive("filters")?, weights_ref }
        }
        OpKind::MaxPool => Op::MaxPool { window: f.window()? },
        OpKind::Resize => Op::Resize { scale: f.req_positive("scale_factor")? },
        OpKind::Split => Op::Split { channels: f.usize_list("channels", None)? },
        OpKind::Concat => Op::Concat,
        OpKind::Add => Op::Add,
        OpKind::HardSwish => Op::HardSwish,
        OpKind::LeakyRelu => {
            let slope = f.required("slope")?.as_f64().filter(|s| s.is_finite()).ok_or_else(|| f.bad("slope", "a finite number"))?;
            Op::LeakyRelu { slope }
        }
    })
}

/// Parse a network description. Weights are left symbolic; see [`load_network`].
pub fn parse_network(text: &str) -> Result<NetworkDoc> {
    let doc: Value = serde_json::from_str(text).map_err(|e| err(format!("malformed document: {e}")))?;
    let top = doc.as_object().ok_or_else(|| err("malformed document: top level must be an object"))?;
    for key in top.keys() {
        if !matches!(key.as_str(), "name" | "nodes" | "weights_file") {
            return Err(err(format!("unknown top-level key `{key}`")));
        }
    }
    let text_field = |k: &str| -> Result<Option<String>> {
        match top.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(err(format!("`{k}` must be a string"))),
        }
    };
    let name = text_field("name")?;
    let weights_file = text_field("weights_file")?;
    let nodes = top
        .get("nodes")
        .ok_or_else(|| err("malformed document: missing `nodes`"))?
        .as_array()
        .ok_or_else(|| err("malformed document: `nodes` must be an array"))?;
    let mut b = GraphBuilder::new();
    for (i, v) in nodes.iter().enumerate() {
        let obj = v.as_object().ok_or_else(|| err(format!("node #{i} is not an object")))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) if !s.is_empty() => s.as_str(),
            _ => return Err(err(format!("node #{i}: missing required field `id`"))),
        };
        let kind_name = obj
            .get("kind")
            .ok_or_else(|| err(format!("node `{id}`: missing required field `kind`")))?
            .as_str()
            .ok_or_else(|| err(format!("node `{id}`: field `kind` must be a string")))?;
        let kind = OpKind::from_name(kind_name).ok_or_else(|| err(format!("node `{id}`: unknown kind `{kind_name}`")))?;
        let allowed = allowed_fields(kind);
        for key in obj.keys() {
            if !matches!(key.as_str(), "id" | "kind" | "inputs") && !allowed.contains(&key.as_str()) {
                return Err(err(format!("node `{id}`: field `{key}` does not apply to {kind}")));
            }
        }
        let inputs: Vec<String> = match obj.get("inputs") {
            None => Vec::new(),
            Some(Value::Array(a)) => a
                .iter()
                .map(|x| x.as_str().map(str::to_string))
                .collect::<Option<_>>()
                .ok_or_else(|| err(format!("node `{id}`: field `inputs` must be an array of node ids")))?,
            Some(_) => return Err(err(format!("node `{id}`: field `inputs` must be an array of node ids"))),
        };
        let op = parse_op(&Fields { id, obj }, kind)?;
        b.push(id.to_string(), op, inputs);
    }
    let graph = b.build().map_err(|e| err(e.to_string()))?;
    Ok(NetworkDoc { name, weights_file, graph })
}

fn padding_json(p: &Padding) -> Value {
    if p.is_uniform() {
        json!(p.top)
    } else {
        json!([p.top, p.bottom, p.left, p.right])
    }
}

/// Inverse of [`parse_network`]. Weight tensors are not embedded.
pub fn serialize_network(doc: &NetworkDoc) -> String {
    let g = &doc.graph;
    let nodes: Vec<Value> = g
        .node_ids()
        .map(|n| {
            let node = g.node(n);
            let mut o = Map::new();
            o.insert("id".into(), json!(node.name));
            o.insert("kind".into(), json!(node.kind().name()));
            let inputs = g.producer_names(n);
            if !inputs.is_empty() {
                o.insert("inputs".into(), json!(inputs));
            }
            match &node.op {
                Op::Input { shape: Some(s) } => {
                    o.insert("shape".into(), json!([s.h, s.w, s.c]));
                }
                Op::Convolution { window, filters, weights_ref } => {
                    o.insert("kernel_size".into(), json!(window.kernel));
                    o.insert("stride".into(), json!(window.stride));
                    o.insert("padding".into(), padding_json(&window.padding));
                    o.insert("filters".into(), json!(filters));
                    if let Some(r) = weights_ref {
                        o.insert("weights_ref".into(), json!(r));
                    }
                }
                Op::MaxPool { window } => {
                    o.insert("kernel_size".into(), json!(window.kernel));
                    o.insert("stride".into(), json!(window.stride));
                    o.insert("padding".into(), padding_json(&window.padding));
                }
                Op::Resize { scale } => {
                    o.insert("scale_factor".into(), json!(scale));
                }
                Op::Split { channels: Some(c) } => {
                    o.insert("channels".into(), json!(c));
                }
                Op::LeakyRelu { slope } => {
                    o.insert("slope".into(), json!(slope));
                }
                _ => {}
            }
            Value::Object(o)
        })
        .collect();
    let mut top = Map::new();
    if let Some(n) = &doc.name {
        top.insert("name".into(), json!(n));
    }
    if let Some(w) = &doc.weights_file {
        top.insert("weights_file".into(), json!(w));
    }
    top.insert("nodes".into(), Value::Array(nodes));
    serde_json::to_string_pretty(&Value::Object(top)).expect("json values serialize")
}

/// Read a network file and any weights file it names (resolved relative to
/// the network file).
pub fn load_network(path: &Path) -> Result<NetworkDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io("network", path, e))?;
    let mut doc = parse_network(&text).map_err(|e| err(format!("{}: {}", path.display(), e.message)))?;
    if let Some(w) = &doc.weights_file {
        let wp: PathBuf = path.parent().unwrap_or(Path::new(".")).join(w);
        let weights = container::read_weights(&wp)?;
        doc.graph = doc.graph.clone().with_weights(weights);
    }
    Ok(doc)
}
