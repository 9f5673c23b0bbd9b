//! Platform, design point, depth report and tensor documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use yoloflow_core::dse::{DepthReport, DepthSource};
use yoloflow_core::golden::RefTensor;
use yoloflow_core::graph::{NetworkGraph, TensorShape};
use yoloflow_core::perf::{DesignPoint, Placement, PlatformSpec};

use crate::container::{self, FixedTensor};
use crate::error::{CliError, Result};

fn read(stage: &'static str, path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(stage, path, e))
}

/// TOML when the extension is `.toml`, JSON otherwise.
pub fn load_platform(path: &Path) -> Result<PlatformSpec> {
    let text = read("platform", path)?;
    let bad = |e: String| CliError::input("platform", format!("{}: {e}", path.display()));
    let spec: PlatformSpec = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| bad(e.message().to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
    };
    spec.check().map_err(|_| bad("every platform field must be positive and finite".into()))?;
    Ok(spec)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DesignDoc {
    /// Tag added when the document is written as an artifact.
    #[serde(default, skip_serializing)]
    pub config_hash: Option<String>,
    pub parallelism: BTreeMap<String, u64>,
    #[serde(default)]
    pub buffers: BTreeMap<String, Placement>,
}

pub fn design_doc(graph: &NetworkGraph, dp: &DesignPoint) -> DesignDoc {
    DesignDoc {
        config_hash: None,
        parallelism: graph.node_ids().map(|n| (graph.node(n).name.clone(), dp.p(n))).collect(),
        buffers: dp.buffers.iter().map(|(e, p)| (graph.edge_name(*e), *p)).collect(),
    }
}

/// Resolve names against `graph`. Skip buffers not listed default to on-chip.
pub fn design_point(graph: &NetworkGraph, doc: &DesignDoc) -> Result<DesignPoint> {
    let bad = |m: String| CliError::input("design", m);
    let mut dp = DesignPoint::baseline(graph);
    for name in doc.parallelism.keys() {
        if graph.find(name).is_none() {
            return Err(bad(format!("parallelism given for unknown node `{name}`")));
        }
    }
    for n in graph.node_ids() {
        let name = &graph.node(n).name;
        dp.parallelism[n.0] =
            *doc.parallelism.get(name).ok_or_else(|| bad(format!("no parallelism for node `{name}`")))?;
    }
    for (edge, placement) in &doc.buffers {
        let e = graph.edge_by_name(edge).ok_or_else(|| bad(format!("unknown edge `{edge}`")))?;
        if !graph.is_skip_edge(e) {
            return Err(bad(format!("edge `{edge}` is not a skip connection")));
        }
        dp.buffers.insert(e, *placement);
    }
    dp.check(graph).map_err(|e| bad(e.to_string()))?;
    Ok(dp)
}

pub fn load_design(graph: &NetworkGraph, path: &Path) -> Result<DesignPoint> {
    let text = read("design", path)?;
    let doc: DesignDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::input("design", format!("{}: {e}", path.display())))?;
    design_point(graph, &doc)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DepthDoc {
    pub source: DepthSource,
    /// Words per skip edge.
    pub depths: BTreeMap<String, u64>,
}

pub fn depth_doc(graph: &NetworkGraph, d: &DepthReport) -> DepthDoc {
    DepthDoc { source: d.source, depths: d.depths.iter().map(|(e, q)| (graph.edge_name(*e), *q)).collect() }
}

pub fn load_depths(graph: &NetworkGraph, path: &Path) -> Result<DepthReport> {
    let text = read("depths", path)?;
    let bad = |m: String| CliError::input("depths", format!("{}: {m}", path.display()));
    let doc: DepthDoc = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let mut depths = BTreeMap::new();
    for (name, q) in &doc.depths {
        let e = graph.edge_by_name(name).ok_or_else(|| bad(format!("unknown edge `{name}`")))?;
        depths.insert(e, *q);
    }
    let report = DepthReport { depths, source: doc.source };
    if let Some(e) = graph.skip_edges().into_iter().find(|e| report.get(*e).is_none()) {
        return Err(bad(format!("no depth for skip edge `{}`", graph.edge_name(e))));
    }
    Ok(report)
}

/// JSON tensor document. Real-valued when `frac` is absent, otherwise integer
/// words with value = word · 2^-frac.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorDoc {
    pub shape: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frac: Option<i32>,
    pub data: Vec<f64>,
}

impl TensorDoc {
    pub fn fixed(t: &FixedTensor) -> Self {
        let s = t.tensor.shape;
        Self { shape: [s.h, s.w, s.c], frac: Some(t.frac), data: t.tensor.data.iter().map(|&v| v as f64).collect() }
    }

    fn real(&self) -> Result<RefTensor<f64>> {
        let shape = TensorShape::new(self.shape[0], self.shape[1], self.shape[2]);
        let scale = self.frac.map_or(1.0, |f| (-f as f64).exp2());
        RefTensor::new(shape, self.data.iter().map(|v| v * scale).collect())
            .filter(|_| shape.is_valid())
            .ok_or_else(|| CliError::input("tensor", "data length does not match shape"))
    }
}

/// Real-valued input tensor from JSON or the first tensor of a `SATI` container.
pub fn load_input(path: &Path) -> Result<RefTensor<f64>> {
    let bad = |m: String| CliError::input("tensor", format!("{}: {m}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let doc: TensorDoc = serde_json::from_str(&read("tensor", path)?).map_err(|e| bad(e.to_string()))?;
        return doc.real().map_err(|e| bad(e.message));
    }
    let buf = std::fs::read(path).map_err(|e| CliError::io("tensor", path, e))?;
    let tensors = container::decode_tensors(&buf).map_err(|e| bad(e.message))?;
    let t = tensors.into_values().next().ok_or_else(|| bad("container holds no tensors".into()))?;
    let scale = (-t.frac as f64).exp2();
    Ok(t.tensor.map(|v| v as f64 * scale))
}
