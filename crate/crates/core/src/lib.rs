//! Core of a toolflow that maps YOLO-style CNN graphs onto a streaming
//! dataflow accelerator: graph IR, weight quantization, analytic performance
//! models, design space exploration, a functional reference and a
//! cycle-stepped simulator of the ready/valid pipeline.
//!
//! The crate is `no_std` with `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dse;
pub mod fixed;
pub mod gen;
pub mod golden;
pub mod graph;
pub mod perf;
pub mod plan;
pub mod quant;
pub mod sim;
pub mod weights;

pub use dse::{DepthReport, DseConfig, DseError};
pub use golden::RefTensor;
pub use graph::{EdgeId, NetworkGraph, NodeId, Op, OpKind, TensorShape};
pub use perf::{DesignPoint, PerfReport, Placement, PlatformSpec};
pub use plan::QuantPlan;
pub use quant::{QuantConfig, QuantParams, QuantizedTensor};
