//! Command-line toolflow over `yoloflow-core`: file formats, artifact
//! emission and the subcommands.

pub mod commands;
pub mod container;
pub mod error;
pub mod formats;
pub mod network;
pub mod output;
pub mod svg;
