//! Misinformation detection from text plus open-information-extraction
//! graphs, optionally enriched from class-specific knowledge graphs.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod extraction;
pub mod graph;
pub mod knowledge;
pub mod linking;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod text;
pub mod training;

pub use error::{Error, Result};
