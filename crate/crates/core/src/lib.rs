//! Multilevel cryptocurrency news analytics.
//!
//! Level 1 turns each article into a knowledge graph and a text summary
//! (plus JSON twins of both). Level 2 stacks batches of those summaries into
//! trend reports, and level 3 merges the graph-channel and text-channel
//! stacks into one report. The model is reached through [`llm::Gateway`];
//! [`pipeline::Pipeline`] drives the levels and [`store`] turns level-1
//! sentiment into per-entity features.

pub mod corpus;
pub mod llm;
pub mod model;
pub mod parse;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod store;
