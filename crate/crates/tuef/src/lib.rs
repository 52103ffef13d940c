//! Expert finding for community Q&A corpora.
//!
//! The pipeline builds a topic-layered user-interaction graph from historical
//! questions, selects candidate experts for a new question via content
//! retrieval, centrality, and random walks, and ranks them with a
//! gradient-boosted learning-to-rank model.

pub mod centrality;
pub mod config;
pub mod error;
pub mod eval;
pub mod experts;
pub mod features;
pub mod ingest;
pub mod mlg;
mod par;
pub mod pipeline;
pub mod ranker;
pub mod retrieval;
pub mod selection;
pub mod stats;
mod stopwords;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
