//! Task-aware retrieval of scientific workflows.
//!
//! Stage one ranks a workflow corpus with a lexical ([`lexical`]) or dense
//! ([`dense`]) retriever; stage two ([`rerank`]) reorders the top candidates
//! with a generative model. [`benchgen`] synthesizes a labeled benchmark
//! from a corpus and [`evalharness`] scores retrievers against it.

pub mod benchgen;
pub mod corpus;
pub mod dense;
pub mod embed;
pub mod engine;
pub mod evalharness;
pub mod fixture;
pub mod http;
pub mod lexical;
pub mod ranking;
pub mod rerank;
pub mod textprep;
