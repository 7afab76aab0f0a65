//! Sparse and string-similarity retrievers: TF-IDF cosine, Okapi BM25 and
//! token-set-ratio fuzzy matching.

mod bm25;
mod fuzzy;
mod tfidf;

pub use bm25::{bm25_idf, Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use fuzzy::{fuzzy_search, indel_distance, ratio, token_set_ratio, FuzzyIndex};
pub use tfidf::{tfidf_idf, TfidfIndex};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LexicalError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("query has no indexable terms")]
    EmptyQuery,
    #[error("bad parameter: {0}")]
    BadParam(String),
}

/// What to do with a query that has no known terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EmptyQueryPolicy {
    /// Fail with [`LexicalError::EmptyQuery`].
    Error,
    /// Return `k` zero-score hits in id order.
    #[default]
    ZeroScores,
}
