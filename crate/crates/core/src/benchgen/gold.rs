use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::corpus::Corpus;
use crate::lexical::TfidfIndex;
use crate::textprep::{doc_text, tokenize};

pub const DEFAULT_TFIDF_THRESHOLD: f64 = 0.2;
pub const DEFAULT_MIN_KEYWORD_OVERLAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoldParams {
    pub tfidf_threshold: f64,
    pub min_keyword_overlap: usize,
}

impl Default for GoldParams {
    fn default() -> Self {
        Self {
            tfidf_threshold: DEFAULT_TFIDF_THRESHOLD,
            min_keyword_overlap: DEFAULT_MIN_KEYWORD_OVERLAP,
        }
    }
}

impl GoldParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.tfidf_threshold > 0.0 && self.tfidf_threshold < 1.0) {
            return Err(BenchError::BadParam(format!(
                "tfidf threshold must lie in (0, 1), got {}",
                self.tfidf_threshold
            )));
        }
        if self.min_keyword_overlap == 0 {
            return Err(BenchError::BadParam("keyword overlap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Seeds plus every topic member whose tf-idf cosine to the query reaches
/// the threshold or that shares enough distinct tokens with it.
///
/// `tfidf` must be built over `corpus`. Members missing from the corpus are
/// ignored. Parameters are not validated here so callers can disable either
/// test with out-of-range values.
pub fn build_ground_truth(
    query: &str,
    seed_ids: &BTreeSet<String>,
    topic_member_ids: &[String],
    corpus: &Corpus,
    tfidf: &TfidfIndex,
    params: &GoldParams,
) -> Result<BTreeSet<String>, BenchError> {
    if let Some(bad) = seed_ids.iter().find(|id| !corpus.contains(id)) {
        return Err(BenchError::UnknownSeed(bad.clone()));
    }
    let positions: HashMap<&str, usize> = tfidf
        .doc_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let scores = tfidf.score_all(query);
    let query_tokens: HashSet<String> = tokenize(query).into_iter().collect();
    let fields = tfidf.fields();

    let mut gold = seed_ids.clone();
    for id in topic_member_ids {
        let (Some(w), Some(&pos)) = (corpus.get(id), positions.get(id.as_str())) else {
            continue;
        };
        if scores[pos] >= params.tfidf_threshold {
            gold.insert(id.clone());
            continue;
        }
        let doc_tokens: HashSet<String> = tokenize(&doc_text(w, &fields)).into_iter().collect();
        if query_tokens.intersection(&doc_tokens).count() >= params.min_keyword_overlap {
            gold.insert(id.clone());
        }
    }
    Ok(gold)
}
