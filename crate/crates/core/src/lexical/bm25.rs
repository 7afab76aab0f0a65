use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{EmptyQueryPolicy, LexicalError};
use crate::corpus::Corpus;
use crate::ranking::{RankedList, Scored};
use crate::textprep::{doc_text, tokenize, FieldConfig};

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;

/// `ln(1 + (n - df + 0.5) / (df + 0.5))`, positive for every `df <= n`.
pub fn bm25_idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Okapi BM25 statistics: an inverted list of `(doc, tf)` per term, document
/// lengths and the length normalization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_lens: Vec<usize>,
    avgdl: f64,
    k1: f64,
    b: f64,
    doc_ids: Vec<String>,
    fields: FieldConfig,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, cfg: &FieldConfig, k1: f64, b: f64) -> Result<Self, LexicalError> {
        if corpus.is_empty() {
            return Err(LexicalError::EmptyCorpus);
        }
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(LexicalError::BadParam(format!("k1 must be > 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(LexicalError::BadParam(format!("b must be in [0, 1], got {b}")));
        }
        if !cfg.is_valid() {
            return Err(LexicalError::BadParam("no fields enabled".into()));
        }

        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_lens = Vec::with_capacity(corpus.len());
        for (pos, w) in corpus.workflows().iter().enumerate() {
            let tokens = tokenize(&doc_text(w, cfg));
            doc_lens.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((pos as u32, c));
            }
        }
        let avgdl = doc_lens.iter().sum::<usize>() as f64 / doc_lens.len() as f64;
        Ok(Self {
            postings,
            doc_lens,
            avgdl,
            k1,
            b,
            doc_ids: corpus.ids().map(str::to_owned).collect(),
            fields: *cfg,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn fields(&self) -> FieldConfig {
        self.fields
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, pos: usize) -> usize {
        self.doc_lens[pos]
    }

    pub fn params(&self) -> (f64, f64) {
        (self.k1, self.b)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn tf(&self, term: &str, pos: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|&&(d, _)| d as usize == pos))
            .map_or(0, |&(_, c)| c)
    }

    pub fn idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_ids.len(), self.df(term))
    }

    /// BM25 score of every document, in corpus order. Repeated query terms
    /// count once.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        self.score_terms(&terms)
    }

    fn score_terms(&self, terms: &BTreeSet<String>) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_ids.len()];
        for t in terms {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = bm25_idf(self.doc_ids.len(), list.len());
            for &(doc, tf) in list {
                let tf = tf as f64;
                let len_ratio = if self.avgdl > 0.0 {
                    self.doc_lens[doc as usize] as f64 / self.avgdl
                } else {
                    0.0
                };
                let denom = tf + self.k1 * (1.0 - self.b + self.b * len_ratio);
                scores[doc as usize] += idf * tf * (self.k1 + 1.0) / denom;
            }
        }
        scores
    }

    pub fn search(&self, query: &str, k: usize, policy: EmptyQueryPolicy) -> Result<RankedList, LexicalError> {
        if k == 0 {
            return Err(LexicalError::BadParam("k must be at least 1".into()));
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let known = terms.iter().any(|t| self.postings.contains_key(t));
        if !known && policy == EmptyQueryPolicy::Error {
            return Err(LexicalError::EmptyQuery);
        }
        let hits = self
            .score_terms(&terms)
            .into_iter()
            .zip(&self.doc_ids)
            .map(|(score, id)| Scored { id: id.clone(), score })
            .collect();
        Ok(RankedList::top_k(hits, k))
    }
}
