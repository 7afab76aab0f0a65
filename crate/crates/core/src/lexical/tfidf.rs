use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EmptyQueryPolicy, LexicalError};
use crate::corpus::Corpus;
use crate::ranking::{RankedList, Scored};
use crate::textprep::{doc_text, tokenize, FieldConfig};

/// Smoothed inverse document frequency: `ln((1 + n) / (1 + df)) + 1`.
pub fn tfidf_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// L2-normalized tf-idf vectors with an inverted view for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfIndex {
    vocab: HashMap<String, u32>,
    idf: Vec<f64>,
    /// Per document, `(term id, weight)` sorted by term id.
    doc_vectors: Vec<Vec<(u32, f64)>>,
    doc_ids: Vec<String>,
    fields: FieldConfig,
    #[serde(skip)]
    postings: Vec<Vec<(u32, f64)>>,
}

impl TfidfIndex {
    pub fn build(corpus: &Corpus, cfg: &FieldConfig) -> Result<Self, LexicalError> {
        if corpus.is_empty() {
            return Err(LexicalError::EmptyCorpus);
        }
        if !cfg.is_valid() {
            return Err(LexicalError::BadParam("no fields enabled".into()));
        }
        let docs: Vec<Vec<String>> = corpus.workflows().iter().map(|w| tokenize(&doc_text(w, cfg))).collect();

        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        let mut counts: Vec<HashMap<u32, usize>> = Vec::with_capacity(docs.len());
        for tokens in &docs {
            let mut tf: HashMap<u32, usize> = HashMap::new();
            for t in tokens {
                let next = vocab.len() as u32;
                let id = *vocab.entry(t.clone()).or_insert(next);
                if id as usize == df.len() {
                    df.push(0);
                }
                *tf.entry(id).or_default() += 1;
            }
            for &id in tf.keys() {
                df[id as usize] += 1;
            }
            counts.push(tf);
        }

        let n = docs.len();
        let idf: Vec<f64> = df.iter().map(|&d| tfidf_idf(n, d)).collect();
        let doc_vectors = counts
            .into_iter()
            .map(|tf| {
                let mut v: Vec<(u32, f64)> = tf
                    .into_iter()
                    .map(|(id, c)| (id, c as f64 * idf[id as usize]))
                    .collect();
                v.sort_by_key(|&(id, _)| id);
                l2_normalize(&mut v);
                v
            })
            .collect();

        let mut index = Self {
            vocab,
            idf,
            doc_vectors,
            doc_ids: corpus.ids().map(str::to_owned).collect(),
            fields: *cfg,
            postings: Vec::new(),
        };
        index.rebuild_postings();
        Ok(index)
    }

    /// Restores the inverted view after deserialization.
    pub fn rebuild_postings(&mut self) {
        let mut postings = vec![Vec::new(); self.idf.len()];
        for (doc, vec) in self.doc_vectors.iter().enumerate() {
            for &(term, w) in vec {
                postings[term as usize].push((doc as u32, w));
            }
        }
        self.postings = postings;
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn fields(&self) -> FieldConfig {
        self.fields
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|&id| self.idf[id as usize])
    }

    /// The stored weight of `term` in document `pos` (0 when absent).
    pub fn weight(&self, pos: usize, term: &str) -> f64 {
        let Some(&id) = self.vocab.get(term) else {
            return 0.0;
        };
        self.doc_vectors[pos]
            .binary_search_by_key(&id, |&(t, _)| t)
            .map(|i| self.doc_vectors[pos][i].1)
            .unwrap_or(0.0)
    }

    pub fn doc_vector(&self, pos: usize) -> &[(u32, f64)] {
        &self.doc_vectors[pos]
    }

    /// The query's normalized tf-idf vector; unknown terms are dropped.
    pub fn query_vector(&self, query: &str) -> Vec<(u32, f64)> {
        let mut tf: HashMap<u32, usize> = HashMap::new();
        for t in tokenize(query) {
            if let Some(&id) = self.vocab.get(&t) {
                *tf.entry(id).or_default() += 1;
            }
        }
        let mut v: Vec<(u32, f64)> = tf
            .into_iter()
            .map(|(id, c)| (id, c as f64 * self.idf[id as usize]))
            .collect();
        v.sort_by_key(|&(id, _)| id);
        l2_normalize(&mut v);
        v
    }

    /// Cosine of the query against every document, in corpus order.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        self.score_vector(&self.query_vector(query))
    }

    fn score_vector(&self, qv: &[(u32, f64)]) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_ids.len()];
        for &(term, qw) in qv {
            for &(doc, dw) in &self.postings[term as usize] {
                scores[doc as usize] += qw * dw;
            }
        }
        scores
    }

    pub fn search(&self, query: &str, k: usize, policy: EmptyQueryPolicy) -> Result<RankedList, LexicalError> {
        if k == 0 {
            return Err(LexicalError::BadParam("k must be at least 1".into()));
        }
        let qv = self.query_vector(query);
        if qv.is_empty() && policy == EmptyQueryPolicy::Error {
            return Err(LexicalError::EmptyQuery);
        }
        let hits = self
            .score_vector(&qv)
            .into_iter()
            .zip(&self.doc_ids)
            .map(|(score, id)| Scored { id: id.clone(), score })
            .collect();
        Ok(RankedList::top_k(hits, k))
    }
}

fn l2_normalize(v: &mut [(u32, f64)]) {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in v.iter_mut() {
            *w /= norm;
        }
    }
}
