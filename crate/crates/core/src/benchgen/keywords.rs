use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::textprep::{doc_text, tokenize, FieldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    pub weight: f64,
}

/// Class-based tf-idf labels.
///
/// Each class is the concatenated `doc_text` of its members. A term scores
/// `tf(t,c) * ln(1 + A / f(t))` where `f(t)` is its count over all classes
/// and `A` the mean token count per class. `assignments` follows corpus
/// order; classes are `0..k`.
pub fn ctfidf_keywords(
    corpus: &Corpus,
    cfg: &FieldConfig,
    assignments: &[usize],
    k: usize,
    top_n: usize,
) -> Vec<Vec<Keyword>> {
    let mut tf: Vec<HashMap<String, usize>> = vec![HashMap::new(); k];
    let mut total: HashMap<String, usize> = HashMap::new();
    let mut tokens = 0usize;
    for (w, &c) in corpus.workflows().iter().zip(assignments) {
        for t in tokenize(&doc_text(w, cfg)) {
            tokens += 1;
            *total.entry(t.clone()).or_default() += 1;
            *tf[c].entry(t).or_default() += 1;
        }
    }
    if k == 0 {
        return Vec::new();
    }
    let avg = tokens as f64 / k as f64;
    tf.into_iter()
        .map(|counts| {
            let mut scored: Vec<Keyword> = counts
                .into_iter()
                .map(|(term, n)| {
                    let weight = n as f64 * (1.0 + avg / total[&term] as f64).ln();
                    Keyword { term, weight }
                })
                .collect();
            scored.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.term.cmp(&b.term)));
            scored.truncate(top_n);
            scored
        })
        .collect()
}
