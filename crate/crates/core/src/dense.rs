//! Exact (flat) vector search: single-vector, multi-vector (max over
//! chunks) and token-level late interaction.

use thiserror::Error;

use crate::corpus::Corpus;
use crate::embed::{chunk_text, EmbedError, Embedder, EmbeddingVector};
use crate::ranking::{RankedList, Scored};
use crate::textprep::{doc_text, tokenize, FieldConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DenseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("token matrix is empty")]
    EmptyMatrix,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity, 0 when either side is all-zero.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, DenseError> {
    if u.dim() != v.dim() {
        return Err(DenseError::DimMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u.values(), v.values()) / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_dim(expected: usize, v: &EmbeddingVector) -> Result<(), DenseError> {
    if v.dim() != expected {
        return Err(DenseError::DimMismatch { expected, got: v.dim() });
    }
    Ok(())
}

fn common_dim(vectors: &[EmbeddingVector]) -> Result<usize, DenseError> {
    let dim = vectors.first().map_or(0, EmbeddingVector::dim);
    for v in vectors {
        check_dim(dim, v)?;
    }
    Ok(dim)
}

/// One vector per document.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    rows: Vec<EmbeddingVector>,
    doc_ids: Vec<String>,
    dim: usize,
}

impl DenseIndex {
    pub fn from_vectors(doc_ids: Vec<String>, rows: Vec<EmbeddingVector>) -> Result<Self, DenseError> {
        if rows.is_empty() {
            return Err(DenseError::EmptyIndex);
        }
        assert_eq!(doc_ids.len(), rows.len(), "one row per document");
        let rows: Vec<EmbeddingVector> = rows
            .into_iter()
            .map(|r| EmbeddingVector::normalized(r.values().to_vec()))
            .collect();
        let dim = common_dim(&rows)?;
        Ok(Self { rows, doc_ids, dim })
    }

    pub fn build(corpus: &Corpus, cfg: &FieldConfig, embedder: &dyn Embedder) -> Result<Self, DenseError> {
        let texts: Vec<String> = corpus.workflows().iter().map(|w| doc_text(w, cfg)).collect();
        let rows = embedder.embed(&texts)?;
        Self::from_vectors(corpus.ids().map(str::to_owned).collect(), rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn rows(&self) -> &[EmbeddingVector] {
        &self.rows
    }

    /// Exact top-k by cosine. An all-zero query returns an empty list.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<RankedList, DenseError> {
        if self.rows.is_empty() {
            return Err(DenseError::EmptyIndex);
        }
        check_dim(self.dim, query)?;
        if query.is_zero() {
            return Ok(RankedList::empty());
        }
        let hits = self
            .rows
            .iter()
            .zip(&self.doc_ids)
            .map(|(row, id)| {
                Ok(Scored {
                    id: id.clone(),
                    score: cosine(query, row)?,
                })
            })
            .collect::<Result<Vec<_>, DenseError>>()?;
        Ok(RankedList::top_k(hits, k))
    }
}

/// Several chunk vectors per document; a document scores its best chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVectorIndex {
    chunks: Vec<EmbeddingVector>,
    owner: Vec<usize>,
    doc_ids: Vec<String>,
    dim: usize,
}

impl MultiVectorIndex {
    /// `docs[i]` holds the chunk vectors of `doc_ids[i]`; each needs at least one.
    pub fn from_chunks(doc_ids: Vec<String>, docs: Vec<Vec<EmbeddingVector>>) -> Result<Self, DenseError> {
        assert_eq!(doc_ids.len(), docs.len(), "one chunk list per document");
        if docs.is_empty() {
            return Err(DenseError::EmptyIndex);
        }
        let mut chunks = Vec::new();
        let mut owner = Vec::new();
        for (pos, doc) in docs.into_iter().enumerate() {
            if doc.is_empty() {
                return Err(DenseError::EmptyMatrix);
            }
            for c in doc {
                chunks.push(EmbeddingVector::normalized(c.values().to_vec()));
                owner.push(pos);
            }
        }
        let dim = common_dim(&chunks)?;
        Ok(Self {
            chunks,
            owner,
            doc_ids,
            dim,
        })
    }

    pub fn build(
        corpus: &Corpus,
        cfg: &FieldConfig,
        embedder: &dyn Embedder,
        window: usize,
        stride: usize,
    ) -> Result<Self, DenseError> {
        let mut texts = Vec::new();
        let mut counts = Vec::new();
        for w in corpus.workflows() {
            let chunks = chunk_text(&doc_text(w, cfg), window, stride)?;
            counts.push(chunks.len());
            texts.extend(chunks);
        }
        let mut vectors = embedder.embed(&texts)?.into_iter();
        let docs = counts.into_iter().map(|n| vectors.by_ref().take(n).collect()).collect();
        Self::from_chunks(corpus.ids().map(str::to_owned).collect(), docs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<RankedList, DenseError> {
        if self.chunks.is_empty() {
            return Err(DenseError::EmptyIndex);
        }
        check_dim(self.dim, query)?;
        if query.is_zero() {
            return Ok(RankedList::empty());
        }
        let mut best = vec![f64::NEG_INFINITY; self.doc_ids.len()];
        for (chunk, &doc) in self.chunks.iter().zip(&self.owner) {
            let s = cosine(query, chunk)?;
            if s > best[doc] {
                best[doc] = s;
            }
        }
        let hits = best
            .into_iter()
            .zip(&self.doc_ids)
            .map(|(score, id)| Scored { id: id.clone(), score })
            .collect();
        Ok(RankedList::top_k(hits, k))
    }
}

fn mean_direction(vectors: &[EmbeddingVector]) -> EmbeddingVector {
    let dim = vectors.first().map_or(0, EmbeddingVector::dim);
    let mut acc = vec![0.0; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v.values()) {
            *a += x;
        }
    }
    let n = vectors.len().max(1) as f64;
    EmbeddingVector::normalized(acc.into_iter().map(|a| a / n).collect())
}

/// Token-level relevance. With `pooled == false` this is MaxSim: the sum
/// over query tokens of the best cosine against any document token. With
/// `pooled == true` both sides are mean-pooled and compared by cosine.
pub fn late_interaction_score(
    query_tokens: &[EmbeddingVector],
    doc_tokens: &[EmbeddingVector],
    pooled: bool,
) -> Result<f64, DenseError> {
    if query_tokens.is_empty() || doc_tokens.is_empty() {
        return Err(DenseError::EmptyMatrix);
    }
    let dim = query_tokens[0].dim();
    for v in query_tokens.iter().chain(doc_tokens) {
        check_dim(dim, v)?;
    }
    if pooled {
        return cosine(&mean_direction(query_tokens), &mean_direction(doc_tokens));
    }
    let mut total = 0.0;
    for q in query_tokens {
        let mut best = f64::NEG_INFINITY;
        for d in doc_tokens {
            best = best.max(cosine(q, d)?);
        }
        total += best;
    }
    Ok(total)
}

/// Per-document matrices of token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrixIndex {
    docs: Vec<Vec<EmbeddingVector>>,
    doc_ids: Vec<String>,
    dim: usize,
}

impl TokenMatrixIndex {
    pub fn from_matrices(doc_ids: Vec<String>, docs: Vec<Vec<EmbeddingVector>>) -> Result<Self, DenseError> {
        assert_eq!(doc_ids.len(), docs.len(), "one matrix per document");
        if docs.is_empty() {
            return Err(DenseError::EmptyIndex);
        }
        if docs.iter().any(Vec::is_empty) {
            return Err(DenseError::EmptyMatrix);
        }
        let dim = docs[0][0].dim();
        for v in docs.iter().flatten() {
            check_dim(dim, v)?;
        }
        Ok(Self { docs, doc_ids, dim })
    }

    /// Embeds every token of each document's text. A document without
    /// tokens gets a single zero row, which scores 0 against everything.
    pub fn build(corpus: &Corpus, cfg: &FieldConfig, embedder: &dyn Embedder) -> Result<Self, DenseError> {
        let mut docs = Vec::with_capacity(corpus.len());
        let mut dim = None;
        for w in corpus.workflows() {
            let tokens = tokenize(&doc_text(w, cfg));
            let rows = if tokens.is_empty() {
                Vec::new()
            } else {
                embedder.embed(&tokens)?
            };
            if dim.is_none() {
                dim = rows.first().map(EmbeddingVector::dim);
            }
            docs.push(rows);
        }
        let dim = match dim {
            Some(d) => d,
            None => embedder.embed_one("placeholder")?.dim(),
        };
        for rows in &mut docs {
            if rows.is_empty() {
                rows.push(EmbeddingVector::zero(dim));
            }
        }
        Self::from_matrices(corpus.ids().map(str::to_owned).collect(), docs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn search(&self, query_tokens: &[EmbeddingVector], k: usize, pooled: bool) -> Result<RankedList, DenseError> {
        if query_tokens.is_empty() || query_tokens.iter().all(EmbeddingVector::is_zero) {
            return Ok(RankedList::empty());
        }
        let hits = self
            .docs
            .iter()
            .zip(&self.doc_ids)
            .map(|(doc, id)| {
                Ok(Scored {
                    id: id.clone(),
                    score: late_interaction_score(query_tokens, doc, pooled)?,
                })
            })
            .collect::<Result<Vec<_>, DenseError>>()?;
        Ok(RankedList::top_k(hits, k))
    }
}
