//! All stage-one indexes over one corpus, addressed by [`Method`], plus the
//! two-stage (retrieve then rerank) search path.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::dense::{DenseError, DenseIndex, MultiVectorIndex, TokenMatrixIndex};
use crate::embed::{EmbedError, Embedder, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::lexical::{Bm25Index, EmptyQueryPolicy, FuzzyIndex, LexicalError, TfidfIndex, DEFAULT_B, DEFAULT_K1};
use crate::ranking::RankedList;
use crate::rerank::{rerank, ChatClient, RerankConfig};
use crate::textprep::{tokenize, FieldConfig};

/// A stage-one retrieval method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tfidf,
    Bm25,
    Fuzzy,
    Dense,
    Multivector,
    /// Token-level late interaction (sum of per-token maxima).
    Maxsim,
    /// Token-level vectors mean-pooled on both sides.
    Pooled,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Tfidf,
        Method::Bm25,
        Method::Fuzzy,
        Method::Dense,
        Method::Multivector,
        Method::Maxsim,
        Method::Pooled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tfidf => "tfidf",
            Method::Bm25 => "bm25",
            Method::Fuzzy => "fuzzy",
            Method::Dense => "dense",
            Method::Multivector => "multivector",
            Method::Maxsim => "maxsim",
            Method::Pooled => "pooled",
        }
    }

    pub fn is_lexical(self) -> bool {
        matches!(self, Method::Tfidf | Method::Bm25 | Method::Fuzzy)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown method {0:?}")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| UnknownMethod(s.to_owned()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("method {0} was not built for this index")]
    NotBuilt(Method),
}

/// What to build and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexOptions {
    pub fields: FieldConfig,
    pub k1: f64,
    pub b: f64,
    pub window: usize,
    pub stride: usize,
    pub methods: Vec<Method>,
    pub empty_query: EmptyQueryMode,
}

/// Serializable mirror of [`EmptyQueryPolicy`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyQueryMode {
    Error,
    #[default]
    ZeroScores,
}

impl From<EmptyQueryMode> for EmptyQueryPolicy {
    fn from(m: EmptyQueryMode) -> Self {
        match m {
            EmptyQueryMode::Error => EmptyQueryPolicy::Error,
            EmptyQueryMode::ZeroScores => EmptyQueryPolicy::ZeroScores,
        }
    }
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            fields: FieldConfig::default(),
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            methods: vec![
                Method::Tfidf,
                Method::Bm25,
                Method::Fuzzy,
                Method::Dense,
                Method::Multivector,
            ],
            empty_query: EmptyQueryMode::ZeroScores,
        }
    }
}

/// Immutable stage-one indexes over one corpus.
pub struct SearchEngine {
    corpus: Arc<Corpus>,
    embedder: Arc<dyn Embedder>,
    opts: IndexOptions,
    tfidf: Option<TfidfIndex>,
    bm25: Option<Bm25Index>,
    fuzzy: Option<FuzzyIndex>,
    dense: Option<DenseIndex>,
    multivector: Option<MultiVectorIndex>,
    tokens: Option<TokenMatrixIndex>,
}

impl fmt::Debug for SearchEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SearchEngine")
            .field("docs", &self.corpus.len())
            .field("embedder", &self.embedder.name())
            .field("methods", &self.methods())
            .finish()
    }
}

impl SearchEngine {
    pub fn build(corpus: Arc<Corpus>, embedder: Arc<dyn Embedder>, opts: IndexOptions) -> Result<Self, SearchError> {
        let wants = |m: Method| opts.methods.contains(&m);
        let fields = opts.fields;
        let tfidf = wants(Method::Tfidf)
            .then(|| TfidfIndex::build(&corpus, &fields))
            .transpose()?;
        let bm25 = wants(Method::Bm25)
            .then(|| Bm25Index::build(&corpus, &fields, opts.k1, opts.b))
            .transpose()?;
        let fuzzy = wants(Method::Fuzzy).then(|| FuzzyIndex::build(&corpus, &fields));
        let dense = wants(Method::Dense)
            .then(|| DenseIndex::build(&corpus, &fields, embedder.as_ref()))
            .transpose()?;
        let multivector = wants(Method::Multivector)
            .then(|| MultiVectorIndex::build(&corpus, &fields, embedder.as_ref(), opts.window, opts.stride))
            .transpose()?;
        let tokens = (wants(Method::Maxsim) || wants(Method::Pooled))
            .then(|| TokenMatrixIndex::build(&corpus, &fields, embedder.as_ref()))
            .transpose()?;
        Ok(Self {
            corpus,
            embedder,
            opts,
            tfidf,
            bm25,
            fuzzy,
            dense,
            multivector,
            tokens,
        })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn options(&self) -> &IndexOptions {
        &self.opts
    }

    pub fn embedder_name(&self) -> String {
        self.embedder.name()
    }

    pub fn tfidf(&self) -> Option<&TfidfIndex> {
        self.tfidf.as_ref()
    }

    pub fn bm25(&self) -> Option<&Bm25Index> {
        self.bm25.as_ref()
    }

    pub fn dense(&self) -> Option<&DenseIndex> {
        self.dense.as_ref()
    }

    pub fn multivector(&self) -> Option<&MultiVectorIndex> {
        self.multivector.as_ref()
    }

    pub fn methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| match m {
                Method::Tfidf => self.tfidf.is_some(),
                Method::Bm25 => self.bm25.is_some(),
                Method::Fuzzy => self.fuzzy.is_some(),
                Method::Dense => self.dense.is_some(),
                Method::Multivector => self.multivector.is_some(),
                Method::Maxsim | Method::Pooled => self.tokens.is_some(),
            })
            .collect()
    }

    pub fn search(&self, method: Method, query: &str, k: usize) -> Result<RankedList, SearchError> {
        let policy: EmptyQueryPolicy = self.opts.empty_query.into();
        let missing = || SearchError::NotBuilt(method);
        match method {
            Method::Tfidf => Ok(self.tfidf.as_ref().ok_or_else(missing)?.search(query, k, policy)?),
            Method::Bm25 => Ok(self.bm25.as_ref().ok_or_else(missing)?.search(query, k, policy)?),
            Method::Fuzzy => {
                if k == 0 {
                    return Err(LexicalError::BadParam("k must be at least 1".into()).into());
                }
                Ok(self.fuzzy.as_ref().ok_or_else(missing)?.search(query, k))
            }
            Method::Dense => {
                let index = self.dense.as_ref().ok_or_else(missing)?;
                Ok(index.search(&self.embedder.embed_one(query)?, k)?)
            }
            Method::Multivector => {
                let index = self.multivector.as_ref().ok_or_else(missing)?;
                Ok(index.search(&self.embedder.embed_one(query)?, k)?)
            }
            Method::Maxsim | Method::Pooled => {
                let index = self.tokens.as_ref().ok_or_else(missing)?;
                let tokens = tokenize(query);
                if tokens.is_empty() {
                    return Ok(RankedList::empty());
                }
                let qvecs = self.embedder.embed(&tokens)?;
                Ok(index.search(&qvecs, k, method == Method::Pooled)?)
            }
        }
    }
}

/// Anything that answers a query with a ranked list.
pub trait Retriever: Send + Sync {
    fn name(&self) -> String;
    fn search(&self, query: &str, k: usize) -> Result<RankedList, SearchError>;
}

/// A [`SearchEngine`] pinned to one method.
pub struct MethodRetriever<'a> {
    pub engine: &'a SearchEngine,
    pub method: Method,
}

impl Retriever for MethodRetriever<'_> {
    fn name(&self) -> String {
        self.method.to_string()
    }

    fn search(&self, query: &str, k: usize) -> Result<RankedList, SearchError> {
        self.engine.search(self.method, query, k)
    }
}

/// Runs `retriever` and measures its wall-clock time on a monotonic clock.
pub fn timed_search(retriever: &dyn Retriever, query: &str, k: usize) -> Result<(RankedList, f64), SearchError> {
    let start = Instant::now();
    let list = retriever.search(query, k)?;
    Ok((list, start.elapsed().as_secs_f64() * 1e3))
}

/// Result of a two-stage search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageResult {
    pub list: RankedList,
    pub used_llm: bool,
    pub warnings: Vec<String>,
    pub retrieval_ms: f64,
    pub rerank_ms: Option<f64>,
}

impl TwoStageResult {
    pub fn total_ms(&self) -> f64 {
        self.retrieval_ms + self.rerank_ms.unwrap_or(0.0)
    }
}

/// Stage one with `method`, optionally followed by LLM reranking of the top
/// `candidates_k` hits; the final list is cut to `k`.
pub fn two_stage_search(
    engine: &SearchEngine,
    method: Method,
    query: &str,
    k: usize,
    reranker: Option<(&dyn ChatClient, &RerankConfig)>,
) -> Result<TwoStageResult, SearchError> {
    let depth = match reranker {
        Some((_, cfg)) => k.max(cfg.candidates_k),
        None => k,
    };
    let stage = MethodRetriever { engine, method };
    let (stage1, retrieval_ms) = timed_search(&stage, query, depth)?;
    let Some((client, cfg)) = reranker else {
        return Ok(TwoStageResult {
            list: stage1,
            used_llm: false,
            warnings: Vec::new(),
            retrieval_ms,
            rerank_ms: None,
        });
    };
    let start = Instant::now();
    let mut outcome = if stage1.is_empty() {
        crate::rerank::RerankOutcome {
            list: stage1,
            used_llm: false,
            per_id_scores: Default::default(),
            warnings: vec!["stage-1 returned no candidates".into()],
        }
    } else {
        rerank(query, &stage1, engine.corpus(), client, cfg)
    };
    let rerank_ms = start.elapsed().as_secs_f64() * 1e3;
    outcome.list.truncate(k);
    Ok(TwoStageResult {
        list: outcome.list,
        used_llm: outcome.used_llm,
        warnings: outcome.warnings,
        retrieval_ms,
        rerank_ms: Some(rerank_ms),
    })
}

/// A two-stage pipeline usable wherever a [`Retriever`] is expected.
pub struct TwoStageRetriever<'a> {
    pub engine: &'a SearchEngine,
    pub method: Method,
    pub client: &'a dyn ChatClient,
    pub cfg: &'a RerankConfig,
}

impl Retriever for TwoStageRetriever<'_> {
    fn name(&self) -> String {
        format!("{}+rerank", self.method)
    }

    fn search(&self, query: &str, k: usize) -> Result<RankedList, SearchError> {
        Ok(two_stage_search(self.engine, self.method, query, k, Some((self.client, self.cfg)))?.list)
    }
}
