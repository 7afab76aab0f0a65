use std::sync::LazyLock;

use regex::Regex;

use super::BenchError;
use crate::rerank::ChatClient;

const PATTERNS: [&str; 5] = [
    "how do I {kw1} {kw2} in galaxy",
    "workflow for {kw1} analysis",
    "{kw1} {kw2} pipeline tutorial",
    "process {kw1} data with {kw2}",
    "{kw1} and {kw2} workflow",
];

/// Re-prompts allowed when the model returns fewer lines than requested.
pub const MAX_LLM_ATTEMPTS: usize = 3;

pub enum QueryMode<'a> {
    Template,
    Llm(&'a dyn ChatClient),
}

impl QueryMode<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            QueryMode::Template => "template",
            QueryMode::Llm(_) => "llm",
        }
    }
}

/// Synthesizes `n` queries for one topic.
///
/// `examples` are (title, description) pairs of representative workflows;
/// only the llm mode reads them.
pub fn generate_queries(
    keywords: &[String],
    examples: &[(String, String)],
    n: usize,
    mode: &QueryMode<'_>,
) -> Result<Vec<String>, BenchError> {
    if n == 0 {
        return Err(BenchError::BadParam("n must be at least 1".into()));
    }
    match mode {
        QueryMode::Template => template_queries(keywords, n),
        QueryMode::Llm(client) => llm_queries(*client, keywords, examples, n),
    }
}

/// Walks the patterns in order, shifting the keyword window by one after
/// each full rotation. Repeats are skipped while unused combinations remain.
fn template_queries(keywords: &[String], n: usize) -> Result<Vec<String>, BenchError> {
    if keywords.len() < 2 {
        return Err(BenchError::InsufficientKeywords(keywords.len()));
    }
    let l = keywords.len();
    let combos = PATTERNS.len() * l;
    let fill = |i: usize| {
        let shift = (i / PATTERNS.len()) % l;
        PATTERNS[i % PATTERNS.len()]
            .replace("{kw1}", &keywords[shift])
            .replace("{kw2}", &keywords[(shift + 1) % l])
    };
    let mut out: Vec<String> = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n && i < combos {
        let q = fill(i);
        if !out.contains(&q) {
            out.push(q);
        }
        i += 1;
    }
    // More queries requested than distinct combinations: cycle.
    let distinct = out.len();
    while out.len() < n {
        out.push(out[out.len() % distinct].clone());
    }
    Ok(out)
}

pub fn llm_prompt(keywords: &[String], examples: &[(String, String)], n: usize) -> String {
    let mut p = String::from("You write search queries that scientists would type to find a Galaxy workflow.\n");
    p.push_str(&format!("Topic keywords: {}\n", keywords.join(", ")));
    if !examples.is_empty() {
        p.push_str("Example workflows in this topic:\n");
        for (title, desc) in examples {
            p.push_str(&format!("- {title}: {desc}\n"));
        }
    }
    p.push_str(&format!(
        "Output {n} concise search queries, one per line, with no numbering or commentary."
    ));
    p
}

/// Trims lines, drops blanks and strips list markers such as `1.` or `-`.
pub fn parse_query_lines(text: &str) -> Vec<String> {
    static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\d+[.)]|[-*•])\s*").expect("valid regex"));
    text.lines()
        .map(|l| {
            let l = MARKER.replace(l.trim(), "");
            l.trim().trim_matches('"').trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

fn llm_queries(
    client: &dyn ChatClient,
    keywords: &[String],
    examples: &[(String, String)],
    n: usize,
) -> Result<Vec<String>, BenchError> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    for _ in 0..MAX_LLM_ATTEMPTS {
        let reply = client.complete(&llm_prompt(keywords, examples, n - out.len()))?;
        out.extend(parse_query_lines(&reply));
        if out.len() >= n {
            out.truncate(n);
            return Ok(out);
        }
    }
    Err(BenchError::ShortLlmOutput {
        wanted: n,
        got: out.len(),
    })
}
