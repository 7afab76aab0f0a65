//! Text normalization, tokenization and document-text composition shared by
//! every retriever.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Workflow;

/// Tokens shorter than this (in chars) are dropped.
pub const MIN_TOKEN_LEN: usize = 2;

/// Which workflow fields contribute to the indexed document text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub use_title: bool,
    pub use_description: bool,
    pub use_tools: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            use_title: true,
            use_description: true,
            use_tools: true,
        }
    }
}

impl FieldConfig {
    pub fn is_valid(&self) -> bool {
        self.use_title || self.use_description || self.use_tools
    }
}

/// NFKC-normalizes and lowercases `text`, turning every run of
/// non-alphanumeric characters into a single space.
pub fn normalize(text: &str) -> String {
    let mut out = normalize_once(text);
    // Lowercasing can produce sequences that NFKC rewrites again; iterate to
    // a fixed point so that normalize is idempotent.
    loop {
        let next = normalize_once(&out);
        if next == out {
            return out;
        }
        out = next;
    }
}

fn normalize_once(text: &str) -> String {
    let lowered: String = text.nfkc().flat_map(char::to_lowercase).collect();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for ch in lowered.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Normalizes and splits on spaces, dropping tokens shorter than
/// [`MIN_TOKEN_LEN`]. Order and duplicates are preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text)
        .split(' ')
        .filter(|t| t.chars().count() >= MIN_TOKEN_LEN)
        .map(str::to_owned)
        .collect()
}

/// Joins the enabled fields (title, description, tools) with `". "`.
/// Empty fields are kept so composition does not depend on content.
pub fn doc_text(w: &Workflow, cfg: &FieldConfig) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(3);
    if cfg.use_title {
        parts.push(w.title.clone());
    }
    if cfg.use_description {
        parts.push(w.description.clone());
    }
    if cfg.use_tools {
        parts.push(w.tools.join(" "));
    }
    parts.join(". ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use proptest::prelude::*;

    fn wf(title: &str, desc: &str, tools: &[&str]) -> Workflow {
        Workflow {
            id: "w".into(),
            title: title.into(),
            description: desc.into(),
            tools: tools.iter().map(|s| s.to_string()).collect(),
            topic: None,
            source: Source::LocalFile,
            ga_path: None,
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize("Align single-end reads (HISAT2)!"),
            "align single end reads hisat2"
        );
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("RNA—Seq  /  DESeq2"), "rna seq deseq2");
        assert_eq!(normalize("  ﬁle   ＡＢＣ "), "file abc");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("align reads a"), vec!["align", "reads"]);
        assert_eq!(tokenize("hisat2 hisat2"), vec!["hisat2", "hisat2"]);
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn doc_text_examples() {
        let w = wf("A", "B", &["t1", "t2"]);
        assert_eq!(doc_text(&w, &FieldConfig::default()), "A. B. t1 t2");
        let no_tools = FieldConfig {
            use_tools: false,
            ..FieldConfig::default()
        };
        assert_eq!(doc_text(&w, &no_tools), "A. B");
        let w = wf("A", "", &["t1", "t2"]);
        assert_eq!(doc_text(&w, &FieldConfig::default()), "A. . t1 t2");
    }

    #[test]
    fn field_config_validity() {
        assert!(FieldConfig::default().is_valid());
        let none = FieldConfig {
            use_title: false,
            use_description: false,
            use_tools: false,
        };
        assert!(!none.is_valid());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn tokenize_commutes_with_normalize(s in "\\PC{0,40}") {
            prop_assert_eq!(tokenize(&s), tokenize(&normalize(&s)));
        }

        #[test]
        fn tokens_are_alnum_and_long_enough(s in "\\PC{0,60}") {
            for t in tokenize(&s) {
                prop_assert!(t.chars().count() >= MIN_TOKEN_LEN);
                prop_assert!(t.chars().all(char::is_alphanumeric));
            }
        }
    }
}
