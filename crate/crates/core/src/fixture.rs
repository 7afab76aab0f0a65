//! Bundled corpora for tests, demos and benchmarks.
//!
//! The fixture corpus is 20 workflows over four topics, five per topic,
//! laid out on disk as a training-material checkout under
//! `fixtures/training`. Every title uses words that occur in no other
//! workflow, so a title used as a query has exactly one relevant document.

use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{corpus_from_json, Corpus, Source, Workflow};

pub const FIXTURE_CORPUS_JSON: &str = include_str!("../fixtures/corpus.json");

/// Directory holding `corpus.json` and the `training/` tree. Relative
/// `ga_path` values in the fixture corpus resolve against it.
pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_corpus() -> Corpus {
    corpus_from_json(FIXTURE_CORPUS_JSON).expect("bundled fixture corpus is valid")
}

const SYNTH_TOPICS: [(&str, [&str; 8]); 6] = [
    (
        "genomics",
        [
            "assembly", "contig", "scaffold", "coverage", "polish", "genome", "illumina", "nanopore",
        ],
    ),
    (
        "transcriptomics",
        [
            "rnaseq",
            "splice",
            "transcript",
            "isoform",
            "counts",
            "expression",
            "deseq",
            "salmon",
        ],
    ),
    (
        "variants",
        [
            "snp", "indel", "vcf", "germline", "somatic", "genotype", "bcftools", "annotate",
        ],
    ),
    (
        "proteomics",
        [
            "peptide", "spectra", "protein", "maxquant", "phospho", "label", "lfq", "msstats",
        ],
    ),
    (
        "metagenomics",
        [
            "taxa",
            "kraken",
            "binning",
            "amplicon",
            "16s",
            "community",
            "diversity",
            "krona",
        ],
    ),
    (
        "imaging",
        [
            "segment",
            "nuclei",
            "cellpose",
            "microscopy",
            "tiff",
            "stain",
            "threshold",
            "overlay",
        ],
    ),
];

const SYNTH_COMMON: [&str; 12] = [
    "workflow", "analysis", "data", "quality", "report", "sample", "pipeline", "filter", "table", "plot", "summary",
    "input",
];

/// A reproducible corpus of `n` synthetic workflows drawn from small topic
/// vocabularies. Used for latency and scaling checks.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut workflows = Vec::with_capacity(n);
    for i in 0..n {
        let (topic, vocab) = SYNTH_TOPICS[i % SYNTH_TOPICS.len()];
        let pick = |count: usize, rng: &mut ChaCha8Rng| -> Vec<&str> {
            (0..count)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        *vocab.choose(rng).unwrap()
                    } else {
                        *SYNTH_COMMON.choose(rng).unwrap()
                    }
                })
                .collect()
        };
        let title = format!("{} w{i}", pick(4, &mut rng).join(" "));
        let description = pick(24, &mut rng).join(" ");
        let tools = pick(3, &mut rng).iter().map(|t| format!("{t}_tool")).collect();
        workflows.push(Workflow {
            id: format!("syn-{i:05}"),
            title,
            description,
            tools,
            topic: Some(topic.to_string()),
            source: Source::LocalFile,
            ga_path: None,
        });
    }
    Corpus::new(workflows).expect("synthetic ids are unique")
}
