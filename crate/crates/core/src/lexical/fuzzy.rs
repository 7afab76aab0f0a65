use std::collections::{BTreeSet, HashMap};

use crate::corpus::Corpus;
use crate::ranking::{RankedList, Scored};
use crate::textprep::{doc_text, normalize, FieldConfig};

/// Insert/delete edit distance between two strings, over chars.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

/// LCS length by the bit-parallel method of Hyyrö: the shorter string is
/// the bit pattern and each char of the longer one updates every 64-bit word
/// in a few operations.
fn lcs_len(a: &[char], b: &[char]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    if short.len() <= 64 {
        return lcs_len_single_word(long, short);
    }
    let words = short.len().div_ceil(64);
    // Match masks: ASCII in a flat table, everything else in a small map.
    let mut ascii = vec![0u64; 128 * words];
    let mut other: HashMap<char, Vec<u64>> = HashMap::new();
    for (i, &c) in short.iter().enumerate() {
        let (w, bit) = (i / 64, 1u64 << (i % 64));
        if c.is_ascii() {
            ascii[c as usize * words + w] |= bit;
        } else {
            other.entry(c).or_insert_with(|| vec![0; words])[w] |= bit;
        }
    }
    let none = vec![0u64; words];
    let mut s = vec![!0u64; words];
    for &c in long {
        let m: &[u64] = if c.is_ascii() {
            &ascii[c as usize * words..(c as usize + 1) * words]
        } else {
            other.get(&c).map_or(&none, Vec::as_slice)
        };
        let mut carry = false;
        for (sw, &mw) in s.iter_mut().zip(m) {
            let u = *sw & mw;
            let (x, c1) = sw.overflowing_add(u);
            let (x, c2) = x.overflowing_add(carry as u64);
            carry = c1 || c2;
            *sw = x | (*sw - u);
        }
    }
    let tail = short.len() % 64;
    s.iter()
        .enumerate()
        .map(|(w, &sw)| {
            let valid = if w == words - 1 && tail != 0 {
                (1u64 << tail) - 1
            } else {
                !0
            };
            (!sw & valid).count_ones() as usize
        })
        .sum()
}

/// [`lcs_len`] for a pattern of at most 64 chars, kept in one word.
fn lcs_len_single_word(long: &[char], short: &[char]) -> usize {
    let mut ascii = [0u64; 128];
    let mut other: Vec<(char, u64)> = Vec::new();
    for (i, &c) in short.iter().enumerate() {
        if c.is_ascii() {
            ascii[c as usize] |= 1 << i;
        } else if let Some(e) = other.iter_mut().find(|e| e.0 == c) {
            e.1 |= 1 << i;
        } else {
            other.push((c, 1 << i));
        }
    }
    let mut s = !0u64;
    for &c in long {
        let m = if c.is_ascii() {
            ascii[c as usize]
        } else {
            other.iter().find(|e| e.0 == c).map_or(0, |e| e.1)
        };
        let u = s & m;
        s = s.wrapping_add(u) | (s - u);
    }
    let valid = if short.len() == 64 {
        !0
    } else {
        (1u64 << short.len()) - 1
    };
    (!s & valid).count_ones() as usize
}

/// Normalized indel similarity in `[0, 100]`; two empty strings score 100.
pub fn ratio(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 100.0;
    }
    100.0 * (total - indel_distance(a, b)) as f64 / total as f64
}

fn token_set(text: &str) -> Vec<String> {
    let set: BTreeSet<String> = normalize(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    set.into_iter().collect()
}

fn join_nonempty(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_owned(),
        (_, true) => a.to_owned(),
        _ => format!("{a} {b}"),
    }
}

fn token_set_ratio_sorted(a: &[String], b: &[String]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 100.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut common = Vec::new();
    let mut only_a = Vec::new();
    let mut only_b = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                common.push(x.as_str());
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                only_a.push(x.as_str());
                i += 1;
            }
            (Some(_), Some(y)) => {
                only_b.push(y.as_str());
                j += 1;
            }
            (Some(x), None) => {
                only_a.push(x.as_str());
                i += 1;
            }
            (None, Some(y)) => {
                only_b.push(y.as_str());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let inter = common.join(" ");
    let s1 = join_nonempty(&inter, &only_a.join(" "));
    let s2 = join_nonempty(&inter, &only_b.join(" "));
    ratio(&inter, &s1).max(ratio(&inter, &s2)).max(ratio(&s1, &s2))
}

/// Token-set similarity in `[0, 100]`, insensitive to token order and
/// repetition. Two texts without tokens score 100; exactly one empty side
/// scores 0.
pub fn token_set_ratio(a: &str, b: &str) -> f64 {
    token_set_ratio_sorted(&token_set(a), &token_set(b))
}

/// Pre-tokenized document texts for fuzzy matching.
#[derive(Debug, Clone)]
pub struct FuzzyIndex {
    docs: Vec<(String, Vec<String>)>,
}

impl FuzzyIndex {
    pub fn build(corpus: &Corpus, cfg: &FieldConfig) -> Self {
        Self {
            docs: corpus
                .workflows()
                .iter()
                .map(|w| (w.id.clone(), token_set(&doc_text(w, cfg))))
                .collect(),
        }
    }

    pub fn search(&self, query: &str, k: usize) -> RankedList {
        let q = token_set(query);
        let hits = self
            .docs
            .iter()
            .map(|(id, toks)| Scored {
                id: id.clone(),
                score: token_set_ratio_sorted(&q, toks),
            })
            .collect();
        RankedList::top_k(hits, k)
    }
}

/// Scores every workflow against `query` with [`token_set_ratio`].
pub fn fuzzy_search(corpus: &Corpus, cfg: &FieldConfig, query: &str, k: usize) -> RankedList {
    FuzzyIndex::build(corpus, cfg).search(query, k)
}
