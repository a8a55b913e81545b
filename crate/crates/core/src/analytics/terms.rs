use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

/// Fixed English stopword list used for theme-term counts.
pub const STOPWORDS: [&str; 50] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he", "her", "his", "i",
    "in", "into", "is", "it", "its", "me", "my", "no", "not", "of", "on", "or", "our", "she", "so", "that", "the",
    "their", "them", "then", "there", "they", "this", "to", "was", "we", "were", "what", "when", "which", "with",
    "you", "your",
];

pub fn default_stopwords() -> HashSet<String> {
    STOPWORDS.iter().map(|w| w.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u64,
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Counts terms across `texts`, most frequent first (ties alphabetical).
/// Stopwords and single-character tokens are dropped; terms seen fewer than
/// `min_count` times are omitted.
pub fn term_frequencies<S: AsRef<str>>(texts: &[S], stopwords: &HashSet<String>, min_count: u64) -> Vec<TermCount> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for text in texts {
        for token in tokenize(text.as_ref()) {
            if token.chars().count() < 2 || stopwords.contains(&token) {
                continue;
            }
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut terms: Vec<TermCount> = counts
        .into_iter()
        .filter(|(_, count)| *count >= min_count)
        .map(|(term, count)| TermCount { term, count })
        .collect();
    terms.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));
    terms
}
