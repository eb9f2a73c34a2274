//! Tokenization and phrase normalization shared by every module.
//!
//! Graph node identity, gazetteer keys, knowledge-graph index keys and word
//! vector lookups all go through [`tokenize`], so a phrase always maps to the
//! same token sequence wherever it is compared.

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Lowercase, punctuation stripped, whitespace collapsed.
pub fn normalize(phrase: &str) -> String {
    tokenize(phrase).join(" ")
}

/// Whitespace word count, used by the error-analysis report.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
