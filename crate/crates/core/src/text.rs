//! Text normalisation shared by template matching, uniqueness ratios and
//! keyword statistics, so that every ratio in a report is computed over the
//! same canonical form.

/// Lowercase, collapse whitespace runs to a single space, trim both ends.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Lowercased alphanumeric tokens; every other character is a separator.
///
/// `"the woman's umbrella"` yields `["the", "woman", "s", "umbrella"]`.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// True if `phrase` occurs in `tokens` as a contiguous run of whole words.
/// Multi-word phrases ("eye direction", "multi-person") are tokenised the
/// same way as the text.
pub fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let needle = word_tokens(phrase);
    if needle.is_empty() || needle.len() > tokens.len() {
        return false;
    }
    tokens.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Whitespace-delimited word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
