//! Tweet-oriented tokenizer.
//!
//! Whitespace chunks that look like URLs or @-mentions are dropped whole.
//! Everything else is split on non-alphanumeric characters, so hashtags
//! keep their body (`#masks` -> `masks`).

fn is_dropped(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    chunk.starts_with('@')
        || lower.starts_with("http://")
        || lower.starts_with("https://")
        || lower.starts_with("www.")
}

/// Tokenizes `text`, lowercasing unless `case_sensitive`.
pub fn tokenize_with(text: &str, case_sensitive: bool) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace().filter(|c| !is_dropped(c)) {
        for piece in chunk.split(|c: char| !c.is_alphanumeric()) {
            if piece.is_empty() {
                continue;
            }
            if case_sensitive {
                out.push(piece.to_string());
            } else {
                out.push(piece.to_lowercase());
            }
        }
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, false)
}

/// All n-grams of order 1..=max_n, joined with a single space.
pub fn ngrams(tokens: &[String], max_n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=max_n).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}
