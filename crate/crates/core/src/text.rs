//! Tokenization and small string helpers shared by every stage.

/// Placeholder that marks the gap in a cloze stem.
pub const BLANK: &str = "____";

/// Number of non-overlapping blank markers in `stem`.
pub fn blank_count(stem: &str) -> usize {
    stem.matches(BLANK).count()
}

/// Replace the (first) blank in `stem` with `filler`.
pub fn complete(stem: &str, filler: &str) -> String {
    stem.replacen(BLANK, filler, 1)
}

/// Lowercase and collapse inner whitespace to single spaces.
pub fn normalize_term(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn casefold(s: &str) -> String {
    s.to_lowercase()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Word tokenizer in the spirit of the Treebank tokenizer: runs of
/// alphanumerics (allowing inner `-` and `'`) become one token, every other
/// non-space character is its own token. Case is preserved.
pub fn word_tokens(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            i += 1;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if (chars[i] == '-' || chars[i] == '\'')
                    && i + 1 < chars.len()
                    && is_word_char(chars[i + 1])
                {
                    i += 2;
                } else {
                    break;
                }
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

/// Word tokens of a stem with the blank marker removed.
pub fn stem_tokens(stem: &str) -> Vec<String> {
    word_tokens(&stem.replace(BLANK, " "))
        .into_iter()
        .filter(|t| t.chars().any(is_word_char))
        .collect()
}

/// Word tokens that contain at least one alphanumeric character.
pub fn content_tokens(s: &str) -> Vec<String> {
    word_tokens(s)
        .into_iter()
        .filter(|t| t.chars().any(is_word_char))
        .collect()
}

/// Tokenizer used for topic inference: lowercase, split on
/// non-alphanumerics, drop tokens shorter than two characters.
pub fn topic_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Jaccard similarity of two sets; zero for an empty union.
pub fn jaccard<T: Ord>(a: &std::collections::BTreeSet<T>, b: &std::collections::BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
