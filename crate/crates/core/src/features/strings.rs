//! Character-level string measures. All functions case-fold their inputs.

fn folded(s: &str) -> Vec<char> {
    s.to_lowercase().chars().collect()
}

/// Levenshtein distance with unit costs, two-row DP.
pub fn edit_distance(a: &str, b: &str) -> usize {
    edit_distance_chars(&folded(a), &folded(b))
}

pub(crate) fn edit_distance_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn longest_common_prefix_length(a: &str, b: &str) -> usize {
    lcp_chars(&folded(a), &folded(b))
}

pub(crate) fn lcp_chars(a: &[char], b: &[char]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

pub fn longest_common_suffix_length(a: &str, b: &str) -> usize {
    lcsuffix_chars(&folded(a), &folded(b))
}

pub(crate) fn lcsuffix_chars(a: &[char], b: &[char]) -> usize {
    a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count()
}

/// Length of the longest common subsequence.
pub fn longest_common_subsequence_length(a: &str, b: &str) -> usize {
    lcs_chars(&folded(a), &folded(b))
}

pub(crate) fn lcs_chars(a: &[char], b: &[char]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ca in a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Set of adjacent character pairs of the case-folded string.
pub fn char_bigrams(s: &str) -> std::collections::BTreeSet<(char, char)> {
    let c = folded(s);
    c.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Dice coefficient over character bigrams.
pub fn dice_bigrams(a: &str, b: &str) -> f64 {
    let (x, y) = (char_bigrams(a), char_bigrams(b));
    if x.is_empty() && y.is_empty() {
        return 0.0;
    }
    2.0 * x.intersection(&y).count() as f64 / (x.len() + y.len()) as f64
}
