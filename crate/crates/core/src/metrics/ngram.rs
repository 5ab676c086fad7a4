//! Interpolated Kneser–Ney n-gram language model (orders 3 and 5).
//!
//! Sentences are lowercased content tokens padded with `order - 1` start
//! symbols and one end symbol. Unknown words map to `<unk>`.

use std::collections::HashMap;

use thiserror::Error;

use crate::text;

pub const DISCOUNT: f64 = 0.75;
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Error, PartialEq)]
pub enum NgramError {
    #[error("n-gram order must be 3 or 5, got {0}")]
    BadOrder(usize),
    #[error("training corpus has no tokens")]
    EmptyCorpus,
}

#[derive(Debug, Default, Clone)]
struct ContextStats {
    /// Sum of (continuation) counts following the context.
    total: u64,
    /// Distinct followers.
    types: u64,
}

/// Per order `m` (index `m - 1`): counts of m-grams ending at predicted
/// positions; for `m < order` these are continuation counts.
#[derive(Debug, Clone)]
pub struct NgramLm {
    order: usize,
    vocab: HashMap<String, u32>,
    /// Predicted vocabulary: every real token plus `</s>` and `<unk>`.
    predicted: Vec<u32>,
    bos: u32,
    unk: u32,
    counts: Vec<HashMap<Vec<u32>, u64>>,
    raw: Vec<HashMap<Vec<u32>, u64>>,
    contexts: Vec<HashMap<Vec<u32>, ContextStats>>,
}

fn tokens(sentence: &str) -> Vec<String> {
    text::content_tokens(sentence).into_iter().map(|t| t.to_lowercase()).collect()
}

pub fn train_ngram_lm(sentences: &[String], order: usize) -> Result<NgramLm, NgramError> {
    if order != 3 && order != 5 {
        return Err(NgramError::BadOrder(order));
    }
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let intern = |w: &str, vocab: &mut HashMap<String, u32>| {
        let n = vocab.len() as u32;
        *vocab.entry(w.to_string()).or_insert(n)
    };
    let bos = intern(BOS, &mut vocab);
    let eos = intern(EOS, &mut vocab);
    let unk = intern(UNK, &mut vocab);

    let mut top: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut any = false;
    for s in sentences {
        let toks = tokens(s);
        if toks.is_empty() {
            continue;
        }
        any = true;
        let mut ids = vec![bos; order - 1];
        ids.extend(toks.iter().map(|t| intern(t, &mut vocab)));
        ids.push(eos);
        for w in ids.windows(order) {
            *top.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    if !any {
        return Err(NgramError::EmptyCorpus);
    }

    let mut counts = vec![HashMap::new(); order];
    let mut raw: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    for (g, c) in &top {
        for m in 1..=order {
            *raw[m - 1].entry(g[order - m..].to_vec()).or_insert(0) += c;
        }
    }
    counts[order - 1] = top.clone();
    for m in 1..order {
        // Distinct left extensions of each m-gram among the (m+1)-grams.
        let mut cont: HashMap<Vec<u32>, u64> = HashMap::new();
        for g in raw[m].keys() {
            *cont.entry(g[1..].to_vec()).or_insert(0) += 1;
        }
        counts[m - 1] = cont;
    }
    let mut contexts = vec![HashMap::new(); order];
    for m in 1..=order {
        for (g, c) in &counts[m - 1] {
            let e: &mut ContextStats = contexts[m - 1].entry(g[..m - 1].to_vec()).or_default();
            e.total += c;
            e.types += 1;
        }
    }
    let mut predicted: Vec<u32> = vocab.values().copied().filter(|&id| id != bos).collect();
    predicted.sort_unstable();
    Ok(NgramLm { order, vocab, predicted, bos, unk, counts, raw, contexts })
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Size of the predicted vocabulary (tokens, `</s>`, `<unk>`).
    pub fn vocab_size(&self) -> usize {
        self.predicted.len()
    }

    fn id(&self, w: &str) -> u32 {
        self.vocab.get(&w.to_lowercase()).copied().filter(|&i| i != self.bos || w == BOS).unwrap_or(self.unk)
    }

    fn prob_ids(&self, word: u32, history: &[u32]) -> f64 {
        let m = history.len() + 1;
        let lower = if m == 1 {
            1.0 / self.predicted.len() as f64
        } else {
            self.prob_ids(word, &history[1..])
        };
        let Some(ctx) = self.contexts[m - 1].get(history) else {
            return lower;
        };
        let mut key = history.to_vec();
        key.push(word);
        let c = self.counts[m - 1].get(&key).copied().unwrap_or(0) as f64;
        let total = ctx.total as f64;
        (c - DISCOUNT).max(0.0) / total + DISCOUNT * ctx.types as f64 / total * lower
    }

    /// `P(word | history)`; only the last `order - 1` history tokens are used.
    pub fn prob(&self, word: &str, history: &[&str]) -> f64 {
        let h: Vec<u32> = history.iter().map(|w| self.id(w)).collect();
        let start = h.len().saturating_sub(self.order - 1);
        self.prob_ids(self.id(word), &h[start..])
    }

    /// Natural-log probability of a sentence including the end symbol.
    pub fn sentence_log_prob(&self, sentence: &str) -> f64 {
        self.scored(sentence).0
    }

    /// Per-token geometric mean probability, in (0, 1].
    pub fn normalized_prob(&self, sentence: &str) -> f64 {
        let (lp, n) = self.scored(sentence);
        (lp / n as f64).exp()
    }

    fn scored(&self, sentence: &str) -> (f64, usize) {
        let mut ids = vec![self.bos; self.order - 1];
        ids.extend(tokens(sentence).iter().map(|t| self.id(t)));
        ids.push(self.id(EOS));
        let mut lp = 0.0;
        for i in self.order - 1..ids.len() {
            lp += self.prob_ids(ids[i], &ids[i + 1 - self.order..i]).ln();
        }
        (lp, ids.len() + 1 - self.order)
    }

    /// Occurrences of a token sequence at predicted positions; 0 for
    /// sequences longer than the model order.
    pub fn ngram_count(&self, gram: &[&str]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        let ids: Vec<u32> = gram.iter().map(|w| self.id(w)).collect();
        self.raw[gram.len() - 1].get(&ids).copied().unwrap_or(0)
    }

    /// Predicted-vocabulary words, for exhaustive checks.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut inv: Vec<(&u32, &String)> = self.vocab.iter().map(|(w, i)| (i, w)).collect();
        inv.sort();
        inv.into_iter().filter(|(i, _)| **i != self.bos).map(|(_, w)| w.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<String> {
        ["the cat sat on the mat", "the dog sat on the log", "a cat ate the fish", "the dog ate"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn order_is_checked() {
        assert_eq!(train_ngram_lm(&corpus(), 2).unwrap_err(), NgramError::BadOrder(2));
        assert_eq!(train_ngram_lm(&["".to_string()], 3).unwrap_err(), NgramError::EmptyCorpus);
    }

    #[test]
    fn distributions_sum_to_one() {
        for order in [3, 5] {
            let lm = train_ngram_lm(&corpus(), order).unwrap();
            let vocab = lm.vocabulary();
            let histories: Vec<Vec<&str>> = vec![
                vec![BOS, BOS],
                vec!["the", "cat"],
                vec!["sat", "on"],
                vec!["on", "the"],
                vec!["unseen", "words"],
                vec!["the"],
                vec![],
                vec![BOS, BOS, BOS, "the"],
            ];
            for h in histories {
                let s: f64 = vocab.iter().map(|w| lm.prob(w, &h)).sum();
                assert!((s - 1.0).abs() < 1e-9, "order {order} history {h:?}: {s}");
            }
        }
    }

    #[test]
    fn seen_beats_unseen() {
        let lm = train_ngram_lm(&["the cat sat on the mat".to_string()], 3).unwrap();
        let seen = lm.sentence_log_prob("the cat sat on the mat");
        let unseen = lm.sentence_log_prob("zz yy xx ww vv uu");
        assert!(seen > unseen);
        let p = lm.normalized_prob("the cat sat on the mat");
        assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn counts() {
        let lm = train_ngram_lm(&corpus(), 3).unwrap();
        assert_eq!(lm.ngram_count(&["sat", "on", "the"]), 2);
        assert_eq!(lm.ngram_count(&["the"]), 6);
        assert_eq!(lm.ngram_count(&["cat", "sat", "on", "the"]), 0);
    }
}
