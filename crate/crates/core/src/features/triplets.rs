//! Relation-phrase triplet extraction over POS-tagged tokens.
//!
//! A relation phrase is a verb group `V`, optionally extended to `V P` or
//! `V W* P`, where `W` is a noun, adjective, adverb, pronoun or determiner
//! and `P` a preposition, particle or infinitival `to`. The longest match
//! wins. Arguments are the nearest noun phrases to the left and right.

use serde::{Deserialize, Serialize};

use super::tagger::PosTagger;
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub arg1: String,
    pub relation: String,
    pub arg2: String,
}

impl Triplet {
    pub fn text(&self) -> String {
        format!("{} {} {}", self.arg1, self.relation, self.arg2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub word: String,
    pub tag: String,
}

impl TaggedToken {
    pub fn new(word: &str, tag: &str) -> Self {
        Self { word: word.into(), tag: tag.into() }
    }
}

fn is_verb(t: &str) -> bool {
    t.starts_with("VB")
}

fn is_verb_modifier(t: &str) -> bool {
    t == "RP" || t.starts_with("RB")
}

fn is_w(t: &str) -> bool {
    t.starts_with("NN") || t.starts_with("JJ") || t.starts_with("RB") || t.starts_with("PRP") || t == "DT"
}

fn is_p(t: &str) -> bool {
    t == "IN" || t == "RP" || t == "TO"
}

fn is_np_part(t: &str) -> bool {
    t.starts_with("NN") || t.starts_with("JJ") || t == "DT" || t == "CD" || t.starts_with("PRP")
}

fn is_np_head(t: &str) -> bool {
    t.starts_with("NN") || t == "CD" || t == "PRP"
}

/// Maximal runs of NP-ish tokens containing a head, as half-open ranges.
fn noun_phrases(tags: &[&str], from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = from;
    while i < to {
        if is_np_part(tags[i]) {
            let s = i;
            while i < to && is_np_part(tags[i]) {
                i += 1;
            }
            if tags[s..i].iter().any(|t| is_np_head(t)) {
                out.push((s, i));
            }
        } else {
            i += 1;
        }
    }
    out
}

/// End (exclusive) of the longest relation phrase starting at verb `i`.
fn relation_end(tags: &[&str], i: usize) -> usize {
    let mut v = i;
    while v < tags.len() && is_verb(tags[v]) {
        v += 1;
    }
    while v < tags.len() && is_verb_modifier(tags[v]) && !(tags[v] == "RP" && v + 1 < tags.len() && is_np_part(tags[v + 1])) {
        v += 1;
    }
    // V W* P
    let mut w = v;
    while w < tags.len() && is_w(tags[w]) {
        w += 1;
    }
    if w < tags.len() && is_p(tags[w]) {
        return w + 1;
    }
    if v < tags.len() && is_p(tags[v]) {
        return v + 1;
    }
    v
}

pub fn extract_triplets(tokens: &[TaggedToken]) -> Vec<Triplet> {
    let tags: Vec<&str> = tokens.iter().map(|t| t.tag.as_str()).collect();
    let join = |s: usize, e: usize| tokens[s..e].iter().map(|t| t.word.as_str()).collect::<Vec<_>>().join(" ");
    let mut out = Vec::new();
    let mut i = 0;
    let mut left_bound = 0;
    while i < tokens.len() {
        if !is_verb(tags[i]) {
            i += 1;
            continue;
        }
        let end = relation_end(&tags, i);
        let left = noun_phrases(&tags, left_bound, i).last().copied();
        let next_verb = (end..tokens.len()).find(|&j| is_verb(tags[j])).unwrap_or(tokens.len());
        let right = noun_phrases(&tags, end, next_verb).first().copied();
        if let (Some((ls, le)), Some((rs, re))) = (left, right) {
            out.push(Triplet { arg1: join(ls, le), relation: join(i, end), arg2: join(rs, re) });
        }
        left_bound = end;
        i = end.max(i + 1);
    }
    out
}

/// Tag and extract from raw text, sentence by sentence.
pub fn extract_from_text(text_in: &str, tagger: &dyn PosTagger) -> Vec<Triplet> {
    let mut out = Vec::new();
    for sentence in text_in.split(['.', '!', '?', ';', '\n']) {
        let toks = text::word_tokens(sentence);
        if toks.is_empty() {
            continue;
        }
        let tags = tagger.tag(&toks);
        let tagged: Vec<TaggedToken> = toks.iter().zip(&tags).map(|(w, t)| TaggedToken::new(w, t)).collect();
        out.extend(extract_triplets(&tagged));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tagger::LexiconTagger;

    fn tagged(pairs: &[(&str, &str)]) -> Vec<TaggedToken> {
        pairs.iter().map(|(w, t)| TaggedToken::new(w, t)).collect()
    }

    fn t(a: &str, r: &str, b: &str) -> Triplet {
        Triplet { arg1: a.into(), relation: r.into(), arg2: b.into() }
    }

    #[test]
    fn single_verb() {
        let toks = tagged(&[("cells", "NNS"), ("contain", "VBP"), ("DNA", "NN")]);
        assert_eq!(extract_triplets(&toks), vec![t("cells", "contain", "DNA")]);
    }

    #[test]
    fn missing_argument_dropped() {
        let toks = tagged(&[("the", "DT"), ("dog", "NN"), ("sat", "VBD")]);
        assert!(extract_triplets(&toks).is_empty());
        assert!(extract_triplets(&tagged(&[("big", "JJ"), ("red", "JJ")])).is_empty());
    }

    #[test]
    fn verb_words_preposition() {
        let toks = tagged(&[("water", "NN"), ("is", "VBZ"), ("composed", "VBN"), ("of", "IN"), ("hydrogen", "NN")]);
        assert_eq!(extract_triplets(&toks), vec![t("water", "is composed of", "hydrogen")]);

        let toks = tagged(&[("Faust", "NNP"), ("made", "VBD"), ("a", "DT"), ("deal", "NN"), ("with", "IN"), ("the", "DT"), ("devil", "NN")]);
        assert_eq!(extract_triplets(&toks), vec![t("Faust", "made a deal with", "the devil")]);
    }

    #[test]
    fn end_to_end_with_bundled_tagger() {
        let tagger = LexiconTagger::default();
        assert_eq!(extract_from_text("Cells contain DNA.", &tagger), vec![t("Cells", "contain", "DNA")]);
        assert_eq!(
            extract_from_text("Water is composed of hydrogen. The dog sat.", &tagger),
            vec![t("Water", "is composed of", "hydrogen")]
        );
    }

    #[test]
    fn multiple_relations() {
        let toks = tagged(&[
            ("plants", "NNS"), ("absorb", "VBP"), ("light", "NN"), ("and", "CC"),
            ("produce", "VBP"), ("oxygen", "NN"),
        ]);
        assert_eq!(
            extract_triplets(&toks),
            vec![t("plants", "absorb", "light"), t("light", "produce", "oxygen")]
        );
    }
}
