//! Part-of-speech tagging port and the bundled lexicon + suffix-rule tagger.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::text;

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Penn-Treebank style tagger.
pub trait PosTagger: Send + Sync {
    /// One tag per input token.
    fn tag(&self, tokens: &[String]) -> Vec<String>;

    fn tag_phrase(&self, phrase: &str) -> Vec<String> {
        self.tag(&text::word_tokens(phrase))
    }
}

pub fn is_noun(tag: &str) -> bool {
    tag.starts_with("NN")
}

pub fn is_verb(tag: &str) -> bool {
    tag.starts_with("VB")
}

pub fn is_plural(tag: &str) -> bool {
    tag == "NNS" || tag == "NNPS"
}

/// Lexicon lookup with suffix rules for unknown words.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<String, String>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self { lexicon: parse_lexicon(BUNDLED_LEXICON.as_bytes()).expect("bundled lexicon parses") }
    }
}

fn parse_lexicon(reader: impl BufRead) -> std::io::Result<HashMap<String, String>> {
    let mut lexicon = HashMap::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        if let (Some(tok), Some(tag)) = (parts.next(), parts.next()) {
            lexicon.insert(tok.to_lowercase(), tag.trim().to_string());
        }
    }
    Ok(lexicon)
}

impl LexiconTagger {
    pub fn from_lexicon(lexicon: HashMap<String, String>) -> Self {
        Self { lexicon }
    }

    /// Bundled lexicon extended (and overridden) by a `token<TAB>tag` file.
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let extra = parse_lexicon(BufReader::new(std::fs::File::open(path)?))?;
        let mut tagger = Self::default();
        tagger.lexicon.extend(extra);
        Ok(tagger)
    }

    pub fn lexicon_len(&self) -> usize {
        self.lexicon.len()
    }

    fn guess(token: &str, sentence_initial: bool) -> String {
        let lower = token.to_lowercase();
        if token.chars().all(|c| !c.is_alphanumeric()) {
            return token.to_string();
        }
        if lower.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            return "CD".into();
        }
        let first_upper = token.chars().next().is_some_and(char::is_uppercase);
        if first_upper && !sentence_initial {
            return if lower.ends_with('s') && token.chars().skip(1).all(char::is_lowercase) {
                "NNPS".into()
            } else {
                "NNP".into()
            };
        }
        let n = lower.chars().count();
        let ends = |s: &str| lower.ends_with(s) && n > s.len() + 2;
        let tag = if ends("ing") {
            "VBG"
        } else if ends("ed") {
            "VBD"
        } else if ends("ly") {
            "RB"
        } else if ["ness", "ment", "tion", "sion", "ity", "ism", "ist", "ance", "ence"]
            .iter()
            .any(|s| ends(s))
        {
            "NN"
        } else if ["ous", "ful", "ive", "able", "ible", "less", "ical", "al", "ic", "ish"]
            .iter()
            .any(|s| ends(s))
        {
            "JJ"
        } else if lower.ends_with('s')
            && n > 2
            && !["ss", "us", "is"].iter().any(|s| lower.ends_with(s))
        {
            "NNS"
        } else {
            "NN"
        };
        tag.into()
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, tokens: &[String]) -> Vec<String> {
        let mut tags: Vec<String> = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            let mut tag = self
                .lexicon
                .get(&tok.to_lowercase())
                .cloned()
                .unwrap_or_else(|| Self::guess(tok, i == 0));
            if let Some(prev) = tags.last() {
                let prev_tok = tokens[i - 1].to_lowercase();
                let after_aux = matches!(
                    prev_tok.as_str(),
                    "is" | "are" | "was" | "were" | "be" | "been" | "being" | "has" | "have" | "had"
                );
                if tag == "VBD" && after_aux {
                    tag = "VBN".into();
                } else if (tag == "VBP" || tag == "VB")
                    && matches!(prev.as_str(), "DT" | "PRP$" | "JJ")
                {
                    tag = "NN".into();
                } else if tag == "VBZ" && matches!(prev.as_str(), "DT" | "PRP$" | "JJ") {
                    tag = "NNS".into();
                } else if tag == "VBP" && (prev == "TO" || prev == "MD") {
                    tag = "VB".into();
                }
            }
            tags.push(tag);
        }
        tags
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> Vec<String> {
        LexiconTagger::default().tag_phrase(s)
    }

    #[test]
    fn tags_simple_sentences() {
        assert_eq!(tag("cells contain DNA"), vec!["NNS", "VBP", "NN"]);
        assert_eq!(tag("water is composed of hydrogen"), vec!["NN", "VBZ", "VBN", "IN", "NN"]);
        assert_eq!(tag("the dog sat"), vec!["DT", "NN", "VBD"]);
    }

    #[test]
    fn suffix_rules() {
        assert_eq!(tag("proteins"), vec!["NNS"]);
        assert_eq!(tag("glass"), vec!["NN"]);
        assert_eq!(tag("quickly"), vec!["RB"]);
        assert_eq!(tag("42"), vec!["CD"]);
        assert_eq!(tag("enzymes"), vec!["NNS"]);
        assert_eq!(tag("enzyme"), vec!["NN"]);
    }

    #[test]
    fn external_lexicon_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        std::fs::write(&p, "# comment\nenzymes\tNN\n").unwrap();
        let t = LexiconTagger::load(&p).unwrap();
        assert_eq!(t.tag_phrase("enzymes"), vec!["NN"]);
    }
}
