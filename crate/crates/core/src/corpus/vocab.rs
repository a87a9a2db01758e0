//! Shared vocabularies and word-level tokenization.
//!
//! All models of one size class and the pretrained-vector baseline share a
//! single [`Vocabulary`] instance so their representations are comparable.

use super::{CorpusError, Utterance};
use crate::hashing::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const START: u32 = 2;
pub const END: u32 = 3;
pub const SEP: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<unk>", "<s>", "</s>", "<sep>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Large,
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeClass::Small => write!(f, "small"),
            SizeClass::Large => write!(f, "large"),
        }
    }
}

/// Token-id mapping shared across every model of one size class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, u32>,
    pub size_class: SizeClass,
}

impl Vocabulary {
    fn from_tokens(id_to_token: Vec<String>, size_class: SizeClass) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { id_to_token, token_to_id, size_class }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Non-special tokens, in id order.
    pub fn regular_tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().skip(SPECIAL_TOKENS.len()).map(|s| s.as_str())
    }

    /// Content hash identifying this vocabulary in checkpoints and manifests.
    pub fn hash(&self) -> String {
        let mut joined = String::new();
        joined.push_str(&format!("{}\n", self.size_class));
        for t in &self.id_to_token {
            joined.push_str(t);
            joined.push('\n');
        }
        sha256_hex(joined.as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let json = serde_json::to_string_pretty(self).expect("vocabulary serializes");
        std::fs::write(path, json).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        let v: Vocabulary = serde_json::from_str(&json)
            .map_err(|e| CorpusError::Malformed { path: path.display().to_string(), line: 0, reason: e.to_string() })?;
        Ok(Vocabulary::from_tokens(v.id_to_token, v.size_class))
    }
}

/// Lowercase a string and split it into word tokens.
///
/// Alphanumeric runs form tokens; any other non-whitespace character is a
/// single-character token. An apostrophe between two alphanumerics stays
/// inside the word, so contractions like "i'm" survive as one token.
pub fn split_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.push(c);
        } else if c == '\''
            && !word.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            word.push(c);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Tokenize `text` under `vocab`, mapping out-of-vocabulary tokens to `<unk>`.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<Utterance, CorpusError> {
    let words = split_tokens(text);
    if words.is_empty() {
        return Err(CorpusError::BlankUtterance(text.to_string()));
    }
    let tokens = words.iter().map(|w| vocab.id_or_unk(w)).collect();
    Ok(Utterance { tokens, raw_text: text.to_string() })
}

/// Build a vocabulary from raw text sources.
///
/// Tokens are ranked by frequency (ties broken lexicographically), dropped
/// below `min_freq`, and truncated so that the total size including the
/// special tokens does not exceed `max_size`.
pub fn build_vocabulary<'a, I>(
    texts: I,
    min_freq: usize,
    max_size: usize,
    size_class: SizeClass,
) -> Result<Vocabulary, CorpusError>
where
    I: IntoIterator<Item = &'a str>,
{
    if max_size < SPECIAL_TOKENS.len() {
        return Err(CorpusError::VocabTooSmall { max_size, specials: SPECIAL_TOKENS.len() });
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut seen_any = false;
    for text in texts {
        seen_any = true;
        for tok in split_tokens(text) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    if !seen_any {
        return Err(CorpusError::EmptyInput("build_vocabulary requires at least one corpus".into()));
    }
    let mut ranked: Vec<(String, usize)> =
        counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - SPECIAL_TOKENS.len());

    let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    id_to_token.extend(ranked.into_iter().map(|(t, _)| t));
    Ok(Vocabulary::from_tokens(id_to_token, size_class))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation() {
        assert_eq!(split_tokens("Why?"), vec!["why", "?"]);
    }

    #[test]
    fn seven_tokens_with_final_period() {
        let toks = split_tokens("I go to college part time.");
        assert_eq!(toks, vec!["i", "go", "to", "college", "part", "time", "."]);
        assert_eq!(toks.len(), 7);
    }

    #[test]
    fn contraction_stays_whole() {
        assert_eq!(split_tokens("I'm fine, aren't you?"), vec![
            "i'm", "fine", ",", "aren't", "you", "?"
        ]);
        // trailing apostrophe is not word-internal
        assert_eq!(split_tokens("dogs' toys"), vec!["dogs", "'", "toys"]);
    }

    #[test]
    fn blank_utterance_is_an_error() {
        let vocab = build_vocabulary(["a b"], 1, 100, SizeClass::Small).unwrap();
        assert!(matches!(tokenize("   \t ", &vocab), Err(CorpusError::BlankUtterance(_))));
    }

    #[test]
    fn frequency_threshold_filters() {
        let text = "the the the the the a a a x";
        let vocab = build_vocabulary([text], 2, 100, SizeClass::Small).unwrap();
        assert!(vocab.contains("the"));
        assert!(vocab.contains("a"));
        assert!(!vocab.contains("x"));
        assert_eq!(vocab.len(), SPECIAL_TOKENS.len() + 2);
    }

    #[test]
    fn deterministic_across_builds() {
        let texts = ["b a c a b a", "c b c"];
        let v1 = build_vocabulary(texts, 1, 100, SizeClass::Small).unwrap();
        let v2 = build_vocabulary(texts, 1, 100, SizeClass::Small).unwrap();
        assert_eq!(v1.hash(), v2.hash());
        // ties broken lexicographically: a=3, b=3, c=3
        assert_eq!(v1.id("a").unwrap() + 1, v1.id("b").unwrap());
        assert_eq!(v1.id("b").unwrap() + 1, v1.id("c").unwrap());
    }

    #[test]
    fn max_size_below_specials_rejected() {
        assert!(build_vocabulary(["x"], 1, 3, SizeClass::Small).is_err());
    }

    #[test]
    fn unk_mapping() {
        let vocab = build_vocabulary(["hello world"], 1, 100, SizeClass::Small).unwrap();
        let utt = tokenize("hello mars", &vocab).unwrap();
        assert_eq!(utt.tokens[0], vocab.id("hello").unwrap());
        assert_eq!(utt.tokens[1], UNK);
    }
}
