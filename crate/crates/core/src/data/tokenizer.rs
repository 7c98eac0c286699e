//! Pluggable tokenization policy.
//!
//! The default [`WordTokenizer`] splits on whitespace and separates each
//! punctuation character into its own token, so token positions stay
//! human-auditable. Offsets are Unicode scalar (char) indices into the
//! original string.

use serde::{Deserialize, Serialize};

/// Half-open char-index interval into a raw string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

// Records store char spans as two-element arrays.
impl Serialize for CharSpan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.start, self.end).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CharSpan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (start, end) = <(usize, usize)>::deserialize(d)?;
        Ok(CharSpan { start, end })
    }
}

/// One surface token with its char offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawToken {
    pub surface: String,
    pub span: CharSpan,
}

/// Tokenization policy used by linearization.
pub trait Tokenize {
    fn tokenize(&self, text: &str) -> Vec<RawToken>;

    /// Hard cap on the linearized stream length.
    fn max_sequence_length(&self) -> usize {
        512
    }
}

/// Whitespace-plus-punctuation word tokenizer.
///
/// A token is either a maximal run of alphanumeric characters or a single
/// non-alphanumeric, non-whitespace character ("don't" -> `don`, `'`, `t`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordTokenizer {
    pub max_sequence_length: usize,
}

impl Default for WordTokenizer {
    fn default() -> Self {
        WordTokenizer { max_sequence_length: 512 }
    }
}

impl Tokenize for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<RawToken> {
        let mut tokens = Vec::new();
        let mut word_start: Option<usize> = None;
        let mut word = String::new();
        for (i, ch) in text.chars().enumerate() {
            if ch.is_alphanumeric() {
                if word_start.is_none() {
                    word_start = Some(i);
                }
                word.push(ch);
            } else {
                if let Some(start) = word_start.take() {
                    tokens.push(RawToken {
                        surface: std::mem::take(&mut word),
                        span: CharSpan::new(start, i),
                    });
                }
                if !ch.is_whitespace() {
                    tokens.push(RawToken {
                        surface: ch.to_string(),
                        span: CharSpan::new(i, i + 1),
                    });
                }
            }
        }
        if let Some(start) = word_start {
            let end = start + word.chars().count();
            tokens.push(RawToken { surface: word, span: CharSpan::new(start, end) });
        }
        tokens
    }

    fn max_sequence_length(&self) -> usize {
        self.max_sequence_length
    }
}
