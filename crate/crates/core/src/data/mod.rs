//! Unified task input format and deterministic linearization.
//!
//! Every task — NER, relation and event extraction, extractive reading
//! comprehension, classification — is expressed as a [`TaskInstance`] with
//! three parts: an instruction, a list of schema labels, and one text part.
//! [`linearize`] turns an instance into a position-indexed [`TokenStream`]:
//!
//! ```text
//! [I] <instruction tokens> [LM|LR|LC] <label tokens> ... [TL|TP|B] <text tokens>
//! ```
//!
//! Gold answers are stored in char space on the instance and converted to
//! token-position space against a stream with [`gold_to_positions`].

mod records;
mod tokenizer;

pub use records::{read_records, read_records_iter, write_records, PredictionRecord, TensorRecord};
pub use tokenizer::{CharSpan, RawToken, Tokenize, WordTokenizer};

use crate::graph::{MultiSlotTuple, Slot, TokenSpan};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("linearized stream has {len} tokens, limit is {limit}")]
    SequenceTooLong { len: usize, limit: usize },
    #[error("instance {id}: text part is empty but kind is not background")]
    EmptyText { id: String },
    #[error("char span {start}..{end} splits a token")]
    Misaligned { start: usize, end: usize },
    #[error("char span {start}..{end} lies outside the text part")]
    SpanOutOfText { start: usize, end: usize },
    #[error("token span {start}..={end} is not inside the text block")]
    PositionOutOfText { start: usize, end: usize },
    #[error("gold slot references label {index} but instance has {count} labels")]
    LabelIndexOutOfRange { index: usize, count: usize },
    #[error("position {position} is not a label anchor")]
    NotAnAnchor { position: usize },
    #[error("instance {id}: {detail}")]
    InvalidInstance { id: String, detail: String },
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The seven leading tokens that separate stream parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecialToken {
    /// `[I]` — begins the instruction part.
    Instruction,
    /// `[LM]` — begins a mention (or event type) label.
    MentionLabel,
    /// `[LR]` — begins a relation (or argument role) label.
    RelationLabel,
    /// `[LC]` — begins a class label.
    ClassLabel,
    /// `[TL]` — text whose spans link to schema labels.
    LinkedText,
    /// `[TP]` — text for plain span extraction without schema labels.
    PlainText,
    /// `[B]` — background text; nothing is extracted from it.
    Background,
}

impl SpecialToken {
    pub fn surface(self) -> &'static str {
        match self {
            SpecialToken::Instruction => "[I]",
            SpecialToken::MentionLabel => "[LM]",
            SpecialToken::RelationLabel => "[LR]",
            SpecialToken::ClassLabel => "[LC]",
            SpecialToken::LinkedText => "[TL]",
            SpecialToken::PlainText => "[TP]",
            SpecialToken::Background => "[B]",
        }
    }
}

/// Kind of a schema label; maps bijectively onto its leading token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Mention,
    Relation,
    Class,
}

impl LabelKind {
    pub fn leading_token(self) -> SpecialToken {
        match self {
            LabelKind::Mention => SpecialToken::MentionLabel,
            LabelKind::Relation => SpecialToken::RelationLabel,
            LabelKind::Class => SpecialToken::ClassLabel,
        }
    }
}

/// A schema label: ontology entry guiding extraction. `text` may be empty
/// when tag-only labels are used; the anchor is always the leading token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaLabel {
    pub kind: LabelKind,
    pub text: String,
}

impl SchemaLabel {
    pub fn mention(text: &str) -> Self {
        SchemaLabel { kind: LabelKind::Mention, text: text.to_string() }
    }

    pub fn relation(text: &str) -> Self {
        SchemaLabel { kind: LabelKind::Relation, text: text.to_string() }
    }

    pub fn class(text: &str) -> Self {
        SchemaLabel { kind: LabelKind::Class, text: text.to_string() }
    }
}

/// Kind of the text part; maps bijectively onto its leading token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    /// Spans in the text link to schema labels (`[TL]`).
    Linked,
    /// Spans are extracted without schema labels (`[TP]`).
    Plain,
    /// Background only; gold contains no text spans (`[B]`).
    Background,
}

impl TextKind {
    pub fn leading_token(self) -> SpecialToken {
        match self {
            TextKind::Linked => SpecialToken::LinkedText,
            TextKind::Plain => SpecialToken::PlainText,
            TextKind::Background => SpecialToken::Background,
        }
    }
}

/// The single text part of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPart {
    pub kind: TextKind,
    pub text: String,
}

impl TextPart {
    pub fn linked(text: &str) -> Self {
        TextPart { kind: TextKind::Linked, text: text.to_string() }
    }

    pub fn plain(text: &str) -> Self {
        TextPart { kind: TextKind::Plain, text: text.to_string() }
    }

    pub fn background(text: &str) -> Self {
        TextPart { kind: TextKind::Background, text: text.to_string() }
    }
}

/// One slot of a gold tuple in record space: a label index or a list of
/// half-open char intervals into the text part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldSlot {
    Label(usize),
    Span(Vec<CharSpan>),
}

/// One extraction problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub instruction: String,
    pub labels: Vec<SchemaLabel>,
    pub text: TextPart,
    /// Gold tuples; each tuple is an ordered list of slots.
    pub gold: Vec<Vec<GoldSlot>>,
    /// Expected slot arity for decoding, when the task shape needs it to
    /// regroup discontinuous span pieces. Task metadata, not an answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode_arity: Option<usize>,
}

impl TaskInstance {
    pub fn validate(&self) -> Result<(), DataError> {
        for tuple in &self.gold {
            if tuple.is_empty() {
                return Err(DataError::InvalidInstance {
                    id: self.id.clone(),
                    detail: "gold tuple has no slots".into(),
                });
            }
            for slot in tuple {
                match slot {
                    GoldSlot::Label(i) => {
                        if *i >= self.labels.len() {
                            return Err(DataError::LabelIndexOutOfRange {
                                index: *i,
                                count: self.labels.len(),
                            });
                        }
                    }
                    GoldSlot::Span(intervals) => {
                        if self.text.kind == TextKind::Background {
                            return Err(DataError::InvalidInstance {
                                id: self.id.clone(),
                                detail: "background instance has text-span gold slots".into(),
                            });
                        }
                        if intervals.is_empty() {
                            return Err(DataError::InvalidInstance {
                                id: self.id.clone(),
                                detail: "gold span slot has no intervals".into(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Role of one stream token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenRole {
    Special(SpecialToken),
    Word,
}

/// One token of the linearized stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub role: TokenRole,
}

/// The linearized input sequence. Positions are 0-based and contiguous;
/// re-linearizing the same instance yields an identical stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    /// Position of each schema label's leading token, in label order.
    pub label_anchor_positions: Vec<usize>,
    /// Half-open position interval covering the text part's word tokens.
    pub text_span: Range<usize>,
    /// Char offsets of each text word token, aligned with `text_span`.
    pub text_char_spans: Vec<CharSpan>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn anchor_set(&self) -> BTreeSet<usize> {
        self.label_anchor_positions.iter().copied().collect()
    }

    /// Label index owning the anchor at `position`.
    pub fn anchor_label_index(&self, position: usize) -> Option<usize> {
        self.label_anchor_positions.iter().position(|&p| p == position)
    }
}

/// Deterministically linearize an instance into a token stream.
pub fn linearize<T: Tokenize>(
    instance: &TaskInstance,
    policy: &T,
) -> Result<TokenStream, DataError> {
    instance.validate()?;
    let mut tokens = Vec::new();
    let mut push_special = |tokens: &mut Vec<Token>, st: SpecialToken| {
        tokens.push(Token { surface: st.surface().to_string(), role: TokenRole::Special(st) });
    };

    push_special(&mut tokens, SpecialToken::Instruction);
    for raw in policy.tokenize(&instance.instruction) {
        tokens.push(Token { surface: raw.surface, role: TokenRole::Word });
    }

    let mut label_anchor_positions = Vec::with_capacity(instance.labels.len());
    for label in &instance.labels {
        label_anchor_positions.push(tokens.len());
        push_special(&mut tokens, label.kind.leading_token());
        for raw in policy.tokenize(&label.text) {
            tokens.push(Token { surface: raw.surface, role: TokenRole::Word });
        }
    }

    let text_tokens = policy.tokenize(&instance.text.text);
    if text_tokens.is_empty() && instance.text.kind != TextKind::Background {
        return Err(DataError::EmptyText { id: instance.id.clone() });
    }
    push_special(&mut tokens, instance.text.kind.leading_token());
    let text_start = tokens.len();
    let mut text_char_spans = Vec::with_capacity(text_tokens.len());
    for raw in text_tokens {
        text_char_spans.push(raw.span);
        tokens.push(Token { surface: raw.surface, role: TokenRole::Word });
    }
    let text_span = text_start..tokens.len();

    let limit = policy.max_sequence_length();
    if tokens.len() > limit {
        return Err(DataError::SequenceTooLong { len: tokens.len(), limit });
    }

    Ok(TokenStream { tokens, label_anchor_positions, text_span, text_char_spans })
}

/// Minimal token-position interval covering `char_span` inside the text part.
///
/// Returns `None` when the char span is empty or covers no token (pure
/// whitespace). Errors with [`DataError::Misaligned`] when a boundary falls
/// strictly inside a token.
pub fn map_span_to_positions(
    stream: &TokenStream,
    char_span: CharSpan,
) -> Result<Option<TokenSpan>, DataError> {
    if char_span.is_empty() {
        return Ok(None);
    }
    let mut first: Option<usize> = None;
    let mut last: Option<usize> = None;
    for (i, tok) in stream.text_char_spans.iter().enumerate() {
        let overlaps = tok.start < char_span.end && char_span.start < tok.end;
        if overlaps {
            if first.is_none() {
                first = Some(i);
            }
            last = Some(i);
        }
    }
    let (Some(first), Some(last)) = (first, last) else {
        let text_end = stream.text_char_spans.last().map(|s| s.end).unwrap_or(0);
        if char_span.end > text_end {
            return Err(DataError::SpanOutOfText {
                start: char_span.start,
                end: char_span.end,
            });
        }
        return Ok(None);
    };
    if char_span.start > stream.text_char_spans[first].start
        || char_span.end < stream.text_char_spans[last].end
    {
        return Err(DataError::Misaligned { start: char_span.start, end: char_span.end });
    }
    Ok(Some(TokenSpan::new(
        stream.text_span.start + first,
        stream.text_span.start + last,
    )))
}

/// Char interval covered by a token span of the text block; inverse of
/// [`map_span_to_positions`] on token-aligned spans.
pub fn positions_to_char_span(
    stream: &TokenStream,
    span: TokenSpan,
) -> Result<CharSpan, DataError> {
    if span.start < stream.text_span.start
        || span.end >= stream.text_span.end
        || span.start > span.end
    {
        return Err(DataError::PositionOutOfText { start: span.start, end: span.end });
    }
    let first = &stream.text_char_spans[span.start - stream.text_span.start];
    let last = &stream.text_char_spans[span.end - stream.text_span.start];
    Ok(CharSpan::new(first.start, last.end))
}

/// Convert an instance's gold tuples from record space into position space.
pub fn gold_to_positions(
    instance: &TaskInstance,
    stream: &TokenStream,
) -> Result<Vec<MultiSlotTuple>, DataError> {
    let mut out = Vec::with_capacity(instance.gold.len());
    for tuple in &instance.gold {
        let mut slots = Vec::with_capacity(tuple.len());
        for slot in tuple {
            match slot {
                GoldSlot::Label(i) => {
                    let pos = *stream.label_anchor_positions.get(*i).ok_or(
                        DataError::LabelIndexOutOfRange {
                            index: *i,
                            count: stream.label_anchor_positions.len(),
                        },
                    )?;
                    slots.push(Slot::LabelAnchor(pos));
                }
                GoldSlot::Span(intervals) => {
                    let mut mapped = Vec::with_capacity(intervals.len());
                    for iv in intervals {
                        let tok = map_span_to_positions(stream, *iv)?.ok_or(
                            DataError::InvalidInstance {
                                id: instance.id.clone(),
                                detail: format!(
                                    "gold char span {}..{} covers no token",
                                    iv.start, iv.end
                                ),
                            },
                        )?;
                        mapped.push(tok);
                    }
                    let slot = Slot::TextSpan(mapped);
                    slot.validate().map_err(|e| DataError::InvalidInstance {
                        id: instance.id.clone(),
                        detail: e.to_string(),
                    })?;
                    slots.push(slot);
                }
            }
        }
        out.push(MultiSlotTuple::new(slots));
    }
    Ok(out)
}

/// Convert position-space tuples back into record space against a stream.
///
/// The inverse of [`gold_to_positions`]; used to emit predictions in the
/// record format. Fails when an anchor position does not belong to the
/// stream or a span leaves the text block.
pub fn positions_to_gold(
    stream: &TokenStream,
    tuples: &[MultiSlotTuple],
) -> Result<Vec<Vec<GoldSlot>>, DataError> {
    let mut out = Vec::with_capacity(tuples.len());
    for tuple in tuples {
        let mut slots = Vec::with_capacity(tuple.slots.len());
        for slot in &tuple.slots {
            match slot {
                Slot::LabelAnchor(pos) => {
                    let index = stream
                        .anchor_label_index(*pos)
                        .ok_or(DataError::NotAnAnchor { position: *pos })?;
                    slots.push(GoldSlot::Label(index));
                }
                Slot::TextSpan(intervals) => {
                    let mut spans = Vec::with_capacity(intervals.len());
                    for iv in intervals {
                        spans.push(positions_to_char_span(stream, *iv)?);
                    }
                    slots.push(GoldSlot::Span(spans));
                }
            }
        }
        out.push(slots);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Relation instance whose stream realizes the worked positions: the
    /// relation anchor at 9, "Jerry" at 16, "Smith" at 17, "Tom" at 22.
    pub(crate) fn worked_example_instance() -> TaskInstance {
        let text = "We know that Jerry Smith is a friend of Tom.";
        let find = |needle: &str| {
            let start = text.find(needle).unwrap();
            CharSpan::new(start, start + needle.len())
        };
        TaskInstance {
            id: "worked-re".into(),
            instruction: "Please extract the entity relationship triplet from text".into(),
            labels: vec![SchemaLabel::relation("friend of")],
            text: TextPart::linked(text),
            gold: vec![vec![
                GoldSlot::Label(0),
                GoldSlot::Span(vec![find("Jerry Smith")]),
                GoldSlot::Span(vec![find("Tom")]),
            ]],
            decode_arity: None,
        }
    }

    #[test]
    fn worked_example_positions() {
        let instance = worked_example_instance();
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        assert_eq!(stream.label_anchor_positions, vec![9]);
        assert_eq!(stream.tokens[9].role, TokenRole::Special(SpecialToken::RelationLabel));
        assert_eq!(stream.tokens[16].surface, "Jerry");
        assert_eq!(stream.tokens[17].surface, "Smith");
        assert_eq!(stream.tokens[22].surface, "Tom");

        let gold = gold_to_positions(&instance, &stream).unwrap();
        assert_eq!(
            gold,
            vec![MultiSlotTuple::new(vec![
                Slot::LabelAnchor(9),
                Slot::TextSpan(vec![TokenSpan::new(16, 17)]),
                Slot::TextSpan(vec![TokenSpan::new(22, 22)]),
            ])]
        );
    }

    #[test]
    fn no_schema_stream_layout() {
        let instance = TaskInstance {
            id: "mrc".into(),
            instruction: "what is asked".into(),
            labels: vec![],
            text: TextPart::plain("short answer here"),
            gold: vec![],
            decode_arity: None,
        };
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        assert!(stream.label_anchor_positions.is_empty());
        assert_eq!(stream.tokens[0].role, TokenRole::Special(SpecialToken::Instruction));
        assert_eq!(stream.tokens[4].role, TokenRole::Special(SpecialToken::PlainText));
        assert_eq!(stream.text_span, 5..8);
    }

    #[test]
    fn linearize_is_deterministic() {
        let instance = worked_example_instance();
        let policy = WordTokenizer::default();
        let a = linearize(&instance, &policy).unwrap();
        let b = linearize(&instance, &policy).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn anchor_integrity_and_ordering() {
        let instance = TaskInstance {
            id: "multi".into(),
            instruction: "inst".into(),
            labels: vec![
                SchemaLabel::mention("person"),
                SchemaLabel::relation("works for"),
                SchemaLabel::class("yes"),
            ],
            text: TextPart::linked("a b c"),
            gold: vec![],
            decode_arity: None,
        };
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        for (i, &pos) in stream.label_anchor_positions.iter().enumerate() {
            assert_eq!(
                stream.tokens[pos].role,
                TokenRole::Special(instance.labels[i].kind.leading_token())
            );
            assert!(pos < stream.text_span.start);
        }
        assert!(stream
            .label_anchor_positions
            .windows(2)
            .all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_instruction_still_emits_leading_token() {
        let instance = TaskInstance {
            id: "noinst".into(),
            instruction: String::new(),
            labels: vec![SchemaLabel::mention("x")],
            text: TextPart::linked("t"),
            gold: vec![],
            decode_arity: None,
        };
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        assert_eq!(stream.tokens[0].role, TokenRole::Special(SpecialToken::Instruction));
        assert_eq!(stream.label_anchor_positions, vec![1]);
    }

    #[test]
    fn empty_text_errors_unless_background() {
        let mut instance = TaskInstance {
            id: "bg".into(),
            instruction: "classify".into(),
            labels: vec![SchemaLabel::class("a"), SchemaLabel::class("b")],
            text: TextPart::background(""),
            gold: vec![vec![GoldSlot::Label(0)]],
            decode_arity: None,
        };
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        assert!(stream.text_span.is_empty());

        instance.text = TextPart::linked("");
        instance.gold.clear();
        assert!(matches!(
            linearize(&instance, &WordTokenizer::default()),
            Err(DataError::EmptyText { .. })
        ));
    }

    #[test]
    fn sequence_too_long_is_rejected() {
        let instance = TaskInstance {
            id: "long".into(),
            instruction: String::new(),
            labels: vec![],
            text: TextPart::plain(&"w ".repeat(600)),
            gold: vec![],
            decode_arity: None,
        };
        assert!(matches!(
            linearize(&instance, &WordTokenizer::default()),
            Err(DataError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn map_span_worked_example() {
        let instance = worked_example_instance();
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        let text = &instance.text.text;
        let start = text.find("Tom").unwrap();
        let tok = map_span_to_positions(&stream, CharSpan::new(start, start + 3))
            .unwrap()
            .unwrap();
        assert_eq!(tok, TokenSpan::new(22, 22));
    }

    #[test]
    fn map_span_empty_is_none() {
        let instance = worked_example_instance();
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        assert_eq!(map_span_to_positions(&stream, CharSpan::new(0, 0)).unwrap(), None);
    }

    #[test]
    fn map_span_misaligned_errors() {
        let instance = worked_example_instance();
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        let start = instance.text.text.find("Jerry").unwrap();
        // Covers "Jerr" only: splits the token.
        assert!(matches!(
            map_span_to_positions(&stream, CharSpan::new(start, start + 4)),
            Err(DataError::Misaligned { .. })
        ));
    }

    #[test]
    fn span_roundtrip_exhaustive_over_synthetic_text() {
        // Oracle: every (first token, last token) pair of a 30-token text must
        // survive positions -> chars -> positions unchanged.
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let instance = TaskInstance {
            id: "roundtrip".into(),
            instruction: "x".into(),
            labels: vec![],
            text: TextPart::plain(&text),
            gold: vec![],
            decode_arity: None,
        };
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        for a in stream.text_span.clone() {
            for b in a..stream.text_span.end {
                let span = TokenSpan::new(a, b);
                let chars = positions_to_char_span(&stream, span).unwrap();
                let back = map_span_to_positions(&stream, chars).unwrap().unwrap();
                assert_eq!(back, span);
            }
        }
    }

    #[test]
    fn gold_validation_errors() {
        let mut instance = worked_example_instance();
        instance.gold[0][0] = GoldSlot::Label(5);
        assert!(matches!(
            gold_to_positions(
                &instance,
                &linearize(&worked_example_instance(), &WordTokenizer::default()).unwrap()
            ),
            Err(DataError::LabelIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn positions_to_gold_roundtrip() {
        let instance = worked_example_instance();
        let stream = linearize(&instance, &WordTokenizer::default()).unwrap();
        let tuples = gold_to_positions(&instance, &stream).unwrap();
        let back = positions_to_gold(&stream, &tuples).unwrap();
        let again = gold_to_positions(
            &TaskInstance { gold: back, ..instance.clone() },
            &stream,
        )
        .unwrap();
        assert_eq!(tuples, again);
    }
}
