//! Multi-span cyclic graph codec.
//!
//! A [`MultiSlotTuple`] is the universal extraction target: an ordered list of
//! slots, each slot either a schema-label anchor position or a (possibly
//! discontinuous) text span. A set of tuples is encoded into an
//! [`AdjacencyTensor`] holding three boolean relations over token positions:
//!
//! * **consecutive** — links the start boundary of one contiguous span piece
//!   to its end boundary (single-token pieces emit none),
//! * **jump** — links different pieces of a tuple chain: slot-to-slot
//!   transitions and the gaps inside a discontinuous span,
//! * **tail-to-head** — closes each tuple's chain from its last position back
//!   to its first, marking the chain boundary for decoding.
//!
//! Example: the 3-slot relation tuple `(anchor 9, span 16..=17, span 22..=22)`
//! encodes as `jump(9,16)`, `consecutive(16,17)`, `jump(17,22)` and
//! `tail_to_head(22,9)`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Errors raised while validating or encoding tuples.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("position {position} out of range for sequence length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("tuple has no slots")]
    EmptyTuple,
    #[error("text-span slot has no intervals")]
    EmptySpan,
    #[error("interval {start}..={end} has start > end")]
    InvalidInterval { start: usize, end: usize },
    #[error("intervals of one span must be ordered and disjoint")]
    UnorderedIntervals,
    #[error("tensor lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Inclusive interval of token positions, one contiguous piece of a span.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn single(pos: usize) -> Self {
        TokenSpan { start: pos, end: pos }
    }

    pub fn is_single(&self) -> bool {
        self.start == self.end
    }

    /// Boundary positions listed in chain order: `[start]` for a single-token
    /// piece, `[start, end]` otherwise. Interior tokens never appear.
    pub fn boundaries(&self) -> Vec<usize> {
        if self.is_single() {
            vec![self.start]
        } else {
            vec![self.start, self.end]
        }
    }
}

/// One slot of a tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    /// Position of a schema label's leading token.
    LabelAnchor(usize),
    /// Ordered, disjoint intervals of text token positions. More than one
    /// interval means a discontinuous span.
    TextSpan(Vec<TokenSpan>),
}

impl Slot {
    pub fn validate(&self) -> Result<(), CodecError> {
        match self {
            Slot::LabelAnchor(_) => Ok(()),
            Slot::TextSpan(intervals) => {
                if intervals.is_empty() {
                    return Err(CodecError::EmptySpan);
                }
                for iv in intervals {
                    if iv.start > iv.end {
                        return Err(CodecError::InvalidInterval {
                            start: iv.start,
                            end: iv.end,
                        });
                    }
                }
                for pair in intervals.windows(2) {
                    if pair[0].end >= pair[1].start {
                        return Err(CodecError::UnorderedIntervals);
                    }
                }
                Ok(())
            }
        }
    }

    pub fn max_position(&self) -> usize {
        match self {
            Slot::LabelAnchor(p) => *p,
            Slot::TextSpan(intervals) => {
                intervals.iter().map(|iv| iv.end).max().unwrap_or(0)
            }
        }
    }
}

/// Ordered, non-empty list of slots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiSlotTuple {
    pub slots: Vec<Slot>,
}

impl MultiSlotTuple {
    pub fn new(slots: Vec<Slot>) -> Self {
        MultiSlotTuple { slots }
    }

    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.slots.is_empty() {
            return Err(CodecError::EmptyTuple);
        }
        for slot in &self.slots {
            slot.validate()?;
        }
        Ok(())
    }

    /// Canonical byte form; two tuples are equal iff their match keys are.
    pub fn match_key(&self) -> MatchKey {
        let mut out = String::new();
        for (i, slot) in self.slots.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            match slot {
                Slot::LabelAnchor(p) => {
                    let _ = write!(out, "A{p}");
                }
                Slot::TextSpan(intervals) => {
                    out.push('S');
                    for (j, iv) in intervals.iter().enumerate() {
                        if j > 0 {
                            out.push(',');
                        }
                        let _ = write!(out, "{}-{}", iv.start, iv.end);
                    }
                }
            }
        }
        MatchKey(out)
    }
}

/// Canonical serialized identity of a tuple, used for exact-match counting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchKey(pub String);

/// The three edge relations of the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Consecutive,
    Jump,
    TailToHead,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::Consecutive, EdgeKind::Jump, EdgeKind::TailToHead];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            EdgeKind::Consecutive => 0,
            EdgeKind::Jump => 1,
            EdgeKind::TailToHead => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Consecutive => "consecutive",
            EdgeKind::Jump => "jump",
            EdgeKind::TailToHead => "tail_to_head",
        }
    }
}

/// Boolean tensor of shape `[3][len][len]`, indexed `(kind, from, to)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyTensor {
    len: usize,
    bits: Vec<bool>,
}

impl AdjacencyTensor {
    pub fn new(len: usize) -> Self {
        AdjacencyTensor { len, bits: vec![false; EdgeKind::COUNT * len * len] }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn idx(&self, kind: EdgeKind, from: usize, to: usize) -> usize {
        debug_assert!(from < self.len && to < self.len);
        (kind.index() * self.len + from) * self.len + to
    }

    pub fn get(&self, kind: EdgeKind, from: usize, to: usize) -> bool {
        self.bits[self.idx(kind, from, to)]
    }

    pub fn set(&mut self, kind: EdgeKind, from: usize, to: usize, value: bool) {
        let i = self.idx(kind, from, to);
        self.bits[i] = value;
    }

    /// Cellwise OR of another tensor into this one.
    pub fn or_assign(&mut self, other: &AdjacencyTensor) -> Result<(), CodecError> {
        if self.len != other.len {
            return Err(CodecError::LengthMismatch { left: self.len, right: other.len });
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        Ok(())
    }

    /// Edges of one kind in row-major `(from, to)` order.
    pub fn edges(&self, kind: EdgeKind) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for from in 0..self.len {
            for to in 0..self.len {
                if self.get(kind, from, to) {
                    out.push((from, to));
                }
            }
        }
        out
    }

    pub fn count_edges(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Textual 0/1 grid per edge kind, for golden-file tests and debugging.
    pub fn render_grids(&self) -> String {
        let mut out = String::new();
        for kind in EdgeKind::ALL {
            let _ = writeln!(out, "{}:", kind.name());
            for from in 0..self.len {
                for to in 0..self.len {
                    out.push(if self.get(kind, from, to) { '1' } else { '0' });
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Boundary positions of a slot in chain order.
///
/// An anchor contributes its single position; a text span contributes the
/// boundaries of each interval in order.
pub fn flatten_slot(slot: &Slot) -> Vec<usize> {
    match slot {
        Slot::LabelAnchor(p) => vec![*p],
        Slot::TextSpan(intervals) => {
            intervals.iter().flat_map(|iv| iv.boundaries()).collect()
        }
    }
}

/// Pieces of a tuple: each label anchor is one piece, each span interval is
/// one piece holding its boundary positions. Consecutive edges live inside a
/// piece; jump edges connect adjacent pieces.
pub(crate) fn tuple_pieces(tuple: &MultiSlotTuple) -> Vec<Vec<usize>> {
    let mut pieces = Vec::new();
    for slot in &tuple.slots {
        match slot {
            Slot::LabelAnchor(p) => pieces.push(vec![*p]),
            Slot::TextSpan(intervals) => {
                for iv in intervals {
                    pieces.push(iv.boundaries());
                }
            }
        }
    }
    pieces
}

/// Encode a set of tuples into one adjacency tensor of length `len`.
///
/// Edges from distinct tuples are OR-merged. A tuple with `k` flattened
/// boundaries emits exactly `k - 1` consecutive-or-jump edges plus one
/// tail-to-head edge; an arity-1 single-position tuple emits only a
/// tail-to-head self-loop.
pub fn encode(tuples: &[MultiSlotTuple], len: usize) -> Result<AdjacencyTensor, CodecError> {
    let mut adj = AdjacencyTensor::new(len);
    for tuple in tuples {
        tuple.validate()?;
        let pieces = tuple_pieces(tuple);
        for piece in &pieces {
            for &p in piece {
                if p >= len {
                    return Err(CodecError::PositionOutOfRange { position: p, len });
                }
            }
            if piece.len() == 2 {
                adj.set(EdgeKind::Consecutive, piece[0], piece[1], true);
            }
        }
        for pair in pieces.windows(2) {
            let from = *pair[0].last().expect("pieces are non-empty");
            let to = pair[1][0];
            adj.set(EdgeKind::Jump, from, to, true);
        }
        let first = pieces[0][0];
        let last = *pieces.last().expect("tuple has slots").last().expect("non-empty");
        adj.set(EdgeKind::TailToHead, last, first, true);
    }
    Ok(adj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example_tuple() -> MultiSlotTuple {
        MultiSlotTuple::new(vec![
            Slot::LabelAnchor(9),
            Slot::TextSpan(vec![TokenSpan::new(16, 17)]),
            Slot::TextSpan(vec![TokenSpan::new(22, 22)]),
        ])
    }

    #[test]
    fn flatten_two_token_span() {
        let slot = Slot::TextSpan(vec![TokenSpan::new(16, 17)]);
        assert_eq!(flatten_slot(&slot), vec![16, 17]);
    }

    #[test]
    fn flatten_single_token_span() {
        let slot = Slot::TextSpan(vec![TokenSpan::new(22, 22)]);
        assert_eq!(flatten_slot(&slot), vec![22]);
    }

    #[test]
    fn flatten_label_anchor() {
        assert_eq!(flatten_slot(&Slot::LabelAnchor(9)), vec![9]);
    }

    #[test]
    fn flatten_long_span_is_boundary_only() {
        // A 4-token piece contributes start and end only, never interior tokens.
        let slot = Slot::TextSpan(vec![TokenSpan::new(3, 6)]);
        assert_eq!(flatten_slot(&slot), vec![3, 6]);
    }

    #[test]
    fn encode_worked_example_exact_edge_set() {
        let adj = encode(&[worked_example_tuple()], 24).unwrap();
        assert_eq!(adj.edges(EdgeKind::Jump), vec![(9, 16), (17, 22)]);
        assert_eq!(adj.edges(EdgeKind::Consecutive), vec![(16, 17)]);
        assert_eq!(adj.edges(EdgeKind::TailToHead), vec![(22, 9)]);
        assert_eq!(adj.count_edges(), 4);
    }

    #[test]
    fn encode_empty_set_is_all_false() {
        let adj = encode(&[], 8).unwrap();
        assert_eq!(adj.count_edges(), 0);
    }

    #[test]
    fn encode_discontinuous_entity_matches_hand_built_matrix() {
        // Anchor at 1, discontinuous span with pieces 4..=5 and 7..=7.
        let tuple = MultiSlotTuple::new(vec![
            Slot::LabelAnchor(1),
            Slot::TextSpan(vec![TokenSpan::new(4, 5), TokenSpan::new(7, 7)]),
        ]);
        let adj = encode(&[tuple], 9).unwrap();

        let mut expect = AdjacencyTensor::new(9);
        expect.set(EdgeKind::Jump, 1, 4, true); // anchor -> first piece start
        expect.set(EdgeKind::Consecutive, 4, 5, true); // within first piece
        expect.set(EdgeKind::Jump, 5, 7, true); // between pieces of one span
        expect.set(EdgeKind::TailToHead, 7, 1, true);
        assert_eq!(adj, expect);
    }

    #[test]
    fn encode_classification_tuple_is_self_loop_only() {
        let tuple = MultiSlotTuple::new(vec![Slot::LabelAnchor(3)]);
        let adj = encode(&[tuple], 5).unwrap();
        assert_eq!(adj.edges(EdgeKind::TailToHead), vec![(3, 3)]);
        assert_eq!(adj.count_edges(), 1);
    }

    #[test]
    fn encode_single_token_slot_has_no_consecutive_edge() {
        let tuple = MultiSlotTuple::new(vec![
            Slot::LabelAnchor(0),
            Slot::TextSpan(vec![TokenSpan::new(2, 2)]),
        ]);
        let adj = encode(&[tuple], 4).unwrap();
        assert!(adj.edges(EdgeKind::Consecutive).is_empty());
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let tuple = MultiSlotTuple::new(vec![Slot::LabelAnchor(10)]);
        assert_eq!(
            encode(&[tuple], 5),
            Err(CodecError::PositionOutOfRange { position: 10, len: 5 })
        );
    }

    #[test]
    fn validate_rejects_bad_slots() {
        assert_eq!(
            Slot::TextSpan(vec![]).validate(),
            Err(CodecError::EmptySpan)
        );
        assert_eq!(
            Slot::TextSpan(vec![TokenSpan::new(5, 3)]).validate(),
            Err(CodecError::InvalidInterval { start: 5, end: 3 })
        );
        assert_eq!(
            Slot::TextSpan(vec![TokenSpan::new(1, 4), TokenSpan::new(3, 6)]).validate(),
            Err(CodecError::UnorderedIntervals)
        );
        assert_eq!(
            MultiSlotTuple::new(vec![]).validate(),
            Err(CodecError::EmptyTuple)
        );
    }

    #[test]
    fn match_key_is_canonical() {
        let t = worked_example_tuple();
        assert_eq!(t.match_key().0, "A9|S16-17|S22-22");
        assert_eq!(t.match_key(), t.clone().match_key());
        let other = MultiSlotTuple::new(vec![Slot::LabelAnchor(9)]);
        assert_ne!(t.match_key(), other.match_key());
    }

    #[test]
    fn render_grids_golden() {
        let tuple = MultiSlotTuple::new(vec![
            Slot::LabelAnchor(0),
            Slot::TextSpan(vec![TokenSpan::new(1, 2)]),
        ]);
        let adj = encode(&[tuple], 3).unwrap();
        let expected = "\
consecutive:
000
001
000
jump:
010
000
000
tail_to_head:
000
000
100
";
        assert_eq!(adj.render_grids(), expected);
    }

    #[test]
    fn edge_count_matches_boundary_count() {
        // k flattened boundaries -> k-1 consecutive/jump edges + 1 tail-to-head.
        let tuple = MultiSlotTuple::new(vec![
            Slot::LabelAnchor(0),
            Slot::TextSpan(vec![TokenSpan::new(2, 3), TokenSpan::new(5, 5)]),
            Slot::TextSpan(vec![TokenSpan::new(7, 9)]),
        ]);
        let k: usize = tuple.slots.iter().map(|s| flatten_slot(s).len()).sum();
        let adj = encode(&[tuple], 10).unwrap();
        let cj = adj.edges(EdgeKind::Consecutive).len() + adj.edges(EdgeKind::Jump).len();
        assert_eq!(cj, k - 1);
        assert_eq!(adj.edges(EdgeKind::TailToHead).len(), 1);
    }
}
