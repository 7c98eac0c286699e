//! Non-autoregressive graph decoding.
//!
//! [`decode`] recovers the tuple set from an adjacency tensor in four steps:
//! merge the consecutive and jump relations into one matrix, enumerate
//! forward chains over it, keep a chain only when a tail-to-head edge closes
//! it (last position back to first), then split each kept chain into slots at
//! its jump edges.
//!
//! Chain search is depth-first from candidate heads — the targets of
//! tail-to-head edges — since every closed chain's first position is such a
//! target. Positions may not repeat inside a chain; the only cycle is the
//! closing tail-to-head edge.
//!
//! When a position pair carries both a consecutive and a jump edge (possible
//! once tuples share positions, or in thresholded predictions), the split is
//! ambiguous and both readings are kept. This is what makes decoding a
//! superset of the encoded gold set instead of silently dropping one reading.
//!
//! [`brute_force_decode`] is the independent oracle: it enumerates every
//! non-repeating position sequence up to a length bound, applies the same
//! validity predicate, and is definitionally correct by construction.

use crate::graph::{AdjacencyTensor, EdgeKind, MultiSlotTuple, Slot, TokenSpan};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("chain enumeration exceeded budget of {max_chains} chains")]
    BudgetExceeded { max_chains: usize },
    #[error("exhaustive enumeration exceeded budget of {max_sequences} sequences")]
    InfeasibleSize { max_sequences: usize },
    #[error("segment {positions:?} cannot be paired into intervals")]
    MalformedSegment { positions: Vec<usize> },
}

/// Decoding limits and task hints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Longest chain considered, in positions. Length-1 self-loop chains are
    /// always considered regardless.
    pub max_chain_length: usize,
    /// Cap on enumerated chain candidates; exceeding it signals a
    /// pathologically dense prediction.
    pub max_chains: usize,
    /// Expected tuple arity for the task, used to regroup the pieces of a
    /// discontinuous span into one slot. `None` keeps one slot per piece.
    pub slot_arity_hint: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { max_chain_length: 24, max_chains: 100_000, slot_arity_hint: None }
    }
}

/// Position sequence whose adjacent pairs are edges of the merged
/// consecutive-or-jump matrix, with no repeated position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardChain {
    pub positions: Vec<usize>,
}

impl ForwardChain {
    pub fn new(positions: Vec<usize>) -> Self {
        ForwardChain { positions }
    }

    /// Check the chain against a tensor's merged matrix.
    pub fn is_valid(&self, adj: &AdjacencyTensor) -> bool {
        if self.positions.is_empty() {
            return false;
        }
        let mut seen = BTreeSet::new();
        for &p in &self.positions {
            if p >= adj.len() || !seen.insert(p) {
                return false;
            }
        }
        self.positions.windows(2).all(|w| {
            adj.get(EdgeKind::Consecutive, w[0], w[1]) || adj.get(EdgeKind::Jump, w[0], w[1])
        })
    }
}

/// Counters describing one decoding pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeDiagnostics {
    /// Candidate chains that passed tail-to-head closure.
    pub chains_found: usize,
    /// Enumerated candidates that failed closure.
    pub chains_rejected: usize,
    /// Closed chains whose every reading was unpairable and which were
    /// therefore dropped.
    pub malformed_chains: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutput {
    /// Deduplicated tuples in canonical order.
    pub tuples: Vec<MultiSlotTuple>,
    pub diagnostics: DecodeDiagnostics,
}

/// Recover the tuple set encoded in `adj`.
///
/// `anchors` lists the positions of schema-label leading tokens, so that
/// single-position pieces can be rebuilt as label-anchor slots.
pub fn decode(
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
    cfg: &DecodeConfig,
) -> Result<DecodeOutput, DecodeError> {
    let len = adj.len();
    let mut tuples = BTreeSet::new();
    let mut diagnostics = DecodeDiagnostics::default();
    let mut budget = Budget { used: 0, limit: cfg.max_chains };

    let mut heads = vec![false; len];
    for from in 0..len {
        for to in 0..len {
            if adj.get(EdgeKind::TailToHead, from, to) {
                heads[to] = true;
            }
        }
    }
    // Adjacency lists of the merged consecutive-or-jump matrix.
    let merged: Vec<Vec<usize>> = (0..len)
        .map(|from| {
            (0..len)
                .filter(|&to| {
                    adj.get(EdgeKind::Consecutive, from, to) || adj.get(EdgeKind::Jump, from, to)
                })
                .collect()
        })
        .collect();

    let mut chain = Vec::new();
    let mut visited = vec![false; len];
    for head in (0..len).filter(|&p| heads[p]) {
        chain.push(head);
        visited[head] = true;
        walk(
            adj,
            anchors,
            cfg,
            &merged,
            &mut chain,
            &mut visited,
            &mut budget,
            &mut tuples,
            &mut diagnostics,
        )?;
        visited[head] = false;
        chain.pop();
    }

    Ok(DecodeOutput { tuples: tuples.into_iter().collect(), diagnostics })
}

struct Budget {
    used: usize,
    limit: usize,
}

impl Budget {
    fn spend(&mut self) -> Result<(), DecodeError> {
        self.used += 1;
        if self.used > self.limit {
            Err(DecodeError::BudgetExceeded { max_chains: self.limit })
        } else {
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn walk(
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
    cfg: &DecodeConfig,
    merged: &[Vec<usize>],
    chain: &mut Vec<usize>,
    visited: &mut [bool],
    budget: &mut Budget,
    tuples: &mut BTreeSet<MultiSlotTuple>,
    diagnostics: &mut DecodeDiagnostics,
) -> Result<(), DecodeError> {
    budget.spend()?;
    let head = chain[0];
    let last = *chain.last().expect("chain is non-empty");
    if adj.get(EdgeKind::TailToHead, last, head) {
        diagnostics.chains_found += 1;
        let readings = split_chain_readings(chain, adj, anchors, cfg.slot_arity_hint, budget)?;
        if readings.is_empty() {
            diagnostics.malformed_chains += 1;
        } else {
            tuples.extend(readings);
        }
    } else {
        diagnostics.chains_rejected += 1;
    }
    if chain.len() < cfg.max_chain_length {
        for &next in &merged[last] {
            if !visited[next] {
                chain.push(next);
                visited[next] = true;
                walk(adj, anchors, cfg, merged, chain, visited, budget, tuples, diagnostics)?;
                visited[next] = false;
                chain.pop();
            }
        }
    }
    Ok(())
}

/// Split one closed chain into a tuple at its jump edges.
///
/// Non-jump adjacent pairs are within-piece links and must pair up as the
/// `(start, end)` boundaries of one interval, so a segment between jumps is
/// one or two positions long. A single anchor position becomes a label-anchor
/// slot. Where the tensor marks a pair as both consecutive and jump, this
/// deterministic form splits (jump wins); [`decode`] additionally explores
/// the other reading.
pub fn split_chain(
    chain: &ForwardChain,
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
) -> Result<MultiSlotTuple, DecodeError> {
    let positions = &chain.positions;
    let labels: Vec<PairLabel> = positions
        .windows(2)
        .map(|w| {
            if adj.get(EdgeKind::Jump, w[0], w[1]) {
                PairLabel::Jump
            } else {
                PairLabel::Within
            }
        })
        .collect();
    assemble(positions, &labels, anchors).ok_or(DecodeError::MalformedSegment {
        positions: positions.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairLabel {
    Within,
    Jump,
}

/// All consistent tuples for one closed chain.
///
/// Each adjacent pair is read as a jump (piece boundary) or a within-piece
/// link, restricted to the edges actually present; pairs carrying both edges
/// branch into both readings. Readings that cannot be paired into well-formed
/// slots are discarded.
fn split_chain_readings(
    positions: &[usize],
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
    arity_hint: Option<usize>,
    budget: &mut Budget,
) -> Result<Vec<MultiSlotTuple>, DecodeError> {
    let n = positions.len();
    let mut out = Vec::new();
    let mut labels = vec![PairLabel::Jump; n.saturating_sub(1)];
    enumerate_labelings(positions, adj, anchors, arity_hint, budget, &mut labels, 0, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_labelings(
    positions: &[usize],
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
    arity_hint: Option<usize>,
    budget: &mut Budget,
    labels: &mut [PairLabel],
    pair: usize,
    out: &mut Vec<MultiSlotTuple>,
) -> Result<(), DecodeError> {
    if pair == positions.len().saturating_sub(1) {
        budget.spend()?;
        if let Some(mut tuple) = assemble(positions, labels, anchors) {
            if let Some(k) = arity_hint {
                tuple = regroup_for_arity(tuple, k);
            }
            out.push(tuple);
        }
        return Ok(());
    }
    let (a, b) = (positions[pair], positions[pair + 1]);
    let has_jump = adj.get(EdgeKind::Jump, a, b);
    let has_consecutive = adj.get(EdgeKind::Consecutive, a, b);
    if has_jump {
        labels[pair] = PairLabel::Jump;
        enumerate_labelings(positions, adj, anchors, arity_hint, budget, labels, pair + 1, out)?;
    }
    if has_consecutive {
        // A within-piece link must form a forward interval between non-anchor
        // positions, and pieces hold at most two boundaries.
        let previous_within = pair > 0 && labels[pair - 1] == PairLabel::Within;
        if a < b && !previous_within && !anchors.contains(&a) && !anchors.contains(&b) {
            labels[pair] = PairLabel::Within;
            enumerate_labelings(positions, adj, anchors, arity_hint, budget, labels, pair + 1, out)?;
            labels[pair] = PairLabel::Jump;
        }
    }
    Ok(())
}

/// Build a tuple from a chain and a pair labeling; `None` when a segment
/// cannot be paired into a well-formed slot.
fn assemble(
    positions: &[usize],
    labels: &[PairLabel],
    anchors: &BTreeSet<usize>,
) -> Option<MultiSlotTuple> {
    let mut slots = Vec::new();
    let mut segment = vec![positions[0]];
    for (i, label) in labels.iter().enumerate() {
        match label {
            PairLabel::Within => segment.push(positions[i + 1]),
            PairLabel::Jump => {
                slots.push(segment_to_slot(&segment, anchors)?);
                segment = vec![positions[i + 1]];
            }
        }
    }
    slots.push(segment_to_slot(&segment, anchors)?);
    Some(MultiSlotTuple::new(slots))
}

fn segment_to_slot(segment: &[usize], anchors: &BTreeSet<usize>) -> Option<Slot> {
    match *segment {
        [p] => {
            if anchors.contains(&p) {
                Some(Slot::LabelAnchor(p))
            } else {
                Some(Slot::TextSpan(vec![TokenSpan::single(p)]))
            }
        }
        [a, b] if a < b && !anchors.contains(&a) && !anchors.contains(&b) => {
            Some(Slot::TextSpan(vec![TokenSpan::new(a, b)]))
        }
        _ => None,
    }
}

/// Merge span pieces into one discontinuous slot when the expected arity
/// says the chain has more pieces than slots and exactly one slot is left
/// for text. Falls back to one slot per piece when the merge cannot produce
/// a well-formed span.
fn regroup_for_arity(tuple: MultiSlotTuple, arity: usize) -> MultiSlotTuple {
    if tuple.arity() <= arity {
        return tuple;
    }
    let anchor_count = tuple
        .slots
        .iter()
        .filter(|s| matches!(s, Slot::LabelAnchor(_)))
        .count();
    if arity < anchor_count + 1 {
        return tuple;
    }
    if arity - anchor_count != 1 {
        return tuple;
    }
    let mut merged_intervals: Vec<TokenSpan> = Vec::new();
    let mut slots = Vec::new();
    let mut text_slot_index = None;
    for slot in &tuple.slots {
        match slot {
            Slot::LabelAnchor(_) => slots.push(slot.clone()),
            Slot::TextSpan(intervals) => {
                if text_slot_index.is_none() {
                    text_slot_index = Some(slots.len());
                    slots.push(Slot::TextSpan(Vec::new()));
                }
                merged_intervals.extend(intervals.iter().copied());
            }
        }
    }
    let merged = Slot::TextSpan(merged_intervals);
    if merged.validate().is_err() {
        return tuple;
    }
    if let Some(i) = text_slot_index {
        slots[i] = merged;
    }
    MultiSlotTuple::new(slots)
}

/// Exhaustive decoding oracle.
///
/// Enumerates every sequence of distinct positions up to `max_len`, keeps
/// those whose adjacent pairs lie in the merged matrix and that close with a
/// tail-to-head edge, and splits them like [`decode`] does. Starts from every
/// position rather than assuming anything about chain heads.
pub fn brute_force_decode(
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
    max_len: usize,
    max_sequences: usize,
    arity_hint: Option<usize>,
) -> Result<BTreeSet<MultiSlotTuple>, DecodeError> {
    let len = adj.len();
    let mut tuples = BTreeSet::new();
    let mut sequences = 0usize;
    let mut stack = Vec::new();
    let mut visited = vec![false; len];
    for start in 0..len {
        stack.push(start);
        visited[start] = true;
        extend(
            adj,
            anchors,
            max_len,
            max_sequences,
            arity_hint,
            &mut stack,
            &mut visited,
            &mut sequences,
            &mut tuples,
        )?;
        visited[start] = false;
        stack.pop();
    }
    Ok(tuples)
}

#[allow(clippy::too_many_arguments)]
fn extend(
    adj: &AdjacencyTensor,
    anchors: &BTreeSet<usize>,
    max_len: usize,
    max_sequences: usize,
    arity_hint: Option<usize>,
    stack: &mut Vec<usize>,
    visited: &mut [bool],
    sequences: &mut usize,
    tuples: &mut BTreeSet<MultiSlotTuple>,
) -> Result<(), DecodeError> {
    *sequences += 1;
    if *sequences > max_sequences {
        return Err(DecodeError::InfeasibleSize { max_sequences });
    }
    let first = stack[0];
    let last = *stack.last().expect("non-empty");
    if adj.get(EdgeKind::TailToHead, last, first) {
        let mut budget = Budget { used: 0, limit: max_sequences };
        for tuple in split_chain_readings(stack, adj, anchors, arity_hint, &mut budget)? {
            tuples.insert(tuple);
        }
    }
    if stack.len() < max_len {
        for next in 0..adj.len() {
            let linked = adj.get(EdgeKind::Consecutive, last, next)
                || adj.get(EdgeKind::Jump, last, next);
            if linked && !visited[next] {
                stack.push(next);
                visited[next] = true;
                extend(
                    adj, anchors, max_len, max_sequences, arity_hint, stack, visited, sequences,
                    tuples,
                )?;
                visited[next] = false;
                stack.pop();
            }
        }
    }
    Ok(())
}
