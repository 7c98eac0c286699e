//! Position-exact evaluation.
//!
//! Tuples count as correct only when their slot variants and token positions
//! match gold exactly (multiset counting, so a duplicated gold tuple must be
//! matched once per occurrence). [`micro_f1`] covers every task shape —
//! entities, triplets, triggers, arguments, n-ary tuples — because they are
//! all [`MultiSlotTuple`]s. [`classification_metrics`] adds the label and
//! reading-comprehension scalar metrics, and [`string_match_upper_bound`]
//! quantifies how much F1 a string-matching indexing strategy can reach at
//! best, compared with carrying exact positions through the model.

use crate::data::{Tokenize, WordTokenizer};
use crate::graph::{MatchKey, MultiSlotTuple, Slot, TokenSpan};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction references position {position} beyond stream length {len}")]
    SpaceMismatch { position: usize, len: usize },
    #[error("prediction and gold lists differ in length: {pred} vs {gold}")]
    LengthMismatch { pred: usize, gold: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Micro-averaged precision/recall/F1 with a per-label breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub per_label: BTreeMap<String, LabelMetrics>,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

impl EvalReport {
    fn from_counts(
        tp: usize,
        fp: usize,
        fn_: usize,
        label_counts: BTreeMap<String, (usize, usize, usize)>,
    ) -> Self {
        let (precision, recall, f1) = prf(tp, fp, fn_);
        let per_label = label_counts
            .into_iter()
            .map(|(label, (tp, fp, fn_))| {
                let (precision, recall, f1) = prf(tp, fp, fn_);
                (
                    label,
                    LabelMetrics {
                        precision,
                        recall,
                        f1,
                        true_positives: tp,
                        false_positives: fp,
                        false_negatives: fn_,
                    },
                )
            })
            .collect();
        EvalReport {
            precision,
            recall,
            f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            per_label,
        }
    }

    /// Aligned text table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .per_label
            .keys()
            .map(|k| k.chars().count())
            .chain(["micro".len()].into_iter())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>6}  {:>6}  {:>6}",
            "label", "precision", "recall", "f1", "tp", "fp", "fn"
        );
        for (label, m) in &self.per_label {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6}  {:>6}  {:>6}",
                label,
                m.precision,
                m.recall,
                m.f1,
                m.true_positives,
                m.false_positives,
                m.false_negatives
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6}  {:>6}  {:>6}",
            "micro",
            self.precision,
            self.recall,
            self.f1,
            self.true_positives,
            self.false_positives,
            self.false_negatives
        );
        out
    }
}

/// One document's predictions and gold in a shared position space.
#[derive(Debug, Clone, Default)]
pub struct EvalDoc {
    pub pred: Vec<MultiSlotTuple>,
    pub gold: Vec<MultiSlotTuple>,
    /// When set, predictions beyond this length are a [`EvalError::SpaceMismatch`].
    pub stream_len: Option<usize>,
    /// Anchor position -> label name, for the per-label breakdown.
    pub anchor_labels: BTreeMap<usize, String>,
}

fn tuple_label(tuple: &MultiSlotTuple, anchor_labels: &BTreeMap<usize, String>) -> String {
    for slot in &tuple.slots {
        if let Slot::LabelAnchor(pos) = slot {
            return anchor_labels
                .get(pos)
                .cloned()
                .unwrap_or_else(|| format!("@{pos}"));
        }
    }
    "(none)".to_string()
}

fn tuple_max_position(tuple: &MultiSlotTuple) -> usize {
    tuple.slots.iter().map(|s| s.max_position()).max().unwrap_or(0)
}

/// Exact-match micro F1 over a corpus of documents.
///
/// Counting is multiset: `tp = Σ min(pred_count, gold_count)` per match key,
/// which makes swapping predictions and gold swap precision and recall
/// exactly. Corpus counts are the sums of per-document counts.
pub fn micro_f1(docs: &[EvalDoc]) -> Result<EvalReport, EvalError> {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut label_counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();

    for doc in docs {
        if let Some(len) = doc.stream_len {
            for tuple in &doc.pred {
                let max = tuple_max_position(tuple);
                if max >= len {
                    return Err(EvalError::SpaceMismatch { position: max, len });
                }
            }
        }
        let mut keyed: BTreeMap<MatchKey, (usize, usize, String)> = BTreeMap::new();
        for tuple in &doc.pred {
            let entry = keyed
                .entry(tuple.match_key())
                .or_insert_with(|| (0, 0, tuple_label(tuple, &doc.anchor_labels)));
            entry.0 += 1;
        }
        for tuple in &doc.gold {
            let entry = keyed
                .entry(tuple.match_key())
                .or_insert_with(|| (0, 0, tuple_label(tuple, &doc.anchor_labels)));
            entry.1 += 1;
        }
        for (_, (p, g, label)) in keyed {
            let matched = p.min(g);
            tp += matched;
            fp += p - matched;
            fn_ += g - matched;
            let slot = label_counts.entry(label).or_insert((0, 0, 0));
            slot.0 += matched;
            slot.1 += p - matched;
            slot.2 += g - matched;
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_, label_counts))
}

/// Scalar metrics for classification and reading-comprehension answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMetric {
    Accuracy,
    MatthewsCc,
    ExactMatch,
    TokenF1,
}

/// Compute one scalar metric over aligned prediction/gold lists.
///
/// `Accuracy` and `MatthewsCc` compare labels literally. `ExactMatch` and
/// `TokenF1` are for answer strings and normalize by trimming, collapsing
/// whitespace, and lowercasing before comparison.
pub fn classification_metrics(
    pred: &[String],
    gold: &[String],
    metric: ClassMetric,
) -> Result<f64, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let n = pred.len() as f64;
    Ok(match metric {
        ClassMetric::Accuracy => {
            pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / n
        }
        ClassMetric::MatthewsCc => matthews_cc(pred, gold),
        ClassMetric::ExactMatch => {
            pred.iter()
                .zip(gold)
                .filter(|(p, g)| normalize_answer(p) == normalize_answer(g))
                .count() as f64
                / n
        }
        ClassMetric::TokenF1 => {
            pred.iter().zip(gold).map(|(p, g)| token_f1(p, g)).sum::<f64>() / n
        }
    })
}

/// Multiclass Matthews correlation via the covariance form. Returns 0 when a
/// marginal degenerates (e.g. a constant predictor).
fn matthews_cc(pred: &[String], gold: &[String]) -> f64 {
    let mut classes: Vec<&String> = pred.iter().chain(gold).collect();
    classes.sort();
    classes.dedup();
    let index: BTreeMap<&String, usize> =
        classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let k = classes.len();
    let mut confusion = vec![vec![0f64; k]; k];
    for (p, g) in pred.iter().zip(gold) {
        confusion[index[g]][index[p]] += 1.0;
    }
    let s: f64 = pred.len() as f64;
    let c: f64 = (0..k).map(|i| confusion[i][i]).sum();
    let p_k: Vec<f64> = (0..k).map(|j| (0..k).map(|i| confusion[i][j]).sum()).collect();
    let t_k: Vec<f64> = (0..k).map(|i| confusion[i].iter().sum()).collect();
    let dot: f64 = (0..k).map(|i| p_k[i] * t_k[i]).sum();
    let numerator = c * s - dot;
    let p_sq: f64 = p_k.iter().map(|x| x * x).sum();
    let t_sq: f64 = t_k.iter().map(|x| x * x).sum();
    let denominator = ((s * s - p_sq) * (s * s - t_sq)).sqrt();
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

fn normalize_answer(s: &str) -> Vec<String> {
    s.split_whitespace().map(|w| w.to_lowercase()).collect()
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for w in &g {
        *counts.entry(w).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for w in &p {
        if let Some(c) = counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// How positions are recovered from predicted entity strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Every entity maps to the first occurrence of its string in the text.
    First,
    /// Longer strings are located first and claim their token positions;
    /// shorter strings skip occurrences overlapping claimed positions.
    /// Entities sharing one surface still share one assignment.
    LongerFirst,
    /// Positions come from the model itself; correct by construction.
    PositionExact,
}

/// One gold entity: its surface string and its true token span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpperBoundEntity {
    pub surface: String,
    pub span: TokenSpan,
}

/// One document for the upper-bound analysis.
#[derive(Debug, Clone)]
pub struct UpperBoundDoc {
    pub tokens: Vec<String>,
    pub entities: Vec<UpperBoundEntity>,
}

impl UpperBoundDoc {
    /// Build from raw text with the default word tokenizer; entity spans are
    /// token positions into the tokenized text.
    pub fn from_text(text: &str, entities: Vec<UpperBoundEntity>) -> Self {
        let tokens = WordTokenizer::default()
            .tokenize(text)
            .into_iter()
            .map(|t| t.surface)
            .collect();
        UpperBoundDoc { tokens, entities }
    }
}

fn occurrences(tokens: &[String], needle: &[String]) -> Vec<TokenSpan> {
    if needle.is_empty() || needle.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - needle.len())
        .filter(|&i| tokens[i..i + needle.len()] == *needle)
        .map(|i| TokenSpan::new(i, i + needle.len() - 1))
        .collect()
}

fn entity_tokens(surface: &str) -> Vec<String> {
    WordTokenizer::default()
        .tokenize(surface)
        .into_iter()
        .map(|t| t.surface)
        .collect()
}

/// Best-case F1 of recovering gold entity positions by string matching.
///
/// Simulates predicting exactly the gold strings and locating them with the
/// given strategy, then scores the resulting positions with position-exact
/// micro F1. `PositionExact` scores 1.0 by construction whenever entities
/// exist; ambiguity (duplicate or nested surfaces) pulls the string-matching
/// strategies below 1.0.
pub fn string_match_upper_bound(docs: &[UpperBoundDoc], strategy: MatchStrategy) -> EvalReport {
    let mut eval_docs = Vec::with_capacity(docs.len());
    for doc in docs {
        let gold: Vec<MultiSlotTuple> = doc
            .entities
            .iter()
            .map(|e| MultiSlotTuple::new(vec![Slot::TextSpan(vec![e.span])]))
            .collect();
        let pred: Vec<MultiSlotTuple> = match strategy {
            MatchStrategy::PositionExact => gold.clone(),
            MatchStrategy::First => doc
                .entities
                .iter()
                .filter_map(|e| {
                    occurrences(&doc.tokens, &entity_tokens(&e.surface))
                        .first()
                        .map(|span| MultiSlotTuple::new(vec![Slot::TextSpan(vec![*span])]))
                })
                .collect(),
            MatchStrategy::LongerFirst => longer_first_predictions(doc),
        };
        eval_docs.push(EvalDoc { pred, gold, stream_len: None, anchor_labels: BTreeMap::new() });
    }
    micro_f1(&eval_docs).expect("upper-bound scoring does not set stream lengths")
}

fn longer_first_predictions(doc: &UpperBoundDoc) -> Vec<MultiSlotTuple> {
    let mut surfaces: Vec<String> = doc.entities.iter().map(|e| e.surface.clone()).collect();
    surfaces.sort();
    surfaces.dedup();
    // Longest token sequence first; ties resolve lexicographically.
    surfaces.sort_by_key(|s| std::cmp::Reverse(entity_tokens(s).len()));
    let mut claimed = vec![false; doc.tokens.len()];
    let mut assignment: BTreeMap<String, TokenSpan> = BTreeMap::new();
    for surface in surfaces {
        let occs = occurrences(&doc.tokens, &entity_tokens(&surface));
        let free = occs
            .iter()
            .find(|span| (span.start..=span.end).all(|p| !claimed[p]))
            .or_else(|| occs.first());
        if let Some(span) = free {
            for p in span.start..=span.end {
                claimed[p] = true;
            }
            assignment.insert(surface, *span);
        }
    }
    doc.entities
        .iter()
        .filter_map(|e| assignment.get(&e.surface))
        .map(|span| MultiSlotTuple::new(vec![Slot::TextSpan(vec![*span])]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Slot;

    fn tuple(positions: &[usize]) -> MultiSlotTuple {
        MultiSlotTuple::new(
            positions
                .iter()
                .map(|&p| Slot::TextSpan(vec![TokenSpan::single(p)]))
                .collect(),
        )
    }

    #[test]
    fn hand_countable_half_overlap() {
        let doc = EvalDoc {
            pred: vec![tuple(&[1]), tuple(&[2])],
            gold: vec![tuple(&[2]), tuple(&[3])],
            ..EvalDoc::default()
        };
        let report = micro_f1(&[doc]).unwrap();
        assert_eq!(report.precision, 0.5);
        assert_eq!(report.recall, 0.5);
        assert_eq!(report.f1, 0.5);
    }

    #[test]
    fn identity_is_perfect() {
        let gold = vec![tuple(&[1, 2]), tuple(&[5])];
        let doc = EvalDoc { pred: gold.clone(), gold, ..EvalDoc::default() };
        let report = micro_f1(&[doc]).unwrap();
        assert_eq!((report.precision, report.recall, report.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn multiset_counting_and_symmetry() {
        let pred = vec![tuple(&[1])];
        let gold = vec![tuple(&[1]), tuple(&[1])];
        let a = micro_f1(&[EvalDoc { pred: pred.clone(), gold: gold.clone(), ..EvalDoc::default() }])
            .unwrap();
        assert_eq!((a.true_positives, a.false_positives, a.false_negatives), (1, 0, 1));
        let b = micro_f1(&[EvalDoc { pred: gold, gold: pred, ..EvalDoc::default() }]).unwrap();
        assert_eq!(a.precision, b.recall);
        assert_eq!(a.recall, b.precision);
    }

    #[test]
    fn space_mismatch_detected() {
        let doc = EvalDoc {
            pred: vec![tuple(&[9])],
            gold: vec![],
            stream_len: Some(5),
            ..EvalDoc::default()
        };
        assert_eq!(
            micro_f1(&[doc]),
            Err(EvalError::SpaceMismatch { position: 9, len: 5 })
        );
    }

    #[test]
    fn per_label_breakdown_uses_anchor_names() {
        let mut anchor_labels = BTreeMap::new();
        anchor_labels.insert(3usize, "person".to_string());
        let labeled = MultiSlotTuple::new(vec![
            Slot::LabelAnchor(3),
            Slot::TextSpan(vec![TokenSpan::single(7)]),
        ]);
        let doc = EvalDoc {
            pred: vec![labeled.clone()],
            gold: vec![labeled],
            stream_len: None,
            anchor_labels,
        };
        let report = micro_f1(&[doc]).unwrap();
        assert_eq!(report.per_label["person"].true_positives, 1);
    }

    #[test]
    fn corpus_additivity() {
        let d1 = EvalDoc { pred: vec![tuple(&[1])], gold: vec![tuple(&[1])], ..EvalDoc::default() };
        let d2 = EvalDoc { pred: vec![tuple(&[2])], gold: vec![tuple(&[3])], ..EvalDoc::default() };
        let joint = micro_f1(&[d1.clone(), d2.clone()]).unwrap();
        let r1 = micro_f1(&[d1]).unwrap();
        let r2 = micro_f1(&[d2]).unwrap();
        assert_eq!(joint.true_positives, r1.true_positives + r2.true_positives);
        assert_eq!(joint.false_positives, r1.false_positives + r2.false_positives);
        assert_eq!(joint.false_negatives, r1.false_negatives + r2.false_negatives);
    }

    #[test]
    fn accuracy_and_mcc_perfect() {
        let labels: Vec<String> = ["a", "b", "a", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            classification_metrics(&labels, &labels, ClassMetric::Accuracy).unwrap(),
            1.0
        );
        assert!(
            (classification_metrics(&labels, &labels, ClassMetric::MatthewsCc).unwrap() - 1.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn constant_predictor_has_zero_mcc() {
        let pred: Vec<String> = vec!["yes".into(); 4];
        let gold: Vec<String> = ["yes", "no", "yes", "no"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            classification_metrics(&pred, &gold, ClassMetric::MatthewsCc).unwrap(),
            0.0
        );
    }

    #[test]
    fn mcc_matches_binary_formula() {
        // tp=3 fp=1 fn=2 tn=4 under the positive class "p".
        let pred: Vec<String> = ["p", "p", "p", "p", "n", "n", "n", "n", "n", "n"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let gold: Vec<String> = ["p", "p", "p", "n", "p", "p", "n", "n", "n", "n"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (tp, fp, fn_, tn) = (3.0, 1.0, 2.0, 4.0);
        let expect = (tp * tn - fp * fn_)
            / ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        let got = classification_metrics(&pred, &gold, ClassMetric::MatthewsCc).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn exact_match_and_token_f1() {
        let pred: Vec<String> = vec!["Snow  White".into(), "the queen".into()];
        let gold: Vec<String> = vec!["snow white".into(), "evil queen".into()];
        assert_eq!(
            classification_metrics(&pred, &gold, ClassMetric::ExactMatch).unwrap(),
            0.5
        );
        let f1 = classification_metrics(&pred, &gold, ClassMetric::TokenF1).unwrap();
        assert!((f1 - 0.75).abs() < 1e-12); // 1.0 and 0.5 averaged
    }

    #[test]
    fn length_mismatch_errors() {
        assert_eq!(
            classification_metrics(&["a".into()], &[], ClassMetric::Accuracy),
            Err(EvalError::LengthMismatch { pred: 1, gold: 0 })
        );
    }

    fn tok(words: &str) -> Vec<String> {
        words.split_whitespace().map(|s| s.to_string()).collect()
    }

    #[test]
    fn position_exact_is_always_perfect() {
        let doc = UpperBoundDoc {
            tokens: tok("Tom met Tom"),
            entities: vec![
                UpperBoundEntity { surface: "Tom".into(), span: TokenSpan::single(0) },
                UpperBoundEntity { surface: "Tom".into(), span: TokenSpan::single(2) },
            ],
        };
        let report = string_match_upper_bound(&[doc], MatchStrategy::PositionExact);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn duplicate_surface_breaks_first_strategy() {
        let doc = UpperBoundDoc {
            tokens: tok("Tom met Tom"),
            entities: vec![
                UpperBoundEntity { surface: "Tom".into(), span: TokenSpan::single(0) },
                UpperBoundEntity { surface: "Tom".into(), span: TokenSpan::single(2) },
            ],
        };
        let report = string_match_upper_bound(&[doc], MatchStrategy::First);
        assert!(report.f1 < 1.0);
        assert_eq!(report.f1, 0.5);
    }

    #[test]
    fn nested_surfaces_favor_longer_first() {
        // "New York City is in New York": the shorter entity's first
        // occurrence sits inside the longer one.
        let doc = || UpperBoundDoc {
            tokens: tok("New York City is in New York"),
            entities: vec![
                UpperBoundEntity { surface: "New York City".into(), span: TokenSpan::new(0, 2) },
                UpperBoundEntity { surface: "New York".into(), span: TokenSpan::new(5, 6) },
            ],
        };
        let first = string_match_upper_bound(&[doc()], MatchStrategy::First);
        let longer = string_match_upper_bound(&[doc()], MatchStrategy::LongerFirst);
        assert!(longer.f1 > first.f1, "{} vs {}", longer.f1, first.f1);
        assert_eq!(longer.f1, 1.0);
        assert_eq!(first.f1, 0.5);
    }

    #[test]
    fn from_text_matches_manual_tokens() {
        let doc = UpperBoundDoc::from_text(
            "Ada met Ada.",
            vec![UpperBoundEntity { surface: "Ada".into(), span: TokenSpan::single(2) }],
        );
        assert_eq!(doc.tokens, vec!["Ada", "met", "Ada", "."]);
        let report = string_match_upper_bound(&[doc], MatchStrategy::First);
        assert!(report.f1 < 1.0);
    }
}
