//! Deterministic synthetic task generator.
//!
//! Produces [`TaskInstance`]s across the seven supported task shapes for
//! training, fuzzing, and oracle-backed tests. Gold answers are planted as
//! local lexical patterns — each label and slot role draws from its own small
//! word list — so a contextual scorer can fit them from content alone.
//!
//! Under [`OverlapPolicy::Disjoint`] no two gold tuples share any token
//! position (anchors included), which is the precondition for exact
//! decode-after-encode recovery. [`OverlapPolicy::AllowShared`] lets tuples
//! share anchors and whole spans, exercising the superset side of decoding.

use crate::data::{
    linearize, CharSpan, GoldSlot, SchemaLabel, TaskInstance, TextKind, TextPart, WordTokenizer,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible spec: {detail}")]
    SpecInfeasible { detail: String },
}

/// The seven supported task shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskShape {
    FlatNer,
    DiscontinuousNer,
    RelationTriplet,
    HyperRelation,
    EventExtraction,
    ExtractiveMrc,
    Classification,
}

impl TaskShape {
    pub const ALL: [TaskShape; 7] = [
        TaskShape::FlatNer,
        TaskShape::DiscontinuousNer,
        TaskShape::RelationTriplet,
        TaskShape::HyperRelation,
        TaskShape::EventExtraction,
        TaskShape::ExtractiveMrc,
        TaskShape::Classification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskShape::FlatNer => "flat_ner",
            TaskShape::DiscontinuousNer => "discontinuous_ner",
            TaskShape::RelationTriplet => "relation_triplet",
            TaskShape::HyperRelation => "hyper_relation",
            TaskShape::EventExtraction => "event_extraction",
            TaskShape::ExtractiveMrc => "extractive_mrc",
            TaskShape::Classification => "classification",
        }
    }

    pub fn parse(name: &str) -> Option<TaskShape> {
        TaskShape::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Expected slot arity to pass to the decoder, when the shape needs one.
    pub fn decode_arity(self) -> Option<usize> {
        match self {
            TaskShape::DiscontinuousNer => Some(2),
            _ => None,
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            TaskShape::FlatNer => "find every planted entity mention",
            TaskShape::DiscontinuousNer => "find the split entity pieces",
            TaskShape::RelationTriplet => "extract the planted relation triplets",
            TaskShape::HyperRelation => "extract the planted relation tuples",
            TaskShape::EventExtraction => "find triggers and their arguments",
            TaskShape::ExtractiveMrc => "which words follow the marker",
            TaskShape::Classification => "pick the class whose signal word appears",
        }
    }

    fn text_kind(self) -> TextKind {
        match self {
            TaskShape::ExtractiveMrc => TextKind::Plain,
            TaskShape::Classification => TextKind::Background,
            _ => TextKind::Linked,
        }
    }
}

/// Whether gold tuples may share token positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    Disjoint,
    AllowShared,
}

/// Parameters of one synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub shape: TaskShape,
    /// Filler vocabulary size; planted role words come on top of it.
    pub vocab_size: usize,
    /// Inclusive range of text-part token counts.
    pub text_len: (usize, usize),
    /// Schema size for shapes with a free label list. Event extraction
    /// derives its own label list from the tuple plan.
    pub labels_per_instance: usize,
    pub tuples_per_instance: usize,
    pub overlap: OverlapPolicy,
    /// Total slot count (label included) for hyper-relation tuples.
    pub hyper_arity: usize,
}

impl SynthSpec {
    pub fn new(shape: TaskShape, seed: u64) -> Self {
        SynthSpec {
            seed,
            shape,
            vocab_size: 30,
            text_len: (14, 22),
            labels_per_instance: if shape == TaskShape::Classification { 3 } else { 1 },
            tuples_per_instance: if shape == TaskShape::Classification { 1 } else { 2 },
            overlap: OverlapPolicy::AllowShared,
            hyper_arity: 4,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.vocab_size == 0 || self.tuples_per_instance == 0 {
            return Err(SynthError::SpecInfeasible {
                detail: "vocab_size and tuples_per_instance must be positive".into(),
            });
        }
        if self.text_len.0 > self.text_len.1 || self.text_len.0 == 0 {
            return Err(SynthError::SpecInfeasible {
                detail: format!("bad text length range {:?}", self.text_len),
            });
        }
        if self.shape == TaskShape::HyperRelation && self.hyper_arity < 2 {
            return Err(SynthError::SpecInfeasible {
                detail: "hyper_arity must be at least 2".into(),
            });
        }
        Ok(())
    }
}

/// Generate `n` instances deterministically from the spec's seed.
pub fn generate(spec: &SynthSpec, n: usize) -> Result<Vec<TaskInstance>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        out.push(generate_instance(spec, index, &mut rng)?);
    }
    Ok(out)
}

/// One planted interval: a run of role words for a given label.
struct PlantedPiece {
    width: usize,
    label: usize,
    role: &'static str,
    /// Filled during placement: first text-token index of the piece.
    start: usize,
}

/// Plan of one tuple before placement. `slots` lists gold slots with text
/// slots referring to piece indices.
#[derive(Clone)]
enum PlanSlot {
    Label(usize),
    Pieces(Vec<usize>),
    /// Single token inside a piece, addressed by its offset; used by shared
    /// corpora to split an existing two-token piece into two slots.
    SubPiece { piece: usize, offset: usize },
}

struct TuplePlan {
    slots: Vec<PlanSlot>,
}

fn generate_instance(
    spec: &SynthSpec,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TaskInstance, SynthError> {
    let text_len = rng.random_range(spec.text_len.0..=spec.text_len.1);
    let shared = spec.overlap == OverlapPolicy::AllowShared;

    let mut labels: Vec<SchemaLabel> = Vec::new();
    let mut pieces: Vec<PlantedPiece> = Vec::new();
    let mut plans: Vec<TuplePlan> = Vec::new();

    let mut piece = |pieces: &mut Vec<PlantedPiece>, width, label, role| -> usize {
        pieces.push(PlantedPiece { width, label, role, start: 0 });
        pieces.len() - 1
    };

    match spec.shape {
        TaskShape::FlatNer | TaskShape::DiscontinuousNer => {
            for j in 0..spec.labels_per_instance {
                labels.push(SchemaLabel::mention(&format!("type{j}")));
            }
            for t in 0..spec.tuples_per_instance {
                let label = pick_label(spec, t, rng)?;
                if spec.shape == TaskShape::FlatNer {
                    let w = rng.random_range(1..=2);
                    let p = piece(&mut pieces, w, label, "e");
                    plans.push(TuplePlan {
                        slots: vec![PlanSlot::Label(label), PlanSlot::Pieces(vec![p])],
                    });
                } else {
                    let p1 = piece(&mut pieces, rng.random_range(1..=2), label, "p");
                    let p2 = piece(&mut pieces, rng.random_range(1..=2), label, "q");
                    plans.push(TuplePlan {
                        slots: vec![PlanSlot::Label(label), PlanSlot::Pieces(vec![p1, p2])],
                    });
                }
            }
        }
        TaskShape::RelationTriplet => {
            for j in 0..spec.labels_per_instance {
                labels.push(SchemaLabel::relation(&format!("rel{j}")));
            }
            for t in 0..spec.tuples_per_instance {
                let label = pick_label(spec, t, rng)?;
                let head = piece(&mut pieces, rng.random_range(1..=2), label, "h");
                let tail = piece(&mut pieces, rng.random_range(1..=2), label, "t");
                plans.push(TuplePlan {
                    slots: vec![
                        PlanSlot::Label(label),
                        PlanSlot::Pieces(vec![head]),
                        PlanSlot::Pieces(vec![tail]),
                    ],
                });
            }
        }
        TaskShape::HyperRelation => {
            for j in 0..spec.labels_per_instance {
                labels.push(SchemaLabel::relation(&format!("rel{j}")));
            }
            for t in 0..spec.tuples_per_instance {
                let label = pick_label(spec, t, rng)?;
                let mut slots = vec![PlanSlot::Label(label)];
                for s in 0..spec.hyper_arity - 1 {
                    let role: &'static str = ["a", "b", "c", "d", "f", "g"][s % 6];
                    let p = piece(&mut pieces, rng.random_range(1..=2), label, role);
                    slots.push(PlanSlot::Pieces(vec![p]));
                }
                plans.push(TuplePlan { slots });
            }
        }
        TaskShape::EventExtraction => {
            // Trigger tuples are (event label, trigger span); argument tuples
            // are (event label, role label, argument span). Disjoint corpora
            // give every tuple its own labels; shared corpora reuse the event
            // label across a trigger/argument pair.
            for t in 0..spec.tuples_per_instance {
                if t % 2 == 0 {
                    let event = labels.len();
                    labels.push(SchemaLabel::mention(&format!("event{t}")));
                    let trg = piece(&mut pieces, 1, event, "g");
                    plans.push(TuplePlan {
                        slots: vec![PlanSlot::Label(event), PlanSlot::Pieces(vec![trg])],
                    });
                } else {
                    let event = if shared {
                        // Reuse the previous trigger tuple's event label.
                        match plans.last().and_then(|p| match p.slots.first() {
                            Some(PlanSlot::Label(e)) => Some(*e),
                            _ => None,
                        }) {
                            Some(e) => e,
                            None => {
                                labels.push(SchemaLabel::mention(&format!("event{t}")));
                                labels.len() - 1
                            }
                        }
                    } else {
                        labels.push(SchemaLabel::mention(&format!("event{t}")));
                        labels.len() - 1
                    };
                    let role = labels.len();
                    labels.push(SchemaLabel::relation(&format!("role{t}")));
                    let arg = piece(&mut pieces, rng.random_range(1..=2), role, "r");
                    plans.push(TuplePlan {
                        slots: vec![
                            PlanSlot::Label(event),
                            PlanSlot::Label(role),
                            PlanSlot::Pieces(vec![arg]),
                        ],
                    });
                }
            }
        }
        TaskShape::ExtractiveMrc => {
            // No schema labels; each answer follows its own marker word.
            for _ in 0..spec.tuples_per_instance {
                let marker = piece(&mut pieces, 1, 0, "m");
                let answer = piece(&mut pieces, rng.random_range(1..=2), 0, "w");
                // The marker is planted but not part of the gold span.
                plans.push(TuplePlan { slots: vec![PlanSlot::Pieces(vec![answer])] });
                let _ = marker;
            }
        }
        TaskShape::Classification => {
            for j in 0..spec.labels_per_instance {
                labels.push(SchemaLabel::class(&format!("class{j}")));
            }
            if spec.tuples_per_instance > spec.labels_per_instance {
                return Err(SynthError::SpecInfeasible {
                    detail: "classification needs at least one label per tuple".into(),
                });
            }
            // Distinct classes under either policy, so gold has no duplicate tuples.
            let mut order: Vec<usize> = (0..spec.labels_per_instance).collect();
            if shared {
                order.shuffle(rng);
            }
            for t in 0..spec.tuples_per_instance {
                let class = order[t];
                let _sig = piece(&mut pieces, 1, class, "s");
                plans.push(TuplePlan { slots: vec![PlanSlot::Label(class)] });
            }
        }
    }

    place_pieces(&mut pieces, text_len, rng)?;
    if shared {
        apply_sharing(spec, &mut plans, &pieces, rng);
    }

    // Compose text tokens: filler everywhere, role words on planted pieces.
    let mut tokens: Vec<String> = (0..text_len)
        .map(|_| format!("w{}", rng.random_range(0..spec.vocab_size)))
        .collect();
    for p in &pieces {
        for k in 0..p.width {
            let role_pos = if p.width == 1 {
                "s".to_string()
            } else if k == 0 {
                "a".to_string()
            } else {
                "b".to_string()
            };
            tokens[p.start + k] =
                format!("l{}{}{}{}", p.label, p.role, role_pos, rng.random_range(0..3));
        }
    }

    // Char offsets of each token in the space-joined text.
    let mut offsets = Vec::with_capacity(tokens.len());
    let mut cursor = 0;
    for tok in &tokens {
        let len = tok.chars().count();
        offsets.push(CharSpan::new(cursor, cursor + len));
        cursor += len + 1;
    }
    let text = tokens.join(" ");

    let piece_span = |i: usize| -> CharSpan {
        let p = &pieces[i];
        CharSpan::new(offsets[p.start].start, offsets[p.start + p.width - 1].end)
    };

    let mut gold: Vec<Vec<GoldSlot>> = plans
        .iter()
        .map(|plan| {
            plan.slots
                .iter()
                .map(|slot| match slot {
                    PlanSlot::Label(i) => GoldSlot::Label(*i),
                    PlanSlot::Pieces(ps) => {
                        GoldSlot::Span(ps.iter().map(|&i| piece_span(i)).collect())
                    }
                    PlanSlot::SubPiece { piece, offset } => {
                        let tok = pieces[*piece].start + offset;
                        GoldSlot::Span(vec![offsets[tok]])
                    }
                })
                .collect()
        })
        .collect();
    dedup_gold(&mut gold);

    let instance = TaskInstance {
        id: format!("{}-{}-{:05}", spec.shape.name(), spec.seed, index),
        instruction: spec.shape.instruction().to_string(),
        labels,
        text: TextPart { kind: spec.shape.text_kind(), text },
        gold,
        decode_arity: spec.shape.decode_arity(),
    };
    linearize(&instance, &WordTokenizer::default()).map_err(|e| SynthError::SpecInfeasible {
        detail: format!("instance does not linearize: {e}"),
    })?;
    Ok(instance)
}

fn pick_label(spec: &SynthSpec, tuple: usize, rng: &mut ChaCha8Rng) -> Result<usize, SynthError> {
    match spec.overlap {
        OverlapPolicy::Disjoint => {
            if tuple >= spec.labels_per_instance {
                Err(SynthError::SpecInfeasible {
                    detail: format!(
                        "disjoint corpora need one label per tuple: {} tuples, {} labels",
                        spec.tuples_per_instance, spec.labels_per_instance
                    ),
                })
            } else {
                Ok(tuple)
            }
        }
        OverlapPolicy::AllowShared => Ok(rng.random_range(0..spec.labels_per_instance)),
    }
}

/// Assign non-overlapping windows (separated by at least one filler token)
/// to all pieces, distributing the slack randomly.
fn place_pieces(
    pieces: &mut [PlantedPiece],
    text_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), SynthError> {
    if pieces.is_empty() {
        return Ok(());
    }
    let widths: usize = pieces.iter().map(|p| p.width).sum();
    let min_needed = widths + pieces.len() - 1;
    if min_needed > text_len {
        return Err(SynthError::SpecInfeasible {
            detail: format!("{min_needed} tokens of planted content exceed text length {text_len}"),
        });
    }
    let mut slack = text_len - min_needed;
    let mut cursor = 0;
    let count = pieces.len();
    for (i, p) in pieces.iter_mut().enumerate() {
        let extra = if slack > 0 { rng.random_range(0..=slack) } else { 0 };
        slack -= extra;
        cursor += extra;
        p.start = cursor;
        cursor += p.width;
        if i + 1 < count {
            cursor += 1; // minimum gap
        }
    }
    Ok(())
}

/// Sharing for non-disjoint relation-style corpora: occasionally a tuple
/// reuses the previous tuple's head span, or reads a two-token head as two
/// single-token slots. Both put genuinely interfering tuples into one
/// instance — shared positions, and position pairs carrying a consecutive
/// edge in one tuple and a jump edge in another.
fn apply_sharing(
    spec: &SynthSpec,
    plans: &mut [TuplePlan],
    pieces: &[PlantedPiece],
    rng: &mut ChaCha8Rng,
) {
    if !matches!(spec.shape, TaskShape::RelationTriplet | TaskShape::HyperRelation) {
        return;
    }
    for j in 1..plans.len() {
        let roll: f64 = rng.random();
        if roll < 0.3 {
            if let PlanSlot::Pieces(prev) = plans[j - 1].slots[1].clone() {
                plans[j].slots[1] = PlanSlot::Pieces(prev);
            }
        } else if roll < 0.45 {
            if let PlanSlot::Pieces(prev) = &plans[j - 1].slots[1] {
                if let [p] = prev[..] {
                    if pieces[p].width == 2 {
                        plans[j].slots[1] = PlanSlot::SubPiece { piece: p, offset: 0 };
                        plans[j].slots[2] = PlanSlot::SubPiece { piece: p, offset: 1 };
                    }
                }
            }
        }
    }
}

fn dedup_gold(gold: &mut Vec<Vec<GoldSlot>>) {
    let mut seen = std::collections::BTreeSet::new();
    gold.retain(|tuple| seen.insert(format!("{tuple:?}")));
}

/// Hand-built fixtures reproducing the drawn worked examples: the positional
/// relation example, discontinuous-entity and shared-entity graphs, and four
/// small cross-task cases (multi-choice classification, extractive reading,
/// entity mentions, a relation pair).
pub fn fixture_suite() -> Vec<TaskInstance> {
    let span_of = |text: &str, needle: &str| -> CharSpan {
        let start = text
            .find(needle)
            .unwrap_or_else(|| panic!("fixture text must contain {needle:?}"));
        let chars_before = text[..start].chars().count();
        CharSpan::new(chars_before, chars_before + needle.chars().count())
    };

    let mut fixtures = Vec::new();

    // Relation instance whose linearization puts the relation anchor at
    // position 9 and the entity words at 16, 17 and 22.
    let text = "We know that Jerry Smith is a friend of Tom.";
    fixtures.push(TaskInstance {
        id: "worked-re".into(),
        instruction: "Please extract the entity relationship triplet from text".into(),
        labels: vec![SchemaLabel::relation("friend of")],
        text: TextPart::linked(text),
        gold: vec![vec![
            GoldSlot::Label(0),
            GoldSlot::Span(vec![span_of(text, "Jerry Smith")]),
            GoldSlot::Span(vec![span_of(text, "Tom")]),
        ]],
        decode_arity: None,
    });

    // Discontinuous entity: "muscle pain" plus the discontinuous
    // "muscle ... fatigue", sharing the token "muscle".
    let text = "She had muscle pain and fatigue all week.";
    fixtures.push(TaskInstance {
        id: "fig-discontinuous-ner".into(),
        instruction: "find adverse drug reactions".into(),
        labels: vec![SchemaLabel::mention("adverse drug reaction")],
        text: TextPart::linked(text),
        gold: vec![
            vec![GoldSlot::Label(0), GoldSlot::Span(vec![span_of(text, "muscle pain")])],
            vec![
                GoldSlot::Label(0),
                GoldSlot::Span(vec![span_of(text, "muscle"), span_of(text, "fatigue")]),
            ],
        ],
        decode_arity: Some(2),
    });

    // Two relations sharing an entity.
    let text = "Ann leads the lab and mentors Bob.";
    fixtures.push(TaskInstance {
        id: "fig-re-shared".into(),
        instruction: "extract both planted relations".into(),
        labels: vec![SchemaLabel::relation("leads"), SchemaLabel::relation("mentors")],
        text: TextPart::linked(text),
        gold: vec![
            vec![
                GoldSlot::Label(0),
                GoldSlot::Span(vec![span_of(text, "Ann")]),
                GoldSlot::Span(vec![span_of(text, "lab")]),
            ],
            vec![
                GoldSlot::Label(1),
                GoldSlot::Span(vec![span_of(text, "Ann")]),
                GoldSlot::Span(vec![span_of(text, "Bob")]),
            ],
        ],
        decode_arity: None,
    });

    // Multi-choice classification.
    fixtures.push(TaskInstance {
        id: "case-classification".into(),
        instruction: "Mirror Mirror on the wall, who's the fairest of them all?".into(),
        labels: vec![SchemaLabel::class("Evil Queen"), SchemaLabel::class("Snow White")],
        text: TextPart::background(""),
        gold: vec![vec![GoldSlot::Label(1)]],
        decode_arity: None,
    });

    // Extractive reading comprehension.
    let text = "Evil Queen is jealous of Snow White's beauty.";
    fixtures.push(TaskInstance {
        id: "case-mrc".into(),
        instruction: "Mirror Mirror on the wall, who's the fairest of them all?".into(),
        labels: vec![],
        text: TextPart::plain(text),
        gold: vec![vec![GoldSlot::Span(vec![span_of(text, "Snow White")])]],
        decode_arity: None,
    });

    // Entity mentions.
    let text = "LLaMA and OPT are open-sourced large language models.";
    fixtures.push(TaskInstance {
        id: "case-ner".into(),
        instruction: "Mirror Mirror, please help me extract all the model names.".into(),
        labels: vec![SchemaLabel::mention("model name")],
        text: TextPart::linked(text),
        gold: vec![
            vec![GoldSlot::Label(0), GoldSlot::Span(vec![span_of(text, "LLaMA")])],
            vec![GoldSlot::Label(0), GoldSlot::Span(vec![span_of(text, "OPT")])],
        ],
        decode_arity: None,
    });

    // Relation extraction with the head entity appearing after the tail in text.
    let text = "The drama surrounding the high-profile divorce between Hollywood actors \
                Johnny Depp and Amber Heard appears to be over as the couple reportedly \
                reached an amicable settlement.";
    fixtures.push(TaskInstance {
        id: "case-re".into(),
        instruction: "Mirror Mirror, please help me extract the entity relationship triplet."
            .into(),
        labels: vec![SchemaLabel::relation("break up")],
        text: TextPart::linked(text),
        gold: vec![vec![
            GoldSlot::Label(0),
            GoldSlot::Span(vec![span_of(text, "Amber Heard")]),
            GoldSlot::Span(vec![span_of(text, "Johnny Depp")]),
        ]],
        decode_arity: None,
    });

    fixtures
}
