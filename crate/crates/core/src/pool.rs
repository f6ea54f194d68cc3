//! Block-compositional caption schema.
//!
//! A caption is five sentences in fixed order: Decision, Scene, Method,
//! Evidence, Conclusion. The decision sentence is determined by the label;
//! scene and method sentences are shared by both labels; evidence and
//! conclusion sentences are branched per label. With five variants at each
//! non-decision position the caption space holds `1 * 5^4 * 2 = 1250`
//! members.
//!
//! Every pool sentence is also a *card*: an atomic rationale unit whose
//! invocation in a model output can be detected and scored. A label-branched
//! slot (evidence or conclusion variant `i`) is one card with a real and a
//! fake surface form, so a valid pool always carries exactly 20 pool cards.
//! The card map may add extra cards (or extra surface forms of pool cards)
//! for fragments seen in free-form outputs; `...` inside such a fragment
//! matches any span.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::text::normalize;

/// Variants per non-decision position.
pub const VARIANTS: usize = 5;

/// Templates per label: `5^4`.
pub const TEMPLATES_PER_LABEL: usize = VARIANTS * VARIANTS * VARIANTS * VARIANTS;

const DEFAULT_POOL: &str = include_str!("../data/default_pool.json");

/// Caption-space size for a pool with `k` variants at each of the four
/// non-decision positions: `1 * k^4 * 2`.
pub fn caption_space_cardinality(k: usize) -> usize {
    k.pow(4) * Label::ALL.len()
}

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("cannot read pool file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed pool document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{position} has {found} variants, expected {expected}")]
    WrongCardinality {
        position: String,
        found: usize,
        expected: usize,
    },
    #[error("empty sentence at {position}")]
    EmptyVariant { position: String },
    #[error("duplicate pool sentence after normalisation: {sentence:?}")]
    DuplicateVariant { sentence: String },
    #[error("decision sentence for `{label}` is missing or is not {expected:?}")]
    MissingDecisionSentence { label: Label, expected: String },
    #[error("{position} variant {variant} has different card names for its real ({real}) and fake ({fake}) forms")]
    ConflictingCardNames {
        position: Position,
        variant: usize,
        real: String,
        fake: String,
    },
    #[error("card name {0:?} is assigned to more than one pool slot")]
    DuplicateCardName(String),
    #[error("two templates compose to the same normalised caption: {0:?}")]
    AmbiguousComposition(String),
    #[error("template index {index} out of range at {position}")]
    IndexOutOfRange { position: Position, index: u8 },
}

/// Caption block position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Decision,
    Scene,
    Method,
    Evidence,
    Conclusion,
}

impl Position {
    pub fn key(self) -> &'static str {
        match self {
            Position::Decision => "p1",
            Position::Scene => "p2",
            Position::Method => "p3",
            Position::Evidence => "p4",
            Position::Conclusion => "p5",
        }
    }

    pub fn is_label_branched(self) -> bool {
        matches!(self, Position::Evidence | Position::Conclusion)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One point of the caption space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateId {
    pub label: Label,
    pub scene: u8,
    pub method: u8,
    pub evidence: u8,
    pub conclusion: u8,
}

impl TemplateId {
    pub fn new(label: Label, scene: u8, method: u8, evidence: u8, conclusion: u8) -> Self {
        TemplateId {
            label,
            scene,
            method,
            evidence,
            conclusion,
        }
    }

    /// Mixed-radix index in `0..625` within the label.
    pub fn ordinal(&self) -> usize {
        let v = VARIANTS;
        ((self.scene as usize * v + self.method as usize) * v + self.evidence as usize) * v + self.conclusion as usize
    }

    pub fn from_ordinal(label: Label, ordinal: usize) -> Self {
        assert!(ordinal < TEMPLATES_PER_LABEL, "template ordinal {ordinal} out of range");
        let v = VARIANTS;
        TemplateId {
            label,
            scene: (ordinal / (v * v * v)) as u8,
            method: (ordinal / (v * v) % v) as u8,
            evidence: (ordinal / v % v) as u8,
            conclusion: (ordinal % v) as u8,
        }
    }

    /// All 625 templates of one label in ordinal order.
    pub fn all_for(label: Label) -> impl Iterator<Item = TemplateId> {
        (0..TEMPLATES_PER_LABEL).map(move |o| TemplateId::from_ordinal(label, o))
    }

    /// All 1,250 templates, real first.
    pub fn all() -> impl Iterator<Item = TemplateId> {
        Label::ALL.into_iter().flat_map(TemplateId::all_for)
    }

    fn check(&self) -> Result<(), PoolError> {
        for (position, index) in [
            (Position::Scene, self.scene),
            (Position::Method, self.method),
            (Position::Evidence, self.evidence),
            (Position::Conclusion, self.conclusion),
        ] {
            if index as usize >= VARIANTS {
                return Err(PoolError::IndexOutOfRange { position, index });
            }
        }
        Ok(())
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}{}{}{}",
            self.label, self.scene, self.method, self.evidence, self.conclusion
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub template: TemplateId,
    pub text: String,
}

/// Pool slot a card was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub position: Position,
    pub variant: u8,
}

#[derive(Debug, Clone)]
struct Surface {
    text: String,
    segments: Vec<String>,
}

impl Surface {
    fn literal(text: &str) -> Self {
        Surface {
            text: text.to_string(),
            segments: vec![normalize(text)],
        }
    }

    fn fragment(text: &str) -> Self {
        let segments = text
            .split("...")
            .flat_map(|s| s.split('…'))
            .map(normalize)
            .filter(|s| !s.is_empty())
            .collect();
        Surface {
            text: text.to_string(),
            segments,
        }
    }

    /// Byte offset of the earliest ordered match of all segments.
    fn find_in(&self, normalized: &str) -> Option<usize> {
        let (first, rest) = self.segments.split_first()?;
        // Leftmost placement of each segment is optimal for an ordered match.
        let start = normalized.find(first.as_str())?;
        let mut cursor = start + first.len();
        for seg in rest {
            cursor += normalized[cursor..].find(seg.as_str())? + seg.len();
        }
        Some(start)
    }
}

/// An atomic rationale unit with one or more surface forms.
#[derive(Debug, Clone)]
pub struct Card {
    name: String,
    slot: Option<Slot>,
    surfaces: Vec<Surface>,
}

impl Card {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// `None` for fragment cards that are not pool sentences.
    pub fn slot(&self) -> Option<Slot> {
        self.slot
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.surfaces.iter().map(|s| s.text.as_str())
    }

    /// Earliest byte offset at which any surface form occurs in an already
    /// normalised output.
    pub fn find_in(&self, normalized_output: &str) -> Option<usize> {
        self.surfaces.iter().filter_map(|s| s.find_in(normalized_output)).min()
    }
}

#[derive(Debug, Deserialize)]
struct DecisionDoc {
    real: Option<String>,
    fake: Option<String>,
}

#[derive(Debug, Deserialize)]
struct BranchedDoc {
    real: Vec<String>,
    fake: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct PoolDocument {
    decision: DecisionDoc,
    p2: Vec<String>,
    p3: Vec<String>,
    p4: BranchedDoc,
    p5: BranchedDoc,
    #[serde(default)]
    cards: BTreeMap<String, String>,
}

/// Validated macro pool.
#[derive(Debug, Clone)]
pub struct MacroPool {
    decision: [String; 2],
    scene: Vec<String>,
    method: Vec<String>,
    evidence: [Vec<String>; 2],
    conclusion: [Vec<String>; 2],
    cards: Vec<Card>,
    index: HashMap<String, TemplateId>,
}

fn label_slot(label: Label) -> usize {
    match label {
        Label::Real => 0,
        Label::Fake => 1,
    }
}

/// The decision sentence the strict parser recognises for `label`.
pub fn decision_sentence(label: Label) -> String {
    format!("This is a {label} image.")
}

impl MacroPool {
    /// The pool shipped with the crate.
    pub fn default_pool() -> MacroPool {
        MacroPool::from_json(DEFAULT_POOL).expect("bundled pool is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MacroPool, PoolError> {
        let text = std::fs::read_to_string(path)?;
        MacroPool::from_json(&text)
    }

    pub fn from_json(document: &str) -> Result<MacroPool, PoolError> {
        let doc: PoolDocument = serde_json::from_str(document)?;
        MacroPool::from_document(doc)
    }

    fn from_document(doc: PoolDocument) -> Result<MacroPool, PoolError> {
        let decision = [
            check_decision(Label::Real, doc.decision.real)?,
            check_decision(Label::Fake, doc.decision.fake)?,
        ];
        check_len("p2", &doc.p2)?;
        check_len("p3", &doc.p3)?;
        check_len("p4.real", &doc.p4.real)?;
        check_len("p4.fake", &doc.p4.fake)?;
        check_len("p5.real", &doc.p5.real)?;
        check_len("p5.fake", &doc.p5.fake)?;

        let mut seen = HashSet::new();
        let all = decision
            .iter()
            .chain(&doc.p2)
            .chain(&doc.p3)
            .chain(&doc.p4.real)
            .chain(&doc.p4.fake)
            .chain(&doc.p5.real)
            .chain(&doc.p5.fake);
        for sentence in all {
            if !seen.insert(normalize(sentence)) {
                return Err(PoolError::DuplicateVariant {
                    sentence: sentence.clone(),
                });
            }
        }

        let mut pool = MacroPool {
            decision,
            scene: doc.p2,
            method: doc.p3,
            evidence: [doc.p4.real, doc.p4.fake],
            conclusion: [doc.p5.real, doc.p5.fake],
            cards: Vec::new(),
            index: HashMap::with_capacity(caption_space_cardinality(VARIANTS)),
        };
        pool.cards = pool.build_cards(&doc.cards)?;

        for template in TemplateId::all() {
            let key = normalize(&pool.compose_unchecked(&template));
            if pool.index.insert(key.clone(), template).is_some() {
                return Err(PoolError::AmbiguousComposition(key));
            }
        }
        Ok(pool)
    }

    fn build_cards(&self, names: &BTreeMap<String, String>) -> Result<Vec<Card>, PoolError> {
        let by_sentence: HashMap<String, &String> = names.iter().map(|(s, n)| (normalize(s), n)).collect();
        let lookup = |s: &str| by_sentence.get(&normalize(s)).map(|n| n.to_string());

        let mut cards: Vec<Card> = Vec::new();
        let mut slot_names = HashSet::new();
        for position in [
            Position::Scene,
            Position::Method,
            Position::Evidence,
            Position::Conclusion,
        ] {
            for variant in 0..VARIANTS {
                let forms: Vec<&String> = if position.is_label_branched() {
                    Label::ALL.iter().map(|&l| &self.branch(position, l)[variant]).collect()
                } else {
                    vec![&self.shared(position)[variant]]
                };
                let default = format!("{}_{}", position.key().to_uppercase(), variant + 1);
                let name = match forms.as_slice() {
                    [one] => lookup(one).unwrap_or(default),
                    [real, fake] => match (lookup(real), lookup(fake)) {
                        (Some(r), Some(f)) if r != f => {
                            return Err(PoolError::ConflictingCardNames {
                                position,
                                variant,
                                real: r,
                                fake: f,
                            })
                        }
                        (Some(n), _) | (None, Some(n)) => n,
                        (None, None) => default,
                    },
                    _ => unreachable!(),
                };
                if !slot_names.insert(name.clone()) {
                    return Err(PoolError::DuplicateCardName(name));
                }
                cards.push(Card {
                    name,
                    slot: Some(Slot {
                        position,
                        variant: variant as u8,
                    }),
                    surfaces: forms.iter().map(|s| Surface::literal(s)).collect(),
                });
            }
        }

        let pool_sentences: HashSet<String> = self.sentences().map(|s| normalize(s)).collect();
        for (surface, name) in names {
            if pool_sentences.contains(&normalize(surface)) {
                continue;
            }
            let fragment = Surface::fragment(surface);
            if fragment.segments.is_empty() {
                continue;
            }
            match cards.iter_mut().find(|c| &c.name == name) {
                Some(card) => card.surfaces.push(fragment),
                None => cards.push(Card {
                    name: name.clone(),
                    slot: None,
                    surfaces: vec![fragment],
                }),
            }
        }
        Ok(cards)
    }

    fn shared(&self, position: Position) -> &[String] {
        match position {
            Position::Scene => &self.scene,
            Position::Method => &self.method,
            _ => unreachable!("{position} is label-branched"),
        }
    }

    fn branch(&self, position: Position, label: Label) -> &[String] {
        match position {
            Position::Evidence => &self.evidence[label_slot(label)],
            Position::Conclusion => &self.conclusion[label_slot(label)],
            _ => unreachable!("{position} is label-shared"),
        }
    }

    fn sentences(&self) -> impl Iterator<Item = &String> {
        self.scene
            .iter()
            .chain(&self.method)
            .chain(self.evidence.iter().flatten())
            .chain(self.conclusion.iter().flatten())
    }

    pub fn decision(&self, label: Label) -> &str {
        &self.decision[label_slot(label)]
    }

    /// Variant sentence at a position; label is ignored for shared positions
    /// and for the decision block it selects the decision sentence.
    pub fn variant(&self, position: Position, label: Label, index: usize) -> Option<&str> {
        match position {
            Position::Decision => (index == 0).then(|| self.decision(label)),
            Position::Scene | Position::Method => self.shared(position).get(index).map(String::as_str),
            Position::Evidence | Position::Conclusion => self.branch(position, label).get(index).map(String::as_str),
        }
    }

    /// All cards: the 20 pool cards first, then fragment cards.
    pub fn cards(&self) -> &[Card] {
        &self.cards
    }

    /// Number of pool-slot cards (always 20 for a valid pool).
    pub fn pool_card_count(&self) -> usize {
        self.cards.iter().filter(|c| c.slot.is_some()).count()
    }

    pub fn card(&self, name: &str) -> Option<&Card> {
        self.cards.iter().find(|c| c.name == name)
    }

    /// Names of the four cards a template is composed from.
    pub fn template_cards(&self, template: &TemplateId) -> [&str; 4] {
        let find = |position: Position, variant: u8| {
            self.cards
                .iter()
                .find(|c| c.slot == Some(Slot { position, variant }))
                .map(|c| c.name.as_str())
                .expect("every slot has a card")
        };
        [
            find(Position::Scene, template.scene),
            find(Position::Method, template.method),
            find(Position::Evidence, template.evidence),
            find(Position::Conclusion, template.conclusion),
        ]
    }

    /// Number of distinct captions the pool induces.
    pub fn caption_space_size(&self) -> usize {
        self.index.len()
    }

    pub fn compose(&self, template: TemplateId) -> Result<Caption, PoolError> {
        template.check()?;
        Ok(Caption {
            template,
            text: self.compose_unchecked(&template),
        })
    }

    fn compose_unchecked(&self, t: &TemplateId) -> String {
        let l = label_slot(t.label);
        [
            self.decision[l].as_str(),
            &self.scene[t.scene as usize],
            &self.method[t.method as usize],
            &self.evidence[l][t.evidence as usize],
            &self.conclusion[l][t.conclusion as usize],
        ]
        .join(" ")
    }

    /// Balanced caption assignment: per label, the 625 templates are put in a
    /// seed-shuffled order and dealt round-robin, so every template is used
    /// `floor(n/625)` or `ceil(n/625)` times. Real assignments come first.
    pub fn assign_captions(&self, n_per_label: usize, seed: u64) -> Vec<TemplateId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n_per_label * 2);
        for label in Label::ALL {
            let mut order: Vec<TemplateId> = TemplateId::all_for(label).collect();
            order.shuffle(&mut rng);
            out.extend((0..n_per_label).map(|i| order[i % TEMPLATES_PER_LABEL]));
        }
        out
    }

    /// The template whose composed caption equals `output` after
    /// normalisation, or `None`.
    pub fn canonical_template_of(&self, output: &str) -> Option<TemplateId> {
        self.index.get(&normalize(output)).copied()
    }

    /// Same as [`canonical_template_of`](Self::canonical_template_of) for an
    /// output that is already normalised.
    pub fn template_of_normalized(&self, normalized: &str) -> Option<TemplateId> {
        self.index.get(normalized).copied()
    }

    /// True if the normalised output is exactly one of the decision sentences.
    pub fn is_bare_decision(&self, output: &str) -> bool {
        let n = normalize(output);
        self.decision.iter().any(|d| normalize(d) == n)
    }
}

fn check_decision(label: Label, sentence: Option<String>) -> Result<String, PoolError> {
    let expected = decision_sentence(label);
    match sentence {
        Some(s) if s == expected => Ok(s),
        _ => Err(PoolError::MissingDecisionSentence { label, expected }),
    }
}

fn check_len(position: &str, variants: &[String]) -> Result<(), PoolError> {
    if variants.len() != VARIANTS {
        return Err(PoolError::WrongCardinality {
            position: position.to_string(),
            found: variants.len(),
            expected: VARIANTS,
        });
    }
    if variants.iter().any(|s| s.trim().is_empty()) {
        return Err(PoolError::EmptyVariant {
            position: position.to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn default_doc() -> Value {
        serde_json::from_str(DEFAULT_POOL).unwrap()
    }

    fn load(doc: &Value) -> Result<MacroPool, PoolError> {
        MacroPool::from_json(&doc.to_string())
    }

    #[test]
    fn default_pool_has_twenty_pool_cards() {
        let pool = MacroPool::default_pool();
        assert_eq!(pool.pool_card_count(), 20);
        assert_eq!(pool.caption_space_size(), 1250);
    }

    #[test]
    fn four_scene_variants_is_wrong_cardinality() {
        let mut doc = default_doc();
        doc["p2"].as_array_mut().unwrap().pop();
        assert!(matches!(load(&doc), Err(PoolError::WrongCardinality { found: 4, .. })));
    }

    #[test]
    fn trailing_whitespace_duplicate_is_rejected() {
        let mut doc = default_doc();
        let first = doc["p4"]["real"][0].as_str().unwrap().to_string();
        doc["p4"]["real"][1] = Value::String(format!("{first}   "));
        assert!(matches!(load(&doc), Err(PoolError::DuplicateVariant { .. })));
    }

    #[test]
    fn decision_sentence_must_match_parser_prefix() {
        let mut doc = default_doc();
        doc["decision"]["fake"] = Value::String("This image is fake.".into());
        assert!(matches!(
            load(&doc),
            Err(PoolError::MissingDecisionSentence { label: Label::Fake, .. })
        ));
        doc["decision"].as_object_mut().unwrap().remove("fake");
        assert!(matches!(load(&doc), Err(PoolError::MissingDecisionSentence { .. })));
    }

    #[test]
    fn empty_sentence_is_rejected() {
        let mut doc = default_doc();
        doc["p3"][2] = Value::String("  ".into());
        assert!(matches!(load(&doc), Err(PoolError::EmptyVariant { .. })));
    }

    #[test]
    fn conflicting_branch_card_names() {
        let mut doc = default_doc();
        let fake = doc["p4"]["fake"][0].as_str().unwrap().to_string();
        doc["cards"][fake] = Value::String("SOMETHING_ELSE".into());
        assert!(matches!(load(&doc), Err(PoolError::ConflictingCardNames { .. })));
    }

    #[test]
    fn missing_card_names_fall_back_to_slot_names() {
        let mut doc = default_doc();
        doc.as_object_mut().unwrap().remove("cards");
        let pool = load(&doc).unwrap();
        assert_eq!(pool.pool_card_count(), 20);
        assert!(pool.card("P2_1").is_some());
        assert!(pool.card("P5_5").is_some());
    }

    #[test]
    fn fake_zero_template_starts_with_decision() {
        let pool = MacroPool::default_pool();
        let c = pool.compose(TemplateId::new(Label::Fake, 0, 0, 0, 0)).unwrap();
        let expected_start = format!(
            "This is a fake image. {}",
            pool.variant(Position::Scene, Label::Fake, 0).unwrap()
        );
        assert!(c.text.starts_with(&expected_start));
    }

    #[test]
    fn out_of_range_index() {
        let pool = MacroPool::default_pool();
        let err = pool.compose(TemplateId::new(Label::Real, 0, 5, 0, 0)).unwrap_err();
        assert!(matches!(
            err,
            PoolError::IndexOutOfRange {
                position: Position::Method,
                index: 5
            }
        ));
    }

    #[test]
    fn ordinal_round_trip() {
        for t in TemplateId::all() {
            assert_eq!(TemplateId::from_ordinal(t.label, t.ordinal()), t);
        }
    }

    #[test]
    fn cardinality_formula() {
        assert_eq!(caption_space_cardinality(5), 1250);
        assert_eq!(caption_space_cardinality(1), 2);
        assert_eq!(caption_space_cardinality(3), 162);
    }

    #[test]
    fn bare_decision_only() {
        let pool = MacroPool::default_pool();
        assert_eq!(pool.canonical_template_of("This is a fake image."), None);
        assert!(pool.is_bare_decision("  this is a FAKE image. "));
        assert!(!pool.is_bare_decision("This is a fake image. Extra."));
    }

    #[test]
    fn fragment_card_matches_in_order() {
        let pool = MacroPool::default_pool();
        let skin = pool.card("REAL_skin").unwrap();
        assert!(skin.slot().is_none());
        assert_eq!(
            skin.find_in("the textures of skin and hair are clearly defined"),
            Some(4)
        );
        assert_eq!(skin.find_in("clearly defined textures of skin"), None);
    }
}
