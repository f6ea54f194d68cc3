//! Caption-level analysis of generated explanations.
//!
//! Everything here is a pure function of a record list and a pool, and
//! compares outputs in the normalised form produced by [`crate::text`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::metrics::{balanced_accuracy, confusion, dissect, ConfusionMatrix, DissectionDelta, MetricsError};
use crate::pool::{MacroPool, TemplateId};
use crate::record::PredictionRecord;
use crate::text::{contains_phrase, normalize, word_count, word_tokens};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("no outputs to analyse")]
    EmptyList,
    #[error("no output matches a pool template ({excluded} excluded)")]
    NoMatchedOutputs { excluded: usize },
    #[error("record `{0}` has no gen_len but a truncation rate was requested")]
    MissingGenLen(String),
    #[error("record `{0}` has no person_count but a gate condition needs it")]
    MissingPersonCount(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Distinct normalised outputs over total outputs.
pub fn unique_output_ratio<S: AsRef<str>>(outputs: &[S]) -> Result<f64, DiagnosticsError> {
    if outputs.is_empty() {
        return Err(DiagnosticsError::EmptyList);
    }
    let distinct: HashSet<String> = outputs.iter().map(|o| normalize(o.as_ref())).collect();
    Ok(distinct.len() as f64 / outputs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTemplate {
    pub ratio: f64,
    pub template: TemplateId,
    pub count: usize,
    pub matched: usize,
    /// Outputs that match no template; left out of both counts.
    pub excluded: usize,
}

fn template_key(t: &TemplateId) -> (bool, usize) {
    (t.label == Label::Fake, t.ordinal())
}

/// Share of the modal template among outputs that match a template exactly.
/// Ties go to the real template with the smallest ordinal.
pub fn top1_template_ratio<S: AsRef<str>>(outputs: &[S], pool: &MacroPool) -> Result<TopTemplate, DiagnosticsError> {
    if outputs.is_empty() {
        return Err(DiagnosticsError::EmptyList);
    }
    let mut counts: HashMap<TemplateId, usize> = HashMap::new();
    let mut excluded = 0;
    for o in outputs {
        match pool.canonical_template_of(o.as_ref()) {
            Some(t) => *counts.entry(t).or_default() += 1,
            None => excluded += 1,
        }
    }
    let matched = outputs.len() - excluded;
    let (template, count) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| template_key(&b.0).cmp(&template_key(&a.0))))
        .ok_or(DiagnosticsError::NoMatchedOutputs { excluded })?;
    Ok(TopTemplate {
        ratio: count as f64 / matched as f64,
        template,
        count,
        matched,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub n: usize,
    pub mean_words: f64,
    pub median_words: f64,
    /// Share of records whose `gen_len` equals the cap; `None` without a cap.
    pub truncation_rate: Option<f64>,
    pub bare_decision_rate: f64,
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Whitespace word statistics of raw outputs. Token lengths (`gen_len`) are
/// only used for the truncation rate and never mixed into word counts.
pub fn output_word_stats(
    records: &[PredictionRecord],
    pool: &MacroPool,
    cap: Option<u32>,
) -> Result<WordStats, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::EmptyList);
    }
    let n = records.len();
    let mut words: Vec<usize> = records.iter().map(|r| word_count(&r.raw_output)).collect();
    words.sort_unstable();
    let truncation_rate = match cap {
        None => None,
        Some(cap) => {
            let mut hits = 0;
            for r in records {
                let len = r.gen_len.ok_or_else(|| DiagnosticsError::MissingGenLen(r.id.clone()))?;
                if len == cap {
                    hits += 1;
                }
            }
            Some(hits as f64 / n as f64)
        }
    };
    let bare = records.iter().filter(|r| pool.is_bare_decision(&r.raw_output)).count();
    Ok(WordStats {
        n,
        mean_words: words.iter().sum::<usize>() as f64 / n as f64,
        median_words: median(&words),
        truncation_rate,
        bare_decision_rate: bare as f64 / n as f64,
    })
}

/// Cards invoked by an output, ordered by where they first occur.
pub fn invoked_cards<'p>(output: &str, pool: &'p MacroPool) -> Vec<&'p str> {
    let normalized = normalize(output);
    let mut hits: Vec<(usize, usize, &str)> = pool
        .cards()
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.find_in(&normalized).map(|at| (at, i, c.name())))
        .collect();
    hits.sort_unstable();
    let mut seen = BTreeSet::new();
    hits.into_iter().filter(|h| seen.insert(h.2)).map(|h| h.2).collect()
}

/// The set of cards whose surface form occurs in the output.
pub fn card_invocations<'p>(output: &str, pool: &'p MacroPool) -> BTreeSet<&'p str> {
    invoked_cards(output, pool).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardStats {
    pub card: String,
    pub invocations: usize,
    /// Invocations over all records.
    pub invocation_rate: f64,
    /// Invoking records with a parsed verdict; the accuracy denominator.
    pub scored: usize,
    pub correct: usize,
    /// `None` when no parsed record invokes the card.
    pub accuracy: Option<f64>,
}

/// Per-card invocation counts and the accuracy of records invoking each
/// card, in pool card order.
pub fn card_accuracy(records: &[PredictionRecord], pool: &MacroPool) -> Vec<CardStats> {
    let mut tallies: HashMap<&str, (usize, usize, usize)> = HashMap::new();
    for r in records {
        for card in card_invocations(&r.raw_output, pool) {
            let t = tallies.entry(card).or_default();
            t.0 += 1;
            if let Some(ok) = r.is_correct() {
                t.1 += 1;
                t.2 += ok as usize;
            }
        }
    }
    let n = records.len();
    pool.cards()
        .iter()
        .map(|c| {
            let (invocations, scored, correct) = tallies.get(c.name()).copied().unwrap_or_default();
            CardStats {
                card: c.name().to_string(),
                invocations,
                invocation_rate: if n == 0 { 0.0 } else { invocations as f64 / n as f64 },
                scored,
                correct,
                accuracy: (scored > 0).then(|| correct as f64 / scored as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardDelta {
    pub card: String,
    pub rate_a: f64,
    pub rate_b: f64,
    pub delta: f64,
}

/// Invocation-rate change per card from run `a` to run `b`, largest
/// absolute change first.
pub fn card_rotation(a: &[PredictionRecord], b: &[PredictionRecord], pool: &MacroPool) -> Vec<CardDelta> {
    let ra = card_accuracy(a, pool);
    let rb = card_accuracy(b, pool);
    let mut deltas: Vec<CardDelta> = ra
        .into_iter()
        .zip(rb)
        .map(|(x, y)| CardDelta {
            delta: y.invocation_rate - x.invocation_rate,
            rate_a: x.invocation_rate,
            rate_b: y.invocation_rate,
            card: x.card,
        })
        .collect();
    deltas.sort_by(|x, y| {
        y.delta
            .abs()
            .total_cmp(&x.delta.abs())
            .then_with(|| x.card.cmp(&y.card))
    });
    deltas
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordFamily {
    pub name: String,
    pub members: Vec<String>,
}

impl KeywordFamily {
    pub fn new(name: &str, members: &[&str]) -> Self {
        KeywordFamily {
            name: name.to_string(),
            members: members.iter().map(|m| m.to_string()).collect(),
        }
    }

    fn matches(&self, tokens: &[String]) -> bool {
        self.members.iter().any(|m| contains_phrase(tokens, m))
    }
}

pub fn default_families() -> Vec<KeywordFamily> {
    vec![
        KeywordFamily::new(
            "gaze",
            &["gaze", "gazes", "eye direction", "eye directions", "pupil", "pupils"],
        ),
        KeywordFamily::new("multi_person", &["multi-person", "several people", "multiple people"]),
        KeywordFamily::new("texture", &["texture", "textures", "appearance"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFrequency {
    pub family: String,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOccurrence {
    pub a: String,
    pub b: String,
    pub count: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub n: usize,
    pub families: Vec<FamilyFrequency>,
    pub co_occurrence: Vec<CoOccurrence>,
}

/// Share of outputs mentioning each family (whole words, any case) and of
/// outputs mentioning both members of every family pair.
pub fn keyword_family_stats(records: &[PredictionRecord], families: &[KeywordFamily]) -> KeywordReport {
    let n = records.len();
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let hits: Vec<Vec<bool>> = records
        .iter()
        .map(|r| {
            let tokens = word_tokens(&r.raw_output);
            families.iter().map(|f| f.matches(&tokens)).collect()
        })
        .collect();
    let count = |pred: &dyn Fn(&[bool]) -> bool| hits.iter().filter(|h| pred(h)).count();
    let mut co_occurrence = Vec::new();
    for i in 0..families.len() {
        for j in i + 1..families.len() {
            let c = count(&|h| h[i] && h[j]);
            co_occurrence.push(CoOccurrence {
                a: families[i].name.clone(),
                b: families[j].name.clone(),
                count: c,
                rate: rate(c),
            });
        }
    }
    KeywordReport {
        n,
        families: families
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let c = count(&|h| h[i]);
                FamilyFrequency {
                    family: f.name.clone(),
                    count: c,
                    frequency: rate(c),
                }
            })
            .collect(),
        co_occurrence,
    }
}

/// `name` matches `pattern` exactly, or by prefix when the pattern ends in `*`.
pub fn card_matches(pattern: &str, name: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix),
        None => name == pattern,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateAction {
    RealToFake,
    FakeToReal,
}

impl GateAction {
    fn source(self) -> Label {
        match self {
            GateAction::RealToFake => Label::Real,
            GateAction::FakeToReal => Label::Fake,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCondition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_count: Option<u32>,
}

/// A declarative post-hoc rule: when an output invokes a matching card and
/// the condition holds, its verdict is flipped according to `action`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRule {
    /// Card name, or a prefix ending in `*`.
    pub card: String,
    #[serde(default)]
    pub when: GateCondition,
    pub action: GateAction,
}

impl GateRule {
    /// Demote gaze-card verdicts on single-person inputs.
    pub fn single_person_gaze() -> Self {
        GateRule {
            card: "META_gaze*".to_string(),
            when: GateCondition { person_count: Some(1) },
            action: GateAction::RealToFake,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub records: Vec<PredictionRecord>,
    pub flipped: usize,
    pub before: ConfusionMatrix,
    pub after: ConfusionMatrix,
    pub ba_before: Option<f64>,
    pub ba_after: Option<f64>,
    pub delta_ba: Option<f64>,
    pub delta: DissectionDelta,
}

/// Apply gate rules in order to a single-benchmark record set and report
/// the metric change. Only presence of the card is checked; no confidence
/// signal is consulted.
pub fn apply_card_gate(
    records: &[PredictionRecord],
    rules: &[GateRule],
    pool: &MacroPool,
) -> Result<GateOutcome, DiagnosticsError> {
    let before = confusion(records)?;
    let mut out = records.to_vec();
    let mut flipped = 0;
    for r in out.iter_mut() {
        let cards = card_invocations(&r.raw_output, pool);
        for rule in rules {
            if r.predicted() != Some(rule.action.source()) {
                continue;
            }
            if !cards.iter().any(|c| card_matches(&rule.card, c)) {
                continue;
            }
            if let Some(want) = rule.when.person_count {
                let have = r
                    .person_count
                    .ok_or_else(|| DiagnosticsError::MissingPersonCount(r.id.clone()))?;
                if have != want {
                    continue;
                }
            }
            r.verdict.label = Some(rule.action.source().flipped());
            flipped += 1;
        }
    }
    let after = confusion(&out)?;
    let ba_before = balanced_accuracy(&before).ok();
    let ba_after = balanced_accuracy(&after).ok();
    Ok(GateOutcome {
        flipped,
        before,
        after,
        delta_ba: ba_before.zip(ba_after).map(|(b, a)| a - b),
        ba_before,
        ba_after,
        delta: dissect(&before).delta_to(&dissect(&after)),
        records: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPool {
    /// Fakes predicted real.
    WrongReal,
    /// Reals predicted fake.
    WrongFake,
}

impl ErrorPool {
    fn contains(self, r: &PredictionRecord) -> bool {
        match self {
            ErrorPool::WrongReal => r.true_label == Label::Fake && r.predicted() == Some(Label::Real),
            ErrorPool::WrongFake => r.true_label == Label::Real && r.predicted() == Some(Label::Fake),
        }
    }
}

/// Named set of card patterns used to group buckets into subtypes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardGroup {
    pub name: String,
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolBucket {
    pub name: String,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrongPoolReport {
    pub pool: ErrorPool,
    pub size: usize,
    /// By the first card each output invokes; `other` when none.
    pub buckets: Vec<PoolBucket>,
    /// Buckets folded by the supplied groups; ungrouped cards keep their name.
    pub subtypes: Vec<PoolBucket>,
}

pub const OTHER_BUCKET: &str = "other";

fn to_buckets(counts: BTreeMap<String, usize>, size: usize) -> Vec<PoolBucket> {
    let mut v: Vec<PoolBucket> = counts
        .into_iter()
        .map(|(name, count)| PoolBucket {
            share: count as f64 / size as f64,
            name,
            count,
        })
        .collect();
    v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
    v
}

/// Decompose an error pool by the earliest card each erroneous output invokes.
pub fn wrong_pool_report(
    records: &[PredictionRecord],
    pool: &MacroPool,
    which: ErrorPool,
    groups: &[CardGroup],
) -> WrongPoolReport {
    let mut by_card: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_group: BTreeMap<String, usize> = BTreeMap::new();
    let mut size = 0;
    for r in records.iter().filter(|r| which.contains(r)) {
        size += 1;
        let card = invoked_cards(&r.raw_output, pool)
            .first()
            .copied()
            .unwrap_or(OTHER_BUCKET)
            .to_string();
        let group = groups
            .iter()
            .find(|g| g.patterns.iter().any(|p| card_matches(p, &card)))
            .map(|g| g.name.clone())
            .unwrap_or_else(|| card.clone());
        *by_card.entry(card).or_default() += 1;
        *by_group.entry(group).or_default() += 1;
    }
    WrongPoolReport {
        pool: which,
        size,
        buckets: to_buckets(by_card, size),
        subtypes: to_buckets(by_group, size),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::ParseMode;

    fn pool() -> MacroPool {
        MacroPool::default_pool()
    }

    fn rec(i: usize, truth: Label, text: &str) -> PredictionRecord {
        PredictionRecord::parsed(format!("r{i}"), "b", truth, text, ParseMode::Strict)
    }

    #[test]
    fn unique_ratio_bounds() {
        assert_eq!(unique_output_ratio(&["a", "b", "c"]).unwrap(), 1.0);
        assert_eq!(unique_output_ratio(&["x"; 4]).unwrap(), 0.25);
        assert_eq!(unique_output_ratio(&["A  b", "a b"]).unwrap(), 0.5);
        assert_eq!(unique_output_ratio::<&str>(&[]), Err(DiagnosticsError::EmptyList));
    }

    #[test]
    fn top1_counts_only_matched() {
        let p = pool();
        let t = TemplateId::new(Label::Fake, 1, 2, 3, 4);
        let text = p.compose(t).unwrap().text;
        let other = p.compose(TemplateId::new(Label::Real, 0, 0, 0, 0)).unwrap().text;
        let outputs = vec![text.clone(), text.clone(), other, "junk".to_string()];
        let top = top1_template_ratio(&outputs, &p).unwrap();
        assert_eq!(top.template, t);
        assert_eq!((top.count, top.matched, top.excluded), (2, 3, 1));
        assert!((top.ratio - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            top1_template_ratio(&["junk"], &p),
            Err(DiagnosticsError::NoMatchedOutputs { excluded: 1 })
        );
    }

    #[test]
    fn top1_tie_break() {
        let p = pool();
        let a = TemplateId::new(Label::Fake, 0, 0, 0, 1);
        let b = TemplateId::new(Label::Real, 4, 4, 4, 4);
        let outputs = [p.compose(a).unwrap().text, p.compose(b).unwrap().text];
        assert_eq!(top1_template_ratio(&outputs, &p).unwrap().template, b);
    }

    #[test]
    fn word_stats_bare_outputs() {
        let p = pool();
        let records: Vec<_> = (0..6).map(|i| rec(i, Label::Fake, "This is a fake image.")).collect();
        let s = output_word_stats(&records, &p, None).unwrap();
        assert_eq!((s.mean_words, s.median_words, s.bare_decision_rate), (5.0, 5.0, 1.0));
        assert_eq!(s.truncation_rate, None);
        assert!(matches!(
            output_word_stats(&records, &p, Some(64)),
            Err(DiagnosticsError::MissingGenLen(_))
        ));
        let with_len: Vec<_> = records
            .into_iter()
            .map(|mut r| {
                r.gen_len = Some(7);
                r
            })
            .collect();
        assert_eq!(
            output_word_stats(&with_len, &p, Some(64)).unwrap().truncation_rate,
            Some(0.0)
        );
    }

    #[test]
    fn even_median_averages() {
        assert_eq!(median(&[1, 2, 3, 10]), 2.5);
        assert_eq!(median(&[4]), 4.0);
    }

    #[test]
    fn composed_caption_invokes_its_four_cards() {
        let p = pool();
        for t in TemplateId::all() {
            let text = p.compose(t).unwrap().text;
            let expected: BTreeSet<&str> = p.template_cards(&t).into_iter().collect();
            assert_eq!(card_invocations(&text, &p), expected, "{t}");
        }
        assert!(card_invocations("", &p).is_empty());
    }

    #[test]
    fn fragment_cards() {
        let p = pool();
        let cards = card_invocations(
            "This is a real image. The textures of the skin are clearly defined.",
            &p,
        );
        assert!(cards.contains("REAL_skin"));
        let cards = card_invocations("Despite the lighting, the faces look authentic.", &p);
        assert!(cards.contains("FAKE_authentic"));
        assert!(card_invocations("clearly defined textures of skin", &p).is_empty());
    }

    #[test]
    fn card_accuracy_counts() {
        let p = pool();
        let short = "Multiple people are present, so I focused on gaze.";
        let mut records = Vec::new();
        for i in 0..10 {
            let truth = if i < 7 { Label::Fake } else { Label::Real };
            records.push(rec(i, truth, &format!("This is a fake image. {short}")));
        }
        records.push(rec(10, Label::Fake, &format!("garbled {short}")));
        let stats = card_accuracy(&records, &p);
        let s = stats.iter().find(|s| s.card == "META_gaze_short").unwrap();
        assert_eq!((s.invocations, s.scored, s.correct), (11, 10, 7));
        assert_eq!(s.accuracy, Some(0.7));
        let never = stats.iter().find(|s| s.card == "REAL_physics").unwrap();
        assert_eq!((never.invocations, never.accuracy), (0, None));
    }

    #[test]
    fn rotation_of_identical_runs_is_zero() {
        let p = pool();
        let text = p.compose(TemplateId::new(Label::Real, 0, 1, 2, 3)).unwrap().text;
        let a: Vec<_> = (0..4).map(|i| rec(i, Label::Real, &text)).collect();
        assert!(card_rotation(&a, &a, &p).iter().all(|d| d.delta == 0.0));
        let b: Vec<_> = (0..4).map(|i| rec(i, Label::Real, "This is a real image.")).collect();
        let rot = card_rotation(&a, &b, &p);
        assert_eq!(rot[0].delta, -1.0);
        assert_eq!(rot.iter().filter(|d| d.delta != 0.0).count(), 4);
    }

    #[test]
    fn keyword_families() {
        let records = vec![
            rec(0, Label::Fake, "Several people; their gaze is off."),
            rec(1, Label::Fake, "Skin texture is smooth."),
            rec(2, Label::Fake, "Nothing here."),
            rec(3, Label::Fake, "The pupils and multi-person layout."),
        ];
        let report = keyword_family_stats(&records, &default_families());
        let f: Vec<usize> = report.families.iter().map(|f| f.count).collect();
        assert_eq!(f, vec![2, 2, 1]);
        assert_eq!(report.co_occurrence[0].count, 2);
        assert_eq!(report.co_occurrence[0].rate, 0.5);
        let empty = keyword_family_stats(&records, &[KeywordFamily::new("none", &[])]);
        assert_eq!(empty.families[0].frequency, 0.0);
    }

    #[test]
    fn gate_flips_single_person_gaze_reals() {
        let p = pool();
        let gaze = "This is a real image. Multiple people are present, so I focused on gaze.";
        let mut records = vec![
            rec(0, Label::Fake, gaze),
            rec(1, Label::Fake, gaze),
            rec(2, Label::Real, "This is a real image."),
            rec(3, Label::Real, gaze),
        ];
        for (r, pc) in records.iter_mut().zip([1, 2, 1, 3]) {
            r.person_count = Some(pc);
        }
        let out = apply_card_gate(&records, &[GateRule::single_person_gaze()], &p).unwrap();
        assert_eq!(out.flipped, 1);
        assert_eq!(out.records[0].predicted(), Some(Label::Fake));
        assert_eq!(out.after, ConfusionMatrix::new(1, 0, 2, 1));
        assert_eq!(out.delta_ba, Some(25.0));
        assert_eq!(out.delta.right_fake, 1);

        records[0].person_count = None;
        assert_eq!(
            apply_card_gate(&records, &[GateRule::single_person_gaze()], &p),
            Err(DiagnosticsError::MissingPersonCount("r0".into()))
        );
    }

    #[test]
    fn gate_rule_config_shape() {
        let rule: GateRule =
            serde_json::from_str(r#"{"card":"META_gaze*","when":{"person_count":1},"action":"real-to-fake"}"#).unwrap();
        assert_eq!(rule, GateRule::single_person_gaze());
        assert!(card_matches("META_gaze*", "META_gaze_full"));
        assert!(!card_matches("META_gaze", "META_gaze_full"));
    }

    #[test]
    fn wrong_pool_buckets() {
        let p = pool();
        let gaze = "This is a real image. As more than one person appears in the image, I focused primarily on gaze behavior and eye-region consistency.";
        let short = "This is a real image. Multiple people are present, so I focused on gaze.";
        let records = vec![
            rec(0, Label::Fake, gaze),
            rec(1, Label::Fake, short),
            rec(2, Label::Fake, "This is a real image."),
            rec(3, Label::Fake, "This is a fake image."),
        ];
        let groups = [CardGroup {
            name: "META_gaze".into(),
            patterns: vec!["META_gaze*".into()],
        }];
        let r = wrong_pool_report(&records, &p, ErrorPool::WrongReal, &groups);
        assert_eq!(r.size, 3);
        assert_eq!(r.buckets.len(), 3);
        assert!(r.buckets.iter().any(|b| b.name == OTHER_BUCKET && b.count == 1));
        assert_eq!(r.subtypes[0].name, "META_gaze");
        assert_eq!(r.subtypes[0].count, 2);
        let empty = wrong_pool_report(&records, &p, ErrorPool::WrongFake, &groups);
        assert_eq!(empty.size, 0);
        assert!(empty.buckets.is_empty());
    }
}
