//! Dataset scaffolding: source filtering, pair unpacking, leakage-free
//! splitting, caption filters, partition balancing and the datasheet.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::FaceBBox;
use crate::label::Label;
use crate::text::{normalize, word_tokens};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("image `{image_id}` pair {index}: degenerate face box {bbox:?}")]
    DegenerateBBox {
        image_id: String,
        index: usize,
        bbox: FaceBBox,
    },
    #[error("split ratios must be positive")]
    BadRatios,
    #[error("partition `{0}` is empty")]
    EmptyPartition(String),
    #[error("sample `{0}` has no partition key")]
    MissingKey(String),
}

/// A source image with its mutual-gaze flag and face-bbox pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeAnnotation {
    pub image_id: String,
    pub annotation_flag: u8,
    #[serde(default)]
    pub bbox_pairs: Vec<[FaceBBox; 2]>,
    /// Upstream per-image licence pointer, carried opaquely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license: Option<String>,
}

/// Keeps exactly the images annotated as mutual gaze (`flag == 1`).
pub fn filter_mutual_gaze(annotations: Vec<GazeAnnotation>) -> Vec<GazeAnnotation> {
    annotations.into_iter().filter(|a| a.annotation_flag == 1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Participant {
    A,
    B,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One real/fake pair. The real is the source image; the fake has one
/// participant's eye region regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub base_id: String,
    pub image_id: String,
    pub bbox_a: FaceBBox,
    pub bbox_b: FaceBBox,
    pub perturbed_participant: Participant,
    #[serde(default)]
    pub split: Split,
}

impl PairRecord {
    pub fn perturbed_bbox(&self) -> &FaceBBox {
        match self.perturbed_participant {
            Participant::A => &self.bbox_a,
            Participant::B => &self.bbox_b,
        }
    }

    pub fn real_sample_id(&self) -> String {
        format!("{}/real", self.base_id)
    }

    pub fn fake_sample_id(&self) -> String {
        format!("{}/fake_{:?}", self.base_id, self.perturbed_participant)
    }
}

pub fn base_id(image_id: &str, pair_index: usize) -> String {
    format!("{image_id}#{pair_index}")
}

/// One pair per bbox pair, keyed `(image_id, pair index)`. The perturbed
/// participant alternates A, B, A, ... in input order so both roles are
/// equally represented.
pub fn unpack_pairs(images: &[GazeAnnotation]) -> Result<Vec<PairRecord>, CorpusError> {
    let mut out = Vec::new();
    for img in images {
        for (index, [a, b]) in img.bbox_pairs.iter().enumerate() {
            for bbox in [a, b] {
                if bbox.validate().is_err() {
                    return Err(CorpusError::DegenerateBBox {
                        image_id: img.image_id.clone(),
                        index,
                        bbox: *bbox,
                    });
                }
            }
            out.push(PairRecord {
                base_id: base_id(&img.image_id, index),
                image_id: img.image_id.clone(),
                bbox_a: *a,
                bbox_b: *b,
                perturbed_participant: if out.len() % 2 == 0 {
                    Participant::A
                } else {
                    Participant::B
                },
                split: Split::Unassigned,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 8,
            val: 1,
            test: 1,
        }
    }
}

impl SplitRatios {
    /// Group counts: train and val are floored, test takes the remainder.
    pub fn counts(&self, n: usize) -> Result<[usize; 3], CorpusError> {
        if self.train == 0 || self.val == 0 || self.test == 0 {
            return Err(CorpusError::BadRatios);
        }
        let total = (self.train + self.val + self.test) as u128;
        let train = (n as u128 * self.train as u128 / total) as usize;
        let val = (n as u128 * self.val as u128 / total) as usize;
        Ok([train, val, n - train - val])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub groups: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Assign every pair a split, treating each base id as an atomic group.
///
/// Groups are sorted by base id, shuffled with the seed and dealt to train,
/// val and test in that order until each split's group quota is met. With
/// one pair per base id the pair counts equal the quotas exactly.
pub fn grouped_stratified_split(
    pairs: &mut [PairRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitSummary, CorpusError> {
    let mut groups: Vec<&str> = pairs
        .iter()
        .map(|p| p.base_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let quotas = ratios.counts(groups.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let mut assignment: BTreeMap<String, Split> = BTreeMap::new();
    let mut cursor = 0;
    for (split, quota) in Split::ASSIGNED.into_iter().zip(quotas) {
        for g in &groups[cursor..cursor + quota] {
            assignment.insert(g.to_string(), split);
        }
        cursor += quota;
    }
    let mut counts = [0usize; 3];
    for p in pairs.iter_mut() {
        p.split = assignment[&p.base_id];
        counts[Split::ASSIGNED.iter().position(|s| *s == p.split).unwrap()] += 1;
    }
    Ok(SplitSummary {
        seed,
        groups: assignment.len(),
        train: counts[0],
        val: counts[1],
        test: counts[2],
    })
}

/// One image-level sample derived from a pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleAssignment {
    pub sample_id: String,
    pub base_id: String,
    pub label: Label,
    pub split: Split,
}

/// The real and fake samples of every pair, each inheriting the pair's split.
pub fn pair_samples(pairs: &[PairRecord]) -> Vec<SampleAssignment> {
    pairs
        .iter()
        .flat_map(|p| {
            [
                SampleAssignment {
                    sample_id: p.real_sample_id(),
                    base_id: p.base_id.clone(),
                    label: Label::Real,
                    split: p.split,
                },
                SampleAssignment {
                    sample_id: p.fake_sample_id(),
                    base_id: p.base_id.clone(),
                    label: Label::Fake,
                    split: p.split,
                },
            ]
        })
        .collect()
}

/// Base ids whose samples land in more than one split, sorted.
pub fn leakage_check(samples: &[SampleAssignment]) -> Result<(), Vec<String>> {
    let mut seen: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for s in samples {
        seen.entry(&s.base_id).or_default().insert(s.split);
    }
    let bad: Vec<String> = seen
        .into_iter()
        .filter(|(_, splits)| splits.len() > 1)
        .map(|(b, _)| b.to_string())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

pub const PERSON_NOUNS: [&str; 8] = ["man", "men", "woman", "women", "people", "person", "boy", "girl"];

/// True if the caption names a person with one of [`PERSON_NOUNS`] as a
/// whole word, in any case.
pub fn person_caption_filter(caption: &str) -> bool {
    word_tokens(caption).iter().any(|t| PERSON_NOUNS.contains(&t.as_str()))
}

/// One evaluation image of a benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub id: String,
    pub benchmark: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_count: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupMode {
    /// Byte-identical captions.
    #[default]
    Exact,
    /// Captions equal after lowercasing and collapsing whitespace.
    Normalized,
}

fn dedup_key(caption: &str, mode: DedupMode) -> String {
    match mode {
        DedupMode::Exact => caption.to_string(),
        DedupMode::Normalized => normalize(caption),
    }
}

/// Drops candidates whose caption already appeared in an earlier round, or
/// earlier in this candidate list. Samples without a caption are kept.
pub fn dedup_captions(candidates: Vec<BenchmarkSample>, earlier: &[String], mode: DedupMode) -> Vec<BenchmarkSample> {
    let mut seen: HashSet<String> = earlier.iter().map(|c| dedup_key(c, mode)).collect();
    candidates
        .into_iter()
        .filter(|s| match &s.caption_text {
            Some(c) => seen.insert(dedup_key(c, mode)),
            None => true,
        })
        .collect()
}

pub const REAL_PARTITION: &str = "real";

/// Partition key of a sample: its generator for fakes, `real` for reals.
pub fn generator_partition(sample: &BenchmarkSample) -> Result<&str, CorpusError> {
    match sample.label {
        Label::Real => Ok(REAL_PARTITION),
        Label::Fake => sample
            .generator
            .as_deref()
            .ok_or_else(|| CorpusError::MissingKey(sample.id.clone())),
    }
}

/// Downsample every generator partition to the size of the smallest.
///
/// Within a partition, samples are sorted by id, shuffled with a generator
/// seeded once from `seed` (partitions visited in name order), and the
/// prefix kept. Output is sorted by partition then id. Every name in
/// `required` must be a non-empty partition.
pub fn balance_partitions(
    samples: &[BenchmarkSample],
    seed: u64,
    required: &[&str],
) -> Result<Vec<BenchmarkSample>, CorpusError> {
    let mut parts: BTreeMap<&str, Vec<&BenchmarkSample>> = BTreeMap::new();
    for s in samples {
        parts.entry(generator_partition(s)?).or_default().push(s);
    }
    for r in required {
        if !parts.contains_key(r) {
            return Err(CorpusError::EmptyPartition(r.to_string()));
        }
    }
    let Some(target) = parts.values().map(Vec::len).min() else {
        return Err(CorpusError::EmptyPartition("*".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target * parts.len());
    for members in parts.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
        members.shuffle(&mut rng);
        let mut kept: Vec<BenchmarkSample> = members[..target].iter().map(|s| (*s).clone()).collect();
        kept.sort_by(|a, b| a.id.cmp(&b.id));
        out.extend(kept);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasheetRow {
    pub split: String,
    pub pairs: usize,
    pub real: usize,
    pub fake: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datasheet {
    pub name: String,
    /// Train, val, test, then the total row.
    pub rows: Vec<DatasheetRow>,
    pub unassigned_pairs: usize,
    pub image_license: String,
    pub caption_pool_license: String,
    pub provenance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub const IMAGE_LICENSE: &str = "CC-BY-NC-4.0";
pub const CAPTION_POOL_LICENSE: &str = "CC0";

/// Per-split counts; every pair contributes one real and one fake.
pub fn emit_datasheet(name: &str, pairs: &[PairRecord], provenance: Vec<String>, seed: Option<u64>) -> Datasheet {
    let row = |split: &str, n: usize| DatasheetRow {
        split: split.to_string(),
        pairs: n,
        real: n,
        fake: n,
        total: 2 * n,
    };
    let mut rows: Vec<DatasheetRow> = Split::ASSIGNED
        .iter()
        .map(|s| row(s.as_str(), pairs.iter().filter(|p| p.split == *s).count()))
        .collect();
    let assigned: usize = rows.iter().map(|r| r.pairs).sum();
    rows.push(row("total", assigned));
    Datasheet {
        name: name.to_string(),
        rows,
        unassigned_pairs: pairs.len() - assigned,
        image_license: IMAGE_LICENSE.to_string(),
        caption_pool_license: CAPTION_POOL_LICENSE.to_string(),
        provenance,
        seed,
    }
}

impl Datasheet {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.name);
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>8} {:>8} {:>8}",
            "split", "pairs", "real", "fake", "total"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>8} {:>8} {:>8} {:>8}",
                r.split, r.pairs, r.real, r.fake, r.total
            );
        }
        if self.unassigned_pairs > 0 {
            let _ = writeln!(s, "unassigned pairs: {}", self.unassigned_pairs);
        }
        let _ = writeln!(s, "image license: {}", self.image_license);
        let _ = writeln!(s, "caption pool license: {}", self.caption_pool_license);
        for p in &self.provenance {
            let _ = writeln!(s, "source: {p}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed: {seed}");
        }
        s
    }
}
