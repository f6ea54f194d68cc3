use std::collections::{BTreeMap, HashMap};

use gazekit::corpus::{
    balance_partitions, emit_datasheet, filter_mutual_gaze, grouped_stratified_split, leakage_check, pair_samples,
    person_caption_filter, unpack_pairs, BenchmarkSample, GazeAnnotation, PairRecord, SampleAssignment, Split,
    SplitRatios, DEFAULT_SEED,
};
use gazekit::geometry::FaceBBox;
use gazekit::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn faces() -> [FaceBBox; 2] {
    [FaceBBox::new(10, 10, 60, 70), FaceBBox::new(90, 12, 140, 72)]
}

fn image(id: usize, flag: u8, pairs: usize) -> GazeAnnotation {
    GazeAnnotation {
        image_id: format!("oi{id:06}"),
        annotation_flag: flag,
        bbox_pairs: vec![faces(); pairs],
        license: None,
    }
}

/// 8,972 images carrying 23,415 bbox pairs between them.
fn gaze_manifest() -> Vec<PairRecord> {
    let (images, pairs) = (8_972usize, 23_415usize);
    let base = pairs / images;
    let extra = pairs - base * images;
    let anns: Vec<_> = (0..images)
        .map(|i| image(i, 1, base + usize::from(i < extra)))
        .collect();
    unpack_pairs(&anns).unwrap()
}

#[test]
fn retention_of_flagged_candidates() {
    let total = 26_410;
    let positives = 7_126;
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let mut flags = vec![0u8; total];
    flags[..positives].fill(1);
    for i in (1..total).rev() {
        flags.swap(i, rng.gen_range(0..=i));
    }
    let anns: Vec<_> = flags.iter().enumerate().map(|(i, f)| image(i, *f, 1)).collect();
    let kept = filter_mutual_gaze(anns);
    assert_eq!(kept.len(), 7_126);
    assert!((kept.len() as f64 / total as f64 - 0.270).abs() < 0.0005);
}

#[test]
fn unpacking_23415_pairs() {
    let pairs = gaze_manifest();
    assert_eq!(pairs.len(), 23_415);
    let per_image = pairs.iter().fold(HashMap::new(), |mut m: HashMap<&str, usize>, p| {
        *m.entry(&p.image_id).or_default() += 1;
        m
    });
    assert_eq!(per_image.len(), 8_972);
}

#[test]
fn full_scale_split() {
    let mut pairs = gaze_manifest();
    let s = grouped_stratified_split(&mut pairs, SplitRatios::default(), DEFAULT_SEED).unwrap();
    assert_eq!((s.train, s.val, s.test), (18_732, 2_341, 2_342));
    assert!(leakage_check(&pair_samples(&pairs)).is_ok());
    let sheet = emit_datasheet("gaze pairs", &pairs, vec![], Some(DEFAULT_SEED));
    let rows: Vec<(usize, usize, usize, usize)> =
        sheet.rows.iter().map(|r| (r.pairs, r.real, r.fake, r.total)).collect();
    assert_eq!(
        rows,
        vec![
            (18_732, 18_732, 18_732, 37_464),
            (2_341, 2_341, 2_341, 4_682),
            (2_342, 2_342, 2_342, 4_684),
            (23_415, 23_415, 23_415, 46_830),
        ]
    );
}

#[test]
fn grouped_base_ids_stay_together() {
    // several pairs sharing one base id are split as a unit
    let mut pairs = unpack_pairs(&(0..40).map(|i| image(i, 1, 1)).collect::<Vec<_>>()).unwrap();
    for (i, p) in pairs.iter_mut().enumerate() {
        p.base_id = format!("group{}", i / 4);
    }
    let s = grouped_stratified_split(&mut pairs, SplitRatios::default(), 5).unwrap();
    assert_eq!(s.groups, 10);
    assert_eq!((s.train, s.val, s.test), (32, 4, 4));
    assert!(leakage_check(&pair_samples(&pairs)).is_ok());
}

/// Sample-level assignment of `n` pairs drawn at random, ignoring pairing.
fn random_assignment(n: usize, seed: u64) -> Vec<SampleAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = [Split::Train, Split::Val, Split::Test];
    (0..n)
        .flat_map(|i| {
            let base = format!("b{i}");
            [Label::Real, Label::Fake].map(|label| SampleAssignment {
                sample_id: format!("{base}/{label}"),
                base_id: base.clone(),
                label,
                split: splits[rng.gen_range(0..3)],
            })
        })
        .collect()
}

#[test]
fn leakage_count_matches_hash_join() {
    let samples = random_assignment(1000, 9);
    let mut by_base: HashMap<&str, Vec<Split>> = HashMap::new();
    for s in &samples {
        by_base.entry(&s.base_id).or_default().push(s.split);
    }
    let expected = by_base.values().filter(|v| v.iter().any(|s| *s != v[0])).count();
    let found = leakage_check(&samples).unwrap_err();
    assert_eq!(found.len(), expected);
    assert!(expected > 500);
}

#[test]
fn moving_one_fake_is_one_violation() {
    let mut pairs = gaze_manifest()[..100].to_vec();
    grouped_stratified_split(&mut pairs, SplitRatios::default(), 1).unwrap();
    let mut samples = pair_samples(&pairs);
    let s = samples
        .iter_mut()
        .find(|s| s.label == Label::Fake && s.split == Split::Test)
        .unwrap();
    s.split = Split::Val;
    assert_eq!(leakage_check(&samples).unwrap_err().len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_is_deterministic_and_leak_free(n in 0usize..3000, seed in any::<u64>()) {
        let anns: Vec<_> = (0..n).map(|i| image(i, 1, 1)).collect();
        let mut a = unpack_pairs(&anns).unwrap();
        let mut b = a.clone();
        let sa = grouped_stratified_split(&mut a, SplitRatios::default(), seed).unwrap();
        let sb = grouped_stratified_split(&mut b, SplitRatios::default(), seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&sa, &sb);
        prop_assert_eq!((sa.train, sa.val, sa.test), (n * 8 / 10, n / 10, n - n * 8 / 10 - n / 10));
        let samples = pair_samples(&a);
        prop_assert!(leakage_check(&samples).is_ok());
        for split in Split::ASSIGNED {
            let real = samples.iter().filter(|s| s.split == split && s.label == Label::Real).count();
            let fake = samples.iter().filter(|s| s.split == split && s.label == Label::Fake).count();
            prop_assert_eq!(real, fake);
        }
    }

    #[test]
    fn noun_filter_ignores_case_and_punctuation(
        noun in prop::sample::select(vec!["man", "men", "woman", "women", "people", "person", "boy", "girl"]),
        upper in any::<bool>(),
        before in prop::sample::select(vec!["", "(", "\"", " "]),
        after in prop::sample::select(vec!["", ".", ",", "'s", "!", ")"]),
    ) {
        let word = if upper { noun.to_uppercase() } else { noun.to_string() };
        let caption = format!("a photo of {before}{word}{after} outdoors");
        prop_assert!(person_caption_filter(&caption));
        let glued = format!("a photo of {noun}kind outdoors");
        prop_assert!(!person_caption_filter(&glued));
    }

    #[test]
    fn balanced_partitions_share_the_minimum(sizes in prop::collection::vec(1usize..40, 1..6), seed in any::<u64>()) {
        let mut samples = Vec::new();
        for (g, n) in sizes.iter().enumerate() {
            for i in 0..*n {
                samples.push(BenchmarkSample {
                    id: format!("g{g}-{i}"),
                    benchmark: "b".into(),
                    label: Label::Fake,
                    generator: Some(format!("g{g}")),
                    caption_text: None,
                    person_count: None,
                });
            }
        }
        let out = balance_partitions(&samples, seed, &[]).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &out {
            *counts.entry(s.generator.as_deref().unwrap()).or_default() += 1;
        }
        let min = *sizes.iter().min().unwrap();
        prop_assert_eq!(counts.len(), sizes.len());
        prop_assert!(counts.values().all(|c| *c == min));
    }
}

#[test]
fn interaction_scale_balance() {
    let mut samples = Vec::new();
    for (g, n) in [("label_b_1", 2620), ("label_b_2", 2700), ("label_b_3", 2650)] {
        for i in 0..n {
            samples.push(BenchmarkSample {
                id: format!("{g}/{i:05}"),
                benchmark: "cocoai_interaction".into(),
                label: Label::Fake,
                generator: Some(g.into()),
                caption_text: None,
                person_count: None,
            });
        }
    }
    let out = balance_partitions(&samples, DEFAULT_SEED, &[]).unwrap();
    assert_eq!(out.len(), 3 * 2620);
}

#[test]
fn datasheet_recounts_any_corpus() {
    let mut pairs = gaze_manifest()[..777].to_vec();
    grouped_stratified_split(
        &mut pairs,
        SplitRatios {
            train: 3,
            val: 2,
            test: 1,
        },
        11,
    )
    .unwrap();
    pairs[0].split = Split::Unassigned;
    let sheet = emit_datasheet("x", &pairs, vec!["manifest.jsonl".into()], None);
    for row in &sheet.rows {
        assert_eq!(row.total, row.real + row.fake);
        assert_eq!(row.total, 2 * row.pairs);
    }
    assert_eq!(sheet.rows[3].pairs + sheet.unassigned_pairs, 777);
    let json = serde_json::to_string(&sheet).unwrap();
    assert!(json.contains("CC0"));
}
