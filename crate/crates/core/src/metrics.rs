//! Balanced evaluation of parsed prediction sets.
//!
//! Fake is the positive class: `tp` counts fakes predicted fake, `fn_`
//! counts fakes predicted real. All reported metrics are percentages.
//!
//! Two evaluation views exist and are never interchangeable. The paired
//! view needs both classes and reports BA, macro-F1 and MCC. The fake-only
//! view has no real samples, so only fake-class accuracy is defined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::record::PredictionRecord;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no ground-truth `{0}` samples: the paired view is undefined")]
    MissingClass(Label),
    #[error("records span several benchmarks: {0:?}")]
    MixedBenchmarks(Vec<String>),
    #[error("fake-only view given {0} real samples")]
    RealSamplePresent(usize),
    #[error("fake sample `{0}` has no generator")]
    MissingGenerator(String),
    #[error("nothing to aggregate")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Fake, Label::Fake) => self.tp += 1,
            (Label::Fake, Label::Real) => self.fn_ += 1,
            (Label::Real, Label::Real) => self.tn += 1,
            (Label::Real, Label::Fake) => self.fp += 1,
        }
    }

    /// Counts parseable records regardless of benchmark.
    pub fn tally<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for r in records {
            if let Some(p) = r.predicted() {
                cm.record(r.true_label, p);
            }
        }
        cm
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    /// Fake-class recall.
    pub fn tpr(&self) -> Option<f64> {
        (self.positives() > 0).then(|| self.tp as f64 / self.positives() as f64)
    }

    /// Real-class recall.
    pub fn tnr(&self) -> Option<f64> {
        (self.negatives() > 0).then(|| self.tn as f64 / self.negatives() as f64)
    }

    pub fn scaled(&self, k: u64) -> Self {
        ConfusionMatrix::new(self.tp * k, self.fp * k, self.tn * k, self.fn_ * k)
    }

    /// Swap both ground truth and predictions (real becomes positive).
    pub fn swap_labels(&self) -> Self {
        ConfusionMatrix::new(self.tn, self.fn_, self.tp, self.fp)
    }

    /// Invert every prediction, ground truth unchanged.
    pub fn flip_predictions(&self) -> Self {
        ConfusionMatrix::new(self.fn_, self.tn, self.fp, self.tp)
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), Add::add)
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} fn={} tn={} fp={}", self.tp, self.fn_, self.tn, self.fp)
    }
}

/// Confusion matrix of a single-benchmark record set. Unparseable records
/// are skipped (see [`crate::verdict::effective_counts`]).
pub fn confusion(records: &[PredictionRecord]) -> Result<ConfusionMatrix, MetricsError> {
    let benchmarks: BTreeSet<&str> = records.iter().map(|r| r.benchmark.as_str()).collect();
    if benchmarks.len() > 1 {
        return Err(MetricsError::MixedBenchmarks(
            benchmarks.into_iter().map(String::from).collect(),
        ));
    }
    Ok(ConfusionMatrix::tally(records))
}

fn require_both(cm: &ConfusionMatrix) -> Result<(f64, f64), MetricsError> {
    let tpr = cm.tpr().ok_or(MetricsError::MissingClass(Label::Fake))?;
    let tnr = cm.tnr().ok_or(MetricsError::MissingClass(Label::Real))?;
    Ok((tpr, tnr))
}

/// `100 * (TPR + TNR) / 2`.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let (tpr, tnr) = require_both(cm)?;
    Ok(100.0 * (tpr + tnr) / 2.0)
}

fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Mean of the fake-class and real-class F1, in percent.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    require_both(cm)?;
    let fake = f1(cm.tp, cm.fp, cm.fn_);
    let real = f1(cm.tn, cm.fn_, cm.fp);
    Ok(100.0 * (fake + real) / 2.0)
}

/// Matthews correlation in percent; 0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let [tp, fp, tn, fn_] = [cm.tp, cm.fp, cm.tn, cm.fn_].map(|v| v as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    100.0 * (tp * tn - fp * fn_) / denom.sqrt()
}

/// The confusion matrix renamed by what each cell means for a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dissection {
    /// Missed fakes (`fn`).
    pub wrong_real: u64,
    /// Caught fakes (`tp`).
    pub right_fake: u64,
    /// Reals kept (`tn`).
    pub right_real: u64,
    /// Reals flagged (`fp`).
    pub wrong_fake: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DissectionDelta {
    pub wrong_real: i64,
    pub right_fake: i64,
    pub right_real: i64,
    pub wrong_fake: i64,
}

pub fn dissect(cm: &ConfusionMatrix) -> Dissection {
    Dissection {
        wrong_real: cm.fn_,
        right_fake: cm.tp,
        right_real: cm.tn,
        wrong_fake: cm.fp,
    }
}

impl From<Dissection> for ConfusionMatrix {
    fn from(d: Dissection) -> Self {
        ConfusionMatrix::new(d.right_fake, d.wrong_fake, d.right_real, d.wrong_real)
    }
}

impl Dissection {
    /// `after - self`, cell by cell.
    pub fn delta_to(&self, after: &Dissection) -> DissectionDelta {
        let d = |a: u64, b: u64| b as i64 - a as i64;
        DissectionDelta {
            wrong_real: d(self.wrong_real, after.wrong_real),
            right_fake: d(self.right_fake, after.right_fake),
            right_real: d(self.right_real, after.right_real),
            wrong_fake: d(self.wrong_fake, after.wrong_fake),
        }
    }
}

/// Fake-class accuracy on a set whose ground truth is all fake.
pub fn fake_only_accuracy(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    let reals = records.iter().filter(|r| r.true_label == Label::Real).count();
    if reals > 0 {
        return Err(MetricsError::RealSamplePresent(reals));
    }
    let cm = ConfusionMatrix::tally(records);
    cm.tpr()
        .map(|t| 100.0 * t)
        .ok_or(MetricsError::MissingClass(Label::Fake))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum View {
    Paired,
    FakeOnly,
    /// Aggregate over benchmarks scored under different views.
    Mixed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewChoice {
    /// Fake-only when the ground truth holds no real sample, paired otherwise.
    #[default]
    Auto,
    Paired,
    FakeOnly,
}

impl std::str::FromStr for ViewChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(ViewChoice::Auto),
            "paired" => Ok(ViewChoice::Paired),
            "fake-only" => Ok(ViewChoice::FakeOnly),
            other => Err(format!("unknown view `{other}` (auto, paired, fake-only)")),
        }
    }
}

/// One benchmark's scores. In the fake-only view `ba` holds fake-class
/// accuracy and the other two metrics are undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub benchmark: String,
    pub ba: f64,
    pub macro_f1: Option<f64>,
    pub mcc: Option<f64>,
    pub n_eff: usize,
    pub view: View,
}

pub fn score_paired(benchmark: &str, cm: &ConfusionMatrix) -> Result<BenchmarkScore, MetricsError> {
    Ok(BenchmarkScore {
        benchmark: benchmark.to_string(),
        ba: balanced_accuracy(cm)?,
        macro_f1: Some(macro_f1(cm)?),
        mcc: Some(mcc(cm)),
        n_eff: cm.total() as usize,
        view: View::Paired,
    })
}

/// Score a single-benchmark record set under the requested view.
pub fn score_benchmark(records: &[PredictionRecord], view: ViewChoice) -> Result<BenchmarkScore, MetricsError> {
    let cm = confusion(records)?;
    let benchmark = records.first().map(|r| r.benchmark.as_str()).unwrap_or_default();
    let has_real = records.iter().any(|r| r.true_label == Label::Real);
    let fake_only = match view {
        ViewChoice::Auto => !has_real,
        ViewChoice::Paired => false,
        ViewChoice::FakeOnly => true,
    };
    if fake_only {
        Ok(BenchmarkScore {
            benchmark: benchmark.to_string(),
            ba: fake_only_accuracy(records)?,
            macro_f1: None,
            mcc: None,
            n_eff: cm.total() as usize,
            view: View::FakeOnly,
        })
    } else {
        score_paired(benchmark, &cm)
    }
}

/// Per-generator slices: every slice is all reals plus one generator's fakes.
pub fn per_generator_scores(records: &[PredictionRecord]) -> Result<BTreeMap<String, BenchmarkScore>, MetricsError> {
    let mut reals = ConfusionMatrix::default();
    let mut fakes: BTreeMap<&str, ConfusionMatrix> = BTreeMap::new();
    let benchmark = records.first().map(|r| r.benchmark.as_str()).unwrap_or_default();
    confusion(records)?;
    for r in records {
        if r.true_label == Label::Real {
            reals += ConfusionMatrix::tally([r]);
            continue;
        }
        let generator = r
            .generator
            .as_deref()
            .ok_or_else(|| MetricsError::MissingGenerator(r.id.clone()))?;
        *fakes.entry(generator).or_default() += ConfusionMatrix::tally([r]);
    }
    fakes
        .into_iter()
        .map(|(g, cm)| {
            let mut score = score_paired(benchmark, &(cm + reals))?;
            score.benchmark = format!("{benchmark}/{g}");
            Ok((g.to_string(), score))
        })
        .collect()
}

/// Unweighted arithmetic mean over benchmarks. A metric undefined on any
/// benchmark is undefined in the mean.
pub fn mean_across_benchmarks(scores: &[BenchmarkScore]) -> Result<BenchmarkScore, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = scores.len() as f64;
    let mean_opt = |f: fn(&BenchmarkScore) -> Option<f64>| -> Option<f64> {
        scores.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
    };
    let views: BTreeSet<_> = scores.iter().map(|s| s.view as u8).collect();
    Ok(BenchmarkScore {
        benchmark: "mean".to_string(),
        ba: scores.iter().map(|s| s.ba).sum::<f64>() / n,
        macro_f1: mean_opt(|s| s.macro_f1),
        mcc: mean_opt(|s| s.mcc),
        n_eff: scores.iter().map(|s| s.n_eff).sum(),
        view: if views.len() == 1 { scores[0].view } else { View::Mixed },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

/// Mean and spread of one benchmark's scores over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub benchmark: String,
    pub seeds: usize,
    pub ba: MeanStd,
    pub macro_f1: Option<MeanStd>,
    pub mcc: Option<MeanStd>,
}

pub fn aggregate_seeds(scores: &[BenchmarkScore]) -> Result<SeedAggregate, MetricsError> {
    let first = scores.first().ok_or(MetricsError::Empty)?;
    let names: BTreeSet<&str> = scores.iter().map(|s| s.benchmark.as_str()).collect();
    if names.len() > 1 {
        return Err(MetricsError::MixedBenchmarks(
            names.into_iter().map(String::from).collect(),
        ));
    }
    let collect = |f: fn(&BenchmarkScore) -> Option<f64>| -> Option<MeanStd> {
        let values: Option<Vec<f64>> = scores.iter().map(f).collect();
        values.and_then(|v| MeanStd::of(&v))
    };
    Ok(SeedAggregate {
        benchmark: first.benchmark.clone(),
        seeds: scores.len(),
        ba: collect(|s| Some(s.ba)).expect("non-empty"),
        macro_f1: collect(|s| s.macro_f1),
        mcc: collect(|s| s.mcc),
    })
}

/// Reduction of a percentage to one decimal for display.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Drop digits past the first decimal (toward zero). Matches the
    /// reference tables, e.g. a mean of 79.067 is shown as 79.0.
    #[default]
    Truncate,
    /// Round half away from zero.
    HalfUp,
}

impl std::str::FromStr for Rounding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "truncate" => Ok(Rounding::Truncate),
            "half-up" => Ok(Rounding::HalfUp),
            other => Err(format!("unknown rounding `{other}` (truncate, half-up)")),
        }
    }
}

/// Guards against binary representation error, e.g. `84.3` stored as
/// `84.29999999999998`.
const ROUNDING_SLACK: f64 = 1e-9;

pub fn round1(value: f64, rounding: Rounding) -> f64 {
    let scaled = value * 10.0;
    let r = match rounding {
        Rounding::Truncate => (scaled + ROUNDING_SLACK.copysign(scaled)).trunc(),
        Rounding::HalfUp => (scaled + ROUNDING_SLACK.copysign(scaled)).round(),
    };
    // avoid "-0.0"
    if r == 0.0 {
        0.0
    } else {
        r / 10.0
    }
}
