use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::verdict::{parse_verdict, ParseMode, Verdict};

/// One model output on one benchmark sample, with its parsed verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub benchmark: String,
    pub true_label: Label,
    pub raw_output: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl PredictionRecord {
    /// A record with only the required fields, parsed under `mode`.
    pub fn parsed(
        id: impl Into<String>,
        benchmark: impl Into<String>,
        true_label: Label,
        raw_output: impl Into<String>,
        mode: ParseMode,
    ) -> Self {
        let raw_output = raw_output.into();
        PredictionRecord {
            id: id.into(),
            benchmark: benchmark.into(),
            true_label,
            verdict: parse_verdict(&raw_output, mode),
            raw_output,
            gen_len: None,
            person_count: None,
            generator: None,
            model: None,
        }
    }

    /// A record whose verdict is given directly (scalar-score detectors).
    pub fn with_prediction(
        id: impl Into<String>,
        benchmark: impl Into<String>,
        true_label: Label,
        predicted: Option<Label>,
    ) -> Self {
        PredictionRecord {
            id: id.into(),
            benchmark: benchmark.into(),
            true_label,
            raw_output: predicted.map(|l| l.to_string()).unwrap_or_default(),
            verdict: Verdict {
                label: predicted,
                mode: ParseMode::FirstKeyword,
            },
            gen_len: None,
            person_count: None,
            generator: None,
            model: None,
        }
    }

    pub fn predicted(&self) -> Option<Label> {
        self.verdict.label
    }

    pub fn is_parseable(&self) -> bool {
        self.verdict.label.is_some()
    }

    /// `Some(true)` if parsed and correct, `None` if unparseable.
    pub fn is_correct(&self) -> Option<bool> {
        self.verdict.label.map(|p| p == self.true_label)
    }
}
