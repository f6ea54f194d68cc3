//! Balanced-accuracy checkpoint selection over a replayed evaluation trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One evaluation point. `eval_ba` is a fraction in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub step: u64,
    pub eval_loss: f64,
    #[serde(rename = "eval_balanced_accuracy", alias = "eval_ba")]
    pub eval_ba: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique_output_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1_template_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_gen_len: Option<f64>,
}

impl EvalSnapshot {
    pub fn new(step: u64, eval_loss: f64, eval_ba: f64) -> Self {
        EvalSnapshot {
            step,
            eval_loss,
            eval_ba,
            unique_output_ratio: None,
            top1_template_ratio: None,
            avg_gen_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("run has no evaluation snapshots")]
    EmptyRun,
    #[error("snapshot {index}: step {step} does not follow step {previous}")]
    NonIncreasingStep { index: usize, step: u64, previous: u64 },
    #[error("step {step}: {field} is {value}")]
    InvalidValue { step: u64, field: &'static str, value: f64 },
    #[error("trainer state: {0}")]
    TrainerState(String),
}

/// Steps strictly increasing, loss finite and non-negative, BA in [0, 1].
pub fn validate_run(snapshots: &[EvalSnapshot]) -> Result<(), SelectionError> {
    if snapshots.is_empty() {
        return Err(SelectionError::EmptyRun);
    }
    for (i, s) in snapshots.iter().enumerate() {
        if !(s.eval_loss.is_finite() && s.eval_loss >= 0.0) {
            return Err(SelectionError::InvalidValue {
                step: s.step,
                field: "eval_loss",
                value: s.eval_loss,
            });
        }
        if !(0.0..=1.0).contains(&s.eval_ba) {
            return Err(SelectionError::InvalidValue {
                step: s.step,
                field: "eval_ba",
                value: s.eval_ba,
            });
        }
        if i > 0 && s.step <= snapshots[i - 1].step {
            return Err(SelectionError::NonIncreasingStep {
                index: i,
                step: s.step,
                previous: snapshots[i - 1].step,
            });
        }
    }
    Ok(())
}

/// The snapshot with the highest BA; the earliest step wins ties.
pub fn select_checkpoint(snapshots: &[EvalSnapshot]) -> Result<&EvalSnapshot, SelectionError> {
    validate_run(snapshots)?;
    let mut best = &snapshots[0];
    for s in &snapshots[1..] {
        if s.eval_ba > best.eval_ba {
            best = s;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub ba_best_step: u64,
    pub ba_best: f64,
    pub loss_min_step: u64,
    pub loss_min: f64,
    pub step_gap: u64,
}

/// Where the BA peak and the loss minimum fall, and how far apart.
pub fn decoupling_report(snapshots: &[EvalSnapshot]) -> Result<DecouplingReport, SelectionError> {
    let best = select_checkpoint(snapshots)?;
    let mut low = &snapshots[0];
    for s in &snapshots[1..] {
        if s.eval_loss < low.eval_loss {
            low = s;
        }
    }
    Ok(DecouplingReport {
        ba_best_step: best.step,
        ba_best: best.eval_ba,
        loss_min_step: low.step,
        loss_min: low.eval_loss,
        step_gap: best.step.abs_diff(low.step),
    })
}

const BA_KEYS: [&str; 3] = ["eval_balanced_accuracy", "eval_ba", "balanced_accuracy"];

fn number(entry: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<f64> {
    keys.iter().find_map(|k| entry.get(*k).and_then(Value::as_f64))
}

fn diagnostic(entry: &serde_json::Map<String, Value>, name: &str) -> Option<f64> {
    number(entry, &[&format!("eval_{name}"), name])
}

/// Snapshots from a trainer-state export (`{"log_history": [...]}`).
///
/// Training-loss entries are skipped. Evaluation metrics logged at the same
/// step in separate entries are merged; a step needs both a loss and a BA
/// to become a snapshot. Metric keys are accepted with or without the
/// `eval_` prefix.
pub fn from_trainer_state(state: &Value) -> Result<Vec<EvalSnapshot>, SelectionError> {
    let history = state
        .get("log_history")
        .and_then(Value::as_array)
        .ok_or_else(|| SelectionError::TrainerState("missing `log_history` array".into()))?;

    #[derive(Default)]
    struct Partial {
        loss: Option<f64>,
        ba: Option<f64>,
        unique: Option<f64>,
        top1: Option<f64>,
        gen_len: Option<f64>,
    }
    let mut by_step: BTreeMap<u64, Partial> = BTreeMap::new();
    for (i, entry) in history.iter().enumerate() {
        let entry = entry
            .as_object()
            .ok_or_else(|| SelectionError::TrainerState(format!("entry {i} is not an object")))?;
        let loss = entry.get("eval_loss").and_then(Value::as_f64);
        let ba = number(entry, &BA_KEYS);
        if loss.is_none() && ba.is_none() {
            continue;
        }
        let step = entry
            .get("step")
            .and_then(Value::as_u64)
            .ok_or_else(|| SelectionError::TrainerState(format!("entry {i} has no integer `step`")))?;
        let p = by_step.entry(step).or_default();
        p.loss = loss.or(p.loss);
        p.ba = ba.or(p.ba);
        p.unique = diagnostic(entry, "unique_output_ratio").or(p.unique);
        p.top1 = diagnostic(entry, "top1_template_ratio").or(p.top1);
        p.gen_len = diagnostic(entry, "avg_gen_len").or(p.gen_len);
    }
    Ok(by_step
        .into_iter()
        .filter_map(|(step, p)| {
            Some(EvalSnapshot {
                step,
                eval_loss: p.loss?,
                eval_ba: p.ba?,
                unique_output_ratio: p.unique,
                top1_template_ratio: p.top1,
                avg_gen_len: p.gen_len,
            })
        })
        .collect())
}
