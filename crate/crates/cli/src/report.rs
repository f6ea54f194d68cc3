//! Score and diagnostics reports. The text table is rendered from the same
//! rounded values that go into the JSON report.

use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{Context, Result};
use gazekit::diagnostics::{
    card_accuracy, default_families, keyword_family_stats, output_word_stats, top1_template_ratio, unique_output_ratio,
    CardStats, KeywordReport, TopTemplate, WordStats,
};
use gazekit::metrics::{
    confusion, dissect, mean_across_benchmarks, round1, score_benchmark, BenchmarkScore, Dissection, Rounding, View,
    ViewChoice,
};
use gazekit::verdict::effective_counts;
use gazekit::{MacroPool, PredictionRecord};
use serde::{Deserialize, Serialize};

/// Model name used when log lines carry none.
pub const NO_MODEL: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub benchmark: String,
    pub view: View,
    pub n0: usize,
    pub n_eff: usize,
    /// Unparseable share in percent, three decimals.
    pub failure_pct: f64,
    pub ba: f64,
    pub macro_f1: Option<f64>,
    pub mcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissectionRow {
    pub model: String,
    pub benchmark: String,
    #[serde(flatten)]
    pub dissection: Dissection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rounding: Rounding,
    pub rows: Vec<ScoreRow>,
    pub means: Vec<ScoreRow>,
    pub dissections: Vec<DissectionRow>,
    /// Unrounded scores, in row order.
    pub raw: Vec<BenchmarkScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsEntry {
    pub model: String,
    pub benchmark: String,
    pub n: usize,
    pub unique_output_ratio: f64,
    pub top1: Option<TopTemplate>,
    pub word_stats: WordStats,
    pub cards: Vec<CardStats>,
    pub keywords: KeywordReport,
}

/// Records keyed by (model, benchmark), each group sorted by id.
pub fn group(records: Vec<PredictionRecord>) -> BTreeMap<(String, String), Vec<PredictionRecord>> {
    let mut out: BTreeMap<(String, String), Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        let model = r.model.clone().unwrap_or_else(|| NO_MODEL.to_string());
        out.entry((model, r.benchmark.clone())).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.id.cmp(&b.id));
    }
    out
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn row(model: &str, score: &BenchmarkScore, n0: usize, rounding: Rounding) -> ScoreRow {
    let failure = if n0 == 0 {
        0.0
    } else {
        (n0 - score.n_eff) as f64 / n0 as f64
    };
    ScoreRow {
        model: model.to_string(),
        benchmark: score.benchmark.clone(),
        view: score.view,
        n0,
        n_eff: score.n_eff,
        failure_pct: round3(100.0 * failure),
        ba: round1(score.ba, rounding),
        macro_f1: score.macro_f1.map(|v| round1(v, rounding)),
        mcc: score.mcc.map(|v| round1(v, rounding)),
    }
}

pub fn score_report(
    groups: &BTreeMap<(String, String), Vec<PredictionRecord>>,
    view: ViewChoice,
    rounding: Rounding,
) -> Result<ScoreReport> {
    let mut report = ScoreReport {
        rounding,
        rows: Vec::new(),
        means: Vec::new(),
        dissections: Vec::new(),
        raw: Vec::new(),
    };
    let mut per_model: BTreeMap<&str, (Vec<BenchmarkScore>, usize)> = BTreeMap::new();
    for ((model, benchmark), records) in groups {
        let score = score_benchmark(records, view).with_context(|| format!("scoring {model} on {benchmark}"))?;
        let n0 = effective_counts(records).n0;
        report.rows.push(row(model, &score, n0, rounding));
        if score.view == View::Paired {
            report.dissections.push(DissectionRow {
                model: model.clone(),
                benchmark: benchmark.clone(),
                dissection: dissect(&confusion(records)?),
            });
        }
        let entry = per_model.entry(model).or_default();
        entry.0.push(score.clone());
        entry.1 += n0;
        report.raw.push(score);
    }
    for (model, (scores, n0)) in per_model {
        if scores.len() > 1 {
            let mean = mean_across_benchmarks(&scores)?;
            report.means.push(row(model, &mean, n0, rounding));
        }
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

fn view_name(view: View) -> &'static str {
    match view {
        View::Paired => "paired",
        View::FakeOnly => "fake-only",
        View::Mixed => "mixed",
    }
}

pub fn render_scores(report: &ScoreReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<24} {:<9} {:>7} {:>7} {:>8} {:>6} {:>6} {:>6}",
        "model", "benchmark", "view", "n0", "n_eff", "fail%", "BA", "F1", "MCC"
    );
    for r in report.rows.iter().chain(&report.means) {
        let _ = writeln!(
            out,
            "{:<16} {:<24} {:<9} {:>7} {:>7} {:>8.3} {:>6.1} {:>6} {:>6}",
            r.model,
            r.benchmark,
            view_name(r.view),
            r.n0,
            r.n_eff,
            r.failure_pct,
            r.ba,
            opt(r.macro_f1),
            opt(r.mcc)
        );
    }
    if !report.dissections.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:<24} {:>10} {:>10} {:>10} {:>10}",
            "model", "benchmark", "wrong_real", "right_fake", "right_real", "wrong_fake"
        );
        for d in &report.dissections {
            let x = &d.dissection;
            let _ = writeln!(
                out,
                "{:<16} {:<24} {:>10} {:>10} {:>10} {:>10}",
                d.model, d.benchmark, x.wrong_real, x.right_fake, x.right_real, x.wrong_fake
            );
        }
    }
    out
}

pub fn diagnostics_report(
    groups: &BTreeMap<(String, String), Vec<PredictionRecord>>,
    pool: &MacroPool,
    max_new_tokens: u32,
) -> Result<Vec<DiagnosticsEntry>> {
    let families = default_families();
    let mut out = Vec::new();
    for ((model, benchmark), records) in groups {
        let outputs: Vec<&str> = records.iter().map(|r| r.raw_output.as_str()).collect();
        out.push(DiagnosticsEntry {
            model: model.clone(),
            benchmark: benchmark.clone(),
            n: records.len(),
            unique_output_ratio: unique_output_ratio(&outputs)?,
            top1: top1_template_ratio(&outputs, pool).ok(),
            word_stats: output_word_stats(
                records,
                pool,
                records.iter().all(|r| r.gen_len.is_some()).then_some(max_new_tokens),
            )?,
            cards: card_accuracy(records, pool)
                .into_iter()
                .filter(|c| c.invocations > 0)
                .collect(),
            keywords: keyword_family_stats(records, &families),
        });
    }
    Ok(out)
}
