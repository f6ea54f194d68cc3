//! Line-delimited record files: prediction logs, pair manifests, snapshot
//! traces. One JSON object per line; blank lines are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::record::PredictionRecord;
use crate::verdict::{parse_verdict, ParseMode};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
}

impl FormatError {
    fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn schema(line: usize, message: impl Into<String>) -> Self {
        FormatError::SchemaViolation {
            line,
            message: message.into(),
        }
    }

    /// Line number of a schema violation.
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::SchemaViolation { line, .. } => Some(*line),
            FormatError::Io { .. } => None,
        }
    }
}

/// Records with their 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<(usize, T)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| FormatError::schema(line_no, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record = serde_json::from_str(trimmed).map_err(|e| FormatError::schema(line_no, e.to_string()))?;
        out.push((line_no, record));
    }
    Ok(out)
}

pub fn read_jsonl_path<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<(usize, T)>, FormatError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    read_jsonl(BufReader::new(file))
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_jsonl_path<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), FormatError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_jsonl(BufWriter::new(file), records).map_err(|e| FormatError::io(path, e))
}

/// One line of a prediction log as written by a model runner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub id: String,
    pub benchmark: String,
    pub label: Label,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl LogLine {
    pub fn into_record(self, mode: ParseMode) -> PredictionRecord {
        PredictionRecord {
            verdict: parse_verdict(&self.output, mode),
            id: self.id,
            benchmark: self.benchmark,
            true_label: self.label,
            raw_output: self.output,
            gen_len: self.gen_len,
            person_count: self.person_count,
            generator: self.generator,
            model: self.model,
        }
    }
}

impl From<&PredictionRecord> for LogLine {
    fn from(r: &PredictionRecord) -> Self {
        LogLine {
            id: r.id.clone(),
            benchmark: r.benchmark.clone(),
            label: r.true_label,
            output: r.raw_output.clone(),
            gen_len: r.gen_len,
            generator: r.generator.clone(),
            person_count: r.person_count,
            model: r.model.clone(),
        }
    }
}

/// Parse mode per model id, with a fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseModes {
    pub default: ParseMode,
    #[serde(default)]
    pub per_model: BTreeMap<String, ParseMode>,
}

impl Default for ParseModes {
    fn default() -> Self {
        ParseModes {
            default: ParseMode::Strict,
            per_model: BTreeMap::new(),
        }
    }
}

impl ParseModes {
    pub fn for_model(&self, model: Option<&str>) -> ParseMode {
        model
            .and_then(|m| self.per_model.get(m))
            .copied()
            .unwrap_or(self.default)
    }

    /// Apply a `mode` or `model=mode` setting.
    pub fn apply(&mut self, setting: &str) -> Result<(), String> {
        match setting.split_once('=') {
            Some((model, mode)) => {
                self.per_model.insert(model.trim().to_string(), mode.trim().parse()?);
            }
            None => self.default = setting.trim().parse()?,
        }
        Ok(())
    }
}

/// Validate log lines and parse their verdicts. An empty log and a repeated
/// `(model, benchmark, id)` are schema violations.
pub fn records_from_lines(
    lines: Vec<(usize, LogLine)>,
    modes: &ParseModes,
) -> Result<Vec<PredictionRecord>, FormatError> {
    if lines.is_empty() {
        return Err(FormatError::schema(1, "prediction log has no records"));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(lines.len());
    for (line, l) in lines {
        if l.id.is_empty() {
            return Err(FormatError::schema(line, "empty `id`"));
        }
        if l.benchmark.is_empty() {
            return Err(FormatError::schema(line, "empty `benchmark`"));
        }
        if !seen.insert((l.model.clone(), l.benchmark.clone(), l.id.clone())) {
            return Err(FormatError::schema(
                line,
                format!("duplicate id `{}` in `{}`", l.id, l.benchmark),
            ));
        }
        let mode = modes.for_model(l.model.as_deref());
        out.push(l.into_record(mode));
    }
    Ok(out)
}

pub fn read_prediction_log(reader: impl BufRead, modes: &ParseModes) -> Result<Vec<PredictionRecord>, FormatError> {
    records_from_lines(read_jsonl(reader)?, modes)
}

pub fn read_prediction_log_path(
    path: impl AsRef<Path>,
    modes: &ParseModes,
) -> Result<Vec<PredictionRecord>, FormatError> {
    records_from_lines(read_jsonl_path(path)?, modes)
}

/// Records grouped by benchmark, each group ordered by sample id.
pub fn group_by_benchmark(records: Vec<PredictionRecord>) -> BTreeMap<String, Vec<PredictionRecord>> {
    let mut out: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.benchmark.clone()).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.id.cmp(&b.id));
    }
    out
}

/// One image a model runner is asked to score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: String,
    pub label: Label,
    pub benchmark: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_count: Option<u32>,
}

pub fn read_benchmark_manifest(reader: impl BufRead) -> Result<Vec<ManifestEntry>, FormatError> {
    let lines: Vec<(usize, ManifestEntry)> = read_jsonl(reader)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(lines.len());
    for (line, e) in lines {
        for (field, value) in [
            ("id", &e.id),
            ("image_path", &e.image_path),
            ("benchmark", &e.benchmark),
        ] {
            if value.is_empty() {
                return Err(FormatError::schema(line, format!("empty `{field}`")));
            }
        }
        if !seen.insert((e.benchmark.clone(), e.id.clone())) {
            return Err(FormatError::schema(
                line,
                format!("duplicate id `{}` in `{}`", e.id, e.benchmark),
            ));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn read_benchmark_manifest_path(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, FormatError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    read_benchmark_manifest(BufReader::new(file))
}

/// Problems found when a prediction log is matched against the manifest it
/// was run on: missing or extra samples and label disagreements.
pub fn check_log_against_manifest(manifest: &[ManifestEntry], records: &[PredictionRecord]) -> Vec<String> {
    let expected: BTreeMap<(&str, &str), &ManifestEntry> = manifest
        .iter()
        .map(|e| ((e.benchmark.as_str(), e.id.as_str()), e))
        .collect();
    let mut problems = Vec::new();
    let mut found = HashSet::new();
    for r in records {
        let key = (r.benchmark.as_str(), r.id.as_str());
        match expected.get(&key) {
            None => problems.push(format!("{}/{}: not in manifest", r.benchmark, r.id)),
            Some(e) if e.label != r.true_label => problems.push(format!(
                "{}/{}: label {} but manifest says {}",
                r.benchmark, r.id, r.true_label, e.label
            )),
            Some(_) => {}
        }
        found.insert(key);
    }
    for key in expected.keys() {
        if !found.contains(key) {
            problems.push(format!("{}/{}: no prediction", key.0, key.1));
        }
    }
    problems
}
