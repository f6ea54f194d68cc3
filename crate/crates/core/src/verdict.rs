//! Raw model text to binary verdicts.
//!
//! Three extraction rules are supported and chosen per model family:
//!
//! * strict prefix: `^This is a (real|fake) image\.`, case-sensitive and
//!   anchored at the first byte (a lenient variant first strips leading
//!   whitespace, a byte-order mark and `<s>` tokens);
//! * first keyword: whichever of the whole words `real` / `fake` occurs
//!   first, case-insensitive, anywhere in the text;
//! * three class: a `Real` / `Full Synthetic` / `Tampered` output folded to
//!   real vs fake.
//!
//! Outputs that match nothing are `Unparseable` (a `None` label) and are
//! excluded from metrics, never coerced.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::record::PredictionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseMode {
    Strict,
    StrictLenient,
    FirstKeyword,
    ThreeClass,
}

impl ParseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseMode::Strict => "strict",
            ParseMode::StrictLenient => "strict-lenient",
            ParseMode::FirstKeyword => "first-keyword",
            ParseMode::ThreeClass => "three-class",
        }
    }
}

impl fmt::Display for ParseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ParseMode::Strict),
            "strict-lenient" => Ok(ParseMode::StrictLenient),
            "first-keyword" => Ok(ParseMode::FirstKeyword),
            "three-class" => Ok(ParseMode::ThreeClass),
            other => Err(format!(
                "unknown parse mode `{other}` (strict, strict-lenient, first-keyword, three-class)"
            )),
        }
    }
}

/// Parsed verdict; `label == None` means unparseable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Option<Label>,
    pub mode: ParseMode,
}

impl Verdict {
    pub fn unparseable(mode: ParseMode) -> Self {
        Verdict { label: None, mode }
    }

    pub fn is_parseable(&self) -> bool {
        self.label.is_some()
    }
}

fn strict_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^This is a (real|fake) image\.").unwrap())
}

fn keyword_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(real|fake)\b").unwrap())
}

fn class3_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(full[\s_-]*synthetic|fully[\s_-]*synthetic|tampered|real)\b").unwrap())
}

fn label_of(word: &str) -> Label {
    if word.eq_ignore_ascii_case("real") {
        Label::Real
    } else {
        Label::Fake
    }
}

pub fn parse_strict(raw: &str) -> Verdict {
    Verdict {
        label: strict_pattern().captures(raw).map(|c| label_of(&c[1])),
        mode: ParseMode::Strict,
    }
}

/// Strict parsing after dropping leading whitespace, BOM and `<s>` tokens.
pub fn parse_strict_lenient(raw: &str) -> Verdict {
    let mut rest = raw;
    loop {
        let trimmed = rest
            .trim_start()
            .trim_start_matches('\u{feff}')
            .trim_start_matches("<s>");
        if trimmed.len() == rest.len() {
            break;
        }
        rest = trimmed;
    }
    Verdict {
        mode: ParseMode::StrictLenient,
        ..parse_strict(rest)
    }
}

pub fn parse_first_keyword(raw: &str) -> Verdict {
    Verdict {
        label: keyword_pattern().captures(raw).map(|c| label_of(&c[1])),
        mode: ParseMode::FirstKeyword,
    }
}

/// Three-way output class of a localisation-capable detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class3 {
    Real,
    FullSynthetic,
    Tampered,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown three-way class `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for Class3 {
    type Err = UnknownClass;

    /// Accepts `real`, `full synthetic` / `full_synthetic` / `fully synthetic`
    /// and `tampered`, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect();
        match key.as_str() {
            "real" => Ok(Class3::Real),
            "fullsynthetic" | "fullysynthetic" => Ok(Class3::FullSynthetic),
            "tampered" => Ok(Class3::Tampered),
            _ => Err(UnknownClass(s.to_string())),
        }
    }
}

pub fn sida_binarize(class: Class3) -> Verdict {
    let label = match class {
        Class3::Real => Label::Real,
        Class3::FullSynthetic | Class3::Tampered => Label::Fake,
    };
    Verdict {
        label: Some(label),
        mode: ParseMode::ThreeClass,
    }
}

/// Three-class parsing of raw text: the earliest class keyword decides.
pub fn parse_three_class(raw: &str) -> Verdict {
    class3_pattern()
        .captures(raw)
        .and_then(|c| c[1].parse::<Class3>().ok())
        .map(sida_binarize)
        .unwrap_or(Verdict::unparseable(ParseMode::ThreeClass))
}

pub fn parse_verdict(raw: &str, mode: ParseMode) -> Verdict {
    match mode {
        ParseMode::Strict => parse_strict(raw),
        ParseMode::StrictLenient => parse_strict_lenient(raw),
        ParseMode::FirstKeyword => parse_first_keyword(raw),
        ParseMode::ThreeClass => parse_three_class(raw),
    }
}

/// Nominal size, parseable count and failure rate of a prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCount {
    pub n0: usize,
    pub n_eff: usize,
    pub failure_rate: f64,
}

impl EffectiveCount {
    pub fn failures(&self) -> usize {
        self.n0 - self.n_eff
    }
}

pub fn effective_counts(records: &[PredictionRecord]) -> EffectiveCount {
    let n0 = records.len();
    let n_eff = records.iter().filter(|r| r.is_parseable()).count();
    let failure_rate = if n0 == 0 { 0.0 } else { (n0 - n_eff) as f64 / n0 as f64 };
    EffectiveCount {
        n0,
        n_eff,
        failure_rate,
    }
}
