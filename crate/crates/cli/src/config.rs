use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gazekit::corpus::{SplitRatios, DEFAULT_SEED};
use gazekit::diagnostics::GateRule;
use gazekit::formats::ParseModes;
use gazekit::metrics::{Rounding, ViewChoice};
use gazekit::MacroPool;
use serde::{Deserialize, Serialize};

use crate::GlobalArgs;

/// Optional JSON run configuration. Command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub pool_path: Option<PathBuf>,
    /// `MODE` or `MODEL=MODE` entries, applied in order.
    pub parse_modes: Vec<String>,
    pub split_ratios: Option<SplitRatios>,
    pub gate_rules: Option<Vec<GateRule>>,
    pub benchmark_manifests: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub view: Option<ViewChoice>,
    pub rounding: Option<Rounding>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub pool: MacroPool,
    pub pool_path: Option<PathBuf>,
    pub parse_modes: ParseModes,
    pub split_ratios: SplitRatios,
    pub gate_rules: Vec<GateRule>,
    pub gate_path: Option<PathBuf>,
    pub benchmark_manifests: Vec<PathBuf>,
    pub out: PathBuf,
    pub view: ViewChoice,
    pub rounding: Rounding,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Settings> {
        let config = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let pool_path = args.pool.clone().or(config.pool_path);
        let pool = match &pool_path {
            Some(p) => MacroPool::load(p).with_context(|| format!("loading pool {}", p.display()))?,
            None => MacroPool::default_pool(),
        };
        let mut parse_modes = ParseModes::default();
        for setting in config.parse_modes.iter().chain(&args.parse_mode) {
            parse_modes
                .apply(setting)
                .map_err(|e| anyhow!("--parse-mode {setting}: {e}"))?;
        }
        let gate_rules = match &args.gate {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing gate rules {}", path.display()))?
            }
            None => config
                .gate_rules
                .unwrap_or_else(|| vec![GateRule::single_person_gaze()]),
        };
        let view = match &args.view {
            Some(v) => v.parse().map_err(|e: String| anyhow!(e))?,
            None => config.view.unwrap_or_default(),
        };
        let rounding = match &args.rounding {
            Some(r) => r.parse().map_err(|e: String| anyhow!(e))?,
            None => config.rounding.unwrap_or_default(),
        };
        Ok(Settings {
            seed: args.seed.or(config.seed).unwrap_or(DEFAULT_SEED),
            pool,
            pool_path,
            parse_modes,
            split_ratios: config.split_ratios.unwrap_or_default(),
            gate_rules,
            gate_path: args.gate.clone(),
            benchmark_manifests: config.benchmark_manifests,
            out: args
                .out
                .clone()
                .or(config.output_dir)
                .unwrap_or_else(|| PathBuf::from(".")),
            view,
            rounding,
        })
    }

    /// Settings as recorded in the replay manifest.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "pool_path": self.pool_path,
            "parse_modes": self.parse_modes,
            "split_ratios": self.split_ratios,
            "gate_rules": self.gate_rules,
            "view": self.view,
            "rounding": self.rounding,
        })
    }
}

/// `8:1:1` style ratios.
pub fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let parts: Vec<&str> = text.split(':').collect();
    let [train, val, test] = parts.as_slice() else {
        bail!("ratios must look like TRAIN:VAL:TEST, got `{text}`");
    };
    let num = |s: &str| s.trim().parse::<u32>().with_context(|| format!("bad ratio `{s}`"));
    Ok(SplitRatios {
        train: num(train)?,
        val: num(val)?,
        test: num(test)?,
    })
}
