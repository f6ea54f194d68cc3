use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gazekit::corpus::{
    emit_datasheet, filter_mutual_gaze, grouped_stratified_split, leakage_check, pair_samples, unpack_pairs,
    GazeAnnotation, PairRecord, Split,
};
use gazekit::diagnostics::apply_card_gate;
use gazekit::formats::{
    check_log_against_manifest, read_benchmark_manifest_path, read_jsonl_path, records_from_lines, write_jsonl_path,
    FormatError, LogLine, ManifestEntry,
};
use gazekit::geometry::{pair_integrity, FaceBBox, ImageRaster, IntegrityReport, MaskRecord};
use gazekit::selection::{decoupling_report, from_trainer_state, select_checkpoint, validate_run, EvalSnapshot};
use gazekit::{Label, PredictionRecord};
use serde::{Deserialize, Serialize};

use crate::config::{parse_ratios, Settings};
use crate::replay::Recorder;
use crate::report::{diagnostics_report, group, render_scores, score_report};
use crate::{Cli, Command, EXIT_CHECK_FAILED};

struct Ctx {
    settings: Settings,
    rec: Recorder,
}

impl Ctx {
    fn input(&mut self, path: &Path) {
        self.rec.input(path);
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.settings.out.join(name)
    }

    fn write_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<PathBuf> {
        let path = self.out_path(name);
        write_jsonl_path(&path, records)?;
        self.rec.output(&path);
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out_path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.rec.output(&path);
        Ok(path)
    }
}

pub fn execute(cli: Cli, raw_args: Vec<String>) -> Result<u8> {
    let settings = Settings::resolve(&cli.global)?;
    fs::create_dir_all(&settings.out).with_context(|| format!("creating {}", settings.out.display()))?;
    let mut ctx = Ctx {
        settings,
        rec: Recorder::default(),
    };
    if let Some(p) = cli.global.config.as_deref() {
        ctx.input(p);
    }
    if let Some(p) = ctx.settings.pool_path.clone() {
        ctx.input(&p);
    }
    if let Some(p) = ctx.settings.gate_path.clone() {
        ctx.input(&p);
    }
    let (name, code) = match cli.command {
        Command::Compose(a) => ("compose", compose(&mut ctx, a)?),
        Command::Unpack(a) => ("unpack", unpack(&mut ctx, a)?),
        Command::Split(a) => ("split", split(&mut ctx, a)?),
        Command::Mask(a) => ("mask", mask(&mut ctx, a)?),
        Command::VerifyPairs(a) => ("verify-pairs", verify_pairs(&mut ctx, a)?),
        Command::Eval(a) => ("eval", eval(&mut ctx, a)?),
        Command::Select(a) => ("select", select(&mut ctx, a)?),
        Command::Gate(a) => ("gate", gate(&mut ctx, a)?),
    };
    let config = ctx.settings.describe();
    ctx.rec
        .finish(name, raw_args, ctx.settings.seed, config, &ctx.settings.out)?;
    Ok(code)
}

#[derive(Debug, Serialize, Deserialize)]
struct ComposeHeader {
    seed: u64,
    n_per_label: usize,
    caption_space: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaptionLine {
    sample_id: String,
    label: Label,
    template: [u8; 4],
    caption: String,
}

fn compose(ctx: &mut Ctx, args: crate::ComposeArgs) -> Result<u8> {
    let seed = ctx.settings.seed;
    let pairs = match &args.pairs {
        Some(path) => {
            ctx.input(path);
            let pairs: Vec<PairRecord> = read_records(path)?;
            pairs.into_iter().filter(|p| p.split == Split::Train).collect()
        }
        None => Vec::new(),
    };
    let n = args.n_per_label.unwrap_or(pairs.len());
    let pool = &ctx.settings.pool;
    let assigned = pool.assign_captions(n, seed);
    let mut lines = Vec::with_capacity(assigned.len());
    let mut usage: BTreeMap<_, usize> = BTreeMap::new();
    for (i, t) in assigned.iter().enumerate() {
        let k = i % n.max(1);
        let sample_id = match pairs.get(k) {
            Some(p) if t.label == Label::Real => p.real_sample_id(),
            Some(p) => p.fake_sample_id(),
            None => format!("{}-{k:06}", t.label),
        };
        *usage.entry(*t).or_default() += 1;
        lines.push(serde_json::to_value(CaptionLine {
            sample_id,
            label: t.label,
            template: [t.scene, t.method, t.evidence, t.conclusion],
            caption: pool.compose(*t)?.text,
        })?);
    }
    let header = serde_json::to_value(ComposeHeader {
        seed,
        n_per_label: n,
        caption_space: pool.caption_space_size(),
    })?;
    lines.insert(0, serde_json::json!({ "header": header }));
    ctx.write_jsonl("captions.jsonl", &lines)?;
    let (lo, hi) = (
        usage.values().min().copied().unwrap_or(0),
        usage.values().max().copied().unwrap_or(0),
    );
    println!(
        "{} captions ({} per label), {} templates used {lo}..{hi} times",
        2 * n,
        n,
        usage.len()
    );
    Ok(0)
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_jsonl_path(path)
        .with_context(|| format!("reading {}", path.display()))?
        .into_iter()
        .map(|(_, v)| v)
        .collect())
}

fn unpack(ctx: &mut Ctx, args: crate::UnpackArgs) -> Result<u8> {
    ctx.input(&args.annotations);
    let anns: Vec<GazeAnnotation> = read_records(&args.annotations)?;
    let total = anns.len();
    let kept = filter_mutual_gaze(anns);
    let pairs = unpack_pairs(&kept)?;
    ctx.write_jsonl("pairs.jsonl", &pairs)?;
    println!("{} of {total} images kept, {} pairs", kept.len(), pairs.len());
    Ok(0)
}

fn fill(pattern: &str, pair: &PairRecord) -> String {
    pattern
        .replace("{image_id}", &pair.image_id)
        .replace("{base}", &pair.base_id.replace(['#', '/'], "_"))
}

fn split(ctx: &mut Ctx, args: crate::SplitArgs) -> Result<u8> {
    ctx.input(&args.pairs);
    let ratios = match &args.ratios {
        Some(r) => parse_ratios(r)?,
        None => ctx.settings.split_ratios,
    };
    let mut pairs: Vec<PairRecord> = read_records(&args.pairs)?;
    let seed = ctx.settings.seed;
    let summary = grouped_stratified_split(&mut pairs, ratios, seed)?;
    if let Err(leaks) = leakage_check(&pair_samples(&pairs)) {
        bail!("{} base ids leak across splits, first: {}", leaks.len(), leaks[0]);
    }
    ctx.write_jsonl("pairs.split.jsonl", &pairs)?;
    let provenance = vec![args.pairs.display().to_string()];
    let sheet = emit_datasheet(&args.name, &pairs, provenance, Some(seed));
    ctx.write_json("datasheet.json", &sheet)?;
    ctx.write_text("datasheet.txt", &sheet.render_text())?;
    for split in [Split::Val, Split::Test] {
        let mut entries = Vec::new();
        for p in pairs.iter().filter(|p| p.split == split) {
            let benchmark = format!("gaze_{}", split.as_str());
            entries.push(ManifestEntry {
                id: p.real_sample_id(),
                image_path: fill(&args.real_pattern, p),
                label: Label::Real,
                benchmark: benchmark.clone(),
                generator: None,
                person_count: None,
            });
            entries.push(ManifestEntry {
                id: p.fake_sample_id(),
                image_path: fill(&args.fake_pattern, p),
                label: Label::Fake,
                benchmark,
                generator: None,
                person_count: None,
            });
        }
        ctx.write_jsonl(&format!("manifest.{}.jsonl", split.as_str()), &entries)?;
    }
    println!(
        "{} groups: train {} / val {} / test {} pairs (seed {seed})",
        summary.groups, summary.train, summary.val, summary.test
    );
    Ok(0)
}

fn find_image(dir: &Path, image_id: &str) -> Result<PathBuf> {
    for ext in ["png", "jpg", "jpeg"] {
        let p = dir.join(format!("{image_id}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("no image for `{image_id}` in {}", dir.display())
}

fn mask(ctx: &mut Ctx, args: crate::MaskArgs) -> Result<u8> {
    ctx.input(&args.pairs);
    let pairs: Vec<PairRecord> = read_records(&args.pairs)?;
    let mask_dir = ctx.out_path("masks");
    fs::create_dir_all(&mask_dir)?;
    let mut dims: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    let mut records = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let (w, h) = match dims.get(&p.image_id) {
            Some(d) => *d,
            None => {
                let path = find_image(&args.images, &p.image_id)?;
                ctx.input(&path);
                let img = ImageRaster::load(&path)?;
                dims.insert(p.image_id.clone(), (img.width(), img.height()));
                (img.width(), img.height())
            }
        };
        let (mut record, raster) = MaskRecord::build(&p.image_id, *p.perturbed_bbox(), w, h, args.blur)
            .with_context(|| format!("pair {}", p.base_id))?;
        record.base_id = Some(p.base_id.clone());
        let path = mask_dir.join(format!("{}.png", p.base_id.replace(['#', '/'], "_")));
        raster.save_png(&path)?;
        ctx.rec.output(&path);
        records.push(record);
    }
    ctx.write_jsonl("masks.jsonl", &records)?;
    println!("{} masks written to {}", records.len(), mask_dir.display());
    Ok(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairCheck {
    pub id: String,
    pub real: PathBuf,
    pub fake: PathBuf,
    pub bbox: FaceBBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairCheckResult {
    id: String,
    #[serde(flatten)]
    report: IntegrityReport,
}

fn verify_pairs(ctx: &mut Ctx, args: crate::VerifyArgs) -> Result<u8> {
    ctx.input(&args.checks);
    let checks: Vec<PairCheck> = read_records(&args.checks)?;
    let base = args.checks.parent().unwrap_or(Path::new("."));
    let mut results = Vec::with_capacity(checks.len());
    for c in &checks {
        let (real_path, fake_path) = (base.join(&c.real), base.join(&c.fake));
        ctx.input(&real_path);
        ctx.input(&fake_path);
        let real = ImageRaster::load(&real_path)?;
        let fake = ImageRaster::load(&fake_path)?;
        let rect = gazekit::geometry::eye_region_band(&c.bbox, real.width(), real.height())
            .with_context(|| format!("pair {}", c.id))?;
        let report = pair_integrity(&real, &fake, &rect, args.dilation, args.tolerance)
            .with_context(|| format!("pair {}", c.id))?;
        println!(
            "{} {}: max outside diff {}, {} violating pixels",
            if report.pass { "PASS" } else { "FAIL" },
            c.id,
            report.max_outside_diff,
            report.violating_pixel_count
        );
        results.push(PairCheckResult {
            id: c.id.clone(),
            report,
        });
    }
    ctx.write_jsonl("integrity.jsonl", &results)?;
    let failed = results.iter().filter(|r| !r.report.pass).count();
    println!("{failed} of {} pairs failed", results.len());
    Ok(if failed == 0 { 0 } else { EXIT_CHECK_FAILED })
}

fn load_logs(ctx: &mut Ctx, paths: &[PathBuf]) -> Result<Vec<PredictionRecord>> {
    let mut all = Vec::new();
    let mut seen = HashSet::new();
    for path in paths {
        ctx.input(path);
        let lines: Vec<(usize, LogLine)> =
            read_jsonl_path(path).with_context(|| format!("reading {}", path.display()))?;
        let line_of: Vec<usize> = lines.iter().map(|(n, _)| *n).collect();
        let records = records_from_lines(lines, &ctx.settings.parse_modes)
            .with_context(|| format!("validating {}", path.display()))?;
        for (r, line) in records.into_iter().zip(line_of) {
            let key = (r.model.clone(), r.benchmark.clone(), r.id.clone());
            if !seen.insert(key) {
                return Err(FormatError::SchemaViolation {
                    line,
                    message: format!("`{}` in `{}` already appeared in an earlier log", r.id, r.benchmark),
                })
                .with_context(|| format!("validating {}", path.display()));
            }
            all.push(r);
        }
    }
    Ok(all)
}

fn eval(ctx: &mut Ctx, args: crate::EvalArgs) -> Result<u8> {
    let records = load_logs(ctx, &args.logs)?;
    let manifests: Vec<PathBuf> = ctx
        .settings
        .benchmark_manifests
        .iter()
        .chain(&args.manifest)
        .cloned()
        .collect();
    let mut coverage_problems = Vec::new();
    if !manifests.is_empty() {
        let mut entries = Vec::new();
        for m in &manifests {
            ctx.input(m);
            entries.extend(read_benchmark_manifest_path(m).with_context(|| format!("reading {}", m.display()))?);
        }
        for (model, recs) in group_by_model(&records) {
            for p in check_log_against_manifest(&entries, &recs) {
                coverage_problems.push(format!("{model}: {p}"));
            }
        }
    }
    let groups = group(records);
    let report = score_report(&groups, ctx.settings.view, ctx.settings.rounding)?;
    let diagnostics = diagnostics_report(&groups, &ctx.settings.pool, args.max_new_tokens)?;
    ctx.write_json("scores.json", &report)?;
    let text = render_scores(&report);
    ctx.write_text("scores.txt", &text)?;
    ctx.write_json("diagnostics.json", &diagnostics)?;
    print!("{text}");
    if !coverage_problems.is_empty() {
        ctx.write_text("coverage.txt", &(coverage_problems.join("\n") + "\n"))?;
        eprintln!(
            "{} manifest coverage problems, see coverage.txt",
            coverage_problems.len()
        );
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(0)
}

fn group_by_model(records: &[PredictionRecord]) -> BTreeMap<String, Vec<PredictionRecord>> {
    let mut out: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        let model = r.model.clone().unwrap_or_else(|| crate::report::NO_MODEL.to_string());
        out.entry(model).or_default().push(r.clone());
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionOutput {
    selected: EvalSnapshot,
    decoupling: gazekit::selection::DecouplingReport,
    snapshots: usize,
}

fn select(ctx: &mut Ctx, args: crate::SelectArgs) -> Result<u8> {
    ctx.input(&args.trace);
    let text = fs::read_to_string(&args.trace).with_context(|| format!("reading {}", args.trace.display()))?;
    let whole: Option<serde_json::Value> = serde_json::from_str(&text).ok();
    let run: Vec<EvalSnapshot> = match whole {
        Some(v) if v.get("log_history").is_some() => from_trainer_state(&v)?,
        _ => read_records(&args.trace)?,
    };
    validate_run(&run)?;
    let selected = select_checkpoint(&run)?.clone();
    let decoupling = decoupling_report(&run)?;
    println!(
        "selected step {} (eval_balanced_accuracy {:.4})",
        selected.step, selected.eval_ba
    );
    println!(
        "eval loss minimum at step {} ({:.4}), {} steps away",
        decoupling.loss_min_step, decoupling.loss_min, decoupling.step_gap
    );
    ctx.write_json(
        "selection.json",
        &SelectionOutput {
            selected,
            decoupling,
            snapshots: run.len(),
        },
    )?;
    Ok(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct GateSummary {
    model: String,
    benchmark: String,
    flipped: usize,
    before: gazekit::metrics::ConfusionMatrix,
    after: gazekit::metrics::ConfusionMatrix,
    ba_before: Option<f64>,
    ba_after: Option<f64>,
    delta_ba: Option<f64>,
}

fn gate(ctx: &mut Ctx, args: crate::GateArgs) -> Result<u8> {
    let records = load_logs(ctx, &args.logs)?;
    let mut gated = Vec::with_capacity(records.len());
    let mut summaries = Vec::new();
    for ((model, benchmark), recs) in group(records) {
        let outcome = apply_card_gate(&recs, &ctx.settings.gate_rules, &ctx.settings.pool)
            .with_context(|| format!("gating {model} on {benchmark}"))?;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        println!(
            "{model} {benchmark}: {} flipped, BA {} -> {} ({})",
            outcome.flipped,
            fmt(outcome.ba_before),
            fmt(outcome.ba_after),
            fmt(outcome.delta_ba)
        );
        summaries.push(GateSummary {
            model,
            benchmark,
            flipped: outcome.flipped,
            before: outcome.before,
            after: outcome.after,
            ba_before: outcome.ba_before,
            ba_after: outcome.ba_after,
            delta_ba: outcome.delta_ba,
        });
        gated.extend(outcome.records);
    }
    ctx.write_jsonl("gated.jsonl", &gated)?;
    ctx.write_json("gate_report.json", &summaries)?;
    Ok(0)
}
