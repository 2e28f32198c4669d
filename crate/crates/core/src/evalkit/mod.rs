//! Scoring of free-text predictions against compiled samples.
//!
//! Box tasks use COCO-style AP where every sample is its own image with a
//! single ground-truth region. Physical questions use per-concept
//! accuracy. Region maps use KLD, SIM and NSS. Unparseable outputs count
//! as misses.

mod ap;
mod report;
mod saliency;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use ap::{
    ap_from_flags, average_precision, coco_thresholds, greedy_match, recall_points, ApResult, Detection, GroundTruth,
};
pub use report::{aggregate_report, EvalReport, EvalSettings, MetricTable, TaskTally};
pub use report::{fixed4, ser_f64 as ser_f64_4, ser_map_f64 as ser_map_f64_4, ser_opt_f64 as ser_opt_f64_4};
pub use saliency::{
    heatmap_from_mask, kld, kld_with, nss, nss_scores, nss_with, sim, Heatmap, KlDirection, DEFAULT_EPS,
    DEFAULT_NSS_TAU,
};

use crate::compiler::VqaSample;
use crate::error::{Error, Result};
use crate::geometry::{parse_bbox, ImageRef, NormBBox};
use crate::ingest::AnnotationStore;
use crate::mask::{mask_iou, Raster, RleMask};
use crate::policy::{mask_for_box, pixel_rect};
use crate::types::{TaskType, TransparencyLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhysicalAnswer {
    Bool(bool),
    Level(TransparencyLevel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedAnswer {
    Box(NormBBox),
    Physical(PhysicalAnswer),
    Text(String),
}

/// A model output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub raw_text: String,
    pub parsed: Option<ParsedAnswer>,
    pub score: f64,
}

/// On-disk prediction line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub output_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

fn physical_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(true|false|transparent|translucent|opaque)\b").expect("valid regex"))
}

/// First physical answer word in `text`, case-insensitive.
pub fn parse_physical(text: &str) -> Option<PhysicalAnswer> {
    let m = physical_regex().find(text)?;
    match m.as_str().to_ascii_lowercase().as_str() {
        "true" => Some(PhysicalAnswer::Bool(true)),
        "false" => Some(PhysicalAnswer::Bool(false)),
        other => TransparencyLevel::from_str(other).ok().map(PhysicalAnswer::Level),
    }
}

/// Structured reading of a raw output for `task`; `None` when nothing
/// usable is found.
pub fn parse_prediction(raw_text: &str, task: TaskType) -> Option<ParsedAnswer> {
    match task {
        TaskType::RecObject | TaskType::RecAffordance | TaskType::RecGroundingAffordance => {
            parse_bbox(raw_text).ok().map(ParsedAnswer::Box)
        }
        TaskType::RegPhysical => parse_physical(raw_text).map(ParsedAnswer::Physical),
        TaskType::RegObject | TaskType::RegAffordance => {
            let t = raw_text.trim();
            (!t.is_empty()).then(|| ParsedAnswer::Text(t.to_string()))
        }
    }
}

pub fn to_record(line: &PredictionLine, task: TaskType) -> PredictionRecord {
    PredictionRecord {
        sample_id: line.id.clone(),
        raw_text: line.output_text.clone(),
        parsed: parse_prediction(&line.output_text, task),
        score: line.score.unwrap_or(1.0),
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn write_predictions(lines: &[PredictionLine], path: &Path) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::file_io(path, e))
}

/// Predictions that repeat each sample's reference answer.
pub fn echo_predictions(samples: &[VqaSample]) -> Vec<PredictionLine> {
    samples
        .iter()
        .map(|s| PredictionLine {
            id: s.id.clone(),
            output_text: s.answer.clone(),
            score: Some(1.0),
        })
        .collect()
}

/// Ground-truth region mask for a sample: the annotation's mask, or its
/// box rectangle when it has none.
pub fn reference_mask(store: &AnnotationStore, sample: &VqaSample) -> Result<(RleMask, ImageRef)> {
    let rec = store
        .annotations
        .get(&sample.source_annotation)
        .ok_or_else(|| Error::InvalidInput(format!("annotation {} not in store", sample.source_annotation)))?;
    let image = store
        .image_of(rec)
        .ok_or_else(|| Error::InvalidInput(format!("image {} not in store", rec.image)))?
        .clone();
    let mask = match &rec.mask {
        Some(m) => m.clone(),
        None => {
            let nb = parse_bbox(&sample.answer)?;
            let [x0, y0, x1, y1] = pixel_rect(&nb, &image);
            RleMask::from_raster(&Raster::from_rect(image.width, image.height, x0, y0, x1, y1))
        }
    };
    Ok((mask, image))
}

/// Reference masks keyed by sample id, for every REC sample whose
/// annotation is in the store.
pub fn echo_masks(store: &AnnotationStore, samples: &[VqaSample]) -> BTreeMap<String, RleMask> {
    samples
        .iter()
        .filter(|s| s.task.is_rec())
        .filter_map(|s| reference_mask(store, s).ok().map(|(m, _)| (s.id.clone(), m)))
        .collect()
}

pub fn read_masks(path: &Path) -> Result<BTreeMap<String, RleMask>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// What to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalTask {
    RecObject,
    RegObject,
    RecAffordance,
    RegAffordance,
    RecGroundingAffordance,
    RegPhysical,
    /// Region maps of the affordance REC samples.
    Heatmap,
}

impl EvalTask {
    pub const ALL: [EvalTask; 7] = [
        EvalTask::RecObject,
        EvalTask::RegObject,
        EvalTask::RecAffordance,
        EvalTask::RegAffordance,
        EvalTask::RecGroundingAffordance,
        EvalTask::RegPhysical,
        EvalTask::Heatmap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EvalTask::RecObject => "rec-object",
            EvalTask::RegObject => "reg-object",
            EvalTask::RecAffordance => "rec-affordance",
            EvalTask::RegAffordance => "reg-affordance",
            EvalTask::RecGroundingAffordance => "rec-grounding-affordance",
            EvalTask::RegPhysical => "reg-physical",
            EvalTask::Heatmap => "heatmap",
        }
    }

    fn sample_tasks(&self) -> Vec<TaskType> {
        match self {
            EvalTask::RecObject => vec![TaskType::RecObject],
            EvalTask::RegObject => vec![TaskType::RegObject],
            EvalTask::RecAffordance => vec![TaskType::RecAffordance],
            EvalTask::RegAffordance => vec![TaskType::RegAffordance],
            EvalTask::RecGroundingAffordance => vec![TaskType::RecGroundingAffordance],
            EvalTask::RegPhysical => vec![TaskType::RegPhysical],
            EvalTask::Heatmap => vec![TaskType::RecAffordance, TaskType::RecGroundingAffordance],
        }
    }
}

impl FromStr for EvalTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('_', "-");
        EvalTask::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown eval task {s:?}")))
    }
}

/// Optional inputs for the mask and map metrics.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalContext<'a> {
    pub store: Option<&'a AnnotationStore>,
    /// External segmentation per sample id.
    pub masks: Option<&'a BTreeMap<String, RleMask>>,
}

fn normalize_text(s: &str) -> String {
    s.trim()
        .trim_end_matches('.')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn category_of(s: &VqaSample) -> String {
    s.meta.get("category").cloned().unwrap_or_else(|| "unknown".into())
}

struct Joined<'a> {
    sample: &'a VqaSample,
    pred: Option<PredictionRecord>,
}

fn join<'a>(
    samples: &'a [VqaSample],
    preds: &BTreeMap<&str, &PredictionLine>,
    tasks: &[TaskType],
) -> (Vec<Joined<'a>>, TaskTally) {
    let mut tally = TaskTally::default();
    let mut out = Vec::new();
    for s in samples.iter().filter(|s| tasks.contains(&s.task)) {
        tally.samples += 1;
        let pred = preds.get(s.id.as_str()).map(|l| to_record(l, s.task));
        match &pred {
            None => tally.missing += 1,
            Some(p) if p.parsed.is_none() => tally.unparseable += 1,
            Some(_) => {}
        }
        out.push(Joined { sample: s, pred });
    }
    (out, tally)
}

fn predicted_box(j: &Joined) -> Option<(NormBBox, f64)> {
    match j.pred.as_ref()? {
        PredictionRecord {
            parsed: Some(ParsedAnswer::Box(b)),
            score,
            ..
        } => Some((*b, *score)),
        _ => None,
    }
}

fn box_tables(
    task: &str,
    joined: &[Joined],
    ctx: &EvalContext,
    settings: &EvalSettings,
    notes: &mut Vec<String>,
) -> Vec<MetricTable> {
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for j in joined {
        let Ok(gt) = parse_bbox(&j.sample.answer) else {
            notes.push(format!("{task}: reference answer of {} has no box", j.sample.id));
            continue;
        };
        let cat = category_of(j.sample);
        gts.push(GroundTruth {
            image: j.sample.id.clone(),
            category: cat.clone(),
            region: gt,
        });
        if let Some((b, score)) = predicted_box(j) {
            dets.push(Detection {
                image: j.sample.id.clone(),
                category: cat,
                score,
                region: b,
            });
        }
    }
    let ap = average_precision(&dets, &gts, &settings.iou_thresholds, |a, b| a.iou(b));
    let mut tables = ap_tables(task, "box", &ap, settings);

    let Some(store) = ctx.store else {
        notes.push(format!("{task}: no annotation store given; mask AP skipped"));
        return tables;
    };
    let mut mgts = Vec::new();
    let mut mdets = Vec::new();
    for j in joined {
        let (gt_mask, image) = match reference_mask(store, j.sample) {
            Ok(x) => x,
            Err(e) => {
                notes.push(format!("{task}: {}: {e}", j.sample.id));
                continue;
            }
        };
        let cat = category_of(j.sample);
        mgts.push(GroundTruth {
            image: j.sample.id.clone(),
            category: cat.clone(),
            region: gt_mask,
        });
        if let Some((b, score)) = predicted_box(j) {
            let ext = ctx.masks.and_then(|m| m.get(&j.sample.id));
            match mask_for_box(&b, &image, ext) {
                Ok((m, _)) => mdets.push(Detection {
                    image: j.sample.id.clone(),
                    category: cat,
                    score,
                    region: m,
                }),
                Err(e) => notes.push(format!("{task}: {}: {e}", j.sample.id)),
            }
        }
    }
    let ap = average_precision(&mdets, &mgts, &settings.iou_thresholds, |a, b| {
        mask_iou(a, b).unwrap_or(0.0)
    });
    tables.extend(ap_tables(task, "mask", &ap, settings));
    tables
}

fn ap_tables(task: &str, kind: &str, ap: &ApResult, settings: &EvalSettings) -> Vec<MetricTable> {
    let mut mean = MetricTable::new(task, &format!("ap_{kind}"), ap.mean_over_thresholds());
    mean.per_threshold = settings
        .iou_thresholds
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let vals: Vec<f64> = ap.per_category.values().map(|v| v[i]).collect();
            let m = if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            (format!("{t:.2}"), m)
        })
        .collect();
    let ap50 = MetricTable::new(task, &format!("ap50_{kind}"), ap.at(0.5));
    vec![mean, ap50]
}

/// Per-concept accuracy; unparseable or missing answers count as wrong.
pub fn physical_accuracy(joined_samples: &[VqaSample], preds: &[PredictionLine]) -> (MetricTable, TaskTally) {
    let index: BTreeMap<&str, &PredictionLine> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let (joined, tally) = join(joined_samples, &index, &[TaskType::RegPhysical]);
    (physical_table(&joined), tally)
}

fn physical_table(joined: &[Joined]) -> MetricTable {
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for j in joined {
        let concept = j
            .sample
            .meta
            .get("concept")
            .cloned()
            .unwrap_or_else(|| "unknown".into());
        let want = parse_physical(&j.sample.answer);
        let got = j.pred.as_ref().and_then(|p| match &p.parsed {
            Some(ParsedAnswer::Physical(a)) => Some(*a),
            _ => None,
        });
        let e = hits.entry(concept).or_default();
        e.1 += 1;
        if want.is_some() && got == want {
            e.0 += 1;
        }
    }
    let per = hits.into_iter().map(|(c, (h, n))| (c, h as f64 / n as f64)).collect();
    MetricTable::new("reg-physical", "accuracy", per)
}

fn text_table(task: &str, joined: &[Joined]) -> MetricTable {
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for j in joined {
        let e = hits.entry(category_of(j.sample)).or_default();
        e.1 += 1;
        if let Some(PredictionRecord {
            parsed: Some(ParsedAnswer::Text(t)),
            ..
        }) = &j.pred
        {
            if normalize_text(t) == normalize_text(&j.sample.answer) {
                e.0 += 1;
            }
        }
    }
    let per = hits.into_iter().map(|(c, (h, n))| (c, h as f64 / n as f64)).collect();
    MetricTable::new(task, "exact_match", per)
}

fn heatmap_tables(
    joined: &[Joined],
    ctx: &EvalContext,
    settings: &EvalSettings,
    notes: &mut Vec<String>,
) -> Vec<MetricTable> {
    let Some(store) = ctx.store else {
        notes.push("heatmap: no annotation store given; skipped".into());
        return vec![];
    };
    let mut acc: BTreeMap<String, [Vec<f64>; 3]> = BTreeMap::new();
    for j in joined {
        let (gt_mask, image) = match reference_mask(store, j.sample) {
            Ok(x) => x,
            Err(e) => {
                notes.push(format!("heatmap: {}: {e}", j.sample.id));
                continue;
            }
        };
        let gt = heatmap_from_mask(&gt_mask);
        let pred = match predicted_box(j) {
            Some((b, _)) => {
                let ext = ctx.masks.and_then(|m| m.get(&j.sample.id));
                match mask_for_box(&b, &image, ext) {
                    Ok((m, _)) => heatmap_from_mask(&m),
                    Err(e) => {
                        notes.push(format!("heatmap: {}: {e}", j.sample.id));
                        Heatmap::zeros(image.width, image.height)
                    }
                }
            }
            None => Heatmap::zeros(image.width, image.height),
        };
        let metrics = (
            kld_with(&gt, &pred, settings.eps, settings.kld_direction),
            sim(&gt, &pred),
            nss_with(&gt, &pred, settings.nss_tau),
        );
        match metrics {
            (Ok(k), Ok(s), Ok(n)) => {
                let e = acc.entry(category_of(j.sample)).or_default();
                e[0].push(k);
                e[1].push(s);
                e[2].push(n);
            }
            _ => notes.push(format!("heatmap: {}: metric undefined (empty map)", j.sample.id)),
        }
    }
    ["kld", "sim", "nss"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let per = acc
                .iter()
                .map(|(c, v)| (c.clone(), v[i].iter().sum::<f64>() / v[i].len() as f64))
                .collect();
            MetricTable::new("heatmap", name, per)
        })
        .collect()
}

/// Scores `preds` against `samples` for each requested task.
pub fn evaluate(
    samples: &[VqaSample],
    preds: &[PredictionLine],
    tasks: &[EvalTask],
    ctx: &EvalContext,
    settings: &EvalSettings,
) -> EvalReport {
    let mut index: BTreeMap<&str, &PredictionLine> = BTreeMap::new();
    let mut notes = Vec::new();
    for p in preds {
        if index.insert(p.id.as_str(), p).is_some() {
            notes.push(format!("duplicate prediction for {}; the last one is used", p.id));
        }
    }
    let known: std::collections::BTreeSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let stray = index.keys().filter(|k| !known.contains(*k)).count();
    if stray > 0 {
        notes.push(format!("{stray} predictions do not match any sample and were ignored"));
    }
    let mut tables = Vec::new();
    let mut tallies = BTreeMap::new();
    let mut sorted_tasks = tasks.to_vec();
    sorted_tasks.sort();
    sorted_tasks.dedup();
    for task in sorted_tasks {
        let (joined, tally) = join(samples, &index, &task.sample_tasks());
        let name = task.as_str();
        match task {
            EvalTask::RecObject | EvalTask::RecAffordance | EvalTask::RecGroundingAffordance => {
                tables.extend(box_tables(name, &joined, ctx, settings, &mut notes))
            }
            EvalTask::RegObject | EvalTask::RegAffordance => tables.push(text_table(name, &joined)),
            EvalTask::RegPhysical => tables.push(physical_table(&joined)),
            EvalTask::Heatmap => tables.extend(heatmap_tables(&joined, ctx, settings, &mut notes)),
        }
        tallies.insert(name.to_string(), tally);
    }
    aggregate_report(tables, tallies, settings.clone(), notes)
}
