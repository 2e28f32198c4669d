//! Instruction-pair compilation: task templates over an annotation store,
//! task mixing, train/val split and JSONL output.

mod tasks;
mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use tasks::{
    affordance_phrase, compile_all, compile_grounding_affordance, compile_rec_affordance, compile_rec_object,
    compile_reg_affordance, compile_reg_object, compile_reg_physical, object_phrase, CompileOptions, SkipTally,
    VqaSample,
};
pub use templates::{choose, Templates};

use crate::augment::TaskArtifact;
use crate::error::{Error, Result};
use crate::ingest::AnnotationStore;
use crate::seed::{keyed_unit, stream_rng};
use crate::types::TaskType;

/// How many samples of each task type to keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MixTargets {
    /// Keep everything.
    All,
    /// Absolute counts; types not listed are dropped.
    Counts { counts: BTreeMap<TaskType, usize> },
    /// Fractions summing to 1. The largest total that every type can
    /// supply at these fractions is used.
    Ratios { ratios: BTreeMap<TaskType, f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub targets: MixTargets,
    pub seed: u64,
    /// Share of images routed to the validation split.
    pub val_fraction: f64,
}

impl Default for MixSpec {
    fn default() -> Self {
        MixSpec {
            targets: MixTargets::All,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

/// Sample-count proportions of the four task groups (object 36, affordance
/// 26, grounding 15, physical 7), with each REC/REG pair split evenly.
pub const TABLE_PRESET_WEIGHTS: [(TaskType, f64); 6] = [
    (TaskType::RecObject, 18.0),
    (TaskType::RegObject, 18.0),
    (TaskType::RecAffordance, 13.0),
    (TaskType::RegAffordance, 13.0),
    (TaskType::RecGroundingAffordance, 15.0),
    (TaskType::RegPhysical, 7.0),
];

impl MixSpec {
    pub fn preset(seed: u64, val_fraction: f64) -> Self {
        let total: f64 = TABLE_PRESET_WEIGHTS.iter().map(|(_, w)| w).sum();
        MixSpec {
            targets: MixTargets::Ratios {
                ratios: TABLE_PRESET_WEIGHTS.iter().map(|&(t, w)| (t, w / total)).collect(),
            },
            seed,
            val_fraction,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidInput(format!(
                "val_fraction {} outside [0, 1]",
                self.val_fraction
            )));
        }
        if let MixTargets::Ratios { ratios } = &self.targets {
            if ratios.values().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(Error::InvalidInput("ratios must be non-negative".into()));
            }
            let sum: f64 = ratios.values().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("ratios sum to {sum}, expected 1")));
            }
        }
        Ok(())
    }

    /// Per-type targets given what is available.
    pub fn resolve(&self, available: &BTreeMap<TaskType, usize>) -> BTreeMap<TaskType, usize> {
        let avail = |t: &TaskType| available.get(t).copied().unwrap_or(0);
        match &self.targets {
            MixTargets::All => TaskType::ALL.iter().map(|t| (*t, avail(t))).collect(),
            MixTargets::Counts { counts } => TaskType::ALL
                .iter()
                .map(|t| (*t, counts.get(t).copied().unwrap_or(0)))
                .collect(),
            MixTargets::Ratios { ratios } => {
                let active: Vec<(TaskType, f64)> = ratios
                    .iter()
                    .filter(|(_, r)| **r > 0.0)
                    .map(|(t, r)| (*t, *r))
                    .collect();
                let total = active
                    .iter()
                    .map(|(t, r)| (avail(t) as f64 / r).floor() as usize)
                    .min()
                    .unwrap_or(0);
                TaskType::ALL
                    .iter()
                    .map(|t| {
                        let r = ratios.get(t).copied().unwrap_or(0.0);
                        (*t, (r * total as f64 + 0.5).floor() as usize)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub available: usize,
    pub target: usize,
    pub selected: usize,
    pub train: usize,
    pub val: usize,
    /// True when the target exceeded what was available.
    pub clamped: bool,
    pub skipped: SkipTally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileManifest {
    pub seed: u64,
    pub val_fraction: f64,
    pub train_fraction: f64,
    pub templates_version: u32,
    pub paraphrase: bool,
    pub mix: MixTargets,
    pub tasks: BTreeMap<TaskType, TaskCounts>,
    pub train_total: usize,
    pub val_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<VqaSample>,
    pub val: Vec<VqaSample>,
    pub manifest: CompileManifest,
}

/// True when `image` belongs to the validation split.
pub fn is_val_image(seed: u64, image: &str, val_fraction: f64) -> bool {
    keyed_unit(seed, &format!("split:{image}")) < val_fraction
}

/// Subsamples each task type to its target (seeded shuffle, then prefix)
/// and splits by image so no image lands in both splits. Targets above
/// what is available are clamped with a warning.
pub fn mix_and_split(compiled: BTreeMap<TaskType, (Vec<VqaSample>, SkipTally)>, spec: &MixSpec) -> Result<Dataset> {
    spec.check()?;
    let available: BTreeMap<TaskType, usize> = compiled.iter().map(|(t, (s, _))| (*t, s.len())).collect();
    let targets = spec.resolve(&available);
    let mut counts = BTreeMap::new();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for task in TaskType::ALL {
        let (mut samples, skipped) = compiled.get(&task).cloned().unwrap_or_default();
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        let target = targets.get(&task).copied().unwrap_or(0);
        let clamped = target > samples.len();
        if clamped {
            log::warn!(
                "{}: target {target} exceeds the {} available samples; clamped",
                task.as_str(),
                samples.len()
            );
        }
        let keep = target.min(samples.len());
        let available = samples.len();
        if keep < samples.len() {
            samples.shuffle(&mut stream_rng(spec.seed, &format!("mix:{}", task.as_str())));
            samples.truncate(keep);
        }
        let mut c = TaskCounts {
            available,
            target,
            selected: keep,
            clamped,
            skipped,
            ..Default::default()
        };
        for s in samples {
            if is_val_image(spec.seed, &s.image, spec.val_fraction) {
                c.val += 1;
                val.push(s);
            } else {
                c.train += 1;
                train.push(s);
            }
        }
        counts.insert(task, c);
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    val.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Dataset {
        manifest: CompileManifest {
            seed: spec.seed,
            val_fraction: spec.val_fraction,
            train_fraction: 1.0 - spec.val_fraction,
            templates_version: 0,
            paraphrase: true,
            mix: spec.targets.clone(),
            tasks: counts,
            train_total: train.len(),
            val_total: val.len(),
        },
        train,
        val,
    })
}

/// Compiles every task family and applies the mix.
pub fn compile_dataset(
    store: &AnnotationStore,
    tasks: &TaskArtifact,
    opts: &CompileOptions,
    spec: &MixSpec,
) -> Result<Dataset> {
    let opts = CompileOptions {
        seed: spec.seed,
        ..opts.clone()
    };
    let mut ds = mix_and_split(compile_all(store, tasks, &opts), spec)?;
    ds.manifest.templates_version = opts.templates.version;
    ds.manifest.paraphrase = opts.paraphrase;
    Ok(ds)
}

#[derive(Serialize)]
struct Turn<'a> {
    from: &'a str,
    value: &'a str,
}

#[derive(Serialize)]
struct Line<'a> {
    id: &'a str,
    image: &'a str,
    task: TaskType,
    conversations: [Turn<'a>; 2],
    meta: &'a BTreeMap<String, String>,
}

/// One JSON object per line, sorted by id.
pub fn render_jsonl(samples: &[VqaSample]) -> String {
    let mut sorted: Vec<&VqaSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = String::new();
    for s in sorted {
        let line = Line {
            id: &s.id,
            image: &s.image,
            task: s.task,
            conversations: [
                Turn {
                    from: "human",
                    value: &s.prompt,
                },
                Turn {
                    from: "gpt",
                    value: &s.answer,
                },
            ],
            meta: &s.meta,
        };
        out.push_str(&serde_json::to_string(&line).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn emit_jsonl(samples: &[VqaSample], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::file_io(path, e))?;
    f.write_all(render_jsonl(samples).as_bytes())
        .map_err(|e| Error::file_io(path, e))
}

/// Reads samples back from a JSONL file written by [`emit_jsonl`].
pub fn read_jsonl(path: &Path) -> Result<Vec<VqaSample>> {
    #[derive(Deserialize)]
    struct TurnIn {
        value: String,
    }
    #[derive(Deserialize)]
    struct LineIn {
        id: String,
        image: String,
        task: TaskType,
        conversations: Vec<TurnIn>,
        #[serde(default)]
        meta: BTreeMap<String, String>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: LineIn = serde_json::from_str(line).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        let [prompt, answer]: [TurnIn; 2] = l
            .conversations
            .try_into()
            .map_err(|_| Error::parse(path, format!("line {}: expected two turns", i + 1)))?;
        out.push(VqaSample {
            source_annotation: l.meta.get("source_annotation").cloned().unwrap_or_default(),
            id: l.id,
            image: l.image,
            task: l.task,
            prompt: prompt.value,
            answer: answer.value,
            meta: l.meta,
        });
    }
    Ok(out)
}

/// Writes `train.jsonl`, `val.jsonl` and `manifest.json` under `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file_io(dir, e))?;
    emit_jsonl(&ds.train, &dir.join("train.jsonl"))?;
    emit_jsonl(&ds.val, &dir.join("val.jsonl"))?;
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&ds.manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::file_io(&path, e))
}

/// Image ids present in a split.
pub fn image_ids(samples: &[VqaSample]) -> BTreeSet<&str> {
    samples.iter().map(|s| s.image.as_str()).collect()
}
