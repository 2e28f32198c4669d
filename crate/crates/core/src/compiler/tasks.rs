use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::templates::{choose, Templates};
use crate::augment::{leaks_object_name, TaskArtifact};
use crate::geometry::{format_bbox, normalize_bbox, NormBBox};
use crate::ingest::AnnotationStore;
use crate::seed::keyed;
use crate::types::{capitalize, Affordance, AffordanceLabel, AnnotationRecord, PhysicalConcept, TaskType};

/// One instruction pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaSample {
    pub id: String,
    pub task: TaskType,
    pub image: String,
    pub prompt: String,
    pub answer: String,
    pub source_annotation: String,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub seed: u64,
    /// Draw prompt wording from the paraphrase lists instead of always
    /// using the canonical template.
    pub paraphrase: bool,
    pub templates: Templates,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            seed: 0,
            paraphrase: true,
            templates: Templates::default(),
        }
    }
}

/// Records that produced no sample, by cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipTally {
    /// Box collapsed to zero extent after quantization.
    pub degenerate_bbox: usize,
    /// Record references an image that is not in the store.
    pub missing_image: usize,
    /// Grounding: no usable description for the category.
    pub no_grounding_task: usize,
    /// Grounding: artifact descriptions that name their category.
    pub leaking_descriptions: usize,
    /// Grounding: categories that had regions but no usable description.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub categories_without_tasks: BTreeSet<String>,
}

impl SkipTally {
    pub fn total(&self) -> usize {
        self.degenerate_bbox + self.missing_image + self.no_grounding_task
    }

    fn add(&mut self, other: SkipTally) {
        self.degenerate_bbox += other.degenerate_bbox;
        self.missing_image += other.missing_image;
        self.no_grounding_task += other.no_grounding_task;
        self.leaking_descriptions += other.leaking_descriptions;
        self.categories_without_tasks.extend(other.categories_without_tasks);
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// "a ratchet", or "handle of a screwdriver" for part records.
pub fn object_phrase(record: &AnnotationRecord) -> String {
    let cat = record.category.trim();
    match record.part.as_deref() {
        Some(part) => format!("{} of {} {cat}", part.trim(), article(cat)),
        None => format!("{} {cat}", article(cat)),
    }
}

fn ability(a: Affordance) -> &'static str {
    match a {
        Affordance::Grasp => "be grasped",
        Affordance::Cut => "cut",
        Affordance::Scoop => "scoop",
        Affordance::Contain => "contain",
        Affordance::Pound => "pound",
        Affordance::Support => "support",
        Affordance::WrapGrasp => "be wrap-grasped",
    }
}

/// Phrase for the affordance region of a record, if it has one. Graspable
/// parts read "handle of a mug"; closed-set labels read "the part that can
/// contain on a bowl".
pub fn affordance_phrase(record: &AnnotationRecord) -> Option<String> {
    let cat = record.category.trim();
    if record.has_graspable_part() {
        return Some(object_phrase(record));
    }
    match &record.affordance {
        Some(AffordanceLabel::Closed(a)) => {
            Some(format!("the part that can {} on {} {cat}", ability(*a), article(cat)))
        }
        _ => None,
    }
}

fn sentence(text: &str) -> String {
    let t = text.trim().trim_end_matches('.');
    format!("{}.", capitalize(t))
}

fn fill(template: &str, slot: &str, value: &str) -> String {
    template.replace(slot, value)
}

enum Region {
    Ok(NormBBox),
    Skip(SkipTally),
}

fn region(store: &AnnotationStore, record: &AnnotationRecord) -> Region {
    let Some(image) = store.image_of(record) else {
        return Region::Skip(SkipTally {
            missing_image: 1,
            ..Default::default()
        });
    };
    match normalize_bbox(&record.bbox, image) {
        Ok(b) => Region::Ok(b),
        Err(_) => Region::Skip(SkipTally {
            degenerate_bbox: 1,
            ..Default::default()
        }),
    }
}

fn base_meta(record: &AnnotationRecord) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("category".into(), record.category.clone());
    if let Some(p) = &record.part {
        meta.insert("part".into(), p.clone());
    }
    match &record.affordance {
        Some(AffordanceLabel::Closed(a)) => {
            meta.insert("affordance".into(), a.as_str().into());
        }
        Some(AffordanceLabel::Task(t)) => {
            meta.insert("affordance".into(), t.clone());
        }
        None => {}
    }
    meta.insert("source".into(), record.source.clone());
    meta.insert("source_annotation".into(), record.id.clone());
    meta
}

fn sample(task: TaskType, id: String, record: &AnnotationRecord, prompt: String, answer: String) -> VqaSample {
    VqaSample {
        id,
        task,
        image: record.image.clone(),
        prompt,
        answer,
        source_annotation: record.id.clone(),
        meta: base_meta(record),
    }
}

/// Runs `make` over every record in parallel and gathers the samples
/// sorted by id.
fn build<F>(store: &AnnotationStore, make: F) -> (Vec<VqaSample>, SkipTally)
where
    F: Fn(&AnnotationRecord) -> (Vec<VqaSample>, SkipTally) + Sync,
{
    let parts: Vec<(Vec<VqaSample>, SkipTally)> = store.annotations.par_iter().map(|(_, r)| make(r)).collect();
    let mut samples = Vec::new();
    let mut tally = SkipTally::default();
    for (s, t) in parts {
        samples.extend(s);
        tally.add(t);
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    (samples, tally)
}

fn rec_task(
    store: &AnnotationStore,
    opts: &CompileOptions,
    task: TaskType,
    r: &AnnotationRecord,
    phrase: &str,
) -> (Vec<VqaSample>, SkipTally) {
    match region(store, r) {
        Region::Skip(t) => (vec![], t),
        Region::Ok(b) => {
            let id = format!("{}/{}", task.as_str(), r.id);
            let prompt = fill(
                choose(&opts.templates.rec, opts.seed, &id, opts.paraphrase),
                "{phrase}",
                phrase,
            );
            (vec![sample(task, id, r, prompt, format_bbox(&b))], SkipTally::default())
        }
    }
}

fn reg_task(
    store: &AnnotationStore,
    opts: &CompileOptions,
    task: TaskType,
    r: &AnnotationRecord,
    phrase: &str,
) -> (Vec<VqaSample>, SkipTally) {
    match region(store, r) {
        Region::Skip(t) => (vec![], t),
        Region::Ok(b) => {
            let id = format!("{}/{}", task.as_str(), r.id);
            let prompt = fill(
                choose(&opts.templates.reg, opts.seed, &id, opts.paraphrase),
                "{bbox}",
                &format_bbox(&b),
            );
            (
                vec![sample(task, id, r, prompt, sentence(phrase))],
                SkipTally::default(),
            )
        }
    }
}

/// Object tasks cover every record without an affordance label.
fn object_eligible(r: &AnnotationRecord) -> bool {
    r.affordance.is_none()
}

pub fn compile_rec_object(store: &AnnotationStore, opts: &CompileOptions) -> (Vec<VqaSample>, SkipTally) {
    build(store, |r| {
        if !object_eligible(r) {
            return Default::default();
        }
        rec_task(store, opts, TaskType::RecObject, r, &object_phrase(r))
    })
}

pub fn compile_reg_object(store: &AnnotationStore, opts: &CompileOptions) -> (Vec<VqaSample>, SkipTally) {
    build(store, |r| {
        if !object_eligible(r) {
            return Default::default();
        }
        reg_task(store, opts, TaskType::RegObject, r, &object_phrase(r))
    })
}

pub fn compile_rec_affordance(store: &AnnotationStore, opts: &CompileOptions) -> (Vec<VqaSample>, SkipTally) {
    build(store, |r| match affordance_phrase(r) {
        Some(p) => rec_task(store, opts, TaskType::RecAffordance, r, &p),
        None => Default::default(),
    })
}

pub fn compile_reg_affordance(store: &AnnotationStore, opts: &CompileOptions) -> (Vec<VqaSample>, SkipTally) {
    build(store, |r| match affordance_phrase(r) {
        Some(p) => reg_task(store, opts, TaskType::RegAffordance, r, &p),
        None => Default::default(),
    })
}

/// One sample per affordance region whose category has at least one
/// description in `tasks`. Descriptions that name the category are
/// discarded here even if they made it into the artifact.
pub fn compile_grounding_affordance(
    store: &AnnotationStore,
    tasks: &TaskArtifact,
    opts: &CompileOptions,
) -> (Vec<VqaSample>, SkipTally) {
    let mut usable: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut leaking = 0;
    for (cat, entries) in &tasks.tasks {
        for e in entries {
            let d = e.description.trim();
            if d.is_empty() {
                continue;
            }
            if leaks_object_name(d, cat) {
                log::warn!("dropping description that names {cat:?}: {d:?}");
                leaking += 1;
                continue;
            }
            usable.entry(cat.as_str()).or_default().push(d);
        }
    }
    let (samples, mut tally) = build(store, |r| {
        if !r.has_affordance_region() {
            return Default::default();
        }
        let Some(list) = usable.get(r.category.as_str()) else {
            return (
                vec![],
                SkipTally {
                    no_grounding_task: 1,
                    categories_without_tasks: BTreeSet::from([r.category.clone()]),
                    ..Default::default()
                },
            );
        };
        match region(store, r) {
            Region::Skip(t) => (vec![], t),
            Region::Ok(b) => {
                let id = format!("{}/{}", TaskType::RecGroundingAffordance.as_str(), r.id);
                let desc = list[(keyed(opts.seed, &id) % list.len() as u64) as usize];
                let template = choose(&opts.templates.grounding, opts.seed, &id, opts.paraphrase);
                let prompt = fill(template, "{phrase}", desc.trim_end_matches('.'));
                let mut s = sample(TaskType::RecGroundingAffordance, id, r, prompt, format_bbox(&b));
                s.meta.insert("task_description".into(), desc.to_string());
                (vec![s], SkipTally::default())
            }
        }
    });
    tally.leaking_descriptions = leaking;
    for c in &tally.categories_without_tasks {
        log::warn!("no grounding task for category {c:?}; its regions are skipped");
    }
    (samples, tally)
}

/// One sample per (record, annotated concept).
pub fn compile_reg_physical(store: &AnnotationStore, opts: &CompileOptions) -> (Vec<VqaSample>, SkipTally) {
    build(store, |r| {
        if r.physical.is_empty() {
            return Default::default();
        }
        let b = match region(store, r) {
            Region::Ok(b) => b,
            Region::Skip(mut t) => {
                // one skip per would-be sample
                let n = r.physical.len();
                t.degenerate_bbox *= n;
                t.missing_image *= n;
                return (vec![], t);
            }
        };
        let mut out = Vec::new();
        for concept in PhysicalConcept::ALL {
            let Some(p) = r.property(concept) else { continue };
            let id = format!("{}/{}/{}", TaskType::RegPhysical.as_str(), r.id, concept.as_str());
            let template = choose(opts.templates.physical_for(concept), opts.seed, &id, opts.paraphrase);
            let prompt = fill(template, "{bbox}", &format_bbox(&b));
            let mut s = sample(TaskType::RegPhysical, id, r, prompt, sentence(&p.answer_token()));
            s.meta.insert("concept".into(), concept.as_str().into());
            out.push(s);
        }
        (out, SkipTally::default())
    })
}

/// All six task families, keyed by task type.
pub fn compile_all(
    store: &AnnotationStore,
    tasks: &TaskArtifact,
    opts: &CompileOptions,
) -> BTreeMap<TaskType, (Vec<VqaSample>, SkipTally)> {
    let mut out = BTreeMap::new();
    out.insert(TaskType::RecObject, compile_rec_object(store, opts));
    out.insert(TaskType::RegObject, compile_reg_object(store, opts));
    out.insert(TaskType::RecAffordance, compile_rec_affordance(store, opts));
    out.insert(TaskType::RegAffordance, compile_reg_affordance(store, opts));
    out.insert(
        TaskType::RecGroundingAffordance,
        compile_grounding_affordance(store, tasks, opts),
    );
    out.insert(TaskType::RegPhysical, compile_reg_physical(store, opts));
    out
}
