//! Corpus loaders and the unified [`AnnotationStore`].
//!
//! Each loader reads one corpus directory and returns a store with raw ids
//! plus a [`LoadReport`]. Record-level problems never abort a load; they
//! are collected in the report and the offending record is dropped. Only
//! file-level failures (unreadable or unparseable annotation files) are
//! returned as errors.

mod coco;
mod physical;
mod raster;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use coco::{load_coco, load_coco_file};
pub use physical::load_physical_properties;
pub use raster::{load_part_affordance_maps, write_label_png};

use crate::error::{Error, Result};
use crate::geometry::ImageRef;
use crate::mask::bbox_from_mask;
use crate::types::AnnotationRecord;

/// Pixels a box may overshoot the image before the record is rejected.
pub const BOUNDS_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusKind {
    CocoDetection,
    PartAffordanceMaps,
    PhysicalProperties,
}

impl CorpusKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorpusKind::CocoDetection => "coco-detection",
            CorpusKind::PartAffordanceMaps => "part-affordance-maps",
            CorpusKind::PhysicalProperties => "physical-properties",
        }
    }
}

impl FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            CorpusKind::CocoDetection,
            CorpusKind::PartAffordanceMaps,
            CorpusKind::PhysicalProperties,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::InvalidInput(format!("unknown corpus kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub kind: CorpusKind,
    pub root: PathBuf,
    pub tag: String,
}

impl CorpusSpec {
    pub fn new(kind: CorpusKind, root: impl Into<PathBuf>, tag: impl Into<String>) -> Result<Self> {
        let tag = tag.into();
        if tag.trim().is_empty() || tag.contains('/') {
            return Err(Error::InvalidInput(format!(
                "corpus tag must be non-empty and free of '/', got {tag:?}"
            )));
        }
        Ok(CorpusSpec {
            kind,
            root: root.into(),
            tag,
        })
    }
}

impl FromStr for CorpusSpec {
    type Err = Error;

    /// Parses `kind:TAG=root`, e.g. `coco-detection:H=data/tools`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("corpus spec {s:?} is not of the form kind:TAG=root"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let (tag, root) = rest.split_once('=').ok_or_else(bad)?;
        CorpusSpec::new(kind.parse()?, root, tag)
    }
}

impl fmt::Display for CorpusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}={}", self.kind.as_str(), self.tag, self.root.display())
    }
}

/// What a record can be used for downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Object,
    Affordance,
    Physical,
}

pub fn capabilities(record: &AnnotationRecord) -> Vec<Capability> {
    let mut caps = Vec::new();
    if record.affordance.is_none() {
        caps.push(Capability::Object);
    }
    if record.has_affordance_region() {
        caps.push(Capability::Affordance);
    }
    if !record.physical.is_empty() {
        caps.push(Capability::Physical);
    }
    caps
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStore {
    /// Corpus tag while ids are still raw; `None` once merged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub images: BTreeMap<String, ImageRef>,
    pub annotations: BTreeMap<String, AnnotationRecord>,
}

impl AnnotationStore {
    pub fn new(source: Option<String>) -> Self {
        AnnotationStore {
            source,
            ..Default::default()
        }
    }

    pub fn image_of(&self, record: &AnnotationRecord) -> Option<&ImageRef> {
        self.images.get(&record.image)
    }

    pub fn by_image(&self) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
        let mut out: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in self.annotations.values() {
            out.entry(r.image.as_str()).or_default().push(r);
        }
        out
    }

    pub fn by_category(&self) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
        let mut out: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in self.annotations.values() {
            out.entry(r.category.as_str()).or_default().push(r);
        }
        out
    }

    pub fn by_capability(&self) -> BTreeMap<Capability, Vec<&AnnotationRecord>> {
        let mut out: BTreeMap<Capability, Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in self.annotations.values() {
            for c in capabilities(r) {
                out.entry(c).or_default().push(r);
            }
        }
        out
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::file_io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordIssue {
    pub source: String,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub images: usize,
    pub records: usize,
    pub invalid: usize,
    pub by_capability: BTreeMap<Capability, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub sources: BTreeMap<String, SourceSummary>,
    pub errors: Vec<RecordIssue>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    pub(crate) fn error(&mut self, source: &str, id: impl Into<String>, message: impl Into<String>) {
        let issue = RecordIssue {
            source: source.to_string(),
            id: id.into(),
            message: message.into(),
        };
        log::debug!("{}/{}: {}", issue.source, issue.id, issue.message);
        self.errors.push(issue);
    }

    pub(crate) fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        log::warn!("{m}");
        self.warnings.push(m);
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn absorb(&mut self, other: LoadReport) {
        for (tag, s) in other.sources {
            let e = self.sources.entry(tag).or_default();
            e.images += s.images;
            e.records += s.records;
            e.invalid += s.invalid;
            for (c, n) in s.by_capability {
                *e.by_capability.entry(c).or_default() += n;
            }
        }
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::file_io(path, e))
    }
}

/// Runs the loader selected by `spec.kind`.
pub fn load(spec: &CorpusSpec) -> Result<(AnnotationStore, LoadReport)> {
    let (store, mut report) = match spec.kind {
        CorpusKind::CocoDetection => load_coco(spec)?,
        CorpusKind::PartAffordanceMaps => load_part_affordance_maps(spec)?,
        CorpusKind::PhysicalProperties => load_physical_properties(spec)?,
    };
    let dropped = report.errors.len();
    let summary = validate(&store);
    report.sources = summary.sources;
    report.sources.entry(spec.tag.clone()).or_default().invalid += dropped;
    report.errors.extend(summary.errors);
    Ok((store, report))
}

/// Joins stores into one, prefixing the ids of every single-corpus store
/// with `TAG/`. Already merged stores keep their ids.
pub fn merge(stores: Vec<AnnotationStore>) -> Result<AnnotationStore> {
    let mut out = AnnotationStore::new(None);
    for store in stores {
        let prefix = |id: &str| match &store.source {
            Some(tag) => format!("{tag}/{id}"),
            None => id.to_string(),
        };
        for (id, mut image) in store.images.clone() {
            let new_id = prefix(&id);
            image.id = new_id.clone();
            if out.images.insert(new_id.clone(), image).is_some() {
                return Err(Error::IdCollision(format!("image {new_id}")));
            }
        }
        for (id, mut record) in store.annotations.clone() {
            let new_id = prefix(&id);
            record.id = new_id.clone();
            record.image = prefix(&record.image);
            if out.annotations.insert(new_id.clone(), record).is_some() {
                return Err(Error::IdCollision(format!("annotation {new_id}")));
            }
        }
    }
    Ok(out)
}

/// Checks a record against its image. Returns the first violation.
pub fn check_record(record: &AnnotationRecord, image: Option<&ImageRef>) -> std::result::Result<(), String> {
    let image = image.ok_or_else(|| format!("image {:?} does not resolve", record.image))?;
    if record.category.trim().is_empty() {
        return Err("empty category".into());
    }
    if !record.bbox.is_well_formed() {
        return Err(format!("malformed bbox {:?}", record.bbox.to_array()));
    }
    if !record.bbox.within(image, 0.0) {
        return Err(format!(
            "bbox {:?} outside {}x{} image",
            record.bbox.to_array(),
            image.width,
            image.height
        ));
    }
    if let Some(mask) = &record.mask {
        if mask.width() != image.width || mask.height() != image.height {
            return Err(format!(
                "mask is {}x{}, image is {}x{}",
                mask.width(),
                mask.height(),
                image.width,
                image.height
            ));
        }
        let tight = bbox_from_mask(mask).map_err(|e| e.to_string())?;
        let off = tight
            .to_array()
            .iter()
            .zip(record.bbox.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if off > BOUNDS_TOLERANCE_PX {
            return Err(format!(
                "bbox {:?} differs from mask extent {:?} by {off:.2} px",
                record.bbox.to_array(),
                tight.to_array()
            ));
        }
    }
    if let Some(crate::types::AffordanceLabel::Task(t)) = &record.affordance {
        if t.trim().is_empty() {
            return Err("empty task affordance".into());
        }
    }
    Ok(())
}

/// Re-checks every invariant and tallies records per source and capability.
pub fn validate(store: &AnnotationStore) -> LoadReport {
    let mut report = LoadReport::default();
    let mut images_per_source: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for record in store.annotations.values() {
        let summary = report.sources.entry(record.source.clone()).or_default();
        summary.records += 1;
        images_per_source
            .entry(record.source.as_str())
            .or_default()
            .insert(record.image.as_str());
        match check_record(record, store.image_of(record)) {
            Ok(()) => {
                for c in capabilities(record) {
                    *summary.by_capability.entry(c).or_default() += 1;
                }
            }
            Err(message) => {
                summary.invalid += 1;
                report.error(&record.source, record.id.clone(), message);
            }
        }
    }
    for (source, imgs) in images_per_source {
        if let Some(s) = report.sources.get_mut(source) {
            s.images = imgs.len();
        }
    }
    report
}

/// `*.ext` files directly under `root`, sorted by name.
pub(crate) fn list_files(root: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::file_io(root, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::file_io(root, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
