use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use super::{check_record, list_files, AnnotationStore, CorpusSpec, LoadReport, BOUNDS_TOLERANCE_PX};
use crate::error::{Error, Result};
use crate::geometry::{ImageRef, PixelBBox};
use crate::mask::{Raster, RleMask};
use crate::types::AnnotationRecord;

/// COCO ids may be numbers or strings; both become string keys.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawId {
    Num(u64),
    Str(String),
}

impl RawId {
    fn key(&self) -> String {
        match self {
            RawId::Num(n) => n.to_string(),
            RawId::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: RawId,
    file_name: String,
    width: i64,
    height: i64,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    id: RawId,
    image_id: RawId,
    category_id: RawId,
    bbox: Vec<f64>,
    #[serde(default)]
    segmentation: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct CocoCategory {
    id: RawId,
    name: String,
}

/// Loads every COCO-style detection file of a corpus. `annotations.json`
/// is used when present, otherwise every `*.json` under the root.
pub fn load_coco(spec: &CorpusSpec) -> Result<(AnnotationStore, LoadReport)> {
    let preferred = spec.root.join("annotations.json");
    let files = if preferred.is_file() {
        vec![preferred]
    } else {
        list_files(&spec.root, "json")?
    };
    if files.is_empty() {
        return Err(Error::parse(&spec.root, "no COCO annotation file found"));
    }
    let parsed: Vec<(std::path::PathBuf, CocoFile)> = files
        .par_iter()
        .map(|p| read_coco(p).map(|f| (p.clone(), f)))
        .collect::<Result<_>>()?;

    let mut store = AnnotationStore::new(Some(spec.tag.clone()));
    let mut report = LoadReport::default();
    for (_, file) in parsed {
        add_coco(file, &spec.tag, &mut store, &mut report);
    }
    Ok((store, report))
}

/// Loads a single COCO file into an existing store.
pub fn load_coco_file(path: &Path, tag: &str, store: &mut AnnotationStore, report: &mut LoadReport) -> Result<()> {
    let file = read_coco(path)?;
    add_coco(file, tag, store, report);
    Ok(())
}

fn read_coco(path: &Path) -> Result<CocoFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Splits `object:part` category names.
pub(crate) fn split_category(name: &str) -> (String, Option<String>) {
    match name.split_once(':') {
        Some((obj, part)) if !part.trim().is_empty() => (obj.trim().to_string(), Some(part.trim().to_string())),
        Some((obj, _)) => (obj.trim().to_string(), None),
        None => (name.trim().to_string(), None),
    }
}

fn add_coco(file: CocoFile, tag: &str, store: &mut AnnotationStore, report: &mut LoadReport) {
    let categories: BTreeMap<String, String> = file.categories.into_iter().map(|c| (c.id.key(), c.name)).collect();

    for img in file.images {
        let id = img.id.key();
        if img.width <= 0 || img.height <= 0 || img.width > u32::MAX as i64 || img.height > u32::MAX as i64 {
            report.error(
                tag,
                format!("image:{id}"),
                format!("invalid size {}x{}", img.width, img.height),
            );
            continue;
        }
        if store.images.contains_key(&id) {
            report.error(tag, format!("image:{id}"), "duplicate image id");
            continue;
        }
        let image = ImageRef {
            id: id.clone(),
            width: img.width as u32,
            height: img.height as u32,
            path: img.file_name,
        };
        store.images.insert(id, image);
    }

    for ann in file.annotations {
        let id = ann.id.key();
        match build_record(&ann, tag, &categories, store) {
            Ok(record) => {
                if let std::collections::btree_map::Entry::Vacant(slot) = store.annotations.entry(id.clone()) {
                    slot.insert(record);
                } else {
                    report.error(tag, id, "duplicate annotation id");
                }
            }
            Err(message) => report.error(tag, id, message),
        }
    }
}

fn build_record(
    ann: &CocoAnnotation,
    tag: &str,
    categories: &BTreeMap<String, String>,
    store: &AnnotationStore,
) -> std::result::Result<AnnotationRecord, String> {
    let image_id = ann.image_id.key();
    let image = store
        .images
        .get(&image_id)
        .ok_or_else(|| format!("image id {image_id} does not resolve"))?;
    let cat_name = categories
        .get(&ann.category_id.key())
        .ok_or_else(|| format!("category id {} does not resolve", ann.category_id.key()))?;
    let [x, y, w, h] = <[f64; 4]>::try_from(ann.bbox.as_slice())
        .map_err(|_| format!("bbox must have 4 numbers, got {}", ann.bbox.len()))?;
    if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() {
        return Err(format!("malformed bbox [{x}, {y}, {w}, {h}]"));
    }
    let raw = PixelBBox::from_xywh(x, y, w, h);
    if !raw.within(image, BOUNDS_TOLERANCE_PX) {
        return Err(format!(
            "bbox {:?} exceeds {}x{} image by more than {BOUNDS_TOLERANCE_PX} px",
            raw.to_array(),
            image.width,
            image.height
        ));
    }
    let bbox = raw.clamp_to(image);
    let mask = match &ann.segmentation {
        None | Some(Value::Null) => None,
        Some(seg) => {
            let m = decode_segmentation(seg, image)?;
            (!m.is_empty()).then_some(m)
        }
    };
    let (category, part) = split_category(cat_name);
    let record = AnnotationRecord {
        id: ann.id.key(),
        image: image_id,
        bbox,
        mask,
        category,
        part,
        affordance: None,
        physical: Vec::new(),
        source: tag.to_string(),
    };
    check_record(&record, Some(image))?;
    Ok(record)
}

fn decode_segmentation(seg: &Value, image: &ImageRef) -> std::result::Result<RleMask, String> {
    match seg {
        Value::Array(polys) => {
            let mut raster = Raster::new(image.width, image.height);
            for poly in polys {
                let coords: Vec<f64> = poly
                    .as_array()
                    .ok_or("polygon must be an array of numbers")?
                    .iter()
                    .map(|v| v.as_f64().ok_or("polygon coordinate is not a number"))
                    .collect::<std::result::Result<_, _>>()?;
                if coords.len() < 6 || !coords.len().is_multiple_of(2) {
                    return Err(format!("polygon with {} coordinates", coords.len()));
                }
                let points: Vec<(f64, f64)> = coords.chunks_exact(2).map(|c| (c[0], c[1])).collect();
                // union of polygons, not even-odd across them
                let mut one = Raster::new(image.width, image.height);
                one.fill_polygon(&points);
                for (x, y) in one.foreground() {
                    raster.set(x, y, true);
                }
            }
            Ok(RleMask::from_raster(&raster))
        }
        Value::Object(_) => {
            let m: RleMask = serde_json::from_value(seg.clone()).map_err(|e| format!("bad RLE: {e}"))?;
            if m.width() != image.width || m.height() != image.height {
                return Err(format!(
                    "RLE size {}x{} does not match image {}x{}",
                    m.width(),
                    m.height(),
                    image.width,
                    image.height
                ));
            }
            Ok(m)
        }
        _ => Err("segmentation must be polygons or RLE".into()),
    }
}
