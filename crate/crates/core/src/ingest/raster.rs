use std::io::Cursor;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{list_files, AnnotationStore, CorpusSpec, LoadReport};
use crate::error::{Error, Result};
use crate::geometry::ImageRef;
use crate::mask::{bbox_from_mask, Raster, RleMask};
use crate::types::{Affordance, AffordanceLabel, AnnotationRecord};

struct LabelImage {
    stem: String,
    file_name: String,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

enum Outcome {
    Records(ImageRef, Vec<AnnotationRecord>),
    Empty(String),
    Failed(String, String),
}

/// Loads per-image label rasters where pixel value `k` in `1..=7` marks
/// the k-th closed-set affordance and 0 is background. Each 4-connected
/// region of one label becomes a record.
///
/// File names follow `<category>_<rest>.png`; the stem is the image id.
pub fn load_part_affordance_maps(spec: &CorpusSpec) -> Result<(AnnotationStore, LoadReport)> {
    let files = list_files(&spec.root, "png")?;
    let outcomes: Vec<Outcome> = files.par_iter().map(|p| load_one(p, &spec.tag)).collect();

    let mut store = AnnotationStore::new(Some(spec.tag.clone()));
    let mut report = LoadReport::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Records(image, records) => {
                for r in records {
                    store.annotations.insert(r.id.clone(), r);
                }
                store.images.insert(image.id.clone(), image);
            }
            Outcome::Empty(stem) => {
                report.warn(format!("{}: label raster {stem} has no foreground, skipped", spec.tag))
            }
            Outcome::Failed(stem, message) => report.error(&spec.tag, format!("image:{stem}"), message),
        }
    }
    Ok((store, report))
}

fn load_one(path: &Path, tag: &str) -> Outcome {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let img = match read_label_png(path) {
        Ok(img) => img,
        Err(e) => return Outcome::Failed(stem, e.to_string()),
    };
    if let Some(v) = img.pixels.iter().copied().find(|&v| v > 7) {
        return Outcome::Failed(stem, format!("label value {v} outside 0..=7"));
    }
    if img.pixels.iter().all(|&v| v == 0) {
        return Outcome::Empty(stem);
    }
    let image = ImageRef {
        id: img.stem.clone(),
        width: img.width,
        height: img.height,
        path: img.file_name.clone(),
    };
    let category = category_from_stem(&img.stem);
    let mut records = Vec::new();
    for value in 1..=7u8 {
        let affordance = Affordance::from_label_value(value).expect("1..=7 is closed-set");
        let layer = Raster::from_fn(img.width, img.height, |x, y| {
            img.pixels[(y * img.width + x) as usize] == value
        });
        for (k, comp) in layer.components().into_iter().enumerate() {
            let mut region = Raster::new(img.width, img.height);
            for (x, y) in comp {
                region.set(x, y, true);
            }
            let mask = RleMask::from_raster(&region);
            let bbox = bbox_from_mask(&mask).expect("component is non-empty");
            records.push(AnnotationRecord {
                id: format!("{}:{}:{k}", img.stem, affordance.as_str()),
                image: img.stem.clone(),
                bbox,
                mask: Some(mask),
                category: category.clone(),
                part: None,
                affordance: Some(AffordanceLabel::Closed(affordance)),
                physical: Vec::new(),
                source: tag.to_string(),
            });
        }
    }
    Outcome::Records(image, records)
}

/// `knife_01_00000060_label` -> `knife`.
fn category_from_stem(stem: &str) -> String {
    stem.split('_').next().unwrap_or(stem).to_string()
}

fn read_label_png(path: &Path) -> Result<LabelImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::file_io(path, e))?;
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::parse(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::parse(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::parse(path, e))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::parse(
            path,
            format!(
                "expected 8-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    buf.truncate(info.buffer_size());
    let stride = info.line_size;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(stride).take(h) {
        pixels.extend_from_slice(&row[..w]);
    }
    Ok(LabelImage {
        stem: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
        file_name: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        width: info.width,
        height: info.height,
        pixels,
    })
}

/// Writes an 8-bit single-channel PNG from row-major label values.
pub fn write_label_png(path: &Path, width: u32, height: u32, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width as usize * height as usize {
        return Err(Error::DimensionMismatch(format!(
            "{} label values for {width}x{height}",
            pixels.len()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::file_io(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let to_err = |e: png::EncodingError| Error::parse(PathBuf::from(path), e);
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(pixels).map_err(to_err)?;
    writer.finish().map_err(to_err)?;
    Ok(())
}
