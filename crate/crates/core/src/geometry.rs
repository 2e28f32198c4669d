//! Images, pixel and normalized boxes, and the bbox text codec used in
//! prompts and answers.
//!
//! Normalized boxes live on a fixed grid of 1/1000. Every coordinate is
//! stored as an integer number of thousandths, so formatting and parsing
//! are exact inverses of each other.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of codec steps per unit of normalized coordinate.
pub const NORM_SCALE: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub path: String,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, width: u32, height: u32, path: impl Into<String>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(ImageRef {
            id: id.into(),
            width,
            height,
            path: path.into(),
        })
    }
}

/// Axis-aligned box in pixel coordinates. `x_max`/`y_max` are exclusive
/// extents, so a single pixel at (3, 4) is `[3, 4, 4, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct PixelBBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for PixelBBox {
    fn from(v: [f64; 4]) -> Self {
        PixelBBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<PixelBBox> for [f64; 4] {
    fn from(b: PixelBBox) -> Self {
        b.to_array()
    }
}

impl PixelBBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        PixelBBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Converts COCO `[x, y, w, h]` into corner form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        PixelBBox::new(x, y, x + w, y + h)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Finite, non-negative and of positive extent on both axes.
    pub fn is_well_formed(&self) -> bool {
        let v = self.to_array();
        v.iter().all(|c| c.is_finite() && *c >= 0.0) && self.x_min < self.x_max && self.y_min < self.y_max
    }

    /// True when the box lies inside `image`, allowing each side to
    /// overshoot by at most `tolerance` pixels.
    pub fn within(&self, image: &ImageRef, tolerance: f64) -> bool {
        self.x_min >= -tolerance
            && self.y_min >= -tolerance
            && self.x_max <= image.width as f64 + tolerance
            && self.y_max <= image.height as f64 + tolerance
    }

    pub fn clamp_to(&self, image: &ImageRef) -> PixelBBox {
        let w = image.width as f64;
        let h = image.height as f64;
        PixelBBox::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
        )
    }

    pub fn intersection(&self, other: &PixelBBox) -> Option<PixelBBox> {
        let b = PixelBBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }
}

/// Box with coordinates in `[0, 1]`, quantized to thousandths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct NormBBox {
    milli: [u16; 4],
}

impl TryFrom<[f64; 4]> for NormBBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        NormBBox::from_f64(v)
    }
}

impl From<NormBBox> for [f64; 4] {
    fn from(b: NormBBox) -> Self {
        b.to_array()
    }
}

impl NormBBox {
    /// Builds a box from integer thousandths.
    pub fn from_milli(milli: [u16; 4]) -> Result<Self> {
        let [x0, y0, x1, y1] = milli;
        if x1 as u32 > NORM_SCALE || y1 as u32 > NORM_SCALE {
            return Err(Error::MalformedBBox(format!("coordinate above 1.000 in {milli:?}")));
        }
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::MalformedBBox(format!(
                "min must be strictly below max, got {}",
                fmt_milli(milli)
            )));
        }
        Ok(NormBBox { milli })
    }

    /// Quantizes real coordinates half-up onto the 1/1000 grid.
    pub fn from_f64(v: [f64; 4]) -> Result<Self> {
        let mut milli = [0u16; 4];
        for (slot, c) in milli.iter_mut().zip(v) {
            if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                return Err(Error::MalformedBBox(format!("coordinate {c} outside [0, 1]")));
            }
            *slot = round_half_up(c * NORM_SCALE as f64) as u16;
        }
        NormBBox::from_milli(milli)
    }

    pub fn milli(&self) -> [u16; 4] {
        self.milli
    }

    pub fn to_array(self) -> [f64; 4] {
        self.milli.map(|m| m as f64 / NORM_SCALE as f64)
    }

    pub fn x_min(&self) -> f64 {
        self.to_array()[0]
    }

    pub fn y_min(&self) -> f64 {
        self.to_array()[1]
    }

    pub fn x_max(&self) -> f64 {
        self.to_array()[2]
    }

    pub fn y_max(&self) -> f64 {
        self.to_array()[3]
    }

    /// IoU on the normalized grid. Equal to pixel IoU up to quantization,
    /// since per-axis scaling preserves area ratios.
    pub fn iou(&self, other: &NormBBox) -> f64 {
        iou(&self.as_pixel_units(), &other.as_pixel_units())
    }

    fn as_pixel_units(&self) -> PixelBBox {
        let [a, b, c, d] = self.milli.map(|m| m as f64);
        PixelBBox::new(a, b, c, d)
    }
}

impl fmt::Display for NormBBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_milli(self.milli))
    }
}

fn fmt_milli(milli: [u16; 4]) -> String {
    let parts: Vec<String> = milli.iter().map(|m| format!("{}.{:03}", m / 1000, m % 1000)).collect();
    format!("[{}]", parts.join(", "))
}

/// `floor(v + 0.5)`: ties go up regardless of sign.
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Divides each coordinate by the image dimension and quantizes half-up to
/// three decimals, computed as `floor(c * 1000 / dim + 0.5)`.
pub fn normalize_bbox(bbox: &PixelBBox, image: &ImageRef) -> Result<NormBBox> {
    if !bbox.is_well_formed() || !bbox.within(image, 0.0) {
        return Err(Error::DegenerateBBox(format!(
            "{:?} is not a valid box inside {}x{} image {}",
            bbox.to_array(),
            image.width,
            image.height,
            image.id
        )));
    }
    let w = image.width as f64;
    let h = image.height as f64;
    let scale = NORM_SCALE as f64;
    let q = |c: f64, dim: f64| round_half_up(c * scale / dim).clamp(0.0, scale) as u16;
    let milli = [q(bbox.x_min, w), q(bbox.y_min, h), q(bbox.x_max, w), q(bbox.y_max, h)];
    NormBBox::from_milli(milli).map_err(|_| {
        Error::DegenerateBBox(format!(
            "{:?} collapses to zero extent on {}x{} image {}",
            bbox.to_array(),
            image.width,
            image.height,
            image.id
        ))
    })
}

pub fn denormalize_bbox(nbox: &NormBBox, image: &ImageRef) -> PixelBBox {
    let [x0, y0, x1, y1] = nbox.to_array();
    let w = image.width as f64;
    let h = image.height as f64;
    PixelBBox::new(x0 * w, y0 * h, x1 * w, y1 * h)
}

/// Renders `[a, b, c, d]` with three fixed decimals per field.
pub fn format_bbox(nbox: &NormBBox) -> String {
    nbox.to_string()
}

fn bbox_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let num = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";
        Regex::new(&format!(r"\[\s*{num}\s*,\s*{num}\s*,\s*{num}\s*,\s*{num}\s*\]")).unwrap()
    })
}

/// Finds the first bracketed group of four numbers in free text that forms
/// a valid normalized box. Off-grid values are quantized half-up.
///
/// Returns [`Error::NoBBox`] when the text holds no four-number group and
/// [`Error::MalformedBBox`] when every such group is invalid.
pub fn parse_bbox(text: &str) -> Result<NormBBox> {
    let mut first_err = None;
    for caps in bbox_pattern().captures_iter(text) {
        let mut v = [0.0f64; 4];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = caps[i + 1].parse().unwrap_or(f64::NAN);
        }
        match NormBBox::from_f64(v) {
            Ok(b) => return Ok(b),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or(Error::NoBBox))
}

/// Intersection over union of two pixel boxes, in `[0, 1]`.
pub fn iou(a: &PixelBBox, b: &PixelBBox) -> f64 {
    let inter = a.intersection(b).map(|i| i.area()).unwrap_or(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
