//! Binary masks: a row-major [`Raster`] for pixel work and the run-length
//! [`RleMask`] used on disk.
//!
//! RLE runs are column-major and start with background, the same layout
//! COCO uses, so `counts[0]` may be zero.

use std::collections::VecDeque;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou as box_iou, PixelBBox};

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        Raster {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut r = Raster::new(width, height);
        for y in 0..height {
            for x in 0..width {
                r.data[(y * width + x) as usize] = f(x, y);
            }
        }
        r
    }

    pub fn from_rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Raster::from_fn(width, height, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        if x < self.width && y < self.height {
            self.data[(y * self.width + x) as usize] = value;
        }
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|v| **v).count() as u64
    }

    /// Foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Marks every pixel whose center lies inside the polygon (even-odd
    /// rule). `points` are `(x, y)` vertices in pixel coordinates.
    pub fn fill_polygon(&mut self, points: &[(f64, f64)]) {
        if points.len() < 3 {
            return;
        }
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(_, y) in points {
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        let y_start = (min_y - 0.5).ceil().max(0.0) as u32;
        let y_end = ((max_y - 0.5).floor() + 1.0).clamp(0.0, self.height as f64) as u32;
        let mut xs = Vec::new();
        for y in y_start..y_end {
            let cy = y as f64 + 0.5;
            xs.clear();
            for i in 0..points.len() {
                let (x0, y0) = points[i];
                let (x1, y1) = points[(i + 1) % points.len()];
                if (y0 <= cy) != (y1 <= cy) {
                    xs.push(x0 + (cy - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            for pair in xs.chunks_exact(2) {
                // pixel centers strictly inside [pair[0], pair[1])
                let start = (pair[0] - 0.5).ceil().max(0.0);
                let end = (pair[1] - 0.5).ceil().min(self.width as f64);
                let mut x = start;
                while x < end {
                    self.set(x as u32, y, true);
                    x += 1.0;
                }
            }
        }
    }

    /// 4-connected foreground components, ordered by the row-major position
    /// of their first pixel.
    pub fn components(&self) -> Vec<Vec<(u32, u32)>> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            if !self.data[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut comp = Vec::new();
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                comp.push((x as u32, y as u32));
                let mut visit = |j: usize| {
                    if self.data[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            comp.sort_by_key(|&(x, y)| (y, x));
            out.push(comp);
        }
        out
    }

    /// Keeps only the largest 4-connected component; ties go to the one
    /// that starts first in row-major order.
    pub fn largest_component(&self) -> Raster {
        let comps = self.components();
        let mut best: Option<&Vec<(u32, u32)>> = None;
        for c in &comps {
            if best.is_none_or(|b| c.len() > b.len()) {
                best = Some(c);
            }
        }
        let mut r = Raster::new(self.width, self.height);
        for &(x, y) in best.into_iter().flatten() {
            r.set(x, y, true);
        }
        r
    }
}

/// Run-length encoded binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

impl RleMask {
    pub fn new(width: u32, height: u32, counts: Vec<u32>) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::InvalidMask(format!(
                "run lengths sum to {total}, expected {width}x{height} = {expected}"
            )));
        }
        Ok(RleMask { width, height, counts })
    }

    pub fn from_raster(r: &Raster) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..r.width {
            for y in 0..r.height {
                let v = r.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        RleMask {
            width: r.width,
            height: r.height,
            counts,
        }
    }

    pub fn to_raster(&self) -> Raster {
        let mut r = Raster::new(self.width, self.height);
        let h = self.height as u64;
        let mut pos = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                for p in pos..pos + c as u64 {
                    r.set((p / h) as u32, (p % h) as u32, true);
                }
            }
            pos += c as u64;
        }
        r
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Foreground restricted to the pixel rectangle `[x0, x1) x [y0, y1)`.
    pub fn intersect_rect(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> RleMask {
        let src = self.to_raster();
        RleMask::from_raster(&Raster::from_fn(self.width, self.height, |x, y| {
            x >= x0 && x < x1 && y >= y0 && y < y1 && src.get(x, y)
        }))
    }

    /// Decodes COCO's compressed string form of `counts`.
    pub fn from_coco_string(width: u32, height: u32, s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let mut counts: Vec<i64> = Vec::new();
        let mut p = 0;
        while p < bytes.len() {
            let mut x: i64 = 0;
            let mut k = 0;
            loop {
                if p >= bytes.len() {
                    return Err(Error::InvalidMask("truncated compressed counts".into()));
                }
                let c = bytes[p] as i64 - 48;
                if !(0..64).contains(&c) || k > 12 {
                    return Err(Error::InvalidMask(format!(
                        "bad byte {:?} in compressed counts",
                        bytes[p] as char
                    )));
                }
                x |= (c & 0x1f) << (5 * k);
                let more = c & 0x20 != 0;
                p += 1;
                k += 1;
                if !more {
                    if c & 0x10 != 0 {
                        x |= -1i64 << (5 * k);
                    }
                    break;
                }
            }
            if counts.len() > 2 {
                x += counts[counts.len() - 2];
            }
            counts.push(x);
        }
        let counts = counts
            .into_iter()
            .map(|c| u32::try_from(c).map_err(|_| Error::InvalidMask(format!("negative run length {c}"))))
            .collect::<Result<Vec<_>>>()?;
        RleMask::new(width, height, counts)
    }
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [u32; 2],
    counts: CountsJson,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CountsJson {
    Runs(Vec<u32>),
    Compressed(String),
}

impl Serialize for RleMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RleJson {
            size: [self.height, self.width],
            counts: CountsJson::Runs(self.counts.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RleMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RleJson::deserialize(d)?;
        let [height, width] = raw.size;
        match raw.counts {
            CountsJson::Runs(c) => RleMask::new(width, height, c),
            CountsJson::Compressed(s) => RleMask::from_coco_string(width, height, &s),
        }
        .map_err(de::Error::custom)
    }
}

/// Tight pixel box around the foreground, computed from the runs.
pub fn bbox_from_mask(mask: &RleMask) -> Result<PixelBBox> {
    let h = mask.height as u64;
    let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0u64, 0u64);
    let mut pos = 0u64;
    let mut any = false;
    for (i, &c) in mask.counts.iter().enumerate() {
        let c = c as u64;
        if i % 2 == 1 && c > 0 {
            any = true;
            let (first, last) = (pos, pos + c - 1);
            let (fx, fy) = (first / h, first % h);
            let (lx, ly) = (last / h, last % h);
            x0 = x0.min(fx);
            x1 = x1.max(lx);
            if fx == lx {
                y0 = y0.min(fy);
                y1 = y1.max(ly);
            } else {
                y0 = 0;
                y1 = h - 1;
            }
        }
        pos += c;
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    Ok(PixelBBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64))
}

/// Pixel IoU of two masks of equal size.
pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (ra, rb) = (a.to_raster(), b.to_raster());
    let mut inter = 0u64;
    let mut union = 0u64;
    for (pa, pb) in ra.data.iter().zip(&rb.data) {
        inter += (*pa && *pb) as u64;
        union += (*pa || *pb) as u64;
    }
    Ok(inter as f64 / union as f64)
}

/// IoU of the tight boxes of two masks.
pub fn mask_box_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    Ok(box_iou(&bbox_from_mask(a)?, &bbox_from_mask(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_is_column_major_from_background() {
        // 2 wide, 3 tall; foreground at (1, 0) and (1, 1)
        let r = Raster::from_fn(2, 3, |x, y| x == 1 && y < 2);
        let m = RleMask::from_raster(&r);
        assert_eq!(m.counts(), &[3, 2, 1]);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"size":[3,2],"counts":[3,2,1]}"#);
        // foreground at the very first pixel starts with an empty background run
        let m = RleMask::from_raster(&Raster::from_fn(2, 2, |x, y| x == 0 && y == 0));
        assert_eq!(m.counts(), &[0, 1, 3]);
    }

    #[test]
    fn counts_must_cover_image() {
        assert!(RleMask::new(2, 2, vec![1, 2]).is_err());
        assert!(RleMask::new(2, 2, vec![1, 2, 1]).is_ok());
    }

    #[test]
    fn tight_box_of_rect() {
        let m = RleMask::from_raster(&Raster::from_rect(40, 30, 10, 10, 30, 20));
        assert_eq!(bbox_from_mask(&m).unwrap().to_array(), [10.0, 10.0, 30.0, 20.0]);
        let empty = RleMask::from_raster(&Raster::new(4, 4));
        assert!(matches!(bbox_from_mask(&empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn tight_box_for_run_crossing_columns() {
        // column-major run covering (0,2) (0,3) (1,0)
        let m = RleMask::new(2, 4, vec![2, 3, 3]).unwrap();
        assert_eq!(bbox_from_mask(&m).unwrap().to_array(), [0.0, 0.0, 2.0, 4.0]);
    }

    #[test]
    fn mask_iou_counts_pixels() {
        let a = RleMask::from_raster(&Raster::from_rect(4, 4, 0, 0, 2, 2));
        let b = RleMask::from_raster(&Raster::from_rect(4, 4, 1, 1, 3, 3));
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let c = RleMask::from_raster(&Raster::from_rect(5, 4, 0, 0, 2, 2));
        assert!(matches!(mask_iou(&a, &c), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn coco_compressed_counts() {
        // the first three runs are literal, later ones are deltas against counts[i - 2]
        let m = RleMask::from_coco_string(2, 3, "321").unwrap();
        assert_eq!(m.counts(), &[3, 2, 1]);
        let m = RleMask::from_coco_string(2, 4, "1114").unwrap();
        assert_eq!(m.counts(), &[1, 1, 1, 5]);
        // negative delta: 1 - 3 = -2 encodes as 0x1e
        let m = RleMask::from_coco_string(2, 4, "133N").unwrap();
        assert_eq!(m.counts(), &[1, 3, 3, 1]);
        let via_json: RleMask = serde_json::from_str(r#"{"size":[3,2],"counts":"321"}"#).unwrap();
        assert_eq!(via_json.counts(), &[3, 2, 1]);
        assert!(RleMask::from_coco_string(2, 3, "3").is_err());
    }

    #[test]
    fn polygon_fill_uses_pixel_centers() {
        let mut r = Raster::new(10, 10);
        r.fill_polygon(&[(2.0, 2.0), (6.0, 2.0), (6.0, 5.0), (2.0, 5.0)]);
        assert_eq!(r, Raster::from_rect(10, 10, 2, 2, 6, 5));
        let mut t = Raster::new(10, 10);
        t.fill_polygon(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]);
        // centers with x + y < 10 minus the diagonal itself
        assert_eq!(t.count(), (0..10u64).map(|y| 10 - y - 1).sum::<u64>());
    }

    #[test]
    fn components_are_four_connected() {
        // diagonal neighbours are separate components
        let r = Raster::from_fn(3, 3, |x, y| x == y);
        assert_eq!(r.components().len(), 3);
        let r = Raster::from_fn(5, 1, |x, _| x != 2);
        let comps = r.components();
        assert_eq!(comps, vec![vec![(0, 0), (1, 0)], vec![(3, 0), (4, 0)]]);
        // tie goes to the first in scan order
        assert_eq!(
            r.largest_component().foreground().collect::<Vec<_>>(),
            vec![(0, 0), (1, 0)]
        );
    }

    proptest! {
        #[test]
        fn raster_rle_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let r = Raster::from_fn(w, h, |x, y| {
                (seed.rotate_left(x * 7 + y * 13) ^ (x as u64 * 31 + y as u64)) & 3 == 0
            });
            let m = RleMask::from_raster(&r);
            prop_assert_eq!(m.to_raster(), r.clone());
            prop_assert_eq!(m.area(), r.count());
            let back: RleMask = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            prop_assert_eq!(&back, &m);
            if let Ok(b) = bbox_from_mask(&m) {
                prop_assert_eq!(box_iou(&b, &b), 1.0);
                for (x, y) in r.foreground() {
                    prop_assert!(b.x_min <= x as f64 && (x as f64) < b.x_max);
                    prop_assert!(b.y_min <= y as f64 && (y as f64) < b.y_max);
                }
            } else {
                prop_assert_eq!(r.count(), 0);
            }
        }
    }
}
