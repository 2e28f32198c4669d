//! From a grounded box to a contact plan: mask acquisition, contact point
//! and approach direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{denormalize_bbox, round_half_up, ImageRef, NormBBox};
use crate::mask::{Raster, RleMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanSource {
    MaskCentroid,
    BboxFallback,
    /// Drawn by the random baseline.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproachMode {
    Pull,
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPlan {
    /// Pixel column and row.
    pub contact: [u32; 2],
    /// Unit direction of the applied motion.
    pub approach: [f64; 2],
    pub source: PlanSource,
}

/// Integer pixel rectangle `[x0, x1) x [y0, y1)` covered by a normalized
/// box. Edges round half-up; at least one pixel wide and tall.
pub fn pixel_rect(nbox: &NormBBox, image: &ImageRef) -> [u32; 4] {
    let b = denormalize_bbox(nbox, image);
    let edge = |v: f64, max: u32| (round_half_up(v).max(0.0) as u32).min(max);
    let x0 = edge(b.x_min, image.width - 1);
    let y0 = edge(b.y_min, image.height - 1);
    let x1 = edge(b.x_max, image.width).max(x0 + 1);
    let y1 = edge(b.y_max, image.height).max(y0 + 1);
    [x0, y0, x1, y1]
}

/// Mask for the region inside `nbox`. An external segmentation is
/// clipped to the box; without one, or when the clipped mask is empty,
/// the filled box rectangle is returned.
pub fn mask_for_box(nbox: &NormBBox, image: &ImageRef, external: Option<&RleMask>) -> Result<(RleMask, PlanSource)> {
    let [x0, y0, x1, y1] = pixel_rect(nbox, image);
    if let Some(m) = external {
        if m.width() != image.width || m.height() != image.height {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, image {} is {}x{}",
                m.width(),
                m.height(),
                image.id,
                image.width,
                image.height
            )));
        }
        let clipped = m.intersect_rect(x0, y0, x1, y1);
        if !clipped.is_empty() {
            return Ok((clipped, PlanSource::MaskCentroid));
        }
        log::warn!(
            "external mask for {} is empty inside the box; using the box rectangle",
            image.id
        );
    }
    let rect = Raster::from_rect(image.width, image.height, x0, y0, x1, y1);
    Ok((RleMask::from_raster(&rect), PlanSource::BboxFallback))
}

/// Centroid of the largest 4-connected component, rounded half-up. When
/// that pixel is background the closest foreground pixel of the
/// component is returned instead, earliest in row-major order on ties.
pub fn contact_point(mask: &RleMask) -> Result<[u32; 2]> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let comp = mask.to_raster().largest_component();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for (x, y) in comp.foreground() {
        sx += x as f64;
        sy += y as f64;
        n += 1.0;
    }
    let (cx, cy) = (sx / n, sy / n);
    let (rx, ry) = (round_half_up(cx) as u32, round_half_up(cy) as u32);
    if comp.get(rx, ry) {
        return Ok([rx, ry]);
    }
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (x, y) in comp.foreground() {
        let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        if d < best_d {
            best_d = d;
            best = Some([x, y]);
        }
    }
    Ok(best.expect("component is non-empty"))
}

/// Pull follows the surface normal; push opposes it.
pub fn approach_from_normal(normal: [f64; 2], mode: ApproachMode) -> Result<[f64; 2]> {
    let len = normal[0].hypot(normal[1]);
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::InvalidInput(format!("normal {normal:?} has no direction")));
    }
    let s = match mode {
        ApproachMode::Pull => 1.0,
        ApproachMode::Push => -1.0,
    };
    Ok([s * normal[0] / len, s * normal[1] / len])
}

/// Full plan for a predicted box.
pub fn plan_for_box(
    nbox: &NormBBox,
    image: &ImageRef,
    external: Option<&RleMask>,
    normal: [f64; 2],
    mode: ApproachMode,
) -> Result<ContactPlan> {
    let (mask, source) = mask_for_box(nbox, image, external)?;
    Ok(ContactPlan {
        contact: contact_point(&mask)?,
        approach: approach_from_normal(normal, mode)?,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: u32, h: u32) -> ImageRef {
        ImageRef::new("i", w, h, "i.png").unwrap()
    }

    #[test]
    fn rectangle_fallback() {
        let b = NormBBox::from_f64([0.25, 0.25, 0.75, 0.75]).unwrap();
        let (m, src) = mask_for_box(&b, &img(100, 100), None).unwrap();
        assert_eq!(src, PlanSource::BboxFallback);
        assert_eq!(m.area(), 2500);
        assert_eq!(
            crate::mask::bbox_from_mask(&m).unwrap().to_array(),
            [25.0, 25.0, 75.0, 75.0]
        );
    }

    #[test]
    fn external_inside_box_unchanged() {
        let ext = RleMask::from_raster(&Raster::from_rect(100, 100, 30, 40, 50, 60));
        let b = NormBBox::from_f64([0.25, 0.25, 0.75, 0.75]).unwrap();
        let (m, src) = mask_for_box(&b, &img(100, 100), Some(&ext)).unwrap();
        assert_eq!((m, src), (ext, PlanSource::MaskCentroid));
    }

    #[test]
    fn external_disjoint_falls_back() {
        let ext = RleMask::from_raster(&Raster::from_rect(100, 100, 0, 0, 5, 5));
        let b = NormBBox::from_f64([0.25, 0.25, 0.75, 0.75]).unwrap();
        let (m, src) = mask_for_box(&b, &img(100, 100), Some(&ext)).unwrap();
        assert_eq!(src, PlanSource::BboxFallback);
        assert_eq!(m.area(), 2500);
    }

    #[test]
    fn external_size_mismatch() {
        let ext = RleMask::from_raster(&Raster::from_rect(50, 50, 0, 0, 5, 5));
        let b = NormBBox::from_f64([0.25, 0.25, 0.75, 0.75]).unwrap();
        assert!(mask_for_box(&b, &img(100, 100), Some(&ext)).is_err());
    }

    #[test]
    fn rectangle_centroid() {
        let m = RleMask::from_raster(&Raster::from_rect(64, 64, 10, 10, 30, 20));
        assert_eq!(contact_point(&m).unwrap(), [20, 15]);
        let m = RleMask::from_raster(&Raster::from_rect(16, 16, 7, 3, 8, 4));
        assert_eq!(contact_point(&m).unwrap(), [7, 3]);
    }

    /// Nearest foreground pixel to the centroid by exhaustive scan.
    fn nearest_oracle(r: &Raster) -> [u32; 2] {
        let pts: Vec<(u32, u32)> = (0..r.height())
            .flat_map(|y| (0..r.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| r.get(x, y))
            .collect();
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let d = |p: &(u32, u32)| (p.0 as f64 - cx).powi(2) + (p.1 as f64 - cy).powi(2);
        let min = pts.iter().map(d).fold(f64::INFINITY, f64::min);
        let p = pts.iter().find(|p| d(p) == min).unwrap();
        [p.0, p.1]
    }

    #[test]
    fn l_shape_uses_nearest_foreground() {
        // vertical bar x in 0..3, y in 0..12 plus horizontal bar x in 0..12, y in 9..12
        let r = Raster::from_fn(16, 16, |x, y| (x < 3 && y < 12) || (x < 12 && (9..12).contains(&y)));
        let m = RleMask::from_raster(&r);
        let p = contact_point(&m).unwrap();
        // centroid is about (3.86, 7.64); (4, 8) is in the notch
        assert!(!r.get(4, 8));
        assert!(r.get(p[0], p[1]));
        assert_eq!(p, nearest_oracle(&r));
    }

    #[test]
    fn largest_component_wins() {
        let r = Raster::from_fn(20, 10, |x, y| {
            (x < 2 && y < 2) || (10..18).contains(&x) && (2..6).contains(&y)
        });
        assert_eq!(contact_point(&RleMask::from_raster(&r)).unwrap(), [14, 4]);
    }

    #[test]
    fn empty_mask_errors() {
        assert!(contact_point(&RleMask::new(4, 4, vec![16]).unwrap()).is_err());
    }

    #[test]
    fn approach() {
        assert_eq!(
            approach_from_normal([0.0, 1.0], ApproachMode::Pull).unwrap(),
            [0.0, 1.0]
        );
        assert_eq!(
            approach_from_normal([0.0, 1.0], ApproachMode::Push).unwrap(),
            [-0.0, -1.0]
        );
        let a = approach_from_normal([3.0, 4.0], ApproachMode::Pull).unwrap();
        assert!((a[0] - 0.6).abs() < 1e-12 && (a[1] - 0.8).abs() < 1e-12);
        assert!(approach_from_normal([0.0, 0.0], ApproachMode::Pull).is_err());
    }

    proptest! {
        #[test]
        fn contact_is_foreground(bits in proptest::collection::vec(any::<bool>(), 12 * 9)) {
            let r = Raster::from_fn(12, 9, |x, y| bits[(y * 12 + x) as usize]);
            prop_assume!(r.count() > 0);
            let m = RleMask::from_raster(&r);
            let p = contact_point(&m).unwrap();
            prop_assert!(r.get(p[0], p[1]));
        }

        #[test]
        fn mask_for_box_never_empty(a in 0u16..1000, b in 0u16..1000, c in 0u16..1000, d in 0u16..1000) {
            prop_assume!(a != b && c != d);
            let nb = NormBBox::from_milli([a.min(b), c.min(d), a.max(b), c.max(d)]).unwrap();
            let (m, _) = mask_for_box(&nb, &img(37, 23), None).unwrap();
            prop_assert!(m.area() > 0);
        }
    }
}
