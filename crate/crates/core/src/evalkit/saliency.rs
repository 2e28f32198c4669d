//! Dense map comparison: KL divergence, similarity and normalized
//! scanpath saliency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::RleMask;

pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_NSS_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl Heatmap {
    /// Row-major values; all must be finite and non-negative.
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "heatmap value {v} is not a finite non-negative number"
            )));
        }
        Ok(Heatmap { width, height, values })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Heatmap {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// 1 on foreground, 0 elsewhere.
pub fn heatmap_from_mask(mask: &RleMask) -> Heatmap {
    let r = mask.to_raster();
    let values = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .map(|(x, y)| if r.get(x, y) { 1.0 } else { 0.0 })
        .collect();
    Heatmap {
        width: mask.width(),
        height: mask.height(),
        values,
    }
}

fn same_shape(a: &Heatmap, b: &Heatmap) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn normalized(h: &Heatmap, what: &str) -> Result<Vec<f64>> {
    let s = h.sum();
    if s <= 0.0 {
        return Err(Error::InvalidInput(format!("{what} map has no mass")));
    }
    Ok(h.values.iter().map(|v| v / s).collect())
}

/// Which distribution plays the reference role in [`kld`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// KL(gt || pred).
    #[default]
    GtToPred,
    /// KL(pred || gt).
    PredToGt,
}

/// `sum G * ln(G / (P + eps) + eps)` with `G` the normalized reference and
/// `P` the other map after adding `eps` to every cell and normalizing.
pub fn kld_with(gt: &Heatmap, pred: &Heatmap, eps: f64, direction: KlDirection) -> Result<f64> {
    same_shape(gt, pred)?;
    let (reference, other) = match direction {
        KlDirection::GtToPred => (gt, pred),
        KlDirection::PredToGt => (pred, gt),
    };
    let g = normalized(reference, "reference")?;
    let total: f64 = other.values.iter().map(|v| v + eps).sum();
    let mut out = 0.0;
    for (gi, oi) in g.iter().zip(&other.values) {
        let p = (oi + eps) / total;
        out += gi * (gi / (p + eps) + eps).ln();
    }
    Ok(out)
}

pub fn kld(gt: &Heatmap, pred: &Heatmap) -> Result<f64> {
    kld_with(gt, pred, DEFAULT_EPS, KlDirection::GtToPred)
}

/// Histogram intersection of the two normalized maps. An all-zero
/// prediction scores 0.
pub fn sim(gt: &Heatmap, pred: &Heatmap) -> Result<f64> {
    same_shape(gt, pred)?;
    let g = normalized(gt, "ground-truth")?;
    if pred.sum() <= 0.0 {
        return Ok(0.0);
    }
    let p = normalized(pred, "prediction")?;
    Ok(g.iter().zip(&p).map(|(a, b)| a.min(*b)).sum())
}

/// Mean z-scored prediction over fixation pixels, where fixations are the
/// cells with `gt >= tau * max(gt)`. Zero prediction variance gives 0.
pub fn nss_with(gt: &Heatmap, pred: &Heatmap, tau: f64) -> Result<f64> {
    same_shape(gt, pred)?;
    nss_scores(gt, &pred.values, tau)
}

/// [`nss_with`] for an arbitrary real-valued score map (row-major, same
/// size as `gt`). Negative scores are allowed here.
pub fn nss_scores(gt: &Heatmap, pred: &[f64], tau: f64) -> Result<f64> {
    if pred.len() != gt.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for a {}x{} map",
            pred.len(),
            gt.width,
            gt.height
        )));
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("prediction scores must be finite".into()));
    }
    let max = gt.values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidInput("ground-truth map has no mass".into()));
    }
    let n = pred.len() as f64;
    let mean = pred.iter().sum::<f64>() / n;
    let var = pred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(0.0);
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (g, p) in gt.values.iter().zip(pred) {
        if *g >= tau * max {
            sum += (p - mean) / std;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

pub fn nss(gt: &Heatmap, pred: &Heatmap) -> Result<f64> {
    nss_with(gt, pred, DEFAULT_NSS_TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(v: &[f64]) -> Heatmap {
        Heatmap::new(v.len() as u32, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn hand_case() {
        let g = h(&[1.0, 0.0]);
        let p = h(&[0.5, 0.5]);
        assert!((kld(&g, &p).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((sim(&g, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nss_single_fixation() {
        let g = h(&[0.0, 0.0, 1.0, 0.0]);
        let p = h(&[0.0, 0.0, 1.0, 0.0]);
        // mean 0.25, population std sqrt(0.1875)
        let want = 0.75 / 0.1875f64.sqrt();
        assert!((nss(&g, &p).unwrap() - want).abs() < 1e-12);
        assert!((want - 1.732).abs() < 1e-3);
    }

    #[test]
    fn nss_flat_prediction_is_zero() {
        assert_eq!(nss(&h(&[1.0, 0.0]), &h(&[0.3, 0.3])).unwrap(), 0.0);
    }

    #[test]
    fn reverse_direction() {
        let g = h(&[0.5, 0.5]);
        let p = h(&[1.0, 0.0]);
        let a = kld_with(&g, &p, DEFAULT_EPS, KlDirection::PredToGt).unwrap();
        assert!((a - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        assert!(kld(&h(&[1.0]), &h(&[1.0, 0.0])).is_err());
        assert!(sim(&h(&[1.0]), &h(&[1.0, 0.0])).is_err());
        assert!(nss(&h(&[1.0]), &h(&[1.0, 0.0])).is_err());
        assert!(Heatmap::new(2, 2, vec![1.0]).is_err());
        assert!(Heatmap::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn mask_heatmap() {
        let m = RleMask::new(2, 2, vec![1, 2, 1]).unwrap();
        // column-major runs: (0,0) bg, (0,1) fg, (1,0) fg, (1,1) bg
        assert_eq!(heatmap_from_mask(&m).values(), &[0.0, 1.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn kld_nonnegative_and_sim_bounded(
            a in proptest::collection::vec(0.0f64..10.0, 12),
            b in proptest::collection::vec(0.0f64..10.0, 12),
        ) {
            let (a, b) = (h(&a), h(&b));
            prop_assume!(a.sum() > 0.0 && b.sum() > 0.0);
            prop_assert!(kld(&a, &b).unwrap() >= -1e-9);
            let s = sim(&a, &b).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        }

        #[test]
        fn nss_affine_invariant(
            p in proptest::collection::vec(0.0f64..1.0, 16),
            g in proptest::collection::vec(0.0f64..1.0, 16),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let base = nss(&h(&g), &h(&p));
            prop_assume!(base.is_ok());
            let moved: Vec<f64> = p.iter().map(|v| scale * v + shift).collect();
            let got = nss_scores(&h(&g), &moved, DEFAULT_NSS_TAU).unwrap();
            prop_assert!((got - base.unwrap()).abs() < 1e-6);
        }
    }
}
