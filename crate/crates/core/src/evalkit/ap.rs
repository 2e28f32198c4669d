//! COCO-style average precision.

use std::collections::{BTreeMap, BTreeSet};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Recall sample points 0.00, 0.01, ..., 1.00.
pub fn recall_points() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<R> {
    pub image: String,
    pub category: String,
    pub score: f64,
    pub region: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<R> {
    pub image: String,
    pub category: String,
    pub region: R,
}

/// Greedy matching for one category at one threshold. Detections are
/// visited by descending score (stable for ties); each takes the
/// unmatched ground truth in its image with the highest IoU at or above
/// `threshold`. Returns one true-positive flag per detection in visiting
/// order.
pub fn greedy_match<R>(
    dets: &[&Detection<R>],
    gts: &[&GroundTruth<R>],
    threshold: f64,
    iou: &impl Fn(&R, &R) -> f64,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|di| {
            let d = dets[di];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] || g.image != d.image {
                    continue;
                }
                let v = iou(&d.region, &g.region);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            match best {
                Some((gi, _)) => {
                    taken[gi] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// 101-point interpolated AP from true-positive flags ordered by
/// descending score.
pub fn ap_from_flags(flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &f in flags {
        if f {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in recall_points() {
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / 101.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    pub thresholds: Vec<f64>,
    /// Category to AP at each threshold.
    pub per_category: BTreeMap<String, Vec<f64>>,
    /// Categories that only appear in detections.
    pub excluded: BTreeSet<String>,
}

impl ApResult {
    /// Category to AP averaged over thresholds.
    pub fn mean_over_thresholds(&self) -> BTreeMap<String, f64> {
        self.per_category
            .iter()
            .map(|(c, v)| (c.clone(), v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }

    /// Category to AP at the threshold closest to `t`.
    pub fn at(&self, t: f64) -> BTreeMap<String, f64> {
        let i = self
            .thresholds
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.per_category.iter().map(|(c, v)| (c.clone(), v[i])).collect()
    }
}

/// AP per category and threshold. Categories without ground truth are
/// left out and listed in `excluded`.
pub fn average_precision<R>(
    dets: &[Detection<R>],
    gts: &[GroundTruth<R>],
    thresholds: &[f64],
    iou: impl Fn(&R, &R) -> f64,
) -> ApResult {
    let gt_cats: BTreeSet<&str> = gts.iter().map(|g| g.category.as_str()).collect();
    let excluded = dets
        .iter()
        .map(|d| d.category.as_str())
        .filter(|c| !gt_cats.contains(c))
        .map(str::to_string)
        .collect();
    let mut per_category = BTreeMap::new();
    for cat in gt_cats {
        let d: Vec<&Detection<R>> = dets.iter().filter(|d| d.category == cat).collect();
        let g: Vec<&GroundTruth<R>> = gts.iter().filter(|g| g.category == cat).collect();
        let aps = thresholds
            .iter()
            .map(|&t| ap_from_flags(&greedy_match(&d, &g, t, &iou), g.len()))
            .collect();
        per_category.insert(cat.to_string(), aps);
    }
    ApResult {
        thresholds: thresholds.to_vec(),
        per_category,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(img: &str, score: f64, region: u32) -> Detection<u32> {
        Detection {
            image: img.into(),
            category: "c".into(),
            score,
            region,
        }
    }

    fn gt(img: &str, region: u32) -> GroundTruth<u32> {
        GroundTruth {
            image: img.into(),
            category: "c".into(),
            region,
        }
    }

    fn same(a: &u32, b: &u32) -> f64 {
        if a == b {
            1.0
        } else {
            0.0
        }
    }

    #[test]
    fn hit_then_false_positive() {
        let r = average_precision(&[det("i", 0.9, 1), det("i", 0.8, 2)], &[gt("i", 1)], &[0.5], same);
        assert_eq!(r.per_category["c"], vec![1.0]);
    }

    #[test]
    fn false_positive_then_hit() {
        // PR points: (r=0, p=0), (r=1, p=0.5); interpolated precision 0.5 at every recall point
        let r = average_precision(&[det("i", 0.9, 2), det("i", 0.8, 1)], &[gt("i", 1)], &[0.5], same);
        assert_eq!(r.per_category["c"], vec![0.5]);
    }

    #[test]
    fn empty_predictions() {
        let r = average_precision::<u32>(&[], &[gt("i", 1)], &coco_thresholds(), same);
        assert!(r.per_category["c"].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_recall() {
        // one of two found at precision 1: recall points 0..=0.5 score 1, the other 50 score 0
        let flags = [true];
        assert_eq!(ap_from_flags(&flags, 2), 51.0 / 101.0);
    }

    #[test]
    fn wrong_image_never_matches() {
        let r = average_precision(&[det("j", 0.9, 1)], &[gt("i", 1)], &[0.5], same);
        assert_eq!(r.per_category["c"], vec![0.0]);
    }

    #[test]
    fn detection_only_category_is_excluded() {
        let mut d = det("i", 0.9, 1);
        d.category = "ghost".into();
        let r = average_precision(&[d], &[gt("i", 1)], &[0.5], same);
        assert!(r.excluded.contains("ghost"));
        assert!(!r.per_category.contains_key("ghost"));
    }
}
