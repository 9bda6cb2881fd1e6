//! Box overlap, reference-anchored matching and dataset-level detection
//! metrics. The original model's detections are always the reference.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ComparatorError;
use crate::types::{BBox, Detection};

/// Intersection over union of two corner-coordinate boxes.
///
/// Zero-area boxes always score 0, including a degenerate box against itself.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64, ComparatorError> {
    for bbox in [a, b] {
        if !bbox.is_well_formed() {
            return Err(ComparatorError::InvalidBox(*bbox));
        }
    }
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    /// `(ref_index, test_index, iou)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_ref: Vec<usize>,
    pub unmatched_test: Vec<usize>,
}

impl DetectionMatch {
    pub fn is_perfect(&self) -> bool {
        self.unmatched_ref.is_empty() && self.unmatched_test.is_empty()
    }
}

/// Test detections in descending score order; ties keep input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score).then(i.cmp(&j)));
    order
}

/// Greedy one-to-one matching: test detections in descending score order
/// each claim the unclaimed same-label reference with the highest IoU at or
/// above `threshold` (lowest index on IoU ties).
pub fn match_detections(
    reference: &[Detection],
    test: &[Detection],
    threshold: f64,
) -> Result<DetectionMatch, ComparatorError> {
    let mut claimed = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let mut unmatched_test = Vec::new();

    for ti in score_order(test) {
        let t = &test[ti];
        let mut best: Option<(usize, f64)> = None;
        for (ri, r) in reference.iter().enumerate() {
            if claimed[ri] || r.label != t.label {
                continue;
            }
            let overlap = iou(&r.bbox, &t.bbox)?;
            if overlap < threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((ri, overlap));
            }
        }
        match best {
            Some((ri, overlap)) => {
                claimed[ri] = true;
                pairs.push((ri, ti, overlap));
            }
            None => unmatched_test.push(ti),
        }
    }
    unmatched_test.sort_unstable();
    let unmatched_ref = (0..reference.len()).filter(|&i| !claimed[i]).collect();
    Ok(DetectionMatch {
        pairs,
        unmatched_ref,
        unmatched_test,
    })
}

/// One input's reference and test detections.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub id: &'a str,
    pub reference: &'a [Detection],
    pub test: &'a [Detection],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Average precision per reference class.
    #[serde(with = "super::numeric_keys")]
    pub ap: BTreeMap<u32, f64>,
    pub map: Option<f64>,
    pub mean_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub per_threshold: Vec<ThresholdMetrics>,
    /// Mean recall over the thresholds.
    pub ar: Option<f64>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// All-point interpolated average precision.
///
/// `ranked_hits` lists test detections in descending score order, `true`
/// for detections matched to a reference.
pub fn average_precision(ranked_hits: &[bool], ref_count: usize) -> f64 {
    if ref_count == 0 {
        return 0.0;
    }
    let mut curve = Vec::with_capacity(ranked_hits.len());
    let mut tp = 0usize;
    for (rank, &hit) in ranked_hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        curve.push((tp as f64 / ref_count as f64, tp as f64 / (rank + 1) as f64));
    }
    // Precision envelope: running max from the right.
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(recall, precision) in &curve {
        if recall > prev_recall {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    ap
}

/// Dataset-level precision, recall, F1, per-class AP, mAP and mean IoU at
/// every threshold, plus AR. All values are `None` when the reference
/// holds no detections at all.
pub fn detection_metrics(
    scenes: &[Scene<'_>],
    thresholds: &[f64],
) -> Result<DetectionMetrics, ComparatorError> {
    // Sort scenes by id so the result does not depend on input order.
    let mut scenes: Vec<&Scene<'_>> = scenes.iter().collect();
    scenes.sort_by(|a, b| a.id.cmp(b.id));

    let total_ref: usize = scenes.iter().map(|s| s.reference.len()).sum();
    let total_test: usize = scenes.iter().map(|s| s.test.len()).sum();
    let mut ref_per_class: BTreeMap<u32, usize> = BTreeMap::new();
    for s in &scenes {
        for d in s.reference {
            *ref_per_class.entry(d.label).or_default() += 1;
        }
    }

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        if total_ref == 0 {
            per_threshold.push(ThresholdMetrics {
                threshold,
                precision: None,
                recall: None,
                f1: None,
                ap: BTreeMap::new(),
                map: None,
                mean_iou: None,
            });
            continue;
        }

        let mut matched = 0usize;
        let mut iou_sum = 0.0;
        // (score, scene position, test index, hit) per class.
        let mut ranked: BTreeMap<u32, Vec<(f64, usize, usize, bool)>> = BTreeMap::new();
        for (si, s) in scenes.iter().enumerate() {
            let m = match_detections(s.reference, s.test, threshold)?;
            let mut hit = vec![false; s.test.len()];
            for &(_, ti, overlap) in &m.pairs {
                hit[ti] = true;
                iou_sum += overlap;
            }
            matched += m.pairs.len();
            for (ti, d) in s.test.iter().enumerate() {
                ranked
                    .entry(d.label)
                    .or_default()
                    .push((d.score, si, ti, hit[ti]));
            }
        }

        let precision = if total_test == 0 {
            0.0
        } else {
            matched as f64 / total_test as f64
        };
        let recall = matched as f64 / total_ref as f64;

        let mut ap = BTreeMap::new();
        for (&label, &count) in &ref_per_class {
            let mut dets = ranked.remove(&label).unwrap_or_default();
            dets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let hits: Vec<bool> = dets.iter().map(|d| d.3).collect();
            ap.insert(label, average_precision(&hits, count));
        }
        let map = ap.values().sum::<f64>() / ap.len() as f64;
        let mean_iou = if matched == 0 {
            0.0
        } else {
            iou_sum / matched as f64
        };
        per_threshold.push(ThresholdMetrics {
            threshold,
            precision: Some(precision),
            recall: Some(recall),
            f1: Some(f1_score(precision, recall)),
            ap,
            map: Some(map),
            mean_iou: Some(mean_iou),
        });
    }

    let recalls: Option<Vec<f64>> = per_threshold.iter().map(|t| t.recall).collect();
    let ar = recalls
        .filter(|r| !r.is_empty())
        .map(|r| r.iter().sum::<f64>() / r.len() as f64);
    Ok(DetectionMetrics { per_threshold, ar })
}

/// Labels in order of their highest-scoring detection.
pub fn ranked_detection_labels(dets: &[Detection]) -> Vec<u32> {
    let mut seen = BTreeSet::new();
    score_order(dets)
        .into_iter()
        .map(|i| dets[i].label)
        .filter(|l| seen.insert(*l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(label: u32, score: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> Detection {
        Detection {
            label,
            score,
            bbox: BBox::new(x1, y1, x2, y2),
        }
    }

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        assert!((iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        let point = BBox::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&point, &point).unwrap(), 0.0);
        assert!(matches!(
            iou(&BBox::new(3.0, 0.0, 1.0, 1.0), &a),
            Err(ComparatorError::InvalidBox(_))
        ));
    }

    #[test]
    fn greedy_prefers_higher_score() {
        let reference = [det(0, 0.9, 0.0, 0.0, 10.0, 10.0)];
        let test = [
            det(0, 0.4, 0.0, 0.0, 10.0, 10.0),
            det(0, 0.8, 1.0, 0.0, 10.0, 10.0),
        ];
        let m = match_detections(&reference, &test, 0.5).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].1, 1, "higher-score test box claims the reference");
        assert_eq!(m.unmatched_test, vec![0]);
        assert!(m.unmatched_ref.is_empty());
    }

    #[test]
    fn matching_is_class_aware() {
        let reference = [det(0, 0.9, 0.0, 0.0, 10.0, 10.0)];
        let test = [det(1, 0.9, 0.0, 0.0, 10.0, 10.0)];
        let m = match_detections(&reference, &test, 0.5).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_ref, vec![0]);
        assert_eq!(m.unmatched_test, vec![0]);
    }

    #[test]
    fn empty_test_leaves_references_unmatched() {
        let reference = [det(0, 0.9, 0.0, 0.0, 1.0, 1.0), det(2, 0.5, 0.0, 0.0, 2.0, 2.0)];
        let m = match_detections(&reference, &[], 0.5).unwrap();
        assert_eq!(m.unmatched_ref, vec![0, 1]);
    }

    #[test]
    fn ap_for_tp_fp_tp_is_five_sixths() {
        let ap = average_precision(&[true, false, true], 2);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn f1_for_half_recall() {
        assert!((f1_score(1.0, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn identical_scenes_score_one() {
        let dets = [det(0, 0.9, 0.0, 0.0, 4.0, 4.0), det(3, 0.7, 5.0, 5.0, 9.0, 8.0)];
        let scenes = [Scene {
            id: "a",
            reference: &dets,
            test: &dets,
        }];
        let m = detection_metrics(&scenes, &[0.5, 0.75, 0.9]).unwrap();
        for t in &m.per_threshold {
            assert_eq!(t.precision, Some(1.0));
            assert_eq!(t.recall, Some(1.0));
            assert_eq!(t.f1, Some(1.0));
            assert_eq!(t.map, Some(1.0));
            assert_eq!(t.mean_iou, Some(1.0));
        }
        assert_eq!(m.ar, Some(1.0));
    }

    #[test]
    fn no_reference_detections_means_absent_metrics() {
        let test = [det(0, 0.9, 0.0, 0.0, 4.0, 4.0)];
        let scenes = [Scene {
            id: "a",
            reference: &[],
            test: &test,
        }];
        let m = detection_metrics(&scenes, &[0.5]).unwrap();
        assert_eq!(m.per_threshold[0].precision, None);
        assert_eq!(m.per_threshold[0].map, None);
        assert_eq!(m.ar, None);
    }

    #[test]
    fn ranked_labels_dedupe_by_best_score() {
        let dets = [
            det(2, 0.3, 0.0, 0.0, 1.0, 1.0),
            det(1, 0.9, 0.0, 0.0, 1.0, 1.0),
            det(2, 0.8, 0.0, 0.0, 1.0, 1.0),
        ];
        assert_eq!(ranked_detection_labels(&dets), vec![1, 2]);
    }
}
