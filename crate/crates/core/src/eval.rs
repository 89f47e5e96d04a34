//! Detection and label-quality metrics.
//!
//! AP is interpolation-free: the sum of precisions at each true-positive rank
//! divided by the number of ground-truth instances. Predictions are ranked by
//! confidence (ties by start time) and each one greedily claims the unmatched
//! same-class ground truth of highest IoU at or above the threshold.
//!
//! mIoU is the per-class mean, over ground-truth instances, of the best IoU
//! reached by any same-class label, averaged over the classes present in the
//! ground truth.

use std::collections::BTreeSet;

use crate::instance::{Instance, OnlineLabelState};
use crate::kernels::iou;

/// THUMOS-style thresholds 0.1, 0.2, ..., 0.7.
pub const DEFAULT_THRESHOLDS: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

/// Minimum overlap for a label/ground-truth pair to count toward boundary error.
pub const BOUNDARY_MATCH_IOU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(threshold, mAP)` in the order the thresholds were requested.
    pub map_per_threshold: Vec<(f64, f64)>,
    pub average_map: f64,
    pub miou: f64,
    /// `(threshold, recall)`; recall is pooled over all classes.
    pub recall_per_threshold: Vec<(f64, f64)>,
    pub mean_boundary_error: f64,
}

/// Predictions and ground truth of a single video.
#[derive(Debug, Clone, Copy)]
pub struct VideoEval<'a> {
    pub preds: &'a [Instance],
    pub gts: &'a [Instance],
}

#[derive(Clone, Copy)]
struct Tagged<'a> {
    video: usize,
    index: usize,
    inst: &'a Instance,
}

fn rank_order(a: &Tagged, b: &Tagged) -> std::cmp::Ordering {
    b.inst
        .confidence
        .total_cmp(&a.inst.confidence)
        .then(a.inst.start.total_cmp(&b.inst.start))
        .then(a.video.cmp(&b.video))
        .then(a.inst.end.total_cmp(&b.inst.end))
        .then(a.index.cmp(&b.index))
}

/// True-positive flags of `preds` in rank order.
fn match_ranked(mut preds: Vec<Tagged>, gts: &[Tagged], threshold: f64) -> Vec<bool> {
    preds.sort_by(rank_order);
    let mut used = vec![false; gts.len()];
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if used[j] || g.video != p.video || g.inst.category != p.inst.category {
                    continue;
                }
                let v = iou(p.inst, g.inst);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

fn ap_from_flags(flags: &[bool], n_gts: usize) -> f64 {
    if n_gts == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &hit) in flags.iter().enumerate() {
        if hit {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    sum / n_gts as f64
}

/// AP of single-class predictions against single-class ground truth of one video.
pub fn average_precision(preds: &[Instance], gts: &[Instance], threshold: f64) -> f64 {
    let p = tag(0, preds);
    let g = tag(0, gts);
    ap_from_flags(&match_ranked(p, &g, threshold), gts.len())
}

fn tag(video: usize, items: &[Instance]) -> Vec<Tagged<'_>> {
    items
        .iter()
        .enumerate()
        .map(|(index, inst)| Tagged { video, index, inst })
        .collect()
}

fn tag_all<'a>(
    videos: &'a [VideoEval<'a>],
    pick: fn(&VideoEval<'a>) -> &'a [Instance],
) -> Vec<Tagged<'a>> {
    videos
        .iter()
        .enumerate()
        .flat_map(|(v, ve)| tag(v, pick(ve)))
        .collect()
}

fn gt_classes(videos: &[VideoEval]) -> BTreeSet<u32> {
    videos
        .iter()
        .flat_map(|v| v.gts.iter().map(|g| g.category))
        .collect()
}

type ByThreshold = Vec<(f64, f64)>;

/// Mean AP over ground-truth classes, per threshold, with predictions pooled
/// across videos. Returns `(map_per_threshold, recall_per_threshold)`.
fn map_and_recall(videos: &[VideoEval], thresholds: &[f64]) -> (ByThreshold, ByThreshold) {
    let all_preds = tag_all(videos, |v| v.preds);
    let all_gts = tag_all(videos, |v| v.gts);
    let classes = gt_classes(videos);

    let mut maps = Vec::with_capacity(thresholds.len());
    let mut recalls = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut ap_sum = 0.0;
        let mut hits = 0usize;
        for &c in &classes {
            let preds: Vec<Tagged> = all_preds
                .iter()
                .filter(|p| p.inst.category == c)
                .copied()
                .collect();
            let gts: Vec<Tagged> = all_gts
                .iter()
                .filter(|g| g.inst.category == c)
                .copied()
                .collect();
            let flags = match_ranked(preds, &gts, t);
            hits += flags.iter().filter(|&&f| f).count();
            ap_sum += ap_from_flags(&flags, gts.len());
        }
        let map = if classes.is_empty() {
            0.0
        } else {
            ap_sum / classes.len() as f64
        };
        let recall = if all_gts.is_empty() {
            0.0
        } else {
            hits as f64 / all_gts.len() as f64
        };
        maps.push((t, map));
        recalls.push((t, recall));
    }
    (maps, recalls)
}

/// mAP at each threshold for one video's multi-class predictions.
pub fn map_at(preds: &[Instance], gts: &[Instance], thresholds: &[f64]) -> Vec<(f64, f64)> {
    map_and_recall(&[VideoEval { preds, gts }], thresholds).0
}

/// Recall at `threshold`, pooled over classes and videos, under one-to-one matching.
pub fn recall_at(videos: &[VideoEval], threshold: f64) -> f64 {
    map_and_recall(videos, &[threshold]).1[0].1
}

/// Dataset-level mIoU.
pub fn miou_videos(videos: &[VideoEval]) -> f64 {
    let classes = gt_classes(videos);
    if classes.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &c in &classes {
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in videos {
            for g in v.gts.iter().filter(|g| g.category == c) {
                let best = v
                    .preds
                    .iter()
                    .filter(|p| p.category == c)
                    .map(|p| iou(p, g))
                    .fold(0.0, f64::max);
                sum += best;
                n += 1;
            }
        }
        total += sum / n as f64;
    }
    total / classes.len() as f64
}

pub fn miou(labels: &OnlineLabelState, gts: &[Instance]) -> f64 {
    let preds = labels.to_instances();
    miou_videos(&[VideoEval { preds: &preds, gts }])
}

/// Sum of per-pair boundary errors and the number of matched pairs in one video.
///
/// Pairs share a class and overlap by at least [`BOUNDARY_MATCH_IOU`]; they are
/// claimed greedily in descending IoU order.
pub fn boundary_error_terms(labels: &[Instance], gts: &[Instance]) -> (f64, usize) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            if l.category != g.category {
                continue;
            }
            let v = iou(l, g);
            if v >= BOUNDARY_MATCH_IOU {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut label_used = vec![false; labels.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut sum = 0.0;
    let mut count = 0;
    for (_, i, j) in pairs {
        if label_used[i] || gt_used[j] {
            continue;
        }
        label_used[i] = true;
        gt_used[j] = true;
        sum += ((labels[i].start - gts[j].start).abs() + (labels[i].end - gts[j].end).abs()) / 2.0;
        count += 1;
    }
    (sum, count)
}

/// Mean of `(|d_start| + |d_end|) / 2` over matched pairs; 0 when nothing matches.
pub fn boundary_error(labels: &[Instance], gts: &[Instance]) -> f64 {
    let (sum, n) = boundary_error_terms(labels, gts);
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn boundary_error_videos(videos: &[VideoEval]) -> f64 {
    let (sum, n) = videos
        .iter()
        .map(|v| boundary_error_terms(v.preds, v.gts))
        .fold((0.0, 0), |(s, n), (s2, n2)| (s + s2, n + n2));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Full report over a set of videos.
pub fn evaluate(videos: &[VideoEval], thresholds: &[f64]) -> EvalReport {
    let (map_per_threshold, recall_per_threshold) = map_and_recall(videos, thresholds);
    let average_map = if map_per_threshold.is_empty() {
        0.0
    } else {
        map_per_threshold.iter().map(|(_, m)| m).sum::<f64>() / map_per_threshold.len() as f64
    };
    EvalReport {
        map_per_threshold,
        average_map,
        miou: miou_videos(videos),
        recall_per_threshold,
        mean_boundary_error: boundary_error_videos(videos),
    }
}

impl EvalReport {
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = self
            .map_per_threshold
            .iter()
            .map(|(t, _)| format!("map@{t}"))
            .collect();
        cols.push("average_map".into());
        cols.push("miou".into());
        cols.extend(
            self.recall_per_threshold
                .iter()
                .map(|(t, _)| format!("recall@{t}")),
        );
        cols.push("mean_boundary_error".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols: Vec<String> = self
            .map_per_threshold
            .iter()
            .map(|(_, m)| m.to_string())
            .collect();
        cols.push(self.average_map.to_string());
        cols.push(self.miou.to_string());
        cols.extend(self.recall_per_threshold.iter().map(|(_, r)| r.to_string()));
        cols.push(self.mean_boundary_error.to_string());
        cols.join(",")
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "threshold  mAP      recall")?;
        for ((t, m), (_, r)) in self
            .map_per_threshold
            .iter()
            .zip(&self.recall_per_threshold)
        {
            writeln!(f, "{t:<9.2}  {:>6.2}%  {:>6.2}%", m * 100.0, r * 100.0)?;
        }
        writeln!(f, "average mAP          {:.2}%", self.average_map * 100.0)?;
        writeln!(f, "mIoU                 {:.4}", self.miou)?;
        write!(f, "mean boundary error  {:.4} s", self.mean_boundary_error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(c: u32, conf: f64, s: f64, e: f64) -> Instance {
        Instance::new(c, conf, s, e).unwrap()
    }

    #[test]
    fn perfect_detector_scores_one() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0), inst(0, 1.0, 20.0, 30.0)];
        assert_eq!(average_precision(&gts, &gts, 0.5), 1.0);
    }

    #[test]
    fn misses_score_zero() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0)];
        let preds = vec![inst(0, 0.9, 8.0, 18.0)];
        assert_eq!(average_precision(&preds, &gts, 0.5), 0.0);
        assert_eq!(average_precision(&preds, &[], 0.5), 0.0);
        assert_eq!(average_precision(&[], &gts, 0.5), 0.0);
    }

    #[test]
    fn ap_with_tp_at_ranks_one_and_three() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0), inst(0, 1.0, 20.0, 30.0)];
        let preds = vec![
            inst(0, 0.9, 0.0, 10.0),
            inst(0, 0.8, 50.0, 60.0),
            inst(0, 0.7, 20.0, 30.0),
        ];
        let ap = average_precision(&preds, &gts, 0.5);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_detection_is_a_false_positive() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0)];
        let preds = vec![inst(0, 0.9, 0.0, 10.0), inst(0, 0.8, 0.5, 10.0)];
        assert_eq!(average_precision(&preds, &gts, 0.5), 1.0);
        let preds = vec![inst(0, 0.9, 0.5, 10.0), inst(0, 0.8, 0.0, 10.0)];
        assert_eq!(average_precision(&preds, &gts, 0.5), 1.0);
        let preds = vec![inst(0, 0.9, 30.0, 40.0), inst(0, 0.8, 0.0, 10.0)];
        assert_eq!(average_precision(&preds, &gts, 0.5), 0.5);
    }

    #[test]
    fn map_examples() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0), inst(1, 1.0, 20.0, 30.0)];
        for (_, m) in map_at(&gts, &gts, &[0.3, 0.5, 0.7]) {
            assert_eq!(m, 1.0);
        }
        for (_, m) in map_at(&[], &gts, &[0.3, 0.5, 0.7]) {
            assert_eq!(m, 0.0);
        }
        // class 1 missed entirely, class 2 (absent from gts) ignored
        let preds = vec![inst(0, 1.0, 0.0, 10.0), inst(2, 1.0, 20.0, 30.0)];
        assert_eq!(map_at(&preds, &gts, &[0.5])[0].1, 0.5);
    }

    #[test]
    fn miou_examples() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0)];
        let same = OnlineLabelState::new(
            "v",
            vec![crate::instance::WeightedInstance::new(gts[0], 1.0).unwrap()],
        );
        assert_eq!(miou(&same, &gts), 1.0);
        assert_eq!(miou(&OnlineLabelState::empty("v"), &gts), 0.0);
        let shifted = OnlineLabelState::new(
            "v",
            vec![crate::instance::WeightedInstance::new(inst(0, 1.0, 5.0, 15.0), 1.0).unwrap()],
        );
        assert!((miou(&shifted, &gts) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn miou_averages_classes_not_instances() {
        let gts = vec![
            inst(0, 1.0, 0.0, 10.0),
            inst(0, 1.0, 20.0, 30.0),
            inst(1, 1.0, 40.0, 50.0),
        ];
        let labels = vec![inst(1, 1.0, 40.0, 50.0)];
        let v = miou_videos(&[VideoEval {
            preds: &labels,
            gts: &gts,
        }]);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn boundary_error_examples() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0), inst(1, 1.0, 20.0, 30.0)];
        assert_eq!(boundary_error(&gts, &gts), 0.0);
        let shifted = vec![inst(0, 1.0, 2.0, 12.0)];
        assert_eq!(boundary_error(&shifted, &gts[..1]), 2.0);
        // far-off label does not match
        assert_eq!(boundary_error(&[inst(0, 1.0, 9.5, 40.0)], &gts[..1]), 0.0);
    }

    #[test]
    fn report_average_is_mean_of_thresholds() {
        let gts = vec![inst(0, 1.0, 0.0, 10.0)];
        let preds = vec![inst(0, 1.0, 0.0, 6.0)];
        let r = evaluate(
            &[VideoEval {
                preds: &preds,
                gts: &gts,
            }],
            &DEFAULT_THRESHOLDS,
        );
        // IoU 0.6: hits at 0.1..0.6, miss at 0.7
        assert!((r.average_map - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(r.recall_per_threshold[6].1, 0.0);
        assert_eq!(r.recall_per_threshold[5].1, 1.0);
        assert_eq!(
            r.csv_header().split(',').count(),
            r.csv_row().split(',').count()
        );
    }
}
