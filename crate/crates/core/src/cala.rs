//! Context-aware label augmentation.
//!
//! Every confident, NMS-surviving prediction acts as an anchor. The anchor's
//! boundaries are replaced by the weighted mean of all same-class predictions
//! that overlap it by more than `eta0`, including the anchor itself and
//! including predictions that failed the confidence filter.

use crate::error::{Error, Result};
use crate::instance::{Instance, OnlineLabelState, WeightedInstance};
use crate::kernels::{clamp01, confidence_filter, iou, nms};
use crate::params::CorrectionParams;

/// An anchor together with its context members and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationSet {
    pub anchor: Instance,
    pub members: Vec<(Instance, f64)>,
}

impl AssociationSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }
}

/// `exp(sqrt(iou(candidate, anchor) * clamp01(confidence)))`, always in `[1, e]`.
pub fn adaptive_weight(candidate: &Instance, anchor: &Instance) -> f64 {
    (iou(candidate, anchor) * clamp01(candidate.confidence))
        .sqrt()
        .exp()
}

/// Collects same-category pool members whose IoU with `anchor` exceeds `eta`.
pub fn associate(anchor: &Instance, pool: &[Instance], eta: f64) -> AssociationSet {
    let members = pool
        .iter()
        .filter(|p| p.category == anchor.category && iou(anchor, p) > eta)
        .map(|p| (*p, adaptive_weight(p, anchor)))
        .collect();
    AssociationSet {
        anchor: *anchor,
        members,
    }
}

/// Weighted mean of one boundary, clamped to the members' own range so the
/// result is a convex combination even under rounding.
pub(crate) fn weighted_boundary(members: &[(Instance, f64)], pick: fn(&Instance) -> f64) -> f64 {
    let total: f64 = members.iter().map(|(_, w)| w).sum();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut acc = 0.0;
    for (inst, w) in members {
        let v = pick(inst);
        lo = lo.min(v);
        hi = hi.max(v);
        acc += (w / total) * v;
    }
    acc.clamp(lo, hi)
}

/// `(prod w_i * prior^beta)^(1 / (n + beta))`, evaluated in log space.
pub(crate) fn geometric_weight(
    weights: impl Iterator<Item = f64>,
    prior: Option<(f64, f64)>,
) -> f64 {
    let mut log_sum = 0.0;
    let mut count = 0.0;
    let mut only = None;
    for w in weights {
        log_sum += w.ln();
        count += 1.0;
        only = Some(w);
    }
    if let Some((w_prior, beta)) = prior {
        log_sum += beta * w_prior.ln();
        count += beta;
    } else if count == 1.0 {
        return only.unwrap_or(1.0);
    }
    (log_sum / count).exp()
}

/// Fuses an association set into one weighted instance.
///
/// Boundaries are the weight-averaged member boundaries; the weight is the
/// geometric mean of member weights. Category and confidence come from the anchor.
pub fn fuse_aug(assoc: &AssociationSet) -> Result<WeightedInstance> {
    if assoc.members.is_empty() {
        return Err(Error::EmptyAssociation);
    }
    let start = weighted_boundary(&assoc.members, |i| i.start);
    let end = weighted_boundary(&assoc.members, |i| i.end);
    if end.partial_cmp(&start) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateResult { start, end });
    }
    let weight = geometric_weight(assoc.members.iter().map(|(_, w)| *w), None);
    Ok(WeightedInstance {
        instance: Instance {
            category: assoc.anchor.category,
            confidence: assoc.anchor.confidence,
            start,
            end,
        },
        weight,
    })
}

/// Builds the initial online label set of one video from raw predictions.
pub fn cala(
    video_id: impl Into<String>,
    predictions: &[Instance],
    params: &CorrectionParams,
) -> OnlineLabelState {
    let filtered = confidence_filter(predictions, params.confidence_threshold);
    let keep = nms(&filtered, params.nms_threshold, params.nms_scope);

    let mut labels = Vec::with_capacity(keep.len());
    for idx in keep {
        let anchor = &filtered[idx];
        let assoc = associate(anchor, predictions, params.iou_aug);
        match fuse_aug(&assoc) {
            Ok(fused) => labels.push(fused),
            Err(Error::EmptyAssociation) => {}
            // rounding collapsed a tiny interval; keep the anchor as-is
            Err(_) => labels.push(WeightedInstance {
                instance: *anchor,
                weight: adaptive_weight(anchor, anchor),
            }),
        }
    }
    OnlineLabelState::new(video_id, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    fn inst(c: u32, conf: f64, s: f64, e: f64) -> Instance {
        Instance::new(c, conf, s, e).unwrap()
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn adaptive_weight_examples() {
        let a = inst(0, 1.0, 0.0, 10.0);
        assert!(rel_close(adaptive_weight(&a, &a), E));
        assert_eq!(adaptive_weight(&inst(0, 1.0, 20.0, 30.0), &a), 1.0);
        assert_eq!(adaptive_weight(&inst(0, -0.5, 0.0, 10.0), &a), 1.0);
        // iou 0.64 via [0,10] vs [0,6.4], confidence 0.25
        let c = inst(0, 0.25, 0.0, 6.4);
        assert!((iou(&c, &a) - 0.64).abs() < 1e-15);
        assert!(rel_close(adaptive_weight(&c, &a), 0.4f64.exp()));
        assert!(rel_close(0.4f64.exp(), 1.4918246976412703));
    }

    #[test]
    fn associate_examples() {
        let anchor = inst(3, 0.7, 0.0, 10.0);
        let only = associate(&anchor, &[anchor], 0.4);
        assert_eq!(only.members.len(), 1);
        assert!(rel_close(only.members[0].1, 0.7f64.sqrt().exp()));

        let other_class = associate(&anchor, &[inst(4, 1.0, 0.0, 9.0)], 0.4);
        assert!(other_class.is_empty());

        let pool = [inst(3, 0.5, 2.0, 12.0), inst(3, 0.9, 9.0, 20.0)];
        let assoc = associate(&anchor, &pool, 0.4);
        assert_eq!(assoc.members.len(), 1);
        assert_eq!(assoc.members[0].0, pool[0]);
    }

    #[test]
    fn fuse_aug_examples() {
        let a = inst(1, 0.6, 3.0, 7.5);
        let single = AssociationSet {
            anchor: a,
            members: vec![(a, 1.7)],
        };
        let out = fuse_aug(&single).unwrap();
        assert_eq!((out.instance.start, out.instance.end), (3.0, 7.5));
        assert_eq!(out.weight, 1.7);

        let sym = AssociationSet {
            anchor: a,
            members: vec![
                (inst(1, 1.0, 0.0, 10.0), 2.0),
                (inst(1, 1.0, 4.0, 14.0), 2.0),
            ],
        };
        let out = fuse_aug(&sym).unwrap();
        assert_eq!((out.instance.start, out.instance.end), (2.0, 12.0));

        let hand = AssociationSet {
            anchor: a,
            members: vec![
                (inst(1, 1.0, 0.0, 10.0), 1.0),
                (inst(1, 1.0, 6.0, 10.0), 3.0),
            ],
        };
        let out = fuse_aug(&hand).unwrap();
        assert!(rel_close(out.instance.start, 4.5));
        assert_eq!(out.instance.end, 10.0);
        assert!(rel_close(out.weight, 1.7320508075688772));
        assert_eq!(out.instance.category, 1);
        assert_eq!(out.instance.confidence, 0.6);
    }

    #[test]
    fn fuse_aug_rejects_empty() {
        let a = inst(1, 0.6, 3.0, 7.5);
        let empty = AssociationSet {
            anchor: a,
            members: vec![],
        };
        assert!(matches!(fuse_aug(&empty), Err(Error::EmptyAssociation)));
    }

    #[test]
    fn cala_examples() {
        let params = CorrectionParams::default();
        assert!(cala("v", &[], &params).is_empty());

        let one = inst(2, 0.9, 5.0, 9.0);
        let state = cala("v", &[one], &params);
        assert_eq!(state.len(), 1);
        assert_eq!(state.labels[0].instance, one);
        assert!(rel_close(state.labels[0].weight, 0.9f64.sqrt().exp()));
    }

    #[test]
    fn low_confidence_context_still_participates() {
        let params = CorrectionParams::default();
        let anchor = inst(0, 0.9, 0.0, 10.0);
        // confidence below psi but IoU 8/12 above eta0
        let context = inst(0, 0.05, 2.0, 12.0);
        let state = cala("v", &[anchor, context], &params);
        assert_eq!(state.len(), 1);
        let out = state.labels[0].instance;
        let w_a = 0.9f64.sqrt().exp();
        let w_c = ((8.0 / 12.0) * 0.05f64).sqrt().exp();
        let expect_start = (w_c * 2.0) / (w_a + w_c);
        let expect_end = (w_a * 10.0 + w_c * 12.0) / (w_a + w_c);
        assert!(rel_close(out.start, expect_start));
        assert!(rel_close(out.end, expect_end));
        assert!(rel_close(state.labels[0].weight, (w_a * w_c).sqrt()));
    }

    #[test]
    fn eta0_of_one_drops_every_anchor() {
        let params = CorrectionParams {
            iou_aug: 1.0,
            ..CorrectionParams::default()
        };
        assert!(cala("v", &[inst(0, 0.9, 0.0, 1.0)], &params).is_empty());
    }
}
