//! Interval-set kernels shared by every correction stage.

use std::cmp::Ordering;

use crate::instance::Instance;
use crate::params::NmsScope;

/// Temporal intersection-over-union. Categories are ignored.
pub fn iou(a: &Instance, b: &Instance) -> f64 {
    let inter = a.end.min(b.end) - a.start.max(b.start);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.end.max(b.end) - a.start.min(b.start);
    (inter / union).min(1.0)
}

pub fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Keeps instances with confidence strictly above `threshold`, in input order.
pub fn confidence_filter(pool: &[Instance], threshold: f64) -> Vec<Instance> {
    pool.iter()
        .filter(|i| i.confidence > threshold)
        .copied()
        .collect()
}

/// Ranking used by suppression: confidence descending, then start, end and
/// category ascending.
fn nms_order(a: &Instance, b: &Instance) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.start.total_cmp(&b.start))
        .then(a.end.total_cmp(&b.end))
        .then(a.category.cmp(&b.category))
}

/// Greedy non-maximum suppression.
///
/// Returns indices into `pool` in keep order. A candidate is discarded when its
/// IoU with an already kept instance in the same scope exceeds `threshold`.
pub fn nms(pool: &[Instance], threshold: f64, scope: NmsScope) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&i, &j| nms_order(&pool[i], &pool[j]).then(i.cmp(&j)));

    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let cand = &pool[idx];
        let suppressed = kept.iter().any(|&k| {
            let kept_inst = &pool[k];
            let same_scope = match scope {
                NmsScope::PerClass => kept_inst.category == cand.category,
                NmsScope::Global => true,
            };
            same_scope && iou(kept_inst, cand) > threshold
        });
        if !suppressed {
            kept.push(idx);
        }
    }
    kept
}

/// Convenience wrapper returning the kept instances themselves.
pub fn nms_keep(pool: &[Instance], threshold: f64, scope: NmsScope) -> Vec<Instance> {
    nms(pool, threshold, scope)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}
