//! Online noise correction: ambiguous-instance correction (AIC) rewrites
//! existing labels toward teacher consensus, missing-instance compensation
//! (MIC) adds confident teacher instances that overlap no label.

use crate::cala::{adaptive_weight, geometric_weight, weighted_boundary, AssociationSet};
use crate::error::{Error, Result};
use crate::instance::{Instance, OnlineLabelState, WeightedInstance};
use crate::kernels::{clamp01, confidence_filter, iou, nms};
use crate::params::{CorrectionParams, FusionMode};

/// Teacher output for one video. Confidences live on the instances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TeacherPrediction {
    pub instances: Vec<Instance>,
}

impl TeacherPrediction {
    pub fn new(instances: Vec<Instance>) -> Self {
        TeacherPrediction { instances }
    }
}

impl From<Vec<Instance>> for TeacherPrediction {
    fn from(instances: Vec<Instance>) -> Self {
        TeacherPrediction { instances }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round_index: usize,
    pub corrected_count: usize,
    pub compensated_count: usize,
    pub state_after: OnlineLabelState,
}

/// Blends a prior label with the weighted mean of its teacher associates.
pub fn aic_fuse(
    prior: &WeightedInstance,
    assoc: &AssociationSet,
    alpha: f64,
    beta: f64,
    mode: FusionMode,
) -> Result<WeightedInstance> {
    if assoc.members.is_empty() {
        return Err(Error::EmptyAssociation);
    }
    let w_prior = prior.weight;
    let blend = |own: f64, consensus: f64| match mode {
        // written as an offset from `own` so that own == consensus is exact
        FusionMode::Normalized => {
            own + (1.0 - alpha) * (consensus - own) / (alpha * w_prior + (1.0 - alpha))
        }
        FusionMode::Literal => alpha * w_prior * own + (1.0 - alpha) * consensus,
    };
    let start = blend(
        prior.instance.start,
        weighted_boundary(&assoc.members, |i| i.start),
    );
    let end = blend(
        prior.instance.end,
        weighted_boundary(&assoc.members, |i| i.end),
    );
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(Error::DegenerateResult { start, end });
    }
    let weight = geometric_weight(assoc.members.iter().map(|(_, w)| *w), Some((w_prior, beta)));
    Ok(WeightedInstance {
        instance: Instance {
            start,
            end,
            ..prior.instance
        },
        weight,
    })
}

fn teacher_associates(
    label: &Instance,
    teacher: &TeacherPrediction,
    params: &CorrectionParams,
) -> AssociationSet {
    let members = teacher
        .instances
        .iter()
        .filter(|p| {
            p.category == label.category
                && iou(p, label) > params.iou_correct
                && p.confidence > params.confidence_threshold
        })
        .map(|p| (*p, adaptive_weight(p, label)))
        .collect();
    AssociationSet {
        anchor: *label,
        members,
    }
}

/// Corrects every label that has at least one teacher associate. Returns the
/// new state and the number of labels that were rewritten.
pub fn aic_correct(
    state: &OnlineLabelState,
    teacher: &TeacherPrediction,
    params: &CorrectionParams,
) -> (OnlineLabelState, usize) {
    let mut corrected = 0;
    let labels = state
        .labels
        .iter()
        .map(|label| {
            let assoc = teacher_associates(&label.instance, teacher, params);
            if assoc.is_empty() {
                return *label;
            }
            let beta = params.beta_mode.resolve(assoc.len());
            match aic_fuse(label, &assoc, params.alpha, beta, params.aic_fusion_mode) {
                Ok(fused) => {
                    corrected += 1;
                    fused
                }
                // degenerate literal-mode output: keep the label unfused
                Err(_) => *label,
            }
        })
        .collect();
    (
        OnlineLabelState::new(state.video_id.clone(), labels),
        corrected,
    )
}

/// `exp(clamp01(confidence))`.
pub fn mic_weight(confidence: f64) -> f64 {
    clamp01(confidence).exp()
}

/// Appends confident, NMS-surviving teacher instances whose best overlap with
/// any existing label (of any class) is below `eta2`.
pub fn mic_compensate(
    state: &OnlineLabelState,
    teacher: &TeacherPrediction,
    params: &CorrectionParams,
) -> (OnlineLabelState, usize) {
    let filtered = confidence_filter(&teacher.instances, params.confidence_threshold);
    let keep = nms(&filtered, params.nms_threshold, params.nms_scope);

    let mut labels = state.labels.clone();
    let mut added = 0;
    for idx in keep {
        let cand = &filtered[idx];
        let max_iou = state
            .labels
            .iter()
            .map(|l| iou(cand, &l.instance))
            .fold(0.0, f64::max);
        if max_iou < params.iou_compensate {
            labels.push(WeightedInstance {
                instance: *cand,
                weight: mic_weight(cand.confidence),
            });
            added += 1;
        }
    }
    (OnlineLabelState::new(state.video_id.clone(), labels), added)
}

/// One online correction round: AIC, then MIC, honoring the enable flags.
pub fn run_round(
    state: &OnlineLabelState,
    teacher: &TeacherPrediction,
    params: &CorrectionParams,
    round_index: usize,
) -> RoundTrace {
    let (after_aic, corrected_count) = if params.enable_aic {
        aic_correct(state, teacher, params)
    } else {
        (state.clone(), 0)
    };
    let (state_after, compensated_count) = if params.enable_mic {
        mic_compensate(&after_aic, teacher, params)
    } else {
        (after_aic, 0)
    };
    RoundTrace {
        round_index,
        corrected_count,
        compensated_count,
        state_after,
    }
}
