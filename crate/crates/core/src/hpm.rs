//! Weighted detection-loss aggregation for high-quality pseudo-label mining.

use crate::error::{Error, Result};

/// Per-location loss terms produced by one detection head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub is_foreground: bool,
    pub head_index: usize,
    pub instance_weight: f64,
    /// Scale on the foreground classification term.
    pub sigma_iou: f64,
    pub cls_loss: f64,
    /// Ignored for background samples.
    pub reg_loss: f64,
}

impl LossSample {
    pub fn foreground(instance_weight: f64, cls_loss: f64, reg_loss: f64) -> Self {
        LossSample {
            is_foreground: true,
            head_index: 0,
            instance_weight,
            sigma_iou: 1.0,
            cls_loss,
            reg_loss,
        }
    }

    pub fn background(cls_loss: f64) -> Self {
        LossSample {
            is_foreground: false,
            head_index: 0,
            instance_weight: 1.0,
            sigma_iou: 1.0,
            cls_loss,
            reg_loss: 0.0,
        }
    }
}

/// `lambda / N_fg * sum_fg w (sigma * cls + reg) + 1 / N_bg * sum_bg cls`.
///
/// An empty group contributes zero; its normalizer is treated as one.
pub fn hpm_loss(samples: &[LossSample], lambda: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut fg_sum, mut fg_n) = (0.0, 0usize);
    let (mut bg_sum, mut bg_n) = (0.0, 0usize);
    for s in samples {
        if s.is_foreground {
            fg_sum += s.instance_weight * (s.sigma_iou * s.cls_loss + s.reg_loss);
            fg_n += 1;
        } else {
            bg_sum += s.cls_loss;
            bg_n += 1;
        }
    }
    Ok(lambda / fg_n.max(1) as f64 * fg_sum + bg_sum / bg_n.max(1) as f64)
}
