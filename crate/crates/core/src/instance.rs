//! Action instances and the per-video online label set.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// One action proposal or label on a video timeline, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance {
    pub category: u32,
    pub confidence: f64,
    pub start: f64,
    pub end: f64,
}

impl Instance {
    /// Builds a validated instance: finite times, finite confidence, `end > start`.
    pub fn new(category: u32, confidence: f64, start: f64, end: f64) -> Result<Self> {
        let inst = Instance {
            category,
            confidence,
            start,
            end,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "non-finite boundary [{}, {}]",
                self.start, self.end
            )));
        }
        if !self.confidence.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "non-finite confidence {}",
                self.confidence
            )));
        }
        if self.end <= self.start {
            return Err(Error::InvalidInstance(format!(
                "end {} must be greater than start {}",
                self.end, self.start
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn with_confidence(self, confidence: f64) -> Self {
        Instance { confidence, ..self }
    }

    /// Canonical label ordering: start, then end, then category.
    pub fn timeline_cmp(&self, other: &Self) -> Ordering {
        self.start
            .total_cmp(&other.start)
            .then(self.end.total_cmp(&other.end))
            .then(self.category.cmp(&other.category))
    }
}

/// An instance carrying its optimization weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedInstance {
    pub instance: Instance,
    pub weight: f64,
}

impl WeightedInstance {
    pub fn new(instance: Instance, weight: f64) -> Result<Self> {
        instance.validate()?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "weight {weight} must be finite and positive"
            )));
        }
        Ok(WeightedInstance { instance, weight })
    }
}

/// The online pseudo-label set of one video together with its weights.
///
/// Labels are kept sorted by `(start, end, category)`; every mutation in this
/// crate goes through [`OnlineLabelState::sort`] before it is handed back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OnlineLabelState {
    pub video_id: String,
    pub labels: Vec<WeightedInstance>,
}

impl OnlineLabelState {
    pub fn new(video_id: impl Into<String>, labels: Vec<WeightedInstance>) -> Self {
        let mut state = OnlineLabelState {
            video_id: video_id.into(),
            labels,
        };
        state.sort();
        state
    }

    pub fn empty(video_id: impl Into<String>) -> Self {
        OnlineLabelState {
            video_id: video_id.into(),
            labels: Vec::new(),
        }
    }

    pub fn sort(&mut self) {
        self.labels.sort_by(|a, b| {
            a.instance
                .timeline_cmp(&b.instance)
                .then(a.instance.confidence.total_cmp(&b.instance.confidence))
                .then(a.weight.total_cmp(&b.weight))
        });
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> + '_ {
        self.labels.iter().map(|l| &l.instance)
    }

    pub fn to_instances(&self) -> Vec<Instance> {
        self.instances().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_reversed_intervals() {
        assert!(Instance::new(0, 0.5, 3.0, 3.0).is_err());
        assert!(Instance::new(0, 0.5, 4.0, 3.0).is_err());
        assert!(Instance::new(0, 0.5, f64::NAN, 3.0).is_err());
        assert!(Instance::new(0, f64::INFINITY, 0.0, 3.0).is_err());
        assert!(Instance::new(0, -7.0, 0.0, 3.0).is_ok());
    }

    #[test]
    fn weight_must_be_positive() {
        let inst = Instance::new(0, 0.5, 0.0, 1.0).unwrap();
        assert!(WeightedInstance::new(inst, 0.0).is_err());
        assert!(WeightedInstance::new(inst, f64::NAN).is_err());
        assert!(WeightedInstance::new(inst, 1.2).is_ok());
    }

    #[test]
    fn state_sorts_by_start_end_category() {
        let mk =
            |c, s, e| WeightedInstance::new(Instance::new(c, 1.0, s, e).unwrap(), 1.0).unwrap();
        let state = OnlineLabelState::new(
            "v",
            vec![
                mk(2, 5.0, 6.0),
                mk(1, 0.0, 3.0),
                mk(0, 0.0, 3.0),
                mk(0, 0.0, 2.0),
            ],
        );
        let order: Vec<(u32, f64, f64)> = state
            .instances()
            .map(|i| (i.category, i.start, i.end))
            .collect();
        assert_eq!(
            order,
            vec![(0, 0.0, 2.0), (0, 0.0, 3.0), (1, 0.0, 3.0), (2, 5.0, 6.0)]
        );
    }
}
