//! Correction hyperparameters and their key/value config representation.

use std::path::Path;

use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};

/// Default parameter file shipped with the crate.
pub const DEFAULT_PARAMS_TOML: &str = include_str!("../configs/params.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmsScope {
    /// Suppress only within the same category.
    #[default]
    PerClass,
    Global,
}

/// How the prior label and the teacher consensus are blended during correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `(a*w*x + (1-a)*m) / (a*w* + (1-a))`; maps `x == m` onto itself.
    #[default]
    Normalized,
    /// `a*w*x + (1-a)*m`, without renormalization.
    Literal,
}

/// Exponent on the prior weight when fusing corrected weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BetaMode {
    /// Use the number of association members.
    #[default]
    EqualToN,
    Fixed(f64),
}

impl BetaMode {
    pub fn resolve(self, members: usize) -> f64 {
        match self {
            BetaMode::EqualToN => members as f64,
            BetaMode::Fixed(b) => b,
        }
    }

    /// Parses `n` or a positive real.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("n") {
            return Ok(BetaMode::EqualToN);
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::invalid_param("beta", format!("`{t}` is neither `n` nor a number"))
        })?;
        Ok(BetaMode::Fixed(v))
    }
}

impl<'de> Deserialize<'de> for BetaMode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(BetaMode::Fixed(v)),
            Repr::Text(s) => BetaMode::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionParams {
    /// NMS IoU threshold.
    #[serde(rename = "rho")]
    pub nms_threshold: f64,
    /// Minimum (exclusive) confidence for anchors and teacher instances.
    #[serde(rename = "psi")]
    pub confidence_threshold: f64,
    /// Association IoU threshold for label augmentation.
    #[serde(rename = "eta0")]
    pub iou_aug: f64,
    /// Association IoU threshold for ambiguous-instance correction.
    #[serde(rename = "eta1")]
    pub iou_correct: f64,
    /// Maximum (exclusive) overlap for a teacher instance to count as missing.
    #[serde(rename = "eta2")]
    pub iou_compensate: f64,
    pub alpha: f64,
    #[serde(rename = "beta")]
    pub beta_mode: BetaMode,
    /// Positive-sample loss weight.
    pub lambda: f64,
    #[serde(rename = "aic_fusion")]
    pub aic_fusion_mode: FusionMode,
    pub nms_scope: NmsScope,
    /// Run ambiguous-instance correction in each round.
    #[serde(rename = "aic")]
    pub enable_aic: bool,
    /// Run missing-instance compensation in each round.
    #[serde(rename = "mic")]
    pub enable_mic: bool,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        CorrectionParams {
            nms_threshold: 0.45,
            confidence_threshold: 0.1,
            iou_aug: 0.4,
            iou_correct: 0.4,
            iou_compensate: 0.1,
            alpha: 0.5,
            beta_mode: BetaMode::EqualToN,
            lambda: 1.0,
            aic_fusion_mode: FusionMode::Normalized,
            nms_scope: NmsScope::PerClass,
            enable_aic: true,
            enable_mic: true,
        }
    }
}

impl CorrectionParams {
    pub fn validate(&self) -> Result<()> {
        let rho = self.nms_threshold;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid_param("rho", format!("{rho} not in (0, 1)")));
        }
        if !self.confidence_threshold.is_finite() {
            return Err(Error::invalid_param("psi", "must be finite"));
        }
        for (name, v) in [
            ("eta0", self.iou_aug),
            ("eta1", self.iou_correct),
            ("eta2", self.iou_compensate),
            ("alpha", self.alpha),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid_param(name, format!("{v} not in [0, 1]")));
            }
        }
        if let BetaMode::Fixed(b) = self.beta_mode {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::invalid_param(
                    "beta",
                    format!("{b} must be positive"),
                ));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid_param(
                "lambda",
                format!("{} must be positive", self.lambda),
            ));
        }
        Ok(())
    }

    /// Parses a key/value parameter file body; missing keys take defaults.
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let params: CorrectionParams = toml::from_str(text).map_err(|e| e.to_string())?;
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|reason| Error::Config {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Sets one of the sweepable hyperparameters by its short name.
    pub fn set_by_name(&mut self, name: &str, value: &str) -> Result<()> {
        let parse = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid_param(name, format!("`{v}` is not a number")))
        };
        match name {
            "rho" => self.nms_threshold = parse(value)?,
            "psi" => self.confidence_threshold = parse(value)?,
            "eta0" => self.iou_aug = parse(value)?,
            "eta1" => self.iou_correct = parse(value)?,
            "eta2" => self.iou_compensate = parse(value)?,
            "alpha" => self.alpha = parse(value)?,
            "beta" => self.beta_mode = BetaMode::parse(value)?,
            other => return Err(Error::UnknownParam(other.to_string())),
        }
        self.validate()
    }
}
