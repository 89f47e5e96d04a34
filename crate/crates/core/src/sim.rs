//! Synthetic-noise simulation harness.
//!
//! Ground truth is generated per video, corrupted with boundary jitter, drops
//! and merges of adjacent same-class instances, refined by label augmentation
//! and then driven through online correction rounds against an oracle teacher
//! that perturbs the ground truth at a configurable fidelity.
//!
//! Every random stream is derived from the root seed and the `(stream, video,
//! round)` coordinates, so results do not depend on thread scheduling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::cala::cala;
use crate::error::{Error, Result};
use crate::eval::{boundary_error_videos, miou_videos, recall_at, VideoEval};
use crate::instance::{Instance, OnlineLabelState};
use crate::online::{run_round, TeacherPrediction};
use crate::params::CorrectionParams;

/// Bundled simulation config used by the CLI examples and the test suite.
pub const DEFAULT_SIM_TOML: &str = include_str!("../configs/simulate.toml");

const STREAM_GT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_TEACHER: u64 = 3;

const MAX_JITTER_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std-dev of additive Gaussian noise on each boundary, seconds.
    pub boundary_jitter_sigma: f64,
    pub drop_rate: f64,
    /// Probability that an adjacent same-class pair collapses into its hull.
    pub merge_rate: f64,
    pub confidence_noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherFidelity {
    pub boundary_sigma: f64,
    pub miss_rate: f64,
    /// Probability per video of one spurious prediction.
    pub false_positive_rate: f64,
    pub confidence_floor: f64,
}

impl Default for TeacherFidelity {
    fn default() -> Self {
        TeacherFidelity {
            boundary_sigma: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            confidence_floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub num_videos: usize,
    pub classes: u32,
    pub min_instances: usize,
    pub max_instances: usize,
    pub video_length: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub min_gap: f64,
    pub rounds: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub teacher: TeacherFidelity,
    pub params: CorrectionParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            num_videos: 20,
            classes: 5,
            min_instances: 3,
            max_instances: 8,
            video_length: 200.0,
            min_duration: 5.0,
            max_duration: 30.0,
            min_gap: 2.0,
            rounds: 5,
            seed: 0,
            noise: NoiseConfig::default(),
            teacher: TeacherFidelity::default(),
            params: CorrectionParams::default(),
        }
    }
}

/// Where spurious teacher predictions may land.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeline {
    pub video_length: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub classes: u32,
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid_param(name, format!("{v} not in [0, 1]")))
    }
}

fn check_sigma(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid_param(
            name,
            format!("{v} must be finite and >= 0"),
        ))
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a key/value config file. Parse failures are config errors;
    /// range checks happen in [`SimulationConfig::validate`].
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|reason| Error::Config {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn timeline(&self) -> Timeline {
        Timeline {
            video_length: self.video_length,
            min_duration: self.min_duration,
            max_duration: self.max_duration,
            classes: self.classes,
        }
    }

    pub fn mean_duration(&self) -> f64 {
        (self.min_duration + self.max_duration) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.classes == 0 {
            return Err(Error::invalid_param("classes", "must be at least 1"));
        }
        if self.min_instances > self.max_instances {
            return Err(Error::invalid_param(
                "min_instances",
                "must not exceed max_instances",
            ));
        }
        if !(self.min_duration > 0.0
            && self.min_duration <= self.max_duration
            && self.max_duration.is_finite())
        {
            return Err(Error::invalid_param(
                "min_duration",
                "durations must satisfy 0 < min_duration <= max_duration",
            ));
        }
        check_sigma("min_gap", self.min_gap)?;
        if !(self.video_length.is_finite() && self.video_length > 0.0) {
            return Err(Error::invalid_param("video_length", "must be positive"));
        }
        check_sigma(
            "noise.boundary_jitter_sigma",
            self.noise.boundary_jitter_sigma,
        )?;
        check_sigma(
            "noise.confidence_noise_sigma",
            self.noise.confidence_noise_sigma,
        )?;
        check_rate("noise.drop_rate", self.noise.drop_rate)?;
        check_rate("noise.merge_rate", self.noise.merge_rate)?;
        check_sigma("teacher.boundary_sigma", self.teacher.boundary_sigma)?;
        check_rate("teacher.miss_rate", self.teacher.miss_rate)?;
        check_rate(
            "teacher.false_positive_rate",
            self.teacher.false_positive_rate,
        )?;
        if !self.teacher.confidence_floor.is_finite() {
            return Err(Error::invalid_param(
                "teacher.confidence_floor",
                "must be finite",
            ));
        }

        let n = self.max_instances as f64;
        let footprint = n * self.min_duration + (n - 1.0).max(0.0) * self.min_gap;
        if self.max_instances > 0 && footprint > self.video_length {
            return Err(Error::InfeasibleConfig(format!(
                "{} instances of at least {} s with gaps of {} s need {footprint} s, video is {} s",
                self.max_instances, self.min_duration, self.min_gap, self.video_length
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with stream coordinates into an independent seed.
pub fn derive_seed(root: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(root), |h, &c| splitmix64(h ^ splitmix64(c)))
}

fn rng_for(root: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, coords))
}

pub fn video_id(index: usize) -> String {
    format!("video_{index:05}")
}

/// Ground truth for one video: globally non-overlapping instances separated by
/// at least `min_gap`, confidence 1.0.
pub fn gen_video_ground_truth(config: &SimulationConfig, seed: u64, video: usize) -> Vec<Instance> {
    let mut rng = rng_for(seed, &[STREAM_GT, video as u64]);
    let n = rng.random_range(config.min_instances..=config.max_instances);
    if n == 0 {
        return Vec::new();
    }
    let mut durations: Vec<f64> = (0..n)
        .map(|_| {
            if config.max_duration > config.min_duration {
                rng.random_range(config.min_duration..config.max_duration)
            } else {
                config.min_duration
            }
        })
        .collect();

    let gaps = (n - 1) as f64 * config.min_gap;
    let room = config.video_length - gaps - n as f64 * config.min_duration;
    let excess: f64 = durations.iter().map(|d| d - config.min_duration).sum();
    if excess > room {
        let scale = if excess > 0.0 { room / excess } else { 0.0 };
        for d in &mut durations {
            *d = config.min_duration + (*d - config.min_duration) * scale;
        }
    }
    let total: f64 = durations.iter().sum::<f64>() + gaps;
    let slack = (config.video_length - total).max(0.0);

    let mut cuts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * slack).collect();
    cuts.sort_by(f64::total_cmp);

    let mut offset = 0.0;
    let mut out = Vec::with_capacity(n);
    for (i, (&d, &cut)) in durations.iter().zip(&cuts).enumerate() {
        let start = cut + offset + i as f64 * config.min_gap;
        let category = rng.random_range(0..config.classes);
        out.push(Instance {
            category,
            confidence: 1.0,
            start,
            end: start + d,
        });
        offset += d;
    }
    out
}

/// Ground truth for every video of the config.
pub fn gen_ground_truth(config: &SimulationConfig, seed: u64) -> Result<Vec<Vec<Instance>>> {
    config.validate()?;
    Ok((0..config.num_videos)
        .map(|v| gen_video_ground_truth(config, seed, v))
        .collect())
}

fn jitter<R: Rng>(inst: &Instance, sigma: f64, rng: &mut R) -> Instance {
    if sigma <= 0.0 {
        return *inst;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for _ in 0..MAX_JITTER_ATTEMPTS {
        let start = inst.start + normal.sample(rng);
        let end = inst.end + normal.sample(rng);
        if end > start {
            return Instance {
                start,
                end,
                ..*inst
            };
        }
    }
    *inst
}

/// Corrupts ground truth: merge adjacent same-class pairs whose gap is below
/// `merge_gap`, drop, jitter boundaries, then perturb confidences.
pub fn inject_noise(
    gt: &[Instance],
    noise: &NoiseConfig,
    merge_gap: f64,
    seed: u64,
) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted = gt.to_vec();
    sorted.sort_by(Instance::timeline_cmp);

    let mut merged = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let cur = sorted[i];
        if let Some(next) = sorted.get(i + 1) {
            let adjacent = next.category == cur.category && next.start - cur.end < merge_gap;
            if adjacent && noise.merge_rate > 0.0 && rng.random::<f64>() < noise.merge_rate {
                merged.push(Instance {
                    category: cur.category,
                    confidence: cur.confidence.max(next.confidence),
                    start: cur.start.min(next.start),
                    end: cur.end.max(next.end),
                });
                i += 2;
                continue;
            }
        }
        merged.push(cur);
        i += 1;
    }

    let conf_noise = (noise.confidence_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, noise.confidence_noise_sigma).expect("sigma validated"));
    let kept: Vec<Instance> = merged
        .into_iter()
        .filter(|_| !(noise.drop_rate > 0.0 && rng.random::<f64>() < noise.drop_rate))
        .collect();
    kept.iter()
        .map(|inst| {
            let mut out = jitter(inst, noise.boundary_jitter_sigma, &mut rng);
            if let Some(n) = &conf_noise {
                out.confidence += n.sample(&mut rng);
            }
            out
        })
        .collect()
}

/// Stand-in teacher: ground truth with boundary noise, misses and spurious
/// detections. `seed` should already encode the video and round.
pub fn oracle_teacher(
    gt: &[Instance],
    fidelity: &TeacherFidelity,
    timeline: &Timeline,
    seed: u64,
) -> TeacherPrediction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = fidelity.confidence_floor;
    let confidence = |rng: &mut ChaCha8Rng| {
        if floor >= 1.0 {
            floor
        } else {
            floor + (1.0 - floor) * rng.random::<f64>()
        }
    };

    let mut out = Vec::with_capacity(gt.len() + 1);
    for g in gt {
        if fidelity.miss_rate > 0.0 && rng.random::<f64>() < fidelity.miss_rate {
            continue;
        }
        let mut inst = jitter(g, fidelity.boundary_sigma, &mut rng);
        inst.confidence = confidence(&mut rng);
        out.push(inst);
    }
    if fidelity.false_positive_rate > 0.0 && rng.random::<f64>() < fidelity.false_positive_rate {
        let d = if timeline.max_duration > timeline.min_duration {
            rng.random_range(timeline.min_duration..timeline.max_duration)
        } else {
            timeline.min_duration
        };
        let start = rng.random::<f64>() * (timeline.video_length - d).max(0.0);
        let category = rng.random_range(0..timeline.classes.max(1));
        let conf = confidence(&mut rng);
        out.push(Instance {
            category,
            confidence: conf,
            start,
            end: start + d,
        });
    }
    TeacherPrediction::new(out)
}

/// Label state of one video after each round (index 0 is post-augmentation).
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTrace {
    pub states: Vec<OnlineLabelState>,
    pub corrected: Vec<usize>,
    pub compensated: Vec<usize>,
}

pub fn simulate_video(config: &SimulationConfig, video: usize, gt: &[Instance]) -> VideoTrace {
    let id = video_id(video);
    let noisy = inject_noise(
        gt,
        &config.noise,
        2.0 * config.min_gap,
        derive_seed(config.seed, &[STREAM_NOISE, video as u64]),
    );
    let mut state = cala(id, &noisy, &config.params);
    let timeline = config.timeline();

    let mut trace = VideoTrace {
        states: vec![state.clone()],
        corrected: vec![0],
        compensated: vec![0],
    };
    for round in 1..=config.rounds {
        let seed = derive_seed(config.seed, &[STREAM_TEACHER, video as u64, round as u64]);
        let teacher = oracle_teacher(gt, &config.teacher, &timeline, seed);
        let step = run_round(&state, &teacher, &config.params, round);
        trace.corrected.push(step.corrected_count);
        trace.compensated.push(step.compensated_count);
        state = step.state_after;
        trace.states.push(state.clone());
    }
    trace
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub miou: f64,
    pub recall_05: f64,
    pub boundary_error: f64,
    pub labels: usize,
    pub corrected: usize,
    pub compensated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub rows: Vec<RoundMetrics>,
}

pub const TRACE_HEADER: &str = "round,miou,recall_0.5,boundary_error,labels,corrected,compensated";

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.round,
            self.miou,
            self.recall_05,
            self.boundary_error,
            self.labels,
            self.corrected,
            self.compensated
        )
    }
}

impl SimulationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> &RoundMetrics {
        self.rows.last().expect("trace always holds round 0")
    }
}

/// Runs the full simulation. Videos are processed in parallel on the current
/// rayon pool; aggregation happens afterwards in video order.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationTrace> {
    let gts = gen_ground_truth(config, config.seed)?;
    let traces: Vec<VideoTrace> = gts
        .par_iter()
        .enumerate()
        .map(|(v, gt)| simulate_video(config, v, gt))
        .collect();

    let rows = (0..=config.rounds)
        .map(|round| {
            let labels: Vec<Vec<Instance>> = traces
                .iter()
                .map(|t| t.states[round].to_instances())
                .collect();
            let videos: Vec<VideoEval> = labels
                .iter()
                .zip(&gts)
                .map(|(preds, gts)| VideoEval { preds, gts })
                .collect();
            RoundMetrics {
                round,
                miou: miou_videos(&videos),
                recall_05: recall_at(&videos, 0.5),
                boundary_error: boundary_error_videos(&videos),
                labels: labels.iter().map(Vec::len).sum(),
                corrected: traces.iter().map(|t| t.corrected[round]).sum(),
                compensated: traces.iter().map(|t| t.compensated[round]).sum(),
            }
        })
        .collect();
    Ok(SimulationTrace { rows })
}
