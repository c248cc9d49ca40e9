//! Training-free architecture scores.
//!
//! For each repeat `i` two standard-normal batches `x1`, `x2` are drawn and
//! mixed as `x_mix = x1 + γ·x2`. With `f_l` the tapped feature maps,
//!
//! ```text
//! Δ   = Σ_l ‖f_l(x1) − f_l(x_mix)‖₁
//! B   = Σ_m ln √(mean_c var_{m,c} + ε)      (BN input variances from the x1 pass)
//! s_i = ln(Δ + ε) + B
//! ```
//!
//! and the report carries the population mean and standard deviation of `s_i`.
//! Classification uses the same pipeline with the pre-GAP map as the only tap.

use serde::{Deserialize, Serialize};

use super::network::{ForwardError, NetworkInstance};
use super::tensor::Tensor;
use crate::arch::Mode;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    pub gamma_mix: f64,
    pub epsilon: f64,
    pub repeats: usize,
    pub batch_size: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl ScoreConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            gamma_mix: 0.01,
            epsilon: 1e-5,
            repeats: 8,
            batch_size: 16,
            resolution: mode.default_resolution(),
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<(), ScoreError> {
        let ok = (0.0..=1.0).contains(&self.gamma_mix)
            && self.epsilon > 0.0
            && self.repeats >= 1
            && self.batch_size >= 1
            && self.resolution >= 1;
        if ok {
            Ok(())
        } else {
            Err(ScoreError::InvalidConfig(format!("{self:?}")))
        }
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self::for_mode(Mode::Classification)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_repeat: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub config: ScoreConfig,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("non-finite score {value} at repeat {repeat}")]
    NonFinite { repeat: usize, value: f64 },
    #[error("expected a {expected} network, got {found}")]
    WrongMode { expected: Mode, found: Mode },
    #[error("detection network has no taps")]
    NoTaps,
    #[error("invalid score config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("cannot aggregate an empty list of scores")]
    EmptyAggregate,
}

/// Population mean and standard deviation.
pub fn aggregate(per_repeat: &[f64]) -> Result<(f64, f64), ScoreError> {
    if per_repeat.is_empty() {
        return Err(ScoreError::EmptyAggregate);
    }
    let r = per_repeat.len() as f64;
    let mean = per_repeat.iter().sum::<f64>() / r;
    let var = per_repeat.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / r;
    Ok((mean, var.sqrt()))
}

/// The `(x1, x2)` pair for repeat `index`.
pub fn score_inputs(cfg: &ScoreConfig, channels: usize, index: usize) -> (Tensor, Tensor) {
    let mut rng = rng::stream(cfg.seed, Domain::ScoreInput, index as u64);
    let (b, r) = (cfg.batch_size, cfg.resolution);
    let x1 = Tensor::standard_normal(&mut rng, b, channels, r, r);
    let x2 = Tensor::standard_normal(&mut rng, b, channels, r, r);
    (x1, x2)
}

/// `Σ_m ln √(mean_c var_{m,c} + ε)` over all BN layers.
pub fn bn_scaling_term(bn_variances: &[Vec<f64>], epsilon: f64) -> f64 {
    bn_variances
        .iter()
        .map(|var| {
            let mean = var.iter().sum::<f64>() / var.len() as f64;
            (mean + epsilon).sqrt().ln()
        })
        .sum()
}

fn score_repeats(net: &NetworkInstance, cfg: &ScoreConfig) -> Result<ScoreReport, ScoreError> {
    cfg.check()?;
    let taps = net.tap_blocks();
    let depth = match net.architecture.mode {
        Mode::Detection => net.layers.len(),
        // The head holds no BatchNorm and cannot affect the pre-GAP tap.
        Mode::Classification => taps[0].map_or(0, |i| i + 1),
    };
    let gamma = cfg.gamma_mix;
    let mut per_repeat = Vec::with_capacity(cfg.repeats);
    for i in 0..cfg.repeats {
        let (x1, x2) = score_inputs(cfg, net.architecture.input_channels, i);
        let x_mix = x1.axpy(gamma, &x2);
        let clean = net.forward_blocks(&x1, &taps, depth)?;
        let mixed = net.forward_blocks(&x_mix, &taps, depth)?;
        let delta: f64 = clean.taps.iter().zip(&mixed.taps).map(|(a, b)| a.l1_distance(b)).sum();
        let s = (delta + cfg.epsilon).ln() + bn_scaling_term(&clean.bn_variances, cfg.epsilon);
        if !s.is_finite() {
            return Err(ScoreError::NonFinite { repeat: i, value: s });
        }
        per_repeat.push(s);
    }
    let (mean, std) = aggregate(&per_repeat)?;
    Ok(ScoreReport { per_repeat, mean, std, config: *cfg })
}

pub fn detection_score(net: &NetworkInstance, cfg: &ScoreConfig) -> Result<ScoreReport, ScoreError> {
    let mode = net.architecture.mode;
    if mode != Mode::Detection {
        return Err(ScoreError::WrongMode { expected: Mode::Detection, found: mode });
    }
    if net.architecture.tap_positions().is_empty() {
        return Err(ScoreError::NoTaps);
    }
    score_repeats(net, cfg)
}

pub fn classification_score(net: &NetworkInstance, cfg: &ScoreConfig) -> Result<ScoreReport, ScoreError> {
    let mode = net.architecture.mode;
    if mode != Mode::Classification {
        return Err(ScoreError::WrongMode { expected: Mode::Classification, found: mode });
    }
    score_repeats(net, cfg)
}

/// Dispatches on the network's mode.
pub fn score(net: &NetworkInstance, cfg: &ScoreConfig) -> Result<ScoreReport, ScoreError> {
    match net.architecture.mode {
        Mode::Classification => classification_score(net, cfg),
        Mode::Detection => detection_score(net, cfg),
    }
}
