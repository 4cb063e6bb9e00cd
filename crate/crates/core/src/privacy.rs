//! Update clipping and Gaussian perturbation.
//!
//! Clients clip their round delta to L2 norm `clip_norm` and add i.i.d.
//! `N(0, sigma^2)` noise to every coordinate before upload. Privacy loss is
//! reported with the classical Gaussian-mechanism bound and simple
//! composition across rounds, which is loose.

use crate::error::PrivacyError;
use crate::params::ParamVector;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub enabled: bool,
    /// Noise standard deviation per coordinate.
    pub sigma: f64,
    /// L2 bound applied to each update before noise.
    pub clip_norm: f64,
    pub delta: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            enabled: false,
            sigma: 0.0,
            clip_norm: 1.0,
            delta: 1e-5,
        }
    }
}

impl DpConfig {
    pub fn gaussian(sigma: f64, clip_norm: f64, delta: f64) -> Result<Self, PrivacyError> {
        let cfg = DpConfig {
            enabled: true,
            sigma,
            clip_norm,
            delta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PrivacyError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(PrivacyError::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(PrivacyError::InvalidConfig(format!(
                "clip_norm must be > 0, got {}",
                self.clip_norm
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PrivacyError::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Whether the clip-and-noise stage changes anything. With `sigma = 0`
    /// the stage is skipped entirely, so an enabled zero-noise config runs
    /// bit-identically to a disabled one.
    pub fn is_active(&self) -> bool {
        self.enabled && self.sigma > 0.0
    }
}

/// Projects `theta` onto the L2 ball of radius `c`.
pub fn clip(theta: &ParamVector, c: f64) -> ParamVector {
    let norm = theta.norm();
    // A previously clipped vector can measure a few ulps above `c`.
    if norm <= c * (1.0 + 4.0 * f64::EPSILON) {
        theta.clone()
    } else {
        theta.scale(c / norm)
    }
}

/// Seed for the noise stream of `client` in `round`.
pub fn noise_seed(base_seed: u64, client: u32, round: u32) -> u64 {
    rng::derive_seed(base_seed, &[rng::stream::NOISE, u64::from(client), u64::from(round)])
}

/// Adds `N(0, sigma^2)` to every coordinate using a generator keyed by
/// `seed`. Returns `theta` unchanged when the config is disabled or
/// `sigma = 0`.
pub fn perturb(theta: &ParamVector, cfg: &DpConfig, seed: u64) -> ParamVector {
    if !cfg.is_active() {
        return theta.clone();
    }
    let mut rng = rng::stream_rng(seed, &[]);
    let noisy = theta
        .as_slice()
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + cfg.sigma * z
        })
        .collect();
    ParamVector::new(noisy).expect("gaussian noise on finite input is finite")
}

/// Client-side privacy stage: clip the update to `clip_norm`, then perturb.
pub fn privatize(update: &ParamVector, cfg: &DpConfig, seed: u64) -> ParamVector {
    if !cfg.is_active() {
        return update.clone();
    }
    perturb(&clip(update, cfg.clip_norm), cfg, seed)
}

/// Per-round epsilon `C * sqrt(2 ln(1.25/delta)) / sigma`.
pub fn epsilon_report(cfg: &DpConfig) -> Result<f64, PrivacyError> {
    if !cfg.enabled {
        return Err(PrivacyError::Disabled);
    }
    cfg.validate()?;
    if cfg.sigma == 0.0 {
        return Err(PrivacyError::ZeroSigma);
    }
    Ok(cfg.clip_norm * (2.0 * (1.25 / cfg.delta).ln()).sqrt() / cfg.sigma)
}

/// Epsilon after `rounds` releases under simple composition.
pub fn composed_epsilon(cfg: &DpConfig, rounds: u32) -> Result<f64, PrivacyError> {
    Ok(f64::from(rounds) * epsilon_report(cfg)?)
}
