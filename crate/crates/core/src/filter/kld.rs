//! KLD-adaptive resampling.

use std::f64::consts::TAU;

use rand::Rng;
use rustc_hash::FxHashSet;
use statrs::distribution::{ContinuousCDF, Normal};

use super::Particle;
use crate::error::{Error, Result};

/// Bin sizes and bounds for KLD sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KldConfig {
    pub bin_x: f64,
    pub bin_y: f64,
    pub bin_theta: f64,
    /// Probability bound `δ` (the error bound holds with probability `1 - δ`).
    pub delta: f64,
    /// Error bound `ε` on the sample approximation.
    pub epsilon: f64,
    pub n_min: usize,
}

/// `ε` chosen so that two occupied bins require 300 particles.
pub const DEFAULT_EPSILON: f64 = 0.0109238;
pub const DEFAULT_DELTA: f64 = 0.01;

impl KldConfig {
    /// Coarse wall-only pass: 2 m spatial bins, 30° heading bins.
    pub fn coarse() -> Self {
        Self {
            bin_x: 2.0,
            bin_y: 2.0,
            bin_theta: 30f64.to_radians(),
            delta: DEFAULT_DELTA,
            epsilon: DEFAULT_EPSILON,
            n_min: 504,
        }
    }

    /// Fine constraint-weighted pass: 0.5 m spatial bins, 1° heading bins.
    pub fn fine() -> Self {
        Self {
            bin_x: 0.5,
            bin_y: 0.5,
            bin_theta: 1f64.to_radians(),
            delta: DEFAULT_DELTA,
            epsilon: DEFAULT_EPSILON,
            n_min: 16433,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.bin_x, self.bin_y, self.bin_theta, self.epsilon];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Invalid(
                "KLD bin sizes and epsilon must be positive".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Invalid("KLD delta must lie in (0, 1)".into()));
        }
        if self.n_min == 0 {
            return Err(Error::Invalid("KLD n_min must be positive".into()));
        }
        Ok(())
    }

    /// Hard upper bound on the particle count per epoch.
    pub fn cap(&self) -> usize {
        self.n_min.saturating_mul(10)
    }

    fn bin(&self, p: &Particle) -> (i64, i64, i64) {
        (
            (p.pose.x / self.bin_x).floor() as i64,
            (p.pose.y / self.bin_y).floor() as i64,
            (p.pose.theta.rem_euclid(TAU) / self.bin_theta).floor() as i64,
        )
    }
}

/// Upper `1 - δ` quantile of the standard normal.
pub fn upper_normal_quantile(delta: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - delta)
}

/// Wilson–Hilferty approximation of the chi-square bound on the number of
/// samples needed for `k` occupied bins, rounded up. Returns 0 for `k < 2`.
pub fn kld_required_particles(k: usize, epsilon: f64, delta: f64) -> usize {
    if k < 2 {
        return 0;
    }
    let km1 = (k - 1) as f64;
    let a = 2.0 / (9.0 * km1);
    let z = upper_normal_quantile(delta);
    let n = km1 / (2.0 * epsilon) * (1.0 - a + a.sqrt() * z).powi(3);
    n.ceil() as usize
}

/// Total weight was zero: no particle can be drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroTotalWeight;

/// Draw particles proportionally to weight until the count reaches
/// `max(n_req(k), n_min)`, where `k` counts bins occupied by the draws so
/// far, or the `10 * n_min` cap. Returned particles carry equal normalized
/// weights and the index of the particle they were drawn from.
pub fn kld_resample<R: Rng + ?Sized>(
    particles: &[Particle],
    cfg: &KldConfig,
    rng: &mut R,
) -> std::result::Result<Vec<Particle>, ZeroTotalWeight> {
    let draws = kld_resample_indices(particles, cfg, rng)?;
    let w = 1.0 / draws.len() as f64;
    Ok(draws
        .into_iter()
        .map(|i| Particle {
            pose: particles[i as usize].pose,
            weight: w,
            parent: Some(i),
        })
        .collect())
}

/// Index-only variant of [`kld_resample`] used inside the filter loop.
pub fn kld_resample_indices<R: Rng + ?Sized>(
    particles: &[Particle],
    cfg: &KldConfig,
    rng: &mut R,
) -> std::result::Result<Vec<u32>, ZeroTotalWeight> {
    let mut cdf = Vec::with_capacity(particles.len());
    let mut total = 0.0;
    for p in particles {
        total += p.weight;
        cdf.push(total);
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(ZeroTotalWeight);
    }
    let cap = cfg.cap();
    let mut bins = FxHashSet::default();
    let mut required = cfg.n_min;
    let mut out = Vec::with_capacity(cfg.n_min);
    while out.len() < required.min(cap) {
        let u = rng.random::<f64>() * total;
        let i = cdf.partition_point(|&c| c <= u).min(particles.len() - 1);
        out.push(i as u32);
        if bins.insert(cfg.bin(&particles[i])) {
            let n_req = kld_required_particles(bins.len(), cfg.epsilon, cfg.delta);
            required = required.max(n_req);
        }
    }
    Ok(out)
}
