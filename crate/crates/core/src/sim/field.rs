//! Static magnetic field: a uniform background plus decaying point anomalies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Point};
use crate::sensors::MagSample;

use super::walk::Walk;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anomaly {
    pub center: Point,
    /// Added magnitude at the centre (may be negative).
    pub strength: f64,
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagFieldModel {
    pub background: f64,
    pub anomalies: Vec<Anomaly>,
}

impl MagFieldModel {
    /// The background must stay above the summed negative anomalies so the
    /// magnitude is positive everywhere.
    pub fn new(background: f64, anomalies: Vec<Anomaly>) -> Result<Self> {
        let worst: f64 = anomalies.iter().map(|a| a.strength.min(0.0)).sum();
        if anomalies.iter().any(|a| !(a.decay > 0.0)) {
            return Err(Error::Invalid("anomaly decay must be positive".into()));
        }
        if !(background + worst > 0.0) {
            return Err(Error::Invalid(
                "field magnitude could become non-positive".into(),
            ));
        }
        Ok(Self {
            background,
            anomalies,
        })
    }

    /// Anomalies scattered uniformly over `bounds`, one per `area_per` m².
    pub fn random(bounds: &Bounds, area_per: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ((bounds.width() * bounds.height()) / area_per).ceil() as usize;
        let anomalies: Vec<Anomaly> = (0..n)
            .map(|_| Anomaly {
                center: Point::new(
                    rng.random_range(bounds.min.x..=bounds.max.x),
                    rng.random_range(bounds.min.y..=bounds.max.y),
                ),
                strength: rng.random_range(-6.0..=6.0),
                decay: rng.random_range(0.6..=1.8),
            })
            .collect();
        let worst: f64 = anomalies.iter().map(|a| a.strength.min(0.0)).sum();
        Self {
            background: 45f64.max(1.0 - worst),
            anomalies,
        }
    }
}

/// Field magnitude at `p`.
pub fn sample_field(model: &MagFieldModel, p: &Point) -> f64 {
    model.background
        + model
            .anomalies
            .iter()
            .map(|a| a.strength * (-(p - a.center).norm() / a.decay).exp())
            .sum::<f64>()
}

/// Fixed sensor frame direction; only the magnitude is meaningful.
const AXIS: [f64; 3] = [0.36, 0.48, 0.8];

/// Magnetometer readings along the walk at `rate` Hz with Gaussian noise on
/// the magnitude.
pub fn sample_magnetics(
    walk: &Walk,
    model: &MagFieldModel,
    rate: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<MagSample>> {
    if !(rate > 0.0) {
        return Err(Error::Invalid("magnetometer rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(walk
        .sample_times(rate)
        .into_iter()
        .map(|t| {
            let e: f64 = rng.sample(StandardNormal);
            let m = sample_field(model, &walk.position_at(t)) + sigma * e;
            MagSample {
                t,
                b: AXIS.map(|c| c * m),
            }
        })
        .collect())
}
