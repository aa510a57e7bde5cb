//! Log-distance path-loss radio model for synthetic WiFi scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::sensors::{ApId, WifiObservation, RSSI_MAX, RSSI_MIN};

use super::walk::Walk;

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub id: ApId,
    pub position: Point,
    /// Received power at 1 m, dBm.
    pub p0: f64,
    /// Path-loss exponent.
    pub n: f64,
}

impl AccessPoint {
    /// Noise-free received power at `p`. Distances below 0.1 m are clamped.
    pub fn mean_rssi(&self, p: &Point) -> f64 {
        let d = (p - self.position).norm().max(0.1);
        (self.p0 - 10.0 * self.n * d.log10()).clamp(RSSI_MIN, RSSI_MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioModel {
    pub aps: Vec<AccessPoint>,
    /// Standard deviation of the independent shadowing draw, dB.
    pub shadow_sigma: f64,
}

impl RadioModel {
    pub fn validate(&self) -> Result<()> {
        if self.aps.iter().any(|a| !(a.n > 0.0)) {
            return Err(Error::Invalid("path-loss exponent must be positive".into()));
        }
        if !(self.shadow_sigma >= 0.0) {
            return Err(Error::Invalid(
                "shadowing sigma must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// One scan at `p`: every AP, in model order.
    pub fn scan<R: Rng + ?Sized>(&self, t: f64, p: &Point, rng: &mut R) -> Vec<WifiObservation> {
        self.aps
            .iter()
            .map(|ap| {
                let e: f64 = rng.sample(StandardNormal);
                let d = (p - ap.position).norm().max(0.1);
                let rssi = ap.p0 - 10.0 * ap.n * d.log10() + self.shadow_sigma * e;
                WifiObservation {
                    t,
                    ap: ap.id.clone(),
                    rssi: rssi.clamp(RSSI_MIN, RSSI_MAX),
                }
            })
            .collect()
    }
}

/// Scans along the walk every `period` seconds, starting at `period / 2`.
pub fn simulate_wifi(
    walk: &Walk,
    radio: &RadioModel,
    period: f64,
    seed: u64,
) -> Result<Vec<WifiObservation>> {
    if !(period > 0.0) {
        return Err(Error::Invalid("scan period must be positive".into()));
    }
    radio.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = period / 2.0;
    while t <= walk.duration() {
        out.extend(radio.scan(t, &walk.position_at(t), &mut rng));
        t += period;
    }
    Ok(out)
}
