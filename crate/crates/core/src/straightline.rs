//! Straight-walking detection on the raw step stream.

use crate::error::{Error, Result};
use crate::sensors::StepEvent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraightLineParams {
    /// Per-step turn threshold in degrees (strict).
    pub turn_threshold_deg: f64,
    /// Shortest run of candidate steps that counts as a straight line.
    pub min_run: usize,
}

impl Default for StraightLineParams {
    fn default() -> Self {
        Self {
            turn_threshold_deg: 5.0,
            min_run: 10,
        }
    }
}

impl StraightLineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.turn_threshold_deg > 0.0) || self.min_run < 2 {
            return Err(Error::Invalid(
                "straight-line threshold must be positive and min_run at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Flag every step that belongs to a run of at least `min_run` consecutive
/// steps turning by less than the threshold.
pub fn detect_straight_steps(steps: &[StepEvent], params: &StraightLineParams) -> Vec<bool> {
    let threshold = params.turn_threshold_deg.to_radians();
    let mut flags = vec![false; steps.len()];
    let mut run_start = 0;
    for i in 0..=steps.len() {
        let candidate = steps.get(i).is_some_and(|s| s.dtheta.abs() < threshold);
        if candidate {
            continue;
        }
        if i - run_start >= params.min_run {
            flags[run_start..i].fill(true);
        }
        run_start = i + 1;
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(dthetas_deg: &[f64]) -> Vec<StepEvent> {
        dthetas_deg
            .iter()
            .enumerate()
            .map(|(i, d)| StepEvent {
                t: i as f64 * 0.6,
                length: 0.75,
                dtheta: d.to_radians(),
            })
            .collect()
    }

    #[test]
    fn all_straight() {
        let flags = detect_straight_steps(&steps(&[0.0; 12]), &StraightLineParams::default());
        assert!(flags.iter().all(|&f| f));
    }

    #[test]
    fn short_run_before_turn() {
        let mut d = vec![0.0; 9];
        d.push(30.0);
        let flags = detect_straight_steps(&steps(&d), &StraightLineParams::default());
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn alternating_turns() {
        let d: Vec<f64> = (0..20)
            .map(|i| if i % 2 == 0 { 10.0 } else { -10.0 })
            .collect();
        let flags = detect_straight_steps(&steps(&d), &StraightLineParams::default());
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn threshold_is_strict() {
        let flags = detect_straight_steps(&steps(&[5.0; 12]), &StraightLineParams::default());
        assert!(flags.iter().all(|&f| !f));
        let flags = detect_straight_steps(&steps(&[4.99; 12]), &StraightLineParams::default());
        assert!(flags.iter().all(|&f| f));
    }

    #[test]
    fn runs_split_by_turn() {
        let mut d = vec![1.0; 10];
        d.push(90.0);
        d.extend([0.0; 4]);
        d.push(-90.0);
        d.extend([0.0; 11]);
        let flags = detect_straight_steps(&steps(&d), &StraightLineParams::default());
        assert!(flags[..10].iter().all(|&f| f));
        assert!(flags[10..16].iter().all(|&f| !f));
        assert!(flags[16..].iter().all(|&f| f));
    }
}
