//! Offline two-threshold onset/end detector on the rectified gyroscope axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservationFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcConfig {
    /// Upper threshold as a fraction of the per-axis maximum rectified value.
    pub upper_frac: f64,
    /// Lower threshold is `upper / lower_divisor`.
    pub lower_divisor: f64,
}

impl Default for EcConfig {
    fn default() -> Self {
        Self {
            upper_frac: 0.30,
            lower_divisor: 20.0,
        }
    }
}

impl EcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.upper_frac > 0.0 && self.upper_frac <= 1.0) {
            return Err(Error::Config(format!(
                "upper_frac must lie in (0, 1], got {}",
                self.upper_frac
            )));
        }
        if !(self.lower_divisor > 1.0) {
            return Err(Error::Config(format!(
                "lower_divisor must exceed 1, got {}",
                self.lower_divisor
            )));
        }
        Ok(())
    }
}

/// A detected or known movement, `onset..=end` in sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementEvent {
    pub onset: usize,
    pub end: usize,
    /// Zero-based movement index; `None` until reviewed or assigned.
    pub movement_label: Option<usize>,
}

impl MovementEvent {
    pub fn new(onset: usize, end: usize, movement_label: Option<usize>) -> Self {
        Self {
            onset,
            end,
            movement_label,
        }
    }

    pub fn contains(&self, t: usize) -> bool {
        self.onset <= t && t <= self.end
    }
}

/// Onset/end pairs of one rectified channel.
///
/// Scanning forward, every sample strictly above `upper` triggers a backward
/// search to the last sample strictly below `lower` (onset) and a forward
/// search to the first sample strictly below `lower` (end). Scanning resumes
/// after the end.
pub fn detect_axis(rectified: &[f64], upper: f64, lower: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < rectified.len() {
        if rectified[t] > upper {
            let onset = (0..t).rev().find(|&s| rectified[s] < lower).unwrap_or(0);
            let end = (t + 1..rectified.len())
                .find(|&s| rectified[s] < lower)
                .unwrap_or(rectified.len() - 1);
            out.push((onset, end));
            t = end + 1;
        } else {
            t += 1;
        }
    }
    out
}

/// Union of overlapping intervals, sorted by onset.
fn merge_intervals(mut intervals: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    intervals.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(intervals.len());
    for (on, end) in intervals {
        match merged.last_mut() {
            Some(last) if on <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((on, end)),
        }
    }
    merged
}

/// Detect movements on the three gyroscope axes and merge them.
///
/// Thresholds are relative to each axis' maximum over the whole recording. The
/// event onset is the earliest axis onset and the end the latest axis end
/// among overlapping axis detections. Events come back unlabelled.
pub fn ec_segment(frames: &[ObservationFrame], config: &EcConfig) -> Result<Vec<MovementEvent>> {
    config.validate()?;
    let mut intervals = Vec::new();
    for axis in 0..3 {
        let rectified: Vec<f64> = frames.iter().map(|f| f.gyr[axis].abs()).collect();
        intervals.extend(detect_axis_relative(&rectified, config));
    }
    Ok(merge_intervals(intervals)
        .into_iter()
        .filter(|(on, end)| on < end)
        .map(|(on, end)| MovementEvent::new(on, end, None))
        .collect())
}

/// [`detect_axis`] with thresholds derived from the channel maximum.
pub fn detect_axis_relative(rectified: &[f64], config: &EcConfig) -> Vec<(usize, usize)> {
    let max = rectified.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let upper = config.upper_frac * max;
    detect_axis(rectified, upper, upper / config.lower_divisor)
}

/// Label each event with the majority label of its samples (lowest label on ties).
pub fn assign_event_labels(events: &mut [MovementEvent], labels: &[usize]) {
    for ev in events.iter_mut() {
        let mut counts = std::collections::BTreeMap::new();
        for &l in labels.iter().take(ev.end + 1).skip(ev.onset) {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        ev.movement_label = counts
            .iter()
            .fold(None, |best: Option<(usize, usize)>, (&l, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((l, c)),
            })
            .map(|(l, _)| l);
    }
}
