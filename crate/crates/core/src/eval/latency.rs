use serde::{Deserialize, Serialize};

use super::lags::LagRecord;
use crate::error::{Error, Result};

/// Transport plus audio output latency of a playback platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub name: String,
    pub hardware_lag_ms: f64,
}

impl LatencyProfile {
    pub fn new(name: impl Into<String>, hardware_lag_ms: f64) -> Result<Self> {
        if !(hardware_lag_ms >= 0.0) {
            return Err(Error::Parameter(format!(
                "hardware lag must be non-negative, got {hardware_lag_ms}"
            )));
        }
        Ok(Self {
            name: name.into(),
            hardware_lag_ms,
        })
    }
}

/// PC (no added lag), iOS (8 ms) and slow Android (120 ms).
pub fn default_profiles() -> Vec<LatencyProfile> {
    vec![
        LatencyProfile {
            name: "pc".into(),
            hardware_lag_ms: 0.0,
        },
        LatencyProfile {
            name: "ios".into(),
            hardware_lag_ms: 8.0,
        },
        LatencyProfile {
            name: "slow-android".into(),
            hardware_lag_ms: 120.0,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBudget {
    pub name: String,
    pub hardware_lag_ms: f64,
    /// Largest detection lag still perceived as synchronous on this platform.
    pub acceptable_lag_ms: f64,
    pub delayed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBudget {
    pub window_upper_ms: f64,
    pub n_events: usize,
    pub profiles: Vec<ProfileBudget>,
    /// `(threshold_ms, number of events detected later than the threshold)`.
    pub curve: Vec<(f64, usize)>,
}

/// Thresholds every 10 ms over [-500, 1000] ms.
pub fn default_curve_thresholds() -> Vec<f64> {
    (-50..=100).map(|i| i as f64 * 10.0).collect()
}

/// Events whose onset was detected later than `threshold_ms` (unmatched events always count).
pub fn count_later_than(records: &[LagRecord], threshold_ms: f64) -> usize {
    records
        .iter()
        .filter(|r| r.onset_lag_ms().is_none_or(|lag| lag > threshold_ms))
        .count()
}

/// Perceivably delayed events per profile: `onset_lag + hardware_lag > window_upper`.
pub fn latency_budget(
    records: &[LagRecord],
    profiles: &[LatencyProfile],
    window_upper_ms: f64,
    curve_thresholds: &[f64],
) -> LatencyBudget {
    LatencyBudget {
        window_upper_ms,
        n_events: records.len(),
        profiles: profiles
            .iter()
            .map(|p| {
                let acceptable_lag_ms = window_upper_ms - p.hardware_lag_ms;
                ProfileBudget {
                    name: p.name.clone(),
                    hardware_lag_ms: p.hardware_lag_ms,
                    acceptable_lag_ms,
                    delayed: count_later_than(records, acceptable_lag_ms),
                }
            })
            .collect(),
        curve: curve_thresholds
            .iter()
            .map(|&th| (th, count_later_than(records, th)))
            .collect(),
    }
}
