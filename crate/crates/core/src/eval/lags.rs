use serde::{Deserialize, Serialize};

use crate::baselines::MovementEvent;
use crate::model::SAMPLE_RATE_HZ;

/// How far before the reference onset a predicted onset is still accepted.
pub const ONSET_SEARCH_BEFORE: usize = 50;

/// Milliseconds per sample at the IMU rate.
pub const SAMPLE_PERIOD_MS: f64 = 1000.0 / SAMPLE_RATE_HZ;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagRecord {
    pub event: MovementEvent,
    /// Predicted onset minus reference onset, in samples.
    pub onset_lag: Option<i64>,
    /// Predicted end minus reference end, in samples.
    pub end_lag: Option<i64>,
    pub matched: bool,
}

impl LagRecord {
    pub fn onset_lag_ms(&self) -> Option<f64> {
        self.onset_lag.map(|l| l as f64 * SAMPLE_PERIOD_MS)
    }

    pub fn end_lag_ms(&self) -> Option<f64> {
        self.end_lag.map(|l| l as f64 * SAMPLE_PERIOD_MS)
    }
}

/// Onset and end lags of a predicted labelling against reference events.
///
/// The predicted onset is the first sample in `[onset - 50, end]` carrying the
/// event's label; the predicted end is the last sample of the run of that label
/// starting there (it may extend past the reference end). Events with no such
/// sample, or without a label, are unmatched.
pub fn event_lags(reference: &[MovementEvent], pred: &[usize]) -> Vec<LagRecord> {
    reference
        .iter()
        .map(|ev| {
            let unmatched = LagRecord {
                event: *ev,
                onset_lag: None,
                end_lag: None,
                matched: false,
            };
            let Some(label) = ev.movement_label else {
                return unmatched;
            };
            let lo = ev.onset.saturating_sub(ONSET_SEARCH_BEFORE);
            let hi = ev.end.min(pred.len().saturating_sub(1));
            if pred.is_empty() || lo > hi {
                return unmatched;
            }
            let Some(start) = (lo..=hi).find(|&t| pred[t] == label) else {
                return unmatched;
            };
            let mut stop = start;
            while stop + 1 < pred.len() && pred[stop + 1] == label {
                stop += 1;
            }
            LagRecord {
                event: *ev,
                onset_lag: Some(start as i64 - ev.onset as i64),
                end_lag: Some(stop as i64 - ev.end as i64),
                matched: true,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_from(events: &[MovementEvent], len: usize, shift: usize) -> Vec<usize> {
        let mut l = vec![0; len];
        for ev in events {
            for t in ev.onset..=ev.end {
                if t + shift < len {
                    l[t + shift] = ev.movement_label.unwrap();
                }
            }
        }
        l
    }

    fn events() -> Vec<MovementEvent> {
        vec![
            MovementEvent::new(20, 60, Some(1)),
            MovementEvent::new(120, 170, Some(2)),
            MovementEvent::new(240, 300, Some(1)),
        ]
    }

    #[test]
    fn identical_prediction_has_zero_lags() {
        let evs = events();
        let recs = event_lags(&evs, &labels_from(&evs, 400, 0));
        for r in recs {
            assert!(r.matched);
            assert_eq!((r.onset_lag, r.end_lag), (Some(0), Some(0)));
        }
    }

    #[test]
    fn shifted_prediction() {
        let evs = events();
        let recs = event_lags(&evs, &labels_from(&evs, 400, 3));
        for r in recs {
            assert_eq!((r.onset_lag, r.end_lag), (Some(3), Some(3)));
            assert_eq!(r.onset_lag_ms(), Some(30.0));
        }
    }

    #[test]
    fn dropped_event_is_unmatched() {
        let evs = events();
        let mut pred = labels_from(&evs, 400, 0);
        for t in 120..=170 {
            pred[t] = 0;
        }
        let recs = event_lags(&evs, &pred);
        assert!(recs[0].matched && recs[2].matched);
        assert!(!recs[1].matched);
        assert_eq!(recs[1].onset_lag, None);
        assert_eq!((recs[0].onset_lag, recs[2].end_lag), (Some(0), Some(0)));
    }

    #[test]
    fn unlabelled_event_is_unmatched() {
        let recs = event_lags(&[MovementEvent::new(1, 3, None)], &[0, 1, 1, 1]);
        assert!(!recs[0].matched);
    }
}
