//! Classification metrics, onset/end lags, misclassified blocks and latency analysis.

mod lags;
mod latency;
mod metrics;
mod smtsc;

pub use lags::{event_lags, LagRecord, ONSET_SEARCH_BEFORE, SAMPLE_PERIOD_MS};
pub use latency::{
    count_later_than, default_curve_thresholds, default_profiles, latency_budget, LatencyBudget, LatencyProfile,
    ProfileBudget,
};
pub use metrics::{
    confusion, histogram, misclassified_blocks, precision_recall, variance_ratio_test, ClassScores, ConfusionMatrix,
    VarianceRatioTest,
};
pub use smtsc::{
    inconsistent_subjects, smtsc_window, SmtscResponse, SmtscResponseTable, SmtscWindow, CANONICAL_WINDOW_FRAMES,
    CANONICAL_WINDOW_MS, DEFAULT_FRAME_MS, MAX_TRIAL_LAG, MIN_TRIAL_LAG, REPETITIONS,
};
