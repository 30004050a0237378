//! Acceptable movement-to-sound latency window from synchrony ratings.
//!
//! Subjects rate each lagged trial as synchronous (1) or not (0), three times
//! per lag. Subjects whose repetitions disagree on more than half of the lags
//! are dropped; positive ratings of the rest are pooled per lag and a normal
//! density is fitted by the weighted mean and (population) standard deviation
//! of the lag values. The window is one standard deviation either side.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_TRIAL_LAG: i32 = -10;
pub const MAX_TRIAL_LAG: i32 = 40;
pub const REPETITIONS: u8 = 3;

/// Video frame period used when converting fitted frames to milliseconds (60 fps).
pub const DEFAULT_FRAME_MS: f64 = 1000.0 / 60.0;

/// Published acceptable onset window in milliseconds.
pub const CANONICAL_WINDOW_MS: [f64; 2] = [-48.0, 208.0];
/// Published acceptable onset window in video frames.
pub const CANONICAL_WINDOW_FRAMES: [i32; 2] = [-3, 13];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtscResponse {
    pub subject: String,
    /// Sound lag in video frames.
    pub lag: i32,
    /// 1 = rated synchronous.
    pub response: u8,
    pub repetition: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtscResponseTable {
    pub rows: Vec<SmtscResponse>,
}

impl SmtscResponseTable {
    pub fn new(rows: Vec<SmtscResponse>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if !(MIN_TRIAL_LAG..=MAX_TRIAL_LAG).contains(&r.lag) {
                return Err(Error::Parameter(format!("row {i}: lag {} outside [-10, 40]", r.lag)));
            }
            if r.response > 1 {
                return Err(Error::Parameter(format!("row {i}: response {} is not 0/1", r.response)));
            }
            if !(1..=REPETITIONS).contains(&r.repetition) {
                return Err(Error::Parameter(format!(
                    "row {i}: repetition {} outside 1..=3",
                    r.repetition
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Read CSV with header `subject,lag,response,repetition`.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let rows = reader.deserialize().collect::<std::result::Result<Vec<SmtscResponse>, _>>()?;
        Self::new(rows)
    }

    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmtscWindow {
    pub mu_frames: f64,
    pub sigma_frames: f64,
    /// `[mu - sigma, mu + sigma]` in milliseconds, unrounded.
    pub window_ms: [f64; 2],
    pub window_frames: [f64; 2],
    pub frame_ms: f64,
    pub n_positive: u64,
    pub included_subjects: Vec<String>,
    pub excluded_subjects: Vec<String>,
    /// Positive-response count per lag after exclusion.
    pub positive_counts: BTreeMap<i32, u64>,
    /// Lowest and highest lag whose positive count exceeds half the number of included subjects.
    pub majority_range_frames: Option<[i32; 2]>,
}

/// Subjects whose repetitions are non-unanimous on more than half of their lags.
pub fn inconsistent_subjects(table: &SmtscResponseTable) -> BTreeSet<String> {
    let mut per_subject: BTreeMap<&str, BTreeMap<i32, BTreeSet<u8>>> = BTreeMap::new();
    for r in &table.rows {
        per_subject
            .entry(&r.subject)
            .or_default()
            .entry(r.lag)
            .or_default()
            .insert(r.response);
    }
    per_subject
        .into_iter()
        .filter(|(_, lags)| {
            let disagreeing = lags.values().filter(|answers| answers.len() > 1).count();
            2 * disagreeing > lags.len()
        })
        .map(|(s, _)| s.to_string())
        .collect()
}

pub fn smtsc_window(table: &SmtscResponseTable, frame_ms: f64) -> Result<SmtscWindow> {
    if !(frame_ms > 0.0) {
        return Err(Error::Parameter(format!("frame period must be positive, got {frame_ms}")));
    }
    let excluded = inconsistent_subjects(table);
    let included: BTreeSet<String> = table
        .rows
        .iter()
        .filter(|r| !excluded.contains(&r.subject))
        .map(|r| r.subject.clone())
        .collect();
    if included.is_empty() {
        return Err(Error::InsufficientData("every subject was excluded as inconsistent".into()));
    }
    let mut positive_counts: BTreeMap<i32, u64> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| included.contains(&r.subject)) {
        *positive_counts.entry(r.lag).or_insert(0) += u64::from(r.response);
    }
    let n_positive: u64 = positive_counts.values().sum();
    if n_positive == 0 {
        return Err(Error::InsufficientData("no positive responses after exclusion".into()));
    }
    let n = n_positive as f64;
    let mu = positive_counts.iter().map(|(&l, &c)| l as f64 * c as f64).sum::<f64>() / n;
    let var = positive_counts
        .iter()
        .map(|(&l, &c)| c as f64 * (l as f64 - mu).powi(2))
        .sum::<f64>()
        / n;
    let sigma = var.sqrt();

    let half = included.len() as f64 / 2.0;
    let majority: Vec<i32> = positive_counts
        .iter()
        .filter(|(_, &c)| c as f64 > half)
        .map(|(&l, _)| l)
        .collect();

    Ok(SmtscWindow {
        mu_frames: mu,
        sigma_frames: sigma,
        window_ms: [(mu - sigma) * frame_ms, (mu + sigma) * frame_ms],
        window_frames: [mu - sigma, mu + sigma],
        frame_ms,
        n_positive,
        included_subjects: included.into_iter().collect(),
        excluded_subjects: excluded.into_iter().collect(),
        positive_counts,
        majority_range_frames: majority.first().zip(majority.last()).map(|(&a, &b)| [a, b]),
    })
}
