//! Newline-delimited JSON streaming front end for the filter.
//!
//! Input records are `{"t": int, "acc": [f, f, f], "gyr": [f, f, f]}`; each
//! produces one output `{"t": int, "label": int, "posterior": [f; N]}` with a
//! 1-based label. Blank lines are skipped.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterState, PreparedSpec, StepOutput};
use crate::model::ObservationFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub t: u64,
    pub label: usize,
    pub posterior: Vec<f64>,
}

impl StreamRecord {
    pub fn from_step(t: u64, out: &StepOutput) -> Self {
        Self {
            t,
            label: out.label + 1,
            posterior: out.movement_posterior.clone(),
        }
    }
}

/// Parse one input line into a frame, clamped to the sensor range.
pub fn parse_frame(line: &str, line_no: usize) -> Result<ObservationFrame> {
    let mut frame: ObservationFrame = serde_json::from_str(line).map_err(|e| Error::Parse {
        path: "<stream>".into(),
        line: line_no as u64,
        message: e.to_string(),
    })?;
    if frame.clamp_to_sensor_range() {
        log::warn!("line {line_no}: frame t={} clipped to the sensor range", frame.t);
    }
    Ok(frame)
}

/// Online classifier over a single stream.
pub struct StreamClassifier<'a> {
    prepared: &'a PreparedSpec,
    state: FilterState,
}

impl<'a> StreamClassifier<'a> {
    pub fn new(prepared: &'a PreparedSpec) -> Self {
        Self {
            prepared,
            state: prepared.init(),
        }
    }

    pub fn push(&mut self, frame: &ObservationFrame) -> Result<StreamRecord> {
        let out = self.prepared.step_frame(&mut self.state, frame)?;
        Ok(StreamRecord::from_step(frame.t, &out))
    }
}

/// Filter every record of `input`, writing and flushing one output line per
/// input line. Returns the number of frames processed.
pub fn run_stream<R: BufRead, W: Write>(prepared: &PreparedSpec, input: R, mut output: W) -> Result<usize> {
    let mut classifier = StreamClassifier::new(prepared);
    let mut n = 0;
    let mut buf = Vec::with_capacity(256);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_frame(&line, i + 1)?;
        let record = classifier.push(&frame)?;
        buf.clear();
        serde_json::to_writer(&mut buf, &record)?;
        buf.push(b'\n');
        output.write_all(&buf)?;
        output.flush()?;
        n += 1;
    }
    Ok(n)
}
