//! Dataset schema and CSV formats.
//!
//! Frames: header `t,ax,ay,az,gx,gy,gz` with an optional trailing `label`
//! column (one-based movement label). Events: `onset,end,label` where the label
//! may be empty. Labels only: `t,label`. Floats are written in shortest
//! round-trip form, so a save/load cycle is bit-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::MovementEvent;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::labels::{LabelSequence, Provenance};
use crate::model::{ObservationFrame, SAMPLE_RATE_HZ};

pub const FRAME_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const LABEL_COLUMN: &str = "label";
pub const EVENT_HEADER: [&str; 3] = ["onset", "end", "label"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sample_rate_hz: f64,
    pub name: String,
    pub movement_names: Vec<String>,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            name: String::new(),
            movement_names: Vec::new(),
        }
    }
}

/// Default movement names `M1..Mn`.
pub fn default_movement_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("M{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<ObservationFrame>,
    pub labels: Option<LabelSequence>,
    pub events: Option<Vec<MovementEvent>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(frames: Vec<ObservationFrame>, meta: DatasetMeta) -> Self {
        Self {
            frames,
            labels: None,
            events: None,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of movement classes: the larger of the named movements and the highest label.
    pub fn n_movements(&self) -> usize {
        let from_labels = self.labels.as_ref().map_or(0, LabelSequence::n_classes);
        let from_events = self
            .events
            .iter()
            .flatten()
            .filter_map(|e| e.movement_label)
            .max()
            .map_or(0, |m| m + 1);
        self.meta.movement_names.len().max(from_labels).max(from_events)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidModel(format!(
                    "sample index {} does not increase after {}",
                    w[1].t, w[0].t
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.frames.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.frames.len(),
                    got: labels.len(),
                });
            }
        }
        if let Some(events) = &self.events {
            for w in events.windows(2) {
                if w[1].onset <= w[0].end {
                    return Err(Error::InvalidModel("events overlap or are unsorted".into()));
                }
            }
            for ev in events {
                if ev.onset >= ev.end || ev.end >= self.frames.len() {
                    return Err(Error::InvalidModel(format!(
                        "event [{}, {}] is empty or out of range",
                        ev.onset, ev.end
                    )));
                }
                if let (Some(labels), Some(l)) = (&self.labels, ev.movement_label) {
                    if labels.labels[ev.onset..=ev.end].iter().any(|&x| x != l) {
                        return Err(Error::InvalidModel(format!(
                            "labels inside event [{}, {}] disagree with its label",
                            ev.onset, ev.end
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_label(path: &Path, line: u64, field: &str) -> Result<usize> {
    let v: usize = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid label {field:?}")))?;
    if v == 0 {
        return Err(parse_err(path, line, "labels are one-based"));
    }
    Ok(v - 1)
}

/// Read a frame CSV. Out-of-range sensor values are clamped with a warning.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let has_labels = match cols.len() {
        7 => false,
        8 if cols[7] == LABEL_COLUMN => true,
        _ => {
            return Err(parse_err(
                path,
                1,
                format!("expected header t,ax,ay,az,gx,gy,gz[,label], got {}", cols.join(",")),
            ))
        }
    };
    if cols[..7] != FRAME_HEADER {
        return Err(parse_err(
            path,
            1,
            format!("expected header t,ax,ay,az,gx,gy,gz[,label], got {}", cols.join(",")),
        ));
    }

    let mut frames = Vec::new();
    let mut labels = Vec::new();
    let mut clipped = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record_line(&rec);
        if rec.len() != cols.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, got {}", cols.len(), rec.len()),
            ));
        }
        let t: u64 = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid sample index {:?}", &rec[0])))?;
        let mut v = [0.0f64; 6];
        for (c, slot) in v.iter_mut().enumerate() {
            let s = &rec[c + 1];
            *slot = s
                .parse()
                .map_err(|_| parse_err(path, line, format!("invalid number {s:?} in column {}", FRAME_HEADER[c + 1])))?;
            if !slot.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value in column {}", FRAME_HEADER[c + 1])));
            }
        }
        if let Some(prev) = frames.last().map(|f: &ObservationFrame| f.t) {
            if t <= prev {
                return Err(parse_err(path, line, format!("sample index {t} does not increase after {prev}")));
            }
        }
        let mut frame = ObservationFrame::from_vector(t, &v)?;
        if frame.clamp_to_sensor_range() {
            clipped += 1;
        }
        frames.push(frame);
        if has_labels {
            labels.push(parse_label(path, line, &rec[7])?);
        }
    }
    if clipped > 0 {
        log::warn!("{}: clamped {clipped} frames to the sensor range", path.display());
    }
    let labels = has_labels.then(|| LabelSequence::new(labels, Provenance::External));
    let n = labels.as_ref().map_or(0, LabelSequence::n_classes);
    Ok(Dataset {
        frames,
        labels,
        events: None,
        meta: DatasetMeta {
            sample_rate_hz: SAMPLE_RATE_HZ,
            name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            movement_names: default_movement_names(n),
        },
    })
}

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_labels = dataset.labels.is_some();
    let mut header: Vec<&str> = FRAME_HEADER.to_vec();
    if with_labels {
        header.push(LABEL_COLUMN);
    }
    w.write_record(&header)?;
    for (i, f) in dataset.frames.iter().enumerate() {
        let mut row: Vec<String> = Vec::with_capacity(8);
        row.push(f.t.to_string());
        row.extend(f.to_array().iter().map(|v| v.to_string()));
        if let Some(labels) = &dataset.labels {
            row.push((labels.labels[i] + 1).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_dataset(dataset, w))
}

pub fn load_events(path: &Path) -> Result<Vec<MovementEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != EVENT_HEADER {
        return Err(parse_err(path, 1, format!("expected header onset,end,label, got {}", header.join(","))));
    }
    let mut events: Vec<MovementEvent> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        let idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(path, line, format!("invalid sample index {s:?}")))
        };
        let (onset, end) = (idx(&rec[0])?, idx(&rec[1])?);
        if onset >= end {
            return Err(parse_err(path, line, "onset must precede end"));
        }
        if let Some(prev) = events.last() {
            if onset <= prev.end {
                return Err(parse_err(path, line, "events overlap or are unsorted"));
            }
        }
        let label = if rec[2].is_empty() {
            None
        } else {
            Some(parse_label(path, line, &rec[2])?)
        };
        events.push(MovementEvent::new(onset, end, label));
    }
    Ok(events)
}

pub fn write_events<W: Write>(events: &[MovementEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_HEADER)?;
    for ev in events {
        w.write_record([
            ev.onset.to_string(),
            ev.end.to_string(),
            ev.movement_label.map(|l| (l + 1).to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_events(events: &[MovementEvent], path: &Path) -> Result<()> {
    write_atomic(path, |w| write_events(events, w))
}

/// Read the `label` column of any CSV carrying one (a labelled dataset or a `t,label` file).
pub fn load_labels(path: &Path) -> Result<LabelSequence> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| parse_err(path, 1, "no label column"))?;
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&rec);
        let field = rec
            .get(col)
            .ok_or_else(|| parse_err(path, line, "missing label field"))?;
        labels.push(parse_label(path, line, field)?);
    }
    Ok(LabelSequence::new(labels, Provenance::External))
}

/// `t,label` rows, labels one-based.
pub fn write_labels<W: Write>(times: &[u64], labels: &LabelSequence, out: W) -> Result<()> {
    if times.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: labels.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", LABEL_COLUMN])?;
    for (t, l) in times.iter().zip(&labels.labels) {
        w.write_record([t.to_string(), (l + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_labels(times: &[u64], labels: &LabelSequence, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_labels(times, labels, w))
}
