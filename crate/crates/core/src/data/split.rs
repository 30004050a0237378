use super::dataset::Dataset;
use crate::baselines::MovementEvent;
use crate::error::{Error, Result};
use crate::labels::{label_runs, LabelSequence};

/// Gesture events of a dataset: its own events, or non-rest label runs.
fn events_of(dataset: &Dataset) -> Vec<MovementEvent> {
    if let Some(events) = &dataset.events {
        return events.clone();
    }
    dataset
        .labels
        .as_ref()
        .map(|l| {
            label_runs(&l.labels)
                .into_iter()
                .filter(|&(label, on, end)| label != 0 && on < end)
                .map(|(label, on, end)| MovementEvent::new(on, end, Some(label)))
                .collect()
        })
        .unwrap_or_default()
}

/// Sample index where the first half ends (exclusive).
///
/// With events, the first half gets `round(fraction * n_events)` of them
/// (at least one per half) and the cut sits midway through the rest gap that
/// follows. Without events the cut is at `round(fraction * len)`.
pub fn split_index(dataset: &Dataset, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let events = events_of(dataset);
    let len = dataset.len();
    if events.len() < 2 {
        return Ok(((fraction * len as f64).round() as usize).clamp(1, len.saturating_sub(1)));
    }
    let n_first = ((fraction * events.len() as f64).round() as usize).clamp(1, events.len() - 1);
    let gap_start = events[n_first - 1].end + 1;
    let gap_end = events[n_first].onset;
    Ok(gap_start + (gap_end - gap_start) / 2)
}

fn slice(dataset: &Dataset, range: std::ops::Range<usize>) -> Dataset {
    let shift = range.start;
    Dataset {
        frames: dataset.frames[range.clone()].to_vec(),
        labels: dataset
            .labels
            .as_ref()
            .map(|l| LabelSequence::new(l.labels[range.clone()].to_vec(), l.provenance)),
        events: dataset.events.as_ref().map(|evs| {
            evs.iter()
                .filter(|e| range.contains(&e.onset) && range.contains(&e.end))
                .map(|e| MovementEvent::new(e.onset - shift, e.end - shift, e.movement_label))
                .collect()
        }),
        meta: dataset.meta.clone(),
    }
}

/// Split into a training and a test part without cutting through a gesture.
pub fn split_train_test(dataset: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientData("need at least two frames to split".into()));
    }
    let cut = split_index(dataset, fraction)?;
    Ok((slice(dataset, 0..cut), slice(dataset, cut..dataset.len())))
}
