use serde::{Deserialize, Serialize};

/// Which classifier (or ground truth) produced a label sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Expert,
    Knn,
    VarHhmm,
    Generator,
    External,
}

/// Per-sample movement labels. Labels are zero-based in memory (0 = rest) and
/// one-based in every file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub labels: Vec<usize>,
    pub provenance: Provenance,
}

impl LabelSequence {
    pub fn new(labels: Vec<usize>, provenance: Provenance) -> Self {
        Self { labels, provenance }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct classes implied by the largest label.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Maximal runs of equal labels as `(label, start, end_inclusive)`.
    pub fn runs(&self) -> Vec<(usize, usize, usize)> {
        label_runs(&self.labels)
    }
}

/// Maximal runs of equal labels as `(label, start, end_inclusive)`.
pub fn label_runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            runs.push((labels[start], start, t - 1));
            start = t;
        }
    }
    runs
}
