//! Brute-force weighted k-nearest-neighbour classifier over standardized frames.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSequence, Provenance};
use crate::model::ObservationFrame;

pub const DEFAULT_K: usize = 29;

const DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    /// `1 / (distance + 1e-12)`.
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub weighting: Weighting,
    /// Number of consecutive frames (current plus preceding) in one feature vector.
    pub window: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            weighting: Weighting::InverseDistance,
            window: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    config: KnnConfig,
    mean: Vec<f64>,
    scale: Vec<f64>,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

/// Window features: frame `t` then its predecessors, repeating frame 0 at the start.
pub fn window_features<V: AsRef<[f64]>>(vectors: &[V], window: usize) -> Vec<Vec<f64>> {
    (0..vectors.len())
        .map(|t| {
            (0..window.max(1))
                .flat_map(|lag| vectors[t.saturating_sub(lag)].as_ref().iter().copied())
                .collect()
        })
        .collect()
}

impl KnnModel {
    /// Store standardized feature vectors with their labels.
    pub fn fit(features: &[Vec<f64>], labels: &[usize], config: KnnConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if features.len() < config.k {
            return Err(Error::Config(format!(
                "k = {} needs at least {} training samples, got {}",
                config.k,
                config.k,
                features.len()
            )));
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::Config("training features have mixed lengths".into()));
        }
        // Column statistics over sorted values, so they do not depend on training order.
        let n = features.len() as f64;
        let mut mean = Vec::with_capacity(dim);
        let mut scale = Vec::with_capacity(dim);
        for c in 0..dim {
            let mut col: Vec<f64> = features.iter().map(|f| f[c]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.iter().sum::<f64>() / n;
            let mut dev: Vec<f64> = col.iter().map(|x| (x - m).powi(2)).collect();
            dev.sort_by(f64::total_cmp);
            let sd = (dev.iter().sum::<f64>() / n).sqrt();
            mean.push(m);
            scale.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        let standardized = features
            .iter()
            .map(|f| f.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s).collect())
            .collect();
        Ok(Self {
            config,
            n_classes: labels.iter().max().map_or(0, |m| m + 1),
            mean,
            scale,
            features: standardized,
            labels: labels.to_vec(),
        })
    }

    pub fn config(&self) -> &KnnConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    /// Classify one raw (unstandardized) feature vector.
    pub fn classify_features(&self, raw: &[f64]) -> Result<usize> {
        if raw.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: raw.len(),
            });
        }
        let q = self.standardize(raw);
        let mut scored: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        // Total order on (distance, label, coordinates) so the neighbour set does
        // not depend on the order of the training data.
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0)
                .then(self.labels[a.1].cmp(&self.labels[b.1]))
                .then_with(|| {
                    self.features[a.1]
                        .iter()
                        .zip(&self.features[b.1])
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(Ordering::Equal)
                })
        };
        let k = self.config.k;
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        let mut votes = vec![0.0; self.n_classes];
        for &(d2, i) in &scored {
            let w = match self.config.weighting {
                Weighting::Uniform => 1.0,
                Weighting::InverseDistance => 1.0 / (d2.sqrt() + DISTANCE_EPS),
            };
            votes[self.labels[i]] += w;
        }
        Ok(crate::math::argmax(&votes))
    }

    /// Per-sample labels for a recording, using the configured window.
    pub fn classify_sequence(&self, frames: &[ObservationFrame]) -> Result<LabelSequence> {
        let vectors: Vec<[f64; 6]> = frames.iter().map(ObservationFrame::to_array).collect();
        let labels = window_features(&vectors, self.config.window)
            .iter()
            .map(|f| self.classify_features(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelSequence::new(labels, Provenance::Knn))
    }
}

/// Build a model from labelled frames.
pub fn knn_train(frames: &[ObservationFrame], labels: &[usize], config: KnnConfig) -> Result<KnnModel> {
    let vectors: Vec<[f64; 6]> = frames.iter().map(ObservationFrame::to_array).collect();
    KnnModel::fit(&window_features(&vectors, config.window), labels, config)
}

/// Label of a single frame. Only meaningful for a window of one frame.
pub fn knn_classify(model: &KnnModel, frame: &ObservationFrame) -> Result<usize> {
    if model.config.window != 1 {
        return Err(Error::Config(
            "single-frame classification needs window = 1; use classify_sequence".into(),
        ));
    }
    model.classify_features(&frame.to_array())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_set_size_boundary() {
        let feats: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let labels = vec![0; 30];
        let cfg = KnnConfig::default();
        assert!(KnnModel::fit(&feats, &labels, cfg).is_ok());
        assert!(KnnModel::fit(&feats[..28], &labels[..28], cfg).is_err());
        assert!(KnnModel::fit(&feats[..29], &labels[..29], cfg).is_ok());
    }

    #[test]
    fn exact_match_with_one_neighbour() {
        let feats = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 2.0]];
        let labels = vec![0, 1, 2];
        let cfg = KnnConfig {
            k: 1,
            ..KnnConfig::default()
        };
        let m = KnnModel::fit(&feats, &labels, cfg).unwrap();
        for (f, &l) in feats.iter().zip(&labels) {
            assert_eq!(m.classify_features(f).unwrap(), l);
        }
    }

    #[test]
    fn symmetric_tie_goes_to_lower_label() {
        let feats = vec![vec![-1.0], vec![1.0]];
        let m = KnnModel::fit(
            &feats,
            &[1, 0],
            KnnConfig {
                k: 2,
                ..KnnConfig::default()
            },
        )
        .unwrap();
        assert_eq!(m.classify_features(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn window_features_repeat_first_frame() {
        let v = vec![[1.0], [2.0], [3.0]];
        assert_eq!(
            window_features(&v, 2),
            vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 2.0]]
        );
    }
}
