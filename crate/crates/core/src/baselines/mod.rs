//! Comparison classifiers: the offline two-threshold expert classifier and weighted KNN.

mod ec;
mod knn;

pub use ec::{assign_event_labels, detect_axis, detect_axis_relative, ec_segment, EcConfig, MovementEvent};
pub use knn::{knn_classify, knn_train, window_features, KnnConfig, KnnModel, Weighting, DEFAULT_K};
