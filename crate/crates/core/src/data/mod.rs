//! Dataset schema, on-disk formats, synthetic generation and splitting.

mod dataset;
mod generator;
mod split;

pub use dataset::{
    default_movement_names, load_dataset, load_events, load_labels, save_dataset, save_events, save_labels,
    write_dataset, write_events, write_labels, Dataset, DatasetMeta, EVENT_HEADER, FRAME_HEADER, LABEL_COLUMN,
};
pub use generator::{
    generate, spectral_radius, synthetic_spec, GenerationReport, GeneratorConfig, MAX_CLIP_FRACTION, UNSTABLE_RADIUS,
};
pub use split::{split_index, split_train_test};
