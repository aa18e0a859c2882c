//! Dataset splits, the training loop, whole-volume inference and
//! evaluation.

mod config;
mod eval;
mod manifest;
mod train;

pub use config::{parse_list, TrainConfig};
pub use eval::{
    compare, evaluate_model, evaluate_pairs, infer_volume, LoadedModel, Method, PairedVolume, Predictor,
};
pub use manifest::{split_dataset, split_ids, split_sizes, DatasetManifest, ManifestEntry, Split};
pub use train::{batch_tensor, log_csv, train, train_on, LogRow, TrainOutcome, LOG_FILE_NAME, LOG_HEADER};
