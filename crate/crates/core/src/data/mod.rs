//! Ingestion, imputation, feature engineering, scaling and windowing of
//! multi-station weather tables.

pub mod features;
pub mod frame;
pub mod impute;
pub mod pipeline;
pub mod scale;
pub mod table;
pub mod window;

pub use features::{add_temporal_features, to_cartesian, Cadence};
pub use frame::{FeatureFrame, FeatureOptions, Scaler};
pub use impute::{impute, impute_column, ImputeReport};
pub use pipeline::{load_dataset, prepare, save_dataset, IngestReport, PrepareOptions, PreparedData};
pub use scale::{apply_scale, fit_scale, invert_scale, ScalingParams};
pub use table::{
    attach_coordinates, load_coordinates, load_long, load_numeric_table, load_wide, parse_timestamp, Coordinates,
    LoadOutcome, RejectedRow, StationTable,
};
pub use window::{chronological_split, window, window_count, SplitCounts, TargetSpec, WindowedDataset, WindowedSample};
