//! Longitudinal observations to fixed five-timestamp feature matrices:
//! grid resampling, two-step forward fill, windowing, flattening and
//! iterative forest imputation.

mod impute;
mod matrix;
mod window;

pub use impute::{missforest_impute, reference_value, ImputeParams, ImputeReport};
pub use matrix::{
    assemble_matrix, leading_timestamps, median, read_matrix_cache, standard_columns,
    truncate_timestamps, window_row, write_matrix_cache, CategoryEncoding, ColumnDescriptor,
    ColumnSource, FeatureMatrix, MatrixDescriptor, StaticColumn, MATRIX_FORMAT,
};
pub use window::{
    build_windows, forward_fill, missing_cells, resample_observations, resample_to_grid, window_at,
    DropReason, FeatureWindow, GridMatrix, StaticFeatures, TimeGrid, WindowConfig, WindowSet,
    EMPTY_GRID, SLOTS,
};
