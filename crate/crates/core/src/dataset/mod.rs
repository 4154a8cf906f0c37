//! Loading, encoding, labelling, splitting and synthesizing feature datasets.

mod labeled;
mod nslkdd;
mod synthetic;
mod table;

pub use labeled::{
    format_real, read_matrix_csv, split_benign, split_benign_indices, write_matrix_csv,
    LabeledDataset, SplitSpec,
};
pub use nslkdd::{
    nsl_kdd_class_map, nsl_kdd_columns, nsl_kdd_load_options, NSL_KDD_BENIGN, NSL_KDD_DIFFICULTY,
    NSL_KDD_FEATURES, NSL_KDD_LABEL,
};
pub use synthetic::{generate_synthetic, SyntheticModel, SyntheticSpec, BENIGN_LABEL};
pub use table::{
    encode_categoricals, load_feature_csv, read_feature_csv, CategoricalEncoder, Column,
    ColumnKind, EncodedColumn, FeatureTable, LoadOptions,
};
