//! Evaluation protocol: k-fold repeat-sale projection errors, quantile
//! calibration, CDF persistence, Friedman/Nemenyi rank tests, NLL
//! generalization and the sparse-region ablation.

mod calibration;
mod projection;
mod ranks;
mod scoped;
mod sparsity;

pub use calibration::{
    cdf_persistence, index_median_deviation, nll_generalization, pearson, pit_values, quantile_calibration,
    regional_calibration, CalibrationReport, NllReport, PersistenceResult, RegionalCalibration, CALIBRATION_CSV_HEADER,
    DECILE_GRID,
};
pub use projection::{
    absolute_percentage_error, fold_of, kfold_projection_errors, project_price, split_by_dwelling, summarize,
    ErrorSummary, KFoldConfig, ProjectionErrorReport, ScopeErrors, PROJECTION_CSV_HEADER,
};
pub use ranks::{
    friedman_nemenyi, nemenyi_q, rank_row, FriedmanReport, MethodRank, FRIEDMAN_ALPHA, NEMENYI_CSV_HEADER,
};
pub use scoped::{ScopeLevel, ScopedSource};
pub use sparsity::{sparsity_experiment, thin_region, SparsityConfig, SparsityReport};
