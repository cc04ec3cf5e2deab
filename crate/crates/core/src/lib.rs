//! Granular house-price densities.
//!
//! Log sale prices in every (region, property type) cell are modelled as a
//! time-varying Gaussian mixture produced by a small embedding network.
//! Cell densities are pooled with fixed population weights into metro
//! densities, from which median, geometric-mean and quantile price indices
//! are read off. Hedonic and repeat-sales indices serve as benchmarks, and
//! the [`validation`] module holds the evaluation protocol.

// `!(x > 0.0)` is the idiom used to reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchmarks;
pub mod data;
pub mod error;
pub mod indices;
pub mod mdn;
pub mod mixture;
pub mod source;
pub mod validation;

pub use benchmarks::{IndexKind, IndexSeries};
pub use data::{
    Dataset, FeatureKey, PopulationWeights, PropType, RegionIdx, RegionRegistry, RepeatSalePair, SaleRecord, WeekRange,
};
pub use error::{Error, Result};
pub use mdn::{predict_density, train, train_ensemble, DensityModel, EnsembleModel, TrainConfig};
pub use mixture::{pool, Component, GaussianMixture, Moments};
pub use source::{mean_nll, DensitySource};
