//! Linear benchmark indices: time-dummy hedonic and repeat-sales regression.

mod hedonic;
mod repeat;
pub mod ridge;
mod series;

pub use hedonic::{fit_hedonic, hedonic_index, Covariate, HedonicModel, HedonicSpec, DEFAULT_RIDGE_FACTOR};
pub use repeat::{fit_repeat_sales, fit_repeat_sales_default, REPEAT_RIDGE_FACTOR};
pub use series::{write_index_csv, IndexKind, IndexSeries, INDEX_CSV_HEADER, NEAREST_SAMPLE_WEEKS};
