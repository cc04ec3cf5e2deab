//! Anything that yields a log-price density for a feature cell and week.

use std::collections::BTreeMap;

use crate::data::{FeatureKey, SaleRecord, SyntheticGroundTruth};
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

pub trait DensitySource {
    fn density(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture>;
}

impl<T: DensitySource + ?Sized> DensitySource for &T {
    fn density(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
        (**self).density(key, week)
    }
}

impl DensitySource for SyntheticGroundTruth {
    fn density(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
        if key.region.index() >= self.region_levels.len() {
            return Err(Error::UnknownRegion(key.region.to_string()));
        }
        Ok(self.mixture(key, week))
    }
}

/// Mean negative log density of the records, each evaluated at its own cell
/// and week. Densities are computed once per distinct (key, week).
pub fn mean_nll<S: DensitySource + ?Sized>(source: &S, records: &[SaleRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("no records to score".into()));
    }
    let mut cells: BTreeMap<(FeatureKey, u32), Vec<f64>> = BTreeMap::new();
    for r in records {
        cells.entry((r.key(), r.week)).or_default().push(r.log_price);
    }
    let mut total = 0.0;
    for ((key, week), ys) in cells {
        let m = source.density(&key, week)?;
        total -= ys.iter().map(|&y| m.ln_pdf(y)).sum::<f64>();
    }
    Ok(total / records.len() as f64)
}
