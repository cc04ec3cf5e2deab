use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKey, WeekRange};
use crate::error::{Error, Result};

/// Fixed population shares h(x) = n_x / Σ n_x over a reference period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationWeights {
    pub weights: BTreeMap<FeatureKey, f64>,
    pub period: WeekRange,
}

impl PopulationWeights {
    pub fn get(&self, key: &FeatureKey) -> f64 {
        self.weights.get(key).copied().unwrap_or(0.0)
    }

    /// Keys accepted by `filter` with positive weight, renormalized to sum to one.
    pub fn restricted<F>(&self, mut filter: F) -> Result<Vec<(FeatureKey, f64)>>
    where
        F: FnMut(&FeatureKey) -> bool,
    {
        let picked: Vec<(FeatureKey, f64)> = self
            .weights
            .iter()
            .filter(|(k, w)| **w > 0.0 && filter(k))
            .map(|(k, w)| (*k, *w))
            .collect();
        let total: f64 = picked.iter().map(|(_, w)| w).sum();
        if picked.is_empty() || total <= 0.0 {
            return Err(Error::Empty("aggregation scope selects no weighted keys".into()));
        }
        Ok(picked.into_iter().map(|(k, w)| (k, w / total)).collect())
    }
}

/// Counts sales per key inside `period`. Keys present in the dataset but
/// unseen in the period keep an explicit zero weight.
pub fn compute_population_weights(dataset: &Dataset, period: WeekRange) -> Result<PopulationWeights> {
    let mut counts: BTreeMap<FeatureKey, u64> = BTreeMap::new();
    let mut total = 0u64;
    for r in dataset {
        let c = counts.entry(r.key()).or_insert(0);
        if period.contains(r.week) {
            *c += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty(format!(
            "no sales between weeks {} and {}",
            period.start, period.end
        )));
    }
    let weights = counts.into_iter().map(|(k, n)| (k, n as f64 / total as f64)).collect();
    Ok(PopulationWeights { weights, period })
}
