//! Sparse-region ablation: retrain after thinning one region's sales and
//! compare its index with the full-data control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::IndexSeries;
use crate::data::{compute_population_weights, Dataset, RegionIdx, RegionRegistry, WeekRange};
use crate::error::{Error, Result};
use crate::indices::{aggregate_density_series, index_from_density, Scope, Statistic};
use crate::mdn::{train_ensemble, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityConfig {
    pub region: RegionIdx,
    pub keep_fraction: f64,
    /// Seed of the subsampling draw; training uses `train.seed`.
    pub seed: u64,
    pub train: TrainConfig,
    pub ensemble: usize,
    pub statistic: Statistic,
    /// Length of the windows used for the trend-sign comparison.
    pub trend_window: usize,
}

impl SparsityConfig {
    pub fn new(region: RegionIdx) -> Self {
        Self {
            region,
            keep_fraction: 0.1,
            seed: 0,
            train: TrainConfig::default(),
            ensemble: 8,
            statistic: Statistic::Gmean,
            trend_window: 26,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub region: String,
    pub kept: usize,
    pub original: usize,
    pub control: IndexSeries,
    pub treatment: IndexSeries,
    /// `|T(t)/C(t) − 1|` per week.
    pub departure: Vec<f64>,
    pub max_departure: f64,
    /// Whether control and treatment move in the same direction over every
    /// consecutive non-overlapping trend window.
    pub trend_signs_agree: bool,
}

/// Keeps each sale of `region` with probability `keep_fraction`; other
/// regions are untouched.
pub fn thin_region(dataset: &Dataset, region: RegionIdx, keep_fraction: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset.filter(|r| r.region != region || rng.random::<f64>() < keep_fraction)
}

/// Signs of `series[i + window] / series[i] − 1` over consecutive windows.
fn window_signs(values: &[f64], window: usize) -> Vec<bool> {
    (0..values.len().saturating_sub(window))
        .step_by(window.max(1))
        .map(|i| values[i + window] >= values[i])
        .collect()
}

/// Trains one ensemble on the full data and one on the thinned data and
/// compares the region's index read off each. Both use population weights
/// from the full data, so only the densities differ.
pub fn sparsity_experiment(
    dataset: &Dataset,
    registry: &RegionRegistry,
    config: &SparsityConfig,
) -> Result<SparsityReport> {
    if !(config.keep_fraction > 0.0 && config.keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument("keep fraction must lie in (0, 1]".into()));
    }
    if !registry.contains(config.region) {
        return Err(Error::UnknownRegion(config.region.to_string()));
    }
    let original = dataset.iter().filter(|r| r.region == config.region).count();
    if original == 0 {
        return Err(Error::InvalidArgument(format!(
            "region {} has no sales",
            registry.id(config.region)
        )));
    }
    let range = dataset.week_range().expect("dataset has sales");
    let weights = compute_population_weights(dataset, WeekRange::new(range.start, range.end)?)?;
    let weeks: Vec<u32> = range.weeks().collect();
    let scope = Scope::region(config.region);

    let thinned = thin_region(dataset, config.region, config.keep_fraction, config.seed);
    let kept = thinned.iter().filter(|r| r.region == config.region).count();
    let index_of = |data: &Dataset| -> Result<IndexSeries> {
        let model = train_ensemble(data, registry, &config.train, config.ensemble)?;
        let s = aggregate_density_series(&model, registry, &weights, &scope, &weeks)?;
        index_from_density(&s, config.statistic)
    };
    let control = index_of(dataset)?;
    let treatment = index_of(&thinned)?;
    let departure: Vec<f64> = control
        .values
        .iter()
        .zip(&treatment.values)
        .map(|(c, t)| (t / c - 1.0).abs())
        .collect();
    let max_departure = departure.iter().copied().fold(0.0, f64::max);
    let trend_signs_agree =
        window_signs(&control.values, config.trend_window) == window_signs(&treatment.values, config.trend_window);
    Ok(SparsityReport {
        region: registry.id(config.region).to_string(),
        kept,
        original,
        control,
        treatment,
        departure,
        max_departure,
        trend_signs_agree,
    })
}
